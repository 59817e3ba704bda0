//! Coupled MFG solve: damped Picard iteration m ↦ FP(HJB(V - K_α∗m)),
//! producing the triple (u, m, λ) with its energy and the multiplier
//! identity λ·M = 𝓔̃(m, w).
//!
//! For weak potentials (the rescaled deep-viscosity regime, or V ≡ 0) the
//! problem is nearly translation invariant and plain Picard crawls along the
//! flat direction. The solver therefore works in a translated frame with the
//! translation an explicit unknown: the bump is recentered to the grid
//! center and the frame offset takes one Newton step on the potential force
//! balance ∫ m·∇V(·+c) = 0 every few iterations. The returned fields live in
//! the frame; `frame_offset` maps them back (physical x = grid x + offset).

use crate::energy::{EnergyBreakdown, Potential, ProblemSpec};
use crate::error::Error;
use crate::fokker_planck::{kinetic_energy, solve_stationary, FpOptions, StationaryDensity};
use crate::grid::{integrate, l1_norm, shift_sampled, Coord, ScalarField, VectorField};
use crate::hjb::{solve_ergodic, HjbOptions, UpwindSwitches};
use crate::riesz::RieszKernelTable;
use crate::scalar::Real;
use thiserror::Error as ThisError;

/// Converged MFG triple with diagnostics.
#[derive(Debug, Clone)]
pub struct MFGSolution<T: Real> {
    pub u: ScalarField<T>,
    pub m: ScalarField<T>,
    pub w: VectorField<T>,
    pub lambda: T,
    pub epsilon: T,
    pub energy: EnergyBreakdown<T>,
    pub fp_residual: T,
    pub outer_iterations: usize,
    /// |λM - 𝓔̃(m,w)| / (|λM| + 1e-12) with the solution's own density frozen
    pub duality_gap: T,
    /// frame offset per axis; physical coordinates are grid coords + offset
    pub frame_offset: Coord<T>,
    /// switch set of the final solve (drift, σ weights, transport data)
    pub switches: UpwindSwitches<T>,
}

impl<T: Real> MFGSolution<T> {
    /// e_ε(M): the attained minimum of the constrained energy.
    pub fn minimized_energy(&self) -> T {
        self.energy.total
    }
}

/// Non-convergence report carrying the last iterate.
#[derive(Debug, ThisError)]
#[error("{error}")]
pub struct MfgFailure<T: Real> {
    pub error: Error,
    pub last_density: Option<ScalarField<T>>,
    pub last_lambda: Option<T>,
}

impl<T: Real> From<Error> for MfgFailure<T> {
    fn from(error: Error) -> Self {
        Self {
            error,
            last_density: None,
            last_lambda: None,
        }
    }
}

impl<T: Real> From<MfgFailure<T>> for Error {
    fn from(f: MfgFailure<T>) -> Self {
        f.error
    }
}

#[derive(Debug, Clone)]
pub struct MfgOptions<T: Real> {
    pub damping: T,
    /// outer tolerance, relative to the mass
    pub tol: T,
    pub max_outer: usize,
    /// solve in the translated co-moving frame
    pub comoving: bool,
    /// initial frame offset (coordinates)
    pub frame_offset: Coord<T>,
    pub init_density: Option<ScalarField<T>>,
    pub hjb: HjbOptions<T>,
    pub fp: FpOptions<T>,
    /// tolerance of the multiplier identity check on success
    pub duality_tol: T,
}

impl<T: Real> Default for MfgOptions<T> {
    fn default() -> Self {
        Self {
            damping: T::of(0.5),
            tol: T::of(1e-8),
            max_outer: 400,
            comoving: false,
            frame_offset: [T::zero(); 2],
            init_density: None,
            hjb: HjbOptions::default(),
            fp: FpOptions::default(),
            duality_tol: T::of(1e-6),
        }
    }
}

/// Parabola-refined location of the minimum of u, in grid coordinates.
pub fn refined_argmin<T: Real>(u: &ScalarField<T>) -> Coord<T> {
    let g = u.grid();
    let n = g.points_per_axis();
    let idx = u.argmin();
    let ij = g.unindex(idx);
    let mut p = g.coord(idx);
    let half = T::of(0.5);
    for k in 0..g.dim() {
        let s = g.stride(k);
        if ij[k] == 0 || ij[k] == n - 1 {
            continue;
        }
        let um = u.values()[idx - s];
        let u0 = u.values()[idx];
        let up = u.values()[idx + s];
        let den = um - T::of(2.0) * u0 + up;
        if den > T::zero() {
            let d = ((um - up) / (T::of(2.0) * den)).max(-half).min(half);
            p[k] = p[k] + d * g.spacing();
        }
    }
    p
}

/// Damped Picard iteration on the density, with the optional co-moving
/// translated frame. The default warm start is the exponential profile at
/// the concentration scale τ(ε) = ε^{-γ'/(γ'-N+α)} (clamped to the grid's
/// resolvable range).
pub fn solve_mfg<T: Real>(
    spec: &ProblemSpec<T>,
    potential: &dyn Potential<T>,
    kernel: &RieszKernelTable<T>,
    opts: &MfgOptions<T>,
) -> Result<MFGSolution<T>, MfgFailure<T>> {
    let g = spec.grid;
    if kernel.grid() != g {
        return Err(Error::GridMismatch("kernel grid differs from spec grid".into()).into());
    }
    let mass = spec.mass;
    let mut m = match &opts.init_density {
        Some(f) => {
            let total = integrate(f);
            if !(total > T::zero()) {
                return Err(
                    Error::InvalidSpec("initial density must have positive mass".into()).into(),
                );
            }
            f.map(|v| (v.max(T::zero())) * (mass / total))
        }
        None => {
            let n = T::from_usize(spec.dim).unwrap();
            let denom = spec.gamma_conj - n + spec.alpha;
            let tau_star = spec.epsilon.powf(-spec.gamma_conj / denom);
            let tau_max = T::one() / (T::of(8.0) * g.spacing());
            let tau = tau_star.min(tau_max).max(T::of(0.5));
            let raw = ScalarField::from_fn(g, |x| {
                let mut r2 = T::zero();
                for k in 0..g.dim() {
                    r2 = r2 + x[k] * x[k];
                }
                (-tau * r2.sqrt()).exp()
            });
            let total = integrate(&raw);
            raw.map(|v| v * (mass / total))
        }
    };
    let mut c = opts.frame_offset;
    let mut u: Option<ScalarField<T>> = None;
    let mut last_reframe: isize = -10;
    let mut energy_increases = 0usize;
    let mut prev_energy = T::infinity();
    let mut converged = false;
    let mut outer = 0usize;
    let reframe_floor = T::of(0.01) * g.spacing();

    let wrap = |e: Error, m: &ScalarField<T>, lam: Option<T>| MfgFailure {
        error: e,
        last_density: Some(m.clone()),
        last_lambda: lam,
    };

    for it in 0..opts.max_outer {
        outer = it + 1;
        let vfield = sample_shifted_potential(spec, potential, c);
        let conv = kernel.convolve(&m).map_err(|e| wrap(e, &m, None))?;
        let f = vfield
            .zip_map(&conv, |v, k| v - spec.coupling * k)
            .map_err(|e| wrap(e, &m, None))?;
        let hjb = solve_ergodic(spec.epsilon, spec.gamma, &f, u.as_ref(), opts.hjb)
            .map_err(|e| wrap(e, &m, None))?;
        let mut dens = solve_stationary(mass, &hjb.switches, opts.fp)
            .map_err(|e| wrap(e, &m, Some(hjb.lambda)))?;
        let mut unew = hjb.u;

        if opts.comoving && it as isize - last_reframe >= 3 {
            let peak = refined_argmin(&unew);
            let mut shift = [T::zero(); 2];
            let mut peak_mag = T::zero();
            for k in 0..spec.dim {
                shift[k] = peak[k];
                peak_mag = peak_mag.max(peak[k].abs());
            }
            // Newton step on the force balance relocates the frame to the
            // equilibrium of the potential tilt
            let mut da = [T::zero(); 2];
            if !potential.is_zero() {
                let cap = g.half_width() / T::of(8.0);
                for k in 0..spec.dim {
                    let mut f0 = T::zero();
                    let mut f1 = T::zero();
                    for i in 0..g.node_count() {
                        let mut x = g.coord(i);
                        for kk in 0..spec.dim {
                            x[kk] = x[kk] + c[kk];
                        }
                        let wgt = g.trapezoid_factor(i) * g.cell_volume() * dens.m.values()[i];
                        f0 = f0 + wgt * potential.gradient(x, spec.dim)[k];
                        f1 = f1 + wgt * potential.hessian_diag(x, spec.dim)[k];
                    }
                    if f1 > T::of(1e-300) {
                        da[k] = (-f0 / f1).max(-cap).min(cap);
                    }
                }
            }
            let da_mag = da.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            if (peak_mag > reframe_floor || da_mag > T::of(1e-9) * g.spacing())
                && peak_mag < g.half_width()
            {
                let mfp = shift_sampled(&dens.m, shift).map(|v| v.max(T::zero()));
                let total = integrate(&mfp);
                dens.m = mfp.map(|v| v * (mass / total));
                let macc = shift_sampled(&m, shift).map(|v| v.max(T::zero()));
                let total = integrate(&macc);
                m = macc.map(|v| v * (mass / total));
                unew = shift_sampled(&unew, shift);
                for k in 0..spec.dim {
                    c[k] = c[k] + shift[k] + da[k];
                }
                last_reframe = it as isize;
            }
        }

        // oscillation detector on the energy of the accepted iterates
        let kin = kinetic_energy(spec.gamma, &dens);
        let pot = inner_weighted(&dens.m, &sample_shifted_potential(spec, potential, c));
        let inter = spec.coupling
            * kernel
                .interaction_energy(&dens.m)
                .map_err(|e| wrap(e, &m, Some(hjb.lambda)))?;
        let total = kin + pot - inter / T::of(2.0);
        if total > prev_energy * (T::one() + T::of(1e-12)) + T::of(1e-12) {
            energy_increases += 1;
            if energy_increases >= 5 {
                return Err(wrap(
                    Error::NonConvergence {
                        what: "MFG outer iteration (energy rising; reduce damping)",
                        iterations: it + 1,
                        residual: (total - prev_energy).to_f64_lossy(),
                    },
                    &m,
                    Some(hjb.lambda),
                ));
            }
        } else {
            energy_increases = 0;
        }
        prev_energy = total;

        let dm = l1_norm(&dens.m.zip_map(&m, |a, b| a - b).map_err(|e| wrap(e, &m, None))?);
        m = m
            .zip_map(&dens.m, |old, new| {
                (T::one() - opts.damping) * old + opts.damping * new
            })
            .map_err(|e| wrap(e, &m, None))?;
        u = Some(unew);
        if dm < opts.tol * mass && (it as isize) != last_reframe {
            converged = true;
            break;
        }
        if it + 1 == opts.max_outer {
            return Err(wrap(
                Error::NonConvergence {
                    what: "MFG outer iteration",
                    iterations: opts.max_outer,
                    residual: (dm / mass).to_f64_lossy(),
                },
                &m,
                Some(hjb.lambda),
            ));
        }
    }
    debug_assert!(converged);

    // final consistent quadruple: f from the converged density, one HJB and
    // one FP solve; the returned (u, λ, switches, m, w) reference the same
    // assembly, which is what makes the multiplier identity exact
    let vfield = sample_shifted_potential(spec, potential, c);
    let conv = kernel.convolve(&m).map_err(|e| wrap(e, &m, None))?;
    let f = vfield
        .zip_map(&conv, |v, k| v - spec.coupling * k)
        .map_err(|e| wrap(e, &m, None))?;
    let hjb = solve_ergodic(spec.epsilon, spec.gamma, &f, u.as_ref(), opts.hjb)
        .map_err(|e| wrap(e, &m, None))?;
    let dens = solve_stationary(mass, &hjb.switches, opts.fp)
        .map_err(|e| wrap(e, &m, Some(hjb.lambda)))?;
    build_solution(spec, kernel, &vfield, hjb, dens, c, outer, opts)
}

fn build_solution<T: Real>(
    spec: &ProblemSpec<T>,
    kernel: &RieszKernelTable<T>,
    vfield: &ScalarField<T>,
    hjb: crate::hjb::ErgodicSolution<T>,
    dens: StationaryDensity<T>,
    frame_offset: Coord<T>,
    outer_iterations: usize,
    opts: &MfgOptions<T>,
) -> Result<MFGSolution<T>, MfgFailure<T>> {
    let kin = kinetic_energy(spec.gamma, &dens);
    let pot = inner_weighted(&dens.m, vfield);
    let inter = spec.coupling
        * kernel
            .interaction_energy(&dens.m)
            .map_err(MfgFailure::from)?;
    let energy = EnergyBreakdown::assemble(kin, pot, inter);
    let lam_m = hjb.lambda * spec.mass;
    let linearized = kin + pot - inter;
    let duality_gap = (lam_m - linearized).abs() / (lam_m.abs() + T::of(1e-12));
    if duality_gap > opts.duality_tol {
        return Err(MfgFailure {
            error: Error::NonConvergence {
                what: "multiplier identity λM = 𝓔̃(m,w)",
                iterations: outer_iterations,
                residual: duality_gap.to_f64_lossy(),
            },
            last_density: Some(dens.m),
            last_lambda: Some(hjb.lambda),
        });
    }
    Ok(MFGSolution {
        u: hjb.u,
        m: dens.m,
        w: dens.flux,
        lambda: hjb.lambda,
        epsilon: spec.epsilon,
        energy,
        fp_residual: dens.residual,
        outer_iterations,
        duality_gap,
        frame_offset,
        switches: hjb.switches,
    })
}

fn sample_shifted_potential<T: Real>(
    spec: &ProblemSpec<T>,
    potential: &dyn Potential<T>,
    c: Coord<T>,
) -> ScalarField<T> {
    ScalarField::from_fn(spec.grid, |x| {
        let mut y = x;
        for k in 0..spec.dim {
            y[k] = y[k] + c[k];
        }
        potential.value(y, spec.dim)
    })
}

fn inner_weighted<T: Real>(m: &ScalarField<T>, v: &ScalarField<T>) -> T {
    integrate(&m.zip_map(v, |a, b| a * b).expect("same grid"))
}
