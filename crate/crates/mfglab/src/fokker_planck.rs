//! Stationary Kolmogorov/Fokker-Planck solver: the density is the
//! nonnegative null vector of the transpose of the frozen HJB transport
//! generator, computed by inverse power iteration with a small diagonal
//! shift.
//!
//! The null vector is found in cell-mass form (the unit-weight pairing is
//! the one the transpose annihilates) and converted to a node density by
//! dividing by the trapezoid cell volumes — half cells at the box boundary.
//! This makes the quadrature-weighted mass and every energy pairing agree
//! with the algebraic identities of the discrete system to round-off.

use crate::error::{Error, Result};
use crate::grid::{integrate, laplacian, ScalarField, VectorField};
use crate::hjb::{assemble_generator, optimal_drift, UpwindSwitches};
use crate::scalar::Real;

/// Stationary density with its flux and bookkeeping.
#[derive(Debug, Clone)]
pub struct StationaryDensity<T: Real> {
    pub m: ScalarField<T>,
    /// w = m · drift, with the drift of the switch set
    pub flux: VectorField<T>,
    /// |integrate(m) - M| after normalization (round-off level)
    pub mass_error: T,
    /// min node value (the M-matrix structure keeps it nonnegative)
    pub positivity_margin: T,
    /// ‖Aᵀ x‖₁ of the returned cell masses, relative to (ε/h²)·M
    pub residual: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FpOptions<T: Real> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for FpOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-13),
            max_iter: 200,
        }
    }
}

/// Solve for the stationary density of total mass `mass` with the given
/// switch set (the drift and its upwind data are an input, not recomputed).
pub fn solve_stationary<T: Real>(
    mass: T,
    sw: &UpwindSwitches<T>,
    opts: FpOptions<T>,
) -> Result<StationaryDensity<T>> {
    let g = sw.grid;
    let nn = g.node_count();
    let h = g.spacing();
    let scale = sw.epsilon / (h * h);
    let at = assemble_generator(sw, true);
    let mut shifted = at.clone();
    let shift = T::of(1e-8) * scale;
    for i in 0..nn {
        shifted.add(i, i, shift);
    }
    shifted.factor()?;

    let mut x = vec![mass / T::from_usize(nn).unwrap(); nn];
    let mut resid = T::infinity();
    let mut iterations = 0;
    let mut r = vec![T::zero(); nn];
    for it in 0..opts.max_iter {
        iterations = it + 1;
        shifted.solve(&mut x);
        let mut total = T::zero();
        for v in x.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
            total = total + *v;
        }
        if !(total > T::zero()) {
            return Err(Error::DegenerateNullSpace(
                "inverse iteration collapsed to zero".into(),
            ));
        }
        let c = mass / total;
        for v in x.iter_mut() {
            *v = *v * c;
        }
        at.matvec(&x, &mut r);
        resid = r.iter().fold(T::zero(), |acc, v| acc + v.abs()) / (scale * mass);
        if resid < opts.tol {
            break;
        }
        if it + 1 == opts.max_iter {
            return Err(Error::NonConvergence {
                what: "Fokker-Planck inverse power iteration",
                iterations: opts.max_iter,
                residual: resid.to_f64_lossy(),
            });
        }
    }

    if support_components(&x, g) != 1 {
        return Err(Error::DegenerateNullSpace(
            "density support is disconnected at tolerance".into(),
        ));
    }

    // cell masses -> node density: divide by the (half-)cell volumes
    let vol = g.cell_volume();
    let density: Vec<T> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| v / (g.trapezoid_factor(i) * vol))
        .collect();
    let m = ScalarField::from_values(g, density)?;
    let drift = optimal_drift(sw);
    let mut flux = VectorField::zeros(g);
    for k in 0..g.dim() {
        for i in 0..nn {
            flux.component_mut(k)[i] = m.values()[i] * drift.component(k)[i];
        }
    }
    let mass_error = (integrate(&m) - mass).abs();
    let positivity_margin = m.min_value();
    Ok(StationaryDensity {
        m,
        flux,
        mass_error,
        positivity_margin,
        residual: resid,
        iterations,
    })
}

/// Number of connected components of {x > 1e-12·max} under grid adjacency.
fn support_components<T: Real>(x: &[T], g: crate::grid::GridSpec<T>) -> usize {
    let mx = x.iter().fold(T::zero(), |a, &v| a.max(v));
    let thr = mx * T::of(1e-12);
    let nn = g.node_count();
    let n = g.points_per_axis();
    let mut seen = vec![false; nn];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..nn {
        if seen[start] || !(x[start] > thr) {
            continue;
        }
        components += 1;
        stack.push(start);
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for axis in 0..g.dim() {
                let s = g.stride(axis);
                let c = g.unindex(i)[axis];
                if c > 0 && !seen[i - s] && x[i - s] > thr {
                    seen[i - s] = true;
                    stack.push(i - s);
                }
                if c + 1 < n && !seen[i + s] && x[i + s] > thr {
                    seen[i + s] = true;
                    stack.push(i + s);
                }
            }
        }
    }
    components
}

/// Kinetic term ∫ m |w/m|^{γ'} / γ' of a stationary density.
/// (The regularity-theory quantity E is this times γ'/ε^{γ'}.)
pub fn kinetic_energy<T: Real>(gamma: T, dens: &StationaryDensity<T>) -> T {
    let g = dens.m.grid();
    let gp = gamma / (gamma - T::one());
    let vol = g.cell_volume();
    let mut acc = T::zero();
    for i in 0..g.node_count() {
        let m = dens.m.values()[i];
        if m > T::zero() {
            let d = dens.flux.magnitude_at(i) / m;
            acc = acc + g.trapezoid_factor(i) * m * d.powf(gp);
        }
    }
    acc * vol / gp
}

/// The scaled kinetic quantity E = (1/ε^{γ'}) ∫ m|w/m|^{γ'} of the
/// Kolmogorov regularity bound.
pub fn regularity_kinetic<T: Real>(epsilon: T, gamma: T, dens: &StationaryDensity<T>) -> T {
    let gp = gamma / (gamma - T::one());
    kinetic_energy(gamma, dens) * gp / epsilon.powf(gp)
}

/// Both sides of the discrete constraint pairing for a test field φ:
/// lhs = ε⟨m, -Δφ⟩, rhs = ⟨w, ∇φ⟩ with the switch set's own gradient
/// stencils. For a converged stationary density they agree to round-off.
pub fn adjoint_pairing<T: Real>(
    dens: &StationaryDensity<T>,
    sw: &UpwindSwitches<T>,
    phi: &ScalarField<T>,
) -> (T, T) {
    let g = sw.grid;
    let h = g.spacing();
    let n = g.points_per_axis();
    let vol = g.cell_volume();
    let lap = laplacian(phi);
    let mut lhs = T::zero();
    let mut rhs = T::zero();
    for i in 0..g.node_count() {
        let wgt = g.trapezoid_factor(i) * vol;
        lhs = lhs - sw.epsilon * wgt * dens.m.values()[i] * lap.values()[i];
        for k in 0..g.dim() {
            let s = g.stride(k);
            let c = g.unindex(i)[k];
            let dm = if c > 0 {
                (phi.values()[i] - phi.values()[i - s]) / h
            } else {
                T::zero()
            };
            let dp = if c + 1 < n {
                (phi.values()[i + s] - phi.values()[i]) / h
            } else {
                T::zero()
            };
            let grad_sw = sw.sigma_minus[k][i] * dm + sw.sigma_plus[k][i] * dp;
            rhs = rhs + wgt * dens.flux.component(k)[i] * grad_sw;
        }
    }
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, ScalarField};
    use crate::hjb::{compute_switches, solve_ergodic, HjbOptions};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_drift_gives_uniform_density() {
        let g = GridSpec::new(1, 4.0, 129).unwrap();
        let u = ScalarField::constant(g, 0.0);
        let sw = compute_switches(&u, 0.7, 2.0);
        let d = solve_stationary(2.0, &sw, FpOptions::default()).unwrap();
        let expect = 2.0 / 8.0;
        for &v in d.m.values() {
            assert!((v - expect).abs() < 1e-10, "{v}");
        }
        assert!(d.mass_error < 1e-13);
    }

    #[test]
    fn gibbs_oracle_second_order() {
        // γ=2, u = x²/2 (f = x²/2 makes u exact for the blended scheme),
        // drift -x: m ∝ e^{-u/ε}, L¹ error O(h²)
        let run = |n: usize| {
            let g = GridSpec::new(1, 8.0, n).unwrap();
            let eps = 1.0;
            let f = ScalarField::from_fn(g, |x| 0.5 * x[0] * x[0]);
            let sol = solve_ergodic(eps, 2.0, &f, None, HjbOptions::default()).unwrap();
            let dens = solve_stationary(1.0, &sol.switches, FpOptions::default()).unwrap();
            let gibbs_raw = sol.u.map(|u| (-u / eps).exp());
            let z = integrate(&gibbs_raw);
            let gibbs = gibbs_raw.map(|v| v / z);
            crate::grid::l1_norm(&dens.m.zip_map(&gibbs, |a, b| a - b).unwrap())
        };
        let e1 = run(257);
        let e2 = run(513);
        assert!(e1 < 3e-4, "L1 err {e1}");
        let ratio = e1 / e2;
        assert!(ratio > 3.0 && ratio < 5.0, "O(h²) ratio {ratio}");
    }

    #[test]
    fn gibbs_oracle_general_gamma() {
        // drift d = -u'|u'|^{γ-2} with u = x²/2: m ∝ exp(-|x|^γ/(γ ε))
        for gamma in [1.5, 3.0] {
            let g = GridSpec::new(1, 8.0, 1025).unwrap();
            let eps = 1.0;
            let f = ScalarField::from_fn(g, |x| -eps + x[0].abs().powf(gamma) / gamma);
            let sol = solve_ergodic(eps, gamma, &f, None, HjbOptions::default()).unwrap();
            let dens = solve_stationary(1.0, &sol.switches, FpOptions::default()).unwrap();
            let oracle_raw =
                ScalarField::from_fn(g, |x| (-x[0].abs().powf(gamma) / (gamma * eps)).exp());
            let z = integrate(&oracle_raw);
            let oracle = oracle_raw.map(|v| v / z);
            let err = crate::grid::l1_norm(&dens.m.zip_map(&oracle, |a, b| a - b).unwrap());
            assert!(err < 1e-4, "gamma={gamma} err={err}");
        }
    }

    #[test]
    fn mass_positivity_and_flux_convention() {
        let g = GridSpec::new(1, 8.0, 513).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] - 0.3).powi(2));
        let sol = solve_ergodic(0.5, 2.0, &f, None, HjbOptions::default()).unwrap();
        let dens = solve_stationary(1.0, &sol.switches, FpOptions::default()).unwrap();
        assert!((integrate(&dens.m) - 1.0).abs() < 1e-12);
        assert!(dens.positivity_margin >= 0.0);
        for i in 0..g.node_count() {
            if dens.m.values()[i] == 0.0 {
                assert_eq!(dens.flux.magnitude_at(i), 0.0);
            }
        }
    }

    #[test]
    fn adjoint_identity_random_test_fields() {
        let g = GridSpec::new(1, 8.0, 257).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] - 0.3).powi(2));
        let sol = solve_ergodic(1.0, 2.0, &f, None, HjbOptions::default()).unwrap();
        let dens = solve_stationary(1.0, &sol.switches, FpOptions::default()).unwrap();
        let mut rng = StdRng::seed_from_u64(20);
        for _ in 0..20 {
            let a = rng.gen_range(-1.0..1.0);
            let b = rng.gen_range(0.2..1.5);
            let c = rng.gen_range(-2.0..2.0);
            let phi = ScalarField::from_fn(g, |x| a * (b * x[0] + c).sin() + 0.3 * x[0] * x[0]);
            let (lhs, rhs) = adjoint_pairing(&dens, &sol.switches, &phi);
            let gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
            assert!(gap < 1e-10, "gap {gap:e}");
        }
    }

    #[test]
    fn kinetic_energy_gibbs_moment() {
        // Gibbs case: ½∫ m x² = ½ M ε (Gaussian second moment)
        let g = GridSpec::new(1, 8.0, 1025).unwrap();
        let eps = 0.5;
        let f = ScalarField::from_fn(g, |x| 0.5 * x[0] * x[0]);
        let sol = solve_ergodic(eps, 2.0, &f, None, HjbOptions::default()).unwrap();
        let dens = solve_stationary(1.0, &sol.switches, FpOptions::default()).unwrap();
        let kin = kinetic_energy(2.0, &dens);
        assert!((kin - 0.5 * eps).abs() < 2e-3, "kin={kin}");
        // zero drift: zero kinetic term
        let sw0 = compute_switches(&ScalarField::constant(g, 0.0), eps, 2.0);
        let d0 = solve_stationary(1.0, &sw0, FpOptions::default()).unwrap();
        assert_eq!(kinetic_energy(2.0, &d0), 0.0);
        // the regularity-theory accessor is the γ'/ε^{γ'} multiple
        let e = regularity_kinetic(eps, 2.0, &dens);
        assert!((e - kin * 2.0 / (eps * eps)).abs() < 1e-12);
    }

    #[test]
    fn support_connectivity_counter() {
        let g = GridSpec::new(1, 1.0, 16).unwrap();
        let mut x = vec![0.0; 16];
        x[2] = 1.0;
        x[3] = 0.8;
        assert_eq!(support_components(&x, g), 1);
        x[10] = 0.5;
        assert_eq!(support_components(&x, g), 2);
    }
}
