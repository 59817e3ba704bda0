//! Ergodic Hamilton-Jacobi-Bellman solver: find (u, λ) with
//!
//!   -ε·Δu + |∇u|^γ/γ + λ = f
//!
//! on the truncated box, by policy (Howard) iteration. The gradient is
//! sampled per axis as a σ-weighted blend of backward and forward
//! differences; σ = (1/2, 1/2) wherever the cell-Péclet condition admits the
//! second-order central sample, and weight moves to the upwind side exactly
//! enough to keep each policy matrix an M-matrix otherwise (one-sided at the
//! boundary: state constraint). Every policy step solves a bordered linear
//! system in (u, λ) with one pinned node; the final normalization is
//! min u = 0.
//!
//! The per-node, per-axis switch set (σ weights and transport coefficients)
//! is part of the output: the Fokker-Planck module builds its generator as
//! the exact transpose of the frozen transport operator assembled here,
//! which is what makes discrete mass conservation and the λM identity hold
//! at round-off level.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::linsolve::Banded;
use crate::scalar::Real;

/// Frozen upwind data of one solve: σ weights, transport coefficients and
/// the unclamped Hamiltonian gradient per node and axis.
#[derive(Debug, Clone)]
pub struct UpwindSwitches<T: Real> {
    pub grid: GridSpec<T>,
    pub epsilon: T,
    pub gamma: T,
    /// σ⁻ per axis (weight of the backward difference)
    pub sigma_minus: Vec<Vec<T>>,
    /// σ⁺ per axis (weight of the forward difference)
    pub sigma_plus: Vec<Vec<T>>,
    /// clamped transport coefficients a∓ = H_p·σ∓ entering the matrices
    pub a_minus: Vec<Vec<T>>,
    pub a_plus: Vec<Vec<T>>,
    /// unclamped H_p components; the optimal drift is -H_p
    pub q: Vec<Vec<T>>,
}

/// Solution of the ergodic problem.
#[derive(Debug, Clone)]
pub struct ErgodicSolution<T: Real> {
    /// value function, normalized so that min over nodes is exactly 0
    pub u: ScalarField<T>,
    /// ergodic constant
    pub lambda: T,
    /// max-norm residual of the discrete equation
    pub residual: T,
    pub iterations: usize,
    /// switch set the solution was assembled with
    pub switches: UpwindSwitches<T>,
}

/// Options for the policy iteration.
#[derive(Debug, Clone, Copy)]
pub struct HjbOptions<T: Real> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for HjbOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-11),
            max_iter: 300,
        }
    }
}

struct Workspace<T: Real> {
    dm: Vec<Vec<T>>,
    dp: Vec<Vec<T>>,
}

impl<T: Real> Workspace<T> {
    fn new(grid: GridSpec<T>) -> Self {
        let n = grid.node_count();
        Self {
            dm: vec![vec![T::zero(); n]; grid.dim()],
            dp: vec![vec![T::zero(); n]; grid.dim()],
        }
    }

    /// one-sided differences; zero on the missing side at the boundary
    fn differences(&mut self, u: &ScalarField<T>) {
        let g = u.grid();
        let n = g.points_per_axis();
        let h = g.spacing();
        for axis in 0..g.dim() {
            let s = g.stride(axis);
            for idx in 0..g.node_count() {
                let i = g.unindex(idx)[axis];
                self.dm[axis][idx] = if i > 0 {
                    (u.values()[idx] - u.values()[idx - s]) / h
                } else {
                    T::zero()
                };
                self.dp[axis][idx] = if i + 1 < n {
                    (u.values()[idx + s] - u.values()[idx]) / h
                } else {
                    T::zero()
                };
            }
        }
    }
}

/// Compute the switch set at `u`: Péclet-limited central/upwind σ per node
/// and axis, transport coefficients clamped to the M-matrix bounds, and the
/// unclamped Hamiltonian gradient.
pub fn compute_switches<T: Real>(
    u: &ScalarField<T>,
    epsilon: T,
    gamma: T,
) -> UpwindSwitches<T> {
    let g = u.grid();
    let dim = g.dim();
    let nn = g.node_count();
    let n = g.points_per_axis();
    let h = g.spacing();
    let half = T::of(0.5);
    let mut ws = Workspace::new(g);
    ws.differences(u);

    let mut sm = vec![vec![half; nn]; dim];
    let mut sp = vec![vec![half; nn]; dim];

    // σ rule from the central estimate of the Hamiltonian gradient
    for idx in 0..nn {
        let mut c = [T::zero(); 2];
        let mut c2 = T::zero();
        for k in 0..dim {
            let i = g.unindex(idx)[k];
            c[k] = if i == 0 {
                ws.dp[k][idx]
            } else if i == n - 1 {
                ws.dm[k][idx]
            } else {
                half * (ws.dm[k][idx] + ws.dp[k][idx])
            };
            c2 = c2 + c[k] * c[k];
        }
        let cmag = c2.sqrt();
        for k in 0..dim {
            let i = g.unindex(idx)[k];
            if i == 0 {
                sm[k][idx] = T::zero();
                sp[k][idx] = T::one();
                continue;
            }
            if i == n - 1 {
                sm[k][idx] = T::one();
                sp[k][idx] = T::zero();
                continue;
            }
            let qk = if cmag > T::zero() {
                c[k] * cmag.powf(gamma - T::of(2.0))
            } else {
                T::zero()
            };
            if qk.abs() > T::zero() {
                let cap = (epsilon / (h * qk.abs())).min(half);
                if qk > T::zero() {
                    sp[k][idx] = cap;
                    sm[k][idx] = T::one() - cap;
                } else {
                    sm[k][idx] = cap;
                    sp[k][idx] = T::one() - cap;
                }
            }
        }
    }

    // gradient sample with the chosen σ, then transport coefficients
    let mut q = vec![vec![T::zero(); nn]; dim];
    let mut am = vec![vec![T::zero(); nn]; dim];
    let mut ap = vec![vec![T::zero(); nn]; dim];
    for idx in 0..nn {
        let mut gvec = [T::zero(); 2];
        let mut g2 = T::zero();
        for k in 0..dim {
            gvec[k] = sm[k][idx] * ws.dm[k][idx] + sp[k][idx] * ws.dp[k][idx];
            g2 = g2 + gvec[k] * gvec[k];
        }
        let gmag = g2.sqrt();
        for k in 0..dim {
            let i = g.unindex(idx)[k];
            let qk = if gmag > T::zero() {
                gvec[k] * gmag.powf(gamma - T::of(2.0))
            } else {
                T::zero()
            };
            q[k][idx] = qk;
            // mirror diffusion carries 2ε/h² to the single neighbour at the
            // boundary, so the admissible bound doubles there
            let bound_p = if i == 0 { T::of(2.0) } else { T::one() } * epsilon / h;
            let bound_m = if i == n - 1 { T::of(2.0) } else { T::one() } * epsilon / h;
            am[k][idx] = (qk * sm[k][idx]).max(-bound_m);
            ap[k][idx] = (qk * sp[k][idx]).min(bound_p);
        }
    }

    UpwindSwitches {
        grid: g,
        epsilon,
        gamma,
        sigma_minus: sm,
        sigma_plus: sp,
        a_minus: am,
        a_plus: ap,
        q,
    }
}

/// σ-weighted gradient sample per node/axis for a given switch set.
pub fn gradient_sample<T: Real>(u: &ScalarField<T>, sw: &UpwindSwitches<T>) -> Vec<Vec<T>> {
    let g = u.grid();
    let mut ws = Workspace::new(g);
    ws.differences(u);
    let mut out = vec![vec![T::zero(); g.node_count()]; g.dim()];
    for k in 0..g.dim() {
        for idx in 0..g.node_count() {
            out[k][idx] =
                sw.sigma_minus[k][idx] * ws.dm[k][idx] + sw.sigma_plus[k][idx] * ws.dp[k][idx];
        }
    }
    out
}

/// Assemble A = -ε·Δ_h + T_a for the switch set (or its transpose).
pub fn assemble_generator<T: Real>(sw: &UpwindSwitches<T>, transpose: bool) -> Banded<T> {
    let g = sw.grid;
    let n = g.points_per_axis();
    let nn = g.node_count();
    let h = g.spacing();
    let h2 = h * h;
    let eps = sw.epsilon;
    let bw = g.stride(0).max(1);
    let mut a = Banded::zeros(nn, bw, bw);
    let two = T::of(2.0);
    let mut put = |i: usize, j: usize, v: T| {
        if transpose {
            a.add(j, i, v);
        } else {
            a.add(i, j, v);
        }
    };
    for idx in 0..nn {
        for k in 0..g.dim() {
            let s = g.stride(k);
            let i = g.unindex(idx)[k];
            // diffusion with mirror ghosts
            put(idx, idx, two * eps / h2);
            if i == 0 {
                put(idx, idx + s, -two * eps / h2);
            } else if i == n - 1 {
                put(idx, idx - s, -two * eps / h2);
            } else {
                put(idx, idx - s, -eps / h2);
                put(idx, idx + s, -eps / h2);
            }
            // transport: a⁻(u_i - u_{i-s})/h + a⁺(u_{i+s} - u_i)/h
            let am = sw.a_minus[k][idx];
            let ap = sw.a_plus[k][idx];
            put(idx, idx, (am - ap) / h);
            if i > 0 {
                put(idx, idx - s, -am / h);
            }
            if i + 1 < n {
                put(idx, idx + s, ap / h);
            }
        }
    }
    a
}

/// T_a(u) per node, and the numerical Hamiltonian |g|^γ/γ per node.
fn transport_and_hamiltonian<T: Real>(
    u: &ScalarField<T>,
    sw: &UpwindSwitches<T>,
) -> (Vec<T>, Vec<T>) {
    let g = u.grid();
    let mut ws = Workspace::new(g);
    ws.differences(u);
    let nn = g.node_count();
    let mut tu = vec![T::zero(); nn];
    let mut ham = vec![T::zero(); nn];
    for idx in 0..nn {
        let mut g2 = T::zero();
        for k in 0..g.dim() {
            let gk = sw.sigma_minus[k][idx] * ws.dm[k][idx]
                + sw.sigma_plus[k][idx] * ws.dp[k][idx];
            g2 = g2 + gk * gk;
            tu[idx] =
                tu[idx] + sw.a_minus[k][idx] * ws.dm[k][idx] + sw.a_plus[k][idx] * ws.dp[k][idx];
        }
        ham[idx] = g2.sqrt().powf(sw.gamma) / sw.gamma;
    }
    (tu, ham)
}

/// Max-norm residual of -εΔu + H(Du) + λ - f with the scheme's own switches.
pub fn scheme_residual<T: Real>(
    u: &ScalarField<T>,
    lambda: T,
    f: &ScalarField<T>,
    epsilon: T,
    gamma: T,
) -> T {
    let sw = compute_switches(u, epsilon, gamma);
    let lap = crate::grid::laplacian(u);
    let (_, ham) = transport_and_hamiltonian(u, &sw);
    let mut worst = T::zero();
    for i in 0..u.grid().node_count() {
        let r = -epsilon * lap.values()[i] + ham[i] + lambda - f.values()[i];
        worst = worst.max(r.abs());
    }
    worst
}

/// One bordered solve: A u + λ·1 = b with u pinned to 0 at `pin`, via
/// Sherman-Morrison on D = A + c·e e^T (column `pin` of the system matrix is
/// replaced by the ones vector; the pinned entry of the solution carries λ).
fn bordered_solve<T: Real>(a: &Banded<T>, pin: usize, bump: T, b: &[T]) -> Result<(Vec<T>, T)> {
    let n = a.n();
    let mut d = a.clone();
    d.add(pin, pin, bump);
    // w = 1 - A e_pin - c e_pin  (sparse column read before factoring)
    let mut w = vec![T::one(); n];
    for i in pin.saturating_sub(n)..n {
        let v = a.get(i, pin);
        if v != T::zero() {
            w[i] = w[i] - v;
        }
    }
    w[pin] = w[pin] - bump;
    d.factor()?;
    let mut y1 = b.to_vec();
    d.solve(&mut y1);
    let mut y2 = w;
    d.solve(&mut y2);
    let denom = T::one() + y2[pin];
    if denom.abs() < T::of(1e-300) {
        return Err(Error::NonConvergence {
            what: "bordered ergodic solve (singular border)",
            iterations: 0,
            residual: denom.abs().to_f64_lossy(),
        });
    }
    let t = y1[pin] / denom;
    let mut x = y1;
    for i in 0..n {
        x[i] = x[i] - t * y2[i];
    }
    let lambda = x[pin];
    x[pin] = T::zero();
    Ok((x, lambda))
}

/// Solve the ergodic problem for a given forcing f = V - K_α∗m.
pub fn solve_ergodic<T: Real>(
    epsilon: T,
    gamma: T,
    f: &ScalarField<T>,
    init: Option<&ScalarField<T>>,
    opts: HjbOptions<T>,
) -> Result<ErgodicSolution<T>> {
    if !(gamma > T::one()) {
        return Err(Error::InvalidSpec("gamma must exceed 1".into()));
    }
    if !f.is_finite() {
        return Err(Error::InvalidSpec("forcing contains non-finite values".into()));
    }
    let g = f.grid();
    let pin = g.node_count() / 2;
    let bump = epsilon / (g.spacing() * g.spacing()) + T::one();
    let fscale = f.max_abs().max(T::one());
    let mut u = match init {
        Some(u0) => {
            let mn = u0.min_value();
            u0.map(|v| v - mn)
        }
        None => ScalarField::constant(g, T::zero()),
    };
    let mut lambda = T::zero();
    let mut best_res = scheme_residual(&u, lambda, f, epsilon, gamma);
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let sw = compute_switches(&u, epsilon, gamma);
        let a = assemble_generator(&sw, false);
        let (tu, ham) = transport_and_hamiltonian(&u, &sw);
        // rhs = f + T_a(u_k) - H(Du_k): the Legendre correction of the
        // frozen-policy linearization
        let b: Vec<T> = (0..g.node_count())
            .map(|i| f.values()[i] + tu[i] - ham[i])
            .collect();
        let (mut x, lam) = bordered_solve(&a, pin, bump, &b)?;
        if it < 2 {
            // damp the first updates to avoid overshoot for large gamma
            for (xi, ui) in x.iter_mut().zip(u.values()) {
                *xi = *ui + T::of(0.5) * (*xi - *ui);
            }
        }
        // safeguard: halve toward the previous iterate while the residual
        // grows or the candidate is non-finite
        let mut cand = ScalarField::from_values(g, x)?;
        let mut res = T::infinity();
        for _ in 0..25 {
            if cand.is_finite() {
                res = scheme_residual(&cand, lam, f, epsilon, gamma);
                if res <= best_res.max(opts.tol * fscale) {
                    break;
                }
            }
            cand = cand.zip_map(&u, |c, p| p + T::of(0.5) * (c - p))?;
            // λ of a blended iterate: keep the solved value; the residual
            // check decides acceptance
            let _ = &lam;
        }
        u = cand;
        lambda = lam;
        best_res = res.min(best_res);
        if res < opts.tol * fscale {
            break;
        }
        if it + 1 == opts.max_iter {
            return Err(Error::NonConvergence {
                what: "HJB policy iteration",
                iterations: opts.max_iter,
                residual: res.to_f64_lossy(),
            });
        }
    }
    let mn = u.min_value();
    let u = u.map(|v| v - mn);
    let switches = compute_switches(&u, epsilon, gamma);
    let residual = scheme_residual(&u, lambda, f, epsilon, gamma);
    Ok(ErgodicSolution {
        u,
        lambda,
        residual,
        iterations,
        switches,
    })
}

/// Optimal drift -∇u|∇u|^{γ-2} evaluated with the same switches as the
/// solve: component k is -H_{p_k}(g) = -q_k.
pub fn optimal_drift<T: Real>(sw: &UpwindSwitches<T>) -> VectorField<T> {
    let mut d = VectorField::zeros(sw.grid);
    for k in 0..sw.grid.dim() {
        for idx in 0..sw.grid.node_count() {
            d.component_mut(k)[idx] = -sw.q[k][idx];
        }
    }
    d
}
