//! The constrained energy: kinetic term m·L(-w/m), confining potential term,
//! and the attractive Riesz interaction with its -1/2 weight; the linearized
//! (frozen-coupling) variant whose minimum ties the multiplier to the energy;
//! constraint-set residuals; and the exponential test pair realizing the
//! upper energy bound.

use crate::error::{Error, Result};
use crate::grid::{
    divergence_central, integrate, l1_norm, laplacian, sample_cubic, Coord, GridSpec, ScalarField,
    VectorField,
};
use crate::riesz::RieszKernelTable;
use crate::scalar::Real;

/// Confining potential shapes. `b` is the growth exponent of the power kinds.
#[derive(Debug, Clone)]
pub enum PotentialKind<T: Real> {
    Zero,
    /// V(x) = |x|^b
    Power { b: T },
    /// V(x) = |x - center|^b
    ShiftedPower { b: T, center: Coord<T> },
    /// V sampled on a grid, evaluated by cubic interpolation, clamped at 0.
    CustomTable { table: ScalarField<T>, b: T },
}

/// Potential specification with its comparability constant C_V for the
/// two-sided growth bound C_V⁻¹(max{|x|-C_V,0})^b ≤ V ≤ C_V(1+|x|)^b.
#[derive(Debug, Clone)]
pub struct PotentialSpec<T: Real> {
    pub kind: PotentialKind<T>,
    pub c_v: T,
}

impl<T: Real> PotentialSpec<T> {
    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Zero,
            c_v: T::one(),
        }
    }

    pub fn power(b: T) -> Self {
        Self {
            kind: PotentialKind::Power { b },
            c_v: T::one(),
        }
    }

    pub fn shifted_power(b: T, center: Coord<T>) -> Self {
        let r = center.iter().fold(T::zero(), |acc, &c| acc + c * c).sqrt();
        // any C_V ≥ max(1, (1+|c|)^b) satisfies both growth bounds
        let c_v = (T::one() + r).powf(b).max(T::one());
        Self {
            kind: PotentialKind::ShiftedPower { b, center },
            c_v,
        }
    }

    pub fn custom(table: ScalarField<T>, b: T, c_v: T) -> Self {
        Self {
            kind: PotentialKind::CustomTable { table, b },
            c_v,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero)
    }

    /// Growth exponent; zero potential reports b = 0.
    pub fn growth_exponent(&self) -> T {
        match &self.kind {
            PotentialKind::Zero => T::zero(),
            PotentialKind::Power { b } => *b,
            PotentialKind::ShiftedPower { b, .. } => *b,
            PotentialKind::CustomTable { b, .. } => *b,
        }
    }

    pub fn value(&self, x: Coord<T>, dim: usize) -> T {
        match &self.kind {
            PotentialKind::Zero => T::zero(),
            PotentialKind::Power { b } => norm(x, dim).powf(*b),
            PotentialKind::ShiftedPower { b, center } => {
                let mut d = [T::zero(); 2];
                for k in 0..dim {
                    d[k] = x[k] - center[k];
                }
                norm(d, dim).powf(*b)
            }
            PotentialKind::CustomTable { table, .. } => sample_cubic(table, x).max(T::zero()),
        }
    }

    /// ∇V; analytic for the power kinds, centered differences for tables.
    pub fn gradient(&self, x: Coord<T>, dim: usize) -> Coord<T> {
        match &self.kind {
            PotentialKind::Zero => [T::zero(); 2],
            PotentialKind::Power { b } => power_gradient(x, [T::zero(); 2], *b, dim),
            PotentialKind::ShiftedPower { b, center } => power_gradient(x, *center, *b, dim),
            PotentialKind::CustomTable { table, .. } => {
                let h = table.grid().spacing();
                let mut g = [T::zero(); 2];
                for k in 0..dim {
                    let mut xp = x;
                    let mut xm = x;
                    xp[k] = xp[k] + h;
                    xm[k] = xm[k] - h;
                    g[k] = (self.value(xp, dim) - self.value(xm, dim)) / (T::of(2.0) * h);
                }
                g
            }
        }
    }

    /// Diagonal second derivatives ∂²V/∂x_k², used by the frame Newton step.
    pub fn hessian_diag(&self, x: Coord<T>, dim: usize) -> Coord<T> {
        let h = match &self.kind {
            PotentialKind::CustomTable { table, .. } => table.grid().spacing(),
            _ => T::of(1e-4),
        };
        let mut out = [T::zero(); 2];
        for k in 0..dim {
            let mut xp = x;
            let mut xm = x;
            xp[k] = xp[k] + h;
            xm[k] = xm[k] - h;
            out[k] = (self.value(xp, dim) - T::of(2.0) * self.value(x, dim)
                + self.value(xm, dim))
                / (h * h);
        }
        out
    }

    /// Sampled growth-bound check over the grid nodes.
    pub fn check_growth_bounds(&self, grid: GridSpec<T>) -> Result<()> {
        if self.is_zero() {
            return Ok(());
        }
        let b = self.growth_exponent();
        let tol = T::of(1e-9);
        for idx in 0..grid.node_count() {
            let x = grid.coord(idx);
            let v = self.value(x, grid.dim());
            if v < -tol {
                return Err(Error::InvalidSpec(format!(
                    "potential negative at node {idx}"
                )));
            }
            let r = norm(x, grid.dim());
            let upper = self.c_v * (T::one() + r).powf(b);
            let lower = (r - self.c_v).max(T::zero()).powf(b) / self.c_v;
            if v > upper * (T::one() + tol) + tol || v < lower * (T::one() - tol) - tol {
                return Err(Error::InvalidSpec(format!(
                    "potential violates its C_V growth bounds at |x|={r}"
                )));
            }
        }
        Ok(())
    }
}

/// Pointwise potential evaluator. `PotentialSpec` implements it directly;
/// the rescaling module wraps one in the ε-scaled frame.
pub trait Potential<T: Real>: Sync {
    fn value(&self, x: Coord<T>, dim: usize) -> T;
    fn gradient(&self, x: Coord<T>, dim: usize) -> Coord<T>;
    fn hessian_diag(&self, x: Coord<T>, dim: usize) -> Coord<T>;
    fn is_zero(&self) -> bool;
}

impl<T: Real> Potential<T> for PotentialSpec<T> {
    fn value(&self, x: Coord<T>, dim: usize) -> T {
        PotentialSpec::value(self, x, dim)
    }
    fn gradient(&self, x: Coord<T>, dim: usize) -> Coord<T> {
        PotentialSpec::gradient(self, x, dim)
    }
    fn hessian_diag(&self, x: Coord<T>, dim: usize) -> Coord<T> {
        PotentialSpec::hessian_diag(self, x, dim)
    }
    fn is_zero(&self) -> bool {
        PotentialSpec::is_zero(self)
    }
}

fn norm<T: Real>(x: Coord<T>, dim: usize) -> T {
    let mut s = T::zero();
    for k in 0..dim {
        s = s + x[k] * x[k];
    }
    s.sqrt()
}

fn power_gradient<T: Real>(x: Coord<T>, center: Coord<T>, b: T, dim: usize) -> Coord<T> {
    let mut d = [T::zero(); 2];
    for k in 0..dim {
        d[k] = x[k] - center[k];
    }
    let r = norm(d, dim);
    let mut g = [T::zero(); 2];
    if r > T::zero() {
        let f = b * r.powf(b - T::of(2.0));
        for k in 0..dim {
            g[k] = f * d[k];
        }
    }
    g
}

/// Problem parameters: dimension, Hamiltonian exponent, Riesz order, mass,
/// viscosity, potential and grid. Construction enforces the mass-subcritical
/// window N - γ' < α < N.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T: Real> {
    pub dim: usize,
    pub gamma: T,
    pub gamma_conj: T,
    pub alpha: T,
    pub mass: T,
    pub epsilon: T,
    /// weight of the Riesz coupling; 1 is the full problem, 0 decouples
    pub coupling: T,
    pub potential: PotentialSpec<T>,
    pub grid: GridSpec<T>,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(
        gamma: T,
        alpha: T,
        mass: T,
        epsilon: T,
        potential: PotentialSpec<T>,
        grid: GridSpec<T>,
    ) -> Result<Self> {
        if !(gamma > T::one()) {
            return Err(Error::InvalidSpec(format!("gamma must exceed 1, got {gamma}")));
        }
        let n = T::from_usize(grid.dim()).unwrap();
        let gamma_conj = gamma / (gamma - T::one());
        if !(alpha > n - gamma_conj) || !(alpha < n) {
            return Err(Error::InvalidSpec(format!(
                "mass-subcritical window requires {} < alpha < {}, got {alpha}",
                n - gamma_conj,
                n
            )));
        }
        if !(mass > T::zero()) {
            return Err(Error::InvalidSpec("mass must be positive".into()));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidSpec("epsilon must be positive".into()));
        }
        potential.check_growth_bounds(grid)?;
        Ok(Self {
            dim: grid.dim(),
            gamma,
            gamma_conj,
            alpha,
            mass,
            epsilon,
            coupling: T::one(),
            potential,
            grid,
        })
    }

    /// The integrability exponent q of the Kolmogorov regularity bound.
    pub fn q_exponent(&self) -> T {
        let n = T::from_usize(self.dim).unwrap();
        if self.gamma_conj < n {
            n / (n - self.gamma_conj + T::one())
        } else {
            self.gamma_conj
        }
    }

    /// Potential sampled at the nodes.
    pub fn sample_potential(&self) -> ScalarField<T> {
        ScalarField::from_fn(self.grid, |x| self.potential.value(x, self.dim))
    }

    pub fn with_mass(&self, mass: T) -> Self {
        let mut s = self.clone();
        s.mass = mass;
        s
    }

    pub fn with_epsilon(&self, epsilon: T) -> Self {
        let mut s = self.clone();
        s.epsilon = epsilon;
        s
    }
}

/// Density-flux pair, the element of the constraint set.
#[derive(Debug, Clone)]
pub struct FlowPair<T: Real> {
    pub m: ScalarField<T>,
    pub w: VectorField<T>,
}

impl<T: Real> FlowPair<T> {
    pub fn new(m: ScalarField<T>, w: VectorField<T>) -> Result<Self> {
        if m.grid() != w.grid() {
            return Err(Error::GridMismatch("density and flux grids differ".into()));
        }
        Ok(Self { m, w })
    }

    /// Nonnegativity (to round-off), exact mass, and the w = 0 on {m = 0}
    /// convention.
    pub fn validate(&self, spec: &ProblemSpec<T>) -> Result<()> {
        if self.m.min_value() < -T::of(1e-12) {
            return Err(Error::InvalidSpec(format!(
                "density negative: min {}",
                self.m.min_value()
            )));
        }
        let mass = integrate(&self.m);
        let rel = ((mass - spec.mass) / spec.mass).abs();
        if rel > T::of(1e-10) {
            return Err(Error::InvalidSpec(format!(
                "mass {mass} differs from {} by {rel:e} relative",
                spec.mass
            )));
        }
        let scale = self.w.max_magnitude().max(T::one());
        for i in 0..self.m.grid().node_count() {
            if self.m.values()[i] <= T::zero() && self.w.magnitude_at(i) > scale * T::of(1e-14) {
                return Err(Error::InvalidSpec(format!(
                    "flux does not vanish on a zero-density node ({i})"
                )));
            }
        }
        Ok(())
    }
}

/// The three terms of the energy; total = kinetic + potential - interaction/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T: Real> {
    pub kinetic: T,
    pub potential: T,
    pub interaction: T,
    pub total: T,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn assemble(kinetic: T, potential: T, interaction: T) -> Self {
        Self {
            kinetic,
            potential,
            interaction,
            total: kinetic + potential - interaction / T::of(2.0),
        }
    }
}

/// m·L(-w/m): |w|^{γ'}/(γ'·m^{γ'-1}) for m > 0, 0 for (0, 0), +∞ sentinel for
/// flux on an empty cell. Negative m is rejected.
pub fn lagrangian_density<T: Real>(gamma_conj: T, m: T, w: &[T]) -> Result<T> {
    if m < T::zero() {
        return Err(Error::InvalidSpec(format!("negative density {m}")));
    }
    let wmag = w
        .iter()
        .fold(T::zero(), |acc, &c| acc + c * c)
        .sqrt();
    if m == T::zero() {
        if wmag == T::zero() {
            return Ok(T::zero());
        }
        return Ok(T::infinity());
    }
    Ok(wmag.powf(gamma_conj) / (gamma_conj * m.powf(gamma_conj - T::one())))
}

/// Kinetic part ∫ m·L(-w/m); +∞ sentinel propagates.
pub fn kinetic_term<T: Real>(spec: &ProblemSpec<T>, pair: &FlowPair<T>) -> Result<T> {
    let g = pair.m.grid();
    let vol = g.cell_volume();
    let mut acc = T::zero();
    for i in 0..g.node_count() {
        let mut wc = [T::zero(); 2];
        for k in 0..g.dim() {
            wc[k] = pair.w.component(k)[i];
        }
        let l = lagrangian_density(spec.gamma_conj, pair.m.values()[i], &wc[..g.dim()])?;
        if l.is_infinite() {
            return Ok(T::infinity());
        }
        acc = acc + g.trapezoid_factor(i) * l;
    }
    Ok(acc * vol)
}

/// Full energy breakdown of a pair.
pub fn evaluate_energy<T: Real>(
    spec: &ProblemSpec<T>,
    pair: &FlowPair<T>,
    kernel: &RieszKernelTable<T>,
) -> Result<EnergyBreakdown<T>> {
    let kinetic = kinetic_term(spec, pair)?;
    let vfield = spec.sample_potential();
    let potential = integrate(&pair.m.zip_map(&vfield, |m, v| m * v)?);
    let interaction = spec.coupling * kernel.interaction_energy(&pair.m)?;
    Ok(EnergyBreakdown::assemble(kinetic, potential, interaction))
}

/// Linearized energy: kinetic + potential - ∬ m(x)·frozen(y)·K_α (no 1/2).
pub fn evaluate_linearized_energy<T: Real>(
    spec: &ProblemSpec<T>,
    pair: &FlowPair<T>,
    frozen: &ScalarField<T>,
    kernel: &RieszKernelTable<T>,
) -> Result<T> {
    let kinetic = kinetic_term(spec, pair)?;
    let vfield = spec.sample_potential();
    let potential = integrate(&pair.m.zip_map(&vfield, |m, v| m * v)?);
    let cross = spec.coupling * kernel.cross_interaction(&pair.m, frozen)?;
    Ok(kinetic + potential - cross)
}

/// Volume-weighted L¹ norm of the strong-form constraint residual
/// ε·Δm - div w (zero for exactly feasible pairs).
pub fn continuity_residual<T: Real>(spec: &ProblemSpec<T>, pair: &FlowPair<T>) -> T {
    let lap = laplacian(&pair.m);
    let div = divergence_central(&pair.w);
    l1_norm(
        &lap.zip_map(&div, |l, d| spec.epsilon * l - d)
            .expect("same grid"),
    )
}

/// As `continuity_residual` but with the nodes within `skip` cells of the
/// given node excluded; used for profiles with a distributional kink.
pub fn continuity_residual_excluding<T: Real>(
    spec: &ProblemSpec<T>,
    pair: &FlowPair<T>,
    center: usize,
    skip: usize,
) -> T {
    let g = pair.m.grid();
    let lap = laplacian(&pair.m);
    let div = divergence_central(&pair.w);
    let cij = g.unindex(center);
    let mut acc = T::zero();
    for i in 0..g.node_count() {
        let ij = g.unindex(i);
        let mut near = true;
        for k in 0..g.dim() {
            if ij[k].abs_diff(cij[k]) > skip {
                near = false;
            }
        }
        if near {
            continue;
        }
        let r = spec.epsilon * lap.values()[i] - div.values()[i];
        acc = acc + g.trapezoid_factor(i) * r.abs();
    }
    acc * g.cell_volume()
}

/// The exponential pair m̃ = M τ^N I₁ e^{-τ|x|}, w̃ = ε∇m̃, with I₁ computed
/// on the grid so the mass is exactly M. The flux is the analytic gradient
/// -ετ (x/|x|) m̃; at the origin node the jump is represented by magnitude
/// ετ·m̃ along axis 0, so |w̃/m̃| = ετ at every node.
pub fn build_test_pair<T: Real>(spec: &ProblemSpec<T>, tau: T) -> Result<FlowPair<T>> {
    if !(tau > T::zero()) {
        return Err(Error::InvalidSpec(format!("tau must be positive, got {tau}")));
    }
    let g = spec.grid;
    let per_efold = T::one() / (tau * g.spacing());
    if per_efold < T::of(8.0) {
        return Err(Error::InvalidSpec(format!(
            "tau {tau} under-resolved: {per_efold} points per e-fold (< 8)"
        )));
    }
    let raw = ScalarField::from_fn(g, |x| (-tau * norm(x, g.dim())).exp());
    let mass_raw = integrate(&raw);
    let scale = spec.mass / mass_raw;
    let m = raw.map(|v| v * scale);
    let mut w = VectorField::zeros(g);
    for i in 0..g.node_count() {
        let x = g.coord(i);
        let r = norm(x, g.dim());
        let mag = spec.epsilon * tau * m.values()[i];
        if r > T::zero() {
            for k in 0..g.dim() {
                w.component_mut(k)[i] = -mag * x[k] / r;
            }
        } else {
            w.component_mut(0)[i] = mag;
        }
    }
    FlowPair::new(m, w)
}

/// Upper certificate from a τ-sweep of test-pair energies around the scale
/// τ* = ε^{-γ'/(γ'-N+α)}, together with the solver minimum passed by the
/// caller as the lower certificate.
pub fn two_sided_energy_bound_probe<T: Real>(
    spec: &ProblemSpec<T>,
    kernel: &RieszKernelTable<T>,
    lower_certificate: T,
) -> Result<(T, T)> {
    let n = T::from_usize(spec.dim).unwrap();
    let denom = spec.gamma_conj - n + spec.alpha;
    let tau_star = spec.epsilon.powf(-spec.gamma_conj / denom);
    let tau_max = T::one() / (T::of(8.0) * spec.grid.spacing());
    let lo = (tau_star / T::of(10.0)).min(tau_max / T::of(100.0));
    let hi = (tau_star * T::of(10.0)).min(tau_max);
    if !(hi > lo) || !(lo > T::zero()) {
        return Err(Error::InvalidSpec(
            "no grid-resolvable tau in the probe window".into(),
        ));
    }
    let mut best = T::infinity();
    for i in 0..17 {
        let t = (lo.ln()
            + (hi.ln() - lo.ln()) * T::from_usize(i).unwrap() / T::of(16.0))
        .exp();
        let pair = build_test_pair(spec, t)?;
        let e = evaluate_energy(spec, &pair, kernel)?;
        best = best.min(e.total);
    }
    Ok((lower_certificate, best))
}
