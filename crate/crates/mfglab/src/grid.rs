//! Truncated-box tensor grids, field containers and the discrete calculus
//! (quadrature, differences, interpolation) shared by every solver.
//!
//! The box is [-R, R]^N with N in {1, 2}, uniform spacing h = 2R/(n-1) and
//! nodes x_i = -R + i·h on each axis. Fields are value objects: operations
//! return new fields and never mutate their inputs.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Maximum supported dimension. The types permit only 1 and 2.
pub const MAX_DIM: usize = 2;

/// A point of the box; only the first `dim` entries are meaningful.
pub type Coord<T> = [T; MAX_DIM];

/// Direction selector for one-sided differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientBias {
    /// Backward difference (u_i - u_{i-1})/h on every axis.
    Backward,
    /// Forward difference (u_{i+1} - u_i)/h on every axis.
    Forward,
    /// The switch that keeps the scheme for H(p) = |p|^gamma/gamma monotone:
    /// per axis, (D⁻u)⁺ - (D⁺u)⁻.
    Monotone,
}

/// Uniform tensor-product grid over [-half_width, half_width]^dim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T: Real> {
    dim: usize,
    half_width: T,
    points_per_axis: usize,
    spacing: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(dim: usize, half_width: T, points_per_axis: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidSpec(format!("dim must be 1 or 2, got {dim}")));
        }
        if points_per_axis < 16 {
            return Err(Error::InvalidSpec(format!(
                "points_per_axis must be at least 16, got {points_per_axis}"
            )));
        }
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(Error::InvalidSpec("half_width must be positive".into()));
        }
        let spacing = T::of(2.0) * half_width / T::from_usize(points_per_axis - 1).unwrap();
        Ok(Self {
            dim,
            half_width,
            points_per_axis,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    /// Total number of nodes (n in 1D, n² in 2D).
    pub fn node_count(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Volume of one full cell, h^dim.
    pub fn cell_volume(&self) -> T {
        let mut v = T::one();
        for _ in 0..self.dim {
            v = v * self.spacing;
        }
        v
    }

    /// Row-major node index from per-axis indices (axis 0 slowest).
    pub fn index(&self, ij: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => ij[0],
            _ => ij[0] * self.points_per_axis + ij[1],
        }
    }

    /// Per-axis indices from a node index.
    pub fn unindex(&self, idx: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.points_per_axis, idx % self.points_per_axis],
        }
    }

    /// Coordinate of the i-th node along one axis.
    pub fn axis_coord(&self, i: usize) -> T {
        -self.half_width + T::from_usize(i).unwrap() * self.spacing
    }

    /// Coordinates of a node.
    pub fn coord(&self, idx: usize) -> Coord<T> {
        let ij = self.unindex(idx);
        let mut c = [T::zero(); MAX_DIM];
        for k in 0..self.dim {
            c[k] = self.axis_coord(ij[k]);
        }
        c
    }

    /// Trapezoid weight factor of a node: product over axes of 1/2 at the two
    /// boundary planes, 1 inside. Multiplied by `cell_volume` this is the
    /// quadrature weight.
    pub fn trapezoid_factor(&self, idx: usize) -> T {
        let ij = self.unindex(idx);
        let mut w = T::one();
        let half = T::of(0.5);
        for k in 0..self.dim {
            if ij[k] == 0 || ij[k] == self.points_per_axis - 1 {
                w = w * half;
            }
        }
        w
    }

    /// Stride of axis k in the flat index.
    pub fn stride(&self, axis: usize) -> usize {
        match (self.dim, axis) {
            (1, _) => 1,
            (_, 0) => self.points_per_axis,
            _ => 1,
        }
    }
}

/// Sampled scalar quantity on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T: Real> {
    grid: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn constant(grid: GridSpec<T>, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.node_count()],
        }
    }

    pub fn from_fn(grid: GridSpec<T>, f: impl Fn(Coord<T>) -> T) -> Self {
        let values = (0..grid.node_count()).map(|i| f(grid.coord(i))).collect();
        Self { grid, values }
    }

    pub fn from_values(grid: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> GridSpec<T> {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Index of the minimum value; ties broken by the smallest index, which is
    /// the lexicographically smallest coordinate.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Sampled vector quantity; one component field per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T: Real> {
    grid: GridSpec<T>,
    components: Vec<Vec<T>>,
}

impl<T: Real> VectorField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self {
            grid,
            components: vec![vec![T::zero(); grid.node_count()]; grid.dim()],
        }
    }

    pub fn from_components(grid: GridSpec<T>, components: Vec<Vec<T>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "vector field needs {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        for c in &components {
            if c.len() != grid.node_count() {
                return Err(Error::GridMismatch("component length mismatch".into()));
            }
        }
        Ok(Self { grid, components })
    }

    pub fn grid(&self) -> GridSpec<T> {
        self.grid
    }

    pub fn component(&self, axis: usize) -> &[T] {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [T] {
        &mut self.components[axis]
    }

    /// Euclidean magnitude at a node.
    pub fn magnitude_at(&self, idx: usize) -> T {
        let mut s = T::zero();
        for c in &self.components {
            s = s + c[idx] * c[idx];
        }
        s.sqrt()
    }

    pub fn max_magnitude(&self) -> T {
        (0..self.grid.node_count()).fold(T::zero(), |acc, i| acc.max(self.magnitude_at(i)))
    }
}

/// Trapezoidal quadrature of f over the box. Linear in f.
pub fn integrate<T: Real>(f: &ScalarField<T>) -> T {
    let g = f.grid();
    let vol = g.cell_volume();
    let mut acc = T::zero();
    for (i, &v) in f.values().iter().enumerate() {
        acc = acc + g.trapezoid_factor(i) * v;
    }
    acc * vol
}

/// Trapezoid inner product ⟨f, g⟩ = ∫ f·g.
pub fn inner<T: Real>(f: &ScalarField<T>, g: &ScalarField<T>) -> Result<T> {
    f.check_same_grid(g)?;
    let gr = f.grid();
    let vol = gr.cell_volume();
    let mut acc = T::zero();
    for i in 0..gr.node_count() {
        acc = acc + gr.trapezoid_factor(i) * f.values()[i] * g.values()[i];
    }
    Ok(acc * vol)
}

/// Volume-weighted L¹ norm.
pub fn l1_norm<T: Real>(f: &ScalarField<T>) -> T {
    integrate(&f.map(|v| v.abs()))
}

fn one_sided<T: Real>(u: &[T], g: GridSpec<T>, idx: usize, axis: usize, forward: bool) -> T {
    let ij = g.unindex(idx);
    let n = g.points_per_axis();
    let s = g.stride(axis);
    let i = ij[axis];
    if forward {
        if i + 1 < n {
            (u[idx + s] - u[idx]) / g.spacing()
        } else {
            (u[idx] - u[idx - s]) / g.spacing()
        }
    } else if i > 0 {
        (u[idx] - u[idx - s]) / g.spacing()
    } else {
        (u[idx + s] - u[idx]) / g.spacing()
    }
}

/// One-sided differences per the requested bias; one-sided at the boundary.
pub fn gradient_upwind<T: Real>(u: &ScalarField<T>, bias: GradientBias) -> VectorField<T> {
    let g = u.grid();
    let mut out = VectorField::zeros(g);
    for axis in 0..g.dim() {
        for idx in 0..g.node_count() {
            let v = match bias {
                GradientBias::Backward => one_sided(u.values(), g, idx, axis, false),
                GradientBias::Forward => one_sided(u.values(), g, idx, axis, true),
                GradientBias::Monotone => {
                    let ij = g.unindex(idx);
                    let n = g.points_per_axis();
                    let dm = if ij[axis] > 0 {
                        one_sided(u.values(), g, idx, axis, false)
                    } else {
                        T::zero()
                    };
                    let dp = if ij[axis] + 1 < n {
                        one_sided(u.values(), g, idx, axis, true)
                    } else {
                        T::zero()
                    };
                    dm.max(T::zero()) - (-dp).max(T::zero())
                }
            };
            out.component_mut(axis)[idx] = v;
        }
    }
    out
}

/// Central differences in the interior, one-sided at the boundary.
pub fn gradient_central<T: Real>(u: &ScalarField<T>) -> VectorField<T> {
    let g = u.grid();
    let n = g.points_per_axis();
    let half = T::of(0.5);
    let mut out = VectorField::zeros(g);
    for axis in 0..g.dim() {
        let s = g.stride(axis);
        for idx in 0..g.node_count() {
            let i = g.unindex(idx)[axis];
            let v = if i == 0 {
                (u.values()[idx + s] - u.values()[idx]) / g.spacing()
            } else if i == n - 1 {
                (u.values()[idx] - u.values()[idx - s]) / g.spacing()
            } else {
                half * (u.values()[idx + s] - u.values()[idx - s]) / g.spacing()
            };
            out.component_mut(axis)[idx] = v;
        }
    }
    out
}

/// Standard (2·dim+1)-point Laplacian with homogeneous Neumann ghost values:
/// at a boundary plane the ghost mirrors the interior neighbour.
pub fn laplacian<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    let g = f.grid();
    let n = g.points_per_axis();
    let h2 = g.spacing() * g.spacing();
    let two = T::of(2.0);
    let u = f.values();
    let mut out = vec![T::zero(); g.node_count()];
    for axis in 0..g.dim() {
        let s = g.stride(axis);
        for idx in 0..g.node_count() {
            let i = g.unindex(idx)[axis];
            let (lo, hi) = if i == 0 {
                (u[idx + s], u[idx + s])
            } else if i == n - 1 {
                (u[idx - s], u[idx - s])
            } else {
                (u[idx - s], u[idx + s])
            };
            out[idx] = out[idx] + (lo - two * u[idx] + hi) / h2;
        }
    }
    ScalarField::from_values(g, out).expect("same grid")
}

/// Central divergence of a vector field; one-sided at the boundary.
pub fn divergence_central<T: Real>(w: &VectorField<T>) -> ScalarField<T> {
    let g = w.grid();
    let n = g.points_per_axis();
    let half = T::of(0.5);
    let mut out = vec![T::zero(); g.node_count()];
    for axis in 0..g.dim() {
        let s = g.stride(axis);
        let c = w.component(axis);
        for idx in 0..g.node_count() {
            let i = g.unindex(idx)[axis];
            let v = if i == 0 {
                (c[idx + s] - c[idx]) / g.spacing()
            } else if i == n - 1 {
                (c[idx] - c[idx - s]) / g.spacing()
            } else {
                half * (c[idx + s] - c[idx - s]) / g.spacing()
            };
            out[idx] = out[idx] + v;
        }
    }
    ScalarField::from_values(g, out).expect("same grid")
}

/// Cubic (4-point Lagrange) interpolation of a field at an arbitrary point of
/// the box; exact on cubics, local error O(h⁴). Points outside the box are
/// evaluated by the boundary stencil's extrapolant.
pub fn sample_cubic<T: Real>(f: &ScalarField<T>, x: Coord<T>) -> T {
    let g = f.grid();
    match g.dim() {
        1 => sample_cubic_axis(g, |i| f.values()[i], x[0]),
        _ => {
            // separable: interpolate along axis 1 on four axis-0 planes,
            // then along axis 0
            let n = g.points_per_axis();
            let (i0, t0) = cell_of(g, x[0]);
            let mut plane = [T::zero(); 4];
            for (jj, p) in plane.iter_mut().enumerate() {
                let row = i0 - 1 + jj;
                *p = sample_cubic_axis(g, |i| f.values()[row * n + i], x[1]);
            }
            lagrange4(plane, t0)
        }
    }
}

fn cell_of<T: Real>(g: GridSpec<T>, x: T) -> (usize, T) {
    let n = g.points_per_axis();
    let rel = (x + g.half_width()) / g.spacing();
    let mut i = rel.floor().to_f64_lossy() as isize;
    // keep the 4-point stencil {i-1, i, i+1, i+2} inside the grid
    i = i.clamp(1, n as isize - 3);
    let t = rel - T::from_isize(i).unwrap();
    (i as usize, t)
}

fn lagrange4<T: Real>(f: [T; 4], t: T) -> T {
    let one = T::one();
    let two = T::of(2.0);
    let six = T::of(6.0);
    let a = -t * (t - one) * (t - two) / six;
    let b = (t + one) * (t - one) * (t - two) / two;
    let c = -(t + one) * t * (t - two) / two;
    let d = (t + one) * t * (t - one) / six;
    a * f[0] + b * f[1] + c * f[2] + d * f[3]
}

fn sample_cubic_axis<T: Real>(g: GridSpec<T>, f: impl Fn(usize) -> T, x: T) -> T {
    let (i, t) = cell_of(g, x);
    lagrange4([f(i - 1), f(i), f(i + 1), f(i + 2)], t)
}

/// Resample a field shifted by `delta` (same units as coordinates):
/// out(x) = f(x + delta). Used by the co-moving frame and frame changes.
pub fn shift_sampled<T: Real>(f: &ScalarField<T>, delta: Coord<T>) -> ScalarField<T> {
    let g = f.grid();
    ScalarField::from_fn(g, |x| {
        let mut y = x;
        for k in 0..g.dim() {
            y[k] = y[k] + delta[k];
        }
        sample_cubic(f, y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1d(r: f64, n: usize) -> GridSpec<f64> {
        GridSpec::new(1, r, n).unwrap()
    }

    #[test]
    fn integrate_zero_and_constant() {
        let g = grid1d(4.0, 129);
        assert_eq!(integrate(&ScalarField::constant(g, 0.0)), 0.0);
        let one = ScalarField::constant(g, 1.0);
        assert!((integrate(&one) - 8.0).abs() < 1e-13);
    }

    #[test]
    fn integrate_exponential_kink_oracle() {
        // analytic antiderivative: ∫_{-10}^{10} e^{-|x|} = 2(1 - e^{-10});
        // the kink at 0 limits trapezoid accuracy to 2(1-e^{-10})h²/12.
        let exact = 2.0 * (1.0 - (-10.0f64).exp());
        let g = grid1d(10.0, 2049);
        let f = ScalarField::from_fn(g, |x| (-x[0].abs()).exp());
        let err = (integrate(&f) - exact).abs();
        assert!(err < 2e-5, "err={err:e}");
        let g2 = grid1d(10.0, 4097);
        let f2 = ScalarField::from_fn(g2, |x| (-x[0].abs()).exp());
        let err2 = (integrate(&f2) - exact).abs();
        let ratio = err / err2;
        assert!(ratio > 3.0 && ratio < 5.0, "not O(h^2): {ratio}");
    }

    #[test]
    fn integrate_is_linear() {
        let g = grid1d(3.0, 64);
        let f = ScalarField::from_fn(g, |x| x[0].sin());
        let h = ScalarField::from_fn(g, |x| x[0] * x[0]);
        let lhs = integrate(&f.zip_map(&h, |a, b| 2.5 * a - 1.25 * b).unwrap());
        let rhs = 2.5 * integrate(&f) - 1.25 * integrate(&h);
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn gradient_constant_and_linear() {
        let g = grid1d(4.0, 65);
        let c = ScalarField::constant(g, 3.0);
        assert_eq!(gradient_upwind(&c, GradientBias::Monotone).max_magnitude(), 0.0);
        let lin = ScalarField::from_fn(g, |x| x[0]);
        let d = gradient_upwind(&lin, GradientBias::Backward);
        for i in 1..g.node_count() {
            assert!((d.component(0)[i] - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_upwind_stencil_values() {
        // u = x², h = 0.1, at x = 1: forward 2.1, backward 1.9, central 2.0;
        // the monotone pick for an increasing u is the backward difference.
        let g = GridSpec::new(1, 1.6, 33).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-12);
        let u = ScalarField::from_fn(g, |x| x[0] * x[0]);
        let i = (0..g.node_count())
            .find(|&i| (g.coord(i)[0] - 1.0).abs() < 1e-9)
            .unwrap();
        let fwd = gradient_upwind(&u, GradientBias::Forward).component(0)[i];
        let bwd = gradient_upwind(&u, GradientBias::Backward).component(0)[i];
        let mono = gradient_upwind(&u, GradientBias::Monotone).component(0)[i];
        let cen = gradient_central(&u).component(0)[i];
        assert!((fwd - 2.1).abs() < 1e-10);
        assert!((bwd - 1.9).abs() < 1e-10);
        assert!((mono - 1.9).abs() < 1e-10);
        assert!((cen - 2.0).abs() < 1e-10);
    }

    #[test]
    fn monotone_gradient_single_sign_for_monotone_field() {
        let g = grid1d(4.0, 65);
        let u = ScalarField::from_fn(g, |x| (x[0] * 0.7).tanh() + 0.3 * x[0]);
        let d = gradient_upwind(&u, GradientBias::Monotone);
        for i in 1..g.node_count() - 1 {
            assert!(d.component(0)[i] > 0.0);
        }
    }

    #[test]
    fn laplacian_polynomial_exactness() {
        let g = grid1d(4.0, 65);
        let c = ScalarField::constant(g, 5.0);
        assert!(laplacian(&c).max_abs() < 1e-12);
        let q = ScalarField::from_fn(g, |x| x[0] * x[0]);
        let lap = laplacian(&q);
        for i in 1..g.node_count() - 1 {
            assert!((lap.values()[i] - 2.0).abs() < 1e-11);
        }
    }

    #[test]
    fn laplacian_sine_oracle() {
        let g = GridSpec::new(1, std::f64::consts::PI, 257).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0].sin());
        let lap = laplacian(&f);
        let mut worst = 0.0f64;
        for i in 1..g.node_count() - 1 {
            let x = g.coord(i)[0];
            worst = worst.max((lap.values()[i] + x.sin()).abs());
        }
        assert!(worst < 1e-3, "max interior error {worst:e}");
    }

    #[test]
    fn laplacian_2d_separable() {
        let g = GridSpec::new(2, 2.0, 33).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] * x[0] + 3.0 * x[1] * x[1]);
        let lap = laplacian(&f);
        let n = g.points_per_axis();
        for i0 in 1..n - 1 {
            for i1 in 1..n - 1 {
                let v = lap.values()[g.index([i0, i1])];
                assert!((v - 8.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cubic_interpolation_exact_on_cubics() {
        let g = grid1d(4.0, 65);
        let f = ScalarField::from_fn(g, |x| 1.0 + x[0] - 0.5 * x[0] * x[0] + 0.125 * x[0].powi(3));
        for &x in &[-3.97, -1.234, 0.0, 0.6181, 3.9] {
            let exact = 1.0 + x - 0.5 * x * x + 0.125 * x.powi(3);
            assert!((sample_cubic(&f, [x, 0.0]) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_interpolation_2d() {
        let g = GridSpec::new(2, 3.0, 49).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] * x[0] * x[1] + 2.0 * x[1]);
        let (x, y) = (0.731, -1.618);
        let exact = x * x * y + 2.0 * y;
        assert!((sample_cubic(&f, [x, y]) - exact).abs() < 1e-11);
    }

    #[test]
    fn dim_and_resolution_validation() {
        assert!(GridSpec::<f64>::new(3, 1.0, 32).is_err());
        assert!(GridSpec::<f64>::new(1, 1.0, 8).is_err());
        assert!(GridSpec::<f64>::new(1, -1.0, 32).is_err());
    }
}
