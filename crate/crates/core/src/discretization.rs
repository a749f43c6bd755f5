//! Uniform trait grid, trapezoidal quadrature and tridiagonal
//! advection-diffusion-reaction operators with homogeneous Dirichlet ends.

use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest grid accepted by [`build_grid`].
pub const MIN_GRID_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1D {
    radius: f64,
    dx: f64,
    nodes: Vec<f64>,
}

impl Grid1D {
    /// Uniform grid on `[-radius, radius]` with `n_points >= 3` nodes.
    pub fn new(radius: f64, n_points: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGrid(format!("radius must be positive, got {radius}")));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n_points}")));
        }
        let dx = 2.0 * radius / (n_points - 1) as f64;
        let mid = (n_points - 1) as f64 / 2.0;
        // Symmetric construction keeps x_i = -x_{n-1-i} exactly.
        let nodes = (0..n_points)
            .map(|i| {
                if i == 0 {
                    -radius
                } else if i == n_points - 1 {
                    radius
                } else {
                    (i as f64 - mid) * dx
                }
            })
            .collect();
        Ok(Self { radius, dx, nodes })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_points(&self) -> usize {
        self.nodes.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoidal weights.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut w = vec![self.dx; n];
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        w
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}

/// Production grid constructor: enforces at least [`MIN_GRID_POINTS`] nodes.
pub fn build_grid(radius: f64, n_points: usize) -> Result<Grid1D> {
    if n_points < MIN_GRID_POINTS {
        return Err(Error::InvalidGrid(format!(
            "need at least {MIN_GRID_POINTS} nodes, got {n_points}"
        )));
    }
    Grid1D::new(radius, n_points)
}

/// Trapezoidal integral of node samples.
pub fn integrate(grid: &Grid1D, values: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), grid.n_points());
    crate::numerics::trapezoid(values, grid.dx())
}

/// Cell Peclet number `|drift| dx / (2 diffusivity)`.
pub fn cell_peclet(grid: &Grid1D, drift: f64, diffusivity: f64) -> f64 {
    drift.abs() * grid.dx() / (2.0 * diffusivity)
}

/// Tridiagonal matrix stored by diagonals; `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        assert!(v.len() == n && out.len() == n && n >= 2);
        out[0] = self.diag[0] * v[0] + self.upper[0] * v[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i] * v[i - 1] + self.diag[i] * v[i] + self.upper[i] * v[i + 1];
        }
        out[n - 1] = self.lower[n - 1] * v[n - 2] + self.diag[n - 1] * v[n - 1];
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        out
    }

    /// `I - h * self`, the backward-Euler matrix.
    pub fn implicit_matrix(&self, h: f64) -> TridiagonalOperator {
        TridiagonalOperator {
            lower: self.lower.iter().map(|v| -h * v).collect(),
            diag: self.diag.iter().map(|v| 1.0 - h * v).collect(),
            upper: self.upper.iter().map(|v| -h * v).collect(),
        }
    }

    /// Thomas factorisation; fails on a vanishing pivot.
    pub fn factor(&self) -> Result<TridiagonalFactor> {
        let n = self.dim();
        let mut inv_pivot = vec![0.0; n];
        let mut c_prime = vec![0.0; n];
        let mut pivot = self.diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = self.diag[i] - self.lower[i] * c_prime[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::InvalidInput(format!("singular tridiagonal pivot at row {i}")));
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < n {
                c_prime[i] = self.upper[i] * inv_pivot[i];
            }
        }
        Ok(TridiagonalFactor { lower: self.lower.clone(), inv_pivot, c_prime })
    }
}

/// LU factors of a tridiagonal matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    c_prime: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }

    /// True when every pivot is positive, so an M-matrix solve preserves sign.
    pub fn pivots_positive(&self) -> bool {
        self.inv_pivot.iter().all(|&p| p > 0.0)
    }
}

/// Discretises `drift * d/dx + diffusivity * d2/dx2 + reaction` on the grid.
///
/// Central differences for the drift while the cell Peclet number is below 1,
/// first-order upwind otherwise. Boundary rows are zero (homogeneous Dirichlet).
pub fn advection_diffusion_operator(
    grid: &Grid1D,
    drift: f64,
    diffusivity: f64,
    reaction: &[f64],
) -> TridiagonalOperator {
    let n = grid.n_points();
    assert_eq!(reaction.len(), n);
    let dx = grid.dx();
    let d = diffusivity / (dx * dx);
    let (lo, mid, up) = if cell_peclet(grid, drift, diffusivity) < 1.0 {
        (d - drift / (2.0 * dx), -2.0 * d, d + drift / (2.0 * dx))
    } else if drift > 0.0 {
        // Information travels toward -x, so differences look to +x.
        (d, -2.0 * d - drift / dx, d + drift / dx)
    } else {
        (d - drift / dx, -2.0 * d + drift / dx, d)
    };
    let mut lower = vec![lo; n];
    let mut upper = vec![up; n];
    let mut diag: Vec<f64> = reaction.iter().map(|r| mid + r).collect();
    for i in [0, n - 1] {
        lower[i] = 0.0;
        diag[i] = 0.0;
        upper[i] = 0.0;
    }
    TridiagonalOperator { lower, diag, upper }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_grid() {
        let g = Grid1D::new(1.0, 3).unwrap();
        assert_eq!(g.nodes(), &[-1.0, 0.0, 1.0]);
        assert_eq!(g.dx(), 1.0);
    }

    #[test]
    fn production_grid_spacing() {
        let g = build_grid(6.0, 2049).unwrap();
        assert_eq!(g.dx(), 12.0 / 2048.0);
        assert_eq!(g.nodes()[0], -6.0);
        assert_eq!(g.nodes()[2048], 6.0);
        assert_eq!(g.nodes()[1024], 0.0);
    }

    #[test]
    fn coarse_grids_are_rejected() {
        assert!(matches!(build_grid(6.0, 8), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(-1.0, 128), Err(Error::InvalidGrid(_))));
        assert!(Grid1D::new(1.0, 2).is_err());
    }

    #[test]
    fn trapezoid_cases() {
        let g = build_grid(1.0, 65).unwrap();
        assert!((integrate(&g, &vec![1.0; 65]) - 2.0).abs() < 1e-14);
        assert!(integrate(&g, g.nodes()).abs() < 1e-15);
        let g = build_grid(8.0, 4097).unwrap();
        let gauss = g.sample(|x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt());
        assert!((integrate(&g, &gauss) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stencil_exactness() {
        let g = build_grid(2.0, 65).unwrap();
        let zero = vec![0.0; 65];
        let lap = advection_diffusion_operator(&g, 0.0, 1.0, &zero);
        let out = lap.apply(&g.sample(|x| x * x));
        for v in &out[1..64] {
            assert!((v - 2.0).abs() < 1e-10);
        }
        let adv = advection_diffusion_operator(&g, 1.0, 1.0, &zero);
        let out = adv.apply(g.nodes());
        for v in &out[1..64] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn peclet_switch_selects_upwind() {
        let g = Grid1D::new(1.0, 21).unwrap();
        assert!((g.dx() - 0.1).abs() < 1e-15);
        assert!((cell_peclet(&g, 1.0, 1e-3) - 50.0).abs() < 1e-9);
        let op = advection_diffusion_operator(&g, 1.0, 1e-3, &vec![0.0; 21]);
        let d = 1e-3 / 0.01;
        assert!((op.lower[5] - d).abs() < 1e-12);
        assert!((op.upper[5] - (d + 10.0)).abs() < 1e-9);
        assert!(op.lower[5] >= 0.0 && op.upper[5] >= 0.0);
        // Upwinded derivative is still exact on linear data.
        let zero_diff = advection_diffusion_operator(&g, 1.0, 1e-3, &vec![0.0; 21]);
        let out = zero_diff.apply(g.nodes());
        assert!((out[7] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sine_converges_at_second_order() {
        let (drift, diff) = (0.7, 1.3);
        let err = |n: usize| {
            let g = build_grid(3.0, n).unwrap();
            let op = advection_diffusion_operator(&g, drift, diff, &vec![0.0; n]);
            let out = op.apply(&g.sample(f64::sin));
            (1..n - 1)
                .map(|i| {
                    let x = g.nodes()[i];
                    (out[i] - (drift * x.cos() - diff * x.sin())).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(65), err(129));
        let ratio = e1 / e2;
        assert!(ratio > 3.8 && ratio < 4.2, "ratio {ratio}");
    }

    #[test]
    fn thomas_solves_implicit_step() {
        let g = build_grid(1.0, 64).unwrap();
        let op = advection_diffusion_operator(&g, 0.3, 0.05, &g.sample(|x| 1.0 - x * x));
        let m = op.implicit_matrix(0.01);
        let f = m.factor().unwrap();
        assert!(f.pivots_positive());
        let x: Vec<f64> = g.sample(|x| (3.0 * x).cos() + 2.0);
        let mut b = m.apply(&x);
        f.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn integration_by_parts(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0,
                                drift in -0.5f64..0.5, diff in 0.05f64..1.0) {
            let g = build_grid(8.0, 513).unwrap();
            // Smooth data vanishing with its derivatives near the boundary.
            let u = g.sample(|x| (c0 + c1 * x + c2 * x * x) * (-x * x).exp());
            let op = advection_diffusion_operator(&g, drift, diff, &vec![0.0; 513]);
            let total = integrate(&g, &op.apply(&u));
            prop_assert!(total.abs() < 1e-10);
        }
    }
}
