//! Quadrature discretizations of the parameter box.
//!
//! A [`ParameterGrid`] holds nodes and positive weights approximating the
//! Lebesgue integral over a box `[a_1, b_1] x ... x [a_d, b_d]`. Two rules
//! are provided: composite midpoint on a uniform lattice (the default used
//! by the simulations) and tensor Gauss-Legendre (exact for polynomials,
//! used by identity tests). A degenerate axis (`a == b`) gets unit total
//! weight so that single-parameter limits of ensembles keep nonzero mass.

use crate::error::Error;
use crate::numeric::pairwise_sum;
use crate::Result;

/// Quadrature nodes and weights over a box in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    dim: usize,
    bounds: Vec<(f64, f64)>,
    /// Flat node storage, `len = points * dim`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ParameterGrid {
    /// Builds a grid from per-axis nodes and weights by tensor product.
    pub(crate) fn tensor(bounds: Vec<(f64, f64)>, per_axis: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        let dim = bounds.len();
        let total: usize = per_axis.iter().map(|(n, _)| n.len()).product();
        let mut nodes = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for (axis, &i) in idx.iter().enumerate() {
                nodes.push(per_axis[axis].0[i]);
                w *= per_axis[axis].1[i];
            }
            weights.push(w);
            // Row-major odometer: last axis fastest.
            for axis in (0..dim).rev() {
                idx[axis] += 1;
                if idx[axis] < per_axis[axis].0.len() {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self {
            dim,
            bounds,
            nodes,
            weights,
        }
    }

    fn check_bounds(bounds: &[(f64, f64)], points: usize) -> Result<()> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        if points == 0 {
            return Err(Error::InvalidArgument("grid needs at least one node".into()));
        }
        for &(a, b) in bounds {
            if !a.is_finite() || !b.is_finite() || b < a {
                return Err(Error::InvalidArgument(format!(
                    "invalid axis bounds [{a}, {b}]"
                )));
            }
        }
        Ok(())
    }

    /// Composite midpoint rule with `points` uniform cells per axis.
    pub fn uniform_midpoint(bounds: &[(f64, f64)], points: usize) -> Result<Self> {
        Self::check_bounds(bounds, points)?;
        let per_axis = bounds
            .iter()
            .map(|&(a, b)| midpoint_axis(a, b, points))
            .collect();
        Ok(Self::tensor(bounds.to_vec(), per_axis))
    }

    /// Tensor Gauss-Legendre rule with `points` nodes per axis; exact for
    /// polynomials of per-axis degree `2 * points - 1`.
    pub fn gauss_legendre(bounds: &[(f64, f64)], points: usize) -> Result<Self> {
        Self::check_bounds(bounds, points)?;
        let per_axis = bounds
            .iter()
            .map(|&(a, b)| gauss_legendre_axis(a, b, points))
            .collect();
        Ok(Self::tensor(bounds.to_vec(), per_axis))
    }

    /// Builds a grid from explicit nodes and weights (used by CSV loading).
    pub fn from_raw(bounds: Vec<(f64, f64)>, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let dim = bounds.len();
        if dim == 0 || weights.is_empty() || nodes.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch(
                "node/weight storage does not match grid shape".into(),
            ));
        }
        let grid = Self {
            dim,
            bounds,
            nodes,
            weights,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Checks the grid invariants: nodes inside bounds, positive weights
    /// summing to the box volume (to 1e-12 relative; degenerate axes use
    /// unit mass instead).
    pub fn validate(&self) -> Result<()> {
        for p in 0..self.len() {
            for (axis, &x) in self.node(p).iter().enumerate() {
                let (a, b) = self.bounds[axis];
                let slack = 1e-12 * (1.0 + b.abs().max(a.abs()));
                if !(a - slack..=b + slack).contains(&x) {
                    return Err(Error::InvalidArgument(format!(
                        "node {p} lies outside bounds on axis {axis}: {x} not in [{a}, {b}]"
                    )));
                }
            }
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        let total = pairwise_sum(&self.weights);
        let volume = self.volume();
        if (total - volume).abs() > 1e-12 * volume.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {total}, expected box volume {volume}"
            )));
        }
        Ok(())
    }

    /// Box volume; degenerate axes count as measure 1.
    pub fn volume(&self) -> f64 {
        self.bounds
            .iter()
            .map(|&(a, b)| if b > a { b - a } else { 1.0 })
            .product()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn node(&self, p: usize) -> &[f64] {
        &self.nodes[p * self.dim..(p + 1) * self.dim]
    }

    pub fn weight(&self, p: usize) -> f64 {
        self.weights[p]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted quadrature of a scalar function of the node.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let vals: Vec<f64> = (0..self.len())
            .map(|p| self.weight(p) * f(self.node(p)))
            .collect();
        pairwise_sum(&vals)
    }
}

fn midpoint_axis(a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    if b <= a {
        // Degenerate axis: all mass at the single point, counting measure.
        return (vec![a; points], vec![1.0 / points as f64; points]);
    }
    let h = (b - a) / points as f64;
    let nodes = (0..points).map(|i| a + (i as f64 + 0.5) * h).collect();
    (nodes, vec![h; points])
}

/// Gauss-Legendre nodes/weights on `[a, b]` by Newton iteration on the
/// Legendre polynomial, seeded with the Chebyshev-angle approximation.
fn gauss_legendre_axis(a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    if b <= a {
        return (vec![a; points], vec![1.0 / points as f64; points]);
    }
    let n = points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Root i (descending) of P_n on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [a, b].
        nodes[n - 1 - i] = 0.5 * (b - a) * x + 0.5 * (a + b);
        weights[n - 1 - i] = 0.5 * (b - a) * w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
