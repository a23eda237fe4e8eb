//! Reconstruction of a density on the unit cube from its moments.
//!
//! The estimate at the lattice point `k / n` is
//! `(n+1) C(n, k) Delta^{n-k} m_k` (tensorized per axis), which converges to
//! the generating density as the lattice is refined.
//!
//! The difference table is evaluated in exact rational arithmetic. This is
//! not a luxury: the alternating sums amplify rounding of the inputs by
//! roughly `2^n C(n, k)`, so for lattice sizes past ~30 a double-precision
//! table is pure noise. Converting each stored `f64` into a rational is
//! exact, so the reconstruction is limited only by the accuracy of the
//! moments themselves; [`RationalMoments::from_unit_polynomial`] constructs
//! polynomial-density moments with no rounding at all.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::ensemble::EnsembleProfile;
use crate::error::Error;
use crate::grid::ParameterGrid;
use crate::moments::MomentSequence;
use crate::multiindex::{graded_lex_rank, MultiIndex};
use crate::Result;

/// Exact binomial coefficient in arbitrary precision.
pub fn big_binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::from(1u8);
    for i in 1..=k {
        acc = acc * BigInt::from(n - k + i) / BigInt::from(i);
    }
    acc
}

/// A scalar moment sequence with exact rational entries.
#[derive(Debug, Clone)]
pub struct RationalMoments {
    param_dim: usize,
    max_order: usize,
    values: Vec<BigRational>,
}

impl RationalMoments {
    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Embeds a stored scalar sequence exactly (every `f64` is a rational).
    pub fn from_moment_sequence(m: &MomentSequence) -> Result<Self> {
        if m.state_dim() != 1 {
            return Err(Error::DimensionMismatch(
                "rational embedding expects a scalar sequence; select a component first".into(),
            ));
        }
        let values = m
            .values()
            .iter()
            .map(|&v| BigRational::from_float(v).ok_or(Error::NonFinite("moment value".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            param_dim: m.param_dim(),
            max_order: m.max_order(),
            values,
        })
    }

    /// Exact moments on `[0, 1]` of the polynomial density
    /// `phi(beta) = sum_j coeffs[j] beta^j`: `m_k = sum_j coeffs[j] / (k + j + 1)`.
    pub fn from_unit_polynomial(coeffs: &[BigRational], max_order: usize) -> Self {
        let values = (0..=max_order)
            .map(|k| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c / BigRational::from_integer(BigInt::from(k + j + 1)))
                    .sum()
            })
            .collect();
        Self {
            param_dim: 1,
            max_order,
            values,
        }
    }

    /// Convenience wrapper taking integer polynomial coefficients.
    pub fn from_unit_polynomial_ints(coeffs: &[i64], max_order: usize) -> Self {
        let coeffs: Vec<BigRational> = coeffs
            .iter()
            .map(|&c| BigRational::from_integer(BigInt::from(c)))
            .collect();
        Self::from_unit_polynomial(&coeffs, max_order)
    }

    pub fn get(&self, k: &MultiIndex) -> Result<&BigRational> {
        if k.dim() != self.param_dim || k.order() > self.max_order {
            return Err(Error::OrderOverflow {
                needed: k.order(),
                max_order: self.max_order,
            });
        }
        Ok(&self.values[graded_lex_rank(k)])
    }

    /// Exact tensor-product difference `Delta^n m_k`.
    pub fn difference(&self, n: &MultiIndex, k: &MultiIndex) -> Result<BigRational> {
        if n.dim() != self.param_dim || k.dim() != self.param_dim {
            return Err(Error::DimensionMismatch(
                "index dimension does not match sequence".into(),
            ));
        }
        if k.order() + n.order() > self.max_order {
            return Err(Error::OrderOverflow {
                needed: k.order() + n.order(),
                max_order: self.max_order,
            });
        }
        let d = self.param_dim;
        let mut offset = vec![0usize; d];
        let mut total = BigRational::zero();
        loop {
            let i = MultiIndex::new(offset.clone());
            let mut coeff = BigInt::from(1u8);
            for axis in 0..d {
                coeff *= big_binomial(n.entry(axis), i.entry(axis));
            }
            if i.order() % 2 == 1 {
                coeff = -coeff;
            }
            total += BigRational::from_integer(coeff) * self.get(&k.plus(&i))?;
            let mut axis = d;
            loop {
                if axis == 0 {
                    return Ok(total);
                }
                axis -= 1;
                offset[axis] += 1;
                if offset[axis] <= n.entry(axis) {
                    break;
                }
                offset[axis] = 0;
            }
        }
    }
}

/// Exact lattice reconstruction: for every lattice index `k` in
/// `{0..n_grid}^d` (row-major, last axis fastest) returns
/// `(n+1) C(n, k) Delta^{n-k} m_k` with `n = (n_grid, ..., n_grid)`.
pub fn invert_moments_exact(m: &RationalMoments, n_grid: usize) -> Result<Vec<BigRational>> {
    if n_grid == 0 {
        return Err(Error::InvalidArgument("lattice size must be >= 1".into()));
    }
    let d = m.param_dim();
    if m.max_order() < n_grid * d {
        return Err(Error::OrderOverflow {
            needed: n_grid * d,
            max_order: m.max_order(),
        });
    }
    let n = MultiIndex::new(vec![n_grid; d]);
    let mut out = Vec::new();
    let mut entries = vec![0usize; d];
    loop {
        let k = MultiIndex::new(entries.clone());
        let mut coeff = BigInt::from(1u8);
        for axis in 0..d {
            coeff *= BigInt::from(n_grid + 1) * big_binomial(n_grid, k.entry(axis));
        }
        out.push(BigRational::from_integer(coeff) * m.difference(&n.minus(&k), &k)?);
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            entries[axis] += 1;
            if entries[axis] <= n_grid {
                break;
            }
            entries[axis] = 0;
        }
    }
}

/// Density estimate from a stored moment sequence, sampled on the lattice
/// `{k / n_grid}` of the unit cube. Each channel is reconstructed
/// independently; the returned grid carries the lattice nodes with
/// composite-trapezoid weights.
pub fn invert_moments(m: &MomentSequence, n_grid: usize) -> Result<(ParameterGrid, EnsembleProfile)> {
    let d = m.param_dim();
    if n_grid == 0 {
        return Err(Error::InvalidArgument("lattice size must be >= 1".into()));
    }
    if m.max_order() < n_grid * d {
        return Err(Error::OrderOverflow {
            needed: n_grid * d,
            max_order: m.max_order(),
        });
    }
    let mut per_channel = Vec::with_capacity(m.state_dim());
    for ch in 0..m.state_dim() {
        let rational = RationalMoments::from_moment_sequence(&m.component(ch)?)?;
        let values = invert_moments_exact(&rational, n_grid)?;
        per_channel.push(
            values
                .iter()
                .map(|v| v.to_f64().unwrap_or(f64::NAN))
                .collect::<Vec<f64>>(),
        );
    }

    // Lattice grid: endpoints included, trapezoid weights summing to 1 per axis.
    let h = 1.0 / n_grid as f64;
    let axis_nodes: Vec<f64> = (0..=n_grid).map(|i| i as f64 * h).collect();
    let mut axis_weights = vec![h; n_grid + 1];
    axis_weights[0] = 0.5 * h;
    axis_weights[n_grid] = 0.5 * h;
    let grid = ParameterGrid::tensor(
        vec![(0.0, 1.0); d],
        vec![(axis_nodes, axis_weights); d],
    );

    let points = grid.len();
    let mut states = Vec::with_capacity(points * m.state_dim());
    for p in 0..points {
        for channel in per_channel.iter() {
            states.push(channel[p]);
        }
    }
    let profile = EnsembleProfile::from_raw(m.state_dim(), states, 0.0)?;
    Ok((grid, profile))
}
