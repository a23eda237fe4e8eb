//! Truncated moment sequences and the Hausdorff moment machinery.
//!
//! A [`MomentSequence`] stores values `m[k][i]` densely for every multi-index
//! `k` with `|k| <= max_order` and every value channel `i`. Two usages share
//! the type:
//!
//! * ensemble moments `m_k = integral beta^k x_i(beta) d beta` — the index
//!   runs over the parameter (`param_dim = d`), one channel per state
//!   component;
//! * output moments `m_k = integral x^k(beta) d beta` — the index runs over
//!   state components (`param_dim = n`) with a single scalar channel.
//!
//! Indices beyond the truncation order are an error, never an implicit zero:
//! zero-padding silently corrupts the difference operators below.

use crate::ensemble::EnsembleProfile;
use crate::error::Error;
use crate::grid::ParameterGrid;
use crate::multiindex::{
    binomial, enumerate_multiindices, graded_lex_rank, multi_binomial, multiindex_count,
    MultiIndex,
};
use crate::numeric::pairwise_accumulate;
use crate::Result;

/// Dense truncated moment array indexed by (multi-index, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSequence {
    param_dim: usize,
    state_dim: usize,
    max_order: usize,
    /// Graded-lex rank major, channel minor; `len = count(d, N) * state_dim`.
    values: Vec<f64>,
}

impl MomentSequence {
    pub fn zeros(param_dim: usize, state_dim: usize, max_order: usize) -> Self {
        assert!(param_dim >= 1 && state_dim >= 1);
        let len = multiindex_count(param_dim, max_order) * state_dim;
        Self {
            param_dim,
            state_dim,
            max_order,
            values: vec![0.0; len],
        }
    }

    /// Fills a sequence by evaluating `f(k, channel)`.
    pub fn from_fn<F: FnMut(&MultiIndex, usize) -> f64>(
        param_dim: usize,
        state_dim: usize,
        max_order: usize,
        mut f: F,
    ) -> Self {
        let mut seq = Self::zeros(param_dim, state_dim, max_order);
        for k in enumerate_multiindices(param_dim, max_order) {
            for i in 0..state_dim {
                let v = f(&k, i);
                seq.set(&k, i, v);
            }
        }
        seq
    }

    pub fn from_values(
        param_dim: usize,
        state_dim: usize,
        max_order: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expect = multiindex_count(param_dim, max_order) * state_dim;
        if values.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "moment storage has {} entries, expected {expect}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("moment sequence".into()));
        }
        Ok(Self {
            param_dim,
            state_dim,
            max_order,
            values,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn flat(&self, k: &MultiIndex, channel: usize) -> Option<usize> {
        if k.dim() != self.param_dim || channel >= self.state_dim || k.order() > self.max_order {
            return None;
        }
        Some(graded_lex_rank(k) * self.state_dim + channel)
    }

    /// The moment at `(k, channel)`; `None` past the truncation order.
    pub fn get(&self, k: &MultiIndex, channel: usize) -> Option<f64> {
        self.flat(k, channel).map(|i| self.values[i])
    }

    /// Like [`Self::get`] but with the truncation violation as an error.
    pub fn try_get(&self, k: &MultiIndex, channel: usize) -> Result<f64> {
        self.get(k, channel).ok_or(Error::OrderOverflow {
            needed: k.order(),
            max_order: self.max_order,
        })
    }

    pub fn set(&mut self, k: &MultiIndex, channel: usize, value: f64) {
        let i = self
            .flat(k, channel)
            .expect("moment index outside sequence shape");
        self.values[i] = value;
    }

    /// Convenience accessor for one-dimensional indices.
    pub fn get1(&self, order: usize, channel: usize) -> Option<f64> {
        self.get(&MultiIndex::new(vec![order]), channel)
    }

    /// Extracts a single channel as a scalar sequence.
    pub fn component(&self, channel: usize) -> Result<MomentSequence> {
        if channel >= self.state_dim {
            return Err(Error::DimensionMismatch(format!(
                "channel {channel} out of range ({} channels)",
                self.state_dim
            )));
        }
        let values = self
            .values
            .chunks(self.state_dim)
            .map(|row| row[channel])
            .collect();
        MomentSequence::from_values(self.param_dim, 1, self.max_order, values)
    }

    /// Truncates to a lower max order (dropping higher-order entries).
    pub fn truncated(&self, max_order: usize) -> Result<MomentSequence> {
        if max_order > self.max_order {
            return Err(Error::OrderOverflow {
                needed: max_order,
                max_order: self.max_order,
            });
        }
        let keep = multiindex_count(self.param_dim, max_order) * self.state_dim;
        MomentSequence::from_values(
            self.param_dim,
            self.state_dim,
            max_order,
            self.values[..keep].to_vec(),
        )
    }

    fn same_shape(&self, other: &MomentSequence) -> Result<()> {
        if self.param_dim != other.param_dim
            || self.state_dim != other.state_dim
            || self.max_order != other.max_order
        {
            return Err(Error::DimensionMismatch(
                "moment sequences do not share shape".into(),
            ));
        }
        Ok(())
    }
}

fn monomial(beta: &[f64], k: &MultiIndex) -> f64 {
    beta.iter()
        .zip(k.entries())
        .map(|(&b, &e)| b.powi(e as i32))
        .product()
}

/// Ensemble moments of a profile: `m[k][i] = sum_p w_p beta_p^k x_i(beta_p)`,
/// the quadrature approximation of `integral beta^k x_i(beta) d beta`.
pub fn compute_ensemble_moments(
    profile: &EnsembleProfile,
    grid: &ParameterGrid,
    max_order: usize,
) -> Result<MomentSequence> {
    if profile.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} nodes, grid has {}",
            profile.len(),
            grid.len()
        )));
    }
    moments_of_states(profile.states(), profile.state_dim(), grid, max_order)
}

/// Ensemble moments of raw node-major state storage (no shape re-checks;
/// used by the integrators on stage buffers).
pub(crate) fn moments_of_states(
    states: &[f64],
    state_dim: usize,
    grid: &ParameterGrid,
    max_order: usize,
) -> Result<MomentSequence> {
    let d = grid.dim();
    let n = state_dim;
    let indices = enumerate_multiindices(d, max_order);
    let width = indices.len() * n;
    let values = pairwise_accumulate(grid.len(), width, &|p, acc: &mut [f64]| {
        let beta = grid.node(p);
        let x = &states[p * n..(p + 1) * n];
        let w = grid.weight(p);
        if d == 1 {
            // Incremental powers on the dominant one-dimensional path.
            let mut pw = 1.0;
            for rank in 0..indices.len() {
                let w_pw = w * pw;
                for i in 0..n {
                    acc[rank * n + i] += w_pw * x[i];
                }
                pw *= beta[0];
            }
        } else {
            for (rank, k) in indices.iter().enumerate() {
                let w_pw = w * monomial(beta, k);
                for i in 0..n {
                    acc[rank * n + i] += w_pw * x[i];
                }
            }
        }
    });
    MomentSequence::from_values(d, n, max_order, values)
}

/// Output moments of a profile: `m[k] = sum_p w_p prod_i x_i(beta_p)^{k_i}`,
/// the quadrature approximation of `integral x^k(beta) d beta`. The index
/// runs over state components and the result is scalar per index.
pub fn compute_output_moments(
    profile: &EnsembleProfile,
    grid: &ParameterGrid,
    max_order: usize,
) -> Result<MomentSequence> {
    if profile.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} nodes, grid has {}",
            profile.len(),
            grid.len()
        )));
    }
    let n = profile.state_dim();
    let indices = enumerate_multiindices(n, max_order);
    let values = pairwise_accumulate(grid.len(), indices.len(), &|p, acc: &mut [f64]| {
        let x = profile.node_state(p);
        let w = grid.weight(p);
        for (rank, k) in indices.iter().enumerate() {
            acc[rank] += w * monomial(x, k);
        }
    });
    MomentSequence::from_values(n, 1, max_order, values)
}

/// Iterated tensor-product difference
/// `Delta^n m_k = sum_{i <= n} (-1)^{|i|} C(n, i) m_{k + i}`
/// applied per axis. Requires a scalar sequence and `|k| + |n| <= max_order`.
pub fn difference_operator(m: &MomentSequence, n: &MultiIndex, k: &MultiIndex) -> Result<f64> {
    if m.state_dim() != 1 {
        return Err(Error::DimensionMismatch(
            "difference operator applies to scalar sequences; select a component first".into(),
        ));
    }
    if n.dim() != m.param_dim() || k.dim() != m.param_dim() {
        return Err(Error::DimensionMismatch(
            "index dimension does not match sequence".into(),
        ));
    }
    if k.order() + n.order() > m.max_order() {
        return Err(Error::OrderOverflow {
            needed: k.order() + n.order(),
            max_order: m.max_order(),
        });
    }
    let d = m.param_dim();
    let mut offset = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let i = MultiIndex::new(offset.clone());
        let sign = if i.order() % 2 == 0 { 1.0 } else { -1.0 };
        let coeff = multi_binomial(n, &i);
        let idx = k.plus(&i);
        total += sign * coeff * m.try_get(&idx, 0)?;
        // Odometer over the box 0..=n per axis.
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

/// Which Hausdorff solvability condition a report evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HausdorffKind {
    /// Absolute-sum condition for representation by a signed measure:
    /// `sum_k |C(n,k) Delta^{n-k} m_k| <= C`.
    SignedMeasureL1,
    /// Square-sum condition for representation by an `L^2` density:
    /// `(n+1) sum_k [C(n,k) Delta^{n-k} m_k]^2 <= C`.
    DensityL2,
}

/// Evaluation of a Hausdorff condition over all tested `n`.
#[derive(Debug, Clone)]
pub struct HausdorffReport {
    pub kind: HausdorffKind,
    /// Running maximum over tested `n` — the empirical constant `C`.
    pub max_value: f64,
    pub per_n: Vec<(MultiIndex, f64)>,
}

fn hausdorff_check(
    m: &MomentSequence,
    up_to: usize,
    kind: HausdorffKind,
) -> Result<HausdorffReport> {
    if m.state_dim() != 1 {
        return Err(Error::DimensionMismatch(
            "Hausdorff checks apply to scalar sequences; select a component first".into(),
        ));
    }
    let d = m.param_dim();
    if up_to * d > m.max_order() {
        return Err(Error::OrderOverflow {
            needed: up_to * d,
            max_order: m.max_order(),
        });
    }
    let mut per_n = Vec::new();
    let mut max_value: f64 = 0.0;
    // All n with every component <= up_to.
    let mut n_entries = vec![0usize; d];
    loop {
        let n = MultiIndex::new(n_entries.clone());
        let mut value = 0.0;
        // All k <= n componentwise.
        let mut k_entries = vec![0usize; d];
        loop {
            let k = MultiIndex::new(k_entries.clone());
            let coeff = multi_binomial(&n, &k);
            let delta = difference_operator(m, &n.minus(&k), &k)?;
            let term = coeff * delta;
            match kind {
                HausdorffKind::SignedMeasureL1 => value += term.abs(),
                HausdorffKind::DensityL2 => value += term * term,
            }
            if !advance_box(&mut k_entries, n.entries()) {
                break;
            }
        }
        if kind == HausdorffKind::DensityL2 {
            let n_plus_1: f64 = n.entries().iter().map(|&nj| (nj + 1) as f64).product();
            value *= n_plus_1;
        }
        max_value = max_value.max(value);
        per_n.push((n, value));
        if !advance_box(&mut n_entries, &vec![up_to; d]) {
            break;
        }
    }
    Ok(HausdorffReport {
        kind,
        max_value,
        per_n,
    })
}

fn advance_box(entries: &mut [usize], limits: &[usize]) -> bool {
    for axis in (0..entries.len()).rev() {
        entries[axis] += 1;
        if entries[axis] <= limits[axis] {
            return true;
        }
        entries[axis] = 0;
    }
    false
}

/// Hausdorff `L^2`-density condition over all `n` with components `<= up_to`.
pub fn check_hausdorff_l2(m: &MomentSequence, up_to: usize) -> Result<HausdorffReport> {
    hausdorff_check(m, up_to, HausdorffKind::DensityL2)
}

/// Hausdorff signed-measure condition over the same range of `n`.
pub fn check_hausdorff_l1(m: &MomentSequence, up_to: usize) -> Result<HausdorffReport> {
    hausdorff_check(m, up_to, HausdorffKind::SignedMeasureL1)
}

/// Rescales moments of a measure on the unit interval along `axis` to the
/// moments of its pushforward on `[a, b]`:
/// `m_k = sum_i C(k, i) a^{k-i} (b-a)^i m'_i`.
pub fn rescale_moments_axis(
    m_unit: &MomentSequence,
    axis: usize,
    a: f64,
    b: f64,
) -> Result<MomentSequence> {
    if axis >= m_unit.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "axis {axis} out of range for dimension {}",
            m_unit.param_dim()
        )));
    }
    if !(b > a) {
        return Err(Error::InvalidArgument(format!(
            "b must exceed a, got [{a}, {b}]"
        )));
    }
    let mut out = MomentSequence::zeros(m_unit.param_dim(), m_unit.state_dim(), m_unit.max_order());
    for k in enumerate_multiindices(m_unit.param_dim(), m_unit.max_order()) {
        let ka = k.entry(axis);
        for ch in 0..m_unit.state_dim() {
            let mut acc = 0.0;
            let mut src = k.entries().to_vec();
            for i in 0..=ka {
                src[axis] = i;
                let coeff = binomial(ka as u32, i as u32)
                    * a.powi((ka - i) as i32)
                    * (b - a).powi(i as i32);
                acc += coeff * m_unit.try_get(&MultiIndex::new(src.clone()), ch)?;
            }
            out.set(&k, ch, acc);
        }
    }
    Ok(out)
}

/// One-dimensional rescaling of unit-interval moments onto `[a, b]`.
pub fn rescale_moments(m_unit: &MomentSequence, a: f64, b: f64) -> Result<MomentSequence> {
    if m_unit.param_dim() != 1 {
        return Err(Error::DimensionMismatch(
            "rescale_moments expects a one-dimensional index; use rescale_moments_box".into(),
        ));
    }
    rescale_moments_axis(m_unit, 0, a, b)
}

/// Axis-wise rescaling of unit-cube moments onto a general box.
pub fn rescale_moments_box(m_unit: &MomentSequence, bounds: &[(f64, f64)]) -> Result<MomentSequence> {
    if bounds.len() != m_unit.param_dim() {
        return Err(Error::DimensionMismatch(
            "one bound pair per axis required".into(),
        ));
    }
    let mut current = m_unit.clone();
    for (axis, &(a, b)) in bounds.iter().enumerate() {
        current = rescale_moments_axis(&current, axis, a, b)?;
    }
    Ok(current)
}

/// Signed real root `sign(v) |v|^{1/r}` used by the radical metric.
fn signed_root(v: f64, r: usize) -> f64 {
    v.signum() * v.abs().powf(1.0 / r as f64)
}

/// Radical distance `sup_k |m_k^{1/|k|} - n_k^{1/|k|}|` over `1 <= |k| <= N`.
/// The order-zero term is excluded (its root is undefined) and negative
/// moments use the signed real-root convention.
pub fn radical_distance(m: &MomentSequence, n: &MomentSequence) -> Result<f64> {
    m.same_shape(n)?;
    if m.state_dim() != 1 {
        return Err(Error::DimensionMismatch(
            "radical distance applies to scalar sequences".into(),
        ));
    }
    let mut sup: f64 = 0.0;
    for k in enumerate_multiindices(m.param_dim(), m.max_order()) {
        let r = k.order();
        if r == 0 {
            continue;
        }
        let a = signed_root(m.try_get(&k, 0)?, r);
        let b = signed_root(n.try_get(&k, 0)?, r);
        sup = sup.max((a - b).abs());
    }
    Ok(sup)
}
