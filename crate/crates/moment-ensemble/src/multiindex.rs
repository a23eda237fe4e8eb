//! Multi-indices `k = (k_1, ..., k_d)` and exact binomial coefficients.
//!
//! Moment sequences over a `d`-dimensional parameter box are indexed by
//! multi-indices of order `|k| = k_1 + ... + k_d`. Enumeration is always in
//! graded-lexicographic order (by order, then lexicographically), which fixes
//! a deterministic dense layout for every sequence up to a truncation order.

use std::cmp::Ordering;
use std::fmt;

/// A `d`-tuple of naturals indexing a moment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    /// Builds a multi-index from its entries. Must be non-empty.
    pub fn new(entries: Vec<usize>) -> Self {
        assert!(!entries.is_empty(), "multi-index must have dimension >= 1");
        Self { entries }
    }

    /// The zero index of dimension `d`.
    pub fn zeros(d: usize) -> Self {
        Self::new(vec![0; d])
    }

    /// Dimension `d`.
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    /// Order `|k| = k_1 + ... + k_d`.
    pub fn order(&self) -> usize {
        self.entries.iter().sum()
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn entry(&self, axis: usize) -> usize {
        self.entries[axis]
    }

    /// Componentwise sum `k + i`.
    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.dim(), other.dim());
        MultiIndex::new(
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// True when `self <= other` componentwise.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.dim() == other.dim()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a <= b)
    }

    /// Componentwise difference `self - other`; requires `other.le(self)`.
    pub fn minus(&self, other: &MultiIndex) -> MultiIndex {
        assert!(other.le(self), "multi-index subtraction would underflow");
        MultiIndex::new(
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.entries.cmp(&other.entries))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// All multi-indices of dimension `d` with order at most `max_order`, in
/// graded-lexicographic order. The count is `C(max_order + d, d)`.
pub fn enumerate_multiindices(d: usize, max_order: usize) -> Vec<MultiIndex> {
    assert!(d >= 1, "multi-index dimension must be >= 1");
    let mut out = Vec::with_capacity(multiindex_count(d, max_order));
    let mut current = vec![0usize; d];
    for order in 0..=max_order {
        push_compositions(order, 0, &mut current, &mut out);
    }
    out
}

fn push_compositions(rest: usize, axis: usize, current: &mut [usize], out: &mut Vec<MultiIndex>) {
    if axis == current.len() - 1 {
        current[axis] = rest;
        out.push(MultiIndex::new(current.to_vec()));
        return;
    }
    for v in 0..=rest {
        current[axis] = v;
        push_compositions(rest - v, axis + 1, current, out);
    }
}

/// Number of multi-indices of dimension `d` with order at most `max_order`:
/// `C(max_order + d, d)`.
pub fn multiindex_count(d: usize, max_order: usize) -> usize {
    binomial_u128((max_order + d) as u32, d as u32) as usize
}

/// Number of multi-indices of dimension `d` with order exactly `order`:
/// `C(order + d - 1, d - 1)`.
pub fn multiindex_count_exact(d: usize, order: usize) -> usize {
    binomial_u128((order + d - 1) as u32, (d - 1) as u32) as usize
}

/// Position of `k` in the graded-lexicographic enumeration of its dimension.
pub fn graded_lex_rank(k: &MultiIndex) -> usize {
    let d = k.dim();
    let s = k.order();
    // Indices of order < s come first.
    let mut rank = if s == 0 {
        0
    } else {
        multiindex_count(d, s - 1)
    };
    // Lexicographic rank within the order-s block: count compositions that
    // precede k by fixing a shorter prefix with a smaller entry.
    let mut rest = s;
    for axis in 0..d.saturating_sub(1) {
        let parts_after = d - axis - 1;
        for v in 0..k.entry(axis) {
            rank += multiindex_count_exact(parts_after, rest - v);
        }
        rest -= k.entry(axis);
    }
    rank
}

/// Largest `n` for which `C(n, k)` is computed in exact integer arithmetic.
pub const MAX_BINOMIAL_N: u32 = 60;

/// Exact binomial coefficient `C(n, k)` for `n <= 60`; returns 0 when `k > n`.
pub fn binomial_u128(n: u32, k: u32) -> u128 {
    assert!(
        n <= MAX_BINOMIAL_N,
        "binomial coefficient requested beyond exact range (n = {n} > {MAX_BINOMIAL_N})"
    );
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        // Stays integral at every step: acc holds C(n - k + i, i) after i rounds.
        acc = acc * ((n as u128) - (k as u128) + i) / i;
    }
    acc
}

/// `C(n, k)` as a float, computed from the exact integer value.
pub fn binomial(n: u32, k: u32) -> f64 {
    binomial_u128(n, k) as f64
}

/// Product of per-axis binomials `prod_j C(n_j, k_j)` as an exact integer.
pub fn multi_binomial_u128(n: &MultiIndex, k: &MultiIndex) -> u128 {
    assert_eq!(n.dim(), k.dim());
    n.entries()
        .iter()
        .zip(k.entries())
        .map(|(&nj, &kj)| binomial_u128(nj as u32, kj as u32))
        .product()
}

/// Product of per-axis binomials as a float.
pub fn multi_binomial(n: &MultiIndex, k: &MultiIndex) -> f64 {
    multi_binomial_u128(n, k) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_1d_in_order() {
        let list = enumerate_multiindices(1, 2);
        let expect: Vec<MultiIndex> = [0, 1, 2].iter().map(|&k| MultiIndex::new(vec![k])).collect();
        assert_eq!(list, expect);
    }

    #[test]
    fn enumerates_2d_graded_lex() {
        let list = enumerate_multiindices(2, 1);
        let expect = vec![
            MultiIndex::new(vec![0, 0]),
            MultiIndex::new(vec![0, 1]),
            MultiIndex::new(vec![1, 0]),
        ];
        assert_eq!(list, expect);
        assert_eq!(list.len(), 3);
    }

    #[test]
    fn count_matches_direct_enumeration_oracle() {
        // Independent oracle: triple loop over all candidate tuples.
        let mut count = 0usize;
        for a in 0..=4usize {
            for b in 0..=4usize {
                for c in 0..=4usize {
                    if a + b + c <= 4 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 35);
        assert_eq!(enumerate_multiindices(3, 4).len(), 35);
        assert_eq!(multiindex_count(3, 4), 35);
    }

    #[test]
    fn enumeration_is_sorted_and_rank_consistent() {
        for (d, n) in [(1, 6), (2, 5), (3, 4)] {
            let list = enumerate_multiindices(d, n);
            for w in list.windows(2) {
                assert!(w[0] < w[1], "enumeration must be strictly increasing");
            }
            for (pos, k) in list.iter().enumerate() {
                assert_eq!(graded_lex_rank(k), pos, "rank mismatch for {k}");
            }
        }
    }

    #[test]
    fn binomials_match_pascal_triangle() {
        // Oracle: Pascal's rule, computed independently.
        let mut row: Vec<u128> = vec![1];
        for n in 0..=30u32 {
            for k in 0..=n {
                assert_eq!(binomial_u128(n, k), row[k as usize]);
            }
            let mut next = vec![1u128; (n + 2) as usize];
            for k in 1..=n as usize {
                next[k] = row[k - 1] + row[k];
            }
            row = next;
        }
    }

    #[test]
    fn binomial_rows_sum_to_powers_of_two() {
        for n in [0u32, 5, 17, 40, 60] {
            let sum: u128 = (0..=n).map(|k| binomial_u128(n, k)).sum();
            assert_eq!(sum, 1u128 << n);
        }
    }

    #[test]
    fn binomial_out_of_range_is_zero() {
        assert_eq!(binomial_u128(4, 5), 0);
        assert_eq!(binomial(3, 7), 0.0);
    }
}
