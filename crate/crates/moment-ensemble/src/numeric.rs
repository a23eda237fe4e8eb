//! Small numeric helpers shared across modules.

/// Pairwise (cascade) summation. Used for every reduction over grid nodes so
/// results are independent of evaluation chunking and reproducible run to run.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise reduction of vector-valued contributions. `add_item(p, acc)` adds
/// item `p`'s contribution into `acc` (length `width`); contributions are
/// combined in a fixed binary tree over `0..n_items`.
pub fn pairwise_accumulate<F>(n_items: usize, width: usize, add_item: &F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]),
{
    fn go<F: Fn(usize, &mut [f64])>(lo: usize, hi: usize, width: usize, add_item: &F) -> Vec<f64> {
        let mut acc = vec![0.0; width];
        if hi - lo <= 32 {
            for p in lo..hi {
                add_item(p, &mut acc);
            }
        } else {
            let mid = lo + (hi - lo) / 2;
            acc = go(lo, mid, width, add_item);
            let right = go(mid, hi, width, add_item);
            for (a, r) in acc.iter_mut().zip(&right) {
                *a += r;
            }
        }
        acc
    }
    go(0, n_items, width, add_item)
}

/// Euclidean norm of a slice.
pub fn euclidean_norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}
