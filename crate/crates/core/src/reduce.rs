/// Pairwise (tree) summation. The association order depends only on the
/// slice length, so sums are reproducible and the rounding error grows with
/// `log n` instead of `n`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
