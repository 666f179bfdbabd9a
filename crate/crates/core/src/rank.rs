//! Competition ranking (`1, 1, 3, …`): tied values share the lower rank.

/// Rank 1 is the smallest value.
pub fn ranks_ascending<T: PartialOrd>(values: &[T]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|&w| w < v).count())
        .collect()
}

/// Rank 1 is the largest value.
pub fn ranks_descending<T: PartialOrd>(values: &[T]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|&w| w > v).count())
        .collect()
}
