use rayon::prelude::*;

use super::params::{Gradients, ParamStore};
use crate::error::Result;

/// Sum of per-item `(loss, gradients)` computed in parallel. Results are
/// reduced in item order, so the total is independent of the worker count.
pub fn accumulate_parallel<T, F>(store: &ParamStore, items: &[T], f: F) -> Result<(f64, Gradients)>
where
    T: Sync,
    F: Fn(&T) -> Result<(f64, Gradients)> + Sync,
{
    let parts: Vec<(f64, Gradients)> = items.par_iter().map(&f).collect::<Result<_>>()?;
    let mut total = Gradients::zeros_like(store);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.accumulate(g);
    }
    Ok((loss, total))
}
