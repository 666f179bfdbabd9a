//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the forward pass, so it is independent
//! of the backward rules it is used to check.

use super::params::{Gradients, ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;

/// Denominator floor for relative errors: gradients smaller than this are
/// compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(parameter name, flat offset, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Central difference `(f(p + h) − f(p − h)) / 2h` for each listed coordinate.
pub fn numeric_gradient(
    store: &ParamStore,
    coords: &[(ParamId, usize)],
    h: f64,
    f: impl Fn(&ParamStore) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut probe = store.clone();
    coords
        .iter()
        .map(|&(id, k)| {
            let orig = probe.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let up = f(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - h;
            let down = f(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Compare tape gradients of `build` against central differences on every
/// scalar parameter in `store`.
pub fn check_gradients<F>(store: &ParamStore, h: f64, build: F) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<Var>,
{
    let analytic: Gradients = {
        let mut tape = Tape::new(store);
        let loss = build(&mut tape)?;
        tape.backward(loss)?
    };
    let coords = store.coordinates();
    let numeric = numeric_gradient(store, &coords, h, |s| {
        let mut tape = Tape::new(s);
        let loss = build(&mut tape)?;
        Ok(tape.scalar(loss))
    })?;
    let mut report = GradCheckReport {
        checked: coords.len(),
        max_rel_err: 0.0,
        worst: None,
    };
    for (&(id, k), &n) in coords.iter().zip(&numeric) {
        let a = analytic.get(id).data()[k];
        let err = relative_error(a, n);
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            if err >= report.max_rel_err {
                report.worst = Some((store.name(id).to_string(), k, a, n));
            }
        }
    }
    Ok(report)
}
