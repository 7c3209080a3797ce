//! Central finite-difference gradient checker.
//!
//! Every analytic backward pass in this project is validated against this
//! checker on small shapes before it is trusted at scale.

use crate::error::{Error, Result};
use crate::num::params::ParamStore;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub passed: bool,
    pub checked: usize,
}

/// Compares the analytic gradients produced by `f` against central finite
/// differences over every parameter entry in `params`.
///
/// `f` must evaluate the loss at the store's current values and leave the
/// analytic gradient of every parameter in the store's gradient buffers
/// (overwriting, not accumulating on top of stale values). The relative
/// error per entry is |a - n| / (|a| + |n| + 1e-8).
pub fn grad_check<F>(
    f: &mut F,
    params: &mut ParamStore,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    assert!(
        (1e-6..=1e-3).contains(&eps),
        "eps {eps} outside supported range"
    );
    params.zero_grad();
    let loss = f(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "grad_check loss",
        });
    }
    let n = params.flat_len();
    let analytic: Vec<f64> = (0..n).map(|i| params.flat_grad(i)).collect();

    let mut max_rel_err = 0.0;
    let mut worst = 0usize;
    for i in 0..n {
        let orig = params.flat_get(i);
        params.flat_set(i, orig + eps);
        params.zero_grad();
        let up = f(params)?;
        params.flat_set(i, orig - eps);
        params.zero_grad();
        let down = f(params)?;
        params.flat_set(i, orig);
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                context: "grad_check perturbed loss",
            });
        }
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + 1e-8);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst = i;
        }
    }
    let (worst_name, worst_index) = params.locate(worst);
    Ok(GradCheckReport {
        max_rel_err,
        worst_param: worst_name.to_string(),
        worst_index,
        passed: max_rel_err <= tol,
        checked: n,
    })
}
