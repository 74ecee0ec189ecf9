use super::params::{ParamId, ParamStore};
use super::tape::{NodeRef, Tape};
use crate::error::{GeniError, Result};

/// Outcome of [`finite_diff_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst relative error per parameter tensor, in store order.
    pub per_param: Vec<(String, f64)>,
}

/// Compares reverse-mode gradients of the scalar built by `build` against
/// central differences `(f(θ+ε) − f(θ−ε)) / 2ε`, one coordinate at a time.
///
/// The relative error of a coordinate is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(params: &ParamStore, eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<NodeRef>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(GeniError::invalid(format!(
            "finite-difference step must lie in [1e-7, 1e-3], got {eps}"
        )));
    }
    let eval = |p: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = build(p, &mut tape)?;
        let v = tape.value(out);
        if !v.is_scalar() {
            return Err(GeniError::Shape("checked function must be scalar".into()));
        }
        let v = v.item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GeniError::NonFinite(format!("checked function returned {v}")))
        }
    };

    let mut tape = Tape::new();
    let out = build(params, &mut tape)?;
    let analytic = tape.backward(out, params)?;

    let mut work = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    let mut max_rel_error = 0.0f64;
    for id in params.ids() {
        let mut worst = 0.0f64;
        for k in 0..params.get(id).len() {
            let numeric = central_difference(&mut work, id, k, eps, &eval)?;
            let a = analytic.get(id).data()[k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
        max_rel_error = max_rel_error.max(worst);
        per_param.push((params.name(id).to_owned(), worst));
    }
    Ok(GradCheckReport {
        max_rel_error,
        per_param,
    })
}

fn central_difference(
    work: &mut ParamStore,
    id: ParamId,
    k: usize,
    eps: f64,
    eval: &impl Fn(&ParamStore) -> Result<f64>,
) -> Result<f64> {
    let orig = work.get(id).data()[k];
    work.get_mut(id).data_mut()[k] = orig + eps;
    let plus = eval(work);
    work.get_mut(id).data_mut()[k] = orig - eps;
    let minus = eval(work);
    work.get_mut(id).data_mut()[k] = orig;
    Ok((plus? - minus?) / (2.0 * eps))
}
