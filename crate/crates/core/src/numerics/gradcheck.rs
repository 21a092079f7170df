//! Central finite-difference checks against [`Graph::backward`].

use super::graph::{Graph, Var};
use super::params::{Bound, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Relative error with a floor so exactly-zero gradients compare sanely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

fn eval_scalar<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(Error::Contract(format!(
            "gradient check needs a scalar output, got {:?}",
            v.shape()
        )));
    }
    Ok(v.data()[0])
}

/// Compare the analytic gradient of the scalar `f(inputs)` with respect to
/// every element of every input against central differences with step `h`.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval_scalar(&work, &f)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval_scalar(&work, &f)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[j];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

/// Gradient check over every scalar of a [`ParamSet`].
pub fn check_params<F>(params: &ParamSet, h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &Bound) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let out = f(&mut g, &bound)?;
    let grads = g.backward(out)?;
    let mut with_grads = params.clone();
    with_grads.zero_grads();
    with_grads.accumulate(&bound, &grads);

    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let b = ps.bind_frozen(&mut g);
        let out = f(&mut g, &b)?;
        Ok(g.value(out).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    let mut work = params.clone();
    for i in 0..params.len() {
        let id = super::params::ParamId(i);
        let analytic = with_grads
            .get(id)
            .grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(params.get(id).value.shape()));
        for j in 0..params.get(id).value.len() {
            let orig = params.get(id).value.data()[j];
            work.get_mut(id).value.data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(id).value.data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(id).value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[j];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}
