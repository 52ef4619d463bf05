//! Central finite-difference gradient checking.

use serde::Serialize;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

fn evaluate<F>(f: &F, params: &[(String, Tensor)]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| graph.param(t.clone())).collect();
    let out = f(&mut graph, &vars)?;
    Ok(graph.value(out).data().iter().sum())
}

/// Compares the reverse-mode gradient of the scalar built by `f` against
/// central differences with step [`FD_STEP`], element by element.
pub fn grad_check<F>(f: F, params: &[(String, Tensor)], tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_sampled(f, params, tolerance, usize::MAX)
}

/// [`grad_check`] restricted to at most `per_param` evenly spaced elements of
/// each parameter.
pub fn grad_check_sampled<F>(
    f: F,
    params: &[(String, Tensor)],
    tolerance: f64,
    per_param: usize,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| graph.param(t.clone())).collect();
    let out = f(&mut graph, &vars)?;
    graph.backward(out)?;
    let analytic: Vec<Tensor> = params
        .iter()
        .zip(&vars)
        .map(|((_, t), v)| {
            graph
                .grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let mut work: Vec<(String, Tensor)> = params.to_vec();
    let mut report = GradCheckReport {
        tolerance,
        params: Vec::with_capacity(params.len()),
    };
    for (p, (name, original)) in params.iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let stride = original.len().div_ceil(per_param.max(1)).max(1);
        let mut checked = 0;
        for i in (0..original.len()).step_by(stride) {
            checked += 1;
            let base = original.data()[i];
            work[p].1.data_mut()[i] = base + FD_STEP;
            let plus = evaluate(&f, &work)?;
            work[p].1.data_mut()[i] = base - FD_STEP;
            let minus = evaluate(&f, &work)?;
            work[p].1.data_mut()[i] = base;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[p].data()[i];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        report.params.push(ParamCheck {
            name: name.clone(),
            elements: checked,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    Ok(report)
}
