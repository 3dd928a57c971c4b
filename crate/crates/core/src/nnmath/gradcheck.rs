//! Central finite-difference oracle for tape gradients.

use super::graph::{Graph, NodeId};
use super::tensor::{Gradients, ParamStore};

/// Denominator floor so that near-zero gradients are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(parameter, flat index, analytic, numeric)` at the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares backward-pass gradients of `loss` against `(L(p+h) - L(p-h)) / 2h`
/// for every parameter entry (or every `stride`-th entry when `max_per_param`
/// caps the count).
pub fn gradient_check<L>(store: &ParamStore<f64>, loss: L, h: f64, max_per_param: Option<usize>) -> GradCheckReport
where
    L: for<'a> Fn(&mut Graph<'a, f64>) -> NodeId,
{
    let mut analytic = Gradients::zeros_like(store);
    {
        let mut g = Graph::new(store);
        let l = loss(&mut g);
        g.backward(l, &mut analytic).expect("scalar loss");
    }
    let eval = |s: &ParamStore<f64>| {
        let mut g = Graph::new(s);
        let l = loss(&mut g);
        g.scalar(l)
    };
    let mut work = store.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).values.len();
        let stride = match max_per_param {
            Some(cap) if cap > 0 && n > cap => n.div_ceil(cap),
            _ => 1,
        };
        for k in (0..n).step_by(stride) {
            let orig = work.get(id).values[k];
            work.get_mut(id).values[k] = orig + h;
            let up = eval(&work);
            work.get_mut(id).values[k] = orig - h;
            let down = eval(&work);
            work.get_mut(id).values[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.values[id.index()][k];
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((store.name(id).to_string(), k, a, numeric));
                }
            }
        }
    }
    report
}
