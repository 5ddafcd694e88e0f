//! Central finite-difference validation of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::{NumericsError, Tensor};

/// Gradients smaller than this are compared on an absolute scale, so that
/// coordinates with a (near) zero derivative do not report a huge relative
/// error from round-off alone.
pub const GRAD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<(ParamId, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn scalar_of(g: &Graph, v: Var) -> Result<f64, NumericsError> {
    let t = g.value(v);
    if t.len() != 1 {
        return Err(NumericsError::NonScalarOutput(t.shape().to_vec()));
    }
    let x = t.item();
    if !x.is_finite() {
        return Err(NumericsError::NonFiniteValue("objective"));
    }
    Ok(x)
}

/// Compares analytic parameter gradients of `f` against central differences.
///
/// `coords` restricts the check to a subset of `(parameter, element)` pairs;
/// `None` checks every element of every parameter.
pub fn grad_check<F, E>(
    store: &ParamStore,
    coords: Option<&[(ParamId, usize)]>,
    step: f64,
    f: F,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Graph) -> Result<Var, E>,
    E: From<NumericsError>,
{
    let mut graph = Graph::with_params(store);
    let out = f(&mut graph)?;
    scalar_of(&graph, out)?;
    graph.backward(out)?;
    let all: Vec<(ParamId, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = store
                .iter()
                .flat_map(|(id, _, t)| (0..t.len()).map(move |i| (id, i)))
                .collect();
            &all
        }
    };
    let analytic: Vec<f64> = coords
        .iter()
        .map(|&(id, i)| graph.param_grad(id).map_or(0.0, |g| g[i]))
        .collect();
    drop(graph);

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    let eval = |probe: &ParamStore| -> Result<f64, E> {
        let mut g = Graph::with_params(probe);
        let out = f(&mut g)?;
        Ok(scalar_of(&g, out)?)
    };
    for (&(id, i), &a) in coords.iter().zip(&analytic) {
        let original = store.get(id).data()[i];
        probe.get_mut(id).data_mut()[i] = original + step;
        let plus = eval(&probe)?;
        probe.get_mut(id).data_mut()[i] = original - step;
        let minus = eval(&probe)?;
        probe.get_mut(id).data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(a, numeric);
        if !err.is_finite() {
            return Err(NumericsError::NonFiniteValue("gradient").into());
        }
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err;
            report.worst = Some((id, i));
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Gradient check with respect to free input tensors.
pub fn grad_check_inputs<F>(
    inputs: &[Tensor],
    step: f64,
    f: F,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, NumericsError>,
{
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.insert(format!("input{i}"), t.clone()))
        .collect();
    grad_check(&store, None, step, |g| {
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        f(g, &vars)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_closed_form() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let mut store = ParamStore::new();
        let id = store.insert("x", x);
        let mut g = Graph::with_params(&store);
        let xv = g.param(id);
        let sq = g.square(xv);
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.param_grad(id).unwrap(), &[2.0, 4.0]);

        let report = grad_check_inputs(&[store.get(id).clone()], 1e-5, |g, v| {
            let sq = g.square(v[0]);
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn linear_function_is_exact() {
        let a = Tensor::new(&[3], vec![0.5, -1.5, 2.0]).unwrap();
        let w = Tensor::new(&[3], vec![3.0, 0.25, -2.0]).unwrap();
        let report = grad_check_inputs(&[a], 1e-3, |g, v| {
            let wv = g.constant(w.clone());
            let p = g.mul(v[0], wv)?;
            Ok(g.sum(p))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-12, "{report:?}");
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let a = Tensor::new(&[1], vec![f64::NAN]).unwrap();
        let r = grad_check_inputs(&[a], 1e-5, |g, v| Ok(g.sum(v[0])));
        assert!(matches!(r, Err(NumericsError::NonFiniteValue(_))));
    }
}
