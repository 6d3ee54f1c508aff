use std::collections::HashMap;

use super::{Array, Graph, NodeId};
use crate::error::{Error, Result};

/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Compares the analytic gradient of a scalar function of one array against
/// central differences and returns the largest relative error.
///
/// `build` receives a fresh graph and the input node holding `point`, and
/// returns the scalar root.
pub fn grad_check<F>(build: F, point: &Array, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, NodeId) -> NodeId,
{
    let mut graph = Graph::new();
    let x = graph.input("x");
    let root = build(&mut graph, x);
    let inputs = HashMap::from([("x".to_string(), point.clone())]);
    check_inputs(&mut graph, root, &inputs, &["x"], step)
}

/// Central-difference check of `∂root/∂name` for every listed input of an
/// already-built graph. Returns the largest relative error over all
/// coordinates checked.
pub fn check_inputs(
    graph: &mut Graph,
    root: NodeId,
    inputs: &HashMap<String, Array>,
    names: &[&str],
    step: f64,
) -> Result<f64> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    graph.forward(root, inputs)?;
    let analytic = graph.backward(root)?;

    let mut worst = 0.0f64;
    let mut probe = inputs.clone();
    for &name in names {
        let grad = analytic
            .get(name)
            .ok_or_else(|| Error::MissingInput(name.to_string()))?;
        let base = inputs[name].clone();
        for j in 0..base.len() {
            let mut shifted = base.clone();
            shifted.data_mut()[j] = base.data()[j] + step;
            probe.insert(name.to_string(), shifted.clone());
            let up = graph.forward(root, &probe)?.item();
            shifted.data_mut()[j] = base.data()[j] - step;
            probe.insert(name.to_string(), shifted);
            let down = graph.forward(root, &probe)?.item();
            let numeric = (up - down) / (2.0 * step);
            let a = grad.data()[j];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of `{name}`[{j}]: analytic {a}, numeric {numeric}"
                )));
            }
            worst = worst.max(relative_error(a, numeric));
        }
        probe.insert(name.to_string(), base);
    }
    Ok(worst)
}
