use super::{Graph, KernelError, NodeId, Tensor};

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(input index, coordinate)` where the worst error occurred.
    pub worst_at: Option<(usize, usize)>,
    pub coordinates_checked: usize,
}

/// Compares the analytic gradient of a graph against central differences.
///
/// `build` records the computation on a fresh graph given leaf handles for
/// `inputs`, returning the output node. Non-scalar outputs are reduced with an
/// MSE head against a fixed target so every output element contributes.
/// Relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check<B>(build: B, inputs: &[Tensor<f64>], epsilon: f64) -> Result<GradCheckReport, KernelError>
where
    B: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId, KernelError>,
{
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(KernelError::InvalidEpsilon { epsilon });
    }

    let eval = |values: &[Tensor<f64>], with_grad: bool| -> Result<(f64, Vec<Option<Vec<f64>>>), KernelError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &ids)?;
        let root = if g.value(out).len() == 1 {
            out
        } else {
            let shape = g.value(out).shape().to_vec();
            let n = g.value(out).len();
            let target = Tensor::new(&shape, (0..n).map(|i| 0.5 * (0.7 * i as f64).sin()).collect())?;
            let t = g.leaf(target);
            g.mse_loss(out, t)?
        };
        let f = g.value(root).data()[0];
        if !f.is_finite() {
            return Err(KernelError::NonFinite { what: "probe output" });
        }
        let mut grads = Vec::new();
        if with_grad {
            g.backward(root)?;
            for &id in &ids {
                grads.push(g.grad(id).map(|s| s.to_vec()));
            }
        }
        Ok((f, grads))
    };

    let (_, analytic) = eval(inputs, true)?;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_at: None,
        coordinates_checked: 0,
    };
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..inputs[i].len() {
            let base = inputs[i].data()[j];
            work[i].data_mut()[j] = base + epsilon;
            let (fp, _) = eval(&work, false)?;
            work[i].data_mut()[j] = base - epsilon;
            let (fm, _) = eval(&work, false)?;
            work[i].data_mut()[j] = base;

            let numeric = (fp - fm) / (2.0 * epsilon);
            let a = grad.as_ref().map_or(0.0, |g| g[j]);
            if !a.is_finite() || !numeric.is_finite() {
                return Err(KernelError::NonFinite { what: "gradient" });
            }
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates_checked += 1;
            if err > report.max_relative_error || report.worst_at.is_none() {
                report.max_relative_error = err;
                report.worst_at = Some((i, j));
            }
        }
    }
    Ok(report)
}
