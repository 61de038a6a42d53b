//! The unnormalized dependence statistic as a training penalty, with its
//! gradient with respect to the predictions derived by hand through the
//! kernel, centering and regularized-inverse steps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{center_matrix, gram, median_heuristic, KernelConfig};
use crate::operators::{proxy_from_centered, trace_product, Notion, RegularizedSystem};
use crate::score::is_constant;

/// Kernels for the variables that stay fixed during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerKernels {
    /// `None` re-estimates the prediction bandwidth on every batch; it is
    /// treated as a constant when differentiating either way.
    pub prediction: Option<KernelConfig>,
    pub sensitive: KernelConfig,
    pub target: Option<KernelConfig>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerValue {
    pub value: f64,
    /// `∂value/∂predictions`, same shape as the predictions. Empty when only
    /// the value was requested.
    pub gradient: DMatrix<f64>,
}

struct ProxyNode {
    system: RegularizedSystem,
    r: DMatrix<f64>,
}

fn node(raw: &DMatrix<f64>, epsilon: f64) -> Result<ProxyNode> {
    let (p, system) = proxy_from_centered(&center_matrix(raw), epsilon)?;
    Ok(ProxyNode { system, r: p.r })
}

/// Adjoint of the raw Gram matrix given the adjoint of its proxy:
/// `H · εN M⁻¹ adj M⁻¹ · H` with `M = Ḡ + εN·I`.
fn proxy_backward(node: &ProxyNode, adj_r: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let n = adj_r.nrows();
    let left = node.system.solve(adj_r);
    let both = node.system.solve(&left.transpose()).transpose();
    center_matrix(&(both * (epsilon * n as f64)))
}

/// Gradient of `Σ adj_ij G_ij` with respect to the rows of `x`, where
/// `G` is the Gaussian Gram of `x`.
fn gram_backward(
    x: &DMatrix<f64>,
    g: &DMatrix<f64>,
    adj: &DMatrix<f64>,
    sigma: f64,
) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let s2 = sigma * sigma;
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = (adj[(i, j)] + adj[(j, i)]) * g[(i, j)] / s2;
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                out[(i, k)] -= w * (x[(i, k)] - x[(j, k)]);
            }
        }
    }
    out
}

fn identity_minus(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::identity(m.nrows(), m.ncols()) - m
}

/// Value of the statistic for `notion` on a batch, and its gradient with
/// respect to `predictions` when `with_gradient` is set.
pub fn regularizer(
    notion: Notion,
    predictions: &DMatrix<f64>,
    sensitive: &DMatrix<f64>,
    target: Option<&DMatrix<f64>>,
    kernels: &RegularizerKernels,
    with_gradient: bool,
) -> Result<RegularizerValue> {
    let n = predictions.nrows();
    if sensitive.nrows() != n || target.is_some_and(|t| t.nrows() != n) {
        return Err(Error::Dimension(
            "regularizer inputs differ in length".into(),
        ));
    }
    let zero = || RegularizerValue {
        value: 0.0,
        gradient: DMatrix::zeros(if with_gradient { n } else { 0 }, predictions.ncols()),
    };
    let tested_constant = match notion {
        Notion::Cal => target.is_some_and(is_constant),
        _ => is_constant(predictions),
    };
    if n < 2 || is_constant(sensitive) || tested_constant {
        return Ok(zero());
    }
    let eps = kernels.epsilon;
    let k_pred = match kernels.prediction {
        Some(k) => k,
        None => median_heuristic(predictions)?.kernel(),
    };
    let g_pred = gram(predictions, &k_pred).entries;
    let g_sens = gram(sensitive, &kernels.sensitive).entries;
    let target_gram = || -> Result<DMatrix<f64>> {
        let y = target
            .ok_or_else(|| Error::InvalidArgument(format!("notion {notion} needs the target")))?;
        let k = kernels
            .target
            .ok_or_else(|| Error::InvalidArgument("missing target kernel".into()))?;
        Ok(gram(y, &k).entries)
    };

    let (value, adj_g_pred) = match notion {
        Notion::Dp => {
            let pred = node(&g_pred, eps)?;
            let sens = node(&g_sens, eps)?;
            let value = trace_product(&pred.r, &sens.r);
            let adj = with_gradient.then(|| proxy_backward(&pred, &sens.r.transpose(), eps));
            (value, adj)
        }
        Notion::Eo => {
            let g_y = target_gram()?;
            let pred = node(&g_pred, eps)?;
            let ext = node(&g_sens.component_mul(&g_y), eps)?;
            let given = node(&g_y, eps)?;
            let q = &ext.r - &ext.r * &given.r;
            let sq = identity_minus(&given.r) * &q;
            let value = trace_product(&pred.r, &sq);
            let adj = with_gradient.then(|| proxy_backward(&pred, &sq.transpose(), eps));
            (value, adj)
        }
        Notion::Cal => {
            let first = node(&target_gram()?, eps)?;
            let ext = node(&g_sens.component_mul(&g_pred), eps)?;
            let pred = node(&g_pred, eps)?;
            let t = identity_minus(&pred.r);
            let rt = &first.r * &t;
            let value = trace_product(&rt, &(&ext.r * &t));
            let adj = with_gradient.then(|| {
                let adj_ext = (&t * &rt).transpose();
                let adj_pred = -(&ext.r * &t * &first.r + &rt * &ext.r).transpose();
                let via_ext = proxy_backward(&ext, &adj_ext, eps).component_mul(&g_sens);
                proxy_backward(&pred, &adj_pred, eps) + via_ext
            });
            (value, adj)
        }
    };
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite {notion} regularizer")));
    }
    let gradient = match adj_g_pred {
        Some(adj) => gram_backward(predictions, &g_pred, &adj, k_pred.sigma()),
        None => DMatrix::zeros(0, predictions.ncols()),
    };
    Ok(RegularizerValue { value, gradient })
}
