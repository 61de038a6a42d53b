//! Scores computed straight from data matrices: bandwidth selection, Gram
//! construction, proxies and the notion-specific statistic in one call.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{center, extended_gram, gram, median_heuristic, KernelConfig};
use crate::lowrank::{
    faircocco_score_lowrank, incomplete_cholesky_kernel, proxy_lowrank, LowRankSet, ProductKernel,
    DEFAULT_MAX_RANK, DEFAULT_TOL,
};
use crate::operators::{
    faircocco_score, proxy, FairnessStatistic, Notion, ProxySet, DEFAULT_EPSILON,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankOptions {
    pub tol: f64,
    pub max_rank: usize,
}

impl Default for LowRankOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_rank: DEFAULT_MAX_RANK,
        }
    }
}

/// Fixed bandwidths; `None` means "median heuristic on the data at hand".
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bandwidths {
    pub prediction: Option<f64>,
    pub sensitive: Option<f64>,
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub epsilon: f64,
    pub lowrank: Option<LowRankOptions>,
    pub bandwidths: Bandwidths,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            lowrank: None,
            bandwidths: Bandwidths::default(),
        }
    }
}

pub(crate) fn is_constant(data: &DMatrix<f64>) -> bool {
    let n = data.nrows();
    n == 0 || (1..n).all(|i| data.row(i) == data.row(0))
}

pub(crate) fn kernel_for(data: &DMatrix<f64>, fixed: Option<f64>) -> Result<KernelConfig> {
    match fixed {
        Some(sigma) => KernelConfig::gaussian(sigma),
        None => Ok(median_heuristic(data)?.kernel()),
    }
}

/// The three variables of a score, arranged by the roles a notion gives
/// them: `first` is tested for dependence on `sensitive`, optionally given
/// `given`.
pub(crate) struct Roles<'a> {
    pub first: (&'a DMatrix<f64>, KernelConfig),
    pub sensitive: (&'a DMatrix<f64>, KernelConfig),
    pub given: Option<(&'a DMatrix<f64>, KernelConfig)>,
}

pub(crate) fn roles<'a>(
    notion: Notion,
    predictions: &'a DMatrix<f64>,
    sensitive: &'a DMatrix<f64>,
    target: Option<&'a DMatrix<f64>>,
    bw: &Bandwidths,
) -> Result<Roles<'a>> {
    let n = predictions.nrows();
    if sensitive.nrows() != n || target.is_some_and(|t| t.nrows() != n) {
        return Err(Error::Dimension(format!(
            "predictions have {n} rows, sensitive {}, target {:?}",
            sensitive.nrows(),
            target.map(|t| t.nrows())
        )));
    }
    let need_target = || {
        target.ok_or_else(|| Error::InvalidArgument(format!("notion {notion} needs the target")))
    };
    let pred = (predictions, kernel_for(predictions, bw.prediction)?);
    let sens = (sensitive, kernel_for(sensitive, bw.sensitive)?);
    Ok(match notion {
        Notion::Dp => Roles {
            first: pred,
            sensitive: sens,
            given: None,
        },
        Notion::Eo => {
            let y = need_target()?;
            Roles {
                first: pred,
                sensitive: sens,
                given: Some((y, kernel_for(y, bw.target)?)),
            }
        }
        Notion::Cal => {
            let y = need_target()?;
            Roles {
                first: (y, kernel_for(y, bw.target)?),
                sensitive: sens,
                given: Some(pred),
            }
        }
    })
}

/// FairCOCCO score of `notion` for the given samples.
///
/// A constant sensitive attribute, or a constant variable in the tested
/// position, yields a score of 0 flagged as degenerate.
pub fn score_from_data(
    notion: Notion,
    predictions: &DMatrix<f64>,
    sensitive: &DMatrix<f64>,
    target: Option<&DMatrix<f64>>,
    options: &ScoreOptions,
) -> Result<FairnessStatistic> {
    let roles = roles(notion, predictions, sensitive, target, &options.bandwidths)?;
    if is_constant(roles.first.0) || is_constant(roles.sensitive.0) {
        return Ok(FairnessStatistic::degenerate(notion));
    }
    match options.lowrank {
        None => dense_score(notion, &roles, options.epsilon),
        Some(lr) => lowrank_score(notion, &roles, options.epsilon, lr),
    }
}

fn dense_score(notion: Notion, roles: &Roles<'_>, epsilon: f64) -> Result<FairnessStatistic> {
    let r_first = proxy(&center(&gram(roles.first.0, &roles.first.1)), epsilon)?;
    let g_sens = gram(roles.sensitive.0, &roles.sensitive.1);
    match roles.given {
        None => {
            let r_sens = proxy(&center(&g_sens), epsilon)?;
            faircocco_score(
                notion,
                ProxySet::Unconditional {
                    first: &r_first,
                    second: &r_sens,
                },
            )
        }
        Some((given, k)) => {
            let g_given = gram(given, &k);
            let r_ext = proxy(&extended_gram(&g_sens, &g_given)?, epsilon)?;
            let r_given = proxy(&center(&g_given), epsilon)?;
            faircocco_score(
                notion,
                ProxySet::Conditional {
                    first: &r_first,
                    extended: &r_ext,
                    given: &r_given,
                },
            )
        }
    }
}

fn lowrank_score(
    notion: Notion,
    roles: &Roles<'_>,
    epsilon: f64,
    opts: LowRankOptions,
) -> Result<FairnessStatistic> {
    let n = roles.first.0.nrows();
    let max_rank = opts.max_rank.min(n).max(1);
    let factor = |k: &ProductKernel| -> Result<_> {
        proxy_lowrank(&incomplete_cholesky_kernel(k, opts.tol, max_rank)?, epsilon)
    };
    let first = factor(&ProductKernel::new(roles.first.0, roles.first.1))?;
    let sens_kernel = ProductKernel::new(roles.sensitive.0, roles.sensitive.1);
    match roles.given {
        None => {
            let second = factor(&sens_kernel)?;
            faircocco_score_lowrank(
                notion,
                LowRankSet::Unconditional {
                    first: &first,
                    second: &second,
                },
            )
        }
        Some((given, k)) => {
            let extended = factor(&sens_kernel.times(given, k)?)?;
            let given = factor(&ProductKernel::new(given, k))?;
            faircocco_score_lowrank(
                notion,
                LowRankSet::Conditional {
                    first: &first,
                    extended: &extended,
                    given: &given,
                },
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_prediction_and_attribute_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = data(40, 1, &mut rng);
        let s = score_from_data(Notion::Dp, &a, &a, None, &ScoreOptions::default()).unwrap();
        assert!((s.normalized_score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_attribute_is_degenerate_for_every_notion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (p, y) = (data(30, 1, &mut rng), data(30, 1, &mut rng));
        let a = DMatrix::from_element(30, 1, 1.0);
        for notion in [Notion::Dp, Notion::Eo, Notion::Cal] {
            let s = score_from_data(notion, &p, &a, Some(&y), &ScoreOptions::default()).unwrap();
            assert!(s.degenerate);
            assert_eq!(s.normalized_score, 0.0);
        }
    }

    #[test]
    fn conditional_notions_need_a_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, a) = (data(10, 1, &mut rng), data(10, 1, &mut rng));
        assert!(score_from_data(Notion::Eo, &p, &a, None, &ScoreOptions::default()).is_err());
        let short = data(9, 1, &mut rng);
        assert!(matches!(
            score_from_data(Notion::Dp, &p, &short, None, &ScoreOptions::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn lowrank_matches_dense_on_small_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = data(120, 1, &mut rng);
        let y = &a + data(120, 1, &mut rng) * 0.5;
        let p = &y + data(120, 1, &mut rng) * 0.3;
        for notion in [Notion::Dp, Notion::Eo, Notion::Cal] {
            let dense =
                score_from_data(notion, &p, &a, Some(&y), &ScoreOptions::default()).unwrap();
            let opts = ScoreOptions {
                lowrank: Some(LowRankOptions::default()),
                ..Default::default()
            };
            let lr = score_from_data(notion, &p, &a, Some(&y), &opts).unwrap();
            assert!(
                (dense.normalized_score - lr.normalized_score).abs() < 1e-3,
                "{notion}: {dense:?} vs {lr:?}"
            );
        }
    }
}
