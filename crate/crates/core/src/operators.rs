//! Regularized proxy operators `R = Ḡ(Ḡ + εN·I)⁻¹` and the Hilbert–Schmidt
//! dependence statistics built from them.
//!
//! * unconditional: `Tr[R_Ŷ R_A]`
//! * conditional: `Tr[(R_Ŷ − R_Ŷ R_Y)(R_Ä − R_Ä R_Y)]`, which expands to
//!   `Tr[R_Ŷ R_Ä − 2 R_Ŷ R_Ä R_Y + R_Ŷ R_Y R_Ä R_Y]`
//!
//! Scores divide the statistic by the product of the Hilbert–Schmidt norms of
//! the two factors, so they lie in `[0, 1]` by Cauchy–Schwarz.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;

/// Regularization constant used throughout unless overridden.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Norm below which a score denominator factor is treated as zero.
const DEGENERATE_NORM: f64 = 1e-12;

const JITTER_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Notion {
    /// Demographic parity, `Ŷ ⊥ A`.
    Dp,
    /// Equalized odds, `Ŷ ⊥ A | Y`.
    Eo,
    /// Calibration, `Y ⊥ A | Ŷ`.
    Cal,
}

impl Notion {
    pub fn is_conditional(self) -> bool {
        !matches!(self, Notion::Dp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Notion::Dp => "dp",
            Notion::Eo => "eo",
            Notion::Cal => "cal",
        }
    }
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Notion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(Notion::Dp),
            "eo" => Ok(Notion::Eo),
            "cal" => Ok(Notion::Cal),
            other => Err(Error::InvalidArgument(format!("unknown notion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyMatrix {
    pub r: DMatrix<f64>,
    pub epsilon: f64,
}

impl ProxyMatrix {
    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn zeros(n: usize, epsilon: f64) -> Self {
        Self {
            r: DMatrix::zeros(n, n),
            epsilon,
        }
    }

    /// Applies the same row and column permutation: `out[i][j] = r[p(i)][p(j)]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        Self {
            r: DMatrix::from_fn(n, n, |i, j| self.r[(perm[i], perm[j])]),
            epsilon: self.epsilon,
        }
    }
}

/// Cholesky factor of `Ḡ + εN·I` (plus any jitter added on retry).
pub(crate) struct RegularizedSystem {
    pub(crate) chol: Cholesky<f64, Dyn>,
}

impl RegularizedSystem {
    pub(crate) fn new(g_centered: &DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let n = g_centered.nrows();
        let shift = epsilon * n as f64;
        let mut m = g_centered.clone();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        let jitter = 1e-12 * m.trace() / n.max(1) as f64;
        for attempt in 0..=JITTER_RETRIES {
            if let Some(chol) = Cholesky::new(m.clone()) {
                if attempt > 0 {
                    log::warn!("proxy solve needed {attempt} jitter retries");
                }
                return Ok(Self { chol });
            }
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        Err(Error::Numerical(
            "regularized Gram matrix is not positive definite; input is not PSD".into(),
        ))
    }

    pub(crate) fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn proxy_from_centered(
    g: &DMatrix<f64>,
    epsilon: f64,
) -> Result<(ProxyMatrix, RegularizedSystem)> {
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let system = RegularizedSystem::new(g, epsilon)?;
    // Ḡ and (Ḡ + εN·I)⁻¹ commute, so the solve yields R directly.
    let mut r = system.solve(g);
    symmetrize(&mut r);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite proxy matrix".into()));
    }
    Ok((ProxyMatrix { r, epsilon }, system))
}

/// `R = Ḡ(Ḡ + εN·I)⁻¹` through a Cholesky solve.
pub fn proxy(g: &GramMatrix, epsilon: f64) -> Result<ProxyMatrix> {
    if !g.centered {
        return Err(Error::InvalidArgument(
            "proxy expects a centered Gram matrix".into(),
        ));
    }
    proxy_from_centered(&g.entries, epsilon).map(|(p, _)| p)
}

fn same_size(ms: &[&ProxyMatrix]) -> Result<usize> {
    let n = ms[0].n();
    if ms.iter().any(|m| m.n() != n) {
        let sizes: Vec<usize> = ms.iter().map(|m| m.n()).collect();
        return Err(Error::Dimension(format!("proxy sizes differ: {sizes:?}")));
    }
    Ok(n)
}

/// `Tr[AB] = Σᵢⱼ A_ij B_ji`.
pub(crate) fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub(crate) fn hs_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Unconditional statistic `Tr[R_a R_b]`.
pub fn stat_unconditional(r_a: &ProxyMatrix, r_b: &ProxyMatrix) -> Result<f64> {
    same_size(&[r_a, r_b])?;
    Ok(trace_product(&r_a.r, &r_b.r).max(0.0))
}

/// Residualized factors `(R_first − R_first R_given, R_ext − R_ext R_given)`.
pub(crate) fn residualize(
    first: &DMatrix<f64>,
    extended: &DMatrix<f64>,
    given: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    (first - first * given, extended - extended * given)
}

/// Conditional statistic `Tr[(R_first − R_first R_given)(R_ext − R_ext R_given)]`.
pub fn stat_conditional(
    first: &ProxyMatrix,
    extended: &ProxyMatrix,
    given: &ProxyMatrix,
) -> Result<f64> {
    same_size(&[first, extended, given])?;
    let (p, q) = residualize(&first.r, &extended.r, &given.r);
    Ok(trace_product(&p, &q).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessStatistic {
    pub notion: Notion,
    /// Squared Hilbert–Schmidt norm estimate.
    pub value: f64,
    /// Normalized score in `[0, 1]`.
    pub normalized_score: f64,
    /// A denominator factor vanished (constant variable); score set to 0.
    pub degenerate: bool,
}

impl FairnessStatistic {
    pub fn degenerate(notion: Notion) -> Self {
        Self {
            notion,
            value: 0.0,
            normalized_score: 0.0,
            degenerate: true,
        }
    }
}

/// Proxy matrices in the roles a notion needs.
///
/// For [`Notion::Eo`] `first` is `R_Ŷ`, `extended` is `R_Ä` with `Ä = (A, Y)`
/// and `given` is `R_Y`. For [`Notion::Cal`] the roles of `Y` and `Ŷ` swap.
#[derive(Debug, Clone, Copy)]
pub enum ProxySet<'a> {
    Unconditional {
        first: &'a ProxyMatrix,
        second: &'a ProxyMatrix,
    },
    Conditional {
        first: &'a ProxyMatrix,
        extended: &'a ProxyMatrix,
        given: &'a ProxyMatrix,
    },
}

fn normalized(notion: Notion, value: f64, norm_a: f64, norm_b: f64) -> FairnessStatistic {
    if norm_a <= DEGENERATE_NORM || norm_b <= DEGENERATE_NORM {
        return FairnessStatistic::degenerate(notion);
    }
    FairnessStatistic {
        notion,
        value,
        normalized_score: value / (norm_a * norm_b),
        degenerate: false,
    }
}

pub fn faircocco_score(notion: Notion, proxies: ProxySet<'_>) -> Result<FairnessStatistic> {
    match (notion, proxies) {
        (Notion::Dp, ProxySet::Unconditional { first, second }) => {
            same_size(&[first, second])?;
            let value = trace_product(&first.r, &second.r).max(0.0);
            Ok(normalized(
                notion,
                value,
                hs_norm(&first.r),
                hs_norm(&second.r),
            ))
        }
        (
            Notion::Eo | Notion::Cal,
            ProxySet::Conditional {
                first,
                extended,
                given,
            },
        ) => {
            same_size(&[first, extended, given])?;
            let (p, q) = residualize(&first.r, &extended.r, &given.r);
            let value = trace_product(&p, &q).max(0.0);
            Ok(normalized(notion, value, hs_norm(&p), hs_norm(&q)))
        }
        (n, _) => Err(Error::InvalidArgument(format!(
            "notion {n} does not match the supplied proxy set"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{center, extended_gram, gram, median_heuristic, KernelConfig};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))
    }

    fn proxy_of(data: &DMatrix<f64>) -> ProxyMatrix {
        let k = median_heuristic(data).unwrap().kernel();
        proxy(&center(&gram(data, &k)), DEFAULT_EPSILON).unwrap()
    }

    fn centered_spsd(n: usize, rng: &mut ChaCha8Rng) -> GramMatrix {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        center(&GramMatrix {
            entries: &b * b.transpose(),
            centered: false,
            kernels: vec![],
        })
    }

    #[test]
    fn zero_gram_gives_zero_proxy() {
        let g = GramMatrix {
            entries: DMatrix::zeros(4, 4),
            centered: true,
            kernels: vec![],
        };
        assert_eq!(proxy(&g, 1e-4).unwrap().r, DMatrix::zeros(4, 4));
    }

    #[test]
    fn rank_one_two_by_two() {
        let (c, eps) = (0.7, 1e-2);
        let g = GramMatrix {
            entries: DMatrix::from_row_slice(2, 2, &[c, -c, -c, c]),
            centered: true,
            kernels: vec![],
        };
        let r = proxy(&g, eps).unwrap();
        let s = 2.0 * c / (2.0 * c + 2.0 * eps);
        let expect = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]) * s;
        assert_abs_diff_eq!(r.r, expect, epsilon = 1e-14);
    }

    #[test]
    fn proxy_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = centered_spsd(5, &mut rng);
        let eps = 1e-3;
        let m = &g.entries + DMatrix::identity(5, 5) * (eps * 5.0);
        let oracle = &g.entries * m.try_inverse().unwrap();
        let r = proxy(&g, eps).unwrap();
        assert_abs_diff_eq!(r.r, oracle, epsilon = 1e-8);
        assert_eq!(r.r, r.r.transpose());
        let eig = r.r.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|e| *e > -1e-10 && *e < 1.0));
    }

    #[test]
    fn rejects_uncentered_input() {
        let g = gram(
            &DMatrix::from_element(2, 1, 0.0),
            &KernelConfig::gaussian(1.0).unwrap(),
        );
        assert!(proxy(&g, 1e-4).is_err());
    }

    #[test]
    fn proxy_eigenvalues_approach_one_as_epsilon_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = centered_spsd(6, &mut rng);
        let geig = g.entries.clone().symmetric_eigen().eigenvalues;
        let mut prev = 0.0;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let r = proxy(&g, eps).unwrap();
            let mut reig: Vec<f64> =
                r.r.clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .collect();
            reig.sort_by(f64::total_cmp);
            let mut spectral: Vec<f64> = geig
                .iter()
                .map(|gi| gi.max(0.0) / (gi.max(0.0) + eps * 6.0))
                .collect();
            spectral.sort_by(f64::total_cmp);
            for (a, b) in reig.iter().zip(&spectral) {
                assert!((a - b).abs() < 1e-8);
            }
            // the top eigenvalue grows towards one
            assert!(reig[5] > prev);
            prev = reig[5];
        }
        assert!(prev > 0.99);
    }

    #[test]
    fn unconditional_statistic_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ra = proxy_of(&random_data(20, 1, &mut rng));
        let rb = proxy_of(&random_data(20, 2, &mut rng));
        assert_eq!(
            stat_unconditional(&ra, &ProxyMatrix::zeros(20, 1e-4)).unwrap(),
            0.0
        );
        let same = stat_unconditional(&ra, &ra).unwrap();
        let eig_sq: f64 =
            ra.r.clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .map(|e| e * e)
                .sum();
        assert_abs_diff_eq!(same, eig_sq, epsilon = 1e-10);
        let mut naive = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                naive += ra.r[(i, j)] * rb.r[(j, i)];
            }
        }
        assert_abs_diff_eq!(
            stat_unconditional(&ra, &rb).unwrap(),
            naive,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            stat_unconditional(&ra, &rb).unwrap(),
            stat_unconditional(&rb, &ra).unwrap(),
            epsilon = 1e-10
        );
        let short = ProxyMatrix::zeros(3, 1e-4);
        assert!(matches!(
            stat_unconditional(&ra, &short),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn conditional_matches_expanded_trace_and_reduces() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = random_data(25, 1, &mut rng);
        let y = random_data(25, 1, &mut rng);
        let yhat = random_data(25, 1, &mut rng);
        let ka = median_heuristic(&a).unwrap().kernel();
        let ky = median_heuristic(&y).unwrap().kernel();
        let r_hat = proxy_of(&yhat);
        let r_y = proxy_of(&y);
        let ext = extended_gram(&gram(&a, &ka), &gram(&y, &ky)).unwrap();
        let r_ext = proxy(&ext, DEFAULT_EPSILON).unwrap();

        let (p, e, c) = (&r_hat.r, &r_ext.r, &r_y.r);
        let expanded = (p * e - p * e * c * 2.0 + p * c * e * c).trace();
        assert_abs_diff_eq!(
            stat_conditional(&r_hat, &r_ext, &r_y).unwrap(),
            expanded,
            epsilon = 1e-10
        );

        let zero = ProxyMatrix::zeros(25, 1e-4);
        assert_eq!(
            stat_conditional(&r_hat, &r_ext, &zero).unwrap(),
            stat_unconditional(&r_hat, &r_ext).unwrap()
        );
    }

    #[test]
    fn score_equality_and_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = random_data(30, 2, &mut rng);
        let r = proxy_of(&x);
        let s = faircocco_score(
            Notion::Dp,
            ProxySet::Unconditional {
                first: &r,
                second: &r,
            },
        )
        .unwrap();
        assert!((s.normalized_score - 1.0).abs() < 1e-6);

        let constant = proxy_of(&DMatrix::from_element(30, 1, 2.5));
        let s = faircocco_score(
            Notion::Dp,
            ProxySet::Unconditional {
                first: &r,
                second: &constant,
            },
        )
        .unwrap();
        assert!(s.degenerate);
        assert_eq!(s.normalized_score, 0.0);

        let err = faircocco_score(
            Notion::Eo,
            ProxySet::Unconditional {
                first: &r,
                second: &r,
            },
        );
        assert!(err.is_err());
    }

    #[test]
    fn statistics_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let ra = proxy_of(&random_data(15, 1, &mut rng));
        let rb = proxy_of(&random_data(15, 1, &mut rng));
        let rc = proxy_of(&random_data(15, 1, &mut rng));
        let mut perm: Vec<usize> = (0..15).collect();
        perm.reverse();
        perm.swap(2, 9);
        let (pa, pb, pc) = (ra.permuted(&perm), rb.permuted(&perm), rc.permuted(&perm));
        assert_abs_diff_eq!(
            stat_unconditional(&ra, &rb).unwrap(),
            stat_unconditional(&pa, &pb).unwrap(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            stat_conditional(&ra, &rb, &rc).unwrap(),
            stat_conditional(&pa, &pb, &pc).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn score_is_one_for_scalar_multiples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r = proxy_of(&random_data(12, 1, &mut rng));
        let scaled = ProxyMatrix {
            r: &r.r * 0.37,
            epsilon: r.epsilon,
        };
        let s = faircocco_score(
            Notion::Dp,
            ProxySet::Unconditional {
                first: &r,
                second: &scaled,
            },
        )
        .unwrap();
        assert_abs_diff_eq!(s.normalized_score, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn notion_parses() {
        assert_eq!("EO".parse::<Notion>().unwrap(), Notion::Eo);
        assert!("ftu".parse::<Notion>().is_err());
    }
}
