//! Gaussian RBF kernels, median-heuristic bandwidths and Gram matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows above which Gram construction is split across threads.
const PARALLEL_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    sigma: f64,
}

impl KernelConfig {
    /// Gaussian RBF kernel with bandwidth `sigma > 0`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self { sigma })
        } else {
            Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive, got {sigma}"
            )))
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        rbf_kernel(x, y, self.sigma)
    }
}

/// Outcome of [`median_heuristic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub sigma: f64,
    /// Set when every pairwise distance was zero and `sigma` fell back to 1.
    pub degenerate: bool,
}

impl Bandwidth {
    pub fn kernel(&self) -> KernelConfig {
        KernelConfig { sigma: self.sigma }
    }
}

pub(crate) fn row(data: &DMatrix<f64>, i: usize) -> Vec<f64> {
    data.row(i).iter().copied().collect()
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Median of the Euclidean distances between all pairs of rows.
///
/// For an even number of pairs the two middle order statistics are averaged.
pub fn median_heuristic(data: &DMatrix<f64>) -> Result<Bandwidth> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "median heuristic needs at least 2 rows, got {n}"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(data, i)).collect();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(sq_dist(&rows[i], &rows[j]).sqrt());
        }
    }
    let m = dists.len();
    let upper = m / 2;
    let (_, &mut hi, _) = dists.select_nth_unstable_by(upper, f64::total_cmp);
    let median = if m % 2 == 1 {
        hi
    } else {
        let lo = dists[..upper]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    if median > 0.0 {
        Ok(Bandwidth {
            sigma: median,
            degenerate: false,
        })
    } else {
        log::warn!("all pairwise distances are zero; falling back to bandwidth 1");
        Ok(Bandwidth {
            sigma: 1.0,
            degenerate: true,
        })
    }
}

/// `exp(-‖x - y‖² / (2σ²))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub centered: bool,
    /// Kernels whose entrywise product produced the matrix.
    pub kernels: Vec<KernelConfig>,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Largest absolute entry; zero for the centered Gram of a constant
    /// variable.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Uncentered Gram matrix of the rows of `data`.
pub fn gram(data: &DMatrix<f64>, config: &KernelConfig) -> GramMatrix {
    let n = data.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(data, i)).collect();
    let upper = |i: usize| -> Vec<f64> {
        (i..n)
            .map(|j| {
                if i == j {
                    1.0
                } else {
                    config.eval(&rows[i], &rows[j])
                }
            })
            .collect()
    };
    let tri: Vec<Vec<f64>> = if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(upper).collect()
    } else {
        (0..n).map(upper).collect()
    };
    let mut entries = DMatrix::zeros(n, n);
    for (i, r) in tri.iter().enumerate() {
        for (k, &v) in r.iter().enumerate() {
            entries[(i, i + k)] = v;
            entries[(i + k, i)] = v;
        }
    }
    GramMatrix {
        entries,
        centered: false,
        kernels: vec![*config],
    }
}

/// `HGH` with `H = I - 11ᵀ/N`, computed from row and column means.
pub fn center(g: &GramMatrix) -> GramMatrix {
    GramMatrix {
        entries: center_matrix(&g.entries),
        centered: true,
        kernels: g.kernels.clone(),
    }
}

pub(crate) fn center_matrix(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    if n == 0 {
        return g.clone();
    }
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| g.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| g.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = g[(i, j)] - row_means[i] - col_means[j] + grand;
        }
    }
    // exact symmetry for symmetric input
    if (0..n).all(|i| (0..i).all(|j| g[(i, j)] == g[(j, i)])) {
        for j in 0..n {
            for i in 0..j {
                out[(j, i)] = out[(i, j)];
            }
        }
    }
    out
}

/// Gram matrix of the product kernel `k_A · k_Y`: entrywise product of the two
/// raw Gram matrices, then centered.
pub fn extended_gram(g_a: &GramMatrix, g_y: &GramMatrix) -> Result<GramMatrix> {
    if g_a.centered || g_y.centered {
        return Err(Error::InvalidArgument(
            "extended_gram expects uncentered Gram matrices".into(),
        ));
    }
    if g_a.n() != g_y.n() {
        return Err(Error::Dimension(format!(
            "extended_gram: {} vs {} samples",
            g_a.n(),
            g_y.n()
        )));
    }
    let product = g_a.entries.component_mul(&g_y.entries);
    Ok(GramMatrix {
        entries: center_matrix(&product),
        centered: true,
        kernels: g_a.kernels.iter().chain(&g_y.kernels).copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    fn random_data(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))
    }

    fn min_eig(m: &DMatrix<f64>) -> f64 {
        m.clone().symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn median_heuristic_examples() {
        let b = median_heuristic(&col(&[0.0, 1.0, 3.0])).unwrap();
        assert_eq!(b.sigma, 2.0);
        assert!(!b.degenerate);
        assert_eq!(median_heuristic(&col(&[0.0, 4.0])).unwrap().sigma, 4.0);
        let b = median_heuristic(&col(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(b.sigma, 1.0);
        assert!(b.degenerate);
        assert!(median_heuristic(&col(&[1.0])).is_err());
    }

    #[test]
    fn median_heuristic_even_pair_count_averages() {
        // four points -> six distances {1,2,3,1,2,1}; middles are 1 and 2
        let b = median_heuristic(&col(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(b.sigma, 1.5);
    }

    #[test]
    fn rbf_examples() {
        assert_eq!(rbf_kernel(&[0.3, -1.0], &[0.3, -1.0], 0.7), 1.0);
        assert_abs_diff_eq!(rbf_kernel(&[0.0], &[2.0], 1.0), 0.135335, epsilon = 1e-6);
        assert_abs_diff_eq!(rbf_kernel(&[0.0], &[1.0], 1.0), 0.606531, epsilon = 1e-6);
        assert!(KernelConfig::gaussian(0.0).is_err());
    }

    #[test]
    fn gram_examples() {
        let k = KernelConfig::gaussian(1.0).unwrap();
        let g = gram(&col(&[3.0]), &k);
        assert_eq!(g.entries, DMatrix::from_element(1, 1, 1.0));
        let g = gram(&col(&[0.0, 1.0]), &k);
        assert_abs_diff_eq!(g.entries[(0, 1)], 0.606531, epsilon = 1e-6);
        assert_eq!(g.entries[(0, 0)], 1.0);
        let g = gram(
            &random_data(300, 3, 1),
            &KernelConfig::gaussian(1.3).unwrap(),
        );
        assert_eq!(g.entries, g.entries.transpose());
        assert!(g.entries.iter().all(|v| *v > 0.0 && *v <= 1.0));
    }

    #[test]
    fn center_two_by_two_closed_form() {
        let a = 0.3;
        let g = GramMatrix {
            entries: DMatrix::from_row_slice(2, 2, &[1.0, a, a, 1.0]),
            centered: false,
            kernels: vec![],
        };
        let c = center(&g);
        let h = (1.0 - a) / 2.0;
        let expect = DMatrix::from_row_slice(2, 2, &[h, -h, -h, h]);
        assert_abs_diff_eq!(c.entries, expect, epsilon = 1e-15);
    }

    #[test]
    fn center_annihilates_constants() {
        let g = GramMatrix {
            entries: DMatrix::from_element(5, 5, 1.0),
            centered: false,
            kernels: vec![],
        };
        assert_eq!(center(&g).max_abs(), 0.0);
    }

    #[test]
    fn center_matches_hgh_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let spsd = &b * b.transpose();
        let h = DMatrix::identity(6, 6) - DMatrix::from_element(6, 6, 1.0 / 6.0);
        let oracle = &h * &spsd * &h;
        let g = GramMatrix {
            entries: spsd,
            centered: false,
            kernels: vec![],
        };
        let c = center(&g);
        assert_abs_diff_eq!(c.entries, oracle, epsilon = 1e-12);
        for i in 0..6 {
            assert!(c.entries.row(i).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn extended_gram_examples() {
        let k = KernelConfig::gaussian(0.8).unwrap();
        let ga = gram(&random_data(3, 2, 5), &k);
        let ones = GramMatrix {
            entries: DMatrix::from_element(3, 3, 1.0),
            centered: false,
            kernels: vec![],
        };
        assert_eq!(
            extended_gram(&ga, &ones).unwrap().entries,
            center(&ga).entries
        );

        let gy = gram(&random_data(3, 1, 6), &KernelConfig::gaussian(0.5).unwrap());
        let e = extended_gram(&ga, &gy).unwrap();
        let mut had = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                had[(i, j)] = ga.entries[(i, j)] * gy.entries[(i, j)];
            }
        }
        let h = DMatrix::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert_abs_diff_eq!(e.entries, &h * had * &h, epsilon = 1e-14);
        assert!(min_eig(&e.entries) > -1e-10);

        let small = gram(&random_data(2, 1, 7), &k);
        assert!(matches!(
            extended_gram(&ga, &small),
            Err(Error::Dimension(_))
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn gram_is_unit_diagonal_symmetric_psd(seed in 0u64..10_000, n in 1usize..25, d in 1usize..4, sigma in 0.05f64..5.0) {
            let g = gram(&random_data(n, d, seed), &KernelConfig::gaussian(sigma).unwrap());
            let e = &g.entries;
            proptest::prop_assert!((0..n).all(|i| e[(i, i)] == 1.0));
            // entries may underflow to 0 for tiny bandwidths
            proptest::prop_assert!(e.iter().all(|v| *v >= 0.0 && *v <= 1.0));
            proptest::prop_assert_eq!(e, &e.transpose());
            let trace = n as f64;
            proptest::prop_assert!(min_eig(e) >= -1e-8 * trace / n as f64);
            let c = center(&g);
            proptest::prop_assert!((0..n).all(|i| c.entries.row(i).sum().abs() < 1e-8));
            let again = center(&GramMatrix { entries: c.entries.clone(), centered: false, kernels: vec![] });
            for (x, y) in again.entries.iter().zip(c.entries.iter()) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
