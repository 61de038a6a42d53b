//! Permutation tests of (conditional) independence with FairCOCCO statistics.
//!
//! The null distribution is built by permuting the rows of the sensitive
//! attribute `A`. For the unconditional notion the permutations are uniform.
//! For the conditional notions they are restricted to strata of the
//! conditioning variable so that the dependence on it is preserved:
//!
//! * discrete conditioning variable: permute within groups of equal value;
//! * continuous conditioning variable: order the samples along a nearest
//!   neighbour chain and permute within consecutive blocks (default size 10).
//!
//! The p-value uses the add-one estimator `(1 + #{T_π ≥ T}) / (P + 1)`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{center, center_matrix, gram, sq_dist};
use crate::operators::{proxy, proxy_from_centered, trace_product, Notion, DEFAULT_EPSILON};
use crate::score::{is_constant, roles, Bandwidths};

pub const MIN_PERMUTATIONS: usize = 19;
pub const DEFAULT_BLOCK_SIZE: usize = 10;
/// Most distinct values a conditioning variable may take and still be
/// stratified by value under [`Stratification::Auto`].
const MAX_DISCRETE_LEVELS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub notion: Notion,
    pub observed: f64,
    pub p_value: f64,
    pub num_permutations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratification {
    /// Discrete when the conditioning variable has few distinct values,
    /// nearest-neighbour blocks of [`DEFAULT_BLOCK_SIZE`] otherwise.
    Auto,
    Discrete,
    KnnBlocks(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationTestConfig {
    pub notion: Notion,
    pub permutations: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub stratification: Stratification,
    pub bandwidths: Bandwidths,
}

impl PermutationTestConfig {
    pub fn new(notion: Notion, permutations: usize, seed: u64) -> Self {
        Self {
            notion,
            permutations,
            seed,
            epsilon: DEFAULT_EPSILON,
            stratification: Stratification::Auto,
            bandwidths: Bandwidths::default(),
        }
    }
}

/// Groups of row indices within which `A` may be permuted.
pub fn strata(given: &DMatrix<f64>, scheme: Stratification) -> Result<Vec<Vec<usize>>> {
    let n = given.nrows();
    let distinct = distinct_rows(given);
    let scheme = match scheme {
        Stratification::Auto if distinct.len() <= MAX_DISCRETE_LEVELS.min(n / 2) => {
            Stratification::Discrete
        }
        Stratification::Auto => Stratification::KnnBlocks(DEFAULT_BLOCK_SIZE),
        s => s,
    };
    let groups = match scheme {
        Stratification::Discrete => distinct
            .iter()
            .map(|r| (0..n).filter(|&i| given.row(i) == given.row(*r)).collect())
            .collect(),
        Stratification::KnnBlocks(size) => {
            if size < 2 {
                return Err(Error::InvalidArgument(format!("block size {size} < 2")));
            }
            let order = neighbour_order(given);
            let mut blocks: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
            if blocks.len() > 1 && blocks.last().is_some_and(|b| b.len() < size.div_ceil(2)) {
                let tail = blocks.pop().unwrap();
                blocks.last_mut().unwrap().extend(tail);
            }
            blocks
        }
        Stratification::Auto => unreachable!(),
    };
    if groups.iter().all(|g: &Vec<usize>| g.len() < 2) {
        return Err(Error::InvalidArgument(
            "every stratum has a single sample; the conditional test is degenerate".into(),
        ));
    }
    Ok(groups)
}

/// First row index of each distinct value, in order of appearance.
fn distinct_rows(m: &DMatrix<f64>) -> Vec<usize> {
    let mut firsts: Vec<usize> = Vec::new();
    for i in 0..m.nrows() {
        if !firsts.iter().any(|&f| m.row(f) == m.row(i)) {
            firsts.push(i);
            if firsts.len() > MAX_DISCRETE_LEVELS {
                break;
            }
        }
    }
    firsts
}

/// Sorted order for one column; a greedy nearest-neighbour chain from the
/// row with the smallest first coordinate otherwise.
fn neighbour_order(m: &DMatrix<f64>) -> Vec<usize> {
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    if m.ncols() == 1 {
        idx.sort_by(|&a, &b| m[(a, 0)].total_cmp(&m[(b, 0)]).then(a.cmp(&b)));
        return idx;
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).iter().copied().collect()).collect();
    let start = (0..n)
        .min_by(|&a, &b| rows[a][0].total_cmp(&rows[b][0]))
        .unwrap_or(0);
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    for _ in 0..n {
        visited[cur] = true;
        order.push(cur);
        let next = (0..n).filter(|&j| !visited[j]).min_by(|&a, &b| {
            sq_dist(&rows[cur], &rows[a]).total_cmp(&sq_dist(&rows[cur], &rows[b]))
        });
        match next {
            Some(j) => cur = j,
            None => break,
        }
    }
    order
}

fn permutations(
    n: usize,
    groups: Option<&[Vec<usize>]>,
    count: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| match groups {
            None => {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            }
            Some(groups) => {
                let mut p: Vec<usize> = (0..n).collect();
                for g in groups {
                    let mut shuffled = g.clone();
                    shuffled.shuffle(&mut rng);
                    for (&dst, &src) in g.iter().zip(&shuffled) {
                        p[dst] = src;
                    }
                }
                p
            }
        })
        .collect()
}

/// Permutation test of the FairCOCCO statistic of `config.notion`.
pub fn permutation_test(
    predictions: &DMatrix<f64>,
    sensitive: &DMatrix<f64>,
    target: Option<&DMatrix<f64>>,
    config: &PermutationTestConfig,
) -> Result<TestResult> {
    if config.permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {}",
            config.permutations
        )));
    }
    let notion = config.notion;
    let eps = config.epsilon;
    let roles = roles(notion, predictions, sensitive, target, &config.bandwidths)?;
    let n = predictions.nrows();
    let result = |observed: f64, exceed: usize| TestResult {
        notion,
        observed,
        p_value: (1 + exceed) as f64 / (config.permutations + 1) as f64,
        num_permutations: config.permutations,
        seed: config.seed,
    };
    if is_constant(roles.first.0) || is_constant(roles.sensitive.0) {
        return Ok(result(0.0, config.permutations));
    }

    let r_first = proxy(&center(&gram(roles.first.0, &roles.first.1)), eps)?;

    let stats: Vec<f64> = match roles.given {
        None => {
            let r_sens = proxy(&center(&gram(roles.sensitive.0, &roles.sensitive.1)), eps)?.r;
            let stat = |p: &[usize]| {
                let mut acc = 0.0;
                for j in 0..n {
                    for i in 0..n {
                        acc += r_first.r[(i, j)] * r_sens[(p[j], p[i])];
                    }
                }
                acc.max(0.0)
            };
            let identity: Vec<usize> = (0..n).collect();
            let perms = permutations(n, None, config.permutations, config.seed);
            std::iter::once(Ok(stat(&identity)))
                .chain(perms.par_iter().map(|p| Ok(stat(p))).collect::<Vec<_>>())
                .collect::<Result<_>>()?
        }
        Some((given, k)) => {
            let groups = strata(given, config.stratification)?;
            let g_sens = gram(roles.sensitive.0, &roles.sensitive.1).entries;
            let g_given = gram(given, &k).entries;
            let r_given = proxy(&center(&gram(given, &k)), eps)?.r;
            // Tr[(R_f − R_f R_g)(R_e − R_e R_g)] = Tr[B R_e] with B = (I − R_g)(R_f − R_f R_g)
            let p_first = &r_first.r - &r_first.r * &r_given;
            let b = &p_first - &r_given * &p_first;
            let stat = |p: &[usize]| -> Result<f64> {
                let ext = DMatrix::from_fn(n, n, |i, j| g_sens[(p[i], p[j])] * g_given[(i, j)]);
                let (r_ext, _) = proxy_from_centered(&center_matrix(&ext), eps)?;
                Ok(trace_product(&b, &r_ext.r).max(0.0))
            };
            let identity: Vec<usize> = (0..n).collect();
            let perms = permutations(n, Some(&groups), config.permutations, config.seed);
            std::iter::once(stat(&identity))
                .chain(perms.par_iter().map(|p| stat(p)).collect::<Vec<_>>())
                .collect::<Result<_>>()?
        }
    };
    let observed = stats[0];
    let exceed = stats[1..].iter().filter(|&&s| s >= observed).count();
    Ok(result(observed, exceed))
}
