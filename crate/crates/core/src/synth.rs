//! Synthetic data generation: seeded response sampling from item response
//! models (used by tests and oracles throughout the crate) and the
//! two-ability synergy experiment that quantifies how much a second
//! benchmark's ability estimate improves score reconstruction.

use crate::data::ResponseMatrix;
use crate::error::{Error, Result};
use crate::irt::{self, AbilityEstimator, EmConfig, ItemParameters, ModelKind};
use crate::linalg::Mat;
use crate::quad::QuadratureGrid;
use crate::reconstruct::{self, GamConfig};
use crate::scalar::{sigmoid, Scalar};
use crate::seeding::stream_rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

fn subject_ids(n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("s{j:05}")).collect()
}

fn item_ids(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("i{i:05}")).collect()
}

/// Draws `n` abilities from the standard normal.
pub fn standard_normal_abilities<S: Scalar>(n: usize, seed: u64) -> Vec<S> {
    let mut rng = stream_rng(seed, "abilities", 0);
    let dist = Normal::new(0.0f64, 1.0).expect("valid normal");
    (0..n).map(|_| S::cast(dist.sample(&mut rng))).collect()
}

/// Builds a 2PL bank with loadings a ~ U(a_lo, a_hi) and difficulties
/// δ ~ N(0, delta_sd²), each from its own derived stream.
pub fn uniform_two_pl_bank<S: Scalar>(
    d: usize,
    a_lo: f64,
    a_hi: f64,
    delta_sd: f64,
    seed: u64,
) -> Vec<ItemParameters<S>> {
    let mut a_rng = stream_rng(seed, "loadings", 0);
    let mut d_rng = stream_rng(seed, "difficulties", 0);
    let a_dist = Uniform::new(a_lo, a_hi);
    let d_dist = Normal::new(0.0f64, delta_sd).expect("valid normal");
    (0..d)
        .map(|_| {
            ItemParameters::two_pl(
                S::cast(a_dist.sample(&mut a_rng)),
                S::cast(d_dist.sample(&mut d_rng)),
            )
        })
        .collect()
}

/// Samples a binary response matrix: independent Bernoulli draws with
/// success probability `link_probability(θ_j, item_i)`, row-major (subjects
/// outer, items inner), reproducible for a fixed seed.
pub fn sample_responses<S: Scalar>(
    items: &[ItemParameters<S>],
    thetas: &[S],
    seed: u64,
) -> Result<ResponseMatrix> {
    if items.is_empty() {
        return Err(Error::InvalidInput("empty item bank".into()));
    }
    let n = thetas.len();
    let d = items.len();
    let mut rng = stream_rng(seed, "responses", 0);
    let mut data = Vec::with_capacity(n * d);
    for &theta in thetas {
        for item in items {
            let p = irt::link_probability(theta, item).to_f64_lossy();
            data.push(u8::from(rng.gen::<f64>() < p));
        }
    }
    ResponseMatrix::new("synthetic", subject_ids(n), item_ids(d), data)
}

/// Configuration of one synergy run: two abilities with correlation `rho`,
/// benchmark A cross-loaded on the second ability with relative strength
/// `alpha`, benchmark B loaded on the second ability only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynergyConfig<S> {
    pub rho: S,
    pub alpha: S,
    pub n_subjects: usize,
    pub n_items: usize,
    pub seed: u64,
}

impl<S: Scalar> SynergyConfig<S> {
    pub fn new(rho: S, alpha: S, seed: u64) -> Self {
        SynergyConfig {
            rho,
            alpha,
            n_subjects: 500,
            n_items: 100,
            seed,
        }
    }

    pub fn with_size(mut self, n_subjects: usize, n_items: usize) -> Self {
        self.n_subjects = n_subjects;
        self.n_items = n_items;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= S::cast(-1.0) && self.rho <= S::one()) {
            return Err(Error::InvalidInput(format!(
                "rho must lie in [-1, 1], got {}",
                self.rho
            )));
        }
        if !(self.alpha >= S::zero() && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "alpha must be ≥ 0, got {}",
                self.alpha
            )));
        }
        if self.n_subjects < 20 {
            return Err(Error::InvalidInput(
                "synergy experiment needs at least 20 subjects".into(),
            ));
        }
        if self.n_items < 2 {
            return Err(Error::InvalidInput(
                "synergy experiment needs at least 2 items per benchmark".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynergyOutcome<S> {
    /// Held-out RMSE of the single-ability reconstruction of benchmark A.
    pub single_rmse: S,
    /// Held-out RMSE when benchmark B's ability estimate is added.
    pub joint_rmse: S,
    /// single_rmse − joint_rmse (positive = the extra ability helped).
    pub boost: S,
    pub single_train_rmse: S,
    pub joint_train_rmse: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynergyCell<S> {
    pub rho: S,
    pub alpha: S,
    pub seed: u64,
    pub outcome: SynergyOutcome<S>,
}

/// Samples a row-major response block for items with two-dimensional slopes:
/// p = σ(a1·θ1 + a2·θ2 − δ).
fn sample_two_dim_block<S: Scalar>(
    slopes: &[(S, S)],
    difficulties: &[S],
    thetas: &[(S, S)],
    rng: &mut impl Rng,
) -> Vec<u8> {
    let mut data = Vec::with_capacity(thetas.len() * slopes.len());
    for &(t1, t2) in thetas {
        for (&(a1, a2), &delta) in slopes.iter().zip(difficulties) {
            let p = sigmoid(a1 * t1 + a2 * t2 - delta).to_f64_lossy();
            data.push(u8::from(rng.gen::<f64>() < p));
        }
    }
    data
}

/// Runs the two-benchmark synergy experiment:
/// 1. draw 2-dimensional abilities θ_j ~ N(0, R(ρ)),
/// 2. draw item loadings a_{i,k} ~ U(0, 3) for k = 1..3,
/// 3. draw difficulties d_{i,k} ~ N(0, 1) for k = 1..2,
/// 4. benchmark A items respond to [a_{i,1}, α·a_{i,3}] with difficulty
///    d_{i,1}; benchmark B items to [0, a_{i,2}] with difficulty d_{i,2},
/// 5. simulate both benchmarks,
/// 6. fit a one-dimensional 2PL to each and score subjects by posterior
///    mode,
/// 7. regress benchmark A's percent score on its own ability estimate
///    (single) and on both estimates (joint) over a random 80/20 split,
/// 8. report held-out RMSEs and boost = single − joint.
///
/// Each randomness purpose uses its own derived stream so draw counts in one
/// step never perturb another.
pub fn synergy_experiment<S: Scalar>(cfg: &SynergyConfig<S>) -> Result<SynergyOutcome<S>> {
    cfg.validate()?;
    let n = cfg.n_subjects;
    let d = cfg.n_items;

    let normal = Normal::new(0.0f64, 1.0).expect("valid normal");
    let uniform = Uniform::new(0.0f64, 3.0);

    let mut ability_rng = stream_rng(cfg.seed, "synergy-abilities", 0);
    let rho = cfg.rho;
    let resid_scale = (S::one() - rho * rho).max(S::zero()).sqrt();
    let thetas: Vec<(S, S)> = (0..n)
        .map(|_| {
            let z1 = S::cast(normal.sample(&mut ability_rng));
            let z2 = S::cast(normal.sample(&mut ability_rng));
            (z1, rho * z1 + resid_scale * z2)
        })
        .collect();

    let mut loading_rng = stream_rng(cfg.seed, "synergy-loadings", 0);
    let loadings: Vec<(S, S, S)> = (0..d)
        .map(|_| {
            (
                S::cast(uniform.sample(&mut loading_rng)),
                S::cast(uniform.sample(&mut loading_rng)),
                S::cast(uniform.sample(&mut loading_rng)),
            )
        })
        .collect();

    let mut difficulty_rng = stream_rng(cfg.seed, "synergy-difficulties", 0);
    let difficulties: Vec<(S, S)> = (0..d)
        .map(|_| {
            (
                S::cast(normal.sample(&mut difficulty_rng)),
                S::cast(normal.sample(&mut difficulty_rng)),
            )
        })
        .collect();

    let slopes_a: Vec<(S, S)> = loadings
        .iter()
        .map(|&(a1, _, a3)| (a1, cfg.alpha * a3))
        .collect();
    let delta_a: Vec<S> = difficulties.iter().map(|&(d1, _)| d1).collect();
    let slopes_b: Vec<(S, S)> = loadings.iter().map(|&(_, a2, _)| (S::zero(), a2)).collect();
    let delta_b: Vec<S> = difficulties.iter().map(|&(_, d2)| d2).collect();

    let mut resp_a_rng = stream_rng(cfg.seed, "synergy-responses", 0);
    let mut resp_b_rng = stream_rng(cfg.seed, "synergy-responses", 1);
    let data_a = sample_two_dim_block(&slopes_a, &delta_a, &thetas, &mut resp_a_rng);
    let data_b = sample_two_dim_block(&slopes_b, &delta_b, &thetas, &mut resp_b_rng);
    let matrix_a = ResponseMatrix::new("benchmark-a", subject_ids(n), item_ids(d), data_a)?;
    let matrix_b = ResponseMatrix::new("benchmark-b", subject_ids(n), item_ids(d), data_b)?;

    let em_cfg = EmConfig {
        max_cycles: 200,
        param_tol: S::cast(1e-3),
    };
    let grid = QuadratureGrid::<S>::default_ability_grid();
    let fit_a = irt::fit_em(&matrix_a, ModelKind::TwoPl, &grid, &em_cfg)?;
    let fit_b = irt::fit_em(&matrix_b, ModelKind::TwoPl, &grid, &em_cfg)?;
    let theta_a = irt::estimate_abilities(&matrix_a, &fit_a, AbilityEstimator::Map)?;
    let theta_b = irt::estimate_abilities(&matrix_b, &fit_b, AbilityEstimator::Map)?;
    let scores_a = matrix_a.percent_scores::<S>();

    let mut split_rng = stream_rng(cfg.seed, "synergy-split", 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut split_rng);
    let n_train = ((n as f64) * 0.8).round() as usize;
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let gather = |src: &[S], idx: &[usize]| -> Vec<S> { idx.iter().map(|&j| src[j]).collect() };
    let ta_train = gather(&theta_a.values, &train_idx);
    let tb_train = gather(&theta_b.values, &train_idx);
    let y_train = gather(scores_a.values(), &train_idx);
    let ta_test = gather(&theta_a.values, &test_idx);
    let tb_test = gather(&theta_b.values, &test_idx);
    let y_test = gather(scores_a.values(), &test_idx);

    let gam_cfg = GamConfig::default();
    let single = reconstruct::fit_gam(
        &Mat::from_columns(&[ta_train.clone()])?,
        &y_train,
        &["theta-a".into()],
        &gam_cfg,
    )?;
    let joint = reconstruct::fit_gam(
        &Mat::from_columns(&[ta_train.clone(), tb_train.clone()])?,
        &y_train,
        &["theta-a".into(), "theta-b".into()],
        &gam_cfg,
    )?;

    let single_train = reconstruct::metrics(
        &single.predict(&Mat::from_columns(&[ta_train.clone()])?)?,
        &y_train,
    )?
    .rmse;
    let joint_train = reconstruct::metrics(
        &joint.predict(&Mat::from_columns(&[ta_train, tb_train])?)?,
        &y_train,
    )?
    .rmse;
    let single_test = reconstruct::metrics(
        &single.predict(&Mat::from_columns(&[ta_test.clone()])?)?,
        &y_test,
    )?
    .rmse;
    let joint_test = reconstruct::metrics(
        &joint.predict(&Mat::from_columns(&[ta_test, tb_test])?)?,
        &y_test,
    )?
    .rmse;

    Ok(SynergyOutcome {
        single_rmse: single_test,
        joint_rmse: joint_test,
        boost: single_test - joint_test,
        single_train_rmse: single_train,
        joint_train_rmse: joint_train,
    })
}

/// Evaluates the synergy experiment over a ρ×α grid, repeating each cell for
/// every master seed. Seeds are shared across cells (common random numbers)
/// so cell-to-cell comparisons are paired.
pub fn synergy_grid<S: Scalar>(
    rhos: &[S],
    alphas: &[S],
    seeds: &[u64],
    n_subjects: usize,
    n_items: usize,
) -> Result<Vec<SynergyCell<S>>> {
    if rhos.is_empty() || alphas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput(
            "synergy grid needs at least one rho, alpha, and seed".into(),
        ));
    }
    let mut cells = Vec::with_capacity(rhos.len() * alphas.len() * seeds.len());
    for &rho in rhos {
        for &alpha in alphas {
            for &seed in seeds {
                let cfg = SynergyConfig::new(rho, alpha, seed).with_size(n_subjects, n_items);
                let outcome = synergy_experiment(&cfg)?;
                cells.push(SynergyCell {
                    rho,
                    alpha,
                    seed,
                    outcome,
                });
            }
        }
    }
    Ok(cells)
}
