//! Computerized adaptive testing over recorded response banks: maximum
//! Fisher-information item selection, iterative MAP/EAP ability updates, and
//! a standard-error stopping rule.

use crate::data::ResponseMatrix;
use crate::error::{Error, Result};
use crate::irt::{self, FittedIrtModel};
use crate::quad::QuadratureGrid;
use crate::scalar::{self, Scalar};
use crate::select::fisher_information;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatEstimator {
    Map,
    Eap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatConfig<S> {
    pub estimator: CatEstimator,
    /// Starting ability; the simulator only accepts whole values in [−2, 2].
    pub initial_theta: i32,
    /// Stop once the standard error falls below this threshold.
    pub se_stop: S,
    /// EAP integration range.
    pub eap_range: (S, S),
    pub eap_nodes: usize,
    /// Logistic-metric scaling constant; only 1 is supported (the link is
    /// parameterized without the historical 1.7 normal-ogive factor).
    pub scaling_constant: S,
}

impl<S: Scalar> Default for CatConfig<S> {
    fn default() -> Self {
        CatConfig {
            estimator: CatEstimator::Map,
            initial_theta: 0,
            se_stop: S::cast(0.1),
            eap_range: (S::cast(-7.0), S::cast(5.0)),
            eap_nodes: 52,
            scaling_constant: S::one(),
        }
    }
}

impl<S: Scalar> CatConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(-2..=2).contains(&self.initial_theta) {
            return Err(Error::InvalidInput(format!(
                "initial theta {} must be an integer in [−2, 2]",
                self.initial_theta
            )));
        }
        if !(self.se_stop > S::zero()) || !self.se_stop.is_finite() {
            return Err(Error::InvalidInput(format!(
                "standard-error stop {} must be positive",
                self.se_stop
            )));
        }
        if self.eap_nodes < 2 {
            return Err(Error::InvalidInput(format!(
                "{} EAP nodes; need at least 2",
                self.eap_nodes
            )));
        }
        if !(self.eap_range.0 < self.eap_range.1) {
            return Err(Error::InvalidInput(format!(
                "EAP range [{}, {}] is empty",
                self.eap_range.0, self.eap_range.1
            )));
        }
        if self.scaling_constant != S::one() {
            return Err(Error::InvalidInput(format!(
                "scaling constant {} is unsupported; only 1 (logistic metric)",
                self.scaling_constant
            )));
        }
        Ok(())
    }

    fn eap_grid(&self) -> Result<QuadratureGrid<S>> {
        QuadratureGrid::standard_normal(self.eap_nodes, self.eap_range.0, self.eap_range.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    SeThreshold,
    BankExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatTrace<S> {
    pub subject_id: String,
    pub administered_items: Vec<String>,
    /// Ability estimate after each administration.
    pub theta_path: Vec<S>,
    /// Standard error after each administration.
    pub se_path: Vec<S>,
    pub final_theta: S,
    pub stop_reason: StopReason,
}

impl<S: Scalar> CatTrace<S> {
    pub fn n_administered(&self) -> usize {
        self.administered_items.len()
    }
}

/// Index of the most informative unadministered item at `theta_hat`; ties
/// resolve to the lowest index. `None` when every item is used.
fn select_next_index<S: Scalar>(
    theta_hat: S,
    model: &FittedIrtModel<S>,
    used: &[bool],
) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, item) in model.items.iter().enumerate() {
        if used[i] {
            continue;
        }
        let info = fisher_information(theta_hat, item);
        match best {
            Some((_, top)) if !(info > top) => {}
            _ => best = Some((i, info)),
        }
    }
    best.map(|(i, _)| i)
}

/// Id of the most informative item outside `administered` at `theta_hat`.
pub fn select_next_item<S: Scalar>(
    theta_hat: S,
    model: &FittedIrtModel<S>,
    administered: &[String],
) -> Result<String> {
    model.validate()?;
    let mut used = vec![false; model.n_items()];
    for id in administered {
        let idx = model
            .item_ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown item id: {id}")))?;
        used[idx] = true;
    }
    select_next_index(theta_hat, model, &used)
        .map(|i| model.item_ids[i].clone())
        .ok_or_else(|| Error::InvalidInput("item bank is exhausted".into()))
}

/// Standard error of the ability estimate: the reciprocal square root of the
/// total Fisher information, including the standard-normal prior's unit
/// information (so zero administered items gives exactly 1).
pub fn standard_error<S: Scalar>(
    theta_hat: S,
    administered: &[usize],
    model: &FittedIrtModel<S>,
) -> S {
    let mut total = S::one();
    for &i in administered {
        total += fisher_information(theta_hat, &model.items[i]);
    }
    S::one() / total.sqrt()
}

fn estimate<S: Scalar>(
    responses: &[u8],
    items: &[irt::ItemParameters<S>],
    cfg: &CatConfig<S>,
    eap_grid: &QuadratureGrid<S>,
) -> Result<S> {
    match cfg.estimator {
        CatEstimator::Map => Ok(irt::map_estimate(responses, items)),
        CatEstimator::Eap => irt::eap_estimate(responses, items, eap_grid),
    }
}

/// Simulates one adaptive test over a subject's recorded responses: select
/// the most informative remaining item at the current estimate, reveal the
/// recorded answer, re-estimate from everything administered so far, and
/// stop when the standard error drops below `cfg.se_stop` or the bank runs
/// out.
pub fn run_cat<S: Scalar>(
    subject_id: &str,
    responses: &[u8],
    model: &FittedIrtModel<S>,
    cfg: &CatConfig<S>,
) -> Result<CatTrace<S>> {
    cfg.validate()?;
    model.validate()?;
    let d = model.n_items();
    if responses.len() != d {
        return Err(Error::InvalidInput(format!(
            "{} recorded responses for a {d}-item bank",
            responses.len()
        )));
    }
    if responses.iter().any(|&x| x > 1) {
        return Err(Error::InvalidInput("responses must be 0 or 1".into()));
    }
    let eap_grid = cfg.eap_grid()?;
    let mut theta = S::cast(f64::from(cfg.initial_theta));
    let mut used = vec![false; d];
    let mut administered_idx: Vec<usize> = Vec::new();
    let mut trace = CatTrace {
        subject_id: subject_id.to_string(),
        administered_items: Vec::new(),
        theta_path: Vec::new(),
        se_path: Vec::new(),
        final_theta: theta,
        stop_reason: StopReason::BankExhausted,
    };
    loop {
        let next = match select_next_index(theta, model, &used) {
            Some(i) => i,
            None => {
                trace.stop_reason = StopReason::BankExhausted;
                break;
            }
        };
        used[next] = true;
        administered_idx.push(next);
        trace.administered_items.push(model.item_ids[next].clone());

        let sub_resp: Vec<u8> = administered_idx.iter().map(|&i| responses[i]).collect();
        let sub_items: Vec<irt::ItemParameters<S>> =
            administered_idx.iter().map(|&i| model.items[i]).collect();
        theta = estimate(&sub_resp, &sub_items, cfg, &eap_grid)?;
        let se = standard_error(theta, &administered_idx, model);
        trace.theta_path.push(theta);
        trace.se_path.push(se);

        if se < cfg.se_stop {
            trace.stop_reason = StopReason::SeThreshold;
            break;
        }
    }
    trace.final_theta = theta;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatSummary<S> {
    pub median_items: S,
    /// Root mean squared error of final estimates against supplied reference
    /// abilities, when given.
    pub theta_rmse: Option<S>,
}

/// Runs [`run_cat`] independently for every subject of a recorded response
/// matrix. `reference_thetas`, when supplied, must align with the matrix
/// subjects and yields an RMSE in the summary.
pub fn simulate_population<S: Scalar>(
    matrix: &ResponseMatrix,
    model: &FittedIrtModel<S>,
    cfg: &CatConfig<S>,
    reference_thetas: Option<&[S]>,
) -> Result<(Vec<CatTrace<S>>, CatSummary<S>)> {
    if matrix.item_ids() != model.item_ids {
        return Err(Error::InvalidInput(
            "matrix items do not match model items".into(),
        ));
    }
    if let Some(refs) = reference_thetas {
        if refs.len() != matrix.n_subjects() {
            return Err(Error::InvalidInput(format!(
                "{} reference abilities for {} subjects",
                refs.len(),
                matrix.n_subjects()
            )));
        }
    }
    let mut traces = Vec::with_capacity(matrix.n_subjects());
    for j in 0..matrix.n_subjects() {
        traces.push(run_cat(
            &matrix.subject_ids()[j],
            matrix.row(j),
            model,
            cfg,
        )?);
    }
    let counts: Vec<S> = traces
        .iter()
        .map(|t| S::cast_usize(t.n_administered()))
        .collect();
    let median_items = scalar::median(&counts);
    let theta_rmse = reference_thetas.map(|refs| {
        let mse: S = traces
            .iter()
            .zip(refs)
            .map(|(t, &r)| (t.final_theta - r) * (t.final_theta - r))
            .sum::<S>()
            / S::cast_usize(refs.len());
        mse.sqrt()
    });
    Ok((traces, CatSummary { median_items, theta_rmse }))
}
