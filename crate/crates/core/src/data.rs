//! Data model: binary response matrices, percent score vectors, ingestion,
//! preprocessing filters, and stratified subject splits.

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use crate::seeding;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

/// Subjects × items binary accuracy matrix with identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    benchmark_name: String,
    subject_ids: Vec<String>,
    item_ids: Vec<String>,
    /// Row-major n×d cells, each 0 or 1.
    data: Vec<u8>,
}

pub(crate) fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate {what} id: {id}")));
        }
    }
    Ok(())
}

impl ResponseMatrix {
    pub fn new(
        benchmark_name: impl Into<String>,
        subject_ids: Vec<String>,
        item_ids: Vec<String>,
        data: Vec<u8>,
    ) -> Result<Self> {
        let (n, d) = (subject_ids.len(), item_ids.len());
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 subjects, got {n}"
            )));
        }
        if d < 1 {
            return Err(Error::InvalidInput("need at least 1 item".into()));
        }
        if data.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match {n}×{d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&x| x > 1) {
            return Err(Error::InvalidInput(format!(
                "cell for subject '{}', item '{}' is not 0/1",
                subject_ids[pos / d],
                item_ids[pos % d]
            )));
        }
        check_unique(&subject_ids, "subject")?;
        check_unique(&item_ids, "item")?;
        Ok(ResponseMatrix {
            benchmark_name: benchmark_name.into(),
            subject_ids,
            item_ids,
            data,
        })
    }

    pub fn benchmark_name(&self) -> &str {
        &self.benchmark_name
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn value(&self, subject: usize, item: usize) -> u8 {
        self.data[subject * self.n_items() + item]
    }

    pub fn row(&self, subject: usize) -> &[u8] {
        let d = self.n_items();
        &self.data[subject * d..(subject + 1) * d]
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_ids.iter().position(|x| x == id)
    }

    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subject_ids.iter().position(|x| x == id)
    }

    pub fn item_mean<S: Scalar>(&self, item: usize) -> S {
        let sum: u32 = (0..self.n_subjects()).map(|j| u32::from(self.value(j, item))).sum();
        S::cast(f64::from(sum)) / S::cast_usize(self.n_subjects())
    }

    pub fn item_sd<S: Scalar>(&self, item: usize) -> S {
        let col: Vec<S> = (0..self.n_subjects())
            .map(|j| S::cast(f64::from(self.value(j, item))))
            .collect();
        scalar::sample_sd(&col)
    }

    /// Per-subject count of correct responses.
    pub fn sum_scores(&self) -> Vec<u32> {
        (0..self.n_subjects())
            .map(|j| self.row(j).iter().map(|&x| u32::from(x)).sum())
            .collect()
    }

    pub fn subset_items(&self, items: &[usize]) -> Result<ResponseMatrix> {
        if items.is_empty() {
            return Err(Error::InvalidInput("empty item subset".into()));
        }
        if let Some(&bad) = items.iter().find(|&&i| i >= self.n_items()) {
            return Err(Error::InvalidInput(format!("item index {bad} out of range")));
        }
        let item_ids: Vec<String> = items.iter().map(|&i| self.item_ids[i].clone()).collect();
        let mut data = Vec::with_capacity(self.n_subjects() * items.len());
        for j in 0..self.n_subjects() {
            let row = self.row(j);
            data.extend(items.iter().map(|&i| row[i]));
        }
        ResponseMatrix::new(self.benchmark_name.clone(), self.subject_ids.clone(), item_ids, data)
    }

    pub fn subset_items_by_id(&self, ids: &[String]) -> Result<ResponseMatrix> {
        let idx: Result<Vec<usize>> = ids
            .iter()
            .map(|id| {
                self.item_index(id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown item id: {id}")))
            })
            .collect();
        self.subset_items(&idx?)
    }

    /// Drops the listed item ids; unknown ids are ignored.
    pub fn without_items(&self, excluded: &HashSet<String>) -> Result<ResponseMatrix> {
        let keep: Vec<usize> = (0..self.n_items())
            .filter(|&i| !excluded.contains(&self.item_ids[i]))
            .collect();
        if keep.is_empty() {
            return Err(Error::InvalidInput(format!(
                "benchmark '{}' has no items left after exclusion",
                self.benchmark_name
            )));
        }
        self.subset_items(&keep)
    }

    pub fn subset_subjects(&self, subjects: &[usize]) -> Result<ResponseMatrix> {
        if let Some(&bad) = subjects.iter().find(|&&j| j >= self.n_subjects()) {
            return Err(Error::InvalidInput(format!("subject index {bad} out of range")));
        }
        let subject_ids: Vec<String> = subjects.iter().map(|&j| self.subject_ids[j].clone()).collect();
        let mut data = Vec::with_capacity(subjects.len() * self.n_items());
        for &j in subjects {
            data.extend_from_slice(self.row(j));
        }
        ResponseMatrix::new(self.benchmark_name.clone(), subject_ids, self.item_ids.clone(), data)
    }

    pub fn subset_subjects_by_id(&self, ids: &[String]) -> Result<ResponseMatrix> {
        let idx: Result<Vec<usize>> = ids
            .iter()
            .map(|id| {
                self.subject_index(id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown subject id: {id}")))
            })
            .collect();
        self.subset_subjects(&idx?)
    }

    /// Percent scores 100·(Σ_i x_ij)/d per subject.
    pub fn percent_scores<S: Scalar>(&self) -> ScoreVector<S> {
        let d = S::cast_usize(self.n_items());
        let hundred = S::cast(100.0);
        let values = self
            .sum_scores()
            .iter()
            .map(|&s| hundred * S::cast(f64::from(s)) / d)
            .collect();
        ScoreVector {
            subject_ids: self.subject_ids.clone(),
            values,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let to_parse = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
        let mut wtr = csv::Writer::from_writer(&mut w);
        let mut header = vec!["subject_id".to_string()];
        header.extend(self.item_ids.iter().cloned());
        wtr.write_record(&header).map_err(to_parse)?;
        for j in 0..self.n_subjects() {
            let mut rec = vec![self.subject_ids[j].clone()];
            rec.extend(self.row(j).iter().map(|x| x.to_string()));
            wtr.write_record(&rec).map_err(to_parse)?;
        }
        wtr.flush().map_err(|e| Error::Parse(format!("csv flush: {e}")))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(benchmark_name: impl Into<String>, r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("csv header: {e}")))?
            .clone();
        if headers.is_empty() || headers.get(0) != Some("subject_id") {
            return Err(Error::Parse(
                "csv header must start with 'subject_id'".into(),
            ));
        }
        let item_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut subject_ids = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("csv row {}: {e}", line + 2)))?;
            if rec.len() != item_ids.len() + 1 {
                return Err(Error::Parse(format!(
                    "csv row {}: expected {} fields, got {}",
                    line + 2,
                    item_ids.len() + 1,
                    rec.len()
                )));
            }
            subject_ids.push(rec.get(0).unwrap_or_default().to_string());
            for (col, cell) in rec.iter().skip(1).enumerate() {
                match cell {
                    "0" => data.push(0),
                    "1" => data.push(1),
                    other => {
                        return Err(Error::Parse(format!(
                            "csv row {} (subject '{}'), column '{}': cell '{other}' is not 0/1",
                            line + 2,
                            rec.get(0).unwrap_or_default(),
                            item_ids[col]
                        )))
                    }
                }
            }
        }
        ResponseMatrix::new(benchmark_name, subject_ids, item_ids, data)
    }

    /// Reads a matrix from a CSV file; the benchmark name is the file stem.
    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "benchmark".into());
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(name, std::io::BufReader::new(f))
    }
}

/// Per-subject scores on the 0–100 percent scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector<S> {
    subject_ids: Vec<String>,
    values: Vec<S>,
}

impl<S: Scalar> ScoreVector<S> {
    pub fn new(subject_ids: Vec<String>, values: Vec<S>) -> Result<Self> {
        if subject_ids.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} ids vs {} scores",
                subject_ids.len(),
                values.len()
            )));
        }
        check_unique(&subject_ids, "subject")?;
        let hundred = S::cast(100.0);
        if let Some((id, &v)) = subject_ids
            .iter()
            .zip(&values)
            .find(|(_, &v)| !v.is_finite() || v < S::zero() || v > hundred)
        {
            return Err(Error::InvalidInput(format!(
                "score {v} for subject '{id}' is outside [0, 100]"
            )));
        }
        Ok(ScoreVector { subject_ids, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn get(&self, id: &str) -> Option<S> {
        self.subject_ids
            .iter()
            .position(|x| x == id)
            .map(|i| self.values[i])
    }

    /// Restriction to the given subjects, in the given order.
    pub fn subset(&self, ids: &[String]) -> Result<ScoreVector<S>> {
        let values: Result<Vec<S>> = ids
            .iter()
            .map(|id| {
                self.get(id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown subject id: {id}")))
            })
            .collect();
        Ok(ScoreVector {
            subject_ids: ids.to_vec(),
            values: values?,
        })
    }
}

/// Per-subject normalized score: 100 · (Σ_i x_ij)/d.
pub fn normalize_scores<S: Scalar>(matrix: &ResponseMatrix) -> ScoreVector<S> {
    matrix.percent_scores()
}

/// Point-biserial correlation, or `Undefined` when the scores are constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PointBiserial<S> {
    Value(S),
    /// Scores have zero variance, so the correlation does not exist.
    Undefined,
}

/// Part–whole correlation between a binary item and the score vector:
/// r = ((μ₁ − μ)/s_{n−1}) · √(n₁(n − n₁)/(n(n − 1))),
/// where μ₁ is the mean score of subjects answering 1. Constant item
/// columns give 0; negative values are kept.
pub fn point_biserial<S: Scalar>(item: &[u8], scores: &[S]) -> Result<PointBiserial<S>> {
    if item.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "item column length {} vs scores length {}",
            item.len(),
            scores.len()
        )));
    }
    let n = item.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 subjects".into()));
    }
    let sd = scalar::sample_sd(scores);
    if sd <= S::zero() {
        return Ok(PointBiserial::Undefined);
    }
    let n1 = item.iter().filter(|&&x| x == 1).count();
    if n1 == 0 || n1 == n {
        return Ok(PointBiserial::Value(S::zero()));
    }
    let mu = scalar::mean(scores);
    let mu1 = scalar::mean(
        &item
            .iter()
            .zip(scores)
            .filter(|(&x, _)| x == 1)
            .map(|(_, &s)| s)
            .collect::<Vec<S>>(),
    );
    let nf = S::cast_usize(n);
    let n1f = S::cast_usize(n1);
    let factor = (n1f * (nf - n1f) / (nf * (nf - S::one()))).sqrt();
    Ok(PointBiserial::Value((mu1 - mu) / sd * factor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig<S> {
    /// Subjects scoring strictly below this score quantile are dropped.
    pub low_score_quantile: S,
    /// Items with sample sd below this are dropped.
    pub min_item_sd: S,
    /// Items with mean accuracy above this are dropped.
    pub max_item_mean: S,
    /// Items with |point-biserial| ≤ this half-width are dropped.
    pub pbis_zero_band: S,
}

impl<S: Scalar> Default for PreprocessConfig<S> {
    fn default() -> Self {
        PreprocessConfig {
            low_score_quantile: S::cast(0.001),
            min_item_sd: S::cast(0.01),
            max_item_mean: S::cast(0.95),
            pbis_zero_band: S::cast(0.005),
        }
    }
}

impl<S: Scalar> PreprocessConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: S| x >= S::zero() && x < S::one();
        if !in_unit(self.low_score_quantile)
            || !in_unit(self.min_item_sd)
            || !in_unit(self.max_item_mean)
        {
            return Err(Error::InvalidInput(
                "preprocess thresholds must lie in [0, 1)".into(),
            ));
        }
        if self.pbis_zero_band < S::zero() {
            return Err(Error::InvalidInput("pbis_zero_band must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubjectRemovalReason {
    LowScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemRemovalReason {
    LowVariance,
    TooEasy,
    NearZeroPbis,
    /// Reserved for ingestion-level duplicate detection; the standard filter
    /// chain never emits it (duplicate ids are rejected at construction).
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedSubject {
    pub id: String,
    pub reason: SubjectRemovalReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedItem {
    pub id: String,
    pub reason: ItemRemovalReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport<S> {
    pub removed_subjects: Vec<RemovedSubject>,
    pub removed_items: Vec<RemovedItem>,
    /// Point-biserial values for every item that reached the correlation
    /// filter (retained items and near-zero removals alike).
    pub pbis_values: Vec<(String, S)>,
}

/// Applies the preprocessing filters in order: (1) drop subjects whose score
/// is strictly below the `low_score_quantile` score quantile; (2) drop items
/// with sample sd < `min_item_sd`; (3) drop items with mean > `max_item_mean`;
/// (4) drop items with |point-biserial| ≤ `pbis_zero_band`.
pub fn preprocess<S: Scalar>(
    matrix: &ResponseMatrix,
    cfg: &PreprocessConfig<S>,
) -> Result<(ResponseMatrix, PreprocessReport<S>)> {
    cfg.validate()?;
    let mut report = PreprocessReport {
        removed_subjects: Vec::new(),
        removed_items: Vec::new(),
        pbis_values: Vec::new(),
    };

    // (1) low-scoring subjects: strictly below the score quantile, so
    // boundary ties are kept and the removal count is minimal.
    let scores: ScoreVector<S> = matrix.percent_scores();
    let mut sorted = scores.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let threshold = scalar::quantile_sorted(&sorted, cfg.low_score_quantile);
    let keep_subjects: Vec<usize> = (0..matrix.n_subjects())
        .filter(|&j| scores.values()[j] >= threshold)
        .collect();
    for j in 0..matrix.n_subjects() {
        if scores.values()[j] < threshold {
            report.removed_subjects.push(RemovedSubject {
                id: matrix.subject_ids()[j].clone(),
                reason: SubjectRemovalReason::LowScore,
            });
        }
    }
    if keep_subjects.len() < 2 {
        return Err(Error::InvalidInput(
            "fewer than 2 subjects survive the low-score filter".into(),
        ));
    }
    let m = matrix.subset_subjects(&keep_subjects)?;

    // (2) near-constant items, (3) too-easy items.
    let mut keep_items: Vec<usize> = Vec::with_capacity(m.n_items());
    for i in 0..m.n_items() {
        let sd: S = m.item_sd(i);
        let mean: S = m.item_mean(i);
        if sd < cfg.min_item_sd {
            report.removed_items.push(RemovedItem {
                id: m.item_ids()[i].clone(),
                reason: ItemRemovalReason::LowVariance,
            });
        } else if mean > cfg.max_item_mean {
            report.removed_items.push(RemovedItem {
                id: m.item_ids()[i].clone(),
                reason: ItemRemovalReason::TooEasy,
            });
        } else {
            keep_items.push(i);
        }
    }
    if keep_items.is_empty() {
        return Err(Error::InvalidInput(
            "all items removed during preprocessing; empty benchmark".into(),
        ));
    }

    // (4) near-zero part–whole correlation, computed against the full score
    // over the items surviving (2)–(3).
    let m = m.subset_items(&keep_items)?;
    let scores: ScoreVector<S> = m.percent_scores();
    let mut keep_items: Vec<usize> = Vec::with_capacity(m.n_items());
    for i in 0..m.n_items() {
        let col: Vec<u8> = (0..m.n_subjects()).map(|j| m.value(j, i)).collect();
        match point_biserial(&col, scores.values())? {
            PointBiserial::Undefined => {
                return Err(Error::InvalidInput(
                    "scores are constant after subject filtering; correlations undefined".into(),
                ))
            }
            PointBiserial::Value(r) => {
                report.pbis_values.push((m.item_ids()[i].clone(), r));
                if r.abs() <= cfg.pbis_zero_band {
                    report.removed_items.push(RemovedItem {
                        id: m.item_ids()[i].clone(),
                        reason: ItemRemovalReason::NearZeroPbis,
                    });
                } else {
                    keep_items.push(i);
                }
            }
        }
    }
    if keep_items.is_empty() {
        return Err(Error::InvalidInput(
            "all items removed during preprocessing; empty benchmark".into(),
        ));
    }
    let m = m.subset_items(&keep_items)?;
    Ok((m, report))
}

/// Disjoint subject partition produced by `stratified_split`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub test_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub train_ids: Vec<String>,
    pub strat_bins: usize,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn validate_against(&self, subject_ids: &[String]) -> Result<()> {
        let all: HashSet<&str> = subject_ids.iter().map(String::as_str).collect();
        let mut seen: HashSet<&str> = HashSet::new();
        for id in self
            .test_ids
            .iter()
            .chain(&self.validation_ids)
            .chain(&self.train_ids)
        {
            if !all.contains(id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "split references unknown subject '{id}'"
                )));
            }
            if !seen.insert(id) {
                return Err(Error::InvalidInput(format!(
                    "subject '{id}' appears in more than one split part"
                )));
            }
        }
        if seen.len() != all.len() {
            return Err(Error::InvalidInput(
                "split does not cover every subject".into(),
            ));
        }
        Ok(())
    }
}

/// Sorts ids by (score, id) and cuts them into `bins` equal-frequency groups.
fn score_bins<S: Scalar>(scores: &ScoreVector<S>, bins: usize) -> Vec<Vec<usize>> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores.values()[a]
            .partial_cmp(&scores.values()[b])
            .expect("finite scores")
            .then_with(|| scores.subject_ids()[a].cmp(&scores.subject_ids()[b]))
    });
    (0..bins)
        .map(|b| order[b * n / bins..(b + 1) * n / bins].to_vec())
        .collect()
}

/// Draws ≈`frac` of the subjects from each equal-frequency score bin.
fn stratified_pick<S: Scalar>(
    scores: &ScoreVector<S>,
    frac: f64,
    bins: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let mut picked = Vec::new();
    for mut bin in score_bins(scores, bins) {
        bin.shuffle(rng);
        let take = ((bin.len() as f64) * frac).round() as usize;
        picked.extend(
            bin.into_iter()
                .take(take)
                .map(|j| scores.subject_ids()[j].clone()),
        );
    }
    picked
}

/// Stratified test/validation/train split: subjects are grouped into `bins`
/// equal-frequency score bins; within each bin a `test_frac` share goes to
/// test, then a `val_frac` share of the remainder to validation.
pub fn stratified_split<S: Scalar>(
    scores: &ScoreVector<S>,
    test_frac: f64,
    val_frac: f64,
    bins: usize,
    seed: u64,
) -> Result<SplitAssignment> {
    let n = scores.len();
    if !(0.0..1.0).contains(&test_frac) || !(0.0..1.0).contains(&val_frac) {
        return Err(Error::InvalidInput(
            "split fractions must lie in [0, 1)".into(),
        ));
    }
    if bins < 1 || n < bins {
        return Err(Error::InvalidInput(format!(
            "need 1 ≤ bins ≤ n, got bins={bins}, n={n}"
        )));
    }
    let mut rng = seeding::stream_rng(seed, "split-test", 0);
    let test_ids = stratified_pick(scores, test_frac, bins, &mut rng);

    let test_set: HashSet<&str> = test_ids.iter().map(String::as_str).collect();
    let rest_ids: Vec<String> = scores
        .subject_ids()
        .iter()
        .filter(|id| !test_set.contains(id.as_str()))
        .cloned()
        .collect();
    let rest = scores.subset(&rest_ids)?;
    let bins_rest = bins.min(rest.len().max(1));
    let mut rng = seeding::stream_rng(seed, "split-validation", 0);
    let validation_ids = stratified_pick(&rest, val_frac, bins_rest, &mut rng);

    let val_set: HashSet<&str> = validation_ids.iter().map(String::as_str).collect();
    let train_ids: Vec<String> = rest_ids
        .iter()
        .filter(|id| !val_set.contains(id.as_str()))
        .cloned()
        .collect();
    if train_ids.is_empty() {
        return Err(Error::InvalidInput(
            "split fractions leave an empty training set".into(),
        ));
    }
    Ok(SplitAssignment {
        test_ids,
        validation_ids,
        train_ids,
        strat_bins: bins,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_matrix() -> ResponseMatrix {
        ResponseMatrix::new(
            "tiny",
            vec!["s1".into(), "s2".into()],
            vec!["i1".into(), "i2".into()],
            vec![1, 0, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn construction_validates_cells_and_ids() {
        assert_eq!(tiny_matrix().n_subjects(), 2);
        assert_eq!(tiny_matrix().n_items(), 2);
        let bad = ResponseMatrix::new(
            "x",
            vec!["a".into(), "b".into()],
            vec!["i".into(), "j".into()],
            vec![0, 2, 0, 1],
        );
        assert!(bad.is_err());
        let dup = ResponseMatrix::new(
            "x",
            vec!["a".into(), "a".into()],
            vec!["i".into(), "j".into()],
            vec![0, 1, 0, 1],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn csv_round_trip_preserves_matrix() {
        use rand::Rng;
        let mut rng = seeding::rng_from_seed(11);
        let n = 100;
        let d = 50;
        let data: Vec<u8> = (0..n * d).map(|_| rng.gen_range(0..=1)).collect();
        let m = ResponseMatrix::new(
            "roundtrip",
            (0..n).map(|j| format!("s{j}")).collect(),
            (0..d).map(|i| format!("i{i}")).collect(),
            data,
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = ResponseMatrix::read_csv("roundtrip", buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_parse_error_names_the_cell() {
        let text = "subject_id,i1,i2\ns1,1,0\ns2,0.5,1\n";
        let err = ResponseMatrix::read_csv("x", text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0.5") && msg.contains("s2") && msg.contains("i1"), "{msg}");
    }

    #[test]
    fn percent_scores_hit_bounds_and_midpoints() {
        let m = ResponseMatrix::new(
            "b",
            vec!["all".into(), "none".into(), "seven".into()],
            (0..10).map(|i| format!("i{i}")).collect(),
            [[1u8; 10], [0u8; 10], [1, 1, 1, 1, 1, 1, 1, 0, 0, 0]]
                .concat(),
        )
        .unwrap();
        let s: ScoreVector<f64> = normalize_scores(&m);
        assert_eq!(s.values(), &[100.0, 0.0, 70.0]);
    }

    #[test]
    fn point_biserial_matches_hand_computed_value() {
        // item=[1,1,0,0], scores=[90,70,60,40]:
        // μ=65, μ1=80, s=20.8167, factor=√(4/12) → r≈0.41612
        let r = point_biserial(&[1, 1, 0, 0], &[90.0f64, 70.0, 60.0, 40.0]).unwrap();
        match r {
            PointBiserial::Value(v) => assert!((v - 0.4161).abs() < 1e-3, "r = {v}"),
            PointBiserial::Undefined => panic!("unexpected degenerate"),
        }
    }

    #[test]
    fn point_biserial_degenerate_cases() {
        assert_eq!(
            point_biserial(&[1, 1, 1, 1], &[90.0f64, 70.0, 60.0, 40.0]).unwrap(),
            PointBiserial::Value(0.0)
        );
        assert_eq!(
            point_biserial(&[1, 0], &[50.0f64, 50.0]).unwrap(),
            PointBiserial::Undefined
        );
    }

    #[test]
    fn point_biserial_is_affine_invariant() {
        let item = [1u8, 0, 1, 0, 0, 1, 1, 0];
        let scores = [90.0f64, 20.0, 85.0, 30.0, 35.0, 70.0, 95.0, 10.0];
        let shifted: Vec<f64> = scores.iter().map(|s| 0.37 * s + 4.2).collect();
        let (PointBiserial::Value(a), PointBiserial::Value(b)) = (
            point_biserial(&item, &scores).unwrap(),
            point_biserial(&item, &shifted).unwrap(),
        ) else {
            panic!("unexpected degenerate")
        };
        assert!((a - b).abs() < 1e-12);
    }

    fn planted_matrix() -> ResponseMatrix {
        // 40 subjects; planted violations: 3 constant items, 3 too-easy
        // items, 3 items uncorrelated with the score, 21 informative items.
        let n = 40;
        let mut item_cols: Vec<(String, Vec<u8>)> = Vec::new();
        // informative items: correct iff subject index above a cutoff
        for k in 0..21 {
            let cutoff = 5 + (k % 30);
            let col = (0..n).map(|j| u8::from(j > cutoff)).collect();
            item_cols.push((format!("good{k}"), col));
        }
        for k in 0..3 {
            item_cols.push((format!("const{k}"), vec![0; n]));
        }
        for k in 0..3 {
            // mean 0.975 > 0.95 but sd above the 1% floor; the single zero
            // sits on a high scorer so the low-score subject filter (which
            // keeps ties at the minimum) cannot turn these into constants
            let mut col = vec![1; n];
            col[20] = 0;
            item_cols.push((format!("easy{k}"), col));
        }
        for k in 0..3 {
            // alternating pattern, unrelated to the (monotone) score
            let col = (0..n).map(|j| u8::from((j + k) % 2 == 0)).collect();
            item_cols.push((format!("flat{k}"), col));
        }
        let d = item_cols.len();
        let mut data = vec![0u8; n * d];
        for (i, (_, col)) in item_cols.iter().enumerate() {
            for j in 0..n {
                data[j * d + i] = col[j];
            }
        }
        ResponseMatrix::new(
            "planted",
            (0..n).map(|j| format!("s{j:02}")).collect(),
            item_cols.into_iter().map(|(id, _)| id).collect(),
            data,
        )
        .unwrap()
    }

    #[test]
    fn preprocess_flags_each_planted_violation() {
        let m = planted_matrix();
        let cfg = PreprocessConfig::<f64> {
            pbis_zero_band: 0.05,
            ..Default::default()
        };
        let (clean, report) = preprocess(&m, &cfg).unwrap();
        let by_reason = |r: ItemRemovalReason| {
            report
                .removed_items
                .iter()
                .filter(|ri| ri.reason == r)
                .map(|ri| ri.id.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(by_reason(ItemRemovalReason::LowVariance).len(), 3);
        assert_eq!(by_reason(ItemRemovalReason::TooEasy).len(), 3);
        assert_eq!(by_reason(ItemRemovalReason::NearZeroPbis).len(), 3);
        assert_eq!(clean.n_items(), 21);
        assert!(by_reason(ItemRemovalReason::LowVariance)
            .iter()
            .all(|id| id.starts_with("const")));
        assert!(by_reason(ItemRemovalReason::TooEasy)
            .iter()
            .all(|id| id.starts_with("easy")));
        assert!(by_reason(ItemRemovalReason::NearZeroPbis)
            .iter()
            .all(|id| id.starts_with("flat")));
        // every retained item has a recorded correlation
        for id in clean.item_ids() {
            assert!(report.pbis_values.iter().any(|(i, _)| i == id));
        }
    }

    #[test]
    fn preprocess_is_idempotent() {
        let m = planted_matrix();
        let cfg = PreprocessConfig::<f64> {
            pbis_zero_band: 0.05,
            ..Default::default()
        };
        let (once, _) = preprocess(&m, &cfg).unwrap();
        let (twice, report) = preprocess(&once, &cfg).unwrap();
        assert_eq!(once, twice);
        assert!(report.removed_items.is_empty());
        assert!(report.removed_subjects.is_empty());
    }

    #[test]
    fn preprocess_retained_items_satisfy_thresholds() {
        let m = planted_matrix();
        let cfg = PreprocessConfig::<f64> {
            pbis_zero_band: 0.05,
            ..Default::default()
        };
        let (clean, _) = preprocess(&m, &cfg).unwrap();
        let scores: ScoreVector<f64> = clean.percent_scores();
        for i in 0..clean.n_items() {
            assert!(clean.item_sd::<f64>(i) >= cfg.min_item_sd);
            assert!(clean.item_mean::<f64>(i) <= cfg.max_item_mean);
            let col: Vec<u8> = (0..clean.n_subjects()).map(|j| clean.value(j, i)).collect();
            match point_biserial(&col, scores.values()).unwrap() {
                PointBiserial::Value(r) => assert!(r.abs() > cfg.pbis_zero_band),
                PointBiserial::Undefined => panic!("degenerate scores"),
            }
        }
    }

    fn linear_scores(n: usize) -> ScoreVector<f64> {
        ScoreVector::new(
            (0..n).map(|j| format!("s{j:04}")).collect(),
            (0..n).map(|j| 100.0 * (j as f64) / ((n - 1) as f64)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_partitions_with_exact_counts() {
        let scores = linear_scores(100);
        let split = stratified_split(&scores, 0.1, 0.1, 5, 3).unwrap();
        assert_eq!(split.test_ids.len(), 10);
        // 90 remain; bins of 18, 10% of each bin rounds to 2 → 10 total
        assert_eq!(split.validation_ids.len(), 9 + 1);
        split.validate_against(scores.subject_ids()).unwrap();
    }

    #[test]
    fn split_is_deterministic() {
        let scores = linear_scores(137);
        let a = stratified_split(&scores, 0.1, 0.1, 5, 7).unwrap();
        let b = stratified_split(&scores, 0.1, 0.1, 5, 7).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&scores, 0.1, 0.1, 5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_test_bins_track_train_bins() {
        // per-bin test mean within one bin-width of the per-bin train mean
        let scores = linear_scores(1000);
        let split = stratified_split(&scores, 0.1, 0.0, 5, 13).unwrap();
        let value = |id: &String| scores.get(id).unwrap();
        let bin_of = |v: f64| ((v / 100.0 * 5.0) as usize).min(4);
        for b in 0..5 {
            let tests: Vec<f64> = split
                .test_ids
                .iter()
                .map(value)
                .filter(|&v| bin_of(v) == b)
                .collect();
            let trains: Vec<f64> = split
                .train_ids
                .iter()
                .map(value)
                .filter(|&v| bin_of(v) == b)
                .collect();
            assert!(!tests.is_empty() && !trains.is_empty());
            let bin_width = 20.0;
            assert!((crate::scalar::mean(&tests) - crate::scalar::mean(&trains)).abs() < bin_width);
        }
    }

    #[test]
    fn split_rejects_empty_train() {
        let scores = linear_scores(10);
        assert!(stratified_split(&scores, 0.9, 0.9, 1, 1).is_err());
    }
}
