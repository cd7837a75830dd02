//! Versioned JSON persistence for fitted models and item subsets.
//!
//! Every artifact is stored inside a small envelope that records the file
//! format version, the artifact kind, the RNG seed used to produce it (if
//! any), and the free-form configuration it was fitted under.  Loading
//! checks version and kind before touching the payload so that stale or
//! mismatched files fail with an explicit error instead of garbage numbers.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{PreprocessReport, SplitAssignment};
use crate::error::{Error, Result};
use crate::fa::FactorFit;
use crate::irt::FittedIrtModel;
use crate::reconstruct::{GamFit, LogisticBaseline, WeightedAverageModel};
use crate::scalar::Scalar;
use crate::select::SubsetResult;

/// Version of the on-disk envelope layout this build reads and writes.
pub const FORMAT_VERSION: u32 = 1;

/// Types that can be saved to and loaded from a model file.
///
/// `KIND` is stored in the envelope and checked on load, so a file produced
/// for one artifact type cannot silently deserialize as another.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl<S: Scalar> Artifact for FittedIrtModel<S> {
    const KIND: &'static str = "irt-model";
}

impl<S: Scalar> Artifact for GamFit<S> {
    const KIND: &'static str = "gam";
}

impl<S: Scalar> Artifact for WeightedAverageModel<S> {
    const KIND: &'static str = "weighted-average";
}

impl<S: Scalar> Artifact for LogisticBaseline<S> {
    const KIND: &'static str = "score-link-baseline";
}

impl<S: Scalar> Artifact for FactorFit<S> {
    const KIND: &'static str = "factor-model";
}

impl<S: Scalar> Artifact for SubsetResult<S> {
    const KIND: &'static str = "item-subset";
}

impl<S: Scalar> Artifact for PreprocessReport<S> {
    const KIND: &'static str = "preprocess-report";
}

impl Artifact for SplitAssignment {
    const KIND: &'static str = "split-assignment";
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    kind: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    config: serde_json::Value,
    payload: serde_json::Value,
}

/// An artifact read back from disk together with its envelope metadata.
#[derive(Debug, Clone)]
pub struct Loaded<A> {
    pub payload: A,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

/// Serializes `artifact` into a versioned envelope and writes it to `path`
/// atomically: the JSON is written to a sibling temporary file which is then
/// renamed over the destination, so a crash mid-write never leaves a
/// truncated model file behind.
pub fn save_model<A: Artifact, C: Serialize>(
    path: &Path,
    artifact: &A,
    seed: Option<u64>,
    config: &C,
) -> Result<()> {
    let payload = serde_json::to_value(artifact)
        .map_err(|e| Error::Parse(format!("could not serialize {}: {e}", A::KIND)))?;
    let config = serde_json::to_value(config)
        .map_err(|e| Error::Parse(format!("could not serialize config: {e}")))?;
    let envelope = Envelope {
        format_version: FORMAT_VERSION,
        kind: A::KIND.to_string(),
        seed,
        config,
        payload,
    };
    let text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Error::Parse(format!("could not serialize envelope: {e}")))?;

    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp_path = path.with_file_name(tmp_name);

    fs::write(&tmp_path, text.as_bytes()).map_err(|e| Error::io(&tmp_path, e))?;
    if let Err(e) = fs::rename(&tmp_path, path) {
        let _ = fs::remove_file(&tmp_path);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Reads an artifact of type `A` from `path`, checking the envelope's format
/// version and kind before deserializing the payload.
pub fn load_model<A: Artifact>(path: &Path) -> Result<Loaded<A>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let envelope: Envelope = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;

    if envelope.format_version != FORMAT_VERSION {
        return Err(Error::ArtifactMismatch(format!(
            "{} has format_version {} but this build reads format_version {}; \
             regenerate the artifact with the current tools or migrate the file",
            path.display(),
            envelope.format_version,
            FORMAT_VERSION,
        )));
    }
    if envelope.kind != A::KIND {
        return Err(Error::ArtifactMismatch(format!(
            "{} holds a '{}' artifact but a '{}' was requested",
            path.display(),
            envelope.kind,
            A::KIND,
        )));
    }
    let payload: A = serde_json::from_value(envelope.payload)
        .map_err(|e| Error::Parse(format!("{} payload: {e}", path.display())))?;
    Ok(Loaded { payload, seed: envelope.seed, config: envelope.config })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irt::{link_probability, ItemParameters, ModelKind};
    use crate::quad::QuadratureGrid;
    use crate::select::SubsetProvenance;
    use serde_json::json;
    use std::path::PathBuf;

    fn temp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir()
            .join(format!("sparsebench-persist-{}-{name}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn sample_model() -> FittedIrtModel<f64> {
        let items = vec![
            ItemParameters::two_pl(0.734_218_651_2, -1.273_555_019_4),
            ItemParameters::three_pl(1.918_273_645_5, 0.482_716_253_9, 0.2),
            ItemParameters::four_pl(2.5, 1.181_818_181_818_181_8, 0.05, 0.97),
        ];
        FittedIrtModel {
            kind: ModelKind::FourPl,
            item_ids: vec!["i1".into(), "i2".into(), "i3".into()],
            items,
            grid: QuadratureGrid::<f64>::default_ability_grid(),
            log_likelihood_path: vec![-120.5, -118.25, -118.062_5],
            em_cycles: 3,
            converged: true,
        }
    }

    #[test]
    fn irt_round_trip_reproduces_link_probabilities_bitwise() {
        let dir = temp_dir("round-trip");
        let path = dir.join("model.json");
        let model = sample_model();
        save_model(&path, &model, Some(42), &json!({"lambda": 0.005})).unwrap();

        let loaded: Loaded<FittedIrtModel<f64>> = load_model(&path).unwrap();
        assert_eq!(loaded.seed, Some(42));
        assert_eq!(loaded.config["lambda"], json!(0.005));
        assert_eq!(loaded.payload.item_ids, model.item_ids);
        assert_eq!(loaded.payload.em_cycles, 3);
        assert!(loaded.payload.converged);

        // 100-point probe: every link probability must match to the bit.
        for t in 0..100 {
            let theta = -4.0 + 8.0 * (t as f64) / 99.0;
            for (orig, back) in model.items.iter().zip(loaded.payload.items.iter()) {
                let p0 = link_probability(theta, orig);
                let p1 = link_probability(theta, back);
                assert_eq!(p0.to_bits(), p1.to_bits(), "theta = {theta}");
            }
        }
        for (w0, w1) in model.grid.weights().iter().zip(loaded.payload.grid.weights()) {
            assert_eq!(w0.to_bits(), w1.to_bits());
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn save_leaves_no_temporary_file_and_overwrites() {
        let dir = temp_dir("no-tmp");
        let path = dir.join("model.json");
        let model = sample_model();
        save_model(&path, &model, None, &json!({})).unwrap();
        save_model(&path, &model, Some(7), &json!({"rerun": true})).unwrap();
        assert!(!dir.join("model.json.tmp").exists());

        let loaded: Loaded<FittedIrtModel<f64>> = load_model(&path).unwrap();
        assert_eq!(loaded.seed, Some(7));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn save_into_missing_directory_is_io_error() {
        let dir = temp_dir("missing-dir");
        let path = dir.join("nope").join("model.json");
        let err = save_model(&path, &sample_model(), None, &json!({})).unwrap_err();
        match &err {
            Error::Io { path: p, .. } => assert!(p.contains("nope")),
            other => panic!("expected i/o error, got {other:?}"),
        }
        assert_eq!(err.exit_code(), 2);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn future_format_version_is_rejected_with_migration_error() {
        let dir = temp_dir("version");
        let path = dir.join("model.json");
        save_model(&path, &sample_model(), None, &json!({})).unwrap();

        let text = fs::read_to_string(&path).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["format_version"] = json!(99);
        fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();

        let err = load_model::<FittedIrtModel<f64>>(&path).unwrap_err();
        match &err {
            Error::ArtifactMismatch(msg) => {
                assert!(msg.contains("format_version 99"), "message: {msg}");
                assert!(msg.contains("format_version 1"), "message: {msg}");
            }
            other => panic!("expected artifact mismatch, got {other:?}"),
        }
        assert_eq!(err.exit_code(), 1);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = temp_dir("kind");
        let path = dir.join("subset.json");
        let subset = SubsetResult::<f64> {
            item_ids: vec!["i1".into(), "i2".into()],
            k: 2,
            val_rmse: Some(3.25),
            test_rmse: None,
            provenance: SubsetProvenance::InfoFilter,
        };
        save_model(&path, &subset, Some(9), &json!({"tau": 0.5})).unwrap();

        // Loading the same file as a different artifact type must fail before
        // the payload is even inspected.
        let err = load_model::<FittedIrtModel<f64>>(&path).unwrap_err();
        match &err {
            Error::ArtifactMismatch(msg) => {
                assert!(msg.contains("item-subset"), "message: {msg}");
                assert!(msg.contains("irt-model"), "message: {msg}");
            }
            other => panic!("expected artifact mismatch, got {other:?}"),
        }
        assert_eq!(err.exit_code(), 1);

        let back: Loaded<SubsetResult<f64>> = load_model(&path).unwrap();
        assert_eq!(back.payload, subset);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn missing_payload_field_is_a_parse_error_naming_the_field() {
        let dir = temp_dir("missing-field");
        let path = dir.join("model.json");
        save_model(&path, &sample_model(), None, &json!({})).unwrap();

        let text = fs::read_to_string(&path).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["payload"].as_object_mut().unwrap().remove("items");
        fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();

        let err = load_model::<FittedIrtModel<f64>>(&path).unwrap_err();
        match &err {
            Error::Parse(msg) => {
                assert!(msg.contains("missing field"), "message: {msg}");
                assert!(msg.contains("items"), "message: {msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert_eq!(err.exit_code(), 2);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn truncated_json_is_a_parse_error() {
        let dir = temp_dir("truncated");
        let path = dir.join("model.json");
        save_model(&path, &sample_model(), None, &json!({})).unwrap();

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();

        let err = load_model::<FittedIrtModel<f64>>(&path).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "got {err:?}");
        assert_eq!(err.exit_code(), 2);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn split_assignment_round_trips_with_version_field() {
        let dir = temp_dir("split");
        let path = dir.join("split.json");
        let split = SplitAssignment {
            test_ids: vec!["s1".into()],
            validation_ids: vec!["s2".into()],
            train_ids: vec!["s3".into(), "s4".into()],
            strat_bins: 5,
            seed: 11,
        };
        save_model(&path, &split, Some(11), &json!({"test_frac": 0.1})).unwrap();

        let raw: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["format_version"], json!(FORMAT_VERSION));
        assert_eq!(raw["kind"], json!("split-assignment"));

        let back: Loaded<SplitAssignment> = load_model(&path).unwrap();
        assert_eq!(back.payload, split);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = temp_dir("absent");
        let err = load_model::<FittedIrtModel<f64>>(&dir.join("ghost.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "got {err:?}");
        assert_eq!(err.exit_code(), 2);
        let _ = fs::remove_dir_all(&dir);
    }
}
