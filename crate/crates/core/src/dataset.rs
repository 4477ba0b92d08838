//! On-disk dataset layout and split loading.
//!
//! A dataset directory holds exactly four files:
//!
//! - `manifest.json` — flat JSON object with shape counts, split role,
//!   log base, and a SHA-256 checksum per tensor file;
//! - `embeddings.f32` — little-endian IEEE-754 f32, row-major
//!   `[instance][component]`;
//! - `mc_samples.f32` — little-endian f32, row-major
//!   `[instance][pass][class]`;
//! - `labels.u32` — little-endian u32, one label per instance.
//!
//! Raw fixed-width binary keeps interchange bit-exact with no
//! serialization library in the loop. Instance ids are not persisted:
//! an instance's id is its position in file order, scoped to its split.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::uncertainty::{LogBase, PredictiveSampleSet};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.f32";
pub const SAMPLES_FILE: &str = "mc_samples.f32";
pub const LABELS_FILE: &str = "labels.u32";

/// Which split a dataset directory holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Evidence,
    Test,
}

impl std::fmt::Display for SplitRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitRole::Evidence => f.write_str("evidence"),
            SplitRole::Test => f.write_str("test"),
        }
    }
}

/// The flat key-value manifest describing one dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub num_instances: usize,
    pub num_classes: usize,
    pub num_passes: usize,
    pub embedding_dim: usize,
    pub split_role: SplitRole,
    pub log_base: LogBase,
    pub checksum_embeddings: String,
    pub checksum_mc_samples: String,
    pub checksum_labels: String,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::ManifestMalformed(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.num_passes < 2 {
            return Err(Error::ManifestMalformed(format!(
                "num_passes must be >= 2, got {}",
                self.num_passes
            )));
        }
        if self.embedding_dim < 1 {
            return Err(Error::ManifestMalformed("embedding_dim must be >= 1".into()));
        }
        if self.num_instances < 1 {
            return Err(Error::ManifestMalformed("num_instances must be >= 1".into()));
        }
        Ok(())
    }

    pub fn embeddings_bytes(&self) -> u64 {
        (self.num_instances * self.embedding_dim * 4) as u64
    }

    pub fn samples_bytes(&self) -> u64 {
        (self.num_instances * self.num_passes * self.num_classes * 4) as u64
    }

    pub fn labels_bytes(&self) -> u64 {
        (self.num_instances * 4) as u64
    }
}

/// One loaded instance: its embedding, its M stochastic softmax vectors,
/// and its ground-truth label. The id is the instance's position within
/// its split.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub instance_id: u64,
    pub embedding: Vec<f32>,
    pub samples: PredictiveSampleSet,
    pub true_label: u32,
}

impl InstanceRecord {
    /// Label-free view of the fields the tagging path is allowed to see.
    pub fn features(&self) -> TestFeatures<'_> {
        TestFeatures {
            instance_id: self.instance_id,
            embedding: &self.embedding,
            samples: &self.samples,
        }
    }
}

/// The decision path receives this view instead of a full record, so the
/// true label stays out of reach by construction.
#[derive(Debug, Clone, Copy)]
pub struct TestFeatures<'a> {
    pub instance_id: u64,
    pub embedding: &'a [f32],
    pub samples: &'a PredictiveSampleSet,
}

/// SHA-256 of a byte buffer as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn check_tensor(path: &Path, bytes: &[u8], expected_bytes: u64, declared_checksum: &str) -> Result<()> {
    if bytes.len() as u64 != expected_bytes {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: expected_bytes,
            found: bytes.len() as u64,
        });
    }
    let actual = sha256_hex(bytes);
    if actual != declared_checksum {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
            declared: declared_checksum.to_string(),
            actual,
        });
    }
    Ok(())
}

fn f32s_from_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect()
}

fn u32s_from_le(bytes: &[u8]) -> Vec<u32> {
    bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect()
}

fn f32s_to_le(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32s_to_le(values: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Resolves either a dataset directory or a direct manifest path.
fn manifest_path_of(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Parses and validates a manifest file (or the manifest of a directory).
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest_path = manifest_path_of(path);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::ManifestMalformed(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Loads a full split in file order, verifying sizes, checksums, and all
/// per-record invariants. Read-only.
pub fn load_split(path: &Path) -> Result<Vec<InstanceRecord>> {
    let manifest_path = manifest_path_of(path);
    let manifest = load_manifest(&manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let embeddings_path = dir.join(EMBEDDINGS_FILE);
    let samples_path = dir.join(SAMPLES_FILE);
    let labels_path = dir.join(LABELS_FILE);

    let embedding_bytes = read_file(&embeddings_path)?;
    check_tensor(
        &embeddings_path,
        &embedding_bytes,
        manifest.embeddings_bytes(),
        &manifest.checksum_embeddings,
    )?;
    let sample_bytes = read_file(&samples_path)?;
    check_tensor(
        &samples_path,
        &sample_bytes,
        manifest.samples_bytes(),
        &manifest.checksum_mc_samples,
    )?;
    let label_bytes = read_file(&labels_path)?;
    check_tensor(
        &labels_path,
        &label_bytes,
        manifest.labels_bytes(),
        &manifest.checksum_labels,
    )?;

    let embeddings = f32s_from_le(&embedding_bytes);
    let samples = f32s_from_le(&sample_bytes);
    let labels = u32s_from_le(&label_bytes);

    let d = manifest.embedding_dim;
    let m = manifest.num_passes;
    let c = manifest.num_classes;
    let mut records = Vec::with_capacity(manifest.num_instances);
    for i in 0..manifest.num_instances {
        let embedding = embeddings[i * d..(i + 1) * d].to_vec();
        validate_embedding(&embedding, i)?;
        let sample_values = samples[i * m * c..(i + 1) * m * c].to_vec();
        let sample_set = PredictiveSampleSet::new(m, c, sample_values)?;
        sample_set.validate_stochastic(i)?;
        let label = labels[i];
        if label as usize >= c {
            return Err(Error::LabelOutOfRange {
                instance: i,
                label,
                num_classes: c,
            });
        }
        records.push(InstanceRecord {
            instance_id: i as u64,
            embedding,
            samples: sample_set,
            true_label: label,
        });
    }
    Ok(records)
}

pub(crate) fn validate_embedding(embedding: &[f32], instance: usize) -> Result<()> {
    let mut norm_sq = 0.0f64;
    for &v in embedding {
        if !v.is_finite() {
            return Err(Error::ZeroEmbedding { instance });
        }
        norm_sq += (v as f64) * (v as f64);
    }
    if norm_sq == 0.0 || !norm_sq.is_finite() {
        return Err(Error::ZeroEmbedding { instance });
    }
    Ok(())
}

/// Writes a split to `dir`, creating it if needed, and returns the
/// manifest it wrote. Records must be nonempty and homogeneous in C, M,
/// and d; loading the directory back reproduces the records bit-exactly.
pub fn write_split(
    records: &[InstanceRecord],
    dir: &Path,
    role: SplitRole,
    log_base: LogBase,
) -> Result<DatasetManifest> {
    let Some(first) = records.first() else {
        return Err(Error::EmptyRecordList);
    };
    let d = first.embedding.len();
    let m = first.samples.num_passes();
    let c = first.samples.num_classes();
    for (i, r) in records.iter().enumerate() {
        if r.embedding.len() != d || r.samples.num_passes() != m || r.samples.num_classes() != c {
            return Err(Error::HeterogeneousShapes(format!(
                "record {i} has shape d={}, M={}, C={}, expected d={d}, M={m}, C={c}",
                r.embedding.len(),
                r.samples.num_passes(),
                r.samples.num_classes()
            )));
        }
    }

    let mut embeddings = Vec::with_capacity(records.len() * d);
    let mut samples = Vec::with_capacity(records.len() * m * c);
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        embeddings.extend_from_slice(&r.embedding);
        samples.extend_from_slice(r.samples.values());
        labels.push(r.true_label);
    }

    let embedding_bytes = f32s_to_le(&embeddings);
    let sample_bytes = f32s_to_le(&samples);
    let label_bytes = u32s_to_le(&labels);

    let manifest = DatasetManifest {
        num_instances: records.len(),
        num_classes: c,
        num_passes: m,
        embedding_dim: d,
        split_role: role,
        log_base,
        checksum_embeddings: sha256_hex(&embedding_bytes),
        checksum_mc_samples: sha256_hex(&sample_bytes),
        checksum_labels: sha256_hex(&label_bytes),
    };
    manifest.validate()?;

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    write(EMBEDDINGS_FILE, &embedding_bytes)?;
    write(SAMPLES_FILE, &sample_bytes)?;
    write(LABELS_FILE, &label_bytes)?;
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::ManifestMalformed(e.to_string()))?;
    write(MANIFEST_FILE, format!("{manifest_json}\n").as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: u64, embedding: Vec<f32>, rows: &[&[f32]], label: u32) -> InstanceRecord {
        let c = rows[0].len();
        let values: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        InstanceRecord {
            instance_id: id,
            embedding,
            samples: PredictiveSampleSet::new(rows.len(), c, values).unwrap(),
            true_label: label,
        }
    }

    fn minimal_records() -> Vec<InstanceRecord> {
        vec![record(
            0,
            vec![1.0, 2.0],
            &[&[0.6, 0.4], &[0.8, 0.2]],
            0,
        )]
    }

    #[test]
    fn minimal_split_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let records = minimal_records();
        let manifest =
            write_split(&records, dir.path(), SplitRole::Test, LogBase::Two).unwrap();
        assert_eq!(manifest.num_instances, 1);
        assert_eq!(manifest.num_classes, 2);
        let loaded = load_split(dir.path()).unwrap();
        assert_eq!(loaded, records);
    }

    #[test]
    fn non_stochastic_row_is_reported_with_indices() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = minimal_records();
        records.push(record(1, vec![0.5, 0.5], &[&[0.6, 0.6], &[0.5, 0.5]], 1));
        write_split(&records, dir.path(), SplitRole::Test, LogBase::Two).unwrap();
        match load_split(dir.path()) {
            Err(Error::NonStochasticRow { instance, pass, .. }) => {
                assert_eq!((instance, pass), (1, 0));
            }
            other => panic!("expected NonStochasticRow, got {other:?}"),
        }
    }

    #[test]
    fn truncated_embeddings_file_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_split(&minimal_records(), dir.path(), SplitRole::Test, LogBase::Two).unwrap();
        let path = dir.path().join(EMBEDDINGS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_split(dir.path()),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn corrupted_tensor_fails_its_checksum() {
        let dir = tempfile::tempdir().unwrap();
        write_split(&minimal_records(), dir.path(), SplitRole::Test, LogBase::Two).unwrap();
        let path = dir.path().join(LABELS_FILE);
        fs::write(&path, 1u32.to_le_bytes()).unwrap();
        assert!(matches!(
            load_split(dir.path()),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn zero_embedding_is_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record(0, vec![0.0, 0.0], &[&[0.6, 0.4], &[0.5, 0.5]], 0)];
        write_split(&records, dir.path(), SplitRole::Test, LogBase::Two).unwrap();
        assert!(matches!(
            load_split(dir.path()),
            Err(Error::ZeroEmbedding { instance: 0 })
        ));
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record(0, vec![1.0, 0.0], &[&[0.6, 0.4], &[0.5, 0.5]], 2)];
        write_split(&records, dir.path(), SplitRole::Test, LogBase::Two).unwrap();
        assert!(matches!(
            load_split(dir.path()),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn mixed_shapes_are_rejected_at_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = minimal_records();
        records.push(record(1, vec![1.0, 0.0], &[&[0.5, 0.3, 0.2], &[0.4, 0.3, 0.3]], 0));
        assert!(matches!(
            write_split(&records, dir.path(), SplitRole::Test, LogBase::Two),
            Err(Error::HeterogeneousShapes(_))
        ));
    }

    #[test]
    fn empty_record_list_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_split(&[], dir.path(), SplitRole::Test, LogBase::Two),
            Err(Error::EmptyRecordList)
        ));
    }

    #[test]
    fn manifest_with_unknown_keys_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        write_split(&minimal_records(), dir.path(), SplitRole::Test, LogBase::Two).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        manifest["surprise"] = serde_json::json!(1);
        fs::write(&path, manifest.to_string()).unwrap();
        assert!(matches!(
            load_split(dir.path()),
            Err(Error::ManifestMalformed(_))
        ));
    }
}
