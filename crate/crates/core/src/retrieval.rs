//! Exact top-k cosine retrieval over the evidence split.
//!
//! Embeddings are L2-normalized once at build time into a flat row-major
//! matrix, and every query is answered by a full scan with exact inner
//! products — no approximation structure sits between a query and its
//! neighbors. Selection keeps a bounded worst-at-top heap, so a query
//! costs O(nd + n log k). Ordering is total: descending similarity, ties
//! broken by ascending evidence id, which makes results reproducible
//! regardless of internal traversal order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{self, sha256_hex, InstanceRecord};
use crate::error::{Error, Result};
use crate::fusion::MassFunction;

/// One retrieved evidence row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub evidence_id: u64,
    /// Exact cosine similarity in [-1, 1].
    pub similarity: f64,
    /// 1 − similarity, the conventional cosine distance.
    pub distance: f64,
}

/// Immutable flat index over L2-normalized evidence embeddings, with each
/// row's precomputed mass function and true label attached for fusion and
/// audit output.
#[derive(Debug, Clone)]
pub struct EvidenceIndex {
    dim: usize,
    num_classes: usize,
    /// Row-major n×dim unit rows, kept contiguous for the scan kernel.
    vectors: Vec<f32>,
    ids: Vec<u64>,
    masses: Vec<MassFunction>,
    labels: Vec<u32>,
}

impl EvidenceIndex {
    /// Normalizes the evidence embeddings and freezes the index. Masses
    /// must align one-to-one with the records.
    pub fn build(evidence: &[InstanceRecord], masses: Vec<MassFunction>) -> Result<Self> {
        if evidence.is_empty() {
            return Err(Error::EmptyRecordList);
        }
        if masses.len() != evidence.len() {
            return Err(Error::LengthMismatch(format!(
                "{} evidence records but {} mass functions",
                evidence.len(),
                masses.len()
            )));
        }
        let dim = evidence[0].embedding.len();
        let num_classes = masses[0].num_classes();
        let mut vectors = Vec::with_capacity(evidence.len() * dim);
        let mut ids = Vec::with_capacity(evidence.len());
        let mut labels = Vec::with_capacity(evidence.len());
        for (i, record) in evidence.iter().enumerate() {
            if record.embedding.len() != dim {
                return Err(Error::HeterogeneousShapes(format!(
                    "record {i} has embedding dim {}, expected {dim}",
                    record.embedding.len()
                )));
            }
            if masses[i].num_classes() != num_classes {
                return Err(Error::HeterogeneousShapes(format!(
                    "mass {i} covers {} classes, expected {num_classes}",
                    masses[i].num_classes()
                )));
            }
            let norm = embedding_norm(&record.embedding, i)?;
            vectors.extend(record.embedding.iter().map(|&v| (v as f64 / norm) as f32));
            ids.push(record.instance_id);
            labels.push(record.true_label);
        }
        Ok(Self {
            dim,
            num_classes,
            vectors,
            ids,
            masses,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// The normalized row stored for an evidence position.
    pub fn row(&self, position: usize) -> &[f32] {
        &self.vectors[position * self.dim..(position + 1) * self.dim]
    }

    /// Mass function attached to an evidence id.
    pub fn mass_of(&self, evidence_id: u64) -> &MassFunction {
        &self.masses[self.position_of(evidence_id)]
    }

    /// True label attached to an evidence id (audit output only).
    pub fn label_of(&self, evidence_id: u64) -> u32 {
        self.labels[self.position_of(evidence_id)]
    }

    fn position_of(&self, evidence_id: u64) -> usize {
        // Ids are split-local positions; keep the lookup trivial but
        // verify the invariant.
        let pos = evidence_id as usize;
        debug_assert_eq!(self.ids[pos], evidence_id);
        pos
    }

    /// Exact top-k by cosine similarity: full scan, bounded heap, total
    /// tie order (descending similarity, then ascending id).
    pub fn query(&self, embedding: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.len() {
            return Err(Error::KTooLarge { k, n: self.len() });
        }
        if embedding.len() != self.dim {
            return Err(Error::LengthMismatch(format!(
                "query has dim {}, index has dim {}",
                embedding.len(),
                self.dim
            )));
        }
        let norm = embedding_norm(embedding, 0)?;
        let query: Vec<f64> = embedding.iter().map(|&v| v as f64 / norm).collect();

        // Worst kept candidate sits at the heap top and is evicted first.
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for (position, id) in self.ids.iter().enumerate() {
            let row = self.row(position);
            let mut dot = 0.0f64;
            for (a, &b) in query.iter().zip(row) {
                dot += a * b as f64;
            }
            let candidate = Candidate {
                similarity: dot,
                id: *id,
            };
            if heap.len() < k {
                heap.push(candidate);
            } else if candidate < *heap.peek().expect("heap is non-empty") {
                heap.pop();
                heap.push(candidate);
            }
        }
        // Ascending candidate order is best-first.
        let neighbors = heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                evidence_id: c.id,
                similarity: c.similarity,
                distance: 1.0 - c.similarity,
            })
            .collect();
        Ok(neighbors)
    }

    /// Writes the index snapshot: a flat manifest plus the normalized
    /// matrix, masses, labels, and ids in the raw little-endian layout.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut vector_bytes = Vec::with_capacity(self.vectors.len() * 4);
        for v in &self.vectors {
            vector_bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut mass_bytes = Vec::with_capacity(self.masses.len() * (self.num_classes + 1) * 8);
        for m in &self.masses {
            for s in m.singleton_masses() {
                mass_bytes.extend_from_slice(&s.to_le_bytes());
            }
            mass_bytes.extend_from_slice(&m.ignorance().to_le_bytes());
        }
        let mut label_bytes = Vec::with_capacity(self.labels.len() * 4);
        for l in &self.labels {
            label_bytes.extend_from_slice(&l.to_le_bytes());
        }
        let mut id_bytes = Vec::with_capacity(self.ids.len() * 8);
        for id in &self.ids {
            id_bytes.extend_from_slice(&id.to_le_bytes());
        }
        let manifest = IndexManifest {
            num_rows: self.len(),
            embedding_dim: self.dim,
            num_classes: self.num_classes,
            checksum_vectors: sha256_hex(&vector_bytes),
            checksum_masses: sha256_hex(&mass_bytes),
            checksum_labels: sha256_hex(&label_bytes),
            checksum_ids: sha256_hex(&id_bytes),
        };
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        write(INDEX_VECTORS_FILE, &vector_bytes)?;
        write(INDEX_MASSES_FILE, &mass_bytes)?;
        write(INDEX_LABELS_FILE, &label_bytes)?;
        write(INDEX_IDS_FILE, &id_bytes)?;
        let manifest_json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::ManifestMalformed(e.to_string()))?;
        write(INDEX_MANIFEST_FILE, format!("{manifest_json}\n").as_bytes())?;
        Ok(())
    }

    /// Reloads a snapshot bit-exactly, verifying sizes and checksums.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(INDEX_MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: IndexManifest =
            serde_json::from_str(&text).map_err(|e| Error::ManifestMalformed(e.to_string()))?;
        if manifest.num_rows == 0 || manifest.embedding_dim == 0 || manifest.num_classes < 2 {
            return Err(Error::ManifestMalformed(format!(
                "index shape {}x{} over {} classes is invalid",
                manifest.num_rows, manifest.embedding_dim, manifest.num_classes
            )));
        }

        let read = |name: &str, expected: u64, checksum: &str| -> Result<Vec<u8>> {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() as u64 != expected {
                return Err(Error::SizeMismatch {
                    path,
                    expected,
                    found: bytes.len() as u64,
                });
            }
            let actual = sha256_hex(&bytes);
            if actual != checksum {
                return Err(Error::ChecksumMismatch {
                    path,
                    declared: checksum.to_string(),
                    actual,
                });
            }
            Ok(bytes)
        };

        let n = manifest.num_rows;
        let d = manifest.embedding_dim;
        let c = manifest.num_classes;
        let vector_bytes = read(INDEX_VECTORS_FILE, (n * d * 4) as u64, &manifest.checksum_vectors)?;
        let mass_bytes = read(
            INDEX_MASSES_FILE,
            (n * (c + 1) * 8) as u64,
            &manifest.checksum_masses,
        )?;
        let label_bytes = read(INDEX_LABELS_FILE, (n * 4) as u64, &manifest.checksum_labels)?;
        let id_bytes = read(INDEX_IDS_FILE, (n * 8) as u64, &manifest.checksum_ids)?;

        let vectors: Vec<f32> = vector_bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let mass_values: Vec<f64> = mass_bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        let masses = mass_values
            .chunks_exact(c + 1)
            .map(|row| MassFunction::new(row[..c].to_vec(), row[c]))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<u32> = label_bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let ids: Vec<u64> = id_bytes
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            dim: d,
            num_classes: c,
            vectors,
            ids,
            masses,
            labels,
        })
    }
}

pub const INDEX_MANIFEST_FILE: &str = "index_manifest.json";
pub const INDEX_VECTORS_FILE: &str = "vectors.f32";
pub const INDEX_MASSES_FILE: &str = "masses.f64";
pub const INDEX_LABELS_FILE: &str = "labels.u32";
pub const INDEX_IDS_FILE: &str = "ids.u64";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexManifest {
    num_rows: usize,
    embedding_dim: usize,
    num_classes: usize,
    checksum_vectors: String,
    checksum_masses: String,
    checksum_labels: String,
    checksum_ids: String,
}

fn embedding_norm(embedding: &[f32], instance: usize) -> Result<f64> {
    dataset::validate_embedding(embedding, instance)?;
    let norm_sq: f64 = embedding.iter().map(|&v| (v as f64) * (v as f64)).sum();
    Ok(norm_sq.sqrt())
}

/// Candidate ordering for the bounded heap: `Greater` means worse, so the
/// heap top is always the weakest kept row.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    similarity: f64,
    id: u64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::PredictiveSampleSet;

    fn record(id: u64, embedding: Vec<f32>) -> InstanceRecord {
        InstanceRecord {
            instance_id: id,
            embedding,
            samples: PredictiveSampleSet::new(2, 2, vec![0.6, 0.4, 0.5, 0.5]).unwrap(),
            true_label: 0,
        }
    }

    fn vacuous_masses(n: usize) -> Vec<MassFunction> {
        (0..n).map(|_| MassFunction::vacuous(2)).collect()
    }

    fn small_index() -> EvidenceIndex {
        let evidence = vec![
            record(0, vec![1.0, 0.0]),
            record(1, vec![0.0, 1.0]),
            record(2, vec![1.0, 1.0]),
        ];
        EvidenceIndex::build(&evidence, vacuous_masses(3)).unwrap()
    }

    #[test]
    fn rows_are_unit_norm() {
        let index = small_index();
        for position in 0..index.len() {
            let norm_sq: f64 = index
                .row(position)
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum();
            assert!((norm_sq.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn three_four_five_normalization() {
        let evidence = vec![record(0, vec![3.0, 4.0])];
        let index = EvidenceIndex::build(&evidence, vacuous_masses(1)).unwrap();
        assert_eq!(index.row(0), &[0.6f32, 0.8f32]);
    }

    #[test]
    fn mass_list_must_align() {
        let evidence = vec![record(0, vec![1.0, 0.0]), record(1, vec![0.0, 1.0])];
        assert!(matches!(
            EvidenceIndex::build(&evidence, vacuous_masses(1)),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn self_query_is_first_with_unit_similarity() {
        let index = small_index();
        let neighbors = index.query(&[1.0, 0.0], 3).unwrap();
        assert_eq!(neighbors[0].evidence_id, 0);
        assert!((neighbors[0].similarity - 1.0).abs() < 1e-12);
        assert!(neighbors[0].distance.abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_have_zero_similarity() {
        let index = small_index();
        let neighbors = index.query(&[1.0, 0.0], 3).unwrap();
        let orthogonal = neighbors.iter().find(|n| n.evidence_id == 1).unwrap();
        assert!(orthogonal.similarity.abs() < 1e-12);
        assert!((orthogonal.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn results_sorted_by_similarity_then_id() {
        let evidence = vec![
            record(0, vec![1.0, 0.0]),
            record(1, vec![2.0, 0.0]),
            record(2, vec![0.0, 1.0]),
        ];
        let index = EvidenceIndex::build(&evidence, vacuous_masses(3)).unwrap();
        // Records 0 and 1 normalize identically: the tie goes to id 0.
        let neighbors = index.query(&[1.0, 0.0], 3).unwrap();
        let ids: Vec<u64> = neighbors.iter().map(|n| n.evidence_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn k_bounds_are_enforced() {
        let index = small_index();
        assert!(matches!(
            index.query(&[1.0, 0.0], 0),
            Err(Error::KTooLarge { k: 0, n: 3 })
        ));
        assert!(matches!(
            index.query(&[1.0, 0.0], 4),
            Err(Error::KTooLarge { k: 4, n: 3 })
        ));
    }

    #[test]
    fn zero_query_is_rejected() {
        let index = small_index();
        assert!(matches!(
            index.query(&[0.0, 0.0], 1),
            Err(Error::ZeroEmbedding { .. })
        ));
    }

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let index = small_index();
        index.save(dir.path()).unwrap();
        let reloaded = EvidenceIndex::load(dir.path()).unwrap();
        assert_eq!(index.vectors, reloaded.vectors);
        assert_eq!(index.ids, reloaded.ids);
        assert_eq!(index.labels, reloaded.labels);
        assert_eq!(index.masses, reloaded.masses);
        let a = index.query(&[0.7, 0.3], 3).unwrap();
        let b = reloaded.query(&[0.7, 0.3], 3).unwrap();
        assert_eq!(a, b);
    }
}
