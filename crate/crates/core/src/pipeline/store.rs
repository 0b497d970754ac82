//! Database container: magic, format version, JSON manifest, raw
//! little-endian `f64` payload and a SHA-256 trailer.
//!
//! ```text
//! MAGIC (8) | version u32 | manifest_len u64 | manifest | payload_len u64 | payload | sha256 (32)
//! ```
//!
//! Arrays are stored row-major; the manifest records each array's name,
//! shape and element offset into the payload.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::build::{EvaluationCounts, GlobalSummary, Lineage, RomDatabase, SampleRecord};
use super::config::RunConfig;
use super::PipelineError;
use crate::ident::IdentMethod;
use crate::modal::CompanionLabel;
use crate::prom::{OperatorId, PromModel, RbfInterpolant, RbfKernel, ValidationReport};
use crate::rom::RomOperators;
use crate::sampling::SampleSet;
use crate::tensor::SymTensor;

pub const MAGIC: &[u8; 8] = b"PROMFDB\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct ArrayDesc {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    params: Vec<f64>,
    p_hat: Vec<f64>,
    omega: Vec<f64>,
    k1: Vec<f64>,
    alpha: f64,
    beta: f64,
    v: String,
    k2: String,
    k3: String,
    lineage: Lineage,
    method: IdentMethod,
    scales: Vec<f64>,
    ident_diagnostic: f64,
    modes: Vec<usize>,
    companions: Vec<CompanionLabel>,
    counts: EvaluationCounts,
}

#[derive(Serialize, Deserialize)]
struct BasisMeta {
    v: String,
    m_phi: usize,
    m_theta: usize,
    energy_phi: Vec<f64>,
    energy_theta: Vec<f64>,
    sigma_phi: Vec<f64>,
    sigma_theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InterpolantMeta {
    operator: OperatorId,
    kernel: RbfKernel,
    condition: f64,
    weights: String,
    weights_lo: String,
}

#[derive(Serialize, Deserialize)]
struct PromMeta {
    n: usize,
    m: usize,
    centers: Vec<Vec<f64>>,
    interpolants: Vec<InterpolantMeta>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: RunConfig,
    train: SampleSet,
    validation: SampleSet,
    start: usize,
    basis: BasisMeta,
    records: Vec<RecordMeta>,
    validation_records: Vec<RecordMeta>,
    prom: Option<PromMeta>,
    report: Option<ValidationReport>,
    arrays: Vec<ArrayDesc>,
}

#[derive(Default)]
struct Payload {
    arrays: Vec<ArrayDesc>,
    data: Vec<f64>,
}

impl Payload {
    fn push_matrix(&mut self, name: String, m: &DMatrix<f64>) -> String {
        let offset = self.data.len();
        for r in 0..m.nrows() {
            self.data.extend(m.row(r).iter());
        }
        self.arrays.push(ArrayDesc { name: name.clone(), shape: vec![m.nrows(), m.ncols()], offset });
        name
    }

    fn push_vector(&mut self, name: String, v: &[f64]) -> String {
        let offset = self.data.len();
        self.data.extend_from_slice(v);
        self.arrays.push(ArrayDesc { name: name.clone(), shape: vec![v.len()], offset });
        name
    }
}

struct PayloadView<'a> {
    arrays: &'a [ArrayDesc],
    data: Vec<f64>,
}

impl PayloadView<'_> {
    fn find(&self, name: &str) -> Result<(&ArrayDesc, &[f64]), PipelineError> {
        let d = self
            .arrays
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| PipelineError::CorruptFile(format!("array `{name}` is missing")))?;
        let len: usize = d.shape.iter().product();
        let end = d.offset.checked_add(len).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| PipelineError::CorruptFile(format!("array `{name}` exceeds the payload")))?;
        Ok((d, &self.data[d.offset..end]))
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>, PipelineError> {
        let (d, s) = self.find(name)?;
        match d.shape.as_slice() {
            [r, c] => Ok(DMatrix::from_row_slice(*r, *c, s)),
            _ => Err(PipelineError::CorruptFile(format!("array `{name}` is not two-dimensional"))),
        }
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>, PipelineError> {
        Ok(self.find(name)?.1.to_vec())
    }
}

fn record_meta(prefix: &str, r: &SampleRecord, p: &mut Payload) -> RecordMeta {
    RecordMeta {
        params: r.params.clone(),
        p_hat: r.ops.p_hat.clone(),
        omega: r.omega.clone(),
        k1: r.ops.k1.clone(),
        alpha: r.ops.alpha,
        beta: r.ops.beta,
        v: p.push_matrix(format!("{prefix}/v"), &r.ops.v),
        k2: p.push_vector(format!("{prefix}/k2"), r.ops.k2.unique()),
        k3: p.push_vector(format!("{prefix}/k3"), r.ops.k3.unique()),
        lineage: r.lineage.clone(),
        method: r.method,
        scales: r.scales.clone(),
        ident_diagnostic: r.ident_diagnostic,
        modes: r.modes.clone(),
        companions: r.companions.clone(),
        counts: r.counts,
    }
}

fn record_from(meta: RecordMeta, view: &PayloadView<'_>) -> Result<SampleRecord, PipelineError> {
    let m = meta.k1.len();
    let k2 = view.vector(&meta.k2)?;
    let k3 = view.vector(&meta.k3)?;
    if k2.len() != crate::tensor::unique_count(m, 3) || k3.len() != crate::tensor::unique_count(m, 4) {
        return Err(PipelineError::CorruptFile("tensor entry count does not match the basis size".into()));
    }
    let v = view.matrix(&meta.v)?;
    if v.ncols() != m {
        return Err(PipelineError::CorruptFile("basis width does not match the stiffness".into()));
    }
    Ok(SampleRecord {
        params: meta.params,
        ops: RomOperators {
            v,
            k1: meta.k1,
            k2: SymTensor::from_unique(m, 3, k2),
            k3: SymTensor::from_unique(m, 4, k3),
            alpha: meta.alpha,
            beta: meta.beta,
            p_hat: meta.p_hat,
        },
        omega: meta.omega,
        lineage: meta.lineage,
        method: meta.method,
        scales: meta.scales,
        ident_diagnostic: meta.ident_diagnostic,
        modes: meta.modes,
        companions: meta.companions,
        counts: meta.counts,
    })
}

/// Serializes the database into container bytes.
pub fn encode(db: &RomDatabase) -> Vec<u8> {
    let mut p = Payload::default();
    let basis = BasisMeta {
        v: p.push_matrix("basis/v".into(), &db.basis.v),
        m_phi: db.basis.m_phi,
        m_theta: db.basis.m_theta,
        energy_phi: db.basis.energy_phi.clone(),
        energy_theta: db.basis.energy_theta.clone(),
        sigma_phi: db.basis.sigma_phi.clone(),
        sigma_theta: db.basis.sigma_theta.clone(),
    };
    let records = db.records.iter().enumerate().map(|(i, r)| record_meta(&format!("train/{i}"), r, &mut p)).collect();
    let validation_records = db
        .validation_records
        .iter()
        .enumerate()
        .map(|(i, r)| record_meta(&format!("validation/{i}"), r, &mut p))
        .collect();
    let prom = db.prom.as_ref().map(|pm| PromMeta {
        n: pm.n,
        m: pm.m,
        centers: pm.centers.clone(),
        interpolants: pm
            .interpolants
            .iter()
            .map(|it| InterpolantMeta {
                operator: it.operator,
                kernel: it.kernel,
                condition: it.condition,
                weights: p.push_matrix(format!("prom/{}", it.operator.name()), &it.weights),
                weights_lo: p.push_matrix(format!("prom/{}_lo", it.operator.name()), &it.weights_lo),
            })
            .collect(),
    });
    let Payload { arrays, data } = p;
    let manifest = Manifest {
        config: db.config.clone(),
        train: db.train.clone(),
        validation: db.validation.clone(),
        start: db.start,
        basis,
        records,
        validation_records,
        prom,
        report: db.report.clone(),
        arrays,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(json.len() + 8 * data.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&((8 * data.len()) as u64).to_le_bytes());
    for x in &data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8], PipelineError> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len());
    let end = end.ok_or_else(|| PipelineError::CorruptFile(format!("file ends inside the {what}")))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn read_u64(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize, PipelineError> {
    let s = take(bytes, pos, 8, what)?;
    usize::try_from(u64::from_le_bytes(s.try_into().expect("eight bytes")))
        .map_err(|_| PipelineError::CorruptFile(format!("{what} is too large")))
}

/// Parses container bytes.
pub fn decode(bytes: &[u8]) -> Result<RomDatabase, PipelineError> {
    let mut pos = 0;
    if take(bytes, &mut pos, MAGIC.len(), "header")? != MAGIC {
        return Err(PipelineError::CorruptFile("not a promforge database".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4, "header")?.try_into().expect("four bytes"));
    if version != FORMAT_VERSION {
        return Err(PipelineError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let mlen = read_u64(bytes, &mut pos, "manifest length")?;
    let manifest_bytes = take(bytes, &mut pos, mlen, "manifest")?;
    let plen = read_u64(bytes, &mut pos, "payload length")?;
    if plen % 8 != 0 {
        return Err(PipelineError::CorruptFile("payload length is not a multiple of 8".into()));
    }
    let payload = take(bytes, &mut pos, plen, "payload")?;
    let body_end = pos;
    let digest = take(bytes, &mut pos, DIGEST_LEN, "checksum")?;
    if pos != bytes.len() {
        return Err(PipelineError::CorruptFile("trailing bytes after the checksum".into()));
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != digest {
        return Err(PipelineError::ChecksumMismatch);
    }
    let manifest: Manifest =
        serde_json::from_slice(manifest_bytes).map_err(|e| PipelineError::CorruptFile(format!("manifest: {e}")))?;
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect();
    let view = PayloadView { arrays: &manifest.arrays, data };
    let basis = GlobalSummary {
        v: view.matrix(&manifest.basis.v)?,
        m_phi: manifest.basis.m_phi,
        m_theta: manifest.basis.m_theta,
        energy_phi: manifest.basis.energy_phi,
        energy_theta: manifest.basis.energy_theta,
        sigma_phi: manifest.basis.sigma_phi,
        sigma_theta: manifest.basis.sigma_theta,
    };
    let records = manifest.records.into_iter().map(|r| record_from(r, &view)).collect::<Result<Vec<_>, _>>()?;
    let validation_records =
        manifest.validation_records.into_iter().map(|r| record_from(r, &view)).collect::<Result<Vec<_>, _>>()?;
    let prom = match manifest.prom {
        None => None,
        Some(pm) => Some(PromModel {
            n: pm.n,
            m: pm.m,
            interpolants: pm
                .interpolants
                .into_iter()
                .map(|it| {
                    Ok(RbfInterpolant {
                        operator: it.operator,
                        kernel: it.kernel,
                        centers: pm.centers.clone(),
                        weights: view.matrix(&it.weights)?,
                        weights_lo: view.matrix(&it.weights_lo)?,
                        condition: it.condition,
                    })
                })
                .collect::<Result<_, PipelineError>>()?,
            centers: pm.centers,
        }),
    };
    if records.len() != manifest.train.len() || validation_records.len() != manifest.validation.len() {
        return Err(PipelineError::CorruptFile("sample count differs from the stored ROM count".into()));
    }
    Ok(RomDatabase {
        config: manifest.config,
        train: manifest.train,
        records,
        validation: manifest.validation,
        validation_records,
        basis,
        start: manifest.start,
        prom,
        report: manifest.report,
    })
}

pub fn persist_database(db: &RomDatabase, path: &Path) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, encode(db)).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

pub fn load_database(path: &Path) -> Result<RomDatabase, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::build::build_database;
    use crate::pipeline::config::tests::sample;

    fn small_db() -> RomDatabase {
        let cfg = sample()
            .with_overrides(&[
                "sampling.n_train=4".into(),
                "sampling.n_validation=2".into(),
                "fe.n_elements=16".into(),
                "basis.n_modes=6".into(),
            ])
            .unwrap();
        let mut db = build_database(&cfg).unwrap();
        db.fit().unwrap();
        db
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let db = small_db();
        let bytes = encode(&db);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, db);
        assert_eq!(encode(&back), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/db.prdb");
        persist_database(&db, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
        assert_eq!(load_database(&path).unwrap(), db);
    }

    #[test]
    fn interpolant_weights_round_trip_exactly() {
        let db = small_db();
        let back = decode(&encode(&db)).unwrap();
        let (a, b) = (db.prom.unwrap(), back.prom.unwrap());
        for (x, y) in a.interpolants.iter().zip(&b.interpolants) {
            assert!(x.weights.iter().zip(y.weights.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
            assert!(x.weights_lo.iter().zip(y.weights_lo.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
            assert_eq!(x.kernel, y.kernel);
        }
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = encode(&small_db());
        for cut in [4, 12, 100, bytes.len() - 40, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(PipelineError::CorruptFile(_))), "cut at {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(PipelineError::CorruptFile(_))));

        let mut version = bytes.clone();
        version[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(decode(&version), Err(PipelineError::VersionMismatch { found: 7, expected: 1 })));

        let mut flipped = bytes.clone();
        let k = bytes.len() - 100;
        flipped[k] ^= 0x01;
        assert!(matches!(decode(&flipped), Err(PipelineError::ChecksumMismatch)));

        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(PipelineError::CorruptFile(_))));
    }
}
