//! End-to-end orchestration: database construction, persistence,
//! interpolation fitting, the five-model benchmark and exports.

mod bench;
mod build;
mod config;
mod export;
mod store;

use thiserror::Error;

pub use bench::{
    dominant_period, relative_l2, run_benchmark, BenchmarkReport, ModelRun, RunStatus, TestPointReport, Timings,
};
pub use build::{
    build_database, fit_prom, local_assembly, recompute_rom, EvaluationCounts, GlobalSummary, Lineage, RomDatabase,
    SampleRecord,
};
pub use config::{
    BasisConfig, DampingConfig, FeConfig, IdentConfig, IntegrationConfig, InterpolationConfig, LoadConfig,
    OutputConfig, ParameterConfig, RunConfig, SamplingConfig,
};
pub use export::{export_histories, read_report, write_report, ExportSummary, ModelSummary, PointSummary};
pub use bench::{benchmark_point, test_points, BENCHMARK_MODELS};
pub use store::{decode, encode, load_database, persist_database, FORMAT_VERSION, MAGIC};

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("corrupt database file: {0}")]
    CorruptFile(String),
    #[error("database format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("database checksum mismatch")]
    ChecksumMismatch,
    #[error("{stage} failed for {role} sample {sample}: {source}")]
    Sample {
        stage: &'static str,
        role: &'static str,
        sample: usize,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("database has no fitted parametric model; run `fit` first")]
    MissingProm,
    #[error(transparent)]
    Fe(#[from] crate::fe::FeError),
    #[error(transparent)]
    Modal(#[from] crate::modal::ModalError),
    #[error(transparent)]
    Basis(#[from] crate::global_basis::BasisError),
    #[error(transparent)]
    Ident(#[from] crate::ident::IdentError),
    #[error(transparent)]
    Rom(#[from] crate::rom::RomError),
    #[error(transparent)]
    Prom(#[from] crate::prom::PromError),
    #[error(transparent)]
    Newmark(#[from] crate::newmark::NewmarkError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

impl PipelineError {
    pub(crate) fn at(self, stage: &'static str, role: &'static str, sample: usize) -> Self {
        PipelineError::Sample { stage, role, sample, source: Box::new(self) }
    }
}
