use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::build::{local_assembly, recompute_rom, RomDatabase};
use super::PipelineError;
use crate::fe::LoadDescriptor;
use crate::linalg::lowest_modes;
use crate::newmark::{newmark_integrate, FullOrderModel, ModelKind, ReducedModel, TimeHistory};
use crate::prom::OperatorId;
use crate::rom::{rayleigh_params, reconstruct_dofs, RomOperators};
use crate::sampling::{denormalize, lhs_sample, SampleRole, SampleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed { message: String },
}

/// Monitored history of one model at one test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub kind: ModelKind,
    pub status: RunStatus,
    pub time: Vec<f64>,
    /// One trace per monitored DOF.
    pub traces: Vec<Vec<f64>>,
    /// Relative L2 error against the full-order history.
    pub rel_error: Option<f64>,
    /// Dominant free-vibration period of the first monitored DOF (s).
    pub period: Option<f64>,
    /// Largest absolute value of the first monitored DOF.
    pub peak: Option<f64>,
}

impl ModelRun {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPointReport {
    pub params: Vec<f64>,
    pub p_hat: Vec<f64>,
    /// Lowest full-order period (s).
    pub t1: f64,
    pub dt_hfm: f64,
    pub dt_rom: f64,
    pub monitored: Vec<usize>,
    pub models: Vec<ModelRun>,
}

impl TestPointReport {
    pub fn model(&self, kind: ModelKind) -> &ModelRun {
        self.models.iter().find(|m| m.kind == kind).expect("every model kind is present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n: usize,
    pub m: usize,
    pub thickness: f64,
    pub test: SampleSet,
    pub points: Vec<TestPointReport>,
    /// Selected shape parameter per operator.
    pub eps_table: Vec<(OperatorId, f64)>,
    pub ident_evaluations_per_sample: Vec<usize>,
}

/// Wall-clock seconds per test point and model, kept apart from the
/// deterministic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub points: Vec<Vec<(ModelKind, f64)>>,
}

pub const BENCHMARK_MODELS: [ModelKind; 5] =
    [ModelKind::Hfm, ModelKind::Interpolated, ModelKind::Closest, ModelKind::Recomputed, ModelKind::Linear];

/// `‖x − ref‖ / ‖ref‖` over all traces, with `reference` sampled every
/// `stride` steps.
pub fn relative_l2(traces: &[Vec<f64>], reference: &[Vec<f64>], stride: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, r) in traces.iter().zip(reference) {
        for (k, xi) in x.iter().enumerate() {
            let ri = r[k * stride];
            num += (xi - ri).powi(2);
            den += ri * ri;
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Mean spacing of upward mean-crossings of `x` after `t_start`.
pub fn dominant_period(time: &[f64], x: &[f64], t_start: f64) -> Option<f64> {
    let k0 = time.iter().position(|&t| t >= t_start)?;
    let window = &x[k0..];
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let mut crossings = Vec::new();
    for k in k0..x.len() - 1 {
        let (a, b) = (x[k] - mean, x[k + 1] - mean);
        if a < 0.0 && b >= 0.0 {
            let f = a / (a - b);
            crossings.push(time[k] + f * (time[k + 1] - time[k]));
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    Some((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

struct Grid {
    span: f64,
    dt_hfm: f64,
    dt_rom: f64,
    stride: usize,
}

fn failed(kind: ModelKind, message: String) -> ModelRun {
    ModelRun { kind, status: RunStatus::Failed { message }, time: Vec::new(), traces: Vec::new(), rel_error: None, period: None, peak: None }
}

fn finished(kind: ModelKind, time: Vec<f64>, traces: Vec<Vec<f64>>, pulse: f64) -> ModelRun {
    let period = traces.first().and_then(|x| dominant_period(&time, x, pulse));
    let peak = traces.first().map(|x| x.iter().fold(0.0_f64, |a, b| a.max(b.abs())));
    ModelRun { kind, status: RunStatus::Ok, time, traces, rel_error: None, period, peak }
}

fn reduced_run(
    db: &RomDatabase,
    ops: &RomOperators,
    load: &LoadDescriptor,
    grid: &Grid,
    dofs: &[usize],
    kind: ModelKind,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), PipelineError> {
    let model = ReducedModel::new(ops, load);
    let h: TimeHistory = newmark_integrate(&model, grid.span, grid.dt_rom, &db.config.integration.newmark(), None, kind)?;
    Ok((h.time.clone(), reconstruct_dofs(&ops.v, &h, dofs)))
}

/// Integrates the five benchmark models at one normalized test point.
pub fn benchmark_point(db: &RomDatabase, p_hat: &[f64]) -> Result<(TestPointReport, Vec<(ModelKind, f64)>), PipelineError> {
    let cfg = &db.config;
    let prom = db.prom.as_ref().ok_or(PipelineError::MissingProm)?;
    let params = denormalize(p_hat, &cfg.parameters.bounds());
    let assembly = local_assembly(cfg, &params)?;
    let (w2, _) = lowest_modes(&assembly.mass_matrix(), &assembly.linear_stiffness(), 2)?;
    let (w1, w2) = (w2[0].sqrt(), w2[1].sqrt());
    let t1 = 2.0 * PI / w1;
    let it = &cfg.integration;
    let n_rom = (it.periods * it.rom_steps_per_period as f64).ceil() as usize;
    let dt_rom = t1 / it.rom_steps_per_period as f64;
    let grid = Grid {
        span: n_rom as f64 * dt_rom,
        dt_hfm: t1 / it.hfm_steps_per_period as f64,
        dt_rom,
        stride: it.hfm_steps_per_period / it.rom_steps_per_period,
    };
    let dofs = if cfg.output.monitored_dofs.is_empty() {
        vec![assembly.midspan_transverse_dof()]
    } else {
        cfg.output.monitored_dofs.clone()
    };
    if let Some(&d) = dofs.iter().find(|&&d| d >= assembly.n_free()) {
        return Err(PipelineError::Config(format!("monitored DOF {d} exceeds {} free DOFs", assembly.n_free())));
    }
    let load = LoadDescriptor::new(assembly.uniform_pressure_pattern(), cfg.load.amplitude, cfg.load.duration)?;
    let recomputed = recompute_rom(db, p_hat).map(|r| r.ops).map_err(|e| e.to_string());
    let nearest = db.train.nearest(p_hat).expect("non-empty training set");

    let runs: Vec<(ModelRun, f64)> = BENCHMARK_MODELS
        .par_iter()
        .map(|&kind| {
            let clock = Instant::now();
            let result: Result<(Vec<f64>, Vec<Vec<f64>>), String> = match kind {
                ModelKind::Hfm => rayleigh_params(w1, w2, cfg.damping.zeta)
                    .map_err(PipelineError::from)
                    .and_then(|(a, b)| {
                        let model = FullOrderModel::new(&assembly, a, b, load.clone());
                        let h = newmark_integrate(&model, grid.span, grid.dt_hfm, &it.newmark(), None, kind)?;
                        Ok((h.time.clone(), dofs.iter().map(|&d| h.trace(d)).collect()))
                    })
                    .map_err(|e| e.to_string()),
                ModelKind::Interpolated => prom
                    .evaluate(p_hat, cfg.interpolation.structure_policy)
                    .map_err(PipelineError::from)
                    .and_then(|ops| reduced_run(db, &ops, &load, &grid, &dofs, kind))
                    .map_err(|e| e.to_string()),
                ModelKind::Closest => {
                    reduced_run(db, &db.records[nearest].ops, &load, &grid, &dofs, kind).map_err(|e| e.to_string())
                }
                ModelKind::Recomputed => recomputed
                    .clone()
                    .and_then(|ops| reduced_run(db, &ops, &load, &grid, &dofs, kind).map_err(|e| e.to_string())),
                ModelKind::Linear => recomputed.clone().and_then(|ops| {
                    reduced_run(db, &ops.linearize(), &load, &grid, &dofs, kind).map_err(|e| e.to_string())
                }),
                ModelKind::Rom => unreachable!("not a benchmark model"),
            };
            let run = match result {
                Ok((time, traces)) => finished(kind, time, traces, cfg.load.duration),
                Err(message) => {
                    log::warn!("{} model failed at {p_hat:?}: {message}", kind.name());
                    failed(kind, message)
                }
            };
            (run, clock.elapsed().as_secs_f64())
        })
        .collect();
    let timings = runs.iter().map(|(r, t)| (r.kind, *t)).collect();
    let mut models: Vec<ModelRun> = runs.into_iter().map(|(r, _)| r).collect();
    let hfm = models[0].clone();
    if hfm.is_ok() {
        for m in models.iter_mut().skip(1).filter(|m| m.is_ok()) {
            m.rel_error = Some(relative_l2(&m.traces, &hfm.traces, grid.stride));
        }
        models[0].rel_error = Some(0.0);
    }
    let report = TestPointReport {
        params,
        p_hat: p_hat.to_vec(),
        t1,
        dt_hfm: grid.dt_hfm,
        dt_rom: grid.dt_rom,
        monitored: dofs,
        models,
    };
    Ok((report, timings))
}

/// Latin hypercube test points shrunk into the inner box left by
/// `sampling.test_margin`.
pub fn test_points(db: &RomDatabase) -> Result<SampleSet, PipelineError> {
    let s = &db.config.sampling;
    let mut set = lhs_sample(s.n_test, db.config.parameters.bounds().dim(), s.seed_test, SampleRole::Test)?;
    for p in set.points.iter_mut() {
        for x in p.iter_mut() {
            *x = s.test_margin + (1.0 - 2.0 * s.test_margin) * *x;
        }
    }
    Ok(set)
}

/// Benchmarks the configured test set (or `points`, when given).
pub fn run_benchmark(db: &RomDatabase, points: Option<SampleSet>) -> Result<(BenchmarkReport, Timings), PipelineError> {
    let cfg = &db.config;
    let prom = db.prom.as_ref().ok_or(PipelineError::MissingProm)?;
    let test = match points {
        Some(p) => p,
        None => test_points(db)?,
    };
    let results: Vec<(TestPointReport, Vec<(ModelKind, f64)>)> = test
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| benchmark_point(db, p).map_err(|e| e.at("benchmark", "test", i)))
        .collect::<Result<_, _>>()?;
    let (points, timing): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let eps = prom.epsilons();
    let report = BenchmarkReport {
        n: db.n(),
        m: db.m(),
        thickness: cfg.fe.material.thickness,
        test,
        points,
        eps_table: OperatorId::ALL.iter().copied().zip(eps).collect(),
        ident_evaluations_per_sample: db.records.iter().map(|r| r.counts.ident_forces + r.counts.ident_tangents).collect(),
    };
    Ok((report, Timings { points: timing }))
}
