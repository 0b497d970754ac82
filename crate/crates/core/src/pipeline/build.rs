use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{InterpolationConfig, RunConfig};
use super::PipelineError;
use crate::fe::{build_assembly, FeAssembly, GeometryParams};
use crate::global_basis::{assemble_snapshots, build_global_rb, mass_orthogonalize, reorder_all, GlobalBasis};
use crate::ident::{identify_ed, identify_eed, plan_scales, CountingBlackBox, IdentMethod, IdentifiedTensors};
use crate::modal::{
    compute_dual_modes, compute_smds, dual_mode_scales, mpf, select_smds, select_vms, solve_vms, CompanionKind,
    CompanionLabel, CompanionSet, DualModeSettings, ModeSet,
};
use crate::prom::{log_grid, OperatorId, PromError, PromModel, ValidationReport, validate_eps};
use crate::rom::{rayleigh_params, RomOperators};
use crate::sampling::{denormalize, lhs_sample, SampleRole, SampleSet};

/// Black-box evaluations spent on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvaluationCounts {
    pub companion_forces: usize,
    pub companion_tangents: usize,
    pub ident_forces: usize,
    pub ident_tangents: usize,
}

/// How a sample's basis was ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    /// Training sample the basis was matched against (`None` for the start).
    pub reference: Option<usize>,
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    pub matched_mac: Vec<f64>,
}

/// One stored local ROM with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Physical parameters.
    pub params: Vec<f64>,
    pub ops: RomOperators,
    /// Reduced angular frequencies in basis order.
    pub omega: Vec<f64>,
    pub lineage: Lineage,
    pub method: IdentMethod,
    pub scales: Vec<f64>,
    pub ident_diagnostic: f64,
    /// 1-based numbers of the selected vibration modes (training samples).
    pub modes: Vec<usize>,
    pub companions: Vec<CompanionLabel>,
    pub counts: EvaluationCounts,
}

/// Global basis and its truncation data.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSummary {
    pub v: DMatrix<f64>,
    pub m_phi: usize,
    pub m_theta: usize,
    pub energy_phi: Vec<f64>,
    pub energy_theta: Vec<f64>,
    pub sigma_phi: Vec<f64>,
    pub sigma_theta: Vec<f64>,
}

impl From<GlobalBasis> for GlobalSummary {
    fn from(g: GlobalBasis) -> Self {
        Self {
            v: g.v,
            m_phi: g.m_phi,
            m_theta: g.m_theta,
            energy_phi: g.energy_phi,
            energy_theta: g.energy_theta,
            sigma_phi: g.sigma_phi,
            sigma_theta: g.sigma_theta,
        }
    }
}

/// Training ROMs, validation ROMs and (once fitted) the parametric model.
#[derive(Debug, Clone, PartialEq)]
pub struct RomDatabase {
    pub config: RunConfig,
    pub train: SampleSet,
    pub records: Vec<SampleRecord>,
    pub validation: SampleSet,
    pub validation_records: Vec<SampleRecord>,
    pub basis: GlobalSummary,
    /// Training sample the reordering started from.
    pub start: usize,
    pub prom: Option<PromModel>,
    pub report: Option<ValidationReport>,
}

impl RomDatabase {
    pub fn n(&self) -> usize {
        self.basis.v.nrows()
    }

    pub fn m(&self) -> usize {
        self.basis.v.ncols()
    }

    pub fn training_roms(&self) -> Vec<RomOperators> {
        self.records.iter().map(|r| r.ops.clone()).collect()
    }

    pub fn validation_roms(&self) -> Vec<RomOperators> {
        self.validation_records.iter().map(|r| r.ops.clone()).collect()
    }

    /// Fits the parametric model and stores it with its validation report.
    pub fn fit(&mut self) -> Result<(), PipelineError> {
        let (prom, report) = fit_prom(self, &self.validation_roms(), &self.config.interpolation)?;
        self.prom = Some(prom);
        self.report = Some(report);
        Ok(())
    }
}

pub fn local_assembly(cfg: &RunConfig, params: &[f64]) -> Result<FeAssembly, PipelineError> {
    Ok(build_assembly(GeometryParams::from_slice(params), cfg.fe.n_elements, cfg.fe.material, cfg.fe.restraint)?)
}

struct LocalBasis {
    assembly: FeAssembly,
    modes: ModeSet,
    companions: CompanionSet,
    counts: EvaluationCounts,
}

fn local_basis(cfg: &RunConfig, params: &[f64]) -> Result<LocalBasis, PipelineError> {
    let b = &cfg.basis;
    let assembly = local_assembly(cfg, params)?;
    let m = assembly.mass_matrix();
    let k1 = assembly.linear_stiffness();
    let all = solve_vms(&m, &k1, b.n_modes.min(assembly.n_free()))?;
    let pattern = assembly.uniform_pressure_pattern();
    let modes = select_vms(&all, &mpf(&all, &pattern), b.f_max, b.mpf_tol)?;
    let counting = CountingBlackBox::new(&assembly);
    let companions = match b.companion {
        CompanionKind::Smd => {
            let pairs = select_smds(&mpf(&modes, &pattern), b.k_pairs)?;
            compute_smds(&counting, &modes, &pairs, b.smd_step)?
        }
        CompanionKind::DualMode => {
            let scales = dual_mode_scales(&assembly, &modes, b.dual_mode_target)?;
            let settings = DualModeSettings { include_pairs: b.dual_mode_pairs, ..DualModeSettings::default() };
            compute_dual_modes(&counting, &modes, &scales, &settings)?
        }
    };
    let counts = EvaluationCounts {
        companion_forces: counting.force_evaluations(),
        companion_tangents: counting.tangent_evaluations(),
        ..EvaluationCounts::default()
    };
    drop(counting);
    Ok(LocalBasis { assembly, modes, companions, counts })
}

/// Identifies the tensors on an ordered, mass-orthonormal basis and builds
/// the local ROM with Rayleigh damping fitted to its two lowest frequencies.
fn local_rom(
    cfg: &RunConfig,
    assembly: &FeAssembly,
    v: DMatrix<f64>,
    omega: &[f64],
    p_hat: Vec<f64>,
) -> Result<(RomOperators, IdentifiedTensors, EvaluationCounts), PipelineError> {
    let scales = plan_scales(&v, assembly, cfg.identification.probe_target)?;
    let counting = CountingBlackBox::new(assembly);
    let tensors = match cfg.identification.method {
        IdentMethod::Eed => identify_eed(&counting, &v, &scales)?,
        IdentMethod::Ed => identify_ed(&counting, &v, &scales)?,
    };
    let counts = EvaluationCounts {
        ident_forces: counting.force_evaluations(),
        ident_tangents: counting.tangent_evaluations(),
        ..EvaluationCounts::default()
    };
    let mut sorted = omega.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (alpha, beta) = match sorted.as_slice() {
        [w1, w2, ..] => rayleigh_params(*w1, *w2, cfg.damping.zeta)?,
        _ => return Err(PipelineError::Config("Rayleigh damping needs a basis of at least two vectors".into())),
    };
    let k1 = omega.iter().map(|w| w * w).collect();
    let ops = RomOperators::new(v, k1, &tensors, alpha, beta, p_hat)?;
    Ok((ops, tensors, counts))
}

/// Runs the database construction for the training set and builds the
/// validation ROMs on the same global basis.
pub fn build_database(cfg: &RunConfig) -> Result<RomDatabase, PipelineError> {
    cfg.validate()?;
    let bounds = cfg.parameters.bounds();
    let np = bounds.dim();
    let s = &cfg.sampling;
    let train = lhs_sample(s.n_train, np, s.seed_train, SampleRole::Train)?;
    let validation = lhs_sample(s.n_validation, np, s.seed_validation, SampleRole::Validation)?;
    let params: Vec<Vec<f64>> = train.points.iter().map(|p| denormalize(p, &bounds)).collect();

    let locals: Vec<LocalBasis> = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| local_basis(cfg, p).map_err(|e| e.at("local basis", "training", i)))
        .collect::<Result<_, _>>()?;
    let modes: Vec<ModeSet> = locals.iter().map(|l| l.modes.clone()).collect();
    let companions: Vec<CompanionSet> = locals.iter().map(|l| l.companions.clone()).collect();
    let snapshots = assemble_snapshots(&modes, &companions)?;
    let global = build_global_rb(&snapshots, cfg.basis.e_phi, cfg.basis.e_theta)?;
    log::info!("global basis: {} modes + {} companions", global.m_phi, global.m_theta);

    let masses: Vec<DMatrix<f64>> = locals.iter().map(|l| l.assembly.mass_matrix()).collect();
    let oriented: Vec<(DMatrix<f64>, Vec<f64>)> = locals
        .par_iter()
        .zip(&masses)
        .enumerate()
        .map(|(i, (l, m))| {
            mass_orthogonalize(&global.v, m, &l.assembly.linear_stiffness())
                .map_err(|e| PipelineError::from(e).at("mass orthogonalization", "training", i))
        })
        .collect::<Result<_, _>>()?;
    let (bases, omegas): (Vec<_>, Vec<_>) = oriented.into_iter().unzip();
    let start = train.closest_to_center().expect("non-empty training set");
    let ordered = reorder_all(bases, omegas, &masses, &train, start)?;

    let records: Vec<SampleRecord> = (0..train.len())
        .into_par_iter()
        .map(|i| {
            let l = &locals[i];
            let (ops, tensors, counts) =
                local_rom(cfg, &l.assembly, ordered.bases[i].clone(), &ordered.omegas[i], train.points[i].clone())
                    .map_err(|e| e.at("identification", "training", i))?;
            Ok(SampleRecord {
                params: params[i].clone(),
                omega: ordered.omegas[i].clone(),
                lineage: Lineage {
                    reference: ordered.references[i],
                    permutation: ordered.permutations[i].clone(),
                    signs: ordered.signs[i].clone(),
                    matched_mac: ordered.matched_mac[i].clone(),
                },
                method: tensors.method,
                scales: tensors.scales,
                ident_diagnostic: tensors.asymmetry,
                modes: l.modes.mode_numbers.clone(),
                companions: l.companions.labels.clone(),
                counts: EvaluationCounts {
                    ident_forces: counts.ident_forces,
                    ident_tangents: counts.ident_tangents,
                    ..l.counts
                },
                ops,
            })
        })
        .collect::<Result<_, PipelineError>>()?;

    let mut db = RomDatabase {
        config: cfg.clone(),
        train,
        records,
        validation: validation.clone(),
        validation_records: Vec::new(),
        basis: global.into(),
        start,
        prom: None,
        report: None,
    };
    db.validation_records = validation
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| recompute_rom(&db, p).map_err(|e| e.at("recomputed ROM", "validation", i)))
        .collect::<Result<_, _>>()?;
    Ok(db)
}

/// Local ROM at an arbitrary normalized point: the global basis is
/// mass-orthogonalized there, ordered against the nearest training basis
/// and the tensors are identified afresh.
pub fn recompute_rom(db: &RomDatabase, p_hat: &[f64]) -> Result<SampleRecord, PipelineError> {
    let cfg = &db.config;
    let bounds = cfg.parameters.bounds();
    let params = denormalize(p_hat, &bounds);
    let assembly = local_assembly(cfg, &params)?;
    let mass = assembly.mass_matrix();
    let (v, omega) = mass_orthogonalize(&db.basis.v, &mass, &assembly.linear_stiffness())?;
    let j = db.train.nearest(p_hat).expect("non-empty training set");
    let reference = &db.records[j];
    let ref_mass = local_assembly(cfg, &reference.params)?.mass_matrix();
    let pair = SampleSet { points: vec![reference.ops.p_hat.clone(), p_hat.to_vec()], role: SampleRole::Test, seed: 0 };
    let ordered = reorder_all(
        vec![reference.ops.v.clone(), v],
        vec![reference.omega.clone(), omega],
        &[ref_mass, mass],
        &pair,
        0,
    )?;
    let v = ordered.bases[1].clone();
    let omega = ordered.omegas[1].clone();
    let (ops, tensors, counts) = local_rom(cfg, &assembly, v, &omega, p_hat.to_vec())?;
    Ok(SampleRecord {
        params,
        omega,
        lineage: Lineage {
            reference: Some(j),
            permutation: ordered.permutations[1].clone(),
            signs: ordered.signs[1].clone(),
            matched_mac: ordered.matched_mac[1].clone(),
        },
        method: tensors.method,
        scales: tensors.scales,
        ident_diagnostic: tensors.asymmetry,
        modes: Vec::new(),
        companions: Vec::new(),
        counts,
        ops,
    })
}

/// Selects a shape parameter per operator on the validation ROMs, then fits
/// the final interpolants on the training centers.
pub fn fit_prom(
    db: &RomDatabase,
    validation: &[RomOperators],
    cfg: &InterpolationConfig,
) -> Result<(PromModel, ValidationReport), PipelineError> {
    let train = db.training_roms();
    let grid = log_grid(cfg.eps_min, cfg.eps_max, cfg.eps_count);
    let report = validate_eps(&train, validation, cfg.kernel, &grid, cfg.metric)?;
    let prom = PromModel::fit(&train, cfg.kernel, &report.selected_array())?;
    for it in &prom.interpolants {
        let expected = it.operator.entry_count(db.n(), db.m());
        if it.weights.nrows() != expected || it.weights.ncols() != train.len() {
            return Err(PromError::Inconsistent(format!(
                "{} weights are {:?}, expected ({expected}, {})",
                it.operator.name(),
                it.weights.shape(),
                train.len()
            ))
            .into());
        }
    }
    debug_assert!(OperatorId::ALL.iter().all(|&op| prom.interpolant(op).operator == op));
    Ok((prom, report))
}
