//! The obstacle bench: trial enumeration, settling, error metrics and the
//! summary report.
//!
//! A single-chain foot hangs from a vertical slider above three obstacles:
//! fixed supports under the heel and the metatarsus, and a moving obstacle
//! centred under one of the six fascia modules. Each trial settles the foot
//! under a load and reads the vertical obstacle forces and the sagittal
//! rotation of every fascia module.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{ObstacleRole, ObstacleSpec};
use crate::error::{Error, Result};
use crate::kinematics::FootKinematics;
use crate::model::{FootModel, FASCIA_MODULES};
use crate::solver::{settle, Scene, SolverSettings};

pub const LOADS_N: [f64; 2] = [12.0, 24.0];
pub const HEIGHTS_M: [f64; 4] = [0.007, 0.011, 0.015, 0.019];

/// One bench scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    /// N
    pub load: f64,
    /// Moving-obstacle height (m).
    pub obstacle_height: f64,
    /// Fascia module under the moving obstacle, 1..=6.
    pub position: usize,
    /// rad
    pub initial_inclination: f64,
    /// Shift of the heel support from its nominal place (m).
    pub heel_dx: f64,
    /// Shift of the metatarsus support (m).
    pub meta_dx: f64,
}

impl TrialConfig {
    pub fn key(&self) -> TrialKey {
        TrialKey::new(self.load, self.obstacle_height, self.position)
    }
}

/// Identity of a trial independent of perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialKey {
    /// Load rounded to 0.1 N.
    pub load_dn: i64,
    /// Height rounded to 0.1 mm.
    pub height_dmm: i64,
    pub position: usize,
}

impl TrialKey {
    pub fn new(load: f64, height_m: f64, position: usize) -> Self {
        Self {
            load_dn: (load * 10.0).round() as i64,
            height_dmm: (height_m * 1e4).round() as i64,
            position,
        }
    }
}

impl std::fmt::Display for TrialKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} N / {} mm / p{}",
            self.load_dn as f64 / 10.0,
            self.height_dmm as f64 / 10.0,
            self.position
        )
    }
}

/// All 2 × 4 × 6 = 48 trials, ordered by load, height, then position.
pub fn enumerate_trials() -> Vec<TrialConfig> {
    let mut out = Vec::with_capacity(48);
    for &load in &LOADS_N {
        for &obstacle_height in &HEIGHTS_M {
            for position in 1..=FASCIA_MODULES {
                out.push(TrialConfig {
                    load,
                    obstacle_height,
                    position,
                    initial_inclination: 0.0,
                    heel_dx: 0.0,
                    meta_dx: 0.0,
                });
            }
        }
    }
    out
}

/// Fixed geometry of the bench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSetup {
    /// Height of the heel and metatarsus supports (m).
    pub support_height: f64,
    /// Width of every obstacle (m).
    pub obstacle_width: f64,
    /// Whether the ground plane also takes contacts.
    pub ground: bool,
}

impl Default for BenchSetup {
    fn default() -> Self {
        Self {
            support_height: 0.019,
            obstacle_width: ObstacleSpec::DEFAULT_WIDTH,
            ground: true,
        }
    }
}

impl BenchSetup {
    /// Obstacles and load for one trial. Supports sit under the heel and
    /// metatarsus centres; the moving obstacle under the centre of module
    /// `position`, all measured on the flat, level foot.
    pub fn scene(&self, model: &FootModel, trial: &TrialConfig) -> Scene {
        let sole = model.sole();
        let mut starts = Vec::with_capacity(sole.len());
        let mut x = 0.0;
        for m in &sole {
            starts.push(x);
            x += m.pitch;
        }
        let center = |k: usize| starts[k] + 0.5 * sole[k].pitch;
        let obstacle = |role, center_x, height| ObstacleSpec {
            center_x,
            width: self.obstacle_width,
            height,
            role,
        };
        let mut obstacles = vec![
            obstacle(ObstacleRole::Heel, center(0) + trial.heel_dx, self.support_height),
            obstacle(ObstacleRole::Moving, center(trial.position), trial.obstacle_height),
            obstacle(
                ObstacleRole::Metatarsus,
                center(model.metatarsus_index()) + trial.meta_dx,
                self.support_height,
            ),
        ];
        if self.ground {
            obstacles.push(ObstacleSpec::ground());
        }
        Scene {
            obstacles,
            load: trial.load,
            pitch0: trial.initial_inclination,
        }
    }
}

/// Settled outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: TrialConfig,
    /// Vertical forces on the heel, moving and metatarsus obstacles (N).
    pub forces: [f64; 3],
    /// Sagittal rotation of m1..m6 (rad).
    pub rotations: Vec<f64>,
    /// Sum of all vertical contact forces, ground included (N).
    pub total_contact_force: f64,
    /// Load plus model weight (N).
    pub expected_total: f64,
    pub coupling_angles: Vec<f64>,
    /// m
    pub closure_residual: f64,
    /// m
    pub tendon_length: f64,
    /// m
    pub tendon_max_length: f64,
    /// s
    pub settle_time: f64,
    /// Present when the trial diverged.
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }

    /// |Σ contact forces − (load + weight)| / (load + weight).
    pub fn force_balance_error(&self) -> f64 {
        (self.total_contact_force - self.expected_total).abs() / self.expected_total
    }

    /// Largest excursion of a coupling angle beyond its limits (deg).
    pub fn max_limit_excess_deg(&self, model: &FootModel) -> f64 {
        self.coupling_angles
            .iter()
            .zip(&model.couplings)
            .map(|(a, c)| c.limit_excess(*a).abs().to_degrees())
            .fold(0.0, f64::max)
    }

    fn failed(config: TrialConfig, expected_total: f64, message: String) -> Self {
        Self {
            config,
            forces: [f64::NAN; 3],
            rotations: vec![f64::NAN; FASCIA_MODULES],
            total_contact_force: f64::NAN,
            expected_total,
            coupling_angles: vec![],
            closure_residual: f64::NAN,
            tendon_length: f64::NAN,
            tendon_max_length: f64::NAN,
            settle_time: f64::NAN,
            failure: Some(message),
        }
    }
}

/// Settles one trial. Forces and rotations come from the final step.
pub fn run_trial(
    model: &FootModel,
    settings: &SolverSettings,
    setup: &BenchSetup,
    trial: &TrialConfig,
) -> TrialResult {
    let scene = setup.scene(model, trial);
    let expected_total = trial.load + model.total_mass() * settings.gravity;
    let settled = match settle(model, &scene, settings) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("trial {} failed: {e}", trial.key());
            return TrialResult::failed(*trial, expected_total, e.to_string());
        }
    };
    let mut forces = [0.0; 3];
    for c in &settled.contacts {
        let slot = match c.role {
            ObstacleRole::Heel => 0,
            ObstacleRole::Moving => 1,
            ObstacleRole::Metatarsus => 2,
            ObstacleRole::Ground => continue,
        };
        forces[slot] += c.normal_force;
    }
    let kin = FootKinematics::new(model, &settled.state.q);
    let rotations = (1..=FASCIA_MODULES).map(|k| kin.sole[k].rotation.angle()).collect();
    log::debug!(
        "trial {}: forces {:?}, settled in {:.3} s",
        trial.key(),
        forces,
        settled.state.time
    );
    TrialResult {
        config: *trial,
        forces,
        rotations,
        total_contact_force: settled.total_contact_force(),
        expected_total,
        coupling_angles: settled.state.q.coupling_angles.clone(),
        closure_residual: settled.closure_residual,
        tendon_length: settled.tendon.total_length,
        tendon_max_length: model.tendon.max_length,
        settle_time: settled.state.time,
        failure: None,
    }
}

/// Runs `trials` on `workers` threads (0 = all cores). Results keep the
/// order of `trials` regardless of scheduling.
pub fn run_trials(
    model: &FootModel,
    settings: &SolverSettings,
    setup: &BenchSetup,
    trials: &[TrialConfig],
    workers: usize,
) -> Result<Vec<TrialResult>> {
    settings.check()?;
    if workers == 1 {
        return Ok(trials.iter().map(|t| run_trial(model, settings, setup, t)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Usage(e.to_string()))?;
    Ok(pool.install(|| {
        trials
            .par_iter()
            .map(|t| run_trial(model, settings, setup, t))
            .collect()
    }))
}

/// Runs the full 48-trial bench.
pub fn run_bench(
    model: &FootModel,
    settings: &SolverSettings,
    setup: &BenchSetup,
    workers: usize,
) -> Result<Vec<TrialResult>> {
    run_trials(model, settings, setup, &enumerate_trials(), workers)
}

/// `(f̂ − f̃) / f̃`, undefined when the measured force is zero.
pub fn relative_error(f_sim: f64, f_exp: f64) -> Option<f64> {
    if f_exp == 0.0 {
        None
    } else {
        Some((f_sim - f_exp) / f_exp)
    }
}

/// Error on the total vertical force over the three obstacles.
pub fn total_force_error(sim: &[f64; 3], exp: &[f64; 3]) -> Option<f64> {
    let denom: f64 = exp.iter().sum();
    if denom == 0.0 {
        return None;
    }
    let num: f64 = sim.iter().zip(exp).map(|(s, e)| s - e).sum();
    Some(num / denom)
}

/// Removes the mean offset between simulated and measured rotations.
/// Returns the per-module errors and the offset.
pub fn rotation_errors(sim: &[f64], exp: &[f64]) -> Result<(Vec<f64>, f64)> {
    if sim.len() != exp.len() {
        return Err(Error::Domain(format!(
            "rotation vectors differ in length ({} vs {})",
            sim.len(),
            exp.len()
        )));
    }
    if sim.is_empty() {
        return Ok((vec![], 0.0));
    }
    let offset = sim.iter().zip(exp).map(|(s, e)| s - e).sum::<f64>() / sim.len() as f64;
    let errors = sim.iter().zip(exp).map(|(s, e)| (s - offset) - e).collect();
    Ok((errors, offset))
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Normalisation of the standard deviation used by the outlier filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    /// Divide by n − 1.
    #[default]
    Sample,
    /// Divide by n.
    Population,
}

/// Keeps the values not above mean + sample standard deviation. Fewer than
/// two values are returned unchanged.
pub fn mean_std_filter(values: &[f64]) -> Vec<f64> {
    mean_std_filter_with(values, StdKind::Sample)
}

pub fn mean_std_filter_with(values: &[f64], kind: StdKind) -> Vec<f64> {
    if values.len() < 2 {
        return values.to_vec();
    }
    let m = mean(values).unwrap_or(0.0);
    let denom = match kind {
        StdKind::Sample => values.len() - 1,
        StdKind::Population => values.len(),
    };
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / denom as f64;
    let threshold = m + var.sqrt();
    values.iter().copied().filter(|v| *v <= threshold).collect()
}

/// Measured forces and rotations for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentalRecord {
    pub load: f64,
    /// m
    pub obstacle_height: f64,
    pub position: usize,
    /// Heel, moving, metatarsus (N).
    pub forces: [f64; 3],
    /// m1..m6 (rad).
    pub rotations: Vec<f64>,
}

impl ExperimentalRecord {
    pub fn key(&self) -> TrialKey {
        TrialKey::new(self.load, self.obstacle_height, self.position)
    }

    /// A record equal to a simulated result.
    pub fn from_result(r: &TrialResult) -> Self {
        Self {
            load: r.config.load,
            obstacle_height: r.config.obstacle_height,
            position: r.config.position,
            forces: r.forces,
            rotations: r.rotations.clone(),
        }
    }
}

/// Published mean relative force errors (percent) for side-by-side reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub label: String,
    pub heel_pct: f64,
    pub modules_pct: f64,
    pub metatarsus_pct: f64,
}

pub fn baseline_rows() -> Vec<BaselineRow> {
    [
        ("MuJoCo", 14.6, 33.2, 21.7),
        ("MuJoCo Filtered", 10.5, 21.2, 13.1),
        ("Analytical", 31.0, 59.5, 7.2),
        ("Analytical Filtered", 22.4, 54.5, 5.2),
    ]
    .into_iter()
    .map(|(label, heel_pct, modules_pct, metatarsus_pct)| BaselineRow {
        label: label.into(),
        heel_pct,
        modules_pct,
        metatarsus_pct,
    })
    .collect()
}

/// Errors of one trial against its measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialErrors {
    pub key: TrialKey,
    pub e_h: Option<f64>,
    pub e_p: Option<f64>,
    pub e_m: Option<f64>,
    pub e_t: Option<f64>,
    pub rotation_errors: Vec<f64>,
    pub rotation_offset: f64,
}

/// Mean |e_b| for one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub component: String,
    pub unfiltered_mean_pct: Option<f64>,
    pub filtered_mean_pct: Option<f64>,
    /// Trials with a defined relative error.
    pub n_defined: usize,
    /// Trials whose measured force was zero.
    pub n_undefined: usize,
    /// Values removed by the outlier filter.
    pub n_filtered_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDiagnostics {
    pub trials: usize,
    pub failed: usize,
    pub max_force_balance_error: f64,
    /// m
    pub max_closure_residual: f64,
    /// max over trials of tendon length / max length
    pub max_tendon_ratio: f64,
    /// Largest excursion of a coupling beyond its limits (deg).
    pub max_limit_excess_deg: f64,
    /// s
    pub max_settle_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub filter: String,
    pub experimental_supplied: bool,
    pub components: Vec<ComponentSummary>,
    /// Mean |e_T| (percent).
    pub total_force_mean_pct: Option<f64>,
    /// Mean |rotation error| per module (rad).
    pub rotation_mean_abs: Vec<Option<f64>>,
    pub baselines: Vec<BaselineRow>,
    pub trials: Vec<TrialErrors>,
    /// Trials without a matching experimental record.
    pub unmatched_trials: Vec<String>,
    pub diagnostics: SimulationDiagnostics,
}

fn filter_note(kind: StdKind) -> String {
    let which = match kind {
        StdKind::Sample => "sample",
        StdKind::Population => "population",
    };
    format!("mean + {which} standard deviation filter applied per component to |e_b|")
}
pub const COMPONENTS: [&str; 3] = ["heel", "modules", "metatarsus"];

fn component_summary(name: &str, values: &[Option<f64>], kind: StdKind) -> ComponentSummary {
    let defined: Vec<f64> = values.iter().flatten().map(|v| v.abs()).collect();
    let filtered = mean_std_filter_with(&defined, kind);
    ComponentSummary {
        component: name.into(),
        unfiltered_mean_pct: mean(&defined).map(|m| 100.0 * m),
        filtered_mean_pct: mean(&filtered).map(|m| 100.0 * m),
        n_defined: defined.len(),
        n_undefined: values.len() - defined.len(),
        n_filtered_out: defined.len() - filtered.len(),
    }
}

fn diagnostics(model: &FootModel, results: &[TrialResult]) -> SimulationDiagnostics {
    let ok: Vec<&TrialResult> = results.iter().filter(|r| r.ok()).collect();
    let fold = |f: &dyn Fn(&TrialResult) -> f64| ok.iter().map(|r| f(r)).fold(0.0, f64::max);
    SimulationDiagnostics {
        trials: results.len(),
        failed: results.len() - ok.len(),
        max_force_balance_error: fold(&|r| r.force_balance_error()),
        max_closure_residual: fold(&|r| r.closure_residual),
        max_tendon_ratio: fold(&|r| r.tendon_length / r.tendon_max_length),
        max_limit_excess_deg: fold(&|r| r.max_limit_excess_deg(model)),
        max_settle_time: fold(&|r| r.settle_time),
    }
}

/// Builds the error report. Without experimental data only the simulation
/// diagnostics and the baseline rows are filled.
pub fn summarize(
    model: &FootModel,
    results: &[TrialResult],
    experimental: Option<&[ExperimentalRecord]>,
) -> ErrorReport {
    summarize_with(model, results, experimental, StdKind::Sample)
}

pub fn summarize_with(
    model: &FootModel,
    results: &[TrialResult],
    experimental: Option<&[ExperimentalRecord]>,
    filter: StdKind,
) -> ErrorReport {
    let mut trials = Vec::new();
    let mut unmatched = Vec::new();
    if let Some(exp) = experimental {
        for r in results.iter().filter(|r| r.ok()) {
            let key = r.config.key();
            let Some(rec) = exp.iter().find(|e| e.key() == key) else {
                unmatched.push(key.to_string());
                continue;
            };
            let (rotation_errors, rotation_offset) =
                rotation_errors(&r.rotations, &rec.rotations).unwrap_or_else(|e| {
                    log::warn!("trial {key}: {e}");
                    (vec![], 0.0)
                });
            trials.push(TrialErrors {
                key,
                e_h: relative_error(r.forces[0], rec.forces[0]),
                e_p: relative_error(r.forces[1], rec.forces[1]),
                e_m: relative_error(r.forces[2], rec.forces[2]),
                e_t: total_force_error(&r.forces, &rec.forces),
                rotation_errors,
                rotation_offset,
            });
        }
    }

    let components = if experimental.is_some() {
        let pick = |f: fn(&TrialErrors) -> Option<f64>| trials.iter().map(f).collect::<Vec<_>>();
        vec![
            component_summary(COMPONENTS[0], &pick(|t| t.e_h), filter),
            component_summary(COMPONENTS[1], &pick(|t| t.e_p), filter),
            component_summary(COMPONENTS[2], &pick(|t| t.e_m), filter),
        ]
    } else {
        vec![]
    };
    let total: Vec<f64> = trials.iter().filter_map(|t| t.e_t).map(f64::abs).collect();
    let rotation_mean_abs = (0..FASCIA_MODULES)
        .map(|k| {
            let v: Vec<f64> = trials
                .iter()
                .filter_map(|t| t.rotation_errors.get(k))
                .map(|e| e.abs())
                .collect();
            mean(&v)
        })
        .collect();

    ErrorReport {
        filter: filter_note(filter),
        experimental_supplied: experimental.is_some(),
        components,
        total_force_mean_pct: mean(&total).map(|m| 100.0 * m),
        rotation_mean_abs: if experimental.is_some() { rotation_mean_abs } else { vec![] },
        baselines: baseline_rows(),
        trials,
        unmatched_trials: unmatched,
        diagnostics: diagnostics(model, results),
    }
}

/// Magnitudes of the sensitivity perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityDeltas {
    /// ± shift of the heel support (m).
    pub heel_dx: f64,
    /// ± shift of the metatarsus support (m).
    pub meta_dx: f64,
    /// Inclinations 1°..=this many degrees are swept; 0 disables.
    pub max_incline_deg: u32,
}

impl Default for SensitivityDeltas {
    fn default() -> Self {
        Self {
            heel_dx: 0.004,
            meta_dx: 0.004,
            max_incline_deg: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    HeelDx,
    MetaDx,
    Incline,
}

impl Perturbation {
    pub fn label(&self) -> &'static str {
        match self {
            Perturbation::HeelDx => "heel_dx_mm",
            Perturbation::MetaDx => "meta_dx_mm",
            Perturbation::Incline => "incline_deg",
        }
    }
}

/// One perturbation level of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub parameter: Perturbation,
    /// mm or degrees, per `parameter`.
    pub value: f64,
    /// Mean |e_b| per component (percent).
    pub mean_pct: [Option<f64>; 3],
    /// Change of the mean |e_b| against the unperturbed run (percentage points).
    pub delta_pct: [Option<f64>; 3],
    pub failed_trials: usize,
}

/// The sweep levels for `deltas`, one per row of the table.
pub fn sensitivity_levels(deltas: &SensitivityDeltas) -> Vec<(Perturbation, f64)> {
    let mut out = Vec::new();
    let mut pm = |p: Perturbation, d: f64| {
        let mm = d * 1e3;
        if mm == 0.0 {
            out.push((p, 0.0));
        } else {
            out.push((p, -mm));
            out.push((p, mm));
        }
    };
    pm(Perturbation::HeelDx, deltas.heel_dx);
    pm(Perturbation::MetaDx, deltas.meta_dx);
    for deg in 1..=deltas.max_incline_deg {
        out.push((Perturbation::Incline, f64::from(deg)));
    }
    out
}

pub fn perturbed_trials(p: Perturbation, value: f64) -> Vec<TrialConfig> {
    enumerate_trials()
        .into_iter()
        .map(|mut t| {
            match p {
                Perturbation::HeelDx => t.heel_dx = value * 1e-3,
                Perturbation::MetaDx => t.meta_dx = value * 1e-3,
                Perturbation::Incline => t.initial_inclination = value.to_radians(),
            }
            t
        })
        .collect()
}

/// Output of [`sensitivity_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTable {
    pub baseline: Vec<TrialResult>,
    pub baseline_mean_pct: [Option<f64>; 3],
    pub rows: Vec<SensitivityRow>,
    /// Results per row, same order.
    pub results: Vec<Vec<TrialResult>>,
}

fn mean_components(model: &FootModel, results: &[TrialResult], reference: &[ExperimentalRecord]) -> [Option<f64>; 3] {
    let report = summarize(model, results, Some(reference));
    let mut out = [None; 3];
    for (slot, c) in out.iter_mut().zip(&report.components) {
        *slot = c.unfiltered_mean_pct;
    }
    out
}

/// Re-runs the bench at every perturbation level and reports the mean |e_b|
/// per component. Errors are measured against `experimental` when given,
/// otherwise against the unperturbed simulation.
pub fn sensitivity_sweep(
    model: &FootModel,
    settings: &SolverSettings,
    setup: &BenchSetup,
    deltas: &SensitivityDeltas,
    experimental: Option<&[ExperimentalRecord]>,
    workers: usize,
) -> Result<SensitivityTable> {
    let baseline = run_bench(model, settings, setup, workers)?;
    let reference: Vec<ExperimentalRecord> = match experimental {
        Some(e) => e.to_vec(),
        None => baseline.iter().filter(|r| r.ok()).map(ExperimentalRecord::from_result).collect(),
    };
    let baseline_mean_pct = mean_components(model, &baseline, &reference);
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for (parameter, value) in sensitivity_levels(deltas) {
        let results = run_trials(model, settings, setup, &perturbed_trials(parameter, value), workers)?;
        let mean_pct = mean_components(model, &results, &reference);
        let mut delta_pct = [None; 3];
        for i in 0..3 {
            delta_pct[i] = match (mean_pct[i], baseline_mean_pct[i]) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
        }
        rows.push(SensitivityRow {
            parameter,
            value,
            mean_pct,
            delta_pct,
            failed_trials: results.iter().filter(|r| !r.ok()).count(),
        });
        all.push(results);
    }
    Ok(SensitivityTable {
        baseline,
        baseline_mean_pct,
        rows,
        results: all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::HashSet;

    #[test]
    fn forty_eight_unique_trials() {
        let trials = enumerate_trials();
        assert_eq!(trials.len(), 48);
        let keys: HashSet<TrialKey> = trials.iter().map(TrialConfig::key).collect();
        assert_eq!(keys.len(), 48);
        let heights: HashSet<i64> = trials.iter().map(|t| (t.obstacle_height * 1e3).round() as i64).collect();
        assert_eq!(heights, HashSet::from([7, 11, 15, 19]));
        let loads: HashSet<i64> = trials.iter().map(|t| t.load as i64).collect();
        assert_eq!(loads, HashSet::from([12, 24]));
        assert!(trials.iter().all(|t| (1..=6).contains(&t.position)));
    }

    #[test]
    fn relative_error_examples() {
        assert_abs_diff_eq!(relative_error(12.0, 10.0).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(relative_error(7.5, 7.5), Some(0.0));
        assert_eq!(relative_error(1.0, 0.0), None);
    }

    #[test]
    fn total_force_error_examples() {
        assert_eq!(total_force_error(&[5.0, 3.0, 4.0], &[6.0, 2.0, 4.0]), Some(0.0));
        assert_eq!(total_force_error(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(0.0));
        assert_abs_diff_eq!(total_force_error(&[6.0; 3], &[5.0; 3]).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(total_force_error(&[1.0; 3], &[0.0; 3]), None);
    }

    #[test]
    fn rotation_offset_removal() {
        let sim = [0.15, 0.25, 0.35, 0.1, 0.2, 0.3];
        let exp: Vec<f64> = sim.iter().map(|s| s - 0.05).collect();
        let (err, offset) = rotation_errors(&sim, &exp).unwrap();
        assert_abs_diff_eq!(offset, 0.05, epsilon = 1e-15);
        for e in err {
            assert_abs_diff_eq!(e, 0.0, epsilon = 1e-15);
        }
        let (err, offset) = rotation_errors(&sim, &sim).unwrap();
        assert_eq!(offset, 0.0);
        assert!(err.iter().all(|e| *e == 0.0));
        assert!(rotation_errors(&sim, &sim[..5]).is_err());
    }

    #[test]
    fn filter_examples() {
        // mean 0.2075, sample std ≈ 0.1945, threshold ≈ 0.402
        let kept = mean_std_filter(&[0.1, 0.12, 0.11, 0.5]);
        assert_eq!(kept, vec![0.1, 0.12, 0.11]);
        assert_abs_diff_eq!(mean(&kept).unwrap(), 0.11, epsilon = 1e-15);
        assert_eq!(mean_std_filter(&kept), kept);
        assert_eq!(mean_std_filter(&[0.3; 5]), vec![0.3; 5]);
        assert_eq!(mean_std_filter(&[0.9]), vec![0.9]);
        // population std is smaller, so the threshold drops below 0.12
        let pop = mean_std_filter_with(&[0.1, 0.12, 0.11, 0.5], StdKind::Population);
        assert_eq!(pop, vec![0.1, 0.12, 0.11]);
        assert_eq!(mean_std_filter_with(&[0.0, 2.0, 2.0, 3.0], StdKind::Population), vec![0.0, 2.0, 2.0]);
        assert_eq!(mean_std_filter(&[0.0, 2.0, 2.0, 3.0]), vec![0.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn baselines_are_published_values() {
        let rows = baseline_rows();
        let flat: Vec<f64> = rows
            .iter()
            .flat_map(|r| [r.heel_pct, r.modules_pct, r.metatarsus_pct])
            .collect();
        assert_eq!(flat, vec![14.6, 33.2, 21.7, 10.5, 21.2, 13.1, 31.0, 59.5, 7.2, 22.4, 54.5, 5.2]);
    }

    #[test]
    fn levels_one_row_per_perturbation() {
        assert_eq!(sensitivity_levels(&SensitivityDeltas::default()).len(), 9);
        let zero = SensitivityDeltas {
            heel_dx: 0.0,
            meta_dx: 0.0,
            max_incline_deg: 0,
        };
        assert_eq!(sensitivity_levels(&zero), vec![(Perturbation::HeelDx, 0.0), (Perturbation::MetaDx, 0.0)]);
        assert_eq!(perturbed_trials(Perturbation::HeelDx, 0.0), enumerate_trials());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rotation_errors_shift_invariant(
                sim in proptest::collection::vec(-1.0f64..1.0, 6),
                exp in proptest::collection::vec(-1.0f64..1.0, 6),
                shift in -0.5f64..0.5,
            ) {
                let (a, _) = rotation_errors(&sim, &exp).unwrap();
                let shifted: Vec<f64> = sim.iter().map(|s| s + shift).collect();
                let (b, _) = rotation_errors(&shifted, &exp).unwrap();
                prop_assert!(a.iter().sum::<f64>().abs() < 1e-12);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }

            #[test]
            fn filter_never_raises_the_mean(values in proptest::collection::vec(0.0f64..2.0, 2..40)) {
                let kept = mean_std_filter(&values);
                prop_assert!(!kept.is_empty());
                prop_assert!(mean(&kept).unwrap() <= mean(&values).unwrap() + 1e-12);
            }
        }
    }
}
