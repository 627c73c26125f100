//! Config file schema.
//!
//! ```toml
//! [scenario]
//! cab_nt_distance = 100        # required, metres
//! n_operators = 2
//! n_disturbers = "medium"      # or an integer
//! f_max = 35.2e6
//!
//! [cable]                      # optional, see CableModel
//! [fext]                       # optional, see FextModel
//!
//! [plan]
//! policy = "consecutive_block" # or "alternate_tone"
//! slot_width_hz = 4.4e6
//! swap = true
//! guard_tones = 0
//!
//! [experiment]
//! kind = "rate_vs_distance"
//! distances = [50, 100, 150]
//! trials = 1000
//! master_seed = 1
//! ```
//!
//! Unknown keys in any section are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{CableModel, FextModel, LinkModel};
use crate::error::{Result, SimError};
use crate::fairness::{DistanceGrid, FairnessBasis, DEFAULT_DELTA0};
use crate::rateengine::{DEFAULT_TRIALS, MIN_TRIALS};
use crate::scenario::{config_error, DisturberCount, LoadLevel, Scenario, ScenarioConfig};
use crate::toneplan::PartitionPolicy;

pub const F_MAX_SWEEP_HZ: [f64; 5] = [35.2e6, 52.8e6, 70.4e6, 88.0e6, 105.6e6];
pub const DEFAULT_SLOT_WIDTHS_HZ: [f64; 6] = [0.55e6, 1.1e6, 2.2e6, 4.4e6, 8.8e6, 17.6e6];
pub const DEFAULT_DEGRADATIONS_DB: [f64; 4] = [6.0, 10.0, 14.0, 20.0];
pub const DEFAULT_MASTER_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BandComparison,
    FairnessVsB,
    RateVsDistance,
    RateVsFmax,
    Degradation,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::BandComparison => "band_comparison",
            ExperimentKind::FairnessVsB => "fairness_vs_b",
            ExperimentKind::RateVsDistance => "rate_vs_distance",
            ExperimentKind::RateVsFmax => "rate_vs_fmax",
            ExperimentKind::Degradation => "degradation",
        }
    }
}

/// How SBV is reported in the lower band. Per-band experiments default to the
/// partitioned view so every band compares NV with a split, vectored alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBandView {
    /// Same shared NV computation as the NV column.
    Shared,
    /// Hypothetical tone-by-tone split of the lower band among operators, vectored.
    Partitioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessBasisName {
    UpperBand,
    Aggregate,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanConfig {
    policy: Option<String>,
    slot_width_hz: Option<f64>,
    swap: Option<bool>,
    guard_tones: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    kind: Option<ExperimentKind>,
    distances: Option<Vec<f64>>,
    f_max: Option<Vec<f64>>,
    n_disturbers: Option<Vec<DisturberCount>>,
    n_operators: Option<Vec<i64>>,
    r_v_db: Option<Vec<f64>>,
    slot_widths: Option<Vec<f64>>,
    trials: Option<i64>,
    master_seed: Option<u64>,
    output: Option<PathBuf>,
    d_min: Option<f64>,
    d_max: Option<f64>,
    d_step: Option<f64>,
    delta0: Option<f64>,
    fairness_basis: Option<FairnessBasisName>,
    sbv_lower_band: Option<LowerBandView>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<ScenarioConfig>,
    cable: Option<CableModel>,
    fext: Option<FextModel>,
    plan: Option<PlanConfig>,
    experiment: Option<ExperimentConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanSettings {
    pub policy: PartitionPolicy,
    pub guard_tones: usize,
}

impl Default for PlanSettings {
    fn default() -> Self {
        Self {
            policy: PartitionPolicy::AlternateTone,
            guard_tones: 0,
        }
    }
}

/// Fully resolved experiment description; every axis is concrete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: Option<ExperimentKind>,
    pub distances: Vec<f64>,
    pub f_max: Vec<f64>,
    pub n_disturbers: Vec<usize>,
    pub n_operators: Vec<usize>,
    pub r_v_db: Vec<f64>,
    pub slot_widths: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    pub distance_grid: DistanceGrid,
    pub delta0: f64,
    pub fairness_basis: FairnessBasisName,
    pub sbv_lower_band: LowerBandView,
}

impl ExperimentSpec {
    pub fn fairness_basis(&self) -> FairnessBasis {
        match self.fairness_basis {
            FairnessBasisName::UpperBand => FairnessBasis::UpperBand,
            FairnessBasisName::Aggregate => FairnessBasis::Aggregate {
                trials: self.trials,
                master_seed: self.master_seed,
            },
        }
    }

    pub fn require_kind(&self, kind: ExperimentKind) -> Result<()> {
        match self.kind {
            Some(k) if k == kind => Ok(()),
            Some(k) => Err(SimError::config(
                "experiment.kind",
                format!("expected `{}`, config has `{}`", kind.name(), k.name()),
            )),
            None => Err(SimError::config("experiment.kind", "missing required key")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub link: LinkModel,
    pub plan: PlanSettings,
    pub experiment: ExperimentSpec,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(config_error)?;
        let scenario = raw.scenario.unwrap_or_default().resolve()?;
        let link = LinkModel {
            cable: raw.cable.unwrap_or_default(),
            fext: raw.fext.unwrap_or_default(),
        };
        link.validate()?;
        let plan = resolve_plan(raw.plan.unwrap_or_default())?;
        let experiment = resolve_experiment(raw.experiment.unwrap_or_default(), &scenario)?;
        Ok(Self {
            scenario,
            link,
            plan,
            experiment,
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config {
            key: None,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_toml(&text)
    }

    /// Re-applies run overrides. Trial count is revalidated.
    pub fn with_overrides(mut self, seed: Option<u64>, trials: Option<usize>, output: Option<PathBuf>) -> Result<Self> {
        if let Some(seed) = seed {
            self.experiment.master_seed = seed;
        }
        if let Some(trials) = trials {
            check_trials(trials as i64)?;
            self.experiment.trials = trials;
        }
        if output.is_some() {
            self.experiment.output = output;
        }
        Ok(self)
    }

    /// Stable hash of the resolved configuration; equivalent configs hash identically
    /// whether defaults were written out or not.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("resolved config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Pretty resolved view printed by dry runs.
    pub fn resolved_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("resolved config serializes")
    }
}

fn resolve_plan(p: PlanConfig) -> Result<PlanSettings> {
    let guard_tones = match p.guard_tones {
        Some(g) if g >= 0 => g as usize,
        Some(g) => return Err(SimError::config("plan.guard_tones", format!("must be >= 0, got {g}"))),
        None => 0,
    };
    let policy = match p.policy.as_deref().unwrap_or("alternate_tone") {
        "alternate_tone" => {
            if p.slot_width_hz.is_some() {
                return Err(SimError::config(
                    "plan.slot_width_hz",
                    "only valid with policy = \"consecutive_block\"",
                ));
            }
            PartitionPolicy::AlternateTone
        }
        "consecutive_block" => {
            let slot_width_hz = p
                .slot_width_hz
                .ok_or_else(|| SimError::config("plan.slot_width_hz", "required for consecutive_block"))?;
            if !(slot_width_hz > 0.0) {
                return Err(SimError::config("plan.slot_width_hz", "must be positive"));
            }
            PartitionPolicy::ConsecutiveBlock {
                slot_width_hz,
                swap: p.swap.unwrap_or(false),
            }
        }
        other => {
            return Err(SimError::config(
                "plan.policy",
                format!("unknown policy `{other}` (expected alternate_tone or consecutive_block)"),
            ))
        }
    };
    Ok(PlanSettings { policy, guard_tones })
}

fn check_trials(trials: i64) -> Result<usize> {
    if trials < MIN_TRIALS as i64 {
        return Err(SimError::config(
            "experiment.trials",
            format!("at least {MIN_TRIALS} trials are required, got {trials}"),
        ));
    }
    Ok(trials as usize)
}

fn non_empty<T: Clone>(key: &str, given: Option<Vec<T>>, default: Vec<T>) -> Result<Vec<T>> {
    match given {
        Some(v) if v.is_empty() => Err(SimError::config(
            format!("experiment.{key}"),
            "sweep axis must not be empty",
        )),
        Some(v) => Ok(v),
        None => Ok(default),
    }
}

fn resolve_experiment(e: ExperimentConfig, s: &Scenario) -> Result<ExperimentSpec> {
    use ExperimentKind::*;
    let kind = e.kind;
    let loads = |levels: &[LoadLevel]| levels.iter().map(|l| l.disturbers()).collect::<Vec<_>>();
    let (d_distances, d_fmax, d_nus, d_nop): (Vec<f64>, Vec<f64>, Vec<usize>, Vec<usize>) = match kind {
        Some(BandComparison) => (vec![100.0, 250.0], vec![s.f_max], loads(&LoadLevel::ALL), vec![2, 3]),
        Some(RateVsDistance) => (
            (1..=12).map(|i| 50.0 * i as f64).collect(),
            F_MAX_SWEEP_HZ.to_vec(),
            loads(&[LoadLevel::Medium, LoadLevel::High]),
            vec![2, 3],
        ),
        Some(RateVsFmax) => (
            vec![100.0],
            F_MAX_SWEEP_HZ.to_vec(),
            loads(&[LoadLevel::Medium, LoadLevel::High]),
            vec![2, 3],
        ),
        Some(Degradation) => (vec![100.0, 250.0], vec![35.2e6], vec![12], vec![3]),
        Some(FairnessVsB) => (vec![], vec![35.2e6, 105.6e6], vec![s.n_disturbers], vec![2]),
        None => (
            vec![s.cab_nt_distance],
            vec![s.f_max],
            vec![s.n_disturbers],
            vec![s.n_operators],
        ),
    };
    let distances = non_empty("distances", e.distances, d_distances)?;
    if let Some(d) = distances.iter().find(|d| !(**d > 0.0)) {
        return Err(SimError::config(
            "experiment.distances",
            format!("distances must be positive, got {d}"),
        ));
    }
    let f_max = non_empty("f_max", e.f_max, d_fmax)?;
    if let Some(f) = f_max.iter().find(|f| !(**f >= crate::toneplan::SUB_CHANNEL_HZ)) {
        return Err(SimError::config(
            "experiment.f_max",
            format!("must be at least 17.6 MHz, got {f}"),
        ));
    }
    let n_disturbers: Vec<usize> = non_empty(
        "n_disturbers",
        e.n_disturbers,
        d_nus.into_iter().map(DisturberCount).collect(),
    )?
    .into_iter()
    .map(|c| c.0)
    .collect();
    if n_disturbers.contains(&0) {
        return Err(SimError::config("experiment.n_disturbers", "must be >= 1"));
    }
    let n_operators = non_empty(
        "n_operators",
        e.n_operators,
        d_nop.into_iter().map(|n| n as i64).collect(),
    )?;
    if let Some(n) = n_operators.iter().find(|n| **n < 1) {
        return Err(SimError::config(
            "experiment.n_operators",
            format!("must be >= 1, got {n}"),
        ));
    }
    let n_operators: Vec<usize> = n_operators.into_iter().map(|n| n as usize).collect();
    if kind == Some(FairnessVsB) && n_operators.iter().any(|&n| n < 2) {
        return Err(SimError::config(
            "experiment.n_operators",
            "fairness needs at least two operators",
        ));
    }
    let r_v_db = non_empty(
        "r_v_db",
        e.r_v_db,
        if kind == Some(Degradation) {
            DEFAULT_DEGRADATIONS_DB.to_vec()
        } else {
            vec![s.r_v_db]
        },
    )?;
    if let Some(r) = r_v_db.iter().find(|r| !(**r >= 0.0)) {
        return Err(SimError::config(
            "experiment.r_v_db",
            format!("must be >= 0 dB, got {r}"),
        ));
    }
    let slot_widths = non_empty("slot_widths", e.slot_widths, DEFAULT_SLOT_WIDTHS_HZ.to_vec())?;
    if let Some(b) = slot_widths.iter().find(|b| !(**b > 0.0)) {
        return Err(SimError::config(
            "experiment.slot_widths",
            format!("must be positive, got {b}"),
        ));
    }
    let trials = check_trials(e.trials.unwrap_or(DEFAULT_TRIALS as i64))?;
    let defaults = DistanceGrid::default();
    let distance_grid = DistanceGrid {
        d_min: e.d_min.unwrap_or(defaults.d_min),
        d_max: e.d_max.unwrap_or(defaults.d_max),
        d_step: e.d_step.unwrap_or(defaults.d_step),
    };
    distance_grid
        .points()
        .map_err(|err| SimError::config("experiment.d_min/d_max/d_step", err.to_string()))?;
    let delta0 = e.delta0.unwrap_or(DEFAULT_DELTA0);
    if !(0.0..=1.0).contains(&delta0) {
        return Err(SimError::config("experiment.delta0", "must lie in [0, 1]"));
    }
    let sbv_lower_band = e
        .sbv_lower_band
        .unwrap_or(if matches!(kind, Some(BandComparison | Degradation)) {
            LowerBandView::Partitioned
        } else {
            LowerBandView::Shared
        });
    Ok(ExperimentSpec {
        kind,
        distances,
        f_max,
        n_disturbers,
        n_operators,
        r_v_db,
        slot_widths,
        trials,
        master_seed: e.master_seed.unwrap_or(DEFAULT_MASTER_SEED),
        output: e.output,
        distance_grid,
        delta0,
        fairness_basis: e.fairness_basis.unwrap_or(FairnessBasisName::Aggregate),
        sbv_lower_band,
    })
}
