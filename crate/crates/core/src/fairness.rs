//! Rate-difference fairness between operators and band-slot width selection.
//!
//! `delta_rb(d) = (max_o R_o(d) - min_o R_o(d)) / max_o R_o(d)`; for two operators this is
//! `|R_1 - R_2| / max(R_1, R_2)`. When every operator gets nothing the delta is 0.

use serde::{Deserialize, Serialize};

use crate::channel::LinkModel;
use crate::error::{Result, SimError};
use crate::exec::{try_map_indexed, Execution};
use crate::rateengine::{RateEngine, DEFAULT_TRIALS};
use crate::scenario::Scenario;
use crate::toneplan::{BandPlan, OperatorId, PartitionPolicy, ToneGrid};

pub const DEFAULT_DELTA0: f64 = 0.05;

/// Which per-operator rate enters the fairness ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "basis")]
pub enum FairnessBasis {
    /// Deterministic SBV rate over the partitioned spectrum only. Near the upper-band
    /// cutoff one operator can keep a few tones while the other has none, so this basis
    /// reaches 1 there for any block plan.
    UpperBand,
    /// Tenth-percentile aggregate rate: shared lower band plus partitioned upper band.
    /// The lower band is common to all operators, so it only enters the denominator.
    Aggregate { trials: usize, master_seed: u64 },
}

impl Default for FairnessBasis {
    fn default() -> Self {
        FairnessBasis::Aggregate {
            trials: DEFAULT_TRIALS,
            master_seed: 1,
        }
    }
}

/// Distances `d_min, d_min + d_step, ...` up to and including `d_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceGrid {
    pub d_min: f64,
    pub d_max: f64,
    pub d_step: f64,
}

impl Default for DistanceGrid {
    fn default() -> Self {
        Self {
            d_min: 50.0,
            d_max: 600.0,
            d_step: 25.0,
        }
    }
}

impl DistanceGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.d_min > 0.0) {
            return Err(SimError::invalid("d_min", "must be positive"));
        }
        if !(self.d_min <= self.d_max) {
            return Err(SimError::invalid("d_max", "must not be below d_min"));
        }
        if !(self.d_step > 0.0) {
            return Err(SimError::invalid("d_step", "must be positive"));
        }
        let n = ((self.d_max - self.d_min) / self.d_step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.d_min + i as f64 * self.d_step).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub distances: Vec<f64>,
    pub delta_rb: Vec<f64>,
    pub max_delta: f64,
    pub slot_width_hz: Option<f64>,
    pub policy: PartitionPolicy,
    pub delta0: f64,
    pub passed: bool,
}

impl FairnessReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d_m,delta_rb,slot_width_hz,policy,swap\n");
        out.push_str(&self.csv_rows());
        out
    }

    pub(crate) fn csv_rows(&self) -> String {
        let slot = self.slot_width_hz.map(|b| b.to_string()).unwrap_or_default();
        self.distances
            .iter()
            .zip(&self.delta_rb)
            .map(|(d, delta)| format!("{d},{delta:.9},{slot},{},{}\n", self.policy.name(), self.policy.swap()))
            .collect()
    }
}

/// Generalized rate difference for any number of operators.
pub fn relative_spread(rates: &[f64]) -> f64 {
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        return 0.0;
    }
    (max - min) / max
}

/// Per-operator rates at distance `d` on the chosen basis.
pub fn operator_rates(
    plan: &BandPlan,
    scenario: &Scenario,
    link: &LinkModel,
    d: f64,
    basis: FairnessBasis,
) -> Result<Vec<f64>> {
    let scenario = Scenario {
        cab_nt_distance: d,
        ..scenario.clone()
    };
    let engine = RateEngine::new(plan, &scenario, link)?;
    (0..plan.n_operators())
        .map(|o| match basis {
            FairnessBasis::UpperBand => Ok(engine.sbv_rate(OperatorId(o))?.aggregate_bps),
            FairnessBasis::Aggregate { trials, master_seed } => Ok(engine
                .combined_monte_carlo(OperatorId(o), trials, master_seed, Execution::Sequential)?
                .p10_bps),
        })
        .collect()
}

pub fn rate_delta(plan: &BandPlan, scenario: &Scenario, link: &LinkModel, d: f64, basis: FairnessBasis) -> Result<f64> {
    if plan.n_operators() < 2 {
        return Err(SimError::invalid(
            "n_operators",
            "fairness needs at least two operators",
        ));
    }
    Ok(relative_spread(&operator_rates(plan, scenario, link, d, basis)?))
}

fn plan_for(policy: PartitionPolicy, scenario: &Scenario, guard_tones: usize) -> Result<BandPlan> {
    let grid = ToneGrid::with_symbol_rate(scenario.f_max, scenario.delta_f, scenario.symbol_rate)?;
    BandPlan::build(
        &grid,
        scenario.n_operators,
        policy,
        scenario.f_max,
        scenario.lower_band_vectored,
        guard_tones,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub delta0: f64,
    pub basis: FairnessBasis,
    pub guard_tones: usize,
    pub exec: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            delta0: DEFAULT_DELTA0,
            basis: FairnessBasis::default(),
            guard_tones: 0,
            exec: Execution::default(),
        }
    }
}

pub fn fairness_sweep(
    policy: PartitionPolicy,
    scenario: &Scenario,
    link: &LinkModel,
    grid: &DistanceGrid,
    options: &SweepOptions,
) -> Result<FairnessReport> {
    let plan = plan_for(policy, scenario, options.guard_tones)?;
    let distances = grid.points()?;
    let delta_rb = try_map_indexed(distances.len(), options.exec, |i| {
        rate_delta(&plan, scenario, link, distances[i], options.basis)
    })?;
    let max_delta = delta_rb.iter().copied().fold(0.0, f64::max);
    Ok(FairnessReport {
        distances,
        delta_rb,
        max_delta,
        slot_width_hz: policy.slot_width_hz(),
        policy,
        delta0: options.delta0,
        passed: max_delta <= options.delta0,
    })
}

/// Largest candidate slot width whose sweep passes. Every candidate is evaluated since
/// the delta need not be monotone in the slot width.
pub fn select_slot_width(
    candidates: &[f64],
    swap: bool,
    scenario: &Scenario,
    link: &LinkModel,
    grid: &DistanceGrid,
    options: &SweepOptions,
) -> Result<Option<f64>> {
    if candidates.is_empty() {
        return Err(SimError::invalid("slot_widths", "at least one candidate is required"));
    }
    if candidates.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimError::invalid("slot_widths", "candidates must be sorted ascending"));
    }
    let passed = candidates
        .iter()
        .map(|&slot_width_hz| {
            let policy = PartitionPolicy::ConsecutiveBlock { slot_width_hz, swap };
            Ok(fairness_sweep(policy, scenario, link, grid, options)?.passed)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(largest_passing(candidates, &passed))
}

pub(crate) fn largest_passing(candidates: &[f64], passed: &[bool]) -> Option<f64> {
    candidates
        .iter()
        .zip(passed)
        .filter(|(_, &p)| p)
        .map(|(&c, _)| c)
        .next_back()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_matches_two_operator_formula() {
        let (r1, r2) = (120.0_f64, 100.0_f64);
        let two_op = (r1 - r2).abs() / f64::max(r1, r2);
        assert_eq!(relative_spread(&[r1, r2]), two_op);
        assert_eq!(relative_spread(&[r2, r1]), two_op);
        assert_eq!(relative_spread(&[0.0, 0.0]), 0.0);
        assert_eq!(relative_spread(&[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(relative_spread(&[10.0, 4.0, 7.0]), 0.6);
        assert_eq!(relative_spread(&[30.0, 12.0]), relative_spread(&[3.0, 1.2]));
    }

    #[test]
    fn distance_grid_points() {
        let g = DistanceGrid::default();
        let p = g.points().unwrap();
        assert_eq!(p.first(), Some(&50.0));
        assert_eq!(p.last(), Some(&600.0));
        assert_eq!(p.len(), 23);
        assert!(DistanceGrid { d_step: 0.0, ..g }.points().is_err());
        assert!(DistanceGrid { d_min: 700.0, ..g }.points().is_err());
        let single = DistanceGrid {
            d_min: 100.0,
            d_max: 100.0,
            d_step: 10.0,
        };
        assert_eq!(single.points().unwrap(), vec![100.0]);
    }

    #[test]
    fn largest_passing_is_not_suffix_based() {
        let c = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(largest_passing(&c, &[true, true, true, true]), Some(4.0));
        assert_eq!(largest_passing(&c, &[false; 4]), None);
        assert_eq!(largest_passing(&c, &[true, false, true, false]), Some(3.0));
    }

    #[test]
    fn single_operator_is_rejected() {
        let scenario = Scenario {
            n_operators: 1,
            ..Scenario::default()
        };
        let plan = plan_for(PartitionPolicy::AlternateTone, &scenario, 0).unwrap();
        assert!(rate_delta(&plan, &scenario, &LinkModel::default(), 100.0, FairnessBasis::UpperBand).is_err());
    }

    #[test]
    fn vacuous_threshold_always_passes() {
        let scenario = Scenario::default();
        let options = SweepOptions {
            delta0: 1.0,
            basis: FairnessBasis::UpperBand,
            ..SweepOptions::default()
        };
        let policy = PartitionPolicy::ConsecutiveBlock {
            slot_width_hz: 17.6e6,
            swap: false,
        };
        let report = fairness_sweep(
            policy,
            &scenario,
            &LinkModel::default(),
            &DistanceGrid::default(),
            &options,
        )
        .unwrap();
        assert!(report.passed);
        assert!(report.delta_rb.iter().all(|d| (0.0..=1.0).contains(d)));
        assert_eq!(report.max_delta, report.delta_rb.iter().copied().fold(0.0, f64::max));
    }
}
