//! Experiment runners. Each runner resolves its sweep grid, evaluates grid points in
//! parallel and returns a [`Table`] whose rows are sorted by key columns, so the CSV
//! bytes only depend on the config and the master seed.

pub mod config;

use std::cmp::Ordering;

use crate::error::{Result, SimError};
use crate::exec::{try_map_indexed, Execution};
use crate::fairness::{fairness_sweep, select_slot_width, FairnessReport, SweepOptions};
use crate::rateengine::{MonteCarloRates, RateEngine};
use crate::scenario::{LoadLevel, Scenario};
use crate::toneplan::{BandPlan, OperatorId, PartitionPolicy, ToneGrid};

pub use config::{
    ExperimentKind, ExperimentSpec, FairnessBasisName, LowerBandView, PlanSettings, SimConfig, F_MAX_SWEEP_HZ,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A single CSV cell. Keys sort numerically; text cells sort lexically.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    fn cmp_key(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a.cmp(b),
            (Cell::Float(a), Cell::Float(b)) => a.total_cmp(b),
            (Cell::Int(a), Cell::Float(b)) => (*a as f64).total_cmp(b),
            (Cell::Float(a), Cell::Int(b)) => a.total_cmp(&(*b as f64)),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (Cell::Text(_), _) => Ordering::Greater,
            (_, Cell::Text(_)) => Ordering::Less,
        }
    }
}

/// Integral values print without a fractional part, others with up to 9 decimals.
fn format_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.9}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Rates are written in whole bits per second.
fn rate(bps: f64) -> Cell {
    Cell::Int(bps.round() as i64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    /// Number of leading columns that identify a row.
    pub key_columns: usize,
    pub rows: Vec<Vec<Cell>>,
    pub config_hash: String,
}

impl Table {
    fn new(columns: Vec<&'static str>, key_columns: usize, mut rows: Vec<Vec<Cell>>, config: &SimConfig) -> Self {
        rows.sort_by(|a, b| {
            a[..key_columns]
                .iter()
                .zip(&b[..key_columns])
                .map(|(x, y)| x.cmp_key(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
        Self {
            columns,
            key_columns,
            rows,
            config_hash: config.config_hash(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Numeric value of `name` in `row`; text cells yield `None`.
    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.column(name)?)? {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    pub fn text(&self, row: usize, name: &str) -> Option<String> {
        Some(self.rows.get(row)?.get(self.column(name)?)?.render())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        out.push_str(&format!("# config_hash={},version={VERSION}\n", self.config_hash));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn plan_for(scenario: &Scenario, plan: &PlanSettings) -> Result<BandPlan> {
    let grid = ToneGrid::with_symbol_rate(scenario.f_max, scenario.delta_f, scenario.symbol_rate)?;
    BandPlan::build(
        &grid,
        scenario.n_operators,
        plan.policy,
        scenario.f_max,
        scenario.lower_band_vectored,
        plan.guard_tones,
    )
}

/// Scenario at one grid point; validated before use.
fn point(
    base: &Scenario,
    n_operators: usize,
    n_disturbers: usize,
    f_max: f64,
    d: f64,
    r_v_db: f64,
) -> Result<Scenario> {
    let s = Scenario {
        n_operators,
        n_disturbers,
        f_max,
        cab_nt_distance: d,
        r_v_db,
        ..base.clone()
    };
    s.validate()?;
    Ok(s)
}

fn load_name(n_disturbers: usize) -> String {
    LoadLevel::from_disturbers(n_disturbers)
        .map(|l| l.to_string())
        .unwrap_or_else(|| "custom".to_string())
}

/// Per-band tenth-percentile rates of the NV and SBV views for one operator.
struct BandRates {
    nv: Vec<(u16, f64)>,
    sbv: Vec<(u16, f64)>,
    nv_total: f64,
    sbv_total: f64,
}

fn evaluate(engine: &RateEngine, op: OperatorId, spec: &ExperimentSpec, exec: Execution) -> Result<BandRates> {
    let MonteCarloRates { nv, combined } = engine.monte_carlo(op, spec.trials, spec.master_seed, exec)?;
    let bands: Vec<u16> = engine.plan().bands().map(|b| b.number).collect();
    let nv_bands = bands.iter().map(|&b| (b, nv.band_p10(b))).collect();
    let (sbv_bands, sbv_total) = match spec.sbv_lower_band {
        LowerBandView::Shared => (
            bands.iter().map(|&b| (b, combined.band_p10(b))).collect(),
            combined.p10_bps,
        ),
        LowerBandView::Partitioned => {
            // Both parts are deterministic, so the percentile is the value itself.
            let r = engine.partitioned_lower_rate(op)?.merge(&engine.sbv_rate(op)?);
            (bands.iter().map(|&b| (b, r.band(b))).collect(), r.aggregate_bps)
        }
    };
    Ok(BandRates {
        nv: nv_bands,
        sbv: sbv_bands,
        nv_total: nv.p10_bps,
        sbv_total,
    })
}

/// Cartesian product helper yielding index tuples in row-major order.
fn grid4<A: Copy, B: Copy, C: Copy, D: Copy>(a: &[A], b: &[B], c: &[C], d: &[D]) -> Vec<(A, B, C, D)> {
    let mut out = Vec::with_capacity(a.len() * b.len() * c.len() * d.len());
    for &x in a {
        for &y in b {
            for &z in c {
                for &w in d {
                    out.push((x, y, z, w));
                }
            }
        }
    }
    out
}

/// Per-band NV and SBV tenth percentiles for every operator, load and distance.
pub fn run_band_comparison(config: &SimConfig, exec: Execution) -> Result<Table> {
    let spec = &config.experiment;
    spec.require_kind(ExperimentKind::BandComparison)?;
    let points = grid4(&spec.n_operators, &spec.distances, &spec.n_disturbers, &spec.f_max);
    let blocks = try_map_indexed(points.len(), exec, |i| {
        let (n_op, d, n_us, f_max) = points[i];
        let s = point(&config.scenario, n_op, n_us, f_max, d, config.scenario.r_v_db)?;
        let plan = plan_for(&s, &config.plan)?;
        let engine = RateEngine::new(&plan, &s, &config.link)?;
        let mut rows = Vec::new();
        for o in 0..n_op {
            let r = evaluate(&engine, OperatorId(o), spec, Execution::Sequential)?;
            for (band, ((_, nv), (_, sbv))) in plan.bands().zip(r.nv.iter().zip(&r.sbv)) {
                rows.push(vec![
                    Cell::Int(n_op as i64),
                    Cell::Float(d),
                    Cell::Int(n_us as i64),
                    Cell::Float(f_max),
                    Cell::Int(o as i64),
                    Cell::Int(band.number as i64),
                    Cell::Text(load_name(n_us)),
                    Cell::Float(band.f_start),
                    Cell::Float(band.f_stop),
                    rate(*nv),
                    rate(*sbv),
                ]);
            }
        }
        Ok::<_, SimError>(rows)
    })?;
    Ok(Table::new(
        vec![
            "n_operators",
            "d_m",
            "n_disturbers",
            "f_max_hz",
            "operator_id",
            "band_number",
            "load",
            "f_start_hz",
            "f_stop_hz",
            "nv_p10_bps",
            "sbv_p10_bps",
        ],
        6,
        blocks.into_iter().flatten().collect(),
        config,
    ))
}

fn aggregate_rows(config: &SimConfig, exec: Execution) -> Result<Vec<(usize, usize, f64, f64, f64, f64)>> {
    let spec = &config.experiment;
    let points = grid4(&spec.n_operators, &spec.n_disturbers, &spec.f_max, &spec.distances);
    try_map_indexed(points.len(), exec, |i| {
        let (n_op, n_us, f_max, d) = points[i];
        let s = point(&config.scenario, n_op, n_us, f_max, d, config.scenario.r_v_db)?;
        let plan = plan_for(&s, &config.plan)?;
        let engine = RateEngine::new(&plan, &s, &config.link)?;
        let r = evaluate(&engine, OperatorId(0), spec, Execution::Sequential)?;
        Ok((n_op, n_us, f_max, d, r.nv_total, r.sbv_total))
    })
}

/// Aggregate tenth-percentile rates of operator 0 against CAB-to-NT distance.
pub fn run_rate_vs_distance(config: &SimConfig, exec: Execution) -> Result<Table> {
    config.experiment.require_kind(ExperimentKind::RateVsDistance)?;
    let rows = aggregate_rows(config, exec)?
        .into_iter()
        .map(|(n_op, n_us, f_max, d, nv, sbv)| {
            vec![
                Cell::Int(n_op as i64),
                Cell::Int(n_us as i64),
                Cell::Float(f_max),
                Cell::Float(d),
                rate(nv),
                rate(sbv),
            ]
        })
        .collect();
    Ok(Table::new(
        vec![
            "n_operators",
            "n_disturbers",
            "f_max_hz",
            "d_m",
            "nv_p10_bps",
            "sbv_p10_bps",
        ],
        4,
        rows,
        config,
    ))
}

/// Aggregate tenth-percentile rates of operator 0 against the top of the spectrum.
pub fn run_rate_vs_fmax(config: &SimConfig, exec: Execution) -> Result<Table> {
    config.experiment.require_kind(ExperimentKind::RateVsFmax)?;
    let rows = aggregate_rows(config, exec)?
        .into_iter()
        .map(|(n_op, n_us, f_max, d, nv, sbv)| {
            vec![
                Cell::Int(n_op as i64),
                Cell::Int(n_us as i64),
                Cell::Float(d),
                Cell::Float(f_max),
                Cell::Text(load_name(n_us)),
                rate(nv),
                rate(sbv),
            ]
        })
        .collect();
    Ok(Table::new(
        vec![
            "n_operators",
            "n_disturbers",
            "d_m",
            "f_max_hz",
            "load",
            "nv_p10_bps",
            "sbv_p10_bps",
        ],
        4,
        rows,
        config,
    ))
}

/// Per-band and total rates of operator 0 as the vectoring degradation grows. Band
/// number 0 holds the aggregate.
pub fn run_degradation(config: &SimConfig, exec: Execution) -> Result<Table> {
    let spec = &config.experiment;
    spec.require_kind(ExperimentKind::Degradation)?;
    let mut points = Vec::new();
    for &(n_op, n_us, f_max, d) in &grid4(&spec.n_operators, &spec.n_disturbers, &spec.f_max, &spec.distances) {
        for &r_v in &spec.r_v_db {
            points.push((n_op, n_us, f_max, d, r_v));
        }
    }
    let blocks = try_map_indexed(points.len(), exec, |i| {
        let (n_op, n_us, f_max, d, r_v) = points[i];
        let s = point(&config.scenario, n_op, n_us, f_max, d, r_v)?;
        let plan = plan_for(&s, &config.plan)?;
        let engine = RateEngine::new(&plan, &s, &config.link)?;
        let r = evaluate(&engine, OperatorId(0), spec, Execution::Sequential)?;
        let key = |band: u16| {
            vec![
                Cell::Int(n_op as i64),
                Cell::Int(n_us as i64),
                Cell::Float(f_max),
                Cell::Float(d),
                Cell::Float(r_v),
                Cell::Int(band as i64),
            ]
        };
        let mut rows: Vec<Vec<Cell>> = r
            .sbv
            .iter()
            .zip(&r.nv)
            .map(|((band, sbv), (_, nv))| {
                let mut row = key(*band);
                row.extend([rate(*sbv), rate(*nv)]);
                row
            })
            .collect();
        let mut total = key(0);
        total.extend([rate(r.sbv_total), rate(r.nv_total)]);
        rows.push(total);
        Ok::<_, SimError>(rows)
    })?;
    Ok(Table::new(
        vec![
            "n_operators",
            "n_disturbers",
            "f_max_hz",
            "d_m",
            "r_v_db",
            "band_number",
            "sbv_rate_bps",
            "nv_rate_bps",
        ],
        6,
        blocks.into_iter().flatten().collect(),
        config,
    ))
}

fn sweep_options(config: &SimConfig, exec: Execution) -> SweepOptions {
    SweepOptions {
        delta0: config.experiment.delta0,
        basis: config.experiment.fairness_basis(),
        guard_tones: config.plan.guard_tones,
        exec,
    }
}

/// Rate difference between operators over the distance grid for every slot width.
pub fn run_fairness_vs_b(config: &SimConfig, exec: Execution) -> Result<Table> {
    let spec = &config.experiment;
    spec.require_kind(ExperimentKind::FairnessVsB)?;
    let swap = config.plan.policy.swap();
    let points = grid4(&spec.n_operators, &spec.n_disturbers, &spec.f_max, &spec.slot_widths);
    let blocks = try_map_indexed(points.len(), exec, |i| {
        let (n_op, n_us, f_max, slot_width_hz) = points[i];
        let s = point(
            &config.scenario,
            n_op,
            n_us,
            f_max,
            config.scenario.cab_nt_distance,
            config.scenario.r_v_db,
        )?;
        let policy = PartitionPolicy::ConsecutiveBlock { slot_width_hz, swap };
        let report = fairness_sweep(
            policy,
            &s,
            &config.link,
            &spec.distance_grid,
            &sweep_options(config, Execution::Sequential),
        )?;
        Ok::<_, SimError>(
            report
                .distances
                .iter()
                .zip(&report.delta_rb)
                .map(|(&d, &delta)| {
                    vec![
                        Cell::Int(n_op as i64),
                        Cell::Int(n_us as i64),
                        Cell::Float(f_max),
                        Cell::Float(slot_width_hz),
                        Cell::Float(d),
                        Cell::Text(swap.to_string()),
                        Cell::Float(delta),
                    ]
                })
                .collect::<Vec<_>>(),
        )
    })?;
    Ok(Table::new(
        vec![
            "n_operators",
            "n_disturbers",
            "f_max_hz",
            "slot_width_hz",
            "d_m",
            "swap",
            "delta_rb",
        ],
        5,
        blocks.into_iter().flatten().collect(),
        config,
    ))
}

/// Fairness of the configured plan over the distance grid, plus the largest candidate
/// slot width meeting the threshold for the configured swap setting.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessSummary {
    pub report: FairnessReport,
    pub selected_slot_width_hz: Option<f64>,
    pub config_hash: String,
}

impl FairnessSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d_m,delta_rb,slot_width_hz,policy,swap\n");
        out.push_str(&format!("# config_hash={},version={VERSION}\n", self.config_hash));
        out.push_str(&self.report.csv_rows());
        out
    }
}

pub fn run_fairness(config: &SimConfig, exec: Execution) -> Result<FairnessSummary> {
    let options = sweep_options(config, exec);
    let report = fairness_sweep(
        config.plan.policy,
        &config.scenario,
        &config.link,
        &config.experiment.distance_grid,
        &options,
    )?;
    let selected_slot_width_hz = select_slot_width(
        &sorted(&config.experiment.slot_widths),
        config.plan.policy.swap(),
        &config.scenario,
        &config.link,
        &config.experiment.distance_grid,
        &options,
    )?;
    Ok(FairnessSummary {
        report,
        selected_slot_width_hz,
        config_hash: config.config_hash(),
    })
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Band plan of the base scenario as CSV.
pub fn plan_csv(config: &SimConfig) -> Result<String> {
    Ok(plan_for(&config.scenario, &config.plan)?.to_csv())
}

/// Runs the experiment named in `[experiment] kind`.
pub fn run(config: &SimConfig, exec: Execution) -> Result<Table> {
    match config.experiment.kind {
        Some(ExperimentKind::BandComparison) => run_band_comparison(config, exec),
        Some(ExperimentKind::FairnessVsB) => run_fairness_vs_b(config, exec),
        Some(ExperimentKind::RateVsDistance) => run_rate_vs_distance(config, exec),
        Some(ExperimentKind::RateVsFmax) => run_rate_vs_fmax(config, exec),
        Some(ExperimentKind::Degradation) => run_degradation(config, exec),
        None => Err(SimError::config("experiment.kind", "missing required key")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(experiment: &str) -> SimConfig {
        SimConfig::from_toml(&format!(
            "[scenario]\ncab_nt_distance = 100\n[experiment]\ntrials = 10\n{experiment}"
        ))
        .unwrap()
    }

    #[test]
    fn float_cells() {
        assert_eq!(format_float(35.2e6), "35200000");
        assert_eq!(format_float(0.25), "0.25");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333");
        assert_eq!(format_float(12.5), "12.5");
    }

    #[test]
    fn band_comparison_shape() {
        let c = cfg("kind = \"band_comparison\"\nn_operators = [2]\ndistances = [100]\n");
        let t = run(&c, Execution::default()).unwrap();
        // 7 bands x 4 loads x 2 operators
        assert_eq!(t.rows.len(), 7 * 4 * 2);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("n_operators,d_m"));
        assert!(lines.next().unwrap().starts_with("# config_hash="));
    }

    #[test]
    fn shared_lower_view_matches_nv() {
        let c = cfg("kind = \"band_comparison\"\nn_operators = [3]\ndistances = [100]\nn_disturbers = [12]\nsbv_lower_band = \"shared\"\n");
        let t = run(&c, Execution::default()).unwrap();
        for row in 0..t.rows.len() {
            if t.value(row, "band_number").unwrap() <= 3.0 {
                assert_eq!(t.value(row, "nv_p10_bps"), t.value(row, "sbv_p10_bps"));
            }
        }
    }

    #[test]
    fn wrong_kind_is_a_config_error() {
        let c = cfg("kind = \"degradation\"\n");
        assert!(run_rate_vs_fmax(&c, Execution::Sequential)
            .unwrap_err()
            .is_config_error());
        let none = SimConfig::from_toml("[scenario]\ncab_nt_distance = 100\n").unwrap();
        assert!(run(&none, Execution::Sequential).unwrap_err().is_config_error());
    }

    #[test]
    fn single_fmax_gives_one_row_per_operator_count_and_load() {
        let c = cfg("kind = \"rate_vs_fmax\"\nf_max = [35.2e6]\n");
        let t = run(&c, Execution::default()).unwrap();
        assert_eq!(t.rows.len(), 2 * 2);
    }

    #[test]
    fn degradation_rows_and_identity() {
        let c = cfg("kind = \"degradation\"\nr_v_db = [0, 6]\ndistances = [250]\n");
        let t = run(&c, Execution::default()).unwrap();
        // 7 bands plus total, per r_v
        assert_eq!(t.rows.len(), 2 * 8);
        assert_eq!(t.value(0, "r_v_db"), Some(0.0));
        assert_eq!(t.value(0, "band_number"), Some(0.0));
    }

    #[test]
    fn fairness_single_distance() {
        let c = cfg("kind = \"fairness_vs_b\"\nf_max = [35.2e6]\nslot_widths = [2.2e6, 4.4e6]\nd_min = 100\nd_max = 100\nfairness_basis = \"upper_band\"\n");
        let t = run(&c, Execution::default()).unwrap();
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn output_is_independent_of_execution() {
        let c = cfg("kind = \"rate_vs_distance\"\nf_max = [35.2e6, 52.8e6]\ndistances = [100, 300]\n");
        let a = run(&c, Execution::Parallel).unwrap().to_csv();
        let b = run(&c, Execution::Sequential).unwrap().to_csv();
        assert_eq!(a, b);
    }
}
