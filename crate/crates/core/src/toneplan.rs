//! DMT tone grid, the comparison band structure and per-operator band plans.
//!
//! Frequencies are in Hz. Tone `k` sits at exactly `k * delta_f`. Band membership is
//! half-open: a tone belongs to a band when `f_start <= f_k < f_stop`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const DEFAULT_DELTA_F_HZ: f64 = 4312.5;
pub const DEFAULT_SYMBOL_RATE: f64 = 4000.0;
/// Width of one sub-channel; the spectrum above the first sub-channel is partitioned.
pub const SUB_CHANNEL_HZ: f64 = 17.6e6;
/// Maximum frequency of the e-VDSL style reference grid.
pub const REFERENCE_F_MAX_HZ: f64 = 35.2e6;
/// Width of the extension bands used for per-band reporting above 35.2 MHz.
pub const EXTENSION_BAND_HZ: f64 = 4.4e6;

/// Comparison bands 1-7 as `(start, stop)` in MHz. Bands 1-3 are the profile 17a
/// downstream bands; 4-7 cover the first partitioned sub-channel.
pub const TABLE2_RANGES_MHZ: [(f64, f64); 7] = [
    (0.138, 3.75),
    (5.2, 8.5),
    (14.0, 17.66),
    (17.66, 22.08),
    (22.08, 26.50),
    (26.50, 30.90),
    (30.90, 35.20),
];

/// Number of comparison bands that belong to the shared lower band.
pub const LOWER_BAND_COUNT: usize = 3;

/// Operator index, zero based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperatorId(pub usize);

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneGrid {
    delta_f: f64,
    symbol_rate: f64,
    max_tone_index: usize,
}

impl ToneGrid {
    pub fn new(f_max: f64, delta_f: f64) -> Result<Self> {
        Self::with_symbol_rate(f_max, delta_f, DEFAULT_SYMBOL_RATE)
    }

    pub fn with_symbol_rate(f_max: f64, delta_f: f64, symbol_rate: f64) -> Result<Self> {
        if !(delta_f > 0.0) || !delta_f.is_finite() {
            return Err(SimError::invalid("delta_f", format!("must be positive, got {delta_f}")));
        }
        if !(f_max >= delta_f) || !f_max.is_finite() {
            return Err(SimError::invalid(
                "f_max",
                format!("must be at least delta_f ({delta_f} Hz), got {f_max}"),
            ));
        }
        if !(symbol_rate > 0.0) {
            return Err(SimError::invalid(
                "symbol_rate",
                format!("must be positive, got {symbol_rate}"),
            ));
        }
        let mut max_tone_index = (f_max / delta_f).floor() as usize;
        // guard against the quotient rounding up across an integer
        while max_tone_index as f64 * delta_f > f_max {
            max_tone_index -= 1;
        }
        while (max_tone_index + 1) as f64 * delta_f <= f_max {
            max_tone_index += 1;
        }
        Ok(Self {
            delta_f,
            symbol_rate,
            max_tone_index,
        })
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn symbol_rate(&self) -> f64 {
        self.symbol_rate
    }

    pub fn max_tone_index(&self) -> usize {
        self.max_tone_index
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.delta_f
    }

    /// Tone indexes with `f_start <= f_k < f_stop`, clipped to the grid.
    pub fn tones_in(&self, f_start: f64, f_stop: f64) -> Range<usize> {
        let first = self.first_tone_at_or_above(f_start);
        let end = self.first_tone_at_or_above(f_stop).min(self.max_tone_index + 1);
        first..end.max(first)
    }

    fn first_tone_at_or_above(&self, f: f64) -> usize {
        if f <= 0.0 {
            return 0;
        }
        let mut k = (f / self.delta_f).ceil() as usize;
        while k > 0 && self.frequency(k - 1) >= f {
            k -= 1;
        }
        while self.frequency(k) < f {
            k += 1;
        }
        k
    }
}

/// Convenience constructor mirroring the grid builder used throughout the harness.
pub fn build_tone_grid(f_max: f64, delta_f: f64) -> Result<ToneGrid> {
    ToneGrid::new(f_max, delta_f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// 1-based band number; 1-7 follow the comparison table, 8 and up are 4.4 MHz extension bands.
    pub number: u16,
    pub f_start: f64,
    pub f_stop: f64,
    pub tones: Range<usize>,
}

impl Band {
    pub fn new(grid: &ToneGrid, number: u16, f_start: f64, f_stop: f64) -> Result<Self> {
        if !(f_start < f_stop) {
            return Err(SimError::invalid(
                "band",
                format!("band {number}: f_start {f_start} must be below f_stop {f_stop}"),
            ));
        }
        let tones = grid.tones_in(f_start, f_stop);
        if tones.is_empty() {
            return Err(SimError::invalid(
                "band",
                format!("band {number} ({f_start}-{f_stop} Hz) contains no tone"),
            ));
        }
        Ok(Self {
            number,
            f_start,
            f_stop,
            tones,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_stop - self.f_start
    }

    pub fn tone_count(&self) -> usize {
        self.tones.len()
    }

    pub fn is_lower(&self) -> bool {
        (self.number as usize) <= LOWER_BAND_COUNT
    }
}

/// The seven comparison bands on the default 35.2 MHz grid.
pub fn table2_bands() -> Vec<Band> {
    let grid = ToneGrid::new(REFERENCE_F_MAX_HZ, DEFAULT_DELTA_F_HZ).expect("reference grid is valid");
    reporting_bands(&grid, REFERENCE_F_MAX_HZ)
}

/// Comparison bands truncated to `f_max`, followed by 4.4 MHz extension bands above 35.2 MHz.
pub fn reporting_bands(grid: &ToneGrid, f_max: f64) -> Vec<Band> {
    let mut ranges: Vec<(f64, f64)> = TABLE2_RANGES_MHZ.iter().map(|&(a, b)| (a * 1e6, b * 1e6)).collect();
    let mut start = REFERENCE_F_MAX_HZ;
    while start < f_max {
        ranges.push((start, start + EXTENSION_BAND_HZ));
        start += EXTENSION_BAND_HZ;
    }
    ranges
        .into_iter()
        .enumerate()
        .filter(|&(_, (a, _))| a < f_max)
        .filter_map(|(i, (a, b))| Band::new(grid, (i + 1) as u16, a, b.min(f_max)).ok())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionPolicy {
    /// Tone `k` goes to operator `k mod n_operators`.
    AlternateTone,
    /// Each slot of `slot_width_hz` is split into equal consecutive blocks, one per operator.
    ConsecutiveBlock {
        slot_width_hz: f64,
        #[serde(default)]
        swap: bool,
    },
}

impl PartitionPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            PartitionPolicy::AlternateTone => "alternate_tone",
            PartitionPolicy::ConsecutiveBlock { .. } => "consecutive_block",
        }
    }

    pub fn slot_width_hz(&self) -> Option<f64> {
        match self {
            PartitionPolicy::AlternateTone => None,
            PartitionPolicy::ConsecutiveBlock { slot_width_hz, .. } => Some(*slot_width_hz),
        }
    }

    pub fn swap(&self) -> bool {
        matches!(self, PartitionPolicy::ConsecutiveBlock { swap: true, .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Lower band, used by every operator.
    Shared,
    /// Upper band tone owned by one operator and vectored by it.
    PartitionedVectored,
    /// Not used for downstream: outside every band, or a guard tone.
    Off,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Shared => "shared",
            Regime::PartitionedVectored => "partitioned_vectored",
            Regime::Off => "off",
        }
    }
}

/// Tones one operator can transmit on, split by regime.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OperatorTones {
    pub shared: Vec<usize>,
    pub partitioned: Vec<usize>,
}

impl OperatorTones {
    pub fn iter(&self) -> impl Iterator<Item = (usize, Regime)> + '_ {
        self.shared
            .iter()
            .map(|&k| (k, Regime::Shared))
            .chain(self.partitioned.iter().map(|&k| (k, Regime::PartitionedVectored)))
    }

    pub fn len(&self) -> usize {
        self.shared.len() + self.partitioned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    grid: ToneGrid,
    f_max: f64,
    n_operators: usize,
    policy: PartitionPolicy,
    guard_tones: usize,
    lower_band_vectored: bool,
    lower_bands: Vec<Band>,
    upper_bands: Vec<Band>,
    /// First upper tone; `assignment[j]` is the owner of tone `upper_start + j`.
    upper_start: usize,
    assignment: Vec<Option<OperatorId>>,
}

pub fn build_band_plan(
    grid: &ToneGrid,
    n_operators: usize,
    policy: PartitionPolicy,
    f_max: f64,
    lower_band_vectored: bool,
) -> Result<BandPlan> {
    BandPlan::build(grid, n_operators, policy, f_max, lower_band_vectored, 0)
}

impl BandPlan {
    pub fn build(
        grid: &ToneGrid,
        n_operators: usize,
        policy: PartitionPolicy,
        f_max: f64,
        lower_band_vectored: bool,
        guard_tones: usize,
    ) -> Result<Self> {
        if n_operators == 0 {
            return Err(SimError::invalid("n_operators", "at least one operator is required"));
        }
        if f_max > grid.frequency(grid.max_tone_index()) + grid.delta_f() {
            return Err(SimError::invalid("f_max", format!("{f_max} Hz exceeds the tone grid")));
        }
        let slot_tones = match policy {
            PartitionPolicy::AlternateTone => None,
            PartitionPolicy::ConsecutiveBlock { slot_width_hz, .. } => {
                if !(slot_width_hz > 0.0) {
                    return Err(SimError::invalid("slot_width_hz", "must be positive"));
                }
                let tones = (slot_width_hz / grid.delta_f()).floor() as usize;
                if tones < n_operators {
                    return Err(SimError::invalid(
                        "slot_width_hz",
                        format!("{slot_width_hz} Hz holds {tones} tones, fewer than {n_operators} operators"),
                    ));
                }
                Some(tones)
            }
        };

        let bands = reporting_bands(grid, f_max);
        let (lower_bands, upper_bands): (Vec<Band>, Vec<Band>) = bands.into_iter().partition(Band::is_lower);

        let upper_start = upper_bands
            .first()
            .map(|b| b.tones.start)
            .unwrap_or(grid.max_tone_index() + 1);
        let upper_end = upper_bands.last().map(|b| b.tones.end).unwrap_or(upper_start);

        let mut assignment = vec![None; upper_end - upper_start];
        match slot_tones {
            None => {
                for (j, owner) in assignment.iter_mut().enumerate() {
                    *owner = Some(OperatorId((upper_start + j) % n_operators));
                }
            }
            Some(slot_tones) => {
                let swap = policy.swap();
                let mut slot_index = 0usize;
                for sub in sub_channels(grid, upper_start, upper_end) {
                    let mut k = sub.start;
                    while k < sub.end {
                        let slot_end = (k + slot_tones).min(sub.end);
                        let len = slot_end - k;
                        let base = len / n_operators;
                        let rotation = if swap { slot_index % n_operators } else { 0 };
                        let mut block_start = k;
                        for j in 0..n_operators {
                            // remainder tones go to the last block
                            let size = if j + 1 == n_operators {
                                slot_end - block_start
                            } else {
                                base
                            };
                            let owner = OperatorId((j + rotation) % n_operators);
                            for t in block_start..block_start + size {
                                assignment[t - upper_start] = Some(owner);
                            }
                            block_start += size;
                        }
                        k = slot_end;
                        slot_index += 1;
                    }
                }
                if guard_tones > 0 {
                    apply_guards(&mut assignment, guard_tones);
                }
            }
        }

        Ok(Self {
            grid: *grid,
            f_max,
            n_operators,
            policy,
            guard_tones,
            lower_band_vectored,
            lower_bands,
            upper_bands,
            upper_start,
            assignment,
        })
    }

    pub fn grid(&self) -> &ToneGrid {
        &self.grid
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn n_operators(&self) -> usize {
        self.n_operators
    }

    pub fn policy(&self) -> PartitionPolicy {
        self.policy
    }

    pub fn guard_tones(&self) -> usize {
        self.guard_tones
    }

    pub fn lower_band_vectored(&self) -> bool {
        self.lower_band_vectored
    }

    pub fn lower_bands(&self) -> &[Band] {
        &self.lower_bands
    }

    pub fn upper_bands(&self) -> &[Band] {
        &self.upper_bands
    }

    /// All reporting bands in ascending frequency order.
    pub fn bands(&self) -> impl Iterator<Item = &Band> {
        self.lower_bands.iter().chain(self.upper_bands.iter())
    }

    pub fn band_of(&self, k: usize) -> Option<&Band> {
        self.bands().find(|b| b.tones.contains(&k))
    }

    pub fn upper_tones(&self) -> Range<usize> {
        self.upper_start..self.upper_start + self.assignment.len()
    }

    pub fn lower_tones(&self) -> impl Iterator<Item = usize> + '_ {
        self.lower_bands.iter().flat_map(|b| b.tones.clone())
    }

    pub fn lower_tone_count(&self) -> usize {
        self.lower_bands.iter().map(Band::tone_count).sum()
    }

    pub fn upper_tone_count(&self) -> usize {
        self.assignment.len()
    }

    /// Owner of an upper-band tone; `None` for guard tones and tones outside the upper band.
    pub fn owner(&self, k: usize) -> Option<OperatorId> {
        k.checked_sub(self.upper_start)
            .and_then(|j| self.assignment.get(j))
            .copied()
            .flatten()
    }

    pub fn regime(&self, k: usize) -> Regime {
        if self.upper_tones().contains(&k) {
            if self.owner(k).is_some() {
                Regime::PartitionedVectored
            } else {
                Regime::Off
            }
        } else if self.lower_bands.iter().any(|b| b.tones.contains(&k)) {
            Regime::Shared
        } else {
            Regime::Off
        }
    }

    pub fn operator_tones(&self, operator: OperatorId) -> Result<OperatorTones> {
        self.check_operator(operator)?;
        Ok(OperatorTones {
            shared: self.lower_tones().collect(),
            partitioned: self.partitioned_tones(operator).collect(),
        })
    }

    pub fn partitioned_tones(&self, operator: OperatorId) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, o)| **o == Some(operator))
            .map(move |(j, _)| self.upper_start + j)
    }

    pub fn partitioned_count(&self, operator: OperatorId) -> usize {
        self.assignment.iter().filter(|o| **o == Some(operator)).count()
    }

    pub fn check_operator(&self, operator: OperatorId) -> Result<()> {
        if operator.0 >= self.n_operators {
            return Err(SimError::invalid(
                "operator_id",
                format!("operator {operator} not in plan with {} operators", self.n_operators),
            ));
        }
        Ok(())
    }

    /// Plan dump with one row per tone from 1 to the top of the grid.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tone_index,f_hz,band_number,regime,operator_id\n");
        for k in 1..=self.grid.max_tone_index() {
            let f = self.grid.frequency(k);
            if f >= self.f_max {
                break;
            }
            let band = self.band_of(k).map(|b| b.number.to_string()).unwrap_or_default();
            let regime = self.regime(k);
            let op = match regime {
                Regime::PartitionedVectored => self.owner(k).map(|o| o.to_string()).unwrap_or_default(),
                Regime::Shared => "all".to_string(),
                Regime::Off => String::new(),
            };
            out.push_str(&format!("{k},{f},{band},{},{op}\n", regime.as_str()));
        }
        out
    }
}

/// Upper tones split at multiples of the sub-channel width.
fn sub_channels(grid: &ToneGrid, start: usize, end: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut k = start;
    while k < end {
        let index = (grid.frequency(k) / SUB_CHANNEL_HZ).floor() + 1.0;
        let boundary = grid.tones_in(0.0, index * SUB_CHANNEL_HZ).end.min(end).max(k + 1);
        out.push(k..boundary);
        k = boundary;
    }
    out
}

/// Turns off the first `guard` tones after every change of owner.
fn apply_guards(assignment: &mut [Option<OperatorId>], guard: usize) {
    let owners: Vec<Option<OperatorId>> = assignment.to_vec();
    for j in 1..owners.len() {
        if owners[j] != owners[j - 1] {
            let end = (j + guard).min(owners.len());
            for slot in &mut assignment[j..end] {
                *slot = None;
            }
        }
    }
}
