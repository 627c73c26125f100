//! Per-tone bit loading, FEXT aggregation and the NV / SBV rate expressions.
//!
//! NV (shared, non-vectored) rates sum `log2(1 + |H_d|^2 P / ((eta + I) Gamma))` over every
//! shared tone, with `I` the FEXT from the other lines in the binder. SBV rates sum
//! `log2(1 + |H_d|^2 P / (eta r_V Gamma))` over the operator's partitioned tones only: self-FEXT
//! is cancelled by vectoring up to the residual `r_V`, and alien FEXT cannot occur because no
//! other operator transmits on those tones.
//!
//! Disturbers are co-located with the victim, so every coupling length equals the victim's
//! loop length and every disturber uses the victim's NV per-tone power.

use std::collections::BTreeMap;

use crate::channel::{direct_gain, fext_gain_sampled, fluctuation_factor, sample_fext, FextRealization, LinkModel};
use crate::error::{Result, SimError};
use crate::exec::{try_map_indexed, Execution};
use crate::scenario::{allocate_power, db_to_linear, PowerAllocation, Scenario};
use crate::toneplan::{BandPlan, OperatorId, Regime, ToneGrid};

/// Quantile reported for Monte Carlo runs.
pub const PERCENTILE: f64 = 0.10;
pub const DEFAULT_TRIALS: usize = 1000;
pub const MIN_TRIALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitLoading {
    pub gamma_linear: f64,
    pub bit_min: f64,
    pub bit_max: f64,
    pub integer_bits: bool,
}

impl BitLoading {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            gamma_linear: s.gamma_linear(),
            bit_min: s.bit_min,
            bit_max: s.bit_max,
            integer_bits: s.integer_bits,
        }
    }

    /// Tone off below `bit_min`, capped at `bit_max`.
    pub fn clamp(&self, bits: f64) -> f64 {
        if bits < self.bit_min {
            0.0
        } else {
            let b = bits.min(self.bit_max);
            if self.integer_bits {
                b.floor()
            } else {
                b
            }
        }
    }
}

/// Inputs of a single tone's bit computation, in linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneInputs {
    pub signal_gain: f64,
    pub p_tone: f64,
    pub noise_psd_w_hz: f64,
    pub delta_f: f64,
    pub fext_w: f64,
    pub r_v_linear: f64,
}

impl ToneInputs {
    /// SNR divided by the gap, before the logarithm.
    pub fn snr_over_gap(&self, gamma_linear: f64) -> f64 {
        let eta = self.noise_psd_w_hz * self.delta_f * self.r_v_linear;
        self.signal_gain * self.p_tone / ((eta + self.fext_w) * gamma_linear)
    }
}

pub fn tone_bits(t: &ToneInputs, loading: &BitLoading) -> f64 {
    loading.clamp((1.0 + t.snr_over_gap(loading.gamma_linear)).log2())
}

/// One interfering line as seen by the victim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturber {
    /// Column in the realization matrix.
    pub index: usize,
    pub distance_m: f64,
    pub p_tone_w: f64,
}

/// Operator owning disturber `j` of a victim served by `victim`: lines are spread
/// round-robin over the other operators first.
pub fn disturber_operator(victim: OperatorId, j: usize, n_operators: usize) -> OperatorId {
    OperatorId((victim.0 + j + 1) % n_operators)
}

/// FEXT power received by `victim` on tone `k`, summed term by term over `disturbers`.
pub fn fext_power(
    grid: &ToneGrid,
    k: usize,
    victim: usize,
    victim_distance_m: f64,
    disturbers: &[Disturber],
    realization: &FextRealization,
    link: &LinkModel,
) -> Result<f64> {
    let f = grid.frequency(k);
    disturbers.iter().try_fold(0.0, |acc, m| {
        let l = victim_distance_m.min(m.distance_m);
        let g = fext_gain_sampled(
            &link.fext,
            &link.cable,
            f,
            victim_distance_m,
            l,
            realization.x_db(victim, m.index),
        )?;
        Ok(acc + g * m.p_tone_w)
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateResult {
    pub per_band_bps: BTreeMap<u16, f64>,
    pub aggregate_bps: f64,
    pub active_tone_count: usize,
    /// `(tone index, bits)` for every evaluated tone, when requested.
    pub per_tone_bits: Option<Vec<(usize, f64)>>,
}

impl RateResult {
    fn from_bands(per_band_bps: BTreeMap<u16, f64>, active_tone_count: usize) -> Self {
        let aggregate_bps = per_band_bps.values().sum();
        Self {
            per_band_bps,
            aggregate_bps,
            active_tone_count,
            per_tone_bits: None,
        }
    }

    /// Band-wise sum of two results over disjoint band sets.
    pub fn merge(&self, other: &RateResult) -> RateResult {
        let mut bands = self.per_band_bps.clone();
        for (b, r) in &other.per_band_bps {
            *bands.entry(*b).or_insert(0.0) += r;
        }
        RateResult::from_bands(bands, self.active_tone_count + other.active_tone_count)
    }

    pub fn band(&self, number: u16) -> f64 {
        self.per_band_bps.get(&number).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercentileResult {
    /// Aggregate rate per trial, in trial order.
    pub samples: Vec<f64>,
    pub p10_bps: f64,
    pub trial_count: usize,
    pub master_seed: u64,
    /// Tenth percentile of each band taken separately over the same trials.
    pub per_band_p10: BTreeMap<u16, f64>,
}

impl PercentileResult {
    fn from_trials(trials: &[RateResult], master_seed: u64) -> Self {
        let samples: Vec<f64> = trials.iter().map(|r| r.aggregate_bps).collect();
        let bands: Vec<u16> = trials
            .first()
            .map(|r| r.per_band_bps.keys().copied().collect())
            .unwrap_or_default();
        let per_band_p10 = bands
            .into_iter()
            .map(|b| {
                let v: Vec<f64> = trials.iter().map(|r| r.band(b)).collect();
                (b, empirical_quantile(&v, PERCENTILE))
            })
            .collect();
        Self {
            p10_bps: empirical_quantile(&samples, PERCENTILE),
            trial_count: samples.len(),
            samples,
            master_seed,
            per_band_p10,
        }
    }

    pub fn median(&self) -> f64 {
        empirical_quantile(&self.samples, 0.5)
    }

    pub fn band_p10(&self, number: u16) -> f64 {
        self.per_band_p10.get(&number).copied().unwrap_or(0.0)
    }
}

/// Inverse-CDF quantile without interpolation: the smallest sample `x` with
/// `F(x) >= p`, i.e. sorted index `ceil(p n) - 1`.
pub fn empirical_quantile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Per-trial seed, a SplitMix64 mix of the master seed and the trial index.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    let mut z = master_seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
struct ToneEntry {
    k: usize,
    /// Position in `RateEngine::bands`.
    band: usize,
    signal_gain: f64,
    /// FEXT gain at the 99% level for coupling length = loop length.
    fext99: f64,
}

/// Pre-evaluated channel for one plan and scenario. Rates for any operator and
/// any FEXT realization are computed from these tables.
#[derive(Debug, Clone)]
pub struct RateEngine<'a> {
    plan: &'a BandPlan,
    scenario: &'a Scenario,
    link: &'a LinkModel,
    power: PowerAllocation,
    loading: BitLoading,
    noise_w: f64,
    bands: Vec<u16>,
    lower: Vec<ToneEntry>,
    upper: Vec<ToneEntry>,
    /// Degradation per band position, linear.
    r_v: Vec<f64>,
}

impl<'a> RateEngine<'a> {
    pub fn new(plan: &'a BandPlan, scenario: &'a Scenario, link: &'a LinkModel) -> Result<Self> {
        scenario.validate()?;
        link.validate()?;
        let power = allocate_power(scenario, plan)?;
        let grid = plan.grid();
        let d = scenario.cab_nt_distance;
        let bands: Vec<u16> = plan.bands().map(|b| b.number).collect();
        let tables = |list: &[crate::toneplan::Band], offset: usize| -> Result<Vec<ToneEntry>> {
            let mut out = Vec::new();
            for (i, band) in list.iter().enumerate() {
                for k in band.tones.clone() {
                    let f = grid.frequency(k);
                    let h = direct_gain(&link.cable, f, d)?;
                    out.push(ToneEntry {
                        k,
                        band: offset + i,
                        signal_gain: h,
                        fext99: link.fext.coupling(f, d) * h,
                    });
                }
            }
            Ok(out)
        };
        let lower = tables(plan.lower_bands(), 0)?;
        let upper = tables(plan.upper_bands(), plan.lower_bands().len())?;
        Ok(Self {
            plan,
            scenario,
            link,
            power,
            loading: BitLoading::from_scenario(scenario),
            noise_w: scenario.noise_psd_w_hz() * grid.delta_f(),
            r_v: vec![scenario.r_v_linear(); bands.len()],
            bands,
            lower,
            upper,
        })
    }

    /// Overrides the vectoring degradation of one band.
    pub fn with_band_degradation(mut self, band: u16, r_v_db: f64) -> Result<Self> {
        let pos = self
            .bands
            .iter()
            .position(|&b| b == band)
            .ok_or_else(|| SimError::invalid("band", format!("band {band} not in plan")))?;
        if !(r_v_db >= 0.0) {
            return Err(SimError::invalid("r_v_db", "degradation must be >= 0 dB"));
        }
        self.r_v[pos] = db_to_linear(r_v_db);
        Ok(self)
    }

    pub fn power(&self) -> &PowerAllocation {
        &self.power
    }

    pub fn plan(&self) -> &BandPlan {
        self.plan
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn link(&self) -> &LinkModel {
        self.link
    }

    fn empty_bands(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        vec![0.0; range.len()]
    }

    fn finish(&self, sums: Vec<f64>, offset: usize, active: usize) -> RateResult {
        let rs = self.plan.grid().symbol_rate();
        let bands = sums
            .into_iter()
            .enumerate()
            .map(|(i, bits)| (self.bands[offset + i], rs * bits))
            .collect();
        RateResult::from_bands(bands, active)
    }

    /// Sum of `10^(-X/10)` over the first `n_disturbers` lines, split into lines of the
    /// victim's own operator and of the others.
    fn fext_weights(&self, operator: OperatorId, realization: &FextRealization) -> Result<(f64, f64)> {
        let n = self.scenario.n_disturbers;
        if realization.n_disturbers() < n {
            return Err(SimError::invalid(
                "realization",
                format!("covers {} disturbers, scenario needs {n}", realization.n_disturbers()),
            ));
        }
        let mut own = 0.0;
        let mut alien = 0.0;
        for (j, &x) in realization.row(0)[..n].iter().enumerate() {
            let w = fluctuation_factor(x);
            if disturber_operator(operator, j, self.scenario.n_operators) == operator {
                own += w;
            } else {
                alien += w;
            }
        }
        Ok((own, alien))
    }

    fn lower_nv(&self, operator: OperatorId, realization: &FextRealization) -> Result<RateResult> {
        let (own, alien) = self.fext_weights(operator, realization)?;
        let vectored = self.plan.lower_band_vectored();
        let weight = if vectored { alien } else { own + alien };
        let p = self.power.p_tone_lower;
        let mut sums = self.empty_bands(0..self.plan.lower_bands().len());
        let mut active = 0;
        for t in &self.lower {
            let r_v = if vectored { self.r_v[t.band] } else { 1.0 };
            let bits = self.bits(t.signal_gain, p, t.fext99 * p * weight, r_v);
            if bits > 0.0 {
                active += 1;
            }
            sums[t.band] += bits;
        }
        Ok(self.finish(sums, 0, active))
    }

    fn upper_nv(&self, operator: OperatorId, realization: &FextRealization) -> Result<RateResult> {
        let (own, alien) = self.fext_weights(operator, realization)?;
        let weight = own + alien;
        let p = self.power.p_tone_nv;
        let offset = self.plan.lower_bands().len();
        let mut sums = self.empty_bands(offset..self.bands.len());
        let mut active = 0;
        for t in &self.upper {
            let bits = self.bits(t.signal_gain, p, t.fext99 * p * weight, 1.0);
            if bits > 0.0 {
                active += 1;
            }
            sums[t.band - offset] += bits;
        }
        Ok(self.finish(sums, offset, active))
    }

    fn bits(&self, signal_gain: f64, p_tone: f64, fext_w: f64, r_v_linear: f64) -> f64 {
        let snr = signal_gain * p_tone / ((self.noise_w * r_v_linear + fext_w) * self.loading.gamma_linear);
        self.loading.clamp((1.0 + snr).log2())
    }

    /// Full-band shared, non-vectored rate.
    pub fn nv_rate(&self, operator: OperatorId, realization: &FextRealization) -> Result<RateResult> {
        self.plan.check_operator(operator)?;
        Ok(self
            .lower_nv(operator, realization)?
            .merge(&self.upper_nv(operator, realization)?))
    }

    /// Vectored rate on the operator's partitioned tones above 17.6 MHz.
    pub fn sbv_rate(&self, operator: OperatorId) -> Result<RateResult> {
        self.plan.check_operator(operator)?;
        let p = self.power.p_tone_sbv(operator);
        let offset = self.plan.lower_bands().len();
        let mut sums = self.empty_bands(offset..self.bands.len());
        let mut active = 0;
        for t in &self.upper {
            if self.plan.owner(t.k) != Some(operator) {
                continue;
            }
            let bits = self.bits(t.signal_gain, p, 0.0, self.r_v[t.band]);
            if bits > 0.0 {
                active += 1;
            }
            sums[t.band - offset] += bits;
        }
        Ok(self.finish(sums, offset, active))
    }

    /// Lower band shared and non-vectored, upper band partitioned and vectored.
    pub fn combined_rate(&self, operator: OperatorId, realization: &FextRealization) -> Result<RateResult> {
        self.plan.check_operator(operator)?;
        Ok(self.lower_nv(operator, realization)?.merge(&self.sbv_rate(operator)?))
    }

    /// Lower-band rate if the lower band were also split tone by tone among operators and
    /// vectored: tones `k mod n_operators == operator`, with `n_operators` times the shared
    /// per-tone power. Reference curve for per-band comparisons only; plans never partition
    /// the lower band.
    pub fn partitioned_lower_rate(&self, operator: OperatorId) -> Result<RateResult> {
        self.plan.check_operator(operator)?;
        let n = self.plan.n_operators();
        let p = self.power.p_tone_lower * n as f64;
        let mut sums = self.empty_bands(0..self.plan.lower_bands().len());
        let mut active = 0;
        for t in self.lower.iter().filter(|t| t.k % n == operator.0) {
            let bits = self.bits(t.signal_gain, p, 0.0, self.r_v[t.band]);
            if bits > 0.0 {
                active += 1;
            }
            sums[t.band] += bits;
        }
        Ok(self.finish(sums, 0, active))
    }

    /// NV and combined rates over `trials` FEXT realizations. The upper SBV part is
    /// deterministic and evaluated once.
    pub fn monte_carlo(
        &self,
        operator: OperatorId,
        trials: usize,
        master_seed: u64,
        exec: Execution,
    ) -> Result<MonteCarloRates> {
        self.plan.check_operator(operator)?;
        check_trials(trials)?;
        let sbv = self.sbv_rate(operator)?;
        let per_trial = try_map_indexed(trials, exec, |t| {
            let realization = self.trial_realization(master_seed, t);
            let lower = self.lower_nv(operator, &realization)?;
            let upper = self.upper_nv(operator, &realization)?;
            Ok::<_, SimError>((lower.merge(&upper), lower.merge(&sbv)))
        })?;
        let (nv, combined): (Vec<RateResult>, Vec<RateResult>) = per_trial.into_iter().unzip();
        Ok(MonteCarloRates {
            nv: PercentileResult::from_trials(&nv, master_seed),
            combined: PercentileResult::from_trials(&combined, master_seed),
        })
    }

    /// Combined-rate percentile only; same trials and result as `monte_carlo(..).combined`.
    pub fn combined_monte_carlo(
        &self,
        operator: OperatorId,
        trials: usize,
        master_seed: u64,
        exec: Execution,
    ) -> Result<PercentileResult> {
        self.plan.check_operator(operator)?;
        check_trials(trials)?;
        let sbv = self.sbv_rate(operator)?;
        let per_trial = try_map_indexed(trials, exec, |t| {
            Ok::<_, SimError>(
                self.lower_nv(operator, &self.trial_realization(master_seed, t))?
                    .merge(&sbv),
            )
        })?;
        Ok(PercentileResult::from_trials(&per_trial, master_seed))
    }

    fn trial_realization(&self, master_seed: u64, trial: usize) -> FextRealization {
        sample_fext(
            &self.link.fext,
            1,
            self.scenario.n_disturbers,
            trial_seed(master_seed, trial),
        )
    }

    /// Diagnostic dump of the combined view: shared lower tones (NV) and the operator's
    /// partitioned tones (SBV).
    pub fn tone_dump_csv(&self, operator: OperatorId, realization: &FextRealization) -> Result<String> {
        self.plan.check_operator(operator)?;
        let (own, alien) = self.fext_weights(operator, realization)?;
        let vectored = self.plan.lower_band_vectored();
        let grid = self.plan.grid();
        let mut out = String::from("tone_index,f_hz,regime,operator_id,snr_db,bits,fext_w\n");
        let mut row = |t: &ToneEntry, regime: Regime, p: f64, fext_w: f64, r_v: f64| {
            let inputs = ToneInputs {
                signal_gain: t.signal_gain,
                p_tone: p,
                noise_psd_w_hz: self.scenario.noise_psd_w_hz(),
                delta_f: grid.delta_f(),
                fext_w,
                r_v_linear: r_v,
            };
            let snr_db = 10.0 * (inputs.snr_over_gap(1.0)).log10();
            let bits = tone_bits(&inputs, &self.loading);
            let op = if regime == Regime::Shared {
                "all".to_string()
            } else {
                operator.to_string()
            };
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.6},{:e}\n",
                t.k,
                grid.frequency(t.k),
                regime.as_str(),
                op,
                snr_db,
                bits,
                fext_w
            ));
        };
        let p = self.power.p_tone_lower;
        for t in &self.lower {
            let weight = if vectored { alien } else { own + alien };
            let r_v = if vectored { self.r_v[t.band] } else { 1.0 };
            row(t, Regime::Shared, p, t.fext99 * p * weight, r_v);
        }
        let p = self.power.p_tone_sbv(operator);
        for t in self.upper.iter().filter(|t| self.plan.owner(t.k) == Some(operator)) {
            row(t, Regime::PartitionedVectored, p, 0.0, self.r_v[t.band]);
        }
        Ok(out)
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(SimError::invalid(
            "trials",
            format!("at least {MIN_TRIALS} trials are required, got {trials}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRates {
    pub nv: PercentileResult,
    pub combined: PercentileResult,
}

pub fn nv_rate(
    operator: OperatorId,
    plan: &BandPlan,
    scenario: &Scenario,
    link: &LinkModel,
    realization: &FextRealization,
) -> Result<RateResult> {
    RateEngine::new(plan, scenario, link)?.nv_rate(operator, realization)
}

pub fn sbv_rate(operator: OperatorId, plan: &BandPlan, scenario: &Scenario, link: &LinkModel) -> Result<RateResult> {
    RateEngine::new(plan, scenario, link)?.sbv_rate(operator)
}

pub fn combined_operator_rate(
    operator: OperatorId,
    plan: &BandPlan,
    scenario: &Scenario,
    link: &LinkModel,
    realization: &FextRealization,
) -> Result<RateResult> {
    RateEngine::new(plan, scenario, link)?.combined_rate(operator, realization)
}

pub fn monte_carlo_percentile(
    operator: OperatorId,
    plan: &BandPlan,
    scenario: &Scenario,
    link: &LinkModel,
    trials: usize,
    master_seed: u64,
) -> Result<PercentileResult> {
    Ok(RateEngine::new(plan, scenario, link)?
        .monte_carlo(operator, trials, master_seed, Execution::default())?
        .combined)
}
