//! Experiment parameterization and flat-PSD power allocation.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Result, SimError};
use crate::toneplan::{BandPlan, OperatorId, DEFAULT_DELTA_F_HZ, DEFAULT_SYMBOL_RATE, SUB_CHANNEL_HZ};

/// Named numbers of active interfering lines in the binder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadLevel {
    VeryLow,
    Low,
    Medium,
    High,
}

impl LoadLevel {
    pub const ALL: [LoadLevel; 4] = [LoadLevel::VeryLow, LoadLevel::Low, LoadLevel::Medium, LoadLevel::High];

    pub fn disturbers(self) -> usize {
        match self {
            LoadLevel::VeryLow => 2,
            LoadLevel::Low => 6,
            LoadLevel::Medium => 12,
            LoadLevel::High => 24,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "very_low" => Some(LoadLevel::VeryLow),
            "low" => Some(LoadLevel::Low),
            "medium" => Some(LoadLevel::Medium),
            "high" => Some(LoadLevel::High),
            _ => None,
        }
    }

    pub fn from_disturbers(n: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.disturbers() == n)
    }
}

impl fmt::Display for LoadLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LoadLevel::VeryLow => "very_low",
            LoadLevel::Low => "low",
            LoadLevel::Medium => "medium",
            LoadLevel::High => "high",
        };
        f.write_str(s)
    }
}

/// Disturber count given either as an integer or as a load preset name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct DisturberCount(pub usize);

impl<'de> Deserialize<'de> for DisturberCount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(i64),
            Preset(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(n) if n >= 0 => Ok(DisturberCount(n as usize)),
            Raw::Count(n) => Err(serde::de::Error::custom(format!("negative disturber count {n}"))),
            Raw::Preset(name) => LoadLevel::from_name(&name)
                .map(|l| DisturberCount(l.disturbers()))
                .ok_or_else(|| {
                    serde::de::Error::custom(format!(
                        "unknown load level `{name}` (expected very_low, low, medium, high or an integer)"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub n_operators: usize,
    pub n_disturbers: usize,
    /// CAB-to-NT distance in metres.
    pub cab_nt_distance: f64,
    pub f_max: f64,
    /// Vectoring degradation, constant across tones.
    pub r_v_db: f64,
    /// Per-operator power budget above 17.6 MHz.
    pub p_upper_dbm: f64,
    pub p_total_dbm: f64,
    pub gamma_db: f64,
    pub n0_dbm_hz: f64,
    pub bit_min: f64,
    pub bit_max: f64,
    pub lower_band_vectored: bool,
    /// Floor per-tone bit loading to integers.
    pub integer_bits: bool,
    pub delta_f: f64,
    pub symbol_rate: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n_operators: 2,
            n_disturbers: LoadLevel::Medium.disturbers(),
            cab_nt_distance: 100.0,
            f_max: 35.2e6,
            r_v_db: 10.0,
            p_upper_dbm: 13.4,
            p_total_dbm: 17.0,
            gamma_db: 12.0,
            n0_dbm_hz: -140.0,
            bit_min: 2.0,
            bit_max: 15.0,
            lower_band_vectored: false,
            integer_bits: false,
            delta_f: DEFAULT_DELTA_F_HZ,
            symbol_rate: DEFAULT_SYMBOL_RATE,
        }
    }
}

/// `[scenario]` section as written by users: everything optional except the distance.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_operators: Option<i64>,
    pub n_disturbers: Option<DisturberCount>,
    pub cab_nt_distance: Option<f64>,
    pub f_max: Option<f64>,
    pub r_v_db: Option<f64>,
    pub p_upper_dbm: Option<f64>,
    pub p_total_dbm: Option<f64>,
    pub gamma_db: Option<f64>,
    pub n0_dbm_hz: Option<f64>,
    pub bit_min: Option<f64>,
    pub bit_max: Option<f64>,
    pub lower_band_vectored: Option<bool>,
    pub integer_bits: Option<bool>,
    pub delta_f: Option<f64>,
    pub symbol_rate: Option<f64>,
}

impl ScenarioConfig {
    pub fn resolve(&self) -> Result<Scenario> {
        let d = Scenario::default();
        let n_operators = match self.n_operators {
            Some(n) if n >= 1 => n as usize,
            Some(n) => {
                return Err(SimError::config(
                    "scenario.n_operators",
                    format!("must be >= 1, got {n}"),
                ))
            }
            None => d.n_operators,
        };
        let cab_nt_distance = self
            .cab_nt_distance
            .ok_or_else(|| SimError::config("scenario.cab_nt_distance", "missing required key"))?;
        let s = Scenario {
            n_operators,
            n_disturbers: self.n_disturbers.map(|c| c.0).unwrap_or(d.n_disturbers),
            cab_nt_distance,
            f_max: self.f_max.unwrap_or(d.f_max),
            r_v_db: self.r_v_db.unwrap_or(d.r_v_db),
            p_upper_dbm: self.p_upper_dbm.unwrap_or(d.p_upper_dbm),
            p_total_dbm: self.p_total_dbm.unwrap_or(d.p_total_dbm),
            gamma_db: self.gamma_db.unwrap_or(d.gamma_db),
            n0_dbm_hz: self.n0_dbm_hz.unwrap_or(d.n0_dbm_hz),
            bit_min: self.bit_min.unwrap_or(d.bit_min),
            bit_max: self.bit_max.unwrap_or(d.bit_max),
            lower_band_vectored: self.lower_band_vectored.unwrap_or(d.lower_band_vectored),
            integer_bits: self.integer_bits.unwrap_or(d.integer_bits),
            delta_f: self.delta_f.unwrap_or(d.delta_f),
            symbol_rate: self.symbol_rate.unwrap_or(d.symbol_rate),
        };
        s.validate()?;
        Ok(s)
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("scenario.{k}");
        if self.n_operators == 0 {
            return Err(SimError::config(key("n_operators"), "must be >= 1"));
        }
        if self.n_disturbers == 0 {
            return Err(SimError::config(key("n_disturbers"), "must be >= 1"));
        }
        if !(self.cab_nt_distance > 0.0) || !self.cab_nt_distance.is_finite() {
            return Err(SimError::config(
                key("cab_nt_distance"),
                format!("must be a positive distance in metres, got {}", self.cab_nt_distance),
            ));
        }
        if !(self.f_max >= SUB_CHANNEL_HZ) || !self.f_max.is_finite() {
            return Err(SimError::config(
                key("f_max"),
                format!("must be at least {SUB_CHANNEL_HZ} Hz, got {}", self.f_max),
            ));
        }
        if !(self.r_v_db >= 0.0) {
            return Err(SimError::config(key("r_v_db"), "degradation must be >= 0 dB"));
        }
        if !(self.p_total_dbm > self.p_upper_dbm) {
            return Err(SimError::config(
                key("p_total_dbm"),
                format!(
                    "total power {} dBm must exceed the upper-band budget {} dBm",
                    self.p_total_dbm, self.p_upper_dbm
                ),
            ));
        }
        if !self.p_upper_dbm.is_finite() {
            return Err(SimError::config(key("p_upper_dbm"), "must be finite"));
        }
        if !(self.gamma_db >= 0.0) {
            return Err(SimError::config(key("gamma_db"), "SNR gap must be >= 0 dB"));
        }
        if !self.n0_dbm_hz.is_finite() {
            return Err(SimError::config(key("n0_dbm_hz"), "must be finite"));
        }
        if !(self.bit_min >= 0.0) {
            return Err(SimError::config(key("bit_min"), "must be >= 0"));
        }
        if !(self.bit_max >= self.bit_min) {
            return Err(SimError::config(key("bit_max"), "must be >= bit_min"));
        }
        if !(self.delta_f > 0.0) {
            return Err(SimError::config(key("delta_f"), "must be positive"));
        }
        if !(self.symbol_rate > 0.0) {
            return Err(SimError::config(key("symbol_rate"), "must be positive"));
        }
        Ok(())
    }

    pub fn gamma_linear(&self) -> f64 {
        db_to_linear(self.gamma_db)
    }

    pub fn r_v_linear(&self) -> f64 {
        db_to_linear(self.r_v_db)
    }

    /// Background noise PSD in W/Hz.
    pub fn noise_psd_w_hz(&self) -> f64 {
        dbm_to_watts(self.n0_dbm_hz)
    }

    pub fn load_level(&self) -> Option<LoadLevel> {
        LoadLevel::from_disturbers(self.n_disturbers)
    }

    /// Serialized `[scenario]` table, loadable by [`load_scenario`].
    pub fn to_config_text(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            scenario: &'a Scenario,
        }
        toml::to_string(&Doc { scenario: self }).expect("scenario serializes")
    }
}

/// Parses a config document and returns its resolved scenario.
pub fn load_scenario(config_text: &str) -> Result<Scenario> {
    Ok(crate::harness::config::SimConfig::from_toml(config_text)?.scenario)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Maps a TOML parse error onto a config error, naming the key when the message carries one.
pub(crate) fn config_error(e: toml::de::Error) -> SimError {
    let message = e.message().to_string();
    let key = ["unknown field `", "missing field `"].iter().find_map(|prefix| {
        message
            .find(prefix)
            .map(|i| &message[i + prefix.len()..])
            .and_then(|rest| rest.split('`').next())
            .map(str::to_string)
    });
    SimError::Config {
        key,
        message: e.to_string().trim().to_string(),
    }
}

/// Per-tone transmit powers in watts under a flat PSD in each region.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub n_operators: usize,
    pub p_lower_w: f64,
    pub p_upper_w: f64,
    pub lower_tone_count: usize,
    pub upper_tone_count: usize,
    /// Lower (shared) band, identical for every line.
    pub p_tone_lower: f64,
    /// Upper band when every line uses every upper tone.
    pub p_tone_nv: f64,
    /// Upper band per operator, over that operator's partitioned tones.
    pub p_tone_sbv: Vec<f64>,
    pub sbv_tone_counts: Vec<usize>,
}

impl PowerAllocation {
    pub fn p_tone_sbv(&self, operator: OperatorId) -> f64 {
        self.p_tone_sbv[operator.0]
    }
}

/// Spreads the lower-band remainder and the upper-band budget flat over their tones.
/// Power of tones that later turn out unusable is not redistributed.
pub fn allocate_power(scenario: &Scenario, plan: &BandPlan) -> Result<PowerAllocation> {
    if (plan.f_max() - scenario.f_max).abs() > plan.grid().delta_f() {
        return Err(SimError::InvalidScenario(format!(
            "plan built for f_max {} Hz but scenario uses {} Hz",
            plan.f_max(),
            scenario.f_max
        )));
    }
    if plan.n_operators() != scenario.n_operators {
        return Err(SimError::InvalidScenario(format!(
            "plan has {} operators but scenario has {}",
            plan.n_operators(),
            scenario.n_operators
        )));
    }
    let p_upper_w = dbm_to_watts(scenario.p_upper_dbm);
    let p_lower_w = dbm_to_watts(scenario.p_total_dbm) - p_upper_w;
    let lower_tone_count = plan.lower_tone_count();
    if lower_tone_count == 0 {
        return Err(SimError::InvalidScenario("no active tone in the lower band".into()));
    }
    let upper_tone_count = plan.upper_tone_count();
    let sbv_tone_counts: Vec<usize> = (0..plan.n_operators())
        .map(|o| plan.partitioned_count(OperatorId(o)))
        .collect();
    if upper_tone_count > 0 {
        if let Some(o) = sbv_tone_counts.iter().position(|&c| c == 0) {
            return Err(SimError::InvalidScenario(format!(
                "operator {o} has no active tone in the upper band"
            )));
        }
    }
    let per_tone = |total: f64, n: usize| if n == 0 { 0.0 } else { total / n as f64 };
    let p_tone_nv = per_tone(p_upper_w, upper_tone_count);
    // scale the NV level by the tone-count ratio, which is exactly N_op on an even split
    let p_tone_sbv = sbv_tone_counts
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                p_tone_nv * (upper_tone_count as f64 / n as f64)
            }
        })
        .collect();
    Ok(PowerAllocation {
        n_operators: plan.n_operators(),
        p_lower_w,
        p_upper_w,
        lower_tone_count,
        upper_tone_count,
        p_tone_lower: per_tone(p_lower_w, lower_tone_count),
        p_tone_nv,
        p_tone_sbv,
        sbv_tone_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toneplan::{build_band_plan, PartitionPolicy, ToneGrid};
    use approx::assert_relative_eq;

    fn plan(n_op: usize, f_max: f64) -> BandPlan {
        let grid = ToneGrid::new(f_max, DEFAULT_DELTA_F_HZ).unwrap();
        build_band_plan(&grid, n_op, PartitionPolicy::AlternateTone, f_max, false).unwrap()
    }

    #[test]
    fn single_operator_has_equal_nv_and_sbv_tone_power() {
        let s = Scenario {
            n_operators: 1,
            ..Scenario::default()
        };
        let a = allocate_power(&s, &plan(1, 35.2e6)).unwrap();
        assert_eq!(a.p_tone_sbv(OperatorId(0)), a.p_tone_nv);
    }

    #[test]
    fn hand_division_example() {
        // 1000 upper tones split 500/500 under a 13.4 dBm budget
        let p_upper = dbm_to_watts(13.4);
        assert_relative_eq!(p_upper, 21.877_616e-3, max_relative = 1e-6);
        let nv = p_upper / 1000.0;
        let sbv = p_upper / 500.0;
        assert_relative_eq!(nv, 21.88e-6, max_relative = 1e-3);
        assert_relative_eq!(sbv, 43.76e-6, max_relative = 1e-3);
        assert_relative_eq!(sbv * 500.0, p_upper, max_relative = 1e-12);
    }

    #[test]
    fn conservation_and_ratio_on_even_split() {
        let s = Scenario::default();
        let p = plan(2, 35.2e6);
        let a = allocate_power(&s, &p).unwrap();
        // 4067 upper tones 4096..=8162: operator 0 gets the even indexes
        assert_eq!(a.sbv_tone_counts, vec![2034, 2033]);
        for o in 0..2 {
            let sum = a.p_tone_sbv[o] * a.sbv_tone_counts[o] as f64;
            assert_relative_eq!(sum, dbm_to_watts(13.4), max_relative = 1e-9);
        }
        assert_relative_eq!(
            a.p_tone_lower * a.lower_tone_count as f64,
            a.p_lower_w,
            max_relative = 1e-9
        );
        assert_relative_eq!(10.0 * (a.p_lower_w * 1e3).log10(), 14.51, epsilon = 0.01);
    }

    #[test]
    fn more_tones_means_less_power_per_tone() {
        let s = |f| Scenario {
            f_max: f,
            ..Scenario::default()
        };
        let mut last = f64::INFINITY;
        for f in [35.2e6, 52.8e6, 70.4e6, 88.0e6, 105.6e6] {
            let a = allocate_power(&s(f), &plan(2, f)).unwrap();
            assert!(a.p_tone_nv < last);
            last = a.p_tone_nv;
        }
    }

    #[test]
    fn mismatched_plan_rejected() {
        let s = Scenario::default();
        assert!(allocate_power(&s, &plan(2, 52.8e6)).is_err());
        assert!(allocate_power(&s, &plan(3, 35.2e6)).is_err());
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let s = load_scenario("[scenario]\ncab_nt_distance = 100\n").unwrap();
        assert_eq!(s.gamma_db, 12.0);
        assert_eq!(s.n0_dbm_hz, -140.0);
        assert_eq!(s.cab_nt_distance, 100.0);
    }

    #[test]
    fn load_presets() {
        let s = load_scenario("[scenario]\ncab_nt_distance = 100\nn_disturbers = \"medium\"\n").unwrap();
        assert_eq!(s.n_disturbers, 12);
        let s = load_scenario("[scenario]\ncab_nt_distance = 100\nn_disturbers = 7\n").unwrap();
        assert_eq!(s.n_disturbers, 7);
        assert!(load_scenario("[scenario]\ncab_nt_distance = 100\nn_disturbers = \"huge\"\n").is_err());
    }

    #[test]
    fn validation_names_the_key() {
        let err = load_scenario("[scenario]\ncab_nt_distance = -5\n").unwrap_err();
        assert!(err.to_string().contains("cab_nt_distance"), "{err}");
        let err = load_scenario("[scenario]\nn_operators = 2\n").unwrap_err();
        assert!(err.to_string().contains("cab_nt_distance"), "{err}");
        let err = load_scenario("[scenario]\ncab_nt_distance = 100\ngama_db = 3\n").unwrap_err();
        assert!(err.to_string().contains("gama_db"), "{err}");
        let err = load_scenario("[scenario]\ncab_nt_distance = 100\np_total_dbm = 10\n").unwrap_err();
        assert!(err.to_string().contains("p_total_dbm"), "{err}");
    }

    #[test]
    fn scenario_roundtrip() {
        let s = Scenario {
            n_operators: 3,
            n_disturbers: 24,
            cab_nt_distance: 275.5,
            f_max: 70.4e6,
            r_v_db: 14.0,
            lower_band_vectored: true,
            integer_bits: true,
            ..Scenario::default()
        };
        assert_eq!(load_scenario(&s.to_config_text()).unwrap(), s);
    }
}
