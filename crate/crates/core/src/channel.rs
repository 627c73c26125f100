//! Direct-path insertion gain, 99%-worst-case FEXT coupling and its random fluctuation.
//!
//! All gains are linear power gains. The FEXT phase term is not modelled since only
//! squared magnitudes enter the rate expressions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

const MHZ: f64 = 1e6;
const HECTOMETRE: f64 = 100.0;

/// Power-law cable attenuation,
/// `A(f, d) = (d / 100 m) * (a0 + a1 * sqrt(f / MHz) + a2 * (f / MHz))` dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CableModel {
    pub name: String,
    /// dB per 100 m.
    pub a0: f64,
    /// dB per sqrt(MHz) per 100 m.
    pub a1: f64,
    /// dB per MHz per 100 m.
    pub a2: f64,
    pub valid_f_max_hz: f64,
    /// Evaluate above `valid_f_max_hz` instead of failing.
    pub allow_extrapolation: bool,
}

impl Default for CableModel {
    fn default() -> Self {
        // ~2.9 dB/100 m at 1 MHz and ~38 dB at 17 MHz over 400 m, i.e. 0.4 mm class loss
        Self {
            name: "LQ-Gamma-approx".to_string(),
            a0: 1.0,
            a1: 1.8,
            a2: 0.07,
            valid_f_max_hz: 300e6,
            allow_extrapolation: false,
        }
    }
}

impl CableModel {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("a0", self.a0), ("a1", self.a1), ("a2", self.a2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SimError::config(
                    format!("cable.{key}"),
                    format!("attenuation coefficient must be finite and non-negative, got {v}"),
                ));
            }
        }
        if !(self.valid_f_max_hz > 0.0) {
            return Err(SimError::config("cable.valid_f_max_hz", "must be positive"));
        }
        Ok(())
    }

    pub fn attenuation_db(&self, f: f64, d: f64) -> f64 {
        let f_mhz = f.max(0.0) / MHZ;
        (d.max(0.0) / HECTOMETRE) * (self.a0 + self.a1 * f_mhz.sqrt() + self.a2 * f_mhz)
    }

    fn check_range(&self, f: f64) -> Result<()> {
        if f < 0.0 || (f > self.valid_f_max_hz && !self.allow_extrapolation) {
            return Err(SimError::ModelRange {
                f_hz: f,
                valid_f_max_hz: self.valid_f_max_hz,
            });
        }
        Ok(())
    }
}

/// `|H_d(f, d)|^2` as a linear power gain in (0, 1].
pub fn direct_gain(cable: &CableModel, f: f64, d: f64) -> Result<f64> {
    cable.check_range(f)?;
    if d < 0.0 {
        return Err(SimError::invalid(
            "d",
            format!("distance must be non-negative, got {d}"),
        ));
    }
    Ok(10f64.powf(-cable.attenuation_db(f, d) / 10.0))
}

/// FEXT coupling, `|H_FEXT,99|^2 = 10^(k99/10) (f/f0)^fe (l/l0)^le |H_d(f, d)|^2`,
/// plus the log-normal fluctuation statistics applied per disturber pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FextModel {
    pub k99_db: f64,
    pub f0_hz: f64,
    pub l0_m: f64,
    pub freq_exponent: f64,
    pub length_exponent: f64,
    pub fluct_mean_db: f64,
    pub fluct_std_db: f64,
}

impl Default for FextModel {
    fn default() -> Self {
        Self {
            // single-disturber equal-level coupling at 1 MHz over 100 m
            k99_db: -54.0,
            f0_hz: 1e6,
            l0_m: 100.0,
            freq_exponent: 2.0,
            length_exponent: 1.0,
            fluct_mean_db: 11.65,
            fluct_std_db: 5.0,
        }
    }
}

impl FextModel {
    pub fn validate(&self) -> Result<()> {
        if !self.k99_db.is_finite() {
            return Err(SimError::config("fext.k99_db", "must be finite"));
        }
        if !(self.f0_hz > 0.0) {
            return Err(SimError::config("fext.f0_hz", "must be positive"));
        }
        if !(self.l0_m > 0.0) {
            return Err(SimError::config("fext.l0_m", "must be positive"));
        }
        if !(self.freq_exponent > 0.0) {
            return Err(SimError::config("fext.freq_exponent", "must be positive"));
        }
        if !(self.length_exponent > 0.0) {
            return Err(SimError::config("fext.length_exponent", "must be positive"));
        }
        if !self.fluct_mean_db.is_finite() {
            return Err(SimError::config("fext.fluct_mean_db", "must be finite"));
        }
        if !(self.fluct_std_db >= 0.0) || !self.fluct_std_db.is_finite() {
            return Err(SimError::config("fext.fluct_std_db", "must be non-negative"));
        }
        Ok(())
    }

    /// Coupling factor without the direct-path term.
    pub fn coupling(&self, f: f64, l: f64) -> f64 {
        if l <= 0.0 {
            return 0.0;
        }
        10f64.powf(self.k99_db / 10.0)
            * (f / self.f0_hz).powf(self.freq_exponent)
            * (l / self.l0_m).powf(self.length_exponent)
    }
}

pub fn fext_gain_99(fext: &FextModel, cable: &CableModel, f: f64, d: f64, l: f64) -> Result<f64> {
    if l < 0.0 {
        return Err(SimError::invalid(
            "l",
            format!("coupling length must be non-negative, got {l}"),
        ));
    }
    if l > d {
        return Err(SimError::invalid(
            "l",
            format!("coupling length {l} m exceeds victim loop length {d} m"),
        ));
    }
    let h = direct_gain(cable, f, d)?;
    Ok(fext.coupling(f, l) * h)
}

pub fn fext_gain_sampled(fext: &FextModel, cable: &CableModel, f: f64, d: f64, l: f64, x_db: f64) -> Result<f64> {
    Ok(fext_gain_99(fext, cable, f, d, l)? * fluctuation_factor(x_db))
}

/// Linear power factor `10^(-x_db/10)` for one fluctuation draw.
pub fn fluctuation_factor(x_db: f64) -> f64 {
    10f64.powf(-x_db / 10.0)
}

/// One Monte Carlo draw of per-pair coupling fluctuations, constant over frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FextRealization {
    n_victims: usize,
    n_disturbers: usize,
    /// Row-major `n_victims x n_disturbers`.
    x_db: Vec<f64>,
    pub seed: u64,
}

impl FextRealization {
    /// Realization from explicit draws, mainly for tests and forced scenarios.
    pub fn from_values(n_victims: usize, n_disturbers: usize, x_db: Vec<f64>, seed: u64) -> Result<Self> {
        if x_db.len() != n_victims * n_disturbers {
            return Err(SimError::invalid(
                "x_db",
                format!("expected {} entries, got {}", n_victims * n_disturbers, x_db.len()),
            ));
        }
        Ok(Self {
            n_victims,
            n_disturbers,
            x_db,
            seed,
        })
    }

    pub fn n_victims(&self) -> usize {
        self.n_victims
    }

    pub fn n_disturbers(&self) -> usize {
        self.n_disturbers
    }

    pub fn x_db(&self, victim: usize, disturber: usize) -> f64 {
        self.x_db[victim * self.n_disturbers + disturber]
    }

    pub fn row(&self, victim: usize) -> &[f64] {
        &self.x_db[victim * self.n_disturbers..(victim + 1) * self.n_disturbers]
    }

    pub fn values(&self) -> &[f64] {
        &self.x_db
    }
}

/// Draws `X_dB ~ Normal(mean, std^2)` per ordered pair. Entries are drawn row by row, so a
/// realization with fewer disturbers is a prefix of a larger one with the same seed.
pub fn sample_fext(fext: &FextModel, n_victims: usize, n_disturbers: usize, seed: u64) -> FextRealization {
    let n_victims = n_victims.max(1);
    let mut x_db = vec![fext.fluct_mean_db; n_victims * n_disturbers];
    if fext.fluct_std_db > 0.0 {
        let normal = Normal::new(fext.fluct_mean_db, fext.fluct_std_db).expect("std validated non-negative");
        for v in 0..n_victims {
            // one stream per victim row keeps rows independent of the disturber count
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(v as u64);
            for x in &mut x_db[v * n_disturbers..(v + 1) * n_disturbers] {
                *x = normal.sample(&mut rng);
            }
        }
    }
    FextRealization {
        n_victims,
        n_disturbers,
        x_db,
        seed,
    }
}

/// Cable and crosstalk models used together by the rate engine.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkModel {
    pub cable: CableModel,
    pub fext: FextModel,
}

/// Flat key-value form of [`LinkModel`] used by standalone parameter files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelParams {
    name: Option<String>,
    a0: Option<f64>,
    a1: Option<f64>,
    a2: Option<f64>,
    valid_f_max_hz: Option<f64>,
    k99_db: Option<f64>,
    f0_hz: Option<f64>,
    l0_m: Option<f64>,
    freq_exponent: Option<f64>,
    length_exponent: Option<f64>,
    fluct_mean_db: Option<f64>,
    fluct_std_db: Option<f64>,
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        self.cable.validate()?;
        self.fext.validate()
    }

    /// Parses a cable/FEXT parameter file. Omitted keys keep their defaults.
    pub fn from_param_text(text: &str) -> Result<Self> {
        let p: ChannelParams = toml::from_str(text).map_err(crate::scenario::config_error)?;
        let mut cable = CableModel::default();
        let mut fext = FextModel::default();
        if let Some(v) = p.name {
            cable.name = v;
        }
        macro_rules! set {
            ($target:ident . $field:ident) => {
                if let Some(v) = p.$field {
                    $target.$field = v;
                }
            };
        }
        set!(cable.a0);
        set!(cable.a1);
        set!(cable.a2);
        set!(cable.valid_f_max_hz);
        set!(fext.k99_db);
        set!(fext.f0_hz);
        set!(fext.l0_m);
        set!(fext.freq_exponent);
        set!(fext.length_exponent);
        set!(fext.fluct_mean_db);
        set!(fext.fluct_std_db);
        let model = Self { cable, fext };
        model.validate()?;
        Ok(model)
    }

    pub fn to_param_text(&self) -> String {
        let p = ChannelParams {
            name: Some(self.cable.name.clone()),
            a0: Some(self.cable.a0),
            a1: Some(self.cable.a1),
            a2: Some(self.cable.a2),
            valid_f_max_hz: Some(self.cable.valid_f_max_hz),
            k99_db: Some(self.fext.k99_db),
            f0_hz: Some(self.fext.f0_hz),
            l0_m: Some(self.fext.l0_m),
            freq_exponent: Some(self.fext.freq_exponent),
            length_exponent: Some(self.fext.length_exponent),
            fluct_mean_db: Some(self.fext.fluct_mean_db),
            fluct_std_db: Some(self.fext.fluct_std_db),
        };
        toml::to_string(&p).expect("flat parameter table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn param_file_roundtrip_and_unknown_keys() {
        let model = LinkModel {
            cable: CableModel {
                a1: 2.5,
                ..CableModel::default()
            },
            fext: FextModel {
                k99_db: -50.0,
                ..FextModel::default()
            },
        };
        let text = model.to_param_text();
        assert_eq!(LinkModel::from_param_text(&text).unwrap(), model);
        let err = LinkModel::from_param_text("a1 = 2.0\nk99 = -40\n").unwrap_err();
        assert!(err.to_string().contains("k99"), "{err}");
        let err = LinkModel::from_param_text("fluct_std_db = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("fluct_std_db"), "{err}");
    }

    fn sqrt_only() -> CableModel {
        CableModel {
            a0: 0.0,
            a1: 10.0,
            a2: 0.0,
            ..CableModel::default()
        }
    }

    #[test]
    fn zero_length_is_lossless() {
        let cable = CableModel::default();
        for f in [0.0, 1e6, 35e6, 105e6] {
            assert_eq!(direct_gain(&cable, f, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn hand_evaluated_attenuation() {
        // 10 dB/sqrt(MHz)/100 m at 1 MHz over 100 m is exactly 10 dB
        assert_relative_eq!(
            direct_gain(&sqrt_only(), 1e6, 100.0).unwrap(),
            0.1,
            max_relative = 1e-15
        );
    }

    #[test]
    fn above_valid_range_needs_opt_in() {
        let mut cable = CableModel::default();
        assert!(matches!(
            direct_gain(&cable, 301e6, 100.0),
            Err(SimError::ModelRange { .. })
        ));
        cable.allow_extrapolation = true;
        assert!(direct_gain(&cable, 301e6, 100.0).is_ok());
    }

    #[test]
    fn fext_hand_value() {
        let fext = FextModel {
            k99_db: -45.0,
            ..FextModel::default()
        };
        // zero-loss cable leaves only the coupling term
        let cable = CableModel {
            a0: 0.0,
            a1: 0.0,
            a2: 0.0,
            ..CableModel::default()
        };
        let g = fext_gain_99(&fext, &cable, 2e6, 300.0, 100.0).unwrap();
        assert_relative_eq!(g, 10f64.powf(-4.5) * 4.0, max_relative = 1e-14);
        assert_relative_eq!(g, 1.2649e-4, max_relative = 1e-4);
    }

    #[test]
    fn fext_length_rules() {
        let fext = FextModel::default();
        let cable = CableModel::default();
        assert_eq!(fext_gain_99(&fext, &cable, 10e6, 200.0, 0.0).unwrap(), 0.0);
        let g1 = fext_gain_99(&fext, &cable, 10e6, 200.0, 100.0).unwrap();
        let g2 = fext_gain_99(&fext, &cable, 10e6, 200.0, 200.0).unwrap();
        assert_relative_eq!(g2, 2.0 * g1, max_relative = 1e-14);
        assert!(fext_gain_99(&fext, &cable, 10e6, 200.0, 250.0).is_err());
    }

    #[test]
    fn fluctuation_scaling() {
        let fext = FextModel::default();
        let cable = CableModel::default();
        let g = fext_gain_99(&fext, &cable, 20e6, 150.0, 150.0).unwrap();
        let at = |x| fext_gain_sampled(&fext, &cable, 20e6, 150.0, 150.0, x).unwrap();
        assert_eq!(at(0.0), g);
        assert_relative_eq!(at(10.0), g / 10.0, max_relative = 1e-14);
        assert_relative_eq!(at(-10.0), g * 10.0, max_relative = 1e-14);
    }

    #[test]
    fn degenerate_fluctuation_is_constant() {
        let fext = FextModel {
            fluct_std_db: 0.0,
            ..FextModel::default()
        };
        let r = sample_fext(&fext, 3, 5, 7);
        assert!(r.values().iter().all(|&x| x == 11.65));
        assert_eq!(r.values().len(), 15);
    }

    #[test]
    fn sampling_is_seeded() {
        let fext = FextModel::default();
        assert_eq!(sample_fext(&fext, 2, 24, 99), sample_fext(&fext, 2, 24, 99));
        assert_ne!(
            sample_fext(&fext, 1, 24, 99).values(),
            sample_fext(&fext, 1, 24, 100).values()
        );
        let small = sample_fext(&fext, 1, 12, 5);
        let large = sample_fext(&fext, 1, 24, 5);
        assert_eq!(small.row(0), &large.row(0)[..12]);
    }

    #[test]
    fn sample_moments() {
        let fext = FextModel::default();
        let r = sample_fext(&fext, 1, 100_000, 2024);
        let n = r.values().len() as f64;
        let mean = r.values().iter().sum::<f64>() / n;
        let var = r.values().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 11.65).abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 5.0).abs() < 0.05, "std {}", var.sqrt());
    }
}
