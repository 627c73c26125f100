//! Independent per-tone reference used by the oracle and acceptance tests. It shares no
//! code with the engine: tone membership, power split, channel and FEXT sums are all
//! rewritten here from the closed forms.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sbv_core::channel::{CableModel, FextModel, FextRealization, LinkModel};
use sbv_core::toneplan::{BandPlan, PartitionPolicy, ToneGrid};
use sbv_core::Scenario;

const LOWER_BANDS_HZ: [(f64, f64); 3] = [(0.138e6, 3.75e6), (5.2e6, 8.5e6), (14.0e6, 17.66e6)];
const UPPER_START_HZ: f64 = 17.66e6;

#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub link: LinkModel,
    pub x_db: Vec<f64>,
    pub operator: usize,
}

impl Instance {
    pub fn plan(&self) -> BandPlan {
        let s = &self.scenario;
        let grid = ToneGrid::new(s.f_max, s.delta_f).unwrap();
        BandPlan::build(
            &grid,
            s.n_operators,
            PartitionPolicy::AlternateTone,
            s.f_max,
            s.lower_band_vectored,
            0,
        )
        .unwrap()
    }

    pub fn realization(&self) -> FextRealization {
        FextRealization::from_values(1, self.x_db.len(), self.x_db.clone(), 0).unwrap()
    }
}

/// Small grid (at most 32 tones below f_max) with every model input randomized.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let delta_f = [1.1e6, 1.25e6, 2.2e6][rng.random_range(0..3)];
    let f_max = [35.2e6, 30.0e6, 26.4e6][rng.random_range(0..3)];
    let n_operators = rng.random_range(1..=3);
    let n_disturbers = rng.random_range(1..=24);
    let p_upper_dbm = rng.random_range(8.0..14.0);
    let scenario = Scenario {
        n_operators,
        n_disturbers,
        cab_nt_distance: rng.random_range(30.0..700.0),
        f_max,
        r_v_db: rng.random_range(0.0..25.0),
        p_upper_dbm,
        p_total_dbm: p_upper_dbm + rng.random_range(0.5..6.0),
        gamma_db: rng.random_range(6.0..14.0),
        n0_dbm_hz: rng.random_range(-150.0..-130.0),
        integer_bits: rng.random_bool(0.3),
        lower_band_vectored: rng.random_bool(0.3),
        delta_f,
        ..Scenario::default()
    };
    let link = LinkModel {
        cable: CableModel {
            a0: rng.random_range(0.0..2.0),
            a1: rng.random_range(1.0..3.0),
            a2: rng.random_range(0.0..0.2),
            ..CableModel::default()
        },
        fext: FextModel {
            k99_db: rng.random_range(-60.0..-45.0),
            freq_exponent: rng.random_range(1.5..2.5),
            length_exponent: rng.random_range(0.5..1.5),
            ..FextModel::default()
        },
    };
    let x_db = (0..n_disturbers).map(|_| rng.random_range(-5.0..30.0)).collect();
    let operator = rng.random_range(0..n_operators);
    Instance {
        scenario,
        link,
        x_db,
        operator,
    }
}

fn dbm_w(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

fn gain(c: &CableModel, f: f64, d: f64) -> f64 {
    let mhz = f / 1e6;
    let db = d / 100.0 * (c.a0 + c.a1 * mhz.sqrt() + c.a2 * mhz);
    10f64.powf(-db / 10.0)
}

fn bits(snr_over_gap: f64, s: &Scenario) -> f64 {
    let b = (1.0 + snr_over_gap).log2();
    if b < s.bit_min {
        0.0
    } else if s.integer_bits {
        b.min(s.bit_max).floor()
    } else {
        b.min(s.bit_max)
    }
}

pub struct Reference {
    pub nv_bps: f64,
    pub sbv_bps: f64,
    pub lower_bps: f64,
}

/// Brute-force NV (full band) and SBV (own upper tones) rates of `inst.operator`.
pub fn reference_rates(inst: &Instance) -> Reference {
    let s = &inst.scenario;
    let (cable, fext) = (&inst.link.cable, &inst.link.fext);
    let d = s.cab_nt_distance;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut k = 1usize;
    while (k as f64) * s.delta_f < s.f_max {
        let f = k as f64 * s.delta_f;
        if LOWER_BANDS_HZ.iter().any(|&(a, b)| f >= a && f < b) {
            lower.push(k);
        } else if f >= UPPER_START_HZ {
            upper.push(k);
        }
        k += 1;
    }
    let own: Vec<usize> = upper
        .iter()
        .copied()
        .filter(|k| k % s.n_operators == inst.operator)
        .collect();
    let p_upper = dbm_w(s.p_upper_dbm);
    let p_lower = dbm_w(s.p_total_dbm) - p_upper;
    let p_lower_tone = p_lower / lower.len() as f64;
    let p_nv_tone = p_upper / upper.len() as f64;
    let p_sbv_tone = p_upper / own.len() as f64;
    let eta = dbm_w(s.n0_dbm_hz) * s.delta_f;
    let gamma = 10f64.powf(s.gamma_db / 10.0);
    let r_v = 10f64.powf(s.r_v_db / 10.0);

    let fext_sum = |k: usize, p: f64, skip_own: bool| -> f64 {
        let f = k as f64 * s.delta_f;
        let mut total = 0.0;
        for (j, x) in inst.x_db.iter().enumerate() {
            if skip_own && (inst.operator + j + 1) % s.n_operators == inst.operator {
                continue;
            }
            let coupling = 10f64.powf(fext.k99_db / 10.0)
                * (f / fext.f0_hz).powf(fext.freq_exponent)
                * (d / fext.l0_m).powf(fext.length_exponent);
            total += coupling * gain(cable, f, d) * 10f64.powf(-x / 10.0) * p;
        }
        total
    };

    let mut lower_bits = 0.0;
    for &k in &lower {
        let h = gain(cable, k as f64 * s.delta_f, d);
        let (noise, skip) = if s.lower_band_vectored {
            (eta * r_v, true)
        } else {
            (eta, false)
        };
        let i = fext_sum(k, p_lower_tone, skip);
        lower_bits += bits(h * p_lower_tone / ((noise + i) * gamma), s);
    }
    let mut upper_nv_bits = 0.0;
    for &k in &upper {
        let h = gain(cable, k as f64 * s.delta_f, d);
        let i = fext_sum(k, p_nv_tone, false);
        upper_nv_bits += bits(h * p_nv_tone / ((eta + i) * gamma), s);
    }
    let mut sbv_bits = 0.0;
    for &k in &own {
        let h = gain(cable, k as f64 * s.delta_f, d);
        sbv_bits += bits(h * p_sbv_tone / (eta * r_v * gamma), s);
    }
    let rs = s.symbol_rate;
    Reference {
        nv_bps: rs * (lower_bits + upper_nv_bits),
        sbv_bps: rs * sbv_bits,
        lower_bps: rs * lower_bits,
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
