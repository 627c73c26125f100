mod common;

use common::{random_instance, reference_rates, relative_error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbv_core::rateengine::{combined_operator_rate, fext_power, nv_rate, sbv_rate, Disturber, RateEngine};
use sbv_core::OperatorId;

const TOL: f64 = 1e-12;

#[test]
fn engine_matches_brute_force_on_small_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5b5);
    let mut nontrivial = 0;
    for i in 0..200 {
        let inst = random_instance(&mut rng);
        let plan = inst.plan();
        assert!(plan.grid().max_tone_index() <= 32);
        let op = OperatorId(inst.operator);
        let r = inst.realization();
        let want = reference_rates(&inst);
        let nv = nv_rate(op, &plan, &inst.scenario, &inst.link, &r).unwrap();
        let sbv = sbv_rate(op, &plan, &inst.scenario, &inst.link).unwrap();
        let combined = combined_operator_rate(op, &plan, &inst.scenario, &inst.link, &r).unwrap();
        assert!(
            relative_error(nv.aggregate_bps, want.nv_bps) <= TOL,
            "#{i} nv {} vs {}",
            nv.aggregate_bps,
            want.nv_bps
        );
        assert!(
            relative_error(sbv.aggregate_bps, want.sbv_bps) <= TOL,
            "#{i} sbv {} vs {}",
            sbv.aggregate_bps,
            want.sbv_bps
        );
        let want_combined = want.lower_bps + want.sbv_bps;
        assert!(
            relative_error(combined.aggregate_bps, want_combined) <= TOL,
            "#{i} combined"
        );
        if want.nv_bps > 0.0 && want.sbv_bps > 0.0 {
            nontrivial += 1;
        }
    }
    assert!(nontrivial > 100, "only {nontrivial} instances carry rate");
}

#[test]
fn per_term_fext_sum_matches_fast_path() {
    // co-located disturbers: the per-disturber loop and the engine's pre-summed
    // weights must agree tone by tone
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let mut inst = random_instance(&mut rng);
        inst.scenario.lower_band_vectored = false;
        let plan = inst.plan();
        let engine = RateEngine::new(&plan, &inst.scenario, &inst.link).unwrap();
        let r = inst.realization();
        let p = engine.power().p_tone_nv;
        let d = inst.scenario.cab_nt_distance;
        let disturbers: Vec<Disturber> = (0..inst.scenario.n_disturbers)
            .map(|index| Disturber {
                index,
                distance_m: d,
                p_tone_w: p,
            })
            .collect();
        for k in plan.upper_tones() {
            let per_term = fext_power(plan.grid(), k, 0, d, &disturbers, &r, &inst.link).unwrap();
            let weight: f64 = inst.x_db.iter().map(|x| 10f64.powf(-x / 10.0)).sum();
            let f = plan.grid().frequency(k);
            let closed = inst.link.fext.coupling(f, d)
                * sbv_core::channel::direct_gain(&inst.link.cable, f, d).unwrap()
                * weight
                * p;
            assert!(relative_error(per_term, closed) <= 1e-12, "tone {k}");
        }
    }
}
