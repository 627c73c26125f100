use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sbv_core::harness::{self, SimConfig};
use sbv_core::toneplan::{BandPlan, PartitionPolicy, ToneGrid, DEFAULT_DELTA_F_HZ};
use sbv_core::{Execution, LinkModel, OperatorId, RateEngine, Scenario};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    let link = LinkModel::default();
    for f_max in [35.2e6, 105.6e6] {
        let s = Scenario {
            n_operators: 2,
            n_disturbers: 24,
            f_max,
            ..Scenario::default()
        };
        let grid = ToneGrid::new(f_max, DEFAULT_DELTA_F_HZ).unwrap();
        let plan = BandPlan::build(&grid, 2, PartitionPolicy::AlternateTone, f_max, false, 0).unwrap();
        let engine = RateEngine::new(&plan, &s, &link).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, f_max / 1e6), &exec, |b, &exec| {
                b.iter(|| black_box(engine.monte_carlo(OperatorId(0), 200, 1, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("rate_vs_distance");
    group.sample_size(10);
    let config = SimConfig::from_toml(
        "[scenario]\ncab_nt_distance = 100\n\
         [experiment]\nkind = \"rate_vs_distance\"\ndistances = [100, 200, 300, 400]\nf_max = [35.2e6, 70.4e6]\n\
         n_operators = [2]\nn_disturbers = [12]\ntrials = 100\n",
    )
    .unwrap();
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| black_box(harness::run(&config, exec).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, sweep);
criterion_main!(benches);
