use drsr::rng::{self, STREAM_INIT};
use drsr::search::nsga::dominates;
use drsr::search::{self, DatasetSpec, Problem, RunTrace};
use drsr::variation::ramped_half_and_half;
use drsr::{Dataset, LossKind, Method, RunConfig};

fn mixture_cfg(method: Method, budget: usize, population: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(method, LossKind::Medae, DatasetSpec::Mixture { n: 40, seed: Some(7) });
    cfg.budget = budget;
    cfg.population = population;
    cfg.seed = seed;
    cfg
}

fn csv_bytes(trace: &RunTrace) -> Vec<Vec<u8>> {
    trace
        .metric_names()
        .iter()
        .map(|m| {
            let mut buf = Vec::new();
            trace.write_metric_csv(m, &mut buf).unwrap();
            buf
        })
        .collect()
}

#[test]
fn initial_population_only() {
    let cfg = mixture_cfg(Method::Drsr, 1000, 1000, 3);
    let trace = search::run(&cfg).unwrap();
    assert_eq!(trace.evaluations, 1000);
    assert!(trace.archive.occupied_count() >= 1);

    let data = cfg.dataset.build(cfg.seed).unwrap();
    let problem = Problem::new(data, cfg.loss, cfg.grid, cfg.seed).unwrap();
    let trees = ramped_half_and_half(1000, 1, &cfg.variation, &mut rng::stream(cfg.seed, &[STREAM_INIT]));
    let best_initial = trees.iter().map(|t| problem.score(t).fitness).fold(0.0, f64::max);
    assert_eq!(trace.best.fitness, best_initial);
    assert_eq!(trace.records.len(), 1);
}

#[test]
fn each_offspring_costs_one_plus_full_es() {
    let cfg = mixture_cfg(Method::Drsr, 100 + 2 * 201, 100, 4);
    let trace = search::run(&cfg).unwrap();
    assert_eq!(trace.evaluations, 502);
    let cfg = RunConfig { budget: 100 + 201 + 35, ..cfg };
    // The second child gets 1 + 30 evaluations; the last 4 go to children
    // too small for a CMA-ES generation.
    assert_eq!(search::run(&cfg).unwrap().evaluations, 100 + 201 + 35);
}

#[test]
fn budget_is_spent_exactly() {
    for method in Method::ALL {
        for budget in [1, 37, 250, 1_234, 5_003] {
            let cfg = mixture_cfg(method, budget, 50, 5);
            let trace = search::run(&cfg).unwrap();
            assert_eq!(trace.evaluations, budget, "{method}");
            assert!(trace.records.iter().all(|r| r.evaluations <= budget));
        }
    }
}

#[test]
fn elitist_curves_do_not_decrease() {
    for method in [Method::Drsr, Method::Sr] {
        let mut cfg = mixture_cfg(method, 20_000, 200, 6);
        cfg.trace_interval = 10;
        let trace = search::run(&cfg).unwrap();
        let best = trace.series("best_fitness");
        assert!(best.windows(2).all(|w| w[1].2 >= w[0].2), "{method}");
        if method == Method::Drsr {
            let cov = trace.series("coverage");
            assert!(cov.windows(2).all(|w| w[1].2 >= w[0].2));
            assert!(trace.series("qd_score").windows(2).all(|w| w[1].2 >= w[0].2));
        }
        let evals = trace.series("coverage");
        assert!(evals.windows(2).all(|w| w[1].1 > w[0].1));
    }
}

#[test]
fn baselines_keep_population_size() {
    for method in [Method::Sr, Method::Mosr] {
        let cfg = mixture_cfg(method, 3_000, 40, 7);
        let trace = search::run(&cfg).unwrap();
        assert_eq!(trace.population.len(), 40, "{method}");
        assert!(trace.records.len() >= 2);
    }
}

#[test]
fn sr_elitism_on_constant_target() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0]).collect();
    let data = Dataset::new(rows, vec![1.0; 20]).unwrap();
    let mut cfg = mixture_cfg(Method::Sr, 0, 30, 8);
    cfg.loss = LossKind::Mse;
    cfg.budget = 30 + 30 * 201;
    let trace = search::run_on(&cfg, data).unwrap();
    let series = trace.series("best_fitness");
    assert_eq!(series.len(), 2);
    assert!(series[1].2 >= series[0].2);
}

#[test]
fn mosr_first_front_is_mutually_non_dominated() {
    let cfg = mixture_cfg(Method::Mosr, 10_000, 60, 9);
    let trace = search::run(&cfg).unwrap();
    let pts: Vec<(f64, f64)> = trace.population.iter().map(|s| s.objectives()).collect();
    let front: Vec<(f64, f64)> = pts.iter().copied().filter(|&p| !pts.iter().any(|&q| dominates(q, p))).collect();
    assert!(!front.is_empty());
    for &a in &front {
        for &b in &front {
            assert!(!dominates(a, b));
        }
    }
}

#[test]
fn replay_is_byte_identical_across_thread_counts() {
    for method in Method::ALL {
        let cfg = mixture_cfg(method, 6_000, 60, 10);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| search::run(&cfg).unwrap());
        let b = four.install(|| search::run(&cfg).unwrap());
        let c = search::run(&cfg).unwrap();
        assert_eq!(csv_bytes(&a), csv_bytes(&b), "{method}");
        assert_eq!(csv_bytes(&a), csv_bytes(&c), "{method}");
        let mut ja = Vec::new();
        let mut jb = Vec::new();
        a.write_archive_jsonl(&mut ja).unwrap();
        b.write_archive_jsonl(&mut jb).unwrap();
        assert_eq!(ja, jb);
    }
}

#[test]
fn artifacts_carry_hash_and_seed() {
    let cfg = mixture_cfg(Method::Drsr, 2_000, 100, 11);
    let trace = search::run(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trace.write_dir(dir.path()).unwrap();
    let header = format!("# config_hash={} seed=11", cfg.config_hash());
    for m in trace.metric_names() {
        let text = std::fs::read_to_string(dir.path().join(format!("{m}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(header.as_str()));
        assert_eq!(lines.next(), Some("generation,evaluations,value"));
    }
    let jsonl = std::fs::read_to_string(dir.path().join("archive.jsonl")).unwrap();
    assert!(jsonl.lines().next().unwrap().contains(&cfg.config_hash()));
    let recs = drsr::archive::read_jsonl(jsonl.as_bytes()).unwrap();
    assert_eq!(recs.len(), trace.archive.occupied_count());
    let names = trace.metric_names();
    for m in ["best_fitness", "coverage", "qd_score", "hypervolume", "acc_best_linear", "acc_max_logistic"] {
        assert!(names.iter().any(|n| n == m), "{m}");
    }
}

#[test]
fn identity_target_is_recovered() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![-1.0 + 2.0 * i as f64 / 19.0]).collect();
    let targets: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let data = Dataset::new(rows, targets).unwrap();
    let hits = (0..10)
        .filter(|&seed| {
            let mut cfg = mixture_cfg(Method::Drsr, 100_000, 1000, seed);
            cfg.loss = LossKind::Mse;
            search::run_on(&cfg, data.clone()).unwrap().best.fitness >= 0.999
        })
        .count();
    assert!(hits >= 8, "{hits}/10");
}
