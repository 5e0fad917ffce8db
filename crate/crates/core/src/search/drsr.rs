//! Archive-driven search: uniform elite selection, crossover, mutation,
//! simplification, and CMA-ES whose every sample is offered to the archive.

use super::{allotments, cross, develop, initial_population, snapshot, Problem, RunConfig, RunTrace, Scored, TraceRecord};
use crate::archive::Archive;
use crate::expr::ExprTree;
use crate::par;
use crate::rng;

fn record(problem: &Problem, archive: &Archive, generation: usize, evaluations: usize) -> TraceRecord {
    let solutions: Vec<(&ExprTree, f64)> = archive.elites().map(|e| (&e.tree, e.fitness)).collect();
    let best = archive.best().map(|e| &e.tree);
    TraceRecord { generation, evaluations, values: snapshot(problem, archive, &solutions, best) }
}

pub fn run_drsr(problem: &Problem, cfg: &RunConfig) -> RunTrace {
    let init = initial_population(problem, cfg);
    let mut evaluations = init.len();
    let mut archive = Archive::new(cfg.grid);
    for s in &init {
        problem.offer(&mut archive, s);
    }
    let mut records = vec![record(problem, &archive, 0, evaluations)];

    let mut offspring = 0usize;
    let mut pair = 0u64;
    while evaluations < cfg.budget {
        let allot = allotments(cfg.budget - evaluations, 2, &cfg.es);
        let mut pair_rng = rng::stream(cfg.seed, &[rng::STREAM_PAIR, pair]);
        let (a, b) = archive.select_two(&mut pair_rng).expect("archive holds the initial population");
        let (c1, c2) = cross(&a.tree, &b.tree, cfg, &mut pair_rng);
        let jobs: Vec<(u64, ExprTree, usize)> =
            [c1, c2].into_iter().zip(allot).enumerate().map(|(j, (c, n))| (j as u64, c, n)).collect();
        let developed = par::map(jobs, |(j, child, n)| {
            let mut child_rng = rng::stream(cfg.seed, &[rng::STREAM_CHILD, pair, j]);
            develop(problem, cfg, &child, n, true, &mut child_rng)
        });
        for d in developed {
            for s in &d.offers {
                problem.offer(&mut archive, s);
            }
            evaluations += d.evaluations;
            offspring += 1;
            if offspring.is_multiple_of(cfg.trace_interval) {
                records.push(record(problem, &archive, offspring / cfg.trace_interval, evaluations));
            }
        }
        pair += 1;
    }
    if records.last().is_some_and(|r| r.evaluations != evaluations) {
        records.push(record(problem, &archive, offspring.div_ceil(cfg.trace_interval), evaluations));
    }

    let best = archive.best().expect("archive is non-empty");
    let best = Scored { tree: best.tree.clone(), loss: best.loss, fitness: best.fitness, descriptor: best.descriptor };
    RunTrace {
        method: cfg.method,
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        records,
        evaluations,
        archive,
        population: Vec::new(),
        best,
    }
}
