//! Generational single-objective baseline with tournament selection and
//! elitism of one. Also hosts the offspring loop shared with MOSR.

use rand::Rng;

use super::{
    allotments, best_index, cross, develop, initial_population, population_archive, snapshot, Problem, RunConfig,
    RunTrace, Scored, TraceRecord,
};
use crate::expr::ExprTree;
use crate::par;
use crate::rng::{self, SearchRng};

/// Draws `size` members with replacement and returns the fittest one's
/// index (earliest draw on ties).
pub fn tournament<R: Rng + ?Sized>(pop: &[Scored], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..size {
        let i = rng.random_range(0..pop.len());
        if pop[i].fitness > pop[best].fitness {
            best = i;
        }
    }
    best
}

/// Up to one population's worth of offspring, as many as the remaining
/// budget allows. Children adopt their best CMA-ES weights.
pub(crate) fn breed<S>(problem: &Problem, cfg: &RunConfig, pop: &[Scored], generation: u64, remaining: usize, select: S) -> (Vec<Scored>, usize)
where
    S: Fn(&mut SearchRng) -> usize + Sync,
{
    let allot = allotments(remaining, pop.len(), &cfg.es);
    let m = allot.len();
    let pairs: Vec<u64> = (0..m.div_ceil(2) as u64).collect();
    let per_pair = par::map(pairs, |p| {
        let mut pair_rng = rng::stream(cfg.seed, &[rng::STREAM_PAIR, generation, p]);
        let i = select(&mut pair_rng);
        let j = select(&mut pair_rng);
        let (c1, c2) = cross(&pop[i].tree, &pop[j].tree, cfg, &mut pair_rng);
        let kids: [ExprTree; 2] = [c1, c2];
        kids.into_iter()
            .enumerate()
            .filter_map(|(slot, child)| {
                let k = 2 * p as usize + slot;
                (k < m).then(|| {
                    let mut child_rng = rng::stream(cfg.seed, &[rng::STREAM_CHILD, generation, k as u64]);
                    develop(problem, cfg, &child, allot[k], false, &mut child_rng)
                })
            })
            .collect::<Vec<_>>()
    });
    let mut used = 0;
    let mut out = Vec::with_capacity(m);
    for d in per_pair.into_iter().flatten() {
        used += d.evaluations;
        out.push(d.best);
    }
    (out, used)
}

pub(crate) fn population_record(problem: &Problem, cfg: &RunConfig, pop: &[Scored], generation: usize, evaluations: usize) -> TraceRecord {
    let archive = population_archive(cfg.grid, pop, problem);
    let solutions: Vec<(&ExprTree, f64)> = pop.iter().map(|s| (&s.tree, s.fitness)).collect();
    let best = pop.get(best_index(pop)).map(|s| &s.tree);
    TraceRecord { generation, evaluations, values: snapshot(problem, &archive, &solutions, best) }
}

pub(crate) fn finish(problem: &Problem, cfg: &RunConfig, pop: Vec<Scored>, records: Vec<TraceRecord>, evaluations: usize) -> RunTrace {
    let archive = population_archive(cfg.grid, &pop, problem);
    let best = pop[best_index(&pop)].clone();
    RunTrace {
        method: cfg.method,
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        records,
        evaluations,
        archive,
        population: pop,
        best,
    }
}

/// Next generation: offspring without their worst member plus the current
/// best. A short final batch is topped up with the next-best current members.
fn next_generation(pop: &[Scored], mut offspring: Vec<Scored>) -> Vec<Scored> {
    let size = pop.len();
    if let Some(worst) = (0..offspring.len()).rev().min_by(|&a, &b| offspring[a].fitness.total_cmp(&offspring[b].fitness)) {
        offspring.remove(worst);
    }
    let mut ranked: Vec<usize> = (0..pop.len()).collect();
    ranked.sort_by(|&a, &b| pop[b].fitness.total_cmp(&pop[a].fitness).then(a.cmp(&b)));
    let mut next = offspring;
    for &i in &ranked {
        if next.len() >= size {
            break;
        }
        next.push(pop[i].clone());
    }
    next
}

pub fn run_sr(problem: &Problem, cfg: &RunConfig) -> RunTrace {
    let mut pop = initial_population(problem, cfg);
    let mut evaluations = pop.len();
    let mut records = vec![population_record(problem, cfg, &pop, 0, evaluations)];
    let mut generation = 0u64;
    while evaluations < cfg.budget {
        generation += 1;
        let current = &pop;
        let (offspring, used) = breed(problem, cfg, current, generation, cfg.budget - evaluations, |r| {
            tournament(current, cfg.tournament_size, r)
        });
        evaluations += used;
        pop = next_generation(&pop, offspring);
        records.push(population_record(problem, cfg, &pop, generation as usize, evaluations));
    }
    finish(problem, cfg, pop, records, evaluations)
}
