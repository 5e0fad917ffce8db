//! NSGA-II baseline over (fitness, node count).

use rand::Rng;

use super::nsga::{crowded_compare, environmental_selection, rank_and_crowding, Objectives};
use super::sr::{breed, finish, population_record};
use super::{initial_population, Problem, RunConfig, RunTrace, Scored};

fn objectives(pop: &[Scored]) -> Vec<Objectives> {
    pop.iter().map(Scored::objectives).collect()
}

pub fn run_mosr(problem: &Problem, cfg: &RunConfig) -> RunTrace {
    let mut pop = initial_population(problem, cfg);
    let mut evaluations = pop.len();
    let mut records = vec![population_record(problem, cfg, &pop, 0, evaluations)];
    let mut generation = 0u64;
    while evaluations < cfg.budget {
        generation += 1;
        let (rank, crowd) = rank_and_crowding(&objectives(&pop));
        let n = pop.len();
        let (offspring, used) = breed(problem, cfg, &pop, generation, cfg.budget - evaluations, |r| {
            let a = r.random_range(0..n);
            let b = r.random_range(0..n);
            if crowded_compare(&rank, &crowd, b, a).is_lt() {
                b
            } else {
                a
            }
        });
        evaluations += used;
        let mut union = std::mem::take(&mut pop);
        union.extend(offspring);
        let keep = environmental_selection(&objectives(&union), n);
        pop = keep.into_iter().map(|i| union[i].clone()).collect();
        records.push(population_record(problem, cfg, &pop, generation as usize, evaluations));
    }
    finish(problem, cfg, pop, records, evaluations)
}
