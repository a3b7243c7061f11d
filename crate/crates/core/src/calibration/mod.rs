//! Genetic-algorithm calibration of the channel parameters against an
//! observed PDR curve.

mod genome;
mod history;

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataio::projection::ProjectedTrace;
use crate::error::{Error, Result};
use crate::propagation::{deterministic_gain_db, FadingParams, RadioParams};
use crate::simulator::{
    pdr_curve_filtered, rmse, run_scenario, DirectionFilter, PdrCurve, ScenarioConfig,
};

pub use genome::{Gene, GeneValue, Genome, SearchSpace, GENE_QUANTUM};
pub use history::{
    history_to_csv, parse_history_csv, result_summary, EvaluationRecord, HISTORY_HEADER,
};

/// Fitness assigned to any genome whose deterministic link gain turns
/// positive somewhere along the route.
pub const PENALTY_RMSE: f64 = 1000.0;

/// Step of the deterministic gain sweep, m.
pub const PENALTY_SWEEP_STEP_M: f64 = 1.0;

/// Fitness values are kept on a 1e-9 grid so the nine-decimal history CSV
/// reproduces them exactly.
pub const FITNESS_QUANTUM: f64 = 1e-9;

fn quantize_fitness(v: f64) -> f64 {
    format!("{v:.9}").parse().expect("formatted float parses")
}

/// True if the deterministic gain is positive at any point of the sweep
/// `d0, d0 + 1 m, ...` up to `max_distance`.
pub fn violates_gain_constraint(
    radio: &RadioParams,
    fading: &FadingParams,
    max_distance: f64,
) -> Result<bool> {
    let d0 = fading.reference_distance_m;
    let steps = ((max_distance - d0) / PENALTY_SWEEP_STEP_M)
        .floor()
        .max(0.0) as u64;
    for k in 0..=steps {
        let d = d0 + k as f64 * PENALTY_SWEEP_STEP_M;
        if deterministic_gain_db(radio, fading, d)? > 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Everything needed to score a genome except the genome itself.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    observed: &'a PdrCurve,
    trace: &'a ProjectedTrace,
    scenario: ScenarioConfig,
    base_radio: RadioParams,
    base_fading: FadingParams,
    filter: DirectionFilter,
    max_distance: f64,
}

impl<'a> Objective<'a> {
    /// Table-default radio/fading templates supply the fields that are not
    /// genes (antenna gains, carrier, reference distance, SNR table).
    pub fn new(
        observed: &'a PdrCurve,
        trace: &'a ProjectedTrace,
        scenario: &ScenarioConfig,
    ) -> Result<Self> {
        Objective::with_templates(
            observed,
            trace,
            scenario,
            &RadioParams::table_default(),
            &FadingParams::table_default(),
            DirectionFilter::Both,
        )
    }

    pub fn with_templates(
        observed: &'a PdrCurve,
        trace: &'a ProjectedTrace,
        scenario: &ScenarioConfig,
        base_radio: &RadioParams,
        base_fading: &FadingParams,
        filter: DirectionFilter,
    ) -> Result<Self> {
        scenario.validate()?;
        if observed.non_empty().next().is_none() {
            return Err(Error::domain("observed PDR curve has no non-empty bins"));
        }
        let scale = observed.bin_width.max(scenario.bin_width_m);
        if (observed.bin_width - scenario.bin_width_m).abs() > 1e-9 * scale {
            return Err(Error::Incompatible(format!(
                "observed curve uses {} m bins but the scenario uses {} m",
                observed.bin_width, scenario.bin_width_m
            )));
        }
        if trace.samples.len() < 2 {
            return Err(Error::domain("trace needs at least 2 samples"));
        }
        Ok(Objective {
            observed,
            trace,
            scenario: *scenario,
            base_radio: *base_radio,
            base_fading: *base_fading,
            filter,
            max_distance: trace.max_distance_from(&scenario.rsu_position),
        })
    }

    pub fn params(&self, genome: &Genome) -> (RadioParams, FadingParams) {
        genome.to_params(&self.base_radio, &self.base_fading)
    }

    /// RMSE in percentage points between the observed curve and a
    /// simulation with the genome's parameters, or [`PENALTY_RMSE`].
    pub fn evaluate(&self, genome: &Genome) -> Result<f64> {
        let (radio, fading) = self.params(genome);
        if violates_gain_constraint(&radio, &fading, self.max_distance)? {
            return Ok(PENALTY_RMSE);
        }
        let log = run_scenario(self.trace, &self.scenario, &radio, &fading)?;
        let simulated = pdr_curve_filtered(&log, self.scenario.bin_width_m, self.filter)?;
        Ok(quantize_fitness(rmse(self.observed, &simulated)?))
    }
}

/// One-shot objective with table-default templates.
pub fn objective(
    genome: &Genome,
    observed: &PdrCurve,
    trace: &ProjectedTrace,
    scenario: &ScenarioConfig,
) -> Result<f64> {
    Objective::new(observed, trace, scenario)?.evaluate(genome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob_per_gene: f64,
    pub mutation_sigma_fraction: f64,
    pub elite_count: usize,
    pub master_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 24,
            generations: 200,
            tournament_size: 3,
            crossover_prob: 0.9,
            mutation_prob_per_gene: 0.15,
            mutation_sigma_fraction: 0.1,
            elite_count: 2,
            master_seed: 42,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::config("population_size must be >= 2"));
        }
        if self.generations < 1 {
            return Err(Error::config("generations must be >= 1"));
        }
        if self.tournament_size < 2 {
            return Err(Error::config("tournament_size must be >= 2"));
        }
        if self.elite_count >= self.population_size {
            return Err(Error::config(format!(
                "elite_count ({}) must be < population_size ({})",
                self.elite_count, self.population_size
            )));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob_per_gene", self.mutation_prob_per_gene),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        let s = self.mutation_sigma_fraction;
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::config(format!(
                "mutation_sigma_fraction must be in (0, 1], got {s}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub best_genome: Genome,
    pub best_rmse: f64,
    pub history: Vec<EvaluationRecord>,
    pub evaluations: usize,
    /// Best-so-far fitness after each generation.
    pub best_per_generation: Vec<f64>,
}

/// Fitness order used by selection: lower is better, ties go to the lower
/// index.
fn better(fitness: &[f64], a: usize, b: usize) -> bool {
    fitness[a] < fitness[b] || (fitness[a] == fitness[b] && a < b)
}

fn tournament<R: Rng + ?Sized>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if better(fitness, c, best) {
            best = c;
        }
    }
    best
}

fn crossover<R: Rng + ?Sized>(
    a: &Genome,
    b: &Genome,
    space: &SearchSpace,
    rng: &mut R,
) -> (Genome, Genome) {
    let (mut x, mut y) = (*a, *b);
    for gene in Gene::ALL {
        if space.is_frozen(gene) {
            continue;
        }
        if rng.random::<bool>() {
            let (va, vb) = (x.get(gene), y.get(gene));
            x.set(gene, vb).expect("same gene kind");
            y.set(gene, va).expect("same gene kind");
        }
    }
    (x, y)
}

fn mutate<R: Rng + ?Sized>(g: &mut Genome, config: &GaConfig, space: &SearchSpace, rng: &mut R) {
    for gene in Gene::ALL {
        if space.is_frozen(gene) || rng.random::<f64>() >= config.mutation_prob_per_gene {
            continue;
        }
        let v = match (g.get(gene), space.range(gene)) {
            (GeneValue::Real(x), Some((lo, hi))) => {
                let sd = config.mutation_sigma_fraction * (hi - lo);
                let step = if sd > 0.0 {
                    Normal::new(0.0, sd).expect("finite sd").sample(rng)
                } else {
                    0.0
                };
                GeneValue::Real(space.clamp_real(gene, x + step))
            }
            _ => space.sample_gene(gene, rng),
        };
        g.set(gene, v).expect("same gene kind");
    }
}

/// Run the GA. `jobs` sets the number of worker threads used for fitness
/// evaluation (0 = all cores); it never changes the result.
pub fn evolve(
    config: &GaConfig,
    objective: &Objective<'_>,
    space: &SearchSpace,
    jobs: usize,
) -> Result<CalibrationResult> {
    config.validate()?;
    space.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    let n = config.population_size;
    let mut population: Vec<Genome> = (0..n).map(|_| space.random_genome(&mut rng)).collect();
    let mut cache: HashMap<[u64; 10], f64> = HashMap::new();
    let mut history = Vec::with_capacity(n * config.generations);
    let mut best: Option<(Genome, f64)> = None;
    let mut best_per_generation = Vec::with_capacity(config.generations);

    for generation in 0..config.generations {
        // Common random numbers make the objective a pure function of the
        // genome, so repeated genomes are looked up rather than re-simulated.
        let mut pending: Vec<Genome> = Vec::new();
        for g in &population {
            if !cache.contains_key(&g.key()) && !pending.iter().any(|p| p.key() == g.key()) {
                pending.push(*g);
            }
        }
        let scored: Vec<Result<f64>> =
            pool.install(|| pending.par_iter().map(|g| objective.evaluate(g)).collect());
        for (g, f) in pending.iter().zip(scored) {
            cache.insert(g.key(), f?);
        }
        let fitness: Vec<f64> = population.iter().map(|g| cache[&g.key()]).collect();

        for (i, (g, &f)) in population.iter().zip(&fitness).enumerate() {
            history.push(EvaluationRecord {
                generation,
                individual: i,
                genome: *g,
                rmse: f,
            });
            if best.is_none_or(|(_, b)| f < b) {
                best = Some((*g, f));
            }
        }
        best_per_generation.push(best.expect("population is non-empty").1);

        if generation + 1 == config.generations {
            break;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
        let mut next: Vec<Genome> = order[..config.elite_count]
            .iter()
            .map(|&i| population[i])
            .collect();
        while next.len() < n {
            let a = tournament(&fitness, config.tournament_size, &mut rng);
            let b = tournament(&fitness, config.tournament_size, &mut rng);
            let (mut x, mut y) = if rng.random::<f64>() < config.crossover_prob {
                crossover(&population[a], &population[b], space, &mut rng)
            } else {
                (population[a], population[b])
            };
            mutate(&mut x, config, space, &mut rng);
            mutate(&mut y, config, space, &mut rng);
            next.push(x);
            if next.len() < n {
                next.push(y);
            }
        }
        population = next;
    }

    let (best_genome, best_rmse) = best.expect("at least one generation");
    Ok(CalibrationResult {
        best_genome,
        best_rmse,
        evaluations: history.len(),
        history,
        best_per_generation,
    })
}
