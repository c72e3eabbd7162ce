//! Exhaustive enumeration over mode sequences, used as an independent check
//! on the backward induction. Shared with the acceptance suite.

#![allow(dead_code)]

use hydrosched::dp::{solve, solve_with_costs, GridSpec, ReservoirGrid, TerminalValuation, ValueTable};
use hydrosched::flow::round_to_grid;
use hydrosched::plant::{
    payoff_dam, payoff_ror, DamPlantSpec, EfficiencyParams, Plant, PriceSeries, ReservoirSpec, RorPlantSpec,
    SwitchCosts, ROR_MODES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn efficiency() -> EfficiencyParams {
    EfficiencyParams {
        alpha: 0.92,
        beta: 0.45,
        design_flow: 10.0,
    }
}

pub fn dam_spec(n_modes: usize, reservoir: ReservoirSpec, gamma: f64) -> DamPlantSpec {
    DamPlantSpec {
        efficiency: efficiency(),
        reservoir,
        f_min: 5.0,
        f_max: 13.0,
        c_run: 100.0,
        c_low: 1000.0,
        gamma,
        n_modes,
    }
}

pub fn ror_spec(gamma: f64) -> RorPlantSpec {
    RorPlantSpec {
        efficiency: efficiency(),
        fixed_head: 5.0,
        f_min: 5.0,
        f_max: 13.0,
        c_run: 100.0,
        c_low: 1000.0,
        gamma,
        split_grid: 100,
    }
}

/// A small problem with its own cost matrix and terminal values.
#[derive(Debug, Clone)]
pub struct Instance {
    pub plant: Plant,
    pub costs: SwitchCosts,
    pub grid: GridSpec,
    pub path: Vec<f64>,
    pub price: PriceSeries,
    pub terminal: TerminalValuation,
}

impl Instance {
    pub fn solve(&self) -> ValueTable {
        solve_with_costs(
            &self.path,
            &self.plant,
            &self.costs,
            &self.grid,
            &self.price,
            &self.terminal,
        )
        .unwrap()
    }

    pub fn full_level(&self) -> usize {
        self.terminal.n_levels() - 1
    }
}

fn random_costs(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> SwitchCosts {
    let matrix = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { rng.gen_range(0.0..scale) })
        .collect();
    SwitchCosts::from_matrix(n, matrix).unwrap()
}

fn random_path(rng: &mut ChaCha8Rng, horizon: usize) -> Vec<f64> {
    (0..horizon).map(|_| rng.gen_range(0.0..16.0)).collect()
}

fn random_price(rng: &mut ChaCha8Rng, horizon: usize) -> PriceSeries {
    PriceSeries::new((0..=horizon).map(|_| rng.gen_range(0.5..2.0)).collect()).unwrap()
}

/// Dam instance: horizon ≤ 8, 3 or 4 modes, at most 12 volume levels.
pub fn random_dam(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_modes = rng.gen_range(3..=4);
    let horizon = rng.gen_range(1..=8);
    let steps = rng.gen_range(1..=11);
    // One level is worth between half and four m³/s held for a day.
    let per_level = rng.gen_range(0.5..4.0);
    let reservoir = ReservoirSpec {
        h_max: 5.0,
        v_max: steps as f64 * per_level * 86_400.0,
    };
    let plant = Plant::Dam(dam_spec(n_modes, reservoir, 0.0));
    let costs = random_costs(&mut rng, n_modes, 4000.0);
    let mut water: Vec<f64> = (0..=steps).map(|_| rng.gen_range(-40_000.0..0.0)).collect();
    if rng.gen_bool(0.5) {
        water.sort_by(f64::total_cmp);
    }
    Instance {
        terminal: TerminalValuation::from_water(water, &costs),
        grid: GridSpec {
            horizon,
            dq: 0.25,
            volume_levels: steps,
        },
        path: random_path(&mut rng, horizon),
        price: random_price(&mut rng, horizon),
        plant,
        costs,
    }
}

/// Run-of-river instance over `horizon` days with a random cost matrix.
pub fn random_ror(seed: u64, horizon: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plant = Plant::Ror(ror_spec(0.0));
    let costs = random_costs(&mut rng, ROR_MODES, 6000.0);
    let water = vec![rng.gen_range(-5000.0..0.0)];
    Instance {
        terminal: TerminalValuation::from_water(water, &costs),
        grid: GridSpec {
            horizon,
            dq: 0.25,
            volume_levels: 1,
        },
        path: (0..horizon).map(|_| rng.gen_range(0.0..30.0)).collect(),
        price: random_price(&mut rng, horizon),
        plant,
        costs,
    }
}

/// Best value over every mode sequence from (`level`, `mode`) on day 0,
/// accumulating in the same order as the backward recursion.
pub fn enumerate(inst: &Instance, level: usize, mode: usize) -> (f64, Vec<usize>) {
    let m = inst.costs.n_modes();
    let t_max = inst.grid.horizon;
    let flows: Vec<f64> = inst.path.iter().map(|&q| round_to_grid(q, inst.grid.dq)).collect();
    let mut seq = vec![0usize; t_max];
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut payoffs = vec![0.0; t_max];
    let mut costs = vec![0.0; t_max];
    loop {
        let mut lv = level;
        let mut prev = mode;
        for t in 0..t_max {
            let j = seq[t];
            let price = inst.price.at(t);
            match &inst.plant {
                Plant::Dam(d) => {
                    let rg = ReservoirGrid::new(d.reservoir, inst.grid.volume_levels);
                    payoffs[t] = payoff_dam(j, rg.head(lv), price, d).unwrap();
                    let outflow = hydrosched::plant::mode_flow(j, d).unwrap();
                    lv = rg.successor(lv, flows[t], outflow);
                }
                Plant::Ror(r) => payoffs[t] = payoff_ror(j, flows[t], price, r).unwrap(),
            }
            costs[t] = inst.costs.cost(prev, j);
            prev = j;
        }
        let mut acc = inst.terminal.value(lv, prev);
        for t in (0..t_max).rev() {
            acc = (payoffs[t] + acc) - costs[t];
        }
        if acc > best.0 {
            best = (acc, seq.clone());
        }
        // Odometer increment, last day fastest.
        let mut k = t_max;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            seq[k] += 1;
            if seq[k] < m {
                break;
            }
            seq[k] = 0;
        }
    }
}

/// Solves with the plant's own costs and closed-form terminal valuation.
pub fn solve_plant(plant: &Plant, grid: &GridSpec, path: &[f64], price: &PriceSeries) -> ValueTable {
    let terminal = TerminalValuation::new(plant, grid, price.at(grid.horizon)).unwrap();
    solve(path, plant, grid, price, &terminal).unwrap()
}
