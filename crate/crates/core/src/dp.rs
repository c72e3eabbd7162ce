//! Backward induction over (day, reservoir level, mode).
//!
//! Flow is not a state dimension: each solve runs against a single
//! deterministic flow path, so only the reservoir level and the running mode
//! carry over from one day to the next. The candidate value of moving from
//! mode `i` to mode `j` on a day is always evaluated as
//! `(payoff_j + continuation_j) − c_ij`; oracles that want bitwise agreement
//! must accumulate in the same order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::round_to_grid;
use crate::plant::{
    dam_daily_payoff, efficiency, head_from_volume, mode_flow, payoff_ror, power_kw, step_reservoir, CostStructure,
    Plant, PriceSeries, ReservoirSpec, RorPlantSpec, SwitchCosts, G, JOULES_PER_KWH, RHO, SECONDS_PER_DAY,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Days in the optimization horizon.
    pub horizon: usize,
    /// Flow rounding step, m³/s.
    pub dq: f64,
    /// Number of volume steps; the grid has `volume_levels + 1` points
    /// from empty to full.
    pub volume_levels: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            horizon: 365,
            dq: 0.25,
            volume_levels: 1000,
        }
    }
}

impl GridSpec {
    /// Quarter of the volume resolution, for parameter sweeps.
    pub fn coarse(&self) -> GridSpec {
        GridSpec {
            volume_levels: (self.volume_levels / 4).max(1),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least one day"));
        }
        if !(self.dq > 0.0 && self.dq.is_finite()) {
            return Err(Error::invalid(format!("flow step must be positive, got {}", self.dq)));
        }
        if self.volume_levels == 0 {
            return Err(Error::invalid("need at least one volume step"));
        }
        Ok(())
    }
}

/// Uniform volume grid over a reservoir. Level `k` holds `k/L · v_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirGrid {
    reservoir: ReservoirSpec,
    steps: usize,
}

impl ReservoirGrid {
    pub fn new(reservoir: ReservoirSpec, steps: usize) -> Self {
        ReservoirGrid { reservoir, steps }
    }

    pub fn reservoir(&self) -> &ReservoirSpec {
        &self.reservoir
    }

    pub fn full_level(&self) -> usize {
        self.steps
    }

    pub fn n_levels(&self) -> usize {
        self.steps + 1
    }

    pub fn volume_step(&self) -> f64 {
        self.reservoir.v_max / self.steps as f64
    }

    pub fn volume(&self, level: usize) -> f64 {
        level as f64 / self.steps as f64 * self.reservoir.v_max
    }

    pub fn head(&self, level: usize) -> f64 {
        head_from_volume(self.volume(level), &self.reservoir).expect("grid volume within reservoir")
    }

    /// Level change over one day, rounded to the nearest level (halves up).
    pub fn shift(&self, inflow: f64, outflow: f64) -> isize {
        ((inflow - outflow) * SECONDS_PER_DAY / self.volume_step() + 0.5).floor() as isize
    }

    pub fn apply_shift(&self, level: usize, shift: isize) -> usize {
        (level as isize + shift).clamp(0, self.steps as isize) as usize
    }

    /// Level reached after one day from `level`.
    pub fn successor(&self, level: usize, inflow: f64, outflow: f64) -> usize {
        self.apply_shift(level, self.shift(inflow, outflow))
    }

    /// Water spilled over one day starting at `level`, m³.
    pub fn spill(&self, level: usize, inflow: f64, outflow: f64) -> f64 {
        step_reservoir(self.volume(level), inflow, outflow, 1.0, &self.reservoir).spill
    }
}

/// Value of the end state: water-level shortfall priced at design-speed
/// production without running costs, minus the cost of shutting down.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalValuation {
    n_levels: usize,
    n_modes: usize,
    water: Vec<f64>,
    values: Vec<f64>,
}

impl TerminalValuation {
    pub fn new(plant: &Plant, grid: &GridSpec, price: f64) -> Result<Self> {
        plant.validate()?;
        grid.validate()?;
        let costs = plant.switch_costs();
        let water: Vec<f64> = match plant {
            Plant::Dam(d) => {
                let rg = ReservoirGrid::new(d.reservoir, grid.volume_levels);
                let per_joule =
                    price * efficiency(d.efficiency.design_flow, &d.efficiency) * (RHO * G / JOULES_PER_KWH);
                let r = &d.reservoir;
                let scale = r.h_max * r.v_max.powf(-1.0 / 3.0) * 0.75;
                (0..rg.n_levels())
                    .map(|k| {
                        let v = rg.volume(k);
                        let deficit_integral = scale * (r.v_max.powf(4.0 / 3.0) - v.powf(4.0 / 3.0));
                        // Avoid a signed zero at the full level.
                        -per_joule * deficit_integral + 0.0
                    })
                    .collect()
            }
            Plant::Ror(_) => vec![0.0],
        };
        Ok(Self::from_water(water, &costs))
    }

    /// Builds the table from per-level water values and a closing cost back
    /// to mode 0.
    pub fn from_water(water: Vec<f64>, costs: &SwitchCosts) -> Self {
        let n_modes = costs.n_modes();
        let values = water
            .iter()
            .flat_map(|w| (0..n_modes).map(move |i| w - costs.cost(i, 0)))
            .collect();
        TerminalValuation {
            n_levels: water.len(),
            n_modes,
            water,
            values,
        }
    }

    pub fn value(&self, level: usize, mode: usize) -> f64 {
        self.values[level * self.n_modes + mode]
    }

    pub fn water(&self, level: usize) -> f64 {
        self.water[level]
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }
}

/// Per-day view of a plant on the state grid.
#[derive(Debug, Clone)]
pub(crate) struct StageModel {
    n_modes: usize,
    costs: SwitchCosts,
    kind: StageKind,
}

#[derive(Debug, Clone)]
enum StageKind {
    Dam {
        grid: ReservoirGrid,
        mode_flows: Vec<f64>,
        /// kW per (level, mode).
        power: Vec<f64>,
        heads: Vec<f64>,
        c_run: f64,
        c_low: f64,
    },
    Ror(RorPlantSpec),
}

impl StageModel {
    pub(crate) fn new(plant: &Plant, grid: &GridSpec) -> Result<Self> {
        plant.validate()?;
        grid.validate()?;
        let n_modes = plant.n_modes();
        let costs = plant.switch_costs();
        let kind = match plant {
            Plant::Dam(d) => {
                let rg = ReservoirGrid::new(d.reservoir, grid.volume_levels);
                let mode_flows: Vec<f64> = (0..n_modes).map(|i| mode_flow(i, d)).collect::<Result<_>>()?;
                let heads: Vec<f64> = (0..rg.n_levels()).map(|k| rg.head(k)).collect();
                let power = heads
                    .iter()
                    .flat_map(|&h| mode_flows.iter().map(move |&f| power_kw(f, h, &d.efficiency)))
                    .collect();
                StageKind::Dam {
                    grid: rg,
                    mode_flows,
                    power,
                    heads,
                    c_run: d.c_run,
                    c_low: d.c_low,
                }
            }
            Plant::Ror(r) => StageKind::Ror(r.clone()),
        };
        Ok(StageModel { n_modes, costs, kind })
    }

    pub(crate) fn with_costs(mut self, costs: SwitchCosts) -> Self {
        self.costs = costs;
        self
    }

    pub(crate) fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub(crate) fn n_levels(&self) -> usize {
        match &self.kind {
            StageKind::Dam { grid, .. } => grid.n_levels(),
            StageKind::Ror(_) => 1,
        }
    }

    pub(crate) fn full_level(&self) -> usize {
        self.n_levels() - 1
    }

    pub(crate) fn costs(&self) -> &SwitchCosts {
        &self.costs
    }

    pub(crate) fn reservoir_grid(&self) -> Option<&ReservoirGrid> {
        match &self.kind {
            StageKind::Dam { grid, .. } => Some(grid),
            StageKind::Ror(_) => None,
        }
    }

    /// Fills `payoff` (levels × modes) and `shifts` (modes) for one day.
    fn fill_stage(&self, inflow: f64, price: f64, payoff: &mut [f64], shifts: &mut [isize]) {
        match &self.kind {
            StageKind::Dam {
                grid,
                mode_flows,
                power,
                heads,
                c_run,
                c_low,
            } => {
                for (s, f) in shifts.iter_mut().zip(mode_flows) {
                    *s = grid.shift(inflow, *f);
                }
                let m = self.n_modes;
                for (level, head) in heads.iter().enumerate() {
                    let row = &mut payoff[level * m..(level + 1) * m];
                    row[0] = 0.0;
                    for j in 1..m {
                        row[j] = dam_daily_payoff(power[level * m + j], *head, price, *c_run, *c_low);
                    }
                }
            }
            StageKind::Ror(spec) => {
                shifts.fill(0);
                for (j, p) in payoff.iter_mut().enumerate() {
                    *p = payoff_ror(j, inflow, price, spec).expect("valid ror mode and flow");
                }
            }
        }
    }

    pub(crate) fn payoff(&self, level: usize, mode: usize, inflow: f64, price: f64) -> f64 {
        match &self.kind {
            StageKind::Dam {
                power,
                heads,
                c_run,
                c_low,
                ..
            } => {
                if mode == 0 {
                    0.0
                } else {
                    dam_daily_payoff(power[level * self.n_modes + mode], heads[level], price, *c_run, *c_low)
                }
            }
            StageKind::Ror(spec) => payoff_ror(mode, inflow, price, spec).expect("valid ror mode and flow"),
        }
    }

    pub(crate) fn successor(&self, level: usize, mode: usize, inflow: f64) -> usize {
        match &self.kind {
            StageKind::Dam { grid, mode_flows, .. } => grid.successor(level, inflow, mode_flows[mode]),
            StageKind::Ror(_) => 0,
        }
    }

    pub(crate) fn turbine_flow(&self, mode: usize, inflow: f64, price: f64) -> f64 {
        match &self.kind {
            StageKind::Dam { mode_flows, .. } => mode_flows[mode],
            StageKind::Ror(spec) => crate::plant::ror_turbine_flow(mode, inflow, price, spec),
        }
    }
}

/// Maximizes `(a_j − c_ij)` over `j` for every current mode `i`. Staying
/// wins ties, then the lowest `j`.
fn maximize_row(a: &[f64], costs: &SwitchCosts, vals: &mut [f64], args: &mut [u8]) {
    let m = a.len();
    match costs.structure() {
        CostStructure::OnOff { on_off, retune } => {
            let mut best = a[0];
            let mut arg = 0;
            for (j, &aj) in a.iter().enumerate().skip(1) {
                let c = aj - on_off;
                if c > best {
                    best = c;
                    arg = j;
                }
            }
            vals[0] = best;
            args[0] = arg as u8;
            if m == 1 {
                return;
            }

            // Two best retuning targets, lowest index first on ties.
            let (mut t1, mut v1) = (usize::MAX, f64::NEG_INFINITY);
            let (mut t2, mut v2) = (usize::MAX, f64::NEG_INFINITY);
            for (j, &aj) in a.iter().enumerate().skip(1) {
                let c = aj - retune;
                if c > v1 {
                    (t2, v2) = (t1, v1);
                    (t1, v1) = (j, c);
                } else if c > v2 {
                    (t2, v2) = (j, c);
                }
            }
            let from_off = a[0] - on_off;
            for i in 1..m {
                let mut best = a[i];
                let mut arg = i;
                if from_off > best {
                    best = from_off;
                    arg = 0;
                }
                let (jp, vp) = if i == t1 { (t2, v2) } else { (t1, v1) };
                if jp != usize::MAX && vp > best {
                    best = vp;
                    arg = jp;
                }
                vals[i] = best;
                args[i] = arg as u8;
            }
        }
        CostStructure::General => {
            for i in 0..m {
                let row = costs.row(i);
                let mut best = a[i];
                let mut arg = i;
                for j in 0..m {
                    if j == i {
                        continue;
                    }
                    let c = a[j] - row[j];
                    if c > best {
                        best = c;
                        arg = j;
                    }
                }
                vals[i] = best;
                args[i] = arg as u8;
            }
        }
    }
}

/// Scratch buffers for one backward stage.
struct StageBuffers {
    payoff: Vec<f64>,
    shifts: Vec<isize>,
    a: Vec<f64>,
}

impl StageBuffers {
    fn new(model: &StageModel) -> Self {
        StageBuffers {
            payoff: vec![0.0; model.n_levels() * model.n_modes()],
            shifts: vec![0; model.n_modes()],
            a: vec![0.0; model.n_modes()],
        }
    }
}

/// Computes one stage's values and decisions for the given levels.
#[allow(clippy::too_many_arguments)]
fn backup_stage(
    model: &StageModel,
    buf: &mut StageBuffers,
    inflow: f64,
    price: f64,
    next: &[f64],
    levels: std::ops::Range<usize>,
    vals: &mut [f64],
    args: &mut [u8],
) {
    let m = model.n_modes();
    let top = model.full_level() as isize;
    model.fill_stage(inflow, price, &mut buf.payoff, &mut buf.shifts);
    let first = levels.start;
    for level in levels {
        for j in 0..m {
            let succ = (level as isize + buf.shifts[j]).clamp(0, top) as usize;
            buf.a[j] = buf.payoff[level * m + j] + next[succ * m + j];
        }
        let off = (level - first) * m;
        maximize_row(&buf.a, model.costs(), &mut vals[off..off + m], &mut args[off..off + m]);
    }
}

/// Optimal continuation values and decisions for every state of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    start_day: usize,
    n_days: usize,
    n_levels: usize,
    n_modes: usize,
    values: Vec<f64>,
    argmax: Vec<u8>,
}

impl ValueTable {
    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Calendar day of the first stage.
    pub fn start_day(&self) -> usize {
        self.start_day
    }

    fn index(&self, day: usize, level: usize, mode: usize) -> usize {
        (day * self.n_levels + level) * self.n_modes + mode
    }

    /// Value entering `day` (0..=n_days) at `level` having run `mode` the day
    /// before. Day `n_days` holds the terminal valuation.
    pub fn value(&self, day: usize, level: usize, mode: usize) -> f64 {
        self.values[self.index(day, level, mode)]
    }

    pub fn values_at(&self, day: usize) -> &[f64] {
        let stride = self.n_levels * self.n_modes;
        &self.values[day * stride..(day + 1) * stride]
    }

    /// Decisions for `day`, which must be below `n_days`.
    pub fn argmax_at(&self, day: usize) -> &[u8] {
        let stride = self.n_levels * self.n_modes;
        &self.argmax[day * stride..(day + 1) * stride]
    }

    /// Best mode to run on `day` given the state entering it.
    pub fn decide(&self, day: usize, level: usize, mode: usize) -> Result<usize> {
        if day >= self.n_days {
            return Err(Error::OutOfRange {
                what: "day",
                value: day as f64,
                min: 0.0,
                max: self.n_days as f64 - 1.0,
            });
        }
        if level >= self.n_levels {
            return Err(Error::OutOfRange {
                what: "volume level",
                value: level as f64,
                min: 0.0,
                max: self.n_levels as f64 - 1.0,
            });
        }
        if mode >= self.n_modes {
            return Err(Error::ModeOutOfRange {
                mode,
                n_modes: self.n_modes,
            });
        }
        Ok(self.argmax[self.index(day, level, mode)] as usize)
    }
}

pub fn decide(table: &ValueTable, day: usize, level: usize, mode: usize) -> Result<usize> {
    table.decide(day, level, mode)
}

fn check_terminal(model: &StageModel, terminal: &TerminalValuation) -> Result<()> {
    if terminal.n_levels != model.n_levels() || terminal.n_modes != model.n_modes() {
        return Err(Error::DimensionMismatch {
            what: "terminal valuation levels x modes",
            expected: model.n_levels() * model.n_modes(),
            found: terminal.n_levels * terminal.n_modes,
        });
    }
    Ok(())
}

fn rounded_path(path: &[f64], dq: f64) -> Result<Vec<f64>> {
    path.iter()
        .map(|&q| {
            if q.is_finite() && q >= 0.0 {
                Ok(round_to_grid(q, dq))
            } else {
                Err(Error::invalid(format!(
                    "flow path value {q} is not a non-negative number"
                )))
            }
        })
        .collect()
}

/// Solves the full table over `path`, which must span exactly the grid's
/// horizon starting at calendar day 0.
pub fn solve(
    path: &[f64],
    plant: &Plant,
    grid: &GridSpec,
    price: &PriceSeries,
    terminal: &TerminalValuation,
) -> Result<ValueTable> {
    let model = StageModel::new(plant, grid)?;
    solve_model(&model, path, 0, grid, price, terminal)
}

/// [`solve`] with an arbitrary switching-cost matrix in place of the plant's.
/// The terminal valuation should carry the same closing costs.
pub fn solve_with_costs(
    path: &[f64],
    plant: &Plant,
    costs: &SwitchCosts,
    grid: &GridSpec,
    price: &PriceSeries,
    terminal: &TerminalValuation,
) -> Result<ValueTable> {
    if costs.n_modes() != plant.n_modes() {
        return Err(Error::DimensionMismatch {
            what: "switch cost modes",
            expected: plant.n_modes(),
            found: costs.n_modes(),
        });
    }
    let model = StageModel::new(plant, grid)?.with_costs(costs.clone());
    solve_model(&model, path, 0, grid, price, terminal)
}

pub(crate) fn solve_model(
    model: &StageModel,
    path: &[f64],
    start_day: usize,
    grid: &GridSpec,
    price: &PriceSeries,
    terminal: &TerminalValuation,
) -> Result<ValueTable> {
    if path.len() != grid.horizon {
        return Err(Error::DimensionMismatch {
            what: "flow path length vs horizon",
            expected: grid.horizon,
            found: path.len(),
        });
    }
    check_terminal(model, terminal)?;
    let path = rounded_path(path, grid.dq)?;
    let (n_levels, m) = (model.n_levels(), model.n_modes());
    let stride = n_levels * m;
    let n_days = path.len();
    let mut values = vec![0.0; (n_days + 1) * stride];
    let mut argmax = vec![0u8; (n_days + 1) * stride];
    values[n_days * stride..].copy_from_slice(&terminal.values);

    let mut buf = StageBuffers::new(model);
    for t in (0..n_days).rev() {
        let (head, tail) = values.split_at_mut((t + 1) * stride);
        backup_stage(
            model,
            &mut buf,
            path[t],
            price.at(start_day + t),
            &tail[..stride],
            0..n_levels,
            &mut head[t * stride..],
            &mut argmax[t * stride..(t + 1) * stride],
        );
    }
    argmax.truncate(n_days * stride);
    Ok(ValueTable {
        start_day,
        n_days,
        n_levels,
        n_modes: m,
        values,
        argmax,
    })
}

/// Decision for the first day of `path` from a single state, keeping only
/// two value layers in memory. Matches `solve_model(..).decide(0, ..)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn first_decision(
    model: &StageModel,
    path: &[f64],
    start_day: usize,
    dq: f64,
    price: &PriceSeries,
    terminal: &TerminalValuation,
    level: usize,
    mode: usize,
) -> Result<(usize, f64)> {
    check_terminal(model, terminal)?;
    if path.is_empty() {
        return Err(Error::invalid("empty flow path"));
    }
    let path = rounded_path(path, dq)?;
    let (n_levels, m) = (model.n_levels(), model.n_modes());
    let stride = n_levels * m;
    let mut next = terminal.values.clone();
    let mut cur = vec![0.0; stride];
    let mut args = vec![0u8; stride];
    let mut buf = StageBuffers::new(model);
    for t in (1..path.len()).rev() {
        backup_stage(
            model,
            &mut buf,
            path[t],
            price.at(start_day + t),
            &next,
            0..n_levels,
            &mut cur,
            &mut args,
        );
        std::mem::swap(&mut cur, &mut next);
    }
    let mut vals = vec![0.0; m];
    let mut row_args = vec![0u8; m];
    backup_stage(
        model,
        &mut buf,
        path[0],
        price.at(start_day),
        &next,
        level..level + 1,
        &mut vals,
        &mut row_args,
    );
    Ok((row_args[mode] as usize, vals[mode]))
}
