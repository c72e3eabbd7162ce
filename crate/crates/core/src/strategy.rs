//! Executing strategies against realized flow: the hindsight optimum and the
//! daily re-optimizing receding-horizon scheme.

use std::io::Write;

use serde::Serialize;

use crate::dp::{first_decision, solve_model, GridSpec, StageModel, TerminalValuation};
use crate::error::{Error, Result};
use crate::flow::{project_flow, round_to_grid, splice_forecast, MeanFlowProfile};
use crate::plant::{Plant, PriceSeries, Regime};

/// Initial reservoir level (`None` for full) and the mode run before day 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StartState {
    pub level: Option<usize>,
    pub mode: usize,
}

/// Supplies the flow forecast available on a given day, starting with that
/// day. The number of values returned is the forecast length.
pub trait Forecaster {
    fn forecast(&self, day: usize) -> Vec<f64>;
}

impl<F: Fn(usize) -> Vec<f64>> Forecaster for F {
    fn forecast(&self, day: usize) -> Vec<f64> {
        self(day)
    }
}

/// Forecasts that are exactly the realized flow.
#[derive(Debug, Clone, Copy)]
pub struct PerfectForecast<'a> {
    actual: &'a [f64],
    days: usize,
}

impl<'a> PerfectForecast<'a> {
    pub fn new(actual: &'a [f64], days: usize) -> Self {
        PerfectForecast { actual, days }
    }
}

impl Forecaster for PerfectForecast<'_> {
    fn forecast(&self, day: usize) -> Vec<f64> {
        let start = day.min(self.actual.len());
        let end = (day + self.days).min(self.actual.len());
        self.actual[start..end].to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayRecord {
    pub day: usize,
    pub mode: usize,
    /// Flow through the turbines, m³/s.
    pub turbine_flow: f64,
    /// River flow on the day after rounding to the flow grid, m³/s.
    pub inflow: f64,
    /// Reservoir volume at the start of the day, m³.
    pub volume: f64,
    pub head: f64,
    pub payoff: f64,
    pub spill: f64,
    /// Payoffs minus switching costs up to and including this day.
    pub cumulative_profit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub day: usize,
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

/// Everything that happened when a strategy was executed over a horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRecord {
    pub regime: Regime,
    pub days: Vec<DayRecord>,
    /// Includes the forced shutdown at the end of the horizon, if any.
    pub switches: Vec<SwitchEvent>,
    pub final_volume: f64,
    pub final_head: f64,
    /// Value of the end-of-horizon water deficit (non-positive).
    pub terminal_adjustment: f64,
    pub total_profit: f64,
}

impl StrategyRecord {
    pub fn modes(&self) -> Vec<usize> {
        self.days.iter().map(|d| d.mode).collect()
    }

    pub fn payoffs(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.payoff).collect()
    }

    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    pub fn switch_cost_total(&self) -> f64 {
        self.switches.iter().map(|s| s.cost).sum()
    }

    pub fn spill_total(&self) -> f64 {
        self.days.iter().map(|d| d.spill).sum()
    }

    /// Mean start-of-day head as a fraction of `h_max`.
    pub fn mean_head_fraction(&self, h_max: f64) -> f64 {
        if self.days.is_empty() {
            return 0.0;
        }
        self.days.iter().map(|d| d.head / h_max).sum::<f64>() / self.days.len() as f64
    }

    /// Line-oriented text form: a header, one row per day, then `#`-prefixed
    /// rows for switch events, the terminal adjustment and the total.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# regime={}", self.regime)?;
        writeln!(out, "day,mode,flow_used,inflow,volume,head,payoff,cumulative_profit")?;
        for d in &self.days {
            writeln!(
                out,
                "{},{},{:.4},{:.4},{:.3},{:.6},{:.6},{:.6}",
                d.day, d.mode, d.turbine_flow, d.inflow, d.volume, d.head, d.payoff, d.cumulative_profit
            )?;
        }
        for s in &self.switches {
            writeln!(
                out,
                "# switch,day={},from={},to={},cost={:.6}",
                s.day, s.from, s.to, s.cost
            )?;
        }
        writeln!(
            out,
            "# terminal,final_volume={:.3},final_head={:.6},adjustment={:.6}",
            self.final_volume, self.final_head, self.terminal_adjustment
        )?;
        writeln!(out, "# total_profit={:.6}", self.total_profit)?;
        Ok(())
    }
}

/// Inputs shared by every run over one horizon.
struct Setup {
    model: StageModel,
    terminal: TerminalValuation,
    realized: Vec<f64>,
    start_level: usize,
}

fn setup(actual: &[f64], plant: &Plant, grid: &GridSpec, price: &PriceSeries, start: StartState) -> Result<Setup> {
    if actual.len() != grid.horizon {
        return Err(Error::DimensionMismatch {
            what: "realized flow length vs horizon",
            expected: grid.horizon,
            found: actual.len(),
        });
    }
    if let Some(q) = actual.iter().find(|q| !q.is_finite() || **q < 0.0) {
        return Err(Error::invalid(format!(
            "realized flow {q} is not a non-negative number"
        )));
    }
    let model = StageModel::new(plant, grid)?;
    let terminal = TerminalValuation::new(plant, grid, price.at(grid.horizon))?;
    let start_level = start.level.unwrap_or(model.full_level());
    if start_level >= model.n_levels() {
        return Err(Error::OutOfRange {
            what: "start level",
            value: start_level as f64,
            min: 0.0,
            max: model.full_level() as f64,
        });
    }
    if start.mode >= model.n_modes() {
        return Err(Error::ModeOutOfRange {
            mode: start.mode,
            n_modes: model.n_modes(),
        });
    }
    let realized = actual.iter().map(|&q| round_to_grid(q, grid.dq)).collect();
    Ok(Setup {
        model,
        terminal,
        realized,
        start_level,
    })
}

/// Replays a policy against the realized flow.
fn execute(
    setup: &Setup,
    plant: &Plant,
    price: &PriceSeries,
    start_mode: usize,
    mut policy: impl FnMut(usize, usize, usize) -> Result<usize>,
) -> Result<StrategyRecord> {
    let model = &setup.model;
    let costs = model.costs();
    let rg = model.reservoir_grid();
    let fixed_head = match plant {
        Plant::Ror(r) => r.fixed_head,
        Plant::Dam(_) => 0.0,
    };
    let volume_of = |level: usize| rg.map_or(0.0, |g| g.volume(level));
    let head_of = |level: usize| rg.map_or(fixed_head, |g| g.head(level));

    let mut level = setup.start_level;
    let mut mode = start_mode;
    let mut days = Vec::with_capacity(setup.realized.len());
    let mut switches = Vec::new();
    let mut payoff_total = 0.0;
    let mut cost_total = 0.0;
    for (t, &inflow) in setup.realized.iter().enumerate() {
        let next_mode = policy(t, level, mode)?;
        if next_mode != mode {
            let cost = costs.cost(mode, next_mode);
            switches.push(SwitchEvent {
                day: t,
                from: mode,
                to: next_mode,
                cost,
            });
            cost_total += cost;
        }
        mode = next_mode;
        let p = price.at(t);
        let payoff = model.payoff(level, mode, inflow, p);
        payoff_total += payoff;
        let turbine_flow = model.turbine_flow(mode, inflow, p);
        let spill = match rg {
            Some(g) => g.spill(level, inflow, turbine_flow),
            None => (inflow - turbine_flow).max(0.0) * crate::plant::SECONDS_PER_DAY,
        };
        days.push(DayRecord {
            day: t,
            mode,
            turbine_flow,
            inflow,
            volume: volume_of(level),
            head: head_of(level),
            payoff,
            spill,
            cumulative_profit: payoff_total - cost_total,
        });
        level = model.successor(level, mode, inflow);
    }
    if mode != 0 {
        let cost = costs.cost(mode, 0);
        switches.push(SwitchEvent {
            day: setup.realized.len(),
            from: mode,
            to: 0,
            cost,
        });
        cost_total += cost;
    }
    let terminal_adjustment = setup.terminal.water(level);
    Ok(StrategyRecord {
        regime: plant.regime(),
        days,
        switches,
        final_volume: volume_of(level),
        final_head: head_of(level),
        terminal_adjustment,
        total_profit: payoff_total - cost_total + terminal_adjustment,
    })
}

/// The optimal strategy with full knowledge of the realized flow.
pub fn run_hindsight(actual: &[f64], plant: &Plant, grid: &GridSpec, price: &PriceSeries) -> Result<StrategyRecord> {
    run_hindsight_from(actual, plant, grid, price, StartState::default())
}

pub fn run_hindsight_from(
    actual: &[f64],
    plant: &Plant,
    grid: &GridSpec,
    price: &PriceSeries,
    start: StartState,
) -> Result<StrategyRecord> {
    let s = setup(actual, plant, grid, price, start)?;
    let table = solve_model(&s.model, &s.realized, 0, grid, price, &s.terminal)?;
    execute(&s, plant, price, start.mode, |t, level, mode| {
        table.decide(t, level, mode)
    })
}

/// Re-optimizes every day against a mean-reverting projection anchored at
/// the day's observed flow, with the forecaster's values spliced in front.
pub fn run_receding_horizon(
    actual: &[f64],
    forecaster: &dyn Forecaster,
    profile: &MeanFlowProfile,
    plant: &Plant,
    grid: &GridSpec,
    price: &PriceSeries,
    half_life: f64,
) -> Result<StrategyRecord> {
    run_receding_horizon_from(
        actual,
        forecaster,
        profile,
        plant,
        grid,
        price,
        half_life,
        StartState::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn run_receding_horizon_from(
    actual: &[f64],
    forecaster: &dyn Forecaster,
    profile: &MeanFlowProfile,
    plant: &Plant,
    grid: &GridSpec,
    price: &PriceSeries,
    half_life: f64,
    start: StartState,
) -> Result<StrategyRecord> {
    let s = setup(actual, plant, grid, price, start)?;
    let horizon = grid.horizon;
    execute(&s, plant, price, start.mode, |t, level, mode| {
        let projection = project_flow(profile, t, actual[t], half_life, horizon - t)?;
        let forecast = forecaster.forecast(t);
        let path = splice_forecast(&projection, &forecast, forecast.len())?;
        let (decision, _) = first_decision(&s.model, path.values(), t, grid.dq, price, &s.terminal, level, mode)?;
        Ok(decision)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::DAYS_PER_YEAR;
    use crate::plant::{DamPlantSpec, EfficiencyParams, ReservoirSpec, DAM_MODES};

    fn dam(n_days: f64) -> Plant {
        Plant::Dam(DamPlantSpec {
            efficiency: EfficiencyParams {
                alpha: 0.92,
                beta: 0.45,
                design_flow: 10.0,
            },
            reservoir: ReservoirSpec::from_dam_days(5.0, 10.0, n_days),
            f_min: 5.0,
            f_max: 13.0,
            c_run: 100.0,
            c_low: 1000.0,
            gamma: 0.0025,
            n_modes: DAM_MODES,
        })
    }

    #[test]
    fn dry_year_stays_off() {
        let grid = GridSpec {
            horizon: 30,
            volume_levels: 50,
            ..GridSpec::default()
        };
        // 0.5 m³/s cannot sustain any mode for long enough to pay a start.
        let rec = run_hindsight(&[0.5; 30], &dam(30.0), &grid, &PriceSeries::default()).unwrap();
        assert!(rec.modes().iter().all(|m| *m == 0));
        assert_eq!(rec.total_profit, 0.0);
        assert!(rec.switches.is_empty());
    }

    #[test]
    fn record_totals_add_up() {
        let grid = GridSpec {
            horizon: 40,
            volume_levels: 40,
            ..GridSpec::default()
        };
        let flow: Vec<f64> = (0..40).map(|d| 6.0 + (d as f64 * 0.4).sin() * 5.0).collect();
        let rec = run_hindsight(&flow, &dam(5.0), &grid, &PriceSeries::default()).unwrap();
        let sum: f64 = rec.payoffs().iter().sum();
        let expected = sum - rec.switch_cost_total() + rec.terminal_adjustment;
        assert!((rec.total_profit - expected).abs() < 1e-6);
        assert!(rec.total_profit >= 0.0);
        if let Some(first) = rec.switches.first() {
            assert_eq!(first.from, 0);
        }
        let last = rec.days.last().unwrap();
        let closing = rec.switches.last().filter(|s| s.day == 40).map_or(0.0, |s| s.cost);
        assert!((last.cumulative_profit - closing + rec.terminal_adjustment - rec.total_profit).abs() < 1e-6);
    }

    #[test]
    fn start_state_is_checked() {
        let grid = GridSpec {
            horizon: 3,
            volume_levels: 10,
            ..GridSpec::default()
        };
        let p = PriceSeries::default();
        let bad_level = StartState {
            level: Some(11),
            mode: 0,
        };
        assert!(run_hindsight_from(&[1.0; 3], &dam(30.0), &grid, &p, bad_level).is_err());
        let bad_mode = StartState { level: None, mode: 12 };
        assert!(run_hindsight_from(&[1.0; 3], &dam(30.0), &grid, &p, bad_mode).is_err());
        assert!(run_hindsight(&[1.0; 4], &dam(30.0), &grid, &p).is_err());
    }

    #[test]
    fn perfect_forecast_reproduces_hindsight_small() {
        let grid = GridSpec {
            horizon: 60,
            volume_levels: 60,
            ..GridSpec::default()
        };
        let flow: Vec<f64> = (0..60).map(|d| 9.0 + (d as f64 * 0.3).cos() * 7.0).collect();
        let profile = MeanFlowProfile::new(vec![8.0; DAYS_PER_YEAR], 7).unwrap();
        let plant = dam(5.0);
        let p = PriceSeries::default();
        let opt = run_hindsight(&flow, &plant, &grid, &p).unwrap();
        let rh = run_receding_horizon(
            &flow,
            &PerfectForecast::new(&flow, 60),
            &profile,
            &plant,
            &grid,
            &p,
            10.0,
        )
        .unwrap();
        assert_eq!(opt, rh);
    }

    #[test]
    fn text_format_has_trailing_annotations() {
        let grid = GridSpec {
            horizon: 20,
            volume_levels: 20,
            ..GridSpec::default()
        };
        let flow = vec![12.0; 20];
        let rec = run_hindsight(&flow, &dam(5.0), &grid, &PriceSeries::default()).unwrap();
        let mut buf = Vec::new();
        rec.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# regime=dam");
        assert!(lines[1].starts_with("day,mode,flow_used,inflow,volume,head,payoff,cumulative_profit"));
        assert_eq!(lines.iter().filter(|l| !l.starts_with('#')).count(), 21);
        assert_eq!(
            lines.iter().filter(|l| l.starts_with("# switch")).count(),
            rec.switch_count()
        );
        assert!(lines.last().unwrap().starts_with("# total_profit="));
    }
}
