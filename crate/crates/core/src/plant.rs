//! Physics and economics of the two plant variants.
//!
//! Power is `ρ·g·H·η(F)·F` watts, reported in kW so that a price in
//! m.u./kWh gives m.u. per hour. Decisions are daily, so every payoff
//! returned here is a daily figure, 24 times the hourly rate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Water density, kg/m³.
pub const RHO: f64 = 1000.0;
/// Gravitational acceleration, m/s².
pub const G: f64 = 9.82;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const HOURS_PER_DAY: f64 = 24.0;
pub const JOULES_PER_KWH: f64 = 3.6e6;
/// Productive modes of the dam plant plus the off mode.
pub const DAM_MODES: usize = 12;
pub const ROR_MODES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Dam,
    Ror,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Dam => "dam",
            Regime::Ror => "ror",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dam" => Ok(Regime::Dam),
            "ror" => Ok(Regime::Ror),
            other => Err(Error::invalid(format!(
                "unknown regime `{other}` (expected dam or ror)"
            ))),
        }
    }
}

fn check_range(what: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(Error::OutOfRange { what, value, min, max })
    }
}

/// Parabolic turbine efficiency curve peaking at the design flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyParams {
    pub alpha: f64,
    pub beta: f64,
    pub design_flow: f64,
}

impl EfficiencyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::OutOfRange {
                what: "alpha",
                value: self.alpha,
                min: 0.0,
                max: 1.0,
            });
        }
        check_range("beta", self.beta, 0.0, f64::MAX)?;
        if !(self.design_flow > 0.0 && self.design_flow.is_finite()) {
            return Err(Error::invalid(format!(
                "design flow must be positive, got {}",
                self.design_flow
            )));
        }
        Ok(())
    }
}

/// `α − β(F/F_d − 1)²`. Deliberately unclamped.
pub fn efficiency(flow: f64, params: &EfficiencyParams) -> f64 {
    let x = flow / params.design_flow - 1.0;
    params.alpha - params.beta * x * x
}

/// Electrical output in kW for a flow through a unit under a given head.
pub fn power_kw(flow: f64, head: f64, params: &EfficiencyParams) -> f64 {
    RHO * G * head * efficiency(flow, params) * flow / 1000.0
}

/// Cone-shaped reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    pub h_max: f64,
    pub v_max: f64,
}

impl ReservoirSpec {
    /// A reservoir holding `dam_days` days of flow at the design speed.
    pub fn from_dam_days(h_max: f64, design_flow: f64, dam_days: f64) -> Self {
        ReservoirSpec {
            h_max,
            v_max: design_flow * SECONDS_PER_DAY * dam_days,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_max > 0.0 && self.h_max.is_finite()) || !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::invalid(format!(
                "reservoir needs positive h_max and v_max, got {} and {}",
                self.h_max, self.v_max
            )));
        }
        Ok(())
    }
}

pub fn head_from_volume(volume: f64, reservoir: &ReservoirSpec) -> Result<f64> {
    check_range("volume", volume, 0.0, reservoir.v_max)?;
    Ok(reservoir.h_max * (volume / reservoir.v_max).cbrt())
}

pub fn volume_from_head(head: f64, reservoir: &ReservoirSpec) -> Result<f64> {
    check_range("head", head, 0.0, reservoir.h_max)?;
    Ok(reservoir.v_max * (head / reservoir.h_max).powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirStep {
    pub volume: f64,
    pub spill: f64,
}

/// One explicit Euler step of the water balance. Volumes in m³, flows in
/// m³/s, `dt_days` in days. Water above `v_max` spills; the reservoir
/// cannot go below empty.
pub fn step_reservoir(
    volume: f64,
    inflow: f64,
    outflow: f64,
    dt_days: f64,
    reservoir: &ReservoirSpec,
) -> ReservoirStep {
    let raw = volume + (inflow - outflow) * SECONDS_PER_DAY * dt_days;
    ReservoirStep {
        volume: raw.clamp(0.0, reservoir.v_max),
        spill: (raw - reservoir.v_max).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamPlantSpec {
    pub efficiency: EfficiencyParams,
    pub reservoir: ReservoirSpec,
    pub f_min: f64,
    pub f_max: f64,
    pub c_run: f64,
    pub c_low: f64,
    pub gamma: f64,
    pub n_modes: usize,
}

impl DamPlantSpec {
    pub fn validate(&self) -> Result<()> {
        self.efficiency.validate()?;
        self.reservoir.validate()?;
        validate_unit(
            self.f_min,
            self.f_max,
            &self.efficiency,
            self.c_run,
            self.c_low,
            self.gamma,
        )?;
        if self.n_modes < 2 || self.n_modes > u8::MAX as usize {
            return Err(Error::invalid(format!(
                "dam plant needs 2..=255 modes, got {}",
                self.n_modes
            )));
        }
        Ok(())
    }
}

fn validate_unit(f_min: f64, f_max: f64, eff: &EfficiencyParams, c_run: f64, c_low: f64, gamma: f64) -> Result<()> {
    if !(f_min > 0.0 && f_min <= eff.design_flow && eff.design_flow <= f_max && f_max.is_finite()) {
        return Err(Error::invalid(format!(
            "need 0 < f_min <= design flow <= f_max, got {f_min}, {}, {f_max}",
            eff.design_flow
        )));
    }
    check_range("c_run", c_run, 0.0, f64::MAX)?;
    check_range("c_low", c_low, 0.0, f64::MAX)?;
    check_range("gamma", gamma, 0.0, 0.01)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RorPlantSpec {
    pub efficiency: EfficiencyParams,
    pub fixed_head: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub c_run: f64,
    pub c_low: f64,
    pub gamma: f64,
    /// The two-unit split is searched over `split_grid + 1` evenly spaced
    /// fractions of the flow.
    pub split_grid: usize,
}

impl RorPlantSpec {
    pub fn validate(&self) -> Result<()> {
        self.efficiency.validate()?;
        if !(self.fixed_head > 0.0 && self.fixed_head.is_finite()) {
            return Err(Error::invalid(format!(
                "fixed head must be positive, got {}",
                self.fixed_head
            )));
        }
        if self.split_grid == 0 {
            return Err(Error::invalid("split grid must be positive"));
        }
        validate_unit(
            self.f_min,
            self.f_max,
            &self.efficiency,
            self.c_run,
            self.c_low,
            self.gamma,
        )
    }
}

/// Daily electricity price in m.u./kWh, repeating if shorter than the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    values: Vec<f64>,
}

impl PriceSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("price series is empty"));
        }
        if values.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("prices must be non-negative"));
        }
        Ok(PriceSeries { values })
    }

    pub fn constant(price: f64) -> Result<Self> {
        PriceSeries::new(vec![price])
    }

    pub fn at(&self, day: usize) -> f64 {
        self.values[day % self.values.len()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for PriceSeries {
    fn default() -> Self {
        PriceSeries { values: vec![1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Plant {
    Dam(DamPlantSpec),
    Ror(RorPlantSpec),
}

impl Plant {
    pub fn regime(&self) -> Regime {
        match self {
            Plant::Dam(_) => Regime::Dam,
            Plant::Ror(_) => Regime::Ror,
        }
    }

    pub fn n_modes(&self) -> usize {
        match self {
            Plant::Dam(d) => d.n_modes,
            Plant::Ror(_) => ROR_MODES,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Plant::Dam(d) => d.gamma,
            Plant::Ror(r) => r.gamma,
        }
    }

    pub fn efficiency(&self) -> &EfficiencyParams {
        match self {
            Plant::Dam(d) => &d.efficiency,
            Plant::Ror(r) => &r.efficiency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Plant::Dam(d) => d.validate(),
            Plant::Ror(r) => r.validate(),
        }
    }

    pub fn reference_profit(&self) -> f64 {
        reference_profit(self)
    }

    pub fn switch_costs(&self) -> SwitchCosts {
        SwitchCosts::new(self.regime(), self.n_modes(), self.gamma(), self.reference_profit())
    }
}

fn check_mode(mode: usize, n_modes: usize) -> Result<()> {
    if mode < n_modes {
        Ok(())
    } else {
        Err(Error::ModeOutOfRange { mode, n_modes })
    }
}

/// Turbine flow of a dam-plant mode: 0 when off, otherwise evenly spaced from
/// `f_min` (mode 1) to `f_max` (last mode).
pub fn mode_flow(mode: usize, spec: &DamPlantSpec) -> Result<f64> {
    check_mode(mode, spec.n_modes)?;
    Ok(match mode {
        0 => 0.0,
        _ if spec.n_modes == 2 => spec.f_min,
        i => spec.f_min + (i - 1) as f64 / (spec.n_modes - 2) as f64 * (spec.f_max - spec.f_min),
    })
}

/// Daily payoff of a running dam unit given its output in kW. An empty
/// reservoir (zero head) earns the low-water penalty instead of revenue.
pub(crate) fn dam_daily_payoff(power: f64, head: f64, price: f64, c_run: f64, c_low: f64) -> f64 {
    if head > 0.0 {
        HOURS_PER_DAY * (power * price - c_run)
    } else {
        HOURS_PER_DAY * (-c_run - c_low)
    }
}

/// Daily payoff of the dam unit running at an arbitrary turbine flow.
pub fn dam_payoff_at_flow(flow: f64, head: f64, price: f64, spec: &DamPlantSpec) -> Result<f64> {
    check_range("head", head, 0.0, spec.reservoir.h_max)?;
    let power = power_kw(flow, head, &spec.efficiency);
    Ok(dam_daily_payoff(power, head, price, spec.c_run, spec.c_low))
}

pub fn payoff_dam(mode: usize, head: f64, price: f64, spec: &DamPlantSpec) -> Result<f64> {
    let flow = mode_flow(mode, spec)?;
    check_range("head", head, 0.0, spec.reservoir.h_max)?;
    if mode == 0 {
        return Ok(0.0);
    }
    dam_payoff_at_flow(flow, head, price, spec)
}

/// Hourly payoff of one run-of-river unit fed `flow`.
pub fn ror_unit_hourly(flow: f64, price: f64, spec: &RorPlantSpec) -> f64 {
    let c = RHO * G * spec.fixed_head / 1000.0;
    let revenue = if flow < spec.f_min {
        -spec.c_low
    } else if flow < spec.f_max {
        c * efficiency(flow, &spec.efficiency) * flow * price
    } else {
        c * efficiency(spec.f_max, &spec.efficiency) * spec.f_max * price
    };
    revenue - spec.c_run
}

/// Hourly payoff of two units with the flow split `k : split_grid − k`.
pub fn ror_split_hourly(flow: f64, k: usize, price: f64, spec: &RorPlantSpec) -> f64 {
    let n = spec.split_grid as f64;
    let first = k as f64 / n * flow;
    let second = (spec.split_grid - k) as f64 / n * flow;
    ror_unit_hourly(first, price, spec) + ror_unit_hourly(second, price, spec)
}

/// Best split index for two running units, lowest index on ties.
pub fn ror_best_split(flow: f64, price: f64, spec: &RorPlantSpec) -> (usize, f64) {
    (0..=spec.split_grid).fold((0, f64::NEG_INFINITY), |best, k| {
        let v = ror_split_hourly(flow, k, price, spec);
        if v > best.1 {
            (k, v)
        } else {
            best
        }
    })
}

pub fn payoff_ror(mode: usize, flow: f64, price: f64, spec: &RorPlantSpec) -> Result<f64> {
    check_mode(mode, ROR_MODES)?;
    if !(flow >= 0.0) {
        return Err(Error::invalid(format!("river flow must be non-negative, got {flow}")));
    }
    Ok(match mode {
        0 => 0.0,
        1 => HOURS_PER_DAY * ror_unit_hourly(flow, price, spec),
        _ => HOURS_PER_DAY * ror_best_split(flow, price, spec).1,
    })
}

/// Flow actually passed through the turbines of a run-of-river plant.
pub fn ror_turbine_flow(mode: usize, flow: f64, price: f64, spec: &RorPlantSpec) -> f64 {
    let unit = |f: f64| if f < spec.f_min { 0.0 } else { f.min(spec.f_max) };
    match mode {
        0 => 0.0,
        1 => unit(flow),
        _ => {
            let (k, _) = ror_best_split(flow, price, spec);
            let n = spec.split_grid as f64;
            unit(k as f64 / n * flow) + unit((spec.split_grid - k) as f64 / n * flow)
        }
    }
}

/// Profit of one unit running flat out at full head and unit price for a
/// year. Switching costs are quoted as fractions of this figure.
pub fn reference_profit(plant: &Plant) -> f64 {
    let (eff, head, f_max, c_run) = match plant {
        Plant::Dam(d) => (&d.efficiency, d.reservoir.h_max, d.f_max, d.c_run),
        Plant::Ror(r) => (&r.efficiency, r.fixed_head, r.f_max, r.c_run),
    };
    let power = power_kw(f_max, head, eff);
    365.0 * dam_daily_payoff(power, head, 1.0, c_run, 0.0)
}

/// Mode-change cost between two modes, `gamma · d_ref` scaled per regime.
pub fn switch_cost(from: usize, to: usize, regime: Regime, n_modes: usize, gamma: f64, d_ref: f64) -> Result<f64> {
    let n_modes = match regime {
        Regime::Dam => n_modes,
        Regime::Ror => ROR_MODES,
    };
    check_mode(from, n_modes)?;
    check_mode(to, n_modes)?;
    let full = gamma * d_ref;
    Ok(match regime {
        _ if from == to => 0.0,
        Regime::Dam if from == 0 || to == 0 => full,
        Regime::Dam => full / 25.0,
        Regime::Ror if from.abs_diff(to) == 1 => full,
        Regime::Ror => 1.5 * full,
    })
}

/// Known shape of a cost matrix, used to pick a faster maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostStructure {
    /// Starting or stopping costs `on_off`; retuning a running unit costs
    /// `retune`.
    OnOff {
        on_off: f64,
        retune: f64,
    },
    General,
}

/// Dense switching-cost matrix, row = current mode, column = next mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCosts {
    n_modes: usize,
    matrix: Vec<f64>,
    structure: CostStructure,
}

impl SwitchCosts {
    pub fn new(regime: Regime, n_modes: usize, gamma: f64, d_ref: f64) -> Self {
        let n_modes = if regime == Regime::Ror { ROR_MODES } else { n_modes };
        let mut matrix = Vec::with_capacity(n_modes * n_modes);
        for i in 0..n_modes {
            for j in 0..n_modes {
                matrix.push(switch_cost(i, j, regime, n_modes, gamma, d_ref).expect("modes in range"));
            }
        }
        let structure = match regime {
            Regime::Dam => CostStructure::OnOff {
                on_off: gamma * d_ref,
                retune: gamma * d_ref / 25.0,
            },
            Regime::Ror => CostStructure::General,
        };
        SwitchCosts {
            n_modes,
            matrix,
            structure,
        }
    }

    /// Arbitrary square matrix with a zero diagonal.
    pub fn from_matrix(n_modes: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n_modes * n_modes {
            return Err(Error::DimensionMismatch {
                what: "switch cost matrix",
                expected: n_modes * n_modes,
                found: matrix.len(),
            });
        }
        if (0..n_modes).any(|i| matrix[i * n_modes + i] != 0.0) {
            return Err(Error::invalid("switch cost diagonal must be zero"));
        }
        Ok(SwitchCosts {
            n_modes,
            matrix,
            structure: CostStructure::General,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn structure(&self) -> CostStructure {
        self.structure
    }

    /// Same costs, but without the structural shortcut.
    pub fn as_general(&self) -> Self {
        SwitchCosts {
            structure: CostStructure::General,
            ..self.clone()
        }
    }

    #[inline]
    pub fn cost(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.n_modes + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.matrix[from * self.n_modes..(from + 1) * self.n_modes]
    }
}
