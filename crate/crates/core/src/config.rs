//! Key-value configuration shared by the plant, grid and sweep settings.
//!
//! ```toml
//! alpha = 0.92
//! gamma = 0.0025
//! n_days_dam = 30
//!
//! [grid]
//! volume_levels = 1000
//!
//! [sweep]
//! years = [2015, 2016]
//! gammas = [0.00125, 0.0025, 0.005]
//! ```
//!
//! Missing keys fall back to the reference plant defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dp::GridSpec;
use crate::error::{Error, Result};
use crate::plant::{
    DamPlantSpec, EfficiencyParams, Plant, PriceSeries, Regime, ReservoirSpec, RorPlantSpec, DAM_MODES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub alpha: f64,
    pub beta: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub f_d: f64,
    pub h_max: f64,
    pub c_run: f64,
    pub c_low: f64,
    pub gamma: f64,
    pub n_days_dam: f64,
    pub half_life_days: f64,
    pub forecast_days: usize,
    pub price: f64,
    pub n_modes: usize,
    pub split_grid: usize,
    pub smoothing_window: usize,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            alpha: 0.92,
            beta: 0.45,
            f_min: 5.0,
            f_max: 13.0,
            f_d: 10.0,
            h_max: 5.0,
            c_run: 100.0,
            c_low: 1000.0,
            gamma: 0.0025,
            n_days_dam: 30.0,
            half_life_days: 10.0,
            forecast_days: 10,
            price: 1.0,
            n_modes: DAM_MODES,
            split_grid: 100,
            smoothing_window: 7,
        }
    }
}

impl PlantConfig {
    fn efficiency(&self) -> EfficiencyParams {
        EfficiencyParams {
            alpha: self.alpha,
            beta: self.beta,
            design_flow: self.f_d,
        }
    }

    pub fn dam_spec(&self) -> DamPlantSpec {
        DamPlantSpec {
            efficiency: self.efficiency(),
            reservoir: ReservoirSpec::from_dam_days(self.h_max, self.f_d, self.n_days_dam),
            f_min: self.f_min,
            f_max: self.f_max,
            c_run: self.c_run,
            c_low: self.c_low,
            gamma: self.gamma,
            n_modes: self.n_modes,
        }
    }

    pub fn ror_spec(&self) -> RorPlantSpec {
        RorPlantSpec {
            efficiency: self.efficiency(),
            fixed_head: self.h_max,
            f_min: self.f_min,
            f_max: self.f_max,
            c_run: self.c_run,
            c_low: self.c_low,
            gamma: self.gamma,
            split_grid: self.split_grid,
        }
    }

    pub fn plant(&self, regime: Regime) -> Result<Plant> {
        let plant = match regime {
            Regime::Dam => Plant::Dam(self.dam_spec()),
            Regime::Ror => Plant::Ror(self.ror_spec()),
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn price_series(&self) -> Result<PriceSeries> {
        PriceSeries::constant(self.price)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant(Regime::Dam)?;
        self.plant(Regime::Ror)?;
        if !(self.half_life_days > 0.0 && self.half_life_days.is_finite()) {
            return Err(Error::invalid(format!(
                "half-life must be positive, got {}",
                self.half_life_days
            )));
        }
        if !(self.n_days_dam > 0.0 && self.n_days_dam.is_finite()) {
            return Err(Error::invalid(format!(
                "dam size must be positive, got {}",
                self.n_days_dam
            )));
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(Error::invalid("smoothing window must be odd and positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: usize,
    pub dq: f64,
    pub volume_levels: usize,
    pub coarse: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        GridConfig {
            horizon: g.horizon,
            dq: g.dq,
            volume_levels: g.volume_levels,
            coarse: false,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> GridSpec {
        let g = GridSpec {
            horizon: self.horizon,
            dq: self.dq,
            volume_levels: self.volume_levels,
        };
        if self.coarse {
            g.coarse()
        } else {
            g
        }
    }
}

/// Axes of a parameter sweep. Empty axes fall back to the plant config value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub years: Vec<i32>,
    pub history_years: Vec<i32>,
    pub forecast_days: Vec<usize>,
    pub dam_days: Vec<f64>,
    pub gammas: Vec<f64>,
    pub half_lives: Vec<f64>,
    pub regime: Option<Regime>,
}

/// Plant keys at the top level, with optional `[grid]` and `[sweep]` tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub plant: PlantConfig,
    pub grid: GridConfig,
    pub sweep: SweepConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let grid = match table.remove("grid") {
            Some(v) => v.try_into()?,
            None => GridConfig::default(),
        };
        let sweep = match table.remove("sweep") {
            Some(v) => v.try_into()?,
            None => SweepConfig::default(),
        };
        let plant = toml::Value::Table(table).try_into()?;
        Ok(ConfigFile { plant, grid, sweep })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(&text)
    }
}
