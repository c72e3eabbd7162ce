//! Parameter sweeps comparing the receding-horizon strategy with the
//! hindsight optimum, year by year.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigFile, PlantConfig};
use crate::dp::GridSpec;
use crate::error::{Error, Result};
use crate::flow::{build_mean_profile, FlowSeries, MeanFlowProfile};
use crate::plant::{Plant, Regime};
use crate::strategy::{run_hindsight, run_receding_horizon, PerfectForecast, StrategyRecord};

/// Strategy profit as a fraction of the hindsight optimum.
pub fn performance_ratio(strategy_profit: f64, hindsight_profit: f64) -> Result<f64> {
    if !(hindsight_profit > 0.0) {
        return Err(Error::UndefinedRatio(hindsight_profit));
    }
    Ok(strategy_profit / hindsight_profit)
}

/// Whole calendar years of flow, keyed by year.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowArchive {
    years: BTreeMap<i32, Vec<f64>>,
}

impl FlowArchive {
    pub fn from_series(series: &FlowSeries) -> Self {
        FlowArchive {
            years: series.complete_years(),
        }
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.years.keys().copied()
    }

    pub fn year(&self, year: i32) -> Result<&[f64]> {
        self.years.get(&year).map(Vec::as_slice).ok_or(Error::MissingYear(year))
    }

    /// Mean profile over `history`; an empty list means every archived year
    /// before `before`.
    pub fn profile(&self, history: &[i32], before: i32, window: usize) -> Result<MeanFlowProfile> {
        let chosen: Vec<i32> = if history.is_empty() {
            self.years().filter(|y| *y < before).collect()
        } else {
            history.to_vec()
        };
        if chosen.is_empty() {
            return Err(Error::invalid(format!(
                "no history years before {before} for the mean profile"
            )));
        }
        let series = chosen
            .iter()
            .map(|&y| {
                let start = NaiveDate::from_ymd_opt(y, 1, 1).ok_or(Error::MissingYear(y))?;
                FlowSeries::new(start, self.year(y)?.to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        build_mean_profile(&series, window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub years: Vec<i32>,
    /// Years averaged into the mean flow profile. Empty: all archived years
    /// before the first test year.
    pub history_years: Vec<i32>,
    pub forecast_days: Vec<usize>,
    pub dam_days: Vec<f64>,
    pub gammas: Vec<f64>,
    pub half_lives: Vec<f64>,
    pub regime: Regime,
    pub grid: GridSpec,
    /// Everything not swept.
    pub base: PlantConfig,
}

impl SweepSpec {
    /// Single-cell sweep at the configured values; axes from the `[sweep]`
    /// table replace them where given.
    pub fn from_config(config: &ConfigFile) -> Self {
        let p = &config.plant;
        let s = &config.sweep;
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        SweepSpec {
            years: s.years.clone(),
            history_years: s.history_years.clone(),
            forecast_days: if s.forecast_days.is_empty() {
                vec![p.forecast_days]
            } else {
                s.forecast_days.clone()
            },
            dam_days: or(&s.dam_days, p.n_days_dam),
            gammas: or(&s.gammas, p.gamma),
            half_lives: or(&s.half_lives, p.half_life_days),
            regime: s.regime.unwrap_or(Regime::Dam),
            grid: config.grid.grid(),
            base: p.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str, n: usize| {
            if n == 0 {
                Err(Error::invalid(format!("sweep axis `{name}` is empty")))
            } else {
                Ok(())
            }
        };
        empty("years", self.years.len())?;
        empty("forecast_days", self.forecast_days.len())?;
        empty("dam_days", self.dam_days.len())?;
        empty("gammas", self.gammas.len())?;
        empty("half_lives", self.half_lives.len())?;
        for &g in &self.gammas {
            if !(0.0..=0.01).contains(&g) {
                return Err(Error::OutOfRange {
                    what: "gamma",
                    value: g,
                    min: 0.0,
                    max: 0.01,
                });
            }
        }
        if let Some(n) = self.dam_days.iter().find(|n| !(**n > 0.0 && n.is_finite())) {
            return Err(Error::invalid(format!("dam size must be positive, got {n}")));
        }
        if let Some(h) = self.half_lives.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::invalid(format!("half-life must be positive, got {h}")));
        }
        self.grid.validate()?;
        // Swept fields are checked above; the base only supplies the rest.
        PlantConfig {
            gamma: self.gammas[0],
            n_days_dam: self.dam_days[0],
            half_life_days: self.half_lives[0],
            ..self.base.clone()
        }
        .validate()
    }

    fn plant(&self, dam_days: f64, gamma: f64) -> Result<Plant> {
        let cfg = PlantConfig {
            n_days_dam: dam_days,
            gamma,
            ..self.base.clone()
        };
        cfg.plant(self.regime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub year: i32,
    #[serde(rename = "M")]
    pub forecast_days: usize,
    #[serde(rename = "N")]
    pub dam_days: f64,
    pub gamma: f64,
    pub hindsight_profit: f64,
    pub strategy_profit: f64,
    /// `None` when the hindsight profit is not positive.
    pub ratio: Option<f64>,
    pub switches_opt: usize,
    pub switches_dpp: usize,
    pub mean_head_frac: f64,
    pub spill_total: f64,
    pub half_life: f64,
}

/// Slack allowed above 1 for rounding noise.
pub const DOMINANCE_SLACK: f64 = 1e-9;

impl BenchResult {
    /// The strategy beat the hindsight optimum, which should be impossible.
    pub fn violates_dominance(&self) -> bool {
        self.ratio.is_some_and(|r| r > 1.0 + DOMINANCE_SLACK)
    }
}

fn sorted_f64(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn sorted<T: Ord + Clone>(v: &[T]) -> Vec<T> {
    let mut v = v.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Runs every cell of the sweep. Results come back ordered by
/// (year, M, N, γ, half-life) whatever the order of the input axes.
pub fn run_sweep(spec: &SweepSpec, data: &FlowArchive) -> Result<Vec<BenchResult>> {
    spec.validate()?;
    let years = sorted(&spec.years);
    let ms = sorted(&spec.forecast_days);
    let ns = sorted_f64(&spec.dam_days);
    let gammas = sorted_f64(&spec.gammas);
    let half_lives = sorted_f64(&spec.half_lives);
    let horizon = spec.grid.horizon;

    let mut actual = HashMap::new();
    for &y in &years {
        let flow = data.year(y)?;
        if flow.len() < horizon {
            return Err(Error::DimensionMismatch {
                what: "days of flow in year",
                expected: horizon,
                found: flow.len(),
            });
        }
        actual.insert(y, &flow[..horizon]);
    }
    let profile = data.profile(&spec.history_years, years[0], spec.base.smoothing_window)?;
    let price = spec.base.price_series()?;

    let mut hindsight_cells = Vec::new();
    for &y in &years {
        for &n in &ns {
            for &g in &gammas {
                hindsight_cells.push((y, n, g));
            }
        }
    }
    let hindsight: Vec<StrategyRecord> = hindsight_cells
        .par_iter()
        .map(|&(y, n, g)| run_hindsight(actual[&y], &spec.plant(n, g)?, &spec.grid, &price))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (k, &(y, n, g)) in hindsight_cells.iter().enumerate() {
        for &m in &ms {
            for &h in &half_lives {
                cells.push((k, y, m, n, g, h));
            }
        }
    }
    let mut results: Vec<BenchResult> = cells
        .par_iter()
        .map(|&(k, y, m, n, g, h)| {
            let plant = spec.plant(n, g)?;
            let flow = actual[&y];
            let forecaster = PerfectForecast::new(flow, m);
            let dpp = run_receding_horizon(flow, &forecaster, &profile, &plant, &spec.grid, &price, h)?;
            let opt = &hindsight[k];
            let h_max = match &plant {
                Plant::Dam(d) => d.reservoir.h_max,
                Plant::Ror(r) => r.fixed_head,
            };
            Ok(BenchResult {
                year: y,
                forecast_days: m,
                dam_days: n,
                gamma: g,
                hindsight_profit: opt.total_profit,
                strategy_profit: dpp.total_profit,
                ratio: performance_ratio(dpp.total_profit, opt.total_profit).ok(),
                switches_opt: opt.switch_count(),
                switches_dpp: dpp.switch_count(),
                mean_head_frac: dpp.mean_head_fraction(h_max),
                spill_total: dpp.spill_total(),
                half_life: h,
            })
        })
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| {
        (a.year, a.forecast_days)
            .cmp(&(b.year, b.forecast_days))
            .then(a.dam_days.total_cmp(&b.dam_days))
            .then(a.gamma.total_cmp(&b.gamma))
            .then(a.half_life.total_cmp(&b.half_life))
    });
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

pub const CSV_COLUMNS: [&str; 12] = [
    "year",
    "M",
    "N",
    "gamma",
    "hindsight_profit",
    "strategy_profit",
    "ratio",
    "switches_opt",
    "switches_dpp",
    "mean_head_frac",
    "spill_total",
    "half_life",
];

pub fn emit_results(results: &[BenchResult], format: OutputFormat) -> Result<Vec<u8>> {
    if results.is_empty() {
        return Err(Error::invalid("no results to emit"));
    }
    match format {
        OutputFormat::Json => Ok(serde_json::to_vec_pretty(results)?),
        OutputFormat::Csv => {
            let mut out = String::new();
            out.push_str(&CSV_COLUMNS.join(","));
            out.push('\n');
            for r in results {
                let ratio = r.ratio.map_or(String::new(), |v| format!("{v:.9}"));
                out.push_str(&format!(
                    "{},{},{},{},{:.6},{:.6},{},{},{},{:.9},{:.3},{}\n",
                    r.year,
                    r.forecast_days,
                    r.dam_days,
                    r.gamma,
                    r.hindsight_profit,
                    r.strategy_profit,
                    ratio,
                    r.switches_opt,
                    r.switches_dpp,
                    r.mean_head_frac,
                    r.spill_total,
                    r.half_life
                ));
            }
            Ok(out.into_bytes())
        }
    }
}

/// Mean ratio for each value of one axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisSummary {
    pub axis: &'static str,
    pub value: f64,
    pub mean_ratio: f64,
    pub cells: usize,
}

pub fn summarize(results: &[BenchResult]) -> Vec<AxisSummary> {
    type Key = fn(&BenchResult) -> f64;
    let axes: [(&'static str, Key); 5] = [
        ("year", |r| r.year as f64),
        ("M", |r| r.forecast_days as f64),
        ("N", |r| r.dam_days),
        ("gamma", |r| r.gamma),
        ("half_life", |r| r.half_life),
    ];
    let mut out = Vec::new();
    for (axis, key) in axes {
        let mut groups: Vec<(f64, f64, usize)> = Vec::new();
        for r in results {
            let Some(ratio) = r.ratio else { continue };
            let k = key(r);
            match groups.iter_mut().find(|g| g.0 == k) {
                Some(g) => {
                    g.1 += ratio;
                    g.2 += 1;
                }
                None => groups.push((k, ratio, 1)),
            }
        }
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.extend(groups.into_iter().map(|(value, sum, cells)| AxisSummary {
            axis,
            value,
            mean_ratio: sum / cells as f64,
            cells,
        }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(ratio: Option<f64>) -> BenchResult {
        BenchResult {
            year: 2022,
            forecast_days: 10,
            dam_days: 30.0,
            gamma: 0.0025,
            hindsight_profit: 100.0,
            strategy_profit: 97.1,
            ratio,
            switches_opt: 12,
            switches_dpp: 14,
            mean_head_frac: 0.9,
            spill_total: 1.0e6,
            half_life: 10.0,
        }
    }

    #[test]
    fn ratios() {
        assert_eq!(performance_ratio(100.0, 100.0).unwrap(), 1.0);
        assert!((performance_ratio(96.5, 100.0).unwrap() - 0.965).abs() < 1e-15);
        assert_eq!(performance_ratio(0.0, 100.0).unwrap(), 0.0);
        assert!(matches!(performance_ratio(1.0, 0.0), Err(Error::UndefinedRatio(_))));
        assert!(performance_ratio(1.0, -5.0).is_err());
    }

    #[test]
    fn csv_has_header_and_row() {
        let out = String::from_utf8(emit_results(&[result(Some(0.971))], OutputFormat::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "year,M,N,gamma,hindsight_profit,strategy_profit,ratio,switches_opt,switches_dpp,mean_head_frac,spill_total,half_life"
        );
        let ratio = lines[1].split(',').nth(6).unwrap();
        assert_eq!(ratio, "0.971000000");
        let digits = ratio.chars().filter(|c| c.is_ascii_digit()).count() - 1;
        assert!(digits >= 6);
    }

    #[test]
    fn json_mirrors_fields() {
        let out = emit_results(&[result(Some(0.971)), result(None)], OutputFormat::Json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        let first = &v[0];
        for key in CSV_COLUMNS {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(first["ratio"], 0.971);
        assert!(v[1]["ratio"].is_null());
    }

    #[test]
    fn empty_results_are_an_error() {
        assert!(emit_results(&[], OutputFormat::Csv).is_err());
        assert!(emit_results(&[], OutputFormat::Json).is_err());
    }

    #[test]
    fn dominance_flag() {
        assert!(!result(Some(1.0 + 1e-12)).violates_dominance());
        assert!(result(Some(1.0 + 1e-6)).violates_dominance());
        assert!(!result(None).violates_dominance());
    }

    #[test]
    fn summary_groups_by_axis() {
        let mut a = result(Some(0.9));
        a.year = 2015;
        let b = result(Some(1.0));
        let s = summarize(&[a, b]);
        let years: Vec<_> = s.iter().filter(|x| x.axis == "year").collect();
        assert_eq!(years.len(), 2);
        let m: Vec<_> = s.iter().filter(|x| x.axis == "M").collect();
        assert_eq!(m.len(), 1);
        assert!((m[0].mean_ratio - 0.95).abs() < 1e-12);
    }

    #[test]
    fn sweep_validation() {
        let mut spec = SweepSpec::from_config(&ConfigFile::default());
        assert!(spec.validate().is_err(), "no years");
        spec.years = vec![2015];
        assert!(spec.validate().is_ok());
        spec.gammas = vec![0.5];
        assert!(matches!(spec.validate(), Err(Error::OutOfRange { what: "gamma", .. })));
    }

    #[test]
    fn missing_year_is_reported() {
        let mut spec = SweepSpec::from_config(&ConfigFile::default());
        spec.years = vec![1999];
        let err = run_sweep(&spec, &FlowArchive::default()).unwrap_err();
        assert!(matches!(err, Error::MissingYear(1999)));
    }
}
