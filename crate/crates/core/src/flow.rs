//! River flow data: ingestion, historical mean profiles and deterministic
//! mean-reverting projections.
//!
//! All day indices in this module run over a 365-day year. February 29 never
//! appears; it is dropped on ingestion and skipped when stepping dates.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: usize = 365;

/// The calendar day after `date`, skipping February 29.
pub fn next_day(date: NaiveDate) -> NaiveDate {
    let next = date.succ_opt().expect("date overflow");
    if is_leap_day(next) {
        next.succ_opt().expect("date overflow")
    } else {
        next
    }
}

pub fn is_leap_day(date: NaiveDate) -> bool {
    date.month() == 2 && date.day() == 29
}

/// Day-of-year index in `0..365` with February 29 removed.
pub fn day_index(date: NaiveDate) -> usize {
    let ordinal = date.ordinal0() as usize;
    let leap = NaiveDate::from_ymd_opt(date.year(), 2, 29).is_some();
    if leap && ordinal >= 59 {
        // Feb 29 itself maps onto Mar 1; callers never pass it.
        (ordinal - 1).min(DAYS_PER_YEAR - 1)
    } else {
        ordinal
    }
}

/// Rounds a flow onto the `0, dq, 2dq, ...` grid, halves rounding up.
pub fn round_to_grid(flow: f64, dq: f64) -> f64 {
    (flow / dq + 0.5).floor() * dq
}

/// Dated daily river flow in m³/s, gapless over the no-leap-day calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries {
    start_date: NaiveDate,
    values: Vec<f64>,
}

impl FlowSeries {
    pub fn new(start_date: NaiveDate, values: Vec<f64>) -> Result<Self> {
        if is_leap_day(start_date) {
            return Err(Error::invalid("flow series cannot start on February 29"));
        }
        if values.is_empty() {
            return Err(Error::invalid("flow series is empty"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("flow[{i}] = {v} is not a non-negative number")));
        }
        Ok(FlowSeries { start_date, values })
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        std::iter::successors(Some(self.start_date), |d| Some(next_day(*d))).take(self.values.len())
    }

    /// Splits the series into calendar years, keeping only the years covered
    /// from January 1 through December 31.
    pub fn complete_years(&self) -> BTreeMap<i32, Vec<f64>> {
        let mut partial: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        let mut first_index: BTreeMap<i32, usize> = BTreeMap::new();
        for (date, &v) in self.dates().zip(&self.values) {
            first_index.entry(date.year()).or_insert_with(|| day_index(date));
            partial.entry(date.year()).or_default().push(v);
        }
        partial
            .into_iter()
            .filter(|(year, vals)| first_index[year] == 0 && vals.len() == DAYS_PER_YEAR)
            .collect()
    }

    /// Writes the series in the `date,flow_m3s` ingestion format.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "flow_m3s"]).map_err(csv_io)?;
        for (date, v) in self.dates().zip(&self.values) {
            w.write_record([date.format("%Y-%m-%d").to_string(), format!("{v}")])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Parses a `date,flow_m3s` CSV into a gapless [`FlowSeries`].
///
/// February 29 rows are dropped. Negative flows, duplicate or out-of-order
/// dates and gaps are rejected with the offending line number.
pub fn load_flow_csv<R: Read>(source: R) -> Result<FlowSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| Error::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if header.len() != 2 || &header[0] != "date" || &header[1] != "flow_m3s" {
        return Err(Error::Csv {
            line: 1,
            message: format!(
                "expected header `date,flow_m3s`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut start: Option<NaiveDate> = None;
    let mut last: Option<NaiveDate> = None;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Csv { line, message };
        if record.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", &record[0])))?;
        let flow: f64 = record[1]
            .parse()
            .map_err(|_| bad(format!("bad flow value `{}`", &record[1])))?;
        if !flow.is_finite() || flow < 0.0 {
            return Err(bad(format!("flow must be non-negative, found {}", &record[1])));
        }
        if is_leap_day(date) {
            if let Some(prev) = last {
                if date <= prev {
                    return Err(bad(format!("date {date} is not after {prev}")));
                }
            }
            continue;
        }
        if let Some(prev) = last {
            if date <= prev {
                return Err(bad(format!("date {date} is duplicate or out of order after {prev}")));
            }
            let expected = next_day(prev);
            if date != expected {
                return Err(bad(format!("gap in dates: expected {expected}, found {date}")));
            }
        } else {
            start = Some(date);
        }
        last = Some(date);
        values.push(flow);
    }
    match start {
        Some(start) => FlowSeries::new(start, values),
        None => Err(Error::Csv {
            line: 1,
            message: "no data rows".into(),
        }),
    }
}

/// Smoothed historical daily mean flow over one 365-day year.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFlowProfile {
    values: Vec<f64>,
    window_days: usize,
}

impl MeanFlowProfile {
    pub fn new(values: Vec<f64>, window_days: usize) -> Result<Self> {
        if values.len() != DAYS_PER_YEAR {
            return Err(Error::DimensionMismatch {
                what: "mean flow profile",
                expected: DAYS_PER_YEAR,
                found: values.len(),
            });
        }
        if window_days == 0 {
            return Err(Error::invalid("smoothing window must be positive"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("mean flow profile values must be non-negative"));
        }
        Ok(MeanFlowProfile { values, window_days })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window_days(&self) -> usize {
        self.window_days
    }

    /// Mean flow on day `day`, wrapping around the year.
    pub fn at(&self, day: usize) -> f64 {
        self.values[day % DAYS_PER_YEAR]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["day_index", "flow_m3s"]).map_err(csv_io)?;
        for (d, v) in self.values.iter().enumerate() {
            w.write_record([d.to_string(), format!("{v}")]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `day_index,flow_m3s` profile. The window is not stored in the
    /// file and has to be supplied.
    pub fn read_csv<R: Read>(source: R, window_days: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let mut values = vec![f64::NAN; DAYS_PER_YEAR];
        let mut seen = 0;
        for record in reader.records() {
            let record = record.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Csv { line, message };
            let day: usize = record
                .get(0)
                .and_then(|s| s.parse().ok())
                .filter(|d| *d < DAYS_PER_YEAR)
                .ok_or_else(|| bad("bad day_index".into()))?;
            let flow: f64 = record
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad flow value".into()))?;
            values[day] = flow;
            seen += 1;
        }
        if seen != DAYS_PER_YEAR || values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("profile must list each day_index 0..364 exactly once"));
        }
        MeanFlowProfile::new(values, window_days)
    }
}

/// Averages day-of-year flows across all histories, then applies a centered
/// moving average of `window_days` that wraps across the year boundary.
pub fn build_mean_profile(histories: &[FlowSeries], window_days: usize) -> Result<MeanFlowProfile> {
    if histories.is_empty() {
        return Err(Error::invalid("no histories to average"));
    }
    if window_days == 0 || window_days.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "window must be odd and positive, got {window_days}"
        )));
    }
    let mut sums = vec![0.0; DAYS_PER_YEAR];
    let mut years = 0usize;
    for h in histories {
        if h.len() % DAYS_PER_YEAR != 0 {
            return Err(Error::invalid(format!(
                "history starting {} has {} days, not a whole number of years",
                h.start_date(),
                h.len()
            )));
        }
        let offset = day_index(h.start_date());
        for (k, v) in h.values().iter().enumerate() {
            sums[(offset + k) % DAYS_PER_YEAR] += v;
        }
        years += h.len() / DAYS_PER_YEAR;
    }
    let daily: Vec<f64> = sums.iter().map(|s| s / years as f64).collect();

    let half = (window_days / 2) as isize;
    let n = DAYS_PER_YEAR as isize;
    let smoothed = (0..n)
        .map(|d| {
            let total: f64 = (-half..=half).map(|k| daily[(d + k).rem_euclid(n) as usize]).sum();
            total / window_days as f64
        })
        .collect();
    MeanFlowProfile::new(smoothed, window_days)
}

/// Deterministic flow path starting at an anchor day.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProjection {
    anchor_day: usize,
    anchor_flow: f64,
    half_life: f64,
    values: Vec<f64>,
    /// Profile values along the horizon, kept for re-anchoring after a splice.
    mean: Vec<f64>,
}

impl FlowProjection {
    pub fn anchor_day(&self) -> usize {
        self.anchor_day
    }

    pub fn anchor_flow(&self) -> f64 {
        self.anchor_flow
    }

    pub fn half_life(&self) -> f64 {
        self.half_life
    }

    pub fn horizon_days(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Profile value along the horizon (index 0 is the anchor day).
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

fn decay(days: f64, half_life: f64) -> f64 {
    (-days / half_life).exp2()
}

/// Projects flow from `anchor_flow` on `anchor_day` back towards the profile,
/// halving the deviation every `half_life` days.
pub fn project_flow(
    profile: &MeanFlowProfile,
    anchor_day: usize,
    anchor_flow: f64,
    half_life: f64,
    horizon: usize,
) -> Result<FlowProjection> {
    if !(half_life > 0.0) || !half_life.is_finite() {
        return Err(Error::invalid(format!("half-life must be positive, got {half_life}")));
    }
    if horizon == 0 {
        return Err(Error::invalid("projection horizon must be at least one day"));
    }
    if !anchor_flow.is_finite() || anchor_flow < 0.0 {
        return Err(Error::invalid(format!(
            "anchor flow must be non-negative, got {anchor_flow}"
        )));
    }
    let anchor_day = anchor_day % DAYS_PER_YEAR;
    let mean: Vec<f64> = (0..horizon).map(|k| profile.at(anchor_day + k)).collect();
    let deviation = anchor_flow - mean[0];
    let mut values: Vec<f64> = mean
        .iter()
        .enumerate()
        .map(|(k, q)| (deviation * decay(k as f64, half_life) + q).max(0.0))
        .collect();
    values[0] = anchor_flow;
    Ok(FlowProjection {
        anchor_day,
        anchor_flow,
        half_life,
        values,
        mean,
    })
}

/// Replaces the first `days` entries of the projection with `forecast` and
/// restarts the mean reversion from the last forecast value.
///
/// `days` larger than the projection horizon is clamped to the horizon.
pub fn splice_forecast(projection: &FlowProjection, forecast: &[f64], days: usize) -> Result<FlowProjection> {
    let horizon = projection.horizon_days();
    let m = days.min(horizon);
    if forecast.len() < m {
        return Err(Error::invalid(format!(
            "forecast has {} days but {m} are to be spliced",
            forecast.len()
        )));
    }
    if m == 0 {
        return Ok(projection.clone());
    }
    if let Some(v) = forecast[..m].iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::invalid(format!(
            "forecast flow {v} is not a non-negative number"
        )));
    }
    let mut out = projection.clone();
    out.values[..m].copy_from_slice(&forecast[..m]);
    let last = m - 1;
    let deviation = forecast[last] - projection.mean[last];
    for k in m..horizon {
        out.values[k] = (deviation * decay((k - last) as f64, projection.half_life) + projection.mean[k]).max(0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn flat_profile(v: f64) -> MeanFlowProfile {
        MeanFlowProfile::new(vec![v; DAYS_PER_YEAR], 1).unwrap()
    }

    #[test]
    fn parses_two_rows() {
        let s = load_flow_csv("date,flow_m3s\n2015-01-01,3.2\n2015-01-02,3.4\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.start_date(), date(2015, 1, 1));
        assert_eq!(s.values(), &[3.2, 3.4]);
    }

    #[test]
    fn negative_flow_names_line_and_value() {
        let err = load_flow_csv("date,flow_m3s\n2015-01-01,3.2\n2015-01-02,-1.0\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{msg}");
        assert!(msg.contains("-1.0"), "{msg}");
    }

    #[test]
    fn drops_leap_day() {
        let csv = "date,flow_m3s\n2016-02-28,1\n2016-02-29,2\n2016-03-01,3\n";
        let s = load_flow_csv(csv.as_bytes()).unwrap();
        assert_eq!(s.values(), &[1.0, 3.0]);
        let dates: Vec<_> = s.dates().collect();
        assert_eq!(dates, vec![date(2016, 2, 28), date(2016, 3, 1)]);
    }

    #[test]
    fn rejects_gaps_duplicates_and_disorder() {
        let gap = load_flow_csv("date,flow_m3s\n2015-01-01,1\n2015-01-03,1\n".as_bytes()).unwrap_err();
        assert!(matches!(gap, Error::Csv { line: 3, .. }));
        let dup = load_flow_csv("date,flow_m3s\n2015-01-01,1\n2015-01-01,1\n".as_bytes()).unwrap_err();
        assert!(matches!(dup, Error::Csv { line: 3, .. }));
        let back = load_flow_csv("date,flow_m3s\n2015-01-02,1\n2015-01-01,1\n".as_bytes()).unwrap_err();
        assert!(matches!(back, Error::Csv { line: 3, .. }));
        let junk = load_flow_csv("date,flow_m3s\n2015-01-01,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(junk, Error::Csv { line: 2, .. }));
        let header = load_flow_csv("when,q\n2015-01-01,1\n".as_bytes()).unwrap_err();
        assert!(matches!(header, Error::Csv { line: 1, .. }));
    }

    #[test]
    fn csv_round_trip_keeps_series() {
        let s = FlowSeries::new(date(2015, 12, 30), vec![1.0, 2.5, 3.25, 0.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(load_flow_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn day_index_skips_leap_day() {
        assert_eq!(day_index(date(2016, 1, 1)), 0);
        assert_eq!(day_index(date(2016, 2, 28)), 58);
        assert_eq!(day_index(date(2016, 3, 1)), 59);
        assert_eq!(day_index(date(2015, 3, 1)), 59);
        assert_eq!(day_index(date(2016, 12, 31)), 364);
        assert_eq!(day_index(date(2015, 12, 31)), 364);
    }

    #[test]
    fn complete_years_only() {
        let s = FlowSeries::new(date(2015, 12, 31), vec![1.0; 1 + 2 * DAYS_PER_YEAR + 3]).unwrap();
        let years = s.complete_years();
        assert_eq!(years.keys().copied().collect::<Vec<_>>(), vec![2016, 2017]);
    }

    #[test]
    fn mean_profile_of_constant_is_constant() {
        let h = FlowSeries::new(date(2001, 1, 1), vec![7.0; DAYS_PER_YEAR]).unwrap();
        let p = build_mean_profile(&[h], 7).unwrap();
        assert!(p.values().iter().all(|v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn mean_profile_averages_years() {
        let a = FlowSeries::new(date(2001, 1, 1), vec![4.0; DAYS_PER_YEAR]).unwrap();
        let b = FlowSeries::new(date(2002, 1, 1), vec![8.0; DAYS_PER_YEAR]).unwrap();
        let p = build_mean_profile(&[a, b], 1).unwrap();
        assert!(p.values().iter().all(|v| *v == 6.0));
    }

    #[test]
    fn spike_spreads_over_window_and_keeps_mass() {
        // Independent evaluation of the centered circular window definition.
        for spike in [0usize, 1, 200, 363, 364] {
            let mut v = vec![0.0; DAYS_PER_YEAR];
            v[spike] = 365.0;
            let h = FlowSeries::new(date(2001, 1, 1), v).unwrap();
            let p = build_mean_profile(&[h], 7).unwrap();
            let mut expected = vec![0.0; DAYS_PER_YEAR];
            for k in 0..7 {
                expected[(spike + DAYS_PER_YEAR + k - 3) % DAYS_PER_YEAR] = 365.0 / 7.0;
            }
            for (d, (got, want)) in p.values().iter().zip(&expected).enumerate() {
                assert!((got - want).abs() < 1e-12, "spike {spike} day {d}");
            }
            let mass: f64 = p.values().iter().sum();
            assert!((mass - 365.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_profile_errors() {
        assert!(build_mean_profile(&[], 7).is_err());
        let short = FlowSeries::new(date(2001, 1, 1), vec![1.0; 100]).unwrap();
        assert!(build_mean_profile(&[short], 7).is_err());
        let year = FlowSeries::new(date(2001, 1, 1), vec![1.0; DAYS_PER_YEAR]).unwrap();
        assert!(build_mean_profile(&[year], 4).is_err());
    }

    #[test]
    fn mid_year_history_aligns_by_day_index() {
        let mut v = vec![0.0; DAYS_PER_YEAR];
        v[0] = 10.0; // July 1
        let h = FlowSeries::new(date(2001, 7, 1), v).unwrap();
        let p = build_mean_profile(&[h], 1).unwrap();
        assert_eq!(p.at(day_index(date(2001, 7, 1))), 10.0);
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = MeanFlowProfile::new((0..DAYS_PER_YEAR).map(|d| d as f64 * 0.5).collect(), 7).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"day_index,flow_m3s\n"));
        assert_eq!(MeanFlowProfile::read_csv(buf.as_slice(), 7).unwrap(), p);
    }

    #[test]
    fn zero_deviation_reproduces_profile() {
        let p = MeanFlowProfile::new((0..DAYS_PER_YEAR).map(|d| 3.0 + (d % 17) as f64).collect(), 7).unwrap();
        let proj = project_flow(&p, 300, p.at(300), 10.0, 200).unwrap();
        for (k, v) in proj.values().iter().enumerate() {
            assert_eq!(*v, p.at(300 + k));
        }
    }

    #[test]
    fn half_life_halves_deviation() {
        let p = flat_profile(5.0);
        let proj = project_flow(&p, 40, 13.0, 10.0, 30).unwrap();
        assert_eq!(proj.values()[0], 13.0);
        assert!((proj.values()[10] - 5.0 - 4.0).abs() < 1e-12);
        // 8 * 2^-2
        assert!((proj.values()[20] - 5.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_floors_at_zero() {
        let mut v = vec![10.0; DAYS_PER_YEAR];
        v[1] = 0.5;
        let p = MeanFlowProfile::new(v, 1).unwrap();
        let proj = project_flow(&p, 0, 0.0, 10.0, 3).unwrap();
        assert_eq!(proj.values()[1], 0.0);
    }

    #[test]
    fn projection_wraps_past_year_end() {
        let p = MeanFlowProfile::new((0..DAYS_PER_YEAR).map(|d| d as f64).collect(), 1).unwrap();
        let proj = project_flow(&p, 364, 364.0, 10.0, 3).unwrap();
        assert_eq!(proj.values(), &[364.0, 0.0, 1.0]);
        assert!(project_flow(&p, 0, 1.0, 0.0, 3).is_err());
        assert!(project_flow(&p, 0, 1.0, 10.0, 0).is_err());
    }

    #[test]
    fn splice_empty_is_identity() {
        let p = flat_profile(5.0);
        let proj = project_flow(&p, 0, 9.0, 10.0, 20).unwrap();
        assert_eq!(splice_forecast(&proj, &[], 0).unwrap(), proj);
    }

    #[test]
    fn full_splice_is_the_forecast() {
        let p = flat_profile(5.0);
        let actual: Vec<f64> = (0..20).map(|k| 1.0 + k as f64 * 0.37).collect();
        let proj = project_flow(&p, 0, actual[0], 10.0, 20).unwrap();
        let spliced = splice_forecast(&proj, &actual, 20).unwrap();
        assert_eq!(spliced.values(), actual.as_slice());
        let longer = splice_forecast(&proj, &[actual.clone(), vec![3.0; 5]].concat(), 25).unwrap();
        assert_eq!(longer.values(), actual.as_slice());
    }

    #[test]
    fn one_day_splice_reanchors_reversion() {
        let p = flat_profile(5.0);
        let proj = project_flow(&p, 100, 5.0, 10.0, 30).unwrap();
        let spliced = splice_forecast(&proj, &[11.0], 1).unwrap();
        assert_eq!(spliced.values()[0], 11.0);
        // Reversion restarts at index 0, so ten days later (the 11th day)
        // the +6 deviation has halved.
        assert!((spliced.values()[10] - 5.0 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn short_forecast_is_rejected() {
        let p = flat_profile(5.0);
        let proj = project_flow(&p, 0, 5.0, 10.0, 30).unwrap();
        assert!(splice_forecast(&proj, &[1.0, 2.0], 3).is_err());
        assert!(splice_forecast(&proj, &[-1.0], 1).is_err());
    }
}
