//! Intel-lab style sensor logs to a network plus functional dataset.
//!
//! Readings are whitespace-separated lines
//! `date time epoch moteid temperature humidity light voltage`.
//! They are cleaned, averaged over fixed windows, gap-filled by KNN over
//! sensors and smoothed onto B-spline bases for `HUM ~ TEMP + LUX`.
//! Link quality `p` between motes becomes the edge weight `-ln p`.

use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{smooth_curve, BasisError, BasisSystem};
use crate::graph::{GraphError, Network};
use crate::model::{Covariate, FunctionalDataset, ModelError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum IngestError {
    #[error("empty time range: {0}")]
    EmptyRange(String),
    #[error("only {found} sensors observe {variable} in window {window} (sensor {sensor}), need {needed}")]
    InsufficientNeighbors { variable: &'static str, sensor: u32, window: usize, found: usize, needed: usize },
    #[error("invalid reception probability {p} for pair ({i}, {j})")]
    InvalidProbability { i: u32, j: u32, p: f64 },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("series still has missing values ({0})")]
    Incomplete(String),
    #[error("no sensors left")]
    NoSensors,
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub timestamp: NaiveDateTime,
    pub epoch: u64,
    pub sensor: u32,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    /// log(Lux).
    pub light: Option<f64>,
    pub voltage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedReadings {
    pub readings: Vec<SensorReading>,
    pub rejects: Vec<Reject>,
}

const TIMESTAMP_FORMATS: [&str; 2] = ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M"];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_line(line: &str) -> Result<SensorReading, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(format!("expected 8 fields, found {}", fields.len()));
    }
    let timestamp =
        parse_timestamp(&format!("{} {}", fields[0], fields[1])).ok_or_else(|| format!("bad timestamp '{} {}'", fields[0], fields[1]))?;
    let epoch = fields[2].parse::<u64>().map_err(|_| format!("bad epoch '{}'", fields[2]))?;
    let sensor = fields[3].parse::<u32>().map_err(|_| format!("bad mote id '{}'", fields[3]))?;
    let num = |idx: usize, name: &str| -> Result<f64, String> {
        fields[idx]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("non-numeric {name} '{}'", fields[idx]))
    };
    Ok(SensorReading {
        timestamp,
        epoch,
        sensor,
        temperature: Some(num(4, "temperature")?),
        humidity: Some(num(5, "humidity")?),
        light: Some(num(6, "light")?),
        voltage: Some(num(7, "voltage")?),
    })
}

/// Parses every nonblank line; malformed lines become rejects with 1-based line numbers.
pub fn parse_readings<R: BufRead>(input: R) -> Result<ParsedReadings, IngestError> {
    let mut out = ParsedReadings::default();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(r) => out.readings.push(r),
            Err(reason) => out.rejects.push(Reject { line: idx + 1, reason }),
        }
    }
    Ok(out)
}

/// Physical plausibility ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRules {
    pub humidity: (f64, f64),
    pub temperature: (f64, f64),
    /// Readings outside this range flag their window but are kept.
    pub voltage: (f64, f64),
}

impl Default for AnomalyRules {
    fn default() -> Self {
        Self { humidity: (0.0, 100.0), temperature: (-10.0, 60.0), voltage: (2.0, 3.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_minutes: u32,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub allowlist: Option<Vec<u32>>,
    pub rules: AnomalyRules,
    /// Apply `ln(1 + x)` to the light column (raw-Lux files).
    pub light_log1p: bool,
}

/// 21:00 on 2004-03-01 to 21:00 on 2004-03-02.
pub fn default_range() -> (NaiveDateTime, NaiveDateTime) {
    let day = |d| NaiveDate::from_ymd_opt(2004, 3, d).and_then(|x| x.and_hms_opt(21, 0, 0)).expect("valid date");
    (day(1), day(2))
}

impl Default for WindowConfig {
    fn default() -> Self {
        let (start, end) = default_range();
        Self { window_minutes: 15, start, end, allowlist: None, rules: AnomalyRules::default(), light_log1p: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Temperature,
    Humidity,
    Light,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::Temperature, Variable::Humidity, Variable::Light];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Temperature => "temperature",
            Variable::Humidity => "humidity",
            Variable::Light => "light",
        }
    }
}

/// Window means per sensor on a regular grid; `None` marks a missing window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSeries {
    pub start: NaiveDateTime,
    pub window_minutes: u32,
    pub n_windows: usize,
    /// Ascending sensor ids; row `r` of every table belongs to `sensors[r]`.
    pub sensors: Vec<u32>,
    pub temperature: Vec<Vec<Option<f64>>>,
    pub humidity: Vec<Vec<Option<f64>>>,
    pub light: Vec<Vec<Option<f64>>>,
    pub voltage_flag: Vec<Vec<bool>>,
}

impl WindowedSeries {
    pub fn values(&self, v: Variable) -> &Vec<Vec<Option<f64>>> {
        match v {
            Variable::Temperature => &self.temperature,
            Variable::Humidity => &self.humidity,
            Variable::Light => &self.light,
        }
    }

    fn values_mut(&mut self, v: Variable) -> &mut Vec<Vec<Option<f64>>> {
        match v {
            Variable::Temperature => &mut self.temperature,
            Variable::Humidity => &mut self.humidity,
            Variable::Light => &mut self.light,
        }
    }

    pub fn n_missing(&self) -> usize {
        Variable::ALL.iter().map(|&v| self.values(v).iter().flatten().filter(|x| x.is_none()).count()).sum()
    }

    pub fn window_start(&self, w: usize) -> NaiveDateTime {
        self.start + Duration::minutes(i64::from(self.window_minutes) * w as i64)
    }

    /// Window positions mapped onto `[0, 1]`.
    pub fn unit_grid(&self) -> Vec<f64> {
        if self.n_windows == 1 {
            return vec![0.0];
        }
        (0..self.n_windows).map(|w| w as f64 / (self.n_windows - 1) as f64).collect()
    }

    /// Keeps only the sensor rows in `keep` (by row index, ascending).
    fn retain_rows(&mut self, keep: &[usize]) {
        let pick = |t: &Vec<Vec<Option<f64>>>| keep.iter().map(|&r| t[r].clone()).collect::<Vec<_>>();
        self.temperature = pick(&self.temperature);
        self.humidity = pick(&self.humidity);
        self.light = pick(&self.light);
        self.voltage_flag = keep.iter().map(|&r| self.voltage_flag[r].clone()).collect();
        self.sensors = keep.iter().map(|&r| self.sensors[r]).collect();
    }
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

/// Cleans readings and averages them over regular windows in `[start, end)`.
pub fn clean_and_window(readings: &[SensorReading], cfg: &WindowConfig) -> Result<WindowedSeries, IngestError> {
    if cfg.window_minutes == 0 {
        return Err(IngestError::EmptyRange("window length must be positive".into()));
    }
    let span = (cfg.end - cfg.start).num_seconds();
    if span <= 0 {
        return Err(IngestError::EmptyRange(format!("{} is not after {}", cfg.end, cfg.start)));
    }
    let wsec = i64::from(cfg.window_minutes) * 60;
    let n_windows = ((span + wsec - 1) / wsec) as usize;

    let mut sensors: Vec<u32> = match &cfg.allowlist {
        Some(list) => list.clone(),
        None => readings.iter().map(|r| r.sensor).collect(),
    };
    sensors.sort_unstable();
    sensors.dedup();
    let row_of: BTreeMap<u32, usize> = sensors.iter().enumerate().map(|(r, &s)| (s, r)).collect();

    let n = sensors.len();
    // (sum, count) accumulators per variable
    let mut acc = vec![vec![vec![(0.0_f64, 0_usize); n_windows]; n]; 3];
    let mut voltage_flag = vec![vec![false; n_windows]; n];
    for r in readings {
        let Some(&row) = row_of.get(&r.sensor) else { continue };
        let offset = (r.timestamp - cfg.start).num_milliseconds();
        if offset < 0 || offset >= span * 1000 {
            continue;
        }
        let w = (offset / (wsec * 1000)) as usize;
        let light = r.light.map(|l| if cfg.light_log1p { l.ln_1p() } else { l });
        let vals = [
            r.temperature.filter(|&t| in_range(t, cfg.rules.temperature)),
            r.humidity.filter(|&h| in_range(h, cfg.rules.humidity)),
            light.filter(|l| l.is_finite()),
        ];
        for (v, val) in vals.into_iter().enumerate() {
            if let Some(x) = val {
                let cell = &mut acc[v][row][w];
                cell.0 += x;
                cell.1 += 1;
            }
        }
        if r.voltage.is_some_and(|v| !in_range(v, cfg.rules.voltage)) {
            voltage_flag[row][w] = true;
        }
    }
    let mut tables = acc.into_iter().map(|rows| {
        rows.into_iter()
            .map(|cells| cells.into_iter().map(|(s, c)| (c > 0).then(|| s / c as f64)).collect())
            .collect::<Vec<Vec<Option<f64>>>>()
    });
    Ok(WindowedSeries {
        start: cfg.start,
        window_minutes: cfg.window_minutes,
        n_windows,
        sensors,
        temperature: tables.next().unwrap_or_default(),
        humidity: tables.next().unwrap_or_default(),
        light: tables.next().unwrap_or_default(),
        voltage_flag,
    })
}

/// One synthetic reading per observed window at the window start.
///
/// Re-windowing the result with the same window settings reproduces the series.
pub fn series_to_readings(series: &WindowedSeries) -> Vec<SensorReading> {
    let mut out = Vec::new();
    for (row, &sensor) in series.sensors.iter().enumerate() {
        for w in 0..series.n_windows {
            let t = series.temperature[row][w];
            let h = series.humidity[row][w];
            let l = series.light[row][w];
            let flag = series.voltage_flag[row][w];
            if t.is_none() && h.is_none() && l.is_none() && !flag {
                continue;
            }
            out.push(SensorReading {
                timestamp: series.window_start(w),
                epoch: w as u64,
                sensor,
                temperature: t,
                humidity: h,
                light: l,
                voltage: flag.then_some(0.0),
            });
        }
    }
    out
}

/// Drops sensors whose observed share of windows is below `min_coverage`
/// for any variable. Returns the dropped ids.
pub fn drop_sparse_sensors(series: &mut WindowedSeries, min_coverage: f64) -> Vec<u32> {
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (row, &s) in series.sensors.iter().enumerate() {
        let worst = Variable::ALL
            .iter()
            .map(|&v| {
                let cells = &series.values(v)[row];
                cells.iter().filter(|c| c.is_some()).count() as f64 / cells.len().max(1) as f64
            })
            .fold(1.0, f64::min);
        if worst >= min_coverage {
            keep.push(row);
        } else {
            dropped.push(s);
        }
    }
    series.retain_rows(&keep);
    dropped
}

/// NaN-aware Euclidean distance over co-observed windows, scaled up to the
/// full window count; `None` when nothing is co-observed.
fn nan_euclidean(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (x, y) in a.iter().zip(b) {
        if let (Some(x), Some(y)) = (x, y) {
            sum += (x - y) * (x - y);
            shared += 1;
        }
    }
    (shared > 0).then(|| (sum * a.len() as f64 / shared as f64).sqrt())
}

/// Fills every missing window with the mean of the `k` nearest sensors that
/// observe it. Observed values are never changed.
pub fn knn_impute(series: &WindowedSeries, k: usize) -> Result<WindowedSeries, IngestError> {
    if k == 0 {
        return Err(IngestError::Incomplete("k must be at least 1".into()));
    }
    let mut out = series.clone();
    for v in Variable::ALL {
        let table = series.values(v);
        let filled: Vec<Result<Vec<Option<f64>>, IngestError>> = (0..table.len())
            .into_par_iter()
            .map(|row| {
                let mine = &table[row];
                if mine.iter().all(Option::is_some) {
                    return Ok(mine.clone());
                }
                let mut dists: Vec<(f64, usize)> = (0..table.len())
                    .filter(|&o| o != row)
                    .filter_map(|o| nan_euclidean(mine, &table[o]).map(|d| (d, o)))
                    .collect();
                dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut cells = mine.clone();
                for (w, cell) in cells.iter_mut().enumerate() {
                    if cell.is_some() {
                        continue;
                    }
                    let donors: Vec<f64> = dists.iter().filter_map(|&(_, o)| table[o][w]).take(k).collect();
                    if donors.len() < k {
                        return Err(IngestError::InsufficientNeighbors {
                            variable: v.name(),
                            sensor: series.sensors[row],
                            window: w,
                            found: donors.len(),
                            needed: k,
                        });
                    }
                    *cell = Some(donors.iter().sum::<f64>() / k as f64);
                }
                Ok(cells)
            })
            .collect();
        *out.values_mut(v) = filled.into_iter().collect::<Result<_, _>>()?;
    }
    Ok(out)
}

/// One directed link-quality measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkProbability {
    pub from: u32,
    pub to: u32,
    pub p: f64,
}

/// Parses `i j p` lines (whitespace separated, `#` comments allowed).
pub fn parse_connectivity<R: BufRead>(input: R) -> Result<Vec<LinkProbability>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        let bad = |reason: String| IngestError::Malformed { line: idx + 1, reason };
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        let from = f[0].parse().map_err(|_| bad(format!("bad sensor id '{}'", f[0])))?;
        let to = f[1].parse().map_err(|_| bad(format!("bad sensor id '{}'", f[1])))?;
        let p = f[2].parse().map_err(|_| bad(format!("bad probability '{}'", f[2])))?;
        out.push(LinkProbability { from, to, p });
    }
    Ok(out)
}

/// Parses `id x y` mote location lines.
pub fn parse_coordinates<R: BufRead>(input: R) -> Result<BTreeMap<u32, Vec<f64>>, IngestError> {
    let mut out = BTreeMap::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        let bad = |reason: String| IngestError::Malformed { line: idx + 1, reason };
        if f.len() < 2 {
            return Err(bad("expected an id followed by coordinates".into()));
        }
        let id = f[0].parse().map_err(|_| bad(format!("bad sensor id '{}'", f[0])))?;
        let xs = f[1..]
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad("non-numeric coordinate".into()))?;
        out.insert(id, xs);
    }
    Ok(out)
}

/// `f = -ln p` per unordered pair, averaging the two directions when both exist.
///
/// Self pairs are skipped. With `drop_zero`, pairs with `p = 0` are omitted
/// instead of rejected.
pub fn connectivity_to_weights(table: &[LinkProbability], drop_zero: bool) -> Result<Vec<(u32, u32, f64)>, IngestError> {
    let mut pairs: BTreeMap<(u32, u32), Vec<f64>> = BTreeMap::new();
    for l in table {
        if l.p == 0.0 && drop_zero {
            continue;
        }
        if !(l.p > 0.0 && l.p <= 1.0) {
            return Err(IngestError::InvalidProbability { i: l.from, j: l.to, p: l.p });
        }
        if l.from == l.to {
            continue;
        }
        let key = (l.from.min(l.to), l.from.max(l.to));
        pairs.entry(key).or_default().push(0.0 - l.p.ln());
    }
    Ok(pairs.into_iter().map(|((i, j), fs)| (i, j, fs.iter().sum::<f64>() / fs.len() as f64)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub n_basis: usize,
    pub order: usize,
    pub penalty: f64,
    pub include_intercept: bool,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self { n_basis: 21, order: 4, penalty: 0.0, include_intercept: true }
    }
}

/// Network, dataset (`HUM ~ TEMP + LUX`) and optional coordinates for the retained sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct LabData {
    pub sensors: Vec<u32>,
    pub network: Network,
    pub dataset: FunctionalDataset,
    pub coordinates: Option<Vec<Vec<f64>>>,
}

pub fn build_lab_dataset(
    series: &WindowedSeries,
    connectivity: &[(u32, u32, f64)],
    cfg: &LabConfig,
    coordinates: Option<&BTreeMap<u32, Vec<f64>>>,
) -> Result<LabData, IngestError> {
    if series.sensors.is_empty() {
        return Err(IngestError::NoSensors);
    }
    if series.n_missing() > 0 {
        return Err(IngestError::Incomplete(format!("{} missing windows", series.n_missing())));
    }
    let basis = BasisSystem::new((0.0, 1.0), cfg.n_basis, cfg.order)?;
    let grid = series.unit_grid();
    let smooth_table = |v: Variable| -> Result<DMatrix<f64>, IngestError> {
        let table = series.values(v);
        let rows: Vec<Result<Vec<f64>, BasisError>> = table
            .par_iter()
            .map(|cells| {
                let samples: Vec<(f64, f64)> = grid.iter().zip(cells).map(|(&t, c)| (t, c.unwrap_or(f64::NAN))).collect();
                smooth_curve(&samples, &basis, cfg.penalty).map(|c| c.coeffs().iter().copied().collect())
            })
            .collect();
        let mut m = DMatrix::zeros(table.len(), cfg.n_basis);
        for (r, row) in rows.into_iter().enumerate() {
            m.row_mut(r).copy_from_slice(&row?);
        }
        Ok(m)
    };
    let hum = smooth_table(Variable::Humidity)?;
    let temp = smooth_table(Variable::Temperature)?;
    let lux = smooth_table(Variable::Light)?;
    let dataset = FunctionalDataset::new(
        basis.clone(),
        hum,
        vec![Covariate { basis: basis.clone(), coeffs: temp }, Covariate { basis, coeffs: lux }],
        cfg.include_intercept,
    )?;

    let index: BTreeMap<u32, usize> = series.sensors.iter().enumerate().map(|(r, &s)| (s, r)).collect();
    let edges: Vec<(usize, usize, f64)> = connectivity
        .iter()
        .filter_map(|&(i, j, w)| Some((*index.get(&i)?, *index.get(&j)?, w)))
        .collect();
    let network = Network::new(series.sensors.len(), &edges)?;

    let coordinates = match coordinates {
        None => None,
        Some(map) => Some(
            series
                .sensors
                .iter()
                .map(|s| map.get(s).cloned().ok_or_else(|| IngestError::Incomplete(format!("no coordinates for sensor {s}"))))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    Ok(LabData { sensors: series.sensors.clone(), network, dataset, coordinates })
}
