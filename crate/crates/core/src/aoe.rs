//! Downwind area-of-effect scoring.
//!
//! The centerpiece of the crate: every site emits a seven-day streamline that
//! drifts with the daily wind field, and every day along the streamline
//! deposits an exponentially decaying score on the sites inside a growing
//! search cone. Summing deposits by arrival day and averaging over calendar
//! months yields the sender × receiver × month exposure matrix the
//! estimation and accounting layers consume.
//!
//! The module is organized along the pipeline:
//!
//! 1. [`ScoreParams`] — decay constants, search geometry, presets;
//! 2. [`decay_score`] / [`score_receiver`] — the scoring kernel for one
//!    (position, receiver) pair at one step;
//! 3. [`run_streamline`] / [`compute_raw_scores`] — the daily walk, wired to
//!    the rasterized wind grids, parallel over (sender, day) tasks but with
//!    canonically ordered output so thread count cannot change a byte;
//! 4. [`aggregate_daily`] / [`aggregate_monthly`] — arrival-day sums and
//!    calendar-month means with zero-fill;
//! 5. [`compute_bins`] / [`WindBins`] — decile bins over positive monthly
//!    scores (plus the `calm` bin for exact zeros);
//! 6. matrix/metadata persistence and the heatmap export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::Month;
use crate::geo::{central_angle_deg, meters_per_degree_lon, LonLat};
use crate::ingest::CityRegistry;
use crate::numeric::{fmt_out, sha256_hex};
use crate::windfield::{DailyWindGrid, GridSpec};

/// Errors from scoring, aggregation, binning, and matrix persistence.
#[derive(Debug, Error)]
pub enum AoeError {
    #[error("unknown sender id {0:?}")]
    UnknownSender(String),
    #[error("unknown location id {0:?} in matrix file")]
    UnknownId(String),
    #[error("no wind field for {0}")]
    MissingField(NaiveDate),
    #[error("arrival day {0} falls outside the aggregation period")]
    ArrivalOutsidePeriod(NaiveDate),
    #[error("need at least 10 positive monthly scores to cut deciles, found {found}")]
    InsufficientPositiveScores { found: usize },
    #[error("cannot bin negative score {0}")]
    NegativeScore(f64),
    #[error("invalid score parameters: {0}")]
    InvalidParams(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed csv in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("schema error: {0}")]
    Schema(String),
}

type Result<T> = std::result::Result<T, AoeError>;

/// Seconds a parcel drifts between daily wind observations.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Decay constants and search geometry for the scoring kernel.
///
/// The per-step score for a receiver at great-circle distance `dist` (degrees
/// of arc) and off-axis offset `offaxis` (degrees, see [`score_receiver`])
/// when the search radius is `rad` is
///
/// ```text
/// exp(-alpha·rad - beta·offaxis - gamma·dist)
/// ```
///
/// The search radius starts at `rad0` degrees and grows by `rad_inc` per
/// step; receivers farther than the radius, or more than `max_offaxis`
/// radians off the wind axis, receive a hard zero (no deposit at all).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreParams {
    /// Search-radius decay (per degree of radius).
    pub alpha: f64,
    /// Off-axis decay (per degree of normal offset).
    pub beta: f64,
    /// Distance decay (per degree of great-circle separation).
    pub gamma: f64,
    /// Initial search radius, degrees of arc.
    pub rad0: f64,
    /// Radius growth per step, degrees of arc.
    pub rad_inc: f64,
    /// Angular cutoff between wind vector and displacement, radians.
    pub max_offaxis: f64,
    /// Number of daily steps per streamline.
    pub n_steps: u32,
    /// Wind speeds below this (m/s) count as calm: the step deposits nothing
    /// and the parcel holds its position, but the walk continues.
    pub calm_speed: f64,
}

impl Default for ScoreParams {
    /// Default calibration: the re-estimated decay constants with the wide
    /// (0.4π rad) angular cutoff.
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.49,
            gamma: 0.23,
            rad0: 2.8,
            rad_inc: 0.2,
            max_offaxis: 0.4 * std::f64::consts::PI,
            n_steps: 7,
            calm_speed: 1e-6,
        }
    }
}

impl ScoreParams {
    /// Re-estimated decay constants with the narrow 0.4 rad angular cutoff.
    pub fn appendix() -> Self {
        Self {
            max_offaxis: 0.4,
            ..Self::default()
        }
    }

    /// Original headline calibration: decay constants {0.7, 0.5, 0.2} with
    /// the wide 0.4π rad cutoff.
    pub fn main_text() -> Self {
        Self {
            alpha: 0.7,
            beta: 0.5,
            gamma: 0.2,
            ..Self::default()
        }
    }

    /// Look up a named preset (`"appendix"` or `"main-text"`).
    pub fn from_preset(name: &str) -> Option<Self> {
        match name {
            "appendix" => Some(Self::appendix()),
            "main-text" => Some(Self::main_text()),
            _ => None,
        }
    }

    /// Reject non-finite or geometrically meaningless parameter sets.
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, f64); 6] = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("rad0", self.rad0),
            ("rad_inc", self.rad_inc),
            ("calm_speed", self.calm_speed),
        ];
        for (name, v) in checks {
            if !v.is_finite() || v < 0.0 {
                return Err(AoeError::InvalidParams(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.rad0 <= 0.0 {
            return Err(AoeError::InvalidParams(format!(
                "rad0 must be positive, got {}",
                self.rad0
            )));
        }
        if !self.max_offaxis.is_finite()
            || self.max_offaxis <= 0.0
            || self.max_offaxis > std::f64::consts::PI
        {
            return Err(AoeError::InvalidParams(format!(
                "max_offaxis must lie in (0, pi], got {}",
                self.max_offaxis
            )));
        }
        if self.n_steps == 0 {
            return Err(AoeError::InvalidParams(
                "n_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Search radius (degrees) at step `t`.
    pub fn radius_at(&self, step: u32) -> f64 {
        self.rad0 + self.rad_inc * f64::from(step)
    }
}

// ---------------------------------------------------------------------------
// Scoring kernel
// ---------------------------------------------------------------------------

/// The bare decay kernel `exp(-alpha·rad - beta·offaxis - gamma·dist)`.
///
/// All three arguments are in degrees. This is strictly decreasing in each
/// argument whenever the corresponding decay constant is positive, and always
/// lies in `(0, 1]` for non-negative arguments.
pub fn decay_score(params: &ScoreParams, rad: f64, offaxis: f64, dist: f64) -> f64 {
    (-params.alpha * rad - params.beta * offaxis - params.gamma * dist).exp()
}

/// Score one receiver against the parcel at `pos` under wind `(u, v)` m/s
/// with the search radius at `rad` degrees.
///
/// Returns `None` (a hard zero) when the wind is calm, the receiver lies
/// beyond the search radius (`dist > rad`, great-circle degrees), or the true
/// angle between the wind vector and the lon/lat displacement exceeds
/// `max_offaxis`. Both boundaries are inclusive: a receiver exactly on the
/// radius or exactly at the cutoff angle still scores.
///
/// The off-axis decay argument is `|n̂ · d|` where `n̂ = (v, -u)/‖w‖` is the
/// unit normal to the wind and `d = (Δlon, Δlat)` is the plain-degree
/// displacement; a receiver coincident with the parcel is on-axis by
/// convention (angle 0, offset 0).
pub fn score_receiver(
    params: &ScoreParams,
    pos: LonLat,
    rad: f64,
    wind: (f64, f64),
    receiver: LonLat,
) -> Option<f64> {
    let (u, v) = wind;
    let speed = u.hypot(v);
    if speed < params.calm_speed {
        return None;
    }
    let dist = central_angle_deg(pos, receiver);
    if dist > rad {
        return None;
    }
    let dlon = receiver.lon - pos.lon;
    let dlat = receiver.lat - pos.lat;
    let dnorm = dlon.hypot(dlat);
    let offaxis = if dnorm == 0.0 {
        0.0
    } else {
        let cos_angle = ((u * dlon + v * dlat) / (speed * dnorm)).clamp(-1.0, 1.0);
        if cos_angle.acos() > params.max_offaxis {
            return None;
        }
        ((v * dlon - u * dlat) / speed).abs()
    };
    Some(decay_score(params, rad, offaxis, dist))
}

/// Advect a parcel one day: both displacement components are the day's
/// travel in meters divided by the local length of one degree of longitude.
///
/// Exactly zero wind leaves the position bit-for-bit unchanged.
pub fn advance_position(pos: LonLat, wind: (f64, f64)) -> LonLat {
    let (u, v) = wind;
    if u == 0.0 && v == 0.0 {
        return pos;
    }
    let deg_m = meters_per_degree_lon(pos.lat);
    LonLat::new(
        pos.lon + SECONDS_PER_DAY * u / deg_m,
        pos.lat + SECONDS_PER_DAY * v / deg_m,
    )
}

// ---------------------------------------------------------------------------
// Streamlines
// ---------------------------------------------------------------------------

/// One deposit: sender's streamline launched on `day` reached `receiver` at
/// step `step` (so the score arrives on calendar day `day + step`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawScore {
    pub sender: usize,
    pub receiver: usize,
    /// Emission day (streamline launch date).
    pub day: NaiveDate,
    pub step: u32,
    pub value: f64,
}

impl RawScore {
    /// Calendar day the deposit lands on.
    pub fn arrival(&self) -> NaiveDate {
        self.day + Days::new(u64::from(self.step))
    }
}

/// Walk one streamline: start at `start` on `day`, sample the wind grid each
/// step, deposit scores on `receivers`, and advect.
///
/// Termination and edge rules:
/// * a day with no grid truncates the walk (later grids are unreachable);
/// * a position outside the grid terminates the walk (the parcel left the
///   observed region);
/// * a calm step (`‖w‖ < calm_speed`) deposits nothing and holds position,
///   but the walk continues and the search radius keeps growing.
///
/// `receivers` carries `(index, location)` pairs; the sender itself is a
/// legitimate receiver (self-pairs stay in the matrix).
pub fn run_streamline(
    params: &ScoreParams,
    grids: &BTreeMap<NaiveDate, DailyWindGrid>,
    sender: usize,
    start: LonLat,
    day: NaiveDate,
    receivers: &[(usize, LonLat)],
) -> Vec<RawScore> {
    let mut out = Vec::new();
    let mut pos = start;
    for step in 0..params.n_steps {
        let date = day + Days::new(u64::from(step));
        let Some(grid) = grids.get(&date) else {
            break;
        };
        let Some(wind) = grid.sample_at(pos) else {
            break;
        };
        let speed = wind.0.hypot(wind.1);
        if speed < params.calm_speed {
            continue;
        }
        let rad = params.radius_at(step);
        for &(receiver, loc) in receivers {
            if let Some(value) = score_receiver(params, pos, rad, wind, loc) {
                out.push(RawScore {
                    sender,
                    receiver,
                    day,
                    step,
                    value,
                });
            }
        }
        pos = advance_position(pos, wind);
    }
    out
}

/// Launch one streamline per (sender, grid day) and collect every deposit.
///
/// Parallel over tasks; the result is sorted by `(sender, receiver, day,
/// step)` before it is returned, so downstream accumulation visits deposits
/// in one canonical order regardless of how many threads ran the walks. Each
/// key is unique (a streamline deposits at most once per receiver per step),
/// so the sort has no equal-key ambiguity.
pub fn compute_raw_scores(
    params: &ScoreParams,
    registry: &CityRegistry,
    grids: &BTreeMap<NaiveDate, DailyWindGrid>,
) -> Vec<RawScore> {
    let receivers: Vec<(usize, LonLat)> = registry
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.loc))
        .collect();
    let tasks: Vec<(usize, NaiveDate)> = (0..registry.len())
        .flat_map(|s| grids.keys().map(move |&d| (s, d)))
        .collect();
    let mut raw: Vec<RawScore> = tasks
        .par_iter()
        .flat_map_iter(|&(sender, day)| {
            run_streamline(
                params,
                grids,
                sender,
                registry.city(sender).loc,
                day,
                &receivers,
            )
        })
        .collect();
    raw.sort_unstable_by_key(|r| (r.sender, r.receiver, r.day, r.step));
    raw
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Daily exposure: total score arriving at `receiver` from `sender` on a day.
pub type DailyScores = BTreeMap<(usize, usize, NaiveDate), f64>;

/// Monthly exposure: mean daily score over a calendar month.
pub type MonthlyScores = BTreeMap<(usize, usize, Month), f64>;

/// Sum deposits by `(sender, receiver, arrival day)`.
///
/// `raw` is consumed in its given order, so feeding the canonical order from
/// [`compute_raw_scores`] makes the sums reproducible to the bit.
pub fn aggregate_daily(raw: &[RawScore]) -> DailyScores {
    let mut out = DailyScores::new();
    for r in raw {
        *out.entry((r.sender, r.receiver, r.arrival())).or_insert(0.0) += r.value;
    }
    out
}

/// Average daily sums over calendar months and zero-fill.
///
/// Every pair that ever received a deposit gets one row per month of the
/// period (zero when nothing arrived that month — such months mean calm or
/// out-of-cone winds, which is information, not missing data). The monthly
/// value is the day-sum divided by the month's calendar length. A deposit
/// arriving outside `[start, end]` is an error: the caller's period does not
/// cover the wind data it scored.
pub fn aggregate_monthly(daily: &DailyScores, start: Month, end: Month) -> Result<MonthlyScores> {
    if start > end {
        return Err(AoeError::InvalidParams(format!(
            "aggregation period starts {start} after end {end}"
        )));
    }
    let mut sums: BTreeMap<(usize, usize, Month), f64> = BTreeMap::new();
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (&(sender, receiver, day), &value) in daily {
        let month = Month::of(day);
        if month < start || month > end {
            return Err(AoeError::ArrivalOutsidePeriod(day));
        }
        *sums.entry((sender, receiver, month)).or_insert(0.0) += value;
        pairs.insert((sender, receiver));
    }
    let months = start.through(end);
    let mut out = MonthlyScores::new();
    for &(sender, receiver) in &pairs {
        for &month in &months {
            let sum = sums.get(&(sender, receiver, month)).copied().unwrap_or(0.0);
            out.insert((sender, receiver, month), sum / f64::from(month.days()));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Decile bins
// ---------------------------------------------------------------------------

/// Bin labels, weakest to strongest: index 0 is the calm bin (exact zeros),
/// index 1 ("10th") the weakest positive decile, index 10 ("1st") the
/// strongest.
pub const BIN_LABELS: [&str; 11] = [
    "calm", "10th", "9th", "8th", "7th", "6th", "5th", "4th", "3rd", "2nd", "1st",
];

/// Nine ascending interior decile cuts over the positive monthly scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindBins {
    pub cuts: Vec<f64>,
}

/// Linear-interpolation quantile (type 7: `h = (n-1)p`), the convention the
/// decile cuts are defined in. `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile level out of range");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cut decile bins from the pooled positive scores of a monthly matrix.
///
/// Zeros (the calm bin) are excluded from the pool. Requires at least 10
/// positive entries; negative entries are rejected outright.
pub fn compute_bins(monthly: &MonthlyScores) -> Result<WindBins> {
    let mut positive = Vec::new();
    for &v in monthly.values() {
        if v < 0.0 {
            return Err(AoeError::NegativeScore(v));
        }
        if v > 0.0 {
            positive.push(v);
        }
    }
    if positive.len() < 10 {
        return Err(AoeError::InsufficientPositiveScores {
            found: positive.len(),
        });
    }
    positive.sort_unstable_by(f64::total_cmp);
    let cuts = (1..=9)
        .map(|k| quantile_type7(&positive, f64::from(k) / 10.0))
        .collect();
    Ok(WindBins { cuts })
}

impl WindBins {
    /// Bin index for a monthly score: 0 for exact zero (calm), then interval
    /// `(cut[k-1], cut[k]]` maps to index `k+1`'s… concretely, a score equal
    /// to a cut goes to the weaker bin (ties to lower), and anything above
    /// the top cut is bin 10 ("1st"). Negative scores are an error.
    pub fn assign(&self, score: f64) -> Result<usize> {
        if score < 0.0 || score.is_nan() {
            return Err(AoeError::NegativeScore(score));
        }
        if score == 0.0 {
            return Ok(0);
        }
        for (k, &cut) in self.cuts.iter().enumerate() {
            if score <= cut {
                return Ok(k + 1);
            }
        }
        Ok(10)
    }

    /// Human label for a bin index from [`assign`](Self::assign).
    pub fn label(index: usize) -> &'static str {
        BIN_LABELS[index]
    }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Companion metadata written next to a monthly matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    /// Library version that produced the matrix.
    pub version: String,
    pub params: ScoreParams,
    pub grid: GridSpec,
    /// Aggregation period, inclusive.
    pub period: [Month; 2],
    /// Decile cuts from [`compute_bins`] over this matrix.
    pub cuts: Vec<f64>,
    /// SHA-256 of the matrix CSV bytes.
    pub matrix_sha256: String,
}

/// Write a monthly matrix as `sender_id,receiver_id,month,score` (sorted by
/// key) and return the SHA-256 of the written bytes.
///
/// Scores are rendered in shortest round-trip decimal form, so loading the
/// file reproduces the exact binary values that were written — bin
/// assignment against the metadata cuts cannot drift across a save/load
/// cycle.
pub fn write_monthly_matrix<P: AsRef<Path>>(
    monthly: &MonthlyScores,
    registry: &CityRegistry,
    path: P,
) -> Result<String> {
    let mut out = String::from("sender_id,receiver_id,month,score\n");
    for (&(sender, receiver, month), &value) in monthly {
        let _ = writeln!(
            out,
            "{},{},{month},{value}",
            registry.city(sender).id,
            registry.city(receiver).id
        );
    }
    let path = path.as_ref();
    std::fs::write(path, &out).map_err(|source| AoeError::Write {
        path: path.display().to_string(),
        source,
    })?;
    Ok(sha256_hex(out.as_bytes()))
}

/// Load a monthly matrix, resolving ids against `registry`.
pub fn load_monthly_matrix<P: AsRef<Path>>(
    path: P,
    registry: &CityRegistry,
) -> Result<MonthlyScores> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| AoeError::Read {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| AoeError::Csv {
            path: display.clone(),
            source,
        })?
        .clone();
    let expected = ["sender_id", "receiver_id", "month", "score"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(AoeError::Schema(format!(
            "{display}: expected header {expected:?}, found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = MonthlyScores::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| AoeError::Csv {
            path: display.clone(),
            source,
        })?;
        let row = i + 2; // 1-based, after the header
        let sender = registry
            .index_of(&record[0])
            .ok_or_else(|| AoeError::UnknownId(record[0].to_string()))?;
        let receiver = registry
            .index_of(&record[1])
            .ok_or_else(|| AoeError::UnknownId(record[1].to_string()))?;
        let month: Month = record[2]
            .parse()
            .map_err(|_| AoeError::Schema(format!("{display}:{row}: bad month {:?}", &record[2])))?;
        let value: f64 = record[3]
            .parse()
            .map_err(|_| AoeError::Schema(format!("{display}:{row}: bad score {:?}", &record[3])))?;
        if !value.is_finite() {
            return Err(AoeError::Schema(format!(
                "{display}:{row}: non-finite score"
            )));
        }
        if out.insert((sender, receiver, month), value).is_some() {
            return Err(AoeError::Schema(format!(
                "{display}:{row}: duplicate entry {} -> {} {month}",
                &record[0], &record[1]
            )));
        }
    }
    Ok(out)
}

/// Write matrix metadata as pretty JSON.
pub fn write_matrix_meta<P: AsRef<Path>>(meta: &MatrixMeta, path: P) -> Result<()> {
    let path = path.as_ref();
    let mut body = serde_json::to_string_pretty(meta).expect("metadata serializes");
    body.push('\n');
    std::fs::write(path, body).map_err(|source| AoeError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Load matrix metadata.
pub fn load_matrix_meta<P: AsRef<Path>>(path: P) -> Result<MatrixMeta> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|source| AoeError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&body)
        .map_err(|e| AoeError::Schema(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Heatmap export
// ---------------------------------------------------------------------------

/// Per-node footprint of one sender's streamline launched on one day: the
/// sum over steps of the score each grid node would receive.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub spec: GridSpec,
    pub sender_id: String,
    pub day: NaiveDate,
    /// Row-major node totals.
    pub values: Vec<f64>,
}

/// Score every grid node as a pseudo-receiver along one streamline.
///
/// This is the scoring surface a map view would render: it uses exactly the
/// walk from [`run_streamline`], so calm days, grid exit, and truncation
/// behave identically to the real matrix build.
pub fn compute_heatmap(
    params: &ScoreParams,
    registry: &CityRegistry,
    grids: &BTreeMap<NaiveDate, DailyWindGrid>,
    sender_id: &str,
    day: NaiveDate,
) -> Result<Heatmap> {
    let sender = registry
        .index_of(sender_id)
        .ok_or_else(|| AoeError::UnknownSender(sender_id.to_string()))?;
    let grid = grids.get(&day).ok_or(AoeError::MissingField(day))?;
    let spec = grid.spec.clone();
    let nodes: Vec<(usize, LonLat)> = (0..spec.n_rows)
        .flat_map(|row| (0..spec.n_cols).map(move |col| (row, col)))
        .enumerate()
        .map(|(linear, (row, col))| (linear, spec.node(row, col)))
        .collect();
    let raw = run_streamline(params, grids, sender, registry.city(sender).loc, day, &nodes);
    let mut values = vec![0.0; spec.n_nodes()];
    for r in &raw {
        values[r.receiver] += r.value;
    }
    Ok(Heatmap {
        spec,
        sender_id: sender_id.to_string(),
        day,
        values,
    })
}

/// Write a heatmap as `sender_id,date,row,col,lon,lat,score`, row-major.
pub fn write_heatmap_csv<P: AsRef<Path>>(heatmap: &Heatmap, path: P) -> Result<()> {
    let mut out = String::from("sender_id,date,row,col,lon,lat,score\n");
    for row in 0..heatmap.spec.n_rows {
        for col in 0..heatmap.spec.n_cols {
            let node = heatmap.spec.node(row, col);
            let _ = writeln!(
                out,
                "{},{},{row},{col},{},{},{}",
                heatmap.sender_id,
                heatmap.day,
                fmt_out(node.lon),
                fmt_out(node.lat),
                fmt_out(heatmap.values[row * heatmap.spec.n_cols + col]),
            );
        }
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|source| AoeError::Write {
        path: path.display().to_string(),
        source,
    })
}
