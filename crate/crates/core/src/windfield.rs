//! Rasterized daily wind fields.
//!
//! Station samples live at scattered city coordinates; the streamline engine
//! needs wind at arbitrary positions. This module builds a regular lon/lat
//! grid over the registry's bounding box (the largest box dimension divided
//! by `res` gives the node spacing) and fills each day's grid by linear
//! interpolation: barycentric weights over a Delaunay triangulation of the
//! day's samples inside their convex hull, nearest-sample values outside it.
//! Grids answer point queries by snapping to the nearest node.
//!
//! Days with fewer than three non-collinear samples cannot support a plane
//! fit; they degrade to pure nearest-sample rasterization with a logged
//! warning rather than failing the run.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use delaunator::{triangulate, Point, EMPTY};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geo::LonLat;
use crate::ingest::{CityRegistry, WindSampleTable};
use crate::numeric::fmt_out;

#[derive(Debug, thiserror::Error)]
pub enum WindError {
    #[error("registry bounding box is degenerate (all cities at one point)")]
    DegenerateExtent,
    #[error("invalid grid config: {0}")]
    InvalidConfig(String),
    #[error("no wind samples for {0}")]
    NoSamplesForDate(NaiveDate),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, WindError>;

/// Geometry of the regular lon/lat node lattice.
///
/// Node `(row, col)` sits at `(lon_min + col·spacing, lat_min + row·spacing)`;
/// rows advance north, columns advance east. The lattice covers the full
/// bounding box, so the last node in each direction may overshoot the box by
/// less than one spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lat_min: f64,
    pub spacing: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Requested subdivision count, kept for report metadata.
    pub res: usize,
}

impl GridSpec {
    pub fn lon_max(&self) -> f64 {
        self.lon_min + (self.n_cols - 1) as f64 * self.spacing
    }

    pub fn lat_max(&self) -> f64 {
        self.lat_min + (self.n_rows - 1) as f64 * self.spacing
    }

    pub fn n_nodes(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn node(&self, row: usize, col: usize) -> LonLat {
        LonLat::new(
            self.lon_min + col as f64 * self.spacing,
            self.lat_min + row as f64 * self.spacing,
        )
    }

    /// True when `p` lies on the node lattice extent (with a hair of float
    /// tolerance so boundary positions do not flicker out).
    pub fn contains(&self, p: LonLat) -> bool {
        let eps = self.spacing * 1e-9;
        p.lon >= self.lon_min - eps
            && p.lon <= self.lon_max() + eps
            && p.lat >= self.lat_min - eps
            && p.lat <= self.lat_max() + eps
    }

    /// Nearest node to `p`, or `None` when `p` is outside the lattice.
    /// Equidistant candidates resolve to the lower `(row, col)`.
    pub fn nearest_node(&self, p: LonLat) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let fc = (p.lon - self.lon_min) / self.spacing;
        let fr = (p.lat - self.lat_min) / self.spacing;
        let clamp = |f: f64, n: usize| -> (usize, usize) {
            let lo = f.floor().max(0.0) as usize;
            let lo = lo.min(n - 1);
            let hi = (lo + 1).min(n - 1);
            (lo, hi)
        };
        let (r0, r1) = clamp(fr, self.n_rows);
        let (c0, c1) = clamp(fc, self.n_cols);
        let mut best: Option<((usize, usize), f64)> = None;
        for row in [r0, r1] {
            for col in [c0, c1] {
                let node = self.node(row, col);
                let d2 = (node.lon - p.lon).powi(2) + (node.lat - p.lat).powi(2);
                // Candidates arrive in ascending (row, col) order; strict
                // improvement only, so lower indices win ties.
                if best.map(|(_, bd2)| d2 < bd2).unwrap_or(true) {
                    best = Some(((row, col), d2));
                }
            }
        }
        best.map(|(idx, _)| idx)
    }
}

/// Build the lattice over the registry bounding box: spacing is the largest
/// box dimension divided by `res`.
pub fn build_grid(registry: &CityRegistry, res: usize) -> Result<GridSpec> {
    if res == 0 {
        return Err(WindError::InvalidConfig("res must be at least 1".into()));
    }
    let (lo, hi) = registry
        .bbox()
        .ok_or_else(|| WindError::InvalidConfig("empty registry".into()))?;
    let span_lon = hi.lon - lo.lon;
    let span_lat = hi.lat - lo.lat;
    let max_span = span_lon.max(span_lat);
    if max_span <= 0.0 {
        return Err(WindError::DegenerateExtent);
    }
    let spacing = max_span / res as f64;
    // Guard float noise when a span is an exact multiple of the spacing.
    let intervals = |span: f64| ((span / spacing - 1e-9).ceil().max(0.0)) as usize;
    Ok(GridSpec {
        lon_min: lo.lon,
        lat_min: lo.lat,
        spacing,
        n_rows: intervals(span_lat) + 1,
        n_cols: intervals(span_lon) + 1,
        res,
    })
}

/// One day's rasterized wind field.
#[derive(Debug, Clone)]
pub struct DailyWindGrid {
    pub spec: GridSpec,
    pub date: NaiveDate,
    /// Row-major `(u, v)` node values.
    values: Vec<(f64, f64)>,
    /// Convex hull of the day's sample locations (empty in fallback mode).
    pub hull: Vec<LonLat>,
    /// False when the day degraded to pure nearest-sample rasterization.
    pub interpolated: bool,
}

impl DailyWindGrid {
    pub fn value(&self, row: usize, col: usize) -> (f64, f64) {
        self.values[row * self.spec.n_cols + col]
    }

    /// Wind at an arbitrary position: the nearest node's value, or `None`
    /// when the position has left the grid (the streamline's exit signal).
    pub fn sample_at(&self, p: LonLat) -> Option<(f64, f64)> {
        self.spec
            .nearest_node(p)
            .map(|(row, col)| self.value(row, col))
    }
}

/// Scattered samples for one day, ready for interpolation queries.
struct DayInterpolator {
    /// Sorted by (lon, lat); exact coordinate duplicates collapsed.
    points: Vec<(LonLat, f64, f64)>,
    tri: Option<delaunator::Triangulation>,
}

impl DayInterpolator {
    fn new(mut samples: Vec<(LonLat, f64, f64)>) -> Self {
        // Lexicographic order makes the triangulation independent of input
        // row order; duplicates keep the first entry in that order.
        samples.sort_by(|a, b| {
            (a.0.lon, a.0.lat)
                .partial_cmp(&(b.0.lon, b.0.lat))
                .expect("finite coordinates")
        });
        samples.dedup_by(|a, b| {
            let dup = a.0.lon == b.0.lon && a.0.lat == b.0.lat;
            if dup {
                log::warn!(
                    "duplicate sample coordinates at ({}, {}); keeping first",
                    a.0.lon,
                    a.0.lat
                );
            }
            dup
        });
        let tri = if samples.len() >= 3 {
            let pts: Vec<Point> = samples
                .iter()
                .map(|(p, _, _)| Point { x: p.lon, y: p.lat })
                .collect();
            let t = triangulate(&pts);
            if t.triangles.is_empty() {
                None
            } else {
                Some(t)
            }
        } else {
            None
        };
        Self { points: samples, tri }
    }

    fn interpolated(&self) -> bool {
        self.tri.is_some()
    }

    fn hull(&self) -> Vec<LonLat> {
        self.tri
            .as_ref()
            .map(|t| t.hull.iter().map(|&i| self.points[i].0).collect())
            .unwrap_or_default()
    }

    /// Barycentric weights of `p` in triangle `t`; the denominator is the
    /// doubled signed triangle area, so orientation cancels.
    fn barycentric(&self, t: usize, p: LonLat) -> Option<[f64; 3]> {
        let tri = self.tri.as_ref()?;
        let idx = &tri.triangles[3 * t..3 * t + 3];
        let [a, b, c] = [self.points[idx[0]].0, self.points[idx[1]].0, self.points[idx[2]].0];
        let cross = |o: LonLat, u: LonLat, v: LonLat| -> f64 {
            (u.lon - o.lon) * (v.lat - o.lat) - (u.lat - o.lat) * (v.lon - o.lon)
        };
        let den = cross(a, b, c);
        if den == 0.0 {
            return None;
        }
        let wa = cross(p, b, c) / den;
        let wb = cross(p, c, a) / den;
        let wc = cross(p, a, b) / den;
        Some([wa, wb, wc])
    }

    /// Straight walk across triangle adjacencies from `start` toward `p`.
    /// Returns the containing triangle and its weights, or `None` when the
    /// walk exits the hull.
    fn locate(&self, p: LonLat, start: &mut usize) -> Option<(usize, [f64; 3])> {
        const IN_TOL: f64 = -1e-9;
        let tri = self.tri.as_ref()?;
        let n_tri = tri.triangles.len() / 3;
        let mut t = (*start).min(n_tri - 1);
        for _ in 0..2 * n_tri {
            let w = self.barycentric(t, p)?;
            if w.iter().all(|&x| x >= IN_TOL) {
                *start = t;
                return Some((t, w));
            }
            // Cross the edge opposite the most negative weight. Halfedge
            // 3t+k runs from vertex k to vertex k+1 of triangle t, so the
            // edge opposite vertex k is halfedge 3t + (k+1) mod 3.
            let worst = (0..3).min_by(|&i, &j| w[i].partial_cmp(&w[j]).expect("finite")).expect("3");
            let edge = 3 * t + (worst + 1) % 3;
            let twin = tri.halfedges[edge];
            if twin == EMPTY {
                return None;
            }
            t = twin / 3;
        }
        // Pathological float cycling: fall back to an exhaustive scan.
        for t in 0..n_tri {
            if let Some(w) = self.barycentric(t, p) {
                if w.iter().all(|&x| x >= IN_TOL) {
                    *start = t;
                    return Some((t, w));
                }
            }
        }
        None
    }

    fn nearest_sample(&self, p: LonLat) -> (f64, f64) {
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (i, (q, _, _)) in self.points.iter().enumerate() {
            let d2 = (q.lon - p.lon).powi(2) + (q.lat - p.lat).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        let (_, u, v) = self.points[best];
        (u, v)
    }

    fn value_at(&self, p: LonLat, walk_seed: &mut usize) -> (f64, f64) {
        if let Some(tri) = &self.tri {
            if let Some((t, w)) = self.locate(p, walk_seed) {
                let idx = &tri.triangles[3 * t..3 * t + 3];
                // Clamp boundary noise and renormalize so weights stay convex.
                let w: Vec<f64> = w.iter().map(|&x| x.max(0.0)).collect();
                let total: f64 = w.iter().sum();
                let mut u = 0.0;
                let mut v = 0.0;
                for k in 0..3 {
                    let (_, su, sv) = self.points[idx[k]];
                    u += w[k] / total * su;
                    v += w[k] / total * sv;
                }
                return (u, v);
            }
        }
        self.nearest_sample(p)
    }
}

/// Rasterize one day's samples onto the lattice.
pub fn rasterize_day(
    spec: &GridSpec,
    registry: &CityRegistry,
    wind: &WindSampleTable,
    date: NaiveDate,
) -> Result<DailyWindGrid> {
    let samples = wind
        .samples_on(date)
        .ok_or(WindError::NoSamplesForDate(date))?;
    let located: Vec<(LonLat, f64, f64)> = samples
        .iter()
        .map(|&(city, u, v)| (registry.city(city).loc, u, v))
        .collect();
    let interp = DayInterpolator::new(located);
    if !interp.interpolated() {
        log::warn!(
            "{date}: {} usable sample(s), not enough for linear interpolation; using nearest-sample rasterization",
            interp.points.len()
        );
    }

    let mut values = Vec::with_capacity(spec.n_nodes());
    let mut walk_seed = 0usize;
    for row in 0..spec.n_rows {
        for col in 0..spec.n_cols {
            values.push(interp.value_at(spec.node(row, col), &mut walk_seed));
        }
    }
    Ok(DailyWindGrid {
        spec: spec.clone(),
        date,
        values,
        hull: interp.hull(),
        interpolated: interp.interpolated(),
    })
}

/// Rasterize every date in the table (parallel over days).
pub fn rasterize_all(
    spec: &GridSpec,
    registry: &CityRegistry,
    wind: &WindSampleTable,
) -> Result<BTreeMap<NaiveDate, DailyWindGrid>> {
    let dates = wind.dates();
    let grids: Vec<_> = dates
        .par_iter()
        .map(|&date| rasterize_day(spec, registry, wind, date).map(|g| (date, g)))
        .collect::<Result<Vec<_>>>()?;
    Ok(grids.into_iter().collect())
}

/// Write a grid as CSV: `date,row,col,lon,lat,u,v`, row-major.
pub fn write_grid_csv<P: AsRef<std::path::Path>>(grid: &DailyWindGrid, path: P) -> Result<()> {
    let mut out = String::from("date,row,col,lon,lat,u,v\n");
    for row in 0..grid.spec.n_rows {
        for col in 0..grid.spec.n_cols {
            let node = grid.spec.node(row, col);
            let (u, v) = grid.value(row, col);
            out.push_str(&format!(
                "{},{row},{col},{},{},{},{}\n",
                grid.date,
                fmt_out(node.lon),
                fmt_out(node.lat),
                fmt_out(u),
                fmt_out(v)
            ));
        }
    }
    std::fs::write(path.as_ref(), out).map_err(|source| WindError::Write {
        path: path.as_ref().display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::City;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn registry(coords: &[(f64, f64)]) -> CityRegistry {
        let cities = coords
            .iter()
            .enumerate()
            .map(|(i, &(lon, lat))| City {
                id: format!("C{i:03}"),
                loc: LonLat::new(lon, lat),
                population: BTreeMap::new(),
            })
            .collect();
        CityRegistry::new(cities).unwrap()
    }

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2003, 1, 1).unwrap()
    }

    /// Insert a wind sample per city for the affine field u = a + b·lon +
    /// c·lat, v = d + e·lon + f·lat.
    fn affine_table(reg: &CityRegistry, coef: [f64; 6]) -> WindSampleTable {
        let mut t = WindSampleTable::new();
        for i in 0..reg.len() {
            let p = reg.city(i).loc;
            let u = coef[0] + coef[1] * p.lon + coef[2] * p.lat;
            let v = coef[3] + coef[4] * p.lon + coef[5] * p.lat;
            t.insert(i, day(), u, v).unwrap();
        }
        t
    }

    #[test]
    fn grid_spacing_follows_largest_dimension() {
        // 10° × 8° box at res 64: spacing 10/64 = 0.15625; 65 columns; the
        // 8° side needs ceil(8/0.15625) = 52 intervals → 53 rows.
        let reg = registry(&[(-50.0, -20.0), (-40.0, -12.0)]);
        let spec = build_grid(&reg, 64).unwrap();
        assert_eq!(spec.spacing, 0.15625);
        assert_eq!(spec.n_cols, 65);
        assert_eq!(spec.n_rows, 53);
        assert!(spec.lat_max() >= -12.0);
        assert_eq!(spec.res, 64);
    }

    #[test]
    fn degenerate_extent_is_rejected() {
        let reg = registry(&[(-50.0, -20.0), (-50.0, -20.0 + 0.0)]);
        assert!(matches!(build_grid(&reg, 64), Err(WindError::DegenerateExtent)));
    }

    #[test]
    fn nearest_node_prefers_lower_indices_on_ties() {
        let reg = registry(&[(0.0, 0.0), (4.0, 4.0)]);
        let spec = build_grid(&reg, 4).unwrap(); // spacing 1.0, 5×5 nodes
        // Exactly between four nodes → lowest (row, col) of the quad.
        assert_eq!(spec.nearest_node(LonLat::new(0.5, 0.5)), Some((0, 0)));
        // Between two nodes horizontally.
        assert_eq!(spec.nearest_node(LonLat::new(1.5, 2.0)), Some((2, 1)));
        // Clearly nearest to a single node.
        assert_eq!(spec.nearest_node(LonLat::new(3.1, 0.9)), Some((1, 3)));
        // Outside the lattice.
        assert_eq!(spec.nearest_node(LonLat::new(14.0, 0.0)), None);
        assert_eq!(spec.nearest_node(LonLat::new(0.0, -10.0)), None);
    }

    #[test]
    fn sampling_is_snap_idempotent() {
        let reg = registry(&[(0.0, 0.0), (4.0, 3.0), (1.0, 4.0), (3.5, 1.0)]);
        let spec = build_grid(&reg, 8).unwrap();
        let wind = affine_table(&reg, [1.0, 0.2, -0.1, -2.0, 0.05, 0.3]);
        let grid = rasterize_day(&spec, &reg, &wind, day()).unwrap();
        for &p in &[
            LonLat::new(0.3, 0.7),
            LonLat::new(2.71, 2.9),
            LonLat::new(3.99, 0.01),
        ] {
            let (row, col) = spec.nearest_node(p).unwrap();
            assert_eq!(grid.sample_at(p), grid.sample_at(spec.node(row, col)));
        }
    }

    #[test]
    fn affine_fields_are_reproduced_inside_hull() {
        let reg = registry(&[
            (0.0, 0.0),
            (4.0, 0.2),
            (3.8, 4.0),
            (0.3, 3.6),
            (2.0, 2.0),
            (1.2, 2.9),
        ]);
        let spec = build_grid(&reg, 16).unwrap();
        let coef = [2.0, 3.0, -1.0, -0.5, 0.25, 0.75];
        let wind = affine_table(&reg, coef);
        let grid = rasterize_day(&spec, &reg, &wind, day()).unwrap();
        assert!(grid.interpolated);
        assert!(grid.hull.len() >= 3);

        // Check nodes strictly inside the hull (positive margin keeps the
        // nearest-sample exterior out of the comparison).
        let inside = |p: LonLat| -> bool {
            let h = &grid.hull;
            let mut sign = 0.0f64;
            for i in 0..h.len() {
                let a = h[i];
                let b = h[(i + 1) % h.len()];
                let c = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
                if c.abs() < 1e-6 {
                    return false;
                }
                if sign == 0.0 {
                    sign = c.signum();
                } else if c.signum() != sign {
                    return false;
                }
            }
            true
        };
        let mut checked = 0;
        for row in 0..spec.n_rows {
            for col in 0..spec.n_cols {
                let p = spec.node(row, col);
                if !inside(p) {
                    continue;
                }
                let (u, v) = grid.value(row, col);
                let eu = coef[0] + coef[1] * p.lon + coef[2] * p.lat;
                let ev = coef[3] + coef[4] * p.lon + coef[5] * p.lat;
                assert_relative_eq!(u, eu, epsilon = 1e-10, max_relative = 1e-10);
                assert_relative_eq!(v, ev, epsilon = 1e-10, max_relative = 1e-10);
                checked += 1;
            }
        }
        assert!(checked > 20, "hull interior too small: {checked} nodes");
    }

    #[test]
    fn collinear_samples_fall_back_to_nearest() {
        let reg = registry(&[(0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (0.0, 4.0)]);
        let spec = build_grid(&reg, 8).unwrap();
        // Wind only at the three collinear cities on the equator-line.
        let mut wind = WindSampleTable::new();
        wind.insert(0, day(), 1.0, 0.0).unwrap();
        wind.insert(1, day(), 2.0, 0.0).unwrap();
        wind.insert(2, day(), 3.0, 0.0).unwrap();
        let grid = rasterize_day(&spec, &reg, &wind, day()).unwrap();
        assert!(!grid.interpolated);
        assert!(grid.hull.is_empty());
        // Every node carries the value of its nearest sample.
        assert_eq!(grid.sample_at(LonLat::new(0.2, 1.0)), Some((1.0, 0.0)));
        assert_eq!(grid.sample_at(LonLat::new(2.1, 3.0)), Some((2.0, 0.0)));
        assert_eq!(grid.sample_at(LonLat::new(3.9, 0.5)), Some((3.0, 0.0)));
    }

    #[test]
    fn rasterization_ignores_sample_order() {
        let reg = registry(&[(0.0, 0.0), (4.0, 0.2), (3.8, 4.0), (0.3, 3.6), (2.0, 2.0)]);
        let spec = build_grid(&reg, 12).unwrap();
        let mut forward = WindSampleTable::new();
        let mut reverse = WindSampleTable::new();
        let vals = [(1.0, 2.0), (3.0, -1.0), (0.5, 0.5), (-2.0, 1.5), (4.0, 0.0)];
        for (i, &(u, v)) in vals.iter().enumerate() {
            forward.insert(i, day(), u, v).unwrap();
        }
        for i in (0..reg.len()).rev() {
            reverse.insert(i, day(), vals[i].0, vals[i].1).unwrap();
        }
        let a = rasterize_day(&spec, &reg, &forward, day()).unwrap();
        let b = rasterize_day(&spec, &reg, &reverse, day()).unwrap();
        for row in 0..spec.n_rows {
            for col in 0..spec.n_cols {
                assert_eq!(a.value(row, col), b.value(row, col));
            }
        }
    }

    #[test]
    fn missing_date_errors() {
        let reg = registry(&[(0.0, 0.0), (4.0, 4.0)]);
        let spec = build_grid(&reg, 4).unwrap();
        let wind = WindSampleTable::new();
        assert!(matches!(
            rasterize_day(&spec, &reg, &wind, day()),
            Err(WindError::NoSamplesForDate(_))
        ));
    }
}
