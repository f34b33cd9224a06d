//! Brute-force cross-check of the streamline scoring pipeline.
//!
//! Everything here is reimplemented from the written contract as naive
//! nested loops: wind sampling scans the whole lattice instead of the four
//! surrounding nodes, distances restate the spherical trigonometry inline,
//! and aggregation walks flat maps. The production pipeline — parallel
//! streamlines, canonical sorting, entry-map accumulation — must reproduce
//! the reference deposit for deposit to within 1e-12 relative.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use downwind_core::aoe::{
    aggregate_daily, aggregate_monthly, compute_raw_scores, ScoreParams, SECONDS_PER_DAY,
};
use downwind_core::dates::Month;
use downwind_core::geo::{LonLat, EARTH_RADIUS_M};
use downwind_core::ingest::{City, CityRegistry, WindSampleTable};
use downwind_core::windfield::{build_grid, rasterize_all, DailyWindGrid};

// ---------------------------------------------------------------------------
// Reference implementation
// ---------------------------------------------------------------------------

/// Great-circle separation in degrees of arc, restated from scratch.
fn ref_central_angle_deg(a: LonLat, b: LonLat) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlam = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlam / 2.0).sin().powi(2);
    (2.0 * h.sqrt().min(1.0).asin()).to_degrees()
}

/// Metres per degree of longitude at a latitude, via the reference distance.
fn ref_meters_per_degree_lon(lat: f64) -> f64 {
    EARTH_RADIUS_M * ref_central_angle_deg(LonLat::new(0.0, lat), LonLat::new(1.0, lat)).to_radians()
}

/// Nearest-node wind lookup by scanning every lattice node.
///
/// The production lookup inspects only the four cell corners around the
/// query; on a regular lattice the full scan must agree, including the
/// lower-(row, col) tie rule, which the ascending row-major scan with
/// strict improvement reproduces.
fn ref_sample(grid: &DailyWindGrid, p: LonLat) -> Option<(f64, f64)> {
    let spec = &grid.spec;
    let eps = spec.spacing * 1e-9;
    if p.lon < spec.lon_min - eps
        || p.lon > spec.lon_max() + eps
        || p.lat < spec.lat_min - eps
        || p.lat > spec.lat_max() + eps
    {
        return None;
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for row in 0..spec.n_rows {
        for col in 0..spec.n_cols {
            let node = spec.node(row, col);
            let d2 = (node.lon - p.lon).powi(2) + (node.lat - p.lat).powi(2);
            if best.map(|(_, b)| d2 < b).unwrap_or(true) {
                best = Some(((row, col), d2));
            }
        }
    }
    best.map(|((row, col), _)| grid.value(row, col))
}

/// One receiver's score for one step, or `None` outside the deposit region.
fn ref_score(
    params: &ScoreParams,
    pos: LonLat,
    rad: f64,
    wind: (f64, f64),
    receiver: LonLat,
) -> Option<f64> {
    let (u, v) = wind;
    let speed = (u * u + v * v).sqrt();
    if speed < params.calm_speed {
        return None;
    }
    let dist = ref_central_angle_deg(pos, receiver);
    if dist > rad {
        return None;
    }
    let dlon = receiver.lon - pos.lon;
    let dlat = receiver.lat - pos.lat;
    let dnorm = (dlon * dlon + dlat * dlat).sqrt();
    let offaxis = if dnorm == 0.0 {
        0.0
    } else {
        let cos_angle = ((u * dlon + v * dlat) / (speed * dnorm)).clamp(-1.0, 1.0);
        if cos_angle.acos() > params.max_offaxis {
            return None;
        }
        ((v * dlon - u * dlat) / speed).abs()
    };
    Some((-params.alpha * rad - params.beta * offaxis - params.gamma * dist).exp())
}

type RefRaw = BTreeMap<(usize, usize, NaiveDate, u32), f64>;

/// Walk every (sender, launch day) streamline with plain loops.
fn ref_raw_scores(
    params: &ScoreParams,
    cities: &[(usize, LonLat)],
    grids: &BTreeMap<NaiveDate, DailyWindGrid>,
) -> RefRaw {
    let mut out = RefRaw::new();
    for &(sender, start) in cities {
        for &launch in grids.keys().collect::<Vec<_>>() {
            let mut pos = start;
            for step in 0..params.n_steps {
                let date = launch + Days::new(u64::from(step));
                let Some(grid) = grids.get(&date) else {
                    break; // a day without a grid truncates the walk
                };
                let Some(wind) = ref_sample(grid, pos) else {
                    break; // the parcel left the observed region
                };
                if (wind.0 * wind.0 + wind.1 * wind.1).sqrt() < params.calm_speed {
                    continue; // calm: hold position, radius keeps growing
                }
                let rad = params.rad0 + params.rad_inc * f64::from(step);
                for &(receiver, loc) in cities {
                    if let Some(value) = ref_score(params, pos, rad, wind, loc) {
                        let old = out.insert((sender, receiver, launch, step), value);
                        assert!(old.is_none(), "duplicate deposit key");
                    }
                }
                let deg_m = ref_meters_per_degree_lon(pos.lat);
                pos = LonLat::new(
                    pos.lon + SECONDS_PER_DAY * wind.0 / deg_m,
                    pos.lat + SECONDS_PER_DAY * wind.1 / deg_m,
                );
            }
        }
    }
    out
}

/// Sum reference deposits by arrival day, in key order.
fn ref_daily(raw: &RefRaw) -> BTreeMap<(usize, usize, NaiveDate), f64> {
    let mut out = BTreeMap::new();
    for (&(sender, receiver, launch, step), &value) in raw {
        let arrival = launch + Days::new(u64::from(step));
        *out.entry((sender, receiver, arrival)).or_insert(0.0) += value;
    }
    out
}

/// Month-average the reference daily sums with zero-fill over the period.
fn ref_monthly(
    daily: &BTreeMap<(usize, usize, NaiveDate), f64>,
    start: Month,
    end: Month,
) -> BTreeMap<(usize, usize, Month), f64> {
    let mut sums: BTreeMap<(usize, usize, Month), f64> = BTreeMap::new();
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (&(sender, receiver, day), &value) in daily {
        let month = Month::of(day);
        assert!(month >= start && month <= end, "deposit outside period");
        *sums.entry((sender, receiver, month)).or_insert(0.0) += value;
        pairs.insert((sender, receiver));
    }
    // Calendar length via chrono directly rather than the library helper.
    let days_in = |m: Month| -> f64 {
        let first = NaiveDate::from_ymd_opt(m.year, m.month, 1).unwrap();
        let (ny, nm) = if m.month == 12 { (m.year + 1, 1) } else { (m.year, m.month + 1) };
        let next = NaiveDate::from_ymd_opt(ny, nm, 1).unwrap();
        (next - first).num_days() as f64
    };
    let mut out = BTreeMap::new();
    for &(sender, receiver) in &pairs {
        let mut m = start;
        while m <= end {
            let sum = sums.get(&(sender, receiver, m)).copied().unwrap_or(0.0);
            out.insert((sender, receiver, m), sum / days_in(m));
            m = m.next();
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Fixture
// ---------------------------------------------------------------------------

fn city(id: &str, lon: f64, lat: f64) -> City {
    City {
        id: id.to_string(),
        loc: LonLat::new(lon, lat),
        population: BTreeMap::new(),
    }
}

/// Four cities, ten calendar days spanning a leap-February into March.
///
/// Day index 4 is dead calm everywhere (calm-step path), day index 7 has no
/// samples at all (missing-grid truncation), and the wind is strong enough
/// that some parcels blow off the lattice (grid-exit truncation).
fn fixture() -> (CityRegistry, BTreeMap<NaiveDate, DailyWindGrid>, NaiveDate) {
    let registry = CityRegistry::new(vec![
        city("alpha", -48.0, -16.0),
        city("bravo", -46.5, -17.5),
        city("charlie", -44.0, -15.0),
        city("delta", -47.0, -14.2),
    ])
    .unwrap();
    let day0 = NaiveDate::from_ymd_opt(2004, 2, 24).unwrap();
    let mut table = WindSampleTable::new();
    for d in 0..10u64 {
        if d == 7 {
            continue;
        }
        let date = day0 + Days::new(d);
        for c in 0..registry.len() {
            let (u, v) = if d == 4 {
                (0.0, 0.0)
            } else {
                let t = d as f64;
                let k = c as f64;
                (
                    2.2 * (0.8 * t + 1.3 * k).sin() + 0.4 * k,
                    1.9 * (0.5 * t - 0.7 * k).cos(),
                )
            };
            table.insert(c, date, u, v).unwrap();
        }
    }
    let spec = build_grid(&registry, 8).unwrap();
    let grids = rasterize_all(&spec, &registry, &table).unwrap();
    (registry, grids, day0)
}

fn assert_close(got: f64, want: f64, what: &str) {
    let scale = want.abs().max(got.abs());
    let tol = if scale == 0.0 { 0.0 } else { 1e-12 * scale };
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, reference {want}"
    );
}

// ---------------------------------------------------------------------------
// The cross-check
// ---------------------------------------------------------------------------

#[test]
fn pipeline_matches_bruteforce_reference() {
    let (registry, grids, day0) = fixture();
    let cities: Vec<(usize, LonLat)> = registry
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.loc))
        .collect();

    for params in [ScoreParams::default(), ScoreParams::appendix(), ScoreParams::main_text()] {
        // Raw deposits: identical key sets, matching values.
        let raw = compute_raw_scores(&params, &registry, &grids);
        let mut got = BTreeMap::new();
        for r in &raw {
            let old = got.insert((r.sender, r.receiver, r.day, r.step), r.value);
            assert!(old.is_none(), "pipeline emitted a duplicate deposit key");
        }
        let want = ref_raw_scores(&params, &cities, &grids);
        let got_keys: BTreeSet<_> = got.keys().copied().collect();
        let want_keys: BTreeSet<_> = want.keys().copied().collect();
        assert_eq!(
            got_keys,
            want_keys,
            "deposit key sets diverge: {} only in pipeline, {} only in reference",
            got_keys.difference(&want_keys).count(),
            want_keys.difference(&got_keys).count()
        );
        for (key, &value) in &want {
            assert_close(got[key], value, &format!("raw deposit {key:?}"));
        }

        // The fixture must actually exercise the edge paths.
        assert!(!raw.is_empty());
        let calm_day = day0 + Days::new(4);
        let missing_day = day0 + Days::new(7);
        assert!(
            raw.iter().all(|r| !(r.day == calm_day && r.step == 0)),
            "calm launch day deposited at step 0"
        );
        assert!(
            raw.iter().any(|r| r.day == calm_day && r.step > 0),
            "calm launch day never resumed depositing"
        );
        assert!(
            raw.iter().all(|r| r.day != missing_day),
            "launched a streamline on a day with no grid"
        );
        // A walk breaks on the first day without a grid, so nothing is ever
        // deposited on the sample-free day and every earlier launch is
        // truncated strictly before it.
        assert!(
            raw.iter().all(|r| r.arrival() != missing_day),
            "deposited on a day with no grid"
        );
        assert!(
            raw.iter()
                .filter(|r| r.day < missing_day)
                .all(|r| r.arrival() < missing_day),
            "a pre-gap launch deposited past the gap"
        );
        assert!(
            raw.iter().any(|r| r.day > missing_day),
            "no streamline launched after the gap"
        );
        let max_step = raw
            .iter()
            .filter(|r| r.sender == r.receiver)
            .map(|r| r.step)
            .max()
            .unwrap_or(0);
        assert!(max_step > 0, "every self-pair stopped at step 0");

        // Daily sums.
        let daily = aggregate_daily(&raw);
        let daily_want = ref_daily(&want);
        assert_eq!(
            daily.keys().collect::<Vec<_>>(),
            daily_want.keys().collect::<Vec<_>>(),
            "daily key sets diverge"
        );
        for (key, &value) in &daily_want {
            assert_close(daily[key], value, &format!("daily sum {key:?}"));
        }

        // Monthly averages over the covering period, zero-fill included.
        let first = *grids.keys().next().unwrap();
        let last = *grids.keys().last().unwrap()
            + Days::new(u64::from(params.n_steps.saturating_sub(1)));
        let (start, end) = (Month::of(first), Month::of(last));
        let monthly = aggregate_monthly(&daily, start, end).unwrap();
        let monthly_want = ref_monthly(&daily_want, start, end);
        assert_eq!(
            monthly.keys().collect::<Vec<_>>(),
            monthly_want.keys().collect::<Vec<_>>(),
            "monthly key sets diverge"
        );
        for (key, &value) in &monthly_want {
            assert_close(monthly[key], value, &format!("monthly mean {key:?}"));
        }

        // Zero-fill structure: every depositing pair covers every month.
        let months = start.through(end);
        assert_eq!(months.len(), 2);
        let pairs: BTreeSet<(usize, usize)> =
            monthly.keys().map(|&(s, r, _)| (s, r)).collect();
        assert_eq!(monthly.len(), pairs.len() * months.len());
    }
}

#[test]
fn truncation_is_visible_in_deposit_counts() {
    // With everything else equal, shrinking the step count can only remove
    // deposits, and the removed keys are exactly the high-step ones.
    let (registry, grids, _) = fixture();
    let long = ScoreParams::default();
    let short = ScoreParams {
        n_steps: 3,
        ..ScoreParams::default()
    };
    let raw_long = compute_raw_scores(&long, &registry, &grids);
    let raw_short = compute_raw_scores(&short, &registry, &grids);
    let keys_long: BTreeSet<_> = raw_long
        .iter()
        .map(|r| (r.sender, r.receiver, r.day, r.step))
        .collect();
    let keys_short: BTreeSet<_> = raw_short
        .iter()
        .map(|r| (r.sender, r.receiver, r.day, r.step))
        .collect();
    assert!(keys_short.is_subset(&keys_long));
    for key in keys_long.difference(&keys_short) {
        assert!(key.3 >= short.n_steps, "lost a low-step deposit {key:?}");
    }
}
