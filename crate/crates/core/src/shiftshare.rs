//! Shift-share instrument construction, placebo inference, and balance tests.
//!
//! The instrument interacts lagged product-mix shares with world import
//! growth: for region `i` and year `t` with horizon `h`,
//!
//! ```text
//! IV[i,t] = ( Σ_j share[i,j,t-h] · growth_j(t, t+h) ) · Export[i,t-h] / Pop[i,t-h]
//! ```
//!
//! where `share[i,j,t-h]` is product `j`'s share of region `i`'s exports in
//! the base year and `growth_j` is the bounded mid-point growth rate
//! ([`dh_growth`]) of world imports of `j`. [`build_iv_with_shocks`] swaps
//! the observed import growth for synthetic per-product shocks, which powers
//! the placebo machinery: [`placebo_rejection`] redraws Normal(0, √5)
//! shocks, rebuilds the instrument, refits the reduced form, and counts
//! rejections at the requested nominal levels (normal critical values on
//! cluster-robust t statistics). [`fdr_adjust`] and [`balance_test`] cover
//! the multiple-testing side.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::econometrics::{fit, DesignSpec, EconError, Panel};
use crate::ingest::{ImportTable, TradeTable, YearSeries};

/// Errors from instrument construction and placebo inference.
#[derive(Debug, Error)]
pub enum ShiftShareError {
    #[error("growth rate of 0 -> 0 is undefined")]
    BothZero,
    #[error("region {region:?} has zero exports in base year {year}")]
    ZeroBaseExports { region: String, year: i32 },
    #[error("no value for {key:?} in year {year}")]
    MissingYear { key: String, year: i32 },
    #[error("zero denominator for {key:?} in year {year}")]
    ZeroDenominator { key: String, year: i32 },
    #[error("region {region:?} has zero or missing population in year {year}")]
    ZeroPopulation { region: String, year: i32 },
    #[error("placebo needs at least 1 replication, got {0}")]
    InvalidReps(usize),
    #[error("significance level {0} outside (0, 1)")]
    OutOfRangeP(f64),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error(transparent)]
    Econ(#[from] EconError),
}

type Result<T> = std::result::Result<T, ShiftShareError>;

// ---------------------------------------------------------------------------
// Growth measures
// ---------------------------------------------------------------------------

/// Mid-point (Davis–Haltiwanger) growth rate `(end - start) / ((end+start)/2)`.
///
/// Bounded in `[-2, 2]` for non-negative inputs, which tames the explosive
/// ratios a conventional growth rate produces near zero. Both endpoints zero
/// is undefined ([`ShiftShareError::BothZero`]).
pub fn dh_growth(start: f64, end: f64) -> Result<f64> {
    if !start.is_finite() || !end.is_finite() || start < 0.0 || end < 0.0 {
        return Err(ShiftShareError::InvalidValue(format!(
            "growth endpoints must be finite and non-negative, got {start} -> {end}"
        )));
    }
    if start == 0.0 && end == 0.0 {
        return Err(ShiftShareError::BothZero);
    }
    Ok((end - start) / ((end + start) / 2.0))
}

/// Long differences over a fixed horizon: for every (region, y) where both
/// endpoints exist, `value[y+h] - value[y]`.
///
/// With a `denom` series the difference is divided by the region's *base
/// year* denominator and expressed in percentage points — the land-share
/// form, so forest going 60 → 50 over 200 hectares of land is −5 points. A
/// denominator that is missing at an emitted base year is a
/// [`ShiftShareError::MissingYear`]; a zero one is
/// [`ShiftShareError::ZeroDenominator`].
pub fn long_difference(
    series: &YearSeries,
    horizon: i32,
    denom: Option<&YearSeries>,
) -> Result<YearSeries> {
    if horizon < 1 {
        return Err(ShiftShareError::InvalidValue(format!(
            "horizon must be at least 1, got {horizon}"
        )));
    }
    let mut out = YearSeries::new();
    for ((region, year), start) in series {
        let Some(end) = series.get(&(region.clone(), year + horizon)) else {
            continue;
        };
        let mut delta = end - start;
        if let Some(denom) = denom {
            let d = denom.get(&(region.clone(), *year)).copied().ok_or_else(|| {
                ShiftShareError::MissingYear {
                    key: region.clone(),
                    year: *year,
                }
            })?;
            if d == 0.0 || !d.is_finite() {
                return Err(ShiftShareError::ZeroDenominator {
                    key: region.clone(),
                    year: *year,
                });
            }
            delta = delta / d * 100.0;
        }
        out.insert((region.clone(), *year), delta);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Instrument construction
// ---------------------------------------------------------------------------

/// Product shares of a region's exports in one year.
///
/// Errors with [`ShiftShareError::ZeroBaseExports`] when the region exported
/// nothing that year (no mix to weight with).
pub fn build_shares(
    trade: &TradeTable,
    region: &str,
    year: i32,
) -> Result<BTreeMap<String, f64>> {
    let total = trade.export_total(region, year);
    if total <= 0.0 {
        return Err(ShiftShareError::ZeroBaseExports {
            region: region.to_string(),
            year,
        });
    }
    Ok(trade
        .flows_for(region, year)
        .map(|f| (f.product.clone(), f.export_value / total))
        .collect())
}

fn build_iv_inner(
    trade: &TradeTable,
    growth_of: &mut dyn FnMut(&str) -> Result<f64>,
    pop: &YearSeries,
    horizon: i32,
    years: &[i32],
) -> Result<BTreeMap<(String, i32), f64>> {
    let regions: Vec<String> = trade.regions().map(String::from).collect();
    let mut out = BTreeMap::new();
    for region in &regions {
        for &t in years {
            let base_year = t - horizon;
            let total = trade.export_total(region, base_year);
            if total <= 0.0 {
                // No base-year mix to shift: the instrument is zero, not
                // missing — the region simply was not exposed.
                log::info!("{region} {base_year}: zero base exports, instrument set to 0");
                out.insert((region.clone(), t), 0.0);
                continue;
            }
            let mut shock = 0.0;
            for flow in trade.flows_for(region, base_year) {
                let share = flow.export_value / total;
                if share == 0.0 {
                    continue;
                }
                shock += share * growth_of(&flow.product)?;
            }
            let population = pop
                .get(&(region.clone(), base_year))
                .copied()
                .ok_or_else(|| ShiftShareError::ZeroPopulation {
                    region: region.clone(),
                    year: base_year,
                })?;
            if population <= 0.0 {
                return Err(ShiftShareError::ZeroPopulation {
                    region: region.clone(),
                    year: base_year,
                });
            }
            out.insert((region.clone(), t), shock * total / population);
        }
    }
    Ok(out)
}

/// Build the instrument from observed world imports.
///
/// For every region in the trade table and every target year `t`, combines
/// base-year (`t - horizon`) export shares with world import growth over
/// `(t, t + horizon)` and scales by base-year exports per capita. A product
/// whose imports are zero at both endpoints contributes zero growth; a
/// missing import value is an error.
pub fn build_iv(
    trade: &TradeTable,
    imports: &ImportTable,
    pop: &YearSeries,
    horizon: i32,
    years: &[i32],
) -> Result<BTreeMap<(String, i32), f64>> {
    let mut growth_cache: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for &t in years {
        for product in trade.products() {
            let key = (product.to_string(), t);
            if growth_cache.contains_key(&key) {
                continue;
            }
            let start = imports.get(product, t).ok_or_else(|| {
                ShiftShareError::MissingYear {
                    key: product.to_string(),
                    year: t,
                }
            })?;
            let end = imports.get(product, t + horizon).ok_or_else(|| {
                ShiftShareError::MissingYear {
                    key: product.to_string(),
                    year: t + horizon,
                }
            })?;
            let g = if start == 0.0 && end == 0.0 {
                // No world market at either endpoint: no demand shock.
                0.0
            } else {
                dh_growth(start, end)?
            };
            growth_cache.insert(key, g);
        }
    }
    // Growth is year-specific, so run the shared loop one target year at a
    // time with a closure bound to that year's cache entries.
    let mut out = BTreeMap::new();
    for &t in years {
        let mut growth = |product: &str| -> Result<f64> {
            growth_cache
                .get(&(product.to_string(), t))
                .copied()
                .ok_or_else(|| ShiftShareError::MissingYear {
                    key: product.to_string(),
                    year: t,
                })
        };
        let partial = build_iv_inner(trade, &mut growth, pop, horizon, &[t])?;
        out.extend(partial);
    }
    Ok(out)
}

/// Build the instrument from synthetic per-product shocks instead of
/// observed import growth (the placebo path). Every product with a positive
/// base-year share must appear in `shocks`.
pub fn build_iv_with_shocks(
    trade: &TradeTable,
    shocks: &BTreeMap<String, f64>,
    pop: &YearSeries,
    horizon: i32,
    years: &[i32],
) -> Result<BTreeMap<(String, i32), f64>> {
    let mut growth = |product: &str| -> Result<f64> {
        shocks
            .get(product)
            .copied()
            .ok_or_else(|| ShiftShareError::InvalidValue(format!("no shock for product {product:?}")))
    };
    build_iv_inner(trade, &mut growth, pop, horizon, years)
}

// ---------------------------------------------------------------------------
// Placebo inference
// ---------------------------------------------------------------------------

/// Standard deviation of the synthetic world-demand shocks (variance 5).
pub const PLACEBO_SHOCK_SD: f64 = 2.236_067_977_499_79; // sqrt(5)

/// Derive an independent stream seed for one placebo replication, so that
/// replications are reproducible individually and independent of the order
/// they are run in.
pub fn rep_seed(seed: u64, rep: u64) -> u64 {
    seed ^ rep.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draw i.i.d. Normal(0, √5) shocks, one per product, deterministic in the
/// seed and product order.
pub fn draw_placebo_shocks(products: &[&str], seed: u64) -> BTreeMap<String, f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, PLACEBO_SHOCK_SD).expect("valid normal");
    products
        .iter()
        .map(|p| (p.to_string(), normal.sample(&mut rng)))
        .collect()
}

/// Placebo configuration: how many redraws, where the instrument column
/// joins the panel, and the nominal levels to count rejections at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceboConfig {
    pub reps: usize,
    pub seed: u64,
    /// Nominal two-sided sizes, e.g. `[0.01, 0.05, 0.10]`.
    pub levels: Vec<f64>,
    pub horizon: i32,
    /// Name under which the synthetic instrument column is injected (the
    /// reduced-form design must list it as a regressor).
    pub iv_column: String,
    /// Categorical panel column with region ids.
    pub region_column: String,
    /// Numeric panel column with calendar years.
    pub year_column: String,
}

/// Rejection counts from [`placebo_rejection`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceboResult {
    pub reps: usize,
    pub levels: Vec<f64>,
    pub rejections: Vec<usize>,
    /// `rejections / reps`, aligned with `levels`.
    pub rates: Vec<f64>,
}

/// Redraw placebo shocks `reps` times, rebuild the instrument, refit the
/// reduced form, and count |z| exceedances of the normal critical value at
/// each level.
///
/// Under the null (shocks carry no information about the outcome) the
/// rejection rate at nominal level α should be close to α; systematic excess
/// signals that the design's error structure is not what the standard
/// errors assume.
pub fn placebo_rejection(
    panel: &Panel,
    design: &DesignSpec,
    trade: &TradeTable,
    pop: &YearSeries,
    cfg: &PlaceboConfig,
) -> Result<PlaceboResult> {
    if cfg.reps == 0 {
        return Err(ShiftShareError::InvalidReps(0));
    }
    for &level in &cfg.levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(ShiftShareError::OutOfRangeP(level));
        }
    }
    if !design.exog.contains(&cfg.iv_column) {
        return Err(ShiftShareError::InvalidValue(format!(
            "reduced-form design must list the placebo column {:?} as a regressor",
            cfg.iv_column
        )));
    }

    let regions = panel.categorical(&cfg.region_column)?;
    let years_per_row: Vec<i32> = if let Ok(values) = panel.numeric(&cfg.year_column) {
        values
            .iter()
            .map(|&y| {
                if y.fract() != 0.0 || y.abs() > i32::MAX as f64 {
                    Err(ShiftShareError::InvalidValue(format!(
                        "year column contains non-integer value {y}"
                    )))
                } else {
                    Ok(y as i32)
                }
            })
            .collect::<Result<_>>()?
    } else {
        let cat = panel.categorical(&cfg.year_column)?;
        (0..panel.n_rows())
            .map(|i| {
                cat.level_of(i).parse::<i32>().map_err(|_| {
                    ShiftShareError::InvalidValue(format!(
                        "year column contains non-year level {:?}",
                        cat.level_of(i)
                    ))
                })
            })
            .collect::<Result<_>>()?
    };
    let years: Vec<i32> = years_per_row
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let products: Vec<&str> = trade.products().collect();

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let criticals: Vec<f64> = cfg
        .levels
        .iter()
        .map(|a| normal.inverse_cdf(1.0 - a / 2.0))
        .collect();

    let mut rejections = vec![0usize; cfg.levels.len()];
    for rep in 0..cfg.reps {
        let shocks = draw_placebo_shocks(&products, rep_seed(cfg.seed, rep as u64));
        let iv = build_iv_with_shocks(trade, &shocks, pop, cfg.horizon, &years)?;
        let column: Vec<f64> = (0..panel.n_rows())
            .map(|i| {
                let key = (regions.level_of(i).to_string(), years_per_row[i]);
                iv.get(&key)
                    .copied()
                    .ok_or_else(|| ShiftShareError::MissingYear {
                        key: key.0.clone(),
                        year: key.1,
                    })
            })
            .collect::<Result<_>>()?;
        let mut work = panel.clone();
        work.push_numeric(&cfg.iv_column, column)
            .map_err(ShiftShareError::Econ)?;
        let result = fit(&work, design)?;
        let est = result
            .estimate(&cfg.iv_column)
            .ok_or_else(|| {
                ShiftShareError::InvalidValue(format!(
                    "placebo column {:?} was dropped as collinear",
                    cfg.iv_column
                ))
            })?;
        let z = est.z.abs();
        for (slot, crit) in rejections.iter_mut().zip(&criticals) {
            if z > *crit {
                *slot += 1;
            }
        }
    }
    let rates = rejections
        .iter()
        .map(|&r| r as f64 / cfg.reps as f64)
        .collect();
    Ok(PlaceboResult {
        reps: cfg.reps,
        levels: cfg.levels.clone(),
        rejections,
        rates,
    })
}

// ---------------------------------------------------------------------------
// Multiple testing
// ---------------------------------------------------------------------------

/// Benjamini–Hochberg step-up adjusted p-values (q-values).
///
/// `q[i] = min over ranks r ≥ rank(i) of p[(r)] · m / r`, computed by the
/// usual backward minimum sweep; output order matches input order.
pub fn fdr_adjust(pvals: &[f64]) -> Result<Vec<f64>> {
    for &p in pvals {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(ShiftShareError::OutOfRangeP(p));
        }
    }
    let m = pvals.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let idx = order[rank - 1];
        // m/rank is exactly 1 at the top rank, so q_(m) = p_(m) identically.
        running = running.min(pvals[idx] * (m as f64 / rank as f64));
        q[idx] = running;
    }
    Ok(q)
}

/// One characteristic's balance regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceRow {
    pub characteristic: String,
    pub coef: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    /// Benjamini–Hochberg adjusted p across the characteristic family.
    pub q: f64,
}

/// Regress each pre-period characteristic on `regressor` under the given
/// base design (fixed effects, clustering, weights), then adjust the family
/// of p-values by [`fdr_adjust`].
///
/// A characteristic systematically related to the instrument — surviving the
/// FDR adjustment — is evidence against the exclusion restriction.
pub fn balance_test(
    panel: &Panel,
    base: &DesignSpec,
    characteristics: &[String],
    regressor: &str,
) -> Result<Vec<BalanceRow>> {
    if characteristics.is_empty() {
        return Err(ShiftShareError::InvalidValue(
            "no characteristics to test".into(),
        ));
    }
    let mut rows = Vec::with_capacity(characteristics.len());
    for ch in characteristics {
        let mut spec = base.clone();
        spec.outcome = ch.clone();
        if !spec.exog.contains(&regressor.to_string()) {
            spec.exog.insert(0, regressor.to_string());
        }
        let result = fit(panel, &spec)?;
        let est = result.estimate(regressor).ok_or_else(|| {
            ShiftShareError::InvalidValue(format!(
                "regressor {regressor:?} dropped as collinear in balance test for {ch:?}"
            ))
        })?;
        rows.push(BalanceRow {
            characteristic: ch.clone(),
            coef: est.coef,
            se: est.se,
            z: est.z,
            p: est.p,
            q: f64::NAN,
        });
    }
    let qs = fdr_adjust(&rows.iter().map(|r| r.p).collect::<Vec<_>>())?;
    for (row, q) in rows.iter_mut().zip(qs) {
        row.q = q;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ImportTable, TradeFlow, TradeTable};
    use approx::assert_relative_eq;

    fn flow(region: &str, product: &str, year: i32, value: f64) -> TradeFlow {
        TradeFlow {
            region: region.to_string(),
            product: product.to_string(),
            year,
            export_value: value,
        }
    }

    #[test]
    fn dh_growth_is_bounded_midpoint_growth() {
        assert_relative_eq!(dh_growth(100.0, 150.0).unwrap(), 0.4, max_relative = 1e-15);
        assert_eq!(dh_growth(0.0, 7.0).unwrap(), 2.0);
        assert_eq!(dh_growth(7.0, 0.0).unwrap(), -2.0);
        assert_eq!(dh_growth(5.0, 5.0).unwrap(), 0.0);
        assert!(matches!(dh_growth(0.0, 0.0), Err(ShiftShareError::BothZero)));
        assert!(matches!(
            dh_growth(-1.0, 5.0),
            Err(ShiftShareError::InvalidValue(_))
        ));
        for i in 0..50 {
            let s = (i * 13 % 17) as f64;
            let e = (i * 7 % 23) as f64;
            if s == 0.0 && e == 0.0 {
                continue;
            }
            let g = dh_growth(s, e).unwrap();
            assert!((-2.0..=2.0).contains(&g), "{s} -> {e} gave {g}");
            // Antisymmetry: swapping endpoints flips the sign exactly.
            assert_eq!(g, -dh_growth(e, s).unwrap());
        }
    }

    #[test]
    fn long_difference_takes_levels_or_percentage_points() {
        let forest = [("R1", 2000, 60.0), ("R1", 2004, 50.0), ("R1", 2008, 50.0)]
            .iter()
            .map(|(id, y, v)| ((id.to_string(), *y), *v))
            .collect::<YearSeries>();
        // Plain level difference by default.
        let levels = long_difference(&forest, 4, None).unwrap();
        assert_eq!(levels[&("R1".into(), 2000)], -10.0);
        assert_eq!(levels[&("R1".into(), 2004)], 0.0);
        assert_eq!(levels.len(), 2);
        // Land-share form: 60 -> 50 over 200 ha of land is -5 points.
        let land = [(("R1".to_string(), 2000), 200.0), (("R1".to_string(), 2004), 200.0)]
            .into_iter()
            .collect::<YearSeries>();
        let pp = long_difference(&forest, 4, Some(&land)).unwrap();
        assert_relative_eq!(pp[&("R1".into(), 2000)], -5.0, max_relative = 1e-15);
        // Horizon 1 on a 2-year series is a single difference.
        let two = [(("R1".to_string(), 2000), 3.0), (("R1".to_string(), 2001), 7.0)]
            .into_iter()
            .collect::<YearSeries>();
        let single = long_difference(&two, 1, None).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[&("R1".into(), 2000)], 4.0);
        // Denominator problems are reported, not skipped.
        let zero_land = [(("R1".to_string(), 2000), 0.0), (("R1".to_string(), 2004), 1.0)]
            .into_iter()
            .collect::<YearSeries>();
        assert!(matches!(
            long_difference(&forest, 4, Some(&zero_land)),
            Err(ShiftShareError::ZeroDenominator { year: 2000, .. })
        ));
        assert!(matches!(
            long_difference(&forest, 4, Some(&YearSeries::new())),
            Err(ShiftShareError::MissingYear { .. })
        ));
    }

    #[test]
    fn shares_follow_base_year_mix() {
        let trade = TradeTable::new(vec![
            flow("R1", "a", 2000, 30.0),
            flow("R1", "b", 2000, 10.0),
            flow("R2", "a", 2000, 0.0),
        ])
        .unwrap();
        let shares = build_shares(&trade, "R1", 2000).unwrap();
        assert_relative_eq!(shares["a"], 0.75, max_relative = 1e-15);
        assert_relative_eq!(shares["b"], 0.25, max_relative = 1e-15);
        assert!(matches!(
            build_shares(&trade, "R2", 2000),
            Err(ShiftShareError::ZeroBaseExports { .. })
        ));
    }

    #[test]
    fn iv_combines_shares_growth_and_scale() {
        // Region R1 in base year 2000: exports a=30, b=10, c=10 (total 50).
        // Import growth 2004 -> 2008: a: 100 -> 150 (0.4), b: 200 -> 100
        // (-2/3), c: 0 -> 0 (treated as no shock). Population 100.
        // shock = .6(.4) + .2(-2/3) + .2(0) = 16/150; IV = shock · 50/100.
        let trade = TradeTable::new(vec![
            flow("R1", "a", 2000, 30.0),
            flow("R1", "b", 2000, 10.0),
            flow("R1", "c", 2000, 10.0),
        ])
        .unwrap();
        let imports = ImportTable::new(vec![
            ("a".into(), 2004, 100.0),
            ("a".into(), 2008, 150.0),
            ("b".into(), 2004, 200.0),
            ("b".into(), 2008, 100.0),
            ("c".into(), 2004, 0.0),
            ("c".into(), 2008, 0.0),
        ])
        .unwrap();
        let mut pop = YearSeries::new();
        pop.insert(("R1".into(), 2000), 100.0);
        let iv = build_iv(&trade, &imports, &pop, 4, &[2004]).unwrap();
        let want = (0.6 * 0.4 + 0.2 * (-2.0 / 3.0)) * 50.0 / 100.0;
        assert_relative_eq!(iv[&("R1".into(), 2004)], want, max_relative = 1e-12);
    }

    #[test]
    fn iv_handles_zero_exports_and_missing_inputs() {
        let trade = TradeTable::new(vec![
            flow("R1", "a", 2000, 0.0),
            flow("R1", "a", 2001, 20.0),
        ])
        .unwrap();
        let imports = ImportTable::new(vec![
            ("a".into(), 2004, 100.0),
            ("a".into(), 2008, 150.0),
            ("a".into(), 2005, 100.0),
            ("a".into(), 2009, 150.0),
        ])
        .unwrap();
        let mut pop = YearSeries::new();
        pop.insert(("R1".into(), 2000), 100.0);
        pop.insert(("R1".into(), 2001), 100.0);
        // Zero base exports in 2000: instrument is zero, not an error.
        let iv = build_iv(&trade, &imports, &pop, 4, &[2004]).unwrap();
        assert_eq!(iv[&("R1".into(), 2004)], 0.0);

        // Missing import endpoint is an error.
        let err = build_iv(&trade, &imports, &pop, 4, &[2006]).unwrap_err();
        assert!(matches!(err, ShiftShareError::MissingYear { year: 2006, .. }));

        // Missing or zero population is an error when exposure is nonzero.
        let mut no_pop = YearSeries::new();
        no_pop.insert(("R1".into(), 2000), 0.0);
        let err = build_iv(&trade, &imports, &no_pop, 4, &[2005]).unwrap_err();
        assert!(matches!(err, ShiftShareError::ZeroPopulation { year: 2001, .. }));
    }

    #[test]
    fn placebo_shocks_are_deterministic_with_declared_variance() {
        let products = ["a", "b", "c"];
        let s1 = draw_placebo_shocks(&products, 7);
        let s2 = draw_placebo_shocks(&products, 7);
        assert_eq!(s1, s2);
        let s3 = draw_placebo_shocks(&products, 8);
        assert_ne!(s1, s3);
        assert_ne!(rep_seed(7, 3), rep_seed(7, 4));
        assert!(draw_placebo_shocks(&[], 7).is_empty());

        // 10,000 draws land near the declared variance of 5.
        let many: Vec<String> = (0..10_000).map(|i| format!("P{i}")).collect();
        let refs: Vec<&str> = many.iter().map(String::as_str).collect();
        let shocks = draw_placebo_shocks(&refs, 1);
        let values: Vec<f64> = shocks.values().copied().collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (values.len() - 1) as f64;
        assert!((4.7..=5.3).contains(&var), "sample variance {var}");
    }

    #[test]
    fn iv_matches_hand_shock_examples_and_is_linear() {
        // Symmetric cancellation: equal shares, opposite unit shocks,
        // exposure 10 → exactly zero.
        let trade = TradeTable::new(vec![
            flow("R1", "a", 2000, 5.0),
            flow("R1", "b", 2000, 5.0),
        ])
        .unwrap();
        let mut pop = YearSeries::new();
        pop.insert(("R1".into(), 2000), 1.0);
        let mut shocks = BTreeMap::new();
        shocks.insert("a".to_string(), 1.0);
        shocks.insert("b".to_string(), -1.0);
        let iv = build_iv_with_shocks(&trade, &shocks, &pop, 4, &[2004]).unwrap();
        assert_eq!(iv[&("R1".into(), 2004)], 0.0);

        // Shares {0.3, 0.7}, growths {+2, −2}, exposure 10 → −8.
        let trade = TradeTable::new(vec![
            flow("R1", "a", 2000, 3.0),
            flow("R1", "b", 2000, 7.0),
        ])
        .unwrap();
        let mut shocks = BTreeMap::new();
        shocks.insert("a".to_string(), 2.0);
        shocks.insert("b".to_string(), -2.0);
        let iv = build_iv_with_shocks(&trade, &shocks, &pop, 4, &[2004]).unwrap();
        assert_relative_eq!(iv[&("R1".into(), 2004)], -8.0, max_relative = 1e-14);

        // Linear in shocks: doubling every growth doubles the instrument
        // exactly (scaling by a power of two commutes with every rounding).
        let doubled: BTreeMap<String, f64> =
            shocks.iter().map(|(k, v)| (k.clone(), 2.0 * v)).collect();
        let iv2 = build_iv_with_shocks(&trade, &doubled, &pop, 4, &[2004]).unwrap();
        assert_eq!(
            iv2[&("R1".into(), 2004)],
            2.0 * iv[&("R1".into(), 2004)]
        );
    }

    #[test]
    fn placebo_rejection_counts_are_reproducible() {
        // Tiny null panel: outcome unrelated to the shocks by construction.
        let regions = ["R1", "R2", "R3"];
        let years = [2004, 2005];
        let mut rows_region = Vec::new();
        let mut rows_year = Vec::new();
        let mut outcome = Vec::new();
        for (ri, r) in regions.iter().enumerate() {
            for (yi, y) in years.iter().enumerate() {
                rows_region.push(*r);
                rows_year.push(*y as f64);
                outcome.push(((ri * 7 + yi * 3) % 5) as f64 - 2.0);
            }
        }
        let n = outcome.len();
        let mut panel = Panel::new(n);
        panel.push_categorical("region", rows_region.iter().copied()).unwrap();
        panel.push_numeric("year", rows_year).unwrap();
        panel.push_numeric("dy", outcome).unwrap();

        let mut flows = Vec::new();
        for (ri, r) in regions.iter().enumerate() {
            for year in [2000, 2001] {
                flows.push(flow(r, "a", year, 10.0 + ri as f64));
                flows.push(flow(r, "b", year, 5.0));
            }
        }
        let trade = TradeTable::new(flows).unwrap();
        let mut pop = YearSeries::new();
        for r in &regions {
            for year in [2000, 2001] {
                pop.insert((r.to_string(), year), 50.0);
            }
        }
        let design = DesignSpec {
            outcome: "dy".into(),
            exog: vec!["iv".into()],
            fe: vec!["year".into()],
            cluster: vec!["region".into()],
            ..Default::default()
        };
        let cfg = PlaceboConfig {
            reps: 25,
            seed: 42,
            levels: vec![0.05, 0.10],
            horizon: 4,
            iv_column: "iv".into(),
            region_column: "region".into(),
            year_column: "year".into(),
        };
        let r1 = placebo_rejection(&panel, &design, &trade, &pop, &cfg).unwrap();
        let r2 = placebo_rejection(&panel, &design, &trade, &pop, &cfg).unwrap();
        assert_eq!(r1.rejections, r2.rejections);
        assert_eq!(r1.reps, 25);
        assert!(r1.rates.iter().all(|r| (0.0..=1.0).contains(r)));
        assert!(r1.rates[0] <= r1.rates[1], "5% rate cannot exceed 10% rate");

        let bad = PlaceboConfig { reps: 0, ..cfg.clone() };
        assert!(matches!(
            placebo_rejection(&panel, &design, &trade, &pop, &bad),
            Err(ShiftShareError::InvalidReps(0))
        ));
        let bad = PlaceboConfig { levels: vec![1.5], ..cfg };
        assert!(matches!(
            placebo_rejection(&panel, &design, &trade, &pop, &bad),
            Err(ShiftShareError::OutOfRangeP(_))
        ));
    }

    #[test]
    fn fdr_matches_reference_table() {
        // Twelve p-values whose adjusted values are known to three decimals.
        let p = [
            0.234, 0.242, 0.225, 0.005, 0.081, 0.691, 0.608, 0.332, 0.947, 0.250, 0.383, 0.137,
        ];
        let want = [
            0.429, 0.429, 0.429, 0.060, 0.429, 0.754, 0.730, 0.498, 0.947, 0.429, 0.511, 0.429,
        ];
        let q = fdr_adjust(&p).unwrap();
        for (qi, wi) in q.iter().zip(want) {
            assert!((qi - wi).abs() < 5e-4, "q {qi} vs {wi}");
        }
        // Step-up never decreases along the sorted order, never exceeds 1,
        // and never falls below the raw p-value.
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        for w in order.windows(2) {
            assert!(q[w[0]] <= q[w[1]] + 1e-15);
        }
        for (pi, qi) in p.iter().zip(&q) {
            assert!(qi >= pi && *qi <= 1.0);
        }
        assert!(matches!(
            fdr_adjust(&[0.5, 1.2]),
            Err(ShiftShareError::OutOfRangeP(_))
        ));
        assert!(fdr_adjust(&[]).unwrap().is_empty());
        // m = 1 is the identity; equal p-values stay equal.
        assert_eq!(fdr_adjust(&[0.03]).unwrap(), vec![0.03]);
        assert_eq!(fdr_adjust(&[0.2, 0.2, 0.2]).unwrap(), vec![0.2, 0.2, 0.2]);
    }

    #[test]
    fn balance_rows_carry_family_adjusted_p() {
        let n = 8;
        let iv: Vec<f64> = (0..n).map(|i| (i as f64) - 3.5).collect();
        let tied: Vec<f64> = iv.iter().map(|v| 2.0 * v).collect();
        let loose: Vec<f64> = (0..n).map(|i| ((i * 5 % 7) as f64) - 3.0).collect();
        let mut panel = Panel::new(n);
        panel.push_numeric("iv", iv).unwrap();
        panel.push_numeric("char_tied", tied).unwrap();
        panel.push_numeric("char_loose", loose).unwrap();
        let base = DesignSpec::default();
        let rows = balance_test(
            &panel,
            &base,
            &["char_tied".into(), "char_loose".into()],
            "iv",
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_relative_eq!(rows[0].coef, 2.0, max_relative = 1e-10);
        assert!(rows[0].p < 1e-10);
        assert!(rows[1].p > 0.01);
        let qs = fdr_adjust(&[rows[0].p, rows[1].p]).unwrap();
        assert_relative_eq!(rows[0].q, qs[0], max_relative = 1e-12);
        assert_relative_eq!(rows[1].q, qs[1], max_relative = 1e-12);
    }
}
