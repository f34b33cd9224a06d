//! Seeded synthetic dataset generator.
//!
//! Produces a complete, internally consistent demo dataset: cities with
//! populations, daily wind samples under one of three regimes, a region×year
//! regression panel whose endogenous regressor really is driven by world
//! import demand (so a shift-share instrument built from the emitted trade
//! and import tables has a genuine first stage), plus the side tables the
//! accounting stage consumes. Everything is drawn from per-table ChaCha
//! streams derived from one seed, so a fixed config reproduces identical
//! output bytes.

use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    City, CityRegistry, ImportTable, IngestError, PanelColumn, PanelTable, Role, TradeFlow,
    TradeShock, TradeTable, WindSampleTable, YearSeries,
};
use crate::dates::Month;
use crate::geo::LonLat;

type Result<T> = std::result::Result<T, IngestError>;

/// Wind generation regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WindRegime {
    /// The same (u, v) at every city on every day.
    Constant { u: f64, v: f64 },
    /// Direction rotates through a full circle every `period_days`, constant
    /// speed, spatially uniform (and therefore exactly affine on any day).
    Rotating { speed: f64, period_days: f64 },
    /// Per-city AR(1) components with the given standard deviation and
    /// day-to-day persistence.
    RandomSmooth { speed_sd: f64, persistence: f64 },
}

impl Default for WindRegime {
    fn default() -> Self {
        WindRegime::RandomSmooth {
            speed_sd: 4.0,
            persistence: 0.7,
        }
    }
}

/// Coefficients of the panel data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelDgp {
    pub year_start: i32,
    pub year_end: i32,
    /// Long-difference horizon in years (shares and exposure lag by the same
    /// amount).
    pub horizon: i32,
    pub n_products: usize,
    /// True effect of the trade regressor on the outcome.
    pub beta: f64,
    /// Idiosyncratic outcome noise standard deviation.
    pub noise_sd: f64,
    /// Number of placebo characteristics emitted for balancing tests.
    pub n_characteristics: usize,
}

impl Default for PanelDgp {
    fn default() -> Self {
        Self {
            year_start: 2002,
            year_end: 2006,
            horizon: 4,
            n_products: 8,
            beta: -0.15,
            noise_sd: 1.0,
            n_characteristics: 3,
        }
    }
}

/// Full configuration of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_cities: usize,
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// lon_min, lon_max, lat_min, lat_max in degrees.
    pub bbox: [f64; 4],
    pub wind_regime: WindRegime,
    pub panel: PanelDgp,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_cities: 12,
            n_days: 60,
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2003, 1, 1).expect("valid date"),
            bbox: [-60.0, -40.0, -25.0, -5.0],
            wind_regime: WindRegime::default(),
            panel: PanelDgp::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cities < 2 {
            return Err(IngestError::InvalidConfig(format!(
                "n_cities must be at least 2, got {}",
                self.n_cities
            )));
        }
        if self.n_days == 0 {
            return Err(IngestError::InvalidConfig("n_days must be positive".into()));
        }
        let [lon_min, lon_max, lat_min, lat_max] = self.bbox;
        let finite = self.bbox.iter().all(|v| v.is_finite());
        if !finite || lon_min >= lon_max || lat_min >= lat_max {
            return Err(IngestError::InvalidConfig(format!("degenerate bbox {:?}", self.bbox)));
        }
        if !(-180.0..=180.0).contains(&lon_min)
            || !(-180.0..=180.0).contains(&lon_max)
            || !(-90.0..=90.0).contains(&lat_min)
            || !(-90.0..=90.0).contains(&lat_max)
        {
            return Err(IngestError::InvalidConfig(format!("bbox out of range {:?}", self.bbox)));
        }
        let p = &self.panel;
        if p.year_end < p.year_start {
            return Err(IngestError::InvalidConfig("panel year range is empty".into()));
        }
        if p.horizon < 1 {
            return Err(IngestError::InvalidConfig("horizon must be at least 1".into()));
        }
        if p.n_products == 0 {
            return Err(IngestError::InvalidConfig("need at least one product".into()));
        }
        if !(p.noise_sd > 0.0) {
            return Err(IngestError::InvalidConfig("noise_sd must be positive".into()));
        }
        match self.wind_regime {
            WindRegime::Constant { u, v } => {
                if !u.is_finite() || !v.is_finite() {
                    return Err(IngestError::InvalidConfig("non-finite constant wind".into()));
                }
            }
            WindRegime::Rotating { speed, period_days } => {
                if !(speed >= 0.0) || !(period_days > 0.0) {
                    return Err(IngestError::InvalidConfig("bad rotating wind parameters".into()));
                }
            }
            WindRegime::RandomSmooth { speed_sd, persistence } => {
                if !(speed_sd >= 0.0) || !(0.0..1.0).contains(&persistence) {
                    return Err(IngestError::InvalidConfig("bad random-smooth wind parameters".into()));
                }
            }
        }
        Ok(())
    }
}

/// Everything the demo pipeline needs, generated in one pass.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub registry: CityRegistry,
    pub wind: WindSampleTable,
    pub panel: PanelTable,
    pub trade: TradeTable,
    pub imports: ImportTable,
    pub characteristics: PanelTable,
    pub forest: YearSeries,
    pub outcomes: super::MonthSeries,
    pub trade_shocks: Vec<TradeShock>,
}

/// Generate the core triple: registry, wind samples, regression panel.
pub fn generate_synthetic(
    config: &SynthConfig,
) -> Result<(CityRegistry, WindSampleTable, PanelTable)> {
    let demo = generate_demo(config)?;
    Ok((demo.registry, demo.wind, demo.panel))
}

/// Generate the full demo dataset (superset of [`generate_synthetic`]).
pub fn generate_demo(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;

    let registry = gen_cities(config)?;
    let wind = gen_wind(config, &registry)?;
    let (trade, imports, econ) = gen_trade(config, &registry);
    let panel = gen_panel(config, &registry, &econ)?;
    let characteristics = gen_characteristics(config, &registry)?;
    let (forest, trade_shocks) = gen_accounting_tables(config, &registry);
    let outcomes = gen_outcomes(config, &registry);

    Ok(SynthOutput {
        registry,
        wind,
        panel,
        trade,
        imports,
        characteristics,
        forest,
        outcomes,
        trade_shocks,
    })
}

fn stream(seed: u64, tag: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn city_ids(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(3);
    (0..n).map(|i| format!("C{i:0width$}")).collect()
}

/// Population years must cover the panel window (with its lags and leads)
/// and the calendar years the wind data touches.
fn population_years(config: &SynthConfig) -> std::ops::RangeInclusive<i32> {
    let p = &config.panel;
    let wind_end = config
        .start_date
        .checked_add_days(Days::new(config.n_days as u64 + 7))
        .expect("date in range");
    let lo = (p.year_start - p.horizon).min(config.start_date.year()) - 1;
    let hi = (p.year_end + p.horizon).max(wind_end.year()) + 1;
    lo..=hi
}

fn gen_cities(config: &SynthConfig) -> Result<CityRegistry> {
    let mut rng = stream(config.seed, 1);
    let [lon_min, lon_max, lat_min, lat_max] = config.bbox;
    let years = population_years(config);
    let mut cities = Vec::with_capacity(config.n_cities);
    for id in city_ids(config.n_cities) {
        let lon = rng.random_range(lon_min..lon_max);
        let lat = rng.random_range(lat_min..lat_max);
        let base: f64 = 10f64.powf(rng.random_range(4.3..6.0));
        let growth: f64 = rng.random_range(0.002..0.02);
        let mut population = BTreeMap::new();
        for year in years.clone() {
            let t = (year - years.start()) as f64;
            population.insert(year, (base * (1.0 + growth).powf(t)).round());
        }
        cities.push(City {
            id,
            loc: LonLat::new(lon, lat),
            population,
        });
    }
    CityRegistry::new(cities)
}

fn gen_wind(config: &SynthConfig, registry: &CityRegistry) -> Result<WindSampleTable> {
    let mut rng = stream(config.seed, 2);
    let mut table = WindSampleTable::new();
    let n = registry.len();
    match config.wind_regime {
        WindRegime::Constant { u, v } => {
            let mut date = config.start_date;
            for _ in 0..config.n_days {
                for city in 0..n {
                    table.insert(city, date, u, v)?;
                }
                date = date.checked_add_days(Days::new(1)).expect("date in range");
            }
        }
        WindRegime::Rotating { speed, period_days } => {
            let mut date = config.start_date;
            for d in 0..config.n_days {
                let theta = std::f64::consts::TAU * d as f64 / period_days;
                let (u, v) = (speed * theta.cos(), speed * theta.sin());
                for city in 0..n {
                    table.insert(city, date, u, v)?;
                }
                date = date.checked_add_days(Days::new(1)).expect("date in range");
            }
        }
        WindRegime::RandomSmooth { speed_sd, persistence } => {
            let innov = Normal::new(0.0, speed_sd.max(f64::MIN_POSITIVE)).expect("valid normal");
            let scale = (1.0 - persistence * persistence).sqrt();
            // State per city, evolved day by day in city order for
            // reproducibility.
            let mut state: Vec<(f64, f64)> = (0..n)
                .map(|_| (innov.sample(&mut rng), innov.sample(&mut rng)))
                .collect();
            let mut date = config.start_date;
            for d in 0..config.n_days {
                for (city, s) in state.iter_mut().enumerate() {
                    if d > 0 {
                        s.0 = persistence * s.0 + scale * innov.sample(&mut rng);
                        s.1 = persistence * s.1 + scale * innov.sample(&mut rng);
                    }
                    table.insert(city, date, s.0, s.1)?;
                }
                date = date.checked_add_days(Days::new(1)).expect("date in range");
            }
        }
    }
    Ok(table)
}

/// Intermediate per-region economic series shared by the trade tables and
/// the panel DGP.
struct EconSeries {
    /// (region index, year) → total exports.
    exports: BTreeMap<(usize, i32), f64>,
    /// (region index, year) → unobserved confounder.
    confounder: BTreeMap<(usize, i32), f64>,
}

fn gen_trade(
    config: &SynthConfig,
    registry: &CityRegistry,
) -> (TradeTable, ImportTable, EconSeries) {
    let mut rng = stream(config.seed, 3);
    let p = &config.panel;
    let n = registry.len();
    let products: Vec<String> = (0..p.n_products).map(|j| format!("P{j:02}")).collect();
    let y_min = p.year_start - p.horizon;
    let y_max = p.year_end + p.horizon;

    // World import series: geometric random walk per product.
    let mut imports_rows = Vec::new();
    let mut import_level: BTreeMap<(usize, i32), f64> = BTreeMap::new();
    let walk = Normal::<f64>::new(0.03, 0.15).expect("valid normal");
    for (j, product) in products.iter().enumerate() {
        let mut level: f64 = 10f64.powf(rng.random_range(2.0..4.0));
        for year in y_min..=y_max {
            imports_rows.push((product.clone(), year, level));
            import_level.insert((j, year), level);
            level *= walk.sample(&mut rng).exp();
        }
    }

    // Region product mix: sparse positive weights, normalized to shares.
    let mut weights = vec![vec![0.0f64; products.len()]; n];
    for row in weights.iter_mut() {
        loop {
            let mut total = 0.0;
            for w in row.iter_mut() {
                *w = if rng.random_range(0.0..1.0) < 0.35 {
                    0.0
                } else {
                    -f64::ln(rng.random_range(1e-12..1.0))
                };
                total += *w;
            }
            if total > 0.0 {
                for w in row.iter_mut() {
                    *w /= total;
                }
                break;
            }
        }
    }

    // Export flows respond one-for-one to world import demand, with noise.
    let flow_noise = Normal::<f64>::new(0.0, 0.05).expect("valid normal");
    let confound_dist = Normal::new(0.0, 1.0).expect("valid normal");
    let mut trade_rows = Vec::new();
    let mut exports = BTreeMap::new();
    let mut confounder = BTreeMap::new();
    for (i, shares) in weights.iter().enumerate() {
        let region = registry.city(i).id.clone();
        let base: f64 = 10f64.powf(rng.random_range(2.5..5.0));
        for year in y_min..=y_max {
            let mut total = 0.0;
            for (j, product) in products.iter().enumerate() {
                if shares[j] == 0.0 {
                    continue;
                }
                let demand = import_level[&(j, year)] / import_level[&(j, y_min)];
                let value = base * shares[j] * demand * flow_noise.sample(&mut rng).exp();
                total += value;
                trade_rows.push(TradeFlow {
                    region: region.clone(),
                    product: product.clone(),
                    year,
                    export_value: value,
                });
            }
            exports.insert((i, year), total);
            confounder.insert((i, year), confound_dist.sample(&mut rng));
        }
    }

    let trade = TradeTable::new(trade_rows).expect("generated flows are valid");
    let imports = ImportTable::new(imports_rows).expect("generated imports are valid");
    (trade, imports, EconSeries { exports, confounder })
}

fn gen_panel(
    config: &SynthConfig,
    registry: &CityRegistry,
    econ: &EconSeries,
) -> Result<PanelTable> {
    let mut rng = stream(config.seed, 4);
    let p = &config.panel;
    let n = registry.len();
    let noise = Normal::new(0.0, p.noise_sd).expect("valid normal");
    let temp_dist = Normal::new(25.0, 3.0).expect("valid normal");
    let rain_dist = Normal::new(100.0, 20.0).expect("valid normal");

    let years: Vec<i32> = (p.year_start..=p.year_end).collect();
    let year_fe: BTreeMap<i32, f64> = years
        .iter()
        .map(|&y| (y, rng.random_range(-1.0..1.0)))
        .collect();
    let macro_fe: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut region_col = Vec::new();
    let mut macro_col = Vec::new();
    let mut year_col = Vec::new();
    let mut pop_col = Vec::new();
    let mut x_col = Vec::new();
    let mut y_col = Vec::new();
    let mut temp_col = Vec::new();
    let mut rain_col = Vec::new();

    for i in 0..n {
        let city = registry.city(i);
        let macro_idx = i % 5;
        for &year in &years {
            let pop = city.population[&year];
            let exp_now = econ.exports[&(i, year)];
            let exp_fwd = econ.exports[&(i, year + p.horizon)];
            let confound = econ.confounder[&(i, year)];
            // Endogenous regressor: forward change in per-capita exports
            // (thousands) plus a confounded component.
            let x = (exp_fwd - exp_now) / pop * 1000.0 + 0.3 * confound;
            let y = p.beta * x
                + 0.5 * confound
                + year_fe[&year]
                + macro_fe[macro_idx]
                + noise.sample(&mut rng);

            region_col.push(city.id.clone());
            macro_col.push(format!("M{macro_idx}"));
            year_col.push(year.to_string());
            pop_col.push(pop);
            x_col.push(x);
            y_col.push(y);
            temp_col.push(temp_dist.sample(&mut rng));
            rain_col.push(rain_dist.sample(&mut rng));
        }
    }

    let names = vec![
        "region_id".to_string(),
        "macro".to_string(),
        "year".to_string(),
        "pop".to_string(),
        "dexport_pc".to_string(),
        "dforest_pc".to_string(),
        "temp".to_string(),
        "rain".to_string(),
    ];
    let cols = vec![
        PanelColumn::Text(region_col),
        PanelColumn::Text(macro_col),
        PanelColumn::Text(year_col),
        PanelColumn::Num(pop_col),
        PanelColumn::Num(x_col),
        PanelColumn::Num(y_col),
        PanelColumn::Num(temp_col),
        PanelColumn::Num(rain_col),
    ];
    let mut roles = BTreeMap::new();
    roles.insert("region_id".to_string(), vec![Role::Cluster]);
    roles.insert("macro".to_string(), vec![Role::Fe]);
    roles.insert("year".to_string(), vec![Role::Fe]);
    roles.insert("pop".to_string(), vec![Role::Weight]);
    roles.insert("dexport_pc".to_string(), vec![Role::Regressor]);
    roles.insert("dforest_pc".to_string(), vec![Role::Outcome]);
    roles.insert("temp".to_string(), vec![Role::Regressor]);
    roles.insert("rain".to_string(), vec![Role::Regressor]);
    PanelTable::from_columns(names, cols, roles)
}

fn gen_characteristics(config: &SynthConfig, registry: &CityRegistry) -> Result<PanelTable> {
    let mut rng = stream(config.seed, 5);
    let p = &config.panel;
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let n = registry.len();
    let k = p.n_characteristics;

    let mut names = vec!["region_id".to_string(), "macro".to_string(), "year".to_string()];
    let mut cols = vec![
        PanelColumn::Text((0..n).map(|i| registry.city(i).id.clone()).collect()),
        PanelColumn::Text((0..n).map(|i| format!("M{}", i % 5)).collect()),
        PanelColumn::Text(vec![p.year_start.to_string(); n]),
    ];
    let mut roles = BTreeMap::new();
    roles.insert("region_id".to_string(), vec![Role::Cluster]);
    roles.insert("macro".to_string(), vec![Role::Fe]);
    for c in 0..k {
        names.push(format!("char_{c}"));
        cols.push(PanelColumn::Num((0..n).map(|_| normal.sample(&mut rng)).collect()));
        roles.insert(format!("char_{c}"), vec![Role::Outcome]);
    }
    PanelTable::from_columns(names, cols, roles)
}

fn gen_accounting_tables(
    config: &SynthConfig,
    registry: &CityRegistry,
) -> (YearSeries, Vec<TradeShock>) {
    let mut rng = stream(config.seed, 6);
    let p = &config.panel;
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    let mut forest = YearSeries::new();
    let mut shocks = Vec::new();
    for i in 0..registry.len() {
        let id = registry.city(i).id.clone();
        let land_ha: f64 = 10f64.powf(rng.random_range(4.7..5.7)).round();
        for year in (p.year_start - 1)..=(p.year_end + 1) {
            let trend = 0.62 - 0.012 * (year - p.year_start) as f64 + noise.sample(&mut rng);
            forest.insert((id.clone(), year), (land_ha * trend.clamp(0.05, 0.95)).round());
        }
        for year in p.year_start..=p.year_end {
            let dtrade: f64 = Normal::<f64>::new(1.0, 0.4)
                .expect("valid normal")
                .sample(&mut rng)
                .abs();
            shocks.push(TradeShock {
                region: id.clone(),
                year,
                dtrade,
                land_ha,
            });
        }
    }
    (forest, shocks)
}

fn gen_outcomes(config: &SynthConfig, registry: &CityRegistry) -> super::MonthSeries {
    let mut rng = stream(config.seed, 7);
    let dist = Normal::new(120.0, 8.0).expect("valid normal");
    let last = config
        .start_date
        .checked_add_days(Days::new(config.n_days as u64 + 6))
        .expect("date in range");
    let months = Month::of(config.start_date).through(Month::of(last));
    let mut out = super::MonthSeries::new();
    for i in 0..registry.len() {
        let id = registry.city(i).id.clone();
        for &month in &months {
            out.insert((id.clone(), month), dist.sample(&mut rng));
        }
    }
    out
}
