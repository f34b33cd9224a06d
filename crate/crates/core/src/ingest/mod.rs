//! Typed loaders and writers for the canonical CSV inputs.
//!
//! Every table format the pipeline touches lives here: the city registry,
//! daily wind samples, regression panels with a JSON role sidecar, trade
//! flows, world import series, and the small keyed series used by the
//! accounting stage. Loaders validate hard and reject rather than impute:
//! duplicate keys, unknown locations, out-of-range coordinates, missing or
//! non-finite values in role columns are all errors, not warnings.
//!
//! Writers emit a canonical form — fixed column order, rows sorted by key,
//! floats rendered with [`crate::numeric::fmt_out`] — so writing a loaded
//! table reproduces the file byte for byte.

mod synth;

pub use synth::{
    generate_demo, generate_synthetic, PanelDgp, SynthConfig, SynthOutput, WindRegime,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::econometrics::Panel;
use crate::geo::LonLat;
use crate::numeric::fmt_out;

/// Errors raised while reading, validating, or writing input tables.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
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
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("coordinate out of range for {id:?}: lon {lon}, lat {lat}")]
    CoordinateOutOfRange { id: String, lon: f64, lat: f64 },
    #[error("wind sample references unknown location {0:?}")]
    UnknownLocation(String),
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("non-finite value in column {column:?}, data row {row}")]
    NonFiniteValue { column: String, row: usize },
    #[error("missing value in column {column:?}, data row {row}")]
    MissingValue { column: String, row: usize },
    #[error("negative weight in column {column:?}, data row {row}")]
    NegativeWeight { column: String, row: usize },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

type Result<T> = std::result::Result<T, IngestError>;

// ---------------------------------------------------------------------------
// City registry
// ---------------------------------------------------------------------------

/// One site that can send and receive wind-borne scores.
#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub id: String,
    pub loc: LonLat,
    /// Population by calendar year; may be empty when the registry is used
    /// purely for geometry.
    pub population: BTreeMap<i32, f64>,
}

/// The ordered set of cities; row order is the canonical file order.
#[derive(Debug, Clone)]
pub struct CityRegistry {
    cities: Vec<City>,
    by_id: BTreeMap<String, usize>,
}

impl CityRegistry {
    pub fn new(cities: Vec<City>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for (i, city) in cities.iter().enumerate() {
            if city.id.is_empty() {
                return Err(IngestError::Schema(format!("empty city_id in row {}", i + 1)));
            }
            if !city.loc.lon.is_finite() || !city.loc.lat.is_finite() {
                return Err(IngestError::NonFiniteValue {
                    column: "longitude/latitude".into(),
                    row: i + 1,
                });
            }
            if !(-180.0..=180.0).contains(&city.loc.lon) || !(-90.0..=90.0).contains(&city.loc.lat)
            {
                return Err(IngestError::CoordinateOutOfRange {
                    id: city.id.clone(),
                    lon: city.loc.lon,
                    lat: city.loc.lat,
                });
            }
            for (&year, &pop) in &city.population {
                if !pop.is_finite() || pop < 0.0 {
                    return Err(IngestError::Schema(format!(
                        "population for {:?} in {} must be finite and non-negative, got {}",
                        city.id, year, pop
                    )));
                }
            }
            if by_id.insert(city.id.clone(), i).is_some() {
                return Err(IngestError::DuplicateId(city.id.clone()));
            }
        }
        Ok(Self { cities, by_id })
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &City> {
        self.cities.iter()
    }

    pub fn city(&self, index: usize) -> &City {
        &self.cities[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Axis-aligned bounding box over all city coordinates.
    pub fn bbox(&self) -> Option<(LonLat, LonLat)> {
        let first = self.cities.first()?;
        let mut lo = first.loc;
        let mut hi = first.loc;
        for c in &self.cities[1..] {
            lo.lon = lo.lon.min(c.loc.lon);
            lo.lat = lo.lat.min(c.loc.lat);
            hi.lon = hi.lon.max(c.loc.lon);
            hi.lat = hi.lat.max(c.loc.lat);
        }
        Some((lo, hi))
    }

    /// Union of population years across cities, ascending.
    pub fn population_years(&self) -> Vec<i32> {
        let mut years = BTreeSet::new();
        for c in &self.cities {
            years.extend(c.population.keys().copied());
        }
        years.into_iter().collect()
    }

    pub fn population(&self, id: &str, year: i32) -> Option<f64> {
        self.index_of(id)
            .and_then(|i| self.cities[i].population.get(&year).copied())
    }
}

/// Load `cities.csv`: header `city_id,longitude,latitude[,pop_YYYY…]`.
pub fn load_city_registry<P: AsRef<Path>>(path: P) -> Result<CityRegistry> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = open_csv(path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    if headers.len() < 3 || headers[0] != "city_id" || headers[1] != "longitude" || headers[2] != "latitude"
    {
        return Err(IngestError::Schema(format!(
            "cities file must start with city_id,longitude,latitude, got {:?}",
            headers
        )));
    }
    let mut years = Vec::new();
    for h in &headers[3..] {
        let year = h
            .strip_prefix("pop_")
            .and_then(|y| y.parse::<i32>().ok())
            .ok_or_else(|| {
                IngestError::Schema(format!("unexpected cities column {h:?} (want pop_YYYY)"))
            })?;
        if years.contains(&year) {
            return Err(IngestError::Schema(format!("duplicate population column {h:?}")));
        }
        years.push(year);
    }

    let mut cities = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        let lon = parse_f64(&record[1], "longitude", row)?;
        let lat = parse_f64(&record[2], "latitude", row)?;
        let mut population = BTreeMap::new();
        for (k, &year) in years.iter().enumerate() {
            let cell = &record[3 + k];
            if cell.is_empty() {
                return Err(IngestError::MissingValue {
                    column: format!("pop_{year}"),
                    row,
                });
            }
            population.insert(year, parse_f64(cell, &format!("pop_{year}"), row)?);
        }
        cities.push(City {
            id: record[0].to_string(),
            loc: LonLat::new(lon, lat),
            population,
        });
    }
    CityRegistry::new(cities)
}

/// Write a registry in canonical form (input row order, pop years ascending).
pub fn write_city_registry<P: AsRef<Path>>(registry: &CityRegistry, path: P) -> Result<()> {
    let years = registry.population_years();
    let mut out = String::from("city_id,longitude,latitude");
    for y in &years {
        let _ = write!(out, ",pop_{y}");
    }
    out.push('\n');
    for city in registry.iter() {
        let _ = write!(out, "{},{},{}", city.id, fmt_out(city.loc.lon), fmt_out(city.loc.lat));
        for y in &years {
            let pop = city.population.get(y).ok_or_else(|| {
                IngestError::Schema(format!(
                    "city {:?} lacks population for {y}; registry is not rectangular",
                    city.id
                ))
            })?;
            let _ = write!(out, ",{}", fmt_out(*pop));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// Wind samples
// ---------------------------------------------------------------------------

/// Daily station wind samples keyed by (city index, date).
///
/// `u` is the eastward and `v` the northward wind component in metres per
/// second. City indices refer to the registry the table was loaded against.
#[derive(Debug, Clone, Default)]
pub struct WindSampleTable {
    by_date: BTreeMap<NaiveDate, Vec<(usize, f64, f64)>>,
    n: usize,
}

impl WindSampleTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, city: usize, date: NaiveDate, u: f64, v: f64) -> Result<()> {
        if !u.is_finite() || !v.is_finite() {
            return Err(IngestError::NonFiniteValue {
                column: "u_ms/v_ms".into(),
                row: self.n + 1,
            });
        }
        let day = self.by_date.entry(date).or_default();
        if day.iter().any(|&(c, _, _)| c == city) {
            return Err(IngestError::DuplicateKey(format!("(city #{city}, {date})")));
        }
        day.push((city, u, v));
        self.n += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// All dates with at least one sample, ascending.
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.by_date.keys().copied().collect()
    }

    /// Samples for one date as (city index, u, v), sorted by city index.
    pub fn samples_on(&self, date: NaiveDate) -> Option<&[(usize, f64, f64)]> {
        self.by_date.get(&date).map(|v| v.as_slice())
    }

    fn sort_days(&mut self) {
        for day in self.by_date.values_mut() {
            day.sort_by_key(|&(c, _, _)| c);
        }
    }
}

/// Load `wind.csv` (`location_id,date,u_ms,v_ms`) against a registry.
pub fn load_wind_table<P: AsRef<Path>>(path: P, registry: &CityRegistry) -> Result<WindSampleTable> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = open_csv(path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    expect_headers(&headers, &["location_id", "date", "u_ms", "v_ms"])?;

    let mut table = WindSampleTable::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        let id = &record[0];
        let city = registry
            .index_of(id)
            .ok_or_else(|| IngestError::UnknownLocation(id.to_string()))?;
        let date: NaiveDate = record[1].parse().map_err(|_| {
            IngestError::Schema(format!("bad date {:?} in data row {row} (want YYYY-MM-DD)", &record[1]))
        })?;
        let u = parse_f64(&record[2], "u_ms", row)?;
        let v = parse_f64(&record[3], "v_ms", row)?;
        table
            .insert(city, date, u, v)
            .map_err(|_| IngestError::DuplicateKey(format!("({id}, {date})")))?;
    }
    table.sort_days();
    Ok(table)
}

/// Write wind samples in canonical order: by date, then city id.
pub fn write_wind_table<P: AsRef<Path>>(
    table: &WindSampleTable,
    registry: &CityRegistry,
    path: P,
) -> Result<()> {
    let mut out = String::from("location_id,date,u_ms,v_ms\n");
    for date in table.dates() {
        let mut rows: Vec<(&str, f64, f64)> = table
            .samples_on(date)
            .unwrap_or(&[])
            .iter()
            .map(|&(c, u, v)| (registry.city(c).id.as_str(), u, v))
            .collect();
        rows.sort_by_key(|&(id, _, _)| id.to_string());
        for (id, u, v) in rows {
            let _ = writeln!(out, "{id},{date},{},{}", fmt_out(u), fmt_out(v));
        }
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// Regression panels
// ---------------------------------------------------------------------------

/// Role a panel column plays in estimation, declared in the JSON sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Outcome,
    Regressor,
    Instrument,
    Fe,
    Cluster,
    Weight,
}

impl Role {
    /// Numeric roles require parseable finite floats; categorical roles keep
    /// the cell text as a group key.
    pub fn is_numeric(self) -> bool {
        matches!(self, Role::Outcome | Role::Regressor | Role::Instrument | Role::Weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PanelColumn {
    Num(Vec<f64>),
    Text(Vec<String>),
}

impl PanelColumn {
    fn len(&self) -> usize {
        match self {
            PanelColumn::Num(v) => v.len(),
            PanelColumn::Text(v) => v.len(),
        }
    }
}

/// A rectangular table of named columns plus role declarations.
///
/// Columns without a declared role are kept as text; they typically serve as
/// join keys. A column may carry several roles (e.g. a region id used both as
/// a fixed effect and a cluster dimension) but cannot mix a numeric role with
/// a categorical one.
#[derive(Debug, Clone)]
pub struct PanelTable {
    names: Vec<String>,
    cols: Vec<PanelColumn>,
    roles: BTreeMap<String, Vec<Role>>,
    n_rows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RolesSidecar {
    roles: BTreeMap<String, RoleSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RoleSpec {
    One(Role),
    Many(Vec<Role>),
}

impl RoleSpec {
    fn to_vec(&self) -> Vec<Role> {
        match self {
            RoleSpec::One(r) => vec![*r],
            RoleSpec::Many(rs) => rs.clone(),
        }
    }
}

impl PanelTable {
    /// Build a table from columns; roles decide numeric vs text validation.
    pub fn from_columns(
        names: Vec<String>,
        cols: Vec<PanelColumn>,
        roles: BTreeMap<String, Vec<Role>>,
    ) -> Result<Self> {
        if names.len() != cols.len() {
            return Err(IngestError::Schema("column name/data count mismatch".into()));
        }
        let n_rows = cols.first().map(|c| c.len()).unwrap_or(0);
        if cols.iter().any(|c| c.len() != n_rows) {
            return Err(IngestError::Schema("ragged panel columns".into()));
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(IngestError::DuplicateId(n.clone()));
            }
        }
        let table = Self { names, cols, roles, n_rows };
        table.validate_roles()?;
        Ok(table)
    }

    fn validate_roles(&self) -> Result<()> {
        for (name, roles) in &self.roles {
            let idx = self
                .index(name)
                .ok_or_else(|| IngestError::Schema(format!("role declared for unknown column {name:?}")))?;
            let numeric = roles.iter().any(|r| r.is_numeric());
            let categorical = roles.iter().any(|r| !r.is_numeric());
            if numeric && categorical {
                return Err(IngestError::Schema(format!(
                    "column {name:?} mixes numeric and categorical roles"
                )));
            }
            match (&self.cols[idx], numeric) {
                (PanelColumn::Text(_), true) => {
                    return Err(IngestError::Schema(format!(
                        "column {name:?} has a numeric role but text data"
                    )))
                }
                (PanelColumn::Num(vals), _) => {
                    for (row, v) in vals.iter().enumerate() {
                        if !v.is_finite() {
                            return Err(IngestError::NonFiniteValue {
                                column: name.clone(),
                                row: row + 1,
                            });
                        }
                        if roles.contains(&Role::Weight) && *v < 0.0 {
                            return Err(IngestError::NegativeWeight {
                                column: name.clone(),
                                row: row + 1,
                            });
                        }
                    }
                }
                _ => {}
            }
            if let PanelColumn::Text(vals) = &self.cols[idx] {
                for (row, v) in vals.iter().enumerate() {
                    if v.is_empty() {
                        return Err(IngestError::MissingValue {
                            column: name.clone(),
                            row: row + 1,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles_of(&self, name: &str) -> &[Role] {
        self.roles.get(name).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn columns_with_role(&self, role: Role) -> Vec<&str> {
        self.names
            .iter()
            .filter(|n| self.roles_of(n).contains(&role))
            .map(|n| n.as_str())
            .collect()
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.index(name).map(|i| &self.cols[i]) {
            Some(PanelColumn::Num(v)) => Ok(v),
            Some(PanelColumn::Text(_)) => {
                Err(IngestError::Schema(format!("column {name:?} is not numeric")))
            }
            None => Err(IngestError::Schema(format!("unknown column {name:?}"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&[String]> {
        match self.index(name).map(|i| &self.cols[i]) {
            Some(PanelColumn::Text(v)) => Ok(v),
            Some(PanelColumn::Num(_)) => {
                Err(IngestError::Schema(format!("column {name:?} is not text")))
            }
            None => Err(IngestError::Schema(format!("unknown column {name:?}"))),
        }
    }

    /// Append a numeric column (used when joining derived series like an
    /// instrument into a loaded panel).
    pub fn push_numeric_column(&mut self, name: &str, values: Vec<f64>, role: Role) -> Result<()> {
        if self.index(name).is_some() {
            return Err(IngestError::DuplicateId(name.to_string()));
        }
        if values.len() != self.n_rows {
            return Err(IngestError::Schema(format!(
                "column {name:?} has {} rows, panel has {}",
                values.len(),
                self.n_rows
            )));
        }
        self.names.push(name.to_string());
        self.cols.push(PanelColumn::Num(values));
        self.roles.insert(name.to_string(), vec![role]);
        self.validate_roles()
    }

    /// Join a keyed value map as a new numeric column. Every row must find
    /// its key; loaders reject rather than impute.
    pub fn join_column(
        &mut self,
        key_cols: &[&str],
        map: &BTreeMap<Vec<String>, f64>,
        name: &str,
        role: Role,
    ) -> Result<()> {
        let keys: Vec<&[String]> = key_cols
            .iter()
            .map(|c| self.text(c))
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(self.n_rows);
        for row in 0..self.n_rows {
            let key: Vec<String> = keys.iter().map(|col| col[row].clone()).collect();
            match map.get(&key) {
                Some(v) => values.push(*v),
                None => {
                    return Err(IngestError::MissingValue {
                        column: name.to_string(),
                        row: row + 1,
                    })
                }
            }
        }
        self.push_numeric_column(name, values, role)
    }

    /// Convert to an estimation panel: numeric columns stay numeric, text
    /// columns become categoricals with lexicographically coded levels.
    pub fn to_panel(&self) -> Panel {
        let mut panel = Panel::new(self.n_rows);
        for (name, col) in self.names.iter().zip(&self.cols) {
            match col {
                PanelColumn::Num(v) => panel
                    .push_numeric(name, v.clone())
                    .expect("validated column"),
                PanelColumn::Text(v) => panel
                    .push_categorical(name, v.iter().map(|s| s.as_str()))
                    .expect("validated column"),
            }
        }
        panel
    }
}

/// Load a panel CSV plus its JSON role sidecar.
pub fn load_panel_table<P: AsRef<Path>, Q: AsRef<Path>>(
    csv_path: P,
    roles_path: Q,
) -> Result<PanelTable> {
    let roles_str = roles_path.as_ref().display().to_string();
    let sidecar_raw = std::fs::read_to_string(roles_path.as_ref()).map_err(|source| {
        IngestError::Read {
            path: roles_str.clone(),
            source,
        }
    })?;
    let sidecar: RolesSidecar = serde_json::from_str(&sidecar_raw)
        .map_err(|e| IngestError::Schema(format!("bad roles sidecar {roles_str}: {e}")))?;
    let roles: BTreeMap<String, Vec<Role>> =
        sidecar.roles.iter().map(|(k, v)| (k.clone(), v.to_vec())).collect();

    let path_str = csv_path.as_ref().display().to_string();
    let mut rdr = open_csv(csv_path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    for name in roles.keys() {
        if !headers.contains(name) {
            return Err(IngestError::Schema(format!(
                "role declared for column {name:?} not present in {path_str}"
            )));
        }
    }

    let numeric: Vec<bool> = headers
        .iter()
        .map(|h| roles.get(h).map(|rs| rs.iter().any(|r| r.is_numeric())).unwrap_or(false))
        .collect();
    let mut cols: Vec<PanelColumn> = numeric
        .iter()
        .map(|&n| if n { PanelColumn::Num(Vec::new()) } else { PanelColumn::Text(Vec::new()) })
        .collect();

    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        for (k, cell) in record.iter().enumerate() {
            match &mut cols[k] {
                PanelColumn::Num(v) => {
                    if cell.is_empty() {
                        return Err(IngestError::MissingValue {
                            column: headers[k].clone(),
                            row,
                        });
                    }
                    v.push(parse_f64(cell, &headers[k], row)?);
                }
                PanelColumn::Text(v) => v.push(cell.to_string()),
            }
        }
    }
    PanelTable::from_columns(headers, cols, roles)
}

/// Write a panel and its sidecar in canonical form.
pub fn write_panel_table<P: AsRef<Path>, Q: AsRef<Path>>(
    table: &PanelTable,
    csv_path: P,
    roles_path: Q,
) -> Result<()> {
    let mut out = table.names.join(",");
    out.push('\n');
    for row in 0..table.n_rows {
        let mut first = true;
        for col in &table.cols {
            if !first {
                out.push(',');
            }
            first = false;
            match col {
                PanelColumn::Num(v) => out.push_str(&fmt_out(v[row])),
                PanelColumn::Text(v) => out.push_str(&v[row]),
            }
        }
        out.push('\n');
    }
    write_file(csv_path, &out)?;

    let sidecar = RolesSidecar {
        roles: table
            .roles
            .iter()
            .map(|(k, v)| {
                let spec = if v.len() == 1 {
                    RoleSpec::One(v[0])
                } else {
                    RoleSpec::Many(v.clone())
                };
                (k.clone(), spec)
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("serializable sidecar");
    write_file(roles_path, &format!("{json}\n"))
}

// ---------------------------------------------------------------------------
// Trade flows and import series
// ---------------------------------------------------------------------------

/// One region × product × year export observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeFlow {
    pub region: String,
    pub product: String,
    pub year: i32,
    pub export_value: f64,
}

/// Export flows indexed by (region, year); values must be finite and ≥ 0.
#[derive(Debug, Clone)]
pub struct TradeTable {
    rows: Vec<TradeFlow>,
    by_region_year: BTreeMap<(String, i32), Vec<usize>>,
    products: BTreeSet<String>,
    regions: BTreeSet<String>,
}

impl TradeTable {
    pub fn new(rows: Vec<TradeFlow>) -> Result<Self> {
        let mut by_region_year: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
        let mut products = BTreeSet::new();
        let mut regions = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for (i, row) in rows.iter().enumerate() {
            if !row.export_value.is_finite() || row.export_value < 0.0 {
                return Err(IngestError::Schema(format!(
                    "export_value must be finite and non-negative, got {} in data row {}",
                    row.export_value,
                    i + 1
                )));
            }
            if !seen.insert((row.region.clone(), row.product.clone(), row.year)) {
                return Err(IngestError::DuplicateKey(format!(
                    "({}, {}, {})",
                    row.region, row.product, row.year
                )));
            }
            by_region_year
                .entry((row.region.clone(), row.year))
                .or_default()
                .push(i);
            products.insert(row.product.clone());
            regions.insert(row.region.clone());
        }
        Ok(Self {
            rows,
            by_region_year,
            products,
            regions,
        })
    }

    pub fn rows(&self) -> &[TradeFlow] {
        &self.rows
    }

    pub fn products(&self) -> impl Iterator<Item = &str> {
        self.products.iter().map(|s| s.as_str())
    }

    pub fn regions(&self) -> impl Iterator<Item = &str> {
        self.regions.iter().map(|s| s.as_str())
    }

    /// Flows for one region-year, in input order.
    pub fn flows_for(&self, region: &str, year: i32) -> impl Iterator<Item = &TradeFlow> {
        self.by_region_year
            .get(&(region.to_string(), year))
            .into_iter()
            .flatten()
            .map(move |&i| &self.rows[i])
    }

    /// Total exports of a region in a year (zero when nothing is recorded).
    pub fn export_total(&self, region: &str, year: i32) -> f64 {
        self.flows_for(region, year).map(|f| f.export_value).sum()
    }
}

/// Load `trade.csv` (`region_id,product_id,year,export_value`).
pub fn load_trade_table<P: AsRef<Path>>(path: P) -> Result<TradeTable> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = open_csv(path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    expect_headers(&headers, &["region_id", "product_id", "year", "export_value"])?;
    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        rows.push(TradeFlow {
            region: record[0].to_string(),
            product: record[1].to_string(),
            year: parse_year(&record[2], row)?,
            export_value: parse_f64(&record[3], "export_value", row)?,
        });
    }
    TradeTable::new(rows)
}

/// Write trade flows sorted by (region, product, year).
pub fn write_trade_table<P: AsRef<Path>>(table: &TradeTable, path: P) -> Result<()> {
    let mut rows: Vec<&TradeFlow> = table.rows().iter().collect();
    rows.sort_by(|a, b| {
        (&a.region, &a.product, a.year).cmp(&(&b.region, &b.product, b.year))
    });
    let mut out = String::from("region_id,product_id,year,export_value\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.region, r.product, r.year, fmt_out(r.export_value));
    }
    write_file(path, &out)
}

/// World import values by (product, year).
#[derive(Debug, Clone, Default)]
pub struct ImportTable {
    map: BTreeMap<(String, i32), f64>,
}

impl ImportTable {
    pub fn new(rows: Vec<(String, i32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, (product, year, value)) in rows.into_iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(IngestError::Schema(format!(
                    "import_value must be finite and non-negative, got {value} in data row {}",
                    i + 1
                )));
            }
            if map.insert((product.clone(), year), value).is_some() {
                return Err(IngestError::DuplicateKey(format!("({product}, {year})")));
            }
        }
        Ok(Self { map })
    }

    pub fn get(&self, product: &str, year: i32) -> Option<f64> {
        self.map.get(&(product.to_string(), year)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i32, f64)> {
        self.map.iter().map(|((p, y), v)| (p.as_str(), *y, *v))
    }
}

/// Load `imports.csv` (`product_id,year,import_value`).
pub fn load_import_table<P: AsRef<Path>>(path: P) -> Result<ImportTable> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = open_csv(path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    expect_headers(&headers, &["product_id", "year", "import_value"])?;
    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        rows.push((
            record[0].to_string(),
            parse_year(&record[1], row)?,
            parse_f64(&record[2], "import_value", row)?,
        ));
    }
    ImportTable::new(rows)
}

/// Write imports sorted by (product, year).
pub fn write_import_table<P: AsRef<Path>>(table: &ImportTable, path: P) -> Result<()> {
    let mut out = String::from("product_id,year,import_value\n");
    for (p, y, v) in table.iter() {
        let _ = writeln!(out, "{p},{y},{}", fmt_out(v));
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// Small keyed series used by the accounting stage
// ---------------------------------------------------------------------------

/// Values keyed by (id, year), e.g. forest stock or population.
pub type YearSeries = BTreeMap<(String, i32), f64>;

/// Values keyed by (id, calendar month), e.g. receiver health outcomes.
pub type MonthSeries = BTreeMap<(String, crate::dates::Month), f64>;

/// Load a 3-column `id,year,value` series with an exact expected header.
pub fn load_year_series<P: AsRef<Path>>(path: P, columns: [&str; 3]) -> Result<YearSeries> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = open_csv(path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    expect_headers(&headers, &columns)?;
    let mut map = YearSeries::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        let key = (record[0].to_string(), parse_year(&record[1], row)?);
        let value = parse_f64(&record[2], columns[2], row)?;
        if map.insert(key.clone(), value).is_some() {
            return Err(IngestError::DuplicateKey(format!("({}, {})", key.0, key.1)));
        }
    }
    Ok(map)
}

/// Write a year series sorted by (id, year).
pub fn write_year_series<P: AsRef<Path>>(
    series: &YearSeries,
    columns: [&str; 3],
    path: P,
) -> Result<()> {
    let mut out = format!("{},{},{}\n", columns[0], columns[1], columns[2]);
    for ((id, year), v) in series {
        let _ = writeln!(out, "{id},{year},{}", fmt_out(*v));
    }
    write_file(path, &out)
}

/// Load a 3-column `id,month,value` series (month formatted `YYYY-MM`).
pub fn load_month_series<P: AsRef<Path>>(path: P, columns: [&str; 3]) -> Result<MonthSeries> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = open_csv(path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    expect_headers(&headers, &columns)?;
    let mut map = MonthSeries::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        let month: crate::dates::Month = record[1].parse()?;
        let key = (record[0].to_string(), month);
        let value = parse_f64(&record[2], columns[2], row)?;
        if map.insert(key.clone(), value).is_some() {
            return Err(IngestError::DuplicateKey(format!("({}, {})", key.0, key.1)));
        }
    }
    Ok(map)
}

/// Write a month series sorted by (id, month).
pub fn write_month_series<P: AsRef<Path>>(
    series: &MonthSeries,
    columns: [&str; 3],
    path: P,
) -> Result<()> {
    let mut out = format!("{},{},{}\n", columns[0], columns[1], columns[2]);
    for ((id, month), v) in series {
        let _ = writeln!(out, "{id},{month},{}", fmt_out(*v));
    }
    write_file(path, &out)
}

/// Load a `bin,coef` coefficient table. An empty table is a schema error —
/// accounting cannot run without coefficients.
pub fn load_bin_coefficients<P: AsRef<Path>>(path: P) -> Result<Vec<(String, f64)>> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = open_csv(path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    if headers.len() < 2 || headers[0] != "bin" || headers[1] != "coef" {
        return Err(IngestError::Schema(format!(
            "coefficient table must start with bin,coef, got {:?}",
            headers
        )));
    }
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        let bin = record[0].to_string();
        if !seen.insert(bin.clone()) {
            return Err(IngestError::DuplicateKey(bin));
        }
        rows.push((bin, parse_f64(&record[1], "coef", row)?));
    }
    if rows.is_empty() {
        return Err(IngestError::Schema(format!("coefficient table {path_str} has no rows")));
    }
    Ok(rows)
}

/// One sender-year trade shock with the land area it can act on.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeShock {
    pub region: String,
    pub year: i32,
    /// Change in trade exposure, thousand currency units per capita.
    pub dtrade: f64,
    /// Land area of the region in hectares.
    pub land_ha: f64,
}

/// Load `trade_shocks.csv` (`region_id,year,dtrade,land_ha`).
pub fn load_trade_shocks<P: AsRef<Path>>(path: P) -> Result<Vec<TradeShock>> {
    let path_str = path.as_ref().display().to_string();
    let mut rdr = open_csv(path.as_ref())?;
    let headers = read_headers(&mut rdr, &path_str)?;
    expect_headers(&headers, &["region_id", "year", "dtrade", "land_ha"])?;
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let row = row + 1;
        let shock = TradeShock {
            region: record[0].to_string(),
            year: parse_year(&record[1], row)?,
            dtrade: parse_f64(&record[2], "dtrade", row)?,
            land_ha: parse_f64(&record[3], "land_ha", row)?,
        };
        if !seen.insert((shock.region.clone(), shock.year)) {
            return Err(IngestError::DuplicateKey(format!("({}, {})", shock.region, shock.year)));
        }
        rows.push(shock);
    }
    Ok(rows)
}

/// Write trade shocks sorted by (region, year).
pub fn write_trade_shocks<P: AsRef<Path>>(shocks: &[TradeShock], path: P) -> Result<()> {
    let mut sorted: Vec<&TradeShock> = shocks.iter().collect();
    sorted.sort_by(|a, b| (&a.region, a.year).cmp(&(&b.region, b.year)));
    let mut out = String::from("region_id,year,dtrade,land_ha\n");
    for s in sorted {
        let _ = writeln!(out, "{},{},{},{}", s.region, s.year, fmt_out(s.dtrade), fmt_out(s.land_ha));
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// Shared parsing helpers
// ---------------------------------------------------------------------------

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Read {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn read_headers(rdr: &mut csv::Reader<std::fs::File>, path: &str) -> Result<Vec<String>> {
    let headers = rdr.headers().map_err(|source| IngestError::Csv {
        path: path.to_string(),
        source,
    })?;
    Ok(headers.iter().map(|h| h.to_string()).collect())
}

fn expect_headers(got: &[String], want: &[&str]) -> Result<()> {
    if got.len() != want.len() || got.iter().zip(want).any(|(g, w)| g != w) {
        return Err(IngestError::Schema(format!(
            "unexpected header {:?}, want {:?}",
            got, want
        )));
    }
    Ok(())
}

fn parse_f64(cell: &str, column: &str, row: usize) -> Result<f64> {
    if cell.is_empty() {
        return Err(IngestError::MissingValue {
            column: column.to_string(),
            row,
        });
    }
    let v: f64 = cell.parse().map_err(|_| {
        IngestError::Schema(format!("cannot parse {cell:?} as number in column {column:?}, data row {row}"))
    })?;
    if !v.is_finite() {
        return Err(IngestError::NonFiniteValue {
            column: column.to_string(),
            row,
        });
    }
    Ok(v)
}

fn parse_year(cell: &str, row: usize) -> Result<i32> {
    cell.parse().map_err(|_| {
        IngestError::Schema(format!("cannot parse {cell:?} as year, data row {row}"))
    })
}

fn write_file<P: AsRef<Path>>(path: P, contents: &str) -> Result<()> {
    std::fs::write(path.as_ref(), contents).map_err(|source| IngestError::Write {
        path: path.as_ref().display().to_string(),
        source,
    })
}
