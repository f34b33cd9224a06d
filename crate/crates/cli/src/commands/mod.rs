//! Subcommand implementations and the small helpers they share.

pub mod account;
pub mod aoe_build;
pub mod balance;
pub mod fit;
pub mod iv;
pub mod placebo;
pub mod synth;

use std::collections::BTreeSet;
use std::path::Path;

use downwind_core::econometrics::DesignSpec;
use downwind_core::ingest::{CityRegistry, PanelTable, Role, YearSeries};

use crate::error::{CliError, Result};

/// Flatten the registry's per-city population tables into a (id, year)
/// series, the shape the instrument and the ledger consume.
pub(crate) fn registry_populations(registry: &CityRegistry) -> YearSeries {
    let mut pop = YearSeries::new();
    for city in registry.iter() {
        for (&year, &value) in &city.population {
            pop.insert((city.id.clone(), year), value);
        }
    }
    pop
}

/// Distinct calendar years in a panel column that may be stored as text
/// (categorical role) or numeric.
pub(crate) fn year_levels(table: &PanelTable, column: &str) -> Result<Vec<i32>> {
    let mut years = BTreeSet::new();
    if let Ok(values) = table.text(column) {
        for v in values {
            let year: i32 = v.parse().map_err(|_| {
                CliError::schema(format!("year column {column:?} holds non-year value {v:?}"))
            })?;
            years.insert(year);
        }
    } else {
        for &v in table.numeric(column)? {
            if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                return Err(CliError::schema(format!(
                    "year column {column:?} holds non-integer value {v}"
                )));
            }
            years.insert(v as i32);
        }
    }
    Ok(years.into_iter().collect())
}

/// Derive a design from a panel's role sidecar: first outcome column,
/// all regressors, all fixed effects, all cluster dimensions, first weight.
pub(crate) fn design_from_roles(table: &PanelTable) -> Result<DesignSpec> {
    let outcomes = table.columns_with_role(Role::Outcome);
    let outcome = outcomes.first().ok_or_else(|| {
        CliError::schema("panel declares no outcome column and no design was given")
    })?;
    Ok(DesignSpec {
        outcome: outcome.to_string(),
        exog: table
            .columns_with_role(Role::Regressor)
            .iter()
            .map(|s| s.to_string())
            .collect(),
        fe: table
            .columns_with_role(Role::Fe)
            .iter()
            .map(|s| s.to_string())
            .collect(),
        cluster: table
            .columns_with_role(Role::Cluster)
            .iter()
            .map(|s| s.to_string())
            .collect(),
        weight: table
            .columns_with_role(Role::Weight)
            .first()
            .map(|s| s.to_string()),
        ..DesignSpec::default()
    })
}

/// Write a text file, mapping failures to exit 2 with the path named.
pub(crate) fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| CliError::write(path, e))
}

/// Write a pretty JSON document with a trailing newline.
pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::compute(format!("cannot serialize {}: {e}", path.display())))?;
    body.push('\n');
    write_text(path, &body)
}
