//! `downwind balance` — exclusion-restriction balance tests.
//!
//! Joins the instrument onto the pre-period characteristics table and
//! regresses each characteristic on it under the base design. The family
//! of p-values gets a Benjamini–Hochberg adjustment; a characteristic that
//! survives it is evidence against the instrument's validity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use downwind_core::econometrics::DesignSpec;
use downwind_core::ingest::{load_panel_table, load_year_series, Role};
use downwind_core::numeric::fmt_out;
use downwind_core::shiftshare::{balance_test, BalanceRow};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;

#[derive(Serialize)]
struct BalanceReport<'a> {
    design: &'a DesignSpec,
    regressor: &'a str,
    rows: &'a [BalanceRow],
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let mut table = load_panel_table(
        cfg.characteristics_path(),
        cfg.characteristics_roles_path(),
    )?;

    let iv = load_year_series(cfg.iv_path(), ["region_id", "year", "iv"])?;
    let map: BTreeMap<Vec<String>, f64> = iv
        .into_iter()
        .map(|((region, year), v)| (vec![region, year.to_string()], v))
        .collect();
    table.join_column(
        &["region_id", "year"],
        &map,
        &cfg.balance.regressor,
        Role::Regressor,
    )?;

    let characteristics: Vec<String> = if cfg.balance.characteristics.is_empty() {
        table
            .columns_with_role(Role::Outcome)
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        cfg.balance.characteristics.clone()
    };
    if characteristics.is_empty() {
        return Err(CliError::schema(
            "characteristics table declares no outcome columns and none were configured",
        ));
    }

    let base = match &cfg.balance.design {
        Some(d) => d.clone(),
        None => DesignSpec {
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
        },
    };

    let rows = balance_test(
        &table.to_panel(),
        &base,
        &characteristics,
        &cfg.balance.regressor,
    )?;

    let out = cfg.out_dir();
    let csv_path = out.join("balance.csv");
    let json_path = out.join("balance.json");

    let mut body = String::from("characteristic,coef,se,z,p,q\n");
    for r in &rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            r.characteristic,
            fmt_out(r.coef),
            fmt_out(r.se),
            fmt_out(r.z),
            fmt_out(r.p),
            fmt_out(r.q)
        );
    }
    super::write_text(&csv_path, &body)?;
    super::write_json(
        &json_path,
        &BalanceReport {
            design: &base,
            regressor: &cfg.balance.regressor,
            rows: &rows,
        },
    )?;
    write_manifest("balance", cfg, &[csv_path, json_path])?;

    let significant = rows.iter().filter(|r| r.q < 0.05).count();
    println!(
        "balance: {} characteristics tested, {} with q < 0.05 -> {}",
        rows.len(),
        significant,
        out.display()
    );
    Ok(())
}
