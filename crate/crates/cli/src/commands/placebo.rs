//! `downwind placebo` — size of the reduced form under redrawn shocks.
//!
//! Replaces observed world import growth with i.i.d. synthetic shocks,
//! rebuilds the instrument, refits the reduced form, and counts rejections
//! at each nominal level. Under the null the rates should sit near the
//! levels; systematic excess indicts the error structure.

use std::fmt::Write as _;

use serde::Serialize;

use downwind_core::econometrics::DesignSpec;
use downwind_core::ingest::{load_city_registry, load_panel_table, load_trade_table};
use downwind_core::numeric::fmt_out;
use downwind_core::shiftshare::{placebo_rejection, PlaceboConfig, PlaceboResult};

use crate::config::RunConfig;
use crate::error::Result;
use crate::manifest::write_manifest;

#[derive(Serialize)]
struct PlaceboReport<'a> {
    design: &'a DesignSpec,
    placebo: &'a PlaceboConfig,
    result: &'a PlaceboResult,
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.require_seed("placebo")?;

    let table = load_panel_table(cfg.panel_path(), cfg.panel_roles_path())?;
    let design = match &cfg.placebo.design {
        Some(d) => d.clone(),
        None => {
            // Default reduced form: outcome on the placebo instrument alone,
            // under the panel's fixed effects, clustering, and weights.
            let mut d = super::design_from_roles(&table)?;
            d.exog = vec![cfg.placebo.iv_column.clone()];
            d.endog.clear();
            d.instruments.clear();
            d
        }
    };
    let panel = table.to_panel();

    let trade = load_trade_table(cfg.trade_path())?;
    let registry = load_city_registry(cfg.cities_path())?;
    let pop = super::registry_populations(&registry);

    let pcfg = PlaceboConfig {
        reps: cfg.placebo.reps,
        seed,
        levels: cfg.placebo.levels.clone(),
        horizon: cfg.horizon(),
        iv_column: cfg.placebo.iv_column.clone(),
        region_column: cfg.placebo.region_column.clone(),
        year_column: cfg.placebo.year_column.clone(),
    };
    let result = placebo_rejection(&panel, &design, &trade, &pop, &pcfg)?;

    let out = cfg.out_dir();
    let csv_path = out.join("placebo.csv");
    let json_path = out.join("placebo.json");

    let mut body = String::from("level,rejections,rate\n");
    for ((level, rejections), rate) in result
        .levels
        .iter()
        .zip(&result.rejections)
        .zip(&result.rates)
    {
        let _ = writeln!(body, "{},{rejections},{}", fmt_out(*level), fmt_out(*rate));
    }
    super::write_text(&csv_path, &body)?;
    super::write_json(
        &json_path,
        &PlaceboReport {
            design: &design,
            placebo: &pcfg,
            result: &result,
        },
    )?;
    write_manifest("placebo", cfg, &[csv_path, json_path])?;

    let rates: Vec<String> = result
        .levels
        .iter()
        .zip(&result.rates)
        .map(|(l, r)| format!("{l}: {r:.3}"))
        .collect();
    println!(
        "placebo: {} reps, rejection rates {{{}}} -> {}",
        result.reps,
        rates.join(", "),
        out.display()
    );
    Ok(())
}
