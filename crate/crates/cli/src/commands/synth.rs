//! `downwind synth` — generate the full seeded synthetic dataset.
//!
//! Writes every input file the rest of the pipeline consumes into the
//! output directory, so `--data <that dir>` wires the following commands.

use downwind_core::ingest::{
    generate_demo, write_city_registry, write_import_table, write_month_series,
    write_panel_table, write_trade_shocks, write_trade_table, write_wind_table,
    write_year_series,
};

use crate::config::RunConfig;
use crate::error::Result;
use crate::manifest::write_manifest;

pub fn run(cfg: &RunConfig) -> Result<()> {
    cfg.require_seed("synth")?;
    // build_config already copied the run seed into the generator config.
    let demo = generate_demo(&cfg.synth)?;
    let out = cfg.out_dir();

    let cities = out.join("cities.csv");
    let wind = out.join("wind.csv");
    let panel = out.join("panel.csv");
    let panel_roles = out.join("panel_roles.json");
    let trade = out.join("trade.csv");
    let imports = out.join("imports.csv");
    let characteristics = out.join("characteristics.csv");
    let characteristics_roles = out.join("characteristics_roles.json");
    let forest = out.join("forest.csv");
    let outcomes = out.join("outcomes.csv");
    let trade_shocks = out.join("trade_shocks.csv");

    write_city_registry(&demo.registry, &cities)?;
    write_wind_table(&demo.wind, &demo.registry, &wind)?;
    write_panel_table(&demo.panel, &panel, &panel_roles)?;
    write_trade_table(&demo.trade, &trade)?;
    write_import_table(&demo.imports, &imports)?;
    write_panel_table(&demo.characteristics, &characteristics, &characteristics_roles)?;
    write_year_series(&demo.forest, ["region_id", "year", "forest_ha"], &forest)?;
    write_month_series(&demo.outcomes, ["region_id", "month", "outcome"], &outcomes)?;
    write_trade_shocks(&demo.trade_shocks, &trade_shocks)?;

    write_manifest(
        "synth",
        cfg,
        &[
            cities,
            wind,
            panel,
            panel_roles,
            trade,
            imports,
            characteristics,
            characteristics_roles,
            forest,
            outcomes,
            trade_shocks,
        ],
    )?;

    println!(
        "synth: {} cities, {} wind days, panel {}..{} -> {}",
        demo.registry.len(),
        cfg.synth.n_days,
        cfg.synth.panel.year_start,
        cfg.synth.panel.year_end,
        out.display()
    );
    Ok(())
}
