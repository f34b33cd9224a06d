//! `downwind iv` — construct the shift-share instrument series.
//!
//! For every region and panel year: base-year export shares across
//! products, times world import growth over the horizon, scaled by lagged
//! exports per capita. Written as `iv.csv` for `fit`, `balance`, and any
//! downstream join.

use downwind_core::ingest::{
    load_city_registry, load_import_table, load_panel_table, load_trade_table, write_year_series,
};
use downwind_core::shiftshare::build_iv;

use crate::config::RunConfig;
use crate::error::Result;
use crate::manifest::write_manifest;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let trade = load_trade_table(cfg.trade_path())?;
    let imports = load_import_table(cfg.imports_path())?;
    let registry = load_city_registry(cfg.cities_path())?;
    let pop = super::registry_populations(&registry);

    // Target years are the panel's: that is where the instrument joins.
    let panel = load_panel_table(cfg.panel_path(), cfg.panel_roles_path())?;
    let years = super::year_levels(&panel, "year")?;

    let iv = build_iv(&trade, &imports, &pop, cfg.horizon(), &years)?;

    let out = cfg.out_dir();
    let iv_path = out.join("iv.csv");
    write_year_series(&iv, ["region_id", "year", "iv"], &iv_path)?;
    write_manifest("iv", cfg, &[iv_path])?;

    println!(
        "iv: {} region-years, horizon {} -> {}",
        iv.len(),
        cfg.horizon(),
        out.display()
    );
    Ok(())
}
