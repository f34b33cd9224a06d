//! `downwind aoe-build` — the area-of-effect matrix build.
//!
//! Rasterizes the wind samples, advects a streamline per sender per day,
//! aggregates to the monthly sender × receiver score matrix, cuts decile
//! bins, and writes the matrix, its metadata (with content hash), the
//! pair-month bin labels, and two map exports: one sender-day heatmap and
//! that day's rasterized wind grid. The matrix hash is independent of the
//! thread count.

use std::fmt::Write as _;

use chrono::Days;

use downwind_core::accounting::bins_from_scores;
use downwind_core::aoe::{
    aggregate_daily, aggregate_monthly, compute_bins, compute_heatmap, compute_raw_scores,
    write_heatmap_csv, write_matrix_meta, write_monthly_matrix, MatrixMeta,
};
use downwind_core::dates::Month;
use downwind_core::ingest::{load_city_registry, load_wind_table};
use downwind_core::windfield::{build_grid, rasterize_all, write_grid_csv};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let params = cfg.score_params()?;
    let registry = load_city_registry(cfg.cities_path())?;
    let wind = load_wind_table(cfg.wind_path(), &registry)?;
    let dates = wind.dates();
    let (&first_day, &last_day) = match (dates.first(), dates.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Err(CliError::schema(format!(
                "wind table {} has no samples",
                cfg.wind_path().display()
            )))
        }
    };

    let spec = build_grid(&registry, cfg.grid_res())?;
    let grids = rasterize_all(&spec, &registry, &wind)?;
    let raw = compute_raw_scores(&params, &registry, &grids);
    let daily = aggregate_daily(&raw);

    // Default period: the wind span plus the streamline tail, so the last
    // launches still land inside the aggregation window.
    let (start, end) = match cfg.period_override()? {
        Some(p) => p,
        None => {
            let tail = last_day
                .checked_add_days(Days::new(u64::from(params.n_steps.saturating_sub(1))))
                .ok_or_else(|| CliError::schema("wind dates overflow the calendar"))?;
            (Month::of(first_day), Month::of(tail))
        }
    };
    let monthly = aggregate_monthly(&daily, start, end)?;
    let bins = compute_bins(&monthly)?;

    let out = cfg.out_dir();
    let matrix_path = out.join("matrix.csv");
    let meta_path = out.join("matrix_meta.json");
    let bins_path = out.join("bins.csv");
    let heatmap_path = out.join("heatmap.csv");
    let grid_path = out.join("wind_grid.csv");

    let sha = write_monthly_matrix(&monthly, &registry, &matrix_path)?;
    let meta = MatrixMeta {
        version: downwind_core::VERSION.to_string(),
        params,
        grid: spec,
        period: [start, end],
        cuts: bins.cuts.clone(),
        matrix_sha256: sha.clone(),
    };
    write_matrix_meta(&meta, &meta_path)?;

    let pair_bins = bins_from_scores(&monthly, &registry, &bins)?;
    let mut body = String::from("sender_id,receiver_id,month,bin\n");
    for ((sender, receiver, month), label) in &pair_bins {
        let _ = writeln!(body, "{sender},{receiver},{month},{label}");
    }
    super::write_text(&bins_path, &body)?;

    // Map exports: one sender's scoring footprint and the wind field it
    // was advected through.
    let sender = cfg
        .heatmap
        .sender
        .clone()
        .unwrap_or_else(|| registry.city(0).id.clone());
    let day = cfg.heatmap.day.unwrap_or(first_day);
    let heatmap = compute_heatmap(&params, &registry, &grids, &sender, day)?;
    write_heatmap_csv(&heatmap, &heatmap_path)?;
    let day_grid = grids
        .get(&day)
        .ok_or_else(|| CliError::schema(format!("no wind field for {day}")))?;
    write_grid_csv(day_grid, &grid_path)?;

    write_manifest(
        "aoe-build",
        cfg,
        &[matrix_path, meta_path, bins_path, heatmap_path, grid_path],
    )?;

    println!(
        "aoe-build: {} pair-months over {start}..{end}, matrix sha256 {sha} -> {}",
        monthly.len(),
        out.display()
    );
    Ok(())
}
