//! `downwind fit` — estimation.
//!
//! Two modes:
//!
//! * `panel` — estimate a design (explicit in the config, or derived from
//!   the panel's role sidecar) on the regression panel, optionally joining
//!   the instrument artifact first. OLS or 2SLS per the design.
//! * `downwind-bins` — assemble the pair-month panel from the score matrix,
//!   standardized forest losses, and receiver outcomes, then estimate the
//!   exposure × wind-bin interaction design. The resulting coefficient
//!   table is the input to `account`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use downwind_core::accounting::{bins_from_scores, standardize_loss};
use downwind_core::aoe::{WindBins, BIN_LABELS};
use downwind_core::econometrics::{
    fit, fit_downwind_bins, BinFit, DesignSpec, Estimate, Panel, REFERENCE_BIN,
};
use downwind_core::ingest::{load_city_registry, load_panel_table, load_year_series, Role};
use downwind_core::numeric::fmt_out;

use crate::config::{FitMode, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;

/// Everything `fit.json` reports, for either mode.
#[derive(Serialize)]
struct FitReport<'a> {
    mode: &'a str,
    design: &'a DesignSpec,
    n_obs: usize,
    estimates: &'a [Estimate],
    dropped: &'a [String],
    fe: &'a [(String, usize)],
    clusters: &'a [(String, usize)],
    demean_iterations: usize,
    first_stage_f: Option<f64>,
    vcov_adjusted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<&'a [BinFit]>,
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    match cfg.fit.mode {
        FitMode::Panel => run_panel(cfg),
        FitMode::DownwindBins => run_bins(cfg),
    }
}

// ---------------------------------------------------------------------------
// Panel mode
// ---------------------------------------------------------------------------

fn run_panel(cfg: &RunConfig) -> Result<()> {
    let mut table = load_panel_table(cfg.panel_path(), cfg.panel_roles_path())?;

    if cfg.fit.join_iv {
        let iv = load_year_series(cfg.iv_path(), ["region_id", "year", "iv"])?;
        let map: BTreeMap<Vec<String>, f64> = iv
            .into_iter()
            .map(|((region, year), v)| (vec![region, year.to_string()], v))
            .collect();
        table.join_column(&["region_id", "year"], &map, &cfg.fit.iv_name, Role::Regressor)?;
    }

    let design = match &cfg.fit.design {
        Some(d) => d.clone(),
        None => super::design_from_roles(&table)?,
    };
    let panel = table.to_panel();
    let result = fit(&panel, &design)?;

    let out = cfg.out_dir();
    let estimates_path = out.join("estimates.csv");
    let report_path = out.join("fit.json");
    write_estimates_csv(&result.estimates, &estimates_path)?;
    super::write_json(
        &report_path,
        &FitReport {
            mode: "panel",
            design: &design,
            n_obs: result.n_obs,
            estimates: &result.estimates,
            dropped: &result.dropped,
            fe: &result.fe,
            clusters: &result.clusters,
            demean_iterations: result.demean_iterations,
            first_stage_f: result.first_stage_f,
            vcov_adjusted: result.vcov_adjusted,
            bins: None,
        },
    )?;
    write_manifest("fit", cfg, &[estimates_path, report_path])?;

    println!(
        "fit: {} observations, {} coefficients ({} dropped) -> {}",
        result.n_obs,
        result.estimates.len(),
        result.dropped.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Downwind-bins mode
// ---------------------------------------------------------------------------

fn run_bins(cfg: &RunConfig) -> Result<()> {
    let registry = load_city_registry(cfg.cities_path())?;
    let meta = downwind_core::aoe::load_matrix_meta(cfg.matrix_meta_path())?;
    let monthly = downwind_core::aoe::load_monthly_matrix(cfg.matrix_path(), &registry)?;
    let bins = WindBins {
        cuts: meta.cuts.clone(),
    };
    let pair_bins = bins_from_scores(&monthly, &registry, &bins)?;

    let forest = load_year_series(cfg.forest_path(), ["region_id", "year", "forest_ha"])?;
    let loss = standardize_loss(&forest, cfg.account.scope)?;
    let outcomes = downwind_core::ingest::load_month_series(
        cfg.outcomes_path(),
        ["region_id", "month", "outcome"],
    )?;

    // Assemble the pair-month rows: one per (sender, receiver, month) with
    // both a standardized loss for the sender-year and an outcome for the
    // receiver-month. Unmatched cells are skipped and counted.
    let mut senders = Vec::new();
    let mut receivers = Vec::new();
    let mut pairs = Vec::new();
    let mut months = Vec::new();
    let mut years = Vec::new();
    let mut bin_labels = Vec::new();
    let mut exposures = Vec::new();
    let mut outcome_values = Vec::new();
    let mut skipped = 0usize;
    for ((sender, receiver, month), label) in &pair_bins {
        let (Some(&z), Some(&y)) = (
            loss.z.get(&(sender.clone(), month.year)),
            outcomes.get(&(receiver.clone(), *month)),
        ) else {
            skipped += 1;
            continue;
        };
        senders.push(sender.clone());
        receivers.push(receiver.clone());
        pairs.push(format!("{sender}#{receiver}"));
        months.push(format!("{:02}", month.month));
        years.push(month.year.to_string());
        bin_labels.push(label.clone());
        exposures.push(z);
        outcome_values.push(y);
    }
    if senders.is_empty() {
        return Err(CliError::schema(
            "no pair-month rows: matrix, forest, and outcomes do not overlap",
        ));
    }
    if skipped > 0 {
        log::info!("downwind-bins: skipped {skipped} pair-months without loss or outcome data");
    }

    let n = senders.len();
    let mut panel = Panel::new(n);
    panel.push_categorical("sender", senders.iter().map(String::as_str))?;
    panel.push_categorical("receiver", receivers.iter().map(String::as_str))?;
    panel.push_categorical("pair", pairs.iter().map(String::as_str))?;
    panel.push_categorical("month", months.iter().map(String::as_str))?;
    panel.push_categorical("year", years.iter().map(String::as_str))?;
    panel.push_categorical(&cfg.fit.bin_name, bin_labels.iter().map(String::as_str))?;
    panel.push_numeric(&cfg.fit.exposure_name, exposures)?;
    panel.push_numeric(&cfg.fit.outcome_name, outcome_values)?;

    let base = match &cfg.fit.design {
        Some(d) => d.clone(),
        None => DesignSpec {
            outcome: cfg.fit.outcome_name.clone(),
            fe: vec!["pair".into(), "month".into(), "year".into()],
            cluster: vec!["sender".into(), "receiver".into()],
            ..DesignSpec::default()
        },
    };
    let (bin_fits, result) =
        fit_downwind_bins(&panel, &cfg.fit.exposure_name, &cfg.fit.bin_name, &BIN_LABELS, &base)?;

    let out = cfg.out_dir();
    let coefs_path = out.join("bins_coefs.csv");
    let report_path = out.join("fit.json");

    // The coefficient table `account` consumes: estimated bins plus the
    // zero-by-construction reference bin, in label order.
    let mut body = String::from("bin,coef,se,ci_lo,ci_hi\n");
    for &label in BIN_LABELS.iter() {
        if label == REFERENCE_BIN {
            let _ = writeln!(body, "{label},0,0,0,0");
            continue;
        }
        if let Some(bf) = bin_fits.iter().find(|b| b.bin == label) {
            let _ = writeln!(
                body,
                "{},{},{},{},{}",
                bf.bin,
                fmt_out(bf.coef),
                fmt_out(bf.se),
                fmt_out(bf.ci_lo),
                fmt_out(bf.ci_hi)
            );
        }
    }
    super::write_text(&coefs_path, &body)?;

    super::write_json(
        &report_path,
        &FitReport {
            mode: "downwind-bins",
            design: &base,
            n_obs: result.n_obs,
            estimates: &result.estimates,
            dropped: &result.dropped,
            fe: &result.fe,
            clusters: &result.clusters,
            demean_iterations: result.demean_iterations,
            first_stage_f: result.first_stage_f,
            vcov_adjusted: result.vcov_adjusted,
            bins: Some(&bin_fits),
        },
    )?;
    write_manifest("fit", cfg, &[coefs_path, report_path])?;

    println!(
        "fit (downwind-bins): {} pair-months, {} bin coefficients -> {}",
        result.n_obs,
        bin_fits.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared output
// ---------------------------------------------------------------------------

fn write_estimates_csv(estimates: &[Estimate], path: &std::path::Path) -> Result<()> {
    let mut body = String::from("name,coef,se,z,p,ci_lo,ci_hi\n");
    for e in estimates {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{}",
            e.name,
            fmt_out(e.coef),
            fmt_out(e.se),
            fmt_out(e.z),
            fmt_out(e.p),
            fmt_out(e.ci_lo),
            fmt_out(e.ci_hi)
        );
    }
    super::write_text(path, &body)
}
