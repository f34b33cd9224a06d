//! `downwind account` — the damage ledger.
//!
//! Chains the estimated pieces into physical and monetary damages: trade
//! shock → hectares of induced deforestation → standardized loss units →
//! excess deaths across downwind bins → currency at the VSL. Sender-side
//! and receiver-side totals are exact sums of the same cells and match bit
//! for bit; the summary records both.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use downwind_core::accounting::{
    bins_from_scores, build_ledger, damage_ratio, standardize_loss, vsl_value, CoefficientTable,
    DamageLedger, LossScale, SenderInputs, VslParams,
};
use downwind_core::aoe::{load_matrix_meta, load_monthly_matrix, WindBins};
use downwind_core::ingest::{
    load_bin_coefficients, load_city_registry, load_trade_shocks, load_year_series,
};
use downwind_core::numeric::fmt_out;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;

#[derive(Serialize)]
struct AccountSummary<'a> {
    beta_trade: f64,
    shock_year: i32,
    vsl: f64,
    vsl_params: &'a VslParams,
    scale: &'a LossScale,
    sender_total_deaths: f64,
    receiver_total_deaths: f64,
    /// |sender - receiver| totals; zero by construction.
    conservation_gap: f64,
    gross_positive_deaths: f64,
    net_monetized: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    damage_ratio: Option<f64>,
    ledger: &'a DamageLedger,
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    // The coefficient table first: accounting is meaningless without it,
    // and an empty or calm-less table is a declaration error.
    let coef_rows = load_bin_coefficients(cfg.coefficients_path())?;
    let coefs = CoefficientTable::new(coef_rows.into_iter().collect())?;

    let registry = load_city_registry(cfg.cities_path())?;
    let meta = load_matrix_meta(cfg.matrix_meta_path())?;
    let monthly = load_monthly_matrix(cfg.matrix_path(), &registry)?;
    let bins = bins_from_scores(
        &monthly,
        &registry,
        &WindBins {
            cuts: meta.cuts.clone(),
        },
    )?;

    let forest = load_year_series(cfg.forest_path(), ["region_id", "year", "forest_ha"])?;
    let loss = standardize_loss(&forest, cfg.account.scope)?;

    let shocks = load_trade_shocks(cfg.trade_shocks_path())?;
    let shock_year = match cfg.account.shock_year {
        Some(y) => y,
        None => shocks.iter().map(|s| s.year).max().ok_or_else(|| {
            CliError::schema(format!(
                "trade shock table {} has no rows",
                cfg.trade_shocks_path().display()
            ))
        })?,
    };
    let inputs: BTreeMap<String, SenderInputs> = shocks
        .iter()
        .filter(|s| s.year == shock_year)
        .map(|s| {
            (
                s.region.clone(),
                SenderInputs {
                    trade_shock: s.dtrade,
                    land_ha: s.land_ha,
                },
            )
        })
        .collect();
    if inputs.is_empty() {
        return Err(CliError::schema(format!(
            "no trade shocks for year {shock_year}"
        )));
    }

    let pop = super::registry_populations(&registry);
    let vsl = vsl_value(&cfg.vsl)?;
    let ledger = build_ledger(
        &inputs,
        cfg.account.beta_trade,
        &loss.scale,
        &bins,
        &coefs,
        &pop,
        vsl,
    )?;

    let out = cfg.out_dir();
    let ledger_path = out.join("ledger.csv");
    let received_path = out.join("received.csv");
    let summary_path = out.join("account_summary.json");

    let mut body =
        String::from("sender_id,trade_shock,deforestation_ha,z_loss,excess_deaths,monetized_loss\n");
    for s in &ledger.senders {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            s.sender_id,
            fmt_out(s.trade_shock),
            fmt_out(s.deforestation_ha),
            fmt_out(s.z_loss),
            fmt_out(s.excess_deaths),
            fmt_out(s.monetized_loss)
        );
    }
    super::write_text(&ledger_path, &body)?;

    let mut body = String::from("receiver_id,received_deaths\n");
    for r in &ledger.receivers {
        let _ = writeln!(body, "{},{}", r.receiver_id, fmt_out(r.received_deaths));
    }
    super::write_text(&received_path, &body)?;

    let ratio = cfg
        .account
        .export_total
        .map(|total| damage_ratio(ledger.net_monetized, total))
        .transpose()?;
    super::write_json(
        &summary_path,
        &AccountSummary {
            beta_trade: cfg.account.beta_trade,
            shock_year,
            vsl,
            vsl_params: &cfg.vsl,
            scale: &loss.scale,
            sender_total_deaths: ledger.sender_total_deaths,
            receiver_total_deaths: ledger.receiver_total_deaths,
            conservation_gap: (ledger.sender_total_deaths - ledger.receiver_total_deaths).abs(),
            gross_positive_deaths: ledger.gross_positive_deaths,
            net_monetized: ledger.net_monetized,
            damage_ratio: ratio,
            ledger: &ledger,
        },
    )?;
    write_manifest("account", cfg, &[ledger_path, received_path, summary_path])?;

    println!(
        "account: {} senders, {} receivers, {:.3} net excess deaths, {:.3e} monetized -> {}",
        ledger.senders.len(),
        ledger.receivers.len(),
        ledger.sender_total_deaths,
        ledger.net_monetized,
        out.display()
    );
    Ok(())
}
