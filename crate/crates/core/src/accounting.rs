//! Damage accounting: chain trade shocks through deforestation and downwind
//! mortality into monetary losses.
//!
//! The chain runs in four steps. [`trade_deforestation`] converts a per-capita
//! trade shock into hectares of induced forest loss via the estimated trade
//! coefficient. [`hectares_to_z`] maps hectares into the standard-deviation
//! units the mortality coefficients are denominated in, using the same
//! standardization as estimation ([`standardize_loss`]). [`excess_deaths`]
//! multiplies bin-specific mortality coefficients by standardized loss and
//! downwind population at the (pair, month) resolution of the regressions.
//! [`monetize`] and [`damage_ratio`] convert deaths into currency and relate
//! the loss to the export value that caused it.
//!
//! [`build_ledger`] assembles the full per-sender / per-receiver ledger.
//! Totals use exact (correctly rounded) summation, so the sender-side and
//! receiver-side national totals — the same addends regrouped — are equal
//! bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aoe::{MonthlyScores, WindBins, BIN_LABELS};
use crate::dates::Month;
use crate::econometrics::BinFit;
use crate::ingest::{CityRegistry, YearSeries};
use crate::numeric::exact_sum;

/// Errors from the accounting chain.
#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("zero variance in forest series ({0})")]
    ZeroVariance(String),
    #[error("no mortality coefficient for bin {0:?}")]
    MissingBin(String),
    #[error("no population for receiver {receiver:?} in year {year}")]
    MissingPopulation { receiver: String, year: i32 },
    #[error("no standardized loss for sender {sender:?} in year {year}")]
    MissingLoss { sender: String, year: i32 },
    #[error("export total must be positive")]
    ZeroExports,
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

type Result<T> = std::result::Result<T, AccountingError>;

// ---------------------------------------------------------------------------
// Forest-loss standardization
// ---------------------------------------------------------------------------

/// Scope over which forest series are standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossScope {
    /// One mean/sd over every (sender, year) observation.
    Pooled,
    /// Separate mean/sd per sender.
    PerSender,
}

/// The moments used to standardize, kept so later hectare quantities can be
/// mapped into the same units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossScale {
    pub scope: LossScope,
    pub pooled_mean: f64,
    /// Population standard deviation over all observations; always positive.
    pub pooled_sd: f64,
    /// Per-sender (mean, sd); empty under pooled scope.
    pub per_sender: BTreeMap<String, (f64, f64)>,
}

/// A standardized forest-loss series plus the scale that produced it.
#[derive(Debug, Clone)]
pub struct StandardizedLoss {
    /// z-loss per (sender, year): positive when forest is below its mean.
    pub z: YearSeries,
    pub scale: LossScale,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = exact_sum(values.iter().copied()) / n;
    let sq = values.iter().map(|v| (v - mean) * (v - mean));
    (mean, (exact_sum(sq) / n).sqrt())
}

/// Standardize a sender × year forest series to z-losses.
///
/// The sign is flipped so that *less* forest means a *positive* loss:
/// `z = -(forest - mean)/sd` with the population standard deviation over the
/// chosen scope. Pooled moments are always computed (they also back
/// [`hectares_to_z`]); a zero-variance scope is an error.
pub fn standardize_loss(forest: &YearSeries, scope: LossScope) -> Result<StandardizedLoss> {
    if forest.is_empty() {
        return Err(AccountingError::ZeroVariance("empty series".into()));
    }
    let all: Vec<f64> = forest.values().copied().collect();
    if all.iter().any(|v| !v.is_finite()) {
        return Err(AccountingError::InvalidValue(
            "forest series contains non-finite values".into(),
        ));
    }
    let (pooled_mean, pooled_sd) = mean_sd(&all);
    if pooled_sd <= 0.0 {
        return Err(AccountingError::ZeroVariance("pooled".into()));
    }
    let mut per_sender = BTreeMap::new();
    let mut z = YearSeries::new();
    match scope {
        LossScope::Pooled => {
            for ((sender, year), v) in forest {
                z.insert((sender.clone(), *year), -(v - pooled_mean) / pooled_sd);
            }
        }
        LossScope::PerSender => {
            let mut grouped: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for ((sender, _), v) in forest {
                grouped.entry(sender).or_default().push(*v);
            }
            for (sender, values) in &grouped {
                let (m, s) = mean_sd(values);
                if s <= 0.0 {
                    return Err(AccountingError::ZeroVariance(format!("sender {sender}")));
                }
                per_sender.insert(sender.to_string(), (m, s));
            }
            for ((sender, year), v) in forest {
                let (m, s) = per_sender[sender];
                z.insert((sender.clone(), *year), -(v - m) / s);
            }
        }
    }
    Ok(StandardizedLoss {
        z,
        scale: LossScale {
            scope,
            pooled_mean,
            pooled_sd,
            per_sender,
        },
    })
}

/// Convert hectares of forest loss into the standard-deviation units the
/// mortality coefficients use: `ha / pooled_sd`.
///
/// Hectares *lost* are already a loss, so no sign flip: positive hectares →
/// positive z-loss. Uses the pooled standard deviation regardless of scope,
/// since a single national conversion factor is what the damage chain needs.
pub fn hectares_to_z(ha: f64, scale: &LossScale) -> Result<f64> {
    if !ha.is_finite() {
        return Err(AccountingError::InvalidValue(format!(
            "hectares must be finite, got {ha}"
        )));
    }
    Ok(ha / scale.pooled_sd)
}

// ---------------------------------------------------------------------------
// Trade-induced deforestation
// ---------------------------------------------------------------------------

/// Hectares of forest loss induced by a trade shock.
///
/// `beta_trade` is the estimated effect of a 1,000-currency-per-capita export
/// increase on forest cover in percentage points of land area; a value of
/// −0.174 with a unit shock over 100,000 ha of land is 174 ha lost. The
/// deforestation effect is the *magnitude* of a negative coefficient; a
/// positive estimate (trade growing forest) yields zero hectares with a
/// warning rather than negative damage.
pub fn trade_deforestation(delta_trade: f64, beta_trade: f64, land_ha: f64) -> Result<f64> {
    if !(land_ha > 0.0) || !land_ha.is_finite() {
        return Err(AccountingError::InvalidValue(format!(
            "land area must be positive, got {land_ha}"
        )));
    }
    if !delta_trade.is_finite() || !beta_trade.is_finite() {
        return Err(AccountingError::InvalidValue(
            "trade shock and coefficient must be finite".into(),
        ));
    }
    if beta_trade > 0.0 {
        log::warn!(
            "trade coefficient {beta_trade} is positive; no deforestation attributed"
        );
        return Ok(0.0);
    }
    Ok(beta_trade.abs() / 100.0 * delta_trade * land_ha)
}

// ---------------------------------------------------------------------------
// Mortality coefficients and wind-bin lookups
// ---------------------------------------------------------------------------

/// Bin label → deaths per 100,000 population per 1 SD forest loss per month.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientTable {
    coefs: BTreeMap<String, f64>,
}

impl CoefficientTable {
    /// Build from explicit bin coefficients. The calm bin must be present
    /// (zero is fine — it is the built-in placebo category) and every value
    /// finite.
    pub fn new(coefs: BTreeMap<String, f64>) -> Result<Self> {
        if !coefs.contains_key(BIN_LABELS[0]) {
            return Err(AccountingError::MissingBin(BIN_LABELS[0].to_string()));
        }
        for (label, v) in &coefs {
            if !v.is_finite() {
                return Err(AccountingError::InvalidValue(format!(
                    "coefficient for bin {label:?} is not finite"
                )));
            }
        }
        Ok(Self { coefs })
    }

    /// Build from fitted bin interactions, filling the omitted reference bin
    /// with zero.
    pub fn from_bin_fits(fits: &[BinFit], reference: &str) -> Result<Self> {
        let mut coefs: BTreeMap<String, f64> =
            fits.iter().map(|f| (f.bin.clone(), f.coef)).collect();
        coefs.entry(reference.to_string()).or_insert(0.0);
        Self::new(coefs)
    }

    pub fn get(&self, bin: &str) -> Option<f64> {
        self.coefs.get(bin).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.coefs.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Wind-bin label per (sender id, receiver id, month).
pub type PairMonthBins = BTreeMap<(String, String, Month), String>;

/// Assign every pair-month score to its wind bin, keyed by city ids.
pub fn bins_from_scores(
    monthly: &MonthlyScores,
    registry: &CityRegistry,
    bins: &WindBins,
) -> Result<PairMonthBins> {
    let mut out = PairMonthBins::new();
    for (&(s, r, month), &score) in monthly {
        let idx = bins
            .assign(score)
            .map_err(|e| AccountingError::InvalidValue(e.to_string()))?;
        out.insert(
            (
                registry.city(s).id.clone(),
                registry.city(r).id.clone(),
                month,
            ),
            WindBins::label(idx).to_string(),
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Excess deaths
// ---------------------------------------------------------------------------

/// Per-cell contributions for one sender, in bin-map order.
fn death_cells(
    sender: &str,
    z_of: &mut dyn FnMut(i32) -> Result<f64>,
    bins: &PairMonthBins,
    coefs: &CoefficientTable,
    pop: &YearSeries,
) -> Result<Vec<(String, f64)>> {
    let mut cells = Vec::new();
    for ((s, r, month), label) in bins {
        if s != sender {
            continue;
        }
        let coef = coefs
            .get(label)
            .ok_or_else(|| AccountingError::MissingBin(label.clone()))?;
        let z = z_of(month.year)?;
        let p = pop.get(&(r.clone(), month.year)).copied().ok_or_else(|| {
            AccountingError::MissingPopulation {
                receiver: r.clone(),
                year: month.year,
            }
        })?;
        cells.push((r.clone(), coef * z * p / 100_000.0));
    }
    Ok(cells)
}

/// Excess deaths attributed to one sender: Σ over its (receiver, month)
/// cells of `coef(bin) · z_loss(sender, year) · pop(receiver, year) / 1e5`.
///
/// Deaths are at the monthly resolution of the regressions — each pair-month
/// cell contributes once, no annualization. Negative bin coefficients yield
/// negative contributions and are retained; totals use exact summation.
pub fn excess_deaths(
    sender: &str,
    z_loss: &YearSeries,
    bins: &PairMonthBins,
    coefs: &CoefficientTable,
    pop: &YearSeries,
) -> Result<f64> {
    let mut z_of = |year: i32| {
        z_loss
            .get(&(sender.to_string(), year))
            .copied()
            .ok_or_else(|| AccountingError::MissingLoss {
                sender: sender.to_string(),
                year,
            })
    };
    let cells = death_cells(sender, &mut z_of, bins, coefs, pop)?;
    Ok(exact_sum(cells.iter().map(|(_, c)| *c)))
}

// ---------------------------------------------------------------------------
// VSL and monetization
// ---------------------------------------------------------------------------

/// Value-of-statistical-life parameters.
///
/// The default carries a calibrated override of $0.7M; the formula path
/// (`base_vsl · income_ratio^(-transfer_elasticity)`) is one reading of the
/// benefit-transfer step and does not reproduce the override from the
/// default base/elasticity/ratio — it is provided and flagged, not silently
/// preferred.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VslParams {
    pub base_vsl: f64,
    /// Income elasticity of the VSL transfer; zero means no downscaling.
    pub transfer_elasticity: f64,
    /// Origin-to-target income ratio used by the transfer.
    pub income_ratio: f64,
    /// When set, used verbatim instead of the formula.
    pub override_vsl: Option<f64>,
}

impl Default for VslParams {
    fn default() -> Self {
        Self {
            base_vsl: 2.3e6,
            transfer_elasticity: 1.2,
            income_ratio: 7.0,
            override_vsl: Some(0.7e6),
        }
    }
}

impl VslParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_vsl > 0.0) || !(self.income_ratio > 0.0) {
            return Err(AccountingError::InvalidValue(
                "base_vsl and income_ratio must be positive".into(),
            ));
        }
        if !(self.transfer_elasticity >= 0.0) {
            return Err(AccountingError::InvalidValue(
                "transfer_elasticity must be non-negative".into(),
            ));
        }
        if let Some(v) = self.override_vsl {
            if !(v > 0.0) {
                return Err(AccountingError::InvalidValue(
                    "override_vsl must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The VSL to monetize with: the override when set, otherwise the
/// benefit-transfer formula (logged, since the two readings disagree for the
/// default parameters).
pub fn vsl_value(params: &VslParams) -> Result<f64> {
    params.validate()?;
    if let Some(v) = params.override_vsl {
        return Ok(v);
    }
    let v = params.base_vsl * params.income_ratio.powf(-params.transfer_elasticity);
    log::warn!(
        "VSL from transfer formula: {v:.0} (base {}, ratio {}, elasticity {}); \
         this reading differs from the calibrated override default",
        params.base_vsl,
        params.income_ratio,
        params.transfer_elasticity
    );
    Ok(v)
}

/// Monetary loss from excess deaths: `deaths · vsl`.
pub fn monetize(deaths: f64, vsl: f64) -> Result<f64> {
    if !(deaths >= 0.0) || !(vsl >= 0.0) {
        return Err(AccountingError::InvalidValue(
            "monetize expects non-negative deaths and vsl".into(),
        ));
    }
    Ok(deaths * vsl)
}

/// Loss per unit of exports: `loss / export_total`.
pub fn damage_ratio(loss: f64, export_total: f64) -> Result<f64> {
    if !(loss >= 0.0) || !loss.is_finite() {
        return Err(AccountingError::InvalidValue(
            "loss must be non-negative and finite".into(),
        ));
    }
    if !(export_total > 0.0) {
        return Err(AccountingError::ZeroExports);
    }
    Ok(loss / export_total)
}

/// Export base implied by a loss and a pinned damage ratio (`loss / ratio`) —
/// a consistency printout, not an estimate.
pub fn implied_export_base(loss: f64, ratio: f64) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(AccountingError::ZeroExports);
    }
    Ok(loss / ratio)
}

// ---------------------------------------------------------------------------
// The damage ledger
// ---------------------------------------------------------------------------

/// Per-sender inputs to the damage chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SenderInputs {
    /// Trade shock in 1,000-currency per capita.
    pub trade_shock: f64,
    /// Land area in hectares (base for the percentage-point coefficient).
    pub land_ha: f64,
}

/// One sender's row of the ledger.
#[derive(Debug, Clone, Serialize)]
pub struct SenderRow {
    pub sender_id: String,
    pub trade_shock: f64,
    pub deforestation_ha: f64,
    /// The induced deforestation in standard-deviation units.
    pub z_loss: f64,
    pub excess_deaths: f64,
    pub monetized_loss: f64,
}

/// One receiver's row of the ledger.
#[derive(Debug, Clone, Serialize)]
pub struct ReceiverRow {
    pub receiver_id: String,
    pub received_deaths: f64,
}

/// The assembled damage ledger.
///
/// `sender_total_deaths` and `receiver_total_deaths` are exact sums of the
/// same per-cell contributions traversed in different groupings, so they are
/// equal bit for bit. Negative cells (negative bin coefficients) stay in the
/// net totals; `gross_positive_deaths` sums only the positive cells.
#[derive(Debug, Clone, Serialize)]
pub struct DamageLedger {
    pub senders: Vec<SenderRow>,
    pub receivers: Vec<ReceiverRow>,
    pub vsl: f64,
    pub sender_total_deaths: f64,
    pub receiver_total_deaths: f64,
    pub gross_positive_deaths: f64,
    pub net_monetized: f64,
}

/// Run the full chain for every sender in `inputs` and assemble the ledger.
///
/// Per sender: trade shock → hectares ([`trade_deforestation`]) → SD units
/// ([`hectares_to_z`]) → monthly death cells over its downwind bins →
/// exact-sum totals, monetized at `vsl`. Bins for senders absent from
/// `inputs` are ignored; senders without bins get zero-death rows. Sender
/// rows come out in id order, so the ledger is deterministic.
pub fn build_ledger(
    inputs: &BTreeMap<String, SenderInputs>,
    beta_trade: f64,
    scale: &LossScale,
    bins: &PairMonthBins,
    coefs: &CoefficientTable,
    pop: &YearSeries,
    vsl: f64,
) -> Result<DamageLedger> {
    if inputs.is_empty() {
        return Err(AccountingError::InvalidValue(
            "ledger needs at least one sender".into(),
        ));
    }
    if !(vsl > 0.0) || !vsl.is_finite() {
        return Err(AccountingError::InvalidValue(format!(
            "vsl must be positive, got {vsl}"
        )));
    }
    let mut senders = Vec::with_capacity(inputs.len());
    let mut sender_order_cells: Vec<f64> = Vec::new();
    let mut by_receiver: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (sender_id, si) in inputs {
        let deforestation_ha = trade_deforestation(si.trade_shock, beta_trade, si.land_ha)?;
        let z = hectares_to_z(deforestation_ha, scale)?;
        let mut z_of = |_year: i32| Ok(z);
        let cells = death_cells(sender_id, &mut z_of, bins, coefs, pop)?;
        let values: Vec<f64> = cells.iter().map(|(_, c)| *c).collect();
        let excess = exact_sum(values.iter().copied());
        senders.push(SenderRow {
            sender_id: sender_id.clone(),
            trade_shock: si.trade_shock,
            deforestation_ha,
            z_loss: z,
            excess_deaths: excess,
            monetized_loss: excess * vsl,
        });
        sender_order_cells.extend_from_slice(&values);
        for (receiver, cell) in cells {
            by_receiver.entry(receiver).or_default().push(cell);
        }
    }
    let mut receiver_order_cells: Vec<f64> = Vec::new();
    let mut receivers = Vec::with_capacity(by_receiver.len());
    for (receiver_id, cells) in &by_receiver {
        receivers.push(ReceiverRow {
            receiver_id: receiver_id.clone(),
            received_deaths: exact_sum(cells.iter().copied()),
        });
        receiver_order_cells.extend_from_slice(cells);
    }
    let sender_total_deaths = exact_sum(sender_order_cells.iter().copied());
    let receiver_total_deaths = exact_sum(receiver_order_cells.iter().copied());
    let gross_positive_deaths =
        exact_sum(sender_order_cells.iter().copied().filter(|c| *c > 0.0));
    Ok(DamageLedger {
        senders,
        receivers,
        vsl,
        sender_total_deaths,
        receiver_total_deaths,
        gross_positive_deaths,
        net_monetized: sender_total_deaths * vsl,
    })
}
