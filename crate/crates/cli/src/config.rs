//! Run configuration: one JSON document that pins every input path,
//! parameter, and seed a pipeline run depends on.
//!
//! The config is loaded first, merged with command-line overrides, validated
//! before any computation starts, and then serialized verbatim into every
//! output manifest — a report always records exactly the configuration that
//! produced it. Unknown keys are rejected rather than ignored, so a typo'd
//! option cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use downwind_core::accounting::{LossScope, VslParams};
use downwind_core::aoe::ScoreParams;
use downwind_core::dates::Month;
use downwind_core::econometrics::DesignSpec;
use downwind_core::ingest::SynthConfig;

use crate::error::{CliError, Result};

// ---------------------------------------------------------------------------
// Input paths
// ---------------------------------------------------------------------------

/// Where the pipeline finds its inputs.
///
/// Data files default to `<data_dir>/<canonical name>`; artifacts produced
/// by earlier pipeline stages (the score matrix, the instrument, the bin
/// coefficients) default to `<out>/<canonical name>` so a chain of commands
/// sharing one output directory wires itself together. Any individual path
/// can be overridden.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Directory the data-file defaults are resolved against.
    pub data_dir: PathBuf,
    pub cities: Option<PathBuf>,
    pub wind: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub panel_roles: Option<PathBuf>,
    pub trade: Option<PathBuf>,
    pub imports: Option<PathBuf>,
    pub forest: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub characteristics: Option<PathBuf>,
    pub characteristics_roles: Option<PathBuf>,
    pub trade_shocks: Option<PathBuf>,
    /// Monthly score matrix (artifact of `aoe-build`).
    pub matrix: Option<PathBuf>,
    /// Matrix metadata JSON (artifact of `aoe-build`).
    pub matrix_meta: Option<PathBuf>,
    /// Instrument series (artifact of `iv`).
    pub iv: Option<PathBuf>,
    /// Bin coefficient table (artifact of `fit --mode downwind-bins`).
    pub coefficients: Option<PathBuf>,
}

impl Default for Inputs {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            cities: None,
            wind: None,
            panel: None,
            panel_roles: None,
            trade: None,
            imports: None,
            forest: None,
            outcomes: None,
            characteristics: None,
            characteristics_roles: None,
            trade_shocks: None,
            matrix: None,
            matrix_meta: None,
            iv: None,
            coefficients: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Per-command sections
// ---------------------------------------------------------------------------

/// Which sender/day the `aoe-build` heatmap export renders. Defaults to the
/// first city in the registry on the first wind day.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSection {
    pub sender: Option<String>,
    pub day: Option<chrono::NaiveDate>,
}

/// What `fit` estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// A design on the regression panel (OLS or 2SLS per the design).
    #[default]
    Panel,
    /// The exposure × wind-bin interaction design on the pair-month panel
    /// assembled from the score matrix, forest losses, and outcomes.
    DownwindBins,
}

/// Options for the `fit` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub mode: FitMode,
    /// Explicit design; omitted means derive it from the panel's role
    /// sidecar (first outcome column, all regressors, all fixed effects,
    /// all cluster dimensions, first weight column).
    pub design: Option<DesignSpec>,
    /// Join the instrument artifact into the panel before fitting.
    pub join_iv: bool,
    /// Column name the joined instrument takes.
    pub iv_name: String,
    /// Exposure column name in the assembled pair-month panel.
    pub exposure_name: String,
    /// Bin column name in the assembled pair-month panel.
    pub bin_name: String,
    /// Outcome column name in the assembled pair-month panel.
    pub outcome_name: String,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            mode: FitMode::Panel,
            design: None,
            join_iv: false,
            iv_name: "iv".into(),
            exposure_name: "z_loss".into(),
            bin_name: "bin".into(),
            outcome_name: "outcome".into(),
        }
    }
}

/// Options for the `placebo` subcommand. The seed comes from the top-level
/// `seed` (or `--seed`), the growth horizon from the top-level `horizon`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaceboSection {
    pub reps: usize,
    /// Nominal two-sided sizes to count rejections at.
    pub levels: Vec<f64>,
    /// Name the synthetic instrument column takes in the reduced form.
    pub iv_column: String,
    pub region_column: String,
    pub year_column: String,
    /// Explicit reduced-form design; omitted means outcome ~ placebo
    /// instrument with the panel's fixed effects, clusters, and weights.
    pub design: Option<DesignSpec>,
}

impl Default for PlaceboSection {
    fn default() -> Self {
        Self {
            reps: 200,
            levels: vec![0.01, 0.05, 0.10],
            iv_column: "placebo_iv".into(),
            region_column: "region_id".into(),
            year_column: "year".into(),
            design: None,
        }
    }
}

/// Options for the `balance` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSection {
    /// Characteristics to test; empty means every outcome-role column of
    /// the characteristics table.
    pub characteristics: Vec<String>,
    /// Column name the joined instrument takes (and is tested against).
    pub regressor: String,
    /// Base design (fixed effects, clustering, weights); omitted means
    /// derive from the characteristics table's role sidecar.
    pub design: Option<DesignSpec>,
}

impl Default for BalanceSection {
    fn default() -> Self {
        Self {
            characteristics: Vec::new(),
            regressor: "iv".into(),
            design: None,
        }
    }
}

/// Options for the `account` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccountSection {
    /// Trade → deforestation coefficient: percentage points of land lost
    /// per 1,000 currency units of trade shock per capita. Expected
    /// negative (more exports, less forest).
    pub beta_trade: f64,
    /// Standardization scope for the forest-loss series.
    pub scope: LossScope,
    /// Which trade-shock year feeds the ledger; defaults to the latest
    /// year present in the shocks file.
    pub shock_year: Option<i32>,
    /// Optional export-revenue total for the damage ratio.
    pub export_total: Option<f64>,
}

impl Default for AccountSection {
    fn default() -> Self {
        Self {
            beta_trade: -0.174,
            scope: LossScope::Pooled,
            shock_year: None,
            export_total: None,
        }
    }
}

// ---------------------------------------------------------------------------
// The run configuration
// ---------------------------------------------------------------------------

/// Everything a run depends on. Defaults cover a full demo pipeline; a JSON
/// config overrides fields, and `--seed/--threads/--params/--out/--data`
/// override the config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    /// Output directory; every command writes its artifacts and manifest
    /// here.
    pub out: Option<PathBuf>,
    /// Seed for randomized paths. `synth` and `placebo` refuse to run
    /// without one set here or via `--seed`.
    pub seed: Option<u64>,
    /// Rayon thread count; 0 or absent means the library default. The
    /// matrix build is order-stabilized, so results do not depend on this.
    pub threads: Option<usize>,
    /// Grid subdivisions for wind rasterization.
    pub grid_res: Option<usize>,
    /// Shift-share growth horizon in years.
    pub horizon: Option<i32>,
    /// Named score parameter preset (`"appendix"` or `"main-text"`),
    /// exclusive with `params`.
    pub preset: Option<String>,
    /// Fully explicit score parameters, exclusive with `preset`.
    pub params: Option<ScoreParams>,
    /// Aggregation period `["YYYY-MM", "YYYY-MM"]`, inclusive; omitted
    /// means the span of the wind data plus the streamline tail.
    pub period: Option<[String; 2]>,
    pub heatmap: HeatmapSection,
    pub fit: FitSection,
    pub placebo: PlaceboSection,
    pub balance: BalanceSection,
    pub account: AccountSection,
    pub vsl: VslParams,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Load a config file; I/O problems exit 2, malformed or unknown keys
    /// exit 3.
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        serde_json::from_str(&body).map_err(|e| {
            CliError::schema(format!("invalid config {}: {e}", path.display()))
        })
    }

    /// Validate everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        if self.preset.is_some() && self.params.is_some() {
            return Err(CliError::schema(
                "set either a params preset or explicit params, not both",
            ));
        }
        let params = self.score_params()?;
        params.validate().map_err(CliError::from)?;
        let res = self.grid_res();
        if !(2..=4096).contains(&res) {
            return Err(CliError::schema(format!(
                "grid_res must be between 2 and 4096, got {res}"
            )));
        }
        if self.horizon() < 1 {
            return Err(CliError::schema(format!(
                "horizon must be at least 1, got {}",
                self.horizon()
            )));
        }
        self.period_override()?;
        if self.placebo.reps == 0 {
            return Err(CliError::schema("placebo.reps must be at least 1"));
        }
        for &level in &self.placebo.levels {
            if !(level > 0.0 && level < 1.0) {
                return Err(CliError::schema(format!(
                    "placebo level {level} outside (0, 1)"
                )));
            }
        }
        if !self.account.beta_trade.is_finite() {
            return Err(CliError::schema("account.beta_trade must be finite"));
        }
        self.vsl.validate().map_err(CliError::from)?;
        self.synth.validate().map_err(CliError::from)?;
        Ok(())
    }

    // -- resolved settings --------------------------------------------------

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn grid_res(&self) -> usize {
        self.grid_res.unwrap_or(64)
    }

    pub fn horizon(&self) -> i32 {
        self.horizon.unwrap_or(4)
    }

    /// The score parameters this run uses: explicit `params`, else the
    /// named preset, else the default calibration.
    pub fn score_params(&self) -> Result<ScoreParams> {
        if let Some(p) = self.params {
            return Ok(p);
        }
        match self.preset.as_deref() {
            None => Ok(ScoreParams::default()),
            Some(name) => ScoreParams::from_preset(name).ok_or_else(|| {
                CliError::schema(format!(
                    "unknown params preset {name:?} (expected \"appendix\" or \"main-text\")"
                ))
            }),
        }
    }

    /// The configured aggregation period, parsed and order-checked.
    pub fn period_override(&self) -> Result<Option<(Month, Month)>> {
        let Some([start, end]) = &self.period else {
            return Ok(None);
        };
        let parse = |s: &str| -> Result<Month> {
            s.parse()
                .map_err(|e| CliError::schema(format!("invalid period month {s:?}: {e}")))
        };
        let (start, end) = (parse(start)?, parse(end)?);
        if end < start {
            return Err(CliError::schema(format!(
                "period end {end} precedes start {start}"
            )));
        }
        Ok(Some((start, end)))
    }

    /// The seed, or an exit-3 error telling the user to set one.
    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed.ok_or_else(|| {
            CliError::schema(format!(
                "{command} draws random numbers: set an explicit --seed (or \"seed\" in the config)"
            ))
        })
    }

    // -- input path resolution ----------------------------------------------

    fn data_file(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit
            .clone()
            .unwrap_or_else(|| self.inputs.data_dir.join(name))
    }

    fn artifact(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir().join(name))
    }

    pub fn cities_path(&self) -> PathBuf {
        self.data_file(&self.inputs.cities, "cities.csv")
    }

    pub fn wind_path(&self) -> PathBuf {
        self.data_file(&self.inputs.wind, "wind.csv")
    }

    pub fn panel_path(&self) -> PathBuf {
        self.data_file(&self.inputs.panel, "panel.csv")
    }

    pub fn panel_roles_path(&self) -> PathBuf {
        self.data_file(&self.inputs.panel_roles, "panel_roles.json")
    }

    pub fn trade_path(&self) -> PathBuf {
        self.data_file(&self.inputs.trade, "trade.csv")
    }

    pub fn imports_path(&self) -> PathBuf {
        self.data_file(&self.inputs.imports, "imports.csv")
    }

    pub fn forest_path(&self) -> PathBuf {
        self.data_file(&self.inputs.forest, "forest.csv")
    }

    pub fn outcomes_path(&self) -> PathBuf {
        self.data_file(&self.inputs.outcomes, "outcomes.csv")
    }

    pub fn characteristics_path(&self) -> PathBuf {
        self.data_file(&self.inputs.characteristics, "characteristics.csv")
    }

    pub fn characteristics_roles_path(&self) -> PathBuf {
        self.data_file(&self.inputs.characteristics_roles, "characteristics_roles.json")
    }

    pub fn trade_shocks_path(&self) -> PathBuf {
        self.data_file(&self.inputs.trade_shocks, "trade_shocks.csv")
    }

    pub fn matrix_path(&self) -> PathBuf {
        self.artifact(&self.inputs.matrix, "matrix.csv")
    }

    pub fn matrix_meta_path(&self) -> PathBuf {
        self.artifact(&self.inputs.matrix_meta, "matrix_meta.json")
    }

    pub fn iv_path(&self) -> PathBuf {
        self.artifact(&self.inputs.iv, "iv.csv")
    }

    pub fn coefficients_path(&self) -> PathBuf {
        self.artifact(&self.inputs.coefficients, "bins_coefs.csv")
    }
}
