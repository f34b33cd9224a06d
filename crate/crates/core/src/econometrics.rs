//! Fixed-effects regression with instrumental variables and clustered errors.
//!
//! The estimation layer works on a [`Panel`] (named numeric and categorical
//! columns of equal length) and a [`DesignSpec`] naming the outcome,
//! regressors, instruments, absorbed fixed effects, cluster dimensions, and
//! weights. [`fit`] runs the whole chain:
//!
//! 1. absorb fixed effects by weighted alternating projections
//!    ([`DEMEAN_TOL`], [`DEMEAN_MAX_SWEEPS`]);
//! 2. drop collinear regressors by modified Gram–Schmidt, keeping columns in
//!    design order (a later column dependent on earlier ones is the one
//!    dropped);
//! 3. solve the weighted least-squares problem by SVD;
//! 4. build sandwich covariance: HC0, one-way clustered, or two-way
//!    clustered by inclusion–exclusion;
//! 5. for instrumented designs, run one first stage per endogenous
//!    regressor, carry fitted values into the second stage, and compute
//!    residuals against the *original* regressors.
//!
//! There is no implicit intercept: the designs this crate estimates always
//! absorb fixed effects, which span the constant. A caller without fixed
//! effects must add a constant column explicitly.
//!
//! [`fit_downwind_bins`] wraps [`fit`] for the bin-interaction design (one
//! coefficient per exposure decile), and [`zscore_index`] builds the
//! standardized multi-series outcome index.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Convergence tolerance for alternating-projection demeaning, relative to
/// each column's scale `max(1, max|x|)`.
pub const DEMEAN_TOL: f64 = 1e-8;

/// Hard cap on demeaning sweeps before [`EconError::NonConvergence`].
pub const DEMEAN_MAX_SWEEPS: usize = 10_000;

/// A regressor whose residual norm after projection on the kept columns
/// falls below this fraction of its pre-demeaning weighted norm is dropped
/// as collinear.
pub const COLLINEARITY_TOL: f64 = 1e-10;

/// Reference category for the bin-interaction design: the weakest positive
/// decile, whose coefficient is normalized to zero.
pub const REFERENCE_BIN: &str = "10th";

/// Errors from panel construction and estimation.
#[derive(Debug, Error)]
pub enum EconError {
    #[error("column {0:?} already exists in the panel")]
    DuplicateColumn(String),
    #[error("column {column:?} has {found} rows, panel has {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in column {column:?}, row {row}")]
    NonFinite { column: String, row: usize },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("panel has no rows")]
    EmptyPanel,
    #[error("fixed-effect demeaning did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
    #[error("design is rank deficient: no regressor survives the collinearity screen")]
    RankDeficient,
    #[error("weak or deficient instrument rank: {0}")]
    WeakRank(String),
    #[error("cluster dimension {0:?} has fewer than 2 clusters")]
    SingleCluster(String),
    #[error("bin label {0:?} appears in the panel but not in the provided label set")]
    MissingBin(String),
    #[error("series {0} has zero variance")]
    ZeroVariance(String),
    #[error("invalid design: {0}")]
    InvalidSpec(String),
}

type Result<T> = std::result::Result<T, EconError>;

// ---------------------------------------------------------------------------
// Panel
// ---------------------------------------------------------------------------

/// A categorical column: lexicographically sorted distinct levels plus one
/// code per row indexing into them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatColumn {
    pub levels: Vec<String>,
    pub codes: Vec<u32>,
}

impl CatColumn {
    fn from_values<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let raw: Vec<&str> = values.into_iter().collect();
        let mut levels: Vec<String> = raw.iter().map(|s| s.to_string()).collect();
        levels.sort();
        levels.dedup();
        let index: BTreeMap<&str, u32> = levels
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u32))
            .collect();
        let codes = raw.iter().map(|s| index[s]).collect();
        Self { levels, codes }
    }

    /// Level string for a row.
    pub fn level_of(&self, row: usize) -> &str {
        &self.levels[self.codes[row] as usize]
    }
}

/// Column store for estimation: named numeric and categorical columns, all
/// of the same length.
#[derive(Debug, Clone, Default)]
pub struct Panel {
    n_rows: usize,
    numeric: BTreeMap<String, Vec<f64>>,
    categorical: BTreeMap<String, CatColumn>,
}

impl Panel {
    pub fn new(n_rows: usize) -> Self {
        Self {
            n_rows,
            numeric: BTreeMap::new(),
            categorical: BTreeMap::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn check_new_column(&self, name: &str, len: usize) -> Result<()> {
        if self.numeric.contains_key(name) || self.categorical.contains_key(name) {
            return Err(EconError::DuplicateColumn(name.to_string()));
        }
        if len != self.n_rows {
            return Err(EconError::LengthMismatch {
                column: name.to_string(),
                expected: self.n_rows,
                found: len,
            });
        }
        Ok(())
    }

    pub fn push_numeric(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        self.check_new_column(name, values.len())?;
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(EconError::NonFinite {
                column: name.to_string(),
                row,
            });
        }
        self.numeric.insert(name.to_string(), values);
        Ok(())
    }

    pub fn push_categorical<'a>(
        &mut self,
        name: &str,
        values: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        let col = CatColumn::from_values(values);
        self.check_new_column(name, col.codes.len())?;
        self.categorical.insert(name.to_string(), col);
        Ok(())
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        self.numeric
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| EconError::UnknownColumn(name.to_string()))
    }

    pub fn categorical(&self, name: &str) -> Result<&CatColumn> {
        self.categorical
            .get(name)
            .ok_or_else(|| EconError::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.numeric.contains_key(name) || self.categorical.contains_key(name)
    }

    /// All column names, numeric then categorical, each sorted.
    pub fn names(&self) -> Vec<&str> {
        self.numeric
            .keys()
            .chain(self.categorical.keys())
            .map(String::as_str)
            .collect()
    }

    /// Group codes for a column used as a fixed-effect or cluster dimension.
    ///
    /// Categorical columns use their level codes; numeric columns group rows
    /// by exact value (useful for integer-valued columns like years).
    /// Returns `(codes, group_count)`.
    pub fn group_codes(&self, name: &str) -> Result<(Vec<usize>, usize)> {
        if let Some(col) = self.categorical.get(name) {
            let codes = col.codes.iter().map(|&c| c as usize).collect();
            return Ok((codes, col.levels.len()));
        }
        let values = self.numeric(name)?;
        let mut distinct: Vec<f64> = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup_by(|a, b| a == b);
        let index: BTreeMap<u64, usize> = distinct
            .iter()
            .enumerate()
            .map(|(i, v)| (v.to_bits(), i))
            .collect();
        let codes = values.iter().map(|v| index[&v.to_bits()]).collect();
        Ok((codes, distinct.len()))
    }

    /// Row-wise string form of a column, used to label interaction levels.
    fn row_strings(&self, name: &str) -> Result<Vec<String>> {
        if let Some(col) = self.categorical.get(name) {
            return Ok((0..self.n_rows).map(|i| col.level_of(i).to_string()).collect());
        }
        let values = self.numeric(name)?;
        Ok(values.iter().map(|v| format!("{v}")).collect())
    }

    /// Build the interaction of several columns as a new categorical column
    /// (levels joined with `#`), e.g. sender × receiver × calendar month.
    pub fn combine_categorical(&mut self, name: &str, parts: &[&str]) -> Result<()> {
        if parts.is_empty() {
            return Err(EconError::InvalidSpec(
                "combine_categorical needs at least one part".into(),
            ));
        }
        let mut rows: Vec<String> = vec![String::new(); self.n_rows];
        for (k, part) in parts.iter().enumerate() {
            let strings = self.row_strings(part)?;
            for (row, s) in rows.iter_mut().zip(strings) {
                if k > 0 {
                    row.push('#');
                }
                row.push_str(&s);
            }
        }
        self.push_categorical(name, rows.iter().map(String::as_str))
    }
}

// ---------------------------------------------------------------------------
// Design
// ---------------------------------------------------------------------------

/// What to estimate: outcome, regressors, absorbed effects, and error
/// structure. `endog`/`instruments` empty means plain OLS.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    pub outcome: String,
    /// Included (exogenous) regressors, reported in this order.
    pub exog: Vec<String>,
    /// Instrumented regressors.
    pub endog: Vec<String>,
    /// Excluded instruments (used only in the first stage).
    pub instruments: Vec<String>,
    /// Fixed-effect dimensions to absorb.
    pub fe: Vec<String>,
    /// Zero, one, or two cluster dimensions.
    pub cluster: Vec<String>,
    /// Optional non-negative weight column.
    pub weight: Option<String>,
    /// Scale each cluster dimension's meat by `G/(G-1)`.
    pub small_sample: bool,
}

/// One reported coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub coef: f64,
    pub se: f64,
    /// Normal test statistic `coef / se`.
    pub z: f64,
    /// Two-sided normal p-value.
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Everything [`fit`] reports.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Kept regressors in design order (exogenous first, then instrumented).
    pub estimates: Vec<Estimate>,
    /// Regressors dropped by the collinearity screen.
    pub dropped: Vec<String>,
    pub n_obs: usize,
    /// Absorbed dimensions with their group counts.
    pub fe: Vec<(String, usize)>,
    /// Cluster dimensions with their cluster counts (empty for HC0).
    pub clusters: Vec<(String, usize)>,
    /// Alternating-projection sweeps used by the demeaning.
    pub demean_iterations: usize,
    /// Minimum cluster-robust first-stage F across instrumented regressors.
    pub first_stage_f: Option<f64>,
    /// Sandwich covariance of the kept coefficients (row/column order
    /// matches `estimates`).
    pub vcov: Vec<Vec<f64>>,
    /// True when a negative eigenvalue from two-way inclusion–exclusion was
    /// clipped to zero.
    pub vcov_adjusted: bool,
}

impl FitResult {
    /// Look up an estimate by regressor name.
    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }
}

// ---------------------------------------------------------------------------
// Demeaning
// ---------------------------------------------------------------------------

/// Absorb fixed effects in place by weighted alternating projections.
///
/// Each sweep subtracts weighted group means along every dimension in turn;
/// convergence is reached when no entry moved more than [`DEMEAN_TOL`]
/// relative to its column's original scale. A group whose weights sum to
/// zero falls back to the unweighted mean so its rows still demean rather
/// than blowing up. Returns the number of sweeps.
fn demean_in_place(
    cols: &mut [Vec<f64>],
    dims: &[(Vec<usize>, usize)],
    weights: &[f64],
) -> Result<usize> {
    if dims.is_empty() || cols.is_empty() {
        return Ok(0);
    }
    let scales: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().fold(1.0f64, |m, v| m.max(v.abs())))
        .collect();
    let n = weights.len();
    let mut sums: Vec<f64> = Vec::new();
    let mut wsums: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for sweep in 1..=DEMEAN_MAX_SWEEPS {
        let mut worst: f64 = 0.0;
        for (codes, n_groups) in dims {
            for (col, &scale) in cols.iter_mut().zip(&scales) {
                sums.clear();
                sums.resize(*n_groups, 0.0);
                wsums.clear();
                wsums.resize(*n_groups, 0.0);
                counts.clear();
                counts.resize(*n_groups, 0);
                for i in 0..n {
                    let g = codes[i];
                    sums[g] += weights[i] * col[i];
                    wsums[g] += weights[i];
                    counts[g] += 1;
                }
                let means: Vec<f64> = (0..*n_groups)
                    .map(|g| {
                        if wsums[g] > 0.0 {
                            sums[g] / wsums[g]
                        } else {
                            let raw: f64 = (0..n)
                                .filter(|&i| codes[i] == g)
                                .map(|i| col[i])
                                .sum();
                            raw / counts[g].max(1) as f64
                        }
                    })
                    .collect();
                for i in 0..n {
                    let m = means[codes[i]];
                    col[i] -= m;
                    worst = worst.max(m.abs() / scale);
                }
            }
        }
        if worst <= DEMEAN_TOL {
            return Ok(sweep);
        }
    }
    Err(EconError::NonConvergence {
        sweeps: DEMEAN_MAX_SWEEPS,
    })
}

// ---------------------------------------------------------------------------
// Core least squares
// ---------------------------------------------------------------------------

struct LmCore {
    /// Indices of kept columns in the given design order.
    kept: Vec<usize>,
    beta: DVector<f64>,
    /// `(X'WX)^{-1}` over the kept columns.
    bread: DMatrix<f64>,
}

/// Weighted least squares with a modified Gram–Schmidt collinearity screen.
///
/// `scales[j]` is column `j`'s pre-demeaning weighted norm; a column whose
/// orthogonalized residual falls below [`COLLINEARITY_TOL`] times that scale
/// is dropped. Columns are processed in order, so the later of two dependent
/// columns loses.
fn solve_lm(cols: &[Vec<f64>], scales: &[f64], y: &[f64], weights: &[f64]) -> Result<LmCore> {
    let n = y.len();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let weighted = |col: &[f64]| DVector::from_fn(n, |i, _| col[i] * sqrt_w[i]);

    let mut kept: Vec<usize> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept_w: Vec<DVector<f64>> = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        let xw = weighted(col);
        let mut r = xw.clone();
        // Two orthogonalization passes for numerical stability.
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
        }
        let norm = r.norm();
        if norm <= COLLINEARITY_TOL * scales[j].max(f64::MIN_POSITIVE) {
            continue;
        }
        basis.push(r / norm);
        kept.push(j);
        kept_w.push(xw);
    }
    if kept.is_empty() {
        return Err(EconError::RankDeficient);
    }

    let k = kept.len();
    let xmat = DMatrix::from_fn(n, k, |i, j| kept_w[j][i]);
    let yvec = DVector::from_fn(n, |i, _| y[i] * sqrt_w[i]);
    let beta = xmat
        .clone()
        .svd(true, true)
        .solve(&yvec, f64::EPSILON)
        .map_err(|_| EconError::RankDeficient)?;
    let xtx = xmat.transpose() * &xmat;
    let bread = nalgebra::Cholesky::new(xtx)
        .ok_or(EconError::RankDeficient)?
        .inverse();
    Ok(LmCore {
        kept,
        beta: beta.column(0).into_owned(),
        bread,
    })
}

/// Sandwich covariance for scores `s_i = w_i e_i x_i`.
///
/// No cluster dimension gives HC0; one gives the usual clustered meat; two
/// gives the inclusion–exclusion combination (dimension A + dimension B −
/// their intersection). With `small_sample`, each component's meat is scaled
/// by its own `G/(G-1)`. Two-way covariance is not positive semi-definite by
/// construction: negative eigenvalues are clipped to zero and flagged.
fn sandwich(
    bread: &DMatrix<f64>,
    xcols: &[&[f64]],
    resid: &[f64],
    weights: &[f64],
    clusters: &[(Vec<usize>, usize)],
    small_sample: bool,
) -> (DMatrix<f64>, bool) {
    let n = resid.len();
    let k = xcols.len();
    let score = |i: usize, j: usize| weights[i] * resid[i] * xcols[j][i];

    let meat_for = |codes: Option<&Vec<usize>>, n_groups: usize| -> DMatrix<f64> {
        let mut meat = DMatrix::zeros(k, k);
        match codes {
            None => {
                for i in 0..n {
                    for a in 0..k {
                        let sa = score(i, a);
                        for b in a..k {
                            meat[(a, b)] += sa * score(i, b);
                        }
                    }
                }
            }
            Some(codes) => {
                let mut sums = vec![DVector::<f64>::zeros(k); n_groups];
                for i in 0..n {
                    let group = &mut sums[codes[i]];
                    for (a, entry) in group.iter_mut().enumerate() {
                        *entry += score(i, a);
                    }
                }
                for s in &sums {
                    for a in 0..k {
                        for b in a..k {
                            meat[(a, b)] += s[a] * s[b];
                        }
                    }
                }
                if small_sample && n_groups > 1 {
                    meat *= n_groups as f64 / (n_groups as f64 - 1.0);
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                meat[(a, b)] = meat[(b, a)];
            }
        }
        meat
    };

    let meat = match clusters {
        [] => meat_for(None, 0),
        [(codes, g)] => meat_for(Some(codes), *g),
        [(codes_a, ga), (codes_b, gb)] => {
            let mut inter: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            let codes_ab: Vec<usize> = (0..n)
                .map(|i| {
                    let next = inter.len();
                    *inter.entry((codes_a[i], codes_b[i])).or_insert(next)
                })
                .collect();
            let g_ab = inter.len();
            meat_for(Some(codes_a), *ga) + meat_for(Some(codes_b), *gb)
                - meat_for(Some(&codes_ab), g_ab)
        }
        _ => unreachable!("validated: at most two cluster dimensions"),
    };

    let mut vcov = bread * meat * bread;
    let mut adjusted = false;
    if clusters.len() == 2 {
        let eigen = nalgebra::SymmetricEigen::new(vcov.clone());
        if eigen.eigenvalues.iter().any(|&l| l < 0.0) {
            let clipped = DVector::from_fn(k, |i, _| eigen.eigenvalues[i].max(0.0));
            vcov = &eigen.eigenvectors
                * DMatrix::from_diagonal(&clipped)
                * eigen.eigenvectors.transpose();
            adjusted = true;
        }
    }
    (vcov, adjusted)
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

fn no_overlap(spec: &DesignSpec) -> Result<()> {
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    let groups: [(&str, Vec<&String>); 4] = [
        ("outcome", vec![&spec.outcome]),
        ("exog", spec.exog.iter().collect()),
        ("endog", spec.endog.iter().collect()),
        ("instruments", spec.instruments.iter().collect()),
    ];
    for (role, cols) in &groups {
        for col in cols {
            if let Some(prev) = seen.insert(col.as_str(), role) {
                return Err(EconError::InvalidSpec(format!(
                    "column {col:?} appears as both {prev} and {role}"
                )));
            }
        }
    }
    Ok(())
}

/// Estimate a design on a panel. Dispatches to OLS when `endog` is empty and
/// two-stage least squares otherwise.
pub fn fit(panel: &Panel, spec: &DesignSpec) -> Result<FitResult> {
    let n = panel.n_rows();
    if n == 0 {
        return Err(EconError::EmptyPanel);
    }
    if spec.outcome.is_empty() {
        return Err(EconError::InvalidSpec("no outcome named".into()));
    }
    no_overlap(spec)?;
    if spec.endog.is_empty() != spec.instruments.is_empty() {
        return Err(EconError::InvalidSpec(
            "endogenous regressors and instruments must be named together".into(),
        ));
    }
    if !spec.endog.is_empty() && spec.instruments.len() < spec.endog.len() {
        return Err(EconError::WeakRank(format!(
            "{} instruments for {} endogenous regressors",
            spec.instruments.len(),
            spec.endog.len()
        )));
    }
    if spec.cluster.len() > 2 {
        return Err(EconError::InvalidSpec(
            "at most two cluster dimensions are supported".into(),
        ));
    }

    let weights: Vec<f64> = match &spec.weight {
        Some(name) => {
            let w = panel.numeric(name)?.to_vec();
            if let Some(i) = w.iter().position(|&v| v < 0.0) {
                return Err(EconError::InvalidSpec(format!(
                    "negative weight at row {i} in column {name:?}"
                )));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(EconError::InvalidSpec("weights sum to zero".into()));
            }
            w
        }
        None => vec![1.0; n],
    };

    let mut fe_dims: Vec<(Vec<usize>, usize)> = Vec::new();
    let mut fe_report: Vec<(String, usize)> = Vec::new();
    for name in &spec.fe {
        let (codes, groups) = panel.group_codes(name)?;
        fe_report.push((name.clone(), groups));
        fe_dims.push((codes, groups));
    }
    let mut cluster_dims: Vec<(Vec<usize>, usize)> = Vec::new();
    let mut cluster_report: Vec<(String, usize)> = Vec::new();
    for name in &spec.cluster {
        let (codes, groups) = panel.group_codes(name)?;
        if groups < 2 {
            return Err(EconError::SingleCluster(name.clone()));
        }
        cluster_report.push((name.clone(), groups));
        cluster_dims.push((codes, groups));
    }

    // Assemble, scale, and demean every column the design touches.
    let design_names: Vec<&String> = spec
        .exog
        .iter()
        .chain(spec.endog.iter())
        .chain(spec.instruments.iter())
        .collect();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(1 + design_names.len());
    cols.push(panel.numeric(&spec.outcome)?.to_vec());
    for name in &design_names {
        cols.push(panel.numeric(name)?.to_vec());
    }
    let pre_scale: Vec<f64> = cols[1..]
        .iter()
        .map(|c| {
            c.iter()
                .zip(&weights)
                .map(|(x, w)| w * x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let demean_iterations = demean_in_place(&mut cols, &fe_dims, &weights)?;

    let y = cols[0].clone();
    let n_exog = spec.exog.len();
    let n_endog = spec.endog.len();
    let exog_cols = &cols[1..1 + n_exog];
    let endog_cols = &cols[1 + n_exog..1 + n_exog + n_endog];
    let inst_cols = &cols[1 + n_exog + n_endog..];
    let exog_scales = &pre_scale[..n_exog];
    // Endogenous pre-demean scales are not needed: the second stage screens
    // its fitted columns with their own post-demeaning norms.
    let inst_scales = &pre_scale[n_exog + n_endog..];

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z975 = normal.inverse_cdf(0.975);
    let finish = |names: Vec<String>,
                  dropped: Vec<String>,
                  core: &LmCore,
                  vcov: DMatrix<f64>,
                  adjusted: bool,
                  first_stage_f: Option<f64>,
                  demean_iterations: usize|
     -> FitResult {
        let estimates = names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let coef = core.beta[j];
                let se = vcov[(j, j)].max(0.0).sqrt();
                let z = coef / se;
                Estimate {
                    name: name.clone(),
                    coef,
                    se,
                    z,
                    p: erfc(z.abs() / std::f64::consts::SQRT_2),
                    ci_lo: coef - z975 * se,
                    ci_hi: coef + z975 * se,
                }
            })
            .collect();
        let k = names.len();
        FitResult {
            estimates,
            dropped,
            n_obs: n,
            fe: fe_report.clone(),
            clusters: cluster_report.clone(),
            demean_iterations,
            first_stage_f,
            vcov: (0..k)
                .map(|a| (0..k).map(|b| vcov[(a, b)]).collect())
                .collect(),
            vcov_adjusted: adjusted,
        }
    };

    if n_endog == 0 {
        if n_exog == 0 {
            return Err(EconError::InvalidSpec("no regressors named".into()));
        }
        let core = solve_lm(exog_cols, exog_scales, &y, &weights)?;
        let resid: Vec<f64> = (0..n)
            .map(|i| {
                y[i] - core
                    .kept
                    .iter()
                    .zip(core.beta.iter())
                    .map(|(&j, b)| b * exog_cols[j][i])
                    .sum::<f64>()
            })
            .collect();
        let xk: Vec<&[f64]> = core.kept.iter().map(|&j| exog_cols[j].as_slice()).collect();
        let (vcov, adjusted) = sandwich(
            &core.bread,
            &xk,
            &resid,
            &weights,
            &cluster_dims,
            spec.small_sample,
        );
        let names: Vec<String> = core.kept.iter().map(|&j| spec.exog[j].clone()).collect();
        let dropped: Vec<String> = (0..n_exog)
            .filter(|j| !core.kept.contains(j))
            .map(|j| spec.exog[j].clone())
            .collect();
        return Ok(finish(names, dropped, &core, vcov, adjusted, None, demean_iterations));
    }

    // --- Two-stage least squares ---------------------------------------
    // First-stage design: exogenous regressors plus excluded instruments.
    let fs_cols: Vec<Vec<f64>> = exog_cols.iter().chain(inst_cols.iter()).cloned().collect();
    let fs_scales: Vec<f64> = exog_scales.iter().chain(inst_scales.iter()).copied().collect();
    let mut fitted: Vec<Vec<f64>> = Vec::with_capacity(n_endog);
    let mut min_f: Option<f64> = None;
    for (k_endog, endog_col) in endog_cols.iter().enumerate() {
        let core = solve_lm(&fs_cols, &fs_scales, endog_col, &weights)?;
        let kept_inst: Vec<usize> = core
            .kept
            .iter()
            .enumerate()
            .filter(|(_, &j)| j >= n_exog)
            .map(|(pos, _)| pos)
            .collect();
        if kept_inst.is_empty() {
            return Err(EconError::WeakRank(format!(
                "all excluded instruments collinear in the first stage for {:?}",
                spec.endog[k_endog]
            )));
        }
        let resid: Vec<f64> = (0..n)
            .map(|i| {
                endog_col[i]
                    - core
                        .kept
                        .iter()
                        .zip(core.beta.iter())
                        .map(|(&j, b)| b * fs_cols[j][i])
                        .sum::<f64>()
            })
            .collect();
        let xk: Vec<&[f64]> = core.kept.iter().map(|&j| fs_cols[j].as_slice()).collect();
        let (fs_vcov, _) = sandwich(
            &core.bread,
            &xk,
            &resid,
            &weights,
            &cluster_dims,
            spec.small_sample,
        );
        // Cluster-robust Wald statistic on the excluded-instrument block,
        // divided by the number of instruments.
        let m = kept_inst.len();
        let gamma = DVector::from_fn(m, |r, _| core.beta[kept_inst[r]]);
        let vzz = DMatrix::from_fn(m, m, |r, c| fs_vcov[(kept_inst[r], kept_inst[c])]);
        let pinv_eps = vzz.amax() * 1e-14 + f64::MIN_POSITIVE;
        let pinv = vzz
            .svd(true, true)
            .pseudo_inverse(pinv_eps)
            .map_err(|_| EconError::WeakRank("singular first-stage covariance".into()))?;
        let f = (gamma.transpose() * pinv * &gamma)[(0, 0)] / m as f64;
        min_f = Some(min_f.map_or(f, |cur: f64| cur.min(f)));

        let xhat: Vec<f64> = (0..n)
            .map(|i| {
                core.kept
                    .iter()
                    .zip(core.beta.iter())
                    .map(|(&j, b)| b * fs_cols[j][i])
                    .sum()
            })
            .collect();
        fitted.push(xhat);
    }

    // Second stage on [exog, fitted endog].
    let mut ss_cols: Vec<Vec<f64>> = exog_cols.to_vec();
    ss_cols.extend(fitted.iter().cloned());
    let mut ss_scales: Vec<f64> = exog_scales.to_vec();
    ss_scales.extend(fitted.iter().map(|c| {
        c.iter()
            .zip(&weights)
            .map(|(x, w)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }));
    let core = solve_lm(&ss_cols, &ss_scales, &y, &weights)?;
    for (k_endog, name) in spec.endog.iter().enumerate() {
        if !core.kept.contains(&(n_exog + k_endog)) {
            return Err(EconError::WeakRank(format!(
                "fitted endogenous regressor {name:?} dropped as collinear in the second stage"
            )));
        }
    }
    // Residuals use the ORIGINAL endogenous columns, not the fitted ones.
    let original: Vec<&[f64]> = (0..n_exog)
        .map(|j| exog_cols[j].as_slice())
        .chain((0..n_endog).map(|j| endog_cols[j].as_slice()))
        .collect();
    let resid: Vec<f64> = (0..n)
        .map(|i| {
            y[i] - core
                .kept
                .iter()
                .zip(core.beta.iter())
                .map(|(&j, b)| b * original[j][i])
                .sum::<f64>()
        })
        .collect();
    let xk: Vec<&[f64]> = core.kept.iter().map(|&j| ss_cols[j].as_slice()).collect();
    let (vcov, adjusted) = sandwich(
        &core.bread,
        &xk,
        &resid,
        &weights,
        &cluster_dims,
        spec.small_sample,
    );
    let all_names: Vec<&String> = spec.exog.iter().chain(spec.endog.iter()).collect();
    let names: Vec<String> = core.kept.iter().map(|&j| all_names[j].clone()).collect();
    let dropped: Vec<String> = (0..all_names.len())
        .filter(|j| !core.kept.contains(j))
        .map(|j| all_names[j].clone())
        .collect();
    Ok(finish(names, dropped, &core, vcov, adjusted, min_f, demean_iterations))
}

// ---------------------------------------------------------------------------
// Downwind bin design
// ---------------------------------------------------------------------------

/// One estimated exposure decile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinFit {
    pub bin: String,
    pub coef: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Estimate the bin-interaction design: exposure × bin coefficients relative
/// to the [`REFERENCE_BIN`] (the weakest positive decile).
///
/// For every non-reference label the design gains an interaction column
/// `"{exposure}:{label}"` (exposure where the row's bin matches, zero
/// elsewhere) and a main-effect dummy `"{bin_col}:{label}"`; the exposure
/// main effect and `base.exog` controls complete the regressor list, and
/// `base` supplies outcome, fixed effects, clustering, and weights. The calm
/// bin is a label like any other, so it gets a coefficient.
///
/// Returns one [`BinFit`] per estimated interaction in label order (bins
/// whose interaction was dropped — e.g. empty bins — are skipped and appear
/// in [`FitResult::dropped`]).
pub fn fit_downwind_bins(
    panel: &Panel,
    exposure: &str,
    bin_col: &str,
    labels: &[&str],
    base: &DesignSpec,
) -> Result<(Vec<BinFit>, FitResult)> {
    if !labels.contains(&REFERENCE_BIN) {
        return Err(EconError::InvalidSpec(format!(
            "label set must include the reference bin {REFERENCE_BIN:?}"
        )));
    }
    let bins = panel.categorical(bin_col)?;
    for level in &bins.levels {
        if !labels.contains(&level.as_str()) {
            return Err(EconError::MissingBin(level.clone()));
        }
    }
    let x = panel.numeric(exposure)?.to_vec();
    let n = panel.n_rows();

    let mut work = panel.clone();
    let mut spec = base.clone();
    spec.exog = Vec::new();
    for &label in labels {
        if label == REFERENCE_BIN {
            continue;
        }
        let mask: Vec<f64> = (0..n)
            .map(|i| if bins.level_of(i) == label { 1.0 } else { 0.0 })
            .collect();
        let inter: Vec<f64> = mask.iter().zip(&x).map(|(m, xi)| m * xi).collect();
        let iname = format!("{exposure}:{label}");
        let dname = format!("{bin_col}:{label}");
        work.push_numeric(&iname, inter)?;
        work.push_numeric(&dname, mask)?;
        spec.exog.push(iname);
    }
    for &label in labels {
        if label != REFERENCE_BIN {
            spec.exog.push(format!("{bin_col}:{label}"));
        }
    }
    spec.exog.push(exposure.to_string());
    spec.exog.extend(base.exog.iter().cloned());

    let result = fit(&work, &spec)?;
    let mut out = Vec::new();
    for &label in labels {
        if label == REFERENCE_BIN {
            continue;
        }
        if let Some(est) = result.estimate(&format!("{exposure}:{label}")) {
            out.push(BinFit {
                bin: label.to_string(),
                coef: est.coef,
                se: est.se,
                ci_lo: est.ci_lo,
                ci_hi: est.ci_hi,
            });
        }
    }
    Ok((out, result))
}

// ---------------------------------------------------------------------------
// Standardized index
// ---------------------------------------------------------------------------

/// Equal-weight average of per-series z-scores, tolerating missing values.
///
/// Each series is standardized over its present values (population standard
/// deviation); a row's index averages the z-scores of the series present in
/// that row and is `None` when every series is missing. A constant series
/// cannot be standardized and raises [`EconError::ZeroVariance`] naming its
/// position.
pub fn zscore_index(series: &[Vec<Option<f64>>]) -> Result<Vec<Option<f64>>> {
    if series.is_empty() {
        return Err(EconError::InvalidSpec("no series given".into()));
    }
    let n = series[0].len();
    for (s, col) in series.iter().enumerate() {
        if col.len() != n {
            return Err(EconError::LengthMismatch {
                column: format!("series {s}"),
                expected: n,
                found: col.len(),
            });
        }
    }
    let mut zscored: Vec<Vec<Option<f64>>> = Vec::with_capacity(series.len());
    for (s, col) in series.iter().enumerate() {
        let present: Vec<f64> = col.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(EconError::ZeroVariance(s.to_string()));
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / present.len() as f64;
        let sd = var.sqrt();
        if sd == 0.0 {
            return Err(EconError::ZeroVariance(s.to_string()));
        }
        zscored.push(col.iter().map(|v| v.map(|x| (x - mean) / sd)).collect());
    }
    Ok((0..n)
        .map(|i| {
            let vals: Vec<f64> = zscored.iter().filter_map(|col| col[i]).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        })
        .collect())
}
