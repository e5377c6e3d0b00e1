//! Return/factor panels: ingestion, validation, alignment and scaling.
//!
//! A [`ReturnPanel`] holds `T` monthly observations of `N` test-asset excess
//! returns and `K` candidate factors. Tradable factors that also appear among
//! the test assets are linked through `factors_as_assets`, so the stacked
//! time-series vector `Y_t` contains each series exactly once.
//!
//! Panels are immutable once built; every transform returns a new panel.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Tolerance on the zero-sum constraint of the kappa tilts.
pub const KAPPA_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetClass {
    Bond,
    Stock,
    Nontradable,
}

impl AssetClass {
    pub const ALL: [AssetClass; 3] = [AssetClass::Bond, AssetClass::Stock, AssetClass::Nontradable];

    pub fn as_str(&self) -> &'static str {
        match self {
            AssetClass::Bond => "bond",
            AssetClass::Stock => "stock",
            AssetClass::Nontradable => "nontradable",
        }
    }
}

impl fmt::Display for AssetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssetClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bond" => Ok(AssetClass::Bond),
            "stock" => Ok(AssetClass::Stock),
            "nontradable" => Ok(AssetClass::Nontradable),
            other => Err(Error::Schema(format!("unknown asset_class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMeta {
    pub name: String,
    pub tradable: bool,
    pub asset_class: AssetClass,
    /// Prior tilt `kappa_j` in (-1, 1); tilts sum to zero across the zoo.
    pub kappa_tilt: f64,
}

impl FactorMeta {
    pub fn new(name: impl Into<String>, tradable: bool, asset_class: AssetClass) -> Self {
        FactorMeta {
            name: name.into(),
            tradable,
            asset_class,
            kappa_tilt: 0.0,
        }
    }
}

/// Per-column standard deviations used to standardize a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub asset_sd: Vec<f64>,
    pub factor_sd: Vec<f64>,
}

impl Scaling {
    /// Scaling constants estimated on a subset of rows (e.g. a training window).
    pub fn from_rows(panel: &ReturnPanel, rows: Range<usize>) -> Result<Scaling> {
        if rows.end > panel.t() || rows.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "scaling window {rows:?} invalid for T = {}",
                panel.t()
            )));
        }
        let sd_of = |m: &DMatrix<f64>, j: usize, name: &str| -> Result<f64> {
            let col: Vec<f64> = m.view((rows.start, j), (rows.len(), 1)).iter().copied().collect();
            let sd = stats::std_dev(&col);
            let scale = 1.0 + stats::mean(&col).abs();
            if !(sd > 1e-12 * scale) {
                return Err(Error::DegenerateColumn(name.to_string()));
            }
            Ok(sd)
        };
        let asset_sd = (0..panel.n_assets())
            .map(|j| sd_of(&panel.returns, j, &panel.asset_names[j]))
            .collect::<Result<Vec<_>>>()?;
        let factor_sd = (0..panel.n_factors())
            .map(|j| sd_of(&panel.factors, j, &panel.factor_meta[j].name))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scaling { asset_sd, factor_sd })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<String>,
    asset_names: Vec<String>,
    returns: DMatrix<f64>,
    factors: DMatrix<f64>,
    factor_meta: Vec<FactorMeta>,
    factors_as_assets: Vec<Option<usize>>,
    scaling: Option<Scaling>,
}

fn valid_date(d: &str) -> bool {
    let b = d.as_bytes();
    b.len() == 7
        && b[..4].iter().all(u8::is_ascii_digit)
        && b[4] == b'-'
        && b[5..].iter().all(u8::is_ascii_digit)
        && matches!(
            &d[5..],
            "01" | "02" | "03" | "04" | "05" | "06" | "07" | "08" | "09" | "10" | "11" | "12"
        )
}

/// Month keys `YYYY-MM` for `t` consecutive months starting at `start_year`-01.
pub fn synthetic_dates(start_year: usize, t: usize) -> Vec<String> {
    (0..t)
        .map(|i| format!("{:04}-{:02}", start_year + i / 12, i % 12 + 1))
        .collect()
}

impl ReturnPanel {
    /// Build and validate a panel. Tradable factors whose name matches an
    /// asset column are linked to that column (values must agree).
    pub fn new(
        dates: Vec<String>,
        asset_names: Vec<String>,
        returns: DMatrix<f64>,
        factors: DMatrix<f64>,
        factor_meta: Vec<FactorMeta>,
    ) -> Result<ReturnPanel> {
        let t = dates.len();
        if returns.nrows() != t || factors.nrows() != t {
            return Err(Error::Dimension(format!(
                "{} dates but returns have {} rows and factors {} rows",
                t,
                returns.nrows(),
                factors.nrows()
            )));
        }
        if returns.ncols() != asset_names.len() {
            return Err(Error::Dimension(format!(
                "{} asset names for {} return columns",
                asset_names.len(),
                returns.ncols()
            )));
        }
        if factors.ncols() != factor_meta.len() {
            return Err(Error::Dimension(format!(
                "{} factor metadata rows for {} factor columns",
                factor_meta.len(),
                factors.ncols()
            )));
        }
        if returns.ncols() == 0 {
            return Err(Error::Schema("panel has no test assets".into()));
        }
        for (i, d) in dates.iter().enumerate() {
            if !valid_date(d) {
                return Err(Error::Data {
                    row: i + 1,
                    column: "date".into(),
                    detail: format!("`{d}` is not a YYYY-MM month key"),
                });
            }
            if i > 0 && dates[i - 1].as_str() >= d.as_str() {
                return Err(Error::Alignment {
                    row: i + 1,
                    detail: format!("dates not strictly increasing ({} then {d})", dates[i - 1]),
                });
            }
        }
        check_finite(&returns, &asset_names)?;
        let factor_names: Vec<String> = factor_meta.iter().map(|m| m.name.clone()).collect();
        check_finite(&factors, &factor_names)?;
        check_unique(&asset_names, "asset")?;
        check_unique(&factor_names, "factor")?;
        validate_kappa(&factor_meta)?;

        let asset_index: HashMap<&str, usize> = asset_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut factors_as_assets = Vec::with_capacity(factor_meta.len());
        for (j, meta) in factor_meta.iter().enumerate() {
            let linked = if meta.tradable {
                asset_index.get(meta.name.as_str()).copied()
            } else {
                None
            };
            if let Some(i) = linked {
                for r in 0..t {
                    let (a, b) = (returns[(r, i)], factors[(r, j)]);
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                        return Err(Error::Data {
                            row: r + 1,
                            column: meta.name.clone(),
                            detail: format!("tradable factor ({b}) differs from asset column of the same name ({a})"),
                        });
                    }
                }
            }
            factors_as_assets.push(linked);
        }
        let panel = ReturnPanel {
            dates,
            asset_names,
            returns,
            factors,
            factor_meta,
            factors_as_assets,
            scaling: None,
        };
        let p = panel.y_dim();
        if t < p + 3 {
            return Err(Error::InsufficientData(format!(
                "T = {t} but the stacked vector has p = {p} components; need T >= p + 3"
            )));
        }
        Ok(panel)
    }

    pub fn t(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.ncols()
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn factors(&self) -> &DMatrix<f64> {
        &self.factors
    }

    pub fn factor_meta(&self) -> &[FactorMeta] {
        &self.factor_meta
    }

    pub fn factor_names(&self) -> Vec<String> {
        self.factor_meta.iter().map(|m| m.name.clone()).collect()
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factor_meta.iter().position(|m| m.name == name)
    }

    pub fn kappa(&self) -> Vec<f64> {
        self.factor_meta.iter().map(|m| m.kappa_tilt).collect()
    }

    /// For each factor, the asset column carrying the same series, if any.
    pub fn factors_as_assets(&self) -> &[Option<usize>] {
        &self.factors_as_assets
    }

    pub fn is_standardized(&self) -> bool {
        self.scaling.is_some()
    }

    pub fn scaling(&self) -> Option<&Scaling> {
        self.scaling.as_ref()
    }

    /// Dimension `p` of the stacked vector: assets plus unlinked factors.
    pub fn y_dim(&self) -> usize {
        self.n_assets() + self.factors_as_assets.iter().filter(|l| l.is_none()).count()
    }

    /// Stacked `T x p` observation matrix `[returns, unlinked factors]`.
    pub fn y_matrix(&self) -> DMatrix<f64> {
        let extra: Vec<usize> = (0..self.n_factors())
            .filter(|&j| self.factors_as_assets[j].is_none())
            .collect();
        let n = self.n_assets();
        let mut y = DMatrix::zeros(self.t(), n + extra.len());
        y.columns_mut(0, n).copy_from(&self.returns);
        for (k, &j) in extra.iter().enumerate() {
            y.column_mut(n + k).copy_from(&self.factors.column(j));
        }
        y
    }

    /// Position of each factor inside the stacked vector `Y_t`.
    pub fn factor_positions_in_y(&self) -> Vec<usize> {
        let mut next = self.n_assets();
        self.factors_as_assets
            .iter()
            .map(|l| match l {
                Some(i) => *i,
                None => {
                    next += 1;
                    next - 1
                }
            })
            .collect()
    }

    /// Append every tradable factor not yet among the test assets as an
    /// extra asset column, so that tradable factors must price themselves.
    pub fn with_tradable_factors_as_assets(&self) -> Result<ReturnPanel> {
        let missing: Vec<usize> = (0..self.n_factors())
            .filter(|&j| self.factor_meta[j].tradable && self.factors_as_assets[j].is_none())
            .collect();
        if missing.is_empty() {
            return Ok(self.clone());
        }
        let n = self.n_assets();
        let mut returns = DMatrix::zeros(self.t(), n + missing.len());
        returns.columns_mut(0, n).copy_from(&self.returns);
        let mut names = self.asset_names.clone();
        for (k, &j) in missing.iter().enumerate() {
            returns.column_mut(n + k).copy_from(&self.factors.column(j));
            names.push(self.factor_meta[j].name.clone());
        }
        let mut out = ReturnPanel::new(
            self.dates.clone(),
            names,
            returns,
            self.factors.clone(),
            self.factor_meta.clone(),
        )?;
        if let Some(s) = &self.scaling {
            let mut asset_sd = s.asset_sd.clone();
            asset_sd.extend(missing.iter().map(|&j| s.factor_sd[j]));
            out.scaling = Some(Scaling {
                asset_sd,
                factor_sd: s.factor_sd.clone(),
            });
        }
        Ok(out)
    }

    /// Panel restricted to the factors at `indices` (in that order).
    pub fn select_factors(&self, indices: &[usize]) -> Result<ReturnPanel> {
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.n_factors()) {
            return Err(Error::InvalidArgument(format!("factor index {bad} out of range")));
        }
        let factors = DMatrix::from_fn(self.t(), indices.len(), |r, c| self.factors[(r, indices[c])]);
        let meta: Vec<FactorMeta> = indices.iter().map(|&j| self.factor_meta[j].clone()).collect();
        let mut out = ReturnPanel::new(
            self.dates.clone(),
            self.asset_names.clone(),
            self.returns.clone(),
            factors,
            meta,
        )?;
        if let Some(s) = &self.scaling {
            out.scaling = Some(Scaling {
                asset_sd: s.asset_sd.clone(),
                factor_sd: indices.iter().map(|&j| s.factor_sd[j]).collect(),
            });
        }
        Ok(out)
    }

    /// Panel restricted to the factors with the given names.
    pub fn select_factors_by_name(&self, names: &[&str]) -> Result<ReturnPanel> {
        let idx = names
            .iter()
            .map(|n| {
                self.factor_index(n)
                    .ok_or_else(|| Error::Schema(format!("no factor column named `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_factors(&idx)
    }

    /// Rows `rows` of the panel; scaling constants are carried over unchanged.
    pub fn slice_rows(&self, rows: Range<usize>) -> Result<ReturnPanel> {
        if rows.end > self.t() || rows.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "row range {rows:?} invalid for T = {}",
                self.t()
            )));
        }
        let len = rows.len();
        let mut out = ReturnPanel::new(
            self.dates[rows.clone()].to_vec(),
            self.asset_names.clone(),
            self.returns.rows(rows.start, len).into_owned(),
            self.factors.rows(rows.start, len).into_owned(),
            self.factor_meta.clone(),
        )?;
        out.scaling = self.scaling.clone();
        Ok(out)
    }

    /// Replace the kappa tilts (validated against the zero-sum constraint).
    pub fn with_kappa(&self, kappa: &[f64]) -> Result<ReturnPanel> {
        if kappa.len() != self.n_factors() {
            return Err(Error::Dimension(format!(
                "{} kappa values for {} factors",
                kappa.len(),
                self.n_factors()
            )));
        }
        let mut out = self.clone();
        for (m, &k) in out.factor_meta.iter_mut().zip(kappa) {
            m.kappa_tilt = k;
        }
        validate_kappa(&out.factor_meta)?;
        Ok(out)
    }

    /// Undo a previous standardization.
    pub fn unstandardize(&self) -> ReturnPanel {
        let mut out = self.clone();
        if let Some(s) = out.scaling.take() {
            for (j, sd) in s.asset_sd.iter().enumerate() {
                out.returns.column_mut(j).scale_mut(*sd);
            }
            for (j, sd) in s.factor_sd.iter().enumerate() {
                out.factors.column_mut(j).scale_mut(*sd);
            }
        }
        out
    }
}

fn check_finite(m: &DMatrix<f64>, names: &[String]) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::Data {
                    row: r + 1,
                    column: names[c].clone(),
                    detail: format!("non-finite value {}", m[(r, c)]),
                });
            }
        }
    }
    Ok(())
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Schema(format!("duplicate {what} name `{n}`")));
        }
    }
    Ok(())
}

fn validate_kappa(meta: &[FactorMeta]) -> Result<()> {
    for m in meta {
        if !(m.kappa_tilt > -1.0 && m.kappa_tilt < 1.0) {
            return Err(Error::Schema(format!(
                "kappa_tilt of `{}` is {}, outside (-1, 1)",
                m.name, m.kappa_tilt
            )));
        }
    }
    let sum: f64 = meta.iter().map(|m| m.kappa_tilt).sum();
    if sum.abs() > KAPPA_SUM_TOL {
        return Err(Error::Schema(format!("kappa_tilt values must sum to 0, got {sum}")));
    }
    Ok(())
}

/// Rescale every return and factor column to unit sample standard deviation
/// (no demeaning), using full-sample constants.
pub fn standardize(panel: &ReturnPanel) -> Result<ReturnPanel> {
    let scaling = Scaling::from_rows(panel, 0..panel.t())?;
    standardize_with(panel, &scaling)
}

/// Rescale with externally supplied constants, e.g. from a training window.
pub fn standardize_with(panel: &ReturnPanel, scaling: &Scaling) -> Result<ReturnPanel> {
    if panel.is_standardized() {
        return Err(Error::InvalidArgument("panel is already standardized".into()));
    }
    if scaling.asset_sd.len() != panel.n_assets() || scaling.factor_sd.len() != panel.n_factors() {
        return Err(Error::Dimension("scaling constants do not match the panel".into()));
    }
    let mut out = panel.clone();
    for (j, sd) in scaling.asset_sd.iter().enumerate() {
        out.returns.column_mut(j).unscale_mut(*sd);
    }
    for (j, sd) in scaling.factor_sd.iter().enumerate() {
        out.factors.column_mut(j).unscale_mut(*sd);
    }
    out.scaling = Some(scaling.clone());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Duration adjustment

/// Corporate bond returns paired with duration-matched Treasury returns.
#[derive(Debug, Clone)]
pub struct DurationInputs {
    bond_returns: DMatrix<f64>,
    matched_treasury_returns: DMatrix<f64>,
    risk_free: Vec<f64>,
}

impl DurationInputs {
    pub fn new(
        bond_returns: DMatrix<f64>,
        matched_treasury_returns: DMatrix<f64>,
        risk_free: Vec<f64>,
    ) -> Result<DurationInputs> {
        if bond_returns.shape() != matched_treasury_returns.shape() {
            return Err(Error::Dimension(format!(
                "bond returns {:?} vs matched Treasury returns {:?}",
                bond_returns.shape(),
                matched_treasury_returns.shape()
            )));
        }
        if risk_free.len() != bond_returns.nrows() {
            return Err(Error::Dimension(format!(
                "risk-free series has {} rows, returns have {}",
                risk_free.len(),
                bond_returns.nrows()
            )));
        }
        Ok(DurationInputs {
            bond_returns,
            matched_treasury_returns,
            risk_free,
        })
    }

    pub fn bond_returns(&self) -> &DMatrix<f64> {
        &self.bond_returns
    }

    pub fn matched_treasury_returns(&self) -> &DMatrix<f64> {
        &self.matched_treasury_returns
    }

    pub fn risk_free(&self) -> &[f64] {
        &self.risk_free
    }
}

/// Duration-adjusted returns: bond return minus the matched Treasury return.
/// The risk-free rate cancels, so it does not enter the result.
pub fn duration_adjust(inputs: &DurationInputs) -> DMatrix<f64> {
    &inputs.bond_returns - &inputs.matched_treasury_returns
}

// ---------------------------------------------------------------------------
// CSV

/// A dated matrix as read from `date,<col1>,...,<colK>`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedMatrix {
    pub dates: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Read a dated numeric CSV; blank or NaN cells are data errors.
pub fn read_dated_csv(path: &Path) -> Result<DatedMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.is_empty() || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::Schema(format!(
            "{}: first header must be `date`",
            path.display()
        )));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    check_unique(&columns, "column")?;
    let mut dates = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = i + 1;
        dates.push(rec[0].to_string());
        for (j, name) in columns.iter().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                row,
                column: name.clone(),
                detail: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    column: name.clone(),
                    detail: format!("missing or non-finite value `{cell}`"),
                });
            }
            data.push(v);
        }
    }
    let values = DMatrix::from_row_slice(dates.len(), columns.len(), &data);
    Ok(DatedMatrix { dates, columns, values })
}

pub fn write_dated_csv(path: &Path, dates: &[String], columns: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["date".to_string()];
    header.extend(columns.iter().cloned());
    wtr.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (r, d) in dates.iter().enumerate() {
        let mut rec = vec![d.clone()];
        rec.extend((0..values.ncols()).map(|c| format!("{}", values[(r, c)])));
        wtr.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Check that two date columns agree row by row.
pub fn check_aligned(a: &[String], b: &[String], what: &str) -> Result<()> {
    for row in 0..a.len().max(b.len()) {
        match (a.get(row), b.get(row)) {
            (Some(x), Some(y)) if x == y => {}
            (x, y) => {
                return Err(Error::Alignment {
                    row: row + 1,
                    detail: format!(
                        "{what}: `{}` vs `{}`",
                        x.map_or("<missing>", String::as_str),
                        y.map_or("<missing>", String::as_str)
                    ),
                })
            }
        }
    }
    Ok(())
}

fn read_meta(path: &Path) -> Result<Vec<FactorMeta>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected = ["name", "tradable", "asset_class", "kappa_tilt"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Schema(format!(
            "{}: header must be `name,tradable,asset_class,kappa_tilt`",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = i + 1;
        let tradable = match &rec[1] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Data {
                    row,
                    column: "tradable".into(),
                    detail: format!("`{other}` is not 0 or 1"),
                })
            }
        };
        let kappa_tilt: f64 = rec[3].parse().map_err(|_| Error::Data {
            row,
            column: "kappa_tilt".into(),
            detail: format!("`{}` is not a number", &rec[3]),
        })?;
        out.push(FactorMeta {
            name: rec[0].to_string(),
            tradable,
            asset_class: rec[2].parse()?,
            kappa_tilt,
        });
    }
    Ok(out)
}

/// Load and validate a panel from the three CSV files.
pub fn load_panel(returns_path: &Path, factors_path: &Path, meta_path: &Path) -> Result<ReturnPanel> {
    let returns = read_dated_csv(returns_path)?;
    let factors = read_dated_csv(factors_path)?;
    check_aligned(&returns.dates, &factors.dates, "returns vs factors dates")?;
    let meta = read_meta(meta_path)?;
    check_unique(&meta.iter().map(|m| m.name.clone()).collect::<Vec<_>>(), "factor")?;
    let by_name: HashMap<&str, &FactorMeta> = meta.iter().map(|m| (m.name.as_str(), m)).collect();
    let ordered = factors
        .columns
        .iter()
        .map(|c| {
            by_name
                .get(c.as_str())
                .map(|m| (*m).clone())
                .ok_or_else(|| Error::Schema(format!("factor `{c}` has no metadata row")))
        })
        .collect::<Result<Vec<_>>>()?;
    if meta.len() != ordered.len() {
        return Err(Error::Schema(format!(
            "metadata lists {} factors but the factor file has {}",
            meta.len(),
            ordered.len()
        )));
    }
    ReturnPanel::new(returns.dates, returns.columns, returns.values, factors.values, ordered)
}

/// Write a panel back to the three-file CSV layout.
pub fn write_panel(panel: &ReturnPanel, returns_path: &Path, factors_path: &Path, meta_path: &Path) -> Result<()> {
    write_dated_csv(returns_path, panel.dates(), panel.asset_names(), panel.returns())?;
    write_dated_csv(factors_path, panel.dates(), &panel.factor_names(), panel.factors())?;
    let mut wtr = csv::Writer::from_path(meta_path).map_err(|e| csv_err(meta_path, e))?;
    wtr.write_record(["name", "tradable", "asset_class", "kappa_tilt"])
        .map_err(|e| csv_err(meta_path, e))?;
    for m in panel.factor_meta() {
        wtr.write_record([
            m.name.clone(),
            if m.tradable { "1".into() } else { "0".into() },
            m.asset_class.to_string(),
            format!("{}", m.kappa_tilt),
        ])
        .map_err(|e| csv_err(meta_path, e))?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: meta_path.to_path_buf(),
        source,
    })
}
