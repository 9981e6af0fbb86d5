//! Datasets, text/CSV ingestion and projection persistence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};

/// Version written by [`save_projection`].
pub const PROJECTION_FORMAT_VERSION: u32 = 1;

/// Tolerance for the projection invariants re-checked on construction and load.
pub const PROJECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    BinaryClassification,
    Regression,
}

/// Paired representations and responses.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    row_ids: Option<Vec<String>>,
    task: TaskKind,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, task: TaskKind) -> Result<Self> {
        Self::with_ids(x, y, None, task)
    }

    pub fn with_ids(
        x: DMatrix<f64>,
        y: DVector<f64>,
        row_ids: Option<Vec<String>>,
        task: TaskKind,
    ) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 || d < 1 {
            return Err(Error::InvalidInput(format!(
                "dataset needs at least 2 rows and 1 column, got {n}x{d}"
            )));
        }
        Error::check_dim(n, y.len())?;
        if let Some(ids) = &row_ids {
            Error::check_dim(n, ids.len())?;
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        if task == TaskKind::BinaryClassification {
            if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidInput(format!(
                    "classification labels must be 0 or 1, found {bad}"
                )));
            }
            let positives = y.iter().filter(|&&v| v == 1.0).count();
            if positives == 0 || positives == n {
                return Err(Error::InvalidInput(
                    "classification data must contain both classes".into(),
                ));
            }
        }
        Ok(Dataset {
            x,
            y,
            row_ids,
            task,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn row_ids(&self) -> Option<&[String]> {
        self.row_ids.as_deref()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Share of the most frequent class; only meaningful for classification.
    pub fn majority_share(&self) -> f64 {
        let pos = self.y.iter().filter(|&&v| v == 1.0).count() as f64;
        let n = self.len() as f64;
        pos.max(n - pos) / n
    }

    /// Rows at `indices`, re-validated as a dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let x = self.x.select_rows(indices);
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        let ids = self
            .row_ids
            .as_ref()
            .map(|ids| indices.iter().map(|&i| ids[i].clone()).collect());
        Dataset::with_ids(x, y, ids, self.task)
    }

    /// Same responses with replaced representations.
    pub fn with_x(&self, x: DMatrix<f64>) -> Result<Dataset> {
        Dataset::with_ids(x, self.y.clone(), self.row_ids.clone(), self.task)
    }

    /// Seeded split into `(train, held_out)`. Classification splits are
    /// stratified so both parts keep both classes.
    pub fn split(&self, held_out_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(held_out_fraction > 0.0 && held_out_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "held-out fraction must be in (0, 1), got {held_out_fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups: Vec<Vec<usize>> = match self.task {
            TaskKind::BinaryClassification => {
                let (pos, neg): (Vec<usize>, Vec<usize>) =
                    (0..self.len()).partition(|&i| self.y[i] == 1.0);
                vec![neg, pos]
            }
            TaskKind::Regression => vec![(0..self.len()).collect()],
        };
        let mut train = Vec::new();
        let mut held = Vec::new();
        for mut g in groups {
            g.shuffle(&mut rng);
            let cut = ((g.len() as f64) * held_out_fraction).round() as usize;
            let cut = cut.clamp(1, g.len().saturating_sub(1).max(1));
            held.extend_from_slice(&g[..cut]);
            train.extend_from_slice(&g[cut..]);
        }
        train.sort_unstable();
        held.sort_unstable();
        Ok((self.subset(&train)?, self.subset(&held)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rlace,
    Inlp,
    RegressionClosedForm,
    RayleighClosedForm,
    PcaDiff,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Rlace => "rlace",
            Method::Inlp => "inlp",
            Method::RegressionClosedForm => "regression-closed-form",
            Method::RayleighClosedForm => "rayleigh-closed-form",
            Method::PcaDiff => "pca-diff",
        };
        f.write_str(s)
    }
}

/// PCA step applied to raw inputs before a projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub mean: Vec<f64>,
    /// `target_dim` rows of length `mean.len()`, row-major.
    pub basis: Vec<Vec<f64>>,
}

impl Reduction {
    pub fn from_pca(pca: &linalg::PcaReduction) -> Self {
        Reduction {
            mean: pca.mean.iter().copied().collect(),
            basis: rows_of(&pca.basis),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Error::check_dim(self.input_dim(), x.ncols())?;
        let basis = matrix_from_rows(&self.basis, self.input_dim())?;
        let mut centered = x.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
        }
        Ok(centered * basis.transpose())
    }
}

/// A fitted rank-`(D − k)` orthogonal projection with the `k` basis vectors
/// of the subspace it removes.
#[derive(Debug, Clone)]
pub struct ErasureProjection {
    p: SymMatrix,
    basis: DMatrix<f64>,
    pub method: Method,
    pub seed: Option<u64>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub reduction: Option<Reduction>,
}

impl ErasureProjection {
    /// Builds `I − WᵀW` from orthonormal basis rows `W` and checks the
    /// projection invariants.
    pub fn from_basis(basis: DMatrix<f64>, method: Method) -> Result<Self> {
        let (k, d) = basis.shape();
        if k < 1 || k >= d {
            return Err(Error::InvalidArgument(format!(
                "removed rank must satisfy 1 <= k < D, got k={k}, D={d}"
            )));
        }
        let p = linalg::rank_k_neutralizer(&basis)?;
        let check = linalg::is_orthogonal_projection(&p, PROJECTION_TOL);
        if !check.is_projection {
            return Err(Error::InvariantViolation(format!(
                "neutralizer is not idempotent (max violation {:.3e})",
                check.max_violation
            )));
        }
        Ok(ErasureProjection {
            p,
            basis,
            method,
            seed: None,
            metadata: BTreeMap::new(),
            reduction: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn rank_removed(&self) -> usize {
        self.basis.nrows()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.p
    }

    /// `k × D`, orthonormal rows.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Applies the stored PCA reduction (if any) and then the projection.
    pub fn apply_raw(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.reduction {
            Some(r) => apply_projection(&r.transform(x)?, self),
            None => apply_projection(x, self),
        }
    }
}

/// `X · P`.
pub fn apply_projection(x: &DMatrix<f64>, proj: &ErasureProjection) -> Result<DMatrix<f64>> {
    Error::check_dim(proj.dim(), x.ncols())?;
    Ok(x * proj.matrix().as_matrix())
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectionFile {
    format_version: u32,
    dim: usize,
    rank_removed: usize,
    method: Method,
    seed: Option<u64>,
    basis: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projection: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reduction: Option<Reduction>,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::Format(format!(
                "row {i} has {} values, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Serialises to the JSON envelope. `P` itself is omitted; it is rebuilt from
/// the basis on load. Floats are written in shortest round-trip form.
pub fn projection_to_json(proj: &ErasureProjection) -> Result<String> {
    let file = ProjectionFile {
        format_version: PROJECTION_FORMAT_VERSION,
        dim: proj.dim(),
        rank_removed: proj.rank_removed(),
        method: proj.method,
        seed: proj.seed,
        basis: rows_of(proj.basis()),
        projection: None,
        reduction: proj.reduction.clone(),
        metadata: proj.metadata.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Internal(e.to_string()))
}

pub fn projection_from_json(text: &str) -> Result<ErasureProjection> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("malformed JSON: {e}")))?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format("missing format_version".into()))?;
    if version != u64::from(PROJECTION_FORMAT_VERSION) {
        return Err(Error::UnsupportedVersion(version as u32));
    }
    let file: ProjectionFile = serde_json::from_value(raw)
        .map_err(|e| Error::Format(format!("malformed projection file: {e}")))?;
    if file.basis.len() != file.rank_removed {
        return Err(Error::Format(format!(
            "basis has {} rows but rank_removed is {}",
            file.basis.len(),
            file.rank_removed
        )));
    }
    let basis = matrix_from_rows(&file.basis, file.dim)?;
    let dev = linalg::gram_deviation(&basis);
    if !(dev <= linalg::ORTHONORMAL_TOL) {
        return Err(Error::InvariantViolation(format!(
            "basis rows are not orthonormal (max Gram deviation {dev:.3e}); I - WᵀW would not be idempotent"
        )));
    }
    let mut proj = ErasureProjection::from_basis(basis, file.method)?;
    if let Some(stored) = &file.projection {
        let stored = matrix_from_rows(stored, file.dim)?;
        if stored.nrows() != file.dim {
            return Err(Error::Format("projection matrix is not square".into()));
        }
        let idem = linalg::max_abs_diff(&(&stored * &stored), &stored);
        let agree = linalg::max_abs_diff(&stored, proj.matrix().as_matrix());
        if idem > PROJECTION_TOL || agree > PROJECTION_TOL {
            return Err(Error::InvariantViolation(format!(
                "stored projection is inconsistent (idempotence error {idem:.3e}, basis mismatch {agree:.3e})"
            )));
        }
    }
    if let Some(r) = &file.reduction {
        if r.output_dim() != file.dim {
            return Err(Error::Format(format!(
                "reduction outputs {} dims but projection has {}",
                r.output_dim(),
                file.dim
            )));
        }
        matrix_from_rows(&r.basis, r.input_dim())?;
    }
    proj.seed = file.seed;
    proj.metadata = file.metadata;
    proj.reduction = file.reduction;
    Ok(proj)
}

pub fn save_projection(proj: &ErasureProjection, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = projection_to_json(proj)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_projection(path: impl AsRef<Path>) -> Result<ErasureProjection> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    projection_from_json(&text)
}

/// Rows of a GloVe-style text file.
#[derive(Debug, Clone)]
pub struct Vectors {
    pub matrix: DMatrix<f64>,
    pub ids: Vec<String>,
    /// Non-fatal notes, e.g. dropped duplicate tokens.
    pub warnings: Vec<String>,
}

impl Vectors {
    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect()
    }
}

pub fn load_vectors_text(path: impl AsRef<Path>) -> Result<Vectors> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vectors_text(&text, path)
}

/// Parses `token v1 … vD` lines. The first occurrence of a repeated token wins.
pub fn parse_vectors_text(text: &str, origin: &Path) -> Result<Vectors> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut ids = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut warnings = Vec::new();

    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().unwrap_or_default().to_string();
        let row: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("non-numeric field '{f}'")))
            })
            .collect::<Result<_>>()?;
        if row.is_empty() {
            return Err(parse_err(lineno, "line has no values".into()));
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(parse_err(
                    lineno,
                    format!("expected {d} values, found {}", row.len()),
                ));
            }
            _ => {}
        }
        if let Some(first) = seen.get(&token) {
            warnings.push(format!(
                "line {lineno}: duplicate token '{token}' ignored (first seen at line {first})"
            ));
            continue;
        }
        seen.insert(token.clone(), lineno);
        ids.push(token);
        values.extend(row);
    }
    let d = dim.ok_or_else(|| parse_err(0, "no rows".into()))?;
    let matrix = DMatrix::from_row_slice(ids.len(), d, &values);
    Ok(Vectors {
        matrix,
        ids,
        warnings,
    })
}

/// Contents of a labels file.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// `id label` lines.
    Keyed(Vec<(String, String)>),
    /// One label per line, aligned with row order.
    Ordered(Vec<String>),
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Labels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub fn parse_labels(text: &str, origin: &Path) -> Result<Labels> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut keyed = Vec::new();
    let mut ordered = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [label] => ordered.push(label.to_string()),
            [id, label] => {
                if !seen.insert(id.to_string()) {
                    return Err(parse_err(lineno, format!("duplicate id '{id}'")));
                }
                keyed.push((id.to_string(), label.to_string()));
            }
            _ => return Err(parse_err(lineno, "expected 'id label' or 'label'".into())),
        }
        if !keyed.is_empty() && !ordered.is_empty() {
            return Err(parse_err(lineno, "mixed keyed and unkeyed label lines".into()));
        }
    }
    match (keyed.is_empty(), ordered.is_empty()) {
        (true, true) => Err(parse_err(0, "no labels".into())),
        (false, _) => Ok(Labels::Keyed(keyed)),
        (_, false) => Ok(Labels::Ordered(ordered)),
    }
}

impl Labels {
    /// Raw label strings in the order of `ids` (or file order when unkeyed).
    pub fn align(&self, ids: &[String]) -> Result<Vec<String>> {
        match self {
            Labels::Ordered(v) => {
                Error::check_dim(ids.len(), v.len())?;
                Ok(v.clone())
            }
            Labels::Keyed(pairs) => {
                let map: HashMap<&str, &str> =
                    pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
                ids.iter()
                    .map(|id| {
                        map.get(id.as_str())
                            .map(|s| s.to_string())
                            .ok_or_else(|| Error::InvalidInput(format!("no label for id \"{id}\"")))
                    })
                    .collect()
            }
        }
    }

    /// Keeps only the rows of `vectors` that have a label, in vector-file order.
    pub fn ids_present(&self, ids: &[String]) -> Vec<usize> {
        match self {
            Labels::Ordered(_) => (0..ids.len()).collect(),
            Labels::Keyed(pairs) => {
                let keys: BTreeSet<&str> = pairs.iter().map(|(k, _)| k.as_str()).collect();
                (0..ids.len()).filter(|&i| keys.contains(ids[i].as_str())).collect()
            }
        }
    }
}

/// Numeric responses from raw label strings.
///
/// Numeric labels are used as-is. For classification with exactly two
/// non-numeric label strings, the lexicographically larger one becomes 1
/// unless `positive` names the class to encode as 1.
pub fn encode_labels(raw: &[String], task: TaskKind, positive: Option<&str>) -> Result<Vec<f64>> {
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| f64::from_str(s).ok()).collect();
    if let (Some(v), None) = (&numeric, positive) {
        return Ok(v.clone());
    }
    if task == TaskKind::Regression {
        let bad = raw.iter().find(|s| f64::from_str(s).is_err()).unwrap();
        return Err(Error::InvalidInput(format!("unparseable label '{bad}'")));
    }
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "expected exactly two label values for classification, found {}",
            distinct.len()
        )));
    }
    let one = match positive {
        Some(p) if distinct.contains(p) => p,
        Some(p) => {
            return Err(Error::InvalidArgument(format!(
                "positive label '{p}' does not occur"
            )))
        }
        None => *distinct.iter().next_back().unwrap(),
    };
    Ok(raw.iter().map(|s| if s == one { 1.0 } else { 0.0 }).collect())
}

/// Dense numeric CSV; with `header` the first record is skipped.
pub fn load_csv_matrix(path: impl AsRef<Path>, header: bool) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1 + usize::from(header);
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if let Some(c) = ncols {
            if c != rec.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected {c} fields, found {}", rec.len()),
                });
            }
        }
        ncols = Some(rec.len());
        for f in rec.iter() {
            values.push(f.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("non-numeric field '{f}'"),
            })?);
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "no rows".into(),
    })?;
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

/// Writes a GloVe-style vectors file.
pub fn write_vectors_text(path: impl AsRef<Path>, ids: &[String], x: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (id, row) in ids.iter().zip(x.row_iter()) {
        out.push_str(id);
        for v in row.iter() {
            out.push(' ');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_labels_text(path: impl AsRef<Path>, ids: &[String], y: &DVector<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (id, v) in ids.iter().zip(y.iter()) {
        out.push_str(&format!("{id} {v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
