//! On-disk dataset bundles: a JSON manifest plus headerless little-endian tensor files.
//!
//! Features and logits are row-major `f32`, labels are `u32`. Any tensor path ending
//! in `.csv` is read as a CSV table with one header row and one sample per line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Rows selected by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Per-dataset features `[N, d]`, logits `[N, K]` and optional labels `[N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSet {
    pub features: Matrix,
    pub logits: Matrix,
    pub labels: Option<Vec<u32>>,
}

impl TensorSet {
    /// Checks only that the row counts agree; the remaining invariants are reported
    /// by [`validate_bundle`].
    pub fn new(features: Matrix, logits: Matrix, labels: Option<Vec<u32>>) -> Result<Self> {
        if features.rows() != logits.rows() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} rows but logits have {}",
                features.rows(),
                logits.rows()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} samples",
                    l.len(),
                    features.rows()
                )));
            }
        }
        Ok(Self {
            features,
            logits,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.logits.cols()
    }

    pub fn select(&self, indices: &[usize]) -> TensorSet {
        TensorSet {
            features: self.features.select_rows(indices),
            logits: self.logits.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
}

/// ID splits plus an ordered list of named OOD splits.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub dims: Dims,
    pub id_train: Option<TensorSet>,
    pub id_test: TensorSet,
    pub ood_sets: Vec<(String, TensorSet)>,
    pub meta: BTreeMap<String, String>,
}

impl DatasetBundle {
    pub fn ood(&self, name: &str) -> Option<&TensorSet> {
        self.ood_sets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }
}

// --- manifest schema -------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub features: String,
    pub logits: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub dims: Dims,
    #[serde(default)]
    pub id_train: Option<SplitEntry>,
    pub id_test: SplitEntry,
    pub ood: Vec<SplitEntry>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

// --- raw tensors -----------------------------------------------------------

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_sized(path: &Path, shape: &[usize], elem_bytes: u64) -> Result<Vec<u8>> {
    let expected = shape.iter().product::<usize>() as u64 * elem_bytes;
    let actual = fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    if actual != expected {
        return Err(Error::ShapeMismatch {
            path: path.to_path_buf(),
            shape: shape.to_vec(),
            expected_bytes: expected,
            actual_bytes: actual,
        });
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `matrix` as raw little-endian `f32`, row-major, no header.
pub fn write_tensor(matrix: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = matrix
        .as_slice()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a `[rows, cols]` tensor, rejecting size mismatches and non-finite values.
pub fn load_tensor(path: impl AsRef<Path>, shape: [usize; 2]) -> Result<Matrix> {
    let path = path.as_ref();
    if is_csv(path) {
        return load_csv_tensor(path, shape);
    }
    let bytes = read_sized(path, &shape, 4)?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: path.to_path_buf(),
            index,
            offset: index as u64 * 4,
        });
    }
    Matrix::new(shape[0], shape[1], data)
}

pub fn write_labels(labels: &[u32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: impl AsRef<Path>, n: usize) -> Result<Vec<u32>> {
    let path = path.as_ref();
    if is_csv(path) {
        let m = load_csv_tensor(path, [n, 1])?;
        return m
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f32 {
                    Ok(v as u32)
                } else {
                    Err(Error::Csv {
                        path: path.to_path_buf(),
                        message: format!("row {i}: label {v} is not a non-negative integer"),
                    })
                }
            })
            .collect();
    }
    let bytes = read_sized(path, &[n], 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn load_csv_tensor(path: &Path, shape: [usize; 2]) -> Result<Matrix> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => csv_err(format!("{other:?}")),
        })?;
    let mut data = Vec::with_capacity(shape[0] * shape[1]);
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(format!("row {i}: {e}")))?;
        if record.len() != shape[1] {
            return Err(Error::ShapeMismatch {
                path: path.to_path_buf(),
                shape: shape.to_vec(),
                expected_bytes: (shape[0] * shape[1] * 4) as u64,
                actual_bytes: ((rows + 1) * record.len() * 4) as u64,
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f32 = field
                .parse()
                .map_err(|_| csv_err(format!("row {i}, column {j}: cannot parse `{field}`")))?;
            if !v.is_finite() {
                let index = i * shape[1] + j;
                return Err(Error::NonFinite {
                    path: path.to_path_buf(),
                    index,
                    offset: index as u64 * 4,
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != shape[0] {
        return Err(Error::ShapeMismatch {
            path: path.to_path_buf(),
            shape: shape.to_vec(),
            expected_bytes: (shape[0] * shape[1] * 4) as u64,
            actual_bytes: (rows * shape[1] * 4) as u64,
        });
    }
    Matrix::new(shape[0], shape[1], data)
}

// --- manifests -------------------------------------------------------------

fn load_split(base: &Path, entry: &SplitEntry, dims: Dims, with_labels: bool) -> Result<TensorSet> {
    let features = load_tensor(base.join(&entry.features), [entry.n, dims.d])?;
    let logits = load_tensor(base.join(&entry.logits), [entry.n, dims.k])?;
    let labels = match (&entry.labels, with_labels) {
        (Some(p), true) => Some(load_labels(base.join(p), entry.n)?),
        _ => None,
    };
    TensorSet::new(features, logits, labels)
}

/// Reads a manifest and every tensor it references.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let dims = manifest.dims;

    let id_train = manifest
        .id_train
        .as_ref()
        .map(|e| load_split(base, e, dims, true))
        .transpose()?;
    let id_test = load_split(base, &manifest.id_test, dims, false)?;

    let mut seen = HashSet::new();
    let mut ood_sets = Vec::with_capacity(manifest.ood.len());
    for (i, entry) in manifest.ood.iter().enumerate() {
        let name = entry.name.clone().ok_or_else(|| Error::Manifest {
            path: path.to_path_buf(),
            message: format!("ood[{i}] has no name"),
        })?;
        if !seen.insert(name.clone()) {
            return Err(Error::DuplicateName(name));
        }
        let set = load_split(base, entry, dims, false)?;
        ood_sets.push((name, set));
    }

    Ok(DatasetBundle {
        dims,
        id_train,
        id_test,
        ood_sets,
        meta: manifest.meta,
    })
}

fn write_split(
    dir: &Path,
    stem: &str,
    set: &TensorSet,
    name: Option<String>,
) -> Result<SplitEntry> {
    let features = format!("{stem}.features.f32");
    let logits = format!("{stem}.logits.f32");
    write_tensor(&set.features, dir.join(&features))?;
    write_tensor(&set.logits, dir.join(&logits))?;
    let labels = match &set.labels {
        Some(l) => {
            let file = format!("{stem}.labels.u32");
            write_labels(l, dir.join(&file))?;
            Some(file)
        }
        None => None,
    };
    Ok(SplitEntry {
        name,
        features,
        logits,
        labels,
        n: set.len(),
    })
}

/// Writes every split of `bundle` into `dir` followed by `manifest.json`, and returns
/// the manifest path. The manifest is written last.
pub fn write_bundle(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id_train = bundle
        .id_train
        .as_ref()
        .map(|s| write_split(dir, "id_train", s, None))
        .transpose()?;
    let id_test = write_split(dir, "id_test", &bundle.id_test, None)?;
    let ood = bundle
        .ood_sets
        .iter()
        .enumerate()
        .map(|(i, (name, s))| write_split(dir, &format!("ood{i}"), s, Some(name.clone())))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        dims: bundle.dims,
        id_train,
        id_test,
        ood,
        meta: bundle.meta.clone(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

// --- validation ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn from_issues(issues: Vec<Issue>) -> Self {
        let ok = issues.iter().all(|i| i.severity != Severity::Error);
        Self { ok, issues }
    }

    /// Report for a bundle that could not be loaded at all.
    pub fn load_failure(location: impl Into<String>, err: &Error) -> Self {
        Self::from_issues(vec![Issue {
            severity: Severity::Error,
            location: location.into(),
            message: err.to_string(),
        }])
    }
}

fn check_set(location: &str, set: &TensorSet, dims: Dims, issues: &mut Vec<Issue>) {
    let mut error = |message: String| {
        issues.push(Issue {
            severity: Severity::Error,
            location: location.to_string(),
            message,
        })
    };
    if set.is_empty() {
        error("split has no samples".into());
    }
    if set.feature_dim() != dims.d {
        error(format!(
            "dimension mismatch: feature dim {} != d {}",
            set.feature_dim(),
            dims.d
        ));
    }
    if set.num_classes() != dims.k {
        error(format!(
            "dimension mismatch: logit dim {} != K {}",
            set.num_classes(),
            dims.k
        ));
    }
    if let Some(i) = set.features.as_slice().iter().position(|v| !v.is_finite()) {
        error(format!("non-finite feature at flat index {i}"));
    }
    if let Some(i) = set.logits.as_slice().iter().position(|v| !v.is_finite()) {
        error(format!("non-finite logit at flat index {i}"));
    }
    if let Some(labels) = &set.labels {
        if let Some((i, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= dims.k)
        {
            error(format!("label {l} at index {i} is outside [0, {})", dims.k));
        }
    }
    if let Some(i) = set
        .features
        .iter_rows()
        .position(|r| r.iter().all(|&v| v == 0.0))
    {
        issues.push(Issue {
            severity: Severity::Warning,
            location: location.to_string(),
            message: format!("sample {i} has an all-zero feature vector"),
        });
    }
}

/// Lists every invariant violation of `bundle`; never fails.
pub fn validate_bundle(bundle: &DatasetBundle) -> ValidationReport {
    let mut issues = Vec::new();
    let dims = bundle.dims;
    if dims.d < 2 {
        issues.push(Issue {
            severity: Severity::Error,
            location: "dims".into(),
            message: format!("feature dimension d={} must be at least 2", dims.d),
        });
    }
    if dims.k < 2 {
        issues.push(Issue {
            severity: Severity::Error,
            location: "dims".into(),
            message: format!("class count K={} must be at least 2", dims.k),
        });
    }

    if let Some(train) = &bundle.id_train {
        check_set("id_train", train, dims, &mut issues);
        match &train.labels {
            None => issues.push(Issue {
                severity: Severity::Error,
                location: "id_train".into(),
                message: "id_train has no labels: MDS/KLM require labels".into(),
            }),
            Some(labels) => {
                let mut counts = vec![0usize; dims.k];
                for &l in labels {
                    if let Some(c) = counts.get_mut(l as usize) {
                        *c += 1;
                    }
                }
                if let Some(c) = counts.iter().position(|&c| c < 2) {
                    issues.push(Issue {
                        severity: Severity::Warning,
                        location: "id_train".into(),
                        message: format!(
                            "class {c} has fewer than 2 samples; MDS/KLM cannot be fitted"
                        ),
                    });
                }
            }
        }
    }
    check_set("id_test", &bundle.id_test, dims, &mut issues);

    if bundle.ood_sets.is_empty() {
        issues.push(Issue {
            severity: Severity::Error,
            location: "ood".into(),
            message: "no OOD datasets".into(),
        });
    }
    let mut seen = HashSet::new();
    for (name, set) in &bundle.ood_sets {
        let location = format!("ood/{name}");
        if !seen.insert(name.as_str()) {
            issues.push(Issue {
                severity: Severity::Error,
                location: location.clone(),
                message: "duplicate OOD name".into(),
            });
        }
        check_set(&location, set, dims, &mut issues);
    }
    ValidationReport::from_issues(issues)
}
