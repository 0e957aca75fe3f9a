//! Bit-exact volumetric package format and label tables.
//!
//! A package is three sibling files sharing a stem:
//! `<stem>.ssvol.json` (header), `<stem>.ssvol.mask` (one byte per voxel,
//! 0/1, x-fastest order), and `<stem>.ssvol.f32` (raw little-endian f32,
//! sample-major: sample 0's full volume, then sample 1, ...). Labels live in
//! a companion CSV with header `sample,label`, referenced from the header.
//! Saving a loaded package reproduces identical bytes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dataset, TaskKind, VolumeGrid, WeightMap};

pub const PACKAGE_VERSION: u32 = 1;
pub const DTYPE_F32LE: &str = "f32le";
const SIDECAR_SUFFIX: &str = ".ssvol.json";

/// Fit metadata embedded in a weight-map package header.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitMetadata {
    /// Per-fold penalty grids (the path start is computed per training fold).
    pub lambda_grid: Vec<Vec<f64>>,
    /// Penalty level chosen by each fold.
    pub fold_lambdas: Vec<f64>,
    pub intercept: f64,
    pub runtime_seconds: f64,
}

/// JSON sidecar describing the binary blobs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PackageHeader {
    pub dims: [usize; 3],
    pub n_samples: usize,
    pub dtype: String,
    pub mask_file: String,
    pub data_file: String,
    pub version: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metadata: Option<FitMetadata>,
}

/// An in-memory volume package: header, mask bytes, raw f32 samples, and
/// optional label strings.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumePackage {
    pub header: PackageHeader,
    pub mask: Vec<u8>,
    pub data: Vec<f32>,
    pub labels: Option<Vec<String>>,
}

/// Accept either a bare stem or a full `.ssvol.json` path.
pub fn resolve_package_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    if s.ends_with(SIDECAR_SUFFIX) {
        path.to_path_buf()
    } else {
        PathBuf::from(format!("{s}{SIDECAR_SUFFIX}"))
    }
}

fn sibling(json_path: &Path, extension_tail: &str) -> Result<PathBuf> {
    let s = json_path.to_string_lossy();
    let stem = s.strip_suffix(SIDECAR_SUFFIX).ok_or_else(|| {
        Error::format(
            json_path,
            format!("package path must end with {SIDECAR_SUFFIX}"),
        )
    })?;
    Ok(PathBuf::from(format!("{stem}{extension_tail}")))
}

impl VolumePackage {
    /// Bundle full-volume samples into a package. `data` is sample-major and
    /// must hold `n_samples` full volumes.
    pub fn new(
        dims: (usize, usize, usize),
        mask: Vec<u8>,
        data: Vec<f32>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let volume = dims.0 * dims.1 * dims.2;
        if mask.len() != volume {
            return Err(Error::DimMismatch(format!(
                "mask has {} bytes, volume has {volume} voxels",
                mask.len()
            )));
        }
        if data.len() % volume != 0 {
            return Err(Error::DimMismatch(format!(
                "data holds {} values, not a multiple of the {volume}-voxel volume",
                data.len()
            )));
        }
        let n_samples = data.len() / volume;
        if let Some(l) = &labels {
            if l.len() != n_samples {
                return Err(Error::DimMismatch(format!(
                    "{} labels for {n_samples} samples",
                    l.len()
                )));
            }
        }
        Ok(VolumePackage {
            header: PackageHeader {
                dims: [dims.0, dims.1, dims.2],
                n_samples,
                dtype: DTYPE_F32LE.to_string(),
                mask_file: String::new(),
                data_file: String::new(),
                version: PACKAGE_VERSION,
                labels_file: None,
                metadata: None,
            },
            mask,
            data,
            labels,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json_path = resolve_package_path(path);
        let dir = json_path.parent().unwrap_or(Path::new("."));
        let raw = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let header: PackageHeader = serde_json::from_str(&raw)
            .map_err(|e| Error::format(&json_path, format!("invalid header: {e}")))?;
        if header.version != PACKAGE_VERSION {
            return Err(Error::format(
                &json_path,
                format!(
                    "unsupported version {} (this build reads version {PACKAGE_VERSION})",
                    header.version
                ),
            ));
        }
        if header.dtype != DTYPE_F32LE {
            return Err(Error::format(
                &json_path,
                format!("unknown dtype '{}' (expected {DTYPE_F32LE})", header.dtype),
            ));
        }
        let volume = header.dims[0] * header.dims[1] * header.dims[2];

        let mask_path = dir.join(&header.mask_file);
        let mask = fs::read(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        if mask.len() != volume {
            return Err(Error::format(
                &mask_path,
                format!("expected {volume} bytes (one per voxel), found {}", mask.len()),
            ));
        }
        if let Some(bad) = mask.iter().position(|&b| b > 1) {
            return Err(Error::format(
                &mask_path,
                format!("mask byte at offset {bad} is {}, expected 0 or 1", mask[bad]),
            ));
        }

        let data_path = dir.join(&header.data_file);
        let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let expected = 4 * header.n_samples * volume;
        if bytes.len() != expected {
            return Err(Error::format(
                &data_path,
                format!(
                    "expected {expected} bytes (4 x {} samples x {volume} voxels), found {}",
                    header.n_samples,
                    bytes.len()
                ),
            ));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let labels = match &header.labels_file {
            Some(name) => {
                let labels_path = dir.join(name);
                let labels = read_labels_csv(&labels_path)?;
                if labels.len() != header.n_samples {
                    return Err(Error::format(
                        &labels_path,
                        format!("{} labels for {} samples", labels.len(), header.n_samples),
                    ));
                }
                Some(labels)
            }
            None => None,
        };

        Ok(VolumePackage {
            header,
            mask,
            data,
            labels,
        })
    }

    /// Write the sidecar and binary blobs (and the label table when present)
    /// next to `path`. File names inside the header are derived from the stem.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json_path = resolve_package_path(path);
        let dir = json_path.parent().unwrap_or(Path::new("."));
        let mask_path = sibling(&json_path, ".ssvol.mask")?;
        let data_path = sibling(&json_path, ".ssvol.f32")?;
        let labels_path = sibling(&json_path, ".labels.csv")?;

        let mut header = self.header.clone();
        header.mask_file = file_name(&mask_path);
        header.data_file = file_name(&data_path);
        header.labels_file = self.labels.as_ref().map(|_| file_name(&labels_path));

        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut json = serde_json::to_string_pretty(&header)
            .map_err(|e| Error::format(&json_path, format!("header serialization: {e}")))?;
        json.push('\n');
        fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
        fs::write(&mask_path, &self.mask).map_err(|e| Error::io(&mask_path, e))?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
        if let Some(labels) = &self.labels {
            write_labels_csv(&labels_path, labels)?;
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.header.dims[0], self.header.dims[1], self.header.dims[2])
    }

    pub fn grid(&self) -> Result<VolumeGrid> {
        VolumeGrid::new(self.dims(), self.mask.iter().map(|&b| b == 1).collect())
    }

    /// Extract the masked design matrix in canonical (ascending linear)
    /// index order.
    pub fn design_matrix(&self, grid: &VolumeGrid) -> Array2<f64> {
        let n = self.header.n_samples;
        let p = grid.masked_len();
        let volume = grid.volume_len();
        let mut x = Array2::zeros((n, p));
        for i in 0..n {
            let sample = &self.data[i * volume..(i + 1) * volume];
            for (m, &f) in grid.masked_to_full().iter().enumerate() {
                x[(i, m)] = sample[f] as f64;
            }
        }
        x
    }

    /// Build the dataset for a task, encoding the package labels.
    pub fn dataset(&self, task: TaskKind) -> Result<(Arc<VolumeGrid>, Dataset)> {
        let labels = self.labels.as_ref().ok_or_else(|| {
            Error::InvalidArg("package carries no labels; supply a label table".into())
        })?;
        let grid = Arc::new(self.grid()?);
        let x = self.design_matrix(&grid);
        let y = encode_labels(labels, task)?;
        let dataset = Dataset::new(x, y, Arc::clone(&grid))?;
        Ok((grid, dataset))
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Load a package and its labels as a ready-to-fit dataset.
pub fn load_package(path: &Path, task: TaskKind) -> Result<(Arc<VolumeGrid>, Dataset)> {
    VolumePackage::load(path)?.dataset(task)
}

/// Read the `label` column of a `sample,label` table; the `sample` column
/// must equal the row index.
pub fn read_labels_csv(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::format(path, format!("cannot open label table: {e}")),
        _ => Error::format(path, e.to_string()),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::format(path, "label table has no 'label' column"))?;
    let sample_col = headers.iter().position(|h| h == "sample");
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if let Some(c) = sample_col {
            let parsed: usize = record
                .get(c)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(path, format!("bad sample id in row {row}")))?;
            if parsed != row {
                return Err(Error::format(
                    path,
                    format!("sample column reads {parsed} at row {row}; rows must be in order"),
                ));
            }
        }
        let value = record
            .get(label_col)
            .ok_or_else(|| Error::format(path, format!("missing label in row {row}")))?;
        labels.push(value.to_string());
    }
    Ok(labels)
}

pub fn write_labels_csv(path: &Path, labels: &[String]) -> Result<()> {
    let mut out = String::from("sample,label\n");
    for (i, label) in labels.iter().enumerate() {
        out.push_str(&format!("{i},{label}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Encode raw label strings: classification maps the two distinct values to
/// -1/+1 by sorted order; regression parses real values.
pub fn encode_labels(labels: &[String], task: TaskKind) -> Result<Array1<f64>> {
    match task {
        TaskKind::Classification => {
            let mut distinct: Vec<&String> = Vec::new();
            for l in labels {
                if !distinct.contains(&l) {
                    distinct.push(l);
                }
            }
            distinct.sort();
            if distinct.len() != 2 {
                return Err(Error::InvalidArg(format!(
                    "classification needs exactly 2 distinct labels, found {}",
                    distinct.len()
                )));
            }
            Ok(Array1::from_iter(labels.iter().map(|l| {
                if l == distinct[0] {
                    -1.0
                } else {
                    1.0
                }
            })))
        }
        TaskKind::Regression => {
            let mut y = Array1::zeros(labels.len());
            for (i, l) in labels.iter().enumerate() {
                y[i] = l.parse().map_err(|_| {
                    Error::InvalidArg(format!("label '{l}' at sample {i} is not a number"))
                })?;
            }
            Ok(y)
        }
    }
}

/// Format targets back into label strings (integers for -1/+1 classes).
pub fn format_labels(y: &Array1<f64>, task: TaskKind) -> Vec<String> {
    y.iter()
        .map(|&v| match task {
            TaskKind::Classification => {
                if v > 0.0 {
                    "1".to_string()
                } else {
                    "-1".to_string()
                }
            }
            TaskKind::Regression => format!("{v}"),
        })
        .collect()
}

/// Package a fitted weight map as a single-sample volume.
pub fn weight_map_package(wm: &WeightMap, metadata: Option<FitMetadata>) -> VolumePackage {
    let volume = wm.expand_to_volume();
    let data: Vec<f32> = volume.iter().map(|&v| v as f32).collect();
    let mask: Vec<u8> = wm.grid.mask().iter().map(|&m| u8::from(m)).collect();
    let mut pkg = VolumePackage::new(wm.grid.dims(), mask, data, None)
        .expect("weight map dimensions are consistent by construction");
    pkg.header.metadata = metadata;
    pkg
}

/// Read a weight map back from a single-sample package.
pub fn weight_map_from_package(pkg: &VolumePackage) -> Result<WeightMap> {
    if pkg.header.n_samples != 1 {
        return Err(Error::InvalidArg(format!(
            "a weight-map package holds exactly 1 sample, found {}",
            pkg.header.n_samples
        )));
    }
    let grid = Arc::new(pkg.grid()?);
    let values = Array1::from_iter(
        grid.masked_to_full()
            .iter()
            .map(|&f| pkg.data[f] as f64),
    );
    let intercept = pkg.header.metadata.as_ref().map_or(0.0, |m| m.intercept);
    WeightMap::new(values, intercept, grid)
}

/// Interop: dump the sample volumes and mask as CSV tables. `data.csv` has a
/// `sample` column followed by one column per voxel (x-fastest order);
/// `mask.csv` has `voxel,in_mask` rows.
pub fn package_to_csv(pkg: &VolumePackage, data_csv: &Path, mask_csv: &Path) -> Result<()> {
    let volume = pkg.mask.len();
    let mut out = String::from("sample");
    for v in 0..volume {
        out.push_str(&format!(",v{v}"));
    }
    out.push('\n');
    for i in 0..pkg.header.n_samples {
        out.push_str(&i.to_string());
        for v in &pkg.data[i * volume..(i + 1) * volume] {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(data_csv, out).map_err(|e| Error::io(data_csv, e))?;

    let mut mask_out = String::from("voxel,in_mask\n");
    for (v, &m) in pkg.mask.iter().enumerate() {
        mask_out.push_str(&format!("{v},{m}\n"));
    }
    fs::write(mask_csv, mask_out).map_err(|e| Error::io(mask_csv, e))
}

/// Interop: rebuild a package from the CSV tables written by
/// [`package_to_csv`].
pub fn package_from_csv(
    data_csv: &Path,
    mask_csv: &Path,
    dims: (usize, usize, usize),
) -> Result<VolumePackage> {
    let volume = dims.0 * dims.1 * dims.2;
    let mut mask_reader =
        csv::Reader::from_path(mask_csv).map_err(|e| Error::format(mask_csv, e.to_string()))?;
    let mut mask = Vec::with_capacity(volume);
    for record in mask_reader.records() {
        let record = record.map_err(|e| Error::format(mask_csv, e.to_string()))?;
        let bit: u8 = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(mask_csv, "bad in_mask value"))?;
        mask.push(bit);
    }
    if mask.len() != volume {
        return Err(Error::format(
            mask_csv,
            format!("{} mask rows for {volume} voxels", mask.len()),
        ));
    }

    let mut data_reader =
        csv::Reader::from_path(data_csv).map_err(|e| Error::format(data_csv, e.to_string()))?;
    let mut data = Vec::new();
    for record in data_reader.records() {
        let record = record.map_err(|e| Error::format(data_csv, e.to_string()))?;
        if record.len() != volume + 1 {
            return Err(Error::format(
                data_csv,
                format!("{} columns, expected {}", record.len(), volume + 1),
            ));
        }
        for j in 1..record.len() {
            let v: f32 = record
                .get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(data_csv, "bad voxel value"))?;
            data.push(v);
        }
    }
    VolumePackage::new(dims, mask, data, None)
}
