//! Observation tables: loading, validation and delimited output.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::derived::DerivedColumns;
use crate::error::DataError;
use crate::regression::Clusters;

/// Instrument arms smaller than this get a warning.
pub const SMALL_ARM_WARNING: usize = 10;

/// Maps the roles of the model onto header names of the input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    #[serde(default = "default_z")]
    pub z: String,
    #[serde(default = "default_d1")]
    pub d1: String,
    #[serde(default = "default_d2")]
    pub d2: String,
    #[serde(default = "default_y")]
    pub y: String,
    #[serde(default)]
    pub controls: Vec<String>,
    #[serde(default)]
    pub cluster: Option<String>,
}

fn default_z() -> String {
    "z".into()
}
fn default_d1() -> String {
    "d1".into()
}
fn default_d2() -> String {
    "d2".into()
}
fn default_y() -> String {
    "y".into()
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            z: default_z(),
            d1: default_d1(),
            d2: default_d2(),
            y: default_y(),
            controls: Vec::new(),
            cluster: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Listwise deletion over the mapped columns.
    #[default]
    Drop,
    Fail,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    pub fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    pub delimiter: Delimiter,
    pub missing: MissingPolicy,
}

/// Fatal and non-fatal findings about a table. A table is usable iff
/// `errors` is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// A rectangular dataset of instrument, two treatment parts, outcome,
/// optional controls and optional cluster labels.
///
/// Immutable once constructed; every constructor validates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    z: Vec<u8>,
    d1: Vec<u8>,
    d2: Vec<u8>,
    y: Vec<f64>,
    controls: Vec<Vec<f64>>,
    cluster: Option<Vec<String>>,
    columns: ColumnMapping,
}

/// A validated table together with the warnings raised while building it.
#[derive(Debug, Clone)]
pub struct LoadedTable {
    pub table: ObservationTable,
    pub report: ValidationReport,
}

impl ObservationTable {
    /// Builds a table from in-memory columns. `controls` is column-major;
    /// its names come from `columns.controls`.
    pub fn new(
        z: Vec<u8>,
        d1: Vec<u8>,
        d2: Vec<u8>,
        y: Vec<f64>,
        controls: Vec<Vec<f64>>,
        cluster: Option<Vec<String>>,
        columns: ColumnMapping,
    ) -> Result<LoadedTable, DataError> {
        let table = Self {
            z,
            d1,
            d2,
            y,
            controls,
            cluster,
            columns,
        };
        let report = table.validate();
        if report.is_ok() {
            Ok(LoadedTable { table, report })
        } else {
            Err(DataError::Invalid(report.errors))
        }
    }

    /// Convenience constructor for the four core columns only.
    pub fn from_columns(
        z: Vec<u8>,
        d1: Vec<u8>,
        d2: Vec<u8>,
        y: Vec<f64>,
    ) -> Result<Self, DataError> {
        Self::new(z, d1, d2, y, Vec::new(), None, ColumnMapping::default()).map(|l| l.table)
    }

    /// Core columns without validation; callers guarantee binary
    /// treatments and equal lengths.
    pub(crate) fn from_parts_unchecked(z: Vec<u8>, d1: Vec<u8>, d2: Vec<u8>, y: Vec<f64>) -> Self {
        Self {
            z,
            d1,
            d2,
            y,
            controls: Vec::new(),
            cluster: None,
            columns: ColumnMapping::default(),
        }
    }

    /// Same table with every control column dropped.
    pub fn without_controls(&self) -> Self {
        let mut t = self.clone();
        t.controls.clear();
        t.columns.controls.clear();
        t
    }

    /// Same table with the cluster labels dropped.
    pub fn without_clusters(&self) -> Self {
        let mut t = self.clone();
        t.cluster = None;
        t.columns.cluster = None;
        t
    }

    /// Same table with new cluster labels attached.
    pub fn with_clusters(&self, labels: Vec<String>, name: &str) -> Result<Self, DataError> {
        let mut t = self.clone();
        t.cluster = Some(labels);
        t.columns.cluster = Some(name.to_string());
        let report = t.validate();
        if report.is_ok() {
            Ok(t)
        } else {
            Err(DataError::Invalid(report.errors))
        }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }
    pub fn z(&self) -> &[u8] {
        &self.z
    }
    pub fn d1(&self) -> &[u8] {
        &self.d1
    }
    pub fn d2(&self) -> &[u8] {
        &self.d2
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }
    pub fn control_names(&self) -> &[String] {
        &self.columns.controls
    }
    pub fn cluster_labels(&self) -> Option<&[String]> {
        self.cluster.as_deref()
    }
    pub fn column_names(&self) -> &ColumnMapping {
        &self.columns
    }

    pub fn z_f64(&self) -> Vec<f64> {
        self.z.iter().map(|&v| f64::from(v)).collect()
    }

    /// Integer cluster codes in order of first appearance.
    pub fn clusters(&self) -> Option<Clusters> {
        self.cluster.as_ref().map(|labels| Clusters::from_labels(labels))
    }

    pub fn derive(&self) -> DerivedColumns {
        DerivedColumns::from_table(self)
    }

    /// Row counts of the (z=0, z=1) arms.
    pub fn arm_sizes(&self) -> (usize, usize) {
        let treated = self.z.iter().filter(|&&v| v == 1).count();
        (self.n() - treated, treated)
    }

    pub fn y_range(&self) -> (f64, f64) {
        self.y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.z.len();
        let lengths_ok = self.d1.len() == n
            && self.d2.len() == n
            && self.y.len() == n
            && self.controls.iter().all(|c| c.len() == n)
            && self.cluster.as_ref().is_none_or(|c| c.len() == n);
        if !lengths_ok {
            report.errors.push("columns have unequal lengths".into());
            return report;
        }
        if self.controls.len() != self.columns.controls.len() {
            report
                .errors
                .push("control columns and control names differ in count".into());
        }
        for (name, col) in [
            (&self.columns.z, &self.z),
            (&self.columns.d1, &self.d1),
            (&self.columns.d2, &self.d2),
        ] {
            if let Some(v) = col.iter().find(|&&v| v > 1) {
                report
                    .errors
                    .push(format!("non-binary treatment column '{name}': value {v}"));
            }
        }
        if n < 2 {
            report.errors.push(format!("need at least 2 rows, found {n}"));
        }
        let (n0, n1) = self.arm_sizes();
        if n0 == 0 || n1 == 0 {
            report
                .errors
                .push("empty instrument arm: both z=0 and z=1 rows are required".into());
        } else if n0.min(n1) < SMALL_ARM_WARNING {
            report.warnings.push(format!(
                "tiny instrument arm: {n0} rows with z=0, {n1} rows with z=1"
            ));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            report.errors.push(format!("outcome '{}' has non-finite values", self.columns.y));
        }
        for (name, col) in self.columns.controls.iter().zip(&self.controls) {
            if col.iter().any(|v| !v.is_finite()) {
                report.errors.push(format!("control '{name}' has non-finite values"));
            }
        }
        if let Some(labels) = &self.cluster {
            let mut sizes: HashMap<&str, usize> = HashMap::new();
            for l in labels {
                *sizes.entry(l.as_str()).or_default() += 1;
            }
            if sizes.len() < 2 {
                report
                    .errors
                    .push(format!("cluster column has {} distinct label(s), need at least 2", sizes.len()));
            }
            let singletons = sizes.values().filter(|&&s| s == 1).count();
            if singletons > 0 {
                report
                    .warnings
                    .push(format!("{singletons} singleton cluster(s)"));
            }
        }
        if report.errors.is_empty() {
            for (name, constant) in self.derive().constant_columns() {
                if constant {
                    report
                        .warnings
                        .push(format!("derived column {name} is constant"));
                }
            }
        }
        report
    }

    /// Writes the table as delimited text with a header row. Reals are
    /// written in shortest round-trip form.
    pub fn write_delimited<W: Write>(&self, out: W, delimiter: Delimiter) -> Result<(), DataError> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter.byte())
            .from_writer(out);
        let mut header = vec![
            self.columns.z.clone(),
            self.columns.d1.clone(),
            self.columns.d2.clone(),
            self.columns.y.clone(),
        ];
        header.extend(self.columns.controls.iter().cloned());
        if self.cluster.is_some() {
            header.push(self.columns.cluster.clone().unwrap_or_else(|| "cluster".into()));
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.push(self.z[i].to_string());
            record.push(self.d1[i].to_string());
            record.push(self.d2[i].to_string());
            record.push(self.y[i].to_string());
            for c in &self.controls {
                record.push(c[i].to_string());
            }
            if let Some(labels) = &self.cluster {
                record.push(labels[i].clone());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: "<output>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn save(&self, path: &Path, delimiter: Delimiter) -> Result<(), DataError> {
        let file = File::create(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_delimited(std::io::BufWriter::new(file), delimiter)
    }
}

fn is_missing(raw: &str) -> bool {
    let s = raw.trim();
    s.is_empty()
        || s == "."
        || s.eq_ignore_ascii_case("na")
        || s.eq_ignore_ascii_case("nan")
        || s.eq_ignore_ascii_case("n/a")
}

fn parse_binary(raw: &str, column: &str, row: usize) -> Result<u8, DataError> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(DataError::NonBinary {
            column: column.to_string(),
            value: other.to_string(),
            row,
        }),
    }
}

fn parse_real(raw: &str, column: &str, row: usize) -> Result<f64, DataError> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NotNumeric {
            column: column.to_string(),
            value: raw.trim().to_string(),
            row,
        }),
    }
}

/// Reads a delimited file with a header row and maps it onto an
/// [`ObservationTable`].
pub fn load_table(
    path: &Path,
    mapping: &ColumnMapping,
    options: LoadOptions,
) -> Result<LoadedTable, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_table(file, mapping, options)
}

/// Same as [`load_table`] over any reader.
pub fn read_table<R: std::io::Read>(
    input: R,
    mapping: &ColumnMapping,
    options: LoadOptions,
) -> Result<LoadedTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter.byte())
        .has_headers(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let iz = find(&mapping.z)?;
    let id1 = find(&mapping.d1)?;
    let id2 = find(&mapping.d2)?;
    let iy = find(&mapping.y)?;
    let icontrols = mapping
        .controls
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;
    let icluster = mapping.cluster.as_deref().map(find).transpose()?;

    let mut z = Vec::new();
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    let mut y = Vec::new();
    let mut controls = vec![Vec::new(); icontrols.len()];
    let mut cluster = icluster.map(|_| Vec::new());
    let mut dropped = 0usize;

    let mut mapped: Vec<(usize, &str)> = vec![
        (iz, mapping.z.as_str()),
        (id1, mapping.d1.as_str()),
        (id2, mapping.d2.as_str()),
        (iy, mapping.y.as_str()),
    ];
    mapped.extend(icontrols.iter().copied().zip(mapping.controls.iter().map(String::as_str)));
    if let (Some(i), Some(name)) = (icluster, mapping.cluster.as_deref()) {
        mapped.push((i, name));
    }

    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        let field = |i: usize| record.get(i).unwrap_or("");
        if let Some(&(_, name)) = mapped.iter().find(|&&(i, _)| is_missing(field(i))) {
            match options.missing {
                MissingPolicy::Drop => {
                    dropped += 1;
                    continue;
                }
                MissingPolicy::Fail => {
                    return Err(DataError::MissingValue {
                        column: name.to_string(),
                        row,
                    })
                }
            }
        }
        z.push(parse_binary(field(iz), &mapping.z, row)?);
        d1.push(parse_binary(field(id1), &mapping.d1, row)?);
        d2.push(parse_binary(field(id2), &mapping.d2, row)?);
        y.push(parse_real(field(iy), &mapping.y, row)?);
        for (col, (&i, name)) in controls
            .iter_mut()
            .zip(icontrols.iter().zip(&mapping.controls))
        {
            col.push(parse_real(field(i), name, row)?);
        }
        if let (Some(labels), Some(i)) = (cluster.as_mut(), icluster) {
            labels.push(field(i).trim().to_string());
        }
    }

    let mut loaded = ObservationTable::new(z, d1, d2, y, controls, cluster, mapping.clone())?;
    if dropped > 0 {
        loaded.report.warnings.insert(
            0,
            format!("dropped {dropped} row(s) with missing values in mapped columns"),
        );
    }
    Ok(loaded)
}
