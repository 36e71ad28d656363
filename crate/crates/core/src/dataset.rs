//! Multimodal data model: response, design matrix, and a contiguous
//! partition of the design columns into modalities.
//!
//! Modalities are addressed by zero-based index throughout the library.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{cast, Error, Real, Result};

/// Column counts of each modality, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityPartition {
    sizes: Vec<usize>,
    names: Vec<String>,
}

impl ModalityPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        let names = (1..=sizes.len()).map(|m| format!("m{m}")).collect();
        Self::with_names(sizes, names)
    }

    pub fn with_names(sizes: Vec<usize>, names: Vec<String>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Partition("at least one modality is required".into()));
        }
        if let Some(m) = sizes.iter().position(|&p| p == 0) {
            return Err(Error::Partition(format!("modality {m} has no columns")));
        }
        if names.len() != sizes.len() {
            return Err(Error::Partition("one name per modality is required".into()));
        }
        Ok(ModalityPartition { sizes, names })
    }

    pub fn num_modalities(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn size(&self, m: usize) -> Result<usize> {
        self.check(m)?;
        Ok(self.sizes[m])
    }

    /// Column range of modality `m` in the full design.
    pub fn range(&self, m: usize) -> Result<Range<usize>> {
        self.check(m)?;
        let start: usize = self.sizes[..m].iter().sum();
        Ok(start..start + self.sizes[m])
    }

    /// Global column indices of every modality except `m`, in order.
    pub fn complement_columns(&self, m: usize) -> Result<Vec<usize>> {
        let r = self.range(m)?;
        Ok((0..self.total()).filter(|j| !r.contains(j)).collect())
    }

    /// Modality owning global column `j`.
    pub fn modality_of(&self, j: usize) -> Option<usize> {
        let mut start = 0;
        for (m, &p) in self.sizes.iter().enumerate() {
            if j < start + p {
                return Some(m);
            }
            start += p;
        }
        None
    }

    fn check(&self, m: usize) -> Result<()> {
        if m >= self.sizes.len() {
            return Err(Error::ModalityOutOfRange {
                index: m,
                count: self.sizes.len(),
            });
        }
        Ok(())
    }
}

/// Response vector and design matrix on the same `n` subjects.
#[derive(Debug, Clone)]
pub struct MultimodalDataset<T> {
    y: Array1<T>,
    x: Array2<T>,
    partition: ModalityPartition,
    centered: bool,
}

impl<T: Real> MultimodalDataset<T> {
    pub fn new(y: Array1<T>, x: Array2<T>, partition: ModalityPartition) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        if x.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "response has {n} rows but design has {}",
                x.nrows()
            )));
        }
        if x.ncols() != partition.total() {
            return Err(Error::Partition(format!(
                "partition covers {} columns but design has {}",
                partition.total(),
                x.ncols()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "missing or non-finite values are not allowed".into(),
            ));
        }
        let x = x.as_standard_layout().into_owned();
        Ok(MultimodalDataset {
            y,
            x,
            partition,
            centered: false,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &Array1<T> {
        &self.y
    }

    pub fn x(&self) -> &Array2<T> {
        &self.x
    }

    pub fn partition(&self) -> &ModalityPartition {
        &self.partition
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Subtracts column means from `X` and the mean from `y`.
    pub fn center(mut self) -> Result<Self> {
        if self.centered {
            return Err(Error::AlreadyCentered);
        }
        let nf = cast::<T>(self.n() as f64);
        let ybar = self.y.sum() / nf;
        self.y.mapv_inplace(|v| v - ybar);
        let means = self.x.sum_axis(Axis(0)) / nf;
        self.x -= &means.insert_axis(Axis(0));
        self.centered = true;
        Ok(self)
    }

    /// Columns of modality `m` and of all other modalities (order preserved).
    pub fn modality_slice(&self, m: usize) -> Result<(Array2<T>, Array2<T>)> {
        let r = self.partition.range(m)?;
        let xm = self.x.slice(s![.., r.clone()]).to_owned();
        let before = self.x.slice(s![.., ..r.start]);
        let after = self.x.slice(s![.., r.end..]);
        let rest = concatenate(Axis(1), &[before, after]).expect("row counts agree");
        Ok((xm, rest.as_standard_layout().into_owned()))
    }

    pub fn modality_view(&self, m: usize) -> Result<ArrayView2<'_, T>> {
        let r = self.partition.range(m)?;
        Ok(self.x.slice(s![.., r]))
    }

    /// Replaces the response, keeping design and partition.
    pub fn with_response(&self, y: Array1<T>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::InvalidInput("response length mismatch".into()));
        }
        Ok(MultimodalDataset {
            y,
            x: self.x.clone(),
            partition: self.partition.clone(),
            centered: self.centered,
        })
    }
}

/// Inverse of [`MultimodalDataset::modality_slice`].
pub fn reassemble<T: Real>(
    partition: &ModalityPartition,
    m: usize,
    xm: ArrayView2<T>,
    rest: ArrayView2<T>,
) -> Result<Array2<T>> {
    let r = partition.range(m)?;
    let before = rest.slice(s![.., ..r.start]);
    let after = rest.slice(s![.., r.start..]);
    concatenate(Axis(1), &[before, xm, after]).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Largest absolute column mean of `x`, used to validate centering.
pub fn max_abs_column_mean<T: Real>(x: ArrayView2<T>) -> T {
    if x.nrows() == 0 {
        return T::zero();
    }
    let nf = cast::<T>(x.nrows() as f64);
    x.sum_axis(Axis(0))
        .iter()
        .fold(T::zero(), |m, &s| m.max((s / nf).abs()))
}

/// Rejects inputs whose columns are not mean-zero (relative to their scale).
pub(crate) fn ensure_centered<T: Real>(x: ArrayView2<T>) -> Result<()> {
    let scale = x.iter().fold(T::one(), |m, v| m.max(v.abs()));
    let max_mean = max_abs_column_mean(x);
    if max_mean > cast::<T>(1e-8) * scale {
        return Err(Error::NotCentered {
            max_mean: crate::to_f64(max_mean),
        });
    }
    Ok(())
}

/// Column selection for one modality in a partition config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModalityColumns {
    Count(usize),
    Names(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub columns: ModalityColumns,
}

/// Partition config: the response column plus one entry per modality.
///
/// ```toml
/// response = "memory"
///
/// [[modality]]
/// name = "tau"
/// columns = 51
///
/// [[modality]]
/// name = "thickness"
/// columns = ["roi_a", "roi_b"]
/// ```
///
/// Count entries consume the not-yet-assigned feature columns in header order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub response: String,
    #[serde(rename = "modality")]
    pub modalities: Vec<ModalitySpec>,
}

impl PartitionSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Resolves header positions for each modality, in modality order.
    fn resolve(&self, header: &[String]) -> Result<(usize, Vec<Vec<usize>>)> {
        let position: HashMap<&str, usize> = header
            .iter()
            .enumerate()
            .map(|(i, h)| (h.as_str(), i))
            .collect();
        let response = *position.get(self.response.as_str()).ok_or_else(|| {
            Error::Partition(format!("response column `{}` not in header", self.response))
        })?;
        let mut used = vec![false; header.len()];
        used[response] = true;
        let mut groups = vec![Vec::new(); self.modalities.len()];
        for (g, spec) in self.modalities.iter().enumerate() {
            if let ModalityColumns::Names(names) = &spec.columns {
                for name in names {
                    let &i = position.get(name.as_str()).ok_or_else(|| {
                        Error::Partition(format!("column `{name}` not in header"))
                    })?;
                    if used[i] {
                        return Err(Error::Partition(format!("column `{name}` assigned twice")));
                    }
                    used[i] = true;
                    groups[g].push(i);
                }
            }
        }
        let mut free = (0..header.len())
            .filter(|&i| !used[i])
            .collect::<Vec<_>>()
            .into_iter();
        let claimed: usize = self
            .modalities
            .iter()
            .map(|s| match s.columns {
                ModalityColumns::Count(c) => c,
                ModalityColumns::Names(_) => 0,
            })
            .sum();
        let available = free.len();
        if claimed != available {
            return Err(Error::Partition(format!(
                "partition claims {claimed} count-assigned columns but the csv has {available} unassigned feature columns"
            )));
        }
        for (g, spec) in self.modalities.iter().enumerate() {
            if let ModalityColumns::Count(c) = spec.columns {
                groups[g].extend(free.by_ref().take(c));
            }
        }
        Ok((response, groups))
    }
}

/// Reads a headered CSV into a dataset partitioned according to `spec`.
pub fn load_csv<T: Real>(path: &Path, spec: &PartitionSpec) -> Result<MultimodalDataset<T>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, spec)
}

/// Same as [`load_csv`] for any reader.
pub fn read_csv<T: Real, R: std::io::Read>(
    reader: R,
    spec: &PartitionSpec,
) -> Result<MultimodalDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let (response, groups) = spec.resolve(&header)?;
    let order: Vec<usize> = groups.iter().flatten().copied().collect();

    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::Csv(format!(
                "row {} has {} fields, header has {}",
                row + 1,
                record.len(),
                header.len()
            )));
        }
        let parse = |i: usize| -> Result<T> {
            record[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(cast::<T>)
                .ok_or_else(|| Error::NonNumeric {
                    row: row + 1,
                    column: header[i].clone(),
                })
        };
        ys.push(parse(response)?);
        for &i in &order {
            xs.push(parse(i)?);
        }
    }
    let n = ys.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 data rows, got {n}"
        )));
    }
    let x = Array2::from_shape_vec((n, order.len()), xs).map_err(|e| Error::Csv(e.to_string()))?;
    let partition = ModalityPartition::with_names(
        groups.iter().map(Vec::len).collect(),
        spec.modalities.iter().map(|m| m.name.clone()).collect(),
    )?;
    MultimodalDataset::new(Array1::from_vec(ys), x, partition)
}
