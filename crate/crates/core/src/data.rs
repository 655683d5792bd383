//! Labelled datasets: synthetic subclass-structured generation, CSV I/O,
//! binarization, stratified splits and teacher pseudo-labelling.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lelp::TeacherBundle;
use crate::linalg::{Matrix, Vector};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// Feature rows with coarse labels in `[0, num_classes)` and, optionally,
/// fine labels together with their fine-to-coarse map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub fine_labels: Option<Vec<usize>>,
    pub fine_to_coarse: Option<Vec<usize>>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape("dataset labels", features.rows(), labels.len()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument(
                "a dataset needs at least one class".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            num_classes,
            fine_labels: None,
            fine_to_coarse: None,
            split: Split::Train,
        })
    }

    /// Attaches fine labels; every example must satisfy
    /// `fine_to_coarse[fine] == label`.
    pub fn with_fine_labels(mut self, fine: Vec<usize>, fine_to_coarse: Vec<usize>) -> Result<Self> {
        if fine.len() != self.len() {
            return Err(Error::shape("fine labels", self.len(), fine.len()));
        }
        if let Some(&c) = fine_to_coarse.iter().find(|&&c| c >= self.num_classes) {
            return Err(Error::InvalidArgument(format!(
                "fine-to-coarse map points at class {c} of {}",
                self.num_classes
            )));
        }
        for (i, (&f, &y)) in fine.iter().zip(&self.labels).enumerate() {
            match fine_to_coarse.get(f) {
                Some(&c) if c == y => {}
                Some(&c) => {
                    return Err(Error::InvalidArgument(format!(
                        "example {i}: fine label {f} maps to class {c} but is labelled {y}"
                    )))
                }
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "example {i}: fine label {f} outside the fine-to-coarse map"
                    )))
                }
            }
        }
        self.fine_labels = Some(fine);
        self.fine_to_coarse = Some(fine_to_coarse);
        Ok(self)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_fine_classes(&self) -> Option<usize> {
        self.fine_to_coarse.as_ref().map(Vec::len)
    }

    /// Row indices of each class, in ascending order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.class_indices().iter().map(Vec::len).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            fine_labels: self
                .fine_labels
                .as_ref()
                .map(|f| indices.iter().map(|&i| f[i]).collect()),
            fine_to_coarse: self.fine_to_coarse.clone(),
            split: self.split,
        }
    }
}

/// Parameters of the synthetic Gaussian-mixture benchmark.
///
/// Each coarse class owns `subclusters_per_class` isotropic Gaussian
/// subclusters. Fine label `f` belongs to class `f % classes`, mirroring the
/// parity binarization applied to many-class datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub subclusters_per_class: usize,
    pub dim: usize,
    /// Expected Euclidean norm of a subcluster center.
    pub center_scale: f64,
    pub noise_std: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 2,
            subclusters_per_class: 5,
            dim: 16,
            center_scale: 6.0,
            noise_std: 1.0,
            train_size: 8000,
            test_size: 2000,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.subclusters_per_class == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument(
                "classes, subclusters per class and dimension must all be at least 1".into(),
            ));
        }
        if !(self.noise_std > 0.0) || !(self.center_scale >= 0.0) {
            return Err(Error::InvalidArgument(
                "noise std must be positive and center scale non-negative".into(),
            ));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::InvalidArgument(
                "train and test sizes must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn num_fine(&self) -> usize {
        self.classes * self.subclusters_per_class
    }

    pub fn fine_to_coarse(&self) -> Vec<usize> {
        (0..self.num_fine()).map(|f| f % self.classes).collect()
    }
}

const CENTER_ATTEMPTS: usize = 1000;

/// Subcluster centers, resampled until every pair is at least four noise
/// standard deviations apart.
pub fn synthetic_centers(spec: &SyntheticSpec) -> Result<Vec<Vector>> {
    spec.validate()?;
    let mut rng = seed::derived_rng(spec.seed, &["centers".into()]);
    let coord_std = spec.center_scale / (spec.dim as f64).sqrt();
    let min_dist = 4.0 * spec.noise_std;
    let mut centers: Vec<Vector> = Vec::with_capacity(spec.num_fine());
    for _ in 0..spec.num_fine() {
        let mut placed = false;
        for _ in 0..CENTER_ATTEMPTS {
            let mut cand: Vector = vec![0.0; spec.dim];
            for x in &mut cand {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = coord_std * z;
            }
            let far = centers.iter().all(|c| {
                c.iter()
                    .zip(&cand)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    >= min_dist
            });
            if far {
                centers.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::CenterPlacement {
                clusters: spec.num_fine(),
                attempts: CENTER_ATTEMPTS,
            });
        }
    }
    Ok(centers)
}

/// Draws disjoint train and test sets from the same mixture. The two splits
/// use independent RNG streams; example `i` comes from subcluster `i % F`,
/// so classes and subclusters are balanced to within one example.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    let centers = synthetic_centers(spec)?;
    let draw = |n: usize, label: &str, split: Split| -> Result<LabeledDataset> {
        let mut rng = seed::derived_rng(spec.seed, &[label.into()]);
        let f_count = spec.num_fine();
        let mut features = Matrix::zeros(n, spec.dim);
        let mut fine = Vec::with_capacity(n);
        for i in 0..n {
            let f = i % f_count;
            for (x, c) in features.row_mut(i).iter_mut().zip(&centers[f]) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = c + spec.noise_std * z;
            }
            fine.push(f);
        }
        let map = spec.fine_to_coarse();
        let labels = fine.iter().map(|&f| map[f]).collect();
        Ok(LabeledDataset::new(features, labels, spec.classes)?
            .with_fine_labels(fine, map)?
            .with_split(split))
    };
    Ok((
        draw(spec.train_size, "train", Split::Train)?,
        draw(spec.test_size, "test", Split::Test)?,
    ))
}

/// Parity binarization of many-class labels: `y mod 2`.
pub fn binarize(labels: &[usize]) -> Vec<usize> {
    labels.iter().map(|y| y % 2).collect()
}

/// Per-column standardization fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vector,
    pub std: Vector,
}

impl Standardizer {
    /// Columns with zero variance keep unit scale.
    pub fn fit(features: &Matrix) -> Self {
        let mean = features.column_means();
        let n = features.rows().max(1) as f64;
        let mut var = vec![0.0; features.cols()];
        for row in features.row_iter() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.mean.len() {
            return Err(Error::shape("standardize", self.mean.len(), features.cols()));
        }
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((x, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }

    pub fn apply_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let mut out = data.clone();
        out.features = self.apply(&data.features)?;
        Ok(out)
    }
}

/// Column layout of a dataset CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    /// Feature columns are `{prefix}0 .. {prefix}{d-1}`.
    pub feature_prefix: String,
    pub label_column: String,
    /// Read when present in the header.
    pub fine_label_column: String,
    /// Number of coarse classes; inferred from the labels when absent.
    pub num_classes: Option<usize>,
    /// Treat the label column as a many-class label and binarize it by parity,
    /// keeping the original as the fine label.
    pub binarize: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            feature_prefix: "f".into(),
            label_column: "label".into(),
            fine_label_column: "fine_label".into(),
            num_classes: None,
            binarize: false,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: "empty file".into(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let position: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();

    let mut feature_cols = Vec::new();
    while let Some(&i) = position.get(format!("{}{}", schema.feature_prefix, feature_cols.len()).as_str()) {
        feature_cols.push(i);
    }
    if feature_cols.is_empty() {
        return Err(Error::MissingColumn(format!("{}0", schema.feature_prefix)));
    }
    let label_col = *position
        .get(schema.label_column.as_str())
        .ok_or_else(|| Error::MissingColumn(schema.label_column.clone()))?;
    let fine_col = position.get(schema.fine_label_column.as_str()).copied();

    let d = feature_cols.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut fine = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let data_row = row_idx + 1;
        let line = data_row + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: format!("data row {data_row}: {e}"),
        })?;
        let cell = |col: usize, name: &str| -> Result<&str> {
            record.get(col).map(str::trim).ok_or_else(|| Error::Parse {
                path: path.into(),
                line,
                message: format!("data row {data_row}: missing value for `{name}`"),
            })
        };
        for (k, &col) in feature_cols.iter().enumerate() {
            let name = format!("{}{k}", schema.feature_prefix);
            let raw = cell(col, &name)?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("data row {data_row}: column `{name}` is not numeric: {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: format!("data row {data_row}: column `{name}` is not finite"),
                });
            }
            data.push(v);
        }
        let parse_label = |col: usize, name: &str| -> Result<usize> {
            let raw = cell(col, name)?;
            raw.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("data row {data_row}: column `{name}` is not a class index: {raw:?}"),
            })
        };
        labels.push(parse_label(label_col, &schema.label_column)?);
        if let Some(col) = fine_col {
            fine.push(parse_label(col, &schema.fine_label_column)?);
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 2,
            message: "no data rows".into(),
        });
    }

    let features = Matrix::from_vec(labels.len(), d, data)?;
    if schema.binarize {
        let coarse = binarize(&labels);
        let n_fine = labels.iter().max().unwrap() + 1;
        let map = (0..n_fine).map(|f| f % 2).collect();
        let classes = schema.num_classes.unwrap_or(2);
        return LabeledDataset::new(features, coarse, classes)?.with_fine_labels(labels, map);
    }
    let classes = schema
        .num_classes
        .unwrap_or_else(|| labels.iter().max().unwrap() + 1);
    let ds = LabeledDataset::new(features, labels, classes)?;
    if fine_col.is_none() {
        return Ok(ds);
    }
    // infer the fine-to-coarse map from co-occurrence; conflicts are rejected
    let n_fine = fine.iter().max().unwrap() + 1;
    let mut map: Vec<Option<usize>> = vec![None; n_fine];
    for (&f, &y) in fine.iter().zip(&ds.labels) {
        match map[f] {
            None => map[f] = Some(y),
            Some(c) if c == y => {}
            Some(c) => {
                return Err(Error::InvalidArgument(format!(
                    "fine label {f} appears under classes {c} and {y}"
                )))
            }
        }
    }
    // fine ids that never occur are mapped by parity
    let map = map
        .into_iter()
        .enumerate()
        .map(|(f, c)| c.unwrap_or(f % classes))
        .collect();
    ds.with_fine_labels(fine, map)
}

/// Writes `f0..f{d-1},label[,fine_label]` with round-trip float formatting.
pub fn write_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    if data.fine_labels.is_some() {
        header.push("fine_label".into());
    }
    writer.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.features.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.labels[i].to_string());
        if let Some(f) = &data.fine_labels {
            rec.push(f[i].to_string());
        }
        writer.write_record(&rec)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Records how a synthetic dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    pub spec: SyntheticSpec,
}

pub fn write_manifest(spec: &SyntheticSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let manifest = DatasetManifest {
        generator: "synthetic-gaussian-subclusters".into(),
        spec: spec.clone(),
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidArgument(format!("cannot encode manifest: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(toml::from_str(&text)?)
}

/// Class-stratified sample of `count` rows, returned in ascending order.
///
/// Quotas are proportional to class sizes (largest remainder), and every
/// non-empty class gets at least one row.
pub fn stratified_sample(data: &LabeledDataset, count: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.len();
    if count > n {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {count} of {n} examples"
        )));
    }
    let by_class = data.class_indices();
    let present = by_class.iter().filter(|c| !c.is_empty()).count();
    if count < present {
        return Err(Error::InvalidArgument(format!(
            "a stratified sample over {present} classes needs at least {present} examples, got {count}"
        )));
    }
    let mut quota: Vec<usize> = by_class.iter().map(|c| count * c.len() / n).collect();
    let mut remainders: Vec<(usize, usize)> = by_class
        .iter()
        .enumerate()
        .map(|(c, idx)| (c, (count * idx.len()) % n))
        .collect();
    remainders.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut left = count - quota.iter().sum::<usize>();
    for &(c, _) in &remainders {
        if left == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            left -= 1;
        }
    }
    for c in 0..quota.len() {
        if quota[c] == 0 && !by_class[c].is_empty() {
            let donor = (0..quota.len())
                .max_by_key(|&d| (quota[d], usize::MAX - d))
                .unwrap();
            quota[donor] -= 1;
            quota[c] = 1;
        }
    }

    let mut chosen = Vec::with_capacity(count);
    for (c, idx) in by_class.iter().enumerate() {
        let mut idx = idx.clone();
        let mut rng = seed::derived_rng(seed, &["stratified".into(), c.into()]);
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..quota[c]]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Seeded stratified subsample holding `fraction` of the rows.
pub fn subsample(data: &LabeledDataset, fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subsample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let count = (fraction * data.len() as f64).round() as usize;
    if count < data.num_classes {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} leaves {count} examples, fewer than the {} classes",
            data.num_classes
        )));
    }
    if count == data.len() {
        return Ok(data.clone());
    }
    let idx = stratified_sample(data, count, seed)?;
    Ok(data.subset(&idx))
}

/// Feature rows whose labels have been withheld.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledPool {
    pub features: Matrix,
    /// Row of each pool example in the dataset it came from.
    pub source_rows: Vec<usize>,
}

impl UnlabeledPool {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

/// Splits off a stratified labelled subset of `labeled_count` rows; the rest
/// becomes an unlabelled pool. Both keep the original row order.
pub fn semi_split(
    data: &LabeledDataset,
    labeled_count: usize,
    seed: u64,
) -> Result<(LabeledDataset, UnlabeledPool)> {
    if labeled_count < data.num_classes {
        return Err(Error::InvalidArgument(format!(
            "need at least one labelled example per class: {labeled_count} < {}",
            data.num_classes
        )));
    }
    let chosen = stratified_sample(data, labeled_count, seed)?;
    let mut is_chosen = vec![false; data.len()];
    for &i in &chosen {
        is_chosen[i] = true;
    }
    let rest: Vec<usize> = (0..data.len()).filter(|&i| !is_chosen[i]).collect();
    let labeled = data.subset(&chosen);
    let pool = UnlabeledPool {
        features: data.features.select_rows(&rest),
        source_rows: rest,
    };
    Ok((labeled, pool))
}

/// Teacher soft labels for an unlabelled pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    /// Tempered class probabilities, one row per pool example.
    pub probs: Matrix,
    pub tau: f64,
}

impl PseudoLabels {
    /// Argmax class per example, lowest index on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.probs.row_iter().map(crate::train::argmax).collect()
    }
}

pub fn pseudo_label(teacher: &TeacherBundle, pool: &UnlabeledPool) -> Result<PseudoLabels> {
    let classes = teacher.num_classes();
    if pool.is_empty() {
        if pool.features.cols() != 0 && pool.features.cols() != teacher.input_dim() {
            return Err(Error::shape(
                "pseudo_label pool",
                teacher.input_dim(),
                pool.features.cols(),
            ));
        }
        return Ok(PseudoLabels {
            probs: Matrix::zeros(0, classes),
            tau: teacher.tau(),
        });
    }
    let probs = teacher.class_probs(&pool.features)?;
    Ok(PseudoLabels {
        probs,
        tau: teacher.tau(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            train_size: 203,
            test_size: 50,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn binarize_by_parity() {
        assert_eq!(
            binarize(&(0..10).collect::<Vec<_>>()),
            vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]
        );
        assert_eq!(binarize(&[0, 2, 8, 4]), vec![0, 0, 0, 0]);
        assert_eq!(binarize(&[7]), vec![1]);
    }

    #[test]
    fn single_subcluster_collapses_fine_onto_coarse() {
        let spec = SyntheticSpec {
            subclusters_per_class: 1,
            ..small_spec()
        };
        let (train, _) = generate_synthetic(&spec).unwrap();
        assert_eq!(train.fine_labels.as_ref().unwrap(), &train.labels);
    }

    #[test]
    fn generation_is_deterministic_and_consistent() {
        let spec = small_spec();
        let (a, ta) = generate_synthetic(&spec).unwrap();
        let (b, tb) = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let map = a.fine_to_coarse.as_ref().unwrap();
        for (f, y) in a.fine_labels.as_ref().unwrap().iter().zip(&a.labels) {
            assert_eq!(map[*f], *y);
        }
        let counts = a.class_counts();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        // disjoint streams: the first rows differ even though they share a subcluster
        assert_ne!(a.features.row(0), ta.features.row(0));
    }

    #[test]
    fn centers_respect_minimum_separation() {
        let spec = small_spec();
        let centers = synthetic_centers(&spec).unwrap();
        for i in 0..centers.len() {
            for j in 0..i {
                let d: f64 = centers[i]
                    .iter()
                    .zip(&centers[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(d >= 4.0 * spec.noise_std);
            }
        }
    }

    #[test]
    fn impossible_center_placement_is_reported() {
        let spec = SyntheticSpec {
            dim: 1,
            center_scale: 0.1,
            subclusters_per_class: 10,
            ..small_spec()
        };
        assert!(matches!(
            generate_synthetic(&spec),
            Err(Error::CenterPlacement { .. })
        ));
    }

    #[test]
    fn semi_split_edges() {
        let (train, _) = generate_synthetic(&small_spec()).unwrap();
        let (lab, pool) = semi_split(&train, train.len(), 3).unwrap();
        assert!(pool.is_empty());
        assert_eq!(lab, train);

        let (lab, pool) = semi_split(&train, 2, 3).unwrap();
        assert_eq!(lab.class_counts(), vec![1, 1]);
        assert_eq!(pool.len(), train.len() - 2);

        assert!(semi_split(&train, 1, 3).is_err());
        let again = semi_split(&train, 40, 9).unwrap();
        assert_eq!(again, semi_split(&train, 40, 9).unwrap());
    }

    #[test]
    fn subsample_full_fraction_is_identity() {
        let (train, _) = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(subsample(&train, 1.0, 5).unwrap(), train);
        let quarter = subsample(&train, 0.25, 5).unwrap();
        assert_eq!(quarter.len(), 51);
        assert!(subsample(&train, 0.0, 5).is_err());
        assert!(subsample(&train, 0.001, 5).is_err());
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let (train, _) = generate_synthetic(&small_spec()).unwrap();
        let s = Standardizer::fit(&train.features);
        let z = s.apply(&train.features).unwrap();
        for m in z.column_means() {
            assert!(m.abs() < 1e-12);
        }
        let again = Standardizer::fit(&z);
        for sd in again.std {
            assert!((sd - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inconsistent_fine_labels_are_rejected() {
        let ds = LabeledDataset::new(Matrix::zeros(2, 1), vec![0, 1], 2).unwrap();
        assert!(ds.clone().with_fine_labels(vec![0, 0], vec![0, 1]).is_err());
        assert!(ds.with_fine_labels(vec![0, 1], vec![0, 1]).is_ok());
    }
}
