//! Comparison methods: standard training, vanilla KD, embedding
//! distillation, oracle fine-label training, k-means pseudo-subclasses, and
//! the projection ablations used in place of LELP directions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::lelp::{self, check_student, KdParams, SoftTargetObjective, SubclassProjector, TeacherBundle};
use crate::linalg::{self, axpy, Matrix};
use crate::nn::{self, softmax_tempered, ForwardTrace, HeadSplit, LossGrad, Mlp};
use crate::seed;
use crate::train::{self, BatchLoss, Objective, Predictor, TrainConfig, TrainOutcome};

/// Cross-entropy against fixed integer targets.
struct HardLabelObjective {
    labels: Vec<usize>,
}

impl Objective for HardLabelObjective {
    fn batch_loss(&mut self, indices: &[usize], trace: &ForwardTrace) -> Result<BatchLoss> {
        let y: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        let lg = nn::cross_entropy(&y, &trace.logits)?;
        Ok(BatchLoss::on_logits(lg.loss, lg.grad))
    }
}

/// Cross-entropy on the coarse labels.
pub fn train_standard(
    student: Mlp,
    data: &LabeledDataset,
    config: &TrainConfig,
    eval: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    let split = HeadSplit::plain(data.num_classes);
    check_student(&student, split, data.dim())?;
    let mut objective = HardLabelObjective {
        labels: data.labels.clone(),
    };
    train::fit(
        student,
        &data.features,
        &mut objective,
        config,
        &Predictor::Grouped(split),
        eval,
    )
}

/// `τ² · mean KL(softmax(t/τ) ‖ softmax(s/τ))` with its gradient on the
/// student logits.
pub fn vanilla_kd_loss(teacher_logits: &Matrix, student_logits: &Matrix, tau: f64) -> Result<LossGrad> {
    if teacher_logits.shape() != student_logits.shape() {
        return Err(Error::shape(
            "vanilla_kd_loss",
            format!("{:?}", teacher_logits.shape()),
            format!("{:?}", student_logits.shape()),
        ));
    }
    let p = softmax_tempered(teacher_logits, tau)?;
    lelp::lelp_loss(&p, student_logits, tau)
}

/// Temperature-scaled KD on the teacher's class probabilities.
pub fn train_vanilla_kd(
    student: Mlp,
    teacher: &TeacherBundle,
    data: &LabeledDataset,
    params: KdParams,
    config: &TrainConfig,
    eval: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    params.validate()?;
    let split = HeadSplit::plain(teacher.num_classes());
    check_student(&student, split, data.dim())?;
    let targets = softmax_tempered(&teacher.logits(&data.features)?, params.tau)?;
    let mut objective = SoftTargetObjective {
        targets,
        labels: &data.labels,
        split,
        params,
    };
    train::fit(
        student,
        &data.features,
        &mut objective,
        config,
        &Predictor::Grouped(split),
        eval,
    )
}

/// Smoothing added under the square root of the embedding residual norm.
pub const EMBED_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EmbeddingLossGrad {
    pub loss: f64,
    /// `n × D_S`
    pub student_grad: Matrix,
    /// `D_T × D_S`
    pub projection_grad: Matrix,
}

/// `mean_i sqrt(‖t_i − P s_i‖² + ε)` for teacher embeddings `t` (`n × D_T`),
/// student embeddings `s` (`n × D_S`) and projection `P` (`D_T × D_S`).
pub fn embedding_distill_loss(
    teacher_emb: &Matrix,
    student_emb: &Matrix,
    projection: &Matrix,
) -> Result<EmbeddingLossGrad> {
    let n = teacher_emb.rows();
    if student_emb.rows() != n {
        return Err(Error::shape("embedding_distill_loss rows", n, student_emb.rows()));
    }
    if projection.shape() != (teacher_emb.cols(), student_emb.cols()) {
        return Err(Error::shape(
            "embedding_distill_loss projection",
            format!("{}x{}", teacher_emb.cols(), student_emb.cols()),
            format!("{}x{}", projection.rows(), projection.cols()),
        ));
    }
    // mapped = s Pᵀ, residual = t − s Pᵀ
    let mapped = student_emb.matmul_nt(projection)?;
    let residual = teacher_emb.sub(&mapped)?;
    let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    let mut loss = 0.0;
    // scaled residual r_i / (n · ‖r_i‖_ε)
    let mut scaled = residual.clone();
    for r in 0..n {
        let row = residual.row(r);
        let len = (linalg::dot(row, row) + EMBED_EPS).sqrt();
        loss += len;
        scaled.row_mut(r).iter_mut().for_each(|v| *v *= inv_n / len);
    }
    let mut student_grad = scaled.matmul(projection)?;
    student_grad.scale(-1.0);
    let mut projection_grad = scaled.matmul_tn(student_emb)?;
    projection_grad.scale(-1.0);
    Ok(EmbeddingLossGrad {
        loss: loss * inv_n,
        student_grad,
        projection_grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    /// Learned jointly with the student.
    #[default]
    Learned,
    /// Fixed identity; requires equal embedding widths.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    /// Weight of the embedding term added to the KD loss.
    pub lambda: f64,
    pub projection: ProjectionKind,
}

impl Default for EmbedParams {
    fn default() -> Self {
        EmbedParams {
            lambda: 1.0,
            projection: ProjectionKind::Learned,
        }
    }
}

struct EmbeddingObjective<'a> {
    kd: SoftTargetObjective<'a>,
    teacher_emb: Matrix,
    projection: Matrix,
    params: EmbedParams,
}

impl Objective for EmbeddingObjective<'_> {
    fn batch_loss(&mut self, indices: &[usize], trace: &ForwardTrace) -> Result<BatchLoss> {
        let kd = self.kd.loss(indices, &trace.logits)?;
        let t = self.teacher_emb.select_rows(indices);
        let mut emb = embedding_distill_loss(&t, trace.embedding(), &self.projection)?;
        let lambda = self.params.lambda;
        emb.student_grad.scale(lambda);
        let extra_grads = match self.params.projection {
            ProjectionKind::Learned => {
                emb.projection_grad.scale(lambda);
                vec![emb.projection_grad.into_vec()]
            }
            ProjectionKind::Identity => Vec::new(),
        };
        Ok(BatchLoss {
            loss: kd.loss + lambda * emb.loss,
            logit_grad: kd.grad,
            embedding_grad: Some(emb.student_grad),
            extra_grads,
        })
    }

    fn extra_params(&mut self) -> Vec<&mut [f64]> {
        match self.params.projection {
            ProjectionKind::Learned => vec![self.projection.as_mut_slice()],
            ProjectionKind::Identity => Vec::new(),
        }
    }
}

/// Vanilla KD plus `λ ·` the embedding-matching term. A learned projection
/// starts at the identity when widths agree, otherwise Glorot-uniform.
pub fn train_embedding_distill(
    student: Mlp,
    teacher: &TeacherBundle,
    data: &LabeledDataset,
    kd: KdParams,
    params: EmbedParams,
    config: &TrainConfig,
    eval: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    kd.validate()?;
    if !(params.lambda >= 0.0 && params.lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be non-negative, got {}",
            params.lambda
        )));
    }
    let split = HeadSplit::plain(teacher.num_classes());
    check_student(&student, split, data.dim())?;
    let (dt, ds) = (teacher.embedding_dim(), student.embedding_dim());
    let projection = if dt == ds {
        Matrix::identity(dt)
    } else if params.projection == ProjectionKind::Identity {
        return Err(Error::shape("identity embedding projection", dt, ds));
    } else {
        let mut rng = seed::derived_rng(config.seed, &["projection".into()]);
        let limit = (6.0 / (dt + ds) as f64).sqrt();
        Matrix::from_fn(dt, ds, |_, _| rng.random_range(-limit..limit))
    };
    let targets = softmax_tempered(&teacher.logits(&data.features)?, kd.tau)?;
    let mut objective = EmbeddingObjective {
        kd: SoftTargetObjective {
            targets,
            labels: &data.labels,
            split,
            params: kd,
        },
        teacher_emb: teacher.embed(&data.features)?,
        projection,
        params,
    };
    train::fit(
        student,
        &data.features,
        &mut objective,
        config,
        &Predictor::Grouped(split),
        eval,
    )
}

/// Cross-entropy on fine labels; evaluation maps the fine argmax to its
/// coarse class.
pub fn train_oracle(
    student: Mlp,
    data: &LabeledDataset,
    config: &TrainConfig,
    eval: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    let (fine, map) = match (&data.fine_labels, &data.fine_to_coarse) {
        (Some(f), Some(m)) => (f.clone(), m.clone()),
        _ => return Err(Error::InvalidArgument("oracle training needs fine labels".into())),
    };
    check_student(&student, HeadSplit::plain(map.len()), data.dim())?;
    let mut objective = HardLabelObjective { labels: fine };
    train::fit(
        student,
        &data.features,
        &mut objective,
        config,
        &Predictor::FineToCoarse(map),
        eval,
    )
}

/// Fraction of rows whose fine-label argmax is correct.
pub fn fine_accuracy(model: &Mlp, data: &LabeledDataset) -> Result<f64> {
    let fine = data
        .fine_labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("dataset has no fine labels".into()))?;
    let identity: Vec<usize> = (0..model.output_dim()).collect();
    train::accuracy(model, &data.features, fine, &Predictor::FineToCoarse(identity))
}

/// Lloyd's k-means on one point set.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    /// Inertia after every assignment step.
    pub inertia_history: Vec<f64>,
}

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_SHIFT_TOL: f64 = 1e-8;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign(points: &Matrix, centers: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.row_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centers.rows() {
            let d = sq_dist(p, centers.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    inertia
}

/// k-means++ seeding followed by Lloyd iterations until the largest center
/// shift falls below `1e-8` or 100 iterations pass. Empty clusters keep
/// their previous center.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeans> {
    let n = points.rows();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let mut rng = seed::rng(seed);
    let d = points.cols();
    let mut centers = Matrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut nearest: Vec<f64> = points.row_iter().map(|p| sq_dist(p, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (i, p) in points.row_iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, centers.row(c)));
        }
    }

    let mut labels = vec![0; n];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        history.push(assign(points, &centers, &mut labels));
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, p) in points.row_iter().enumerate() {
            axpy(1.0, p, sums.row_mut(labels[i]));
            counts[labels[i]] += 1;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|v| *v *= inv);
            shift = shift.max(sq_dist(sums.row(c), centers.row(c)).sqrt());
            centers.row_mut(c).copy_from_slice(sums.row(c));
        }
        if shift < KMEANS_SHIFT_TOL {
            break;
        }
    }
    history.push(assign(points, &centers, &mut labels));
    Ok(KMeans {
        labels,
        centers,
        inertia_history: history,
    })
}

/// Per-class k-means of teacher embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    /// `per_class[c]` clusters the members of class `c` in the order given.
    pub per_class: Vec<KMeans>,
}

impl ClusterAssignment {
    /// Cluster index of every row of `data`, aligned with
    /// `data.class_indices()` as used to build the assignment.
    pub fn example_clusters(&self, data: &LabeledDataset) -> Result<Vec<usize>> {
        let mut out = vec![0; data.len()];
        for (c, idx) in data.class_indices().iter().enumerate() {
            let km = self.per_class.get(c).ok_or_else(|| {
                Error::shape(
                    "cluster assignment classes",
                    data.num_classes,
                    self.per_class.len(),
                )
            })?;
            if km.labels.len() != idx.len() {
                return Err(Error::shape(
                    "cluster assignment members",
                    idx.len(),
                    km.labels.len(),
                ));
            }
            for (&i, &j) in idx.iter().zip(&km.labels) {
                out[i] = j;
            }
        }
        Ok(out)
    }
}

/// Runs k-means independently on each class's embeddings with a stream keyed
/// by `(seed, class)`.
pub fn kmeans_per_class(embeddings: &[Matrix], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let mut per_class = Vec::with_capacity(embeddings.len());
    for (c, h) in embeddings.iter().enumerate() {
        if h.rows() < k {
            return Err(Error::TooFewExamples {
                class: c,
                have: h.rows(),
                need: k,
            });
        }
        per_class.push(kmeans(
            h,
            k,
            seed::derive_seed(seed, &["kmeans".into(), c.into()]),
        )?);
    }
    Ok(ClusterAssignment { k, per_class })
}

/// Clusters each class of `data` in the teacher's embedding space.
pub fn cluster_teacher_embeddings(
    teacher: &TeacherBundle,
    data: &LabeledDataset,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let emb = teacher.embed(&data.features)?;
    let per_class: Vec<Matrix> = data
        .class_indices()
        .iter()
        .map(|idx| emb.select_rows(idx))
        .collect();
    kmeans_per_class(&per_class, k, seed)
}

/// Cross-entropy on one-hot pseudo-subclass labels `c·k + cluster`;
/// predictions use the summed-subclass rule.
pub fn train_cluster_student(
    student: Mlp,
    data: &LabeledDataset,
    clusters: &[usize],
    k: usize,
    config: &TrainConfig,
    eval: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    if clusters.len() != data.len() {
        return Err(Error::shape("cluster labels", data.len(), clusters.len()));
    }
    if let Some(&bad) = clusters.iter().find(|&&j| j >= k) {
        return Err(Error::InvalidArgument(format!(
            "cluster {bad} out of range for k = {k}"
        )));
    }
    let split = HeadSplit::new(data.num_classes, k);
    check_student(&student, split, data.dim())?;
    let labels = data
        .labels
        .iter()
        .zip(clusters)
        .map(|(&c, &j)| c * k + j)
        .collect();
    let mut objective = HardLabelObjective { labels };
    train::fit(
        student,
        &data.features,
        &mut objective,
        config,
        &Predictor::Grouped(split),
        eval,
    )
}

/// Where subclass directions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// Null-space projection, PCA, random rotation and rescaling.
    #[default]
    Lelp,
    /// Top PCA directions of the raw embeddings, unrotated and unscaled.
    RawPca,
    /// Random orthonormal directions.
    Random,
    /// The standard basis of the embedding space; needs `s = D`.
    Identity,
}

impl DirectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DirectionMode::Lelp => "lelp",
            DirectionMode::RawPca => "raw_pca",
            DirectionMode::Random => "random",
            DirectionMode::Identity => "identity",
        }
    }
}

/// Builds a projector for any [`DirectionMode`]. In `Lelp` mode the
/// null-space step is applied whenever the embedding is wide enough
/// (`D ≥ s + C`).
pub fn make_directions(
    mode: DirectionMode,
    teacher: &TeacherBundle,
    data: &LabeledDataset,
    s: usize,
    beta: f64,
    seed: u64,
) -> Result<SubclassProjector> {
    let classes = teacher.num_classes();
    let d = teacher.embedding_dim();
    match mode {
        DirectionMode::Lelp => {
            let use_nullspace = d >= s + classes;
            lelp::fit_projector(teacher, data, s, beta, seed, use_nullspace)
        }
        DirectionMode::RawPca => {
            lelp::check_fit_inputs(teacher, data, s)?;
            let emb = teacher.embed(&data.features)?;
            let mut means = Matrix::zeros(classes, d);
            let mut directions = Vec::with_capacity(classes);
            for (c, idx) in data.class_indices().iter().enumerate() {
                let h = emb.select_rows(idx);
                let pca = linalg::top_pca(&h, s).map_err(|e| match e {
                    Error::DegenerateCovariance => Error::DegenerateClass { class: c },
                    other => other,
                })?;
                means.row_mut(c).copy_from_slice(&pca.mean);
                directions.push(pca.directions);
            }
            finish_projector(means, directions, s, beta, seed)
        }
        DirectionMode::Random | DirectionMode::Identity => {
            if mode == DirectionMode::Identity && s != d {
                return Err(Error::InvalidArgument(format!(
                    "identity directions need s = embedding dim ({s} != {d})"
                )));
            }
            if s == 0 || s > d {
                return Err(Error::InvalidArgument(format!(
                    "cannot pick {s} orthonormal directions in dimension {d}"
                )));
            }
            let means = class_means(teacher, data)?;
            let directions = (0..classes)
                .map(|c| match mode {
                    DirectionMode::Identity => Matrix::identity(d),
                    _ => {
                        let q = linalg::random_orthogonal(d, lelp::rotation_seed(seed, c));
                        Matrix::from_fn(s, d, |r, k| q[(r, k)])
                    }
                })
                .collect();
            finish_projector(means, directions, s, beta, seed)
        }
    }
}

fn class_means(teacher: &TeacherBundle, data: &LabeledDataset) -> Result<Matrix> {
    if data.num_classes != teacher.num_classes() {
        return Err(Error::shape(
            "class means",
            teacher.num_classes(),
            data.num_classes,
        ));
    }
    let emb = teacher.embed(&data.features)?;
    let mut means = Matrix::zeros(data.num_classes, emb.cols());
    for (c, idx) in data.class_indices().iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::TooFewExamples {
                class: c,
                have: 0,
                need: 1,
            });
        }
        means
            .row_mut(c)
            .copy_from_slice(&emb.select_rows(idx).column_means());
    }
    Ok(means)
}

fn finish_projector(
    means: Matrix,
    directions: Vec<Matrix>,
    s: usize,
    beta: f64,
    seed: u64,
) -> Result<SubclassProjector> {
    let proj = SubclassProjector {
        means,
        directions,
        subclasses: s,
        beta,
        seed,
        nullspace: false,
    };
    proj.validate()?;
    Ok(proj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanilla_identical_logits_is_zero() {
        let z = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let lg = vanilla_kd_loss(&z, &z, 3.0).unwrap();
        assert!(lg.loss.abs() < 1e-14);
    }

    #[test]
    fn vanilla_kd_matches_scalar_form() {
        // teacher (2, 0), student (0, 2), tau = 1
        let t = Matrix::from_rows(&[[2.0, 0.0]]).unwrap();
        let s = Matrix::from_rows(&[[0.0, 2.0]]).unwrap();
        let p1 = 1.0 / (1.0 + f64::exp(-2.0));
        let q1 = 1.0 - p1;
        let want = p1 * (p1 / q1).ln() + q1 * (q1 / p1).ln();
        assert!((vanilla_kd_loss(&t, &s, 1.0).unwrap().loss - want).abs() < 1e-12);
        // (p1 − q1) · ln(p1/q1) = tanh(1) · 2
        assert!((want - 2.0 * 1f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn embedding_loss_zero_when_projection_matches() {
        let s = Matrix::random_normal(3, 2, 1);
        let p = Matrix::random_normal(4, 2, 2);
        let t = s.matmul_nt(&p).unwrap();
        let lg = embedding_distill_loss(&t, &s, &p).unwrap();
        assert!(lg.loss < 1e-5);
    }

    #[test]
    fn embedding_loss_scalar_case() {
        let t = Matrix::from_rows(&[[3.0]]).unwrap();
        let s = Matrix::from_rows(&[[1.0]]).unwrap();
        let p = Matrix::identity(1);
        let lg = embedding_distill_loss(&t, &s, &p).unwrap();
        assert!((lg.loss - 2.0).abs() < 1e-12);
        assert!((lg.student_grad[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((lg.student_grad[(0, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_loss_shape_checks() {
        let t = Matrix::zeros(2, 3);
        let s = Matrix::zeros(2, 2);
        assert!(embedding_distill_loss(&t, &s, &Matrix::zeros(2, 3)).is_err());
        assert!(embedding_distill_loss(&t, &Matrix::zeros(3, 2), &Matrix::zeros(3, 2)).is_err());
    }

    fn blobs(seed: u64) -> Matrix {
        let noise = Matrix::random_normal(40, 2, seed);
        Matrix::from_fn(40, 2, |r, c| {
            let center = if r % 2 == 0 { [10.0, 10.0] } else { [-10.0, 5.0] };
            center[c] + 0.5 * noise[(r, c)]
        })
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let pts = blobs(3);
        let km = kmeans(&pts, 2, 11).unwrap();
        let a = km.labels[0];
        for (i, &l) in km.labels.iter().enumerate() {
            assert_eq!(l == a, i % 2 == 0);
        }
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = blobs(4);
        let km = kmeans(&pts, 1, 0).unwrap();
        assert!(km.labels.iter().all(|&l| l == 0));
        let mean = pts.column_means();
        for c in 0..2 {
            assert!((km.centers[(0, c)] - mean[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_duplicate_points_are_fixpoints() {
        let vals = [[0.0, 0.0], [5.0, 1.0], [-3.0, 2.0]];
        let rows: Vec<[f64; 2]> = (0..12).map(|i| vals[i % 3]).collect();
        let pts = Matrix::from_rows(&rows).unwrap();
        let km = kmeans(&pts, 3, 7).unwrap();
        let mut centers: Vec<[f64; 2]> = km.centers.row_iter().map(|r| [r[0], r[1]]).collect();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut want = vals.to_vec();
        want.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(centers, want);
        assert_eq!(*km.inertia_history.last().unwrap(), 0.0);
    }

    #[test]
    fn kmeans_too_small_class_errors() {
        let h = vec![Matrix::zeros(5, 2), Matrix::zeros(2, 2)];
        assert!(matches!(
            kmeans_per_class(&h, 3, 0),
            Err(Error::TooFewExamples { class: 1, .. })
        ));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let pts = Matrix::random_normal(50, 3, 5);
        assert_eq!(kmeans(&pts, 4, 9).unwrap(), kmeans(&pts, 4, 9).unwrap());
    }
}
