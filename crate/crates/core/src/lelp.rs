//! Pseudo-subclass distillation from linear projections of teacher embeddings.
//!
//! Three stages:
//!
//! 1. [`fit_projector`]: per class, PCA of the teacher embeddings (optionally
//!    after removing the span of the teacher's output weights), a random
//!    rotation of the top `S` directions, and a shared rescaling so the
//!    largest per-direction standard deviation is one.
//! 2. [`subsplit`]: splits the teacher's `τ`-tempered class probability
//!    `p_c` into `S` parts with a `β`-tempered softmax over the projections
//!    `ṽ_{c,s} · (h − μ_c)`.
//! 3. [`train_student_lelp`]: trains a student with `C·S` outputs against those
//!    targets with the `τ²`-scaled KL loss; predictions sum each class's
//!    subclass probabilities ([`predict_class`]).
//!
//! Outputs are laid out class-major: subclass `s` of class `c` is unit `c·S + s`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, dot, Matrix};
use crate::nn::{self, softmax_tempered, HeadSplit, LossGrad, Mlp};
use crate::seed;
use crate::train::{self, BatchLoss, Objective, Predictor, TrainConfig, TrainOutcome};

/// A frozen teacher: its feature extractor, output head and distillation
/// temperature.
///
/// Class logits are `z_c = w_c · h + b_c`, with `W` the `D × C` weights of
/// the model's output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherBundle {
    model: Mlp,
    tau: f64,
}

impl TeacherBundle {
    pub fn new(model: Mlp, tau: f64) -> Result<Self> {
        check_positive("tau", tau)?;
        if model.head_split().per_class != 1 {
            return Err(Error::InvalidArgument(
                "a teacher must have one output per class".into(),
            ));
        }
        Ok(TeacherBundle { model, tau })
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        TeacherBundle::new(self.model.clone(), tau)
    }

    pub fn num_classes(&self) -> usize {
        self.model.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.model.embedding_dim()
    }

    /// `D × C`
    pub fn head_weights(&self) -> &Matrix {
        &self.model.output_layer().weights
    }

    pub fn head_biases(&self) -> &[f64] {
        &self.model.output_layer().bias
    }

    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        self.model.embed(x)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.model.logits(x)
    }

    /// Class logits from embeddings.
    pub fn head_logits(&self, h: &Matrix) -> Result<Matrix> {
        let mut z = h.matmul(self.head_weights())?;
        for r in 0..z.rows() {
            linalg::axpy(1.0, self.head_biases(), z.row_mut(r));
        }
        Ok(z)
    }

    /// `τ`-tempered class probabilities.
    pub fn class_probs(&self, x: &Matrix) -> Result<Matrix> {
        softmax_tempered(&self.logits(x)?, self.tau)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// Per-class means and subclass directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubclassProjector {
    /// `C × D`, row `c` is `μ_c`.
    pub means: Matrix,
    /// One `S × D` matrix per class; row `s` is `ṽ_{c,s}`.
    pub directions: Vec<Matrix>,
    pub subclasses: usize,
    /// Subclass temperature.
    pub beta: f64,
    pub seed: u64,
    /// Whether the directions were extracted after removing the teacher
    /// head's column space.
    pub nullspace: bool,
}

impl SubclassProjector {
    pub fn num_classes(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn head_split(&self) -> HeadSplit {
        HeadSplit::new(self.num_classes(), self.subclasses)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("beta", self.beta)?;
        if self.subclasses == 0 {
            return Err(Error::InvalidArgument("need at least one subclass".into()));
        }
        if self.directions.len() != self.num_classes() {
            return Err(Error::shape(
                "projector classes",
                self.num_classes(),
                self.directions.len(),
            ));
        }
        for d in &self.directions {
            if d.shape() != (self.subclasses, self.dim()) {
                return Err(Error::shape(
                    "projector directions",
                    format!("{}x{}", self.subclasses, self.dim()),
                    format!("{}x{}", d.rows(), d.cols()),
                ));
            }
        }
        Ok(())
    }

    /// Subclass logits `z_{c,s} = ṽ_{c,s} · (h − μ_c)` for one class.
    pub fn subclass_logits(&self, h: &[f64], class: usize, out: &mut [f64]) {
        let mu = self.means.row(class);
        let dirs = &self.directions[class];
        for (s, o) in out.iter_mut().enumerate() {
            *o = dirs
                .row(s)
                .iter()
                .zip(h.iter().zip(mu))
                .map(|(v, (x, m))| v * (x - m))
                .sum();
        }
    }
}

/// Extracts `s` subclass directions per class from the teacher's embeddings
/// of `data`.
///
/// For each class: embed, optionally project out `span(W)`, take the top-`s`
/// PCA directions, rotate them with a random orthogonal matrix seeded from
/// `(seed, class)`, measure the standard deviation along each rotated
/// direction and divide all of them by the largest one. `μ_c` is the class
/// mean of the raw embeddings.
pub fn fit_projector(
    teacher: &TeacherBundle,
    data: &LabeledDataset,
    s: usize,
    beta: f64,
    seed: u64,
    use_nullspace: bool,
) -> Result<SubclassProjector> {
    check_positive("beta", beta)?;
    let classes = teacher.num_classes();
    let d = teacher.embedding_dim();
    check_fit_inputs(teacher, data, s)?;
    if use_nullspace && d < s + classes {
        return Err(Error::InvalidArgument(format!(
            "null-space projection needs embedding dim >= subclasses + classes ({d} < {s} + {classes})"
        )));
    }
    let basis = if use_nullspace {
        linalg::orthonormalize_columns(teacher.head_weights())
    } else {
        Matrix::zeros(d, 0)
    };

    let embeddings = teacher.embed(&data.features)?;
    let mut means = Matrix::zeros(classes, d);
    let mut directions = Vec::with_capacity(classes);
    for (c, idx) in data.class_indices().iter().enumerate() {
        let raw = embeddings.select_rows(idx);
        means.row_mut(c).copy_from_slice(&raw.column_means());
        let projected = linalg::nullspace_project(&raw, &basis)?;

        let raw_var = total_variance(&raw);
        if total_variance(&projected) <= 1e-20 * raw_var || raw_var == 0.0 {
            return Err(Error::DegenerateClass { class: c });
        }
        let pca = linalg::top_pca(&projected, s).map_err(|e| match e {
            Error::DegenerateCovariance => Error::DegenerateClass { class: c },
            other => other,
        })?;

        let rotation = linalg::random_orthogonal(s, rotation_seed(seed, c));
        let mut rotated = rotation.matmul(&pca.directions)?;

        let stds = direction_stds(&projected, &rotated)?;
        let max_std = stds.iter().cloned().fold(0.0, f64::max);
        if !(max_std > 0.0) {
            return Err(Error::DegenerateClass { class: c });
        }
        rotated.scale(1.0 / max_std);
        directions.push(rotated);
    }
    Ok(SubclassProjector {
        means,
        directions,
        subclasses: s,
        beta,
        seed,
        nullspace: use_nullspace,
    })
}

pub(crate) fn check_fit_inputs(teacher: &TeacherBundle, data: &LabeledDataset, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::InvalidArgument("need at least one subclass".into()));
    }
    if data.num_classes != teacher.num_classes() {
        return Err(Error::shape(
            "fit_projector classes",
            teacher.num_classes(),
            data.num_classes,
        ));
    }
    if data.dim() != teacher.input_dim() {
        return Err(Error::shape(
            "fit_projector inputs",
            teacher.input_dim(),
            data.dim(),
        ));
    }
    for (c, n) in data.class_counts().into_iter().enumerate() {
        if n < s + 1 {
            return Err(Error::TooFewExamples {
                class: c,
                have: n,
                need: s + 1,
            });
        }
    }
    Ok(())
}

pub(crate) fn rotation_seed(seed: u64, class: usize) -> u64 {
    seed::derive_seed(seed, &["rotation".into(), class.into()])
}

fn total_variance(h: &Matrix) -> f64 {
    let (_, cov) = linalg::covariance(h);
    (0..cov.rows()).map(|i| cov[(i, i)]).sum()
}

/// Standard deviation (`1/N`) of the centered rows of `h` along each row of
/// `dirs`.
fn direction_stds(h: &Matrix, dirs: &Matrix) -> Result<Vec<f64>> {
    let (_, cov) = linalg::covariance(h);
    let cv = cov.matmul_nt(dirs)?;
    Ok((0..dirs.rows())
        .map(|s| dot(dirs.row(s), &cv.column(s)).max(0.0).sqrt())
        .collect())
}

/// Teacher subclass probabilities for a single embedding, class-major.
///
/// `p_c = softmax_c((w_c·h + b_c)/τ)` and
/// `p_{c,s} = p_c · softmax_s(ṽ_{c,s}·(h − μ_c) / β)`.
pub fn subsplit(
    h: &[f64],
    proj: &SubclassProjector,
    head_weights: &Matrix,
    head_biases: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    check_positive("tau", tau)?;
    proj.validate()?;
    let (d, classes) = head_weights.shape();
    if h.len() != d || proj.dim() != d {
        return Err(Error::shape("subsplit embedding", d, h.len()));
    }
    if head_biases.len() != classes || proj.num_classes() != classes {
        return Err(Error::shape("subsplit classes", classes, head_biases.len()));
    }
    let logits: Vec<f64> = (0..classes)
        .map(|c| {
            let w_dot_h: f64 = (0..d).map(|k| head_weights[(k, c)] * h[k]).sum();
            w_dot_h + head_biases[c]
        })
        .collect();
    let mut class_probs = vec![0.0; classes];
    nn::softmax_row(&logits, tau, &mut class_probs);
    let mut out = vec![0.0; classes * proj.subclasses];
    split_row(h, &class_probs, proj, &mut out);
    Ok(out)
}

fn split_row(h: &[f64], class_probs: &[f64], proj: &SubclassProjector, out: &mut [f64]) {
    let s = proj.subclasses;
    let mut z = vec![0.0; s];
    let mut q = vec![0.0; s];
    for (c, &pc) in class_probs.iter().enumerate() {
        proj.subclass_logits(h, c, &mut z);
        nn::softmax_row(&z, proj.beta, &mut q);
        for (o, &qs) in out[c * s..(c + 1) * s].iter_mut().zip(&q) {
            *o = pc * qs;
        }
    }
}

/// Teacher or student probabilities over `C·S` class-major subclasses.
#[derive(Debug, Clone, PartialEq)]
pub struct SubclassDistribution {
    pub probs: Matrix,
    pub split: HeadSplit,
}

impl SubclassDistribution {
    /// Per-class marginals `Σ_s p_{c,s}`.
    pub fn class_marginals(&self) -> Matrix {
        let s = self.split.per_class;
        Matrix::from_fn(self.probs.rows(), self.split.classes, |r, c| {
            self.probs.row(r)[c * s..(c + 1) * s].iter().sum()
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> SubclassDistribution {
        SubclassDistribution {
            probs: self.probs.select_rows(idx),
            split: self.split,
        }
    }
}

/// [`subsplit`] for a batch of embeddings, with class logits computed by the
/// teacher head.
pub fn subsplit_batch(
    embeddings: &Matrix,
    proj: &SubclassProjector,
    teacher: &TeacherBundle,
) -> Result<SubclassDistribution> {
    proj.validate()?;
    if proj.dim() != teacher.embedding_dim() || proj.num_classes() != teacher.num_classes() {
        return Err(Error::shape(
            "subsplit projector",
            format!(
                "{} classes in dim {}",
                teacher.num_classes(),
                teacher.embedding_dim()
            ),
            format!("{} classes in dim {}", proj.num_classes(), proj.dim()),
        ));
    }
    let class_probs = softmax_tempered(&teacher.head_logits(embeddings)?, teacher.tau())?;
    let split = proj.head_split();
    let mut probs = Matrix::zeros(embeddings.rows(), split.outputs());
    for r in 0..embeddings.rows() {
        split_row(embeddings.row(r), class_probs.row(r), proj, probs.row_mut(r));
    }
    Ok(SubclassDistribution { probs, split })
}

/// Teacher subclass targets for every row of `features`.
pub fn teacher_targets(
    teacher: &TeacherBundle,
    proj: &SubclassProjector,
    features: &Matrix,
) -> Result<SubclassDistribution> {
    subsplit_batch(&teacher.embed(features)?, proj, teacher)
}

/// `τ² · mean KL(teacher ‖ softmax(student/τ))` with its gradient on the
/// student logits.
pub fn lelp_loss(teacher_probs: &Matrix, student_logits: &Matrix, tau: f64) -> Result<LossGrad> {
    check_positive("tau", tau)?;
    if teacher_probs.shape() != student_logits.shape() {
        return Err(Error::shape(
            "lelp_loss",
            format!("{:?}", teacher_probs.shape()),
            format!("{:?}", student_logits.shape()),
        ));
    }
    let student = softmax_tempered(student_logits, tau)?;
    let mut kl = nn::kl_divergence(teacher_probs, &student)?;
    kl.loss *= tau * tau;
    // d/dz of τ²·KL(p‖softmax(z/τ)) = τ·(q − p)/n
    kl.grad.scale(tau);
    Ok(kl)
}

/// `−log Σ_s softmax(z)_{y,s}`: cross-entropy on coarse labels through the
/// summed subclass probabilities of a grouped head.
pub fn grouped_cross_entropy(labels: &[usize], logits: &Matrix, split: HeadSplit) -> Result<LossGrad> {
    if logits.cols() != split.outputs() {
        return Err(Error::shape(
            "grouped_cross_entropy",
            split.outputs(),
            logits.cols(),
        ));
    }
    if split.per_class == 1 {
        return nn::cross_entropy(labels, logits);
    }
    if labels.len() != logits.rows() {
        return Err(Error::shape(
            "grouped_cross_entropy labels",
            logits.rows(),
            labels.len(),
        ));
    }
    let n = labels.len();
    let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    let s = split.per_class;
    let q = softmax_tempered(logits, 1.0)?;
    let mut grad = q.clone();
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= split.classes {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {} classes",
                split.classes
            )));
        }
        let group = &q.row(r)[y * s..(y + 1) * s];
        let mass: f64 = group.iter().sum();
        total -= mass.ln();
        let g = grad.row_mut(r);
        for k in y * s..(y + 1) * s {
            g[k] -= q[(r, k)] / mass;
        }
        g.iter_mut().for_each(|v| *v *= inv_n);
    }
    Ok(LossGrad {
        loss: total * inv_n,
        grad,
    })
}

/// Coarse prediction for a grouped head: softmax at temperature one over all
/// outputs, sum each class's group, argmax with ties going to the lowest class.
pub fn predict_class(student_logits: &[f64], per_class: usize) -> usize {
    let per_class = per_class.max(1);
    let mut probs = vec![0.0; student_logits.len()];
    nn::softmax_row(student_logits, 1.0, &mut probs);
    let mut best = 0;
    let mut best_mass = f64::NEG_INFINITY;
    for (c, group) in probs.chunks(per_class).enumerate() {
        let mass: f64 = group.iter().sum();
        if mass > best_mass {
            best = c;
            best_mass = mass;
        }
    }
    best
}

/// Distillation temperature and the weight of the hard-label term in
/// `α·CE + (1 − α)·KD`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdParams {
    pub tau: f64,
    pub alpha: f64,
}

impl Default for KdParams {
    fn default() -> Self {
        KdParams { tau: 2.0, alpha: 0.0 }
    }
}

impl KdParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("tau", self.tau)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// KD against fixed per-example soft targets over a grouped head, plus the
/// optional hard-label term.
pub(crate) struct SoftTargetObjective<'a> {
    pub targets: Matrix,
    pub labels: &'a [usize],
    pub split: HeadSplit,
    pub params: KdParams,
}

impl SoftTargetObjective<'_> {
    pub(crate) fn loss(&self, indices: &[usize], logits: &Matrix) -> Result<LossGrad> {
        let p = self.targets.select_rows(indices);
        let mut kd = lelp_loss(&p, logits, self.params.tau)?;
        let alpha = self.params.alpha;
        if alpha > 0.0 {
            let labels: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
            let ce = grouped_cross_entropy(&labels, logits, self.split)?;
            kd.loss = alpha * ce.loss + (1.0 - alpha) * kd.loss;
            kd.grad.scale(1.0 - alpha);
            for (g, c) in kd.grad.as_mut_slice().iter_mut().zip(ce.grad.as_slice()) {
                *g += alpha * c;
            }
        }
        Ok(kd)
    }
}

impl Objective for SoftTargetObjective<'_> {
    fn batch_loss(&mut self, indices: &[usize], trace: &nn::ForwardTrace) -> Result<BatchLoss> {
        let lg = self.loss(indices, &trace.logits)?;
        Ok(BatchLoss::on_logits(lg.loss, lg.grad))
    }
}

pub(crate) fn check_student(student: &Mlp, split: HeadSplit, input_dim: usize) -> Result<()> {
    if student.head_split() != split {
        return Err(Error::shape(
            "student head",
            format!("{} classes x {}", split.classes, split.per_class),
            format!(
                "{} classes x {}",
                student.head_split().classes,
                student.head_split().per_class
            ),
        ));
    }
    if student.input_dim() != input_dim {
        return Err(Error::shape("student input", input_dim, student.input_dim()));
    }
    Ok(())
}

/// Trains a `C·S`-headed student on the teacher's subclass targets.
///
/// Teacher targets are computed once up front with the teacher frozen.
/// With `alpha > 0` the coarse labels enter through
/// [`grouped_cross_entropy`]. `eval` tracks coarse accuracy per epoch with the
/// summed-subclass rule.
pub fn train_student_lelp(
    student: Mlp,
    teacher: &TeacherBundle,
    proj: &SubclassProjector,
    data: &LabeledDataset,
    params: KdParams,
    config: &TrainConfig,
    eval: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    params.validate()?;
    let split = proj.head_split();
    check_student(&student, split, data.dim())?;
    let teacher = teacher.with_tau(params.tau)?;
    let targets = teacher_targets(&teacher, proj, &data.features)?;
    let mut objective = SoftTargetObjective {
        targets: targets.probs,
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

const PROJECTOR_MAGIC: &[u8; 8] = b"LELPPRJ\0";
const PROJECTOR_VERSION: u32 = 1;

/// Human-readable sidecar written next to a projector file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorMetadata {
    pub format_version: u32,
    pub classes: usize,
    pub subclasses: usize,
    pub dim: usize,
    pub beta: f64,
    pub seed: u64,
    pub nullspace: bool,
}

/// Binary layout (all little-endian): magic `LELPPRJ\0`, `u32` version,
/// `u64` C, S, D, `f64` β, `u64` seed, `u8` null-space flag, then the
/// `C × D` means and `C` blocks of `S × D` directions as `f64`.
/// The sidecar `<path>.meta.json` repeats the header fields.
pub fn save_projector(proj: &SubclassProjector, path: impl AsRef<Path>) -> Result<()> {
    proj.validate()?;
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(PROJECTOR_MAGIC);
    buf.extend_from_slice(&PROJECTOR_VERSION.to_le_bytes());
    for v in [proj.num_classes(), proj.subclasses, proj.dim()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    buf.extend_from_slice(&proj.beta.to_le_bytes());
    buf.extend_from_slice(&proj.seed.to_le_bytes());
    buf.push(proj.nullspace as u8);
    for v in proj.means.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for d in &proj.directions {
        for v in d.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;

    let meta = ProjectorMetadata {
        format_version: PROJECTOR_VERSION,
        classes: proj.num_classes(),
        subclasses: proj.subclasses,
        dim: proj.dim(),
        beta: proj.beta,
        seed: proj.seed,
        nullspace: proj.nullspace,
    };
    let meta_path = crate::checkpoint::sidecar_path(path);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))
}

pub fn load_projector(path: impl AsRef<Path>) -> Result<SubclassProjector> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = crate::checkpoint::ByteReader::new(&bytes);
    if r.take(8)? != PROJECTOR_MAGIC {
        return Err(Error::Checkpoint("not a projector file".into()));
    }
    let version = r.u32()?;
    if version != PROJECTOR_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported projector version {version}"
        )));
    }
    let classes = r.u64()? as usize;
    let subclasses = r.u64()? as usize;
    let dim = r.u64()? as usize;
    let beta = r.f64()?;
    let seed = r.u64()?;
    let nullspace = r.take(1)?[0] != 0;
    let means = Matrix::from_vec(classes, dim, r.f64s(classes * dim)?)?;
    let mut directions = Vec::with_capacity(classes);
    for _ in 0..classes {
        directions.push(Matrix::from_vec(subclasses, dim, r.f64s(subclasses * dim)?)?);
    }
    r.finish()?;
    let proj = SubclassProjector {
        means,
        directions,
        subclasses,
        beta,
        seed,
        nullspace,
    };
    proj.validate()?;
    Ok(proj)
}
