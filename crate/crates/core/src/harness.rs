//! Experiment harness: config parsing, the shared teacher, per-method and
//! per-seed student runs, and report output.
//!
//! Every random stream in a run is derived from `(config.seed, purpose,
//! seed value)`, so a run's result does not depend on which other methods
//! are on the roster or in what order they appear.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, DirectionMode, EmbedParams, ProjectionKind};
use crate::checkpoint;
use crate::data::{self, CsvSchema, LabeledDataset, Split, Standardizer, SyntheticSpec};
use crate::error::{Error, Result};
use crate::lelp::{self, KdParams, SubclassProjector, TeacherBundle};
use crate::nn::{HeadSplit, Mlp};
use crate::seed::{self, SeedPart};
use crate::train::{self, Predictor, TrainConfig, TrainCurves, TrainOutcome};

/// Bumped whenever the report layout changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub train: PathBuf,
    pub test: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: SourceKind,
    /// Standardize features with training-set statistics.
    pub standardize: bool,
    pub synthetic: SyntheticSpec,
    pub csv: Option<CsvSource>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: SourceKind::Synthetic,
            standardize: true,
            synthetic: SyntheticSpec::default(),
            csv: None,
        }
    }
}

/// Hidden widths plus optimizer settings for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![64, 64],
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

impl ModelConfig {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }

    fn layer_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(&self.hidden);
        dims.push(output);
        dims
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "{what} has an empty hidden layer"
            )));
        }
        self.train_config(0).validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Standard,
    Vanilla,
    Embed,
    Kmeans,
    Lelp,
    Oracle,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Standard => "standard",
            MethodKind::Vanilla => "vanilla",
            MethodKind::Embed => "embed",
            MethodKind::Kmeans => "kmeans",
            MethodKind::Lelp => "lelp",
            MethodKind::Oracle => "oracle",
        }
    }
}

/// One entry of the method roster. Parameters a kind does not use are
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    /// Report label; defaults to the kind.
    #[serde(default)]
    pub name: String,
    pub kind: MethodKind,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_subclasses")]
    pub subclasses: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub mode: DirectionMode,
    /// LELP mode only: remove the teacher head directions before PCA when
    /// the embedding is wide enough.
    #[serde(default = "default_nullspace")]
    pub nullspace: bool,
    #[serde(default)]
    pub projection: ProjectionKind,
}

fn default_tau() -> f64 {
    2.0
}
fn default_beta() -> f64 {
    0.5
}
fn default_subclasses() -> usize {
    10
}
fn default_k() -> usize {
    5
}
fn default_lambda() -> f64 {
    1.0
}
fn default_nullspace() -> bool {
    true
}

impl MethodConfig {
    pub fn new(kind: MethodKind) -> Self {
        MethodConfig {
            name: kind.as_str().into(),
            kind,
            tau: default_tau(),
            beta: default_beta(),
            subclasses: default_subclasses(),
            k: default_k(),
            lambda: default_lambda(),
            alpha: 0.0,
            mode: DirectionMode::Lelp,
            nullspace: true,
            projection: ProjectionKind::Learned,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    pub fn label(&self) -> &str {
        if self.name.is_empty() {
            self.kind.as_str()
        } else {
            &self.name
        }
    }

    fn kd(&self) -> KdParams {
        KdParams {
            tau: self.tau,
            alpha: self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("method {}: {m}", self.label())));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.subclasses == 0 {
            return bad("subclasses must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemiConfig {
    pub enabled: bool,
    /// Number of labelled training examples; takes precedence over
    /// `labeled_fraction`.
    pub labeled_count: Option<usize>,
    pub labeled_fraction: f64,
}

impl Default for SemiConfig {
    fn default() -> Self {
        SemiConfig {
            enabled: false,
            labeled_count: None,
            labeled_fraction: 0.1,
        }
    }
}

impl SemiConfig {
    pub fn count_for(&self, n: usize) -> usize {
        self.labeled_count
            .unwrap_or_else(|| (self.labeled_fraction * n as f64).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Drives the teacher and every derived per-run stream.
    pub seed: u64,
    /// One student run per value, per method.
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub teacher: ModelConfig,
    pub student: ModelConfig,
    pub methods: Vec<MethodConfig>,
    pub semi: SemiConfig,
    /// Distillation-set fractions for the data-efficiency sweep.
    pub fractions: Vec<f64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::synth_bin()
    }
}

impl ExperimentConfig {
    /// The default synthetic binary benchmark with the full method roster.
    pub fn synth_bin() -> Self {
        ExperimentConfig {
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            data: DataConfig {
                synthetic: SyntheticSpec {
                    dim: 3,
                    ..SyntheticSpec::default()
                },
                ..DataConfig::default()
            },
            teacher: ModelConfig {
                hidden: vec![64, 64],
                epochs: 30,
                ..ModelConfig::default()
            },
            // A linear student cannot fit ten subclusters in three dimensions
            // with one logit per class, which leaves room for subclass heads.
            student: ModelConfig {
                hidden: vec![],
                learning_rate: 1e-2,
                ..ModelConfig::default()
            },
            methods: vec![
                MethodConfig::new(MethodKind::Standard),
                MethodConfig::new(MethodKind::Vanilla),
                MethodConfig::new(MethodKind::Embed),
                MethodConfig::new(MethodKind::Kmeans),
                MethodConfig::new(MethodKind::Lelp),
                MethodConfig {
                    mode: DirectionMode::Random,
                    ..MethodConfig::new(MethodKind::Lelp).named("lelp-random")
                },
                MethodConfig::new(MethodKind::Oracle),
            ],
            semi: SemiConfig::default(),
            fractions: vec![0.25, 0.5, 1.0],
            out: PathBuf::from("runs/synth-bin"),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text)?;
        for m in &mut config.methods {
            if m.name.is_empty() {
                m.name = m.kind.as_str().into();
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML config; relative CSV paths resolve against the config's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if let (Some(csv), Some(dir)) = (config.data.csv.as_mut(), path.parent()) {
            for p in [&mut csv.train, &mut csv.test] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidArgument(format!("cannot encode config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("at least one method is required".into()));
        }
        self.teacher.validate("teacher")?;
        self.student.validate("student")?;
        let mut names = Vec::new();
        for m in &self.methods {
            m.validate()?;
            if names.contains(&m.label()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate method name {}",
                    m.label()
                )));
            }
            names.push(m.label());
        }
        for &f in &self.fractions {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!("fraction {f} is outside (0, 1]")));
            }
        }
        match self.data.source {
            SourceKind::Synthetic => self.data.synthetic.validate(),
            SourceKind::Csv if self.data.csv.is_none() => Err(Error::InvalidArgument(
                "csv source selected but [data.csv] is missing".into(),
            )),
            SourceKind::Csv => Ok(()),
        }
    }
}

/// Loads train and test sets according to `config`, standardized with
/// training statistics when requested.
pub fn load_data(config: &DataConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = match config.source {
        SourceKind::Synthetic => data::generate_synthetic(&config.synthetic)?,
        SourceKind::Csv => {
            let csv = config
                .csv
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("missing [data.csv] section".into()))?;
            let mut train = data::load_csv(&csv.train, &csv.schema)?;
            let mut test = data::load_csv(&csv.test, &csv.schema)?;
            if train.num_classes != test.num_classes {
                let schema = CsvSchema {
                    num_classes: Some(train.num_classes.max(test.num_classes)),
                    ..csv.schema.clone()
                };
                train = data::load_csv(&csv.train, &schema)?;
                test = data::load_csv(&csv.test, &schema)?;
            }
            if train.dim() != test.dim() {
                return Err(Error::shape("test features", train.dim(), test.dim()));
            }
            (train.with_split(Split::Train), test.with_split(Split::Test))
        }
    };
    if !config.standardize {
        return Ok((train, test));
    }
    let st = Standardizer::fit(&train.features);
    Ok((st.apply_dataset(&train)?, st.apply_dataset(&test)?))
}

fn run_seed(config: &ExperimentConfig, purpose: &str, seed: u64) -> u64 {
    seed::derive_seed(config.seed, &[SeedPart::Label(purpose), SeedPart::Index(seed)])
}

/// Trains the shared teacher with cross-entropy on `train`.
pub fn train_teacher(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<(TeacherBundle, f64)> {
    let dims = config.teacher.layer_dims(train.dim(), train.num_classes);
    let init = seed::derive_seed(config.seed, &["teacher".into()]);
    let model = Mlp::new(&dims, HeadSplit::plain(train.num_classes), init)?;
    let tc = config
        .teacher
        .train_config(seed::derive_seed(config.seed, &["teacher-shuffle".into()]));
    let out = baselines::train_standard(model, train, &tc, None)?;
    let acc = train::accuracy(
        &out.model,
        &test.features,
        &test.labels,
        &Predictor::Grouped(HeadSplit::plain(train.num_classes)),
    )?;
    Ok((TeacherBundle::new(out.model, 1.0)?, acc))
}

/// Outcome of one (method, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// Final coarse test accuracy; absent when the run failed.
    pub accuracy: Option<f64>,
    pub error: Option<String>,
    /// Per-epoch curves only; step losses are dropped to keep reports small.
    pub curves: TrainCurves,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub params: MethodConfig,
    pub runs: Vec<SeedRun>,
    /// Mean accuracy over successful runs.
    pub mean: Option<f64>,
    /// Population standard deviation over successful runs.
    pub std: Option<f64>,
    pub failed: bool,
}

impl MethodReport {
    fn from_runs(params: &MethodConfig, runs: Vec<SeedRun>) -> Self {
        let accs: Vec<f64> = runs.iter().filter_map(|r| r.accuracy).collect();
        let failed = accs.len() != runs.len();
        let (mean, std) = match mean_std(&accs) {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        MethodReport {
            name: params.label().into(),
            params: params.clone(),
            runs,
            mean,
            std,
            failed,
        }
    }
}

/// Mean and population standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    if values.iter().all(|&v| v == values[0]) {
        return Some((values[0], 0.0));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Run,
    Sweep,
    Semi,
}

/// Results of one roster pass over one distillation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub kind: RunKind,
    pub teacher_accuracy: f64,
    /// Distillation-set fraction in a sweep.
    pub fraction: Option<f64>,
    /// Labelled-set size in a semi-supervised run.
    pub labeled_count: Option<usize>,
    pub distill_size: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodReport>,
}

impl RunReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Copy with every wall-time field zeroed.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        for m in &mut r.methods {
            for run in &mut m.runs {
                run.wall_time_secs = 0.0;
            }
        }
        r
    }
}

/// What a report file holds: one report per roster pass plus the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub reports: Vec<RunReport>,
}

impl ReportBundle {
    pub fn new(config: &ExperimentConfig, reports: Vec<RunReport>) -> Self {
        ReportBundle {
            schema_version: REPORT_SCHEMA_VERSION,
            config: config.clone(),
            reports,
        }
    }

    pub fn without_timing(&self) -> ReportBundle {
        ReportBundle {
            reports: self.reports.iter().map(RunReport::without_timing).collect(),
            ..self.clone()
        }
    }
}

/// Data one (method, seed) run trains on.
struct Stage<'a> {
    /// Students, projectors and clusters use this set.
    distill: &'a LabeledDataset,
    /// The oracle needs fine labels, which pseudo-labelled rows lack.
    oracle: &'a LabeledDataset,
}

/// A prepared experiment: loaded data and a trained teacher, shared by every
/// method and seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub teacher: TeacherBundle,
    pub teacher_accuracy: f64,
}

impl Experiment {
    /// Validates the config, loads data and trains the teacher.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (train, test) = load_data(&config.data)?;
        check_roster(config, &train)?;
        let (teacher, teacher_accuracy) = train_teacher(config, &train, &test)?;
        Ok(Experiment {
            config: config.clone(),
            train,
            test,
            teacher,
            teacher_accuracy,
        })
    }

    /// Runs the roster on the full training set.
    pub fn run(&self) -> Result<RunReport> {
        let methods = self.roster(None, |_| Ok(self.train.clone()))?;
        Ok(self.report(RunKind::Run, None, None, self.train.len(), methods))
    }

    /// Runs the roster on a seeded stratified subsample of the training set
    /// for each fraction. The subsample is drawn per student seed.
    pub fn sweep(&self, fractions: &[f64]) -> Result<Vec<RunReport>> {
        let mut out = Vec::with_capacity(fractions.len());
        for &fraction in fractions {
            // validates the fraction before any training
            data::subsample(&self.train, fraction, 0)?;
            let methods = self.roster(None, |s| {
                let seed = seed::derive_seed(
                    self.config.seed,
                    &["subsample".into(), s.into(), fraction.to_bits().into()],
                );
                data::subsample(&self.train, fraction, seed)
            })?;
            let size = (fraction * self.train.len() as f64).round() as usize;
            out.push(self.report(RunKind::Sweep, Some(fraction), None, size, methods));
        }
        Ok(out)
    }

    fn report(
        &self,
        kind: RunKind,
        fraction: Option<f64>,
        labeled_count: Option<usize>,
        distill_size: usize,
        methods: Vec<MethodReport>,
    ) -> RunReport {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            kind,
            teacher_accuracy: self.teacher_accuracy,
            fraction,
            labeled_count,
            distill_size,
            seeds: self.config.seeds.clone(),
            methods,
        }
    }

    /// `distill_for(seed)` yields the distillation set of one seed. The
    /// oracle trains on `oracle` when given, otherwise on that same set.
    fn roster<F>(&self, oracle: Option<&LabeledDataset>, distill_for: F) -> Result<Vec<MethodReport>>
    where
        F: Fn(u64) -> Result<LabeledDataset>,
    {
        let mut reports = Vec::with_capacity(self.config.methods.len());
        for method in &self.config.methods {
            let mut runs = Vec::with_capacity(self.config.seeds.len());
            for &s in &self.config.seeds {
                let distill = distill_for(s)?;
                let stage = Stage {
                    distill: &distill,
                    oracle: oracle.unwrap_or(&distill),
                };
                runs.push(self.run_method(method, s, &stage)?);
            }
            reports.push(MethodReport::from_runs(method, runs));
        }
        Ok(reports)
    }

    /// One student run. Projector and clustering failures mark the run
    /// failed; any other error aborts.
    fn run_method(&self, method: &MethodConfig, s: u64, stage: &Stage<'_>) -> Result<SeedRun> {
        let started = Instant::now();
        let cfg = &self.config;
        let classes = stage.distill.num_classes;
        let input = stage.distill.dim();
        let tc = cfg.student.train_config(run_seed(cfg, "shuffle", s));
        let init = run_seed(cfg, "student", s);
        let student =
            |out: usize, split: HeadSplit| Mlp::new(&cfg.student.layer_dims(input, out), split, init);
        let eval = Some(&self.test);

        let outcome: std::result::Result<TrainOutcome, Error> = match method.kind {
            MethodKind::Standard => baselines::train_standard(
                student(classes, HeadSplit::plain(classes))?,
                stage.distill,
                &tc,
                eval,
            ),
            MethodKind::Vanilla => baselines::train_vanilla_kd(
                student(classes, HeadSplit::plain(classes))?,
                &self.teacher,
                stage.distill,
                method.kd(),
                &tc,
                eval,
            ),
            MethodKind::Embed => baselines::train_embedding_distill(
                student(classes, HeadSplit::plain(classes))?,
                &self.teacher,
                stage.distill,
                method.kd(),
                EmbedParams {
                    lambda: method.lambda,
                    projection: method.projection,
                },
                &tc,
                eval,
            ),
            MethodKind::Oracle => {
                let fine = stage.oracle.num_fine_classes().unwrap_or(0);
                baselines::train_oracle(student(fine, HeadSplit::plain(fine))?, stage.oracle, &tc, eval)
            }
            MethodKind::Kmeans => {
                let k = method.k;
                match baselines::cluster_teacher_embeddings(
                    &self.teacher,
                    stage.distill,
                    k,
                    run_seed(cfg, "kmeans", s),
                )
                .and_then(|a| a.example_clusters(stage.distill))
                {
                    Ok(clusters) => baselines::train_cluster_student(
                        student(classes * k, HeadSplit::new(classes, k))?,
                        stage.distill,
                        &clusters,
                        k,
                        &tc,
                        eval,
                    ),
                    Err(e) => Err(e),
                }
            }
            MethodKind::Lelp => {
                let sc = method.subclasses;
                match self.projector(method, stage.distill, s) {
                    Ok(proj) => lelp::train_student_lelp(
                        student(classes * sc, HeadSplit::new(classes, sc))?,
                        &self.teacher,
                        &proj,
                        stage.distill,
                        method.kd(),
                        &tc,
                        eval,
                    ),
                    Err(e) => Err(e),
                }
            }
        };
        let wall_time_secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(o) => Ok(SeedRun {
                seed: s,
                accuracy: o.final_accuracy,
                error: None,
                curves: TrainCurves {
                    step_loss: Vec::new(),
                    ..o.curves
                },
                wall_time_secs,
            }),
            Err(e) if recoverable(&e) => Ok(SeedRun {
                seed: s,
                accuracy: None,
                error: Some(e.to_string()),
                curves: TrainCurves::default(),
                wall_time_secs,
            }),
            Err(e) => Err(e),
        }
    }

    /// Saves the teacher checkpoint and, per LELP method, the projector of
    /// the first seed.
    pub fn save_artifacts(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let teacher_seed = seed::derive_seed(self.config.seed, &["teacher".into()]);
        checkpoint::save_mlp(self.teacher.model(), teacher_seed, dir.join("teacher.bin"))?;
        let s = self.config.seeds[0];
        for m in self.config.methods.iter().filter(|m| m.kind == MethodKind::Lelp) {
            if let Ok(proj) = self.projector(m, &self.train, s) {
                lelp::save_projector(&proj, dir.join(format!("projector-{}.bin", m.label())))?;
            }
        }
        Ok(())
    }
}

impl Experiment {
    fn projector(&self, method: &MethodConfig, data: &LabeledDataset, s: u64) -> Result<SubclassProjector> {
        let seed = run_seed(&self.config, "projector", s);
        let (sc, beta) = (method.subclasses, method.beta);
        if method.mode == DirectionMode::Lelp && !method.nullspace {
            return lelp::fit_projector(&self.teacher, data, sc, beta, seed, false);
        }
        baselines::make_directions(method.mode, &self.teacher, data, sc, beta, seed)
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateClass { .. } | Error::DegenerateCovariance | Error::TooFewExamples { .. }
    )
}

/// Checks that the data can feed every method before anything trains.
fn check_roster(config: &ExperimentConfig, train: &LabeledDataset) -> Result<()> {
    for m in &config.methods {
        if m.kind == MethodKind::Oracle && train.fine_labels.is_none() {
            return Err(Error::InvalidArgument(format!(
                "method {} needs fine labels, which the dataset lacks",
                m.label()
            )));
        }
        if m.kind == MethodKind::Lelp && m.mode == DirectionMode::Identity {
            let d = *config.teacher.hidden.last().unwrap();
            if m.subclasses != d {
                return Err(Error::InvalidArgument(format!(
                    "method {}: identity directions need subclasses = teacher embedding width {d}",
                    m.label()
                )));
            }
        }
    }
    Ok(())
}

/// Trains the teacher once and runs every method over every seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    Experiment::prepare(config)?.run()
}

/// One report per fraction, all sharing a teacher trained on the full
/// training set.
pub fn data_efficiency_sweep(config: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<RunReport>> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no fractions given".into()));
    }
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidArgument(format!("fraction {f} is outside (0, 1]")));
        }
    }
    Experiment::prepare(config)?.sweep(fractions)
}

/// Semi-supervised distillation: the teacher sees only a stratified labelled
/// subset and pseudo-labels the rest.
///
/// Students train on the labelled rows followed by the pool, whose coarse
/// labels are the teacher's argmax. Distillation methods consume the
/// teacher's soft outputs on every row. The oracle trains on the labelled
/// subset alone.
pub fn semi_supervised_run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    if !config.semi.enabled {
        return Err(Error::InvalidArgument(
            "semi-supervised settings are not enabled".into(),
        ));
    }
    let (full, test) = load_data(&config.data)?;
    check_roster(config, &full)?;
    let count = config.semi.count_for(full.len());
    if count > full.len() {
        return Err(Error::InvalidArgument(format!(
            "labeled count {count} exceeds the {} training examples",
            full.len()
        )));
    }
    let split_seed = seed::derive_seed(config.seed, &["semi-split".into()]);
    let (labeled, pool) = data::semi_split(&full, count, split_seed)?;
    let (teacher, teacher_accuracy) = train_teacher(config, &labeled, &test)?;
    let pseudo = data::pseudo_label(&teacher, &pool)?;

    let distill = if pool.is_empty() {
        labeled.clone()
    } else {
        let features = labeled.features.vstack(&pool.features)?;
        let mut labels = labeled.labels.clone();
        labels.extend(pseudo.hard_labels());
        LabeledDataset::new(features, labels, full.num_classes)?
    };
    let exp = Experiment {
        config: config.clone(),
        train: labeled.clone(),
        test,
        teacher,
        teacher_accuracy,
    };
    let methods = exp.roster(Some(&labeled), |_| Ok(distill.clone()))?;
    Ok(exp.report(RunKind::Semi, None, Some(count), distill.len(), methods))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format {other}; expected table, json or csv"
            ))),
        }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v))
}

/// Aligned plain-text comparison, one row per method per report.
pub fn render_table(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    for r in &bundle.reports {
        let mut title = format!("{:?}", r.kind).to_lowercase();
        if let Some(f) = r.fraction {
            let _ = write!(title, " fraction={f}");
        }
        if let Some(c) = r.labeled_count {
            let _ = write!(title, " labeled={c}");
        }
        let _ = writeln!(
            out,
            "{title}  distill_size={}  teacher={}%  seeds={}",
            r.distill_size,
            pct(Some(r.teacher_accuracy)),
            r.seeds.len()
        );
        let width = r.methods.iter().map(|m| m.name.len()).max().unwrap_or(6).max(6);
        let _ = writeln!(
            out,
            "{:<width$}  {:<8}  {:>16}  {:>5}",
            "method", "kind", "accuracy (%)", "ok"
        );
        for m in &r.methods {
            let acc = match (m.mean, m.std) {
                (Some(mean), Some(std)) => format!("{} ± {}", pct(Some(mean)), pct(Some(std))),
                _ => "failed".into(),
            };
            let ok = m.runs.iter().filter(|x| x.accuracy.is_some()).count();
            let _ = writeln!(
                out,
                "{:<width$}  {:<8}  {:>16}  {:>5}",
                m.name,
                m.params.kind.as_str(),
                acc,
                format!("{ok}/{}", m.runs.len())
            );
        }
        out.push('\n');
    }
    out
}

/// Per-seed rows: one line per (report, method, seed).
pub fn render_csv(bundle: &ReportBundle) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind",
        "fraction",
        "labeled_count",
        "method",
        "method_kind",
        "seed",
        "accuracy",
        "error",
        "wall_time_secs",
        "teacher_accuracy",
    ])?;
    for r in &bundle.reports {
        for m in &r.methods {
            for run in &m.runs {
                w.write_record([
                    format!("{:?}", r.kind).to_lowercase(),
                    r.fraction.map_or(String::new(), |f| f.to_string()),
                    r.labeled_count.map_or(String::new(), |c| c.to_string()),
                    m.name.clone(),
                    m.params.kind.as_str().into(),
                    run.seed.to_string(),
                    run.accuracy.map_or(String::new(), |a| a.to_string()),
                    run.error.clone().unwrap_or_default(),
                    run.wall_time_secs.to_string(),
                    r.teacher_accuracy.to_string(),
                ])?;
            }
        }
    }
    finish_csv(w)
}

/// Per-epoch curves: one line per (report, method, seed, epoch).
pub fn render_curves_csv(bundle: &ReportBundle) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["report", "method", "seed", "epoch", "loss", "accuracy"])?;
    for (i, r) in bundle.reports.iter().enumerate() {
        for m in &r.methods {
            for run in &m.runs {
                for (e, loss) in run.curves.epoch_loss.iter().enumerate() {
                    let acc = run
                        .curves
                        .epoch_accuracy
                        .get(e)
                        .map_or(String::new(), |a| a.to_string());
                    w.write_record([
                        i.to_string(),
                        m.name.clone(),
                        run.seed.to_string(),
                        e.to_string(),
                        loss.to_string(),
                        acc,
                    ])?;
                }
            }
        }
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))
}

pub fn render_json(bundle: &ReportBundle) -> Result<String> {
    Ok(serde_json::to_string_pretty(bundle)?)
}

pub const REPORT_FILE: &str = "report.json";

/// Writes the report in one format into `dir`, returning the paths written.
/// CSV output is split into `report.csv` and `curves.csv`.
pub fn emit_report(
    bundle: &ReportBundle,
    format: ReportFormat,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = match format {
        ReportFormat::Table => vec![("report.txt", render_table(bundle))],
        ReportFormat::Json => vec![(REPORT_FILE, render_json(bundle)?)],
        ReportFormat::Csv => vec![
            ("report.csv", render_csv(bundle)?),
            ("curves.csv", render_curves_csv(bundle)?),
        ],
    };
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads `report.json` from a run directory.
pub fn load_report(dir: impl AsRef<Path>) -> Result<ReportBundle> {
    let path = dir.as_ref().join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bundle: ReportBundle = serde_json::from_str(&text)?;
    if bundle.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::InvalidArgument(format!(
            "report schema version {} is not supported (expected {REPORT_SCHEMA_VERSION})",
            bundle.schema_version
        )));
    }
    Ok(bundle)
}
