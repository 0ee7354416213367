//! Command-line surface: data generation, training, sampling, evaluation,
//! verification suites and parameter sweeps.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{gen_toy_scene, DatasetSpec, GraspScene};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_pair, EvalReport, PairScore, DEFAULT_DELTA};
use crate::net::checkpoint::{self, Checkpoint};
use crate::net::gradcheck::check_gradients;
use crate::net::{prompt_for, DenoiserParams, LossWeights, ModelConfig, PointScaling, SceneGroups, SceneInput, TrainItem, Vocabulary};
use crate::prop1::{random_suite, verify_proposition1, DiscreteToy};
use crate::rng::derive;
use crate::sampler::{precompute, sample_grasps, GuidanceConfig, SampleReport, SamplerKind};
use crate::schedule::NoiseSchedule;
use crate::se3::{exp_map, log_map, read_grasps, write_grasps, GraspPose, GripperModel};
use crate::train::{vocabulary_of, RunConfig, Trainer, METRICS_HEADER};

/// Tolerances of the verification suites.
pub const PROP1_TOL: f64 = 1e-10;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_STEP: f64 = 1e-4;
pub const ROUNDTRIP_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "negrasp", version, about = "Language-conditioned grasp diffusion with negative-prompt guidance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate toy scenes with analytic ground-truth grasps.
    Gen(GenArgs),
    /// Train the denoiser on a directory of scene files.
    Train(TrainArgs),
    /// Sample grasps for one scene and prompt.
    Sample(SampleArgs),
    /// Score grasp files against their scenes.
    Eval(EvalArgs),
    /// Run the built-in verification suites.
    Verify(VerifyArgs),
    /// Sweep one parameter and tabulate the metrics.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dataset spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, env = "NEGRASP_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config (JSON with `train`, `schedule` and `model` sections).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint, keeping its optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Override the epoch count of the config.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, env = "NEGRASP_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub prompt: String,
    #[arg(long, default_value_t = 0.2)]
    pub w: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = SamplerArg::Ddpm)]
    pub sampler: SamplerArg,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, env = "NEGRASP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Ddpm,
    Ddim,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Ddpm => SamplerKind::Ddpm,
            SamplerArg::Ddim => SamplerKind::Ddim,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Grasp files written by `sample`.
    #[arg(long, num_args = 1.., required = true)]
    pub grasps: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    pub scenes: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Report path; the per-pair CSV goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Prop1,
    Gradients,
    Roundtrip,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, env = "NEGRASP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Run the factorisation check on a toy whose negative prompt depends
    /// on the scene.
    #[arg(long)]
    pub planted_dependence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    W,
    Zeta,
    Steps,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values; defaults to the shipped preset.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Trained checkpoint (w and steps sweeps).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Run config and data directory (zeta sweep trains one model per value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Scenes to evaluate on.
    #[arg(long, num_args = 1.., required = true)]
    pub scenes: Vec<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, env = "NEGRASP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// One line of `manifest.jsonl`, appended by every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub version: String,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.into(),
            config,
            seed,
            artifacts: Vec::new(),
            started_unix: now(),
            finished_unix: 0.0,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// Appends this manifest as one JSON line to `dir/manifest.jsonl`.
    pub fn append(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = now();
        let path = dir.join("manifest.jsonl");
        let line = serde_json::to_string(&self).map_err(|e| Error::json(&path, e))?;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

pub fn scene_file_name(index: usize) -> String {
    format!("scene_{index:04}.json")
}

/// Scene id of a scene file: its file stem.
pub fn scene_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_gen(args: &GenArgs) -> Result<Vec<PathBuf>> {
    let spec = DatasetSpec::load(&args.spec)?;
    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("gen", to_value(&spec), args.seed);
    for i in 0..args.count {
        let scene = gen_toy_scene(&spec, derive(args.seed, &[i as u64]))?;
        let path = args.out.join(scene_file_name(i));
        scene.save(&path)?;
        manifest.artifacts.push(path);
    }
    let out = manifest.artifacts.clone();
    manifest.append(&args.out)?;
    Ok(out)
}

/// Scene files of a directory in name order.
pub fn list_scenes(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "manifest.json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("{} contains no scene files", dir.display())));
    }
    Ok(files)
}

pub fn load_scenes(dir: &Path) -> Result<Vec<GraspScene>> {
    list_scenes(dir)?.iter().map(|p| GraspScene::load(p)).collect()
}

/// Trains per the run config. Writes the checkpoint and a tab-separated
/// metrics log next to it (`<out>.metrics.tsv`).
pub fn train_run(config: &RunConfig, data: &[GraspScene], out: &Path, resume: Option<&Path>) -> Result<Checkpoint> {
    let schedule = config.schedule.build()?;
    let (params, adam, epochs_done) = match resume {
        Some(path) => {
            let ck = checkpoint::load(path)?;
            if ck.params.config != config.model {
                return Err(Error::invalid("resume checkpoint was trained with a different model config"));
            }
            (ck.params, ck.optimizer, ck.epochs_done)
        }
        None => (DenoiserParams::init(config.model, vocabulary_of(data), config.train.seed)?, None, 0),
    };
    let mut trainer = Trainer::new(params, adam, config.train.clone(), schedule, data, epochs_done)?;
    let log_path = out.with_extension("metrics.tsv");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    writeln!(log, "{METRICS_HEADER}").map_err(|e| Error::io(&log_path, e))?;
    let result = trainer.run(&mut log);
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    if let Err(Error::NumericFailure { batch_index }) = result {
        eprintln!("numeric failure after step {} at batch index {batch_index}", trainer.steps_done);
    }
    result?;
    let ck = Checkpoint {
        params: trainer.params,
        schedule: config.schedule,
        train: Some(config.train.clone()),
        seed: config.train.seed,
        epochs_done: trainer.epochs_done,
        optimizer: Some(trainer.adam),
    };
    checkpoint::save(out, &ck)?;
    Ok(ck)
}

pub fn cmd_train(args: &TrainArgs) -> Result<Checkpoint> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(s) = args.seed {
        config.train.seed = s;
    }
    if !args.data.is_dir() {
        return Err(Error::invalid(format!("data directory {} does not exist", args.data.display())));
    }
    let data = load_scenes(&args.data)?;
    let dir = parent_dir(&args.out);
    ensure_dir(&dir)?;
    let mut manifest = RunManifest::new("train", to_value(&config), config.train.seed);
    let ck = train_run(&config, &data, &args.out, args.resume.as_deref())?;
    manifest.artifacts = vec![args.out.clone(), checkpoint::sidecar_path(&args.out), args.out.with_extension("metrics.tsv")];
    manifest.append(&dir)?;
    Ok(ck)
}

/// Report written next to a grasp file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub scene: String,
    pub prompt: String,
    pub report: SampleReport,
}

pub fn report_path(grasp_file: &Path) -> PathBuf {
    grasp_file.with_extension("report.json")
}

pub fn sample_scene(
    ck: &Checkpoint,
    scene: &GraspScene,
    prompt: &str,
    config: &GuidanceConfig,
) -> Result<(Vec<GraspPose>, SampleReport)> {
    let schedule = ck.schedule.build()?;
    config.validate(&schedule)?;
    let cache = precompute(&ck.params, &scene.cloud, prompt)?;
    sample_grasps(&ck.params, &schedule, &cache, config)
}

pub fn cmd_sample(args: &SampleArgs) -> Result<Vec<GraspPose>> {
    let ck = checkpoint::load(&args.checkpoint)?;
    let scene = GraspScene::load(&args.scene)?;
    let config = GuidanceConfig { w: args.w, steps: args.steps, sampler: args.sampler.into(), num_grasps: args.n, seed: args.seed };
    let (grasps, report) = sample_scene(&ck, &scene, &args.prompt, &config)?;
    let dir = parent_dir(&args.out);
    ensure_dir(&dir)?;
    write_grasps(&args.out, &grasps)?;
    let record = SampleRecord { scene: scene_id(&args.scene), prompt: args.prompt.clone(), report };
    let rp = report_path(&args.out);
    let text = serde_json::to_string_pretty(&record).map_err(|e| Error::json(&rp, e))?;
    std::fs::write(&rp, text).map_err(|e| Error::io(&rp, e))?;
    let mut manifest = RunManifest::new("sample", to_value(&config), args.seed);
    manifest.artifacts = vec![args.out.clone(), rp];
    manifest.append(&dir)?;
    Ok(grasps)
}

pub fn csv_path(report: &Path) -> PathBuf {
    report.with_extension("csv")
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let gripper = GripperModel::default();
    let mut scenes = std::collections::BTreeMap::new();
    for p in &args.scenes {
        scenes.insert(scene_id(p), GraspScene::load(p)?);
    }
    let mut pairs = Vec::new();
    for g in &args.grasps {
        let rp = report_path(g);
        let text = std::fs::read_to_string(&rp).map_err(|e| Error::io(&rp, e))?;
        let record: SampleRecord = serde_json::from_str(&text).map_err(|e| Error::json(&rp, e))?;
        let scene = scenes
            .get(&record.scene)
            .ok_or_else(|| Error::invalid(format!("no scene file with id {} for {}", record.scene, g.display())))?;
        let noun = scene_noun(&record.prompt, scene)?;
        let detected = read_grasps(g)?;
        pairs.push(evaluate_pair(&record.scene, scene, &noun, &detected, args.delta, &gripper)?);
    }
    let report = EvalReport::aggregate(pairs, args.delta, gripper)?;
    let dir = parent_dir(&args.out);
    ensure_dir(&dir)?;
    report.write(&args.out, &csv_path(&args.out))?;
    let mut manifest = RunManifest::new("eval", serde_json::json!({ "delta": args.delta }), 0);
    manifest.artifacts = vec![args.out.clone(), csv_path(&args.out)];
    manifest.append(&dir)?;
    Ok(report)
}

/// Object named by a prompt, checked against the scene.
fn scene_noun(prompt: &str, scene: &GraspScene) -> Result<String> {
    let names: Vec<String> = scene.objects.iter().map(|o| o.name.clone()).collect();
    let vocab = Vocabulary::new(names.iter().map(String::as_str));
    match vocab.parse(prompt)? {
        crate::net::TextToken::Noun(i) => Ok(vocab.nouns()[i].clone()),
        crate::net::TextToken::Null => Err(Error::invalid("cannot evaluate the null prompt")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub fn suite_prop1(seed: u64, planted: bool) -> Result<SuiteResult> {
    if planted {
        let r = verify_proposition1(&DiscreteToy::planted_dependence(seed)?)?;
        return Ok(SuiteResult {
            name: "prop1 (planted dependence)".into(),
            passed: r.passes(PROP1_TOL),
            detail: format!("max relative error {:.3e}", r.max_rel_error),
        });
    }
    let r = random_suite(seed, 50)?;
    let broken = r
        .first_broken_line(1e-9)
        .map(|l| format!("; derivation line {} ({}) varies with g by {:.3e}", l.line, l.justification, l.deviation))
        .unwrap_or_default();
    Ok(SuiteResult {
        name: "prop1".into(),
        passed: r.passes(PROP1_TOL),
        detail: format!("worst max relative error over 50 toys {:.3e}{broken}", r.max_rel_error),
    })
}

/// Small scene, four training items and seeded parameters for gradient
/// checks.
pub struct GradientFixture {
    pub params: DenoiserParams,
    pub schedule: NoiseSchedule,
    pub groups: Vec<SceneGroups>,
}

impl GradientFixture {
    pub fn new(seed: u64, model: ModelConfig) -> Result<Self> {
        let spec = DatasetSpec { points_per_object: 24, ground_points: 16, grasps_per_object: 2, ..DatasetSpec::two_object_toy() };
        let scenes: Vec<GraspScene> = (0..2).map(|i| gen_toy_scene(&spec, derive(seed, &[i]))).collect::<Result<_>>()?;
        let mut params = DenoiserParams::init(model, vocabulary_of(&scenes), seed)?;
        // Move the text rows off their initial values so every group sees
        // a generic point.
        let r = params.text_table_range();
        for (k, v) in params.theta[r].iter_mut().enumerate() {
            *v += 0.01 * ((k as f64) * 0.7).sin();
        }
        params.point_scaling = PointScaling::fit(scenes.iter().flat_map(|s| s.cloud.points.iter()));
        let groups = scenes.iter().map(|s| params.scene_groups(&s.cloud.points)).collect::<Result<Vec<_>>>()?;
        Ok(Self { params, schedule: NoiseSchedule::linear(200, 1e-4, 0.02)?, groups })
    }

    pub fn items(&self) -> Vec<TrainItem<'_>> {
        let g0 = |k: usize| -> [f64; 7] { std::array::from_fn(|i| 0.3 * ((k * 7 + i) as f64 * 1.3).sin()) };
        let eps = |k: usize| -> [f64; 7] { std::array::from_fn(|i| ((k * 11 + i) as f64 * 0.9).cos()) };
        vec![
            TrainItem { scene: SceneInput::Encode(&self.groups[0]), target: 0, masked: false, negatives: vec![1], g0: g0(0), t: 5, eps: eps(0) },
            TrainItem { scene: SceneInput::Encode(&self.groups[0]), target: 1, masked: true, negatives: vec![0], g0: g0(1), t: 120, eps: eps(1) },
            TrainItem { scene: SceneInput::Encode(&self.groups[1]), target: 0, masked: false, negatives: vec![1], g0: g0(2), t: 60, eps: eps(2) },
            TrainItem { scene: SceneInput::Encode(&self.groups[1]), target: 1, masked: false, negatives: vec![], g0: g0(3), t: 199, eps: eps(3) },
        ]
    }
}

pub fn suite_gradients(seed: u64) -> Result<SuiteResult> {
    let fx = GradientFixture::new(seed, ModelConfig::default())?;
    let items = fx.items();
    let checks = check_gradients(&fx.params, &items, &fx.schedule, LossWeights::from_zeta(0.1), 100, GRAD_STEP, seed)?;
    let worst = checks.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).expect("groups exist");
    Ok(SuiteResult {
        name: "gradients".into(),
        passed: checks.iter().all(|c| c.max_rel_error < GRAD_TOL),
        detail: format!("worst group {} max relative error {:.3e}", worst.group, worst.max_rel_error),
    })
}

pub fn suite_roundtrip(seed: u64) -> Result<SuiteResult> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, &[9]);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let axis: [f64; 3] = rand_distr::Distribution::sample(&rand_distr::UnitSphere, &mut rng);
        let angle = rng.random_range(0.0..std::f64::consts::PI * 0.999);
        let pose = GraspPose::new(
            axis.map(|a| a * angle),
            std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            rng.random_range(0.0..0.2),
        );
        let x = exp_map(&pose)?;
        let back = exp_map(&log_map(&x)?)?;
        worst = worst.max((x.to_matrix() - back.to_matrix()).abs().max());
    }
    Ok(SuiteResult {
        name: "roundtrip".into(),
        passed: worst < ROUNDTRIP_TOL,
        detail: format!("max exp(log(X)) - X entry error over 1000 transforms {worst:.3e}"),
    })
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    if matches!(args.suite, Suite::Prop1 | Suite::All) {
        out.push(suite_prop1(args.seed, args.planted_dependence)?);
    }
    if matches!(args.suite, Suite::Gradients | Suite::All) {
        out.push(suite_gradients(args.seed)?);
    }
    if matches!(args.suite, Suite::Roundtrip | Suite::All) {
        out.push(suite_roundtrip(args.seed)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub cr: f64,
    pub emd: f64,
    pub cfr: f64,
}

/// Samples every object of every scene and averages the pair scores.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    scenes: &[(String, GraspScene)],
    config: &GuidanceConfig,
    delta: f64,
) -> Result<EvalReport> {
    let gripper = GripperModel::default();
    let mut pairs: Vec<PairScore> = Vec::new();
    for (k, (id, scene)) in scenes.iter().enumerate() {
        for (j, obj) in scene.objects.iter().enumerate() {
            if obj.grasps.is_empty() {
                continue;
            }
            let cfg = GuidanceConfig { seed: derive(config.seed, &[k as u64, j as u64]), ..*config };
            let (grasps, _) = sample_scene(ck, scene, &prompt_for(&obj.name), &cfg)?;
            pairs.push(evaluate_pair(id, scene, &obj.name, &grasps, delta, &gripper)?);
        }
    }
    EvalReport::aggregate(pairs, delta, gripper)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let values: Vec<f64> = if args.values.is_empty() {
        match args.param {
            SweepParam::W => crate::sampler::GUIDANCE_PRESET.to_vec(),
            SweepParam::Steps => crate::sampler::STEPS_PRESET.iter().map(|&s| s as f64).collect(),
            SweepParam::Zeta => vec![0.05, 0.1, 0.2, 0.3],
        }
    } else {
        args.values.clone()
    };
    let scenes = args
        .scenes
        .iter()
        .map(|p| Ok((scene_id(p), GraspScene::load(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let base = GuidanceConfig { num_grasps: args.n, seed: args.seed, ..GuidanceConfig::default() };
    let dir = parent_dir(&args.out);
    ensure_dir(&dir)?;
    let mut rows = Vec::new();
    match args.param {
        SweepParam::W | SweepParam::Steps => {
            let path = args.checkpoint.as_ref().ok_or_else(|| Error::invalid("this sweep needs --checkpoint"))?;
            let ck = checkpoint::load(path)?;
            for &v in &values {
                let cfg = match args.param {
                    SweepParam::W => GuidanceConfig { w: v, ..base },
                    _ => {
                        if v.fract() != 0.0 || v < 1.0 {
                            return Err(Error::invalid(format!("step count {v} is not a positive integer")));
                        }
                        GuidanceConfig { steps: v as usize, sampler: SamplerKind::Ddim, ..base }
                    }
                };
                let r = evaluate_checkpoint(&ck, &scenes, &cfg, args.delta)?;
                rows.push(SweepRow { value: v, cr: r.cr, emd: r.emd, cfr: r.cfr });
            }
        }
        SweepParam::Zeta => {
            let (cp, dp) = match (&args.config, &args.data) {
                (Some(c), Some(d)) => (c, d),
                _ => return Err(Error::invalid("the zeta sweep needs --config and --data")),
            };
            let config = RunConfig::load(cp)?;
            let data = load_scenes(dp)?;
            for (k, &v) in values.iter().enumerate() {
                let mut c = config.clone();
                c.train.loss_ratio_zeta = v;
                let out = dir.join(format!("sweep_zeta_{k}.json"));
                let ck = train_run(&c, &data, &out, None)?;
                let r = evaluate_checkpoint(&ck, &scenes, &base, args.delta)?;
                rows.push(SweepRow { value: v, cr: r.cr, emd: r.emd, cfr: r.cfr });
            }
        }
    }
    let name = match args.param {
        SweepParam::W => "w",
        SweepParam::Zeta => "zeta",
        SweepParam::Steps => "steps",
    };
    let mut csv = format!("{name},cr,emd,cfr\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.value, r.cr, r.emd, r.cfr));
    }
    std::fs::write(&args.out, csv).map_err(|e| Error::io(&args.out, e))?;
    let mut manifest = RunManifest::new(
        "sweep",
        serde_json::json!({ "param": name, "values": values, "n": args.n, "delta": args.delta }),
        args.seed,
    );
    manifest.artifacts = vec![args.out.clone()];
    manifest.append(&dir)?;
    Ok(rows)
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 success, 1 verification failure or numeric failure, 2 usage or input
/// error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result: Result<i32> = match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(|files| {
            println!("wrote {} scene files to {}", files.len(), a.out.display());
            0
        }),
        Command::Train(a) => cmd_train(a).map(|ck| {
            println!("trained {} epochs; checkpoint {}", ck.epochs_done, a.out.display());
            0
        }),
        Command::Sample(a) => cmd_sample(a).map(|g| {
            println!("wrote {} grasps to {}", g.len(), a.out.display());
            0
        }),
        Command::Eval(a) => cmd_eval(a).map(|r| {
            println!("cr {:.4}  emd {:.4}  cfr {:.4}  (delta {}, {} pairs)", r.cr, r.emd, r.cfr, r.delta, r.pairs.len());
            0
        }),
        Command::Verify(a) => cmd_verify(a).map(|results| {
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().all(|r| r.passed) {
                0
            } else {
                1
            }
        }),
        Command::Sweep(a) => cmd_sweep(a).map(|rows| {
            println!("wrote {} rows to {}", rows.len(), a.out.display());
            0
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
