//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 6 and 7 train a model from scratch and take several minutes.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Matrix4, Vector3};
use negrasp::cli::{self, GradientFixture, GRAD_STEP, GRAD_TOL, PROP1_TOL};
use negrasp::data::{
    bilinear_depth, filter_grasps, gen_toy_scene, lift_grasp, top_down_grasp, CameraModel, DatasetSpec, DepthMap,
    GraspScene, ObjectSpec, Primitive, Rect2DGrasp, RejectionReport,
};
use negrasp::metrics::{collision_free_rate, coverage_rate, emd, target_assignment_rate, DEFAULT_DELTA};
use negrasp::net::gradcheck::check_gradients;
use negrasp::net::{prompt_for, DenoiserParams, LossWeights, ModelConfig};
use negrasp::prop1::{random_suite, verify_proposition1, DiscreteToy};
use negrasp::rng::stream;
use negrasp::sampler::{composed_epsilon, precompute, sample_grasps, GuidanceConfig, SamplerKind};
use negrasp::scene::SceneCloud;
use negrasp::schedule::{NoiseSchedule, ScheduleConfig};
use negrasp::se3::{exp_map, hat, log_map, pose_distance, GraspPose, GripperModel};
use negrasp::train::{vocabulary_of, TrainConfig, Trainer};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

const ROUNDTRIP_TOL: f64 = 1e-9;
const FIRST_ORDER_EPS: f64 = 1e-6;
const FIRST_ORDER_TOL: f64 = 1e-10;
const ALPHA_BAR_TOL: f64 = 1e-3;
const MC_SAMPLES: usize = 4000;
const MC_SIGMAS: f64 = 3.0;
const AFFINE_TOL: f64 = 1e-12;
const EMD_TOL: f64 = 1e-9;
const PLANTED_MIN_ERROR: f64 = 1e-3;

// Toy recovery. The thresholds were frozen after the pilot run recorded in
// the acceptance manifest.
const TOY_SCENES: u64 = 200;
const TOY_EPOCHS: usize = 30;
const TOY_TRAIN_BUDGET: Duration = Duration::from_secs(15 * 60);
const TOY_EVAL_SCENES: u64 = 8;
const TOY_EVAL_SEED: u64 = 1_000_000;
const TOY_GRASPS: usize = 64;
const TOY_W: f64 = 0.2;
const TOY_MIN_RATE: f64 = 0.8;
const DDIM_STEPS: [usize; 5] = [10, 20, 50, 100, 200];
const DDIM_SLACK: f64 = 0.05;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

type Check = negrasp::Result<Outcome>;

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let mut o = match result {
        Ok(o) => o,
        Err(e) => outcome(false, format!("error: {e}")),
    };
    o.detail = format!("{} [{:.2}s]", o.detail, elapsed.as_secs_f64());
    if let Some(limit) = limit {
        if elapsed > limit {
            o.passed = false;
            o.detail = format!("{} exceeds {:.0}s", o.detail, limit.as_secs_f64());
        }
    }
    o
}

fn random_pose(rng: &mut impl Rng) -> GraspPose {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(0.0..0.999 * std::f64::consts::PI);
    GraspPose::new(
        axis.map(|a| a * angle),
        std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        rng.random_range(0.0..0.2),
    )
}

fn geometry() -> Check {
    let mut rng = stream(1, &[0]);
    let mut worst_log: f64 = 0.0;
    let mut worst_exp: f64 = 0.0;
    for _ in 0..1000 {
        let pose = random_pose(&mut rng);
        let x = exp_map(&pose)?;
        let back = log_map(&x)?;
        // The width is not part of the transform.
        let v = pose.to_vector();
        let b = back.to_vector();
        worst_log = worst_log.max((0..6).map(|i| (v[i] - b[i]).abs()).fold(0.0, f64::max));
        worst_exp = worst_exp.max((exp_map(&back)?.to_matrix() - x.to_matrix()).abs().max());
    }
    // exp(e xi) = I + e xi^ + O(e^2) with xi^ the 4x4 twist matrix.
    let mut worst_first: f64 = 0.0;
    for _ in 0..100 {
        let omega: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let tau: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let small = GraspPose::new(omega.map(|a| a * FIRST_ORDER_EPS), tau.map(|a| a * FIRST_ORDER_EPS), 0.05);
        let mut twist = Matrix4::zeros();
        twist.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&Vector3::from(omega)));
        twist.fixed_view_mut::<3, 1>(0, 3).copy_from(&Vector3::from(tau));
        let linear = Matrix4::identity() + twist * FIRST_ORDER_EPS;
        worst_first = worst_first.max((exp_map(&small)?.to_matrix() - linear).abs().max());
    }
    Ok(outcome(
        worst_log < ROUNDTRIP_TOL && worst_exp < ROUNDTRIP_TOL && worst_first < FIRST_ORDER_TOL,
        format!("log(exp) {worst_log:.2e}, exp(log) {worst_exp:.2e}, first-order residual {worst_first:.2e}"),
    ))
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn schedule() -> Check {
    let sched = ScheduleConfig::default().build()?;
    let exact_ends = sched.beta(1) == 1e-4 && sched.beta(200) == 0.02;
    let mut product = 1.0;
    for t in 1..=200 {
        product *= 1.0 - (1e-4 + (t - 1) as f64 * (0.02 - 1e-4) / 199.0);
    }
    let ab_err = (sched.alpha_bar(200) - product).abs();

    let g0 = [0.4, -0.3, 0.2, 0.1, -0.05, 0.7, 0.08];
    let mut rng = stream(2, &[0]);
    let mut draw = || -> [f64; 7] { std::array::from_fn(|_| StandardNormal.sample(&mut rng)) };
    let mut worst_z: f64 = 0.0;
    for t in [10, 50, 200] {
        let mut closed: Vec<Vec<f64>> = (0..7).map(|_| Vec::with_capacity(MC_SAMPLES)).collect();
        let mut chain: Vec<Vec<f64>> = (0..7).map(|_| Vec::with_capacity(MC_SAMPLES)).collect();
        for _ in 0..MC_SAMPLES {
            let c = sched.q_sample(&g0, t, &draw())?;
            let mut g = g0;
            for s in 1..=t {
                g = sched.single_step_noising(&g, s, &draw())?;
            }
            for i in 0..7 {
                closed[i].push(c[i]);
                chain[i].push(g[i]);
            }
        }
        let n = MC_SAMPLES as f64;
        for i in 0..7 {
            let (m1, v1) = moments(&closed[i]);
            let (m2, v2) = moments(&chain[i]);
            let z_mean = (m1 - m2).abs() / ((v1 + v2) / n).sqrt();
            let z_var = (v1 - v2).abs() / ((v1 * v1 + v2 * v2) * 2.0 / (n - 1.0)).sqrt();
            worst_z = worst_z.max(z_mean).max(z_var);
        }
    }
    Ok(outcome(
        exact_ends && ab_err < ALPHA_BAR_TOL && worst_z < MC_SIGMAS,
        format!(
            "beta ends exact: {exact_ends}, alpha_bar(200) {:.6} vs product {product:.6}, worst moment gap {worst_z:.2} sigma",
            sched.alpha_bar(200)
        ),
    ))
}

fn gradients() -> Check {
    let fx = GradientFixture::new(0, ModelConfig::default())?;
    let items = fx.items();
    let checks = check_gradients(&fx.params, &items, &fx.schedule, LossWeights::from_zeta(0.1), 100, GRAD_STEP, 0)?;
    let worst = checks.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).expect("groups exist");
    let all_sampled = checks.iter().all(|c| c.coords == c.coords.min(100) && c.coords > 0);
    Ok(outcome(
        all_sampled && checks.iter().all(|c| c.max_rel_error < GRAD_TOL),
        format!("{} groups, worst {} at {:.2e}", checks.len(), worst.group, worst.max_rel_error),
    ))
}

fn proposition1() -> Check {
    let suite = random_suite(0, 50)?;
    let planted = verify_proposition1(&DiscreteToy::planted_dependence(0)?)?;
    let broken = suite
        .first_broken_line(1e-9)
        .map(|l| format!(", derivation line {} ({}) varies with g by {:.2e}", l.line, l.justification, l.deviation))
        .unwrap_or_default();
    Ok(outcome(
        suite.max_rel_error < PROP1_TOL && planted.max_rel_error > PLANTED_MIN_ERROR,
        format!(
            "50 toys worst relative error {:.3e}{broken}; planted control {:.3e}",
            suite.max_rel_error, planted.max_rel_error
        ),
    ))
}

fn toy_params() -> negrasp::Result<(DenoiserParams, GraspScene)> {
    let scene = gen_toy_scene(&DatasetSpec::two_object_toy(), 5)?;
    let params = DenoiserParams::init(ModelConfig::default(), vocabulary_of(std::slice::from_ref(&scene)), 9)?;
    Ok((params, scene))
}

fn guidance() -> Check {
    let (params, scene) = toy_params()?;
    let mut cache = precompute(&params, &scene.cloud, &prompt_for("ball"))?;
    let mut rng = stream(3, &[0]);
    let mut worst: f64 = 0.0;
    let mut degenerate = true;
    for k in 0..20 {
        let g: [f64; 7] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let t = 1 + 10 * k;
        let e0 = composed_epsilon(&g, t, &cache, &params, 0.0)?;
        let e1 = composed_epsilon(&g, t, &cache, &params, 1.0)?;
        for w in [-1.0, 0.2, 0.5, 2.0, 7.5] {
            let ew = composed_epsilon(&g, t, &cache, &params, w)?;
            for i in 0..7 {
                worst = worst.max((ew[i] - (e0[i] + w * (e1[i] - e0[i]))).abs());
            }
        }
        let uncond = params.predict_noise(&g, &cache.kv, &cache.null, t)?;
        degenerate &= e0 == uncond;
        let saved = cache.neg.clone();
        cache.neg = cache.text.clone();
        degenerate &= composed_epsilon(&g, t, &cache, &params, 0.7)? == uncond;
        cache.neg = saved;
    }
    Ok(outcome(
        worst < AFFINE_TOL && degenerate,
        format!("affine residual {worst:.2e}, degeneracies bitwise: {degenerate}"),
    ))
}

struct ToyRun {
    params: DenoiserParams,
    schedule: NoiseSchedule,
    train_seconds: f64,
    eval: Vec<GraspScene>,
}

fn train_toy() -> negrasp::Result<ToyRun> {
    let spec = DatasetSpec::two_object_toy();
    let data = (0..TOY_SCENES).map(|i| gen_toy_scene(&spec, i)).collect::<negrasp::Result<Vec<_>>>()?;
    let eval = (0..TOY_EVAL_SCENES).map(|k| gen_toy_scene(&spec, TOY_EVAL_SEED + k)).collect::<negrasp::Result<Vec<_>>>()?;
    let params = DenoiserParams::init(ModelConfig::default(), vocabulary_of(&data), 0)?;
    let schedule = ScheduleConfig::default().build()?;
    let config = TrainConfig { epochs: TOY_EPOCHS, ..TrainConfig::default() };
    let start = Instant::now();
    let mut trainer = Trainer::new(params, None, config, schedule.clone(), &data, 0)?;
    trainer.run(&mut std::io::sink())?;
    Ok(ToyRun { params: trainer.params, schedule, train_seconds: start.elapsed().as_secs_f64(), eval })
}

fn assignment_rate(run: &ToyRun, w: f64) -> negrasp::Result<f64> {
    let mut rates = Vec::new();
    for (k, scene) in run.eval.iter().enumerate() {
        for obj in &scene.objects {
            let cache = precompute(&run.params, &scene.cloud, &prompt_for(&obj.name))?;
            let cfg = GuidanceConfig { w, num_grasps: TOY_GRASPS, seed: k as u64, ..GuidanceConfig::default() };
            let (grasps, _) = sample_grasps(&run.params, &run.schedule, &cache, &cfg)?;
            rates.push(target_assignment_rate(&grasps, scene, &obj.name)?);
        }
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

fn toy_recovery(run: &ToyRun, record: &mut serde_json::Map<String, serde_json::Value>) -> Check {
    let guided = assignment_rate(run, TOY_W)?;
    let unguided = assignment_rate(run, 0.0)?;
    record.insert("toy_rate_w0".into(), unguided.into());
    record.insert("toy_rate_guided".into(), guided.into());
    let in_budget = run.train_seconds <= TOY_TRAIN_BUDGET.as_secs_f64();
    Ok(outcome(
        in_budget && guided >= TOY_MIN_RATE && unguided < guided,
        format!(
            "training {:.0}s, target assignment rate w={TOY_W}: {guided:.3} (>= {TOY_MIN_RATE}), w=0: {unguided:.3}",
            run.train_seconds
        ),
    ))
}

fn ddim_trend(run: &ToyRun, record: &mut serde_json::Map<String, serde_json::Value>) -> Check {
    let mut crs = Vec::new();
    for steps in DDIM_STEPS {
        let mut sum = 0.0;
        let mut pairs = 0;
        for (k, scene) in run.eval.iter().enumerate() {
            for obj in &scene.objects {
                let cache = precompute(&run.params, &scene.cloud, &prompt_for(&obj.name))?;
                let cfg = GuidanceConfig {
                    w: TOY_W,
                    steps,
                    sampler: SamplerKind::Ddim,
                    num_grasps: TOY_GRASPS,
                    seed: k as u64,
                };
                let (grasps, _) = sample_grasps(&run.params, &run.schedule, &cache, &cfg)?;
                sum += coverage_rate(&grasps, &obj.grasps, DEFAULT_DELTA)?;
                pairs += 1;
            }
        }
        crs.push(sum / pairs as f64);
    }
    record.insert("ddim_cr".into(), serde_json::json!(DDIM_STEPS.iter().zip(&crs).collect::<Vec<_>>()));
    let finite = crs.iter().all(|c| c.is_finite());
    let first = crs[0];
    let last = crs[crs.len() - 1];
    let table: Vec<String> = DDIM_STEPS.iter().zip(&crs).map(|(s, c)| format!("{s}:{c:.3}")).collect();
    Ok(outcome(finite && last >= first - DDIM_SLACK, format!("CR by steps {}", table.join(" "))))
}

fn permutations3() -> [[usize; 3]; 6] {
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]
}

fn block_cloud() -> SceneCloud {
    let mut pts = Vec::new();
    for i in 0..12 {
        for j in 0..12 {
            for k in 0..12 {
                pts.push([i as f64 * 0.01 - 0.055, j as f64 * 0.01 - 0.055, 0.8 + k as f64 * 0.01 - 0.055]);
            }
        }
    }
    SceneCloud::single_object(pts, "block")
}

fn metrics() -> Check {
    let mut rng = stream(4, &[0]);
    let pose = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut p = random_pose(rng);
        p.tau = p.tau.map(|v| 0.1 * v);
        p
    };
    let mut emd_err: f64 = 0.0;
    for _ in 0..100 {
        let a: Vec<GraspPose> = (0..3).map(|_| pose(&mut rng)).collect();
        let b: Vec<GraspPose> = (0..3).map(|_| pose(&mut rng)).collect();
        let mut best = f64::INFINITY;
        for p in permutations3() {
            let mut c = 0.0;
            for i in 0..3 {
                c += pose_distance(&a[i], &b[p[i]])?;
            }
            best = best.min(c / 3.0);
        }
        emd_err = emd_err.max((emd(&a, &b)? - best).abs());
    }

    let mut cr_exact = true;
    for _ in 0..50 {
        let det: Vec<GraspPose> = (0..6).map(|_| pose(&mut rng)).collect();
        let truth: Vec<GraspPose> = (0..5).map(|_| pose(&mut rng)).collect();
        let delta = rng.random_range(0.05..0.6);
        let mut covered = 0;
        for g in &truth {
            let mut any = false;
            for d in &det {
                any |= pose_distance(g, d)? <= delta;
            }
            covered += any as usize;
        }
        cr_exact &= coverage_rate(&det, &truth, delta)? == covered as f64 / truth.len() as f64;
    }

    let cloud = block_cloud();
    let model = GripperModel::default();
    let mut planted: Vec<GraspPose> = (0..7).map(|k| top_down_grasp([0.0, 0.0, -1.0 - k as f64], 0.0, 0.05)).collect();
    planted.extend((0..3).map(|k| top_down_grasp([0.0, 0.0, 0.8], 0.3 * k as f64, 0.02)));
    let cfr = collision_free_rate(&planted, &cloud, &model)?;
    Ok(outcome(
        emd_err < EMD_TOL && cr_exact && cfr == 0.7,
        format!("EMD vs brute force {emd_err:.2e}, CR exact: {cr_exact}, planted CFR {cfr}"),
    ))
}

fn pipeline() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();

    let cam = CameraModel::new(55.0, 640, 480)?;
    let (cx, cy) = cam.principal_point();
    let center = cam.back_project(cx, cy, 1.0);
    let side = cam.back_project(cx + cam.focal(), cy, 0.7);
    let bp = center == [0.0, 0.0, 1.0] && (side[0] - 0.7).abs() < 1e-12 && side[1] == 0.0;
    ok &= bp;
    notes.push(format!("back-projection {bp}"));

    let d = DepthMap::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]])?;
    let bl = bilinear_depth(&d, 1.0, 0.0)? == 2.0 && bilinear_depth(&d, 0.0, 1.0)? == 3.0 && bilinear_depth(&d, 0.5, 0.5)? == 2.5;
    ok &= bl;
    notes.push(format!("bilinear {bl}"));

    // A camera whose focal length is 461.1 px at H = 480.
    let fov = 2.0 * (240.0f64 / 461.1).atan().to_degrees();
    let cam = CameraModel::new(fov, 640, 480)?;
    let (cx, cy) = cam.principal_point();
    let depth = DepthMap::new(640, 480, vec![0.5; 640 * 480])?;
    let rect = Rect2DGrasp { center: [cx, cy], angle: 0.0, width_px: 92.22, height_px: 10.0 };
    let lifted = lift_grasp(&rect, &depth, &cam)?;
    let t = lifted.translation()?;
    let lift = (lifted.width - 0.1).abs() < 1e-9 && (t - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12;
    let flipped = lift_grasp(&Rect2DGrasp { angle: std::f64::consts::PI, ..rect }, &depth, &cam)?;
    let (a, b) = (lifted.canonicalize()?.to_vector(), flipped.canonicalize()?.to_vector());
    let symmetric = (0..7).all(|i| (a[i] - b[i]).abs() < 1e-12);
    ok &= lift && symmetric;
    notes.push(format!("width lift {lift}, antipodal symmetry {symmetric}"));

    let spec = DatasetSpec {
        objects: vec![ObjectSpec { name: "ball".into(), shape: Primitive::Sphere { radius: 0.03 }, position: [0.0, 0.0] }],
        points_per_object: 400,
        grasps_per_object: 100,
        ..DatasetSpec::default()
    };
    let scene = gen_toy_scene(&spec, 4)?;
    let model = GripperModel::default();
    let top = [0.0, 0.0, 0.8 - 0.03];
    let mut grasps = scene.objects[0].grasps.clone();
    grasps.extend((0..3).map(|k| top_down_grasp(top, 0.1 * k as f64, 0.21)));
    grasps.extend((0..4).map(|k| top_down_grasp(top, 0.2 * k as f64, 0.02)));
    grasps.extend((0..3).map(|k| top_down_grasp([0.0, 0.0, 0.3 - 0.1 * k as f64], 0.0, 0.06)));
    let mut planted = scene.clone();
    planted.objects[0].grasps = grasps;
    let (kept, report) = filter_grasps(&planted, &model)?;
    let filter = scene.objects[0].grasps.len() == 100
        && report == RejectionReport { width: 3, collision: 4, closing_miss: 3 }
        && kept.objects[0].grasps == scene.objects[0].grasps;
    ok &= filter;
    notes.push(format!("planted filter {filter} ({report:?})"));

    let far = [0.0, 0.0, 0.3];
    let mut edge = scene.clone();
    edge.objects[0].grasps = vec![top_down_grasp(far, 0.0, 0.2021), top_down_grasp(far, 0.0, 0.2021 + 1e-9)];
    let (_, r) = filter_grasps(&edge, &model)?;
    let cutoff = r.width == 1;
    ok &= cutoff;
    notes.push(format!("width cutoff {cutoff}"));
    Ok(outcome(ok, notes.join(", ")))
}

fn run_cli(args: &[&str]) -> negrasp::Result<()> {
    let argv = std::iter::once("negrasp").chain(args.iter().copied());
    match cli::run(argv) {
        0 => Ok(()),
        code => Err(negrasp::Error::InvalidArgument(format!("negrasp {} exited with {code}", args[0]))),
    }
}

fn pipeline_outputs(root: &Path) -> negrasp::Result<Vec<(String, Vec<u8>)>> {
    let dir = |p: &str| root.join(p).to_string_lossy().into_owned();
    std::fs::write(root.join("spec.json"), serde_json::to_string(&DatasetSpec::two_object_toy()).expect("spec serializes"))
        .map_err(|e| negrasp::Error::Io { path: root.join("spec.json"), source: e })?;
    std::fs::write(root.join("run.json"), r#"{"train": {"epochs": 1, "batch_size": 16}, "schedule": {}, "model": {}}"#)
        .map_err(|e| negrasp::Error::Io { path: root.join("run.json"), source: e })?;
    run_cli(&["gen", "--spec", &dir("spec.json"), "--out", &dir("scenes"), "--count", "3", "--seed", "11"])?;
    run_cli(&["train", "--config", &dir("run.json"), "--data", &dir("scenes"), "--out", &dir("model.json"), "--seed", "11"])?;
    run_cli(&[
        "sample", "--checkpoint", &dir("model.json"), "--scene", &dir("scenes/scene_0000.json"), "--prompt", "grasp the Ball",
        "--n", "8", "--seed", "11", "--out", &dir("grasps.json"),
    ])?;
    let mut files = vec![
        "scenes/scene_0000.json",
        "scenes/scene_0001.json",
        "scenes/scene_0002.json",
        "model.json",
        "model.bin",
        "model.metrics.tsv",
        "grasps.json",
    ];
    files.sort();
    files
        .into_iter()
        .map(|f| {
            let p = root.join(f);
            std::fs::read(&p).map(|b| (f.to_string(), b)).map_err(|e| negrasp::Error::Io { path: p, source: e })
        })
        .collect()
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| negrasp::Error::Io { path: "tempdir".into(), source: e })?;
    let b = tempfile::tempdir().map_err(|e| negrasp::Error::Io { path: "tempdir".into(), source: e })?;
    let first = pipeline_outputs(a.path())?;
    let second = pipeline_outputs(b.path())?;
    let differing: Vec<&str> = first.iter().zip(&second).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    Ok(outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across runs", first.len())
        } else {
            format!("differing artifacts: {}", differing.join(", "))
        },
    ))
}

fn main() {
    let mut record = serde_json::Map::new();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 geometry", timed(Some(Duration::from_secs(5)), geometry)),
        ("2 schedule", timed(Some(Duration::from_secs(30)), schedule)),
        ("3 gradients", timed(Some(Duration::from_secs(60)), gradients)),
        ("4 proposition 1", timed(Some(Duration::from_secs(10)), proposition1)),
        ("5 guidance algebra", timed(Some(Duration::from_secs(1)), guidance)),
    ];
    match train_toy() {
        Ok(run) => {
            results.push(("6 toy recovery", timed(None, || toy_recovery(&run, &mut record))));
            results.push(("7 DDIM trend", timed(None, || ddim_trend(&run, &mut record))));
        }
        Err(e) => {
            results.push(("6 toy recovery", outcome(false, format!("training failed: {e}"))));
            results.push(("7 DDIM trend", outcome(false, "no checkpoint")));
        }
    }
    results.push(("8 metrics", timed(Some(Duration::from_secs(10)), metrics)));
    results.push(("9 pipeline", timed(Some(Duration::from_secs(10)), pipeline)));
    results.push(("10 determinism", timed(None, determinism)));

    record.insert(
        "thresholds".into(),
        serde_json::json!({
            "toy_scenes": TOY_SCENES,
            "toy_epochs": TOY_EPOCHS,
            "toy_w": TOY_W,
            "toy_min_rate": TOY_MIN_RATE,
            "toy_eval_scenes": TOY_EVAL_SCENES,
            "ddim_slack": DDIM_SLACK,
        }),
    );
    for (name, o) in &results {
        record.insert(name.to_string(), serde_json::json!({ "passed": o.passed, "detail": o.detail }));
    }
    let manifest = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_manifest.json");
    if let Ok(text) = serde_json::to_string_pretty(&record) {
        let _ = std::fs::write(&manifest, text);
    }

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.passed as usize;
    }
    println!("{} of {} criteria passed; manifest {}", results.len() - failed, results.len(), manifest.display());
    if failed > 0 {
        std::process::exit(1);
    }
}
