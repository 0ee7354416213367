//! Short training run, checkpoint round trip, then guided sampling with
//! the full DDPM chain and with a 20-step DDIM schedule.
//!
//! cargo run --release --example guided_sampling -- [scenes] [epochs]

use negrasp::data::{gen_toy_scene, DatasetSpec};
use negrasp::metrics::target_assignment_rate;
use negrasp::net::checkpoint::{self, Checkpoint};
use negrasp::net::{prompt_for, DenoiserParams, ModelConfig};
use negrasp::sampler::{precompute, sample_grasps, GuidanceConfig, SamplerKind};
use negrasp::schedule::ScheduleConfig;
use negrasp::train::{vocabulary_of, TrainConfig, Trainer};

fn main() -> negrasp::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let scenes = args.first().copied().unwrap_or(20);
    let epochs = args.get(1).copied().unwrap_or(3);

    let spec = DatasetSpec::two_object_toy();
    let data = (0..scenes as u64).map(|i| gen_toy_scene(&spec, i)).collect::<negrasp::Result<Vec<_>>>()?;
    let params = DenoiserParams::init(ModelConfig::default(), vocabulary_of(&data), 0)?;
    let schedule_cfg = ScheduleConfig::default();
    let schedule = schedule_cfg.build()?;
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let mut trainer = Trainer::new(params, None, config.clone(), schedule.clone(), &data, 0)?;
    let reports = trainer.run(&mut std::io::sink())?;
    println!("trained {epochs} epochs, last loss {:.4}", reports.last().map_or(f64::NAN, |r| r.total));

    let dir = std::env::temp_dir().join("negrasp-guided-sampling");
    std::fs::create_dir_all(&dir).map_err(|e| negrasp::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("model.json");
    let ck = Checkpoint {
        params: trainer.params,
        schedule: schedule_cfg,
        train: Some(config),
        seed: 0,
        epochs_done: trainer.epochs_done,
        optimizer: Some(trainer.adam),
    };
    checkpoint::save(&path, &ck)?;
    let params = checkpoint::load(&path)?.params;
    println!("checkpoint written to {}", path.display());

    let scene = gen_toy_scene(&spec, 500)?;
    let target = &scene.objects[0].name;
    let cache = precompute(&params, &scene.cloud, &prompt_for(target))?;
    for (sampler, steps) in [(SamplerKind::Ddpm, 200), (SamplerKind::Ddim, 20)] {
        for w in [0.0, 0.2, 1.0] {
            let cfg = GuidanceConfig { w, steps, sampler, num_grasps: 32, seed: 1 };
            let (grasps, report) = sample_grasps(&params, &schedule, &cache, &cfg)?;
            println!(
                "{sampler} {steps:3} steps, w = {w:.1}: {:.2} of grasps on the {target}, {} widths clamped, {:.2}s",
                target_assignment_rate(&grasps, &scene, target)?,
                report.clamped,
                report.seconds
            );
        }
    }
    Ok(())
}
