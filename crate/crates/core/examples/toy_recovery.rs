//! Trains on generated two-object scenes and compares how often guided and
//! unguided samples land on the requested object.
//!
//! cargo run --release --example toy_recovery -- [scenes] [epochs] [eval_scenes]

use std::time::Instant;

use negrasp::data::{gen_toy_scene, DatasetSpec};
use negrasp::metrics::target_assignment_rate;
use negrasp::net::{prompt_for, DenoiserParams, ModelConfig};
use negrasp::sampler::{precompute, sample_grasps, GuidanceConfig, SamplerKind};
use negrasp::schedule::ScheduleConfig;
use negrasp::train::{vocabulary_of, TrainConfig, Trainer};

fn main() -> negrasp::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let scenes = args.first().copied().unwrap_or(200);
    let epochs = args.get(1).copied().unwrap_or(30);
    let eval_scenes = args.get(2).copied().unwrap_or(8);

    let spec = DatasetSpec::two_object_toy();
    let data = (0..scenes).map(|i| gen_toy_scene(&spec, i as u64)).collect::<negrasp::Result<Vec<_>>>()?;
    let vocab = vocabulary_of(&data);
    let model = ModelConfig::default();
    let params = DenoiserParams::init(model, vocab, 0)?;
    let schedule = ScheduleConfig::default().build()?;
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let mut trainer = Trainer::new(params, None, config, schedule.clone(), &data, 0)?;
    println!("{} samples, {} parameters", trainer.samples().len(), trainer.params.len());

    let start = Instant::now();
    let mut sink = std::io::sink();
    while trainer.epochs_done < epochs {
        let r = trainer.run_epoch(&mut sink)?;
        println!(
            "epoch {:3}  noise {:.4}  negative {:.4}  total {:.4}  {:.0}s",
            trainer.epochs_done,
            r.noise,
            r.negative,
            r.total,
            start.elapsed().as_secs_f64()
        );
    }

    for w in [0.0, 0.2, 0.5, 1.0] {
        let mut rates = Vec::new();
        for k in 0..eval_scenes {
            let scene = gen_toy_scene(&spec, 1_000_000 + k as u64)?;
            for obj in &scene.objects {
                let cache = precompute(&trainer.params, &scene.cloud, &prompt_for(&obj.name))?;
                let cfg = GuidanceConfig { w, num_grasps: 64, seed: k as u64, sampler: SamplerKind::Ddpm, ..Default::default() };
                let (grasps, _) = sample_grasps(&trainer.params, &schedule, &cache, &cfg)?;
                rates.push(target_assignment_rate(&grasps, &scene, &obj.name)?);
            }
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        println!("w = {w:.1}: target assignment rate {mean:.3}");
    }
    Ok(())
}
