//! Forward noising with the linear schedule: the closed form against the
//! step-by-step chain.
//!
//! cargo run --release --example noising

use negrasp::rng::stream;
use negrasp::schedule::ScheduleConfig;
use rand_distr::{Distribution, StandardNormal};

fn main() -> negrasp::Result<()> {
    let sched = ScheduleConfig::default().build()?;
    println!("T = {}  beta_1 = {}  beta_T = {}", sched.steps(), sched.beta(1), sched.beta(sched.steps()));
    for t in [1, 10, 50, 100, 200] {
        println!("alpha_bar({t:3}) = {:.6}", sched.alpha_bar(t));
    }

    let g0 = [0.3, -0.2, 0.1, 0.05, 0.0, 0.7, 0.08];
    let n = 4000;
    let mut rng = stream(7, &[0]);
    let mut draw = || -> [f64; 7] { std::array::from_fn(|_| StandardNormal.sample(&mut rng)) };
    for t in [10, 50, 200] {
        let (mut closed, mut chain) = (0.0, 0.0);
        for _ in 0..n {
            closed += sched.q_sample(&g0, t, &draw())?[0];
            let mut g = g0;
            for s in 1..=t {
                g = sched.single_step_noising(&g, s, &draw())?;
            }
            chain += g[0];
        }
        println!(
            "t = {t:3}: mean of first coordinate  closed form {:+.4}  chain {:+.4}  expected {:+.4}",
            closed / n as f64,
            chain / n as f64,
            sched.alpha_bar(t).sqrt() * g0[0]
        );
    }
    Ok(())
}
