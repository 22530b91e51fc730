//! End-to-end training smoke test on a real expert dataset: the epsilon
//! loss must drop well below its starting level within a short budget.

use ragdp_core::envs::{chunk_episodes, generate_dataset, Horizons, PointReach2D, PointReachExpert};
use ragdp_core::nn::{train, Arch, PredictionType, ScheduleRef, ScoreNet, TrainConfig};
use ragdp_core::schedules::make_vp_schedule;

#[test]
fn pointreach_training_cuts_epsilon_loss_to_a_quarter() {
    let mut env = PointReach2D::new();
    let mut expert = PointReachExpert::new();
    let ds = generate_dataset(&mut env, &mut expert, 200, 7, 0.0).unwrap();
    let chunks = chunk_episodes(&ds, Horizons::default()).unwrap();
    assert!(chunks.chunks.len() > 5_000, "dataset unexpectedly small");

    let sched = make_vp_schedule(100, 1e-3, 0.2).unwrap();
    let mut net = ScoreNet::new(
        Arch::default(),
        PredictionType::Epsilon,
        env_obs_dim(&env),
        2,
        2,
        16,
        16,
        13,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 12,
        batch_size: 256,
        rng_seed: 29,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &chunks.chunks, ScheduleRef::Vp(&sched), &cfg).unwrap();

    let first = report.loss_curve[0];
    let last = *report.loss_curve.last().unwrap();
    assert!(
        last < 0.25 * first,
        "loss went {first:.3} -> {last:.3}, ratio {:.3}",
        last / first
    );
    assert!(
        report.loss_curve.windows(2).all(|w| w[1] <= w[0] * 1.05),
        "loss curve not roughly monotone: {:?}",
        report.loss_curve
    );
}

fn env_obs_dim(env: &PointReach2D) -> usize {
    use ragdp_core::envs::Env;
    env.obs_dim()
}
