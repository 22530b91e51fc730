//! Temporary diagnostic: final goal distance per episode for three VP
//! methods on a trained checkpoint. Not part of the suite.

use ragdp_bench::files::{load_checkpoint, load_kb};
use ragdp_core::envs::{Env, PointReach2D};
use ragdp_core::ragdp::{ragdp_vp_step, Normalization};
use ragdp_core::rng::{derive_seed, normal_mat, rng_from_seed};
use ragdp_core::samplers::{vp_ancestral, vp_fast};
use ragdp_core::tensor::Mat;

#[test]
#[ignore]
fn final_distance_probe() {
    let ckpt = load_checkpoint(std::path::Path::new("/tmp/vpexp/out/ckpt_vp_s0.rgdp")).unwrap();
    let kb = load_kb(std::path::Path::new("/tmp/vpexp/out/kb.rgdp")).unwrap();
    let sched = ckpt.schedule.build_vp().unwrap();
    let norm = Normalization::from_kb(&kb);
    let t_o = 2usize;
    let t_a = 8usize;

    for method in ["full", "fast5", "ragdp95"] {
        let mut dists = Vec::new();
        let mut fails = Vec::new();
        for ep in 0..56u64 {
            let env_seed = 1000 + ep;
            let mut env = PointReach2D::new();
            let mut rng = rng_from_seed(derive_seed(env_seed, 777));
            let mut history: Vec<Vec<f64>> = Vec::new();
            history.push(env.reset(env_seed).into_vec());
            let mut success = false;
            'episode: loop {
                let window = Mat::from_fn(t_o, env.obs_dim(), |row, col| {
                    let have = history.len();
                    let src = (have + row).saturating_sub(t_o).min(have - 1);
                    history[src][col]
                });
                let obs_norm = norm.obs.normalize(&window).unwrap();
                let chunk = match method {
                    "full" => {
                        let init = normal_mat(16, 2, &mut rng);
                        let run =
                            vp_ancestral(&ckpt.net, &sched, &obs_norm, init, sched.t, &mut rng)
                                .unwrap();
                        norm.act.denormalize(&run.action).unwrap()
                    }
                    "fast5" => {
                        let init = normal_mat(16, 2, &mut rng);
                        let run =
                            vp_fast(&ckpt.net, &sched, &obs_norm, init, 5, sched.t, &mut rng)
                                .unwrap();
                        norm.act.denormalize(&run.action).unwrap()
                    }
                    _ => {
                        let (chunk, _) =
                            ragdp_vp_step(&ckpt.net, &sched, &kb, &window, 0.95, &mut rng)
                                .unwrap();
                        chunk
                    }
                };
                for row in 0..t_a {
                    let action = Mat::from_vec(1, 2, chunk.row(row).to_vec()).unwrap();
                    let out = env.step(&action).unwrap();
                    history.push(out.obs.into_vec());
                    if out.success {
                        success = true;
                        break 'episode;
                    }
                    if out.done {
                        break 'episode;
                    }
                }
            }
            let last = history.last().unwrap();
            let d = ((last[0] - last[2]).powi(2) + (last[1] - last[3]).powi(2)).sqrt();
            dists.push(d);
            if !success {
                fails.push((ep, d, history.len()));
            }
        }
        let mean_d = dists.iter().sum::<f64>() / dists.len() as f64;
        println!(
            "{method}: success {}/56, mean final dist {mean_d:.4}",
            56 - fails.len()
        );
        for (ep, d, len) in &fails {
            println!("  fail ep {ep}: dist {d:.4}, steps {len}");
        }
    }
}
