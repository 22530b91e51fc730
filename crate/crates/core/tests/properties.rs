//! Randomized checks of the contracts that the unit suites pin at fixed
//! points: exact retrieval, unit invariance, schedule purity, step budgets,
//! normalization round-trips, and the analytic training gradient.

use proptest::prelude::*;
use ragdp_core::envs::{ChunkPair, Stats};
use ragdp_core::kbase::{Embedder, KbMeta, KnowledgeBase};
use ragdp_core::nn::{loss_score_matching, Arch, PredictionType, ScheduleRef, ScoreNet};
use ragdp_core::ragdp::leap_steps;
use ragdp_core::rng::rng_from_seed;
use ragdp_core::schedules::{make_ve_schedule, make_vp_schedule};
use ragdp_core::tensor::Mat;

fn kb_from_raw(
    raw_windows: &[Vec<f64>],
    stats: &Stats,
    t_o: usize,
    obs_dim: usize,
    act_dim: usize,
) -> KnowledgeBase {
    let embedder = Embedder::new(stats, t_o).unwrap();
    let mut keys = Vec::new();
    for w in raw_windows {
        let m = Mat::from_vec(t_o, obs_dim, w.clone()).unwrap();
        keys.extend(embedder.embed(&m).unwrap());
    }
    let values = vec![0.0f32; raw_windows.len() * act_dim];
    let meta = KbMeta {
        task_id: "prop".into(),
        t_o,
        t_p: 1,
        obs_dim,
        act_dim,
        dataset_hash: 0,
        skipped_episodes: 0,
    };
    let act_stats = Stats {
        mean: vec![0.0; act_dim],
        std: vec![1.0; act_dim],
    };
    KnowledgeBase::from_parts(keys, values, embedder, act_stats, meta).unwrap()
}

fn brute_force(kb: &KnowledgeBase, query: &Mat) -> (usize, f64) {
    let q = kb.embedder.embed(query).unwrap();
    let keys = kb.keys_flat();
    let dim = kb.key_dim();
    let mut best = (0usize, f64::INFINITY);
    for i in 0..kb.len() {
        let mut d = 0.0f64;
        for (a, b) in q.iter().zip(&keys[i * dim..(i + 1) * dim]) {
            let diff = *a as f64 - *b as f64;
            d += diff * diff;
        }
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

prop_compose! {
    fn raw_db(max_n: usize)
        (t_o in 1usize..=3, obs_dim in 1usize..=6, n in 1usize..=8)
        (windows in prop::collection::vec(
            prop::collection::vec(-4.0f64..4.0, t_o * obs_dim),
            n..=max_n,
        ),
         query in prop::collection::vec(-4.0f64..4.0, t_o * obs_dim),
         mean in prop::collection::vec(-2.0f64..2.0, obs_dim),
         std in prop::collection::vec(0.1f64..3.0, obs_dim),
         t_o in Just(t_o), obs_dim in Just(obs_dim))
        -> (Vec<Vec<f64>>, Vec<f64>, Stats, usize, usize)
    {
        (windows, query, Stats { mean, std }, t_o, obs_dim)
    }
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn retrieval_matches_an_independent_scan(
        (windows, query, stats, t_o, obs_dim) in raw_db(60),
    ) {
        let kb = kb_from_raw(&windows, &stats, t_o, obs_dim, 2);
        let q = Mat::from_vec(t_o, obs_dim, query).unwrap();
        let hit = kb.retrieve(&q).unwrap();
        let (want_idx, want_dist) = brute_force(&kb, &q);
        prop_assert_eq!(hit.index, want_idx);
        prop_assert_eq!(hit.distance.to_bits(), want_dist.to_bits());
    }

    #[test]
    fn retrieval_breaks_exact_ties_toward_the_lowest_index(
        window in prop::collection::vec(-4.0f64..4.0, 4),
        copies in 2usize..=20,
    ) {
        let windows = vec![window.clone(); copies];
        let stats = Stats { mean: vec![0.0; 2], std: vec![1.0; 2] };
        let kb = kb_from_raw(&windows, &stats, 2, 2, 1);
        let q = Mat::from_vec(2, 2, window).unwrap();
        prop_assert_eq!(kb.retrieve(&q).unwrap().index, 0);
    }

    #[test]
    fn rescaling_observation_units_preserves_retrieval(
        (windows, query, stats, t_o, obs_dim) in raw_db(40),
        exp in -8i32..=8,
    ) {
        let c = (2.0f64).powi(exp);
        let kb = kb_from_raw(&windows, &stats, t_o, obs_dim, 2);
        let scaled_windows: Vec<Vec<f64>> = windows
            .iter()
            .map(|w| w.iter().map(|x| x * c).collect())
            .collect();
        let scaled_stats = Stats {
            mean: stats.mean.iter().map(|m| m * c).collect(),
            std: stats.std.iter().map(|s| s * c).collect(),
        };
        let kb2 = kb_from_raw(&scaled_windows, &scaled_stats, t_o, obs_dim, 2);

        let q1 = Mat::from_vec(t_o, obs_dim, query.clone()).unwrap();
        let q2 = Mat::from_vec(t_o, obs_dim, query.iter().map(|x| x * c).collect()).unwrap();
        let h1 = kb.retrieve(&q1).unwrap();
        let h2 = kb2.retrieve(&q2).unwrap();
        prop_assert_eq!(h1.index, h2.index);
        prop_assert_eq!(h1.distance.to_bits(), h2.distance.to_bits());
    }

    #[test]
    fn appended_entry_wins_only_when_strictly_closer(
        (mut windows, query, stats, t_o, obs_dim) in raw_db(30),
        extra in prop::collection::vec(-4.0f64..4.0, 18),
    ) {
        let kb = kb_from_raw(&windows, &stats, t_o, obs_dim, 2);
        let q = Mat::from_vec(t_o, obs_dim, query).unwrap();
        let before = kb.retrieve(&q).unwrap();

        windows.push(extra[..t_o * obs_dim].to_vec());
        let kb2 = kb_from_raw(&windows, &stats, t_o, obs_dim, 2);
        let after = kb2.retrieve(&q).unwrap();
        let only = kb_from_raw(&windows[windows.len() - 1..], &stats, t_o, obs_dim, 2);
        let new_dist = only.retrieve(&q).unwrap().distance;

        if new_dist < before.distance {
            prop_assert_eq!(after.index, kb2.len() - 1);
            prop_assert_eq!(after.distance.to_bits(), new_dist.to_bits());
        } else {
            prop_assert_eq!(after.index, before.index);
            prop_assert_eq!(after.distance.to_bits(), before.distance.to_bits());
        }
    }

    #[test]
    fn vp_schedule_is_a_pure_value(
        t in 1usize..=300,
        b0 in 1e-6f64..0.05,
        spread in 1.0f64..20.0,
    ) {
        let b1 = (b0 * spread).min(0.999);
        let a = make_vp_schedule(t, b0, b1).unwrap();
        let b = make_vp_schedule(t, b0, b1).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.beta), bits(&b.beta));
        prop_assert_eq!(bits(&a.alpha_bar), bits(&b.alpha_bar));
        prop_assert_eq!(bits(&a.sigma), bits(&b.sigma));

        prop_assert_eq!(a.alpha_bar_at(0).unwrap().to_bits(), 1.0f64.to_bits());
        for tau in 1..=t {
            prop_assert!(a.alpha_bar_at(tau).unwrap() < a.alpha_bar_at(tau - 1).unwrap());
            prop_assert!(a.alpha_bar_at(tau).unwrap() > 0.0);
        }
    }

    #[test]
    fn ve_schedule_is_a_pure_value(
        t in 1usize..=200,
        smin in 1e-4f64..0.5,
        spread in 2.0f64..1000.0,
        rho in 1.0f64..12.0,
    ) {
        let smax = smin * spread;
        let a = make_ve_schedule(t, smin, smax, rho).unwrap();
        let b = make_ve_schedule(t, smin, smax, rho).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.sigma), bits(&b.sigma));

        prop_assert_eq!(a.sigma[0].to_bits(), smin.to_bits());
        prop_assert_eq!(a.sigma[t].to_bits(), smax.to_bits());
        for tau in 1..=t {
            prop_assert!(a.sigma[tau] > a.sigma[tau - 1]);
        }
    }

    #[test]
    fn leap_step_budget_laws(
        t in 1usize..=500,
        r in 0.0f64..=1.0,
        r2 in 0.0f64..=1.0,
        k_frac in 0.0f64..=1.0,
    ) {
        let steps = leap_steps(r, t).unwrap();
        prop_assert!(steps <= t);
        prop_assert_eq!(leap_steps(0.0, t).unwrap(), t);
        prop_assert_eq!(leap_steps(1.0, t).unwrap(), 0);

        let (lo, hi) = if r <= r2 { (r, r2) } else { (r2, r) };
        prop_assert!(leap_steps(lo, t).unwrap() >= leap_steps(hi, t).unwrap());

        // Ratios that nominally leave k of t steps must survive the trip
        // through floating point exactly.
        let k = ((t as f64) * k_frac).round() as usize;
        let k = k.min(t);
        let r_exact = (t - k) as f64 / t as f64;
        prop_assert_eq!(leap_steps(r_exact, t).unwrap(), k);
    }

    #[test]
    fn normalization_round_trips(
        rows in 2usize..=30,
        cols in 1usize..=6,
        seed in 0u64..1000,
        scale in 0.01f64..100.0,
    ) {
        let mut rng = rng_from_seed(seed);
        let m = ragdp_core::rng::normal_mat(rows, cols, &mut rng).scale(scale);
        let stats = Stats::fit(&[&m]).unwrap();
        let back = stats.denormalize(&stats.normalize(&m).unwrap()).unwrap();
        for (a, b) in m.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

fn random_chunks(
    n: usize,
    t_o: usize,
    obs_dim: usize,
    t_p: usize,
    act_dim: usize,
    seed: u64,
) -> Vec<ChunkPair> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| ChunkPair {
            obs: ragdp_core::rng::normal_mat(t_o, obs_dim, &mut rng),
            act: ragdp_core::rng::normal_mat(t_p, act_dim, &mut rng),
        })
        .collect()
}

proptest! {
    #![proptest_config(cases(8))]

    #[test]
    fn training_gradient_matches_finite_differences_on_random_shapes(
        obs_dim in 1usize..=3,
        act_dim in 1usize..=2,
        t_o in 1usize..=2,
        t_p in 1usize..=3,
        vp in any::<bool>(),
        seed in 0u64..1_000_000,
    ) {
        let prediction = if vp { PredictionType::Epsilon } else { PredictionType::Sample };
        let arch = Arch { hidden: 8, blocks: 1 };
        let net = ScoreNet::new(arch, prediction, obs_dim, act_dim, t_o, t_p, 4, seed).unwrap();
        let pairs = random_chunks(2, t_o, obs_dim, t_p, act_dim, seed ^ 0x9e37);

        let vp_sched = make_vp_schedule(10, 1e-3, 0.2).unwrap();
        let ve_sched = make_ve_schedule(10, 0.01, 10.0, 7.0).unwrap();
        let schedule = if vp {
            ScheduleRef::Vp(&vp_sched)
        } else {
            ScheduleRef::Ve(&ve_sched)
        };

        let base_rng = rng_from_seed(seed.wrapping_add(1));
        let analytic =
            loss_score_matching(&net, &pairs, schedule, &mut base_rng.clone()).unwrap();

        let h = 1e-5;
        let mut diff_sq = 0.0f64;
        let mut fd_sq = 0.0f64;
        for i in 0..net.params.len() {
            let mut plus = net.clone();
            plus.params[i] += h;
            let lp = loss_score_matching(&plus, &pairs, schedule, &mut base_rng.clone())
                .unwrap()
                .loss;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let lm = loss_score_matching(&minus, &pairs, schedule, &mut base_rng.clone())
                .unwrap()
                .loss;
            let fd = (lp - lm) / (2.0 * h);
            diff_sq += (analytic.grad[i] - fd) * (analytic.grad[i] - fd);
            fd_sq += fd * fd;
        }
        let rel = (diff_sq / fd_sq.max(1e-30)).sqrt();
        prop_assert!(rel < 1e-4, "relative gradient error {}", rel);
    }
}
