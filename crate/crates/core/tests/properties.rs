use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swarm_qed::descriptors::{
    combine_hbd, compute_hbd, compute_sdbc, distance_sum, geometric_median, EnvDescriptor,
    SpiritCounts, ENV_CELLS, SPIRIT_ACTIONS, SPIRIT_STATES,
};
use swarm_qed::env::{EnvironmentSpec, ATTRIBUTES, LEVELS};
use swarm_qed::genome::{
    mutate, polynomial_mutation, random_genome, Genome, MutationParams, WEIGHT_BOUND,
};
use swarm_qed::qd::{Archive, CellIndexer, Elite};
use swarm_qed::recovery::spirit_distance;
use swarm_qed::recovery::stats::{cliffs_delta, wilcoxon_rank_sum};
use swarm_qed::sim::{wrap_angle, ArenaSpec, Pose, RobotBody, TrialLog, Velocity};
use swarm_qed::tasks::{fitness, TaskKind};

/// Random trajectory inside one of the table arenas.
fn trajectory() -> impl Strategy<Value = TrialLog> {
    (0usize..4, 2usize..8, 1usize..12, any::<u64>()).prop_map(|(area, robots, cycles, seed)| {
        use rand::Rng;
        let env = EnvironmentSpec {
            arena_area_m2: swarm_qed::env::AREA_SET[area],
            ..EnvironmentSpec::NORMAL
        };
        let side = env.arena_side();
        let body = RobotBody::for_environment(&env);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = body.radius;
        let mut poses = Vec::new();
        let mut vels = Vec::new();
        for _ in 0..cycles {
            poses.push(
                (0..robots)
                    .map(|_| {
                        Pose::new(
                            rng.random_range(r..side - r),
                            rng.random_range(r..side - r),
                            rng.random_range(-3.2..3.2),
                        )
                    })
                    .collect(),
            );
            vels.push(
                (0..robots)
                    .map(|_| Velocity {
                        linear: rng.random_range(-body.max_linear_speed..=body.max_linear_speed),
                        angular: rng.random_range(-body.max_angular_speed..=body.max_angular_speed),
                    })
                    .collect(),
            );
        }
        TrialLog::from_poses(ArenaSpec::empty(side), body, poses, vels)
    })
}

fn simplex_point(seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(SPIRIT_STATES * SPIRIT_ACTIONS);
    for _ in 0..SPIRIT_STATES {
        let block: Vec<f64> = (0..SPIRIT_ACTIONS)
            .map(|_| -rng.random::<f64>().max(1e-300).ln())
            .collect();
        let s: f64 = block.iter().sum();
        out.extend(block.iter().map(|v| v / s));
    }
    out
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(-5i32..5).prop_map(f64::from), -1.0f64..1.0],
        1..15,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fitness_lies_in_unit_interval(log in trajectory()) {
        for task in TaskKind::ALL {
            let f = fitness(task, &log).unwrap();
            prop_assert!((0.0..=1.0).contains(&f), "{task}: {f}");
        }
    }

    #[test]
    fn hbd_and_sdbc_lie_in_unit_cube(log in trajectory()) {
        let h = compute_hbd(std::slice::from_ref(&log));
        prop_assert!(h.iter().all(|v| (0.0..=1.0).contains(v)), "{h:?}");
        let s = compute_sdbc(std::slice::from_ref(&log)).unwrap();
        prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)), "{s:?}");
    }

    #[test]
    fn hbd_combination_is_the_mean(a in prop::array::uniform3(0.0f64..1.0), b in prop::array::uniform3(0.0f64..1.0)) {
        let c = combine_hbd(&[a, b]);
        for k in 0..3 {
            prop_assert!((c[k] - 0.5 * (a[k] + b[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn spirit_blocks_are_distributions(pairs in prop::collection::vec((0usize..SPIRIT_STATES, 0usize..SPIRIT_ACTIONS), 0..300)) {
        let mut counts = SpiritCounts::new(0.1);
        for &(s, a) in &pairs {
            counts.add(s, a);
        }
        let d = counts.descriptor();
        prop_assert_eq!(d.len(), SPIRIT_STATES * SPIRIT_ACTIONS);
        for block in d.chunks(SPIRIT_ACTIONS) {
            prop_assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(block.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn spirit_distance_is_a_bounded_metric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (x, y, z) = (simplex_point(a), simplex_point(b), simplex_point(c));
        prop_assert_eq!(spirit_distance(&x, &x), 0.0);
        prop_assert_eq!(spirit_distance(&x, &y), spirit_distance(&y, &x));
        prop_assert!(spirit_distance(&x, &z) <= spirit_distance(&x, &y) + spirit_distance(&y, &z) + 1e-12);
        let d = spirit_distance(&x, &y);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn cliffs_delta_is_antisymmetric_and_bounded(x in sample(), y in sample()) {
        let d = cliffs_delta(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&d));
        prop_assert_eq!(d, -cliffs_delta(&y, &x).unwrap());
        prop_assert_eq!(cliffs_delta(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn wilcoxon_is_a_symmetric_probability(x in sample(), y in sample()) {
        let p = wilcoxon_rank_sum(&x, &y).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0, "{p}");
        let q = wilcoxon_rank_sum(&y, &x).unwrap();
        prop_assert!((p - q).abs() < 1e-12, "{p} vs {q}");
    }

    #[test]
    fn environment_key_is_a_bijection(idx in prop::array::uniform6(0usize..LEVELS)) {
        let spec = EnvironmentSpec::from_indices(idx);
        let d = EnvDescriptor::of(&spec).unwrap();
        prop_assert_eq!(d.0, idx);
        prop_assert!(d.key() < ENV_CELLS);
        prop_assert_eq!(EnvDescriptor::from_key(d.key()), Some(d));
        prop_assert_eq!(d.spec(), spec);
        prop_assert_eq!(d.as_vector().len(), ATTRIBUTES);
    }

    #[test]
    fn archive_cells_only_improve(inserts in prop::collection::vec((0usize..32, 0.0f64..1.0), 1..200)) {
        let mut archive = Archive::new(CellIndexer::Environment);
        let mut best = std::collections::BTreeMap::new();
        let mut coverage = 0;
        for (i, &(key, perf)) in inserts.iter().enumerate() {
            let before = archive.get(key).map(|e| e.performance);
            let inserted = archive.try_insert_at(key, Elite {
                genome: Genome::empty(),
                performance: perf,
                descriptor: Vec::new(),
                environment: EnvironmentSpec::NORMAL,
                eval_id: i as u64,
            });
            prop_assert_eq!(inserted, before.is_none_or(|b| perf > b));
            let now = archive.get(key).unwrap().performance;
            if let Some(b) = before {
                prop_assert!(now >= b);
            }
            let e = best.entry(key).or_insert(perf);
            *e = f64::max(*e, perf);
            prop_assert_eq!(now, best[&key]);
            prop_assert!(archive.coverage() >= coverage);
            coverage = archive.coverage();
        }
    }

    #[test]
    fn mutation_preserves_structural_caps(seed in any::<u64>(), steps in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = random_genome(&mut rng);
        for _ in 0..steps {
            g = mutate(&g, &MutationParams::default(), &mut rng);
            prop_assert!(Genome::new(g.hidden(), g.connections().to_vec()).is_ok());
            prop_assert!(g.connections().iter().all(|c| c.weight.abs() <= WEIGHT_BOUND));
        }
        prop_assert_eq!(Genome::from_text(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn polynomial_mutation_stays_in_bounds(v in -2.0f64..=2.0, eta in 0.0f64..50.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = polynomial_mutation(v, -2.0, 2.0, eta, &mut rng);
        prop_assert!((-2.0..=2.0).contains(&m));
    }

    #[test]
    fn geometric_median_beats_every_sample(points in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..12)) {
        let m = geometric_median(&points);
        let at_median = distance_sum(&points, &m);
        for p in &points {
            prop_assert!(at_median <= distance_sum(&points, p) + 1e-7);
        }
    }

    #[test]
    fn wrapped_angles_are_canonical(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        prop_assert!(((a - w) / std::f64::consts::TAU - ((a - w) / std::f64::consts::TAU).round()).abs() < 1e-9);
    }
}
