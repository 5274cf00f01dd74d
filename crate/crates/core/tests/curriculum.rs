use std::collections::BTreeSet;

use cnas::curriculum::{
    infer, operation_warmup, run_cnas, run_fixed, run_method, run_node_curriculum, run_random, search_rng,
    CurriculumConfig, IterKind, Method, OperationOrder, SearchTrace,
};
use cnas::{
    Architecture, FactorizedPolicy, PlantedLandscape, PlantedParams, RewardOracle, SearchSpaceStage, SpaceShape,
    SupernetParams, SurrogateSupernet,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn planted(b: usize, k: usize, sigma: f64, seed: u64) -> PlantedLandscape {
    let params = PlantedParams {
        noise_sigma: sigma,
        ..PlantedParams::default()
    };
    PlantedLandscape::random(SpaceShape::with_catalog(b, 1, k).unwrap(), seed, params).unwrap()
}

fn config(b: usize, k: usize) -> CurriculumConfig {
    CurriculumConfig::new(SpaceShape::with_catalog(b, 1, k).unwrap())
}

fn ops_used(arch: &Architecture) -> BTreeSet<usize> {
    arch.edges().map(|(_, _, _, e)| e.op).collect()
}

fn final_score(method: Method, cfg: &CurriculumConfig, oracle: &PlantedLandscape, seed: u64) -> f64 {
    let trace = run_method(method, cfg, &mut oracle.clone(), &mut search_rng(seed)).unwrap();
    trace.final_result().final_score
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn single_operation_curriculum_is_plain_reinforce() {
    let cfg = config(5, 1);
    let oracle = planted(5, 1, 0.02, 3);
    let cnas = run_cnas(&cfg, &mut oracle.clone(), &mut search_rng(9)).unwrap();
    let fixed = run_fixed(&cfg, &oracle, &mut search_rng(9)).unwrap();
    assert_eq!(cnas.stages.len(), 1);
    assert_eq!(cnas.rows, fixed.rows);
    assert_eq!(cnas.stages, fixed.stages);
}

#[test]
fn noiseless_planted_optimum_is_found() {
    let cfg = config(5, 3);
    let hits = (0..20)
        .filter(|&seed| {
            let oracle = planted(5, 3, 0.0, seed);
            let trace = run_cnas(&cfg, &mut oracle.clone(), &mut search_rng(seed)).unwrap();
            trace.final_result().architecture == *oracle.planted()
        })
        .count();
    assert!(hits >= 18, "planted optimum found in {hits} of 20 seeds");
}

#[test]
fn stages_only_sample_admitted_operations_in_order() {
    let mut cfg = config(5, 4);
    cfg.operation_order = OperationOrder::Explicit(vec![1, 3, 0, 2]);
    let oracle = planted(5, 4, 0.02, 1);
    let trace = run_cnas(&cfg, &mut oracle.clone(), &mut search_rng(1)).unwrap();
    assert_eq!(
        trace.operation_order,
        ["sep_conv_5x5", "avg_pool_3x3", "sep_conv_3x3", "max_pool_3x3"]
    );
    let order = [1, 3, 0, 2];
    for stage in 1..=4 {
        let allowed: BTreeSet<usize> = order[..stage].iter().copied().collect();
        let mut seen = BTreeSet::new();
        for row in trace.rows.iter().filter(|r| r.stage == stage) {
            seen.extend(ops_used(&row.encoding.parse().unwrap()));
        }
        assert!(
            seen.is_subset(&allowed),
            "stage {stage} used {seen:?}, admitted {allowed:?}"
        );
        // uniform warmup reaches the newly admitted operation
        assert!(
            seen.contains(&order[stage - 1]),
            "stage {stage} never tried {}",
            order[stage - 1]
        );
    }
}

#[test]
fn stage_indices_never_decrease_and_entropy_stays_finite() {
    let oracle = planted(6, 3, 0.02, 4);
    for method in Method::ALL {
        let trace = run_method(method, &config(6, 3), &mut oracle.clone(), &mut search_rng(4)).unwrap();
        if method != Method::Fixed {
            assert!(trace.rows.windows(2).all(|w| w[0].stage <= w[1].stage), "{method}");
        }
        assert!(trace.rows.iter().all(|r| r.entropy.is_finite()), "{method}");
    }
}

#[test]
fn budgets_match_at_every_checkpoint() {
    let cfg = config(6, 4);
    let oracle = planted(6, 4, 0.02, 2);
    let traces: Vec<SearchTrace> = Method::ALL
        .into_iter()
        .map(|m| run_method(m, &cfg, &mut oracle.clone(), &mut search_rng(2)).unwrap())
        .collect();
    let evals = |t: &SearchTrace| {
        t.stages
            .iter()
            .map(|s| (s.evaluations, s.train_steps))
            .collect::<Vec<_>>()
    };
    let cnas = evals(&traces[0]);
    assert_eq!(cnas, evals(&traces[1]), "fixed");
    assert_eq!(cnas, evals(&traces[3]), "random");
    // the node curriculum has B-3 checkpoints; only its final total is comparable
    assert_eq!(cnas.last(), evals(&traces[2]).last(), "node");

    // the trace rows account for every evaluation
    for t in &traces {
        let evaluated = t.rows.iter().filter(|r| r.reward.is_some()).count() as u64;
        let per_run: u64 = if t.method == Method::Fixed {
            t.stages.iter().map(|s| s.evaluations).sum()
        } else {
            t.final_result().evaluations
        };
        assert_eq!(evaluated, per_run, "{}", t.method);
    }
    let block = (cfg.controller_iters_per_stage * cfg.samples_per_controller_iter + cfg.infer_samples) as u64;
    assert_eq!(
        cnas.iter().map(|c| c.0).collect::<Vec<_>>(),
        [block, 2 * block, 3 * block, 4 * block]
    );
}

#[test]
fn warmup_leaves_the_controller_untouched() {
    let shape = SpaceShape::with_catalog(5, 1, 3).unwrap();
    let mut net = SurrogateSupernet::new(shape.clone(), 5, SupernetParams::default()).unwrap();
    let mut policy = FactorizedPolicy::new(SearchSpaceStage::new(shape.clone(), 2).unwrap());
    policy.slot_logits_mut(1)[0] = 0.75;
    let before = policy.to_checkpoint();
    let stage = SearchSpaceStage::new(shape, 3).unwrap();
    let policy = policy.extend_operation(&stage).unwrap();
    let extended = policy.to_checkpoint();
    operation_warmup(&policy, &mut net, &stage, 50, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(policy.to_checkpoint(), extended);
    assert_ne!(before, extended);
}

#[test]
fn zero_warmup_leaves_the_supernet_untouched() {
    let shape = SpaceShape::with_catalog(5, 1, 3).unwrap();
    let mut net = SurrogateSupernet::new(shape.clone(), 5, SupernetParams::default()).unwrap();
    let copy = net.clone();
    let stage = SearchSpaceStage::full(shape);
    let policy = FactorizedPolicy::new(stage.clone());
    operation_warmup(&policy, &mut net, &stage, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(net, copy);
}

#[test]
fn warmup_visits_every_admitted_operation_equally() {
    // each edge draws each of the i admitted ops with probability 1/i, so the
    // mean visit count per (edge, op) is M / i for old and new ops alike
    let (m, i) = (120usize, 3usize);
    let shape = SpaceShape::with_catalog(6, 1, 3).unwrap();
    let stage = SearchSpaceStage::new(shape.clone(), i).unwrap();
    let policy = FactorizedPolicy::new(stage.clone());
    let (mut new_visits, mut old_visits, mut edges) = (0u64, 0u64, 0u64);
    let seeds = 200;
    for seed in 0..seeds {
        let mut net = SurrogateSupernet::new(shape.clone(), seed, SupernetParams::default()).unwrap();
        operation_warmup(&policy, &mut net, &stage, m, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for node in 0..shape.intermediate_nodes() {
            for slot in 0..2 {
                new_visits += net.visits(0, node, slot, i - 1);
                old_visits += (0..i - 1).map(|op| net.visits(0, node, slot, op)).sum::<u64>();
                edges += 1;
            }
        }
    }
    let expected = m as f64 / i as f64;
    let new_mean = new_visits as f64 / edges as f64;
    let old_mean = old_visits as f64 / (edges * (i as u64 - 1)) as f64;
    // binomial(M, 1/i) per edge: sd of the mean over `edges` draws
    let se = (m as f64 * (1.0 / i as f64) * (1.0 - 1.0 / i as f64) / edges as f64).sqrt();
    assert!((new_mean - expected).abs() < 4.0 * se, "new {new_mean} vs {expected}");
    assert!((old_mean - expected).abs() < 4.0 * se, "old {old_mean} vs {expected}");
}

#[test]
fn inference_of_one_sample_passes_it_through() {
    let oracle = planted(5, 3, 0.02, 0);
    let stage = SearchSpaceStage::full(oracle.shape().clone());
    let mut policy = FactorizedPolicy::new(stage);
    policy.slot_logits_mut(3)[2] = 1.5;
    let mut a = ChaCha8Rng::seed_from_u64(11);
    let mut b = a.clone();
    let (arch, reward) = infer(&policy, &oracle, 1, &mut a).unwrap();
    let sample = policy.sample(&mut b);
    assert_eq!(arch, sample);
    assert_eq!(reward, oracle.evaluate(&sample, &mut b).unwrap());
    assert!(infer(&policy, &oracle, 0, &mut a).is_err());
}

#[test]
fn inference_of_a_deterministic_policy_returns_its_architecture() {
    let oracle = planted(5, 3, 0.02, 0);
    let stage = SearchSpaceStage::full(oracle.shape().clone());
    let mut policy = FactorizedPolicy::new(stage);
    let target = oracle.planted().decisions();
    for (d, &v) in target.iter().enumerate() {
        policy.slot_logits_mut(d)[v] = 1e6;
    }
    let (arch, _) = infer(&policy, &oracle, 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(arch, *oracle.planted());
}

#[test]
fn best_of_ten_matches_exact_order_statistics() {
    // E[max of n uniform draws over N points] = Σ r_(k) [(k/N)^n - ((k-1)/N)^n]
    let oracle = planted(4, 2, 0.0, 6);
    let stage = SearchSpaceStage::full(oracle.shape().clone());
    let mut rewards: Vec<f64> = stage
        .enumerate(100)
        .unwrap()
        .iter()
        .map(|a| oracle.noiseless(a).unwrap())
        .collect();
    rewards.sort_by(f64::total_cmp);
    let big_n = rewards.len() as f64;
    let exact: f64 = rewards
        .iter()
        .enumerate()
        .map(|(k, r)| r * (((k + 1) as f64 / big_n).powi(10) - (k as f64 / big_n).powi(10)))
        .sum();
    let single = mean(&rewards);
    let policy = FactorizedPolicy::new(stage);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trials = 20_000;
    let empirical = (0..trials)
        .map(|_| infer(&policy, &oracle, 10, &mut rng).unwrap().1)
        .sum::<f64>()
        / trials as f64;
    assert!(exact > single);
    assert!(
        (empirical - exact).abs() / exact < 0.01,
        "empirical {empirical} vs exact {exact}"
    );
}

#[test]
fn fixed_checkpoints_retrain_from_scratch() {
    let cfg = config(5, 3);
    let oracle = planted(5, 3, 0.02, 8);
    let trace = run_fixed(&cfg, &oracle, &mut search_rng(8)).unwrap();
    for stage in 1..=3 {
        let rows: Vec<_> = trace.rows.iter().filter(|r| r.stage == stage).collect();
        let infers = rows.iter().filter(|r| r.kind == IterKind::Infer).count();
        assert_eq!(infers, stage * cfg.infer_samples, "one inference per block");
        assert!(rows
            .iter()
            .all(|r| ops_used(&r.encoding.parse().unwrap()).iter().all(|&op| op < stage)));
        // a fresh controller starts uniform: its first warmup row carries the
        // entropy of the uniform policy over Ω_stage
        let uniform = FactorizedPolicy::new(SearchSpaceStage::new(oracle.shape().clone(), stage).unwrap()).entropy();
        assert!((rows[0].entropy - uniform).abs() < 1e-12);
    }
}

#[test]
fn curriculum_is_not_worse_than_fixed_space_training() {
    let cfg = config(5, 4);
    let (mut cnas, mut fixed) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let oracle = planted(5, 4, 0.02, seed);
        cnas.push(final_score(Method::Cnas, &cfg, &oracle, seed));
        fixed.push(final_score(Method::Fixed, &cfg, &oracle, seed));
    }
    assert!(
        mean(&cnas) >= mean(&fixed),
        "cnas {} fixed {}",
        mean(&cnas),
        mean(&fixed)
    );
}

#[test]
fn node_curriculum_grows_one_node_per_stage() {
    let cfg = config(6, 3);
    let oracle = planted(6, 3, 0.02, 1);
    let trace = run_node_curriculum(&cfg, &mut oracle.clone(), &mut search_rng(1)).unwrap();
    assert_eq!(trace.stages.len(), 3);
    for row in &trace.rows {
        let arch: Architecture = row.encoding.parse().unwrap();
        assert_eq!(
            arch.intermediate_nodes(),
            row.stage,
            "stage {} row {}",
            row.stage,
            row.encoding
        );
        if row.stage == 1 {
            assert!(arch.edges().all(|(_, _, _, e)| e.input < 2));
        }
    }
    let policy = trace.final_policy.as_ref().unwrap();
    assert_eq!(policy.stage().shape().intermediate_nodes(), 3);
}

#[test]
fn node_transition_keeps_existing_slots() {
    let shape = SpaceShape::with_catalog(6, 2, 3).unwrap();
    let small = SearchSpaceStage::full(shape.with_total_nodes(4).unwrap());
    let mut policy = FactorizedPolicy::new(small);
    // 1 intermediate node: 2 edges x (input, op) per group
    assert_eq!(policy.slots().len(), 2 * 2 * 2);
    for d in 0..policy.slots().len() {
        for (j, z) in policy.slot_logits_mut(d).iter_mut().enumerate() {
            *z = 0.1 * (d * 3 + j) as f64 - 0.4;
        }
    }
    let grown = policy
        .extend_node(&SearchSpaceStage::full(shape.with_total_nodes(5).unwrap()))
        .unwrap();
    for (d, slot) in policy.slots().iter().enumerate() {
        let e = grown.slots().iter().position(|s| s == slot).unwrap();
        assert_eq!(policy.logits()[d], grown.logits()[e]);
    }
    for (e, slot) in grown.slots().iter().enumerate() {
        if slot.node == 1 {
            let p = grown.probabilities(e);
            assert!(p.iter().all(|&x| (x - p[0]).abs() < 1e-15));
        }
    }
}

#[test]
fn curriculum_is_not_worse_than_node_growth() {
    let cfg = config(7, 3);
    let (mut cnas, mut node) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let oracle = planted(7, 3, 0.02, seed);
        cnas.push(final_score(Method::Cnas, &cfg, &oracle, seed));
        node.push(final_score(Method::Node, &cfg, &oracle, seed));
    }
    assert!(mean(&cnas) >= mean(&node), "cnas {} node {}", mean(&cnas), mean(&node));
}

#[test]
fn random_search_tracks_its_best_sample() {
    let mut cfg = config(4, 2);
    cfg.controller_iters_per_stage = 1;
    cfg.samples_per_controller_iter = 1;
    cfg.infer_samples = 1;
    let oracle = planted(4, 2, 0.02, 0);
    let trace = run_random(&cfg, &mut oracle.clone(), &mut search_rng(0)).unwrap();
    let evaluated: Vec<_> = trace.rows.iter().filter(|r| r.reward.is_some()).collect();
    assert_eq!(
        evaluated[0].best_so_far, evaluated[0].reward,
        "a single sample is its own best"
    );
    let mut best = f64::NEG_INFINITY;
    for row in &evaluated {
        best = best.max(row.reward.unwrap());
        assert_eq!(row.best_so_far, Some(best));
    }
    let last = trace.final_result();
    assert_eq!(last.validation_reward, best);
}

#[test]
fn random_search_finds_the_optimum_given_enough_samples() {
    // 16 architectures and n uniform draws: P(miss) = (15/16)^n
    let mut cfg = config(4, 2);
    cfg.controller_iters_per_stage = 4;
    cfg.samples_per_controller_iter = 4;
    cfg.infer_samples = 1;
    let n = 2 * (16 + 1);
    let p_hit = 1.0 - (15.0f64 / 16.0).powi(n);
    let trials = 300;
    let hits = (0..trials)
        .filter(|&seed| {
            let oracle = planted(4, 2, 0.0, seed);
            let trace = run_random(&cfg, &mut oracle.clone(), &mut search_rng(seed)).unwrap();
            trace.final_result().architecture == *oracle.planted()
        })
        .count();
    let rate = hits as f64 / trials as f64;
    let se = (p_hit * (1.0 - p_hit) / trials as f64).sqrt();
    assert!(
        (rate - p_hit).abs() <= 3.0 * se + 1.0 / trials as f64,
        "rate {rate} vs {p_hit}"
    );
}

#[test]
fn curriculum_beats_random_search() {
    let cfg = config(6, 4);
    let (mut cnas, mut random) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let oracle = planted(6, 4, 0.02, seed);
        cnas.push(final_score(Method::Cnas, &cfg, &oracle, seed));
        random.push(final_score(Method::Random, &cfg, &oracle, seed));
    }
    assert!(
        mean(&cnas) > mean(&random),
        "cnas {} random {}",
        mean(&cnas),
        mean(&random)
    );
}

#[test]
fn operation_growth_preserves_learned_ratios() {
    let oracle = planted(5, 3, 0.02, 3);
    let mut cfg = config(5, 3);
    cfg.operation_order = OperationOrder::Catalog;
    let trace = run_cnas(&cfg, &mut oracle.clone(), &mut search_rng(3)).unwrap();
    let policy = trace.final_policy.unwrap();
    let narrowed_stage = SearchSpaceStage::new(policy.shape().clone(), 2).unwrap();
    // rebuild the stage-2 view from the same logits, then widen it again
    let text = policy.to_checkpoint().replace("active_ops 3", "active_ops 2");
    let narrow = FactorizedPolicy::from_checkpoint(&text).unwrap();
    assert_eq!(narrow.stage(), &narrowed_stage);
    let wide = narrow.extend_operation(&narrowed_stage.widened().unwrap()).unwrap();
    for (d, slot) in narrow.slots().iter().enumerate() {
        let (p, q) = (narrow.probabilities(d), wide.probabilities(d));
        match slot.kind {
            cnas::cell_space::DecisionKind::Input => assert_eq!(p, q),
            cnas::cell_space::DecisionKind::Operation => {
                assert!((p[0] / p[1] - q[0] / q[1]).abs() < 1e-12 * (p[0] / p[1]));
            }
        }
    }
}

#[test]
fn entropy_does_not_collapse_under_constant_rewards() {
    let shape = SpaceShape::with_catalog(5, 1, 3).unwrap();
    let stage = SearchSpaceStage::full(shape);
    let mut policy = FactorizedPolicy::new(stage);
    let mut baseline = cnas::Baseline::new();
    let cfg = cnas::PolicyUpdateConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let start = policy.entropy();
    for _ in 0..500 {
        let batch: Vec<_> = (0..8).map(|_| (policy.sample(&mut rng), 0.5)).collect();
        policy.reinforce_step(&batch, &cfg, &mut baseline).unwrap();
    }
    // zero advantage leaves only the entropy term, which cannot lower entropy
    assert!(policy.entropy() >= start - 1e-9, "{} < {start}", policy.entropy());
}

#[test]
fn a_seed_determines_the_whole_trace() {
    let cfg = config(5, 3);
    let net = SurrogateSupernet::new(cfg.shape.clone(), 4, SupernetParams::default()).unwrap();
    for method in Method::ALL {
        let a = run_method(method, &cfg, &mut net.clone(), &mut search_rng(4)).unwrap();
        let b = run_method(method, &cfg, &mut net.clone(), &mut search_rng(4)).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv("t", &mut x).unwrap();
        b.write_csv("t", &mut y).unwrap();
        assert_eq!(x, y, "{method}");
        assert_eq!(a.stages, b.stages);
    }
}

#[test]
fn mismatched_oracle_shape_is_rejected() {
    let cfg = config(5, 3);
    let oracle = planted(6, 3, 0.0, 0);
    assert!(matches!(
        run_cnas(&cfg, &mut oracle.clone(), &mut search_rng(0)),
        Err(cnas::Error::ShapeMismatch(_))
    ));
}

#[test]
fn orders_starting_without_parameters_are_rejected() {
    let mut cfg = config(5, 4);
    // catalog op 2 is a pooling operation
    cfg.operation_order = OperationOrder::Explicit(vec![2, 0, 1, 3]);
    assert!(matches!(cfg.validate(), Err(cnas::Error::Config(_))));
    cfg.operation_order = OperationOrder::Explicit(vec![0, 0, 1, 3]);
    assert!(matches!(cfg.validate(), Err(cnas::Error::Config(_))));
}
