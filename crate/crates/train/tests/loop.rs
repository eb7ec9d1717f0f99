mod common;

use leader_core::attention::uniform_attention;
use leader_core::PlannerConfig;
use leader_train::actor::NetworkMemory;
use leader_train::{actor_step, train, AttentionSource, CurveRecord, Learner, TrainConfig};

use common::{crossing_world, small_networks};

fn quick_config(total: usize, warmup: usize) -> TrainConfig {
    TrainConfig {
        warmup_steps: warmup,
        total_steps: total,
        batch_size: 8,
        buffer_capacity: 40,
        max_episode_steps: 15,
        seed: 3,
        planner: PlannerConfig {
            scenarios: 10,
            max_expansions: 5,
            ..PlannerConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn crossing_candidates_put_the_crossing_path_first() {
    let world = crossing_world();
    let ep = world.start_episode(0, 0, 10).unwrap();
    assert_eq!(ep.paths[0].len(), 2);
    let cross_end = ep.paths[0][0].point_at(1e9);
    assert!(cross_end.y > 30.0, "first candidate should cross the ego lane");
    assert_eq!(ep.belief.agent(0), &[0.1, 0.9]);
}

#[test]
fn warmup_step_uses_uniform_attention_and_records_the_plan_value() {
    let world = crossing_world();
    let cfg = small_networks();
    let learner = Learner::new(cfg, 1, 1e-3, 1e-4);
    let mut ep = world.start_episode(5, 0, 10).unwrap();
    let mut memory = NetworkMemory::new(&cfg);
    let planner = PlannerConfig {
        scenarios: 10,
        max_expansions: 5,
        ..PlannerConfig::default()
    };
    let source = AttentionSource::Learned {
        config: &cfg,
        generator: &learner.generator,
        critic: Some(&learner.critic),
        warmup: true,
    };
    let rec = actor_step(&world, &mut ep, &mut memory, source, &planner, 9).unwrap();
    assert_eq!(rec.q, uniform_attention(&rec.b));
    let entry = rec.entry.unwrap();
    assert_eq!(entry.value, rec.plan.value_estimate);
    assert_eq!(entry.step, 0);
    assert_eq!(ep.step, 1);
    assert!(memory.generator.iter().any(|&v| v != 0.0));
}

#[test]
fn baseline_sources_produce_no_entries() {
    let world = crossing_world();
    let cfg = small_networks();
    let mut ep = world.start_episode(5, 0, 10).unwrap();
    let mut memory = NetworkMemory::new(&cfg);
    let planner = PlannerConfig {
        scenarios: 10,
        max_expansions: 5,
        ..PlannerConfig::default()
    };
    let rec = actor_step(&world, &mut ep, &mut memory, AttentionSource::Ttc, &planner, 9).unwrap();
    assert!(rec.entry.is_none());
    let q = rec.q.agent(0);
    assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn warmup_only_run_leaves_the_generator_untouched() {
    let world = crossing_world();
    let cfg = small_networks();
    let config = quick_config(30, 30);
    let mut records: Vec<CurveRecord> = Vec::new();
    let out = train(&[world], &config, cfg, &mut records).unwrap();
    let init = Learner::new(cfg, config.seed, 1e-3, 1e-4);
    assert_eq!(out.learner.generator_steps(), 0);
    assert_eq!(out.learner.generator.values(), init.generator.values());
    assert!(out.learner.critic_steps() > 0);
    assert_eq!(out.steps, 30);
    assert!(records.iter().all(|r| r.generator_objective.is_nan()));
}

#[test]
fn generator_steps_follow_the_warmup() {
    let world = crossing_world();
    let cfg = small_networks();
    let config = quick_config(40, 25);
    let mut records: Vec<CurveRecord> = Vec::new();
    let out = train(&[world], &config, cfg, &mut records).unwrap();
    assert_eq!(out.learner.generator_steps(), 15);
    assert_eq!(out.learner.critic_steps(), (40 - config.batch_size + 1) as u64);
    assert!(out.buffer_len <= config.buffer_capacity);
    assert_eq!(records.last().unwrap().iteration, 40);
}

#[test]
fn single_actor_training_is_deterministic() {
    let cfg = small_networks();
    let config = quick_config(40, 20);
    let run = || {
        let mut records: Vec<CurveRecord> = Vec::new();
        let out = train(&[crossing_world()], &config, cfg, &mut records).unwrap();
        (records, out.learner.generator.values().to_vec(), out.learner.critic.values().to_vec())
    };
    let (ra, ga, ca) = run();
    let (rb, gb, cb) = run();
    let bits = |r: &[CurveRecord]| -> Vec<[u64; 5]> {
        r.iter()
            .map(|r| {
                [
                    r.iteration as u64,
                    r.cumulative_reward.to_bits(),
                    r.avg_speed.to_bits(),
                    r.critic_loss.to_bits(),
                    r.generator_objective.to_bits(),
                ]
            })
            .collect()
    };
    assert_eq!(bits(&ra), bits(&rb));
    assert_eq!(ga, gb);
    assert_eq!(ca, cb);
}

#[test]
fn several_actors_finish_the_step_budget() {
    let cfg = small_networks();
    let config = TrainConfig {
        actors: 3,
        ..quick_config(45, 20)
    };
    let mut records: Vec<CurveRecord> = Vec::new();
    let out = train(&[crossing_world()], &config, cfg, &mut records).unwrap();
    assert_eq!(out.steps, 45);
    assert!(out.learner.generator_steps() > 0);
    assert!(!records.is_empty());
}
