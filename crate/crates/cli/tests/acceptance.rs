//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without a browser; everything goes through the library crates
//! and a loopback broker.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::net::SocketAddr;
use std::path::Path;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use vrgl_bridge::codec::crc_of;
use vrgl_bridge::{
    benchmark_throughput, decode_frame, encode_frame, run_peer_with, topics, BridgeClient, Broker, Envelope, FrameDecoder,
    PeerConfig, RESPONSE_TYPE, SIGNAL_TYPE,
};
use vrgl_cli::presets::{build_env, default_env_config, rl_preset, BuiltEnv};
use vrgl_cli::RlAlgo;
use vrgl_core::datalog::{
    heatmap_accumulate, heatmap_average, replay, GraspContactEvent, HeatMap, Patch, Recorder, SessionLog, PATCH_FACES,
    PATCH_U, PATCH_V,
};
use vrgl_core::envs::{GridAction, GridMDP, MazeTabular};
use vrgl_core::intent::{
    approach_cell, neighbours, perpendicular_distance, predict_grammar, Goal, GoalSet, IntentParams, TaskGrammar,
};
use vrgl_core::irl::{
    action_agreement, bayesian_irl_policywalk, evd, maxent_irl, sample_trajectory, soft_value_iteration, BirlConfig,
    Demonstrations, MaxEntConfig,
};
use vrgl_core::rl::{
    actor_critic_train, ddpg_train, dqn_train, dueling_dqn_train, q_learning_train, Activation, ActorCritic, Ddpg,
    DuelingNet, Mlp, QFunction, TrainReport,
};
use vrgl_core::scene::{load_scene, scene_hash, ActionRequest, Cell, OccupancyGrid, VelocityCommand, Verb};
use vrgl_core::social::ResponsePrimitive;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    // cargo passes filters and flags such as --nocapture; this suite always runs whole
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("bridge_integrity", bridge_integrity),
        ("codec_properties", codec_properties),
        ("rl_q_learning", || rl(RlAlgo::Q, 0.95, 10_000)),
        ("rl_dqn", || rl(RlAlgo::Dqn, 0.9, 20_000)),
        ("rl_dueling_dqn", || rl(RlAlgo::Dueling, 0.9, 20_000)),
        ("rl_actor_critic", || rl(RlAlgo::Ac, 0.9, 20_000)),
        ("rl_ddpg_corridor", || rl(RlAlgo::Ddpg, 0.8, 2_000)),
        ("gradient_checks", gradient_checks),
        ("irl_maxent_5x5", irl_maxent),
        ("irl_bayesian_4x4", irl_bayesian),
        ("intent_grammar_ranking", intent_ranking),
        ("intent_perpendicular_geometry", intent_geometry),
        ("determinism_and_replay", determinism_and_replay),
        ("social_loop", social_loop),
        ("heatmap_pipeline", heatmap_pipeline),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {name}: {d} ({secs:.1} s)"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn bridge_integrity() -> Outcome {
    let broker = Broker::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let start = Instant::now();
    let s = benchmark_throughput(512 * 1024, 1000, broker.local_addr(), 1);
    let secs = start.elapsed().as_secs_f64();
    broker.shutdown();
    let detail = format!(
        "received {}/{} loss {} out_of_order {} crc {} throughput {:.1} MB/s in {secs:.1} s",
        s.messages_received,
        s.messages_sent,
        s.loss,
        s.out_of_order,
        s.crc_failures,
        s.throughput / 1e6
    );
    check(
        s.error.is_none() && s.messages_received == 1000 && s.loss == 0 && s.out_of_order == 0 && s.crc_failures == 0 && secs < 60.0,
        detail,
    )
}

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(|n| json!(n)),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(|f| json!(f)),
        "\\PC{0,16}".prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 24, 5, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..5).prop_map(|m| Value::Object(m.into_iter().collect::<Map<_, _>>())),
        ]
    })
}

fn envelope() -> impl Strategy<Value = Envelope> {
    (prop::collection::vec("[a-z0-9_]{1,6}", 1..4), any::<u64>(), any::<u64>(), "[A-Za-z]{1,10}", json_value()).prop_map(
        |(segs, seq, stamp_ns, msg_type, data)| Envelope {
            topic: format!("/{}", segs.join("/")),
            seq,
            stamp_ns,
            msg_type,
            crc32: crc_of(&data),
            data,
        },
    )
}

fn codec_properties() -> Outcome {
    let start = Instant::now();
    let cfg = |cases| Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new(cfg(10_000));
    runner
        .run(&envelope(), |e| {
            let f = encode_frame(&e).map_err(|x| TestCaseError::fail(x.to_string()))?;
            let (d, used) = decode_frame(&f).map_err(|x| TestCaseError::fail(x.to_string()))?;
            prop_assert_eq!(used, f.len());
            prop_assert_eq!(d, e);
            Ok(())
        })
        .map_err(|e| format!("round trip: {e}"))?;
    let mut runner = TestRunner::new(cfg(1_000));
    runner
        .run(
            &(prop::collection::vec(envelope(), 1..10), prop::collection::vec(1usize..64, 1..40)),
            |(es, sizes)| {
                let stream: Vec<u8> = es.iter().flat_map(|e| encode_frame(e).unwrap()).collect();
                let mut dec = FrameDecoder::new();
                let mut out = Vec::new();
                let (mut pos, mut k) = (0, 0);
                while pos < stream.len() {
                    let end = (pos + sizes[k % sizes.len()]).min(stream.len());
                    dec.push(&stream[pos..end]);
                    while let Some(r) = dec.next_frame() {
                        out.push(r.map_err(|x| TestCaseError::fail(x.to_string()))?);
                    }
                    pos = end;
                    k += 1;
                }
                prop_assert_eq!(out, es);
                prop_assert_eq!(dec.buffered(), 0);
                Ok(())
            },
        )
        .map_err(|e| format!("re-chunking: {e}"))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < 30.0, format!("10000 envelopes round-trip, 1000 re-chunked streams decode identically in {secs:.1} s"))
}

fn rl(algo: RlAlgo, target: f64, max_episodes: usize) -> Outcome {
    let cfg = rl_preset(algo);
    let env_cfg = default_env_config(algo);
    let Ok(BuiltEnv::Maze(mut env)) = build_env(&env_cfg, Path::new(".")) else {
        return Err("default environment did not build".into());
    };
    let start = Instant::now();
    let report: TrainReport = match algo {
        RlAlgo::Q => {
            let mut t = MazeTabular::new(env).map_err(|e| e.to_string())?;
            q_learning_train(&mut t, &cfg).map(|r| r.1)
        }
        RlAlgo::Dqn => dqn_train(&mut env, &cfg).map(|r| r.1),
        RlAlgo::Dueling => dueling_dqn_train(&mut env, &cfg).map(|r| r.1),
        RlAlgo::Ac => actor_critic_train(&mut env, &cfg).map(|r| r.1),
        RlAlgo::Ddpg => ddpg_train(&mut env, &cfg).map(|r| r.1),
    }
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    // success over the final 100 episodes, recounted from the report
    let tail = &report.success[report.len().saturating_sub(100)..];
    let rate = tail.iter().filter(|s| **s).count() as f64 / tail.len().max(1) as f64;
    check(
        report.len() >= 100 && report.len() <= max_episodes && rate >= target && secs < 600.0,
        format!("{} episodes, success over last 100 = {rate:.2} (target {target}), seed {}", report.len(), cfg.seed),
    )
}

/// Worst relative error between `analytic` and central differences of `loss`.
fn fd_error(params: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-5;
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss(&p);
        p[i] = orig - h;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn gradient_checks() -> Outcome {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |k, e: f64| {
        let w = worst.entry(k).or_insert(0.0);
        *w = w.max(e);
    };
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        // value/Q networks and the DDPG critic: dq·Q(x) through the flat parameters
        for (name, out) in [("mlp_linear", Activation::Linear), ("mlp_tanh", Activation::Tanh)] {
            let net = Mlp::new(&[5, 8, 6, 3], out, &mut rng);
            let (x, dq) = (uniform(&mut rng, 5), uniform(&mut rng, 3));
            let mut g = vec![0.0; QFunction::n_params(&net)];
            net.accumulate_grad(&x, &dq, &mut g);
            let mut probe = net.clone();
            note(name, fd_error(&QFunction::params(&net), &g, |p| {
                probe.set_params(p);
                probe.q_values(&x).iter().zip(&dq).map(|(a, b)| a * b).sum()
            }));
        }
        let net = DuelingNet::new(&[5, 8, 6], 4, &mut rng);
        let (x, dq) = (uniform(&mut rng, 5), uniform(&mut rng, 4));
        let mut g = vec![0.0; net.n_params()];
        net.accumulate_grad(&x, &dq, &mut g);
        let mut probe = net.clone();
        note("dueling", fd_error(&net.params(), &g, |p| {
            probe.set_params(p);
            probe.q_values(&x).iter().zip(&dq).map(|(a, b)| a * b).sum()
        }));

        let ac = ActorCritic::new(&[5, 8, 4], &[5, 8, 1], &mut rng);
        let s = uniform(&mut rng, 5);
        let (a, adv) = (rng.random_range(0..4), rng.random_range(-2.0..2.0));
        let mut g = vec![0.0; ac.policy.n_params()];
        ac.policy_loss_grad(&s, a, adv, 0.1, &mut g);
        let mut probe = ac.clone();
        note("actor_critic_policy", fd_error(&ac.policy.params, &g, |p| {
            probe.policy.params.copy_from_slice(p);
            let z = probe.policy.forward(&s).unwrap();
            // independent loss: softmax by hand
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let tot: f64 = e.iter().sum();
            let pi: Vec<f64> = e.iter().map(|v| v / tot).collect();
            let h: f64 = -pi.iter().map(|p| p * p.ln()).sum::<f64>();
            -adv * pi[a].ln() - 0.1 * h
        }));

        let ddpg = Ddpg::new(5, &[2.0, PI], &[8, 6], &mut rng);
        let s = uniform(&mut rng, 5);
        let mut g = vec![0.0; ddpg.actor.n_params()];
        ddpg.actor_grad(&s, 1.0, &mut g);
        let mut probe = ddpg.clone();
        note("ddpg_actor", fd_error(&ddpg.actor.params, &g, |p| {
            probe.actor.params.copy_from_slice(p);
            -probe.q(&s, &probe.unit_action(&s))
        }));
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    check(max <= 1e-4, format!("5 seeds, worst relative error: {detail}"))
}

/// Independent planner: in-place (Gauss-Seidel) value iteration with the
/// same reward-on-entry and absorbing-terminal conventions.
fn oracle_values(m: &GridMDP, r: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; m.n_states()];
    loop {
        let mut delta: f64 = 0.0;
        for s in 0..m.n_states() {
            if m.terminal[s] {
                continue;
            }
            let best = (0..m.n_actions()).map(|a| oracle_q(m, r, &v, s, a)).fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < 1e-12 {
            return v;
        }
    }
}

fn oracle_q(m: &GridMDP, r: &[f64], v: &[f64], s: usize, a: usize) -> f64 {
    let t = m.step(s, a);
    r[t] + if m.terminal[t] { 0.0 } else { m.gamma * v[t] }
}

fn oracle_greedy(m: &GridMDP, r: &[f64], v: &[f64]) -> Vec<usize> {
    (0..m.n_states())
        .map(|s| {
            let q: Vec<f64> = (0..m.n_actions()).map(|a| oracle_q(m, r, v, s, a)).collect();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            q.iter().position(|x| *x >= best - 1e-9).unwrap()
        })
        .collect()
}

fn oracle_policy_value(m: &GridMDP, r: &[f64], pi: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; m.n_states()];
    loop {
        let mut delta: f64 = 0.0;
        for s in 0..m.n_states() {
            if !m.terminal[s] {
                let x = oracle_q(m, r, &v, s, pi[s]);
                delta = delta.max((x - v[s]).abs());
                v[s] = x;
            }
        }
        if delta < 1e-12 {
            return v;
        }
    }
}

/// (agreement, evd, optimal start value) by the independent planner.
fn oracle_scores(m: &GridMDP, truth: &[f64], learned: &[f64], visited: &[usize], start: &[f64]) -> (f64, f64, f64) {
    let vt = oracle_values(m, truth);
    let vl = oracle_values(m, learned);
    let pl = oracle_greedy(m, learned, &vl);
    let hits = visited
        .iter()
        .filter(|&&s| {
            let best = (0..m.n_actions()).map(|a| oracle_q(m, truth, &vt, s, a)).fold(f64::NEG_INFINITY, f64::max);
            oracle_q(m, truth, &vt, s, pl[s]) >= best - 1e-6
        })
        .count();
    let dot = |v: &[f64]| v.iter().zip(start).map(|(a, b)| a * b).sum::<f64>();
    let v_opt = dot(&vt);
    let v_learned = dot(&oracle_policy_value(m, truth, &pl));
    (hits as f64 / visited.len() as f64, v_opt - v_learned, v_opt)
}

fn irl_verdict(m: &GridMDP, truth: &[f64], learned: &[f64], demos: &Demonstrations, secs: f64) -> Outcome {
    let visited = demos.visited_states();
    let start = demos.start_distribution(m.n_states());
    let (agree, gap, v0) = oracle_scores(m, truth, learned, &visited, &start);
    let lib_agree = action_agreement(m, truth, learned, &visited);
    let lib_gap = evd(m, truth, learned, &start);
    // both planners must clear the bar on their own
    check(
        agree >= 0.9 && lib_agree >= 0.9 && gap <= 0.05 * v0 && lib_gap <= 0.05 * v0 && secs < 300.0,
        format!(
            "agreement {agree:.3} (library {lib_agree:.3}), EVD {gap:.4} vs 5% of {v0:.4} (library {lib_gap:.4}), {} demos",
            demos.len()
        ),
    )
}

fn irl_maxent() -> Outcome {
    let m = GridMDP::open(5, 5, &GridAction::CARDINAL, 0.9).map_err(|e| e.to_string())?;
    let mut theta = vec![0.0; m.n_states()];
    theta[m.state_of((4, 4), false).unwrap()] = 1.0;
    theta[m.state_of((2, 2), false).unwrap()] = -1.0;
    theta[m.state_of((3, 1), false).unwrap()] = -1.0;
    let truth = m.linear_reward(&theta);
    let cfg = MaxEntConfig::default();
    let h = cfg.horizon_for(&m);
    let (_, pi) = soft_value_iteration(&m, &truth, h);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let demos = Demonstrations::new(
        (0..200)
            .map(|_| {
                let s = rng.random_range(0..m.n_states());
                sample_trajectory(&m, &pi, s, h, &mut rng)
            })
            .collect(),
    );
    let start = Instant::now();
    let (learned, _) = maxent_irl(&m, &demos, &cfg).map_err(|e| e.to_string())?;
    irl_verdict(&m, &truth, &learned.rewards(&m), &demos, start.elapsed().as_secs_f64())
}

fn irl_bayesian() -> Outcome {
    let mut m = GridMDP::open(4, 4, &GridAction::CARDINAL, 0.9).map_err(|e| e.to_string())?;
    let goal = m.state_of((3, 3), false).unwrap();
    m.set_terminal(&[goal]);
    let mut truth = vec![0.0; m.n_states()];
    truth[goal] = 1.0;
    let v = oracle_values(&m, &truth);
    let expert = oracle_greedy(&m, &truth, &v);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let demos = Demonstrations::new(
        (0..100)
            .map(|_| {
                let mut s = rng.random_range(0..m.n_states() - 1);
                if s >= goal {
                    s += 1;
                }
                let mut t = Vec::new();
                while !m.terminal[s] {
                    t.push((s, expert[s]));
                    s = m.step(s, expert[s]);
                }
                t
            })
            .collect(),
    );
    let start = Instant::now();
    let (_, mean) = bayesian_irl_policywalk(&m, &demos, &BirlConfig::default()).map_err(|e| e.to_string())?;
    irl_verdict(&m, &truth, &mean.rewards(&m), &demos, start.elapsed().as_secs_f64())
}

/// 21 × 21 room, two short walls, start in the middle, five goals on a ring
/// about eight cells out.
fn ring() -> (OccupancyGrid, Vec<Cell>, Cell) {
    let (w, h) = (21, 21);
    let mut g = OccupancyGrid { origin: [0.0, 0.0], resolution: 1.0, width: w, height: h, blocked: vec![false; w * h] };
    for c in [(6, 13), (7, 13), (8, 13), (13, 6), (13, 7), (13, 8)] {
        let i = g.index(c);
        g.blocked[i] = true;
    }
    let slots = (0..5)
        .map(|k| {
            let a = PI / 2.0 + k as f64 * 2.0 * PI / 5.0;
            ((10.0 + 8.0 * a.cos()).round() as usize, (10.0 + 8.0 * a.sin()).round() as usize)
        })
        .collect();
    (g, slots, (10, 10))
}

/// Dijkstra cost-to-go to `goal` over 8-connected moves.
fn cost_to_go(g: &OccupancyGrid, goal: Cell) -> Vec<f64> {
    let n = g.width * g.height;
    let mut d = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    d[g.index(goal)] = 0.0;
    while let Some(i) = (0..n).filter(|&i| !done[i] && d[i].is_finite()).min_by(|&a, &b| d[a].total_cmp(&d[b])) {
        done[i] = true;
        for (m, w) in neighbours(g, g.cell_of_index(i)) {
            let k = g.index(m);
            d[k] = d[k].min(d[i] + w);
        }
    }
    d
}

fn intent_ranking() -> Outcome {
    let start = Instant::now();
    let (g, slots, origin) = ring();
    let goals = GoalSet::new(
        slots.iter().enumerate().map(|(i, c)| Goal { id: format!("g{i}"), position: g.cell_center(*c) }).collect(),
    )
    .map_err(|e| e.to_string())?;
    let grammar = TaskGrammar::unordered(goals.ids());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (trials, mut hits) = (100, 0);
    for _ in 0..trials {
        let truth = rng.random_range(0..5);
        let target = approach_cell(&g, goals.goals[truth].position).ok_or("goal has no approach cell")?;
        let field = cost_to_go(&g, target);
        // noisy-rational walk, λ = 1: P(next) ∝ exp(−(step + cost-to-go))
        let mut path = vec![origin];
        let mut c = origin;
        while c != target && path.len() < 400 {
            let opts: Vec<(Cell, f64)> = neighbours(&g, c).map(|(m, w)| (m, (-(w + field[g.index(m)])).exp())).collect();
            let mut u = rng.random::<f64>() * opts.iter().map(|o| o.1).sum::<f64>();
            c = opts[opts.len() - 1].0;
            for (m, p) in &opts {
                if u < *p {
                    c = *m;
                    break;
                }
                u -= p;
            }
            path.push(c);
        }
        let k = ((path.len() - 1) as f64 * 0.8).floor() as usize;
        let post = predict_grammar(&path[..=k], &grammar, &[], &goals, &g, &IntentParams::default()).map_err(|e| e.to_string())?;
        let p_true = post.probs[truth];
        if post.probs.iter().enumerate().all(|(i, p)| i == truth || *p < p_true) {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(hits >= 90 && secs < 120.0, format!("true goal ranked first at 80% completion in {hits}/{trials} trials"))
}

fn intent_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let pos = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let yaw: f64 = rng.random_range(-PI..PI);
        let len = rng.random_range(0.1..5.0);
        let heading = [len * yaw.cos(), len * yaw.sin()];
        let p = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        // foot of the perpendicular on the line through `pos`
        let (ux, uy) = (yaw.cos(), yaw.sin());
        let t = (p[0] - pos[0]) * ux + (p[1] - pos[1]) * uy;
        let foot = [pos[0] + t * ux, pos[1] + t * uy];
        let analytic = (p[0] - foot[0]).hypot(p[1] - foot[1]);
        worst = worst.max((perpendicular_distance(pos, heading, p) - analytic).abs());
    }
    check(worst <= 1e-9, format!("10000 random point/line pairs, max |error| {worst:.1e}"))
}

const KITCHEN: &str = include_str!("../../../assets/kitchen.json");

/// A seeded random script of commands and actions, recorded from `doc`.
fn scripted_session(doc: &str, seed: u64, ticks: usize) -> Result<(SessionLog, String), String> {
    let scene = load_scene(doc).map_err(|e| e.to_string())?;
    let agents: Vec<String> = scene.agents().map(|a| a.id.clone()).collect();
    let targets: Vec<String> = scene.entities.keys().filter(|k| !k.starts_with("wall")).cloned().collect();
    let log = SessionLog::new(format!("script{seed}"), "synthetic", scene_hash(doc));
    let mut rec = Recorder::new(scene, log).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held: Vec<VelocityCommand> = Vec::new();
    let verbs = [Verb::PushDoor, Verb::PressButton, Verb::Pour, Verb::Grasp, Verb::Release, Verb::Wave, Verb::Stretch];
    for _ in 0..ticks {
        if rng.random_bool(0.05) || held.is_empty() {
            held.clear();
            for a in &agents {
                if rng.random_bool(0.8) {
                    held.push(VelocityCommand::new(a, rng.random_range(-2.5..2.5), rng.random_range(-4.0..4.0)));
                }
            }
        }
        let mut actions = Vec::new();
        if rng.random_bool(0.03) {
            let agent = &agents[rng.random_range(0..agents.len())];
            let verb = verbs[rng.random_range(0..verbs.len())];
            let target = verb.needs_target().then(|| targets[rng.random_range(0..targets.len())].as_str());
            actions.push(ActionRequest::new(agent, verb, target));
        }
        rec.step(&held, &actions).map_err(|e| e.to_string())?;
    }
    let (scene, log) = rec.into_parts();
    Ok((log, serde_json::to_string(&scene).unwrap()))
}

fn determinism_and_replay() -> Outcome {
    let mut records = 0;
    let mut actions = 0;
    for seed in 0..20 {
        let (log, final_scene) = scripted_session(KITCHEN, seed, 600)?;
        let report = replay(&log, KITCHEN).map_err(|e| e.to_string())?;
        if !report.is_clean() {
            return Err(format!("script {seed}: {} divergences, first {:?}", report.divergences.len(), report.divergences[0]));
        }
        if serde_json::to_string(&report.final_scene).unwrap() != final_scene {
            return Err(format!("script {seed}: replayed final scene differs"));
        }
        let (again, again_scene) = scripted_session(KITCHEN, seed, 600)?;
        if again.to_jsonl() != log.to_jsonl() || again_scene != final_scene {
            return Err(format!("script {seed}: repeated run not bitwise identical"));
        }
        records += log.len();
        actions += log.records().iter().filter(|r| matches!(r.event, vrgl_core::datalog::LogEvent::Action { .. })).count();
    }
    Ok(format!("20 scripts × 600 ticks, {records} records, {actions} actions: replays clean, reruns identical"))
}

fn social_loop() -> Outcome {
    let broker = Broker::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr: SocketAddr = broker.local_addr();
    // a fast FSM clock keeps each trial's busy period to a few milliseconds
    let peer = run_peer_with(addr, PeerConfig { tick_hz: 12_000.0, ..PeerConfig::new("robot") });
    if !peer.wait_connected(Duration::from_secs(5)) {
        return Err("peer did not connect".into());
    }
    let mut c = BridgeClient::connect(addr).map_err(|e| e.to_string())?;
    c.subscribe(&topics::agent_action("robot")).map_err(|e| e.to_string())?;
    c.ping(Duration::from_secs(5)).map_err(|e| e.to_string())?;
    let mut latencies = Vec::new();
    for trial in 0..100 {
        let deadline = Instant::now() + Duration::from_secs(2);
        while !peer.status().fsm.is_idle() || peer.status().signals != trial as u64 {
            if Instant::now() > deadline {
                return Err(format!("trial {trial}: peer stayed busy"));
            }
            std::thread::sleep(Duration::from_millis(1));
        }
        let (kind, want) = if trial % 2 == 0 { ("wave", "wave_back") } else { ("stretch", "handshake_reach") };
        let sent = Instant::now();
        c.publish(&topics::agent_signal("human"), SIGNAL_TYPE, json!({ "kind": kind })).map_err(|e| e.to_string())?;
        let got = loop {
            let left = Duration::from_secs(1).saturating_sub(sent.elapsed());
            if left.is_zero() {
                return Err(format!("trial {trial}: no response"));
            }
            let Some(e) = c.recv_timeout(left).map_err(|e| e.to_string())? else { continue };
            if e.msg_type == RESPONSE_TYPE {
                break e;
            }
        };
        let latency = sent.elapsed();
        let p: ResponsePrimitive = serde_json::from_value(got.data).map_err(|e| e.to_string())?;
        let kind_json = serde_json::to_value(p.kind).unwrap();
        if kind_json != want || p.target != "human" {
            return Err(format!("trial {trial}: got {kind_json} for {}", p.target));
        }
        latencies.push(latency);
    }
    let max = latencies.iter().max().unwrap().as_secs_f64() * 1e3;
    let ok = latencies.iter().filter(|l| **l <= Duration::from_millis(50)).count();
    drop(peer);
    broker.shutdown();
    check(ok == 100, format!("{ok}/100 mapped responses within 50 ms, max latency {max:.2} ms"))
}

fn heatmap_pipeline() -> Outcome {
    let dims = [PATCH_FACES, PATCH_U, PATCH_V];
    let contact = |t, face, u, v| GraspContactEvent {
        tick: t,
        agent_id: "subject".into(),
        object_id: "mug".into(),
        patch: Patch { face, u, v },
    };
    // hand-computed fixture: subject A hits p twice and q once, subject B hits p once
    let a = heatmap_accumulate(&[contact(1, 0, 0, 0), contact(2, 0, 0, 0), contact(3, 1, 2, 3)], "mug", dims).map_err(|e| e.to_string())?;
    let b = heatmap_accumulate(&[contact(1, 0, 0, 0)], "mug", dims).map_err(|e| e.to_string())?;
    let avg = heatmap_average(&[a, b]).map_err(|e| e.to_string())?;
    let (p, q) = (0, (PATCH_U * PATCH_V) + 2 * PATCH_V + 3);
    let n = avg.normalized.as_ref().ok_or("average has no normalized map")?;
    if n[p] != 1.0 || n[q] != 0.25 || n.iter().sum::<f64>() != 1.25 || avg.counts[p] != 3 || avg.counts[q] != 1 {
        return Err(format!("fixture mismatch: p {} q {} counts {} {}", n[p], n[q], avg.counts[p], avg.counts[q]));
    }

    // ten synthetic subjects with seeded contact streams
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut maps: Vec<HeatMap> = Vec::new();
    let mut raw: Vec<Vec<u64>> = Vec::new();
    for _ in 0..10 {
        let n_events = rng.random_range(50..400);
        let mut counts = vec![0u64; PATCH_FACES * PATCH_U * PATCH_V];
        let events: Vec<GraspContactEvent> = (0..n_events)
            .map(|t| {
                let (f, u, v) = (rng.random_range(0..PATCH_FACES), rng.random_range(0..PATCH_U), rng.random_range(0..PATCH_V));
                counts[(f * PATCH_U + u) * PATCH_V + v] += 1;
                contact(t, f, u, v)
            })
            .collect();
        let m = heatmap_accumulate(&events, "mug", dims).map_err(|e| e.to_string())?;
        if m.total() != n_events || m.counts != counts {
            return Err(format!("accumulation lost counts: {} of {n_events}", m.total()));
        }
        maps.push(m);
        raw.push(counts);
    }
    let avg = heatmap_average(&maps).map_err(|e| e.to_string())?;
    let expect: Vec<f64> = (0..raw[0].len())
        .map(|i| {
            let mut sum = 0.0;
            for c in &raw {
                let max = *c.iter().max().unwrap() as f64;
                sum += c[i] as f64 / max;
            }
            sum / raw.len() as f64
        })
        .collect();
    let pooled: u64 = raw.iter().flatten().sum();
    check(
        avg.normalized.as_deref() == Some(&expect[..]) && avg.total() == pooled,
        format!("fixture exact; 10 subjects, {pooled} contacts conserved, average matches oracle exactly"),
    )
}
