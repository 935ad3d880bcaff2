//! Acceptance criteria 1-9. Each check prints one `criterion N: PASS|FAIL`
//! line (run with `--nocapture` to see them) and then asserts.
//!
//! Criteria 7 and 8 train for hours; they run only when
//! `TRACKLET_ACCEPTANCE_LONG=1` is set and otherwise print `NOT RUN`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tracklet_core::arena::{dist, Action, Arena, Role, TaskConfig};
use tracklet_core::marl::{mean_std, sample_loss, surrogate_term, ObsConfig, PpoCoefficients, TrainerConfig};
use tracklet_core::nets::{
    FlatMlpArch, FlatMlpNet, GcnArch, GcnNet, GraphInput, LossSeeds, PolicyNet, PolicyOutput, Representation,
};
use tracklet_core::perception::{inject_dropout, Detection, Detector};
use tracklet_core::tracker::{advance_tracks, init_tracks, solve_assignment, CostMatrix, DEFAULT_ROLE_PENALTY};
use tracklet_core::Trainer;

fn report(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

// 1. Assignment oracle

const C1_CASES: usize = 1000;
const C1_MAX_N: usize = 7;
const C1_TIME_LIMIT_S: f64 = 5.0;

fn brute_force_min(cost: &CostMatrix<i64>) -> i64 {
    fn rec(cost: &CostMatrix<i64>, row: usize, used: &mut [bool], acc: i64, best: &mut i64) {
        if row == cost.rows() {
            *best = (*best).min(acc);
            return;
        }
        for c in 0..cost.cols() {
            if !used[c] {
                used[c] = true;
                rec(cost, row + 1, used, acc + cost.get(row, c), best);
                used[c] = false;
            }
        }
    }
    let mut best = i64::MAX;
    rec(cost, 0, &mut vec![false; cost.cols()], 0, &mut best);
    best
}

#[test]
fn criterion_1_assignment_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases: Vec<CostMatrix<i64>> = (0..C1_CASES)
        .map(|i| {
            let n = rng.gen_range(1..=C1_MAX_N);
            let max = if i % 2 == 0 { 5 } else { 10_000 };
            CostMatrix::new(n, n, (0..n * n).map(|_| rng.gen_range(0..=max)).collect()).unwrap()
        })
        .collect();
    let start = Instant::now();
    let solved: Vec<i64> = cases.iter().map(|c| solve_assignment(c).unwrap().total).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let mismatches = cases.iter().zip(&solved).filter(|(c, &t)| brute_force_min(c) != t).count();
    let pass = mismatches == 0 && elapsed < C1_TIME_LIMIT_S;
    report(1, pass, &format!("{mismatches} mismatches in {C1_CASES} matrices up to {C1_MAX_N}x{C1_MAX_N}, solver time {elapsed:.3} s"));
    assert!(pass);
}

// 2. Gradient correctness

const C2_CASES: usize = 100;
const C2_STEP: f64 = 1e-3;
const C2_REL_TOL: f64 = 1e-4;
const C2_FLOOR: f64 = 1e-6;

fn scalar_loss(net: &GcnNet<f64>, x: &GraphInput<f64>, s: &LossSeeds<f64>) -> (f64, Vec<usize>) {
    let f = net.forward(x);
    let o = &f.output;
    (s.d_log_prob * o.log_prob(s.action) + s.d_entropy * o.entropy + s.d_value * o.value, f.region())
}

/// Central difference with step `h`, or `None` if the stencil crosses a
/// ReLU or max-pool switch.
fn central(net: &mut GcnNet<f64>, i: usize, h: f64, x: &GraphInput<f64>, s: &LossSeeds<f64>, region: &[usize]) -> Option<f64> {
    let orig = net.params().flat_get(i);
    net.params_mut().flat_set(i, orig + h);
    let (up, r_up) = scalar_loss(net, x, s);
    net.params_mut().flat_set(i, orig - h);
    let (down, r_down) = scalar_loss(net, x, s);
    net.params_mut().flat_set(i, orig);
    (r_up == region && r_down == region).then(|| (up - down) / (2.0 * h))
}

#[test]
fn criterion_2_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut worst, mut compared, mut kinks, mut refined) = (0.0f64, 0usize, 0usize, 0usize);
    for _ in 0..C2_CASES {
        let n = rng.gen_range(2..7);
        let d = rng.gen_range(2..7);
        let arch = GcnArch {
            input_dim: d,
            gcn_widths: vec![rng.gen_range(2..7), rng.gen_range(2..7)],
            head_hidden: vec![rng.gen_range(2..7)],
            n_actions: Action::COUNT,
        };
        let mut net = GcnNet::<f64>::new(arch, &mut rng);
        for t in &mut net.params_mut().tensors {
            if t.name.ends_with(".b") {
                t.data.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
        }
        let x = GraphInput::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let s = LossSeeds {
            action: rng.gen_range(0..Action::COUNT),
            d_log_prob: rng.gen_range(-2.0..2.0),
            d_entropy: rng.gen_range(-2.0..2.0),
            d_value: rng.gen_range(-2.0..2.0),
        };
        let fwd = net.forward(&x);
        let region = fwd.region();
        let mut grads = net.params().zeros_like();
        net.backward(&fwd, &s, &mut grads);
        for i in 0..net.params().len() {
            let (Some(full), Some(half)) =
                (central(&mut net, i, C2_STEP, &x, &s, &region), central(&mut net, i, C2_STEP / 2.0, &x, &s, &region))
            else {
                kinks += 1;
                continue;
            };
            // (4/3)|D(h) - D(h/2)| estimates the O(h^2) error of D(h)
            let truncation = 4.0 / 3.0 * (full - half).abs();
            let numeric = if truncation > C2_REL_TOL * full.abs().max(C2_FLOOR) {
                refined += 1;
                (4.0 * half - full) / 3.0
            } else {
                full
            };
            let analytic = grads.flat_get(i);
            worst = worst.max((numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(C2_FLOOR));
            compared += 1;
        }
    }
    let pass = worst <= C2_REL_TOL && kinks * 100 <= compared && refined * 100 <= compared;
    report(
        2,
        pass,
        &format!(
            "{C2_CASES} GCN+heads instances, {compared} coordinates, worst relative error {worst:.2e}, \
             {kinks} kink coordinates skipped, {refined} high-curvature coordinates checked by Richardson extrapolation"
        ),
    );
    assert!(pass);
}

// 3. Permutation invariance

const C3_PARAM_DRAWS: usize = 20;
const C3_PERMUTATIONS: usize = 100;
const C3_REL_TOL: f64 = 1e-6;
const C3_MLP_MIN_VIOLATION: f64 = 0.95;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn max_rel(a: &PolicyOutput<f32>, b: &PolicyOutput<f32>) -> f64 {
    a.probs
        .iter()
        .zip(&b.probs)
        .map(|(&x, &y)| rel(x as f64, y as f64))
        .fold(rel(a.value as f64, b.value as f64), f64::max)
}

fn non_identity(rng: &mut ChaCha8Rng, k: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    while p.iter().enumerate().all(|(i, &j)| i == j) {
        p.shuffle(rng);
    }
    p
}

#[test]
fn criterion_3_permutation_invariance() {
    let task = TaskConfig::coop_nav(3);
    let (n, d) = (task.n_entities(), 4 * (task.n_roles() + 6));
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut worst, mut trials, mut mlp_violations) = (0.0f64, 0usize, 0usize);
    for _ in 0..C3_PARAM_DRAWS {
        let gcn = GcnNet::<f32>::new(GcnArch::standard(d, Action::COUNT), &mut rng);
        let mlp = FlatMlpNet::<f32>::new(FlatMlpArch::standard(n, d, Action::COUNT), &mut rng);
        let x = GraphInput::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (g0, m0) = (gcn.forward(&x).output, mlp.forward(&x).output);
        for _ in 0..C3_PERMUTATIONS {
            let xp = x.permute_neighbors(&non_identity(&mut rng, n - 1));
            worst = worst.max(max_rel(&g0, &gcn.forward(&xp).output));
            if max_rel(&m0, &mlp.forward(&xp).output) > C3_REL_TOL {
                mlp_violations += 1;
            }
            trials += 1;
        }
    }
    let violation_rate = mlp_violations as f64 / trials as f64;
    let pass = worst <= C3_REL_TOL && violation_rate >= C3_MLP_MIN_VIOLATION;
    report(
        3,
        pass,
        &format!("{trials} trials, GCN worst relative change {worst:.2e}, MLP control violated in {:.1}%", 100.0 * violation_rate),
    );
    assert!(pass);
}

// 4. Tracking identity

const C4_EVENTS: usize = 1000;
const C4_SIGMA: f64 = 0.01;
const C4_MIN_APPROACH_SIGMAS: f64 = 4.0;
const C4_MIN_CORRECT: f64 = 0.99;
const C4_FRAMES: usize = 40;

/// Two same-role objects on straight lines that pass each other at a
/// closest distance of at least 4σ, plus a static object of another role.
/// Detections are the true positions plus Gaussian noise, shuffled.
fn crossing_event(rng: &mut ChaCha8Rng) -> bool {
    let noise = Normal::new(0.0, C4_SIGMA).unwrap();
    let approach = C4_SIGMA * rng.gen_range(C4_MIN_APPROACH_SIGMAS..2.0 * C4_MIN_APPROACH_SIGMAS);
    let speed = C4_SIGMA * rng.gen_range(0.5..2.0);
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (u, n) = ([theta.cos(), theta.sin()], [-theta.sin(), theta.cos()]);
    let centre = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
    let half = C4_FRAMES as f64 / 2.0;
    let pos = |obj: usize, t: usize| -> [f64; 2] {
        let along = (t as f64 - half) * speed * if obj == 0 { 1.0 } else { -1.0 };
        let side = if obj == 0 { -0.5 } else { 0.5 } * approach;
        [centre[0] + along * u[0] + side * n[0], centre[1] + along * u[1] + side * n[1]]
    };
    let same = Role(1);
    let other = Role(0);
    let observe = |t: usize, rng: &mut ChaCha8Rng| -> Vec<Detection> {
        let mut dets: Vec<Detection> = (0..2)
            .map(|o| {
                let p = pos(o, t);
                Detection::new(same, [p[0] + noise.sample(rng), p[1] + noise.sample(rng)])
            })
            .collect();
        dets.push(Detection::new(other, [0.8, 0.8]));
        dets.shuffle(rng);
        dets
    };
    let census = [(other, 1), (same, 2)].into_iter().collect();
    let mut tracks = init_tracks(&observe(0, rng), &census);
    let owner: Vec<Option<usize>> = tracks
        .iter()
        .map(|t| (t.role == same).then(|| if dist(t.coords, pos(0, 0)) < dist(t.coords, pos(1, 0)) { 0 } else { 1 }))
        .collect();
    for t in 1..=C4_FRAMES {
        tracks = advance_tracks(&tracks, &observe(t, rng), DEFAULT_ROLE_PENALTY);
    }
    tracks.iter().zip(&owner).all(|(tr, o)| match o {
        Some(o) => dist(tr.coords, pos(*o, C4_FRAMES)) < dist(tr.coords, pos(1 - *o, C4_FRAMES)),
        None => tr.coords == [0.8, 0.8],
    })
}

fn carry_forward_exact() -> bool {
    let task = TaskConfig::coop_nav(3);
    let arena = Arena::new(task.clone()).unwrap();
    let det = Detector::new(arena.colors().clone(), task.image_size, task.arena_half_extent);
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut state = arena.reset(&mut rng);
    let init = init_tracks(&inject_dropout(&det.detect(&arena.render(&state)).unwrap(), 1.0, &mut rng), &task.census());
    let mut tracks = init.clone();
    for step in 0..task.episode_len {
        let dets = inject_dropout(&det.detect(&arena.render(&state)).unwrap(), 1.0, &mut rng);
        tracks = advance_tracks(&tracks, &dets, DEFAULT_ROLE_PENALTY);
        let same = tracks
            .iter()
            .zip(&init)
            .all(|(t, i)| t.id == i.id && t.role == i.role && t.coords == i.coords && t.staleness == step as u32 + 2);
        if !same {
            return false;
        }
        let actions: Vec<Action> = (0..task.n_agents).map(|_| Action::ALL[rng.gen_range(0..Action::COUNT)]).collect();
        state = arena.step(&state, &actions).unwrap().0;
    }
    true
}

#[test]
fn criterion_4_tracking_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let correct = (0..C4_EVENTS).filter(|_| crossing_event(&mut rng)).count();
    let rate = correct as f64 / C4_EVENTS as f64;
    let carried = carry_forward_exact();
    let pass = rate >= C4_MIN_CORRECT && carried;
    report(
        4,
        pass,
        &format!(
            "{correct}/{C4_EVENTS} crossings kept identity (sigma {C4_SIGMA}, approach >= {C4_MIN_APPROACH_SIGMAS} sigma), carry-forward under full dropout {}",
            if carried { "exact" } else { "broken" }
        ),
    );
    assert!(pass);
}

// 5. Render -> detect roundtrip

const C5_STATES: usize = 1000;
const C5_MAX_ERR_PX: f64 = 1.5;
/// Rasterized disks must be this many pixels apart to count as separate.
const C5_GAP_PX: f64 = 2.0;

#[test]
fn criterion_5_render_detect_roundtrip() {
    let tasks = [TaskConfig::coop_nav(3), TaskConfig::prey_predator(3), TaskConfig::coop_push(3), TaskConfig::coop_nav(5)];
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut accepted, mut failures, mut worst_px) = (0, 0, 0.0f64);
    while accepted < C5_STATES {
        let task = &tasks[accepted % tasks.len()];
        let arena = Arena::new(task.clone()).unwrap();
        let det = Detector::new(arena.colors().clone(), task.image_size, task.arena_half_extent);
        let px = 2.0 * task.arena_half_extent / (task.image_size as f64 - 1.0);
        let mut state = arena.reset(&mut rng);
        for _ in 0..rng.gen_range(0..task.episode_len) {
            let actions: Vec<Action> = (0..task.n_agents).map(|_| Action::ALL[rng.gen_range(0..Action::COUNT)]).collect();
            state = arena.step(&state, &actions).unwrap().0;
        }
        let ents = &state.entities;
        let separated = ents.iter().enumerate().all(|(i, a)| {
            ents[i + 1..].iter().all(|b| dist(a.position, b.position) >= a.radius + b.radius + C5_GAP_PX * px)
        });
        if !separated {
            continue;
        }
        accepted += 1;
        let dets = det.detect(&arena.render(&state)).unwrap();
        if dets.len() != ents.len() {
            failures += 1;
            continue;
        }
        // each entity matched to the nearest same-role detection
        let mut ok = true;
        for e in ents {
            let best = dets
                .iter()
                .filter(|d| d.role == e.role)
                .map(|d| dist(d.coords, e.position) / px)
                .fold(f64::INFINITY, f64::min);
            worst_px = worst_px.max(best);
            ok &= best <= C5_MAX_ERR_PX;
        }
        if !ok {
            failures += 1;
        }
    }
    let pass = failures == 0;
    report(
        5,
        pass,
        &format!("{C5_STATES} states at 64x64, {failures} failures, worst centroid error {worst_px:.3} px (limit {C5_MAX_ERR_PX})"),
    );
    assert!(pass);
}

// 6. Surrogate objective

const C6_TOL: f64 = 1e-12;

#[test]
fn criterion_6_surrogate() {
    let eps = 0.2;
    let direct = |ratio: f64, adv: f64| (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv);
    let examples = [(1.0, 2.0, 2.0), (1.5, 1.0, 1.2), (0.5, -1.0, -0.8)];
    let mut examples_ok = true;
    for (ratio, adv, expected) in examples {
        let (term, _) = surrogate_term(ratio, adv, eps);
        examples_ok &= (term - expected).abs() <= C6_TOL && (term - direct(ratio, adv)).abs() <= C6_TOL;
    }
    // clipped region: ratio far from one in the direction the advantage rewards
    let coef = PpoCoefficients { clip_eps: eps, entropy_coef: 0.0, value_coef: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut zero_grads = true;
    for i in 0..200 {
        let net = GcnNet::<f64>::new(GcnArch { input_dim: 6, gcn_widths: vec![8, 8], head_hidden: vec![8], n_actions: 5 }, &mut rng);
        let x = GraphInput::new(4, 6, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let fwd = net.forward(&x);
        let action = rng.gen_range(0..5);
        let lp = fwd.output.log_prob(action);
        let shift = rng.gen_range(0.25..3.0);
        let adv = rng.gen_range(0.01..5.0);
        let (old, d) = if i % 2 == 0 { (lp - shift, adv) } else { (lp + shift, -adv) };
        let (_, seeds) = sample_loss(&fwd, action, old, d, 0.0, &coef, 1);
        let mut grads = net.params().zeros_like();
        net.backward(&fwd, &seeds, &mut grads);
        zero_grads &= grads.values().all(|&g| g == 0.0);
    }
    let pass = examples_ok && zero_grads;
    report(
        6,
        pass,
        &format!(
            "clip examples {}, clipped-region gradients {}",
            if examples_ok { "match to 1e-12" } else { "differ" },
            if zero_grads { "exactly zero in 200 cases" } else { "non-zero" }
        ),
    );
    assert!(pass);
}

// 7 and 8. Learning and dropout robustness

const LONG_ENV: &str = "TRACKLET_ACCEPTANCE_LONG";
const C7_EPISODES: u64 = 30_000;
const C7_SEEDS: [u64; 3] = [0, 1, 2];
const C7_MIN_IMPROVEMENT: f64 = 0.30;
const C7_MIN_GCN_WINS: usize = 2;
const C8_RATES: [f64; 4] = [0.0, 0.1, 0.2, 0.4];
const C8_MAX_DROP_AT_10: f64 = 0.10;

fn long_enabled() -> bool {
    std::env::var(LONG_ENV).is_ok_and(|v| v == "1")
}

/// Returns (first evaluation round mean, final metric).
fn train_coop_nav(repr: Representation, dropout: f64, seed: u64) -> (f64, f64) {
    let task = TaskConfig::coop_nav(3);
    let obs = ObsConfig { representation: repr, dropout, eval_dropout: true, ..Default::default() };
    let cfg = TrainerConfig { total_episodes: C7_EPISODES, ..Default::default() };
    let start = Instant::now();
    let out = Trainer::new(&task, &obs, &cfg, seed).unwrap().run(|_| {}).unwrap();
    assert!(out.aborted.is_none(), "{:?}", out.aborted);
    let first = out.rows[0].mean_eval_reward;
    let fin = out.final_metric.unwrap();
    println!(
        "  {repr:?} p={dropout} seed {seed}: first round {first:.3}, final metric {fin:.3} ({:.0} s)",
        start.elapsed().as_secs_f64()
    );
    (first, fin)
}

fn improvement(first: f64, fin: f64) -> f64 {
    (fin - first) / first.abs()
}

#[test]
fn criteria_7_8_learning_and_dropout() {
    if !long_enabled() {
        println!("criterion 7: NOT RUN (set {LONG_ENV}=1; {} training runs of {C7_EPISODES} episodes)", 2 * C7_SEEDS.len());
        println!("criterion 8: NOT RUN (set {LONG_ENV}=1; {} training runs of {C7_EPISODES} episodes)", 3 * C7_SEEDS.len());
        return;
    }
    let gcn: Vec<(f64, f64)> = C7_SEEDS.iter().map(|&s| train_coop_nav(Representation::TrackletsGcn, 0.0, s)).collect();
    let mlp: Vec<(f64, f64)> = C7_SEEDS.iter().map(|&s| train_coop_nav(Representation::TrackletsMlp, 0.0, s)).collect();
    let gains: Vec<f64> = gcn.iter().map(|&(a, b)| improvement(a, b)).collect();
    let wins = gcn.iter().zip(&mlp).filter(|(g, m)| g.1 >= m.1).count();
    let pass7a = gains.iter().all(|&g| g >= C7_MIN_IMPROVEMENT);
    let pass7b = wins >= C7_MIN_GCN_WINS;
    report(
        7,
        pass7a && pass7b,
        &format!(
            "(a) GCN improvement per seed {:?} (need >= {:.0}% each), (b) GCN >= MLP in {wins}/{} seeds (need {C7_MIN_GCN_WINS}); GCN finals {:?}, MLP finals {:?}",
            gains.iter().map(|g| format!("{:.1}%", 100.0 * g)).collect::<Vec<_>>(),
            100.0 * C7_MIN_IMPROVEMENT,
            C7_SEEDS.len(),
            gcn.iter().map(|g| format!("{:.3}", g.1)).collect::<Vec<_>>(),
            mlp.iter().map(|m| format!("{:.3}", m.1)).collect::<Vec<_>>(),
        ),
    );

    // dropout 0 runs are the GCN runs above: evaluation dropout equals training dropout
    let mut finals: Vec<Vec<f64>> = vec![gcn.iter().map(|g| g.1).collect()];
    for &p in &C8_RATES[1..] {
        finals.push(C7_SEEDS.iter().map(|&s| train_coop_nav(Representation::TrackletsGcn, p, s).1).collect());
    }
    let stats: Vec<(f64, f64)> = finals.iter().map(|f| mean_std(f)).collect();
    let pooled = (stats.iter().map(|s| s.1 * s.1).sum::<f64>() / stats.len() as f64).sqrt();
    let base = stats[0].0;
    let drop10 = (base - stats[1].0) / base.abs();
    let pass8a = drop10 <= C8_MAX_DROP_AT_10;
    let pass8b = stats.windows(2).all(|w| w[1].0 <= w[0].0 + pooled);
    report(
        8,
        pass8a && pass8b,
        &format!(
            "means by rate {:?}, pooled std {pooled:.3}, drop at p=0.1 {:.1}% (limit {:.0}%), non-increasing within pooled std: {pass8b}",
            C8_RATES.iter().zip(&stats).map(|(p, s)| format!("{p}: {:.3}", s.0)).collect::<Vec<_>>(),
            100.0 * drop10,
            100.0 * C8_MAX_DROP_AT_10
        ),
    );
    assert!(pass7a && pass7b, "criterion 7 failed");
    assert!(pass8a && pass8b, "criterion 8 failed");
}

// 9. Determinism

fn tracklet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tracklet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run tracklet binary")
}

const C9_CONFIG: &str = r#"
seeds = [3, 4]

[task]
task = "coop_nav"
n_agents = 2
episode_len = 10

[observation]
representation = "tracklets_gcn"
dropout = 0.1

[trainer]
total_episodes = 12
episodes_per_batch = 4
eval_interval = 4
eval_episodes = 3
epochs = 2
minibatch_size = 16
workers = 2
"#;

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("det.toml");
    std::fs::write(&cfg, C9_CONFIG).unwrap();
    let mut identical = true;
    let runs: Vec<_> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for out in &runs {
        let o = tracklet(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    // rerun from the resolved snapshot as well
    let snap = runs[0].join("config.resolved.toml");
    let c = dir.path().join("c");
    let o = tracklet(&["train", "--config", snap.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in [3, 4] {
        let name = format!("metrics_seed{seed}.csv");
        let a = read(&runs[0].join(&name));
        identical &= a == read(&runs[1].join(&name)) && a == read(&c.join(&name));
        let ck = format!("checkpoint_seed{seed}.bin");
        identical &= read(&runs[0].join(&ck)) == read(&runs[1].join(&ck));
    }
    let mut eval_out = Vec::new();
    for i in 0..2 {
        let csv = dir.path().join(format!("eval{i}.csv"));
        let ck = runs[0].join("checkpoint_seed3.bin");
        let o = tracklet(&[
            "eval",
            "--checkpoint",
            ck.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--episodes",
            "5",
            "--out",
            csv.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        eval_out.push((o.stdout, read(&csv)));
    }
    identical &= eval_out[0] == eval_out[1];
    report(9, identical, "train x3 (two direct, one from the resolved snapshot) and eval x2 byte-identical");
    assert!(identical);
}
