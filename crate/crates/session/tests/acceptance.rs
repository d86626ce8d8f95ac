//! Acceptance suite. Prints one `PASS`, `FAIL` or `SKIP` line per criterion
//! and exits nonzero when anything fails.
//!
//! `CAPE_SACHS_CSV` points at the Sachs observational file; without it the
//! Sachs check is skipped. `CAPE_ACCEPT_FULL_SCALE=0` skips the 20-node run.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use cape_core::acquisition::{
    entropy3, eig_mixture_kl, eig_via_expected_kl, screen_marginals, select_query, CandidateSet, ScreenOptions,
};
use cape_core::data::{DataMatrix, InterventionalData};
use cape_core::graph::ordered_pairs;
use cape_core::metrics::{
    auprc_scores, auroc_scores, avg_predictive_entropy, brier, etcp, evaluate, orientation_f1, shd_posterior,
    skeleton_f1, topk_scores, ShdMode,
};
use cape_core::oracle::{build_effect_graph, EffectGraphParams};
use cape_core::posterior::{AddWeightLaw, PriorDensity};
use cape_core::prior::erdos_renyi_dag;
use cape_core::{
    eig, is_acyclic, likelihood, predictive, rejuvenate, BinaryGraph, CategoricalDist3, Dag, EditKind, ExpertParams,
    History, Label, Oracle, Particles, Policy, QueryRecord, RejuvenationKernel,
};
use cape_session::artifacts::LOG_FILE;
use cape_session::{run_session, OracleSpec, PriorSpec, Session, SessionConfig, TruthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool").install(f)
}

// ---------------------------------------------------------------- identities

fn random_set(rng: &mut ChaCha8Rng) -> Particles {
    let d = rng.random_range(2..=6);
    let s = rng.random_range(1..=50);
    let density = rng.random_range(0.0..0.8);
    let graphs: Vec<Dag> = (0..s).map(|_| erdos_renyi_dag(d, density, 0.01, 3.0, rng).unwrap()).collect();
    let raw: Vec<f64> = (0..s).map(|_| rng.random_range(0.0..1.0f64).powi(2) + 1e-12).collect();
    let z: f64 = raw.iter().sum();
    Particles::new(graphs, raw.iter().map(|w| w / z).collect()).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng) -> ExpertParams<f64> {
    ExpertParams {
        beta_edge: rng.random_range(0.0..=20.0),
        beta_dir: rng.random_range(0.0..=20.0),
        gamma: rng.random_range(0.02..2.0),
        epsilon: 10f64.powf(rng.random_range(-8.0..-2.0)),
        prob_floor: if rng.random_bool(0.5) { 0.0 } else { 1e-9 },
        ..Default::default()
    }
}

fn eig_identities() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE16);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..1000 {
        let ps = random_set(&mut rng);
        let p = random_params(&mut rng);
        for (i, j) in ordered_pairs(ps.d()) {
            let g = eig(&ps, i, j, &p, None);
            worst = worst
                .max((g - eig_via_expected_kl(&ps, i, j, &p, None)).abs())
                .max((g - eig_mixture_kl(&ps, i, j, &p, None)).abs());
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst <= 1e-10 && secs < 30.0, format!("1000 sets, {checked} pairs, max gap {worst:.2e}, {secs:.1}s"))
}

// ---------------------------------------------------------------- exact Bayes

fn three_node_dags(rng: &mut ChaCha8Rng) -> Vec<Dag> {
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let mut out = Vec::new();
    for code in 0..27 {
        let (mut c, mut edges) = (code, Vec::new());
        for &(i, j) in &pairs {
            let w = rng.random_range(0.05..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            match c % 3 {
                1 => edges.push((i, j, w)),
                2 => edges.push((j, i, w)),
                _ => {}
            }
            c /= 3;
        }
        if let Ok(g) = Dag::from_edges(3, &edges) {
            out.push(g);
        }
    }
    out
}

fn exact_bayes() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBA7E5);
    let mut worst: f64 = 0.0;
    let scripts = 200;
    for _ in 0..scripts {
        let dags = three_node_dags(&mut rng);
        if dags.len() != 25 {
            return Verdict::Fail(format!("enumerated {} DAGs", dags.len()));
        }
        let prior: Vec<f64> = (0..25).map(|_| rng.random_range(0.1..1.0)).collect();
        let z: f64 = prior.iter().sum();
        let mut ps = Particles::new(dags.clone(), prior.iter().map(|p| p / z).collect()).unwrap();
        let params = random_params(&mut rng);
        let mut log_post: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
        for _ in 0..10 {
            let i = rng.random_range(0..3);
            let j = (i + rng.random_range(1..3)) % 3;
            let label = Label::ALL[rng.random_range(0..3)];
            ps.reweight(i, j, label, &params, None).unwrap();
            for (lp, g) in log_post.iter_mut().zip(&dags) {
                *lp += likelihood(g, i, j, &params, None).unwrap().prob(label).ln();
            }
        }
        let m = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = log_post.iter().map(|l| (l - m).exp()).sum();
        for (w, l) in ps.weights().iter().zip(&log_post) {
            worst = worst.max((w - (l - m).exp() / z).abs());
        }
    }
    verdict(worst <= 1e-12, format!("{scripts} scripted 10-answer histories, max error {worst:.2e}"))
}

// ---------------------------------------------------------------- rejuvenation

fn state_of(g: &Dag) -> usize {
    if g.has_edge(0, 1) {
        1
    } else if g.has_edge(1, 0) {
        2
    } else {
        0
    }
}

fn chain_tv(params: &ExpertParams<f64>, label: Label, hastings: bool, seed: u64) -> f64 {
    let states = [Dag::empty(2), Dag::from_edges(2, &[(0, 1, 1.0)]).unwrap(), Dag::from_edges(2, &[(1, 0, 1.0)]).unwrap()];
    let lik: Vec<f64> = states.iter().map(|g| likelihood(g, 0, 1, params, None).unwrap().prob(label)).collect();
    let z: f64 = lik.iter().sum();
    let target: Vec<f64> = lik.iter().map(|l| l / z).collect();

    let mut history = History::new();
    history
        .push(QueryRecord { round: 1, i: 0, j: 1, label, policy: "eig".into(), eig_value: None, frozen_feature: None })
        .unwrap();
    let kernel = RejuvenationKernel {
        kinds: vec![EditKind::AddEdge, EditKind::RemoveEdge, EditKind::FlipEdge],
        add_weight: AddWeightLaw::Fixed { value: 1.0 },
        hastings,
        ..Default::default()
    };
    let mut ps = Particles::uniform(vec![Dag::empty(2); 100]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rejuvenate(&mut ps, &history, params, &PriorDensity::Uniform, &kernel, 20, &mut rng);
    let mut freq = [0.0; 3];
    // 100 chains x 1000 steps
    for _ in 0..1000 {
        rejuvenate(&mut ps, &history, params, &PriorDensity::Uniform, &kernel, 1, &mut rng);
        for g in ps.particles() {
            freq[state_of(g)] += 1.0;
        }
    }
    let n: f64 = freq.iter().sum();
    0.5 * freq.iter().zip(&target).map(|(f, t)| (f / n - t).abs()).sum::<f64>()
}

fn rejuvenation() -> Verdict {
    let sharp = chain_tv(&ExpertParams::default(), Label::Forward, false, 1);
    let soft = chain_tv(&ExpertParams { beta_edge: 0.5, beta_dir: 0.5, ..Default::default() }, Label::NoEdge, true, 2);

    // acyclicity under long runs on a larger graph
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let truth: Dag = erdos_renyi_dag(d, 0.35, 0.5, 1.5, &mut rng).unwrap();
    let mut history = History::new();
    for (k, (i, j)) in ordered_pairs(d).enumerate().filter(|(k, _)| k % 2 == 0) {
        let label = truth.true_label(i, j).unwrap();
        history
            .push(QueryRecord { round: history.len() + 1, i, j, label, policy: "eig".into(), eig_value: None, frozen_feature: None })
            .unwrap();
        let _ = k;
    }
    let init: Vec<Dag> = (0..20).map(|_| erdos_renyi_dag(d, 0.3, 0.5, 1.5, &mut rng).unwrap()).collect();
    let mut ps = Particles::uniform(init).unwrap();
    let kernel = RejuvenationKernel::default();
    let mut cyclic = 0;
    let mut steps = 0;
    for _ in 0..500 {
        let st = rejuvenate(&mut ps, &history, &ExpertParams::default(), &PriorDensity::Uniform, &kernel, 10, &mut rng);
        steps += st.proposals + st.skipped;
        for g in ps.particles() {
            let adj: Vec<Vec<bool>> = (0..d).map(|i| (0..d).map(|j| g.has_edge(i, j)).collect()).collect();
            if !is_acyclic(&adj).unwrap() {
                cyclic += 1;
            }
        }
    }
    verdict(
        sharp < 0.02 && soft < 0.02 && cyclic == 0,
        format!("TV {sharp:.4} (sharp), {soft:.4} (soft, corrected); {steps} steps on 8 nodes, {cyclic} cyclic"),
    )
}

// ---------------------------------------------------------------- contraction

fn contraction_seed(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Dag = loop {
        let g = erdos_renyi_dag(4, 0.5, 0.5, 1.5, &mut rng).unwrap();
        if g.edge_count() > 0 {
            break g;
        }
    };
    let params = ExpertParams::default();
    let graphs: Vec<Dag> = (0..1000).map(|_| erdos_renyi_dag(4, 0.5, 0.5, 1.5, &mut rng).unwrap()).collect();
    let mut ps = Particles::uniform(graphs).unwrap();
    let mut oracle = Oracle::simulated(truth.clone(), params.clone(), false);
    let kernel = RejuvenationKernel::default();
    let mut history = History::new();
    let pairs: Vec<(usize, usize)> = ordered_pairs(4).collect();
    for t in 0..200 {
        let (i, j) = pairs[t % pairs.len()];
        let label = oracle.answer(i, j, &mut rng).unwrap();
        ps.reweight(i, j, label, &params, None).unwrap();
        history
            .push(QueryRecord { round: t + 1, i, j, label, policy: "rr".into(), eig_value: None, frozen_feature: None })
            .unwrap();
        if ps.ess() < 0.5 * ps.len() as f64 {
            ps.resample(&mut rng);
            rejuvenate(&mut ps, &history, &params, &PriorDensity::Uniform, &kernel, 2, &mut rng);
        }
    }
    etcp(&ps, &BinaryGraph::from_dag(&truth), &params, None)
}

fn contraction() -> Verdict {
    let start = Instant::now();
    let vals: Vec<f64> = (0..10).map(|s| contraction_seed(1000 + s)).collect();
    let good = vals.iter().filter(|v| **v >= 0.95).count();
    let secs = start.elapsed().as_secs_f64();
    let shown: Vec<String> = vals.iter().map(|v| format!("{v:.3}")).collect();
    verdict(good >= 9 && secs < 60.0, format!("ETCP >= 0.95 in {good}/10 seeds [{}], {secs:.1}s", shown.join(" ")))
}

// ---------------------------------------------------------------- policy ordering

struct Final {
    entropy: f64,
    shd: f64,
    etcp: f64,
}

fn final_metrics(cfg: SessionConfig) -> Final {
    let s = run_session(cfg).expect("session runs");
    let m = s.records().last().expect("at least one round").metrics;
    Final { entropy: m.entropy, shd: m.shd, etcp: m.etcp }
}

fn ordering_cfg(seed: u64, policy: Policy, d: usize, s: usize, t: usize) -> SessionConfig {
    let mut c = SessionConfig::synthetic_default(seed, policy);
    if let TruthSpec::ErdosRenyi { d: dd, .. } = &mut c.truth {
        *dd = d;
    }
    c.particles = s;
    c.rounds = t;
    c
}

fn compare(seeds: &[u64], d: usize, s: usize, t: usize) -> (usize, usize, usize, f64, f64) {
    let (mut e, mut h, mut c) = (0, 0, 0);
    let (mut shd_eig, mut shd_rnd) = (0.0, 0.0);
    for &seed in seeds {
        let a = final_metrics(ordering_cfg(seed, Policy::Eig, d, s, t));
        let b = final_metrics(ordering_cfg(seed, Policy::Random, d, s, t));
        e += (a.entropy < b.entropy) as usize;
        h += (a.shd < b.shd) as usize;
        c += (a.etcp > b.etcp) as usize;
        shd_eig += a.shd / seeds.len() as f64;
        shd_rnd += b.shd / seeds.len() as f64;
    }
    (e, h, c, shd_eig, shd_rnd)
}

fn policy_ordering() -> Verdict {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let (e, h, c, se, sr) = single_threaded(|| compare(&seeds, 10, 2000, 90));
    let secs = start.elapsed().as_secs_f64();
    verdict(
        e >= 8 && h >= 8 && c >= 8 && se < sr && secs < 600.0,
        format!(
            "EIG wins entropy {e}/10, SHD {h}/10, ETCP {c}/10; mean SHD {se:.2} vs {sr:.2}; {secs:.0}s on one thread"
        ),
    )
}

fn full_scale() -> Verdict {
    if std::env::var("CAPE_ACCEPT_FULL_SCALE").is_ok_and(|v| v == "0") {
        return Verdict::Skip("disabled by CAPE_ACCEPT_FULL_SCALE=0".into());
    }
    let mut times = Vec::new();
    let mut results = Vec::new();
    for policy in [Policy::Eig, Policy::Random] {
        let start = Instant::now();
        results.push(single_threaded(|| final_metrics(ordering_cfg(0, policy, 20, 10_000, 190))));
        times.push(start.elapsed());
    }
    let worst = times.iter().max().copied().unwrap_or(Duration::ZERO).as_secs_f64();
    let (a, b) = (&results[0], &results[1]);
    // ordering is reported, not gated
    verdict(
        worst < 600.0,
        format!(
            "D=20 S=10000 T=190: {:.0}s / {:.0}s on one thread; EIG vs RND entropy {:.3}/{:.3}, SHD {:.2}/{:.2}, ETCP {:.3}/{:.3}",
            times[0].as_secs_f64(),
            times[1].as_secs_f64(),
            a.entropy,
            b.entropy,
            a.shd,
            b.shd,
            a.etcp,
            b.etcp
        ),
    )
}

// ---------------------------------------------------------------- Sachs

fn sachs() -> Verdict {
    let path = match std::env::var_os("CAPE_SACHS_CSV") {
        Some(p) => PathBuf::from(p),
        None => return Verdict::Skip("CAPE_SACHS_CSV not set".into()),
    };
    if !path.exists() {
        return Verdict::Skip(format!("{} not found", path.display()));
    }
    let mut d_shd = Vec::new();
    let mut d_f1 = Vec::new();
    for seed in 0..10 {
        let mut c = SessionConfig::synthetic_default(seed, Policy::Eig);
        c.particles = 500;
        c.rounds = 40;
        c.ess_threshold = 0.5;
        c.truth = TruthSpec::Sachs;
        c.prior = PriorSpec::Bootstrap { data: path.clone(), params: Default::default(), top_variance: None };
        let mut s = match Session::new(c) {
            Ok(s) => s,
            Err(e) => return Verdict::Fail(format!("could not start: {e}")),
        };
        let truth = s.truth().expect("reference graph").clone();
        let before = evaluate(s.particles(), Some(&truth), &s.config().expert, None, &[(0, 1)], ShdMode::Formula).unwrap();
        if let Err(e) = s.run() {
            return Verdict::Fail(format!("seed {seed}: {e}"));
        }
        let after = s.records().last().expect("rounds ran").metrics;
        d_shd.push(after.shd - before.shd);
        d_f1.push(after.orient_f1 - before.orient_f1);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, mf) = (mean(&d_shd), mean(&d_f1));
    verdict(ms <= -10.0 && mf >= 0.30, format!("mean dSHD {ms:.2}, mean dF1(orient) {mf:.3} over 10 seeds"))
}

// ---------------------------------------------------------------- effect graph

fn normal_col(n: usize, shift: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Control plus one group per target; `effects` lists (target, measured).
fn fixture(n: usize, d: usize, targets: &[usize], effects: &[(usize, usize)], rng: &mut ChaCha8Rng) -> InterventionalData {
    let names: Vec<String> = (0..d).map(|k| format!("g{k}")).collect();
    let control: Vec<Vec<f64>> = (0..d).map(|_| normal_col(n, 0.0, rng)).collect();
    let groups = targets
        .iter()
        .map(|&t| {
            let cols: Vec<Vec<f64>> =
                (0..d).map(|k| normal_col(n, if effects.contains(&(t, k)) { 1.0 } else { 0.0 }, rng)).collect();
            (t, DataMatrix::from_columns(names.clone(), &cols).unwrap())
        })
        .collect();
    InterventionalData { control: DataMatrix::from_columns(names, &control).unwrap(), groups }
}

fn effect_graph() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xEF);
    let null_params = EffectGraphParams { min_effect: 0.0, ..Default::default() };
    let reps = 100;
    let mut false_reps = 0;
    for _ in 0..reps {
        let data = fixture(200, 6, &[0, 1, 2], &[], &mut rng);
        false_reps += (build_effect_graph(&data, &null_params).unwrap().graph.edge_count() > 0) as usize;
    }
    let null_rate = false_reps as f64 / reps as f64;

    let planted = [(0, 1), (1, 3), (2, 4)];
    let (mut hits, mut exact) = (0, 0);
    let power_reps = 200;
    for _ in 0..power_reps {
        let data = fixture(200, 6, &[0, 1, 2], &planted, &mut rng);
        let g = build_effect_graph(&data, &EffectGraphParams::default()).unwrap().graph;
        hits += planted.iter().filter(|&&(i, j)| g.has_edge(i, j)).count();
        exact += (g.edge_count() == 3 && planted.iter().all(|&(i, j)| g.has_edge(i, j))) as usize;
    }
    let power = hits as f64 / (3 * power_reps) as f64;
    verdict(
        null_rate <= 0.05 + 0.02 && power >= 0.99,
        format!(
            "null false-edge rate {null_rate:.3} over {reps} reps; power {power:.4}, exact recovery {exact}/{power_reps}"
        ),
    )
}

// ---------------------------------------------------------------- metric battery

fn dist(p: [f64; 3]) -> CategoricalDist3<f64> {
    CategoricalDist3::new(p).unwrap()
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn dag(d: usize, e: &[(usize, usize)]) -> Dag {
    let edges: Vec<(usize, usize, f64)> = e.iter().map(|&(i, j)| (i, j, 1.0)).collect();
    Dag::from_edges(d, &edges).unwrap()
}

fn metric_battery() -> Verdict {
    let mut failed: Vec<&str> = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok {
            failed.push(name);
        }
    };
    // near-deterministic expert: strong weights, sharp sigmoids, no floor
    let sharp = ExpertParams { beta_edge: 50.0, beta_dir: 50.0, prob_floor: 0.0, ..Default::default() };
    let flat = ExpertParams { beta_edge: 0.0, beta_dir: 0.0, ..Default::default() };
    let fwd = dag(2, &[(1, 0)]);
    let rev = dag(2, &[(0, 1)]);
    let two = Particles::uniform(vec![fwd.clone(), rev.clone()]).unwrap();
    let tol = 1e-9;

    // predictive
    let one = Particles::uniform(vec![dag(3, &[(0, 1), (1, 2)])]).unwrap();
    let p1 = predictive(&one, 0, 1, &sharp, None).p;
    let l1 = likelihood(&one.particles()[0], 0, 1, &sharp, None).unwrap().p;
    check("predictive: single particle", p1 == l1);
    let p2 = predictive(&two, 0, 1, &sharp, None).p;
    check("predictive: opposing mixture", near(p2[0], 0.5, tol) && near(p2[1], 0.5, tol) && near(p2[2], 0.0, tol));
    let p3 = predictive(&one, 1, 2, &flat, None).p;
    check("predictive: flat expert", near(p3[0], 0.25, 1e-12) && near(p3[1], 0.25, 1e-12) && near(p3[2], 0.5, 1e-12));

    // entropy
    check("entropy3: point mass", entropy3(&dist([1.0, 0.0, 0.0])) == 0.0);
    check("entropy3: uniform", near(entropy3(&dist([1.0 / 3.0; 3])), 3f64.ln(), 1e-12));
    check("entropy3: two-way", near(entropy3(&dist([0.5, 0.5, 0.0])), 2f64.ln(), 1e-12));

    // information gain
    let same = Particles::uniform(vec![fwd.clone(), fwd.clone()]).unwrap();
    check("eig: identical particles", eig(&same, 0, 1, &sharp, None).abs() < 1e-12);
    check("eig: opposing particles", near(eig(&two, 0, 1, &sharp, None), 2f64.ln(), tol));
    check("eig: flat expert", ordered_pairs(3).all(|(i, j)| eig(&one, i, j, &flat, None).abs() < 1e-12));
    check("expected KL: identical particles", eig_via_expected_kl(&same, 0, 1, &sharp, None).abs() < 1e-12);
    check("expected KL: opposing particles", near(eig_via_expected_kl(&two, 0, 1, &sharp, None), 2f64.ln(), tol));

    // screening
    let m = [0.0, 0.5, 0.9, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let c = screen_marginals(&m, 3, 6, ScreenOptions::default());
    check("screen: peak first", c.pairs[0] == (0, 1) && c.scores[0] == 0.25);
    check("screen: 0.9 scores 0.09", near(c.score_of(0, 2).unwrap(), 0.09, 1e-12));
    check("screen: certain pairs last", c.scores[2..].iter().all(|s| *s == 0.0) && c.score_of(1, 2) == Some(0.0));

    // selection
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let single = CandidateSet { pairs: vec![(0, 1)], scores: vec![0.25] };
    let ranking = vec![((0, 1), 0.1)];
    let every = [Policy::Eig, Policy::Uncertainty, Policy::Random, Policy::Static].iter().all(|&pol| {
        let s = select_query(&single, pol, &two, &sharp, None, &mut rng, Some(&ranking), None).unwrap();
        (s.i, s.j) == (0, 1)
    });
    check("select: single candidate", every);
    // (0, 2) is absent in both particles, (0, 1) splits them
    let three = Particles::uniform(vec![dag(3, &[(1, 0)]), dag(3, &[(0, 1)])]).unwrap();
    let cands = CandidateSet { pairs: vec![(0, 2), (0, 1)], scores: vec![0.25, 0.25] };
    let s = select_query(&cands, Policy::Eig, &three, &sharp, None, &mut rng, None, None).unwrap();
    check("select: eig prefers informative pair", (s.i, s.j) == (0, 1) && near(s.eig.unwrap(), 2f64.ln(), tol));

    // entropy metric
    let truth3 = dag(3, &[(0, 1), (1, 2)]);
    let at_truth = Particles::uniform(vec![truth3.clone()]).unwrap();
    let pairs: Vec<(usize, usize)> = ordered_pairs(3).collect();
    check("avg entropy: concentrated", avg_predictive_entropy(&at_truth, &pairs, &sharp, None) < 1e-9);
    let h = dist([0.25, 0.25, 0.5]).entropy();
    check("avg entropy: flat expert", near(avg_predictive_entropy(&at_truth, &pairs, &flat, None), h, 1e-12) && near(h, 1.0397, 1e-4));
    let single_h = entropy3(&predictive(&two, 0, 1, &ExpertParams::default(), None));
    check("avg entropy: one pair", near(avg_predictive_entropy(&two, &[(0, 1)], &ExpertParams::default(), None), single_h, 1e-15));

    // ETCP and Brier
    let bt = BinaryGraph::from_dag(&truth3);
    let strong = ExpertParams { beta_edge: 10.0, beta_dir: 10.0, ..Default::default() };
    check("etcp: concentrated", etcp(&at_truth, &bt, &strong, None) >= 1.0 - 1e-6);
    // 4 directed ordered entries at 0.25, 2 no-edge entries at 0.5, over 6
    check("etcp: flat expert", near(etcp(&at_truth, &bt, &flat, None), (0.25 * 4.0 + 0.5 * 2.0) / 6.0, 1e-12));
    let e = etcp(&two, &BinaryGraph::from_dag(&fwd), &ExpertParams::default(), None);
    check("etcp: in [0, 1]", (0.0..=1.0).contains(&e));
    check("brier: perfect", brier(&at_truth, &bt, &sharp, None) < 1e-12);
    // three deterministic particles, one per label: the predictive is uniform
    let spread = Particles::uniform(vec![fwd.clone(), rev.clone(), Dag::empty(2)]).unwrap();
    check("brier: uniform prediction is 2/3", near(brier(&spread, &BinaryGraph::from_dag(&fwd), &sharp, None), 2.0 / 3.0, tol));
    let u = ExpertParams::<f64>::default();
    let b = brier(&two, &BinaryGraph::from_dag(&fwd), &u, None);
    check("brier: in [0, 2]", (0.0..=2.0).contains(&b));

    // SHD
    let bt4 = BinaryGraph::from_dag(&dag(4, &[(0, 1), (2, 3)]));
    let shd_of = |e: &[(usize, usize)], mode| shd_posterior(&Particles::uniform(vec![dag(4, e)]).unwrap(), &bt4, mode);
    check("shd: identical", shd_of(&[(0, 1), (2, 3)], ShdMode::Formula) == 0.0);
    check("shd: one extra edge", shd_of(&[(0, 1), (2, 3), (1, 2)], ShdMode::Formula) == 1.0);
    check("shd: reversed edge counts 2", shd_of(&[(1, 0), (2, 3)], ShdMode::Formula) == 2.0);
    check("shd: reversed edge, flip1 mode", shd_of(&[(1, 0), (2, 3)], ShdMode::Flip1) == 1.0);

    // F1
    let g12 = Particles::uniform(vec![dag(3, &[(1, 2)])]).unwrap();
    let t21 = BinaryGraph::from_dag(&dag(3, &[(2, 1)]));
    check("f1: identical", skeleton_f1(&at_truth, &bt) == 1.0 && orientation_f1(&at_truth, &bt) == 1.0);
    check("f1: reversed edge", skeleton_f1(&g12, &t21) == 1.0 && orientation_f1(&g12, &t21) == 0.0);
    let sup = Particles::uniform(vec![dag(3, &[(0, 1), (1, 2)])]).unwrap();
    let t01 = BinaryGraph::from_dag(&dag(3, &[(0, 1)]));
    check("f1: superset", near(orientation_f1(&sup, &t01), 2.0 / 3.0, 1e-12));

    // ranking metrics
    let truths = [true, false, true, false, false, true];
    let exact: Vec<f64> = truths.iter().map(|t| *t as u8 as f64).collect();
    let anti: Vec<f64> = exact.iter().map(|v| 1.0 - v).collect();
    check("ranking: exact scores", auprc_scores(&exact, &truths) == 1.0 && auroc_scores(&exact, &truths) == 1.0 && topk_scores(&exact, &truths, 3) == 1.0);
    check("ranking: anti scores", auroc_scores(&anti, &truths) == 0.0);
    let s4 = [0.9, 0.8, 0.4, 0.1];
    let t4 = [true, false, true, false];
    check("ranking: hand example", near(auroc_scores(&s4, &t4), 0.75, 1e-15) && near(topk_scores(&s4, &t4, 2), 0.5, 1e-15));
    check("ranking: no positives is NaN", auprc_scores(&s4, &[false; 4]).is_nan() && auroc_scores(&s4, &[false; 4]).is_nan());

    if failed.is_empty() {
        Verdict::Pass("all module examples hold".into())
    } else {
        Verdict::Fail(format!("failed: {}", failed.join("; ")))
    }
}

// ---------------------------------------------------------------- determinism

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut bytes = Vec::new();
    for policy in [Policy::Eig, Policy::Random] {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut c = ordering_cfg(17, policy, 8, 500, 30);
            c.oracle = OracleSpec::Simulated { expert: None, sticky: false };
            c.output.dir = Some(dir.path().join(policy.as_str()));
            c.output.checkpoint_every = 7;
            run_session(c).expect("session runs");
            runs.push(std::fs::read(dir.path().join(policy.as_str()).join(LOG_FILE)).expect("log written"));
        }
        if runs[0] != runs[1] {
            return Verdict::Fail(format!("{} logs differ", policy.as_str()));
        }
        bytes.push(runs[0].len());
    }
    Verdict::Pass(format!("repeated runs match byte for byte ({} and {} bytes)", bytes[0], bytes[1]))
}

fn main() {
    let checks: Vec<(&str, fn() -> Verdict)> = vec![
        ("EIG identity suite", eig_identities),
        ("exact-Bayes oracle", exact_bayes),
        ("rejuvenation correctness", rejuvenation),
        ("posterior contraction", contraction),
        ("synthetic policy ordering", policy_ordering),
        ("synthetic full scale (ordering not gated)", full_scale),
        ("Sachs reproduction", sachs),
        ("effect-graph oracle statistics", effect_graph),
        ("metric unit battery", metric_battery),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail} [{secs:.1}s]");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
