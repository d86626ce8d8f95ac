use cape_core::graph::ordered_pairs;
use cape_core::{is_acyclic, EditKind, Error, ExpertParams, GraphEdit, Label, WeightedDag};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dag(d: usize, p: f64, rng: &mut ChaCha8Rng) -> WeightedDag<f64> {
    cape_core::prior::erdos_renyi_dag(d, p, 0.5, 1.5, rng).unwrap()
}

fn dense(g: &WeightedDag<f64>) -> Vec<Vec<bool>> {
    let d = g.d();
    (0..d).map(|i| (0..d).map(|j| g.has_edge(i, j)).collect()).collect()
}

fn random_edit(d: usize, rng: &mut ChaCha8Rng) -> GraphEdit<f64> {
    let i = rng.random_range(0..d);
    let mut j = rng.random_range(0..d - 1);
    if j >= i {
        j += 1;
    }
    let w = rng.random_range(-2.0..2.0);
    match EditKind::ALL[rng.random_range(0..4)] {
        EditKind::AddEdge => GraphEdit::add(i, j, w),
        EditKind::RemoveEdge => GraphEdit::remove(i, j),
        EditKind::FlipEdge => GraphEdit::flip(i, j),
        EditKind::PerturbWeight => GraphEdit::perturb(i, j, w),
    }
}

/// Applies the edit by brute force and checks acyclicity from scratch.
fn expected_after(g: &WeightedDag<f64>, e: &GraphEdit<f64>) -> Option<Vec<Vec<bool>>> {
    let mut a = dense(g);
    match e.kind {
        EditKind::AddEdge | EditKind::PerturbWeight => a[e.i][e.j] = true,
        EditKind::RemoveEdge => a[e.i][e.j] = false,
        EditKind::FlipEdge => {
            a[e.i][e.j] = false;
            a[e.j][e.i] = true;
        }
    }
    is_acyclic(&a).unwrap().then_some(a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_edit_sequences_keep_dag_invariants(seed in any::<u64>(), d in 2usize..=15, density in 0.0f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = random_dag(d, density, &mut rng);
        for _ in 0..250 {
            let e = random_edit(d, &mut rng);
            let valid = match e.kind {
                EditKind::AddEdge => !g.has_edge(e.i, e.j),
                _ => g.has_edge(e.i, e.j),
            } && e.weight.is_none_or(|w| w != 0.0);
            match g.apply_edit(&e) {
                Ok(next) => {
                    prop_assert!(valid);
                    prop_assert_eq!(Some(dense(&next)), expected_after(&g, &e));
                    prop_assert!((0..d).all(|k| next.weight(k, k) == 0.0));
                    g = next;
                }
                Err(Error::Rejected) => {
                    prop_assert!(valid);
                    prop_assert!(expected_after(&g, &e).is_none());
                }
                Err(Error::Contract(_)) => prop_assert!(!valid),
                Err(other) => prop_assert!(false, "unexpected {other}"),
            }
            prop_assert!(is_acyclic(&dense(&g)).unwrap());
        }
    }

    #[test]
    fn flip_is_an_involution(seed in any::<u64>(), d in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(d, 0.4, &mut rng);
        for (i, j, _) in g.edges() {
            if let Ok(f) = g.apply_edit(&GraphEdit::flip(i, j)) {
                let back = f.apply_edit(&GraphEdit::flip(j, i)).expect("original is acyclic");
                prop_assert_eq!(&back, &g);
            }
        }
    }

    #[test]
    fn true_label_is_swap_symmetric(seed in any::<u64>(), d in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(d, 0.4, &mut rng);
        for (i, j) in ordered_pairs(d) {
            let a = g.true_label(i, j).unwrap();
            prop_assert_eq!(a.swapped(), g.true_label(j, i).unwrap());
            prop_assert_eq!(a == Label::Forward, g.has_edge(i, j));
        }
    }

    #[test]
    fn likelihood_label_symmetry(wij in -3.0f64..3.0, be in 0.0f64..30.0, bd in 0.0f64..30.0, gamma in 0.01f64..2.0) {
        let p = ExpertParams { beta_edge: be, beta_dir: bd, gamma, ..Default::default() };
        let g = WeightedDag::from_edges(3, &[(0, 1, wij)]).unwrap_or_else(|_| WeightedDag::empty(3));
        let a = cape_core::likelihood(&g, 0, 1, &p, None).unwrap();
        let b = cape_core::likelihood(&g, 1, 0, &p, None).unwrap();
        prop_assert_eq!(a.p[1], b.p[0]);
        prop_assert_eq!(a.p[0], b.p[1]);
        prop_assert_eq!(a.p[2], b.p[2]);
    }
}

#[test]
fn likelihood_sums_to_one_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100_000 {
        let w_ij: f64 = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-5.0..5.0) };
        let w_ji: f64 = if w_ij != 0.0 || rng.random_bool(0.5) { 0.0 } else { rng.random_range(-5.0..5.0) };
        let p = ExpertParams {
            beta_edge: rng.random_range(0.0..50.0),
            beta_dir: rng.random_range(0.0..50.0),
            lambda: rng.random_range(0.0..2.0),
            gamma: rng.random_range(0.01..3.0),
            epsilon: 10f64.powf(rng.random_range(-9.0..-2.0)),
            prob_floor: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.3) },
            ..Default::default()
        };
        let phi = rng.random_range(-3.0..3.0);
        let dist = p.likelihood_parts(w_ij, w_ji, phi);
        let sum: f64 = dist.p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "{dist:?} {p:?}");
        assert!(dist.p.iter().all(|x| (0.0..=1.0).contains(x)));
        if p.prob_floor > 0.0 {
            assert!(dist.p.iter().all(|x| *x >= p.prob_floor * (1.0 - 1e-12)), "{dist:?} {}", p.prob_floor);
        }
    }
}

#[test]
fn forward_probability_increases_with_weight() {
    for &beta in &[0.5, 1.0, 3.0] {
        let p = ExpertParams { beta_edge: beta, beta_dir: beta, prob_floor: 0.0, ..Default::default() };
        let mut last = -1.0;
        for k in 0..200 {
            let w = 0.01 * k as f64;
            let now = p.likelihood_parts(w, 0.0, 0.0).p[1];
            assert!(now > last, "beta {beta} w {w}");
            last = now;
        }
    }
}

#[test]
fn zero_sharpness_is_exactly_uniform_edge_split() {
    let p = ExpertParams { beta_edge: 0.0, beta_dir: 0.0, prob_floor: 0.0, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let d = p.likelihood_parts(rng.random_range(-4.0..4.0), 0.0, rng.random_range(-1.0..1.0));
        assert_eq!(d.p, [0.25, 0.25, 0.5]);
    }
}

#[test]
fn zero_floor_is_identity() {
    let raw = ExpertParams { beta_edge: 2.0, beta_dir: 1.0, prob_floor: 0.0, ..Default::default() };
    let d = raw.likelihood_parts(0.03, 0.0, 0.0);
    assert_eq!(d.floored(0.0), d);
}

#[test]
fn works_in_single_precision() {
    let g = WeightedDag::<f32>::from_edges(2, &[(0, 1, 1.0)]).unwrap();
    let p = ExpertParams::<f32> { prob_floor: 0.0, ..Default::default() };
    let l = cape_core::likelihood(&g, 0, 1, &p, None).unwrap();
    assert!(l.p[1] > 0.999_99);
}
