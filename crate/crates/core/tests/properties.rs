use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salp::basis::BasisMatrix;
use salp::env::ExplicitEnv;
use salp::formulation::{solve_alp, solve_salp};
use salp::linalg::{Cholesky, Matrix};
use salp::lp::{newton_step_structured, LpOptions, StructuredHessian};
use salp::mdp::{
    bellman_apply, exact_value_iteration, occupancy, optimal_value, random_mdp, resolvent_apply, solve_exact_lp,
    MdpModel, Policy, StateDistribution,
};
use salp::sampling::{empirical_distribution, estimate_b, sample_occupancy_exact, total_variation};

fn model(seed: u64, n: usize, a: usize, alpha: f64) -> MdpModel<f64> {
    random_mdp(n, a, alpha, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bellman_is_monotone(seed in 0u64..1000, alpha in 0.0f64..0.99, shift in prop::collection::vec(0.0f64..5.0, 8)) {
        let m = model(seed, 8, 3, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let j: Vec<f64> = (0..8).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let jp: Vec<f64> = j.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let (tj, tjp) = (bellman_apply(&j, &m).unwrap(), bellman_apply(&jp, &m).unwrap());
        prop_assert!(tj.iter().zip(tjp.iter()).all(|(a, b)| *a <= b + 1e-12));
    }

    #[test]
    fn bellman_is_a_contraction(seed in 0u64..1000, alpha in 0.0f64..0.99) {
        let m = model(seed, 8, 3, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdef);
        let j: Vec<f64> = (0..8).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let jp: Vec<f64> = (0..8).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let d = sup_diff(&bellman_apply(&j, &m).unwrap(), &bellman_apply(&jp, &m).unwrap());
        prop_assert!(d <= alpha * sup_diff(&j, &jp) + 1e-12);
    }

    #[test]
    fn occupancy_is_a_distribution(seed in 0u64..1000, alpha in 0.0f64..0.99) {
        let m = model(seed, 10, 3, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = Policy::new((0..10).map(|_| rng.gen_range(0..3)).collect());
        let nu = StateDistribution::from_weights((0..10).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let pi = occupancy(&m, &policy, &nu).unwrap();
        prop_assert!(pi.iter().all(|&p| p >= 0.0));
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn b_grows_with_the_box(seed in 0u64..200, inner in 0.1f64..2.0, extra in 0.0f64..3.0) {
        let m = model(seed, 12, 3, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = BasisMatrix::random(12, 4, &mut rng).unwrap();
        let env = ExplicitEnv::new(&m, &basis, StateDistribution::uniform(12)).unwrap();
        let states: Vec<usize> = (0..12).collect();
        let small = estimate_b(&[-inner; 4], &[inner; 4], &states, &env).unwrap();
        let big = estimate_b(&[-inner - extra; 4], &[inner + extra; 4], &states, &env).unwrap();
        prop_assert!(big >= small);
    }
}

#[test]
fn feasible_points_lie_below_the_optimum() {
    for seed in 0..8 {
        let m = model(seed, 15, 3, 0.9);
        let (jstar, _) = optimal_value(&m).unwrap();
        let gmin = (0..15).flat_map(|x| (0..3).map(move |a| (x, a))).map(|(x, a)| m.cost(x, a)).fold(f64::INFINITY, f64::min);
        let mut j = vec![gmin / (1.0 - 0.9) - 3.0; 15];
        for _ in 0..30 {
            let tj = bellman_apply(&j, &m).unwrap();
            assert!(j.iter().zip(tj.iter()).all(|(a, b)| *a <= b + 1e-12));
            assert!(j.iter().zip(jstar.iter()).all(|(a, b)| *a <= b + 1e-9));
            j = tj.into_inner();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = BasisMatrix::random(15, 5, &mut rng).unwrap();
        let (r, _) = solve_alp(&m, &basis, &StateDistribution::uniform(15), &LpOptions::with_tol(1e-10)).unwrap();
        let phi = basis.evaluate(&r).unwrap();
        assert!(phi.iter().zip(jstar.iter()).all(|(a, b)| *a <= b + 1e-9), "seed {seed}");
    }
}

#[test]
fn exact_lp_matches_value_iteration() {
    for seed in 0..5 {
        let m = model(seed, 30, 4, 0.9);
        let vi = exact_value_iteration(&m, 1e-12).unwrap();
        let lp = solve_exact_lp(&m, &StateDistribution::uniform(30)).unwrap();
        assert!(sup_diff(&lp, &vi.values) <= 1e-8, "seed {seed}");
        let tj = bellman_apply(&lp, &m).unwrap();
        assert!(lp.iter().zip(tj.iter()).all(|(a, b)| *a <= b + 1e-9));
    }
}

/// `Σ_{t≤T} (αP)^t s`, with `T` large enough that the tail is below 1e-13.
fn series(m: &MdpModel<f64>, policy: &Policy, s: &[f64], transpose: bool) -> Vec<f64> {
    let n = s.len();
    let alpha = m.discount();
    let (mut term, mut total) = (s.to_vec(), s.to_vec());
    let steps = ((1e-13f64).ln() / alpha.ln()).ceil() as usize + 10;
    for _ in 0..steps {
        let next: Vec<f64> = if transpose {
            (0..n).map(|y| (0..n).map(|x| alpha * m.transition(policy.action(x))[(x, y)] * term[x]).sum()).collect()
        } else {
            (0..n).map(|x| alpha * m.expected_next(x, policy.action(x), &term)).collect()
        };
        total.iter_mut().zip(&next).for_each(|(t, v)| *t += v);
        term = next;
    }
    total
}

#[test]
fn resolvent_and_occupancy_match_power_series() {
    for seed in 0..5 {
        let m = model(seed, 12, 3, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = Policy::new((0..12).map(|_| rng.gen_range(0..3)).collect());
        let s: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = resolvent_apply(&m, &policy, &s).unwrap();
        assert!(sup_diff(&v, &series(&m, &policy, &s, false)) <= 1e-10);
        let nu = StateDistribution::from_weights((0..12).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let pi = occupancy(&m, &policy, &nu).unwrap();
        let oracle: Vec<f64> = series(&m, &policy, &nu, true).iter().map(|v| 0.3 * v).collect();
        assert!(sup_diff(&pi, &oracle) <= 1e-10);
    }
}

#[test]
fn occupancy_samples_converge_in_total_variation() {
    let m = model(3, 20, 3, 0.9);
    let (_, policy) = optimal_value(&m).unwrap();
    let nu = StateDistribution::uniform(20);
    let pi = occupancy(&m, &policy, &nu).unwrap();
    let means: Vec<f64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&s| {
            (0..5)
                .map(|seed| {
                    let set = sample_occupancy_exact(&m, &policy, &nu, s, seed).unwrap();
                    total_variation(&empirical_distribution(&set.states, 20), &pi)
                })
                .sum::<f64>()
                / 5.0
        })
        .collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}

#[test]
fn salp_value_is_monotone_concave_and_feasible_in_theta() {
    let opts = LpOptions::with_tol(1e-10);
    let thetas: Vec<f64> = (0..9).map(|i| 0.01 * i as f64).collect();
    for seed in 0..4 {
        let m = model(seed, 20, 3, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = BasisMatrix::random(20, 4, &mut rng).unwrap();
        let nu = StateDistribution::uniform(20);
        let (_, policy) = optimal_value(&m).unwrap();
        let pi = occupancy(&m, &policy, &nu).unwrap();
        let mut objs = Vec::new();
        for &theta in &thetas {
            let (sol, _) = solve_salp(&m, &basis, &nu, &pi, theta, &opts).unwrap();
            let phi = basis.evaluate(&sol.weights).unwrap();
            for x in 0..20 {
                for a in 0..3 {
                    assert!(phi[x] <= m.q_value(x, a, &phi) + sol.slacks[x] + 1e-8, "seed {seed} θ {theta}");
                }
            }
            let used: f64 = pi.iter().zip(&sol.slacks).map(|(p, s)| p * s).sum();
            assert!(sol.slacks.iter().all(|&s| s >= 0.0) && used <= theta + 1e-8);
            let value: f64 = nu.iter().zip(phi.iter()).map(|(n, v)| n * v).sum();
            assert!((value - sol.objective).abs() <= 1e-8 * (1.0 + value.abs()));
            objs.push(sol.objective);
        }
        assert!(objs.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{objs:?}");
        assert!(objs.windows(3).all(|w| w[1] >= 0.5 * (w[0] + w[2]) - 1e-9), "{objs:?}");
    }
}

#[test]
fn factorizations_agree_with_reference_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 3, 10, 40] {
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let na = DMatrix::from_row_slice(n, n, a.as_slice());
        let reference = na.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        assert!(sup_diff(&a.solve(&b).unwrap(), reference.as_slice()) <= 1e-8);

        let spd = a.transpose().mul(&a);
        let spd = Matrix::from_fn(n, n, |i, j| spd[(i, j)] + if i == j { 1.0 } else { 0.0 });
        let nspd = DMatrix::from_row_slice(n, n, spd.as_slice());
        let reference = nspd.cholesky().unwrap().solve(&DVector::from_column_slice(&b));
        assert!(sup_diff(&Cholesky::factor(&spd).unwrap().solve(&b), reference.as_slice()) <= 1e-10);
    }
}

#[test]
fn structured_newton_step_agrees_with_reference_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (k, s) in [(2, 5), (4, 30), (8, 120)] {
        let root = Matrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        let h11 = root.transpose().mul(&root);
        let h11 = Matrix::from_fn(k, k, |i, j| h11[(i, j)] + if i == j { s as f64 } else { 0.0 });
        let h12 = Matrix::from_fn(k, s, |_, _| rng.gen_range(-0.5..0.5));
        let diag: Vec<f64> = (0..s).map(|_| rng.gen_range(1.0..3.0)).collect();
        let rank_one: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = k + s;
        let dense = DMatrix::from_fn(n, n, |i, j| match (i < k, j < k) {
            (true, true) => h11[(i, j)],
            (true, false) => h12[(i, j - k)],
            (false, true) => h12[(j, i - k)],
            (false, false) => {
                let (a, b) = (i - k, j - k);
                rank_one[a] * rank_one[b] + if a == b { diag[a] } else { 0.0 }
            }
        });
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let reference = -dense.lu().solve(&DVector::from_column_slice(&g)).unwrap();
        let hess = StructuredHessian { h11, h12, diag, rank_one };
        let step = newton_step_structured(&hess, &g).unwrap();
        let scale = reference.amax().max(1.0);
        assert!(sup_diff(&step, reference.as_slice()) <= 1e-8 * scale, "K={k} S={s}");
    }
}
