use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use salp::basis::BasisMatrix;
use salp::bounds::{check_theorem3, ell, BoundsContext};
use salp::formulation::{solve_alp, solve_salp};
use salp::lp::LpOptions;
use salp::mdp::{random_mdp, MdpModel, StateDistribution};

fn instance(seed: u64) -> (MdpModel<f64>, BasisMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = if seed % 2 == 0 { 0.8 } else { 0.95 };
    let model = random_mdp(30, 4, alpha, &mut rng).unwrap();
    let basis = BasisMatrix::random(30, 6, &mut rng).unwrap();
    (model, basis)
}

const THETAS: [f64; 6] = [0.0, 0.001, 0.003, 0.01, 0.03, 0.1];

#[test]
fn alp_and_salp_certificates_hold_on_random_instances() {
    let opts = LpOptions::with_tol(1e-10);
    let nu = StateDistribution::uniform(30);
    for seed in 0..12 {
        let (model, basis) = instance(seed);
        let ctx = BoundsContext::new(&model, &basis, &nu).unwrap();
        let (r_alp, alp) = solve_alp(&model, &basis, &nu, &opts).unwrap();
        let phi = basis.evaluate(&r_alp).unwrap();
        assert!(phi.iter().zip(&ctx.jstar).all(|(a, b)| *a <= b + 1e-7), "seed {seed}");
        let (zero, _) = solve_salp(&model, &basis, &nu, &ctx.pi, 0.0, &opts).unwrap();
        assert!((zero.objective - alp.objective).abs() <= 1e-7, "seed {seed}");
        for theta in THETAS {
            let rep = ctx.theorem1(theta).unwrap();
            assert!(rep.pass, "seed {seed}: {rep:?}");
            let (sol, _) = solve_salp(&model, &basis, &nu, &ctx.pi, theta, &opts).unwrap();
            let lemma = ctx.lemma2(&basis.evaluate(&sol.weights).unwrap(), &sol.slacks).unwrap();
            assert!(lemma.pass, "seed {seed}: {lemma:?}");
        }
        let t2 = ctx.theorem2(&ctx.default_psi_candidates().unwrap()).unwrap();
        assert!(t2.pass, "seed {seed}: {t2:?}");
        let t3 = check_theorem3(&model, &phi, &nu).unwrap();
        assert!(t3.pass, "seed {seed}: {t3:?}");
    }
}

#[test]
fn ell_is_decreasing_convex_and_bounded() {
    let nu = StateDistribution::uniform(30);
    for seed in 100..106 {
        let (model, basis) = instance(seed);
        let ctx = BoundsContext::new(&model, &basis, &nu).unwrap();
        let alpha = model.discount();
        let grid: Vec<f64> = (0..9).map(|i| 0.005 * i as f64).collect();
        for r in [ctx.r_star.0.clone(), vec![0.5, 0.1, -0.2, 0.3, 0.0, 0.4]] {
            let vals: Vec<f64> = grid.iter().map(|&t| ell(&model, &basis, &r, t, &ctx.pi).unwrap().0).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            assert!(vals.windows(3).all(|w| w[1] <= 0.5 * (w[0] + w[2]) + 1e-9));
            let phi = basis.evaluate(&r).unwrap();
            let err = phi.iter().zip(&ctx.jstar).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(vals.iter().all(|&v| v <= (1.0 + alpha) / (1.0 - alpha) * err + 1e-9));
        }
        let curve = ctx.u_salp_curve(&grid).unwrap();
        let rel = (curve.ell_derivative - curve.ell_derivative_fd).abs() / curve.ell_derivative.abs();
        assert!(rel <= 1e-5, "seed {seed}: {curve:?}");
        let u: Vec<f64> = curve.points.iter().map(|p| p.u_salp).collect();
        assert!(u.windows(3).all(|w| w[1] <= 0.5 * (w[0] + w[2]) + 1e-9));
    }
}
