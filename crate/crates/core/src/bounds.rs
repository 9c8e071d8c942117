//! Analytic quantities behind the SALP approximation guarantees, and
//! numerical certificates that the guarantees hold on explicit MDPs.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::basis::{BasisMatrix, WeightVector};
use crate::error::{Result, SalpError};
use crate::formulation::{solve_alp, solve_salp, solve_salp_penalty};
use crate::linalg::Matrix;
use crate::lp::{solve_dense_lp, DenseLp, LpOptions};
use crate::mdp::{
    bellman_apply, greedy_policy, occupancy, optimal_value, policy_value, resolvent_apply, MdpModel, Policy,
    StateDistribution,
};
use crate::scalar::{dot, Scalar};

/// Absolute part of the default certificate tolerance.
pub const BOUND_ABS_TOL: f64 = 1e-7;
/// Relative part of the default certificate tolerance.
pub const BOUND_REL_TOL: f64 = 1e-9;
/// Tolerance for the componentwise lower-bound certificate.
pub const LEMMA2_ABS_TOL: f64 = 1e-8;
/// States within this distance of the largest Bellman error form `Ω(r)`.
pub const OMEGA_TOL: f64 = 1e-10;

/// Outcome of checking `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// SHA-256 of the inputs the bound was evaluated on.
    pub digest: String,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64, digest: String) -> Self {
        let slack = rhs - lhs;
        Self { name: name.into(), lhs, rhs, slack, tolerance, pass: slack >= -tolerance, digest }
    }

    /// Default tolerance `1e-7 + 1e-9 · max(|lhs|, |rhs|)`.
    pub fn with_default_tolerance(name: impl Into<String>, lhs: f64, rhs: f64, digest: String) -> Self {
        let tol = BOUND_ABS_TOL + BOUND_REL_TOL * lhs.abs().max(rhs.abs());
        Self::new(name, lhs, rhs, tol, digest)
    }
}

/// Incremental SHA-256 over labelled inputs.
pub struct InputDigest(Sha256);

impl InputDigest {
    pub fn new(label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(label.as_bytes());
        Self(h)
    }

    pub fn scalars<T: Scalar>(mut self, v: &[T]) -> Self {
        self.0.update((v.len() as u64).to_le_bytes());
        for x in v {
            self.0.update(x.to_f64_lossy().to_le_bytes());
        }
        self
    }

    pub fn text(mut self, t: &str) -> Self {
        self.0.update((t.len() as u64).to_le_bytes());
        self.0.update(t.as_bytes());
        self
    }

    pub fn model<T: Scalar>(mut self, model: &MdpModel<T>) -> Self {
        for a in 0..model.n_actions() {
            self = self.scalars(model.transition(a).as_slice());
        }
        self.scalars(model.costs().as_slice()).scalars(&[model.discount()])
    }

    pub fn finish(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `ψ ∈ Ψ`: a per-state weight no smaller than one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightingFunction<T>(Vec<T>);

impl<T: Scalar> WeightingFunction<T> {
    pub fn new(psi: Vec<T>) -> Result<Self> {
        if let Some(x) = psi.iter().position(|&v| !(v >= T::one()) || !v.is_finite()) {
            return Err(SalpError::InvalidArgument(format!("ψ({x}) = {} is below 1", psi[x])));
        }
        Ok(Self(psi))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![T::one(); n])
    }

    /// `v / min(v)` for a positive vector.
    pub fn normalized(v: &[T]) -> Result<Self> {
        let m = v.iter().copied().fold(T::infinity(), T::min);
        if !(m > T::zero()) {
            return Err(SalpError::InvalidArgument("weighting function needs positive entries".into()));
        }
        Self::new(v.iter().map(|&x| (x / m).max(T::one())).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }
}

/// `Φr − TΦr`.
pub fn bellman_error<T: Scalar>(model: &MdpModel<T>, phi_r: &[T]) -> Result<Vec<T>> {
    let t = bellman_apply(phi_r, model)?;
    Ok(phi_r.iter().zip(t.iter()).map(|(&a, &b)| a - b).collect())
}

fn check_full_support<T: Scalar>(pi: &StateDistribution<T>, n: usize) -> Result<()> {
    if pi.len() != n {
        return Err(SalpError::Dimension(format!("distribution has {} entries, n = {n}", pi.len())));
    }
    if !pi.has_full_support() {
        return Err(SalpError::InvalidArgument("violation distribution must have full support".into()));
    }
    Ok(())
}

fn exact_opts<T: Scalar>() -> LpOptions<T> {
    LpOptions::with_tol(T::lit(1e-10).max(T::epsilon() * T::lit(100.0)))
}

/// `ℓ` for a given Bellman-error vector `e`:
/// `min γ/(1−α)  s.t.  e ≤ s + γ1,  πᵀs ≤ θ,  s ≥ 0`.
pub fn ell_from_error<T: Scalar>(error: &[T], discount: T, theta: T, pi: &StateDistribution<T>) -> Result<(T, Vec<T>)> {
    let n = error.len();
    check_full_support(pi, n)?;
    if !(theta >= T::zero()) || !theta.is_finite() {
        return Err(SalpError::InvalidArgument(format!("budget {theta} must be finite and nonnegative")));
    }
    // Variables (s, γ); maximize −γ/(1−α).
    let mut a = Matrix::zeros(n + 1, n + 1);
    let mut b = Vec::with_capacity(n + 1);
    for x in 0..n {
        a[(x, x)] = -T::one();
        a[(x, n)] = -T::one();
        b.push(-error[x]);
    }
    a.row_mut(n)[..n].copy_from_slice(pi);
    b.push(theta);
    let mut c = vec![T::zero(); n + 1];
    c[n] = -T::one() / (T::one() - discount);
    let lp = DenseLp::new(c, a, b)?.with_lower_bounds((0..=n).map(|j| (j < n).then_some(T::zero())).collect())?;
    let (sol, report) = solve_dense_lp(&lp, &exact_opts())?;
    let s = sol[..n].iter().map(|&v| v.max(T::zero())).collect();
    Ok((-report.objective, s))
}

/// `ℓ(r, θ)` and the slack component `s(r, θ)` of its minimizer.
pub fn ell<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    r: &[T],
    theta: T,
    pi: &StateDistribution<T>,
) -> Result<(T, Vec<T>)> {
    let e = bellman_error(model, &basis.evaluate(r)?)?;
    ell_from_error(&e, model.discount(), theta, pi)
}

/// `Ω(r) = argmax_x (Φr − TΦr)(x)`, up to [`OMEGA_TOL`].
pub fn omega_set<T: Scalar>(model: &MdpModel<T>, basis: &BasisMatrix<T>, r: &[T]) -> Result<Vec<usize>> {
    let e = bellman_error(model, &basis.evaluate(r)?)?;
    Ok(omega_of(&e))
}

fn omega_of<T: Scalar>(e: &[T]) -> Vec<usize> {
    let max = e.iter().copied().fold(T::neg_infinity(), T::max);
    let tol = T::lit(OMEGA_TOL);
    (0..e.len()).filter(|&x| e[x] >= max - tol).collect()
}

/// `∂⁺ℓ(r, 0)/∂θ = −((1−α) Σ_{x∈Ω(r)} π(x))⁻¹`.
pub fn ell_right_derivative<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    r: &[T],
    pi: &StateDistribution<T>,
) -> Result<T> {
    check_full_support(pi, model.n_states())?;
    let mass = omega_set(model, basis, r)?.iter().fold(T::zero(), |acc, &x| acc + pi[x]);
    Ok(-T::one() / ((T::one() - model.discount()) * mass))
}

/// Largest `δ` for which `ℓ(r, ·)` is linear on `[0, δ]`: the gap between the
/// top Bellman error and the runner-up, times `π(Ω(r))`. `None` when every
/// state is in `Ω(r)`.
pub fn ell_linear_range<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    r: &[T],
    pi: &StateDistribution<T>,
) -> Result<Option<T>> {
    let e = bellman_error(model, &basis.evaluate(r)?)?;
    let omega = omega_of(&e);
    let top = e[omega[0]];
    let runner_up = (0..e.len())
        .filter(|x| !omega.contains(x))
        .map(|x| e[x])
        .fold(T::neg_infinity(), T::max);
    if runner_up == T::neg_infinity() {
        return Ok(None);
    }
    let mass = omega.iter().fold(T::zero(), |acc, &x| acc + pi[x]);
    Ok(Some((top - runner_up) * mass))
}

/// Chebyshev fit `argmin_r ‖J − Φr‖_{∞,1/ψ}` and the attained error.
pub fn best_weighted_weights<T: Scalar>(
    basis: &BasisMatrix<T>,
    j: &[T],
    psi: &WeightingFunction<T>,
) -> Result<(WeightVector<T>, T)> {
    let (n, k) = (basis.n_states(), basis.k());
    if j.len() != n || psi.0.len() != n {
        return Err(SalpError::Dimension("target and weighting function need one entry per state".into()));
    }
    // Variables (r, t); rows ±Φr − tψ ≤ ±J.
    let mut a = Matrix::zeros(2 * n, k + 1);
    let mut b = Vec::with_capacity(2 * n);
    for x in 0..n {
        for (sign, row) in [(T::one(), x), (-T::one(), n + x)] {
            let out = a.row_mut(row);
            for (o, &f) in out[..k].iter_mut().zip(basis.features(x)) {
                *o = sign * f;
            }
            out[k] = -psi.0[x];
        }
        b.push(j[x]);
    }
    for x in 0..n {
        b.push(-j[x]);
    }
    let mut c = vec![T::zero(); k + 1];
    c[k] = -T::one();
    let (sol, _) = solve_dense_lp(&DenseLp::new(c, a, b)?, &exact_opts())?;
    let r = sol[..k].to_vec();
    let phi_r = basis.evaluate(&r)?;
    let diff: Vec<T> = j.iter().zip(&phi_r).map(|(&a, &b)| a - b).collect();
    let t = weighted_norm_inf_inv_psi(&diff, psi)?;
    Ok((WeightVector(r), t))
}

/// `r* ∈ argmin_r ‖J* − Φr‖_∞` and the attained error.
pub fn best_uniform_weights<T: Scalar>(basis: &BasisMatrix<T>, jstar: &[T]) -> Result<(WeightVector<T>, T)> {
    best_weighted_weights(basis, jstar, &WeightingFunction::ones(basis.n_states()))
}

/// `β(ψ) = max_{x,a} |Σ_x' P_a(x,x') ψ(x') / ψ(x)|`.
pub fn beta_psi<T: Scalar>(model: &MdpModel<T>, psi: &WeightingFunction<T>) -> Result<T> {
    if psi.0.len() != model.n_states() {
        return Err(SalpError::Dimension("ψ needs one entry per state".into()));
    }
    let mut beta = T::zero();
    for x in 0..model.n_states() {
        for a in 0..model.n_actions() {
            beta = beta.max((model.expected_next(x, a, &psi.0) / psi.0[x]).abs());
        }
    }
    Ok(beta)
}

/// `max_x |J(x)| / ψ(x)`.
pub fn weighted_norm_inf_inv_psi<T: Scalar>(j: &[T], psi: &WeightingFunction<T>) -> Result<T> {
    if j.len() != psi.0.len() {
        return Err(SalpError::Dimension("vector and ψ differ in length".into()));
    }
    Ok(j.iter().zip(&psi.0).fold(T::zero(), |m, (&v, &p)| m.max(v.abs() / p)))
}

/// `Σ_x ν(x) |J(x)|`.
pub fn weighted_norm_1_nu<T: Scalar>(j: &[T], nu: &StateDistribution<T>) -> Result<T> {
    if j.len() != nu.len() {
        return Err(SalpError::Dimension("vector and ν differ in length".into()));
    }
    Ok(j.iter().zip(nu.iter()).fold(T::zero(), |acc, (&v, &w)| acc + w * v.abs()))
}

fn diff<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn f64_of<T: Scalar>(v: T) -> f64 {
    v.to_f64_lossy()
}

/// Everything the certificates share for one `(model, basis, ν)` triple:
/// `J*`, an optimal policy, `π_{μ*,ν}` and the best uniform fit `r*`.
#[derive(Debug, Clone)]
pub struct BoundsContext<'a, T> {
    pub model: &'a MdpModel<T>,
    pub basis: &'a BasisMatrix<T>,
    pub nu: &'a StateDistribution<T>,
    pub jstar: Vec<T>,
    pub optimal_policy: Policy,
    /// `π_{μ*,ν}`.
    pub pi: StateDistribution<T>,
    pub r_star: WeightVector<T>,
    /// `‖J* − Φr*‖_∞`.
    pub best_error: T,
    digest: String,
}

impl<'a, T: Scalar> BoundsContext<'a, T> {
    pub fn new(model: &'a MdpModel<T>, basis: &'a BasisMatrix<T>, nu: &'a StateDistribution<T>) -> Result<Self> {
        if basis.n_states() != model.n_states() || nu.len() != model.n_states() {
            return Err(SalpError::Dimension("model, basis and ν disagree on the number of states".into()));
        }
        let (jstar, optimal_policy) = optimal_value(model)?;
        let pi = occupancy(model, &optimal_policy, nu)?;
        let (r_star, best_error) = best_uniform_weights(basis, &jstar)?;
        let digest = InputDigest::new("context").model(model).scalars(basis.matrix().as_slice()).scalars(nu).finish();
        Ok(Self { model, basis, nu, jstar: jstar.into_inner(), optimal_policy, pi, r_star, best_error, digest })
    }

    fn discount(&self) -> T {
        self.model.discount()
    }

    fn digest_with(&self, label: &str, extra: &[T]) -> String {
        InputDigest::new(label).text(&self.digest).scalars(extra).finish()
    }

    /// `‖J* − Φr*‖_∞ + ℓ(r*, θ) + 2θ/(1−α)`.
    pub fn u_salp(&self, theta: T) -> Result<T> {
        let (l, _) = ell(self.model, self.basis, &self.r_star, theta, &self.pi)?;
        Ok(self.best_error + l + T::lit(2.0) * theta / (T::one() - self.discount()))
    }

    /// `‖J* − Φr_SALP‖_{1,ν} ≤ U_SALP(θ)` with the budget measured by `π_{μ*,ν}`.
    pub fn theorem1(&self, theta: T) -> Result<BoundReport> {
        let (sol, _) = solve_salp(self.model, self.basis, self.nu, &self.pi, theta, &exact_opts())?;
        let phi_r = self.basis.evaluate(&sol.weights)?;
        let lhs = weighted_norm_1_nu(&diff(&self.jstar, &phi_r), self.nu)?;
        let rhs = self.u_salp(theta)?;
        Ok(BoundReport::with_default_tolerance(
            format!("theorem1(theta={})", f64_of(theta)),
            f64_of(lhs),
            f64_of(rhs),
            self.digest_with("theorem1", &[theta]),
        ))
    }

    /// `Φr ≤ J* + Δ* s` componentwise, reported as `max_x (Φr − J* − Δ*s)(x) ≤ 0`.
    pub fn lemma2(&self, phi_r: &[T], s: &[T]) -> Result<BoundReport> {
        lemma2_report(self.model, &self.jstar, &self.optimal_policy, phi_r, s)
    }

    /// `U_SALP` on a grid plus the right derivative at zero, analytic and by
    /// finite differences of `ℓ`.
    pub fn u_salp_curve(&self, grid: &[T]) -> Result<USalpCurve> {
        let alpha = self.discount();
        let mut points = Vec::with_capacity(grid.len());
        for &theta in grid {
            let (l, _) = ell(self.model, self.basis, &self.r_star, theta, &self.pi)?;
            let u = self.best_error + l + T::lit(2.0) * theta / (T::one() - alpha);
            points.push(USalpPoint { theta: f64_of(theta), ell: f64_of(l), u_salp: f64_of(u) });
        }
        let omega = omega_set(self.model, self.basis, &self.r_star)?;
        let mass = omega.iter().fold(T::zero(), |acc, &x| acc + self.pi[x]);
        let ell_derivative = ell_right_derivative(self.model, self.basis, &self.r_star, &self.pi)?;
        let u_derivative = (T::lit(2.0) - T::one() / mass) / (T::one() - alpha);
        let step = match ell_linear_range(self.model, self.basis, &self.r_star, &self.pi)? {
            Some(range) => range * T::lit(0.5),
            None => T::one(),
        };
        let (l0, _) = ell(self.model, self.basis, &self.r_star, T::zero(), &self.pi)?;
        let (l1, _) = ell(self.model, self.basis, &self.r_star, step, &self.pi)?;
        Ok(USalpCurve {
            points,
            omega_size: omega.len(),
            omega_mass: f64_of(mass),
            ell_derivative: f64_of(ell_derivative),
            u_derivative: f64_of(u_derivative),
            ell_derivative_fd: f64_of((l1 - l0) / step),
            fd_step: f64_of(step),
        })
    }

    /// The candidate weighting functions: `1`, `|J*| + 1` and
    /// `Φr_ALP − min Φr_ALP + 1`, each scaled to have minimum one.
    pub fn default_psi_candidates(&self) -> Result<Vec<WeightingFunction<T>>> {
        let n = self.model.n_states();
        let shifted: Vec<T> = self.jstar.iter().map(|&v| v.abs() + T::one()).collect();
        let (r_alp, _) = solve_alp(self.model, self.basis, self.nu, &exact_opts())?;
        let phi_alp = self.basis.evaluate(&r_alp)?;
        let lo = phi_alp.iter().copied().fold(T::infinity(), T::min);
        let alp_psi: Vec<T> = phi_alp.iter().map(|&v| v - lo + T::one()).collect();
        Ok(vec![
            WeightingFunction::ones(n),
            WeightingFunction::normalized(&shifted)?,
            WeightingFunction::normalized(&alp_psi)?,
        ])
    }

    /// `‖J* − Φr_SALP‖_{1,ν}` for the penalty-form SALP against the smallest
    /// bound expression over the candidate `ψ`, each paired with its weighted
    /// Chebyshev fit, `r*` and `r_SALP`.
    pub fn theorem2(&self, psis: &[WeightingFunction<T>]) -> Result<BoundReport> {
        if psis.is_empty() {
            return Err(SalpError::InvalidArgument("at least one ψ candidate is required".into()));
        }
        let alpha = self.discount();
        let (sol, _) = solve_salp_penalty(self.model, self.basis, self.nu, &self.pi, &exact_opts())?;
        let phi_salp = self.basis.evaluate(&sol.weights)?;
        let lhs = weighted_norm_1_nu(&diff(&self.jstar, &phi_salp), self.nu)?;
        let mut rhs = T::infinity();
        let mut digest = InputDigest::new("theorem2").text(&self.digest);
        for psi in psis {
            if psi.0.len() != self.model.n_states() {
                return Err(SalpError::Dimension("ψ needs one entry per state".into()));
            }
            digest = digest.scalars(&psi.0);
            let beta = beta_psi(self.model, psi)?;
            let factor = dot(self.nu, &psi.0)
                + T::lit(2.0) * (dot(&self.pi, &psi.0) + T::one()) * (alpha * beta + T::one()) / (T::one() - alpha);
            let (fit, fit_err) = best_weighted_weights(self.basis, &self.jstar, psi)?;
            let mut err = fit_err;
            for r in [&fit, &self.r_star, &sol.weights] {
                let phi_r = self.basis.evaluate(r)?;
                err = err.min(weighted_norm_inf_inv_psi(&diff(&self.jstar, &phi_r), psi)?);
            }
            rhs = rhs.min(err * factor);
        }
        Ok(BoundReport::with_default_tolerance(
            "theorem2",
            f64_of(lhs),
            f64_of(rhs),
            digest.finish(),
        ))
    }
}

/// One point of the `U_SALP` curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct USalpPoint {
    pub theta: f64,
    pub ell: f64,
    pub u_salp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct USalpCurve {
    pub points: Vec<USalpPoint>,
    pub omega_size: usize,
    /// `π_{μ*,ν}(Ω(r*))`.
    pub omega_mass: f64,
    /// `∂⁺ℓ(r*, 0)` from the closed form.
    pub ell_derivative: f64,
    /// `d⁺U_SALP(0)` from the closed form.
    pub u_derivative: f64,
    /// `(ℓ(r*, δ) − ℓ(r*, 0)) / δ`.
    pub ell_derivative_fd: f64,
    pub fd_step: f64,
}

fn lemma2_report<T: Scalar>(
    model: &MdpModel<T>,
    jstar: &[T],
    optimal_policy: &Policy,
    phi_r: &[T],
    s: &[T],
) -> Result<BoundReport> {
    let n = model.n_states();
    if phi_r.len() != n || s.len() != n {
        return Err(SalpError::Dimension("Φr and s need one entry per state".into()));
    }
    let ds = resolvent_apply(model, optimal_policy, s)?;
    let worst = (0..n).map(|x| phi_r[x] - jstar[x] - ds[x]).fold(T::neg_infinity(), T::max);
    let scale = jstar.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = LEMMA2_ABS_TOL + BOUND_REL_TOL * f64_of(scale);
    let digest = InputDigest::new("lemma2").model(model).scalars(phi_r).scalars(s).finish();
    Ok(BoundReport::new("lemma2", f64_of(worst), 0.0, tol, digest))
}

pub fn check_theorem1<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    theta: T,
) -> Result<BoundReport> {
    BoundsContext::new(model, basis, nu)?.theorem1(theta)
}

pub fn u_salp_curve<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    grid: &[T],
) -> Result<USalpCurve> {
    BoundsContext::new(model, basis, nu)?.u_salp_curve(grid)
}

/// Certifies `Φr ≤ J* + Δ*s` for a point with `Φr ≤ T_{μ*}Φr + s`.
pub fn check_lemma2<T: Scalar>(model: &MdpModel<T>, phi_r: &[T], s: &[T]) -> Result<BoundReport> {
    let (jstar, policy) = optimal_value(model)?;
    lemma2_report(model, &jstar, &policy, phi_r, s)
}

pub fn check_theorem2<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    nu: &StateDistribution<T>,
    psis: &[WeightingFunction<T>],
) -> Result<BoundReport> {
    if psis.is_empty() {
        return Err(SalpError::InvalidArgument("at least one ψ candidate is required".into()));
    }
    BoundsContext::new(model, basis, nu)?.theorem2(psis)
}

/// `ν(η, J)ᵀ = (1−α) ηᵀ (I − αP_{μ_J})⁻¹`.
pub fn discounted_visits<T: Scalar>(model: &MdpModel<T>, j: &[T], eta: &StateDistribution<T>) -> Result<StateDistribution<T>> {
    occupancy(model, &greedy_policy(j, model)?, eta)
}

/// `‖J_{μ_J} − J*‖_{1,η} ≤ (ν(η,J)ᵀ(J* − J) + 2/(1−α) π_{μ*,ν(η,J)}ᵀ (J − TJ)⁺) / (1−α)`.
pub fn check_theorem3<T: Scalar>(model: &MdpModel<T>, j: &[T], eta: &StateDistribution<T>) -> Result<BoundReport> {
    let n = model.n_states();
    if j.len() != n || eta.len() != n {
        return Err(SalpError::Dimension("J and η need one entry per state".into()));
    }
    let alpha = model.discount();
    let (jstar, optimal) = optimal_value(model)?;
    let mu_j = greedy_policy(j, model)?;
    let j_mu = policy_value(&mu_j, model)?;
    let lhs = weighted_norm_1_nu(&diff(&j_mu, &jstar), eta)?;
    let nu_j = occupancy(model, &mu_j, eta)?;
    let pi = occupancy(model, &optimal, &nu_j)?;
    let positive_error: Vec<T> = bellman_error(model, j)?.into_iter().map(|v| v.max(T::zero())).collect();
    let rhs = (dot(&nu_j, &diff(&jstar, j)) + T::lit(2.0) / (T::one() - alpha) * dot(&pi, &positive_error))
        / (T::one() - alpha);
    let digest = InputDigest::new("theorem3").model(model).scalars(j).scalars(eta).finish();
    Ok(BoundReport::with_default_tolerance("theorem3", f64_of(lhs), f64_of(rhs), digest))
}

/// One step of the state-relevance fixed-point iteration: solve the
/// penalty-form SALP with weights `nu`, then return `ν(η, Φr_SALP)`.
pub fn nu_fixed_point_step<T: Scalar>(
    model: &MdpModel<T>,
    basis: &BasisMatrix<T>,
    eta: &StateDistribution<T>,
    nu: &StateDistribution<T>,
) -> Result<StateDistribution<T>> {
    let (_, optimal) = optimal_value(model)?;
    let pi = occupancy(model, &optimal, nu)?;
    let (sol, _) = solve_salp_penalty(model, basis, nu, &pi, &exact_opts())?;
    discounted_visits(model, &basis.evaluate(&sol.weights)?, eta)
}
