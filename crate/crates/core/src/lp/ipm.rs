//! Mehrotra predictor-corrector interior-point method for
//!
//! ```text
//!     minimize  fᵀx   subject to  G x + w = h,  w ≥ 0
//! ```
//!
//! with free `x`. The dual multipliers `z ≥ 0` satisfy `f + Gᵀz = 0` at
//! optimality. Every Newton step reduces to the normal equations
//! `Gᵀ D G Δx = rhs` with `D = diag(z / w)`; how that system is assembled and
//! factored is delegated to a [`NormalSystem`], which is where the dense and
//! block-structured solvers differ.

use std::time::Instant;

use crate::error::{Result, SalpError};
use crate::scalar::{dot, norm_inf, Scalar};

use super::{LpOptions, SolverReport, SolverStatus};

pub(crate) trait NormalSystem<T: Scalar> {
    fn n_vars(&self) -> usize;
    fn n_rows(&self) -> usize;
    /// Minimization objective `f`.
    fn objective(&self) -> &[T];
    fn rhs(&self) -> &[T];
    /// `out = G x`.
    fn mul(&self, x: &[T], out: &mut [T]);
    /// `out = Gᵀ z`.
    fn tr_mul(&self, z: &[T], out: &mut [T]);
    /// Factors `Gᵀ diag(d) G + reg I`.
    fn factor(&mut self, d: &[T], reg: T) -> Result<()>;
    fn solve(&self, rhs: &[T]) -> Vec<T>;
}

/// Primal-dual point of the interior-point method.
#[derive(Debug, Clone, PartialEq)]
pub struct IpmIterate<T> {
    pub x: Vec<T>,
    pub w: Vec<T>,
    pub z: Vec<T>,
}

struct Residuals<T> {
    dual: Vec<T>,
    primal: Vec<T>,
    dual_norm: T,
    primal_norm: T,
    gap: T,
    rel_gap: T,
    pobj: T,
}

fn residuals<T: Scalar, S: NormalSystem<T>>(sys: &S, it: &IpmIterate<T>) -> Residuals<T> {
    let (n, m) = (sys.n_vars(), sys.n_rows());
    let mut dual = vec![T::zero(); n];
    sys.tr_mul(&it.z, &mut dual);
    for (r, &f) in dual.iter_mut().zip(sys.objective()) {
        *r += f;
    }
    let mut primal = vec![T::zero(); m];
    sys.mul(&it.x, &mut primal);
    for ((r, &w), &h) in primal.iter_mut().zip(&it.w).zip(sys.rhs()) {
        *r += w - h;
    }
    let pobj = dot(sys.objective(), &it.x);
    let gap = dot(&it.w, &it.z);
    Residuals {
        dual_norm: norm_inf(&dual),
        primal_norm: norm_inf(&primal),
        rel_gap: gap / (T::one() + pobj.abs()),
        gap,
        dual,
        primal,
        pobj,
    }
}

fn max_step<T: Scalar>(v: &[T], dv: &[T]) -> T {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < T::zero())
        .map(|(&x, &d)| -x / d)
        .fold(T::one(), T::min)
}

struct Direction<T> {
    dx: Vec<T>,
    dw: Vec<T>,
    dz: Vec<T>,
}

/// Solves the linearized KKT system for complementarity target `rc`.
fn direction<T: Scalar, S: NormalSystem<T>>(
    sys: &S,
    it: &IpmIterate<T>,
    d: &[T],
    res: &Residuals<T>,
    rc: &[T],
) -> Direction<T> {
    let (n, m) = (sys.n_vars(), sys.n_rows());
    // rhs_x = −r_d − Gᵀ(D r_p − W⁻¹ r_c)
    let t: Vec<T> = (0..m).map(|i| d[i] * res.primal[i] - rc[i] / it.w[i]).collect();
    let mut rhs = vec![T::zero(); n];
    sys.tr_mul(&t, &mut rhs);
    for (r, &rd) in rhs.iter_mut().zip(&res.dual) {
        *r = -rd - *r;
    }
    let mut dx = sys.solve(&rhs);
    // One step of iterative refinement against the unregularized operator.
    let mut gdx = vec![T::zero(); m];
    let mut hdx = vec![T::zero(); n];
    sys.mul(&dx, &mut gdx);
    for (g, &di) in gdx.iter_mut().zip(d) {
        *g *= di;
    }
    sys.tr_mul(&gdx, &mut hdx);
    let corr: Vec<T> = rhs.iter().zip(&hdx).map(|(&r, &h)| r - h).collect();
    if norm_inf(&corr) > T::epsilon() * norm_inf(&rhs) {
        let ddx = sys.solve(&corr);
        for (a, b) in dx.iter_mut().zip(ddx) {
            *a += b;
        }
    }
    sys.mul(&dx, &mut gdx);
    let dz: Vec<T> = (0..m)
        .map(|i| d[i] * (gdx[i] + res.primal[i]) - rc[i] / it.w[i])
        .collect();
    let dw: Vec<T> = (0..m).map(|i| -(rc[i] + it.w[i] * dz[i]) / it.z[i]).collect();
    Direction { dx, dw, dz }
}

/// Factors with a small primal regularization, raising it whenever rounding
/// leaves the normal matrix numerically indefinite.
fn factor_regularized<T: Scalar, S: NormalSystem<T>>(sys: &mut S, d: &[T]) -> Result<()> {
    let dmax = d.iter().copied().fold(T::zero(), T::max);
    let ceiling = T::epsilon() * T::lit(1e2) * (T::one() + dmax);
    let mut reg = T::epsilon().sqrt() * T::lit(1e-2);
    loop {
        match sys.factor(d, reg) {
            Ok(()) => return Ok(()),
            Err(e) if reg >= ceiling => return Err(e),
            Err(_) => reg = (reg * T::lit(1e3)).min(ceiling),
        }
    }
}

const MAX_CORRECTORS: usize = 2;

/// Gondzio's centrality correction: asks the trial point, taken with longer
/// steps than `dir` allows, to move its outlying complementarity products
/// back into `[0.1 μ, 10 μ]` around the target `mu`. Returns the corrected
/// complementarity rhs and direction.
#[allow(clippy::too_many_arguments)]
fn centrality_corrector<T: Scalar, S: NormalSystem<T>>(
    sys: &S,
    it: &IpmIterate<T>,
    d: &[T],
    res: &Residuals<T>,
    rc: &[T],
    dir: &Direction<T>,
    ap: T,
    ad: T,
    mu: T,
) -> Option<(Vec<T>, Direction<T>)> {
    if ap >= T::one() && ad >= T::one() {
        return None;
    }
    let reach = T::lit(0.1);
    let tp = (ap + reach).min(T::one());
    let td = (ad + reach).min(T::one());
    let (lo, hi) = (T::lit(0.1) * mu, T::lit(10.0) * mu);
    let mut changed = false;
    let rc: Vec<T> = (0..rc.len())
        .map(|i| {
            let v = (it.w[i] + tp * dir.dw[i]) * (it.z[i] + td * dir.dz[i]);
            let t = if v < lo {
                lo - v
            } else if v > hi {
                (hi - v).max(-hi)
            } else {
                T::zero()
            };
            changed |= t != T::zero();
            rc[i] - t
        })
        .collect();
    changed.then(|| {
        let dir = direction(sys, it, d, res, &rc);
        (rc, dir)
    })
}

fn cold_start<T: Scalar, S: NormalSystem<T>>(sys: &mut S) -> Result<IpmIterate<T>> {
    let (n, m) = (sys.n_vars(), sys.n_rows());
    let ones = vec![T::one(); m];
    let reg = T::epsilon().sqrt();
    sys.factor(&ones, reg)?;
    // x = argmin ‖Gx − h‖, z = argmin ‖z‖ s.t. Gᵀz = −f.
    let mut gth = vec![T::zero(); n];
    sys.tr_mul(sys.rhs(), &mut gth);
    let x = sys.solve(&gth);
    let mut gx = vec![T::zero(); m];
    sys.mul(&x, &mut gx);
    let mut w: Vec<T> = sys.rhs().iter().zip(&gx).map(|(&h, &g)| h - g).collect();
    let neg_f: Vec<T> = sys.objective().iter().map(|&f| -f).collect();
    let y = sys.solve(&neg_f);
    let mut z = vec![T::zero(); m];
    sys.mul(&y, &mut z);

    let shift = |v: &mut [T]| {
        let lo = v.iter().copied().fold(T::infinity(), T::min);
        let s = if lo <= T::zero() { T::one() - lo } else { T::zero() };
        v.iter_mut().for_each(|e| *e += s);
        v.iter_mut().for_each(|e| *e = e.max(T::lit(1e-2)));
    };
    shift(&mut w);
    shift(&mut z);
    let wz = dot(&w, &z);
    let half = T::lit(0.5);
    let sw: T = w.iter().copied().sum();
    let sz: T = z.iter().copied().sum();
    let dw = half * wz / sz;
    let dz = half * wz / sw;
    w.iter_mut().for_each(|e| *e += dw);
    z.iter_mut().for_each(|e| *e += dz);
    Ok(IpmIterate { x, w, z })
}

/// Recomputes primal slacks for the current problem and applies the same
/// balancing shift as the cold start, keeping the primal point `x`.
fn recenter_warm<T: Scalar, S: NormalSystem<T>>(sys: &S, mut it: IpmIterate<T>) -> IpmIterate<T> {
    let m = sys.n_rows();
    let mut gx = vec![T::zero(); m];
    sys.mul(&it.x, &mut gx);
    let lo = T::lit(1e-8);
    for i in 0..m {
        it.w[i] = (sys.rhs()[i] - gx[i]).max(lo);
        it.z[i] = it.z[i].max(lo);
    }
    let half = T::lit(0.5);
    let wz = dot(&it.w, &it.z);
    let sw: T = it.w.iter().copied().sum();
    let sz: T = it.z.iter().copied().sum();
    let dw = half * wz / sz;
    let dz = half * wz / sw;
    it.w.iter_mut().for_each(|e| *e += dw);
    it.z.iter_mut().for_each(|e| *e += dz);
    it
}

pub(crate) struct IpmOutcome<T> {
    pub iterate: IpmIterate<T>,
    /// First iterate whose relative gap fell below `SNAPSHOT_GAP`; a better
    /// warm start for perturbed problems than the final, nearly complementary one.
    pub snapshot: Option<IpmIterate<T>>,
    pub report: SolverReport<T>,
}

const SNAPSHOT_GAP: f64 = 1e-1;

pub(crate) fn solve<T: Scalar, S: NormalSystem<T>>(
    sys: &mut S,
    opts: &LpOptions<T>,
    warm: Option<IpmIterate<T>>,
) -> Result<IpmOutcome<T>> {
    let start = Instant::now();
    let (n, m) = (sys.n_vars(), sys.n_rows());
    let tol = opts.tol;
    let h_scale = T::one() + norm_inf(sys.rhs());
    let f_scale = T::one() + norm_inf(sys.objective());
    let converged = |r: &Residuals<T>| {
        r.primal_norm <= tol * h_scale && r.dual_norm <= tol * f_scale && r.rel_gap <= tol
    };

    match warm {
        Some(w) if w.x.len() == n && w.w.len() == m && w.z.len() == m => {
            let r = residuals(sys, &w);
            if converged(&r) {
                return Ok(IpmOutcome {
                    report: SolverReport::new(0, &r.rel_gap, r.primal_norm, r.dual_norm, r.pobj, start, SolverStatus::Optimal),
                    iterate: w,
                    snapshot: None,
                });
            }
            let it = recenter_warm(sys, w);
            match iterate(sys, opts, it, 0, start) {
                Ok(out) => Ok(out),
                Err((e, used)) => {
                    log::debug!("warm start failed after {used} iterations ({e}); restarting cold");
                    let it = cold_start(sys)?;
                    iterate(sys, opts, it, used, start).map_err(|(e, _)| e)
                }
            }
        }
        Some(_) => Err(SalpError::Dimension("warm-start iterate does not match the problem".into())),
        None => {
            let it = cold_start(sys)?;
            iterate(sys, opts, it, 0, start).map_err(|(e, _)| e)
        }
    }
}

/// Predictor-corrector iterations from `it`; iteration counts in reports
/// start at `offset`. Errors carry the number of iterations spent.
fn iterate<T: Scalar, S: NormalSystem<T>>(
    sys: &mut S,
    opts: &LpOptions<T>,
    mut it: IpmIterate<T>,
    offset: usize,
    start: Instant,
) -> std::result::Result<IpmOutcome<T>, (SalpError, usize)> {
    let m = sys.n_rows();
    let tol = opts.tol;
    let h_scale = T::one() + norm_inf(sys.rhs());
    let f_scale = T::one() + norm_inf(sys.objective());
    let converged = |r: &Residuals<T>| {
        r.primal_norm <= tol * h_scale && r.dual_norm <= tol * f_scale && r.rel_gap <= tol
    };
    let mm = T::from_usize_lossy(m.max(1));
    let eta = T::lit(0.995);
    let big = T::lit(1e12);
    let mut stalls = 0;
    let mut snapshot = None;
    for iter in 0..opts.max_iter {
        let res = residuals(sys, &it);
        if converged(&res) {
            return Ok(IpmOutcome {
                report: SolverReport::new(offset + iter, &res.rel_gap, res.primal_norm, res.dual_norm, res.pobj, start, SolverStatus::Optimal),
                iterate: it,
                snapshot,
            });
        }
        if snapshot.is_none() && iter > 0 && res.rel_gap <= T::lit(SNAPSHOT_GAP) {
            snapshot = Some(it.clone());
        }
        // Certificates of infeasibility: rays that keep growing.
        let xn = norm_inf(&it.x);
        let zn = norm_inf(&it.z);
        if xn > big * h_scale && res.pobj < T::zero() {
            return Err((SalpError::Unbounded, offset + iter));
        }
        if zn > big * f_scale && dot(sys.rhs(), &it.z) < T::zero() {
            return Err((SalpError::Infeasible, offset + iter));
        }

        let mu = res.gap / mm;
        let d: Vec<T> = it.z.iter().zip(&it.w).map(|(&z, &w)| z / w).collect();
        if let Err(e) = factor_regularized(sys, &d) {
            log::debug!("normal-equations factorization failed at iteration {iter}: {e}");
            return Err((SalpError::NumericalFailure(format!("factorization failed: {e}")), offset + iter));
        }

        let rc_aff: Vec<T> = it.w.iter().zip(&it.z).map(|(&w, &z)| w * z).collect();
        let aff = direction(sys, &it, &d, &res, &rc_aff);
        let ap = max_step(&it.w, &aff.dw);
        let ad = max_step(&it.z, &aff.dz);
        let mu_aff = (0..m)
            .map(|i| (it.w[i] + ap * aff.dw[i]) * (it.z[i] + ad * aff.dz[i]))
            .sum::<T>()
            / mm;
        let sigma = (mu_aff / mu).powi(3).min(T::one()).max(T::zero());

        let rc: Vec<T> = (0..m)
            .map(|i| it.w[i] * it.z[i] + aff.dw[i] * aff.dz[i] - sigma * mu)
            .collect();
        let mut dir = direction(sys, &it, &d, &res, &rc);
        let mut ap = (eta * max_step(&it.w, &dir.dw)).min(T::one());
        let mut ad = (eta * max_step(&it.z, &dir.dz)).min(T::one());
        let mut rc = rc;
        for _ in 0..MAX_CORRECTORS {
            let Some(next) = centrality_corrector(sys, &it, &d, &res, &rc, &dir, ap, ad, sigma * mu) else { break };
            let (next_rc, next_dir) = next;
            let nap = (eta * max_step(&it.w, &next_dir.dw)).min(T::one());
            let nad = (eta * max_step(&it.z, &next_dir.dz)).min(T::one());
            if nap.min(nad) < T::lit(1.01) * ap.min(ad) {
                break;
            }
            (rc, dir, ap, ad) = (next_rc, next_dir, nap, nad);
        }
        if !(ap.is_finite() && ad.is_finite()) || dir.dx.iter().any(|v| !v.is_finite()) {
            return Err((SalpError::NumericalFailure("non-finite search direction".into()), offset + iter));
        }
        if ap < T::lit(1e-10) && ad < T::lit(1e-10) {
            stalls += 1;
            if stalls > 5 {
                return Err((
                    SalpError::NumericalFailure(format!(
                        "step length collapsed (primal residual {}, gap {})",
                        res.primal_norm, res.rel_gap
                    )),
                    offset + iter,
                ));
            }
        } else {
            stalls = 0;
        }
        for (x, dx) in it.x.iter_mut().zip(&dir.dx) {
            *x += ap * *dx;
        }
        for (w, dw) in it.w.iter_mut().zip(&dir.dw) {
            *w = (*w + ap * *dw).max(T::min_positive_value());
        }
        for (z, dz) in it.z.iter_mut().zip(&dir.dz) {
            *z = (*z + ad * *dz).max(T::min_positive_value());
        }
    }
    let res = residuals(sys, &it);
    if converged(&res) {
        return Ok(IpmOutcome {
            report: SolverReport::new(offset + opts.max_iter, &res.rel_gap, res.primal_norm, res.dual_norm, res.pobj, start, SolverStatus::Optimal),
            iterate: it,
            snapshot,
        });
    }
    Err((
        SalpError::IterationLimit { iterations: offset + opts.max_iter, gap: res.rel_gap.to_f64_lossy() },
        offset + opts.max_iter,
    ))
}
