//! Explicit finite MDPs and the exact dynamic-programming oracles used as
//! ground truth by the rest of the crate.

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SalpError};
use crate::linalg::{Lu, Matrix};
use crate::lp::{solve_dense_lp, DenseLp, LpOptions};
use crate::scalar::{dot, norm_inf, Scalar};

const ROW_SUM_TOL: f64 = 1e-12;

/// Finite discounted-cost MDP with dense per-action transition matrices.
#[derive(Debug, Clone)]
pub struct MdpModel<T> {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Matrix<T>>,
    costs: Matrix<T>,
    discount: T,
}

impl<T: Scalar> MdpModel<T> {
    /// `transitions[a]` is `P_a`; `costs` is `n_states × n_actions`.
    pub fn new(transitions: Vec<Matrix<T>>, costs: Matrix<T>, discount: T) -> Result<Self> {
        let n_actions = transitions.len();
        if n_actions == 0 {
            return Err(SalpError::model("at least one action is required", None));
        }
        let n_states = transitions[0].rows();
        if n_states == 0 {
            return Err(SalpError::model("at least one state is required", None));
        }
        if !(discount > T::zero() && discount < T::one()) {
            return Err(SalpError::model(format!("discount {discount} outside (0, 1)"), None));
        }
        if costs.rows() != n_states || costs.cols() != n_actions {
            return Err(SalpError::model(
                format!("costs are {}x{}, expected {n_states}x{n_actions}", costs.rows(), costs.cols()),
                None,
            ));
        }
        if let Some(i) = costs.as_slice().iter().position(|c| !c.is_finite()) {
            return Err(SalpError::model(
                format!("cost g({}, {}) is not finite", i / n_actions, i % n_actions),
                None,
            ));
        }
        let tol = T::lit(ROW_SUM_TOL).max(T::epsilon() * T::from_usize_lossy(4 * n_states));
        for (a, p) in transitions.iter().enumerate() {
            if p.rows() != n_states || p.cols() != n_states {
                return Err(SalpError::model(format!("P_{a} is not {n_states}x{n_states}"), None));
            }
            for x in 0..n_states {
                let row = p.row(x);
                if row.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
                    return Err(SalpError::model(format!("P_{a}({x}, .) has a negative entry"), None));
                }
                let sum: T = row.iter().copied().sum();
                if (sum - T::one()).abs() > tol {
                    return Err(SalpError::model(format!("P_{a}({x}, .) sums to {sum}"), None));
                }
            }
        }
        Ok(Self { n_states, n_actions, transitions, costs, discount })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> T {
        self.discount
    }

    pub fn transition(&self, action: usize) -> &Matrix<T> {
        &self.transitions[action]
    }

    pub fn cost(&self, state: usize, action: usize) -> T {
        self.costs[(state, action)]
    }

    pub fn costs(&self) -> &Matrix<T> {
        &self.costs
    }

    /// `Σ_x' P_a(x, x') v(x')`.
    #[inline]
    pub fn expected_next(&self, state: usize, action: usize, v: &[T]) -> T {
        dot(self.transitions[action].row(state), v)
    }

    /// `g(x, a) + α Σ_x' P_a(x, x') J(x')`.
    #[inline]
    pub fn q_value(&self, state: usize, action: usize, j: &[T]) -> T {
        self.costs[(state, action)] + self.discount * self.expected_next(state, action, j)
    }

    pub fn policy_matrix(&self, policy: &Policy) -> Matrix<T> {
        Matrix::from_fn(self.n_states, self.n_states, |x, y| {
            self.transitions[policy.action(x)][(x, y)]
        })
    }

    pub fn policy_costs(&self, policy: &Policy) -> Vec<T> {
        (0..self.n_states).map(|x| self.costs[(x, policy.action(x))]).collect()
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.n_states {
            return Err(SalpError::Dimension(format!(
                "{what} has length {len}, model has {} states",
                self.n_states
            )));
        }
        Ok(())
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        self.check_len(policy.len(), "policy")?;
        if let Some(x) = policy.actions().iter().position(|&a| a >= self.n_actions) {
            return Err(SalpError::InvalidArgument(format!(
                "policy chooses action {} at state {x}, model has {} actions",
                policy.action(x),
                self.n_actions
            )));
        }
        Ok(())
    }

    /// LU factors of `I − α P_μ`.
    fn resolvent_lu(&self, policy: &Policy) -> Result<Lu<T>> {
        let alpha = self.discount;
        let m = Matrix::from_fn(self.n_states, self.n_states, |x, y| {
            let id = if x == y { T::one() } else { T::zero() };
            id - alpha * self.transitions[policy.action(x)][(x, y)]
        });
        Lu::factor(m)
    }
}

/// Deterministic stationary policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn constant(n_states: usize, action: usize) -> Self {
        Self(vec![action; n_states])
    }

    #[inline]
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Cost-to-go vector indexed by state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction<T>(Vec<T>);

impl<T: Scalar> ValueFunction<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SalpError::InvalidArgument("value function has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for ValueFunction<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Probability distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution<T>(Vec<T>);

impl<T: Scalar> StateDistribution<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(SalpError::InvalidArgument("empty distribution".into()));
        }
        if weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(SalpError::InvalidArgument("distribution has a negative entry".into()));
        }
        let sum: T = weights.iter().copied().sum();
        let tol = T::lit(ROW_SUM_TOL).max(T::epsilon() * T::from_usize_lossy(weights.len()));
        if (sum - T::one()).abs() > tol {
            return Err(SalpError::InvalidArgument(format!("distribution sums to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        let w = T::one() / T::from_usize_lossy(n);
        Self(vec![w; n])
    }

    pub fn point_mass(n: usize, state: usize) -> Self {
        let mut w = vec![T::zero(); n];
        w[state] = T::one();
        Self(w)
    }

    /// Normalizes nonnegative weights to sum to one.
    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        let sum: T = weights.iter().copied().sum();
        if !(sum > T::zero()) {
            return Err(SalpError::InvalidArgument("weights have no positive mass".into()));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn has_full_support(&self) -> bool {
        self.0.iter().all(|&w| w > T::zero())
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for StateDistribution<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// `(TJ)(x) = min_a g(x,a) + α Σ_x' P_a(x,x') J(x')`.
pub fn bellman_apply<T: Scalar>(j: &[T], model: &MdpModel<T>) -> Result<ValueFunction<T>> {
    model.check_len(j.len(), "value function")?;
    let out = (0..model.n_states)
        .map(|x| {
            (0..model.n_actions)
                .map(|a| model.q_value(x, a, j))
                .fold(T::infinity(), T::min)
        })
        .collect();
    Ok(ValueFunction(out))
}

/// `T_μ J = g_μ + α P_μ J`.
pub fn bellman_policy_apply<T: Scalar>(
    j: &[T],
    policy: &Policy,
    model: &MdpModel<T>,
) -> Result<ValueFunction<T>> {
    model.check_len(j.len(), "value function")?;
    model.check_policy(policy)?;
    let out = (0..model.n_states).map(|x| model.q_value(x, policy.action(x), j)).collect();
    Ok(ValueFunction(out))
}

/// Greedy policy with respect to `J`; ties go to the lowest action index.
pub fn greedy_policy<T: Scalar>(j: &[T], model: &MdpModel<T>) -> Result<Policy> {
    model.check_len(j.len(), "value function")?;
    let actions = (0..model.n_states)
        .map(|x| {
            let mut best = 0;
            let mut best_q = model.q_value(x, 0, j);
            for a in 1..model.n_actions {
                let q = model.q_value(x, a, j);
                if q < best_q {
                    best = a;
                    best_q = q;
                }
            }
            best
        })
        .collect();
    Ok(Policy(actions))
}

fn refine<T: Scalar>(
    lu: &Lu<T>,
    apply: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    transpose: bool,
) -> Result<Vec<T>> {
    let solve = |rhs: &[T]| if transpose { lu.solve_transpose(rhs) } else { lu.solve(rhs) };
    let residual = |x: &[T]| -> Vec<T> {
        let ax = apply(x);
        b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect()
    };
    let mut x = solve(b)?;
    for _ in 0..2 {
        let dx = solve(&residual(&x))?;
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    let res = norm_inf(&residual(&x));
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e3)) * (T::one() + norm_inf(b));
    if !(res <= tol) {
        return Err(SalpError::NumericalFailure(format!("linear-solve residual {res}")));
    }
    Ok(x)
}

/// `(I − αP_μ)⁻¹ s`.
pub fn resolvent_apply<T: Scalar>(
    model: &MdpModel<T>,
    policy: &Policy,
    s: &[T],
) -> Result<ValueFunction<T>> {
    model.check_policy(policy)?;
    model.check_len(s.len(), "vector")?;
    let lu = model.resolvent_lu(policy)?;
    let alpha = model.discount;
    let apply = |v: &[T]| -> Vec<T> {
        (0..model.n_states)
            .map(|x| v[x] - alpha * model.expected_next(x, policy.action(x), v))
            .collect()
    };
    Ok(ValueFunction(refine(&lu, apply, s, false)?))
}

/// `J_μ`, the unique solution of `(I − αP_μ) J = g_μ`.
pub fn policy_value<T: Scalar>(policy: &Policy, model: &MdpModel<T>) -> Result<ValueFunction<T>> {
    model.check_policy(policy)?;
    let g = model.policy_costs(policy);
    resolvent_apply(model, policy, &g)
}

/// `πᵀ = (1 − α) νᵀ (I − αP_μ)⁻¹`: discounted state-visitation frequencies.
pub fn occupancy<T: Scalar>(
    model: &MdpModel<T>,
    policy: &Policy,
    nu: &StateDistribution<T>,
) -> Result<StateDistribution<T>> {
    model.check_policy(policy)?;
    model.check_len(nu.len(), "distribution")?;
    let lu = model.resolvent_lu(policy)?;
    let alpha = model.discount;
    let n = model.n_states;
    let apply_t = |v: &[T]| -> Vec<T> {
        let mut out = v.to_vec();
        for x in 0..n {
            let row = model.transitions[policy.action(x)].row(x);
            for (o, &p) in out.iter_mut().zip(row) {
                *o -= alpha * p * v[x];
            }
        }
        out
    };
    let y = refine(&lu, apply_t, nu, true)?;
    let scale = T::one() - alpha;
    let weights: Vec<T> = y.into_iter().map(|v| (v * scale).max(T::zero())).collect();
    StateDistribution::from_weights(weights)
}

#[derive(Debug, Clone)]
pub struct ValueIterationResult<T> {
    pub values: ValueFunction<T>,
    pub iterations: usize,
    pub residual: T,
}

/// Value iteration until the sup-norm Bellman residual is at most `tol`.
pub fn exact_value_iteration<T: Scalar>(model: &MdpModel<T>, tol: T) -> Result<ValueIterationResult<T>> {
    if !(tol > T::zero()) {
        return Err(SalpError::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let mut j = vec![T::zero(); model.n_states];
    let mut iterations = 0;
    loop {
        let tj = bellman_apply(&j, model)?.0;
        let residual = j.iter().zip(&tj).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        if residual <= tol {
            return Ok(ValueIterationResult { values: ValueFunction(j), iterations, residual });
        }
        j = tj;
        iterations += 1;
        if iterations > 10_000_000 {
            return Err(SalpError::NumericalFailure("value iteration stalled".into()));
        }
    }
}

/// Optimal cost-to-go to near machine precision: value iteration followed by
/// exact evaluation of the resulting greedy policy, repeated until the
/// policy is stable.
pub fn optimal_value<T: Scalar>(model: &MdpModel<T>) -> Result<(ValueFunction<T>, Policy)> {
    let warm = exact_value_iteration(model, T::epsilon().sqrt())?.values;
    let mut policy = greedy_policy(&warm, model)?;
    for _ in 0..100 {
        let j = policy_value(&policy, model)?;
        let next = greedy_policy(&j, model)?;
        if next == policy {
            return Ok((j, policy));
        }
        policy = next;
    }
    Err(SalpError::NumericalFailure("policy iteration did not settle".into()))
}

/// Solves the exact LP `max νᵀJ s.t. J ≤ TJ`.
pub fn solve_exact_lp<T: Scalar>(
    model: &MdpModel<T>,
    nu: &StateDistribution<T>,
) -> Result<ValueFunction<T>> {
    model.check_len(nu.len(), "distribution")?;
    if !nu.has_full_support() {
        return Err(SalpError::InvalidArgument(
            "state-relevance weights must have full support".into(),
        ));
    }
    let n = model.n_states;
    let alpha = model.discount;
    let mut rows = Vec::with_capacity(n * model.n_actions);
    let mut rhs = Vec::with_capacity(n * model.n_actions);
    for x in 0..n {
        for a in 0..model.n_actions {
            let mut row: Vec<T> = model.transitions[a].row(x).iter().map(|&p| -alpha * p).collect();
            row[x] += T::one();
            rows.push(row);
            rhs.push(model.costs[(x, a)]);
        }
    }
    let lp = DenseLp::new(nu.to_vec(), Matrix::from_rows(&rows)?, rhs)?;
    let (x, _) = solve_dense_lp(&lp, &LpOptions::default())?;
    ValueFunction::new(x)
}

#[derive(Debug, Deserialize)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    costs: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
}

impl<T: Scalar> MdpModel<T> {
    /// Parses the JSON model format:
    /// `{"n_states", "n_actions", "discount", "costs": [x][a], "transitions": [a][x][x']}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text)
            .map_err(|e| SalpError::model(e.to_string(), Some(e.line())))?;
        let line = |path: &[PathSeg]| json_line_of(text, path);
        let (n, m) = (file.n_states, file.n_actions);
        if n == 0 || m == 0 {
            return Err(SalpError::model("n_states and n_actions must be positive", Some(1)));
        }
        if !(file.discount > 0.0 && file.discount < 1.0) {
            return Err(SalpError::model(
                format!("discount {} outside (0, 1)", file.discount),
                line(&[PathSeg::Key("discount")]),
            ));
        }
        if file.costs.len() != n {
            return Err(SalpError::model(
                format!("costs has {} rows, expected {n}", file.costs.len()),
                line(&[PathSeg::Key("costs")]),
            ));
        }
        let mut costs = Matrix::zeros(n, m);
        for (x, row) in file.costs.iter().enumerate() {
            let here = || line(&[PathSeg::Key("costs"), PathSeg::Index(x)]);
            if row.len() != m {
                return Err(SalpError::model(format!("costs[{x}] has {} entries, expected {m}", row.len()), here()));
            }
            for (a, &c) in row.iter().enumerate() {
                if !c.is_finite() {
                    return Err(SalpError::model(format!("costs[{x}][{a}] is not finite"), here()));
                }
                costs[(x, a)] = T::lit(c);
            }
        }
        if file.transitions.len() != m {
            return Err(SalpError::model(
                format!("transitions has {} actions, expected {m}", file.transitions.len()),
                line(&[PathSeg::Key("transitions")]),
            ));
        }
        let mut transitions = Vec::with_capacity(m);
        for (a, mat) in file.transitions.iter().enumerate() {
            if mat.len() != n {
                return Err(SalpError::model(
                    format!("transitions[{a}] has {} rows, expected {n}", mat.len()),
                    line(&[PathSeg::Key("transitions"), PathSeg::Index(a)]),
                ));
            }
            let mut p = Matrix::zeros(n, n);
            for (x, row) in mat.iter().enumerate() {
                let here = || line(&[PathSeg::Key("transitions"), PathSeg::Index(a), PathSeg::Index(x)]);
                if row.len() != n {
                    return Err(SalpError::model(
                        format!("transitions[{a}][{x}] has {} entries, expected {n}", row.len()),
                        here(),
                    ));
                }
                if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(SalpError::model(format!("transitions[{a}][{x}] has a negative entry"), here()));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(SalpError::model(format!("transitions[{a}][{x}] sums to {sum}"), here()));
                }
                for (y, &v) in row.iter().enumerate() {
                    p[(x, y)] = T::lit(v);
                }
            }
            transitions.push(p);
        }
        Self::new(transitions, costs, T::lit(file.discount))
    }

    pub fn to_json_string(&self) -> String {
        let costs: Vec<Vec<f64>> = (0..self.n_states)
            .map(|x| self.costs.row(x).iter().map(|c| c.to_f64_lossy()).collect())
            .collect();
        let transitions: Vec<Vec<Vec<f64>>> = self
            .transitions
            .iter()
            .map(|p| (0..self.n_states).map(|x| p.row(x).iter().map(|v| v.to_f64_lossy()).collect()).collect())
            .collect();
        serde_json::json!({
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "discount": self.discount.to_f64_lossy(),
            "costs": costs,
            "transitions": transitions,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PathSeg<'a> {
    Key(&'a str),
    Index(usize),
}

/// 1-based line on which the JSON value at `path` starts.
fn json_line_of(text: &str, path: &[PathSeg]) -> Option<usize> {
    #[derive(Debug)]
    enum Frame {
        Object { key: Option<String> },
        Array { index: usize },
    }
    let mut stack: Vec<Frame> = Vec::new();
    let mut line = 1;
    let mut chars = text.chars().peekable();
    let mut expecting_key = false;
    let matches = |stack: &[Frame]| -> bool {
        stack.len() == path.len()
            && stack.iter().zip(path).all(|(f, seg)| match (f, seg) {
                (Frame::Object { key: Some(k) }, PathSeg::Key(want)) => k == want,
                (Frame::Array { index }, PathSeg::Index(want)) => index == want,
                _ => false,
            })
    };
    let mut value_start = true;
    while let Some(c) = chars.next() {
        if c == '\n' {
            line += 1;
            continue;
        }
        if c.is_whitespace() {
            continue;
        }
        if value_start && !expecting_key && c != ']' && c != '}' && matches(&stack) {
            return Some(line);
        }
        match c {
            '{' => {
                stack.push(Frame::Object { key: None });
                expecting_key = true;
                value_start = false;
            }
            '[' => {
                stack.push(Frame::Array { index: 0 });
                value_start = true;
            }
            '}' | ']' => {
                stack.pop();
                value_start = false;
            }
            ',' => match stack.last_mut() {
                Some(Frame::Array { index }) => {
                    *index += 1;
                    value_start = true;
                }
                Some(Frame::Object { .. }) => {
                    expecting_key = true;
                    value_start = false;
                }
                None => {}
            },
            ':' => {
                value_start = true;
            }
            '"' => {
                let mut s = String::new();
                let mut escaped = false;
                for d in chars.by_ref() {
                    if d == '\n' {
                        line += 1;
                    }
                    if escaped {
                        escaped = false;
                        s.push(d);
                    } else if d == '\\' {
                        escaped = true;
                    } else if d == '"' {
                        break;
                    } else {
                        s.push(d);
                    }
                }
                if expecting_key {
                    if let Some(Frame::Object { key }) = stack.last_mut() {
                        *key = Some(s);
                    }
                    expecting_key = false;
                }
                value_start = false;
            }
            _ => {
                value_start = false;
            }
        }
    }
    None
}

/// Random MDP with dense uniform-then-normalized transition rows and costs
/// uniform in `[0, 1)`.
pub fn random_mdp<T: Scalar, R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    discount: T,
    rng: &mut R,
) -> Result<MdpModel<T>> {
    let transitions = (0..n_actions)
        .map(|_| {
            let mut p = Matrix::from_fn(n_states, n_states, |_, _| T::lit(rng.gen::<f64>()));
            for x in 0..n_states {
                let row = p.row_mut(x);
                let sum: T = row.iter().copied().sum();
                row.iter_mut().for_each(|v| *v /= sum);
            }
            p
        })
        .collect();
    let costs = Matrix::from_fn(n_states, n_actions, |_, _| T::lit(rng.gen::<f64>()));
    MdpModel::new(transitions, costs, discount)
}
