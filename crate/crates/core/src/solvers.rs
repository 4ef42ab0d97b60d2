//! One composite solver for the whole estimator family: monotone FISTA with
//! restart on `Σ l1ᵢ|bᵢ| + ½‖y − Ab‖² + ½ Σ l2ᵢ (bᵢ − cᵢ)²`, finished by an
//! active-set polish that returns the exact KKT point once the sign pattern
//! has settled.

use crate::bounds;
use crate::linalg::{self, Cholesky, DenseMatrix, LinalgError};
use crate::model::PriorKnowledge;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 50_000;
/// Iterations between KKT checks / polish attempts.
const CHECK_EVERY: usize = 20;
/// Largest active set the polish step will factor.
const POLISH_MAX_ACTIVE: usize = 800;
/// Relative KKT violation accepted as converged.
const KKT_TOL: f64 = 1e-11;
/// Window over which a stalled objective counts as converged.
const STALL_WINDOW: usize = 200;
/// Margin on the Lipschitz estimate; the power-iteration path can only
/// underestimate `‖A‖²`.
/// Continuation starts when `‖∇f(0)‖_∞` exceeds this multiple of the smallest
/// ℓ₁ weight; weights shrink by `CONTINUATION_STEP` per stage.
const CONTINUATION_RATIO: f64 = 20.0;
const CONTINUATION_STEP: f64 = 0.2;
const STAGE_TOL: f64 = 1e-8;
const STAGE_MAX_ITER: usize = 2_000;
const LIPSCHITZ_MARGIN: f64 = 1.0 + 1e-9;

pub const ESTIMATOR_IDS: [&str; 11] = [
    "reg-mod-bpdn",
    "mod-bpdn",
    "bpdn",
    "weighted-l1",
    "cs-residual",
    "cs-mod-residual",
    "mod-cs-residual",
    "reg-mod-bpdn-var",
    "reg-bpdn",
    "ls-cs",
    "kf-cs-static",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("measurement operator is identically zero")]
    ZeroOperator,
    #[error("invalid objective: {0}")]
    InvalidSpec(String),
    #[error("unknown estimator '{name}'; valid ids: {}", ESTIMATOR_IDS.join(", "))]
    UnknownEstimator { name: String },
    #[error("LS prior undefined: A_T is rank deficient")]
    LsPriorUndefined,
    #[error("Q singular: {0}")]
    QSingular(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Parametrization of the composite objective
/// `γ‖b_{T^c}‖₁ + γ′‖b_T‖₁ + ½‖(y − shift) − Ab‖² + ½λ‖b_T − μ̂_T‖² + ½λ_c‖b_{T^c}‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectiveSpec {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub lambda: f64,
    pub lambda_c: f64,
    pub t: Vec<usize>,
    pub mu_hat: Vec<f64>,
    #[serde(default)]
    pub y_shift: Option<Vec<f64>>,
    /// Freeze `b_T = μ̂_T` and solve over `T^c` only.
    #[serde(default)]
    pub fixed_t: bool,
}

impl ObjectiveSpec {
    /// BPDN-type objective with no prior: `γ‖b‖₁ + ½‖y − Ab‖²`.
    pub fn bpdn(m: usize, gamma: f64) -> Self {
        Self {
            gamma,
            gamma_prime: 0.0,
            lambda: 0.0,
            lambda_c: 0.0,
            t: Vec::new(),
            mu_hat: vec![0.0; m],
            y_shift: None,
            fixed_t: false,
        }
    }

    pub fn reg_mod(t: Vec<usize>, mu_hat: Vec<f64>, gamma: f64, lambda: f64) -> Self {
        Self {
            gamma,
            gamma_prime: 0.0,
            lambda,
            lambda_c: 0.0,
            t,
            mu_hat,
            y_shift: None,
            fixed_t: false,
        }
    }

    pub fn validate(&self, rows: usize, m: usize) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("gammaPrime", self.gamma_prime),
            ("lambda", self.lambda),
            ("lambdaC", self.lambda_c),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SolverError::InvalidSpec(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        if self.mu_hat.len() != m {
            return Err(SolverError::Dimension(format!("muHat has length {} but A has {m} columns", self.mu_hat.len())));
        }
        if !self.t.windows(2).all(|w| w[0] < w[1]) || self.t.last().is_some_and(|&i| i >= m) {
            return Err(SolverError::InvalidSpec("T must be sorted, unique and within range".into()));
        }
        let in_t = membership(&self.t, m);
        if let Some(i) = (0..m).find(|&i| !in_t[i] && self.mu_hat[i] != 0.0) {
            return Err(SolverError::InvalidSpec(format!("muHat is nonzero at {i} outside T")));
        }
        if let Some(s) = &self.y_shift {
            if s.len() != rows {
                return Err(SolverError::Dimension(format!("yShift has length {} but A has {rows} rows", s.len())));
            }
        }
        if self.fixed_t && (self.gamma_prime != 0.0 || self.lambda != 0.0) {
            return Err(SolverError::InvalidSpec("fixedT requires gammaPrime = lambda = 0".into()));
        }
        Ok(())
    }

    /// Value of the objective at `b` (full-length, original coordinates of `b`).
    pub fn objective(&self, a: &DenseMatrix, y: &[f64], b: &[f64]) -> f64 {
        let in_t = membership(&self.t, b.len());
        let mut r = a.matvec(b);
        for (i, ri) in r.iter_mut().enumerate() {
            let target = y[i] - self.y_shift.as_ref().map_or(0.0, |s| s[i]);
            *ri = target - *ri;
        }
        let mut val = 0.5 * linalg::dot(&r, &r);
        for (i, &bi) in b.iter().enumerate() {
            if in_t[i] {
                val += self.gamma_prime * bi.abs() + 0.5 * self.lambda * (bi - self.mu_hat[i]).powi(2);
            } else {
                val += self.gamma * bi.abs() + 0.5 * self.lambda_c * bi * bi;
            }
        }
        val
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolverResult {
    pub estimate: Vec<f64>,
    /// Objective of the problem actually solved (residual coordinates for
    /// residual-form estimators).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
    /// Whether the returned minimizer is certified unique (strict convexity,
    /// or a full-rank active set with strict dual feasibility off it).
    pub uniqueness_certified: bool,
}

pub(crate) fn membership(set: &[usize], m: usize) -> Vec<bool> {
    let mut v = vec![false; m];
    for &i in set {
        v[i] = true;
    }
    v
}

/// Separable problem over the free coordinates only.
struct Compact {
    a: DenseMatrix,
    y: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
    center: Vec<f64>,
}

struct Outcome {
    b: Vec<f64>,
    iterations: usize,
    converged: bool,
    certified: bool,
}

fn soft(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

impl Compact {
    fn objective_with(&self, b: &[f64], ab: &[f64]) -> f64 {
        let mut val = 0.0;
        for (yi, ai) in self.y.iter().zip(ab) {
            val += 0.5 * (yi - ai).powi(2);
        }
        for i in 0..b.len() {
            val += self.l1[i] * b[i].abs() + 0.5 * self.l2[i] * (b[i] - self.center[i]).powi(2);
        }
        val
    }

    /// Negative gradient of the smooth part, `Aᵀ(y − Ab) − l2∘(b − c)`.
    fn neg_gradient(&self, b: &[f64], ab: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.y.iter().zip(ab).map(|(y, a)| y - a).collect();
        let mut g = self.a.tr_matvec(&r);
        for i in 0..g.len() {
            g[i] -= self.l2[i] * (b[i] - self.center[i]);
        }
        g
    }

    /// Largest violation of the subgradient optimality condition.
    fn kkt_violation(&self, b: &[f64], neg_grad: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..b.len() {
            let v = if b[i] != 0.0 {
                (neg_grad[i] - self.l1[i] * b[i].signum()).abs()
            } else {
                (neg_grad[i].abs() - self.l1[i]).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Solves the smooth problem on the active set implied by `b` and accepts
    /// it if it is a KKT point of the full problem.
    fn polish(&self, b: &[f64], kkt_scale: f64) -> Option<(Vec<f64>, bool)> {
        let active: Vec<usize> = (0..b.len()).filter(|&i| b[i] != 0.0 || self.l1[i] == 0.0).collect();
        // Unregularized active columns beyond the row count make the system singular.
        let unregularized = active.iter().filter(|&&i| self.l2[i] == 0.0).count();
        if active.len() > POLISH_MAX_ACTIVE || unregularized > self.a.rows() {
            return None;
        }
        let mut z = vec![0.0; b.len()];
        let mut full_rank = true;
        if !active.is_empty() {
            let a_e = self.a.select_columns(&active);
            let mut h = a_e.gram();
            for (k, &i) in active.iter().enumerate() {
                h.set(k, k, h.get(k, k) + self.l2[i]);
            }
            let mut rhs = a_e.tr_matvec(&self.y);
            for (k, &i) in active.iter().enumerate() {
                rhs[k] += self.l2[i] * self.center[i] - self.l1[i] * b[i].signum();
            }
            let chol = Cholesky::factor(&h).ok()?;
            let z_e = chol.solve_vec(&rhs);
            for (k, &i) in active.iter().enumerate() {
                if self.l1[i] > 0.0 && (z_e[k] == 0.0 || z_e[k].signum() != b[i].signum()) {
                    return None;
                }
                z[i] = z_e[k];
            }
            full_rank = linalg::psd_rank(&a_e.gram()) == active.len();
        }
        let az = self.a.matvec(&z);
        let g = self.neg_gradient(&z, &az);
        let slack = KKT_TOL * kkt_scale;
        if self.kkt_violation(&z, &g) > slack {
            return None;
        }
        let strict = (0..b.len())
            .filter(|&i| z[i] == 0.0)
            .all(|i| g[i].abs() < self.l1[i] - slack);
        Some((z, full_rank && strict))
    }

    /// Continuation on the ℓ₁ weights: a geometric sequence of heavier
    /// problems, each warm-starting the next, ending at the requested weights.
    fn solve(&self, lipschitz: f64, opts: &SolveOptions) -> Outcome {
        let m = self.l1.len();
        let zero = vec![0.0; m];
        let az0 = vec![0.0; self.y.len()];
        let g0 = linalg::norm_inf(&self.neg_gradient(&zero, &az0));
        let l1_min = self.l1.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        let mut start = zero;
        let mut spent = 0;
        if l1_min.is_finite() && g0 > CONTINUATION_RATIO * l1_min {
            let mut c = g0 / l1_min * CONTINUATION_STEP;
            let stage_opts = SolveOptions { tol: STAGE_TOL, max_iter: STAGE_MAX_ITER };
            while c > 1.0 {
                let stage = Compact {
                    a: self.a.clone(),
                    y: self.y.clone(),
                    l1: self.l1.iter().map(|v| v * c).collect(),
                    l2: self.l2.clone(),
                    center: self.center.clone(),
                };
                let out = stage.run(start, lipschitz, &stage_opts);
                start = out.b;
                spent += out.iterations;
                c *= CONTINUATION_STEP;
            }
        }
        let mut out = self.run(start, lipschitz, opts);
        out.iterations += spent;
        out
    }

    fn run(&self, start: Vec<f64>, lipschitz: f64, opts: &SolveOptions) -> Outcome {
        let m = self.l1.len();
        let strictly_convex = self.l2.iter().all(|&v| v > 0.0);
        let aty = self.a.tr_matvec(&self.y);
        let kkt_scale = linalg::norm_inf(&aty)
            .max(self.l1.iter().cloned().fold(0.0, f64::max))
            .max(f64::MIN_POSITIVE);
        let step = 1.0 / lipschitz;

        let mut ax = self.a.matvec(&start);
        let mut x = start;
        let mut fx = self.objective_with(&x, &ax);
        let mut z = x.clone();
        let mut az = ax.clone();
        let mut t = 1.0f64;
        let mut history: Vec<f64> = Vec::new();

        if m == 0 {
            return Outcome { b: x, iterations: 0, converged: true, certified: true };
        }

        for k in 1..=opts.max_iter {
            let g = self.neg_gradient(&z, &az);
            let u: Vec<f64> = (0..m).map(|i| soft(z[i] + step * g[i], step * self.l1[i])).collect();
            let au = self.a.matvec(&u);
            let fu = self.objective_with(&u, &au);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let x_prev = std::mem::take(&mut x);
            let ax_prev = std::mem::take(&mut ax);
            if fu <= fx {
                x = u.clone();
                ax = au.clone();
                fx = fu;
            } else {
                // Monotone step rejected: keep x and restart momentum.
                x = x_prev.clone();
                ax = ax_prev.clone();
            }
            let restarted = fu > fx;
            let (c1, c2) = if restarted { (0.0, 0.0) } else { (t / t_next, (t - 1.0) / t_next) };
            for i in 0..m {
                z[i] = x[i] + c1 * (u[i] - x[i]) + c2 * (x[i] - x_prev[i]);
            }
            for i in 0..az.len() {
                az[i] = ax[i] + c1 * (au[i] - ax[i]) + c2 * (ax[i] - ax_prev[i]);
            }
            t = if restarted { 1.0 } else { t_next };
            history.push(fx);

            if k % CHECK_EVERY == 0 {
                // Refresh the running products to stop drift.
                ax = self.a.matvec(&x);
                az = self.a.matvec(&z);
                let gx = self.neg_gradient(&x, &ax);
                if let Some((zp, certified)) = self.polish(&x, kkt_scale) {
                    return Outcome { b: zp, iterations: k, converged: true, certified: certified || strictly_convex };
                }
                if self.kkt_violation(&x, &gx) <= KKT_TOL * kkt_scale {
                    return Outcome { b: x, iterations: k, converged: true, certified: strictly_convex };
                }
                if history.len() > STALL_WINDOW {
                    let old = history[history.len() - 1 - STALL_WINDOW];
                    if old - fx <= opts.tol * (1.0 + fx.abs()) {
                        return Outcome { b: x, iterations: k, converged: true, certified: strictly_convex };
                    }
                }
            }
        }
        Outcome { b: x, iterations: opts.max_iter, converged: false, certified: false }
    }
}

fn lipschitz_of(a: &DenseMatrix, l2_max: f64) -> Result<f64> {
    let norm = linalg::spectral_norm_or_zero(a)?;
    Ok(norm * norm * LIPSCHITZ_MARGIN + l2_max)
}

/// Minimizes the composite objective described by `spec`.
pub fn solve_composite(a: &DenseMatrix, y: &[f64], spec: &ObjectiveSpec, opts: &SolveOptions) -> Result<SolverResult> {
    let (rows, m) = (a.rows(), a.cols());
    if y.len() != rows {
        return Err(SolverError::Dimension(format!("y has length {} but A has {rows} rows", y.len())));
    }
    spec.validate(rows, m)?;
    if a.max_abs() == 0.0 {
        return Err(SolverError::ZeroOperator);
    }
    let in_t = membership(&spec.t, m);
    let free: Vec<usize> = (0..m).filter(|&i| !(spec.fixed_t && in_t[i])).collect();

    let mut y_eff: Vec<f64> = match &spec.y_shift {
        Some(s) => linalg::sub(y, s),
        None => y.to_vec(),
    };
    let mut full = vec![0.0; m];
    if spec.fixed_t {
        for &i in &spec.t {
            full[i] = spec.mu_hat[i];
        }
        linalg::axpy(-1.0, &a.matvec(&full), &mut y_eff);
    }
    // Solve in the variables c = b / d with d_j = 1/‖a_j‖, which equalizes the
    // curvature across columns; weights transform as l1·d, l2·d², center/d.
    let mut a_free = a.select_columns(&free);
    let scale: Vec<f64> = (0..free.len())
        .map(|k| {
            let n = linalg::norm2(&a_free.column(k));
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect();
    for r in 0..a_free.rows() {
        for (k, d) in scale.iter().enumerate() {
            a_free.set(r, k, a_free.get(r, k) * d);
        }
    }
    let compact = Compact {
        a: a_free,
        y: y_eff,
        l1: free
            .iter()
            .zip(&scale)
            .map(|(&i, d)| d * if in_t[i] { spec.gamma_prime } else { spec.gamma })
            .collect(),
        l2: free
            .iter()
            .zip(&scale)
            .map(|(&i, d)| d * d * if in_t[i] { spec.lambda } else { spec.lambda_c })
            .collect(),
        center: free
            .iter()
            .zip(&scale)
            .map(|(&i, d)| if in_t[i] { spec.mu_hat[i] / d } else { 0.0 })
            .collect(),
    };
    let l2_max = compact.l2.iter().cloned().fold(0.0, f64::max);
    let lip = lipschitz_of(&compact.a, l2_max)?.max(f64::MIN_POSITIVE);
    let out = compact.solve(lip, opts);
    for (k, &i) in free.iter().enumerate() {
        full[i] = out.b[k] * scale[k];
    }
    let objective = spec.objective(a, y, &full);
    let mut r = a.matvec(&full);
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri = yi - *ri;
    }
    Ok(SolverResult {
        residual_norm: linalg::norm2(&r),
        estimate: full,
        objective,
        iterations: out.iterations,
        converged: out.converged,
        uniqueness_certified: out.certified,
    })
}

fn check_prior(a: &DenseMatrix, y: &[f64], prior: &PriorKnowledge) -> Result<()> {
    if y.len() != a.rows() {
        return Err(SolverError::Dimension(format!("y has length {} but A has {} rows", y.len(), a.rows())));
    }
    prior
        .validate(a.cols())
        .map_err(|e| SolverError::InvalidSpec(e.to_string()))
}

/// Adds `μ̂` back to a residual-form estimate and fixes the reported residual.
fn add_back(a: &DenseMatrix, y: &[f64], mut res: SolverResult, mu: &[f64]) -> SolverResult {
    for (e, m) in res.estimate.iter_mut().zip(mu) {
        *e += m;
    }
    let ax = a.matvec(&res.estimate);
    res.residual_norm = linalg::norm2(&linalg::sub(y, &ax));
    res
}

fn cs_residual(a: &DenseMatrix, y: &[f64], mu: &[f64], gamma: f64, opts: &SolveOptions) -> Result<SolverResult> {
    let mut spec = ObjectiveSpec::bpdn(a.cols(), gamma);
    spec.y_shift = Some(a.matvec(mu));
    let res = solve_composite(a, y, &spec, opts)?;
    Ok(add_back(a, y, res, mu))
}

/// Runs the named estimator with the tuning values carried by `prior`.
pub fn solve_variant(name: &str, a: &DenseMatrix, y: &[f64], prior: &PriorKnowledge, opts: &SolveOptions) -> Result<SolverResult> {
    check_prior(a, y, prior)?;
    let m = a.cols();
    let (gamma, lambda) = (prior.gamma, prior.lambda);
    let t = prior.t.clone();
    let mu = prior.mu_hat.clone();
    match name {
        "reg-mod-bpdn" => solve_composite(a, y, &ObjectiveSpec::reg_mod(t, mu, gamma, lambda), opts),
        "mod-bpdn" => solve_composite(a, y, &ObjectiveSpec::reg_mod(t, mu, gamma, 0.0), opts),
        "bpdn" => solve_composite(a, y, &ObjectiveSpec::bpdn(m, gamma), opts),
        "weighted-l1" => {
            let mut spec = ObjectiveSpec::reg_mod(t, vec![0.0; m], gamma, 0.0);
            spec.gamma_prime = prior.gamma_prime;
            solve_composite(a, y, &spec, opts)
        }
        "cs-residual" => cs_residual(a, y, &mu, gamma, opts),
        "cs-mod-residual" => {
            let mut spec = ObjectiveSpec::reg_mod(t, mu, gamma, 0.0);
            spec.fixed_t = true;
            solve_composite(a, y, &spec, opts)
        }
        "mod-cs-residual" => {
            let mut spec = ObjectiveSpec::reg_mod(t, vec![0.0; m], gamma, 0.0);
            spec.y_shift = Some(a.matvec(&mu));
            let res = solve_composite(a, y, &spec, opts)?;
            Ok(add_back(a, y, res, &mu))
        }
        "reg-mod-bpdn-var" => {
            let mut spec = ObjectiveSpec::reg_mod(t, mu, gamma, lambda);
            spec.lambda_c = lambda;
            solve_composite(a, y, &spec, opts)
        }
        "reg-bpdn" => {
            let mut spec = ObjectiveSpec::reg_mod(t, mu, gamma, lambda);
            spec.gamma_prime = gamma;
            spec.lambda_c = lambda;
            solve_composite(a, y, &spec, opts)
        }
        "ls-cs" => {
            let ls = restricted_reg_ls(a, y, &t, &[], 0.0, &mu).map_err(|e| match e {
                SolverError::QSingular(_) => SolverError::LsPriorUndefined,
                other => other,
            })?;
            cs_residual(a, y, &ls, gamma, opts)
        }
        "kf-cs-static" => {
            let prior_est = restricted_reg_ls(a, y, &t, &[], lambda, &mu)?;
            cs_residual(a, y, &prior_est, gamma, opts)
        }
        other => Err(SolverError::UnknownEstimator { name: other.to_string() }),
    }
}

fn check_sets(m: usize, t: &[usize], s: &[usize]) -> Result<()> {
    let ts: BTreeSet<_> = t.iter().collect();
    if t.iter().chain(s).any(|&i| i >= m) {
        return Err(SolverError::Dimension(format!("index out of range for m = {m}")));
    }
    if s.iter().any(|i| ts.contains(i)) {
        return Err(SolverError::InvalidSpec("T and S must be disjoint".into()));
    }
    Ok(())
}

fn q_singular_reason(lambda: f64) -> SolverError {
    SolverError::QSingular(if lambda > 0.0 {
        "A_S is not full column rank (λ > 0)".into()
    } else {
        "A_{T∪S} is not full column rank (λ = 0)".into()
    })
}

/// `c_{T,λ}(S)`: the regularized least-squares estimate on `T ∪ S`.
pub fn restricted_reg_ls(a: &DenseMatrix, y: &[f64], t: &[usize], s: &[usize], lambda: f64, mu_hat: &[f64]) -> Result<Vec<f64>> {
    let m = a.cols();
    check_sets(m, t, s)?;
    if y.len() != a.rows() || mu_hat.len() != m {
        return Err(SolverError::Dimension(format!(
            "y has length {} (A has {} rows), muHat has length {} (A has {m} columns)",
            y.len(),
            a.rows(),
            mu_hat.len()
        )));
    }
    let q = bounds::q_matrix(a, t, s, lambda);
    let chol = Cholesky::factor(&q).map_err(|_| q_singular_reason(lambda))?;
    let idx: Vec<usize> = t.iter().chain(s).copied().collect();
    let mut rhs = a.select_columns(&idx).tr_matvec(y);
    for (k, &i) in t.iter().enumerate() {
        rhs[k] += lambda * mu_hat[i];
    }
    let sol = chol.solve_vec(&rhs);
    let mut c = vec![0.0; m];
    for (k, &i) in idx.iter().enumerate() {
        c[i] = sol[k];
    }
    Ok(c)
}

/// `d_{T,λ}(S)`: the minimizer of the reg-mod-BPDN objective over vectors
/// supported on `T ∪ S`.
pub fn restricted_minimizer(
    a: &DenseMatrix,
    y: &[f64],
    t: &[usize],
    s: &[usize],
    gamma: f64,
    lambda: f64,
    mu_hat: &[f64],
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let m = a.cols();
    check_sets(m, t, s)?;
    let q = bounds::q_matrix(a, t, s, lambda);
    Cholesky::factor(&q).map_err(|_| q_singular_reason(lambda))?;
    let idx: Vec<usize> = t.iter().chain(s).copied().collect();
    if idx.is_empty() {
        return Ok(vec![0.0; m]);
    }
    let sub = a.select_columns(&idx);
    let local_t: Vec<usize> = (0..t.len()).collect();
    let mut local_mu = vec![0.0; idx.len()];
    for (k, &i) in t.iter().enumerate() {
        local_mu[k] = mu_hat[i];
    }
    let spec = ObjectiveSpec::reg_mod(local_t, local_mu, gamma, lambda);
    let res = solve_composite(&sub, y, &spec, opts)?;
    let mut d = vec![0.0; m];
    for (k, &i) in idx.iter().enumerate() {
        d[i] = res.estimate[k];
    }
    Ok(d)
}

/// `{i : |x̂ᵢ| > ρ}`.
pub fn estimate_support(xhat: &[f64], rho: f64) -> Vec<usize> {
    (0..xhat.len()).filter(|&i| xhat[i].abs() > rho).collect()
}
