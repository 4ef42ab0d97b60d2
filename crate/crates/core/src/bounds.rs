//! Error-bound machinery for reg-mod-BPDN: the `Q`, `M`, `P` matrices, the
//! exact recovery coefficient, `γ*`, the multipliers `f₁..f₄` / `g₁..g₄`,
//! and the three bounds (sufficient-condition, exhaustive, polynomial).

use crate::linalg::{self, Cholesky, DenseMatrix, LinalgError};
use crate::model::{set_difference, ProblemInstance};
use crate::solvers;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const DEFAULT_SUBSET_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("P undefined: A_SᵀMA_S is singular")]
    PUndefined,
    #[error("M undefined: A_TᵀA_T + λI is singular")]
    MUndefined,
    #[error("Q singular: {0}")]
    QSingular(String),
    #[error("sufficient condition fails: ERC = {0} ≤ 0")]
    ConditionFails(f64),
    #[error("exponential enumeration refused: |Δ| = {size} exceeds the subset cap {cap}")]
    EnumerationRefused { size: usize, cap: usize },
    #[error("invalid bound inputs: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, BoundError>;

/// `A_{T∪S}ᵀA_{T∪S} + λ·blockdiag(I_T, 0_S)` with the `T` block first.
pub fn q_matrix(a: &DenseMatrix, t: &[usize], s: &[usize], lambda: f64) -> DenseMatrix {
    let idx: Vec<usize> = t.iter().chain(s).copied().collect();
    let mut q = a.select_columns(&idx).gram();
    q.add_to_diag(0..t.len(), lambda);
    q
}

/// Rank test behind the invertibility of `Q`: `A_S` full column rank when
/// `λ > 0`, `A_{T∪S}` full column rank when `λ = 0`.
pub fn check_invertible(a: &DenseMatrix, t: &[usize], s: &[usize], lambda: f64) -> bool {
    let idx: Vec<usize> = if lambda > 0.0 {
        s.to_vec()
    } else {
        t.iter().chain(s).copied().collect()
    };
    if idx.is_empty() {
        return true;
    }
    if idx.len() > a.rows() {
        return false;
    }
    linalg::psd_rank(&a.select_columns(&idx).gram()) == idx.len()
}

/// Cached pieces depending only on `(A, T, λ)`.
struct TContext<'a> {
    a: &'a DenseMatrix,
    t: Vec<usize>,
    lambda: f64,
    a_t: DenseMatrix,
    k: Option<Cholesky>,
}

impl<'a> TContext<'a> {
    fn new(a: &'a DenseMatrix, t: &[usize], lambda: f64) -> Self {
        let a_t = a.select_columns(t);
        let mut kmat = a_t.gram();
        kmat.add_to_diag(0..t.len(), lambda);
        let k = Cholesky::factor(&kmat).ok();
        Self { a, t: t.to_vec(), lambda, a_t, k }
    }

    fn kchol(&self) -> Result<&Cholesky> {
        self.k.as_ref().ok_or(BoundError::MUndefined)
    }

    /// `M X = X − A_T (A_TᵀA_T + λI)⁻¹ A_Tᵀ X`.
    fn m_apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.t.is_empty() {
            return Ok(x.clone());
        }
        let k = self.kchol()?;
        let inner = k.solve_mat(&self.a_t.tr_matmul(x));
        Ok(x.sub(&self.a_t.matmul(&inner)))
    }

    fn union(&self, s: &[usize]) -> Vec<usize> {
        self.t.iter().chain(s).copied().collect()
    }

    fn outside(&self, s: &[usize]) -> Vec<usize> {
        let mut inside = vec![false; self.a.cols()];
        for &i in self.t.iter().chain(s) {
            inside[i] = true;
        }
        (0..self.a.cols()).filter(|&i| !inside[i]).collect()
    }

    /// Cholesky of `A_SᵀMA_S` together with `MA_S`.
    fn schur(&self, s: &[usize]) -> Result<(Cholesky, DenseMatrix)> {
        let a_s = self.a.select_columns(s);
        let ma_s = self.m_apply(&a_s)?;
        let mut h = a_s.tr_matmul(&ma_s);
        h.symmetrize();
        let chol = Cholesky::factor(&h).map_err(|_| BoundError::PUndefined)?;
        Ok((chol, ma_s))
    }

    fn p(&self, s: &[usize]) -> Result<DenseMatrix> {
        if s.is_empty() {
            return Ok(DenseMatrix::zeros(0, 0));
        }
        Ok(self.schur(s)?.0.inverse())
    }

    fn erc(&self, s: &[usize]) -> Result<f64> {
        if s.is_empty() {
            return Ok(1.0);
        }
        let (chol, ma_s) = self.schur(s)?;
        let outside = self.outside(s);
        if outside.is_empty() {
            return Ok(1.0);
        }
        // A_SᵀM A_ω for every ω at once: (MA_S)ᵀ A_outside.
        let cross = ma_s.tr_matmul(&self.a.select_columns(&outside));
        let sol = chol.solve_mat(&cross);
        let worst = (0..outside.len())
            .map(|j| (0..s.len()).map(|i| sol.get(i, j).abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        Ok(1.0 - worst)
    }

    fn q_chol(&self, s: &[usize]) -> Result<Cholesky> {
        let q = q_matrix(self.a, &self.t, s, self.lambda);
        Cholesky::factor(&q).map_err(|_| {
            BoundError::QSingular(if self.lambda > 0.0 {
                "A_S is not full column rank (λ > 0)".into()
            } else {
                "A_{T∪S} is not full column rank (λ = 0)".into()
            })
        })
    }

    fn f_multipliers(&self, delta: &[usize], s: &[usize]) -> Result<FMultipliers> {
        let qc = self.q_chol(s)?;
        let a_ts = self.a.select_columns(&self.union(s));
        let f1 = if s.is_empty() {
            0.0
        } else {
            let p = self.p(s)?;
            let p_norm = linalg::spectral_norm(&p, linalg::POWER_ITER_TOL)?;
            let x_norm = if self.t.is_empty() {
                0.0
            } else {
                let cross = self.a_t.tr_matmul(&self.a.select_columns(s));
                let x = self.kchol()?.solve_mat(&cross.matmul(&p));
                linalg::spectral_norm(&x, linalg::POWER_ITER_TOL)?
            };
            (x_norm * x_norm + p_norm * p_norm).sqrt()
        };
        let f2 = linalg::spectral_norm_or_zero(&qc.inverse())?;
        let qa = qc.solve_mat(&a_ts.transpose());
        let f3 = linalg::spectral_norm_or_zero(&qa)?;
        let rest = set_difference(delta, s);
        let f4_core = if rest.is_empty() || qa.is_empty() {
            0.0
        } else {
            linalg::spectral_norm_or_zero(&qa.matmul(&self.a.select_columns(&rest)))?
        };
        Ok(FMultipliers { f1, f2, f3, f4: (f4_core * f4_core + 1.0).sqrt() })
    }
}

/// `M_{T,λ} = I − A_T(A_TᵀA_T + λI)⁻¹A_Tᵀ`.
pub fn m_matrix(a: &DenseMatrix, t: &[usize], lambda: f64) -> Result<DenseMatrix> {
    TContext::new(a, t, lambda).m_apply(&DenseMatrix::identity(a.rows()))
}

/// `P_{T,λ}(S) = (A_SᵀMA_S)⁻¹`.
pub fn p_matrix(a: &DenseMatrix, t: &[usize], s: &[usize], lambda: f64) -> Result<DenseMatrix> {
    TContext::new(a, t, lambda).p(s)
}

/// `1 − max_{ω∉T∪S} ‖P A_SᵀM A_ω‖₁`, with `ERC(∅) = 1`.
pub fn erc(a: &DenseMatrix, t: &[usize], s: &[usize], lambda: f64) -> Result<f64> {
    TContext::new(a, t, lambda).erc(s)
}

/// Everything the bounds need about one realization.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub a: &'a DenseMatrix,
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub x: &'a [f64],
    pub t: &'a [usize],
    pub delta: &'a [usize],
    pub lambda: f64,
    pub mu_hat: &'a [f64],
}

impl<'a> BoundInputs<'a> {
    /// Uses the instance's `T`, `μ̂`; `delta` must be `N \ T` (e.g. `layout.delta`).
    pub fn from_instance(inst: &'a ProblemInstance, delta: &'a [usize], lambda: f64) -> Self {
        Self {
            a: &inst.operator.matrix,
            y: &inst.y,
            w: &inst.w,
            x: &inst.x,
            t: &inst.prior.t,
            delta,
            lambda,
            mu_hat: &inst.prior.mu_hat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.a.rows(), self.a.cols());
        if self.y.len() != n || self.w.len() != n {
            return Err(BoundError::Invalid(format!("y/w lengths {}/{} vs {n} rows", self.y.len(), self.w.len())));
        }
        if self.x.len() != m || self.mu_hat.len() != m {
            return Err(BoundError::Invalid(format!("x/μ̂ lengths {}/{} vs {m} columns", self.x.len(), self.mu_hat.len())));
        }
        if self.delta.iter().any(|i| self.t.contains(i)) {
            return Err(BoundError::Invalid("Δ ∩ T ≠ ∅".into()));
        }
        let mut covered = vec![false; m];
        for &i in self.t.iter().chain(self.delta) {
            covered[i] = true;
        }
        if (0..m).any(|i| !covered[i] && self.x[i] != 0.0) {
            return Err(BoundError::Invalid("x is not supported on T ∪ Δ".into()));
        }
        Ok(())
    }

    pub fn prior_error_norm(&self) -> f64 {
        self.t.iter().map(|&i| (self.x[i] - self.mu_hat[i]).powi(2)).sum::<f64>().sqrt()
    }

    fn tail_norm(&self, s: &[usize]) -> f64 {
        set_difference(self.delta, s).iter().map(|&i| self.x[i].powi(2)).sum::<f64>().sqrt()
    }

    fn context(&self) -> TContext<'a> {
        TContext::new(self.a, self.t, self.lambda)
    }
}

/// `γ*_{T,λ}(S) = ‖A_{(T∪S)^c}ᵀ(y − A c(S))‖_∞ / ERC(S)`.
pub fn gamma_star(inputs: &BoundInputs, s: &[usize]) -> Result<f64> {
    gamma_star_in(&inputs.context(), inputs, s, None)
}

fn gamma_star_in(ctx: &TContext, inputs: &BoundInputs, s: &[usize], erc_value: Option<f64>) -> Result<f64> {
    let erc_value = match erc_value {
        Some(v) => v,
        None => ctx.erc(s)?,
    };
    if erc_value <= 0.0 {
        return Err(BoundError::ConditionFails(erc_value));
    }
    let c = solvers::restricted_reg_ls(inputs.a, inputs.y, inputs.t, s, inputs.lambda, inputs.mu_hat)
        .map_err(|e| BoundError::QSingular(e.to_string()))?;
    let r = linalg::sub(inputs.y, &inputs.a.matvec(&c));
    let outside = ctx.outside(s);
    let numer = if outside.is_empty() {
        0.0
    } else {
        linalg::norm_inf(&inputs.a.select_columns(&outside).tr_matvec(&r))
    };
    Ok(numer / erc_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FMultipliers {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

pub fn f_multipliers(a: &DenseMatrix, t: &[usize], delta: &[usize], delta_tilde: &[usize], lambda: f64) -> Result<FMultipliers> {
    TContext::new(a, t, lambda).f_multipliers(delta, delta_tilde)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GTerms {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub maxcor: f64,
    pub g_value: f64,
    pub erc: f64,
    pub gamma_star: f64,
    pub f: FMultipliers,
}

/// Multipliers of the `g` bound for a candidate `Δ̃ ⊆ Δ`.
pub fn corollary2_g(inputs: &BoundInputs, delta_tilde: &[usize]) -> Result<GTerms> {
    corollary2_in(&inputs.context(), inputs, delta_tilde)
}

fn corollary2_in(ctx: &TContext, inputs: &BoundInputs, s: &[usize]) -> Result<GTerms> {
    ctx.q_chol(s)?;
    let erc_value = ctx.erc(s)?;
    if erc_value <= 0.0 {
        return Err(BoundError::ConditionFails(erc_value));
    }
    let f = ctx.f_multipliers(inputs.delta, s)?;
    let outside = ctx.outside(s);
    let t_delta: Vec<usize> = inputs.t.iter().chain(inputs.delta).copied().collect();
    let (maxcor, noise_corr) = if outside.is_empty() {
        (0.0, 0.0)
    } else {
        let a_out = inputs.a.select_columns(&outside);
        let maxcor = if t_delta.is_empty() {
            0.0
        } else {
            let cross = a_out.tr_matmul(&inputs.a.select_columns(&t_delta));
            (0..cross.rows()).map(|i| linalg::norm2(cross.row(i))).fold(0.0f64, f64::max)
        };
        (maxcor, linalg::norm_inf(&a_out.tr_matvec(inputs.w)))
    };
    let root = (s.len() as f64).sqrt();
    let lead = root * f.f1 * maxcor / erc_value;
    let g1 = inputs.lambda * f.f2 * (lead + 1.0);
    let g2 = lead * f.f3 + f.f3;
    let g3 = lead * f.f4 + f.f4;
    let g4 = root * noise_corr * f.f1 / erc_value;
    let g_value = g1 * inputs.prior_error_norm() + g2 * linalg::norm2(inputs.w) + g3 * inputs.tail_norm(s) + g4;
    let gamma_star = gamma_star_in(ctx, inputs, s, Some(erc_value))?;
    Ok(GTerms { g1, g2, g3, g4, maxcor, g_value, erc: erc_value, gamma_star, f })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    T1,
    T2,
    T3,
}

/// A bound value, or one of the two explicit sentinels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundValue {
    Finite(f64),
    NotHold,
    Infinite,
}

impl BoundValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            BoundValue::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// Numeric view for ordering: sentinels count as `+∞`.
    pub fn or_infinity(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

impl Serialize for BoundValue {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BoundValue::Finite(v) => ser.serialize_f64(*v),
            BoundValue::NotHold => ser.serialize_str("not hold"),
            BoundValue::Infinite => ser.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for BoundValue {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(BoundValue::Finite(v)),
            Raw::Str(s) if s == "not hold" => Ok(BoundValue::NotHold),
            Raw::Str(s) if s == "infinity" => Ok(BoundValue::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unknown bound sentinel '{s}'"))),
        }
    }
}

impl std::fmt::Display for BoundValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundValue::Finite(v) => write!(f, "{v}"),
            BoundValue::NotHold => f.write_str("not hold"),
            BoundValue::Infinite => f.write_str("infinity"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum Multipliers {
    F(FMultipliers),
    G(GTerms),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundReport {
    pub theorem: Theorem,
    pub holds: bool,
    pub erc_value: Option<f64>,
    pub gamma_star: Option<f64>,
    pub multipliers: Option<Multipliers>,
    pub delta_tilde: Vec<usize>,
    pub k_min: Option<usize>,
    pub bound_value: BoundValue,
    /// `B_k` for `k = 0..=|Δ|` (polynomial bound only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b_k: Vec<BoundValue>,
}

impl BoundReport {
    fn empty(theorem: Theorem, bound_value: BoundValue) -> Self {
        Self {
            theorem,
            holds: false,
            erc_value: None,
            gamma_star: None,
            multipliers: None,
            delta_tilde: Vec::new(),
            k_min: None,
            bound_value,
            b_k: Vec::new(),
        }
    }

    fn from_g(theorem: Theorem, delta_tilde: Vec<usize>, g: GTerms) -> Self {
        Self {
            theorem,
            holds: true,
            erc_value: Some(g.erc),
            gamma_star: Some(g.gamma_star),
            multipliers: Some(Multipliers::G(g)),
            delta_tilde,
            k_min: None,
            bound_value: BoundValue::Finite(g.g_value),
            b_k: Vec::new(),
        }
    }
}

/// Bound under the full sufficient conditions (`Q(Δ)` invertible, `ERC(Δ) > 0`),
/// evaluated at `γ = γ*(Δ)`.
pub fn theorem1_bound(inputs: &BoundInputs) -> BoundReport {
    let ctx = inputs.context();
    let delta = inputs.delta;
    let mut report = BoundReport::empty(Theorem::T1, BoundValue::NotHold);
    report.delta_tilde = delta.to_vec();
    if ctx.q_chol(delta).is_err() {
        return report;
    }
    let Ok(erc_value) = ctx.erc(delta) else {
        return report;
    };
    report.erc_value = Some(erc_value);
    if erc_value <= 0.0 {
        return report;
    }
    let (Ok(gs), Ok(f)) = (gamma_star_in(&ctx, inputs, delta, Some(erc_value)), ctx.f_multipliers(delta, delta)) else {
        return report;
    };
    let value = gs * (delta.len() as f64).sqrt() * f.f1
        + inputs.lambda * f.f2 * inputs.prior_error_norm()
        + f.f3 * linalg::norm2(inputs.w);
    report.holds = true;
    report.gamma_star = Some(gs);
    report.multipliers = Some(Multipliers::F(f));
    report.bound_value = BoundValue::Finite(value);
    report
}

fn subset_of(delta: &[usize], mask: u64) -> Vec<usize> {
    delta.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &i)| i).collect()
}

/// Minimum of `g` over every admissible `Δ̃ ⊆ Δ` (exhaustive).
pub fn theorem2_bound(inputs: &BoundInputs, subset_cap: usize) -> Result<BoundReport> {
    let d = inputs.delta.len();
    if d > subset_cap || d >= 63 {
        return Err(BoundError::EnumerationRefused { size: d, cap: subset_cap });
    }
    let ctx = inputs.context();
    let values: Vec<Option<GTerms>> = (0..1u64 << d)
        .into_par_iter()
        .map(|mask| corollary2_in(&ctx, inputs, &subset_of(inputs.delta, mask)).ok())
        .collect();
    // Sequential reduction: ties go to the earlier mask, independent of threads.
    let mut best: Option<(u64, GTerms)> = None;
    for (mask, g) in values.into_iter().enumerate() {
        if let Some(g) = g {
            if best.as_ref().is_none_or(|(_, b)| g.g_value < b.g_value) {
                best = Some((mask as u64, g));
            }
        }
    }
    Ok(match best {
        Some((mask, g)) => BoundReport::from_g(Theorem::T2, subset_of(inputs.delta, mask), g),
        None => BoundReport::empty(Theorem::T2, BoundValue::Infinite),
    })
}

/// `Δ̃**(k)`: the `k` largest-magnitude entries of `x_Δ`, returned sorted.
pub fn top_k_subset(inputs: &BoundInputs, k: usize) -> Vec<usize> {
    let mags: Vec<f64> = inputs.delta.iter().map(|&i| inputs.x[i]).collect();
    let order = linalg::sort_desc_by_abs(&mags);
    let mut s: Vec<usize> = order[..k].iter().map(|&j| inputs.delta[j]).collect();
    s.sort_unstable();
    s
}

/// Polynomial-time bound: `min_k B_k` with `B_k = g(Δ̃**(k))` when admissible.
/// Ties in `k` go to the smaller `k`.
pub fn theorem3_bound(inputs: &BoundInputs) -> BoundReport {
    let ctx = inputs.context();
    let d = inputs.delta.len();
    let candidates: Vec<(Vec<usize>, Option<GTerms>)> = (0..=d)
        .into_par_iter()
        .map(|k| {
            let s = top_k_subset(inputs, k);
            let g = corollary2_in(&ctx, inputs, &s).ok();
            (s, g)
        })
        .collect();
    let b_k: Vec<BoundValue> = candidates
        .iter()
        .map(|(_, g)| g.map_or(BoundValue::Infinite, |g| BoundValue::Finite(g.g_value)))
        .collect();
    let mut best: Option<usize> = None;
    for k in 0..=d {
        if let Some(g) = candidates[k].1 {
            if best.is_none_or(|b| g.g_value < candidates[b].1.expect("admissible").g_value) {
                best = Some(k);
            }
        }
    }
    let mut report = match best {
        Some(k) => {
            let (s, g) = candidates[k].clone();
            let mut r = BoundReport::from_g(Theorem::T3, s, g.expect("admissible"));
            r.k_min = Some(k);
            r
        }
        None => BoundReport::empty(Theorem::T3, BoundValue::Infinite),
    };
    report.b_k = b_k;
    report
}
