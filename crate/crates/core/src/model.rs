//! Simulation model: support layouts with misses and extras, the
//! prior-aided signal model and noisy measurements.

use crate::linalg;
use crate::operators::MeasurementOperator;
use crate::rng::{self, Stream};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("infeasible support sizes: {0}")]
    Infeasible(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("support layout invariant violated: {0}")]
    Layout(String),
}

/// Sorted index sets describing true support `N`, its estimate `T`, misses
/// `Δ = N \ T`, extras `Δe = T \ N`, and the split `Δ = Δ₁ ∪ Δ₂`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportLayout {
    pub m: usize,
    pub support: Vec<usize>,
    pub t: Vec<usize>,
    pub delta: Vec<usize>,
    pub delta_e: Vec<usize>,
    pub delta1: Vec<usize>,
    pub delta2: Vec<usize>,
}

pub fn set_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let b: BTreeSet<_> = b.iter().collect();
    a.iter().copied().filter(|i| !b.contains(i)).collect()
}

pub fn set_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut s: BTreeSet<usize> = a.iter().copied().collect();
    s.extend(b.iter().copied());
    s.into_iter().collect()
}

pub fn set_intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    let b: BTreeSet<_> = b.iter().collect();
    a.iter().copied().filter(|i| b.contains(i)).collect()
}

fn is_sorted_unique(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl SupportLayout {
    /// Layout implied by a true support and an arbitrary support estimate.
    pub fn from_sets(m: usize, support: &[usize], t: &[usize]) -> Self {
        let support: Vec<usize> = support.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let t: Vec<usize> = t.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let delta = set_difference(&support, &t);
        let delta_e = set_difference(&t, &support);
        let half = delta.len() / 2;
        let delta1 = delta[..half].to_vec();
        let delta2 = delta[half..].to_vec();
        Self { m, support, t, delta, delta_e, delta1, delta2 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let sets = [
            ("N", &self.support),
            ("T", &self.t),
            ("Δ", &self.delta),
            ("Δe", &self.delta_e),
            ("Δ1", &self.delta1),
            ("Δ2", &self.delta2),
        ];
        for (name, s) in sets {
            if !is_sorted_unique(s) {
                return Err(ModelError::Layout(format!("{name} is not sorted and duplicate-free")));
            }
            if s.last().is_some_and(|&i| i >= self.m) {
                return Err(ModelError::Layout(format!("{name} exceeds ambient dimension {}", self.m)));
            }
        }
        if self.delta != set_difference(&self.support, &self.t) {
            return Err(ModelError::Layout("Δ ≠ N \\ T".into()));
        }
        if self.delta_e != set_difference(&self.t, &self.support) {
            return Err(ModelError::Layout("Δe ≠ T \\ N".into()));
        }
        if set_union(&self.delta1, &self.delta2) != self.delta || !set_intersection(&self.delta1, &self.delta2).is_empty() {
            return Err(ModelError::Layout("Δ1, Δ2 do not partition Δ".into()));
        }
        if self.delta1.len() != self.delta.len() / 2 {
            return Err(ModelError::Layout("|Δ1| ≠ ⌊|Δ|/2⌋".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SignalModelParams {
    pub m: usize,
    pub support_size: usize,
    pub miss_frac: f64,
    pub extra_frac: f64,
    pub beta_l: f64,
    pub beta_m: f64,
    pub beta_s: f64,
    pub sigma_p2: f64,
    pub sigma_w2: f64,
    #[serde(default = "default_true")]
    pub split_delta: bool,
}

fn default_true() -> bool {
    true
}

/// `⌊frac · size⌋`, robust to representation error such as `0.2 * 25`.
pub fn fraction_count(frac: f64, size: usize) -> usize {
    (frac * size as f64 + 1e-9).floor() as usize
}

impl SignalModelParams {
    pub fn miss_count(&self) -> usize {
        fraction_count(self.miss_frac, self.support_size)
    }

    pub fn extra_count(&self) -> usize {
        fraction_count(self.extra_frac, self.support_size)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.beta_l >= self.beta_m && self.beta_m >= self.beta_s && self.beta_s > 0.0) {
            return Err(ModelError::InvalidParams("need β_l ≥ β_m ≥ β_s > 0".into()));
        }
        if self.sigma_p2 < 0.0 || self.sigma_w2 < 0.0 {
            return Err(ModelError::InvalidParams("variances must be non-negative".into()));
        }
        for f in [self.miss_frac, self.extra_frac] {
            if !(0.0..=1.0).contains(&f) {
                return Err(ModelError::InvalidParams(format!("fraction {f} outside [0, 1]")));
            }
        }
        if self.support_size > self.m {
            return Err(ModelError::Infeasible(format!("|N| = {} > m = {}", self.support_size, self.m)));
        }
        if self.extra_count() > self.m - self.support_size {
            return Err(ModelError::Infeasible(format!(
                "|Δe| = {} exceeds m − |N| = {}",
                self.extra_count(),
                self.m - self.support_size
            )));
        }
        Ok(())
    }

    /// Magnitude used on `Δ₂`: `β_m`, or `β_s` when the two-tier split is off.
    pub fn delta2_magnitude(&self) -> f64 {
        if self.split_delta {
            self.beta_m
        } else {
            self.beta_s
        }
    }
}

fn sample_sorted(rng: &mut impl Rng, pool: &[usize], k: usize) -> Vec<usize> {
    let mut out: Vec<usize> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    out.sort_unstable();
    out
}

/// Draws `N`, `Δ ⊆ N`, `Δe ⊆ N^c`, `Δ₁ ⊆ Δ` uniformly; `T = N ∪ Δe \ Δ`.
pub fn sample_supports(params: &SignalModelParams, seed: u64) -> Result<SupportLayout, ModelError> {
    params.validate()?;
    let m = params.m;
    let mut rng = rng::stream(seed, Stream::Supports);
    let all: Vec<usize> = (0..m).collect();
    let support = sample_sorted(&mut rng, &all, params.support_size);
    let delta = sample_sorted(&mut rng, &support, params.miss_count());
    let complement = set_difference(&all, &support);
    let delta_e = sample_sorted(&mut rng, &complement, params.extra_count());
    let delta1 = sample_sorted(&mut rng, &delta, delta.len() / 2);
    let delta2 = set_difference(&delta, &delta1);
    let t = set_union(&set_difference(&support, &delta), &delta_e);
    let layout = SupportLayout { m, support, t, delta, delta_e, delta1, delta2 };
    debug_assert!(layout.validate().is_ok());
    Ok(layout)
}

/// Ground truth `x`, its mean `μ` and the prior value estimate `μ̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_hat: Vec<f64>,
}

pub fn generate_signal(layout: &SupportLayout, params: &SignalModelParams, seed: u64) -> Signal {
    let m = layout.m;
    let mut signs = rng::stream(seed, Stream::Signs);
    let mut values = rng::stream(seed, Stream::ValueNoise);
    let mut sign = move || if signs.random::<bool>() { 1.0 } else { -1.0 };

    let delta1: BTreeSet<_> = layout.delta1.iter().collect();
    let delta2: BTreeSet<_> = layout.delta2.iter().collect();
    let mut mu = vec![0.0; m];
    for &i in &layout.support {
        let magnitude = if delta1.contains(&i) {
            params.beta_s
        } else if delta2.contains(&i) {
            params.delta2_magnitude()
        } else {
            params.beta_l
        };
        mu[i] = sign() * magnitude;
    }
    let mut mu_hat = vec![0.0; m];
    for &i in &set_intersection(&layout.t, &layout.support) {
        mu_hat[i] = mu[i];
    }
    for &i in &layout.delta_e {
        mu_hat[i] = sign() * params.beta_s;
    }
    let sd = params.sigma_p2.sqrt();
    let mut x = vec![0.0; m];
    for &i in &layout.support {
        let nu: f64 = values.sample(StandardNormal);
        x[i] = mu[i] + sd * nu;
    }
    Signal { x, mu, mu_hat }
}

/// `y = A x + w` with `w` iid `N(0, σ_w²)`.
pub fn generate_measurements(op: &MeasurementOperator, x: &[f64], sigma_w2: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if op.cols() != x.len() {
        return Err(ModelError::Dimension(format!(
            "operator has {} columns but x has length {}",
            op.cols(),
            x.len()
        )));
    }
    let mut rng = rng::stream(seed, Stream::MeasurementNoise);
    let sd = sigma_w2.sqrt();
    let w: Vec<f64> = (0..op.rows())
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect();
    let mut y = op.apply(x);
    linalg::axpy(1.0, &w, &mut y);
    Ok((y, w))
}

/// Support estimate `T`, value estimate `μ̂` (zero off `T`) and tuning values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PriorKnowledge {
    pub t: Vec<usize>,
    pub mu_hat: Vec<f64>,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub lambda: f64,
}

impl PriorKnowledge {
    pub fn new(t: Vec<usize>, mu_hat: Vec<f64>) -> Self {
        Self { t, mu_hat, gamma: 0.0, gamma_prime: 0.0, lambda: 0.0 }
    }

    pub fn with_tuning(mut self, gamma: f64, gamma_prime: f64, lambda: f64) -> Self {
        self.gamma = gamma;
        self.gamma_prime = gamma_prime;
        self.lambda = lambda;
        self
    }

    pub fn validate(&self, m: usize) -> Result<(), ModelError> {
        if self.mu_hat.len() != m {
            return Err(ModelError::Dimension(format!("μ̂ has length {}, expected {m}", self.mu_hat.len())));
        }
        if !is_sorted_unique(&self.t) || self.t.last().is_some_and(|&i| i >= m) {
            return Err(ModelError::Dimension("T must be sorted, unique and in range".into()));
        }
        let t: BTreeSet<_> = self.t.iter().collect();
        if let Some(i) = (0..m).find(|i| !t.contains(i) && self.mu_hat[*i] != 0.0) {
            return Err(ModelError::InvalidParams(format!("μ̂ is nonzero at {i} outside T")));
        }
        for (name, v) in [("γ", self.gamma), ("γ'", self.gamma_prime), ("λ", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParams(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }

    /// A copy with `μ̂` reset to zero outside `T`.
    pub fn restricted_to_t(t: Vec<usize>, values: &[f64]) -> Self {
        let mut mu_hat = vec![0.0; values.len()];
        for &i in &t {
            mu_hat[i] = values[i];
        }
        Self::new(t, mu_hat)
    }
}

/// One Monte Carlo trial: operator, truth, measurements and prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub operator: MeasurementOperator,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub layout: SupportLayout,
    pub prior: PriorKnowledge,
}

impl ProblemInstance {
    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (rows, cols) = (self.operator.rows(), self.operator.cols());
        if self.y.len() != rows {
            return Err(ModelError::Dimension(format!(
                "y has length {} but the operator has {rows} rows",
                self.y.len()
            )));
        }
        if self.w.len() != rows {
            return Err(ModelError::Dimension(format!(
                "w has length {} but the operator has {rows} rows",
                self.w.len()
            )));
        }
        if self.x.len() != cols {
            return Err(ModelError::Dimension(format!(
                "x has length {} but the operator has {cols} columns",
                self.x.len()
            )));
        }
        if self.layout.m != cols {
            return Err(ModelError::Dimension(format!("layout m = {} but operator has {cols} columns", self.layout.m)));
        }
        self.layout.validate()?;
        self.prior.validate(cols)?;
        let support: BTreeSet<_> = self.layout.support.iter().collect();
        if let Some(i) = (0..cols).find(|i| !support.contains(i) && self.x[*i] != 0.0) {
            return Err(ModelError::Layout(format!("x is nonzero at {i} outside N")));
        }
        Ok(())
    }

    /// Prior error `e = x − μ̂` restricted to `N ∪ T` (zero elsewhere).
    pub fn prior_error(&self) -> Vec<f64> {
        linalg::sub(&self.x, &self.prior.mu_hat)
    }

    /// `‖x_T − μ̂_T‖₂`.
    pub fn prior_error_on_t(&self) -> f64 {
        self.prior
            .t
            .iter()
            .map(|&i| (self.x[i] - self.prior.mu_hat[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Generates a full instance from the simulation model. The prior carries
/// the sampled `T`, `μ̂` and zero tuning values.
pub fn generate_instance(operator: MeasurementOperator, params: &SignalModelParams, seed: u64) -> Result<ProblemInstance, ModelError> {
    if operator.cols() != params.m {
        return Err(ModelError::Dimension(format!(
            "operator has {} columns but m = {}",
            operator.cols(),
            params.m
        )));
    }
    let layout = sample_supports(params, seed)?;
    let signal = generate_signal(&layout, params, seed);
    let (y, w) = generate_measurements(&operator, &signal.x, params.sigma_w2, seed)?;
    let prior = PriorKnowledge::new(layout.t.clone(), signal.mu_hat);
    Ok(ProblemInstance { operator, x: signal.x, y, w, layout, prior })
}
