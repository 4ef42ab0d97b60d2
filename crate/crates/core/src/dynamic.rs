//! Recursive recovery of slowly changing sparse/compressible sequences:
//! dynamic reg-mod-BPDN with support feedback, plus frame-wise baselines and
//! the synthetic sequence generators that drive them.

use crate::linalg::{self, DenseMatrix};
use crate::model::{set_difference, PriorKnowledge};
use crate::operators::{self, MeasurementOperator};
use crate::rng::{self, Stream};
use crate::solvers::{self, ObjectiveSpec, SolveOptions, SolverError};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Frames over which a newly added element grows from `β_s` to `β_l`.
pub const GROWTH_FRAMES: usize = 3;
/// Largest per-frame support change rate.
pub const MAX_CHANGE_FRAC: f64 = 0.02;
/// Fraction of energy captured by the support of a compressible frame.
pub const ENERGY_FRACTION: f64 = 0.99;
/// Default threshold: this multiple of the smallest 99%-energy-support magnitude.
pub const AUTO_RHO_FACTOR: f64 = 4.0 / 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicError {
    #[error("invalid sequence spec: {0}")]
    InvalidSpec(String),
    #[error("initial operator needs more rows than the steady-state one ({n0} ≤ {n})")]
    InitialTooSmall { n0: usize, n: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Operator(#[from] operators::OperatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    ExactSparseWalk,
    CompressibleWavelet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialT {
    Empty,
    ApproximationBand,
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SequenceSpec {
    pub frame_count: usize,
    /// Image grid; `m = height · width`.
    pub height: usize,
    pub width: usize,
    pub generator: Generator,
    /// Initial support size (exact-sparse) or number of large detail
    /// coefficients (compressible).
    pub support_size: usize,
    pub add_frac: f64,
    pub remove_frac: f64,
    /// Per-frame value perturbation standard deviation.
    pub value_sigma: f64,
    pub beta_l: f64,
    pub beta_s: f64,
    /// Approximation-band values are drawn in `[2L, 4L]` (compressible only).
    #[serde(default)]
    pub approx_level: f64,
    /// Standard deviation of the dense detail tail (compressible only).
    #[serde(default)]
    pub tail_sigma: f64,
    pub sigma_w2: f64,
    /// Measured frequencies at `t = 0` and afterwards (each gives two real rows
    /// for MRI operators; rows for Gaussian ones).
    pub n0: usize,
    pub n: usize,
    /// Support threshold; `None` picks it from the first frame's 99%-energy support.
    #[serde(default)]
    pub rho: Option<f64>,
    pub initial_t: InitialT,
}

impl SequenceSpec {
    pub fn m(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<(), DynamicError> {
        let bad = |s: String| Err(DynamicError::InvalidSpec(s));
        if self.frame_count == 0 || self.m() == 0 {
            return bad("frameCount and m must be positive".into());
        }
        for (name, f) in [("addFrac", self.add_frac), ("removeFrac", self.remove_frac)] {
            if !(0.0..=MAX_CHANGE_FRAC + 1e-12).contains(&f) {
                return bad(format!("{name} = {f} outside [0, {MAX_CHANGE_FRAC}]"));
            }
        }
        if self.support_size == 0 || self.support_size * 2 > self.m() {
            return bad(format!("support size {} incompatible with m = {}", self.support_size, self.m()));
        }
        if self.n0 <= self.n {
            return Err(DynamicError::InitialTooSmall { n0: self.n0, n: self.n });
        }
        if !(self.beta_l >= self.beta_s && self.beta_s > 0.0) {
            return bad("need β_l ≥ β_s > 0".into());
        }
        if self.value_sigma < 0.0 || self.sigma_w2 < 0.0 || self.tail_sigma < 0.0 {
            return bad("standard deviations must be non-negative".into());
        }
        if let Some(r) = self.rho {
            if r.is_nan() || r < 0.0 {
                return bad(format!("rho = {r} must be ≥ 0"));
            }
        }
        Ok(())
    }

    /// Expected support size the change rates refer to: the walk itself for
    /// exact-sparse sequences, approximation band plus walk for compressible ones.
    pub fn nominal_support(&self) -> usize {
        match self.generator {
            Generator::ExactSparseWalk => self.support_size,
            Generator::CompressibleWavelet => operators::approximation_indices(self.height, self.width).len() + self.support_size,
        }
    }

    fn per_frame_count(&self, frac: f64) -> usize {
        (frac * self.nominal_support() as f64).round() as usize
    }
}

/// One frame of ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub x: Vec<f64>,
    pub support: Vec<usize>,
}

/// Indices of the largest-magnitude entries carrying `fraction` of the energy.
pub fn energy_support(x: &[f64], fraction: f64) -> Vec<usize> {
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Vec::new();
    }
    let order = linalg::sort_desc_by_abs(x);
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= fraction * total {
            break;
        }
        acc += x[i] * x[i];
        out.push(i);
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy)]
struct Member {
    index: usize,
    sign: f64,
    /// Frames since birth (growth completes at `GROWTH_FRAMES`).
    age: usize,
    /// Frames since the element started leaving; it is removed once this
    /// reaches `GROWTH_FRAMES`, i.e. after sitting at `β_s`.
    decay: Option<usize>,
    offset: f64,
}

impl Member {
    fn value(&self, spec: &SequenceSpec) -> f64 {
        let span = spec.beta_l - spec.beta_s;
        let g = GROWTH_FRAMES as f64;
        let mag = match self.decay {
            Some(d) => spec.beta_l - span * d.min(GROWTH_FRAMES) as f64 / g,
            None => spec.beta_s + span * self.age.min(GROWTH_FRAMES) as f64 / g,
        };
        self.sign * mag + self.offset
    }

    fn grown(&self) -> bool {
        self.decay.is_none() && self.age >= GROWTH_FRAMES
    }
}

/// A slowly changing sparse component. Births enter at `β_s` and grow
/// linearly to `β_l`; departures are the smallest grown elements, which
/// shrink back to `β_s` over the same number of frames before leaving.
struct Walk {
    members: Vec<Member>,
}

fn random_sign(rng: &mut impl Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

impl Walk {
    /// Starts in the stationary regime: besides grown elements there are
    /// `additions` newborns of each age and `removals` leavers at each stage.
    fn start(spec: &SequenceSpec, pool: &[usize], rng: &mut impl Rng) -> Self {
        let mut chosen: Vec<usize> = index::sample(rng, pool.len(), spec.support_size).into_iter().map(|k| pool[k]).collect();
        chosen.sort_unstable();
        let additions = spec.per_frame_count(spec.add_frac);
        let removals = spec.per_frame_count(spec.remove_frac);
        let mut members: Vec<Member> = chosen
            .into_iter()
            .map(|index| Member { index, sign: random_sign(rng), age: GROWTH_FRAMES, decay: None, offset: 0.0 })
            .collect();
        let mut k = 0;
        for age in 1..GROWTH_FRAMES {
            for _ in 0..additions {
                if k < members.len() {
                    members[k].age = age;
                    k += 1;
                }
            }
        }
        for d in 1..=GROWTH_FRAMES {
            for _ in 0..removals {
                if k < members.len() {
                    members[k].decay = Some(d);
                    k += 1;
                }
            }
        }
        Self { members }
    }

    fn step(&mut self, spec: &SequenceSpec, pool: &[usize], rng: &mut impl Rng) {
        let removals = spec.per_frame_count(spec.remove_frac);
        let additions = spec.per_frame_count(spec.add_frac);
        let occupied: Vec<usize> = self.members.iter().map(|m| m.index).collect();
        self.members.retain(|m| m.decay.is_none_or(|d| d < GROWTH_FRAMES));
        for m in self.members.iter_mut() {
            m.age += 1;
            if let Some(d) = m.decay.as_mut() {
                *d += 1;
            }
            let nu: f64 = rng.sample(StandardNormal);
            m.offset += spec.value_sigma * nu;
        }
        let mut grown: Vec<usize> = (0..self.members.len()).filter(|&k| self.members[k].grown()).collect();
        grown.sort_by(|&a, &b| {
            let (ma, mb) = (&self.members[a], &self.members[b]);
            ma.value(spec).abs().total_cmp(&mb.value(spec).abs()).then(ma.index.cmp(&mb.index))
        });
        for &k in grown.iter().take(removals) {
            self.members[k].decay = Some(1);
        }
        // Indices that were in the support this frame are not reused immediately.
        let free = set_difference(pool, &occupied);
        let born: Vec<usize> = index::sample(rng, free.len(), additions.min(free.len())).into_iter().map(|k| free[k]).collect();
        for index in born {
            self.members.push(Member { index, sign: random_sign(rng), age: 0, decay: None, offset: 0.0 });
        }
        self.members.sort_by_key(|m| m.index);
    }

    fn write(&self, spec: &SequenceSpec, x: &mut [f64]) {
        for m in &self.members {
            x[m.index] += m.value(spec);
        }
    }

    fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.index).collect()
    }
}

/// Ground-truth sequence `(x_t, N_t)`.
pub fn generate_sequence(spec: &SequenceSpec, seed: u64) -> Result<Vec<Frame>, DynamicError> {
    spec.validate()?;
    let m = spec.m();
    let mut rng = rng::stream(seed, Stream::Sequence);
    let mut frames = Vec::with_capacity(spec.frame_count);
    match spec.generator {
        Generator::ExactSparseWalk => {
            let pool: Vec<usize> = (0..m).collect();
            let mut walk = Walk::start(spec, &pool, &mut rng);
            for t in 0..spec.frame_count {
                if t > 0 {
                    walk.step(spec, &pool, &mut rng);
                }
                let mut x = vec![0.0; m];
                walk.write(spec, &mut x);
                frames.push(Frame { x, support: walk.indices() });
            }
        }
        Generator::CompressibleWavelet => {
            operators::dwt2_daub4(&vec![0.0; m], spec.height, spec.width)?;
            let approx = operators::approximation_indices(spec.height, spec.width);
            let detail = set_difference(&(0..m).collect::<Vec<_>>(), &approx);
            // Positive approximation band spanning [2L, 4L], drifting slowly.
            let base: Vec<f64> = approx
                .iter()
                .map(|_| spec.approx_level * (2.0 + 2.0 * rng.random::<f64>()))
                .collect();
            let tail: Vec<f64> = detail
                .iter()
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    spec.tail_sigma * z
                })
                .collect();
            let mut drift = vec![0.0; approx.len()];
            let mut walk = Walk::start(spec, &detail, &mut rng);
            for t in 0..spec.frame_count {
                if t > 0 {
                    walk.step(spec, &detail, &mut rng);
                    for d in drift.iter_mut() {
                        let nu: f64 = rng.sample(StandardNormal);
                        *d += spec.value_sigma * nu;
                    }
                }
                let mut x = vec![0.0; m];
                for (k, &i) in approx.iter().enumerate() {
                    x[i] = base[k] + drift[k];
                }
                for (k, &i) in detail.iter().enumerate() {
                    x[i] = tail[k];
                }
                walk.write(spec, &mut x);
                let support = energy_support(&x, ENERGY_FRACTION);
                frames.push(Frame { x, support });
            }
        }
    }
    Ok(frames)
}

/// Default threshold for a sequence: the configured `ρ`, else slightly above
/// the smallest magnitude in the first frame's 99%-energy support.
pub fn default_rho(spec: &SequenceSpec, frames: &[Frame]) -> f64 {
    if let Some(r) = spec.rho {
        return r;
    }
    let first = &frames[0];
    let smallest = first.support.iter().map(|&i| first.x[i].abs()).fold(f64::INFINITY, f64::min);
    if smallest.is_finite() {
        AUTO_RHO_FACTOR * smallest
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicMethod {
    /// Algorithm 1: mod-BPDN at `t = 0`, then reg-mod-BPDN with `T = N̂_{t−1}`.
    RegModBpdn,
    /// Same recursion with the `λ‖b − μ̂‖²` penalty on every coordinate.
    RegModBpdnVar,
    /// BPDN on every frame independently.
    Bpdn,
    /// BPDN at `t = 0`, then BPDN on the residual `y_t − A x̂_{t−1}`.
    CsResidual,
}

impl DynamicMethod {
    pub fn id(&self) -> &'static str {
        match self {
            DynamicMethod::RegModBpdn => "reg-mod-bpdn",
            DynamicMethod::RegModBpdnVar => "reg-mod-bpdn-var",
            DynamicMethod::Bpdn => "bpdn",
            DynamicMethod::CsResidual => "cs-residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameResult {
    pub t: usize,
    pub estimate: Vec<f64>,
    /// `T` used to solve this frame (the previous frame's support estimate for `t > 0`).
    pub prior_support: Vec<usize>,
    pub support_estimate: Vec<usize>,
    pub nrmse: f64,
    pub support_misses: usize,
    pub support_extras: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    Solve,
    Threshold,
    Output,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicRun {
    pub method: DynamicMethod,
    pub rho: f64,
    pub frames: Vec<FrameResult>,
    /// `(t, step)` in execution order.
    pub log: Vec<(usize, Step)>,
}

/// Measurements `y_t = A x_t + w_t` for every frame (`A_0` at `t = 0`).
pub fn measure_sequence(frames: &[Frame], op0: &MeasurementOperator, op: &MeasurementOperator, sigma_w2: f64, seed: u64) -> Vec<Vec<f64>> {
    let sd = sigma_w2.sqrt();
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let a = if t == 0 { op0 } else { op };
            let mut rng = rng::stream(rng::derive(seed, t as u64), Stream::MeasurementNoise);
            let mut y = a.apply(&f.x);
            for v in y.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sd * z;
            }
            y
        })
        .collect()
}

/// Initial support `T₀` for the sequence.
pub fn initial_support(spec: &SequenceSpec) -> Vec<usize> {
    match &spec.initial_t {
        InitialT::Empty => Vec::new(),
        InitialT::ApproximationBand => operators::approximation_indices(spec.height, spec.width),
        InitialT::Explicit(v) => {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            v
        }
    }
}

fn nrmse(x: &[f64], xhat: &[f64]) -> f64 {
    let nx = linalg::norm2(x);
    let err = linalg::norm2(&linalg::sub(x, xhat));
    if nx == 0.0 {
        err
    } else {
        err / nx
    }
}

/// Runs one recursive method over pre-generated frames and measurements.
#[allow(clippy::too_many_arguments)]
pub fn run_method(
    method: DynamicMethod,
    spec: &SequenceSpec,
    frames: &[Frame],
    ys: &[Vec<f64>],
    op0: &DenseMatrix,
    op: &DenseMatrix,
    gamma: f64,
    lambda: f64,
    rho: f64,
    opts: &SolveOptions,
) -> Result<DynamicRun, DynamicError> {
    let m = spec.m();
    let mut out = Vec::with_capacity(frames.len());
    let mut log = Vec::new();
    let mut prev_est: Vec<f64> = vec![0.0; m];
    let mut prev_support: Vec<usize> = Vec::new();
    for (t, frame) in frames.iter().enumerate() {
        let a = if t == 0 { op0 } else { op };
        let y = &ys[t];
        let (t_used, res) = match (method, t) {
            (DynamicMethod::RegModBpdn | DynamicMethod::RegModBpdnVar, 0) => {
                let t0 = initial_support(spec);
                let spec0 = ObjectiveSpec::reg_mod(t0.clone(), vec![0.0; m], gamma, 0.0);
                (t0, solvers::solve_composite(a, y, &spec0, opts)?)
            }
            (DynamicMethod::RegModBpdn | DynamicMethod::RegModBpdnVar, _) => {
                let mut mu = vec![0.0; m];
                for &i in &prev_support {
                    mu[i] = prev_est[i];
                }
                let prior = PriorKnowledge::new(prev_support.clone(), mu).with_tuning(gamma, 0.0, lambda);
                (prev_support.clone(), solvers::solve_variant(method.id(), a, y, &prior, opts)?)
            }
            (DynamicMethod::Bpdn, _) | (DynamicMethod::CsResidual, 0) => {
                (Vec::new(), solvers::solve_composite(a, y, &ObjectiveSpec::bpdn(m, gamma), opts)?)
            }
            (DynamicMethod::CsResidual, _) => {
                let prior = PriorKnowledge::new((0..m).collect(), prev_est.clone()).with_tuning(gamma, 0.0, 0.0);
                (Vec::new(), solvers::solve_variant("cs-residual", a, y, &prior, opts)?)
            }
        };
        log.push((t, Step::Solve));
        let support_estimate = solvers::estimate_support(&res.estimate, rho);
        log.push((t, Step::Threshold));
        let misses = set_difference(&frame.support, &support_estimate).len();
        let extras = set_difference(&support_estimate, &frame.support).len();
        out.push(FrameResult {
            t,
            nrmse: nrmse(&frame.x, &res.estimate),
            estimate: res.estimate.clone(),
            prior_support: t_used,
            support_estimate: support_estimate.clone(),
            support_misses: misses,
            support_extras: extras,
            converged: res.converged,
        });
        log.push((t, Step::Output));
        prev_est = res.estimate;
        prev_support = support_estimate;
        log.push((t, Step::Feedback));
    }
    Ok(DynamicRun { method, rho, frames: out, log })
}

/// Algorithm 1 end to end: generate the sequence from `seed`, measure it with
/// `op0` at `t = 0` and `op` afterwards, and run dynamic reg-mod-BPDN.
pub fn run_dynamic(
    spec: &SequenceSpec,
    op0: &MeasurementOperator,
    op: &MeasurementOperator,
    gamma: f64,
    lambda: f64,
    seed: u64,
) -> Result<Vec<FrameResult>, DynamicError> {
    if op0.rows() <= op.rows() {
        return Err(DynamicError::InitialTooSmall { n0: op0.rows(), n: op.rows() });
    }
    let frames = generate_sequence(spec, seed)?;
    let ys = measure_sequence(&frames, op0, op, spec.sigma_w2, seed);
    let rho = default_rho(spec, &frames);
    let run = run_method(
        DynamicMethod::RegModBpdn,
        spec,
        &frames,
        &ys,
        &op0.matrix,
        &op.matrix,
        gamma,
        lambda,
        rho,
        &SolveOptions::default(),
    )?;
    Ok(run.frames)
}

/// Per-frame CSV: `t,nrmse,supportSize,misses,extras,converged`.
pub fn frames_to_csv<W: std::io::Write>(frames: &[FrameResult], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "nrmse", "supportSize", "misses", "extras", "converged"])?;
    for f in frames {
        w.write_record([
            f.t.to_string(),
            f.nrmse.to_string(),
            f.support_estimate.len().to_string(),
            f.support_misses.to_string(),
            f.support_extras.to_string(),
            f.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
