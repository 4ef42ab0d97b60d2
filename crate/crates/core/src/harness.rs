//! Configuration-driven Monte Carlo runner: bound-table conditions/bounds, the
//! estimator error comparison, the bound comparison, the dynamic demo and a
//! single-instance solve. Trials run in parallel, aggregation is sequential
//! in trial order so output is independent of the thread count.

use crate::bounds::{self, BoundInputs, BoundReport, BoundValue, Multipliers, DEFAULT_SUBSET_CAP};
use crate::dynamic::{self, DynamicMethod, DynamicRun, SequenceSpec};
use crate::linalg;
use crate::model::{generate_instance, ModelError, PriorKnowledge, ProblemInstance, SignalModelParams};
use crate::operators::{self, MeasurementOperator, OperatorError};
use crate::rng::{self, Stream};
use crate::solvers::{self, SolveOptions, SolverError, SolverResult, ESTIMATOR_IDS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// γ (and γ′, λ) candidates used by every grid search.
pub const PARAM_GRID: [f64; 8] = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 1e-1];
pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_PILOT_TRIALS: usize = 10;
/// A bound-table cell holds when the conditions hold in at least this share of trials.
pub const HOLD_FRACTION: f64 = 0.98;
/// Relative tolerance for declaring the T2 and T3 bounds equal.
pub const BOUND_EQUALITY_RTOL: f64 = 1e-9;

pub const TRIAL_HEADER: [&str; 14] = [
    "setting",
    "n",
    "missFrac",
    "trial",
    "estimator",
    "xNorm",
    "nrmse",
    "boundT1",
    "boundT2",
    "boundT3",
    "ercHolds",
    "gammaUsed",
    "lambdaUsed",
    "solveIters",
];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{what}: parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        what: String,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Bound(#[from] bounds::BoundError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Dynamic(#[from] dynamic::DynamicError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Table1,
    ReconCompare,
    BoundCompare,
    DynamicDemo,
    SolveOne,
}

impl ExperimentKind {
    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::Table1 => "table1",
            ExperimentKind::ReconCompare => "recon-compare",
            ExperimentKind::BoundCompare => "bound-compare",
            ExperimentKind::DynamicDemo => "dynamic-demo",
            ExperimentKind::SolveOne => "solve-one",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    #[default]
    Gaussian,
    Mri,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NFrac {
    One(f64),
    Many(Vec<f64>),
}

impl NFrac {
    pub fn values(&self) -> Vec<f64> {
        match self {
            NFrac::One(v) => vec![*v],
            NFrac::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// Smallest mean N-RMSE over the pilot trials.
    GridBest,
    /// `γ*` of the polynomial-time bound for each trial.
    Theorem3Star,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// Per cell, the grid value with the smallest normalized bound among those that hold.
    GridBestBound,
    /// `λ = α σ_w² / σ_p²`.
    Alpha(f64),
    Fixed(f64),
}

fn default_pilot() -> usize {
    DEFAULT_PILOT_TRIALS
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_cap() -> usize {
    DEFAULT_SUBSET_CAP
}

fn default_gamma_mode() -> GammaMode {
    GammaMode::GridBest
}

fn default_lambda_mode() -> LambdaMode {
    LambdaMode::Alpha(0.2)
}

fn default_replicates() -> usize {
    1
}

fn default_tune_frames() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DynamicDemoConfig {
    pub sequence: SequenceSpec,
    pub methods: Vec<DynamicMethod>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Fixed `(γ, λ)`; tuned on a separate training sequence when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_tune_frames")]
    pub tune_frames: usize,
    /// Multiplier applied to the parameter grid (the MRI operator is an
    /// unnormalized DFT, so `m` is the natural choice and the default).
    #[serde(default)]
    pub grid_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub matrix: MatrixKind,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub n_frac: Option<NFrac>,
    #[serde(default)]
    pub model: Option<SignalModelParams>,
    #[serde(default)]
    pub estimators: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_pilot")]
    pub pilot_trials: usize,
    #[serde(default = "default_gamma_mode")]
    pub gamma_mode: GammaMode,
    #[serde(default = "default_lambda_mode")]
    pub lambda_mode: LambdaMode,
    /// `|Δ|/|N|` values; defaults to the model's `missFrac`.
    #[serde(default)]
    pub miss_fracs: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_path: Option<String>,
    #[serde(default = "default_cap")]
    pub subset_cap: usize,
    #[serde(default)]
    pub solver_tol: Option<f64>,
    #[serde(default)]
    pub solver_max_iter: Option<usize>,
    #[serde(default)]
    pub dynamic: Option<DynamicDemoConfig>,
    /// solve-one: path of a serialized problem instance.
    #[serde(default)]
    pub instance_path: Option<String>,
    /// solve-one: tuning values and threshold.
    #[serde(default)]
    pub gamma_prime: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub with_bounds: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| parse_error("config", text, &e))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    fn model(&self) -> Result<&SignalModelParams> {
        self.model.as_ref().ok_or_else(|| HarnessError::Config("model is required".into()))
    }

    fn m(&self) -> Result<usize> {
        let model_m = self.model.as_ref().map(|p| p.m);
        match (self.m, model_m) {
            (Some(a), Some(b)) if a != b => Err(HarnessError::Config(format!("m = {a} but model.m = {b}"))),
            (Some(a), _) | (None, Some(a)) => Ok(a),
            (None, None) => Err(HarnessError::Config("m is required".into())),
        }
    }

    fn n_values(&self) -> Result<Vec<f64>> {
        self.n_frac
            .as_ref()
            .map(NFrac::values)
            .ok_or_else(|| HarnessError::Config("nFrac is required".into()))
    }

    fn miss_values(&self) -> Result<Vec<f64>> {
        Ok(match &self.miss_fracs {
            Some(v) => v.clone(),
            None => vec![self.model()?.miss_frac],
        })
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut opts = SolveOptions::default();
        if let Some(t) = self.solver_tol {
            opts.tol = t;
        }
        if let Some(k) = self.solver_max_iter {
            opts.max_iter = k;
        }
        opts
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(HarnessError::Config(s));
        if self.trials == 0 {
            return bad("trials must be ≥ 1".into());
        }
        for id in &self.estimators {
            if !ESTIMATOR_IDS.contains(&id.as_str()) {
                return Err(SolverError::UnknownEstimator { name: id.clone() }.into());
            }
        }
        match self.experiment {
            ExperimentKind::Table1 | ExperimentKind::ReconCompare | ExperimentKind::BoundCompare => {
                let m = self.m()?;
                let model = self.model()?;
                model.validate()?;
                for f in self.n_values()? {
                    if !(f > 0.0 && f <= 1.0) {
                        return bad(format!("nFrac = {f} outside (0, 1]"));
                    }
                    if (f * m as f64).round() < 1.0 {
                        return bad(format!("nFrac = {f} gives no measurements"));
                    }
                }
                for f in self.miss_values()? {
                    if !(0.0..=1.0).contains(&f) {
                        return bad(format!("missFrac = {f} outside [0, 1]"));
                    }
                }
                if self.estimators.is_empty() {
                    return bad("at least one estimator is required".into());
                }
                if self.matrix == MatrixKind::Mri {
                    mri_grid(m)?;
                }
                if self.experiment == ExperimentKind::ReconCompare && self.gamma_mode == GammaMode::GridBest && self.pilot_trials == 0 {
                    return bad("grid-best needs pilotTrials ≥ 1".into());
                }
            }
            ExperimentKind::DynamicDemo => {
                let d = self.dynamic.as_ref().ok_or_else(|| HarnessError::Config("dynamic section is required".into()))?;
                d.sequence.validate()?;
                if d.methods.is_empty() || d.replicates == 0 {
                    return bad("dynamic demo needs methods and replicates ≥ 1".into());
                }
            }
            ExperimentKind::SolveOne => {
                if self.instance_path.is_none() {
                    return bad("solve-one needs instancePath".into());
                }
                if self.estimators.len() != 1 {
                    return bad("solve-one needs exactly one estimator".into());
                }
            }
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Converts serde_json's 1-based line/column to a byte offset into `text`.
fn parse_error(what: &str, text: &str, e: &serde_json::Error) -> HarnessError {
    let (line, column) = (e.line(), e.column());
    let mut offset = 0;
    for (k, l) in text.split_inclusive('\n').enumerate() {
        if k + 1 == line {
            offset += column.saturating_sub(1).min(l.len());
            break;
        }
        offset += l.len();
    }
    HarnessError::Parse {
        what: what.to_string(),
        offset: offset.min(text.len()),
        line,
        column,
        message: e.to_string(),
    }
}

fn mri_grid(m: usize) -> Result<usize> {
    let side = (m as f64).sqrt().round() as usize;
    if side * side != m || !side.is_power_of_two() || side < 8 {
        return Err(HarnessError::Config(format!("mri matrices need m = side² with side a power of two ≥ 8 (m = {m})")));
    }
    Ok(side)
}

/// Measurement count for `nFrac`; MRI operators measure `⌊n/2⌉` complex frequencies.
pub fn measurement_count(n_frac: f64, m: usize) -> usize {
    (n_frac * m as f64).round() as usize
}

fn build_operator(kind: MatrixKind, n: usize, m: usize, seed: u64) -> Result<MeasurementOperator> {
    Ok(match kind {
        MatrixKind::Gaussian => operators::gaussian_operator(n, m, seed)?,
        MatrixKind::Mri => {
            let side = mri_grid(m)?;
            let mask = operators::variable_density_mask(side, side, (n / 2).max(1), seed)?;
            operators::mri_operator(&mask)?
        }
    })
}

fn with_miss(model: &SignalModelParams, miss: f64) -> SignalModelParams {
    SignalModelParams { miss_frac: miss, ..model.clone() }
}

fn trial_instance(cfg: &ExperimentConfig, model: &SignalModelParams, n: usize, seed: u64) -> Result<ProblemInstance> {
    let op = build_operator(cfg.matrix, n, model.m, seed)?;
    Ok(generate_instance(op, model, seed)?)
}

fn alpha_lambda(alpha: f64, model: &SignalModelParams) -> Result<f64> {
    if model.sigma_p2 <= 0.0 {
        return Err(HarnessError::Config("the α rule needs σ_p² > 0".into()));
    }
    Ok(alpha * model.sigma_w2 / model.sigma_p2)
}

fn fixed_lambda(mode: LambdaMode, model: &SignalModelParams) -> Result<f64> {
    match mode {
        LambdaMode::Alpha(a) => alpha_lambda(a, model),
        LambdaMode::Fixed(v) => Ok(v),
        LambdaMode::GridBestBound => Err(HarnessError::Config("grid-best-bound λ is only defined for table1".into())),
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        b = b.num_threads(k.max(1));
    }
    b.build().map_err(|e| HarnessError::Pool(e.to_string()))
}

/// Runs `f(i)` for `i in 0..count` in parallel; results come back in index order.
fn par_trials<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

fn nrmse(x: &[f64], xhat: &[f64]) -> f64 {
    let nx = linalg::norm2(x);
    let err = linalg::norm2(&linalg::sub(x, xhat));
    if nx > 0.0 {
        err / nx
    } else {
        err
    }
}

/// Normalized bound `sqrt(Σ bound² / Σ ‖x‖²)` over the given trials, in order.
pub fn normalized_bound(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(b, xn) in pairs {
        num += b * b;
        den += xn * xn;
    }
    Some(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialRecord {
    pub setting: String,
    pub n: usize,
    pub miss_frac: f64,
    pub trial: usize,
    pub estimator: String,
    pub x_norm: f64,
    pub nrmse: Option<f64>,
    pub bound_t1: Option<BoundValue>,
    pub bound_t2: Option<BoundValue>,
    pub bound_t3: Option<BoundValue>,
    pub erc_holds: Option<bool>,
    pub gamma_used: Option<f64>,
    pub lambda_used: Option<f64>,
    pub solve_iters: Option<usize>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Fixed-header CSV of trial records; floats use shortest round-trip form.
pub fn records_to_csv(records: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRIAL_HEADER)?;
    for r in records {
        w.write_record([
            r.setting.clone(),
            r.n.to_string(),
            r.miss_frac.to_string(),
            r.trial.to_string(),
            r.estimator.clone(),
            r.x_norm.to_string(),
            opt(&r.nrmse),
            opt(&r.bound_t1),
            opt(&r.bound_t2),
            opt(&r.bound_t3),
            opt(&r.erc_holds),
            opt(&r.gamma_used),
            opt(&r.lambda_used),
            opt(&r.solve_iters),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| format!("bad field '{s}'"))
}

fn parse_bound(s: &str) -> std::result::Result<Option<BoundValue>, String> {
    Ok(match s {
        "" => None,
        "not hold" => Some(BoundValue::NotHold),
        "infinity" => Some(BoundValue::Infinite),
        v => Some(BoundValue::Finite(v.parse().map_err(|_| format!("bad bound '{v}'"))?)),
    })
}

/// Inverse of [`records_to_csv`].
pub fn records_from_csv(text: &str) -> std::result::Result<Vec<TrialRecord>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    if header != TRIAL_HEADER {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let f = |k: usize| row.get(k).unwrap_or("");
        out.push(TrialRecord {
            setting: f(0).to_string(),
            n: f(1).parse().map_err(|_| "bad n".to_string())?,
            miss_frac: f(2).parse().map_err(|_| "bad missFrac".to_string())?,
            trial: f(3).parse().map_err(|_| "bad trial".to_string())?,
            estimator: f(4).to_string(),
            x_norm: f(5).parse().map_err(|_| "bad xNorm".to_string())?,
            nrmse: parse_opt(f(6))?,
            bound_t1: parse_bound(f(7))?,
            bound_t2: parse_bound(f(8))?,
            bound_t3: parse_bound(f(9))?,
            erc_holds: parse_opt(f(10))?,
            gamma_used: parse_opt(f(11))?,
            lambda_used: parse_opt(f(12))?,
            solve_iters: parse_opt(f(13))?,
        });
    }
    Ok(out)
}

/// Bound inputs for one estimator's view of an instance: BPDN sees
/// `T = ∅, Δ = N, μ̂ = 0`; mod-BPDN uses `λ = 0`.
struct View {
    t: Vec<usize>,
    delta: Vec<usize>,
    mu_hat: Vec<f64>,
    lambda: f64,
}

impl View {
    fn new(estimator: &str, inst: &ProblemInstance, lambda: f64) -> Result<Self> {
        let m = inst.m();
        Ok(match estimator {
            "reg-mod-bpdn" => View {
                t: inst.prior.t.clone(),
                delta: inst.layout.delta.clone(),
                mu_hat: inst.prior.mu_hat.clone(),
                lambda,
            },
            "mod-bpdn" => View {
                t: inst.prior.t.clone(),
                delta: inst.layout.delta.clone(),
                mu_hat: inst.prior.mu_hat.clone(),
                lambda: 0.0,
            },
            "bpdn" => View {
                t: Vec::new(),
                delta: inst.layout.support.clone(),
                mu_hat: vec![0.0; m],
                lambda: 0.0,
            },
            other => {
                return Err(HarnessError::Config(format!(
                    "bounds are available for reg-mod-bpdn, mod-bpdn and bpdn, not '{other}'"
                )))
            }
        })
    }

    fn inputs<'a>(&'a self, inst: &'a ProblemInstance) -> BoundInputs<'a> {
        BoundInputs {
            a: &inst.operator.matrix,
            y: &inst.y,
            w: &inst.w,
            x: &inst.x,
            t: &self.t,
            delta: &self.delta,
            lambda: self.lambda,
            mu_hat: &self.mu_hat,
        }
    }

    fn prior(&self, gamma: f64) -> PriorKnowledge {
        PriorKnowledge::new(self.t.clone(), self.mu_hat.clone()).with_tuning(gamma, 0.0, self.lambda)
    }
}

fn solve_view(estimator: &str, view: &View, inst: &ProblemInstance, gamma: f64, opts: &SolveOptions) -> Result<SolverResult> {
    let name = if estimator == "bpdn" { "bpdn" } else { "reg-mod-bpdn" };
    Ok(solvers::solve_variant(name, &inst.operator.matrix, &inst.y, &view.prior(gamma), opts)?)
}

// ---------------------------------------------------------------- bound table

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LambdaCandidate {
    pub lambda: f64,
    pub holds: usize,
    pub value: BoundValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Table1Cell {
    pub n: usize,
    pub n_frac: f64,
    pub estimator: String,
    pub lambda: f64,
    pub trials: usize,
    pub holds: usize,
    /// Normalized bound, or "not hold".
    pub value: BoundValue,
    pub candidates: Vec<LambdaCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Result {
    pub cells: Vec<Table1Cell>,
    pub records: Vec<TrialRecord>,
}

impl Table1Result {
    pub fn cell(&self, n_frac: f64, estimator: &str) -> Option<&Table1Cell> {
        self.cells.iter().find(|c| (c.n_frac - n_frac).abs() < 1e-12 && c.estimator == estimator)
    }
}

fn lambda_candidates(cfg: &ExperimentConfig, estimator: &str, model: &SignalModelParams) -> Result<Vec<f64>> {
    if estimator != "reg-mod-bpdn" {
        return Ok(vec![0.0]);
    }
    Ok(match cfg.lambda_mode {
        LambdaMode::GridBestBound => PARAM_GRID.to_vec(),
        mode => vec![fixed_lambda(mode, model)?],
    })
}

pub fn run_table1(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Table1Result> {
    cfg.validate()?;
    let model = cfg.model()?.clone();
    let m = model.m;
    let opts = cfg.solve_options();
    let min_holds = (HOLD_FRACTION * cfg.trials as f64).ceil() as usize;
    let pool = pool(threads)?;
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for n_frac in cfg.n_values()? {
        let n = measurement_count(n_frac, m);
        for est in &cfg.estimators {
            let lambdas = lambda_candidates(cfg, est, &model)?;
            // T1 for every candidate λ, per trial: (holds, bound, ‖x‖).
            let scan: Vec<Vec<(bool, f64, f64)>> = pool.install(|| {
                par_trials(cfg.trials, |i| {
                    let inst = trial_instance(cfg, &model, n, rng::trial_seed(cfg.seed, i as u64))?;
                    let xn = linalg::norm2(&inst.x);
                    lambdas
                        .iter()
                        .map(|&lam| {
                            let view = View::new(est, &inst, lam)?;
                            let r = bounds::theorem1_bound(&view.inputs(&inst));
                            Ok((r.holds, r.bound_value.value().unwrap_or(f64::NAN), xn))
                        })
                        .collect()
                })
            })?;
            let mut candidates = Vec::new();
            for (k, &lam) in lambdas.iter().enumerate() {
                let held: Vec<(f64, f64)> = scan.iter().filter(|t| t[k].0).map(|t| (t[k].1, t[k].2)).collect();
                let value = if held.len() >= min_holds {
                    BoundValue::Finite(normalized_bound(&held).expect("non-empty"))
                } else {
                    BoundValue::NotHold
                };
                candidates.push(LambdaCandidate { lambda: lam, holds: held.len(), value });
            }
            // Smallest normalized bound among holding λ; else the λ holding most often.
            let best = candidates
                .iter()
                .enumerate()
                .filter(|(_, c)| c.value.value().is_some())
                .min_by(|a, b| a.1.value.or_infinity().total_cmp(&b.1.value.or_infinity()).then(a.0.cmp(&b.0)))
                .map(|(k, _)| k)
                .unwrap_or_else(|| {
                    candidates
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.holds.cmp(&b.1.holds).then(b.0.cmp(&a.0)))
                        .map(|(k, _)| k)
                        .expect("at least one λ")
                });
            let lam = lambdas[best];
            let setting = format!("n={n};estimator={est}");
            let recs: Vec<TrialRecord> = pool.install(|| {
                par_trials(cfg.trials, |i| {
                    let inst = trial_instance(cfg, &model, n, rng::trial_seed(cfg.seed, i as u64))?;
                    let view = View::new(est, &inst, lam)?;
                    let inputs = view.inputs(&inst);
                    let t1 = bounds::theorem1_bound(&inputs);
                    let t2 = if view.delta.len() <= cfg.subset_cap {
                        Some(bounds::theorem2_bound(&inputs, cfg.subset_cap)?.bound_value)
                    } else {
                        None
                    };
                    let t3 = bounds::theorem3_bound(&inputs);
                    let (nr, gamma, iters) = match t1.gamma_star {
                        Some(g) if t1.holds => {
                            let res = solve_view(est, &view, &inst, g, &opts)?;
                            (Some(nrmse(&inst.x, &res.estimate)), Some(g), Some(res.iterations))
                        }
                        _ => (None, None, None),
                    };
                    Ok(TrialRecord {
                        setting: setting.clone(),
                        n,
                        miss_frac: model.miss_frac,
                        trial: i,
                        estimator: est.clone(),
                        x_norm: linalg::norm2(&inst.x),
                        nrmse: nr,
                        bound_t1: Some(t1.bound_value),
                        bound_t2: t2,
                        bound_t3: Some(t3.bound_value),
                        erc_holds: Some(t1.holds),
                        gamma_used: gamma,
                        lambda_used: Some(view.lambda),
                        solve_iters: iters,
                    })
                })
            })?;
            records.extend(recs);
            let chosen = &candidates[best];
            cells.push(Table1Cell {
                n,
                n_frac,
                estimator: est.clone(),
                lambda: lam,
                trials: cfg.trials,
                holds: chosen.holds,
                value: chosen.value,
                candidates,
            });
        }
    }
    Ok(Table1Result { cells, records })
}

// ------------------------------------------------------- reconstruction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReconCell {
    pub n: usize,
    pub miss_frac: f64,
    pub miss_count: usize,
    pub estimator: String,
    pub gamma: Option<f64>,
    pub gamma_prime: Option<f64>,
    pub lambda: f64,
    pub trials: usize,
    pub mean_nrmse: f64,
    /// Pilot mean N-RMSE per `(γ, γ′)` candidate, when the grid was searched.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pilot: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconResult {
    pub cells: Vec<ReconCell>,
    pub records: Vec<TrialRecord>,
}

impl ReconResult {
    pub fn mean(&self, n: usize, miss_frac: f64, estimator: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.n == n && (c.miss_frac - miss_frac).abs() < 1e-12 && c.estimator == estimator)
            .map(|c| c.mean_nrmse)
    }
}

/// Uses λ only for the estimators that have a value-prior penalty.
fn uses_lambda(est: &str) -> bool {
    matches!(est, "reg-mod-bpdn" | "reg-mod-bpdn-var" | "reg-bpdn" | "kf-cs-static")
}

fn solve_estimator(est: &str, inst: &ProblemInstance, gamma: f64, gamma_prime: f64, lambda: f64, opts: &SolveOptions) -> Result<SolverResult> {
    let prior = inst.prior.clone().with_tuning(gamma, gamma_prime, lambda);
    Ok(solvers::solve_variant(est, &inst.operator.matrix, &inst.y, &prior, opts)?)
}

pub fn run_recon_compare(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ReconResult> {
    cfg.validate()?;
    let base = cfg.model()?.clone();
    let opts = cfg.solve_options();
    let pool = pool(threads)?;
    let pilot_base = rng::derive(cfg.seed, Stream::Pilot as u64);
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for n_frac in cfg.n_values()? {
        let n = measurement_count(n_frac, base.m);
        for miss in cfg.miss_values()? {
            let model = with_miss(&base, miss);
            let lambda = fixed_lambda(cfg.lambda_mode, &model)?;
            for est in &cfg.estimators {
                let lam = if uses_lambda(est) { lambda } else { 0.0 };
                let mut pilot = Vec::new();
                let (gamma, gamma_prime) = match cfg.gamma_mode {
                    GammaMode::Fixed(g) => (Some(g), cfg.gamma_prime.unwrap_or(g)),
                    GammaMode::Theorem3Star => (None, 0.0),
                    GammaMode::GridBest => {
                        let primes: Vec<f64> = if est == "weighted-l1" { PARAM_GRID.to_vec() } else { vec![0.0] };
                        let combos: Vec<(f64, f64)> = PARAM_GRID.iter().flat_map(|&g| primes.iter().map(move |&gp| (g, gp))).collect();
                        let scores: Vec<Vec<f64>> = pool.install(|| {
                            par_trials(cfg.pilot_trials, |i| {
                                let inst = trial_instance(cfg, &model, n, rng::trial_seed(pilot_base, i as u64))?;
                                combos
                                    .iter()
                                    .map(|&(g, gp)| Ok(nrmse(&inst.x, &solve_estimator(est, &inst, g, gp, lam, &opts)?.estimate)))
                                    .collect()
                            })
                        })?;
                        let mut best = (f64::INFINITY, 0);
                        for (k, &(g, gp)) in combos.iter().enumerate() {
                            let mean = scores.iter().map(|s| s[k]).sum::<f64>() / cfg.pilot_trials as f64;
                            pilot.push((g, gp, mean));
                            if mean < best.0 {
                                best = (mean, k);
                            }
                        }
                        (Some(combos[best.1].0), combos[best.1].1)
                    }
                };
                let setting = format!("n={n};missFrac={miss};estimator={est}");
                let recs: Vec<TrialRecord> = pool.install(|| {
                    par_trials(cfg.trials, |i| {
                        let inst = trial_instance(cfg, &model, n, rng::trial_seed(cfg.seed, i as u64))?;
                        let g = match gamma {
                            Some(g) => g,
                            None => {
                                let view = View::new(est, &inst, lam)?;
                                bounds::theorem3_bound(&view.inputs(&inst)).gamma_star.unwrap_or(f64::NAN)
                            }
                        };
                        if !g.is_finite() {
                            return Err(HarnessError::Config(format!("no finite γ* for trial {i} ({est})")));
                        }
                        let res = solve_estimator(est, &inst, g, gamma_prime, lam, &opts)?;
                        Ok(TrialRecord {
                            setting: setting.clone(),
                            n,
                            miss_frac: miss,
                            trial: i,
                            estimator: est.clone(),
                            x_norm: linalg::norm2(&inst.x),
                            nrmse: Some(nrmse(&inst.x, &res.estimate)),
                            bound_t1: None,
                            bound_t2: None,
                            bound_t3: None,
                            erc_holds: None,
                            gamma_used: Some(g),
                            lambda_used: Some(lam),
                            solve_iters: Some(res.iterations),
                        })
                    })
                })?;
                let mean = recs.iter().map(|r| r.nrmse.unwrap_or(0.0)).sum::<f64>() / recs.len() as f64;
                cells.push(ReconCell {
                    n,
                    miss_frac: miss,
                    miss_count: model.miss_count(),
                    estimator: est.clone(),
                    gamma,
                    gamma_prime: (est == "weighted-l1").then_some(gamma_prime),
                    lambda: lam,
                    trials: cfg.trials,
                    mean_nrmse: mean,
                    pilot,
                });
                records.extend(recs);
            }
        }
    }
    Ok(ReconResult { cells, records })
}

// ------------------------------------------------------- bound comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundCell {
    pub n: usize,
    pub miss_frac: f64,
    pub miss_count: usize,
    pub estimator: String,
    pub lambda: f64,
    pub trials: usize,
    pub holds_t1: usize,
    /// Normalized bounds over the trials where each applies (`None`: never).
    pub normalized_t1: Option<f64>,
    pub normalized_t2: Option<f64>,
    pub normalized_t3: Option<f64>,
    pub t2_computed: usize,
    pub t3_equals_t2: usize,
    pub mean_nrmse: f64,
    /// Trials with `‖x − x̂‖ ≤ T3 bound` (within solver tolerance).
    pub within_t3: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCompareResult {
    pub cells: Vec<BoundCell>,
    pub records: Vec<TrialRecord>,
}

/// Relative agreement used for `T3 = T2`.
pub fn bounds_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= BOUND_EQUALITY_RTOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn run_bound_compare(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<BoundCompareResult> {
    cfg.validate()?;
    let base = cfg.model()?.clone();
    let opts = cfg.solve_options();
    let pool = pool(threads)?;
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for n_frac in cfg.n_values()? {
        let n = measurement_count(n_frac, base.m);
        for miss in cfg.miss_values()? {
            let model = with_miss(&base, miss);
            let lambda = fixed_lambda(cfg.lambda_mode, &model)?;
            for est in &cfg.estimators {
                let setting = format!("n={n};missFrac={miss};estimator={est}");
                let recs: Vec<TrialRecord> = pool.install(|| {
                    par_trials(cfg.trials, |i| {
                        let inst = trial_instance(cfg, &model, n, rng::trial_seed(cfg.seed, i as u64))?;
                        let view = View::new(est, &inst, lambda)?;
                        let inputs = view.inputs(&inst);
                        let t1 = bounds::theorem1_bound(&inputs);
                        let t2 = if view.delta.len() <= cfg.subset_cap {
                            Some(bounds::theorem2_bound(&inputs, cfg.subset_cap)?.bound_value)
                        } else {
                            None
                        };
                        let t3 = bounds::theorem3_bound(&inputs);
                        let gamma = match cfg.gamma_mode {
                            GammaMode::Fixed(g) => Some(g),
                            _ => t3.gamma_star,
                        };
                        let (nr, iters) = match gamma {
                            Some(g) if g.is_finite() => {
                                let res = solve_view(est, &view, &inst, g, &opts)?;
                                (Some(nrmse(&inst.x, &res.estimate)), Some(res.iterations))
                            }
                            _ => (None, None),
                        };
                        Ok(TrialRecord {
                            setting: setting.clone(),
                            n,
                            miss_frac: miss,
                            trial: i,
                            estimator: est.clone(),
                            x_norm: linalg::norm2(&inst.x),
                            nrmse: nr,
                            bound_t1: Some(t1.bound_value),
                            bound_t2: t2,
                            bound_t3: Some(t3.bound_value),
                            erc_holds: Some(t1.holds),
                            gamma_used: gamma,
                            lambda_used: Some(view.lambda),
                            solve_iters: iters,
                        })
                    })
                })?;
                cells.push(summarize_bounds(&recs, n, miss, model.miss_count(), est, lambda_of(&recs)));
                records.extend(recs);
            }
        }
    }
    Ok(BoundCompareResult { cells, records })
}

fn lambda_of(recs: &[TrialRecord]) -> f64 {
    recs.first().and_then(|r| r.lambda_used).unwrap_or(0.0)
}

fn summarize_bounds(recs: &[TrialRecord], n: usize, miss: f64, miss_count: usize, est: &str, lambda: f64) -> BoundCell {
    let pick = |f: &dyn Fn(&TrialRecord) -> Option<BoundValue>| -> Vec<(f64, f64)> {
        recs.iter().filter_map(|r| f(r).and_then(|b| b.value()).map(|b| (b, r.x_norm))).collect()
    };
    let t1 = pick(&|r| r.bound_t1);
    let t2 = pick(&|r| r.bound_t2);
    let t3 = pick(&|r| r.bound_t3);
    let t3_equals_t2 = recs
        .iter()
        .filter(|r| match (r.bound_t2.and_then(|b| b.value()), r.bound_t3.and_then(|b| b.value())) {
            (Some(a), Some(b)) => bounds_equal(a, b),
            _ => false,
        })
        .count();
    let within_t3 = recs
        .iter()
        .filter(|r| match (r.nrmse, r.bound_t3.and_then(|b| b.value())) {
            (Some(e), Some(b)) => e * r.x_norm <= b + 1e-6,
            _ => false,
        })
        .count();
    let solved: Vec<f64> = recs.iter().filter_map(|r| r.nrmse).collect();
    BoundCell {
        n,
        miss_frac: miss,
        miss_count,
        estimator: est.to_string(),
        lambda,
        trials: recs.len(),
        holds_t1: t1.len(),
        normalized_t1: normalized_bound(&t1),
        normalized_t2: normalized_bound(&t2),
        normalized_t3: normalized_bound(&t3),
        t2_computed: recs.iter().filter(|r| r.bound_t2.is_some()).count(),
        t3_equals_t2,
        mean_nrmse: if solved.is_empty() { f64::NAN } else { solved.iter().sum::<f64>() / solved.len() as f64 },
        within_t3,
    }
}

// ------------------------------------------------------------- dynamic

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DynamicTuning {
    pub method: DynamicMethod,
    pub gamma: f64,
    pub lambda: f64,
    pub training_nrmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DynamicDemoResult {
    pub rho: Vec<f64>,
    pub tuning: Vec<DynamicTuning>,
    /// `runs[replicate][method]`.
    pub runs: Vec<Vec<DynamicRun>>,
}

impl DynamicDemoResult {
    pub fn nrmse(&self, replicate: usize, method: DynamicMethod) -> Option<Vec<f64>> {
        self.runs
            .get(replicate)?
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.frames.iter().map(|f| f.nrmse).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["replicate", "t", "estimator", "nrmse", "supportSize", "misses", "extras", "converged"])?;
        for (rep, runs) in self.runs.iter().enumerate() {
            for run in runs {
                for f in &run.frames {
                    w.write_record([
                        rep.to_string(),
                        f.t.to_string(),
                        run.method.id().to_string(),
                        f.nrmse.to_string(),
                        f.support_estimate.len().to_string(),
                        f.support_misses.to_string(),
                        f.support_extras.to_string(),
                        f.converged.to_string(),
                    ])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

struct Replicate {
    frames: Vec<dynamic::Frame>,
    ys: Vec<Vec<f64>>,
    op0: MeasurementOperator,
    op: MeasurementOperator,
}

fn dynamic_replicate(spec: &SequenceSpec, seed: u64) -> Result<Replicate> {
    let frames = dynamic::generate_sequence(spec, seed)?;
    let mask_seed = rng::derive(seed, Stream::Mask as u64);
    let op0 = operators::mri_operator(&operators::variable_density_mask(spec.height, spec.width, spec.n0, mask_seed)?)?;
    let op = operators::mri_operator(&operators::variable_density_mask(spec.height, spec.width, spec.n, mask_seed.wrapping_add(1))?)?;
    let ys = dynamic::measure_sequence(&frames, &op0, &op, spec.sigma_w2, seed);
    Ok(Replicate { frames, ys, op0, op })
}

fn dynamic_score(method: DynamicMethod, spec: &SequenceSpec, rep: &Replicate, gamma: f64, lambda: f64, rho: f64, opts: &SolveOptions) -> Result<f64> {
    let run = dynamic::run_method(method, spec, &rep.frames, &rep.ys, &rep.op0.matrix, &rep.op.matrix, gamma, lambda, rho, opts)?;
    Ok(run.frames.iter().map(|f| f.nrmse).sum::<f64>() / run.frames.len() as f64)
}

/// Grid search for `(γ, λ)` on a training sequence: γ first (λ at the grid
/// midpoint for methods that use it), then λ at the chosen γ.
fn tune_dynamic(d: &DynamicDemoConfig, seed: u64, opts: &SolveOptions, pool: &rayon::ThreadPool) -> Result<Vec<DynamicTuning>> {
    let spec = SequenceSpec {
        frame_count: d.tune_frames.clamp(2, d.sequence.frame_count.max(2)),
        ..d.sequence.clone()
    };
    let rep = dynamic_replicate(&spec, rng::derive(seed, Stream::Pilot as u64))?;
    let rho = dynamic::default_rho(&spec, &rep.frames);
    let scale = d.grid_scale.unwrap_or(spec.m() as f64);
    let grid: Vec<f64> = PARAM_GRID.iter().map(|g| g * scale).collect();
    let mut out = Vec::new();
    for &method in &d.methods {
        let with_lambda = matches!(method, DynamicMethod::RegModBpdn | DynamicMethod::RegModBpdnVar);
        let lambda0 = d.lambda.unwrap_or(if with_lambda { grid[grid.len() / 2] } else { 0.0 });
        let (gamma, mut score) = match d.gamma {
            Some(g) => (g, f64::NAN),
            None => {
                let scores: Vec<f64> = pool.install(|| grid.par_iter().map(|&g| dynamic_score(method, &spec, &rep, g, lambda0, rho, opts)).collect::<Result<Vec<_>>>())?;
                argmin(&grid, &scores)
            }
        };
        let lambda = if with_lambda && d.lambda.is_none() {
            let scores: Vec<f64> = pool.install(|| grid.par_iter().map(|&l| dynamic_score(method, &spec, &rep, gamma, l, rho, opts)).collect::<Result<Vec<_>>>())?;
            let (l, s) = argmin(&grid, &scores);
            score = s;
            l
        } else {
            lambda0
        };
        out.push(DynamicTuning { method, gamma, lambda, training_nrmse: score });
    }
    Ok(out)
}

fn argmin(values: &[f64], scores: &[f64]) -> (f64, f64) {
    let mut best = (values[0], f64::INFINITY);
    for (&v, &s) in values.iter().zip(scores) {
        if s < best.1 {
            best = (v, s);
        }
    }
    best
}

pub fn run_dynamic_demo(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<DynamicDemoResult> {
    cfg.validate()?;
    let d = cfg.dynamic.as_ref().expect("validated");
    let opts = cfg.solve_options();
    let pool = pool(threads)?;
    let tuning = tune_dynamic(d, cfg.seed, &opts, &pool)?;
    let per_rep: Vec<(f64, Vec<DynamicRun>)> = pool.install(|| {
        par_trials(d.replicates, |r| {
            let rep = dynamic_replicate(&d.sequence, rng::trial_seed(cfg.seed, r as u64))?;
            let rho = dynamic::default_rho(&d.sequence, &rep.frames);
            let runs = tuning
                .iter()
                .map(|tu| {
                    Ok(dynamic::run_method(
                        tu.method,
                        &d.sequence,
                        &rep.frames,
                        &rep.ys,
                        &rep.op0.matrix,
                        &rep.op.matrix,
                        tu.gamma,
                        tu.lambda,
                        rho,
                        &opts,
                    )?)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((rho, runs))
        })
    })?;
    let (rho, runs) = per_rep.into_iter().unzip();
    Ok(DynamicDemoResult { rho, tuning, runs })
}

// ------------------------------------------------------------- solve-one

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveOneOutput {
    pub estimator: String,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub lambda: f64,
    pub rho: f64,
    pub estimate: Vec<f64>,
    pub support_estimate: Vec<usize>,
    pub nrmse: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundReport>,
}

/// Parses a serialized [`ProblemInstance`] and checks its dimensions.
pub fn parse_instance(text: &str) -> Result<ProblemInstance> {
    let inst: ProblemInstance = serde_json::from_str(text).map_err(|e| parse_error("instance bundle", text, &e))?;
    inst.validate()?;
    Ok(inst)
}

/// Runs one estimator on an instance; bounds (T1 and T3) are added for
/// the estimators that have them when requested.
pub fn solve_instance(inst: &ProblemInstance, estimator: &str, gamma: f64, gamma_prime: f64, lambda: f64, rho: f64, with_bounds: bool, opts: &SolveOptions) -> Result<SolveOneOutput> {
    inst.validate()?;
    let res = solve_estimator(estimator, inst, gamma, gamma_prime, lambda, opts)?;
    let mut reports = Vec::new();
    if with_bounds && matches!(estimator, "reg-mod-bpdn" | "mod-bpdn" | "bpdn") {
        let view = View::new(estimator, inst, lambda)?;
        let inputs = view.inputs(inst);
        reports.push(bounds::theorem1_bound(&inputs));
        reports.push(bounds::theorem3_bound(&inputs));
    }
    Ok(SolveOneOutput {
        estimator: estimator.to_string(),
        gamma,
        gamma_prime,
        lambda,
        rho,
        support_estimate: solvers::estimate_support(&res.estimate, rho),
        nrmse: nrmse(&inst.x, &res.estimate),
        objective: res.objective,
        iterations: res.iterations,
        converged: res.converged,
        estimate: res.estimate,
        bounds: reports,
    })
}

pub fn solve_one(cfg: &ExperimentConfig) -> Result<SolveOneOutput> {
    cfg.validate()?;
    let path = PathBuf::from(cfg.instance_path.as_ref().expect("validated"));
    let inst = parse_instance(&read_text(&path)?)?;
    let gamma = match cfg.gamma_mode {
        GammaMode::Fixed(g) => g,
        _ => return Err(HarnessError::Config("solve-one needs gammaMode {\"fixed\": γ}".into())),
    };
    let lambda = match cfg.lambda_mode {
        LambdaMode::Fixed(l) => l,
        LambdaMode::Alpha(a) => match &cfg.model {
            Some(model) => alpha_lambda(a, model)?,
            None => return Err(HarnessError::Config("the α rule needs the model's σ_w², σ_p²".into())),
        },
        LambdaMode::GridBestBound => return Err(HarnessError::Config("solve-one needs a fixed λ".into())),
    };
    solve_instance(
        &inst,
        &cfg.estimators[0],
        gamma,
        cfg.gamma_prime.unwrap_or(0.0),
        lambda,
        cfg.rho.unwrap_or(0.0),
        cfg.with_bounds,
        &cfg.solve_options(),
    )
}

// ------------------------------------------------------------- artifacts

/// What an experiment writes: the CSV body and a JSON summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub csv: Option<String>,
    pub summary: Value,
}

pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Artifacts> {
    Ok(match cfg.experiment {
        ExperimentKind::Table1 => {
            let r = run_table1(cfg, threads)?;
            Artifacts { csv: Some(records_to_csv(&r.records)?), summary: json!({ "cells": r.cells }) }
        }
        ExperimentKind::ReconCompare => {
            let r = run_recon_compare(cfg, threads)?;
            Artifacts { csv: Some(records_to_csv(&r.records)?), summary: json!({ "cells": r.cells }) }
        }
        ExperimentKind::BoundCompare => {
            let r = run_bound_compare(cfg, threads)?;
            Artifacts { csv: Some(records_to_csv(&r.records)?), summary: json!({ "cells": r.cells }) }
        }
        ExperimentKind::DynamicDemo => {
            let r = run_dynamic_demo(cfg, threads)?;
            Artifacts { csv: Some(r.to_csv()?), summary: json!({ "rho": r.rho, "tuning": r.tuning }) }
        }
        ExperimentKind::SolveOne => Artifacts { csv: None, summary: serde_json::to_value(solve_one(cfg)?).expect("serializable") },
    })
}

/// Writes `<experiment>.csv` (if any) and `<experiment>.meta.json` into `dir`;
/// returns the written paths.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, artifacts: &Artifacts, elapsed_millis: u128) -> Result<Vec<PathBuf>> {
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| HarnessError::Io { path: p, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let name = cfg.experiment.id();
    let mut written = Vec::new();
    if let Some(csv) = &artifacts.csv {
        let path = dir.join(format!("{name}.csv"));
        std::fs::write(&path, csv).map_err(io(&path))?;
        written.push(path);
    }
    let meta = json!({
        "experiment": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seeds": {
            "base": cfg.seed,
            "pilot": rng::derive(cfg.seed, Stream::Pilot as u64),
            "trialSeedRule": "base + trial index",
        },
        "config": cfg,
        "summary": artifacts.summary,
        "elapsedMillis": elapsed_millis as u64,
    });
    let path = dir.join(format!("{name}.meta.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&meta).expect("serializable")).map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

/// Multiplier/term view of a report, for quick inspection in summaries.
pub fn report_terms(report: &BoundReport) -> Value {
    match &report.multipliers {
        Some(Multipliers::G(g)) => json!({ "g1": g.g1, "g2": g.g2, "g3": g.g3, "g4": g.g4, "erc": g.erc }),
        Some(Multipliers::F(f)) => json!({ "f1": f.f1, "f2": f.f2, "f3": f.f3, "f4": f.f4 }),
        None => Value::Null,
    }
}
