//! ST-Adam, a reference Adam, and a gradient-oscillation benchmark.
//!
//! ST-Adam is Adam without the bias-correction rescaling of the moment
//! estimates. Both updates work elementwise and share [`StAdamParams`].

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};

use crate::error::{Error, Result};

const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StAdamParams {
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Decoupled decay: the update subtracts `eta * weight_decay * w`.
    pub weight_decay: f64,
}

impl Default for StAdamParams {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            beta: 0.9,
            gamma: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl StAdamParams {
    pub fn new(eta: f64, beta: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        let p = Self {
            eta,
            beta,
            gamma,
            epsilon,
            weight_decay: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Result<Self> {
        self.weight_decay = weight_decay;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && self.eta.is_finite()
            && (0.0..1.0).contains(&self.beta)
            && (0.0..1.0).contains(&self.gamma)
            && self.epsilon > 0.0
            && self.epsilon.is_finite()
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "optimizer parameters out of range: {self:?} (need eta > 0, 0 <= beta, gamma < 1, eps > 0, decay >= 0)"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    StAdam,
    Adam,
}

impl Optimizer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Optimizer::StAdam => "st-adam",
            Optimizer::Adam => "adam",
        }
    }

    pub fn step(&self, w: &mut [f64], g: &[f64], s: &mut OptimizerState, p: &StAdamParams) -> Result<()> {
        match self {
            Optimizer::StAdam => st_adam_step(w, g, s, p),
            Optimizer::Adam => adam_step(w, g, s, p),
        }
    }
}

fn check(w: &[f64], g: &[f64], s: &OptimizerState) -> Result<()> {
    if g.len() != w.len() || s.m.len() != w.len() || s.v.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len().to_string(),
            actual: format!("g={}, m={}, v={}", g.len(), s.m.len(), s.v.len()),
        });
    }
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    Ok(())
}

fn update(w: &mut [f64], g: &[f64], s: &mut OptimizerState, p: &StAdamParams, bias_correct: bool) -> Result<()> {
    check(w, g, s)?;
    s.t += 1;
    let (cm, cv) = if bias_correct {
        let t = s.t.min(i32::MAX as u64) as i32;
        (1.0 - p.beta.powi(t), 1.0 - p.gamma.powi(t))
    } else {
        (1.0, 1.0)
    };
    for i in 0..w.len() {
        s.m[i] = p.beta * s.m[i] + (1.0 - p.beta) * g[i];
        s.v[i] = p.gamma * s.v[i] + (1.0 - p.gamma) * g[i] * g[i];
        let m = s.m[i] / cm;
        let v = s.v[i] / cv;
        w[i] -= p.eta * m / (v.sqrt() + p.epsilon) + p.eta * p.weight_decay * w[i];
    }
    Ok(())
}

/// One ST-Adam step in place. The moment estimates are used as is.
pub fn st_adam_step(w: &mut [f64], g: &[f64], s: &mut OptimizerState, p: &StAdamParams) -> Result<()> {
    update(w, g, s, p, false)
}

/// One Adam step in place, with the usual `1 - beta^t` / `1 - gamma^t` rescaling.
pub fn adam_step(w: &mut [f64], g: &[f64], s: &mut OptimizerState, p: &StAdamParams) -> Result<()> {
    update(w, g, s, p, true)
}

pub trait Objective {
    fn loss(&self, w: &[f64]) -> f64;
    /// May be stochastic; called exactly once per optimizer step.
    fn gradient(&mut self, w: &[f64]) -> Vec<f64>;
}

/// `f(w) = sum(lambda_i * w_i^2) / 2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub curvature: Vec<f64>,
}

impl Quadratic {
    pub fn isotropic(dim: usize) -> Self {
        Self {
            curvature: vec![1.0; dim],
        }
    }
}

impl Objective for Quadratic {
    fn loss(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.curvature).map(|(x, l)| 0.5 * l * x * x).sum()
    }

    fn gradient(&mut self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.curvature).map(|(x, l)| l * x).collect()
    }
}

/// Two-dimensional Rosenbrock function with `a = 1, b = 100`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

impl Objective for Rosenbrock {
    fn loss(&self, w: &[f64]) -> f64 {
        (1.0 - w[0]).powi(2) + 100.0 * (w[1] - w[0] * w[0]).powi(2)
    }

    fn gradient(&mut self, w: &[f64]) -> Vec<f64> {
        let (x, y) = (w[0], w[1]);
        vec![
            -2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
            200.0 * (y - x * x),
        ]
    }
}

/// Quadratic pull plus seeded Student-t noise on every gradient evaluation.
/// The reported loss is the noiseless quadratic.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic {
    pub base: Quadratic,
    pub noise_scale: f64,
    noise: StudentT<f64>,
    rng: ChaCha8Rng,
}

impl NoisyQuadratic {
    pub fn new(base: Quadratic, noise_scale: f64, dof: f64, seed: u64) -> Result<Self> {
        let noise = StudentT::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise scale {noise_scale}")));
        }
        Ok(Self {
            base,
            noise_scale,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Objective for NoisyQuadratic {
    fn loss(&self, w: &[f64]) -> f64 {
        self.base.loss(w)
    }

    fn gradient(&mut self, w: &[f64]) -> Vec<f64> {
        let mut g = self.base.gradient(w);
        // Draw even at zero scale so the stream position does not depend on it.
        for gi in g.iter_mut() {
            *gi += self.noise_scale * self.noise.sample(&mut self.rng);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub optimizer: Optimizer,
    /// Record `k` holds the loss and gradient norm seen before update `k`.
    pub records: Vec<StepRecord>,
    pub w: Vec<f64>,
    pub converged: bool,
}

impl Trajectory {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,grad_norm\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{}", r.step, r.loss, r.grad_norm);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iters: usize,
    /// Stop once the gradient norm is at or below this.
    pub tol: f64,
}

/// Runs `optimizer` until the gradient norm reaches `tol` or `max_iters`
/// updates have been made. Aborts when the loss exceeds 1e12.
pub fn optimize(
    f: &mut dyn Objective,
    w0: &[f64],
    optimizer: Optimizer,
    p: &StAdamParams,
    stop: StopRule,
) -> Result<Trajectory> {
    p.validate()?;
    let mut w = w0.to_vec();
    let mut state = OptimizerState::new(w.len());
    let mut records = Vec::new();
    let mut converged = false;
    for step in 0..=stop.max_iters {
        let loss = f.loss(&w);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { step, loss });
        }
        let g = f.gradient(&w);
        let grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        records.push(StepRecord { step, loss, grad_norm });
        if grad_norm <= stop.tol {
            converged = true;
            break;
        }
        if step == stop.max_iters {
            break;
        }
        optimizer.step(&mut w, &g, &mut state, p)?;
    }
    Ok(Trajectory {
        optimizer,
        records,
        w,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationProfile {
    pub dim: usize,
    pub steps: usize,
    pub eta: f64,
    pub noise_scale: f64,
    pub noise_dof: f64,
    pub start: f64,
    pub loss_threshold: f64,
}

impl Default for OscillationProfile {
    fn default() -> Self {
        Self {
            dim: 16,
            steps: 3000,
            eta: 0.01,
            noise_scale: 2.0,
            noise_dof: 2.5,
            start: 3.0,
            loss_threshold: 0.5,
        }
    }
}

impl OscillationProfile {
    /// Curvatures spread log-uniformly over `[0.1, 10]`.
    pub fn objective(&self, seed: u64) -> Result<NoisyQuadratic> {
        let curvature = (0..self.dim)
            .map(|i| {
                let t = if self.dim > 1 { i as f64 / (self.dim - 1) as f64 } else { 0.5 };
                10f64.powf(-1.0 + 2.0 * t)
            })
            .collect();
        NoisyQuadratic::new(Quadratic { curvature }, self.noise_scale, self.noise_dof, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationSummary {
    pub optimizer: Optimizer,
    pub final_loss: f64,
    pub trailing_variance: f64,
    pub steps_to_threshold: Option<usize>,
}

impl OscillationSummary {
    fn of(t: &Trajectory, threshold: f64) -> Self {
        let losses: Vec<f64> = t.records.iter().map(|r| r.loss).collect();
        let tail = &losses[losses.len() - (losses.len() / 10).max(2)..];
        Self {
            optimizer: t.optimizer,
            final_loss: t.final_loss(),
            trailing_variance: crate::stats::variance(tail),
            steps_to_threshold: t.records.iter().find(|r| r.loss <= threshold).map(|r| r.step),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    pub seed: u64,
    pub profile: OscillationProfile,
    pub st_adam: OscillationSummary,
    pub adam: OscillationSummary,
}

impl OscillationReport {
    pub fn st_adam_variance_not_worse(&self) -> bool {
        self.st_adam.trailing_variance <= self.adam.trailing_variance
    }

    /// Both reach the threshold and ST-Adam is at least as fast.
    pub fn st_adam_tie_or_better(&self) -> bool {
        match (self.st_adam.steps_to_threshold, self.adam.steps_to_threshold) {
            (Some(s), Some(a)) => s <= a,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn to_text(&self) -> String {
        let p = &self.profile;
        let mut s = format!(
            "oscillation seed={} dim={} steps={} eta={} noise_scale={} noise_dof={} threshold={}\n",
            self.seed, p.dim, p.steps, p.eta, p.noise_scale, p.noise_dof, p.loss_threshold
        );
        s.push_str("optimizer,final_loss,trailing_variance,steps_to_threshold\n");
        for r in [&self.st_adam, &self.adam] {
            let reached = r.steps_to_threshold.map_or("none".to_owned(), |n| n.to_string());
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.optimizer.as_str(),
                r.final_loss,
                r.trailing_variance,
                reached
            );
        }
        s
    }
}

pub fn oscillation_benchmark(seed: u64) -> Result<OscillationReport> {
    oscillation_benchmark_with(seed, OscillationProfile::default())
}

/// Runs both optimizers on the same noise stream and summarizes them.
pub fn oscillation_benchmark_with(seed: u64, profile: OscillationProfile) -> Result<OscillationReport> {
    let params = StAdamParams {
        eta: profile.eta,
        ..StAdamParams::default()
    };
    let stop = StopRule {
        max_iters: profile.steps,
        tol: 0.0,
    };
    let w0 = vec![profile.start; profile.dim];
    let run = |opt: Optimizer| -> Result<OscillationSummary> {
        let mut f = profile.objective(seed)?;
        let t = optimize(&mut f, &w0, opt, &params, stop)?;
        Ok(OscillationSummary::of(&t, profile.loss_threshold))
    };
    Ok(OscillationReport {
        seed,
        profile,
        st_adam: run(Optimizer::StAdam)?,
        adam: run(Optimizer::Adam)?,
    })
}
