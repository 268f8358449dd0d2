//! Penalized loss assembly and the single-loop training of network parameters:
//! growing penalty, dynamic loss weights and Adam.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::field::ParameterSet;
use crate::grid::Field;
use crate::model::{FlowModel, TermValues};
use crate::physics::FlowTerms;
use crate::Error;

/// `mu(epoch) = min(cap, mu0 * growth^floor(epoch / period))`, epochs counted from 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub mu0: f64,
    pub growth: f64,
    pub period: usize,
    pub cap: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self { mu0: 1.0, growth: 1.05, period: 50, cap: 500.0 }
    }
}

impl PenaltySchedule {
    pub fn value(&self, epoch: usize) -> f64 {
        let k = (epoch / self.period).min(i32::MAX as usize) as i32;
        (self.mu0 * self.growth.powi(k)).min(self.cap)
    }
}

pub fn update_penalty(schedule: &PenaltySchedule, epoch: usize) -> f64 {
    schedule.value(epoch)
}

/// Step decay: the rate is multiplied by `factor` at `k * epochs / (decays + 1)`
/// for `k = 1..=decays`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub decays: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { base: 1e-3, factor: 0.75, decays: 4 }
    }
}

impl LrSchedule {
    pub fn boundaries(&self, epochs: usize) -> Vec<usize> {
        (1..=self.decays).map(|k| k * epochs / (self.decays + 1)).collect()
    }

    pub fn value(&self, epoch: usize, epochs: usize) -> f64 {
        let passed = self.boundaries(epochs).into_iter().filter(|&b| b > 0 && epoch >= b).count();
        // repeated multiplication keeps every drop an exact factor of the previous rate
        (0..passed).fold(self.base, |lr, _| lr * self.factor)
    }
}

/// Gradient statistics steering the weight update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradStats {
    /// `max |grad|` of the momentum residual with the larger one.
    pub reference_max: f64,
    /// `mean |grad|` of the continuity and volume terms.
    pub mean: [f64; 2],
}

/// Loss weights: `alpha[0..2]` are the fixed momentum references, `alpha[2..4]`
/// track continuity and volume.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicWeights {
    pub alpha: [f64; 4],
    pub lambda: f64,
    pub eps: f64,
    pub cap: f64,
}

impl Default for DynamicWeights {
    fn default() -> Self {
        Self { alpha: [1.0; 4], lambda: 0.9, eps: 1e-8, cap: 1e6 }
    }
}

impl DynamicWeights {
    /// `alpha <- (1 - lambda) alpha + lambda max|grad L_r| / max(mean|grad L_i|, eps)`, capped.
    pub fn update(&mut self, stats: &GradStats) {
        for (a, &mean) in self.alpha[2..].iter_mut().zip(&stats.mean) {
            let target = stats.reference_max / mean.max(self.eps);
            *a = ((1.0 - self.lambda) * *a + self.lambda * target).min(self.cap);
        }
    }
}

pub fn update_weights(weights: &DynamicWeights, stats: &GradStats) -> DynamicWeights {
    let mut w = *weights;
    w.update(stats);
    w
}

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub fn adam_step(theta: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(theta.len(), grad.len());
    assert_eq!(theta.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((x, &g), m), v) in theta.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        *x -= lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
    }
}

/// Per-epoch record of the loss and its ingredients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    /// 1-based.
    pub epoch: usize,
    pub terms: TermValues,
    pub alpha: [f64; 4],
    pub mu: f64,
    pub lr: f64,
    pub stats: GradStats,
}

impl LossBreakdown {
    /// `mu * alpha_i * term_i` for the four penalized terms.
    pub fn scaled(&self) -> [f64; 4] {
        let t = &self.terms;
        [t.r1_sq, t.r2_sq, t.r3_sq, t.c1_sq]
            .iter()
            .zip(&self.alpha)
            .map(|(v, a)| self.mu * a * v)
            .collect::<Vec<_>>()
            .try_into()
            .unwrap()
    }

    pub fn total(&self) -> f64 {
        let t = &self.terms;
        let a = &self.alpha;
        t.j + self.mu * (a[0] * t.r1_sq + a[1] * t.r2_sq + a[2] * t.r3_sq + a[3] * t.c1_sq)
    }
}

/// Records `J + mu (sum alpha_i R_i^2 + alpha_4 C1^2)` on the tape.
pub fn record_total(tape: &mut Tape, terms: &FlowTerms, mu: f64, alpha: &[f64; 4]) -> Result<Var, AutodiffError> {
    let mut pen: Option<Var> = None;
    for (&t, &a) in [terms.r1_sq, terms.r2_sq, terms.r3_sq, terms.c1_sq].iter().zip(alpha) {
        let s = tape.scale(t, a)?;
        pen = Some(match pen {
            None => s,
            Some(p) => tape.add(p, s)?,
        });
    }
    let pen = tape.scale(pen.expect("four terms"), mu)?;
    tape.add(terms.j, pen)
}

/// Squared violation `max(0, c)^2` of an inequality `c <= 0`.
pub fn record_inequality(tape: &mut Tape, c: Var) -> Result<Var, AutodiffError> {
    let r = tape.relu(c)?;
    tape.square(r)
}

/// Total loss and its breakdown for given parameters, penalty and weights.
pub fn total_loss(
    model: &FlowModel,
    params: &ParameterSet,
    mu: f64,
    alpha: &[f64; 4],
) -> Result<(f64, TermValues), Error> {
    let mut tape = Tape::new();
    let net = params.register(&mut tape);
    let vars = model.record(&mut tape, &net)?;
    let total = record_total(&mut tape, &vars.terms, mu, alpha)?;
    Ok((tape.scalar_value(total), TermValues::read(&tape, &vars.terms)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub lr: LrSchedule,
    pub penalty: PenaltySchedule,
    pub weights: DynamicWeights,
    /// 1-based epochs whose density is kept.
    pub snapshot_epochs: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50_000,
            seed: 0,
            lr: LrSchedule::default(),
            penalty: PenaltySchedule::default(),
            weights: DynamicWeights::default(),
            snapshot_epochs: vec![1, 1000, 10_000, 20_000, 30_000, 40_000, 50_000],
        }
    }
}

/// Result of a training run. `error` is set when the run stopped early; the
/// history then holds every completed epoch.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ParameterSet,
    pub history: Vec<LossBreakdown>,
    /// `(epoch, density)` in increasing epoch order.
    pub snapshots: Vec<(usize, Field)>,
    pub weights: DynamicWeights,
    pub error: Option<Error>,
}

fn max_abs(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn mean_abs(g: &[f64]) -> f64 {
    if g.is_empty() {
        0.0
    } else {
        g.iter().map(|v| v.abs()).sum::<f64>() / g.len() as f64
    }
}

/// Evaluates the loss and the unscaled per-term gradients.
pub struct EpochEval {
    pub terms: TermValues,
    pub rho: Vec<f64>,
    /// Gradients of `J, R1^2, R2^2, R3^2, C1^2`.
    pub grads: [Vec<f64>; 5],
}

pub fn evaluate_with_gradients(model: &FlowModel, params: &ParameterSet, tape: &mut Tape) -> Result<EpochEval, Error> {
    tape.clear();
    let net = params.register(tape);
    let vars = model.record(tape, &net)?;
    let terms = TermValues::read(tape, &vars.terms);
    let t = &vars.terms;
    let mut grads: [Vec<f64>; 5] = Default::default();
    if terms.first_non_finite().is_none() {
        for (g, root) in grads.iter_mut().zip([t.j, t.r1_sq, t.r2_sq, t.r3_sq, t.c1_sq]) {
            *g = tape.backward(root)?.flatten();
        }
    }
    Ok(EpochEval { terms, rho: tape.value(vars.rho).to_vec(), grads })
}

/// Runs the training loop: evaluate, record, Adam step, weight update.
pub fn train(model: &FlowModel, config: &TrainConfig) -> TrainOutcome {
    train_from(model, config, model.init_params(config.seed))
}

pub fn train_from(model: &FlowModel, config: &TrainConfig, mut params: ParameterSet) -> TrainOutcome {
    let snapshots_wanted: BTreeSet<usize> = config.snapshot_epochs.iter().copied().collect();
    let mut weights = config.weights;
    let mut adam = AdamState::new(params.len());
    let mut history = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();
    let mut tape = Tape::new();
    let mut total = vec![0.0; params.len()];

    for e in 0..config.epochs {
        let epoch = e + 1;
        let mu = config.penalty.value(e);
        let lr = config.lr.value(e, config.epochs);
        let eval = match evaluate_with_gradients(model, &params, &mut tape) {
            Ok(v) => v,
            Err(err) => return TrainOutcome { params, history, snapshots, weights, error: Some(err) },
        };
        if snapshots_wanted.contains(&epoch) {
            snapshots.push((epoch, Field::new(&model.grid, eval.rho.clone())));
        }
        let [gj, g1, g2, g3, g4] = &eval.grads;
        let stats = if g1.is_empty() {
            GradStats::default()
        } else {
            GradStats { reference_max: max_abs(g1).max(max_abs(g2)), mean: [mean_abs(g3), mean_abs(g4)] }
        };
        let record = LossBreakdown { epoch, terms: eval.terms, alpha: weights.alpha, mu, lr, stats };
        if let Some((term, value)) = eval.terms.first_non_finite() {
            let error = Error::NonFinite { epoch, term: term.to_string(), value };
            history.push(record);
            return TrainOutcome { params, history, snapshots, weights, error: Some(error) };
        }
        history.push(record);

        let a = weights.alpha;
        for (k, t) in total.iter_mut().enumerate() {
            *t = gj[k] + mu * (a[0] * g1[k] + a[1] * g2[k] + a[2] * g3[k] + a[3] * g4[k]);
        }
        if let Some(k) = total.iter().position(|g| !g.is_finite()) {
            let error = Error::NonFinite { epoch, term: format!("gradient component {k}"), value: total[k] };
            return TrainOutcome { params, history, snapshots, weights, error: Some(error) };
        }
        adam_step(&mut params.theta, &total, &mut adam, lr);
        weights.update(&stats);
    }
    TrainOutcome { params, history, snapshots, weights, error: None }
}
