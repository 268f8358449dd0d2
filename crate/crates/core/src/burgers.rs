//! Viscous Burgers' equation `u_t + u u_x - nu u_xx = 0` on `[-1, 1] x [0, 1]`
//! with `u(+-1, t) = 0` and `u(x, 0) = -sin(pi x)`. Boundary and initial data are
//! interpolated by the kernel correction, so the loss is the PDE residual alone.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::field::{BoundaryDataSet, ChannelData, FieldPlan, KernelCache, KernelConfig, MlpConfig, Network, ParameterSet};
use crate::grid::{Field, Grid, StencilOps};
use crate::linalg::CsrMatrix;
use crate::optim::{adam_step, AdamState, LrSchedule};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurgersConfig {
    pub nu: f64,
    /// Lattice points along `x` and `t`.
    pub nx: usize,
    pub nt: usize,
    /// Initial-condition samples on `t = 0`, and boundary samples per side.
    pub n_ic: usize,
    pub n_bc: usize,
    pub mlp: MlpConfig,
    pub kernel: KernelConfig,
    pub epochs: usize,
    pub seed: u64,
    pub lr: LrSchedule,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self {
            nu: 0.01 / PI,
            nx: 65,
            nt: 33,
            n_ic: 41,
            n_bc: 21,
            mlp: MlpConfig::new(2, &[20; 4], 1),
            kernel: KernelConfig::default(),
            epochs: 10_000,
            seed: 0,
            lr: LrSchedule::default(),
        }
    }
}

impl BurgersConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.nu > 0.0) {
            return Err(Error::Config(format!("viscosity must be positive, got {}", self.nu)));
        }
        if self.mlp.input_dim != 2 || self.mlp.output_dim != 1 {
            return Err(Error::Config("the Burgers network maps (x, t) to a single output".into()));
        }
        if self.n_ic < 2 || self.n_bc < 2 {
            return Err(Error::Config("need at least two initial and two boundary samples per side".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        self.kernel.validate()
    }

    pub fn grid(&self) -> Result<Grid, Error> {
        Grid::new(self.nx, self.nt, [-1.0, 1.0], [0.0, 1.0])
    }
}

pub fn initial_condition(x: f64) -> f64 {
    if x.abs() == 1.0 {
        0.0
    } else {
        -(PI * x).sin()
    }
}

/// Initial samples on `t = 0` (both corners included) and wall samples on
/// `x = +-1` for `t > 0`.
pub fn burgers_samples(n_ic: usize, n_bc: usize) -> BoundaryDataSet {
    let mut ch = ChannelData::default();
    for k in 0..n_ic {
        let x = -1.0 + 2.0 * k as f64 / (n_ic - 1) as f64;
        ch.points.push([x, 0.0]);
        ch.values.push(initial_condition(x));
    }
    for k in 1..n_bc {
        let t = k as f64 / (n_bc - 1) as f64;
        for x in [-1.0, 1.0] {
            ch.points.push([x, t]);
            ch.values.push(0.0);
        }
    }
    BoundaryDataSet::new(&["u"], vec![ch])
}

/// Space-time lattice, stencils and the conditioned-field plan.
#[derive(Clone, Debug)]
pub struct BurgersModel {
    pub grid: Grid,
    pub config: BurgersConfig,
    pub ops: StencilOps,
    pub data: BoundaryDataSet,
    plan: FieldPlan,
    /// Lattice points where the residual is collected: `t > 0`, `|x| < 1`.
    residual_sel: Arc<CsrMatrix>,
}

#[derive(Clone, Copy, Debug)]
pub struct BurgersVars {
    /// `u` on the lattice.
    pub u: Var,
    /// Residual on the lattice.
    pub r: Var,
    /// Mean squared residual over the collocation points.
    pub loss: Var,
    /// `u` at the boundary and initial samples.
    pub samples: Var,
}

impl BurgersModel {
    pub fn new(config: BurgersConfig) -> Result<Self, Error> {
        config.validate()?;
        let grid = config.grid()?;
        let data = burgers_samples(config.n_ic, config.n_bc);
        data.validate()?;
        let cache = KernelCache::build(&data, config.kernel)?;
        let mut query = grid.padded_coords();
        query.extend(&data.channels[0].points);
        let plan = FieldPlan::new(&query, &cache);
        let idx: Vec<usize> = (1..grid.ny())
            .flat_map(|j| (1..grid.nx() - 1).map(move |i| (i, j)))
            .map(|(i, j)| grid.index(i, j))
            .collect();
        let residual_sel = Arc::new(CsrMatrix::selection(grid.len(), &idx));
        Ok(Self { ops: StencilOps::new(&grid), grid, config, data, plan, residual_sel })
    }

    pub fn init_params(&self) -> ParameterSet {
        ParameterSet::glorot(&self.config.mlp, self.config.seed)
    }

    pub fn record(&self, tape: &mut Tape, net: &Network) -> Result<BurgersVars, AutodiffError> {
        let z = self.plan.forward(tape, net)?[0];
        let n_pad = self.grid.padded_len();
        let padded = tape.rows(z, 0, n_pad)?;
        let samples = tape.rows(z, n_pad, self.data.channels[0].len())?;
        let u = tape.sparse_map(&self.ops.restrict, padded)?;
        let ut = tape.sparse_map(&self.ops.dy, padded)?;
        let ux = tape.sparse_map(&self.ops.dx, padded)?;
        let uxx = tape.sparse_map(&self.ops.dxx, padded)?;
        let adv = tape.mul(u, ux)?;
        let diff = tape.scale(uxx, self.config.nu)?;
        let r = tape.add(ut, adv)?;
        let r = tape.sub(r, diff)?;
        let rc = tape.sparse_map(&self.residual_sel, r)?;
        let sq = tape.square(rc)?;
        let loss = tape.mean(sq)?;
        Ok(BurgersVars { u, r, loss, samples })
    }

    /// Largest deviation from the boundary and initial data.
    pub fn sample_error(&self, tape: &Tape, vars: &BurgersVars) -> f64 {
        tape.value(vars.samples)
            .iter()
            .zip(&self.data.channels[0].values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `dx dt sum r^2` over the collocation points.
    pub fn integrated_residual(&self, mean_sq: f64) -> f64 {
        let n = (self.grid.nx() - 2) * (self.grid.ny() - 1);
        mean_sq * n as f64 * self.grid.weight()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BurgersRecord {
    pub epoch: usize,
    pub loss: f64,
    pub residual: f64,
    pub sample_error: f64,
    pub lr: f64,
}

#[derive(Debug)]
pub struct BurgersOutcome {
    pub params: ParameterSet,
    pub history: Vec<BurgersRecord>,
    /// `u` on the lattice at the final parameters.
    pub u: Field,
    pub residual: Field,
    pub grid: Grid,
    pub error: Option<Error>,
}

/// Trains the Burgers field with plain Adam on the residual loss.
pub fn burgers_demo(config: &BurgersConfig) -> Result<BurgersOutcome, Error> {
    let model = BurgersModel::new(config.clone())?;
    let mut params = model.init_params();
    let mut adam = AdamState::new(params.len());
    let mut history = Vec::with_capacity(config.epochs);
    let mut tape = Tape::new();
    let mut error = None;

    for e in 0..config.epochs {
        tape.clear();
        let net = params.register(&mut tape);
        let vars = model.record(&mut tape, &net)?;
        let loss = tape.scalar_value(vars.loss);
        let lr = config.lr.value(e, config.epochs);
        history.push(BurgersRecord {
            epoch: e + 1,
            loss,
            residual: model.integrated_residual(loss),
            sample_error: model.sample_error(&tape, &vars),
            lr,
        });
        if !loss.is_finite() {
            error = Some(Error::NonFinite { epoch: e + 1, term: "Burgers residual".into(), value: loss });
            break;
        }
        let grad = tape.backward(vars.loss)?.flatten();
        adam_step(&mut params.theta, &grad, &mut adam, lr);
    }

    tape.clear();
    let net = params.register(&mut tape);
    let vars = model.record(&mut tape, &net)?;
    let grid = model.grid.clone();
    Ok(BurgersOutcome {
        u: Field::new(&grid, tape.value(vars.u).to_vec()),
        residual: Field::new(&grid, tape.value(vars.r).to_vec()),
        params,
        history,
        grid,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BurgersConfig {
        BurgersConfig { nx: 17, nt: 9, n_ic: 17, n_bc: 9, mlp: MlpConfig::new(2, &[8, 8], 1), epochs: 20, ..Default::default() }
    }

    #[test]
    fn samples_cover_walls_and_initial_line() {
        let d = burgers_samples(41, 21);
        let ch = &d.channels[0];
        assert_eq!(ch.len(), 41 + 2 * 20);
        assert!(d.validate().is_ok());
        let mid = ch.points.iter().position(|p| *p == [0.0, 0.0]).unwrap();
        assert_eq!(ch.values[mid], 0.0);
        let q = ch.points.iter().position(|p| *p == [-0.5, 0.0]).unwrap();
        assert_eq!(ch.values[q], 1.0);
        assert!(ch.points.iter().zip(&ch.values).all(|(p, &v)| p[0].abs() < 1.0 || v == 0.0));
    }

    #[test]
    fn random_networks_reproduce_the_data() {
        let model = BurgersModel::new(tiny()).unwrap();
        for seed in 0..5 {
            let p = ParameterSet::glorot(&model.config.mlp, seed);
            let mut tape = Tape::new();
            let net = p.register(&mut tape);
            let vars = model.record(&mut tape, &net).unwrap();
            assert!(model.sample_error(&tape, &vars) <= 1e-6);
        }
    }

    #[test]
    fn loss_averages_the_collocation_residual() {
        let model = BurgersModel::new(tiny()).unwrap();
        let p = ParameterSet::zeros(&model.config.mlp);
        let mut tape = Tape::new();
        let net = p.register(&mut tape);
        let vars = model.record(&mut tape, &net).unwrap();
        let r = tape.value(vars.r);
        assert!(r.iter().all(|v| v.is_finite()));
        // the loss only sees t > 0, |x| < 1
        let by_hand: f64 = (1..model.grid.ny())
            .flat_map(|j| (1..model.grid.nx() - 1).map(move |i| (i, j)))
            .map(|(i, j)| r[model.grid.index(i, j)].powi(2))
            .sum::<f64>()
            / ((model.grid.nx() - 2) * (model.grid.ny() - 1)) as f64;
        assert!((tape.scalar_value(vars.loss) - by_hand).abs() <= 1e-12 * by_hand.max(1.0));
    }

    #[test]
    fn short_training_lowers_the_loss() {
        let out = burgers_demo(&BurgersConfig { epochs: 60, lr: LrSchedule { base: 3e-3, ..Default::default() }, ..tiny() }).unwrap();
        assert!(out.error.is_none());
        assert_eq!(out.history.len(), 60);
        assert!(out.history.last().unwrap().loss < out.history[0].loss);
        assert!(out.history.iter().all(|h| h.sample_error <= 1e-6));
    }

    #[test]
    fn rejects_bad_viscosity() {
        assert!(BurgersModel::new(BurgersConfig { nu: 0.0, ..tiny() }).is_err());
    }
}
