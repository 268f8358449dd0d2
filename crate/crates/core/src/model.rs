//! One forward evaluation of the flow problem: conditioned fields on the padded
//! lattice, Brinkman residuals, objective and volume constraint.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::field::{FieldPlan, KernelCache, KernelConfig, MlpConfig, Network, ParameterSet, ProjectionConfig};
use crate::grid::{Field, GhostMode, Grid, PaddedField, StencilOps};
use crate::physics::{record_flow_terms, FlowTerms};
use crate::problems::{boundary_samples, ProblemSpec};
use crate::Error;

/// Model-side settings shared by every flow run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mlp: MlpConfig,
    pub kernel: KernelConfig,
    pub projection: ProjectionConfig,
    pub ghost: GhostMode,
    /// Boundary samples per side.
    pub n_bc: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mlp: MlpConfig::default(),
            kernel: KernelConfig::default(),
            projection: ProjectionConfig::default(),
            ghost: GhostMode::default(),
            n_bc: 25,
        }
    }
}

/// Immutable per-run setup: lattice, stencils, kernel caches and the query plan.
#[derive(Clone, Debug)]
pub struct FlowModel {
    pub grid: Grid,
    pub problem: ProblemSpec,
    pub config: ModelConfig,
    pub ops: StencilOps,
    pub cache: KernelCache,
    plan: FieldPlan,
}

/// Tape handles of one evaluation.
#[derive(Clone, Copy, Debug)]
pub struct FlowVars {
    /// Padded `u, v, p` columns.
    pub padded: [Var; 3],
    /// Projected density at interior points.
    pub rho: Var,
    pub terms: FlowTerms,
}

/// Plain-value fields of one evaluation.
#[derive(Clone, Debug)]
pub struct FlowFields {
    pub u: PaddedField,
    pub v: PaddedField,
    pub p: PaddedField,
    pub rho: Field,
    pub r1: Field,
    pub r2: Field,
    pub r3: Field,
}

impl FlowModel {
    pub fn new(problem: ProblemSpec, grid: Grid, config: ModelConfig) -> Result<Self, Error> {
        problem.validate()?;
        if config.mlp.input_dim != 2 || config.mlp.output_dim != 4 {
            return Err(Error::Config(format!(
                "flow network must map 2 inputs to 4 outputs, got {} -> {}",
                config.mlp.input_dim, config.mlp.output_dim
            )));
        }
        let data = boundary_samples(&problem, config.n_bc, &config.projection)?;
        let cache = KernelCache::build(&data, config.kernel)?;
        let query = match config.ghost {
            GhostMode::ModelEvaluation => grid.padded_coords(),
            GhostMode::Reflection => grid.interior_coords(),
        };
        let plan = FieldPlan::new(&query, &cache);
        Ok(Self { ops: StencilOps::new(&grid), grid, problem, config, cache, plan })
    }

    pub fn init_params(&self, seed: u64) -> ParameterSet {
        ParameterSet::glorot(&self.config.mlp, seed)
    }

    /// Records the forward pass for registered network parameters.
    pub fn record(&self, tape: &mut Tape, net: &Network) -> Result<FlowVars, AutodiffError> {
        let z = self.plan.forward(tape, net)?;
        let mut padded = [z[0], z[1], z[2]];
        let rho_tilde = match self.config.ghost {
            GhostMode::ModelEvaluation => tape.sparse_map(&self.ops.restrict, z[3])?,
            GhostMode::Reflection => {
                for p in &mut padded {
                    *p = tape.sparse_map(&self.ops.reflect, *p)?;
                }
                z[3]
            }
        };
        let rho = self.config.projection.record(tape, rho_tilde)?;
        let terms = record_flow_terms(tape, &self.ops, &self.grid, padded, rho, &self.problem.material, self.problem.volume)?;
        Ok(FlowVars { padded, rho, terms })
    }

    /// Reads the fields of a recorded evaluation off the tape.
    pub fn fields(&self, tape: &Tape, vars: &FlowVars) -> FlowFields {
        let pad = |v: Var| PaddedField::new(&self.grid, tape.value(v).to_vec());
        let int = |v: Var| Field::new(&self.grid, tape.value(v).to_vec());
        FlowFields {
            u: pad(vars.padded[0]),
            v: pad(vars.padded[1]),
            p: pad(vars.padded[2]),
            rho: int(vars.rho),
            r1: int(vars.terms.r1),
            r2: int(vars.terms.r2),
            r3: int(vars.terms.r3),
        }
    }

    /// Fields for a parameter vector, without gradients.
    pub fn evaluate(&self, params: &ParameterSet) -> Result<(FlowFields, TermValues), Error> {
        let mut tape = Tape::new();
        let net = params.register(&mut tape);
        let vars = self.record(&mut tape, &net)?;
        Ok((self.fields(&tape, &vars), TermValues::read(&tape, &vars.terms)))
    }
}

/// Unscaled loss ingredients of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermValues {
    pub j: f64,
    pub r1_sq: f64,
    pub r2_sq: f64,
    pub r3_sq: f64,
    pub c1: f64,
    pub c1_sq: f64,
}

impl TermValues {
    pub fn read(tape: &Tape, t: &FlowTerms) -> Self {
        Self {
            j: tape.scalar_value(t.j),
            r1_sq: tape.scalar_value(t.r1_sq),
            r2_sq: tape.scalar_value(t.r2_sq),
            r3_sq: tape.scalar_value(t.r3_sq),
            c1: tape.scalar_value(t.c1),
            c1_sq: tape.scalar_value(t.c1_sq),
        }
    }

    /// Name and value of the first non-finite term.
    pub fn first_non_finite(&self) -> Option<(&'static str, f64)> {
        [("J", self.j), ("R1^2", self.r1_sq), ("R2^2", self.r2_sq), ("R3^2", self.r3_sq), ("C1^2", self.c1_sq)]
            .into_iter()
            .find(|(_, v)| !v.is_finite())
    }
}
