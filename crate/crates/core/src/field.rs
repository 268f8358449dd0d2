//! Multi-output field model: a shared MLP mean corrected per channel by a
//! kernel-weighted interpolant of boundary data, plus the density projection.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, AutodiffError, Tape, Var};
use crate::linalg::{Cholesky, CsrMatrix, Matrix};
use crate::Error;

/// Names of the four output channels, in column order.
pub const CHANNELS: [&str; 4] = ["u", "v", "p", "rho"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Multiplier on the Glorot range of the output layer; 0 gives a zero mean at init.
    #[serde(default = "one")]
    pub output_init_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { input_dim: 2, hidden: vec![64; 4], output_dim: 4, output_init_scale: 1.0 }
    }
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        Self { input_dim, hidden: hidden.to_vec(), output_dim, output_init_scale: 1.0 }
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend(&self.hidden);
        d.push(self.output_dim);
        d
    }

    pub fn num_params(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

/// Flat trainable vector with the per-layer layout `[W0, b0, W1, b1, ...]`,
/// each `W` stored row-major as `fan_in x fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub theta: Vec<f64>,
    layout: Vec<LayerLayout>,
}

impl ParameterSet {
    pub fn zeros(cfg: &MlpConfig) -> Self {
        let dims = cfg.dims();
        let mut layout = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for w in dims.windows(2) {
            layout.push(LayerLayout { fan_in: w[0], fan_out: w[1], weights: off, biases: off + w[0] * w[1] });
            off += w[0] * w[1] + w[1];
        }
        Self { theta: vec![0.0; off], layout }
    }

    /// Glorot-uniform weights and zero biases from a seeded ChaCha stream.
    pub fn glorot(cfg: &MlpConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = p.layout.len() - 1;
        for (l, lay) in p.layout.iter().enumerate() {
            let mut limit = (6.0 / (lay.fan_in + lay.fan_out) as f64).sqrt();
            if l == last {
                limit *= cfg.output_init_scale;
            }
            for w in &mut p.theta[lay.weights..lay.biases] {
                *w = if limit > 0.0 { rng.gen_range(-limit..limit) } else { 0.0 };
            }
        }
        p
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), self.theta.len());
        Self { theta, layout: self.layout.clone() }
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Registers every layer as parameter leaves; gradients flatten back into
    /// the order of `theta`.
    pub fn register(&self, tape: &mut Tape) -> Network {
        let layers = self
            .layout
            .iter()
            .map(|l| {
                let w = tape.param(self.theta[l.weights..l.biases].to_vec(), l.fan_in, l.fan_out);
                let b = tape.param(self.theta[l.biases..l.biases + l.fan_out].to_vec(), 1, l.fan_out);
                (w, b)
            })
            .collect();
        Network { layers }
    }
}

/// Tape handles for the layers of a registered [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<(Var, Var)>,
}

/// MLP mean `m(x)` on a batch of points (`N x input_dim` constant), tanh hidden layers.
pub fn mean_forward(tape: &mut Tape, net: &Network, points: Var) -> Result<Var, AutodiffError> {
    let mut h = points;
    let last = net.layers.len() - 1;
    for (l, &(w, b)) in net.layers.iter().enumerate() {
        h = tape.matmul(h, w)?;
        h = tape.add_row(h, b)?;
        if l != last {
            h = tape.tanh(h)?;
        }
    }
    Ok(h)
}

pub fn points_constant(tape: &mut Tape, points: &[[f64; 2]]) -> Var {
    tape.constant(points.iter().flatten().copied().collect(), points.len(), 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub phi: [f64; 2],
    pub delta: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { phi: [100.0, 100.0], delta: 1e-8 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.phi.iter().all(|&p| p > 0.0) && self.delta >= 0.0) {
            return Err(Error::Config(format!("kernel needs phi > 0 and delta >= 0, got {self:?}")));
        }
        Ok(())
    }

    /// Cross-covariance `exp(-sum phi_d (x_d - y_d)^2)`, without the nugget.
    #[inline]
    pub fn cov(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let (a, b) = (x[0] - y[0], x[1] - y[1]);
        (-(self.phi[0] * a * a + self.phi[1] * b * b)).exp()
    }
}

/// Kernel value including the nugget on coincident points.
pub fn kernel_eval(x: [f64; 2], y: [f64; 2], cfg: &KernelConfig) -> f64 {
    cfg.cov(x, y) + if x == y { cfg.delta } else { 0.0 }
}

/// Logistic projection of the intermediate density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub slope: f64,
    pub center: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { slope: 12.0, center: 0.5 }
    }
}

impl ProjectionConfig {
    pub fn project(&self, z: f64) -> f64 {
        autodiff::logistic(self.slope * (z - self.center))
    }

    /// Pre-image of `rho` under the projection.
    pub fn inverse(&self, rho: f64) -> f64 {
        self.center + (rho / (1.0 - rho)).ln() / self.slope
    }

    pub fn record(&self, tape: &mut Tape, z: Var) -> Result<Var, AutodiffError> {
        let s = tape.offset(z, -self.center)?;
        let s = tape.scale(s, self.slope)?;
        tape.logistic(s)
    }
}

/// `g(z) = 1 / (1 + exp(-12 (z - 0.5)))`.
pub fn project(z: f64) -> f64 {
    ProjectionConfig::default().project(z)
}

/// Known values of one channel at boundary (or pin) locations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChannelData {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

impl ChannelData {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Conditioning data for every output channel; an empty channel is pure mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryDataSet {
    pub channels: Vec<ChannelData>,
    pub names: Vec<String>,
}

impl BoundaryDataSet {
    pub fn new(names: &[&str], channels: Vec<ChannelData>) -> Self {
        assert_eq!(names.len(), channels.len());
        Self { channels, names: names.iter().map(|s| s.to_string()).collect() }
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, ch) in self.names.iter().zip(&self.channels) {
            if ch.points.len() != ch.values.len() {
                return Err(Error::Config(format!("channel `{name}`: {} points but {} values", ch.points.len(), ch.values.len())));
            }
            for (a, p) in ch.points.iter().enumerate() {
                if ch.points[..a].contains(p) {
                    return Err(Error::Config(format!("channel `{name}`: duplicate sample at {p:?}")));
                }
                if !(p[0].is_finite() && p[1].is_finite() && ch.values[a].is_finite()) {
                    return Err(Error::Config(format!("channel `{name}`: non-finite sample at index {a}")));
                }
            }
        }
        Ok(())
    }
}

/// Per-channel Cholesky factors of `K(X_i, X_i) + delta I`, built once.
#[derive(Clone, Debug)]
pub struct KernelCache {
    pub kernel: KernelConfig,
    data: BoundaryDataSet,
    factors: Vec<Option<Cholesky>>,
    factorizations: usize,
}

impl KernelCache {
    pub fn build(data: &BoundaryDataSet, kernel: KernelConfig) -> Result<Self, Error> {
        kernel.validate()?;
        data.validate()?;
        let mut factors = Vec::with_capacity(data.channels.len());
        let mut factorizations = 0;
        for (name, ch) in data.names.iter().zip(&data.channels) {
            if ch.is_empty() {
                factors.push(None);
                continue;
            }
            let k = Matrix::from_fn(ch.len(), ch.len(), |r, c| kernel_eval(ch.points[r], ch.points[c], &kernel));
            let chol = Cholesky::factor(&k).map_err(|e| Error::Conditioning {
                variable: name.clone(),
                index: e.index,
                pivot: e.pivot,
            })?;
            factorizations += 1;
            factors.push(Some(chol));
        }
        Ok(Self { kernel, data: data.clone(), factors, factorizations })
    }

    pub fn data(&self) -> &BoundaryDataSet {
        &self.data
    }

    pub fn factor(&self, channel: usize) -> Option<&Cholesky> {
        self.factors[channel].as_ref()
    }

    /// Number of factorizations performed since construction.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// `k(Q, X_i) K_i^{-1}` for a query set, as a `|Q| x n_i` matrix.
    pub fn weights(&self, channel: usize, query: &[[f64; 2]]) -> Option<Matrix> {
        let chol = self.factors[channel].as_ref()?;
        let pts = &self.data.channels[channel].points;
        let n = pts.len();
        let mut out = Matrix::zeros(query.len(), n);
        let mut row = vec![0.0; n];
        for (q, x) in query.iter().enumerate() {
            for (r, p) in row.iter_mut().zip(pts) {
                *r = self.kernel.cov(*x, *p);
            }
            chol.solve_in_place(&mut row);
            for (c, v) in row.iter().enumerate() {
                out.set(q, c, *v);
            }
        }
        Some(out)
    }
}

/// Everything needed to evaluate the conditioned field on a fixed query set,
/// precomputed so each epoch only runs the network and a few linear maps.
#[derive(Clone, Debug)]
pub struct FieldPlan {
    /// Query points followed by the distinct boundary points of all channels.
    batch: Vec<[f64; 2]>,
    n_query: usize,
    query_sel: Arc<CsrMatrix>,
    channels: Vec<ChannelPlan>,
}

#[derive(Clone, Debug)]
struct ChannelPlan {
    /// Batch rows holding the channel's boundary samples.
    select: Option<Arc<CsrMatrix>>,
    weights: Option<Arc<Matrix>>,
    values: Vec<f64>,
}

impl FieldPlan {
    pub fn new(query: &[[f64; 2]], cache: &KernelCache) -> Self {
        let mut extra: Vec<[f64; 2]> = Vec::new();
        let rows: Vec<Vec<usize>> = cache
            .data
            .channels
            .iter()
            .map(|ch| {
                ch.points
                    .iter()
                    .map(|p| {
                        let k = extra.iter().position(|e| e == p).unwrap_or_else(|| {
                            extra.push(*p);
                            extra.len() - 1
                        });
                        query.len() + k
                    })
                    .collect()
            })
            .collect();
        let total = query.len() + extra.len();
        let channels = rows
            .iter()
            .enumerate()
            .map(|(c, r)| ChannelPlan {
                select: (!r.is_empty()).then(|| Arc::new(CsrMatrix::selection(total, r))),
                weights: cache.weights(c, query).map(Arc::new),
                values: cache.data.channels[c].values.clone(),
            })
            .collect();
        let mut batch = query.to_vec();
        batch.extend(extra);
        let query_idx: Vec<usize> = (0..query.len()).collect();
        Self {
            n_query: query.len(),
            query_sel: Arc::new(CsrMatrix::selection(total, &query_idx)),
            batch,
            channels,
        }
    }

    pub fn batch(&self) -> &[[f64; 2]] {
        &self.batch
    }

    pub fn n_query(&self) -> usize {
        self.n_query
    }

    /// Conditioned channels at the query points, each `n_query x 1`.
    /// The density channel is returned before projection.
    pub fn forward(&self, tape: &mut Tape, net: &Network) -> Result<Vec<Var>, AutodiffError> {
        let x = points_constant(tape, &self.batch);
        let m = mean_forward(tape, net, x)?;
        self.condition(tape, m)
    }

    /// Applies the boundary correction to precomputed network outputs on the batch.
    pub fn condition(&self, tape: &mut Tape, m: Var) -> Result<Vec<Var>, AutodiffError> {
        let mut out = Vec::with_capacity(self.channels.len());
        for (c, ch) in self.channels.iter().enumerate() {
            let col = tape.column(m, c)?;
            let mq = tape.sparse_map(&self.query_sel, col)?;
            let z = match (&ch.select, &ch.weights) {
                (Some(sel), Some(w)) => {
                    let mb = tape.sparse_map(sel, col)?;
                    let u = tape.constant(ch.values.clone(), ch.values.len(), 1);
                    let r = tape.sub(u, mb)?;
                    let corr = tape.dense_map(w, r)?;
                    tape.add(mq, corr)?
                }
                _ => mq,
            };
            out.push(z);
        }
        Ok(out)
    }
}

/// Conditioned field at arbitrary points as plain values: rows of `[u, v, p, rho]`
/// (as many columns as the network has outputs, density projected when present).
pub fn conditional_field(
    points: &[[f64; 2]],
    params: &ParameterSet,
    cache: &KernelCache,
    projection: &ProjectionConfig,
) -> Result<Vec<Vec<f64>>, Error> {
    let plan = FieldPlan::new(points, cache);
    let mut tape = Tape::new();
    let net = params.register(&mut tape);
    let z = plan.forward(&mut tape, &net)?;
    let n_out = z.len();
    let cols: Vec<Vec<f64>> = z.iter().map(|&v| tape.value(v).to_vec()).collect();
    Ok((0..points.len())
        .map(|r| {
            (0..n_out)
                .map(|c| if c == 3 { projection.project(cols[c][r]) } else { cols[c][r] })
                .collect()
        })
        .collect())
}
