//! Run orchestration: one training run with its artifacts, and seed sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::burgers::{burgers_demo, BurgersConfig};
use crate::grid::{Field, Grid};
use crate::io::{save_burgers_history, save_field, save_history, save_pgm, save_vector, KeyValues};
use crate::model::{FlowModel, ModelConfig, TermValues};
use crate::optim::{train, TrainConfig};
use crate::problems::{build_problem, BenchmarkId, ProblemSpec};
use crate::Error;

/// Where the flow problem comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemSource {
    Benchmark(BenchmarkId),
    File(PathBuf),
}

impl ProblemSource {
    pub fn load(&self) -> Result<ProblemSpec, Error> {
        match self {
            ProblemSource::Benchmark(id) => build_problem(*id),
            ProblemSource::File(path) => ProblemSpec::load(path),
        }
    }

    fn label(&self) -> String {
        match self {
            ProblemSource::Benchmark(id) => id.name().to_string(),
            ProblemSource::File(path) => path.display().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub nx: usize,
    pub ny: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Number of seeds in a sweep, starting at `seed`.
    pub sweep: usize,
    pub snapshot_epochs: Vec<usize>,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    /// Schedules and weights; `epochs`, `seed` and `snapshot_epochs` are taken from the fields above.
    pub train: TrainConfig,
}

/// Default snapshot set for a run of `epochs` epochs: 1, 1000, every 10000, and the last.
pub fn default_snapshot_epochs(epochs: usize) -> Vec<usize> {
    let mut s: Vec<usize> = [1, 1000].into_iter().chain((1..).map(|k| k * 10_000).take_while(|&e| e <= epochs)).collect();
    s.push(epochs);
    s.retain(|&e| e <= epochs);
    s.sort_unstable();
    s.dedup();
    s
}

impl RunConfig {
    pub fn new(problem: ProblemSource, out_dir: impl Into<PathBuf>) -> Self {
        let train = TrainConfig::default();
        Self {
            problem,
            nx: 100,
            ny: 100,
            epochs: train.epochs,
            seed: 0,
            sweep: 10,
            snapshot_epochs: default_snapshot_epochs(train.epochs),
            out_dir: out_dir.into(),
            model: ModelConfig::default(),
            train,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.nx < 16 || self.ny < 16 {
            return Err(Error::Config(format!("grid must be at least 16x16, got {}x{}", self.nx, self.ny)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.sweep == 0 {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        if let Some(&e) = self.snapshot_epochs.iter().find(|&&e| e == 0 || e > self.epochs) {
            return Err(Error::Config(format!("snapshot epoch {e} outside 1..={}", self.epochs)));
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { epochs: self.epochs, seed, snapshot_epochs: self.snapshot_epochs.clone(), ..self.train.clone() }
    }

    pub fn grid(&self) -> Result<Grid, Error> {
        Grid::unit_square(self.nx, self.ny)
    }

    pub fn build_model(&self) -> Result<FlowModel, Error> {
        self.validate()?;
        FlowModel::new(self.problem.load()?, self.grid()?, self.model.clone())
    }

    fn echo(&self, kv: &mut KeyValues) {
        let hidden: Vec<String> = self.model.mlp.hidden.iter().map(usize::to_string).collect();
        let snaps: Vec<String> = self.snapshot_epochs.iter().map(usize::to_string).collect();
        kv.push("problem", self.problem.label());
        kv.push("nx", self.nx);
        kv.push("ny", self.ny);
        kv.push("epochs", self.epochs);
        kv.push("snapshot_epochs", snaps.join(","));
        kv.push("hidden", hidden.join("x"));
        kv.push("ghost", format!("{:?}", self.model.ghost));
        kv.push("n_bc", self.model.n_bc);
        kv.push("threads", 1);
    }
}

/// File names of one seed's artifacts.
#[derive(Clone, Debug)]
pub struct ArtifactPaths {
    dir: PathBuf,
    seed: u64,
}

impl ArtifactPaths {
    pub fn new(dir: &Path, seed: u64) -> Self {
        Self { dir: dir.to_path_buf(), seed }
    }

    fn file(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}_s{}.{ext}", self.seed))
    }

    pub fn history(&self) -> PathBuf {
        self.file("history", "csv")
    }

    pub fn snapshot(&self, epoch: usize) -> PathBuf {
        self.file(&format!("density_e{epoch}"), "csv")
    }

    /// Final field `name` (`u`, `v`, `p`, `rho`, `r1`, `r2`, `r3`).
    pub fn field(&self, name: &str) -> PathBuf {
        self.file(name, "csv")
    }

    pub fn image(&self) -> PathBuf {
        self.file("density", "pgm")
    }

    pub fn summary(&self) -> PathBuf {
        self.file("summary", "txt")
    }

    pub fn theta(&self) -> PathBuf {
        self.file("theta", "txt")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    /// Terms at the final parameters.
    pub terms: TermValues,
    pub seconds: f64,
    pub epochs_run: usize,
    pub echo: KeyValues,
}

impl RunSummary {
    pub fn j(&self) -> f64 {
        self.terms.j
    }

    pub fn abs_c1(&self) -> f64 {
        self.terms.c1.abs()
    }

    pub fn to_key_values(&self, status: &str) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.push("status", status);
        kv.push("seed", self.seed);
        kv.push("J", format!("{:.16e}", self.terms.j));
        kv.push("abs_C1", format!("{:.16e}", self.abs_c1()));
        kv.push("R1sq", format!("{:.16e}", self.terms.r1_sq));
        kv.push("R2sq", format!("{:.16e}", self.terms.r2_sq));
        kv.push("R3sq", format!("{:.16e}", self.terms.r3_sq));
        kv.push("epochs_run", self.epochs_run);
        kv.push("seconds", format!("{:.3}", self.seconds));
        kv.0.extend(self.echo.0.iter().cloned());
        kv
    }
}

/// A run that stopped early; its partial artifacts are on disk.
#[derive(Debug)]
pub struct RunFailure {
    pub summary: Option<RunSummary>,
    pub error: Error,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self { summary: None, error }
    }
}

/// Trains one seed and writes its artifacts into `config.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunSummary, RunFailure> {
    let model = config.build_model()?;
    run_seed(&model, config, config.seed)
}

pub fn run_seed(model: &FlowModel, config: &RunConfig, seed: u64) -> Result<RunSummary, RunFailure> {
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", config.out_dir.display()))))?;
    let paths = ArtifactPaths::new(&config.out_dir, seed);
    let start = Instant::now();
    let outcome = train(model, &config.train_config(seed));
    let seconds = start.elapsed().as_secs_f64();

    save_history(&paths.history(), &outcome.history)?;
    for (epoch, rho) in &outcome.snapshots {
        save_field(&paths.snapshot(*epoch), rho, &model.grid)?;
    }
    save_vector(&paths.theta(), &outcome.params.theta)?;

    let mut echo = KeyValues::default();
    config.echo(&mut echo);
    let epochs_run = outcome.history.len();
    let evaluated = model.evaluate(&outcome.params);

    match (outcome.error, evaluated) {
        (None, Ok((fields, terms))) => {
            let grid = &model.grid;
            let finals: [(&str, Field); 7] = [
                ("u", fields.u.interior()),
                ("v", fields.v.interior()),
                ("p", fields.p.interior()),
                ("rho", fields.rho.clone()),
                ("r1", fields.r1),
                ("r2", fields.r2),
                ("r3", fields.r3),
            ];
            for (name, f) in &finals {
                save_field(&paths.field(name), f, grid)?;
            }
            save_pgm(&paths.image(), &fields.rho)?;
            let summary = RunSummary { seed, terms, seconds, epochs_run, echo };
            summary.to_key_values("ok").save(&paths.summary())?;
            Ok(summary)
        }
        (err, evaluated) => {
            let (summary, error) = match (err, evaluated) {
                (Some(e), Ok((_, terms))) => (Some(RunSummary { seed, terms, seconds, epochs_run, echo: echo.clone() }), e),
                (Some(e), Err(_)) | (None, Err(e)) => (None, e),
                (None, Ok(_)) => unreachable!(),
            };
            let mut kv = match &summary {
                Some(s) => s.to_key_values("aborted"),
                None => {
                    let mut kv = KeyValues::default();
                    kv.push("status", "aborted");
                    kv.push("seed", seed);
                    kv.push("epochs_run", epochs_run);
                    kv.0.extend(echo.0);
                    kv
                }
            };
            kv.push("error", error.to_string().replace('\n', " "));
            kv.save(&paths.summary())?;
            Err(RunFailure { summary, error })
        }
    }
}

/// Trains the Burgers demo and writes its history, final `u` and residual.
pub fn run_burgers(config: &BurgersConfig, out_dir: &Path) -> Result<KeyValues, RunFailure> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out_dir.display()))))?;
    let paths = ArtifactPaths::new(out_dir, config.seed);
    let start = Instant::now();
    let out = burgers_demo(config)?;
    let seconds = start.elapsed().as_secs_f64();
    save_burgers_history(&paths.file("burgers_history", "csv"), &out.history)?;
    save_field(&paths.field("burgers_u"), &out.u, &out.grid)?;
    save_field(&paths.field("burgers_residual"), &out.residual, &out.grid)?;
    save_vector(&paths.theta(), &out.params.theta)?;

    let mut kv = KeyValues::default();
    kv.push("status", if out.error.is_none() { "ok" } else { "aborted" });
    kv.push("seed", config.seed);
    if let (Some(first), Some(last)) = (out.history.first(), out.history.last()) {
        kv.push("residual_first", format!("{:.16e}", first.residual));
        kv.push("residual_last", format!("{:.16e}", last.residual));
    }
    let worst = out.history.iter().fold(0.0f64, |m, h| m.max(h.sample_error));
    kv.push("max_sample_error", format!("{worst:.3e}"));
    kv.push("epochs_run", out.history.len());
    kv.push("seconds", format!("{seconds:.3}"));
    kv.push("problem", "burgers-demo");
    kv.push("nu", format!("{:.16e}", config.nu));
    kv.push("nx", config.nx);
    kv.push("nt", config.nt);
    kv.push("epochs", config.epochs);
    kv.push("threads", 1);
    if let Some(e) = &out.error {
        kv.push("error", e.to_string().replace('\n', " "));
    }
    kv.save(&paths.summary())?;
    match out.error {
        None => Ok(kv),
        Some(error) => Err(RunFailure { summary: None, error }),
    }
}

/// Mean, median, population standard deviation and range of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SweepStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Some(Self { count: n, mean, median, std: var.sqrt(), min: sorted[0], max: sorted[n - 1] })
    }
}

#[derive(Debug)]
pub struct SweepReport {
    pub runs: Vec<(u64, Result<RunSummary, RunFailure>)>,
    /// Statistics of the final objective over successful seeds.
    pub stats: Option<SweepStats>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|(_, r)| r.is_err()).count()
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.push("seeds", self.runs.len());
        kv.push("succeeded", self.runs.len() - self.failures());
        kv.push("failed", self.failures());
        if let Some(s) = &self.stats {
            for (k, v) in [("J_mean", s.mean), ("J_median", s.median), ("J_std", s.std), ("J_min", s.min), ("J_max", s.max)] {
                kv.push(k, format!("{v:.16e}"));
            }
        }
        for (seed, r) in &self.runs {
            match r {
                Ok(s) => kv.push(&format!("J_s{seed}"), format!("{:.16e}", s.j())),
                Err(f) => kv.push(&format!("error_s{seed}"), f.error.to_string().replace('\n', " ")),
            }
        }
        kv
    }
}

/// Runs `n` seeds starting at `config.seed`, each with its own seed-suffixed artifacts.
pub fn sweep(config: &RunConfig, n: usize) -> Result<SweepReport, Error> {
    if n == 0 {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let model = config.build_model()?;
    let runs: Vec<_> = (0..n as u64).map(|k| config.seed + k).map(|seed| (seed, run_seed(&model, config, seed))).collect();
    let js: Vec<f64> = runs.iter().filter_map(|(_, r)| r.as_ref().ok().map(RunSummary::j)).collect();
    let report = SweepReport { stats: SweepStats::from_values(&js), runs };
    report.to_key_values().save(&config.out_dir.join("sweep.txt"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_definitions() {
        let s = SweepStats::from_values(&[7.5]).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max, s.std), (7.5, 7.5, 7.5, 7.5, 0.0));
        let s = SweepStats::from_values(&[9.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mean, 4.0);
        assert!((s.std - (38.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert_eq!(SweepStats::from_values(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
        assert!(SweepStats::from_values(&[]).is_none());
    }

    #[test]
    fn snapshot_defaults() {
        assert_eq!(default_snapshot_epochs(50_000), vec![1, 1000, 10_000, 20_000, 30_000, 40_000, 50_000]);
        assert_eq!(default_snapshot_epochs(1), vec![1]);
        assert_eq!(default_snapshot_epochs(2500), vec![1, 1000, 2500]);
    }

    #[test]
    fn config_invariants() {
        let mut c = RunConfig::new(ProblemSource::Benchmark(BenchmarkId::Rugby), "out");
        assert!(c.validate().is_ok());
        c.nx = 15;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.nx = 16;
        c.epochs = 0;
        assert!(c.validate().is_err());
        c.epochs = 10;
        c.snapshot_epochs = vec![1, 11];
        assert!(c.validate().is_err());
    }
}
