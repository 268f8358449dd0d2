//! Benchmark flow problems on the unit square and their boundary samples.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::field::{BoundaryDataSet, ChannelData, ProjectionConfig, CHANNELS};
use crate::physics::MaterialModel;
use crate::Error;

const ON_SEGMENT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkId {
    Rugby,
    PipeBend,
    Diffuser,
    DoublePipe,
    BurgersDemo,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 5] = [Self::Rugby, Self::PipeBend, Self::Diffuser, Self::DoublePipe, Self::BurgersDemo];
    pub const FLOW: [BenchmarkId; 4] = [Self::Rugby, Self::PipeBend, Self::Diffuser, Self::DoublePipe];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rugby => "rugby",
            Self::PipeBend => "pipe-bend",
            Self::Diffuser => "diffuser",
            Self::DoublePipe => "double-pipe",
            Self::BurgersDemo => "burgers-demo",
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|b| b.name() == key || b.name().replace('-', "") == key)
            .ok_or_else(|| Error::Config(format!("unknown benchmark `{s}` (expected one of rugby, pipe-bend, diffuser, double-pipe, burgers-demo)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    /// Point on the edge at arclength coordinate `s` in `[0, 1]`.
    pub fn point(self, s: f64) -> [f64; 2] {
        match self {
            Edge::Left => [0.0, s],
            Edge::Right => [1.0, s],
            Edge::Bottom => [s, 0.0],
            Edge::Top => [s, 1.0],
        }
    }

    /// Coordinate along the edge if `p` lies on it.
    pub fn coordinate(self, p: [f64; 2]) -> Option<f64> {
        let on = |a: f64, b: f64| (a - b).abs() <= ON_SEGMENT_TOL;
        match self {
            Edge::Left => on(p[0], 0.0).then_some(p[1]),
            Edge::Right => on(p[0], 1.0).then_some(p[1]),
            Edge::Bottom => on(p[1], 0.0).then_some(p[0]),
            Edge::Top => on(p[1], 1.0).then_some(p[0]),
        }
    }

    fn outward_normal(self) -> [f64; 2] {
        match self {
            Edge::Left => [-1.0, 0.0],
            Edge::Right => [1.0, 0.0],
            Edge::Bottom => [0.0, -1.0],
            Edge::Top => [0.0, 1.0],
        }
    }
}

/// Velocity component profile along a segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Zero,
    Uniform { peak: f64 },
    /// `peak * 4 (s - a)(b - s) / (b - a)^2`, vanishing at both ends.
    Parabolic { peak: f64 },
}

impl Profile {
    pub fn value(self, s: f64, [a, b]: [f64; 2]) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Uniform { peak } => peak,
            Profile::Parabolic { peak } => peak * 4.0 * (s - a) * (b - s) / ((b - a) * (b - a)),
        }
    }

    /// Integral over the segment.
    pub fn integral(self, [a, b]: [f64; 2]) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Uniform { peak } => peak * (b - a),
            Profile::Parabolic { peak } => peak * (b - a) * 2.0 / 3.0,
        }
    }
}

/// A piece of one edge carrying prescribed velocity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub edge: Edge,
    pub interval: [f64; 2],
    pub u: Profile,
    pub v: Profile,
}

impl Segment {
    fn contains(&self, p: [f64; 2]) -> Option<f64> {
        let s = self.edge.coordinate(p)?;
        (s >= self.interval[0] - ON_SEGMENT_TOL && s <= self.interval[1] + ON_SEGMENT_TOL).then_some(s)
    }

    /// Outward volume flux through the segment.
    pub fn flux(&self) -> f64 {
        let n = self.edge.outward_normal();
        n[0] * self.u.integral(self.interval) + n[1] * self.v.integral(self.interval)
    }
}

/// Which boundary points condition the density channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityConditioning {
    /// Fluid is prescribed at every inlet and outlet sample.
    #[default]
    InletOutlet,
    /// The density channel is the network mean alone.
    None,
}

/// Flow problem on the unit square: prescribed-velocity segments with no-slip
/// elsewhere, one pressure pin, and the target fluid fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub volume: f64,
    #[serde(rename = "segment", default)]
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub material: MaterialModel,
    #[serde(default)]
    pub density: DensityConditioning,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.volume > 0.0 && self.volume < 1.0) {
            return Err(Error::Config(format!("volume fraction must lie in (0, 1), got {}", self.volume)));
        }
        for s in &self.segments {
            let [a, b] = s.interval;
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b {
                return Err(Error::Config(format!("segment interval {:?} must satisfy 0 <= a < b <= 1", s.interval)));
            }
        }
        let flux = self.net_flux();
        if flux.abs() > 1e-12 {
            return Err(Error::Config(format!("net boundary flux is {flux:e}; inflow and outflow must balance")));
        }
        self.material.validate()
    }

    pub fn net_flux(&self) -> f64 {
        self.segments.iter().map(Segment::flux).sum()
    }

    /// Prescribed velocity at a boundary point; no-slip off every segment.
    pub fn velocity_at(&self, p: [f64; 2]) -> [f64; 2] {
        self.segments
            .iter()
            .find_map(|seg| seg.contains(p).map(|s| [seg.u.value(s, seg.interval), seg.v.value(s, seg.interval)]))
            .unwrap_or([0.0, 0.0])
    }

    pub fn on_opening(&self, p: [f64; 2]) -> bool {
        self.segments.iter().any(|seg| seg.contains(p).is_some())
    }

    /// `(0, 0)` unless it lies on an opening, else the wall sample nearest to it;
    /// `(0, 0)` again when the whole boundary is open.
    pub fn pressure_pin(&self, samples: &[[f64; 2]]) -> [f64; 2] {
        let origin = [0.0, 0.0];
        if !self.on_opening(origin) {
            return origin;
        }
        samples
            .iter()
            .copied()
            .filter(|&p| !self.on_opening(p))
            .min_by(|a, b| (a[0].hypot(a[1])).total_cmp(&b[0].hypot(b[1])))
            .unwrap_or(origin)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let spec: ProblemSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn parabolic(edge: Edge, interval: [f64; 2], u: f64, v: f64) -> Segment {
    let profile = |peak: f64| if peak == 0.0 { Profile::Zero } else { Profile::Parabolic { peak } };
    Segment { edge, interval, u: profile(u), v: profile(v) }
}

/// The four flow benchmarks on the unit square.
pub fn build_problem(id: BenchmarkId) -> Result<ProblemSpec, Error> {
    let (volume, segments) = match id {
        BenchmarkId::Rugby => {
            let uniform = |edge| Segment { edge, interval: [0.0, 1.0], u: Profile::Uniform { peak: 1.0 }, v: Profile::Zero };
            (0.9, [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top].map(uniform).to_vec())
        }
        BenchmarkId::Diffuser => (
            0.5,
            vec![parabolic(Edge::Left, [0.0, 1.0], 1.0, 0.0), parabolic(Edge::Right, [1.0 / 3.0, 2.0 / 3.0], 3.0, 0.0)],
        ),
        BenchmarkId::PipeBend => (
            0.08 * std::f64::consts::PI,
            vec![parabolic(Edge::Left, [0.7, 0.9], 1.0, 0.0), parabolic(Edge::Bottom, [0.7, 0.9], 0.0, -1.0)],
        ),
        BenchmarkId::DoublePipe => {
            let w = 1.0 / 6.0;
            let mut segs = Vec::new();
            for c in [0.25, 0.75] {
                segs.push(parabolic(Edge::Left, [c - w / 2.0, c + w / 2.0], 1.0, 0.0));
                segs.push(parabolic(Edge::Right, [c - w / 2.0, c + w / 2.0], 1.0, 0.0));
            }
            (1.0 / 3.0, segs)
        }
        BenchmarkId::BurgersDemo => {
            return Err(Error::Config("burgers-demo is not a flow problem; use the burgers module".into()));
        }
    };
    let spec = ProblemSpec {
        name: id.name().to_string(),
        volume,
        segments,
        material: MaterialModel::default(),
        density: DensityConditioning::default(),
    };
    spec.validate()?;
    Ok(spec)
}

/// `n` equally spaced points per side of the unit square, corners shared.
pub fn perimeter_points(n: usize) -> Vec<[f64; 2]> {
    let s = |k: usize| k as f64 / (n - 1) as f64;
    let mut pts = Vec::with_capacity(4 * n - 4);
    pts.extend((0..n).map(|k| [s(k), 0.0]));
    pts.extend((1..n).map(|k| [1.0, s(k)]));
    pts.extend((1..n).map(|k| [s(n - 1 - k), 1.0]));
    pts.extend((1..n - 1).map(|k| [0.0, s(n - 1 - k)]));
    pts
}

/// Conditioning data for `[u, v, p, rho]`: velocity on `n_bc` samples per side,
/// one pressure pin at zero, and fluid at opening samples when enabled.
pub fn boundary_samples(spec: &ProblemSpec, n_bc: usize, projection: &ProjectionConfig) -> Result<BoundaryDataSet, Error> {
    if n_bc < 2 {
        return Err(Error::Config(format!("need at least 2 boundary samples per side, got {n_bc}")));
    }
    let pts = perimeter_points(n_bc);
    let vel: Vec<[f64; 2]> = pts.iter().map(|&p| spec.velocity_at(p)).collect();
    let pin = spec.pressure_pin(&pts);
    let rho_pts: Vec<[f64; 2]> = match spec.density {
        DensityConditioning::InletOutlet => pts.iter().copied().filter(|&p| spec.on_opening(p)).collect(),
        DensityConditioning::None => Vec::new(),
    };
    let target = projection.inverse(1.0 - 1e-3);
    let data = BoundaryDataSet::new(
        &CHANNELS,
        vec![
            ChannelData { points: pts.clone(), values: vel.iter().map(|v| v[0]).collect() },
            ChannelData { points: pts, values: vel.iter().map(|v| v[1]).collect() },
            ChannelData { points: vec![pin], values: vec![0.0] },
            ChannelData { values: vec![target; rho_pts.len()], points: rho_pts },
        ],
    );
    data.validate()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn volumes_and_flux() {
        assert_eq!(build_problem(BenchmarkId::Diffuser).unwrap().volume, 0.5);
        let pb = build_problem(BenchmarkId::PipeBend).unwrap();
        assert!((pb.volume - 0.251327).abs() < 1e-6);
        assert_eq!(build_problem(BenchmarkId::Rugby).unwrap().volume, 0.9);
        assert!((build_problem(BenchmarkId::DoublePipe).unwrap().volume - 1.0 / 3.0).abs() < 1e-15);
        for id in BenchmarkId::FLOW {
            let spec = build_problem(id).unwrap();
            assert!(spec.net_flux().abs() <= 1e-12, "{id}");
            assert!(spec.volume > 0.0 && spec.volume < 1.0);
        }
        assert!(build_problem(BenchmarkId::BurgersDemo).is_err());
    }

    #[test]
    fn ids_parse() {
        for id in BenchmarkId::ALL {
            assert_eq!(id.name().parse::<BenchmarkId>().unwrap(), id);
        }
        assert_eq!("PipeBend".parse::<BenchmarkId>().unwrap(), BenchmarkId::PipeBend);
        assert!("channel".parse::<BenchmarkId>().is_err());
    }

    #[test]
    fn sample_counts_and_rugby_values() {
        let g = ProjectionConfig::default();
        let spec = build_problem(BenchmarkId::Rugby).unwrap();
        let data = boundary_samples(&spec, 25, &g).unwrap();
        assert_eq!(data.channels[0].len(), 96);
        assert!(data.channels[0].values.iter().all(|&u| u == 1.0));
        assert!(data.channels[1].values.iter().all(|&v| v == 0.0));
        assert_eq!(data.channels[2].len(), 1);
        // every rugby sample is an opening; no wall exists for the pin
        assert_eq!(data.channels[2].points[0], [0.0, 0.0]);
        assert_eq!(data.channels[3].len(), 96);
        for id in BenchmarkId::FLOW {
            let d = boundary_samples(&build_problem(id).unwrap(), 25, &g).unwrap();
            assert!(d.channels[0].len() <= 100);
            assert_eq!(d.channels[2].len(), 1);
        }
    }

    #[test]
    fn pins_avoid_openings() {
        let g = ProjectionConfig::default();
        for id in [BenchmarkId::Diffuser, BenchmarkId::DoublePipe, BenchmarkId::PipeBend] {
            let spec = build_problem(id).unwrap();
            let pin = boundary_samples(&spec, 25, &g).unwrap().channels[2].points[0];
            assert!(!spec.on_opening(pin), "{id}: {pin:?}");
        }
        // the diffuser inlet covers the whole left edge, so the pin moves along the bottom
        let d = build_problem(BenchmarkId::Diffuser).unwrap();
        assert_eq!(boundary_samples(&d, 25, &g).unwrap().channels[2].points[0], [1.0 / 24.0, 0.0]);
        assert_eq!(d.pressure_pin(&perimeter_points(25)), [1.0 / 24.0, 0.0]);
        let pb = build_problem(BenchmarkId::PipeBend).unwrap();
        assert_eq!(pb.pressure_pin(&perimeter_points(25)), [0.0, 0.0]);
    }

    #[test]
    fn density_targets_openings_only() {
        let g = ProjectionConfig::default();
        let mut spec = build_problem(BenchmarkId::PipeBend).unwrap();
        let d = boundary_samples(&spec, 25, &g).unwrap();
        assert_eq!(d.channels[3].len(), 10);
        assert!(d.channels[3].values.iter().all(|&z| (g.project(z) - 0.999).abs() < 1e-12));
        spec.density = DensityConditioning::None;
        assert!(boundary_samples(&spec, 25, &g).unwrap().channels[3].is_empty());
    }

    #[test]
    fn samples_match_profiles() {
        let g = ProjectionConfig::default();
        let spec = build_problem(BenchmarkId::Diffuser).unwrap();
        let d = boundary_samples(&spec, 25, &g).unwrap();
        for (p, u) in d.channels[0].points.iter().zip(&d.channels[0].values) {
            let want = if p[0] == 0.0 {
                4.0 * p[1] * (1.0 - p[1])
            } else if p[0] == 1.0 && p[1] >= 1.0 / 3.0 - 1e-12 && p[1] <= 2.0 / 3.0 + 1e-12 {
                3.0 * 4.0 * (p[1] - 1.0 / 3.0) * (2.0 / 3.0 - p[1]) * 9.0
            } else {
                0.0
            };
            assert!((u - want).abs() <= 1e-14, "{p:?}: {u} vs {want}");
        }
        assert_eq!(d, boundary_samples(&spec, 25, &g).unwrap());
        let pb = boundary_samples(&build_problem(BenchmarkId::PipeBend).unwrap(), 25, &g).unwrap();
        let outlet: Vec<f64> = pb.channels[1].values.iter().copied().filter(|&v| v != 0.0).collect();
        assert!(outlet.iter().all(|&v| v < 0.0) && !outlet.is_empty());
        assert!(boundary_samples(&spec, 1, &g).is_err());
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"
            name = "channel"
            volume = 0.4

            [[segment]]
            edge = "left"
            interval = [0.25, 0.75]
            u = { kind = "parabolic", peak = 2.0 }
            v = { kind = "zero" }

            [[segment]]
            edge = "right"
            interval = [0.25, 0.75]
            u = { kind = "parabolic", peak = 2.0 }
            v = { kind = "zero" }
        "#;
        let spec: ProblemSpec = toml::from_str(text).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.material, MaterialModel::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(&path, toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(ProblemSpec::load(&path).unwrap(), spec);

        let unbalanced = text.replacen("peak = 2.0", "peak = 1.0", 1);
        std::fs::write(&path, unbalanced).unwrap();
        assert!(matches!(ProblemSpec::load(&path), Err(Error::Config(m)) if m.contains("flux")));
        let bad_v = text.replace("volume = 0.4", "volume = 1.5");
        assert!(toml::from_str::<ProblemSpec>(&bad_v).unwrap().validate().is_err());
    }

    proptest! {
        #[test]
        fn parabola_vanishes_at_ends(a in 0.0f64..0.5, w in 0.01f64..0.5, peak in -5.0f64..5.0) {
            let p = Profile::Parabolic { peak };
            let iv = [a, a + w];
            prop_assert!(p.value(iv[0], iv).abs() < 1e-12);
            prop_assert!(p.value(iv[1], iv).abs() < 1e-12);
            prop_assert!((p.value(a + w / 2.0, iv) - peak).abs() < 1e-9);
        }
    }
}
