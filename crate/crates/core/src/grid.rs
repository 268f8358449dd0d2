//! Regular collocation lattice with a two-deep ghost frame, fourth-order
//! finite-difference stencils, and plain-summation quadrature.
//!
//! Interior points include the boundary-coincident rows and columns, so
//! `dx = lx / (nx - 1)`. Storage is row-major with `y` as the slow index:
//! interior point `(i, j)` lives at `j * nx + i`, padded point `(i, j)` with
//! `i, j` in `-2..n+2` lives at `(j + 2) * (nx + 4) + (i + 2)`.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::linalg::CsrMatrix;
use crate::Error;

/// Depth of the ghost frame.
pub const GHOST: usize = 2;

const D1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    lx: f64,
    ly: f64,
}

impl Grid {
    /// `nx x ny` lattice spanning `[x0, x1] x [y0, y1]` including its edges.
    pub fn new(nx: usize, ny: usize, x_range: [f64; 2], y_range: [f64; 2]) -> Result<Self, Error> {
        if nx < 3 || ny < 3 {
            return Err(Error::Config(format!("grid needs at least 3 points per side, got {nx}x{ny}")));
        }
        let (lx, ly) = (x_range[1] - x_range[0], y_range[1] - y_range[0]);
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::Config(format!("degenerate grid extent {x_range:?} x {y_range:?}")));
        }
        Ok(Self { nx, ny, x0: x_range[0], y0: y_range[0], lx, ly })
    }

    pub fn unit_square(nx: usize, ny: usize) -> Result<Self, Error> {
        Self::new(nx, ny, [0.0, 1.0], [0.0, 1.0])
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    pub fn x_range(&self) -> [f64; 2] {
        [self.x0, self.x0 + self.lx]
    }

    pub fn y_range(&self) -> [f64; 2] {
        [self.y0, self.y0 + self.ly]
    }

    /// Coordinate of lattice column `i`; negative or `>= nx` indices are ghosts.
    pub fn x(&self, i: isize) -> f64 {
        self.x0 + i as f64 * self.dx()
    }

    pub fn y(&self, j: isize) -> f64 {
        self.y0 + j as f64 * self.dy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn padded_nx(&self) -> usize {
        self.nx + 2 * GHOST
    }

    pub fn padded_ny(&self) -> usize {
        self.ny + 2 * GHOST
    }

    pub fn padded_len(&self) -> usize {
        self.padded_nx() * self.padded_ny()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn padded_index(&self, i: isize, j: isize) -> usize {
        let g = GHOST as isize;
        debug_assert!(i >= -g && i < self.nx as isize + g && j >= -g && j < self.ny as isize + g);
        ((j + g) as usize) * self.padded_nx() + (i + g) as usize
    }

    pub fn interior_coords(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny as isize {
            for i in 0..self.nx as isize {
                out.push([self.x(i), self.y(j)]);
            }
        }
        out
    }

    pub fn padded_coords(&self) -> Vec<[f64; 2]> {
        let g = GHOST as isize;
        let mut out = Vec::with_capacity(self.padded_len());
        for j in -g..self.ny as isize + g {
            for i in -g..self.nx as isize + g {
                out.push([self.x(i), self.y(j)]);
            }
        }
        out
    }

    /// True for lattice points on the edge of the domain.
    pub fn on_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// Quadrature weight applied uniformly to every interior point.
    pub fn weight(&self) -> f64 {
        self.dx() * self.dy()
    }
}

/// Values at the `nx x ny` interior lattice points.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len(), "field length does not match grid");
        Self { nx: grid.nx, ny: grid.ny, data }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = grid.interior_coords().into_iter().map(|[x, y]| f(x, y)).collect();
        Self::new(grid, data)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { nx: self.nx, ny: self.ny, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!((self.nx, self.ny), (other.nx, other.ny));
        Field {
            nx: self.nx,
            ny: self.ny,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Values on the lattice extended by the ghost frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedField {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl PaddedField {
    pub fn new(grid: &Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.padded_len(), "padded field length does not match grid");
        Self { nx: grid.nx, ny: grid.ny, data }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = grid.padded_coords().into_iter().map(|[x, y]| f(x, y)).collect();
        Self::new(grid, data)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        let g = GHOST as isize;
        self.data[((j + g) as usize) * (self.nx + 2 * GHOST) + (i + g) as usize]
    }

    /// The interior block.
    pub fn interior(&self) -> Field {
        let mut data = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny as isize {
            for i in 0..self.nx as isize {
                data.push(self.at(i, j));
            }
        }
        Field { nx: self.nx, ny: self.ny, data }
    }
}

/// How ghost-frame values are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GhostMode {
    /// Evaluate the field at the ghost coordinates.
    #[default]
    ModelEvaluation,
    /// Odd reflection about the boundary value: `f(-k) = 2 f(0) - f(k)`.
    Reflection,
}

/// Fills a padded field from a pointwise evaluator.
pub fn pad(eval: impl Fn([f64; 2]) -> f64, grid: &Grid, mode: GhostMode) -> PaddedField {
    match mode {
        GhostMode::ModelEvaluation => PaddedField::new(grid, grid.padded_coords().into_iter().map(&eval).collect()),
        GhostMode::Reflection => {
            let interior: Vec<f64> = grid.interior_coords().into_iter().map(&eval).collect();
            PaddedField::new(grid, reflection_map(grid).apply(&interior))
        }
    }
}

/// Ghost-extension weights along one axis of length `n` for lattice index `k`.
fn reflect_1d(k: isize, n: usize) -> Vec<(usize, f64)> {
    let last = n as isize - 1;
    if k < 0 {
        vec![(0, 2.0), ((-k) as usize, -1.0)]
    } else if k > last {
        vec![(last as usize, 2.0), ((2 * last - k) as usize, -1.0)]
    } else {
        vec![(k as usize, 1.0)]
    }
}

/// Linear map from interior values to a padded field by odd reflection.
pub fn reflection_map(grid: &Grid) -> CsrMatrix {
    let g = GHOST as isize;
    let mut rows = Vec::with_capacity(grid.padded_len());
    for j in -g..grid.ny as isize + g {
        let wy = reflect_1d(j, grid.ny);
        for i in -g..grid.nx as isize + g {
            let wx = reflect_1d(i, grid.nx);
            let mut row = Vec::with_capacity(wx.len() * wy.len());
            for &(jj, ay) in &wy {
                for &(ii, ax) in &wx {
                    row.push((grid.index(ii, jj), ax * ay));
                }
            }
            rows.push(row);
        }
    }
    CsrMatrix::from_rows(grid.len(), rows)
}

fn stencil_x(f: &PaddedField, grid: &Grid, w: &[f64; 5], scale: f64) -> Field {
    let mut out = Vec::with_capacity(grid.len());
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            let s = w[0] * f.at(i - 2, j) + w[1] * f.at(i - 1, j) + w[2] * f.at(i, j) + w[3] * f.at(i + 1, j) + w[4] * f.at(i + 2, j);
            out.push(s * scale);
        }
    }
    Field::new(grid, out)
}

fn stencil_y(f: &PaddedField, grid: &Grid, w: &[f64; 5], scale: f64) -> Field {
    let mut out = Vec::with_capacity(grid.len());
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            let s = w[0] * f.at(i, j - 2) + w[1] * f.at(i, j - 1) + w[2] * f.at(i, j) + w[3] * f.at(i, j + 1) + w[4] * f.at(i, j + 2);
            out.push(s * scale);
        }
    }
    Field::new(grid, out)
}

/// Fourth-order first derivative along `x`.
pub fn fd_dx(f: &PaddedField, grid: &Grid) -> Field {
    stencil_x(f, grid, &D1, 1.0 / (12.0 * grid.dx()))
}

/// Fourth-order first derivative along `y`.
pub fn fd_dy(f: &PaddedField, grid: &Grid) -> Field {
    stencil_y(f, grid, &D1, 1.0 / (12.0 * grid.dy()))
}

/// Fourth-order second derivative along `x`.
pub fn fd_dxx(f: &PaddedField, grid: &Grid) -> Field {
    stencil_x(f, grid, &D2, 1.0 / (12.0 * grid.dx() * grid.dx()))
}

/// Fourth-order second derivative along `y`.
pub fn fd_dyy(f: &PaddedField, grid: &Grid) -> Field {
    stencil_y(f, grid, &D2, 1.0 / (12.0 * grid.dy() * grid.dy()))
}

pub fn fd_laplacian(f: &PaddedField, grid: &Grid) -> Field {
    fd_dxx(f, grid).zip_with(&fd_dyy(f, grid), |a, b| a + b)
}

/// `sum_j f_j * dx * dy` over every interior point.
pub fn integrate(f: &Field, grid: &Grid) -> f64 {
    assert_eq!((f.nx, f.ny), (grid.nx, grid.ny));
    f.data.iter().sum::<f64>() * grid.weight()
}

/// The stencils and restrictions as constant sparse maps, for use on a tape.
#[derive(Clone, Debug)]
pub struct StencilOps {
    pub dx: Arc<CsrMatrix>,
    pub dy: Arc<CsrMatrix>,
    pub dxx: Arc<CsrMatrix>,
    pub dyy: Arc<CsrMatrix>,
    pub laplacian: Arc<CsrMatrix>,
    /// Padded field -> interior block.
    pub restrict: Arc<CsrMatrix>,
    /// Interior values -> padded field by reflection.
    pub reflect: Arc<CsrMatrix>,
}

impl StencilOps {
    pub fn new(grid: &Grid) -> Self {
        let axis_op = |w: &[f64; 5], scale: f64, along_x: bool| {
            let mut rows = Vec::with_capacity(grid.len());
            for j in 0..grid.ny as isize {
                for i in 0..grid.nx as isize {
                    let row = (-2..=2)
                        .zip(w)
                        .filter(|(_, &c)| c != 0.0)
                        .map(|(o, &c)| {
                            let idx = if along_x { grid.padded_index(i + o, j) } else { grid.padded_index(i, j + o) };
                            (idx, c * scale)
                        })
                        .collect();
                    rows.push(row);
                }
            }
            CsrMatrix::from_rows(grid.padded_len(), rows)
        };
        let (hx, hy) = (grid.dx(), grid.dy());
        let dxx = axis_op(&D2, 1.0 / (12.0 * hx * hx), true);
        let dyy = axis_op(&D2, 1.0 / (12.0 * hy * hy), false);
        let laplacian = {
            let rows = (0..grid.len())
                .map(|r| {
                    let mut row: Vec<(usize, f64)> = dxx.row_entries(r).collect();
                    for (c, v) in dyy.row_entries(r) {
                        match row.iter_mut().find(|(cc, _)| *cc == c) {
                            Some(e) => e.1 += v,
                            None => row.push((c, v)),
                        }
                    }
                    row
                })
                .collect();
            CsrMatrix::from_rows(grid.padded_len(), rows)
        };
        let mut restrict_idx = Vec::with_capacity(grid.len());
        for j in 0..grid.ny as isize {
            for i in 0..grid.nx as isize {
                restrict_idx.push(grid.padded_index(i, j));
            }
        }
        Self {
            dx: Arc::new(axis_op(&D1, 1.0 / (12.0 * hx), true)),
            dy: Arc::new(axis_op(&D1, 1.0 / (12.0 * hy), false)),
            dxx: Arc::new(dxx),
            dyy: Arc::new(dyy),
            laplacian: Arc::new(laplacian),
            restrict: Arc::new(CsrMatrix::selection(grid.padded_len(), &restrict_idx)),
            reflect: Arc::new(reflection_map(grid)),
        }
    }
}

/// Writes a field as CSV: a `nx,ny,dx,dy` header line, its values, then one
/// lattice row (`j` fixed) per line, with 17 significant digits.
pub fn write_field_csv<W: Write>(mut w: W, field: &Field, grid: &Grid) -> std::io::Result<()> {
    writeln!(w, "nx,ny,dx,dy")?;
    writeln!(w, "{},{},{:.16e},{:.16e}", grid.nx, grid.ny, grid.dx(), grid.dy())?;
    for j in 0..field.ny {
        let row = &field.data[j * field.nx..(j + 1) * field.nx];
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads a field written by [`write_field_csv`]; returns `(nx, ny, dx, dy, values)`.
pub fn read_field_csv<R: BufRead>(r: R) -> Result<(usize, usize, f64, f64, Vec<f64>), Error> {
    let bad = |msg: &str| Error::Parse(format!("field csv: {msg}"));
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad("empty"))??;
    if header.trim() != "nx,ny,dx,dy" {
        return Err(bad("missing header"));
    }
    let meta = lines.next().ok_or_else(|| bad("missing dimensions"))??;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 4 {
        return Err(bad("dimension line needs four entries"));
    }
    let nx: usize = parts[0].parse().map_err(|_| bad("nx"))?;
    let ny: usize = parts[1].parse().map_err(|_| bad("ny"))?;
    let dx: f64 = parts[2].parse().map_err(|_| bad("dx"))?;
    let dy: f64 = parts[3].parse().map_err(|_| bad("dy"))?;
    let mut values = Vec::with_capacity(nx * ny);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.trim().split(',') {
            values.push(tok.parse::<f64>().map_err(|_| bad("value"))?);
        }
    }
    if values.len() != nx * ny {
        return Err(bad("value count does not match nx*ny"));
    }
    Ok((nx, ny, dx, dy, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_err(a: &Field, b: &Field) -> f64 {
        a.zip_with(b, |p, q| p - q).max_abs()
    }

    #[test]
    fn ghost_lattice_extends_uniformly() {
        let g = Grid::unit_square(5, 4).unwrap();
        let coords = g.padded_coords();
        assert_eq!(coords.len(), 9 * 8);
        assert_eq!(coords[g.padded_index(-1, 0)], [-0.25, 0.0]);
        assert_eq!(coords[g.padded_index(-2, -2)], [-0.5, -2.0 / 3.0]);
        assert!((coords[g.padded_index(5, 3)][0] - 1.25).abs() < 1e-15);
        assert_eq!(g.interior_coords()[g.index(4, 3)], [1.0, 1.0]);
    }

    #[test]
    fn constant_and_linear_fields() {
        let g = Grid::unit_square(9, 7).unwrap();
        let c = PaddedField::from_fn(&g, |_, _| 3.5);
        assert!(fd_dx(&c, &g).max_abs() < 1e-12);
        assert!(fd_laplacian(&c, &g).max_abs() < 1e-10);
        let lin = PaddedField::from_fn(&g, |x, _| x);
        assert!(max_err(&fd_dx(&lin, &g), &Field::from_fn(&g, |_, _| 1.0)) < 1e-12);
        assert!(fd_dy(&lin, &g).max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_paraboloid_is_four() {
        let g = Grid::unit_square(11, 13).unwrap();
        let f = PaddedField::from_fn(&g, |x, y| x * x + y * y);
        assert!(max_err(&fd_laplacian(&f, &g), &Field::from_fn(&g, |_, _| 4.0)) < 1e-9);
    }

    #[test]
    fn quartic_exactness() {
        let g = Grid::unit_square(12, 10).unwrap();
        let f = PaddedField::from_fn(&g, |x, y| x.powi(4) + 2.0 * x * x * y * y - y.powi(3) * x + 0.5 * y.powi(4));
        let dx_true = Field::from_fn(&g, |x, y| 4.0 * x.powi(3) + 4.0 * x * y * y - y.powi(3));
        let dy_true = Field::from_fn(&g, |x, y| 4.0 * x * x * y - 3.0 * y * y * x + 2.0 * y.powi(3));
        let lap_true = Field::from_fn(&g, |x, y| 12.0 * x * x + 4.0 * y * y + 4.0 * x * x - 6.0 * y * x + 6.0 * y * y);
        // first-derivative stencil is exact through degree 4
        assert!(max_err(&fd_dx(&f, &g), &dx_true) < 1e-11);
        assert!(max_err(&fd_dy(&f, &g), &dy_true) < 1e-11);
        assert!(max_err(&fd_laplacian(&f, &g), &lap_true) < 1e-9);
    }

    fn convergence_ratio(n: usize, op: fn(&PaddedField, &Grid) -> Field, exact: fn(f64, f64) -> f64) -> f64 {
        let f = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
        let err = |n: usize| {
            let g = Grid::unit_square(n, n).unwrap();
            max_err(&op(&PaddedField::from_fn(&g, f), &g), &Field::from_fn(&g, exact))
        };
        err(n) / err(2 * n - 1)
    }

    #[test]
    fn fourth_order_convergence() {
        let r = convergence_ratio(26, fd_dx, |x, y| 2.0 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
        assert!((12.0..=20.0).contains(&r), "dx ratio {r}");
        let r = convergence_ratio(26, fd_laplacian, |x, y| -8.0 * PI * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        assert!((12.0..=20.0).contains(&r), "laplacian ratio {r}");
    }

    #[test]
    fn one_dimensional_sine_convergence() {
        let err = |n: usize| {
            let g = Grid::unit_square(n, n).unwrap();
            let f = PaddedField::from_fn(&g, |x, _| (2.0 * PI * x).sin());
            max_err(&fd_dx(&f, &g), &Field::from_fn(&g, |x, _| 2.0 * PI * (2.0 * PI * x).cos()))
        };
        let r = err(21) / err(41);
        assert!((12.0..=20.0).contains(&r), "{r}");
    }

    #[test]
    fn quadrature_conventions() {
        let g = Grid::unit_square(100, 100).unwrap();
        let one = integrate(&Field::from_fn(&g, |_, _| 1.0), &g);
        assert!((one - 10000.0 / 99.0f64.powi(2)).abs() < 1e-12);
        assert!((one - 1.0203).abs() < 1e-4);
        assert!(one <= 1.021);
        assert_eq!(integrate(&Field::from_fn(&g, |_, _| 0.0), &g), 0.0);
        let half = integrate(&Field::from_fn(&g, |x, _| x), &g);
        assert!((half - 0.5).abs() / 0.5 < 0.02 + 1e-3, "{half}");
        // converges to the area as the lattice refines
        let fine = Grid::unit_square(400, 400).unwrap();
        let one_fine = integrate(&Field::from_fn(&fine, |_, _| 1.0), &fine);
        assert!((one_fine - 1.0).abs() < (one - 1.0).abs());
    }

    #[test]
    fn pad_modes() {
        let g = Grid::unit_square(6, 6).unwrap();
        let c = pad(|_| 2.5, &g, GhostMode::ModelEvaluation);
        assert!(c.data().iter().all(|&v| v == 2.5));
        assert_eq!(c.data().len(), 10 * 10);
        let c = pad(|_| 2.5, &g, GhostMode::Reflection);
        assert!(c.data().iter().all(|&v| (v - 2.5).abs() < 1e-14));
        // reflection reproduces linear fields exactly, including corners
        let lin = pad(|[x, y]| 1.0 + 2.0 * x - y, &g, GhostMode::Reflection);
        let exact = PaddedField::from_fn(&g, |x, y| 1.0 + 2.0 * x - y);
        for (a, b) in lin.data().iter().zip(exact.data()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn sparse_ops_match_loop_stencils() {
        let g = Grid::new(9, 7, [-1.0, 1.0], [0.0, 0.5]).unwrap();
        let f = PaddedField::from_fn(&g, |x, y| (3.0 * x).sin() * (y * y + 1.0).ln() + x * y);
        let ops = StencilOps::new(&g);
        let check = |op: &CsrMatrix, want: Field| {
            let got = op.apply(f.data());
            let diff = got.iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-9 * (1.0 + want.max_abs()), "{diff}");
        };
        check(&ops.dx, fd_dx(&f, &g));
        check(&ops.dy, fd_dy(&f, &g));
        check(&ops.dxx, fd_dxx(&f, &g));
        check(&ops.dyy, fd_dyy(&f, &g));
        check(&ops.laplacian, fd_laplacian(&f, &g));
        check(&ops.restrict, f.interior());
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::unit_square(4, 3).unwrap();
        let f = Field::from_fn(&g, |x, y| (x + 0.1).ln() / 3.0 + y * 1e-300);
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &f, &g).unwrap();
        let (nx, ny, dx, dy, vals) = read_field_csv(buf.as_slice()).unwrap();
        assert_eq!((nx, ny), (4, 3));
        assert_eq!(dx, g.dx());
        assert_eq!(dy, g.dy());
        assert_eq!(vals, f.data());
    }

    proptest! {
        #[test]
        fn stencils_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0.5f64..4.0) {
            let g = Grid::unit_square(10, 10).unwrap();
            let f = PaddedField::from_fn(&g, |x, y| (k * x).cos() * y);
            let h = PaddedField::from_fn(&g, |x, y| (x - y).powi(3));
            let comb = PaddedField::new(&g, f.data().iter().zip(h.data()).map(|(p, q)| a * p + b * q).collect());
            let lhs = fd_dx(&comb, &g);
            let rhs = fd_dx(&f, &g).zip_with(&fd_dx(&h, &g), |p, q| a * p + b * q);
            prop_assert!(max_err(&lhs, &rhs) < 1e-10 * (1.0 + rhs.max_abs()));
        }

        #[test]
        fn csv_values_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 9)) {
            let g = Grid::unit_square(3, 3).unwrap();
            let f = Field::new(&g, vals.clone());
            let mut buf = Vec::new();
            write_field_csv(&mut buf, &f, &g).unwrap();
            let (.., back) = read_field_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, vals);
        }
    }
}
