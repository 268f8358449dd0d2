//! Brinkman residuals, dissipated power, permeability interpolation and the
//! fluid-volume constraint, on plain grid fields and recorded on a tape.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::grid::{fd_dx, fd_dy, fd_laplacian, integrate, Field, Grid, PaddedField, StencilOps};
use crate::Error;

/// Inverse-permeability interpolation between solid (`rho = 0`) and fluid (`rho = 1`):
/// `kmax + (kmin - kmax) rho (1 + q) / (rho + q)`, evaluated in the equivalent
/// form `kmin + (kmax - kmin) q (1 - rho) / (q + rho)` which is exact at both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub kmax: f64,
    pub kmin: f64,
    pub q: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self { kmax: 2.5e4, kmin: 2.5e-4, q: 0.1 }
    }
}

impl MaterialModel {
    /// Constants of the SIMP-style alternative map.
    pub fn simp() -> Self {
        Self { kmax: 1e4, kmin: 0.0, q: 0.2 }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.kmax > self.kmin && self.kmin >= 0.0 && self.q > 0.0) {
            return Err(Error::Config(format!("material needs kmax > kmin >= 0 and q > 0, got {self:?}")));
        }
        Ok(())
    }

    pub fn inv_permeability(&self, rho: f64) -> f64 {
        self.kmin + (self.kmax - self.kmin) * self.q * (1.0 - rho) / (self.q + rho)
    }

    pub fn record(&self, tape: &mut Tape, rho: Var) -> Result<Var, AutodiffError> {
        let den = tape.offset(rho, self.q)?;
        let den = tape.recip(den)?;
        let solid = tape.scale(rho, -1.0)?;
        let solid = tape.offset(solid, 1.0)?;
        let t = tape.mul(solid, den)?;
        let t = tape.scale(t, (self.kmax - self.kmin) * self.q)?;
        tape.offset(t, self.kmin)
    }
}

pub fn inv_permeability(rho: f64, m: &MaterialModel) -> f64 {
    m.inv_permeability(rho)
}

/// The alternative map `kmin + (kmax - kmin) q (1 - rho) / (q + rho)`; with
/// [`MaterialModel::simp`] constants it vanishes in fluid.
pub fn simp_inv_permeability(rho: f64, m: &MaterialModel) -> f64 {
    m.inv_permeability(rho)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualFields {
    pub r1: Field,
    pub r2: Field,
    pub r3: Field,
}

/// Momentum and continuity residuals at every interior point.
pub fn residuals(u: &PaddedField, v: &PaddedField, p: &PaddedField, rho: &Field, m: &MaterialModel, grid: &Grid) -> ResidualFields {
    let kinv = rho.map(|r| m.inv_permeability(r));
    let (ui, vi) = (u.interior(), v.interior());
    let px = fd_dx(p, grid);
    let py = fd_dy(p, grid);
    let lu = fd_laplacian(u, grid);
    let lv = fd_laplacian(v, grid);
    let drag_u = kinv.zip_with(&ui, |k, a| k * a);
    let drag_v = kinv.zip_with(&vi, |k, a| k * a);
    ResidualFields {
        r1: lu.zip_with(&px, |l, g| l - g).zip_with(&drag_u, |a, d| a - d),
        r2: lv.zip_with(&py, |l, g| l - g).zip_with(&drag_v, |a, d| a - d),
        r3: fd_dx(u, grid).zip_with(&fd_dy(v, grid), |a, b| a + b),
    }
}

/// `J = 1/2 integral (u_x^2 + u_y^2 + v_x^2 + v_y^2 + kinv(rho) (u^2 + v^2))`.
pub fn dissipated_power(u: &PaddedField, v: &PaddedField, rho: &Field, m: &MaterialModel, grid: &Grid) -> f64 {
    let grads = [fd_dx(u, grid), fd_dy(u, grid), fd_dx(v, grid), fd_dy(v, grid)];
    let (ui, vi) = (u.interior(), v.interior());
    let mut density = rho.zip_with(&ui, |r, a| m.inv_permeability(r) * a * a);
    density = density.zip_with(&rho.zip_with(&vi, |r, b| m.inv_permeability(r) * b * b), |a, b| a + b);
    for g in &grads {
        density = density.zip_with(g, |a, d| a + d * d);
    }
    0.5 * integrate(&density, grid)
}

/// Signed violation `integral rho - V`.
pub fn volume_constraint(rho: &Field, volume: f64, grid: &Grid) -> f64 {
    integrate(rho, grid) - volume
}

/// Tape handles for every loss ingredient of one forward evaluation.
#[derive(Clone, Copy, Debug)]
pub struct FlowTerms {
    pub j: Var,
    pub r1: Var,
    pub r2: Var,
    pub r3: Var,
    /// Quadrature-weighted squared residual integrals.
    pub r1_sq: Var,
    pub r2_sq: Var,
    pub r3_sq: Var,
    pub c1: Var,
    pub c1_sq: Var,
}

/// Records residuals, objective and volume constraint from padded `n x 1`
/// velocity and pressure columns and the interior density column.
pub fn record_flow_terms(
    tape: &mut Tape,
    ops: &StencilOps,
    grid: &Grid,
    [u, v, p]: [Var; 3],
    rho: Var,
    m: &MaterialModel,
    volume: f64,
) -> Result<FlowTerms, AutodiffError> {
    let w = grid.weight();
    let kinv = m.record(tape, rho)?;
    let ui = tape.sparse_map(&ops.restrict, u)?;
    let vi = tape.sparse_map(&ops.restrict, v)?;
    let ux = tape.sparse_map(&ops.dx, u)?;
    let uy = tape.sparse_map(&ops.dy, u)?;
    let vx = tape.sparse_map(&ops.dx, v)?;
    let vy = tape.sparse_map(&ops.dy, v)?;
    let px = tape.sparse_map(&ops.dx, p)?;
    let py = tape.sparse_map(&ops.dy, p)?;
    let lu = tape.sparse_map(&ops.laplacian, u)?;
    let lv = tape.sparse_map(&ops.laplacian, v)?;
    let du = tape.mul(kinv, ui)?;
    let dv = tape.mul(kinv, vi)?;

    let r1 = tape.sub(lu, px)?;
    let r1 = tape.sub(r1, du)?;
    let r2 = tape.sub(lv, py)?;
    let r2 = tape.sub(r2, dv)?;
    let r3 = tape.add(ux, vy)?;

    let integral_sq = |tape: &mut Tape, r: Var| -> Result<Var, AutodiffError> {
        let s = tape.square(r)?;
        let s = tape.sum(s)?;
        tape.scale(s, w)
    };
    let r1_sq = integral_sq(tape, r1)?;
    let r2_sq = integral_sq(tape, r2)?;
    let r3_sq = integral_sq(tape, r3)?;

    let mut dens = tape.square(ux)?;
    for g in [uy, vx, vy] {
        let g2 = tape.square(g)?;
        dens = tape.add(dens, g2)?;
    }
    let speed = {
        let a = tape.square(ui)?;
        let b = tape.square(vi)?;
        tape.add(a, b)?
    };
    let drag = tape.mul(kinv, speed)?;
    let dens = tape.add(dens, drag)?;
    let j = tape.sum(dens)?;
    let j = tape.scale(j, 0.5 * w)?;

    let c1 = tape.sum(rho)?;
    let c1 = tape.scale(c1, w)?;
    let c1 = tape.offset(c1, -volume)?;
    let c1_sq = tape.square(c1)?;
    Ok(FlowTerms { j, r1, r2, r3, r1_sq, r2_sq, r3_sq, c1, c1_sq })
}
