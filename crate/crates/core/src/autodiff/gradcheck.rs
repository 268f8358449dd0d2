use super::{AutodiffError, Tape, Var};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Worst componentwise relative error.
    pub max_rel_error: f64,
    /// Component at which the worst error occurs.
    pub worst_index: usize,
}

/// Compares `backward()` of `f` at `theta` with central differences of step `h`.
///
/// `f` receives a fresh tape and a `1 x n` parameter leaf holding `theta` and must
/// return a scalar. The relative error of component `i` is
/// `|a_i - n_i| / max(|a_i|, |n_i|, floor)`; `floor` keeps components whose true
/// gradient is zero from dividing rounding noise by zero.
pub fn grad_check<F>(f: F, theta: &[f64], h: f64, floor: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    let n = theta.len();
    grad_check_with(
        |tape, x| {
            let p = tape.param(x.to_vec(), 1, n);
            f(tape, p)
        },
        theta,
        h,
        floor,
    )
}

/// Like [`grad_check`], but `f` registers its own parameter leaves from the flat
/// vector; their flattened gradients must line up with `theta`.
pub fn grad_check_with<F>(f: F, theta: &[f64], h: f64, floor: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, &[f64]) -> Result<Var, AutodiffError>,
{
    assert!(h > 0.0, "grad_check step must be positive");
    let n = theta.len();
    let eval = |x: &[f64]| -> Result<(f64, Tape, Var), AutodiffError> {
        let mut tape = Tape::new();
        let out = f(&mut tape, x)?;
        if !out.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(out.shape()));
        }
        Ok((tape.scalar_value(out), tape, out))
    };

    let (f0, tape, out) = eval(theta)?;
    if !f0.is_finite() {
        return Err(AutodiffError::NonFinite { index: usize::MAX, value: f0 });
    }
    let analytic = tape.backward(out)?.flatten();
    assert_eq!(analytic.len(), n, "registered parameters do not cover theta");

    let mut numeric = Vec::with_capacity(n);
    let mut x = theta.to_vec();
    for i in 0..n {
        let orig = x[i];
        x[i] = orig + h;
        let (fp, ..) = eval(&x)?;
        x[i] = orig - h;
        let (fm, ..) = eval(&x)?;
        x[i] = orig;
        for v in [fp, fm] {
            if !v.is_finite() {
                return Err(AutodiffError::NonFinite { index: i, value: v });
            }
        }
        numeric.push((fp - fm) / (2.0 * h));
    }

    let mut report = GradCheckReport { analytic, numeric, max_rel_error: 0.0, worst_index: 0 };
    (report.max_rel_error, report.worst_index) = report.rel_error(floor);
    Ok(report)
}

impl GradCheckReport {
    /// Worst componentwise relative error and its index under a given `floor`.
    pub fn rel_error(&self, floor: f64) -> (f64, usize) {
        let (mut worst, mut worst_index) = (0.0, 0);
        for (i, (a, b)) in self.analytic.iter().zip(&self.numeric).enumerate() {
            let denom = a.abs().max(b.abs()).max(floor);
            let err = if denom > 0.0 { (a - b).abs() / denom } else { 0.0 };
            if err > worst {
                worst = err;
                worst_index = i;
            }
        }
        (worst, worst_index)
    }

    /// Largest gradient magnitude seen by either method.
    pub fn scale(&self) -> f64 {
        self.analytic.iter().chain(&self.numeric).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Relative error with the floor set to `fraction` of [`Self::scale`], so
    /// components far below the gradient's magnitude are judged on the common scale.
    pub fn scaled_rel_error(&self, fraction: f64) -> f64 {
        self.rel_error(fraction * self.scale()).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_is_exact() {
        let r = grad_check(
            |t, p| {
                let s = t.square(p)?;
                t.sum(s)
            },
            &[1.0, 1.0],
            1e-5,
            1e-12,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn tanh_sum_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = grad_check(
            |t, p| {
                let s = t.tanh(p)?;
                t.sum(s)
            },
            &theta,
            1e-5,
            1e-12,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let r = grad_check(|t, _p| Ok(t.scalar(3.0)), &[0.2, -0.4], 1e-5, 1e-12).unwrap();
        assert_eq!(r.analytic, vec![0.0, 0.0]);
        assert_eq!(r.numeric, vec![0.0, 0.0]);
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn non_finite_reports_component() {
        // 1/theta blows up when the step lands on zero
        let err = grad_check(
            |t, p| {
                let r = t.recip(p)?;
                t.sum(r)
            },
            &[1.0, 1e-5],
            1e-5,
            1e-12,
        )
        .unwrap_err();
        assert!(matches!(err, AutodiffError::NonFinite { index: 1, .. }), "{err:?}");
    }

    // Carves a `rows x cols` block out of the `1 x n` parameter row, starting at `offset`,
    // using only recorded ops: block = sum_r e_r . (p . S_r).
    fn block(t: &mut Tape, p: Var, offset: usize, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let n = p.shape().1;
        let mut acc: Option<Var> = None;
        for r in 0..rows {
            let mut sel = vec![0.0; n * cols];
            for c in 0..cols {
                sel[(offset + r * cols + c) * cols + c] = 1.0;
            }
            let sel = t.constant(sel, n, cols);
            let row = t.matmul(p, sel)?;
            let mut e = vec![0.0; rows];
            e[r] = 1.0;
            let e = t.constant(e, rows, 1);
            let term = t.matmul(e, row)?;
            acc = Some(match acc {
                None => term,
                Some(a) => t.add(a, term)?,
            });
        }
        Ok(acc.expect("rows > 0"))
    }

    // A composite expression touching every differentiable op kind.
    fn composite(t: &mut Tape, p: Var) -> Result<Var, AutodiffError> {
        use crate::linalg::{CsrMatrix, Matrix};
        use std::sync::Arc;
        let w = block(t, p, 0, 3, 2)?;
        let b = block(t, p, 6, 1, 2)?;
        let x = t.constant(vec![0.3, -0.8, 1.2, 0.4, -0.5, 0.9, 0.1, 0.7, 0.2, -0.3, 0.6, 0.05], 4, 3);
        let h = t.matmul(x, w)?;
        let h = t.add_row(h, b)?;
        let a = t.tanh(h)?;
        let s = t.logistic(h)?;
        let m = t.mul(a, s)?;
        let e = t.scale(m, 0.5)?;
        let e = t.exp(e)?;
        let c0 = t.column(e, 0)?;
        let c1 = t.column(s, 1)?;
        let q = t.offset(c1, 0.3)?;
        let q = t.recip(q)?;
        let d = t.sub(c0, q)?;
        let dm = Arc::new(Matrix::from_fn(2, 4, |r, c| (r + c) as f64 * 0.25 - 0.3));
        let d2 = t.dense_map(&dm, d)?;
        let sp = Arc::new(CsrMatrix::from_rows(4, vec![vec![(0, 1.0), (3, -1.0)], vec![(2, 2.0)]]));
        let d3 = t.sparse_map(&sp, d)?;
        let d4 = t.rows(d3, 1, 1)?;
        let sq = t.square(d2)?;
        let r = t.relu(d)?;
        let s1 = t.sum(sq)?;
        let s2 = t.mean(r)?;
        let s3 = t.sum(d4)?;
        let tot = t.add(s1, s2)?;
        t.add(tot, s3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn composite_matches_central_differences(theta in proptest::collection::vec(-1.0f64..1.0, 8)) {
            let r = grad_check(composite, &theta, 1e-5, 1e-6).unwrap();
            prop_assert!(r.max_rel_error <= 1e-6, "{:?}", r);
        }
    }
}
