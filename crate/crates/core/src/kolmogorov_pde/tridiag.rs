//! The one-dimensional operator `½a ∂² + b* ∂ + c` on a uniform grid with
//! homogeneous Dirichlet ends, and θ-scheme time steps for it.

use crate::error::{Error, Result};
use crate::model::DerivedCoefficients;

use super::Axis;

/// Tridiagonal finite-difference matrix of the operator on the interior nodes
/// `1..n-1` (end nodes are held at zero).
#[derive(Debug, Clone)]
pub(crate) struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Operator {
    pub(crate) fn new(axis: &Axis, coeffs: &DerivedCoefficients) -> Result<Self> {
        let n = axis.n();
        let dx = axis.step();
        let inv2 = 1.0 / (dx * dx);
        let m = n - 2;
        let mut op = Operator {
            lower: Vec::with_capacity(m),
            diag: Vec::with_capacity(m),
            upper: Vec::with_capacity(m),
        };
        let mut a = [0.0];
        let mut b = [0.0];
        for i in 1..n - 1 {
            let x = [axis.node(i)];
            coeffs.a(&x, &mut a);
            coeffs.b_star(&x, &mut b);
            let c = coeffs.c(&x);
            if !(a[0].is_finite() && b[0].is_finite() && c.is_finite()) {
                return Err(Error::NonFinite {
                    what: "operator coefficient",
                    x: x.to_vec(),
                });
            }
            let diff = 0.5 * a[0] * inv2;
            let adv = 0.5 * b[0] / dx;
            op.lower.push(diff - adv);
            op.diag.push(-2.0 * diff + c);
            op.upper.push(diff + adv);
        }
        Ok(op)
    }

    /// Largest `dt` for which `I − θ dt A` stays diagonally dominant (infinite
    /// when it is dominant for every `dt`).
    fn dominance_limit(&self, theta: f64) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.diag.len() {
            r = r.max(self.lower[i].abs() + self.upper[i].abs() + self.diag[i]);
        }
        if r > 0.0 {
            1.0 / (theta * r)
        } else {
            f64::INFINITY
        }
    }
}

/// A pre-factorised θ-scheme step `(I − θ dt A) wⁿ⁺¹ = (I + (1−θ) dt A) wⁿ`.
#[derive(Debug, Clone)]
pub(crate) struct ThetaStepper {
    op: Operator,
    theta: f64,
    dt: f64,
    /// Thomas factors: sub-diagonal of the implicit matrix, reciprocal pivots
    /// and modified super-diagonal.
    sub: Vec<f64>,
    inv_pivot: Vec<f64>,
    sup_mod: Vec<f64>,
}

impl ThetaStepper {
    pub(crate) fn new(op: &Operator, theta: f64, dt: f64) -> Result<Self> {
        let m = op.diag.len();
        let mut sub = Vec::with_capacity(m);
        let mut inv_pivot = Vec::with_capacity(m);
        let mut sup_mod = Vec::with_capacity(m);
        let mut prev = 0.0;
        for i in 0..m {
            let a = -theta * dt * op.lower[i];
            let b = 1.0 - theta * dt * op.diag[i];
            let c = -theta * dt * op.upper[i];
            let pivot = b - a * prev;
            let scale = a.abs() + b.abs() + c.abs();
            if !(pivot.abs() > 1e-12 * scale) || !pivot.is_finite() {
                let limit = op.dominance_limit(theta);
                let suggested_dt = if limit.is_finite() { 0.5 * limit } else { 0.5 * dt };
                return Err(Error::Tridiagonal {
                    row: i + 1,
                    suggested_dt,
                });
            }
            let inv = 1.0 / pivot;
            sub.push(a);
            inv_pivot.push(inv);
            prev = c * inv;
            sup_mod.push(prev);
        }
        Ok(ThetaStepper {
            op: op.clone(),
            theta,
            dt,
            sub,
            inv_pivot,
            sup_mod,
        })
    }

    /// Advances `width` independent columns stored node-major: node `i` of
    /// column `j` is `w[i * width + j]`. `work` is resized as needed.
    pub(crate) fn apply(&self, w: &mut [f64], width: usize, work: &mut Vec<f64>) {
        let n = self.op.diag.len() + 2;
        debug_assert_eq!(w.len(), n * width);
        let explicit = (1.0 - self.theta) * self.dt;
        work.clear();
        work.resize(n * width, 0.0);
        // Right-hand side, then forward elimination in place in `work`.
        for i in 1..n - 1 {
            let k = i - 1;
            let (l, d, u) = (self.op.lower[k], self.op.diag[k], self.op.upper[k]);
            let (before, rest) = work.split_at_mut(i * width);
            let prev = &before[(i - 1) * width..];
            let row = &mut rest[..width];
            let wm = &w[(i - 1) * width..i * width];
            let w0 = &w[i * width..(i + 1) * width];
            let wp = &w[(i + 1) * width..(i + 2) * width];
            let a = self.sub[k];
            let inv = self.inv_pivot[k];
            for j in 0..width {
                let rhs = w0[j] + explicit * (l * wm[j] + d * w0[j] + u * wp[j]);
                row[j] = (rhs - a * prev[j]) * inv;
            }
        }
        // Back substitution; the end nodes stay zero.
        for j in 0..width {
            w[j] = 0.0;
            w[(n - 1) * width + j] = 0.0;
        }
        for i in (1..n - 1).rev() {
            let k = i - 1;
            let c = self.sup_mod[k];
            let (head, tail) = w.split_at_mut((i + 1) * width);
            let next = &tail[..width];
            let row = &mut head[i * width..];
            let src = &work[i * width..(i + 1) * width];
            for j in 0..width {
                row[j] = src[j] - c * next[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DerivativeHints, Field, FilteringModel};
    use std::sync::Arc;

    fn coeffs(a: f64, b: f64) -> DerivedCoefficients {
        let s = a.sqrt();
        let m = FilteringModel::new(
            "lin",
            1,
            Field::vector(1, move |x, out| out[0] = b * x[0]),
            Field::matrix(1, 1, move |_, out| out[0] = s),
            |_| 0.0,
            |_| 1.0,
        )
        .unwrap();
        DerivedCoefficients::derive(&m).unwrap()
    }

    fn dense_solve(op: &Operator, theta: f64, dt: f64, w: &[f64]) -> Vec<f64> {
        // Gaussian elimination on the full matrix as an independent route.
        let m = op.diag.len();
        let mut mat = vec![vec![0.0; m + 1]; m];
        for i in 0..m {
            let wi = w[i + 1];
            let wl = w[i];
            let wr = w[i + 2];
            let ex = (1.0 - theta) * dt;
            mat[i][m] = wi + ex * (op.lower[i] * wl + op.diag[i] * wi + op.upper[i] * wr);
            mat[i][i] = 1.0 - theta * dt * op.diag[i];
            if i > 0 {
                mat[i][i - 1] = -theta * dt * op.lower[i];
            }
            if i + 1 < m {
                mat[i][i + 1] = -theta * dt * op.upper[i];
            }
        }
        for col in 0..m {
            let p = mat[col][col];
            for r in col + 1..m {
                let f = mat[r][col] / p;
                for c in col..=m {
                    mat[r][c] -= f * mat[col][c];
                }
            }
        }
        let mut x = vec![0.0; m];
        for r in (0..m).rev() {
            let mut s = mat[r][m];
            for c in r + 1..m {
                s -= mat[r][c] * x[c];
            }
            x[r] = s / mat[r][r];
        }
        let mut out = vec![0.0];
        out.extend(x);
        out.push(0.0);
        out
    }

    #[test]
    fn thomas_matches_dense_elimination() {
        let axis = Axis::new(-3.0, 3.0, 25).unwrap();
        let c = coeffs(1.3, -0.7);
        let op = Operator::new(&axis, &c).unwrap();
        let w0: Vec<f64> = (0..25).map(|i| (-(axis.node(i)).powi(2)).exp()).collect();
        let st = ThetaStepper::new(&op, 0.5, 0.05).unwrap();
        let mut w = w0.clone();
        let mut work = Vec::new();
        st.apply(&mut w, 1, &mut work);
        let reference = dense_solve(&op, 0.5, 0.05, &w0);
        for i in 0..25 {
            assert!((w[i] - reference[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn columns_are_independent() {
        let axis = Axis::new(-3.0, 3.0, 20).unwrap();
        let c = coeffs(1.0, 0.5);
        let op = Operator::new(&axis, &c).unwrap();
        let st = ThetaStepper::new(&op, 1.0, 0.1).unwrap();
        let col = |s: f64| -> Vec<f64> { (0..20).map(|i| (-(axis.node(i) - s).powi(2)).exp()).collect() };
        let (c1, c2) = (col(0.0), col(0.5));
        let mut both = Vec::new();
        for i in 0..20 {
            both.push(c1[i]);
            both.push(c2[i]);
        }
        let mut work = Vec::new();
        st.apply(&mut both, 2, &mut work);
        let mut single = c2.clone();
        st.apply(&mut single, 1, &mut work);
        for i in 0..20 {
            assert_eq!(both[2 * i + 1], single[i]);
        }
    }

    #[test]
    fn breakdown_reports_a_smaller_step() {
        // c = -b' = 1 with a = 0: 1 - dt·c vanishes at dt = 1.
        let axis = Axis::new(-1.0, 1.0, 10).unwrap();
        let m = FilteringModel::new(
            "react",
            1,
            Field::vector(1, |x, out| out[0] = -x[0]),
            Field::matrix(1, 1, |_, out| out[0] = 0.0),
            |_| 0.0,
            |_| 1.0,
        )
        .unwrap()
        .with_hints(DerivativeHints {
            div_a: Some(Field::vector(1, |_, o| o[0] = 0.0)),
            div_div_a: Some(Arc::new(|_| 0.0)),
            div_b: Some(Arc::new(|_| -1.0)),
            grad_h: None,
        })
        .unwrap();
        let c = DerivedCoefficients::derive(&m).unwrap();
        let op = Operator::new(&axis, &c).unwrap();
        match ThetaStepper::new(&op, 1.0, 1.0) {
            Err(Error::Tridiagonal { suggested_dt, .. }) => assert!(suggested_dt < 1.0),
            other => panic!("expected breakdown, got {other:?}"),
        }
    }
}
