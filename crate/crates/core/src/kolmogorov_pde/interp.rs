//! One-dimensional interpolation kernels on uniform grids.

/// Cubic Lagrange weights for nodes at offsets `−1, 0, 1, 2` evaluated at `t`.
#[inline]
pub(crate) fn lagrange4(t: f64) -> [f64; 4] {
    let tm1 = t - 1.0;
    let tm2 = t - 2.0;
    let tp1 = t + 1.0;
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

/// Four-point stencil for a fractional grid position `pos` (in index units)
/// on a grid of `n ≥ 4` nodes: the first index and the weights.
#[inline]
pub(crate) fn stencil(pos: f64, n: usize) -> (usize, [f64; 4]) {
    let i = pos.floor() as isize;
    let base = (i - 1).clamp(0, n as isize - 4) as usize;
    (base, lagrange4(pos - (base as f64 + 1.0)))
}

/// Slopes (per index step) for cubic Hermite interpolation of `f`: fourth
/// order centred differences in the interior, lower order at the ends, then
/// limited so the interpolant preserves monotone data.
///
/// The limiter is Hyman's (`|m| ≤ 3 min(|Δ₋|, |Δ₊|)` where the data are
/// monotone, zero slope at a data extremum) with the Dougherty–Edelman–Hyman
/// relaxation: where the one-sided parabolic slope estimates agree with the
/// centred one the bound is raised to `1.5 min(|p₀|, |p±|)`, which keeps smooth
/// extrema and their neighbours at full accuracy.
pub(crate) fn hermite_slopes(f: &[f64], m: &mut [f64]) {
    let n = f.len();
    debug_assert!(n >= 4 && m.len() == n);
    m[0] = f[1] - f[0];
    m[n - 1] = f[n - 1] - f[n - 2];
    m[1] = 0.5 * (f[2] - f[0]);
    m[n - 2] = 0.5 * (f[n - 1] - f[n - 3]);
    for j in 2..n - 2 {
        m[j] = (f[j - 2] - 8.0 * f[j - 1] + 8.0 * f[j + 1] - f[j + 2]) / 12.0;
    }
    for j in 1..n - 1 {
        let dl = f[j] - f[j - 1];
        let dr = f[j + 1] - f[j];
        let p0 = 0.5 * (dl + dr);
        let mut cap = if dl * dr > 0.0 {
            3.0 * dl.abs().min(dr.abs())
        } else {
            0.0
        };
        if j >= 2 {
            let dll = f[j - 1] - f[j - 2];
            let pm = 0.5 * (3.0 * dl - dll);
            if p0 * pm > 0.0 && pm * dl > 0.0 && (dl - dll) * (dr - dl) > 0.0 {
                cap = cap.max(1.5 * p0.abs().min(pm.abs()));
            }
        }
        if j + 2 < n {
            let drr = f[j + 2] - f[j + 1];
            let pp = 0.5 * (3.0 * dr - drr);
            if p0 * pp > 0.0 && pp * dr > 0.0 && (dr - dl) * (drr - dr) > 0.0 {
                cap = cap.max(1.5 * p0.abs().min(pp.abs()));
            }
        }
        m[j] = if m[j] * p0 < 0.0 {
            0.0
        } else {
            m[j].signum() * m[j].abs().min(cap)
        };
    }
}

/// Evaluates the Hermite interpolant of `(f, m)` at every `j − shift`
/// (`shift` in index units), writing into `out`. Departure points outside the
/// grid take the nearest end value.
pub(crate) fn hermite_shift(f: &[f64], m: &[f64], shift: f64, out: &mut [f64]) {
    let n = f.len();
    let back = -shift;
    let k0 = back.floor();
    let t = back - k0;
    let k0 = k0 as isize;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    for (j, o) in out.iter_mut().enumerate() {
        let k = j as isize + k0;
        *o = if k < 0 {
            f[0]
        } else if k as usize >= n - 1 {
            f[n - 1]
        } else {
            let k = k as usize;
            h00 * f[k] + h10 * m[k] + h01 * f[k + 1] + h11 * m[k + 1]
        };
    }
}
