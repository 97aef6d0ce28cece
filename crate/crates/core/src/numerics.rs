//! Quadrature, interpolation, and root-finding helpers shared by the
//! transform, solver, and validation modules.

/// Composite Simpson rule on uniformly spaced samples with spacing `h`.
///
/// Odd interval counts use Simpson 3/8 on the trailing three intervals;
/// two samples fall back to the trapezoid rule.
pub fn integrate_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 2, "need at least two samples");
    let intervals = n - 1;
    if intervals == 1 {
        return 0.5 * h * (values[0] + values[1]);
    }
    let (simpson_end, mut total) = if intervals.is_multiple_of(2) {
        (n - 1, 0.0)
    } else if intervals == 3 {
        (0, 0.0)
    } else {
        (n - 4, 0.0)
    };
    if simpson_end > 0 {
        let mut sum = values[0] + values[simpson_end];
        let mut odd = 0.0;
        let mut even = 0.0;
        for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
            if i % 2 == 1 {
                odd += v;
            } else {
                even += v;
            }
        }
        sum += 4.0 * odd + 2.0 * even;
        total += sum * h / 3.0;
    }
    if intervals % 2 == 1 {
        let k = n - 4;
        total += 3.0 * h / 8.0 * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]);
    }
    total
}

/// Cumulative integral on a uniform grid: `out[j] = ∫_{x_0}^{x_j} f`.
///
/// Each cell is integrated with the quadratic through the three nearest
/// nodes, so the rule is exact for parabolic data and fourth-order
/// accurate globally. Two samples fall back to the trapezoid rule.
pub fn cumulative_uniform(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 2, "need at least two samples");
    let mut out = vec![0.0; n];
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    for j in 0..n - 1 {
        let inc = if j == 0 {
            h * (5.0 * values[0] + 8.0 * values[1] - values[2]) / 12.0
        } else {
            h * (-values[j - 1] + 8.0 * values[j] + 5.0 * values[j + 1]) / 12.0
        };
        out[j + 1] = out[j] + inc;
    }
    out
}

/// Integral over `[lo, hi]` of the quadratic through the three nodes
/// `(x[i], f[i])`, via exact antiderivatives of the Lagrange basis.
fn quadratic_integral(x: [f64; 3], f: [f64; 3], lo: f64, hi: f64) -> f64 {
    let basis = |p: f64, q: f64, t: f64| -> f64 {
        // antiderivative of (t - p)(t - q)
        t * t * t / 3.0 - 0.5 * (p + q) * t * t + p * q * t
    };
    let term = |p: f64, q: f64, denom: f64, w: f64| -> f64 {
        w * (basis(p, q, hi) - basis(p, q, lo)) / denom
    };
    term(x[1], x[2], (x[0] - x[1]) * (x[0] - x[2]), f[0])
        + term(x[0], x[2], (x[1] - x[0]) * (x[1] - x[2]), f[1])
        + term(x[0], x[1], (x[2] - x[0]) * (x[2] - x[1]), f[2])
}

/// Integral of sampled data on a (possibly non-uniform) strictly
/// increasing grid, using piecewise quadratics over interval pairs.
pub fn integrate_nonuniform(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    assert_eq!(n, y.len());
    assert!(n >= 2, "need at least two samples");
    if n == 2 {
        return 0.5 * (x[1] - x[0]) * (y[0] + y[1]);
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let xs = [x[i], x[i + 1], x[i + 2]];
        total += quadratic_integral(xs, [y[i], y[i + 1], y[i + 2]], x[i], x[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        // odd tail: quadratic through the last three nodes on the last interval
        let k = n - 3;
        let xs = [x[k], x[k + 1], x[k + 2]];
        total += quadratic_integral(xs, [y[k], y[k + 1], y[k + 2]], x[n - 2], x[n - 1]);
    }
    total
}

/// Bisection on `[lo, hi]` for a continuous function with a sign change.
/// Returns the midpoint once the bracket is below `tol` wide.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo * fhi > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Piecewise-linear interpolation with clamped ends. `xs` must be
/// strictly increasing.
pub fn linear_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let idx = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => return ys[i],
        Err(i) => i - 1,
    };
    let t = (x - xs[idx]) / (xs[idx + 1] - xs[idx]);
    ys[idx] + t * (ys[idx + 1] - ys[idx])
}

/// Natural cubic spline through `(x_i, y_i)` with strictly increasing knots.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn fit(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        assert_eq!(n, y.len());
        assert!(n >= 3, "spline needs at least three knots");
        for w in x.windows(2) {
            assert!(w[1] > w[0], "spline knots must be strictly increasing");
        }
        // Thomas algorithm for the natural-spline tridiagonal system.
        let mut second = vec![0.0; n];
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let c = h1;
            let d = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let denom = b - a * cp[i - 1];
            cp[i] = c / denom;
            dp[i] = (d - a * dp[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            second[i] = dp[i] - cp[i] * second[i + 1];
        }
        CubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            second,
        }
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.x.len();
        if x <= self.x[0] {
            return 0;
        }
        if x >= self.x[n - 1] {
            return n - 2;
        }
        match self.x.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        }
    }

    /// Value and first derivative at `x` (linear extrapolation outside the knots).
    pub fn eval_with_deriv(&self, x: f64) -> (f64, f64) {
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - x) / h;
        let b = (x - self.x[i]) / h;
        let v = a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h / 6.0;
        let d = (self.y[i + 1] - self.y[i]) / h
            - (3.0 * a * a - 1.0) / 6.0 * h * self.second[i]
            + (3.0 * b * b - 1.0) / 6.0 * h * self.second[i + 1];
        (v, d)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_deriv(x).0
    }
}

/// Least-squares line fit. Returns `(slope, intercept, r_squared)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}
