//! Reference computations the library results are checked against. Each is
//! written independently of the crate's own numerics.

#![allow(dead_code)]

/// Least squares by Gauss-Jordan elimination (partial pivoting) on the
/// normal equations. Returns coefficients and residual sum of squares.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let p = rows[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (r, &yi) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += r[i] * r[j];
            }
            a[i][p] += r[i] * yi;
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for i in 0..p {
            if i != col {
                let f = a[i][col];
                for j in 0..=p {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
    }
    let beta: Vec<f64> = a.iter().map(|r| r[p]).collect();
    let rss = rows
        .iter()
        .zip(y)
        .map(|(r, &yi)| {
            let fit: f64 = r.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    (beta, rss)
}

fn ln_f_density(x: f64, d1: f64, d2: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_b = ln_gamma(d1 / 2.0) + ln_gamma(d2 / 2.0) - ln_gamma((d1 + d2) / 2.0);
    0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln() - ln_b
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson integral of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// F(d1, d2) CDF by quadrature of the density. Substituting x = u² removes
/// the x^(d1/2 - 1) singularity at zero when d1 = 1.
pub fn f_cdf_quadrature(f: f64, d1: usize, d2: usize) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let (d1, d2) = (d1 as f64, d2 as f64);
    let g = |u: f64| {
        if u <= 0.0 {
            if d1 == 1.0 {
                // limit of 2u · p(u²) as u → 0
                2.0 * (0.5 * (1.0 / d2).ln() - ln_f_density_norm(d1, d2)).exp()
            } else {
                0.0
            }
        } else {
            2.0 * u * ln_f_density(u * u, d1, d2).exp()
        }
    };
    integrate(&g, 0.0, f.sqrt(), 1e-13)
}

fn ln_f_density_norm(d1: f64, d2: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(d1 / 2.0) + ln_gamma(d2 / 2.0) - ln_gamma((d1 + d2) / 2.0)
}

/// Central finite-difference gradient of `loss` at `x`.
pub fn central_difference(loss: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Hidden pre-activations of the one-layer network (W1 is hidden × input,
/// row-major, followed by b1).
pub fn hidden_preactivations(input: usize, hidden: usize, params: &[f64], x: &[f64]) -> Vec<f64> {
    let (w1, b1) = (&params[..hidden * input], &params[hidden * input..hidden * (input + 1)]);
    x.chunks(input)
        .flat_map(|row| (0..hidden).map(move |j| b1[j] + (0..input).map(|i| w1[j * input + i] * row[i]).sum::<f64>()))
        .collect()
}

/// Windows that fit by checking every candidate anchor against the
/// definition: `context + delta` steps before it, `horizon` steps from it,
/// and on the stride grid that starts at the first valid anchor.
pub fn enumerate_windows(steps: usize, context: usize, horizon: usize, delta: usize, stride: usize) -> usize {
    let first = context + delta;
    (0..=steps)
        .filter(|&t| t >= first && t + horizon <= steps && (t - first) % stride == 0)
        .count()
}
