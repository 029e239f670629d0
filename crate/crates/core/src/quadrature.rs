//! Gauss–Hermite and adaptive Simpson quadrature.

const PI_M4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}

/// Gauss–Hermite rule for `∫ e^{-x²} f(x) dx` with `n` nodes.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of the orthonormal Hermite polynomial are bracketed by a sign
    /// scan on `[0, √(2n+1)]`, then polished by safeguarded Newton steps.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "need at least two nodes");
        let nf = n as f64;
        // (p_n(z), p_n'(z))
        let eval = |z: f64| {
            let mut p1 = PI_M4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            (p1, (2.0 * nf).sqrt() * p2)
        };
        let upper = (2.0 * nf + 1.0).sqrt();
        // spacing of neighbouring roots is at least ~ π / √(2n+1)
        let steps = 20 * n;
        let dz = upper / steps as f64;
        let mut roots = Vec::with_capacity(n / 2 + 1);
        let mut lo = if n % 2 == 1 {
            roots.push(0.0);
            dz * 0.5
        } else {
            0.0
        };
        let mut f_lo = eval(lo).0;
        while lo < upper && roots.len() < n.div_ceil(2) {
            let hi = lo + dz;
            let f_hi = eval(hi).0;
            if f_lo.signum() != f_hi.signum() {
                let (mut a, mut b, fa) = (lo, hi, f_lo);
                let mut z = 0.5 * (a + b);
                for _ in 0..100 {
                    let (p, dp) = eval(z);
                    if p.signum() == fa.signum() {
                        a = z;
                    } else {
                        b = z;
                    }
                    let newton = z - p / dp;
                    let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
                    if (next - z).abs() <= 1e-15 * z.abs().max(1.0) {
                        z = next;
                        break;
                    }
                    z = next;
                }
                roots.push(z);
            }
            lo = hi;
            f_lo = f_hi;
        }
        assert_eq!(roots.len(), n.div_ceil(2), "failed to bracket all Hermite roots");
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for (k, &z) in roots.iter().enumerate() {
            let i = n.div_ceil(2) - 1 - k; // largest root first
            let pp = eval(z).1;
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        GaussHermite { nodes: x, weights: w }
    }

    /// `E[f(X)]` for `X ~ N(mean, sd²)`.
    pub fn expect_normal(&self, mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| w * f(mean + scale * x))
            .sum();
        sum / std::f64::consts::PI.sqrt()
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
