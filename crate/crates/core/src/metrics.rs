//! Total-variation estimation between sample batches.
//!
//! The estimator trains a linear logistic probe to tell the two batches
//! apart and converts its held-out balanced accuracy into a TV lower bound,
//! `TV ≥ 2·acc − 1`.

use rand::seq::SliceRandom;

use crate::batch::SampleBatch;
use crate::error::{domain, Result};
use crate::exec::{self, Execution};
use crate::quadrature::adaptive_simpson;
use crate::rng;

pub const MIN_BATCH: usize = 200;
pub const GD_ITERATIONS: usize = 500;
pub const GD_STEP: f64 = 0.1;
pub const L2_WEIGHT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TvEstimate {
    pub value: f64,
    pub std_error: f64,
    pub rounds: usize,
    pub per_round: Vec<f64>,
}

impl TvEstimate {
    fn from_rounds(per_round: Vec<f64>) -> Self {
        let r = per_round.len() as f64;
        // fixed left-to-right reduction
        let mean = per_round.iter().sum::<f64>() / r;
        let std_error = if per_round.len() > 1 {
            let ss: f64 = per_round.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (r - 1.0)).sqrt() / r.sqrt()
        } else {
            0.0
        };
        TvEstimate {
            value: mean.clamp(0.0, 1.0),
            std_error,
            rounds: per_round.len(),
            per_round,
        }
    }
}

/// Classifier-based TV estimate over `rounds` independent random splits.
///
/// Each round shuffles the pooled, labelled data with its own substream,
/// trains on one half and scores balanced accuracy on the other.
pub fn estimate_tv(
    a: &SampleBatch,
    b: &SampleBatch,
    rounds: usize,
    seed: u64,
    exec: Execution,
) -> Result<TvEstimate> {
    if a.dim() != b.dim() {
        return domain(format!("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    if a.len() < MIN_BATCH || b.len() < MIN_BATCH {
        return domain(format!(
            "each batch needs at least {MIN_BATCH} samples, got {} and {}",
            a.len(),
            b.len()
        ));
    }
    if rounds == 0 {
        return domain("need at least one round");
    }
    let d = a.dim();
    let total = a.len() + b.len();
    let mut pooled = Vec::with_capacity(total * d);
    pooled.extend_from_slice(a.data());
    pooled.extend_from_slice(b.data());
    let labels: Vec<bool> = (0..total).map(|i| i >= a.len()).collect();
    let per_round = exec::map_indexed(exec, rounds, |r| {
        let mut idx: Vec<usize> = (0..total).collect();
        idx.shuffle(&mut rng::substream(seed, r as u64, 0));
        let (train, test) = idx.split_at(total / 2);
        let probe = LogisticProbe::fit(&pooled, &labels, d, train);
        let acc = probe.balanced_accuracy(&pooled, &labels, d, test);
        (2.0 * acc - 1.0).max(0.0)
    });
    Ok(TvEstimate::from_rounds(per_round))
}

struct LogisticProbe {
    center: Vec<f64>,
    inv_scale: Vec<f64>,
    w: Vec<f64>,
    bias: f64,
}

impl LogisticProbe {
    fn fit(data: &[f64], labels: &[bool], d: usize, rows: &[usize]) -> Self {
        let m = rows.len() as f64;
        let mut center = vec![0.0; d];
        for &i in rows {
            for (c, x) in center.iter_mut().zip(&data[i * d..(i + 1) * d]) {
                *c += x;
            }
        }
        center.iter_mut().for_each(|c| *c /= m);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((v, x), c) in var.iter_mut().zip(&data[i * d..(i + 1) * d]).zip(&center) {
                *v += (x - c) * (x - c);
            }
        }
        // constant features carry no signal; leave them centred at zero
        let inv_scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / m).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    0.0
                }
            })
            .collect();

        let mut z = vec![0.0; rows.len() * d];
        for (k, &i) in rows.iter().enumerate() {
            let src = &data[i * d..(i + 1) * d];
            for j in 0..d {
                z[k * d + j] = (src[j] - center[j]) * inv_scale[j];
            }
        }
        let y: Vec<f64> = rows.iter().map(|&i| if labels[i] { 1.0 } else { 0.0 }).collect();

        let mut w = vec![0.0; d];
        let mut bias = 0.0;
        let mut grad = vec![0.0; d];
        for _ in 0..GD_ITERATIONS {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for (k, row) in z.chunks_exact(d).enumerate() {
                let logit = bias + dot(row, &w);
                let r = sigmoid(logit) - y[k];
                gb += r;
                for (g, x) in grad.iter_mut().zip(row) {
                    *g += r * x;
                }
            }
            for (wj, g) in w.iter_mut().zip(&grad) {
                *wj -= GD_STEP * (g / m + L2_WEIGHT * *wj);
            }
            bias -= GD_STEP * gb / m;
        }
        LogisticProbe {
            center,
            inv_scale,
            w,
            bias,
        }
    }

    fn predict(&self, x: &[f64]) -> bool {
        let logit = self.bias
            + x.iter()
                .zip(&self.center)
                .zip(&self.inv_scale)
                .zip(&self.w)
                .map(|(((x, c), s), w)| (x - c) * s * w)
                .sum::<f64>();
        logit > 0.0
    }

    fn balanced_accuracy(&self, data: &[f64], labels: &[bool], d: usize, rows: &[usize]) -> f64 {
        let (mut hit, mut count) = ([0usize; 2], [0usize; 2]);
        for &i in rows {
            let class = labels[i] as usize;
            count[class] += 1;
            if self.predict(&data[i * d..(i + 1) * d]) == labels[i] {
                hit[class] += 1;
            }
        }
        let per_class: Vec<f64> = (0..2)
            .filter(|&c| count[c] > 0)
            .map(|c| hit[c] as f64 / count[c] as f64)
            .collect();
        per_class.iter().sum::<f64>() / per_class.len() as f64
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `½ ∫ |N(mu1, v1) - N(mu2, v2)|` by adaptive quadrature, split at the
/// points where the densities cross.
pub fn tv_oracle_gaussian_1d(mu1: f64, v1: f64, mu2: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0) {
        return domain(format!("variances must be positive, got {v1} and {v2}"));
    }
    let log_pdf = |x: f64, mu: f64, v: f64| -0.5 * (x - mu).powi(2) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
    let f = |x: f64| 0.5 * (log_pdf(x, mu1, v1).exp() - log_pdf(x, mu2, v2).exp()).abs();

    // log p - log q = A x² + B x + C
    let a = 0.5 * (1.0 / v2 - 1.0 / v1);
    let b = mu1 / v1 - mu2 / v2;
    let c = 0.5 * (mu2 * mu2 / v2 - mu1 * mu1 / v1) + 0.5 * (v2 / v1).ln();
    let mut cuts = Vec::new();
    if a.abs() < 1e-300 {
        if b != 0.0 {
            cuts.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let r = disc.sqrt();
            cuts.push((-b - r) / (2.0 * a));
            cuts.push((-b + r) / (2.0 * a));
        }
    }
    let sd = v1.sqrt().max(v2.sqrt());
    let lo = mu1.min(mu2) - 40.0 * sd;
    let hi = mu1.max(mu2) + 40.0 * sd;
    let mut knots = vec![lo];
    cuts.retain(|x| x.is_finite() && *x > lo && *x < hi);
    cuts.sort_by(f64::total_cmp);
    knots.extend(cuts);
    // keep pieces short relative to the narrower density
    let narrow = v1.sqrt().min(v2.sqrt());
    let mut fine = vec![lo];
    for w in knots.windows(2).map(|w| w[1]).chain(std::iter::once(hi)) {
        let start = *fine.last().unwrap();
        let pieces = ((w - start) / narrow).ceil().clamp(1.0, 10_000.0) as usize;
        for k in 1..=pieces {
            fine.push(start + (w - start) * k as f64 / pieces as f64);
        }
    }
    let tol = 1e-10 / fine.len() as f64;
    let total: f64 = fine.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], tol)).sum();
    Ok(total.clamp(0.0, 1.0))
}

/// Sample mean and unbiased per-coordinate variance.
pub fn moment_stats(batch: &SampleBatch) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = batch.len();
    if n < 2 {
        return domain(format!("moment statistics need at least 2 samples, got {n}"));
    }
    let d = batch.dim();
    let mut mean = vec![0.0; d];
    for row in batch.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in batch.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= (n - 1) as f64);
    Ok((mean, var))
}
