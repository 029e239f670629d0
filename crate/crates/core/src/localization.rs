//! Clock changes between stochastic localization (SL), the RF path and the
//! DDPM forward process, plus the checks built on them.
//!
//! With `U_s = s X₁ + B_s`, the rescaled processes `U_s / s`,
//! `X̃_{t(s)} / t(s)` (RF, `t(s) = √s / (1 + √s)`) and
//! `Y'_{τ(s)} / √ω_{τ(s)}` (DDPM, `(1 - ω_{τ(s)}) / ω_{τ(s)} = 1/s`) all share
//! the law of `X₁ + B_{1/s}`.

use crate::error::{domain, Error, Result};
use crate::exec::{self, Execution};
use crate::quadrature::GaussHermite;
use crate::rng;
use crate::targets::{posterior_moments, Target};

/// `t(s) = √s / (1 + √s)`, i.e. `((1 - t)/t)² = 1/s`.
pub fn rf_time_from_sl(s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return domain(format!("SL time must be positive and finite, got {s}"));
    }
    let r = s.sqrt();
    Ok(r / (1.0 + r))
}

/// Inverse of [`rf_time_from_sl`]: `s = (t / (1 - t))²`.
pub fn sl_time_from_rf(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return domain(format!("RF time must lie in (0, 1), got {t}"));
    }
    let r = t / (1.0 - t);
    Ok(r * r)
}

/// Diffusion coefficient `β(τ)` of the DDPM forward SDE.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BetaProfile {
    /// `β ≡ 1` (Ornstein–Uhlenbeck).
    #[default]
    Ou,
    /// `β(τ) = start + slope · τ`, with `start > 0` and `slope >= 0`.
    Linear { start: f64, slope: f64 },
}

impl BetaProfile {
    fn validate(&self) -> Result<()> {
        match *self {
            BetaProfile::Ou => Ok(()),
            BetaProfile::Linear { start, slope } if start > 0.0 && slope >= 0.0 => Ok(()),
            BetaProfile::Linear { .. } => domain("linear beta profile needs start > 0 and slope >= 0"),
        }
    }

    /// `∫₀^τ β(u) du`.
    pub fn integral(&self, tau: f64) -> f64 {
        match *self {
            BetaProfile::Ou => tau,
            BetaProfile::Linear { start, slope } => start * tau + 0.5 * slope * tau * tau,
        }
    }

    /// Solve `∫₀^τ β = level` for `τ`. Closed form for OU, bisection otherwise.
    pub fn inverse_integral(&self, level: f64) -> Result<f64> {
        self.validate()?;
        if !(level >= 0.0 && level.is_finite()) {
            return domain(format!("integral level must be finite and non-negative, got {level}"));
        }
        if let BetaProfile::Ou = self {
            return Ok(level);
        }
        let mut hi = 1.0;
        while self.integral(hi) < level {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.integral(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `ω_τ = exp(-2 ∫₀^τ β)`.
    pub fn omega(&self, tau: f64) -> f64 {
        (-2.0 * self.integral(tau)).exp()
    }
}

/// DDPM time `τ(s)` with `∫₀^τ β = ½ log(1 + 1/s)`.
pub fn ddpm_time_from_sl(s: f64, beta: BetaProfile) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return domain(format!("SL time must be positive and finite, got {s}"));
    }
    beta.inverse_integral(0.5 * (1.0 / s).ln_1p())
}

/// Inverse of [`ddpm_time_from_sl`]: `s = 1 / (exp(2 ∫₀^τ β) - 1)`.
pub fn sl_time_from_ddpm(tau: f64, beta: BetaProfile) -> Result<f64> {
    beta.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
        return domain(format!("DDPM time must be positive and finite, got {tau}"));
    }
    Ok(1.0 / (2.0 * beta.integral(tau)).exp_m1())
}

/// `t(ω) = √ω / (√ω + √(1 - ω))`.
pub fn rf_time_from_ddpm(omega: f64) -> Result<f64> {
    if !(omega > 0.0 && omega < 1.0) {
        return domain(format!("omega must lie in (0, 1), got {omega}"));
    }
    Ok(crate::schedules::rf_time_of_omega(omega))
}

/// Inverse of [`rf_time_from_ddpm`]: `ω = t² / σ_t²`.
pub fn ddpm_omega_from_rf(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return domain(format!("RF time must lie in (0, 1), got {t}"));
    }
    Ok(t * t / crate::samplers::sigma2(t))
}

/// Solve `(b_θ / a_θ)² = 1/s` for θ in (0, 1) by bisection.
///
/// The interpolant `a_θ X₁ + b_θ X₀` must have a decreasing noise-to-signal
/// ratio `r_θ = b_θ / a_θ`; this is checked on a fine grid and violations
/// are reported as [`Error::NoRoot`].
pub fn interpolant_time_change<A, B>(a: A, b: B, s: f64) -> Result<f64>
where
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    if !(s > 0.0 && s.is_finite()) {
        return domain(format!("SL time must be positive and finite, got {s}"));
    }
    // g(θ) = 2 log r_θ + log s is decreasing with a root where r² = 1/s
    let g = |theta: f64| 2.0 * (b(theta) / a(theta)).ln() + s.ln();
    const PROBES: usize = 1000;
    let mut prev = f64::INFINITY;
    for k in 1..PROBES {
        let v = g(k as f64 / PROBES as f64);
        if v.is_nan() || v >= prev {
            return Err(Error::NoRoot(format!(
                "b/a is not strictly decreasing near θ = {}",
                k as f64 / PROBES as f64
            )));
        }
        prev = v;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let g_lo = g(f64::EPSILON);
    let g_hi = g(1.0 - f64::EPSILON);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::NoRoot(format!("(b/a)² does not cross 1/s = {} on (0, 1)", 1.0 / s)));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcessKind {
    /// `U_s = s X₁ + B_s`, clocked by `s > 0`.
    Sl,
    /// `X̃_t = t X₁ + t W_{(1-t)²/t²}`, clocked by `t ∈ (0, 1)`.
    RfLinear,
    /// `Y'_τ = √ω_τ (X₁ + B̃_{(1-ω_τ)/ω_τ})`, clocked by `τ > 0`.
    DdpmForward(BetaProfile),
}

/// Simulated states of a forward process at increasing clock points.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPath {
    pub kind: ProcessKind,
    pub times: Vec<f64>,
    /// `states[k]` is the `n × d` batch at `times[k]`.
    pub states: Vec<Vec<f64>>,
    pub n: usize,
    pub dim: usize,
}

impl ProcessKind {
    /// Brownian clock `u` driving the process at its own time, and the
    /// affine map `state = signal · (X₁ + B_u)` expressed as
    /// `(u, signal)` with `U_s = s (X₁ + B_s / s)` rewritten the same way.
    fn brownian_clock(&self, time: f64) -> Result<(f64, f64)> {
        match *self {
            ProcessKind::Sl => {
                if !(time > 0.0 && time.is_finite()) {
                    return domain(format!("SL clock must be positive, got {time}"));
                }
                // s X₁ + B_s = s (X₁ + B_s / s) and B_s / s has the law of B_{1/s};
                // we simulate B_s directly instead, see `simulate_forward`.
                Ok((time, time))
            }
            ProcessKind::RfLinear => {
                if !(time > 0.0 && time < 1.0) {
                    return domain(format!("RF clock must lie in (0, 1), got {time}"));
                }
                let r = (1.0 - time) / time;
                Ok((r * r, time))
            }
            ProcessKind::DdpmForward(beta) => {
                beta.validate()?;
                if !(time > 0.0 && time.is_finite()) {
                    return domain(format!("DDPM clock must be positive, got {time}"));
                }
                let omega = beta.omega(time);
                Ok(((1.0 - omega) / omega, omega.sqrt()))
            }
        }
    }
}

/// Exact-in-law simulation. One draw of `X₁` per trajectory (substream
/// `(seed_x1, j, 0)`); Brownian increments are added in order of the
/// Brownian clock so all states of a trajectory come from one path.
pub fn simulate_forward(
    kind: ProcessKind,
    target: &Target,
    clocks: &[f64],
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<ForwardPath> {
    if clocks.is_empty() || n == 0 {
        return domain("need at least one clock point and one trajectory");
    }
    if clocks.windows(2).any(|w| w[1] <= w[0]) {
        return domain("clock points must be strictly increasing");
    }
    let maps: Vec<(f64, f64)> = clocks.iter().map(|&c| kind.brownian_clock(c)).collect::<Result<_>>()?;
    let d = target.dim();
    let x1 = crate::targets::sample_target(target, n, rng::derive_seed(seed, rng::label("x1")), exec)?;
    let noise_seed = rng::derive_seed(seed, rng::label("brownian"));
    // visit clocks in increasing Brownian time
    let mut order: Vec<usize> = (0..clocks.len()).collect();
    order.sort_by(|&a, &b| maps[a].0.total_cmp(&maps[b].0));

    let per_traj: Vec<Vec<f64>> = exec::map_indexed(exec, n, |j| {
        let x = x1.row(j);
        let mut out = vec![0.0; clocks.len() * d];
        let mut bm = vec![0.0; d];
        let mut u_prev = 0.0;
        let mut xi = vec![0.0; d];
        for (k, &idx) in order.iter().enumerate() {
            let (u, signal) = maps[idx];
            let sd = (u - u_prev).max(0.0).sqrt();
            rng::fill_standard_normal(&mut rng::substream(noise_seed, j as u64, k as u64 + 1), &mut xi);
            for (b, z) in bm.iter_mut().zip(&xi) {
                *b += sd * z;
            }
            u_prev = u;
            let row = &mut out[idx * d..(idx + 1) * d];
            match kind {
                ProcessKind::Sl => {
                    for c in 0..d {
                        row[c] = signal * x[c] + bm[c];
                    }
                }
                _ => {
                    for c in 0..d {
                        row[c] = signal * (x[c] + bm[c]);
                    }
                }
            }
        }
        out
    });

    let mut states = vec![Vec::with_capacity(n * d); clocks.len()];
    for traj in &per_traj {
        for (k, s) in states.iter_mut().enumerate() {
            s.extend_from_slice(&traj[k * d..(k + 1) * d]);
        }
    }
    Ok(ForwardPath {
        kind,
        times: clocks.to_vec(),
        states,
        n,
        dim: d,
    })
}

/// Sample moments used by the equivalence report.
#[derive(Debug, Clone)]
struct Moments {
    mean: Vec<f64>,
    var: Vec<f64>,
    /// Standard errors of `mean` and `var`.
    se_mean: Vec<f64>,
    se_var: Vec<f64>,
}

fn moments(data: &[f64], n: usize, d: usize, scale: f64) -> Moments {
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for row in data.chunks_exact(d) {
        for c in 0..d {
            mean[c] += row[c] * scale;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut m2 = vec![0.0; d];
    let mut m4 = vec![0.0; d];
    for row in data.chunks_exact(d) {
        for c in 0..d {
            let r = row[c] * scale - mean[c];
            let r2 = r * r;
            m2[c] += r2;
            m4[c] += r2 * r2;
        }
    }
    let var: Vec<f64> = m2.iter().map(|s| s / (nf - 1.0)).collect();
    let se_mean = var.iter().map(|v| (v / nf).sqrt()).collect();
    let se_var = (0..d)
        .map(|c| {
            let mu4 = m4[c] / nf;
            let s2 = m2[c] / nf;
            ((mu4 - s2 * s2).max(0.0) / nf).sqrt()
        })
        .collect();
    Moments {
        mean,
        var,
        se_mean,
        se_var,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Variance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRecord {
    pub s: f64,
    pub pair: (&'static str, &'static str),
    pub coordinate: usize,
    pub statistic: Statistic,
    pub gap: f64,
    pub std_error: f64,
}

impl EquivalenceRecord {
    pub fn z_score(&self) -> f64 {
        if self.std_error > 0.0 {
            self.gap.abs() / self.std_error
        } else if self.gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub records: Vec<EquivalenceRecord>,
    /// Rescaled per-coordinate means, one vector per (process, s).
    pub rescaled_means: Vec<(&'static str, f64, Vec<f64>)>,
    pub threshold: f64,
}

impl EquivalenceReport {
    pub fn max_z(&self) -> f64 {
        self.records.iter().map(|r| r.z_score()).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_z() <= self.threshold
    }
}

/// Simulate SL, RF-linear and DDPM-forward (β ≡ 1) at matched clocks
/// `s, t(s), τ(s)`, rescale each to the SL scale `U_s / s` and compare
/// per-coordinate means and variances pairwise. The three processes use
/// independent randomness; a gap passes when within 4 standard errors.
pub fn check_marginal_equivalence(
    target: &Target,
    s_points: &[f64],
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<EquivalenceReport> {
    if n < 2 {
        return domain("need at least two trajectories");
    }
    let mut s_sorted = s_points.to_vec();
    s_sorted.sort_by(f64::total_cmp);
    s_sorted.dedup();
    let d = target.dim();
    let beta = BetaProfile::Ou;

    let sl = simulate_forward(ProcessKind::Sl, target, &s_sorted, n, rng::derive_seed(seed, 1), exec)?;
    let rf_clocks: Vec<f64> = s_sorted.iter().map(|&s| rf_time_from_sl(s)).collect::<Result<_>>()?;
    let rf = simulate_forward(ProcessKind::RfLinear, target, &rf_clocks, n, rng::derive_seed(seed, 2), exec)?;
    // τ(s) decreases in s
    let mut ddpm_clocks: Vec<f64> = s_sorted.iter().map(|&s| ddpm_time_from_sl(s, beta)).collect::<Result<_>>()?;
    ddpm_clocks.reverse();
    let ddpm = simulate_forward(
        ProcessKind::DdpmForward(beta),
        target,
        &ddpm_clocks,
        n,
        rng::derive_seed(seed, 3),
        exec,
    )?;

    let mut records = Vec::new();
    let mut rescaled_means = Vec::new();
    for (k, &s) in s_sorted.iter().enumerate() {
        let kd = s_sorted.len() - 1 - k;
        let stats = [
            ("sl", moments(&sl.states[k], n, d, 1.0 / s)),
            ("rf", moments(&rf.states[k], n, d, 1.0 / rf_clocks[k])),
            ("ddpm", moments(&ddpm.states[kd], n, d, 1.0 / beta.omega(ddpm_clocks[kd]).sqrt())),
        ];
        for (name, m) in &stats {
            rescaled_means.push((*name, s, m.mean.clone()));
        }
        for a in 0..stats.len() {
            for b in a + 1..stats.len() {
                let (na, ma) = (&stats[a].0, &stats[a].1);
                let (nb, mb) = (&stats[b].0, &stats[b].1);
                for c in 0..d {
                    records.push(EquivalenceRecord {
                        s,
                        pair: (na, nb),
                        coordinate: c,
                        statistic: Statistic::Mean,
                        gap: ma.mean[c] - mb.mean[c],
                        std_error: ma.se_mean[c].hypot(mb.se_mean[c]),
                    });
                    records.push(EquivalenceRecord {
                        s,
                        pair: (na, nb),
                        coordinate: c,
                        statistic: Statistic::Variance,
                        gap: ma.var[c] - mb.var[c],
                        std_error: ma.se_var[c].hypot(mb.se_var[c]),
                    });
                }
            }
        }
    }
    Ok(EquivalenceReport {
        records,
        rescaled_means,
        threshold: 4.0,
    })
}

/// Nodes of the Gauss–Hermite rule used for mixture expectations.
pub const COVARIANCE_QUADRATURE_NODES: usize = 200;
/// Central-difference step in `t`.
pub const COVARIANCE_FD_STEP: f64 = 1e-5;

/// `(E[Σ_t], E[Σ_t²])` for a 1-D target, `Σ_t = Var(X₁ | X_t)`.
///
/// Gaussian targets have a deterministic `Σ_t`; mixtures are integrated
/// over the path marginal, one Gauss–Hermite rule per component.
pub fn expected_posterior_variance(target: &Target, t: f64, rule: &GaussHermite) -> Result<(f64, f64)> {
    if target.dim() != 1 {
        return domain("expected posterior variance is implemented for 1-D targets");
    }
    if let Some(c) = target.single() {
        let v = c.var[0];
        let s2 = (1.0 - t) * (1.0 - t);
        let sigma = v * s2 / (t * t * v + s2);
        return Ok((sigma, sigma * sigma));
    }
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for c in target.components() {
        let sd = (t * t * c.var[0] + (1.0 - t) * (1.0 - t)).sqrt();
        let mut err = None;
        let m1 = rule.expect_normal(t * c.mean[0], sd, |x| match posterior_moments(target, t, &[x]) {
            Ok(pm) => pm.cov_diag[0],
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        });
        let m2 = rule.expect_normal(t * c.mean[0], sd, |x| {
            posterior_moments(target, t, &[x]).map(|pm| pm.cov_diag[0].powi(2)).unwrap_or(f64::NAN)
        });
        if let Some(e) = err {
            return Err(e);
        }
        e1 += c.weight * m1;
        e2 += c.weight * m2;
    }
    Ok((e1, e2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceOdePoint {
    pub t: f64,
    /// Central difference of `E[Σ_t]`.
    pub lhs: f64,
    /// `-(2t/(1-t)³) E[Σ_t²]`.
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceOdeReport {
    pub points: Vec<CovarianceOdePoint>,
    pub max_residual: f64,
}

/// Relative residual of `d/dt E[Σ_t] = -(2t/(1-t)³) E[Σ_t²]` at each `t`.
pub fn covariance_ode_residual(target: &Target, t_points: &[f64]) -> Result<CovarianceOdeReport> {
    let h = COVARIANCE_FD_STEP;
    if let Some(t) = t_points.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return domain(format!("t = {t} is outside (0, 1)"));
    }
    if let Some(t) = t_points.iter().find(|t| **t - h <= 0.0 || **t + h >= 1.0) {
        return domain(format!("t = {t} is too close to the boundary for the difference step"));
    }
    let rule = GaussHermite::new(COVARIANCE_QUADRATURE_NODES);
    let mut points = Vec::with_capacity(t_points.len());
    for &t in t_points {
        let (up, _) = expected_posterior_variance(target, t + h, &rule)?;
        let (down, _) = expected_posterior_variance(target, t - h, &rule)?;
        let (_, sq) = expected_posterior_variance(target, t, &rule)?;
        let lhs = (up - down) / (2.0 * h);
        let rhs = -2.0 * t / (1.0 - t).powi(3) * sq;
        let scale = lhs.abs().max(rhs.abs());
        let residual = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE) };
        points.push(CovarianceOdePoint { t, lhs, rhs, residual });
    }
    let max_residual = points.iter().map(|p| p.residual).fold(0.0, f64::max);
    Ok(CovarianceOdeReport { points, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sl_rf_examples() {
        assert_eq!(rf_time_from_sl(1.0).unwrap(), 0.5);
        assert_relative_eq!(rf_time_from_sl(4.0).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
        assert!(rf_time_from_sl(0.0).is_err());
        assert!(rf_time_from_sl(-1.0).is_err());
        assert!(sl_time_from_rf(1.0).is_err());
    }

    #[test]
    fn ddpm_examples() {
        assert_relative_eq!(
            ddpm_time_from_sl(1.0, BetaProfile::Ou).unwrap(),
            0.5 * 2f64.ln(),
            max_relative = 1e-15
        );
        assert!(ddpm_time_from_sl(1e12, BetaProfile::Ou).unwrap() < 1e-12);
        assert!(ddpm_time_from_sl(0.0, BetaProfile::Ou).is_err());
        assert_eq!(rf_time_from_ddpm(0.5).unwrap(), 0.5);
        assert_relative_eq!(rf_time_from_ddpm(0.2).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        assert!(rf_time_from_ddpm(1.0).is_err());
        assert!(rf_time_from_ddpm(0.0).is_err());
    }

    #[test]
    fn linear_beta_inverse() {
        let beta = BetaProfile::Linear { start: 0.1, slope: 2.0 };
        for s in [0.01, 1.0, 100.0] {
            let tau = ddpm_time_from_sl(s, beta).unwrap();
            assert_relative_eq!(sl_time_from_ddpm(tau, beta).unwrap(), s, max_relative = 1e-12);
        }
        assert!(ddpm_time_from_sl(1.0, BetaProfile::Linear { start: 0.0, slope: 1.0 }).is_err());
    }

    #[test]
    fn interpolant_examples() {
        for s in [0.01, 0.5, 1.0, 3.0, 1e4] {
            let theta = interpolant_time_change(|x| x, |x| 1.0 - x, s).unwrap();
            assert_relative_eq!(theta, rf_time_from_sl(s).unwrap(), max_relative = 1e-12);
        }
        use std::f64::consts::FRAC_PI_2;
        let theta = interpolant_time_change(|x| (FRAC_PI_2 * x).sin(), |x| (FRAC_PI_2 * x).cos(), 1.0).unwrap();
        assert_relative_eq!(theta, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn interpolant_rejects_non_monotone_ratio() {
        // b/a = |1 - 2θ|/θ... turns back up after θ = 1/2
        let r = interpolant_time_change(|x| x, |x| (1.0 - 2.0 * x).abs() + 0.1, 1.0);
        assert!(matches!(r, Err(Error::NoRoot(_))));
    }

    #[test]
    fn sl_point_mass_marginal() {
        let c = vec![1.0, -2.0];
        let target = Target::point_mass(c.clone()).unwrap();
        let path = simulate_forward(ProcessKind::Sl, &target, &[0.5, 2.0], 20_000, 3, Execution::Sequential).unwrap();
        let s = 2.0;
        let m = moments(&path.states[1], path.n, 2, 1.0 / s);
        for j in 0..2 {
            assert!((m.mean[j] - c[j]).abs() < 4.0 * m.se_mean[j]);
            assert!((m.var[j] - 1.0 / s).abs() < 4.0 * m.se_var[j]);
        }
    }

    #[test]
    fn simulate_rejects_bad_clocks() {
        let target = Target::standard_gaussian(1).unwrap();
        let e = Execution::Sequential;
        assert!(simulate_forward(ProcessKind::Sl, &target, &[0.0, 1.0], 2, 0, e).is_err());
        assert!(simulate_forward(ProcessKind::RfLinear, &target, &[0.5, 1.0], 2, 0, e).is_err());
        assert!(simulate_forward(ProcessKind::Sl, &target, &[2.0, 1.0], 2, 0, e).is_err());
        assert!(simulate_forward(ProcessKind::DdpmForward(BetaProfile::Ou), &target, &[0.0], 2, 0, e).is_err());
    }

    #[test]
    fn covariance_ode_gaussian_point() {
        let target = Target::standard_gaussian(1).unwrap();
        let rep = covariance_ode_residual(&target, &[0.5]).unwrap();
        let p = &rep.points[0];
        assert_relative_eq!(p.rhs, -2.0, max_relative = 1e-14);
        assert_relative_eq!(p.lhs, -2.0, max_relative = 1e-8);
        assert!(rep.max_residual < 1e-6);
        let rule = GaussHermite::new(20);
        assert_eq!(expected_posterior_variance(&target, 0.5, &rule).unwrap().0, 0.5);
    }

    #[test]
    fn covariance_ode_point_mass_is_zero() {
        let target = Target::point_mass(vec![3.0]).unwrap();
        let rep = covariance_ode_residual(&target, &[0.2, 0.7]).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        assert!(rep.points.iter().all(|p| p.lhs == 0.0 && p.rhs == 0.0));
        assert!(covariance_ode_residual(&target, &[1.0]).is_err());
        assert!(covariance_ode_residual(&target, &[0.0]).is_err());
    }
}
