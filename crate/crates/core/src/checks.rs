//! Runnable numerical checks, grouped into suites for the `check` command.
//!
//! Each check yields a [`CheckRecord`]: an observed error (or ratio) that
//! passes when it does not exceed its tolerance.

use std::fmt;
use std::io::Write;

use rand::Rng;

use crate::error::{domain, Result};
use crate::exec::Execution;
use crate::localization::{self, BetaProfile};
use crate::rng;
use crate::samplers::{self, SamplerOptions};
use crate::schedules::{self, TimeGrid};
use crate::targets::{Component, ExactField, FieldOracle, Target};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn at_most(name: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        CheckRecord {
            name: name.into(),
            observed,
            tolerance,
            pass: observed <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Grid,
    Equivalence,
    Covariance,
    Identities,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Grid => "grid",
            Suite::Equivalence => "equivalence",
            Suite::Covariance => "covariance",
            Suite::Identities => "identities",
        })
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "grid" => Ok(Suite::Grid),
            "equivalence" => Ok(Suite::Equivalence),
            "covariance" => Ok(Suite::Covariance),
            "identities" => Ok(Suite::Identities),
            other => Err(format!("unknown suite `{other}`")),
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64, exec: Execution) -> Result<Vec<CheckRecord>> {
    match suite {
        Suite::Grid => grid_suite(seed),
        Suite::Equivalence => equivalence_suite(seed, exec),
        Suite::Covariance => covariance_suite(),
        Suite::Identities => identities_suite(seed),
    }
}

/// `name,observed,tolerance,pass` CSV.
pub fn write_report<W: Write>(records: &[CheckRecord], mut w: W) -> Result<()> {
    writeln!(w, "name,observed,tolerance,pass")?;
    for r in records {
        writeln!(
            w,
            "{},{:e},{:e},{}",
            r.name,
            r.observed,
            r.tolerance,
            if r.pass { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// grid

/// Worst-case violations of the structural properties of a U-shaped grid.
/// Ratios are `lhs / bound` and should not exceed 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProperties {
    pub midpoint_error: f64,
    pub symmetry_error: f64,
    /// Max relative error of `η_i = h t_i` (first half) / `h (1 - t_{i+1})` (second half).
    pub step_formula_error: f64,
    /// Max of `η_i / (1 - t_i)` and `η_i / (1 - t_{i+1})` over `h`.
    pub step_ratio: f64,
    /// Max of `η_i² (1 - t_i)² / (1 - t_{i+1})²` over `h²`.
    pub weighted_step_ratio: f64,
    /// `Σ η_i² / ((1 - t_{i+1})² t_i²)` over `4 h² N`.
    pub step_sum_ratio: f64,
    /// Max of `((1-t_i)²/t_i² - (1-t_{i+1})²/t_{i+1}²) / (2 η_i / t_i³)`.
    pub noise_ratio_gap: f64,
    /// `h / (8 log(1/(2δ)) / N)`.
    pub growth_bound_ratio: f64,
}

pub fn ushaped_grid_properties(grid: &TimeGrid) -> Result<GridProperties> {
    let (Some(delta), Some(h)) = (grid.delta(), grid.growth()) else {
        return domain("grid properties need a U-shaped grid");
    };
    let t = grid.times();
    let n = grid.n_steps();
    let eta = grid.step_sizes();
    let c = |k: usize| grid.complement(k);
    let midpoint_error = (t[n / 2] - 0.5).abs();
    let symmetry_error = (1..n).map(|j| (t[j] + t[n - j] - 1.0).abs()).fold(0.0, f64::max);
    let mut step_formula_error = 0.0f64;
    let mut step_ratio = 0.0f64;
    let mut weighted = 0.0f64;
    let mut sum = 0.0;
    for i in 1..=n - 2 {
        let expect = if t[i] < 0.5 { h * t[i] } else { h * c(i + 1) };
        step_formula_error = step_formula_error.max((eta[i] - expect).abs() / expect);
        step_ratio = step_ratio
            .max(eta[i] / c(i) / h)
            .max(eta[i] / c(i + 1) / h);
        weighted = weighted.max(eta[i].powi(2) * c(i).powi(2) / c(i + 1).powi(2) / (h * h));
        sum += eta[i].powi(2) / (c(i + 1).powi(2) * t[i].powi(2));
    }
    let mut noise_ratio_gap = 0.0f64;
    for i in 1..n {
        let lhs = (c(i) / t[i]).powi(2) - (c(i + 1) / t[i + 1]).powi(2);
        let rhs = 2.0 * eta[i] / t[i].powi(3);
        noise_ratio_gap = noise_ratio_gap.max(lhs / rhs);
    }
    let nf = n as f64;
    Ok(GridProperties {
        midpoint_error,
        symmetry_error,
        step_formula_error,
        step_ratio,
        weighted_step_ratio: weighted,
        step_sum_ratio: sum / (4.0 * h * h * nf),
        noise_ratio_gap,
        growth_bound_ratio: h / (8.0 * (1.0 / (2.0 * delta)).ln() / nf),
    })
}

/// Random `(N, δ)`: `N` even in `[4, 2000]`, `δ` log-uniform on
/// `(0, 1/N]` restricted to `h ≤ 1`. This is the regime the step-size
/// bounds are stated for (`δ = min(1/N, 1/d)`); for `δ → 1/2` the growth
/// `h → 0` and `η_i = t_{i+1} - t_i` loses all relative precision.
pub fn random_grid_params<R: Rng + ?Sized>(rng: &mut R) -> (usize, f64) {
    let n = 2 * rng.random_range(2..=1000usize);
    // h ≤ 1  ⇔  log(1/(2δ)) ≤ (N - 2) log 2 / 2
    let log_min = (0.5f64).ln() - (n as f64 - 2.0) * std::f64::consts::LN_2 / 2.0;
    let lo = log_min.max(1e-9f64.ln());
    let hi = (1.0 / n as f64).ln();
    let delta = (lo + (hi - lo) * rng.random::<f64>()).exp();
    (n, delta)
}

pub const ROUND_OFF: f64 = 1e-12;

/// Records for one grid, named with `prefix`.
pub fn grid_records(grid: &TimeGrid, prefix: &str) -> Result<Vec<CheckRecord>> {
    let p = ushaped_grid_properties(grid)?;
    let one = 1.0 + ROUND_OFF;
    Ok(vec![
        CheckRecord::at_most(format!("{prefix}midpoint"), p.midpoint_error, ROUND_OFF),
        CheckRecord::at_most(format!("{prefix}symmetry"), p.symmetry_error, ROUND_OFF),
        CheckRecord::at_most(format!("{prefix}step_formula"), p.step_formula_error, ROUND_OFF),
        CheckRecord::at_most(format!("{prefix}step_ratio"), p.step_ratio, one),
        CheckRecord::at_most(format!("{prefix}weighted_step_ratio"), p.weighted_step_ratio, one),
        CheckRecord::at_most(format!("{prefix}step_sum_ratio"), p.step_sum_ratio, one),
        CheckRecord::at_most(format!("{prefix}noise_ratio_increment"), p.noise_ratio_gap, one),
        CheckRecord::at_most(format!("{prefix}growth_bound"), p.growth_bound_ratio, one),
    ])
}

/// Grid checks over `count` random valid `(N, δ)`, folded to the worst case.
pub fn grid_checks(count: usize, seed: u64) -> Result<Vec<CheckRecord>> {
    let mut r = rng::substream(seed, rng::label("grid"), 0);
    let mut worst: Vec<CheckRecord> = Vec::new();
    for _ in 0..count {
        let (n, delta) = random_grid_params(&mut r);
        let grid = schedules::build_ushaped_grid(n, delta)?;
        let recs = grid_records(&grid, "ushaped.")?;
        if worst.is_empty() {
            worst = recs;
        } else {
            for (w, r) in worst.iter_mut().zip(recs) {
                if r.observed > w.observed || r.observed.is_nan() {
                    *w = r;
                }
            }
        }
    }
    Ok(worst)
}

fn grid_suite(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = grid_checks(50, seed)?;
    // the DDPM-induced grid should put most of its steps near the endpoints
    let schedule = schedules::build_ddpm_schedule(100, 2.0, 4.0)?;
    let grid = schedules::ddpm_induced_rf_grid(&schedule)?;
    let times = &grid.times()[..grid.n_steps()];
    let mut hist = [0usize; 10];
    for t in times {
        hist[((t * 10.0) as usize).min(9)] += 1;
    }
    let inner = hist[1..9].iter().copied().max().unwrap_or(0) as f64;
    let outer = hist[0].min(hist[9]) as f64;
    out.push(CheckRecord::at_most("ddpm_grid.u_shape(inner/outer)", inner / outer, 1.0));
    Ok(out)
}

// ---------------------------------------------------------------------------
// equivalence

pub const EQUIVALENCE_S: [f64; 3] = [0.25, 1.0, 4.0];

fn equivalence_suite(seed: u64, exec: Execution) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    let cases = [
        ("low_rank", Target::low_rank(10, 8, 8.0)?),
        ("standard", Target::standard_gaussian(3)?),
        ("point_mass", Target::point_mass(vec![1.0, -2.0])?),
    ];
    for (k, (name, target)) in cases.iter().enumerate() {
        let rep = localization::check_marginal_equivalence(
            target,
            &EQUIVALENCE_S,
            100_000,
            rng::derive_seed(seed, k as u64),
            exec,
        )?;
        out.push(CheckRecord::at_most(
            format!("equivalence.{name}.max_z"),
            rep.max_z(),
            rep.threshold,
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// covariance

/// 20 interior points spread over `[0.05, 0.95]`.
pub fn covariance_t_points() -> Vec<f64> {
    (0..20).map(|i| 0.05 + 0.9 * i as f64 / 19.0).collect()
}

pub fn symmetric_gmm_1d() -> Result<Target> {
    Target::mixture(vec![
        Component {
            weight: 0.5,
            mean: vec![-2.0],
            var: vec![1.0],
        },
        Component {
            weight: 0.5,
            mean: vec![2.0],
            var: vec![1.0],
        },
    ])
}

fn covariance_suite() -> Result<Vec<CheckRecord>> {
    let ts = covariance_t_points();
    let g = localization::covariance_ode_residual(&Target::standard_gaussian(1)?, &ts)?;
    let m = localization::covariance_ode_residual(&symmetric_gmm_1d()?, &ts)?;
    Ok(vec![
        CheckRecord::at_most("covariance_ode.gaussian", g.max_residual, 1e-6),
        CheckRecord::at_most("covariance_ode.gmm", m.max_residual, 1e-4),
    ])
}

// ---------------------------------------------------------------------------
// identities

/// `(max relative round-trip error, max composition error)` for all clock
/// maps over logarithmic sweeps, plus `count` random composition points.
pub fn time_change_errors(count: usize, seed: u64) -> Result<Vec<CheckRecord>> {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let sweep: Vec<f64> = (0..=240).map(|k| 10f64.powf(-6.0 + k as f64 * 0.05)).collect();
    let linear = BetaProfile::Linear { start: 0.1, slope: 19.9 };
    let (mut sl_rf, mut sl_ddpm, mut sl_lin, mut rf_omega) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &s in &sweep {
        let t = localization::rf_time_from_sl(s)?;
        sl_rf = sl_rf.max(rel(localization::sl_time_from_rf(t)?, s));
        let tau = localization::ddpm_time_from_sl(s, BetaProfile::Ou)?;
        sl_ddpm = sl_ddpm.max(rel(localization::sl_time_from_ddpm(tau, BetaProfile::Ou)?, s));
        let tau = localization::ddpm_time_from_sl(s, linear)?;
        sl_lin = sl_lin.max(rel(localization::sl_time_from_ddpm(tau, linear)?, s));
    }
    // ω over (0, 1) on a logit sweep
    for k in 1..240 {
        let logit = -12.0 + 24.0 * k as f64 / 240.0;
        let omega = 1.0 / (1.0 + (-logit as f64).exp());
        let t = localization::rf_time_from_ddpm(omega)?;
        rf_omega = rf_omega.max(rel(localization::ddpm_omega_from_rf(t)?, omega));
    }
    let mut r = rng::substream(seed, rng::label("time-change"), 0);
    let (mut compose, mut sigma) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let s = 10f64.powf(r.random_range(-3.0..3.0));
        let tau = localization::ddpm_time_from_sl(s, BetaProfile::Ou)?;
        let omega = BetaProfile::Ou.omega(tau);
        let via_ddpm = localization::rf_time_from_ddpm(omega)?;
        compose = compose.max(rel(via_ddpm, localization::rf_time_from_sl(s)?));
        let w: f64 = r.random_range(1e-6..1.0 - 1e-6);
        let t = localization::rf_time_from_ddpm(w)?;
        sigma = sigma.max(rel(samplers::sigma2(t) * w, t * t));
    }
    Ok(vec![
        CheckRecord::at_most("time_change.sl_rf.round_trip", sl_rf, ROUND_OFF),
        CheckRecord::at_most("time_change.sl_ddpm.round_trip", sl_ddpm, ROUND_OFF),
        CheckRecord::at_most("time_change.sl_ddpm_linear_beta.round_trip", sl_lin, ROUND_OFF),
        CheckRecord::at_most("time_change.rf_ddpm.round_trip", rf_omega, ROUND_OFF),
        CheckRecord::at_most("time_change.ddpm_then_rf.composition", compose, ROUND_OFF),
        CheckRecord::at_most("time_change.sigma_omega", sigma, ROUND_OFF),
    ])
}

/// Max gap between the two DDIM-RF step forms on `count` random states, and
/// max relative error of `η σ_{t_i}² = Δ_i (1 - t_i)/t_{i+1}` on every
/// step of the DDPM-induced grid.
pub fn ddim_checks(count: usize, seed: u64) -> Result<Vec<CheckRecord>> {
    let schedule = schedules::build_ddpm_schedule(100, 2.0, 4.0)?;
    let grid = schedules::ddpm_induced_rf_grid(&schedule)?;
    let times = grid.times();
    let mut identity = 0.0f64;
    for i in 0..grid.terminal_index() {
        let (t, t_next) = (times[i], times[i + 1]);
        let lhs = samplers::ddim_eta(t, t_next) * samplers::sigma2(t);
        let rhs = (t_next - t) * (1.0 - t) / t_next;
        identity = identity.max((lhs - rhs).abs() / rhs.abs());
    }
    let target = Target::new(
        vec![
            Component {
                weight: 0.3,
                mean: vec![1.0, -1.0, 0.5],
                var: vec![0.5, 1.0, 0.0],
            },
            Component {
                weight: 0.7,
                mean: vec![-2.0, 0.0, 3.0],
                var: vec![1.0, 0.2, 0.0],
            },
        ],
        None,
    )?;
    let field = ExactField::new(target);
    let mut r = rng::substream(seed, rng::label("ddim"), 0);
    let mut gap = 0.0f64;
    for _ in 0..count {
        let i = r.random_range(0..grid.terminal_index());
        let (t, t_next) = (times[i], times[i + 1]);
        let y: Vec<f64> = (0..field.dim()).map(|_| r.random_range(-5.0..5.0)).collect();
        let a = samplers::ddim_step_scaled(&field, t, t_next, &y)?;
        let b = samplers::ddim_step_simplified(&field, t, t_next, &y)?;
        for (x, z) in a.iter().zip(&b) {
            gap = gap.max((x - z).abs() / x.abs().max(1.0));
        }
    }
    Ok(vec![
        CheckRecord::at_most("ddim.two_forms", gap, 1e-10),
        CheckRecord::at_most("ddim.eta_sigma_identity", identity, ROUND_OFF),
    ])
}

/// Pointwise gap between DDPM and stochastic-RF trajectories driven by the
/// same noise, after mapping DDPM states to RF coordinates.
pub fn ddpm_stoc_rf_gap(n_steps: usize, n: usize, dim: usize, seed: u64, exec: Execution) -> Result<f64> {
    let schedule = schedules::build_ddpm_schedule(n_steps, 2.0, 4.0)?;
    let grid = schedules::ddpm_induced_rf_grid(&schedule)?;
    let field = ExactField::new(Target::low_rank(dim, dim.min(8), 8.0)?);
    let opts = SamplerOptions {
        record_trajectories: true,
        final_step: false,
        exec,
    };
    let a = samplers::ddpm_sample(&field, &schedule, n, seed, opts)?;
    let b = samplers::stoc_rf(&field, &grid, n, seed, opts)?;
    let (Some(ta), Some(tb)) = (&a.trajectory, &b.trajectory) else {
        return domain("trajectories were not recorded");
    };
    let mut gap = 0.0f64;
    for (sa, sb) in ta.states.iter().zip(&tb.states) {
        for (x, y) in sa.iter().zip(sb) {
            gap = gap.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    Ok(gap)
}

fn identities_suite(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = time_change_errors(1000, seed)?;
    out.extend(ddim_checks(1000, seed)?);
    out.push(CheckRecord::at_most(
        "ddpm_stoc_rf.coupled_paths",
        ddpm_stoc_rf_gap(100, 100, 10, seed, Execution::default())?,
        1e-10,
    ));
    // stochastic-RF coefficients at (1/2, 2/3)
    let c = samplers::StocRfCoefficients::new(0.5, 2.0 / 3.0);
    let coef = [
        (c.sigma2, 0.5),
        (c.r2, 0.5),
        (c.r2_next, 0.8),
        (c.eta, 3.0 / 8.0),
        (c.psi, 3.0 / 32.0),
    ]
    .iter()
    .map(|(a, b)| (a - b).abs())
    .fold(0.0, f64::max);
    out.push(CheckRecord::at_most("stoc_rf.coefficients", coef, ROUND_OFF));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::Grid, Suite::Equivalence, Suite::Covariance, Suite::Identities] {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn grid_properties_of_small_grid() {
        let g = schedules::build_ushaped_grid(6, 0.125).unwrap();
        let p = ushaped_grid_properties(&g).unwrap();
        assert!(p.midpoint_error == 0.0 && p.symmetry_error < 1e-15);
        assert!(p.step_ratio <= 1.0 + 1e-12);
        assert!(ushaped_grid_properties(&schedules::build_uniform_grid(4).unwrap()).is_err());
    }

    #[test]
    fn random_params_are_valid() {
        let mut r = rng::substream(1, 2, 3);
        for _ in 0..200 {
            let (n, d) = random_grid_params(&mut r);
            assert!(n % 2 == 0 && n >= 4);
            let h = schedules::solve_growth(n, d).unwrap();
            assert!(h <= 1.0 + 1e-12 && d > 0.0 && d < 0.5);
        }
    }

    #[test]
    fn report_format() {
        let mut buf = Vec::new();
        write_report(&[CheckRecord::at_most("x", 0.5, 1.0)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "name,observed,tolerance,pass\nx,5e-1,1e0,pass\n");
    }

    #[test]
    fn covariance_and_identities_pass() {
        for r in covariance_suite().unwrap().into_iter().chain(identities_suite(7).unwrap()) {
            assert!(r.pass, "{r:?}");
        }
    }
}
