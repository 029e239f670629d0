//! Time discretizations for RF sampling.
//!
//! Three grid families are supported: uniform, the symmetric U-shaped
//! geometric grid, and the grid induced on RF time by a DDPM noise schedule.
//! A [`TimeGrid`] always holds `N + 1` increasing times ending at `1`; samplers
//! integrate up to the penultimate time `t_{N-1}`.

use std::fmt;

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    Uniform,
    UShaped,
    DdpmInduced,
    /// Hand-specified times (tests, external grids).
    Custom,
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridKind::Uniform => "uniform",
            GridKind::UShaped => "ushaped",
            GridKind::DdpmInduced => "ddpm",
            GridKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for GridKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(GridKind::Uniform),
            "ushaped" | "u-shaped" => Ok(GridKind::UShaped),
            "ddpm" | "ddpm-induced" => Ok(GridKind::DdpmInduced),
            other => Err(format!("unknown grid kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    // 1 - t_i, kept separately so steps near t = 1 keep full relative precision
    complements: Vec<f64>,
    kind: GridKind,
    delta: Option<f64>,
    growth: Option<f64>,
}

impl TimeGrid {
    /// Grid from explicit times: strictly increasing, inside `[0, 1]`, ending at `1`.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        Self::validated(times, GridKind::Custom, None, None)
    }

    fn validated(
        times: Vec<f64>,
        kind: GridKind,
        delta: Option<f64>,
        growth: Option<f64>,
    ) -> Result<Self> {
        if times.len() < 2 {
            return domain("a time grid needs at least two points");
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
            return domain("grid times must lie in [0, 1]");
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return domain(format!(
                "grid is not strictly increasing at index {i}: {} -> {}",
                times[i],
                times[i + 1]
            ));
        }
        if *times.last().unwrap() != 1.0 {
            return domain("grid must end at t = 1");
        }
        let complements = times.iter().map(|t| 1.0 - t).collect();
        Ok(TimeGrid {
            times,
            complements,
            kind,
            delta,
            growth,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Number of intervals `N`.
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Endpoint offset δ of a U-shaped grid.
    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// Geometric growth factor h of a U-shaped grid.
    pub fn growth(&self) -> Option<f64> {
        self.growth
    }

    /// `1 - t_i`. Exact on the mirrored half of a U-shaped grid.
    pub fn complement(&self, i: usize) -> f64 {
        self.complements[i]
    }

    /// Step sizes `η_i = t_{i+1} - t_i`, `N` of them. Steps in the upper half
    /// are differenced from complements.
    pub fn step_sizes(&self) -> Vec<f64> {
        (0..self.n_steps())
            .map(|i| {
                if self.times[i] >= 0.5 {
                    self.complements[i] - self.complements[i + 1]
                } else {
                    self.times[i + 1] - self.times[i]
                }
            })
            .collect()
    }

    /// Index `N - 1` at which samplers stop.
    pub fn terminal_index(&self) -> usize {
        self.n_steps() - 1
    }

    pub fn terminal_time(&self) -> f64 {
        self.times[self.terminal_index()]
    }

    /// Short descriptor for batch metadata, e.g. `ushaped(N=100,delta=0.01)`.
    pub fn descriptor(&self) -> String {
        match (self.delta, self.growth) {
            (Some(d), Some(h)) => format!("{}(N={},delta={d},h={h})", self.kind, self.n_steps()),
            _ => format!("{}(N={})", self.kind, self.n_steps()),
        }
    }
}

fn check_ushaped_args(n_steps: usize, delta: f64) -> Result<()> {
    if n_steps < 4 || n_steps % 2 != 0 {
        return domain(format!("U-shaped grid needs an even N >= 4, got {n_steps}"));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return domain(format!("delta must lie in (0, 1/2), got {delta}"));
    }
    Ok(())
}

/// Growth factor `h` with `δ (1 + h)^{(N-2)/2} = 1/2`.
///
/// `δ = 1/2` is accepted and yields `h = 0`; the grid builder rejects it.
pub fn solve_growth(n_steps: usize, delta: f64) -> Result<f64> {
    check_ushaped_args(n_steps, delta)?;
    let log_ratio = (1.0 / (2.0 * delta)).ln();
    Ok((2.0 * log_ratio / (n_steps as f64 - 2.0)).exp_m1())
}

/// Symmetric geometric grid: `0, δ, δ(1+h), ..., 1/2, ..., 1-δ, 1`.
///
/// The first half follows the forward recursion `t_j = (1+h) t_{j-1}`
/// (evaluated in closed form); the
/// second half is the mirror image `t_{N-j} = 1 - t_j`, which is exactly the
/// backward recursion `1 - t_j = (1+h)(1 - t_{j+1})`.
pub fn build_ushaped_grid(n_steps: usize, delta: f64) -> Result<TimeGrid> {
    check_ushaped_args(n_steps, delta)?;
    if delta >= 0.5 {
        return domain("delta = 1/2 collapses the U-shaped grid");
    }
    let h = solve_growth(n_steps, delta)?;
    let half = n_steps / 2;
    // log(1 + h); each t_j = δ (1+h)^{j-1} is evaluated directly rather
    // than by repeated multiplication so rounding does not accumulate
    let rate = 2.0 * (1.0 / (2.0 * delta)).ln() / (n_steps as f64 - 2.0);
    let mut times = vec![0.0; n_steps + 1];
    times[1] = delta;
    for j in 2..half {
        times[j] = delta * ((j - 1) as f64 * rate).exp();
    }
    times[half] = 0.5;
    for j in 1..half {
        times[n_steps - j] = 1.0 - times[j];
    }
    times[n_steps] = 1.0;
    let mut grid = TimeGrid::validated(times, GridKind::UShaped, Some(delta), Some(h))?;
    for j in 0..=n_steps {
        grid.complements[j] = grid.times[n_steps - j];
    }
    Ok(grid)
}

pub fn build_uniform_grid(n_steps: usize) -> Result<TimeGrid> {
    if n_steps == 0 {
        return domain("uniform grid needs N >= 1");
    }
    let n = n_steps as f64;
    let times = (0..=n_steps).map(|i| i as f64 / n).collect();
    TimeGrid::validated(times, GridKind::Uniform, None, None)
}

/// δ used when none is given: `min(1/N, 1/d)` if the dimension is known.
pub fn default_delta(n_steps: usize, dim: Option<usize>) -> f64 {
    let inv_n = 1.0 / n_steps as f64;
    match dim {
        Some(d) if d > 0 => inv_n.min(1.0 / d as f64),
        _ => inv_n,
    }
}

/// Discrete DDPM noise schedule `β_τ`, `α_τ = 1 - β_τ`, `ω_τ = ∏_{j≤τ} α_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpmSchedule {
    betas: Vec<f64>,
    omegas: Vec<f64>,
    c0: f64,
    c1: f64,
}

impl DdpmSchedule {
    pub fn n_steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_τ` for `1 <= τ <= N`.
    pub fn beta(&self, tau: usize) -> f64 {
        self.betas[tau - 1]
    }

    pub fn alpha(&self, tau: usize) -> f64 {
        1.0 - self.beta(tau)
    }

    /// `ω_τ` for `0 <= τ <= N`, with `ω_0 = 1`.
    pub fn omega(&self, tau: usize) -> f64 {
        self.omegas[tau]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.betas.iter().map(|b| 1.0 - b).collect()
    }

    /// `ω_0, ..., ω_N`.
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }
}

/// `β_1 = N^{-c0}`, `β_{τ+1} = (c1 log N / N) min{β_1 (1 + c1 log N / N)^τ, 1}`.
pub fn build_ddpm_schedule(n_steps: usize, c0: f64, c1: f64) -> Result<DdpmSchedule> {
    if n_steps < 2 {
        return domain("DDPM schedule needs N >= 2");
    }
    if !(c0 > 0.0 && c1 > 0.0) {
        return domain(format!("c0 and c1 must be positive, got ({c0}, {c1})"));
    }
    let n = n_steps as f64;
    let beta1 = n.powf(-c0);
    let rate = c1 * n.ln() / n;
    let mut betas = Vec::with_capacity(n_steps);
    betas.push(beta1);
    for tau in 1..n_steps {
        betas.push(rate * (beta1 * (1.0 + rate).powi(tau as i32)).min(1.0));
    }
    if let Some(tau) = betas.iter().position(|b| !(*b > 0.0 && *b < 1.0)) {
        return domain(format!(
            "beta_{} = {} is outside (0, 1); (c0, c1) = ({c0}, {c1}) is incompatible with N = {n_steps}",
            tau + 1,
            betas[tau]
        ));
    }
    let mut omegas = Vec::with_capacity(n_steps + 1);
    omegas.push(1.0);
    let mut acc = 1.0;
    for b in &betas {
        acc *= 1.0 - b;
        omegas.push(acc);
    }
    Ok(DdpmSchedule {
        betas,
        omegas,
        c0,
        c1,
    })
}

/// RF time of a DDPM level: `t = √ω / (√ω + √(1-ω))`.
pub(crate) fn rf_time_of_omega(omega: f64) -> f64 {
    let a = omega.sqrt();
    a / (a + (1.0 - omega).sqrt())
}

/// `t_i = t(N - i)` for `i = 0..N-1`, followed by `t_N = t(0) = 1`.
///
/// Samplers stop at `t_{N-1} = t(1) < 1`; the final point is only used by
/// the opt-in last step.
pub fn ddpm_induced_rf_grid(schedule: &DdpmSchedule) -> Result<TimeGrid> {
    let n = schedule.n_steps();
    let mut times: Vec<f64> = (1..=n).rev().map(|tau| rf_time_of_omega(schedule.omega(tau))).collect();
    times.push(1.0);
    TimeGrid::validated(times, GridKind::DdpmInduced, None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    #[test]
    fn growth_examples() {
        assert_relative_eq!(solve_growth(4, 1.0 / (2.0 * E)).unwrap(), E - 1.0, max_relative = 1e-14);
        let h = solve_growth(4, 0.1).unwrap();
        assert_relative_eq!(h, 4.0, max_relative = 1e-14);
        assert_relative_eq!(0.1 * (1.0 + h), 0.5, max_relative = 1e-14);
        assert_eq!(solve_growth(4, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn growth_domain_errors() {
        assert!(solve_growth(5, 0.1).is_err());
        assert!(solve_growth(2, 0.1).is_err());
        assert!(solve_growth(4, 0.0).is_err());
        assert!(solve_growth(4, 0.6).is_err());
        assert!(solve_growth(4, f64::NAN).is_err());
    }

    #[test]
    fn ushaped_small_grids() {
        let g = build_ushaped_grid(4, 0.1).unwrap();
        let expected = [0.0, 0.1, 0.5, 0.9, 1.0];
        for (a, b) in g.times().iter().zip(expected) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
        assert_eq!(g.kind(), GridKind::UShaped);

        let g = build_ushaped_grid(6, 0.125).unwrap();
        assert_relative_eq!(g.growth().unwrap(), 1.0, max_relative = 1e-14);
        assert_eq!(g.times()[3], 0.5);
        assert_relative_eq!(g.times()[1] + g.times()[5], 1.0, epsilon = 1e-15);
        assert_relative_eq!(g.times()[2], 0.25, max_relative = 1e-14);
    }

    #[test]
    fn ushaped_rejects_bad_args() {
        assert!(build_ushaped_grid(4, 0.5).is_err());
        assert!(build_ushaped_grid(7, 0.1).is_err());
        assert!(build_ushaped_grid(2, 0.1).is_err());
    }

    #[test]
    fn ushaped_terminal_is_one_minus_delta() {
        let g = build_ushaped_grid(100, 0.01).unwrap();
        assert_eq!(g.n_steps(), 100);
        assert_relative_eq!(g.terminal_time(), 0.99, max_relative = 1e-15);
        assert_eq!(g.times()[0], 0.0);
        assert_eq!(g.times()[100], 1.0);
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(build_uniform_grid(2).unwrap().times(), &[0.0, 0.5, 1.0]);
        assert_eq!(build_uniform_grid(4).unwrap().times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(build_uniform_grid(1).unwrap().times(), &[0.0, 1.0]);
        assert!(build_uniform_grid(0).is_err());
    }

    #[test]
    fn default_delta_rule() {
        assert_eq!(default_delta(100, Some(400)), 1.0 / 400.0);
        assert_eq!(default_delta(100, Some(10)), 0.01);
        assert_eq!(default_delta(50, None), 0.02);
    }

    #[test]
    fn ddpm_first_betas() {
        let s = build_ddpm_schedule(100, 2.0, 1.0).unwrap();
        assert_relative_eq!(s.beta(1), 1e-4, max_relative = 1e-14);
        let rate = 100f64.ln() / 100.0;
        let b2 = rate * 1e-4 * (1.0 + rate);
        assert_relative_eq!(s.beta(2), b2, max_relative = 1e-14);
        assert_relative_eq!(s.beta(2), 4.8172e-6, max_relative = 1e-4);
        assert_eq!(s.omega(0), 1.0);
        assert!(s.omegas().windows(2).all(|w| w[1] < w[0]));
        let last = s.omega(100);
        assert!(last > 0.0 && last < 1.0);
    }

    #[test]
    fn ddpm_recursion_holds_with_cap() {
        let s = build_ddpm_schedule(100, 2.0, 4.0).unwrap();
        let rate = 4.0 * 100f64.ln() / 100.0;
        for tau in 1..100 {
            let expected = rate * (s.beta(1) * (1.0 + rate).powi(tau as i32)).min(1.0);
            assert_relative_eq!(s.beta(tau + 1), expected, max_relative = 1e-14);
        }
        assert_relative_eq!(s.beta(100), rate, max_relative = 1e-14);
    }

    #[test]
    fn ddpm_rejects_incompatible_constants() {
        // c1 log N / N >= 1 makes the capped betas reach 1
        assert!(build_ddpm_schedule(10, 1.0, 10.0).is_err());
        assert!(build_ddpm_schedule(1, 1.0, 1.0).is_err());
        assert!(build_ddpm_schedule(10, 0.0, 1.0).is_err());
    }

    #[test]
    fn induced_grid_shape() {
        let s = build_ddpm_schedule(100, 2.0, 4.0).unwrap();
        let g = ddpm_induced_rf_grid(&s).unwrap();
        assert_eq!(g.n_steps(), 100);
        assert!(g.times()[0] > 0.0);
        let w1 = s.omega(1);
        assert_relative_eq!(
            g.terminal_time(),
            w1.sqrt() / (w1.sqrt() + (1.0 - w1).sqrt()),
            max_relative = 1e-15
        );
        assert!(g.terminal_time() > 0.98);
    }

    #[test]
    fn omega_limits() {
        assert_eq!(rf_time_of_omega(0.5), 0.5);
        assert!(rf_time_of_omega(1.0 - 1e-12) > 0.999_99);
        assert!(rf_time_of_omega(1e-12) < 1e-5);
    }

    #[test]
    fn custom_grid_validation() {
        assert!(TimeGrid::from_times(vec![0.5, 2.0 / 3.0, 1.0]).is_ok());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5]).is_err());
        assert!(TimeGrid::from_times(vec![1.0]).is_err());
    }
}
