//! RF, stochastic RF, Langevin-corrected RF, DDPM and DDIM-derived samplers.
//!
//! Every sampler starts from `Y_{t_0} = σ_{t_0} ξ` with `σ_t² = (1-t)² + t²`
//! (so `Y_0 ~ N(0, I)` on grids starting at zero) and stops at the
//! penultimate grid time `t_{N-1}` unless [`SamplerOptions::final_step`] is set.
//!
//! Randomness: trajectory `j` draws its initial point from substream
//! `(seed, j, 0)` and the noise of step `i` (from `t_i` to `t_{i+1}`) from
//! `(seed, j, i + 1)`. The DDPM sampler uses the same keys for its level
//! `τ = N - i`, which couples it exactly to [`stoc_rf`] on the induced grid.

use crate::batch::{BatchMeta, SampleBatch, SamplerKind, Trajectory};
use crate::error::{domain, Error, Result};
use crate::exec::{self, Execution};
use crate::rng;
use crate::schedules::{self, DdpmSchedule, TimeGrid};
use crate::targets::{FieldOracle, Target};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplerOptions {
    /// Keep every intermediate state (memory `n · d · N`).
    pub record_trajectories: bool,
    /// Take the last step to `t_N = 1` as well.
    pub final_step: bool,
    pub exec: Execution,
}

/// `σ_t² = (1-t)² + t²`.
#[inline]
pub fn sigma2(t: f64) -> f64 {
    let s = 1.0 - t;
    s * s + t * t
}

/// Coefficients of one stochastic-RF step from `t_i` to `t_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StocRfCoefficients {
    /// `σ_{t_i}²`
    pub sigma2: f64,
    /// `R_i² = t_i² / σ_{t_i}²`
    pub r2: f64,
    /// `R_{i+1}²`
    pub r2_next: f64,
    /// `η_i = 1 - R_i² / R_{i+1}²`
    pub eta: f64,
    /// `ψ_i = (R_i²/R_{i+1}²)((1 - R_{i+1}²)/(1 - R_i²))(1 - R_i²/R_{i+1}²)`
    pub psi: f64,
}

impl StocRfCoefficients {
    pub fn new(t: f64, t_next: f64) -> Self {
        let s2 = sigma2(t);
        let r2 = t * t / s2;
        let r2_next = t_next * t_next / sigma2(t_next);
        // With r = (1-t)/t: 1 - R_i²/R_{i+1}² = Δ (r_i + r_{i+1}) / (t_i t_{i+1} (1 + r_i²)),
        // which avoids cancelling two numbers close to one on fine steps.
        let (r, r_next) = ((1.0 - t) / t, (1.0 - t_next) / t_next);
        let eta = (t_next - t) * (r + r_next) / (t * t_next * (1.0 + r * r));
        // ρ (1 - R_{i+1}²)/(1 - R_i²) = r_{i+1}² / r_i²
        let psi = (r_next / r).powi(2) * eta;
        StocRfCoefficients {
            sigma2: s2,
            r2,
            r2_next,
            eta,
            psi,
        }
    }

    /// `σ_{t_{i+1}} R_{i+1} / R_i`, the factor applied after the bracket.
    fn outer(&self, t: f64, t_next: f64) -> f64 {
        let _ = t;
        sigma2(t_next).sqrt() * (self.r2_next / self.r2).sqrt()
    }
}

/// Per-step coefficients for every interval of `grid`; requires `t_0 > 0`.
pub fn stoc_rf_coefficients(grid: &TimeGrid) -> Result<Vec<StocRfCoefficients>> {
    require_positive_start(grid, "stochastic RF")?;
    Ok(grid
        .times()
        .windows(2)
        .map(|w| StocRfCoefficients::new(w[0], w[1]))
        .collect())
}

/// DDIM step size in scaled coordinates:
/// `(1 - ρ) / (1 + sqrt(ρ (1 - R_{i+1}²)/(1 - R_i²)))` with `ρ = R_i²/R_{i+1}²`.
pub fn ddim_eta(t: f64, t_next: f64) -> f64 {
    // same quantity as Δ r_i / (t_i t_{i+1} (1 + r_i²)), r = (1-t)/t
    let r = (1.0 - t) / t;
    (t_next - t) * r / (t * t_next * (1.0 + r * r))
}

fn require_positive_start(grid: &TimeGrid, what: &str) -> Result<()> {
    if grid.times()[0] <= 0.0 {
        return domain(format!(
            "{what} needs a grid with t_0 > 0 (the score is undefined at t = 0)"
        ));
    }
    Ok(())
}

struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Shared trajectory loop. `step(i, traj, state, scratch)` advances `state`
/// from `times[i]` to `times[i + 1]`.
#[allow(clippy::too_many_arguments)]
fn drive<S>(
    kind: SamplerKind,
    times: &[f64],
    steps: usize,
    dim: usize,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
    grid_descriptor: String,
    target_descriptor: String,
    init_scale: f64,
    output_scale: impl Fn(usize) -> f64 + Sync,
    step: S,
) -> Result<SampleBatch>
where
    S: Fn(usize, u64, &mut [f64], &mut Scratch) -> Result<()> + Sync,
{
    if n == 0 {
        return domain("need at least one trajectory");
    }
    let record = opts.record_trajectories;
    let runs = exec::try_map_indexed(opts.exec, n, |j| {
        let traj = j as u64;
        let mut state = rng::normal_vec(seed, traj, 0, dim);
        state.iter_mut().for_each(|v| *v *= init_scale);
        let mut scratch = Scratch {
            a: vec![0.0; dim],
            b: vec![0.0; dim],
        };
        let mut path = if record {
            Vec::with_capacity((steps + 1) * dim)
        } else {
            Vec::new()
        };
        let push = |path: &mut Vec<f64>, state: &[f64], k: usize| {
            let s = output_scale(k);
            path.extend(state.iter().map(|v| v * s));
        };
        if record {
            push(&mut path, &state, 0);
        }
        for i in 0..steps {
            step(i, traj, &mut state, &mut scratch)?;
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState {
                    trajectory: j,
                    step: i + 1,
                    t: times[i + 1],
                });
            }
            if record {
                push(&mut path, &state, i + 1);
            }
        }
        let s = output_scale(steps);
        state.iter_mut().for_each(|v| *v *= s);
        Ok((state, path))
    })?;

    let mut data = Vec::with_capacity(n * dim);
    for (state, _) in &runs {
        data.extend_from_slice(state);
    }
    let mut batch = SampleBatch::new(
        data,
        dim,
        BatchMeta {
            sampler: kind,
            grid: grid_descriptor,
            target: target_descriptor,
            seed,
            terminal_time: times[steps],
        },
    )?;
    if record {
        let mut states = vec![Vec::with_capacity(n * dim); steps + 1];
        for (_, path) in &runs {
            for (k, chunk) in path.chunks_exact(dim).enumerate() {
                states[k].extend_from_slice(chunk);
            }
        }
        batch.trajectory = Some(Trajectory {
            times: times[..=steps].to_vec(),
            states,
        });
    }
    Ok(batch)
}

fn step_count(grid: &TimeGrid, opts: &SamplerOptions) -> usize {
    if opts.final_step {
        grid.n_steps()
    } else {
        grid.terminal_index()
    }
}

fn oracle_descriptor<F: FieldOracle>(oracle: &F) -> String {
    format!("field(d={})", oracle.dim())
}

/// Euler RF: `Y_{t_{i+1}} = Y_{t_i} + η_i v̂_{t_i}(Y_{t_i})`.
pub fn rf_euler<F: FieldOracle>(
    oracle: &F,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
) -> Result<SampleBatch> {
    let times = grid.times();
    let d = oracle.dim();
    drive(
        SamplerKind::Rf,
        times,
        step_count(grid, &opts),
        d,
        n,
        seed,
        opts,
        grid.descriptor(),
        oracle_descriptor(oracle),
        sigma2(times[0]).sqrt(),
        |_| 1.0,
        |i, _, y, s| {
            let eta = times[i + 1] - times[i];
            oracle.velocity_into(times[i], y, &mut s.a)?;
            for (yj, vj) in y.iter_mut().zip(&s.a) {
                *yj += eta * vj;
            }
            Ok(())
        },
    )
}

/// Stochastic RF, the DDPM ancestral step written in RF time:
/// `Y_{t_{i+1}}/σ_{t_{i+1}} = (R_{i+1}/R_i)(Y_{t_i}/σ_{t_i} + η_i σ_{t_i} ŝ_{t_i}(Y_{t_i}) + √ψ_i W_i)`.
pub fn stoc_rf<F: FieldOracle>(
    oracle: &F,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
) -> Result<SampleBatch> {
    let coeffs = stoc_rf_coefficients(grid)?;
    stoc_rf_with(oracle, grid, n, seed, opts, &coeffs)
}

/// [`stoc_rf`] with caller-supplied `(η_i, ψ_i)`; the `σ` and `R` factors
/// are always taken from the grid.
pub fn stoc_rf_with<F: FieldOracle>(
    oracle: &F,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
    coeffs: &[StocRfCoefficients],
) -> Result<SampleBatch> {
    require_positive_start(grid, "stochastic RF")?;
    let times = grid.times();
    let steps = step_count(grid, &opts);
    if coeffs.len() < steps {
        return domain("not enough step coefficients for the grid");
    }
    let d = oracle.dim();
    drive(
        SamplerKind::StocRf,
        times,
        steps,
        d,
        n,
        seed,
        opts,
        grid.descriptor(),
        oracle_descriptor(oracle),
        sigma2(times[0]).sqrt(),
        |_| 1.0,
        |i, traj, y, s| {
            let (t, t_next) = (times[i], times[i + 1]);
            let c = &coeffs[i];
            let sigma = c.sigma2.sqrt();
            let outer = c.outer(t, t_next);
            oracle.score_into(t, y, &mut s.a)?;
            let noise_sd = c.psi.sqrt();
            if noise_sd > 0.0 {
                rng::fill_standard_normal(&mut rng::substream(seed, traj, i as u64 + 1), &mut s.b);
            } else {
                s.b.fill(0.0);
            }
            for j in 0..y.len() {
                y[j] = outer * (y[j] / sigma + c.eta * sigma * s.a[j] + noise_sd * s.b[j]);
            }
            Ok(())
        },
    )
}

/// Euler–Maruyama for the Langevin-corrected RF SDE with `γ_t = (1-t)/t` and
/// step `η̃_i = t_{i+1} - t_i`.
pub fn langevin_rf<F: FieldOracle>(
    oracle: &F,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
) -> Result<SampleBatch> {
    langevin_rf_with_gamma(oracle, grid, n, seed, opts, |t| (1.0 - t) / t)
}

/// [`langevin_rf`] with an arbitrary diffusion coefficient `γ_t >= 0`.
pub fn langevin_rf_with_gamma<F, G>(
    oracle: &F,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
    gamma: G,
) -> Result<SampleBatch>
where
    F: FieldOracle,
    G: Fn(f64) -> f64 + Sync,
{
    require_positive_start(grid, "Langevin RF")?;
    let times = grid.times();
    let d = oracle.dim();
    drive(
        SamplerKind::Langevin,
        times,
        step_count(grid, &opts),
        d,
        n,
        seed,
        opts,
        grid.descriptor(),
        oracle_descriptor(oracle),
        sigma2(times[0]).sqrt(),
        |_| 1.0,
        |i, traj, y, s| {
            let t = times[i];
            let eta = times[i + 1] - t;
            let g = gamma(t);
            if !(g >= 0.0) {
                return domain(format!("gamma({t}) = {g} must be non-negative"));
            }
            oracle.velocity_into(t, y, &mut s.a)?;
            if g == 0.0 {
                for (yj, vj) in y.iter_mut().zip(&s.a) {
                    *yj += eta * vj;
                }
                return Ok(());
            }
            let mut score = std::mem::take(&mut s.b);
            oracle.score_into(t, y, &mut score)?;
            let noise_sd = (2.0 * eta * g).sqrt();
            let mut rng = rng::substream(seed, traj, i as u64 + 1);
            let mut xi = vec![0.0; y.len()];
            rng::fill_standard_normal(&mut rng, &mut xi);
            for j in 0..y.len() {
                y[j] += eta * (s.a[j] + g * score[j]) + noise_sd * xi[j];
            }
            s.b = score;
            Ok(())
        },
    )
}

/// Ancestral DDPM sampler in its own coordinates `Y'`:
/// `Y'_{τ-1} = (Y'_τ + (1-α_τ) s_{Y'_τ}(Y'_τ) + ν_τ ξ_τ) / √α_τ`,
/// `ν_τ = sqrt((α_τ - ω_τ)(1 - α_τ)/(1 - ω_τ))`, with
/// `s_{Y'_τ}(y) = σ_{t(τ)} s_{t(τ)}(σ_{t(τ)} y)` taken from the RF oracle.
///
/// Runs `τ = N, ..., 2` and returns `σ_{t(1)} Y'_1` in RF coordinates;
/// recorded trajectories are mapped the same way at every level.
pub fn ddpm_sample<F: FieldOracle>(
    oracle: &F,
    schedule: &DdpmSchedule,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
) -> Result<SampleBatch> {
    let big_n = schedule.n_steps();
    for tau in 1..=big_n {
        if schedule.alpha(tau) - schedule.omega(tau) < 0.0 {
            return domain(format!("alpha_{tau} < omega_{tau}: invalid schedule"));
        }
    }
    let grid = schedules::ddpm_induced_rf_grid(schedule)?;
    let times = grid.times();
    let steps = step_count(&grid, &opts);
    // level τ sits at grid index N - τ; σ_{t(τ)} = t(τ)/√ω_τ
    let sigma_at = |k: usize| -> f64 {
        let tau = big_n - k;
        if tau == 0 {
            1.0
        } else {
            times[k] / schedule.omega(tau).sqrt()
        }
    };
    let d = oracle.dim();
    drive(
        SamplerKind::Ddpm,
        times,
        steps,
        d,
        n,
        seed,
        opts,
        grid.descriptor(),
        oracle_descriptor(oracle),
        1.0,
        sigma_at,
        |i, traj, y, s| {
            let tau = big_n - i;
            let alpha = schedule.alpha(tau);
            let omega = schedule.omega(tau);
            let beta = 1.0 - alpha;
            let nu = ((alpha - omega) * beta / (1.0 - omega)).sqrt();
            let sigma = sigma_at(i);
            for (a, yj) in s.b.iter_mut().zip(y.iter()) {
                *a = sigma * yj;
            }
            oracle.score_into(times[i], &s.b, &mut s.a)?;
            if nu > 0.0 {
                rng::fill_standard_normal(&mut rng::substream(seed, traj, i as u64 + 1), &mut s.b);
            } else {
                s.b.fill(0.0);
            }
            let inv = 1.0 / alpha.sqrt();
            for j in 0..y.len() {
                y[j] = inv * (y[j] + beta * sigma * s.a[j] + nu * s.b[j]);
            }
            Ok(())
        },
    )
}

/// DDIM-derived RF step in scaled coordinates:
/// `Y_{t_{i+1}}/σ_{t_{i+1}} = (R_{i+1}/R_i)(Y_{t_i}/σ_{t_i} + η_i σ_{t_i} ŝ_{t_i}(Y_{t_i}))`.
pub fn ddim_step_scaled<F: FieldOracle>(oracle: &F, t: f64, t_next: f64, y: &[f64]) -> Result<Vec<f64>> {
    let eta = ddim_eta(t, t_next);
    let sigma = sigma2(t).sqrt();
    let sigma_next = sigma2(t_next).sqrt();
    let r = t / sigma;
    let r_next = t_next / sigma_next;
    let s = oracle.score(t, y)?;
    Ok(y.iter()
        .zip(&s)
        .map(|(yj, sj)| sigma_next * (r_next / r) * (yj / sigma + eta * sigma * sj))
        .collect())
}

/// The same step after simplification:
/// `Y_{t_{i+1}} = Y_{t_i} + Δ_i (Y_{t_i}/t_i + ((1-t_i)/t_i) ŝ_{t_i}(Y_{t_i}))`.
pub fn ddim_step_simplified<F: FieldOracle>(oracle: &F, t: f64, t_next: f64, y: &[f64]) -> Result<Vec<f64>> {
    let mut out = oracle.score(t, y)?;
    simplified_update(t, t_next, y, &mut out);
    Ok(out)
}

#[inline]
fn simplified_update(t: f64, t_next: f64, y: &[f64], score_then_out: &mut [f64]) {
    let delta = t_next - t;
    let w = (1.0 - t) / t;
    for (o, yj) in score_then_out.iter_mut().zip(y) {
        *o = yj + delta * (yj / t + w * *o);
    }
}

/// Deterministic DDIM-derived RF sampler (simplified form); on exact fields
/// this coincides with [`rf_euler`] on the same grid.
pub fn ddim_rf<F: FieldOracle>(
    oracle: &F,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
) -> Result<SampleBatch> {
    require_positive_start(grid, "DDIM RF")?;
    let times = grid.times();
    let d = oracle.dim();
    drive(
        SamplerKind::DdimRf,
        times,
        step_count(grid, &opts),
        d,
        n,
        seed,
        opts,
        grid.descriptor(),
        oracle_descriptor(oracle),
        sigma2(times[0]).sqrt(),
        |_| 1.0,
        |i, _, y, s| {
            oracle.score_into(times[i], y, &mut s.a)?;
            simplified_update(times[i], times[i + 1], y, &mut s.a);
            y.copy_from_slice(&s.a);
            Ok(())
        },
    )
}

/// Dispatch by sampler name. DDPM-based kinds rebuild the schedule from
/// `ddpm` when given, since the grid alone does not carry `α_τ`.
pub fn run_sampler<F: FieldOracle>(
    kind: SamplerKind,
    oracle: &F,
    grid: &TimeGrid,
    ddpm: Option<&DdpmSchedule>,
    n: usize,
    seed: u64,
    opts: SamplerOptions,
) -> Result<SampleBatch> {
    match kind {
        SamplerKind::Rf => rf_euler(oracle, grid, n, seed, opts),
        SamplerKind::StocRf => stoc_rf(oracle, grid, n, seed, opts),
        SamplerKind::Langevin => langevin_rf(oracle, grid, n, seed, opts),
        SamplerKind::DdimRf => ddim_rf(oracle, grid, n, seed, opts),
        SamplerKind::Ddpm => match ddpm {
            Some(s) => ddpm_sample(oracle, s, n, seed, opts),
            None => domain("the DDPM sampler needs a DDPM schedule"),
        },
        SamplerKind::Target => domain("`target` is not a sampler"),
    }
}

/// One affine step `Y' = scale ⊙ Y + shift + noise_sd ⊙ ξ`, per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStep {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub noise_sd: Vec<f64>,
}

/// Exact per-step law of a sampler run on a single-Gaussian target.
#[derive(Debug, Clone, PartialEq)]
pub struct Pushforward {
    pub times: Vec<f64>,
    /// `mean[k]`, `var[k]`: coordinate-wise moments at `times[k]`.
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub steps: Vec<AffineStep>,
    /// Scale of the initial state, `σ_{t_0}`.
    pub init_sd: f64,
}

impl Pushforward {
    /// Push a single initial point through the noise-free part of the maps.
    pub fn propagate_point(&self, y0: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut y = y0.to_vec();
        out.push(y.clone());
        for s in &self.steps {
            for j in 0..y.len() {
                y[j] = s.scale[j] * y[j] + s.shift[j];
            }
            out.push(y.clone());
        }
        out
    }

    pub fn terminal_mean(&self) -> &[f64] {
        self.mean.last().unwrap()
    }

    pub fn terminal_var(&self) -> &[f64] {
        self.var.last().unwrap()
    }
}

/// Closed-form propagation of mean and variance through a sampler's updates
/// for a single-Gaussian target with the exact field.
///
/// Per coordinate the exact velocity is `a(t) x + b(t)` with
/// `a = (t v - (1-t)) / D`, `b = (1-t) μ / D`, and the score is
/// `-(x - t μ) / D`, where `D = t² v + (1-t)²`. Each sampler step is then an
/// affine map plus independent Gaussian noise. `Ddpm` is treated as
/// [`SamplerKind::StocRf`] on the same (induced) grid.
pub fn gaussian_pushforward(
    target: &Target,
    grid: &TimeGrid,
    kind: SamplerKind,
    final_step: bool,
) -> Result<Pushforward> {
    let Some(comp) = target.single() else {
        return domain("the affine push-forward needs a single-Gaussian target");
    };
    if kind.needs_positive_start() {
        require_positive_start(grid, "this sampler")?;
    }
    let times = grid.times();
    let steps = if final_step { grid.n_steps() } else { grid.terminal_index() };
    let d = target.dim();
    let init_sd = sigma2(times[0]).sqrt();
    let mut mean = vec![vec![0.0; d]];
    let mut var = vec![vec![init_sd * init_sd; d]];
    let mut maps = Vec::with_capacity(steps);
    for i in 0..steps {
        let (t, t_next) = (times[i], times[i + 1]);
        let eta = t_next - t;
        let s = 1.0 - t;
        let mut step = AffineStep {
            scale: vec![0.0; d],
            shift: vec![0.0; d],
            noise_sd: vec![0.0; d],
        };
        for j in 0..d {
            let (mu, v) = (comp.mean[j], comp.var[j]);
            let den = t * t * v + s * s;
            let a = (t * v - s) / den;
            let b = s * mu / den;
            let (sa, sb, sn) = match kind {
                SamplerKind::Rf | SamplerKind::DdimRf => (1.0 + eta * a, eta * b, 0.0),
                SamplerKind::Langevin => {
                    let g = s / t;
                    (1.0 + eta * (a - g / den), eta * (b + g * t * mu / den), (2.0 * eta * g).sqrt())
                }
                SamplerKind::StocRf | SamplerKind::Ddpm => {
                    let c = StocRfCoefficients::new(t, t_next);
                    let sigma = c.sigma2.sqrt();
                    let outer = c.outer(t, t_next);
                    (
                        outer * (1.0 / sigma - c.eta * sigma / den),
                        outer * c.eta * sigma * t * mu / den,
                        outer * c.psi.sqrt(),
                    )
                }
                SamplerKind::Target => return domain("`target` is not a sampler"),
            };
            step.scale[j] = sa;
            step.shift[j] = sb;
            step.noise_sd[j] = sn;
        }
        let prev_m = mean.last().unwrap();
        let prev_v = var.last().unwrap();
        let m: Vec<f64> = (0..d).map(|j| step.scale[j] * prev_m[j] + step.shift[j]).collect();
        let v: Vec<f64> = (0..d)
            .map(|j| step.scale[j] * step.scale[j] * prev_v[j] + step.noise_sd[j] * step.noise_sd[j])
            .collect();
        mean.push(m);
        var.push(v);
        maps.push(step);
    }
    Ok(Pushforward {
        times: times[..=steps].to_vec(),
        mean,
        var,
        steps: maps,
        init_sd,
    })
}
