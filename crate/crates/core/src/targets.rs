//! Structured targets and their exact velocity / score fields.
//!
//! A [`Target`] is a finite mixture of axis-aligned Gaussians, possibly with
//! zero variance along some coordinates. Along the linear path
//! `X_t = t X_1 + (1 - t) X_0` with `X_0 ~ N(0, I)`, each component's marginal
//! is `N(t μ_c, diag(t² v_c + (1-t)²))`, so posterior moments, the velocity
//! `E[X_1 - X_0 | X_t = x]` and the score are all available in closed form.

use std::f64::consts::PI;

use rand::Rng;

use crate::batch::{BatchMeta, SampleBatch, SamplerKind};
use crate::error::{domain, Error, Result};
use crate::exec::{self, Execution};
use crate::kv::{self, Entry};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    components: Vec<Component>,
    dim: usize,
    intrinsic_dim: usize,
    support_radius: f64,
}

impl Target {
    /// Validates weights (positive, summing to 1 within 1e-12), dimensions and
    /// variances. `intrinsic_dim` defaults to the number of coordinates with
    /// nonzero variance in every component.
    pub fn new(components: Vec<Component>, intrinsic_dim: Option<usize>) -> Result<Self> {
        let Some(first) = components.first() else {
            return domain("target needs at least one component");
        };
        let dim = first.mean.len();
        if dim == 0 {
            return domain("target dimension must be positive");
        }
        let mut total = 0.0;
        for (c, comp) in components.iter().enumerate() {
            if comp.mean.len() != dim || comp.var.len() != dim {
                return domain(format!("component {c} does not have dimension {dim}"));
            }
            if !(comp.weight > 0.0 && comp.weight.is_finite()) {
                return domain(format!("component {c} has non-positive weight"));
            }
            if comp.var.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return domain(format!("component {c} has a negative or non-finite variance"));
            }
            if comp.mean.iter().any(|m| !m.is_finite()) {
                return domain(format!("component {c} has a non-finite mean"));
            }
            total += comp.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("component weights sum to {total}, not 1"));
        }
        let active = (0..dim)
            .filter(|&j| components.iter().all(|c| c.var[j] > 0.0))
            .count();
        let intrinsic_dim = intrinsic_dim.unwrap_or(active);
        if intrinsic_dim > dim {
            return domain("intrinsic dimension exceeds ambient dimension");
        }
        let support_radius = components
            .iter()
            .map(|c| norm(&c.mean) + 6.0 * c.var.iter().sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(Target {
            components,
            dim,
            intrinsic_dim,
            support_radius,
        })
    }

    pub fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        Target::new(vec![Component { weight: 1.0, mean, var }], None)
    }

    pub fn standard_gaussian(dim: usize) -> Result<Self> {
        Target::gaussian(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn point_mass(at: Vec<f64>) -> Result<Self> {
        let dim = at.len();
        Target::gaussian(at, vec![0.0; dim])
    }

    /// `N(m 𝟙, diag(I_k, 0_{d-k}))`: unit variance on the first `k`
    /// coordinates, degenerate on the rest.
    pub fn low_rank(dim: usize, k: usize, mean_value: f64) -> Result<Self> {
        if k > dim {
            return domain(format!("k = {k} exceeds d = {dim}"));
        }
        let var = (0..dim).map(|j| if j < k { 1.0 } else { 0.0 }).collect();
        Target::new(
            vec![Component {
                weight: 1.0,
                mean: vec![mean_value; dim],
                var,
            }],
            Some(k),
        )
    }

    pub fn mixture(components: Vec<Component>) -> Result<Self> {
        Target::new(components, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    /// Radius of a ball holding essentially all of the target's mass
    /// (mean norm plus six standard deviations); informational only.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// The component of a single-Gaussian target.
    pub fn single(&self) -> Option<&Component> {
        match self.components.as_slice() {
            [c] => Some(c),
            _ => None,
        }
    }

    /// `μ₁ = E[X₁]`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.components {
            for (acc, v) in m.iter_mut().zip(&c.mean) {
                *acc += c.weight * v;
            }
        }
        m
    }

    /// Per-coordinate variance of the target.
    pub fn var(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut second = vec![0.0; self.dim];
        for c in &self.components {
            for j in 0..self.dim {
                second[j] += c.weight * (c.var[j] + c.mean[j] * c.mean[j]);
            }
        }
        second
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s - m * m).max(0.0))
            .collect()
    }

    pub fn descriptor(&self) -> String {
        format!(
            "gmm(components={},d={},k={})",
            self.components.len(),
            self.dim,
            self.intrinsic_dim
        )
    }

    /// Log-density of the path marginal `X_t` at `x`, for `0 <= t < 1`.
    pub fn log_marginal_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        check_open_time(t)?;
        self.check_dim(x)?;
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + component_log_density(c, t, x))
            .collect();
        Ok(log_sum_exp(&logs))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return domain(format!("point has dimension {}, target {}", x.len(), self.dim));
        }
        Ok(())
    }

    /// Posterior component responsibilities at `(t, x)`.
    fn responsibilities(&self, t: f64, x: &[f64]) -> Vec<f64> {
        if self.components.len() == 1 {
            return vec![1.0];
        }
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + component_log_density(c, t, x))
            .collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Marginal variance `t² v + (1-t)²` of one coordinate of `X_t`.
#[inline]
fn path_var(t: f64, v: f64) -> f64 {
    let s = 1.0 - t;
    t * t * v + s * s
}

fn component_log_density(c: &Component, t: f64, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..x.len() {
        let var = path_var(t, c.var[j]);
        let r = x[j] - t * c.mean[j];
        acc += -0.5 * (r * r / var + (2.0 * PI * var).ln());
    }
    acc
}

fn check_open_time(t: f64) -> Result<()> {
    if !(0.0..1.0).contains(&t) {
        return domain(format!("t = {t} must lie in [0, 1)"));
    }
    Ok(())
}

/// Posterior moments of `X₁` given `X_t = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    /// Diagonal of `Cov(X₁ | X_t = x)`, including the between-component part
    /// for mixtures.
    pub cov_diag: Vec<f64>,
}

pub fn posterior_moments(target: &Target, t: f64, x: &[f64]) -> Result<PosteriorMoments> {
    check_open_time(t)?;
    target.check_dim(x)?;
    let d = target.dim;
    let s2 = (1.0 - t) * (1.0 - t);
    let resp = target.responsibilities(t, x);
    let mut mean = vec![0.0; d];
    let mut second = vec![0.0; d];
    for (c, r) in target.components.iter().zip(&resp) {
        if *r == 0.0 {
            continue;
        }
        for j in 0..d {
            let v = c.var[j];
            let den = path_var(t, v);
            let m = (t * v * x[j] + s2 * c.mean[j]) / den;
            let var = v * s2 / den;
            mean[j] += r * m;
            second[j] += r * (var + m * m);
        }
    }
    let cov_diag = if target.components.len() == 1 {
        let c = &target.components[0];
        c.var.iter().map(|v| v * s2 / path_var(t, *v)).collect()
    } else {
        second
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s - m * m).max(0.0))
            .collect()
    };
    Ok(PosteriorMoments { mean, cov_diag })
}

/// A (possibly approximate) velocity field `v̂_t(x)`.
///
/// The score is derived from the velocity through
/// `ŝ_t(x) = (t v̂_t(x) - x) / (1 - t)` unless an implementation overrides it.
pub trait FieldOracle: Sync + Send {
    fn dim(&self) -> usize;

    /// Writes `v̂_t(x)` into `out`; defined for `0 <= t < 1`.
    fn velocity_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Writes `ŝ_t(x)` into `out`; defined for `0 < t < 1`.
    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_score_time(t)?;
        self.velocity_into(t, x, out)?;
        let inv = 1.0 / (1.0 - t);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (t * *o - xi) * inv;
        }
        Ok(())
    }

    fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.velocity_into(t, x, &mut out)?;
        Ok(out)
    }

    fn score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.score_into(t, x, &mut out)?;
        Ok(out)
    }
}

impl<F: FieldOracle + ?Sized> FieldOracle for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn velocity_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).velocity_into(t, x, out)
    }
    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).score_into(t, x, out)
    }
}

impl<F: FieldOracle + ?Sized> FieldOracle for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn velocity_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).velocity_into(t, x, out)
    }
    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).score_into(t, x, out)
    }
}

fn check_score_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return domain(format!("score is defined only for 0 < t < 1, got t = {t}"));
    }
    Ok(())
}

/// Exact velocity and score of a [`Target`].
#[derive(Debug, Clone)]
pub struct ExactField {
    target: Target,
}

impl ExactField {
    pub fn new(target: Target) -> Self {
        ExactField { target }
    }

    pub fn target(&self) -> &Target {
        &self.target
    }
}

impl FieldOracle for ExactField {
    fn dim(&self) -> usize {
        self.target.dim
    }

    /// Per component, `(μ_{1|t} - x)/(1-t)` simplifies to
    /// `(t v x + (1-t)(μ - x)) / (t² v + (1-t)²)`; evaluating this form avoids
    /// dividing a small difference by `1 - t` near `t = 1`.
    fn velocity_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_open_time(t)?;
        self.target.check_dim(x)?;
        let s = 1.0 - t;
        if let Some(c) = self.target.single() {
            for j in 0..x.len() {
                let v = c.var[j];
                out[j] = (t * v * x[j] + s * (c.mean[j] - x[j])) / path_var(t, v);
            }
            return Ok(());
        }
        out.fill(0.0);
        let resp = self.target.responsibilities(t, x);
        for (c, r) in self.target.components.iter().zip(&resp) {
            if *r == 0.0 {
                continue;
            }
            for j in 0..x.len() {
                let v = c.var[j];
                out[j] += r * (t * v * x[j] + s * (c.mean[j] - x[j])) / path_var(t, v);
            }
        }
        Ok(())
    }

    /// Gradient of the log marginal: `-Σ_c r_c (x - t μ_c) / (t² v_c + (1-t)²)`.
    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_score_time(t)?;
        self.target.check_dim(x)?;
        out.fill(0.0);
        let resp = self.target.responsibilities(t, x);
        for (c, r) in self.target.components.iter().zip(&resp) {
            if *r == 0.0 {
                continue;
            }
            for j in 0..x.len() {
                out[j] -= r * (x[j] - t * c.mean[j]) / path_var(t, c.var[j]);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    None,
    /// Adds a fixed smooth random field with root-mean-square norm `magnitude`.
    AdditiveGaussianField,
    /// `(1 + m) v + m 𝟙`.
    ScaleBias,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub magnitude: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn none() -> Self {
        PerturbationSpec {
            kind: PerturbationKind::None,
            magnitude: 0.0,
            seed: 0,
        }
    }
}

/// Number of random Fourier features in an additive perturbation field.
const FIELD_FEATURES: usize = 32;

/// `f_j(t, x) = Σ_m A_{jm} cos(w_m·x + b_m t + φ_m)` with
/// `Σ_m A_{jm}² = 2 m² / d`, so `E‖f‖² ≈ m²` once the phases decorrelate.
#[derive(Debug, Clone)]
struct RandomField {
    freqs: Vec<f64>,
    time_freqs: Vec<f64>,
    phases: Vec<f64>,
    mix: Vec<f64>,
}

impl RandomField {
    fn new(dim: usize, magnitude: f64, seed: u64) -> Self {
        let m = FIELD_FEATURES;
        let mut rng = rng::substream(rng::derive_seed(seed, rng::label("perturbation-field")), 0, 0);
        let mut freqs = vec![0.0; m * dim];
        rng::fill_standard_normal(&mut rng, &mut freqs);
        let mut time_freqs = vec![0.0; m];
        rng::fill_standard_normal(&mut rng, &mut time_freqs);
        time_freqs.iter_mut().for_each(|b| *b *= 2.0);
        let phases: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let mut mix = vec![0.0; dim * m];
        rng::fill_standard_normal(&mut rng, &mut mix);
        let row_norm2 = 2.0 * magnitude * magnitude / dim as f64;
        for row in mix.chunks_mut(m) {
            let s: f64 = row.iter().map(|a| a * a).sum();
            let scale = (row_norm2 / s).sqrt();
            row.iter_mut().for_each(|a| *a *= scale);
        }
        RandomField {
            freqs,
            time_freqs,
            phases,
            mix,
        }
    }

    fn add_to(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let m = FIELD_FEATURES;
        let d = x.len();
        let mut feats = [0.0; FIELD_FEATURES];
        for (k, f) in feats.iter_mut().enumerate() {
            let w = &self.freqs[k * d..(k + 1) * d];
            let arg: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + self.time_freqs[k] * t
                + self.phases[k];
            *f = arg.cos();
        }
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.mix[j * m..(j + 1) * m];
            *o += row.iter().zip(&feats).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// A field oracle with deliberate, seeded estimation error.
#[derive(Debug, Clone)]
pub struct PerturbedField<F> {
    base: F,
    spec: PerturbationSpec,
    field: Option<RandomField>,
}

impl<F> PerturbedField<F> {
    pub fn base(&self) -> &F {
        &self.base
    }

    pub fn spec(&self) -> &PerturbationSpec {
        &self.spec
    }

    fn is_identity(&self) -> bool {
        self.spec.kind == PerturbationKind::None || self.spec.magnitude == 0.0
    }
}

pub fn perturb_field<F: FieldOracle>(base: F, spec: PerturbationSpec) -> Result<PerturbedField<F>> {
    if !(spec.magnitude >= 0.0 && spec.magnitude.is_finite()) {
        return domain("perturbation magnitude must be a finite non-negative number");
    }
    let field = (spec.kind == PerturbationKind::AdditiveGaussianField && spec.magnitude > 0.0)
        .then(|| RandomField::new(base.dim(), spec.magnitude, spec.seed));
    Ok(PerturbedField { base, spec, field })
}

impl<F: FieldOracle> FieldOracle for PerturbedField<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn velocity_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.base.velocity_into(t, x, out)?;
        if self.is_identity() {
            return Ok(());
        }
        let m = self.spec.magnitude;
        match self.spec.kind {
            PerturbationKind::None => {}
            PerturbationKind::ScaleBias => out.iter_mut().for_each(|v| *v = (1.0 + m) * *v + m),
            PerturbationKind::AdditiveGaussianField => {
                if let Some(f) = &self.field {
                    f.add_to(t, x, out);
                }
            }
        }
        Ok(())
    }

    fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if self.is_identity() {
            return self.base.score_into(t, x, out);
        }
        check_score_time(t)?;
        self.velocity_into(t, x, out)?;
        let inv = 1.0 / (1.0 - t);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (t * *o - xi) * inv;
        }
        Ok(())
    }
}

/// `n` i.i.d. draws of `X₁`; row `i` uses substream `(seed, i, 0)`.
pub fn sample_target(target: &Target, n: usize, seed: u64, exec: Execution) -> Result<SampleBatch> {
    if n == 0 {
        return domain("need at least one sample");
    }
    let d = target.dim;
    let cumulative: Vec<f64> = target
        .components
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c.weight;
            Some(*acc)
        })
        .collect();
    let mut data = vec![0.0; n * d];
    exec::try_for_each_row(exec, &mut data, d, |i, row| {
        let mut rng = rng::substream(seed, i as u64, 0);
        let c = if target.components.len() == 1 {
            0
        } else {
            let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
            cumulative.iter().position(|&w| u < w).unwrap_or(cumulative.len() - 1)
        };
        let comp = &target.components[c];
        rng::fill_standard_normal(&mut rng, row);
        for j in 0..d {
            row[j] = comp.mean[j] + comp.var[j].sqrt() * row[j];
        }
        Ok(())
    })?;
    SampleBatch::new(
        data,
        d,
        BatchMeta {
            sampler: SamplerKind::Target,
            grid: "none".into(),
            target: target.descriptor(),
            seed,
            terminal_time: 1.0,
        },
    )
}

/// Replace each row `x` by `(1 - δ) x + δ z` with fresh `z ~ N(0, I)`.
pub fn blur_samples(batch: &SampleBatch, delta: f64, seed: u64, exec: Execution) -> Result<SampleBatch> {
    if !(0.0..=1.0).contains(&delta) {
        return domain(format!("blur level must lie in [0, 1], got {delta}"));
    }
    if delta == 0.0 {
        return Ok(batch.clone());
    }
    let d = batch.dim();
    let mut out = batch.clone();
    out.trajectory = None;
    exec::try_for_each_row(exec, out.data_mut(), d, |i, row| {
        let mut rng = rng::substream(seed, i as u64, 0);
        let mut z = vec![0.0; d];
        rng::fill_standard_normal(&mut rng, &mut z);
        for (x, zi) in row.iter_mut().zip(&z) {
            *x = (1.0 - delta) * *x + delta * zi;
        }
        Ok(())
    })?;
    out.meta.terminal_time = 1.0 - delta;
    Ok(out)
}

/// Parse a target file:
///
/// ```text
/// dim = 10
/// intrinsic_dim = 8
/// [component]
/// weight = 1
/// mean = 8
/// var = 1,1,1,1,1,1,1,1,0,0
/// ```
///
/// `mean` and `var` accept a comma list of `dim` values or one scalar to
/// broadcast. A lone component may omit `weight`.
pub fn parse_target(text: &str) -> Result<Target> {
    let mut dim: Option<usize> = None;
    let mut intrinsic: Option<usize> = None;
    struct Pending {
        line: usize,
        weight: Option<f64>,
        mean: Option<Vec<f64>>,
        var: Option<Vec<f64>>,
    }
    let mut blocks: Vec<Pending> = Vec::new();
    for line in kv::lines(text)? {
        let n = line.number;
        match line.entry {
            Entry::Section(name) if name == "component" => {
                if dim.is_none() {
                    return Err(kv::err(n, None, "`dim` must be set before the first component"));
                }
                blocks.push(Pending {
                    line: n,
                    weight: None,
                    mean: None,
                    var: None,
                });
            }
            Entry::Section(name) => {
                return Err(kv::err(n, Some(&name), "unknown section"));
            }
            Entry::Pair { key, value } => match (blocks.last_mut(), key.as_str()) {
                (None, "dim") => dim = Some(kv::parse_scalar(n, &key, &value)?),
                (None, "intrinsic_dim") => intrinsic = Some(kv::parse_scalar(n, &key, &value)?),
                (Some(b), "weight") => b.weight = Some(kv::parse_scalar(n, &key, &value)?),
                (Some(b), "mean") => b.mean = Some(kv::parse_broadcast(n, &key, &value, dim.unwrap())?),
                (Some(b), "var") => b.var = Some(kv::parse_broadcast(n, &key, &value, dim.unwrap())?),
                _ => return Err(kv::err(n, Some(&key), "unknown key")),
            },
        }
    }
    dim.ok_or_else(|| kv::err(0, Some("dim"), "missing required key"))?;
    if blocks.is_empty() {
        return Err(kv::err(0, Some("component"), "at least one component block is required"));
    }
    let single = blocks.len() == 1;
    let components = blocks
        .into_iter()
        .map(|b| {
            let weight = match b.weight {
                Some(w) => w,
                None if single => 1.0,
                None => return Err(kv::err(b.line, Some("weight"), "missing in mixture component")),
            };
            Ok(Component {
                weight,
                mean: b.mean.ok_or_else(|| kv::err(b.line, Some("mean"), "missing"))?,
                var: b.var.ok_or_else(|| kv::err(b.line, Some("var"), "missing"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Target::new(components, intrinsic).map_err(|e| match e {
        Error::Domain(msg) => kv::err(0, None, &msg),
        other => other,
    })
}
