//! Experiment configuration and the low-rank Gaussian sweep.
//!
//! Each cell `(d, N, sampler, grid, seed)` samples the target
//! `N(8·𝟙, diag(1,…,1,0,…,0))` (rank `k`) with the exact field, stops at
//! `t_{N-1}`, and scores the result against an independent target batch
//! blurred to `(1-δ) X₁ + δ Z`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::batch::SamplerKind;
use crate::error::{domain, Error, Result};
use crate::exec::{self, Execution};
use crate::kv::{self, Entry};
use crate::metrics;
use crate::rng;
use crate::samplers::{self, SamplerOptions};
use crate::schedules::{self, DdpmSchedule, GridKind, TimeGrid};
use crate::targets::{self, ExactField, Target};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaRule {
    /// `δ = min(1/N, 1/d)`.
    MinInvNInvD,
    Fixed(f64),
}

impl DeltaRule {
    pub fn delta(&self, n_steps: usize, dim: usize) -> f64 {
        match *self {
            DeltaRule::MinInvNInvD => schedules::default_delta(n_steps, Some(dim)),
            DeltaRule::Fixed(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dims: Vec<usize>,
    pub intrinsic_dim: usize,
    pub n_steps: Vec<usize>,
    pub samplers: Vec<SamplerKind>,
    pub grids: Vec<GridKind>,
    pub num_samples: usize,
    pub seeds: Vec<u64>,
    pub delta: DeltaRule,
    pub rounds: usize,
    /// Per-coordinate mean of the target.
    pub mean: f64,
    pub c0: f64,
    pub c1: f64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            dims: vec![10, 50, 100, 200, 400, 800],
            intrinsic_dim: 8,
            n_steps: vec![100, 200],
            samplers: vec![SamplerKind::Rf],
            grids: vec![GridKind::Uniform, GridKind::UShaped],
            num_samples: 2000,
            seeds: (0..5).collect(),
            delta: DeltaRule::MinInvNInvD,
            rounds: 10,
            mean: 8.0,
            c0: 2.0,
            c1: 4.0,
            output: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty()
            || self.n_steps.is_empty()
            || self.samplers.is_empty()
            || self.grids.is_empty()
            || self.seeds.is_empty()
        {
            return domain("dims, n_steps, samplers, grids and seeds must be nonempty");
        }
        let min_dim = *self.dims.iter().min().unwrap();
        if self.intrinsic_dim == 0 || self.intrinsic_dim > min_dim {
            return domain(format!(
                "intrinsic_dim must lie in [1, {min_dim}], got {}",
                self.intrinsic_dim
            ));
        }
        if self.num_samples < metrics::MIN_BATCH {
            return domain(format!("num_samples must be at least {}", metrics::MIN_BATCH));
        }
        if self.rounds == 0 {
            return domain("rounds must be positive");
        }
        if let DeltaRule::Fixed(d) = self.delta {
            if !(d > 0.0 && d < 0.5) {
                return domain(format!("fixed delta must lie in (0, 1/2), got {d}"));
            }
        }
        if self.samplers.contains(&SamplerKind::Target) {
            return domain("`target` is not a sampler");
        }
        if self.cells().is_empty() {
            return domain("no compatible (sampler, grid) combination in the spec");
        }
        Ok(())
    }

    /// Cells in spec order: `d`, then `N`, sampler, grid, seed. Score-based
    /// samplers need `t_0 > 0` and so only run on the DDPM-induced grid;
    /// the DDPM sampler only makes sense there too.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &d in &self.dims {
            for &n in &self.n_steps {
                for &sampler in &self.samplers {
                    for &grid in &self.grids {
                        if !compatible(sampler, grid) {
                            continue;
                        }
                        for &seed in &self.seeds {
                            out.push(Cell {
                                dim: d,
                                n_steps: n,
                                sampler,
                                grid,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn compatible(sampler: SamplerKind, grid: GridKind) -> bool {
    match grid {
        GridKind::DdpmInduced => sampler != SamplerKind::Target,
        GridKind::Uniform | GridKind::UShaped => sampler == SamplerKind::Rf,
        GridKind::Custom => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub dim: usize,
    pub n_steps: usize,
    pub sampler: SamplerKind,
    pub grid: GridKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub d: usize,
    pub k: usize,
    pub n_steps: usize,
    pub sampler: SamplerKind,
    pub grid: GridKind,
    pub seed: u64,
    pub tv: f64,
    pub tv_stderr: f64,
    /// Reference blur level used for this cell.
    pub delta: f64,
    pub wall_ms: f64,
}

pub const CSV_HEADER: &str = "d,k,N,sampler,grid,seed,delta,tv,tv_stderr";

impl ResultRow {
    /// CSV line without wall time, so files are reproducible.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.d, self.k, self.n_steps, self.sampler, self.grid, self.seed, self.delta, self.tv, self.tv_stderr
        )
    }
}

/// Grid for a cell, the DDPM schedule when the grid is DDPM-induced, and
/// the blur level of the matching reference law.
pub fn cell_grid(spec: &ExperimentSpec, cell: &Cell) -> Result<(TimeGrid, Option<DdpmSchedule>, f64)> {
    let rule_delta = spec.delta.delta(cell.n_steps, cell.dim);
    match cell.grid {
        GridKind::Uniform => Ok((schedules::build_uniform_grid(cell.n_steps)?, None, rule_delta)),
        GridKind::UShaped => {
            let g = schedules::build_ushaped_grid(cell.n_steps, rule_delta)?;
            Ok((g, None, rule_delta))
        }
        GridKind::DdpmInduced => {
            let s = schedules::build_ddpm_schedule(cell.n_steps, spec.c0, spec.c1)?;
            let g = schedules::ddpm_induced_rf_grid(&s)?;
            let delta = 1.0 - g.terminal_time();
            Ok((g, Some(s), delta))
        }
        GridKind::Custom => domain("custom grids are not part of the sweep"),
    }
}

/// One cell. Inner loops run with `exec`; all randomness is keyed by the
/// cell seed, so the same seed gives common random numbers across grids.
pub fn run_cell(spec: &ExperimentSpec, cell: &Cell, exec: Execution) -> Result<ResultRow> {
    let start = Instant::now();
    let target = Target::low_rank(cell.dim, spec.intrinsic_dim, spec.mean)?;
    let (grid, ddpm, delta) = cell_grid(spec, cell)?;
    let field = ExactField::new(target.clone());
    let opts = SamplerOptions {
        record_trajectories: false,
        final_step: false,
        exec,
    };
    let seed = cell.seed;
    let samples = samplers::run_sampler(
        cell.sampler,
        &field,
        &grid,
        ddpm.as_ref(),
        spec.num_samples,
        rng::derive_seed(seed, rng::label("sample")),
        opts,
    )?;
    let clean = targets::sample_target(
        &target,
        spec.num_samples,
        rng::derive_seed(seed, rng::label("reference")),
        exec,
    )?;
    let reference = targets::blur_samples(&clean, delta, rng::derive_seed(seed, rng::label("blur")), exec)?;
    let tv = metrics::estimate_tv(
        &samples,
        &reference,
        spec.rounds,
        rng::derive_seed(seed, rng::label("tv")),
        exec,
    )?;
    let wall_ms = (start.elapsed().as_secs_f64() * 1e3).max(1e-3);
    Ok(ResultRow {
        d: cell.dim,
        k: spec.intrinsic_dim,
        n_steps: cell.n_steps,
        sampler: cell.sampler,
        grid: cell.grid,
        seed,
        tv: tv.value,
        tv_stderr: tv.std_error,
        delta,
        wall_ms,
    })
}

/// Run every cell (in parallel under `exec`) and return rows in spec order.
pub fn run_fig2_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<Vec<ResultRow>> {
    let mut sink = std::io::sink();
    run_fig2_to_csv(spec, exec, &mut sink)
}

/// Like [`run_fig2_experiment`], writing the CSV to `w`. Rows are written in
/// spec order; if a cell fails, the rows before it are kept and a
/// `# FAILED ...` marker line ends the file before the error is returned.
pub fn run_fig2_to_csv<W: Write>(spec: &ExperimentSpec, exec: Execution, w: &mut W) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let cells = spec.cells();
    let results = exec::map_indexed(exec, cells.len(), |i| run_cell(spec, &cells[i], exec));
    writeln!(w, "{CSV_HEADER}")?;
    let mut rows = Vec::with_capacity(cells.len());
    for (cell, r) in cells.iter().zip(results) {
        match r {
            Ok(row) => {
                writeln!(w, "{}", row.csv_line())?;
                rows.push(row);
            }
            Err(e) => {
                writeln!(
                    w,
                    "# FAILED d={} N={} sampler={} grid={} seed={}: {}",
                    cell.dim,
                    cell.n_steps,
                    cell.sampler,
                    cell.grid,
                    cell.seed,
                    e.to_string().replace('\n', " ")
                )?;
                w.flush()?;
                return Err(e);
            }
        }
    }
    w.flush()?;
    Ok(rows)
}

/// Content hash in the style of git blobs: `sha256("blob <len>\0" ++ bytes)`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let mut out = String::with_capacity(64);
    for b in h.finalize() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// JSON manifest: the spec, a hash of the config text and per-cell wall times.
pub fn manifest_json(spec: &ExperimentSpec, config_text: &str, rows: &[ResultRow]) -> String {
    let delta = match spec.delta {
        DeltaRule::MinInvNInvD => serde_json::json!("min_inv_n_inv_d"),
        DeltaRule::Fixed(d) => serde_json::json!(d),
    };
    let cells: Vec<_> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "d": r.d, "N": r.n_steps, "sampler": r.sampler.to_string(),
                "grid": r.grid.to_string(), "seed": r.seed, "wall_ms": r.wall_ms,
            })
        })
        .collect();
    let v = serde_json::json!({
        "spec": {
            "dims": spec.dims,
            "intrinsic_dim": spec.intrinsic_dim,
            "n_steps": spec.n_steps,
            "samplers": spec.samplers.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            "grids": spec.grids.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
            "num_samples": spec.num_samples,
            "seeds": spec.seeds,
            "delta": delta,
            "rounds": spec.rounds,
            "mean": spec.mean,
            "c0": spec.c0,
            "c1": spec.c1,
        },
        "input_hash": content_hash(config_text.as_bytes()),
        "total_wall_ms": rows.iter().map(|r| r.wall_ms).sum::<f64>(),
        "cells": cells,
    });
    serde_json::to_string_pretty(&v).expect("manifest is plain JSON")
}

/// Parse an experiment file of `key = value` lines. Lists are comma
/// separated. Keys: `dims`, `intrinsic_dim`, `n_steps`, `samplers`, `grids`,
/// `num_samples`, `seeds`, `delta` (`min_inv_n_inv_d` or a number),
/// `rounds`, `mean`, `c0`, `c1`, `output`. Missing keys take the defaults of
/// [`ExperimentSpec::default`].
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    for line in kv::lines(text)? {
        let n = line.number;
        let (key, value) = match line.entry {
            Entry::Pair { key, value } => (key, value),
            Entry::Section(name) => return Err(kv::err(n, Some(&name), "sections are not allowed here")),
        };
        let k = key.as_str();
        match k {
            "dims" => spec.dims = kv::parse_list(n, k, &value)?,
            "intrinsic_dim" | "k" => spec.intrinsic_dim = kv::parse_scalar(n, k, &value)?,
            "n_steps" | "N" => spec.n_steps = kv::parse_list(n, k, &value)?,
            "samplers" => spec.samplers = parse_named(n, k, &value)?,
            "grids" => spec.grids = parse_named(n, k, &value)?,
            "num_samples" => spec.num_samples = kv::parse_scalar(n, k, &value)?,
            "seeds" => spec.seeds = kv::parse_list(n, k, &value)?,
            "delta" => {
                spec.delta = if value == "min_inv_n_inv_d" {
                    DeltaRule::MinInvNInvD
                } else {
                    DeltaRule::Fixed(kv::parse_scalar(n, k, &value)?)
                }
            }
            "rounds" => spec.rounds = kv::parse_scalar(n, k, &value)?,
            "mean" => spec.mean = kv::parse_scalar(n, k, &value)?,
            "c0" => spec.c0 = kv::parse_scalar(n, k, &value)?,
            "c1" => spec.c1 = kv::parse_scalar(n, k, &value)?,
            "output" => spec.output = Some(PathBuf::from(value)),
            _ => return Err(kv::err(n, Some(k), &format!("unknown key `{k}`"))),
        }
    }
    spec.validate().map_err(|e| match e {
        Error::Domain(msg) => kv::err(0, None, &msg),
        other => other,
    })?;
    Ok(spec)
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentSpec> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn parse_named<T: std::str::FromStr<Err = String>>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|m: String| kv::err(line, Some(key), &m)))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(kv::err(line, Some(key), "empty list"));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            dims: vec![10],
            n_steps: vec![100],
            grids: vec![GridKind::UShaped],
            seeds: vec![1],
            num_samples: 400,
            rounds: 3,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let spec = parse_config("# nothing but a comment\nseeds = 3\n").unwrap();
        assert_eq!(spec.rounds, 10);
        assert_eq!(spec.num_samples, 2000);
        assert_eq!(spec.seeds, vec![3]);
        assert_eq!(spec.dims, vec![10, 50, 100, 200, 400, 800]);
    }

    #[test]
    fn unknown_key_is_named() {
        match parse_config("dims = 10\nfoo=1\n") {
            Err(Error::Parse { line, key, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(key.as_deref(), Some("foo"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_lists_and_delta() {
        let spec = parse_config(
            "dims = 20, 40\nsamplers = rf, stoc-rf\ngrids = ushaped, ddpm\ndelta = 0.01\nn_steps = 50\n",
        )
        .unwrap();
        assert_eq!(spec.dims, vec![20, 40]);
        assert_eq!(spec.delta, DeltaRule::Fixed(0.01));
        // stoc-rf only runs on the DDPM grid
        let cells = spec.cells();
        assert_eq!(cells.len(), 2 * 3 * 5);
        assert!(cells.iter().all(|c| c.sampler == SamplerKind::Rf || c.grid == GridKind::DdpmInduced));
        assert!(parse_config("samplers = stoc-rf\ngrids = uniform\n").is_err());
        assert!(parse_config("intrinsic_dim = 20\ndims = 10\n").is_err());
        assert!(parse_config("grids = hex\n").is_err());
    }

    #[test]
    fn smoke_cell_and_csv() {
        let spec = small_spec();
        let mut buf = Vec::new();
        let rows = run_fig2_to_csv(&spec, Execution::Sequential, &mut buf).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((0.0..=1.0).contains(&rows[0].tv) && rows[0].wall_ms > 0.0);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 2);
        let mut again = Vec::new();
        run_fig2_to_csv(&spec, Execution::Parallel, &mut again).unwrap();
        assert_eq!(text.as_bytes(), &again[..]);
    }

    #[test]
    fn failing_cell_leaves_marker() {
        // N = 4 with the DDPM schedule and a huge c1 makes β ≥ 1
        let spec = ExperimentSpec {
            n_steps: vec![4],
            grids: vec![GridKind::UShaped, GridKind::DdpmInduced],
            c1: 1e6,
            ..small_spec()
        };
        let mut buf = Vec::new();
        assert!(run_fig2_to_csv(&spec, Execution::Sequential, &mut buf).is_err());
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("# FAILED"));
    }

    #[test]
    fn hash_is_git_style() {
        // git hash-object uses the same framing with SHA-1; spot-check stability
        assert_eq!(content_hash(b"").len(), 64);
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
        let m = manifest_json(&small_spec(), "seeds = 1\n", &[]);
        assert!(m.contains("input_hash"));
    }
}
