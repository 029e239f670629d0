use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    /// Euler discretization of the RF ODE.
    Rf,
    /// Stochastic RF in scaled coordinates (DDPM ancestral step in RF time).
    StocRf,
    /// Euler–Maruyama RF with a Langevin correction.
    Langevin,
    /// Ancestral DDPM sampler in its own coordinates.
    Ddpm,
    /// DDIM-derived deterministic RF sampler.
    DdimRf,
    /// Draws from the target (or a blurred target), not a sampler.
    Target,
}

impl SamplerKind {
    /// Samplers that evaluate the score and so need `t_0 > 0`.
    pub fn needs_positive_start(self) -> bool {
        matches!(self, SamplerKind::StocRf | SamplerKind::Langevin | SamplerKind::DdimRf | SamplerKind::Ddpm)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::Rf => "rf",
            SamplerKind::StocRf => "stoc-rf",
            SamplerKind::Langevin => "langevin",
            SamplerKind::Ddpm => "ddpm",
            SamplerKind::DdimRf => "ddim-rf",
            SamplerKind::Target => "target",
        })
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rf" => Ok(SamplerKind::Rf),
            "stoc-rf" => Ok(SamplerKind::StocRf),
            "langevin" => Ok(SamplerKind::Langevin),
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim-rf" => Ok(SamplerKind::DdimRf),
            other => Err(format!("unknown sampler `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchMeta {
    pub sampler: SamplerKind,
    pub grid: String,
    pub target: String,
    pub seed: u64,
    pub terminal_time: f64,
}

/// States of every trajectory at every recorded grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `states[k]` is the `n × d` row-major batch at `times[k]`.
    pub states: Vec<Vec<f64>>,
}

/// `n` samples in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    data: Vec<f64>,
    n: usize,
    dim: usize,
    pub meta: BatchMeta,
    pub trajectory: Option<Trajectory>,
}

impl SampleBatch {
    pub fn new(data: Vec<f64>, dim: usize, meta: BatchMeta) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return domain(format!(
                "batch of {} values cannot be split into rows of width {dim}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("batch contains non-finite values");
        }
        Ok(SampleBatch {
            n: data.len() / dim,
            data,
            dim,
            meta,
            trajectory: None,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// CSV with header `x0,...,x{d-1}`. Values use Rust's shortest
    /// round-trip formatting, so reading the file back is lossless.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.rows() {
            write_row(&mut w, row)?;
        }
        Ok(())
    }

    /// Trajectory CSV: `step,t,x0,...` with one line per (step, sample).
    pub fn write_trajectory_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let traj = self
            .trajectory
            .as_ref()
            .ok_or_else(|| Error::Domain("batch has no recorded trajectory".into()))?;
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((0..self.dim).map(|j| format!("x{j}")));
        writeln!(w, "{}", header.join(","))?;
        for (k, (t, states)) in traj.times.iter().zip(&traj.states).enumerate() {
            for row in states.chunks_exact(self.dim) {
                write!(w, "{k},{t},")?;
                write_row(&mut w, row)?;
            }
        }
        Ok(())
    }

    /// Read a batch written by [`SampleBatch::write_csv`] (or any numeric CSV
    /// with a header line).
    pub fn read_csv<R: BufRead>(r: R, meta: BatchMeta) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let dim = match lines.next() {
            Some((_, line)) => line?.split(',').count(),
            None => return Err(parse_err(1, "empty sample file")),
        };
        let mut data = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(i + 1, &format!("`{field}` is not a number")))?;
                data.push(v);
            }
            if data.len() - before != dim {
                return Err(parse_err(i + 1, &format!("expected {dim} columns")));
            }
        }
        SampleBatch::new(data, dim, meta)
    }
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        key: None,
        msg: msg.to_string(),
    }
}

fn write_row<W: Write>(w: &mut W, row: &[f64]) -> std::io::Result<()> {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")
}
