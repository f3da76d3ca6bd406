//! Least-squares fitting of the complexity and accuracy models, and the
//! cycles-per-MAC estimate, from externally measured samples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AccuracyModel, ComplexityModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySample {
    pub frames: u32,
    /// MACs, or a measured latency in seconds.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySample {
    pub frames: u32,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityFit {
    pub model: ComplexityModel,
    pub rmse: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyFit {
    pub model: AccuracyModel,
    pub rmse: f64,
    pub samples: usize,
}

#[derive(Debug, Deserialize)]
struct Row {
    frames: u32,
    value: f64,
}

/// Reads a `frames,value` CSV file.
pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<(u32, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    read_rows(&mut rdr)
}

pub fn read_samples_from<R: std::io::Read>(reader: R) -> Result<Vec<(u32, f64)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    read_rows(&mut rdr)
}

fn read_rows<R: std::io::Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<(u32, f64)>> {
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["frames", "value"] {
        return Err(Error::Config(format!(
            "expected header `frames,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        out.push((row.frames, row.value));
    }
    Ok(out)
}

fn distinct_frames(frames: impl Iterator<Item = u32>) -> usize {
    let mut v: Vec<u32> = frames.collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Ordinary least-squares line through the samples; the slope is clamped to
/// be non-negative.
pub fn fit_complexity(samples: &[ComplexitySample]) -> Result<ComplexityFit> {
    for s in samples {
        if s.frames < 1 || !(s.value > 0.0) {
            return Err(Error::InvalidParams(format!("bad complexity sample {s:?}")));
        }
    }
    if distinct_frames(samples.iter().map(|s| s.frames)) < 2 {
        return Err(Error::Underdetermined("complexity fit needs at least two distinct frame counts".into()));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.frames as f64).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.value).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.frames as f64 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.frames as f64 - mx) * (s.value - my)).sum();
    let mut slope = sxy / sxx;
    let mut intercept = my - slope * mx;
    if slope < 0.0 {
        slope = 0.0;
        intercept = my;
    }
    let model = ComplexityModel { m_c0: slope, m_c1: intercept };
    let rmse = rmse(samples.iter().map(|s| model.macs(s.frames as f64) - s.value));
    Ok(ComplexityFit { model, rmse, samples: samples.len() })
}

fn rmse(residuals: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = residuals.fold((0.0, 0usize), |(s, n), r| (s + r * r, n + 1));
    (sum / n.max(1) as f64).sqrt()
}

const M_A1_LO: f64 = -0.99;
const M_A1_HI: f64 = 100.0;
const SCAN_POINTS: usize = 4000;

/// Best `(m_a0, m_a2)` for a fixed `m_a1` and the resulting SSE. The curve is
/// linear in `u = 1/(M + m_a1)`, so this is a two-parameter least-squares
/// problem with `m_a0 >= 0`.
fn profile(samples: &[(f64, f64)], m_a1: f64) -> (AccuracyModel, f64) {
    let n = samples.len() as f64;
    let us: Vec<f64> = samples.iter().map(|(m, _)| 1.0 / (m + m_a1)).collect();
    let mu = us.iter().sum::<f64>() / n;
    let my = samples.iter().map(|(_, y)| y).sum::<f64>() / n;
    let suu: f64 = us.iter().map(|u| (u - mu).powi(2)).sum();
    let suy: f64 = us.iter().zip(samples).map(|(u, (_, y))| (u - mu) * (y - my)).sum();
    // y = m_a2 - m_a0 * u
    let mut m_a0 = if suu > 0.0 { -suy / suu } else { 0.0 };
    let mut m_a2 = my + m_a0 * mu;
    if m_a0 < 0.0 {
        m_a0 = 0.0;
        m_a2 = my;
    }
    let model = AccuracyModel { m_a0, m_a1, m_a2 };
    let sse = samples.iter().zip(&us).map(|((_, y), u)| (m_a2 - m_a0 * u - y).powi(2)).sum();
    (model, sse)
}

/// Fits the hyperbolic accuracy curve: a log-spaced scan over `m_a1` in
/// `(-0.99, 100]` with the linear coefficients solved in closed form at each
/// point, followed by golden-section refinement around the best scan point.
pub fn fit_accuracy(samples: &[AccuracySample]) -> Result<AccuracyFit> {
    for s in samples {
        if s.frames < 1 || !(0.0..=1.0).contains(&s.value) {
            return Err(Error::InvalidParams(format!("bad accuracy sample {s:?}")));
        }
    }
    if distinct_frames(samples.iter().map(|s| s.frames)) < 3 {
        return Err(Error::Underdetermined("accuracy fit needs at least three distinct frame counts".into()));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.frames as f64, s.value)).collect();
    let first = pts[0].1;
    if pts.iter().all(|(_, y)| *y == first) {
        return Ok(AccuracyFit {
            model: AccuracyModel { m_a0: 0.0, m_a1: 0.0, m_a2: first },
            rmse: 0.0,
            samples: samples.len(),
        });
    }

    // scan in s = ln(m_a1 + 1)
    let s_lo = (M_A1_LO + 1.0).ln();
    let s_hi = (M_A1_HI + 1.0).ln();
    let to_a1 = |s: f64| s.exp() - 1.0;
    let step = (s_hi - s_lo) / (SCAN_POINTS - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..SCAN_POINTS {
        let (_, sse) = profile(&pts, to_a1(s_lo + k as f64 * step));
        if sse < best.1 {
            best = (k, sse);
        }
    }
    let lo = s_lo + best.0.saturating_sub(1) as f64 * step;
    let hi = (s_lo + (best.0 + 1) as f64 * step).min(s_hi);
    let s_star = golden_section(|s| profile(&pts, to_a1(s)).1, lo, hi, 1e-13);
    let (mut model, mut sse) = profile(&pts, to_a1(s_star));
    let (grid_model, grid_sse) = profile(&pts, to_a1(s_lo + best.0 as f64 * step));
    if grid_sse < sse {
        model = grid_model;
        sse = grid_sse;
    }
    Ok(AccuracyFit { model, rmse: (sse / pts.len() as f64).sqrt(), samples: samples.len() })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Cycles per MAC from paired MAC counts and measured latencies on a CPU
/// running at `clock_hz`: `clock_hz * sum(latency) / sum(macs)`.
pub fn estimate_rho(macs: &[f64], latency_s: &[f64], clock_hz: f64) -> Result<f64> {
    if macs.is_empty() || latency_s.is_empty() {
        return Err(Error::EmptyInput("rho estimate needs samples".into()));
    }
    if macs.len() != latency_s.len() {
        return Err(Error::InvalidParams(format!("{} MAC counts but {} latencies", macs.len(), latency_s.len())));
    }
    if macs.iter().chain(latency_s).any(|v| !(*v > 0.0)) || !(clock_hz > 0.0) {
        return Err(Error::InvalidParams("samples and clock must be positive".into()));
    }
    Ok(clock_hz * latency_s.iter().sum::<f64>() / macs.iter().sum::<f64>())
}
