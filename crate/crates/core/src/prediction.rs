//! Constant-velocity trajectory prediction by per-axis least squares.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataflow::Timestamp;
use crate::geometry::Point2;
use crate::worldsim::AgentKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionConfig {
    pub horizon: f64,
    pub step: f64,
    /// Trailing history points used in the fit.
    pub window: usize,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            horizon: 3.0,
            step: 0.1,
            window: 10,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictionError {
    #[error("history needs at least two distinct timestamps")]
    DegenerateHistory,
    #[error("horizon and step must be positive")]
    BadHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePrediction {
    pub track_id: u64,
    pub label: AgentKind,
    /// Footprint extents along x and y, m.
    pub size: (f64, f64),
    pub past: Vec<(Timestamp, Point2)>,
    pub predicted: Vec<(Timestamp, Point2)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePredictionMessage {
    pub timestamp: Timestamp,
    pub obstacles: Vec<ObstaclePrediction>,
}

/// Least-squares line `p(τ) = a + b τ` over `(τ, value)` pairs.
fn fit(tau: &[f64], vals: &[f64]) -> (f64, f64) {
    let n = tau.len() as f64;
    let tm = tau.iter().sum::<f64>() / n;
    let vm = vals.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in tau.iter().zip(vals) {
        sxy += (t - tm) * (v - vm);
        sxx += (t - tm) * (t - tm);
    }
    let b = sxy / sxx;
    (vm - b * tm, b)
}

/// Fits the last `window` points (all when `window` is 0) and extrapolates
/// at `step` intervals after the newest sample, up to `horizon` seconds.
pub fn predict_linear_window(
    history: &[(Timestamp, Point2)],
    horizon: f64,
    step: f64,
    window: usize,
) -> Result<Vec<(Timestamp, Point2)>, PredictionError> {
    if !(horizon > 0.0 && step > 0.0) {
        return Err(PredictionError::BadHorizon);
    }
    let from = if window == 0 { 0 } else { history.len().saturating_sub(window) };
    let h = &history[from..];
    if h.len() < 2 {
        return Err(PredictionError::DegenerateHistory);
    }
    let last = h[h.len() - 1].0.as_micros();
    // Time relative to the newest sample keeps the fit shift-invariant.
    let tau: Vec<f64> = h.iter().map(|(t, _)| (t.as_micros() as f64 - last as f64) * 1e-6).collect();
    if tau.iter().all(|t| *t == tau[0]) {
        return Err(PredictionError::DegenerateHistory);
    }
    let xs: Vec<f64> = h.iter().map(|(_, p)| p.x).collect();
    let ys: Vec<f64> = h.iter().map(|(_, p)| p.y).collect();
    let (ax, bx) = fit(&tau, &xs);
    let (ay, by) = fit(&tau, &ys);
    let step_us = (step * 1e6).round() as u64;
    let count = ((horizon * 1e6).round() as u64 / step_us).max(1);
    Ok((1..=count)
        .map(|k| {
            let dt = k * step_us;
            let s = dt as f64 * 1e-6;
            (Timestamp::from_micros(last + dt), Point2::new(ax + bx * s, ay + by * s))
        })
        .collect())
}

pub fn predict_linear(history: &[(Timestamp, Point2)], horizon: f64, step: f64) -> Result<Vec<(Timestamp, Point2)>, PredictionError> {
    predict_linear_window(history, horizon, step, PredictionConfig::default().window)
}

/// Headings between consecutive predicted points; the last one repeats.
pub fn predicted_headings(points: &[(Timestamp, Point2)]) -> Vec<f64> {
    let mut out: Vec<f64> = points
        .windows(2)
        .map(|w| {
            let d = w[1].1 - w[0].1;
            d.y.atan2(d.x)
        })
        .collect();
    if let Some(l) = out.last().copied() {
        out.push(l);
    }
    out
}
