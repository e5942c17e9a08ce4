//! SORT: Kalman-filtered boxes associated frame to frame by IoU.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{hungarian, iou, BBox2D, ObstacleMessage, ObstacleTrajectoryMessage, TrackedObstacle};
use crate::dataflow::Timestamp;
use crate::worldsim::AgentKind;

type State = SVector<f64, 7>;
type Cov = SMatrix<f64, 7, 7>;
type Meas = SVector<f64, 4>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SortConfig {
    pub iou_threshold: f64,
    pub max_age: u32,
    pub min_hits: u32,
    /// Number of trailing history entries carried in each message.
    pub history_len: usize,
}

impl Default for SortConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            max_age: 3,
            min_hits: 3,
            history_len: 10,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SortError {
    #[error("time step must be positive, got {0} s")]
    NonPositiveDt(f64),
}

/// Box to measurement (center x, center y, area, aspect ratio).
fn to_z(b: &BBox2D) -> Meas {
    let w = b.width();
    let h = b.height();
    Meas::new(0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max), w * h, w / h)
}

fn to_box(x: &State) -> BBox2D {
    let s = x[2].max(1e-12);
    let r = x[3].max(1e-12);
    let w = (s * r).sqrt();
    let h = s / w;
    BBox2D::new(x[0] - 0.5 * w, x[1] - 0.5 * h, x[0] + 0.5 * w, x[1] + 0.5 * h)
}

fn h_matrix() -> SMatrix<f64, 4, 7> {
    let mut h = SMatrix::<f64, 4, 7>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

/// Constant-velocity Kalman filter over (x, y, s, r, ẋ, ẏ, ṡ).
#[derive(Debug, Clone)]
pub struct KalmanBox {
    pub x: State,
    pub p: Cov,
    q: Cov,
    r: SMatrix<f64, 4, 4>,
}

impl KalmanBox {
    pub fn new(b: &BBox2D) -> Self {
        let z = to_z(b);
        let mut x = State::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(&z);
        let p = Cov::from_diagonal(&State::from_column_slice(&[10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4]));
        let q = Cov::from_diagonal(&State::from_column_slice(&[1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4]));
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&Meas::new(1.0, 1.0, 10.0, 10.0));
        Self { x, p, q, r }
    }

    pub fn predict(&mut self, dt: f64) {
        if self.x[2] + self.x[6] * dt <= 0.0 {
            self.x[6] = 0.0;
        }
        let mut f = Cov::identity();
        f[(0, 4)] = dt;
        f[(1, 5)] = dt;
        f[(2, 6)] = dt;
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + self.q;
        self.symmetrize();
    }

    /// Joseph-form update, which keeps the covariance PSD.
    pub fn update(&mut self, b: &BBox2D) {
        let h = h_matrix();
        let y = to_z(b) - h * self.x;
        let s = h * self.p * h.transpose() + self.r;
        let k = self.p * h.transpose() * s.try_inverse().expect("innovation covariance is positive definite");
        self.x += k * y;
        let ikh = Cov::identity() - k * h;
        self.p = ikh * self.p * ikh.transpose() + k * self.r * k.transpose();
        self.symmetrize();
    }

    fn symmetrize(&mut self) {
        self.p = 0.5 * (self.p + self.p.transpose());
    }

    pub fn bbox(&self) -> BBox2D {
        to_box(&self.x)
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub label: AgentKind,
    pub kf: KalmanBox,
    pub age: u32,
    pub hits: u32,
    pub time_since_update: u32,
    pub history: Vec<(Timestamp, BBox2D)>,
}

#[derive(Debug, Clone)]
pub struct SortTracker {
    pub config: SortConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_time: Option<Timestamp>,
}

impl SortTracker {
    pub fn new(config: SortConfig) -> Self {
        Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_time: None,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Processes one message, deriving `dt` from the previous message's
    /// timestamp (the first message only initializes tracks).
    pub fn step(&mut self, msg: &ObstacleMessage) -> ObstacleTrajectoryMessage {
        let dt = self
            .last_time
            .map(|t| (msg.timestamp.as_micros() - t.as_micros()) as f64 * 1e-6)
            .filter(|dt| *dt > 0.0);
        self.last_time = Some(msg.timestamp);
        match dt {
            Some(dt) => sort_track(self, msg, dt).expect("dt is positive"),
            None => self.associate(msg),
        }
    }

    fn associate(&mut self, msg: &ObstacleMessage) -> ObstacleTrajectoryMessage {
        let predicted: Vec<BBox2D> = self.tracks.iter().map(|t| t.kf.bbox()).collect();
        let cost: Vec<Vec<f64>> = msg
            .boxes
            .iter()
            .map(|d| predicted.iter().map(|p| 1.0 - iou(&d.bbox, p)).collect())
            .collect();
        let mut det_matched = vec![false; msg.boxes.len()];
        for (d, t) in hungarian(&cost) {
            if 1.0 - cost[d][t] >= self.config.iou_threshold {
                det_matched[d] = true;
                let tr = &mut self.tracks[t];
                tr.kf.update(&msg.boxes[d].bbox);
                tr.hits += 1;
                tr.time_since_update = 0;
                tr.label = msg.boxes[d].label;
            }
        }
        for (det, _) in msg.boxes.iter().zip(&det_matched).filter(|(_, m)| !**m) {
            self.tracks.push(Track {
                id: self.next_id,
                label: det.label,
                kf: KalmanBox::new(&det.bbox),
                age: 0,
                hits: 1,
                time_since_update: 0,
                history: Vec::new(),
            });
            self.next_id += 1;
        }
        let max_age = self.config.max_age;
        self.tracks.retain(|t| t.time_since_update <= max_age);

        let mut out = Vec::new();
        for t in &mut self.tracks {
            if t.time_since_update != 0 {
                continue;
            }
            let b = t.kf.bbox();
            t.history.push((msg.timestamp, b));
            if t.hits >= self.config.min_hits {
                let from = t.history.len().saturating_sub(self.config.history_len);
                out.push(TrackedObstacle {
                    track_id: t.id,
                    label: t.label,
                    bbox: b,
                    history: t.history[from..].to_vec(),
                });
            }
        }
        ObstacleTrajectoryMessage {
            timestamp: msg.timestamp,
            tracks: out,
        }
    }
}

/// Predicts every track forward by `dt`, associates `msg`, and returns the
/// confirmed tracks updated in this frame.
pub fn sort_track(tracker: &mut SortTracker, msg: &ObstacleMessage, dt: f64) -> Result<ObstacleTrajectoryMessage, SortError> {
    if !(dt > 0.0) {
        return Err(SortError::NonPositiveDt(dt));
    }
    for t in &mut tracker.tracks {
        t.kf.predict(dt);
        t.age += 1;
        t.time_since_update += 1;
    }
    tracker.tracks.retain(|t| t.kf.x.iter().all(|v| v.is_finite()));
    Ok(tracker.associate(msg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::Detection;

    fn msg(t: u64, boxes: &[BBox2D]) -> ObstacleMessage {
        ObstacleMessage {
            timestamp: Timestamp::from_micros(t),
            boxes: boxes
                .iter()
                .map(|b| Detection {
                    bbox: *b,
                    label: AgentKind::Vehicle,
                    confidence: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn single_box_keeps_one_id() {
        let mut tr = SortTracker::new(SortConfig::default());
        let mut ids = std::collections::BTreeSet::new();
        for k in 0..10u64 {
            let x = 2.0 * k as f64 * 0.05;
            let out = tr.step(&msg(k * 50_000, &[BBox2D::new(x, 0.0, x + 4.0, 2.0)]));
            ids.extend(out.tracks.iter().map(|t| t.track_id));
            if k >= 2 {
                assert_eq!(out.tracks.len(), 1);
            }
        }
        assert_eq!(ids.len(), 1);
    }

    #[test]
    fn empty_stream_confirms_nothing() {
        let mut tr = SortTracker::new(SortConfig::default());
        for k in 0..20u64 {
            assert!(tr.step(&msg(k * 50_000, &[])).tracks.is_empty());
        }
        assert!(tr.tracks().is_empty());
    }

    #[test]
    fn unmatched_tracks_age_out() {
        let mut tr = SortTracker::new(SortConfig::default());
        let b = BBox2D::new(0.0, 0.0, 4.0, 2.0);
        for k in 0..5u64 {
            tr.step(&msg(k * 50_000, &[b]));
        }
        for k in 5..8u64 {
            tr.step(&msg(k * 50_000, &[]));
        }
        assert_eq!(tr.tracks().len(), 1);
        tr.step(&msg(8 * 50_000, &[]));
        assert!(tr.tracks().is_empty());
    }

    #[test]
    fn rejects_non_positive_dt() {
        let mut tr = SortTracker::new(SortConfig::default());
        assert_eq!(sort_track(&mut tr, &msg(0, &[]), 0.0), Err(SortError::NonPositiveDt(0.0)));
    }

    #[test]
    fn box_state_round_trip() {
        let b = BBox2D::new(1.0, -2.0, 5.5, 0.5);
        let back = to_box(&{
            let mut x = State::zeros();
            x.fixed_rows_mut::<4>(0).copy_from(&to_z(&b));
            x
        });
        for (p, q) in [
            (b.x_min, back.x_min),
            (b.y_min, back.y_min),
            (b.x_max, back.x_max),
            (b.y_max, back.y_max),
        ] {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
