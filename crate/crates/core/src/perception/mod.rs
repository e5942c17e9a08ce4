//! Detection and tracking: a ground-truth detector with seeded noise and a
//! SORT tracker.

mod hungarian;
mod sort;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use hungarian::{assignment_cost, hungarian};
pub use sort::{sort_track, KalmanBox, SortConfig, SortError, SortTracker, Track};

use crate::dataflow::Timestamp;
use crate::geometry::Aabb;
use crate::rng::keyed_rng;
use crate::worldsim::{AgentKind, GroundTruthDetection};

pub type BBox2D = Aabb;

/// Intersection over union; 0 when both boxes are empty.
pub fn iou(a: &BBox2D, b: &BBox2D) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox2D,
    pub label: AgentKind,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleMessage {
    pub timestamp: Timestamp,
    pub boxes: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObstacle {
    pub track_id: u64,
    pub label: AgentKind,
    pub bbox: BBox2D,
    pub history: Vec<(Timestamp, BBox2D)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleTrajectoryMessage {
    pub timestamp: Timestamp,
    pub tracks: Vec<TrackedObstacle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of the Gaussian jitter added to each box edge, m.
    pub jitter_std: f64,
    pub drop_prob: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn is_noiseless(&self) -> bool {
        self.jitter_std == 0.0 && self.drop_prob == 0.0
    }
}

/// Turns ground-truth detections into an obstacle message. Each box draws
/// from its own generator keyed by (seed, timestamp, box index).
pub fn perfect_detect(detections: &[GroundTruthDetection], noise: &NoiseModel, timestamp: Timestamp) -> ObstacleMessage {
    let key = timestamp.micros().unwrap_or(u64::MAX);
    let boxes = detections
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            if noise.is_noiseless() {
                return Some(Detection {
                    bbox: d.bbox,
                    label: d.kind,
                    confidence: 1.0,
                });
            }
            let mut rng = keyed_rng(noise.seed, key, i as u64);
            if rng.random::<f64>() < noise.drop_prob {
                return None;
            }
            let b = d.bbox;
            let mut e = [b.x_min, b.y_min, b.x_max, b.y_max];
            if noise.jitter_std > 0.0 {
                let n = Normal::new(0.0, noise.jitter_std).expect("finite jitter");
                for v in &mut e {
                    *v += n.sample(&mut rng);
                }
            }
            let (x0, x1) = (e[0].min(e[2]), e[0].max(e[2]));
            let (y0, y1) = (e[1].min(e[3]), e[1].max(e[3]));
            Some(Detection {
                bbox: BBox2D::new(x0, y0, x1.max(x0 + 1e-3), y1.max(y0 + 1e-3)),
                label: d.kind,
                confidence: 1.0,
            })
        })
        .collect();
    ObstacleMessage { timestamp, boxes }
}
