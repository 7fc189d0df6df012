use serde::{Deserialize, Serialize};

use crate::graph::{DeploymentSequence, EdgeKind, MIN_DISTANCE_M, NODE_FEATURES};

/// Mean and standard deviation of one feature column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            sum += v;
            sq += v * v;
        }
        if n == 0 {
            return Self { mean: 0.0, std: 1.0 };
        }
        let mean = sum / n as f64;
        let std = (sq / n as f64 - mean * mean).max(0.0).sqrt();
        Self {
            mean,
            std: if std > 1e-9 { std } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Standardization of the continuous inputs. Kind-specific slots (airtime,
/// SINR, RSSI, interference) are fitted and applied only where meaningful,
/// so unused slots stay exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub x: Moments,
    pub y: Moments,
    pub airtime: Moments,
    pub sinr: Moments,
    pub distance: Moments,
    pub rssi: Moments,
    pub interference: Moments,
    /// Mean training label; the head output is multiplied by it so the
    /// softplus operates near unit scale.
    #[serde(default = "unit")]
    pub label: f64,
}

fn unit() -> f64 {
    1.0
}

impl Scaler {
    pub fn fit(deployments: &[DeploymentSequence]) -> Self {
        let snaps = || deployments.iter().flat_map(|d| &d.snapshots);
        let nodes = || snaps().flat_map(|s| &s.nodes);
        let edges = || snaps().flat_map(|s| &s.edges);
        Self {
            x: Moments::fit(nodes().map(|n| n.x)),
            y: Moments::fit(nodes().map(|n| n.y)),
            airtime: Moments::fit(nodes().filter(|n| n.is_ap()).map(|n| n.airtime)),
            sinr: Moments::fit(nodes().filter(|n| n.is_sta()).map(|n| n.sinr)),
            distance: Moments::fit(edges().map(|e| e.distance.max(MIN_DISTANCE_M))),
            rssi: Moments::fit(edges().filter(|e| e.kind == EdgeKind::ApSta).map(|e| e.rssi)),
            interference: Moments::fit(edges().filter(|e| e.kind == EdgeKind::ApAp).map(|e| e.interference)),
            label: {
                let m = Moments::fit(snaps().flat_map(|s| s.targets().map(|t| t.1))).mean;
                if m.is_finite() && m > 0.0 { m } else { 1.0 }
            },
        }
    }

    pub fn node(&self, f: &mut [f64; NODE_FEATURES]) {
        f[1] = self.x.apply(f[1]);
        f[2] = self.y.apply(f[2]);
        if f[0] == 0.0 {
            f[19] = self.airtime.apply(f[19]);
        } else {
            f[20] = self.sinr.apply(f[20]);
        }
    }

    pub fn edge(&self, f: &mut [f64; 4]) {
        f[1] = self.distance.apply(f[1]);
        if f[0] == 0.0 {
            f[2] = self.rssi.apply(f[2]);
        } else {
            f[3] = self.interference.apply(f[3]);
        }
    }
}
