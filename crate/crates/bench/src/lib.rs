//! Shared fixtures for the benchmarks.

use htnet::graph::DeploymentSequence;
use htnet::scenario::{generate_one, ScenarioConfig};

/// One setup-5 deployment with exactly `aps` APs, `stas_per_ap` STAs each
/// and `len` snapshots.
pub fn deployment(aps: usize, stas_per_ap: usize, len: usize, seed: u64) -> DeploymentSequence {
    let mut c = ScenarioConfig::for_setup(5, seed).expect("setup 5 exists");
    c.n_aps = (aps, aps);
    c.stas_per_ap = (stas_per_ap, stas_per_ap);
    c.sequence_length = len;
    generate_one(&c, 0).expect("valid config")
}
