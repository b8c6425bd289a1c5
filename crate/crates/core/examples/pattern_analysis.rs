//! Working-pattern analysis: voxel visits, per-voxel bandwidth and orientation clusters.
//!
//!     cargo run --release --example pattern_analysis

use baseplace::pattern::{cluster_voxel, representative_poses, visit_ranking, voxelize, PatternConfig, Workspace};
use baseplace::tracegen::{generate_traces, OperatorProfile};

fn main() {
    let ws = Workspace::new([0.0, 0.0, 0.0], [0.2, 0.1, 0.1], 0.02).unwrap();
    let profile = OperatorProfile::synthetic(&ws, &[1, 2, 3, 4], 0.05, 0.5, 3);
    let traces = generate_traces(&profile, &ws, 18_839, 3).unwrap();
    let vox = voxelize(&traces, &ws);
    let cfg = PatternConfig::default();

    println!("most visited voxels:");
    for (id, center, n) in visit_ranking(&vox).into_iter().take(5) {
        let (bw, clusters) = cluster_voxel(&vox.voxels[id].orientation_samples, &cfg);
        println!("  {id:>3} at {center:.3?}: {n} visits, bandwidth {bw:.1} rad, {} clusters", clusters.len());
    }

    let set = representative_poses(&vox, &cfg);
    println!("{} representative poses", set.len());
    for e in &set.entries {
        println!("  voxel {:>3} rotvec {:.3?}", e.voxel_id, e.rotvec.as_array());
    }
}
