//! Synthetic operator traces written in the line-delimited trace format.
//!
//!     cargo run --example trace_generation -- /tmp/op.jsonl

use baseplace::pattern::{voxelize, Workspace};
use baseplace::tracefile::{read_poses, write_traces};
use baseplace::tracegen::{generate_traces, OperatorProfile};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "op.jsonl".into());
    let ws = Workspace::new([1.45, -0.91, 0.03], [0.2, 0.1, 0.1], 0.02).unwrap();
    let profile = OperatorProfile::synthetic(&ws, &[1, 2, 3], 0.05, 0.6, 7);
    for v in &profile.voxels {
        println!("voxel at {:.3?} weight {:.2} with {} orientation modes", v.center, v.weight, v.modes.len());
    }

    let poses = generate_traces(&profile, &ws, 5000, 1).unwrap();
    write_traces(out.as_ref(), &poses, "R", 30.0).unwrap();
    let back = read_poses(out.as_ref(), "R").unwrap();
    assert_eq!(back.len(), poses.len());

    let vox = voxelize(&back, &ws);
    println!("{} samples in {out}, {} voxels visited", back.len(), vox.visited().count());
}
