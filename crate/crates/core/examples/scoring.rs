//! Joint-margin and manipulability scores for one target seen from a few base poses.
//!
//!     cargo run --example scoring

use baseplace::geometry::{BasePose, Pose};
use baseplace::kinematics::KinematicModel;
use baseplace::scoring::{pose_score, JointWeights};

fn main() {
    let arm = KinematicModel::reference();
    let weights = JointWeights::uniform(arm.dof());
    // tool pointing down in the middle of the default workspace
    let target = Pose::from_wxyz([1.55, -0.86, 0.08], [0.0, 1.0, 0.0, 0.0]);

    for theta_deg in [-120.0, -90.0, -60.0] {
        for (x, y) in [(1.3, 0.0), (1.5, 0.1), (1.8, 0.4)] {
            let base = BasePose::new(x, y, f64::to_radians(theta_deg));
            let s = pose_score(&arm, base, &target, &weights).unwrap();
            if s.feasible {
                println!(
                    "base ({x:.2}, {y:.2}, {theta_deg:>5}°): jm={:.3} lm={:.3} am={:.3} total={:.3} branch={:?}",
                    s.score_jm, s.score_lm, s.score_am, s.total(), s.branch_id
                );
            } else {
                println!("base ({x:.2}, {y:.2}, {theta_deg:>5}°): unreachable");
            }
        }
    }
}
