//! Forward and inverse kinematics of the reference arm.
//!
//!     cargo run --example kinematics

use baseplace::geometry::JointConfig;
use baseplace::kinematics::KinematicModel;

fn main() {
    let arm = KinematicModel::reference();
    println!("{} ({} joints, base height {} m)", arm.name(), arm.dof(), arm.base_height());

    let q = JointConfig(vec![0.3, 0.4, -0.5, 0.7, 0.6, -0.4]);
    let flange = arm.forward_kinematics(&q).unwrap();
    println!("FK p = {:.4?}  q(wxyz) = {:.4?}", flange.p.as_slice(), flange.wxyz());

    // every in-limit branch reaches the same flange pose
    for sol in arm.inverse_kinematics(&flange) {
        let (dp, da) = arm.forward_kinematics(&sol.q).unwrap().error_to(&flange);
        println!("branch {}: q = {:.4?}  err = {dp:.1e} m / {da:.1e} rad", sol.branch_id, sol.q.as_slice());
    }

    let jac = arm.jacobian(&q).unwrap();
    println!("jacobian (6x{}):{jac:.3}", jac.ncols());
}
