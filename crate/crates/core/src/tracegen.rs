//! Synthetic operators: end-effector streams with a planted working pattern.
//!
//! A profile lists the voxels an operator prefers, how often each is visited,
//! and a mixture of orientation modes per voxel. Visits last a geometric number
//! of samples; every sample jitters around the voxel center (staying inside
//! the voxel) and perturbs the visit's orientation mode with isotropic
//! Gaussian noise in rotation-vector space.

use nalgebra::Vector3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, RotVec};
use crate::pattern::Workspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationMode {
    pub mean: RotVec,
    /// Per-axis standard deviation in radians.
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferredVoxel {
    pub center: [f64; 3],
    /// Relative visit frequency.
    pub weight: f64,
    pub modes: Vec<OrientationMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorProfile {
    pub voxels: Vec<PreferredVoxel>,
    /// Mean number of consecutive samples per visit.
    pub dwell: f64,
    /// Standard deviation of the positional jitter around a voxel center (m).
    pub transit_noise: f64,
}

impl OperatorProfile {
    pub fn validate(&self, ws: &Workspace) -> Result<()> {
        if self.voxels.is_empty() {
            return Err(Error::config("profile.voxels", "no preferred voxels"));
        }
        if !(self.dwell >= 1.0 && self.dwell.is_finite()) {
            return Err(Error::config("profile.dwell", "must be at least 1"));
        }
        if !(self.transit_noise >= 0.0 && self.transit_noise.is_finite()) {
            return Err(Error::config("profile.transit_noise", "must be non-negative"));
        }
        for (i, v) in self.voxels.iter().enumerate() {
            let field = |f: &str| format!("profile.voxels[{i}].{f}");
            if !(v.weight > 0.0 && v.weight.is_finite()) {
                return Err(Error::config(field("weight"), "must be positive"));
            }
            if ws.locate(&Vector3::from(v.center)).is_none() {
                return Err(Error::config(field("center"), "lies outside the workspace"));
            }
            if v.modes.is_empty() {
                return Err(Error::config(field("modes"), "no orientation modes"));
            }
            let total: f64 = v.modes.iter().map(|m| m.weight).sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::config(
                    field("modes"),
                    format!("mixture weights sum to {total}, expected 1"),
                ));
            }
            for (k, m) in v.modes.iter().enumerate() {
                if !(m.sigma > 0.0 && m.sigma.is_finite()) {
                    return Err(Error::config(
                        format!("profile.voxels[{i}].modes[{k}].sigma"),
                        "must be positive",
                    ));
                }
                if m.weight < 0.0 {
                    return Err(Error::config(
                        format!("profile.voxels[{i}].modes[{k}].weight"),
                        "must be non-negative",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Random profile with `modes_per_voxel[i]` well-separated orientation
    /// modes on `modes_per_voxel.len()` distinct voxels.
    ///
    /// Modes sit inside a ball of radius 0.9 rad around a tool-down-ish
    /// orientation, pairwise at least `min_separation` apart.
    pub fn synthetic(
        ws: &Workspace,
        modes_per_voxel: &[usize],
        sigma: f64,
        min_separation: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = modes_per_voxel.len().min(ws.voxel_count());
        let mut ids: Vec<usize> = Vec::with_capacity(n);
        while ids.len() < n {
            let id = rng.random_range(0..ws.voxel_count());
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        ids.sort_unstable();
        let anchor = Vector3::new(2.0, 0.0, 0.0);
        let voxels = ids
            .iter()
            .zip(modes_per_voxel)
            .map(|(&id, &k)| {
                let mut means: Vec<Vector3<f64>> = Vec::with_capacity(k);
                let mut attempts = 0;
                while means.len() < k {
                    attempts += 1;
                    let candidate = anchor
                        + Vector3::new(
                            rng.random_range(-0.9..0.9),
                            rng.random_range(-0.9..0.9),
                            rng.random_range(-0.9..0.9),
                        );
                    let ok = (candidate - anchor).norm() <= 0.9
                        && means.iter().all(|m| (m - candidate).norm() >= min_separation);
                    if ok || attempts > 100_000 {
                        means.push(candidate);
                    }
                }
                PreferredVoxel {
                    center: ws.center(id),
                    weight: rng.random_range(1.0..3.0),
                    modes: means
                        .into_iter()
                        .map(|m| OrientationMode {
                            mean: RotVec(m),
                            sigma,
                            weight: 1.0 / k as f64,
                        })
                        .collect(),
                }
            })
            .collect();
        OperatorProfile {
            voxels,
            dwell: 20.0,
            transit_noise: 0.004,
        }
    }

    /// Two operators who both work in voxel `shared` but hold the tool
    /// differently there; each also has one voxel of their own.
    pub fn two_volunteers(ws: &Workspace, shared: usize) -> [OperatorProfile; 2] {
        let n = ws.voxel_count();
        let mode = |w: [f64; 3]| OrientationMode {
            mean: RotVec::from(w),
            sigma: 0.05,
            weight: 1.0,
        };
        let voxel = |id: usize, w: [f64; 3]| PreferredVoxel {
            center: ws.center(id),
            weight: 1.0,
            modes: vec![mode(w)],
        };
        let first = OperatorProfile {
            voxels: vec![voxel(shared, [2.2, 0.3, 0.0]), voxel((shared + 1) % n, [2.0, 0.0, 0.3])],
            dwell: 20.0,
            transit_noise: 0.004,
        };
        let second = OperatorProfile {
            voxels: vec![voxel(shared, [1.5, -0.4, 0.3]), voxel((shared + n / 2) % n, [1.8, 0.2, -0.4])],
            dwell: 20.0,
            transit_noise: 0.004,
        };
        [first, second]
    }
}

/// Generates `n_samples` world-frame end-effector poses for `profile`.
pub fn generate_traces(
    profile: &OperatorProfile,
    ws: &Workspace,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Pose>> {
    profile.validate(ws)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let voxel_pick = WeightedIndex::new(profile.voxels.iter().map(|v| v.weight))
        .map_err(|e| Error::config("profile.voxels", e.to_string()))?;
    let mode_picks: Vec<WeightedIndex<f64>> = profile
        .voxels
        .iter()
        .enumerate()
        .map(|(i, v)| {
            WeightedIndex::new(v.modes.iter().map(|m| m.weight))
                .map_err(|e| Error::config(format!("profile.voxels[{i}].modes"), e.to_string()))
        })
        .collect::<Result<_>>()?;
    let dwell = Geometric::new(1.0 / profile.dwell)
        .map_err(|e| Error::config("profile.dwell", e.to_string()))?;
    let jitter = Normal::new(0.0, profile.transit_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::config("profile.transit_noise", e.to_string()))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    // keep samples strictly inside the voxel so the half-open binning cannot
    // push them into a neighbour
    let half = 0.5 * ws.voxel_size * (1.0 - 1e-6);

    let mut out = Vec::with_capacity(n_samples);
    while out.len() < n_samples {
        let vi = voxel_pick.sample(&mut rng);
        let voxel = &profile.voxels[vi];
        let center = Vector3::from(ws.center(ws.locate(&Vector3::from(voxel.center)).expect("validated")));
        let mode = &voxel.modes[mode_picks[vi].sample(&mut rng)];
        let len = 1 + dwell.sample(&mut rng) as usize;
        for _ in 0..len.min(n_samples - out.len()) {
            let offset = Vector3::from_fn(|_, _| jitter.sample(&mut rng).clamp(-half, half));
            let noise = Vector3::from_fn(|_, _| unit.sample(&mut rng)) * mode.sigma;
            out.push(Pose::from_rotvec(center + offset, RotVec::new(mode.mean.0 + noise)));
        }
    }
    Ok(out)
}
