//! Score sampling: random base poses in a box, each scored against the
//! representative set, forming the regression dataset.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BasePose;
use crate::kinematics::KinematicModel;
use crate::pattern::RepresentativeSet;
use crate::scoring::{final_score, JointWeights};

/// Axis-aligned box of base poses (theta in radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRange {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub theta: [f64; 2],
}

impl BaseRange {
    pub fn new(x: [f64; 2], y: [f64; 2], theta: [f64; 2]) -> Result<Self> {
        let r = BaseRange { x, y, theta };
        r.validate()?;
        Ok(r)
    }

    /// Right-arm box from the dVRK experiments: X 1.188..1.888 m,
    /// Y -0.212..0.488 m, theta -120..-60 deg.
    pub fn right_arm() -> Self {
        BaseRange {
            x: [1.188, 1.888],
            y: [-0.212, 0.488],
            theta: [(-120f64).to_radians(), (-60f64).to_radians()],
        }
    }

    /// Left-arm box: X 1.190..1.890 m, Y -0.487..0.213 m, theta -120..-60 deg.
    pub fn left_arm() -> Self {
        BaseRange {
            x: [1.190, 1.890],
            y: [-0.487, 0.213],
            theta: [(-120f64).to_radians(), (-60f64).to_radians()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("x", self.x), ("y", self.y), ("theta", self.theta)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(
                    format!("base_range.{name}"),
                    format!("need min < max, got [{lo}, {hi}]"),
                ));
            }
        }
        if self.theta[0] < -PI || self.theta[1] > PI {
            return Err(Error::config("base_range.theta", "must lie within [-180, 180] deg"));
        }
        Ok(())
    }

    pub fn axes(&self) -> [[f64; 2]; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn contains(&self, b: &BasePose) -> bool {
        let inside = |v: f64, [lo, hi]: [f64; 2]| v >= lo && v <= hi;
        inside(b.x, self.x) && inside(b.y, self.y) && inside(b.theta, self.theta)
    }
}

/// `m` base poses drawn uniformly from `range`.
///
/// Row `j` draws from its own ChaCha stream `(seed, j)`, so any prefix of the
/// sequence is independent of `m`. A draw within 1e-9 of an earlier pose is
/// rejected and redrawn from the same stream.
pub fn sample_bases(range: &BaseRange, m: usize, seed: u64) -> Vec<BasePose> {
    const QUANTUM: f64 = 1e-9;
    let mut seen: HashSet<[i64; 3]> = HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        loop {
            let b = BasePose {
                x: rng.random_range(range.x[0]..=range.x[1]),
                y: rng.random_range(range.y[0]..=range.y[1]),
                theta: rng.random_range(range.theta[0]..=range.theta[1]),
            };
            let key = [
                (b.x / QUANTUM).round() as i64,
                (b.y / QUANTUM).round() as i64,
                (b.theta / QUANTUM).round() as i64,
            ];
            if seen.insert(key) {
                out.push(b);
                break;
            }
        }
    }
    out
}

/// One `(base, score)` row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub base: BasePose,
    pub score: f64,
}

/// Provenance stored next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub range: BaseRange,
    pub seed: u64,
    pub alpha: f64,
    pub joint_weights: JointWeights,
    pub model_name: String,
    pub repset_digest: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub rows: Vec<Sample>,
    pub meta: SampleMeta,
}

impl SampleSet {
    /// Wraps bare rows, e.g. an analytic field used for testing regressors.
    pub fn from_rows(rows: Vec<Sample>, range: BaseRange, seed: u64) -> Self {
        let n = rows.len();
        SampleSet {
            rows,
            meta: SampleMeta {
                range,
                seed,
                alpha: 0.0,
                joint_weights: JointWeights::uniform(1),
                model_name: String::new(),
                repset_digest: String::new(),
                rows: n,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Scores `m` sampled bases against the representative set. Rows are scored
/// in parallel and kept in sampling order.
pub fn build_dataset(
    model: &KinematicModel,
    set: &RepresentativeSet,
    range: &BaseRange,
    m: usize,
    seed: u64,
    alpha: f64,
    weights: &JointWeights,
) -> Result<SampleSet> {
    if set.is_empty() {
        return Err(Error::EmptyRepresentativeSet);
    }
    range.validate()?;
    let bases = sample_bases(range, m, seed);
    let scores: Vec<f64> = bases
        .par_iter()
        .map(|b| final_score(model, *b, set, alpha, weights).map(|f| f.value))
        .collect::<Result<_>>()?;
    let rows = bases
        .into_iter()
        .zip(scores)
        .map(|(base, score)| Sample { base, score })
        .collect();
    Ok(SampleSet {
        rows,
        meta: SampleMeta {
            range: *range,
            seed,
            alpha,
            joint_weights: weights.clone(),
            model_name: model.name().to_string(),
            repset_digest: set.digest(),
            rows: m,
        },
    })
}

pub const CSV_HEADER: [&str; 4] = ["X", "Y", "Theta", "score"];

/// Formats a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `X,Y,Theta,score` rows (theta in radians).
pub fn write_rows_csv(path: &Path, rows: &[Sample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([fmt17(r.base.x), fmt17(r.base.y), fmt17(r.base.theta), fmt17(r.score)])?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            reason: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.into(),
                    line,
                    reason: format!("column {} is not a number", CSV_HEADER[k]),
                })
        };
        rows.push(Sample {
            base: BasePose {
                x: parse(0)?,
                y: parse(1)?,
                theta: parse(2)?,
            },
            score: parse(3)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{base_to_world, JointConfig, Pose};
    use crate::pattern::RepresentativeEntry;

    fn entry(pose: &Pose) -> RepresentativeEntry {
        RepresentativeEntry {
            voxel_id: 0,
            center: pose.p.into(),
            rotvec: pose.rotvec(),
            visited: true,
            visit_count: 1,
        }
    }

    #[test]
    fn sampled_bases_stay_in_range_and_repeat() {
        let r = BaseRange::right_arm();
        let a = sample_bases(&r, 20_000, 3);
        assert_eq!(a.len(), 20_000);
        assert!(a.iter().all(|b| r.contains(b)));
        let b = sample_bases(&r, 20_000, 3);
        assert_eq!(a, b);
        // prefix property of per-row streams
        assert_eq!(sample_bases(&r, 10, 3), a[..10].to_vec());
        assert_ne!(sample_bases(&r, 10, 4), a[..10].to_vec());

        let one = sample_bases(&r, 1, 0);
        assert_eq!(one.len(), 1);
        assert!(r.contains(&one[0]));
    }

    #[test]
    fn range_validation() {
        assert!(BaseRange::new([1.0, 0.0], [0.0, 1.0], [0.0, 1.0]).is_err());
        assert!(BaseRange::new([0.0, 1.0], [0.0, 1.0], [-4.0, 1.0]).is_err());
        assert!(BaseRange::right_arm().validate().is_ok());
        assert!(BaseRange::left_arm().validate().is_ok());
    }

    #[test]
    fn empty_set_is_rejected() {
        let m = KinematicModel::reference();
        let err = build_dataset(
            &m,
            &RepresentativeSet::default(),
            &BaseRange::right_arm(),
            5,
            0,
            0.0,
            &JointWeights::uniform(6),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyRepresentativeSet));
    }

    #[test]
    fn rows_recompute_bit_for_bit() {
        let m = KinematicModel::reference();
        let w = JointWeights::uniform(6);
        let target = Pose::from_wxyz([1.55, -1.1, 0.05], [0.3, 0.95, 0.0, 0.1]);
        let set = RepresentativeSet::from_entries(vec![entry(&target)]);
        let range = BaseRange::right_arm();
        let d = build_dataset(&m, &set, &range, 64, 17, 0.0, &w).unwrap();
        assert_eq!(d.meta.repset_digest, set.digest());
        for row in &d.rows {
            let again = final_score(&m, row.base, &set, 0.0, &w).unwrap().value;
            assert_eq!(again.to_bits(), row.score.to_bits());
        }
    }

    #[test]
    fn half_reachable_entry_gives_zero_rows() {
        // a target placed so only the near half of the X range can reach it
        let m = KinematicModel::reference();
        let w = JointWeights::uniform(6);
        let range = BaseRange::new([0.0, 3.0], [-0.1, 0.1], [-0.1, 0.1]).unwrap();
        let target = Pose::from_wxyz([3.3, 0.0, 0.45], [0.0, 1.0, 0.0, 0.0]);
        let set = RepresentativeSet::from_entries(vec![entry(&target)]);
        let d = build_dataset(&m, &set, &range, 400, 1, 0.0, &w).unwrap();
        let zeros = d.rows.iter().filter(|r| r.score == 0.0).count();
        assert!(zeros > 50 && zeros < 350, "zeros = {zeros}");
        for r in &d.rows {
            let reachable = (r.base.x - target.p.x).hypot(r.base.y - target.p.y) < 2.1;
            if r.score > 0.0 {
                assert!(reachable);
            }
        }
    }

    #[test]
    fn constant_field_when_geometry_is_invariant() {
        // an entry on the base's own vertical axis only sees yaw, which the
        // base joint absorbs without changing any other joint
        let m = KinematicModel::reference();
        let w = JointWeights::uniform(6);
        let base = BasePose::new(0.5, 0.5, 0.0);
        let local = m.forward_kinematics(&JointConfig(vec![0.0, 0.3, -0.2, 0.0, 0.9, 0.0])).unwrap();
        let world = Pose::from_isometry(&(base_to_world(base, m.base_height()) * local.to_isometry()));
        let set = RepresentativeSet::from_entries(vec![entry(&world)]);
        let range = BaseRange::new([0.5, 0.5 + 1e-6], [0.5, 0.5 + 1e-6], [-0.01, 0.01]).unwrap();
        let d = build_dataset(&m, &set, &range, 30, 2, 0.0, &w).unwrap();
        let c = d.rows[0].score;
        assert!(c > 0.0);
        for r in &d.rows {
            assert!((r.score - c).abs() < 1e-3, "{} vs {c}", r.score);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rows: Vec<Sample> = sample_bases(&BaseRange::right_arm(), 50, 1)
            .into_iter()
            .enumerate()
            .map(|(i, base)| Sample {
                base,
                score: (i as f64).sqrt() * 1.234567,
            })
            .collect();
        write_rows_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("X,Y,Theta,score\n"));
        assert_eq!(read_rows_csv(&path).unwrap(), rows);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "X,Y,Theta,score\n1,2,3,4\n1,2,oops,4\n").unwrap();
        match read_rows_csv(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }
}
