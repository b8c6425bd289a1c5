//! Working-pattern analysis.
//!
//! End-effector samples are binned into a voxel grid; the orientations seen in
//! each visited voxel are clustered with flat-kernel mean-shift on rotation
//! vectors, the bandwidth being picked per voxel by mean silhouette. Each
//! surviving cluster mode, paired with its voxel center, becomes one
//! representative pose.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Pose, RotVec};

/// Axis-aligned box split into cubic voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub origin: [f64; 3],
    /// Box extent, padded up to a whole number of voxels per axis.
    pub dims: [f64; 3],
    pub voxel_size: f64,
    #[serde(skip)]
    counts: [usize; 3],
}

impl Workspace {
    /// Builds the grid; an extent that is not a multiple of `voxel_size` is
    /// padded up to the next multiple (check [`Workspace::was_padded_from`]).
    pub fn new(origin: [f64; 3], dims: [f64; 3], voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::config("workspace.voxel_size", "must be positive"));
        }
        if dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::config("workspace.dims", "every extent must be positive"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::config("workspace.origin", "must be finite"));
        }
        let mut counts = [0usize; 3];
        let mut padded = dims;
        for a in 0..3 {
            let ratio = dims[a] / voxel_size;
            let n = (ratio - 1e-9).ceil().max(1.0) as usize;
            counts[a] = n;
            if (ratio - n as f64).abs() > 1e-9 {
                padded[a] = n as f64 * voxel_size;
            }
        }
        Ok(Workspace {
            origin,
            dims: padded,
            voxel_size,
            counts,
        })
    }

    pub fn was_padded_from(&self, requested: [f64; 3]) -> bool {
        self.dims != requested
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn voxel_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// Row-major voxel id with X slowest: `(ix * ny + iy) * nz + iz`.
    pub fn voxel_id(&self, idx: [usize; 3]) -> usize {
        let [_, ny, nz] = self.counts;
        (idx[0] * ny + idx[1]) * nz + idx[2]
    }

    pub fn voxel_index(&self, id: usize) -> [usize; 3] {
        let [_, ny, nz] = self.counts;
        [id / (ny * nz), (id / nz) % ny, id % nz]
    }

    pub fn center(&self, id: usize) -> [f64; 3] {
        let idx = self.voxel_index(id);
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + (idx[a] as f64 + 0.5) * self.voxel_size;
        }
        c
    }

    /// Voxel containing `p`, using half-open `[lo, hi)` cells so a point on a
    /// shared face goes to the higher-index voxel.
    pub fn locate(&self, p: &Vector3<f64>) -> Option<usize> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let t = (p[a] - self.origin[a]) / self.voxel_size;
            // absorb round-off so a point built as origin + k * size lands in cell k
            let k = (t + 1e-9).floor();
            if !(k >= 0.0 && k < self.counts[a] as f64) {
                return None;
            }
            idx[a] = k as usize;
        }
        Some(self.voxel_id(idx))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.locate(p).is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelStats {
    pub id: usize,
    pub center: [f64; 3],
    pub visit_count: usize,
    pub orientation_samples: Vec<RotVec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Voxelization {
    pub voxels: Vec<VoxelStats>,
    pub total_samples: usize,
    pub out_of_workspace: usize,
}

impl Voxelization {
    pub fn visited(&self) -> impl Iterator<Item = &VoxelStats> {
        self.voxels.iter().filter(|v| v.visit_count > 0)
    }
}

pub fn voxelize<'a>(traces: impl IntoIterator<Item = &'a Pose>, ws: &Workspace) -> Voxelization {
    let mut voxels: Vec<VoxelStats> = (0..ws.voxel_count())
        .map(|id| VoxelStats {
            id,
            center: ws.center(id),
            visit_count: 0,
            orientation_samples: Vec::new(),
        })
        .collect();
    let mut total = 0;
    let mut outside = 0;
    for pose in traces {
        total += 1;
        match ws.locate(&pose.p) {
            Some(id) => {
                let v = &mut voxels[id];
                v.visit_count += 1;
                v.orientation_samples.push(pose.rotvec());
            }
            None => outside += 1,
        }
    }
    Voxelization {
        voxels,
        total_samples: total,
        out_of_workspace: outside,
    }
}

/// Drops samples that moved less than `min_step` meters from the last kept one.
/// `min_step <= 0` keeps everything.
pub fn filter_min_displacement(traces: &[Pose], min_step: f64) -> Vec<Pose> {
    if min_step <= 0.0 {
        return traces.to_vec();
    }
    let mut out: Vec<Pose> = Vec::with_capacity(traces.len());
    for p in traces {
        match out.last() {
            Some(last) if (p.p - last.p).norm() < min_step => {}
            _ => out.push(*p),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationCluster {
    pub mode: RotVec,
    pub member_count: usize,
    /// Indices into the clustered sample slice.
    pub members: Vec<usize>,
}

const SHIFT_TOL: f64 = 1e-6;
const MAX_SHIFT_ITERS: usize = 300;

struct Walk {
    pos: Vector3<f64>,
    seeds: Vec<usize>,
    into: Option<usize>,
}

fn root(walks: &[Walk], mut w: usize) -> usize {
    while let Some(v) = walks[w].into {
        w = v;
    }
    w
}

fn key(v: &Vector3<f64>) -> [u64; 3] {
    [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]
}

fn lex_cmp(a: &Vector3<f64>, b: &Vector3<f64>) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// Dense grid over the samples' bounding box with cells half a bandwidth wide
/// (at most 64 per axis). A window scans, for each (x, y) column it reaches,
/// the contiguous run of cells its z-extent covers. Samples are stored by cell
/// and keep their original order inside a cell, so a given set of window
/// members is always summed in the same order.
struct CellIndex {
    lo: [f64; 3],
    h: f64,
    dims: [usize; 3],
    // CSR offsets into `points`, one slot per cell plus the end
    starts: Vec<usize>,
    points: Vec<[f64; 3]>,
}

impl CellIndex {
    fn new(samples: &[RotVec], bandwidth: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in samples {
            for a in 0..3 {
                lo[a] = lo[a].min(s.0[a]);
                hi[a] = hi[a].max(s.0[a]);
            }
        }
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let h = (0.5 * bandwidth).max(extent / 64.0);
        let mut dims = [1usize; 3];
        for a in 0..3 {
            dims[a] = ((hi[a] - lo[a]) / h).floor() as usize + 1;
        }
        let mut index = CellIndex { lo, h, dims, starts: Vec::new(), points: Vec::new() };
        let mut order: Vec<(usize, usize)> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let c = [0, 1, 2].map(|a| index.coord(s.0[a], a).clamp(0, dims[a] as i64 - 1) as usize);
                ((c[0] * dims[1] + c[1]) * dims[2] + c[2], i)
            })
            .collect();
        order.sort_unstable();
        let ncells = dims.iter().product::<usize>();
        let mut starts = vec![0usize; ncells + 1];
        for &(c, _) in &order {
            starts[c + 1] += 1;
        }
        for c in 0..ncells {
            starts[c + 1] += starts[c];
        }
        index.points = order
            .iter()
            .map(|&(_, i)| [samples[i].0.x, samples[i].0.y, samples[i].0.z])
            .collect();
        index.starts = starts;
        index
    }

    fn coord(&self, v: f64, axis: usize) -> i64 {
        ((v - self.lo[axis]) / self.h).floor() as i64
    }

    /// Inclusive cell range along `axis` reached from `c` within `r`.
    fn span(&self, c: f64, r: f64, axis: usize) -> Option<(usize, usize)> {
        let a = self.coord(c - r, axis).max(0);
        let b = self.coord(c + r, axis).min(self.dims[axis] as i64 - 1);
        (a <= b).then_some((a as usize, b as usize))
    }

    /// Squared distance from `c` to cell `i` along `axis`.
    fn gap2(&self, c: f64, i: usize, axis: usize) -> f64 {
        let a = self.lo[axis] + i as f64 * self.h;
        let b = a + self.h;
        let g = if c < a { a - c } else if c > b { c - b } else { 0.0 };
        g * g
    }

    fn for_each_within(&self, x: &Vector3<f64>, r2: f64, mut f: impl FnMut(&[f64; 3])) {
        // culling uses a slightly inflated radius; membership is decided exactly below
        let rc = r2.sqrt() * (1.0 + 1e-9) + 1e-12;
        let rc2 = rc * rc;
        let [_, ny, nz] = self.dims;
        let Some((x0, x1)) = self.span(x.x, rc, 0) else { return };
        for ix in x0..=x1 {
            let rem_x = rc2 - self.gap2(x.x, ix, 0);
            if rem_x < 0.0 {
                continue;
            }
            let Some((y0, y1)) = self.span(x.y, rem_x.sqrt(), 1) else { continue };
            for iy in y0..=y1 {
                let rem = rem_x - self.gap2(x.y, iy, 1);
                if rem < 0.0 {
                    continue;
                }
                let Some((z0, z1)) = self.span(x.z, rem.sqrt(), 2) else { continue };
                let row = (ix * ny + iy) * nz;
                for p in &self.points[self.starts[row + z0]..self.starts[row + z1 + 1]] {
                    let (ex, ey, ez) = (p[0] - x.x, p[1] - x.y, p[2] - x.z);
                    if ex * ex + ey * ey + ez * ez <= r2 {
                        f(p);
                    }
                }
            }
        }
    }

    fn window_mean(&self, x: &Vector3<f64>, r2: f64) -> Option<Vector3<f64>> {
        let mut sum = Vector3::zeros();
        let mut n = 0usize;
        self.for_each_within(x, r2, |p| {
            sum.x += p[0];
            sum.y += p[1];
            sum.z += p[2];
            n += 1;
        });
        (n > 0).then(|| sum / n as f64)
    }

    fn support(&self, x: &Vector3<f64>, r2: f64) -> usize {
        let mut n = 0;
        self.for_each_within(x, r2, |_| n += 1);
        n
    }
}

/// Flat-kernel mean-shift seeded from every sample.
///
/// Converged points closer than `bandwidth / 2` merge (the point with more
/// samples inside its window wins). Clusters come back sorted by size, ties
/// broken by lexicographic mode order.
pub fn mean_shift(samples: &[RotVec], bandwidth: f64) -> Vec<OrientationCluster> {
    assert!(bandwidth > 0.0, "bandwidth must be positive");
    if samples.is_empty() {
        return Vec::new();
    }
    let bw2 = bandwidth * bandwidth;
    let index = CellIndex::new(samples, bandwidth);

    // The shift is a function of position only, so a walker that lands on a
    // point some walker already stood on follows that walker from there on and
    // is folded into it.
    let mut walks: Vec<Walk> = Vec::new();
    let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        let w = *seen.entry(key(&s.0)).or_insert_with(|| {
            walks.push(Walk { pos: s.0, seeds: Vec::new(), into: None });
            walks.len() - 1
        });
        walks[w].seeds.push(i);
    }
    let mut active: Vec<usize> = (0..walks.len()).collect();
    for _ in 0..MAX_SHIFT_ITERS {
        if active.is_empty() {
            break;
        }
        let mut next = Vec::with_capacity(active.len());
        for w in active {
            let x = walks[w].pos;
            let moved = index.window_mean(&x, bw2).unwrap_or(x);
            if (moved - x).norm() < SHIFT_TOL {
                walks[w].pos = moved;
                continue;
            }
            match seen.get(&key(&moved)) {
                // landing back on its own path means a cycle; stop where it is
                Some(&v) if root(&walks, v) == w => {}
                Some(&v) => walks[w].into = Some(v),
                None => {
                    seen.insert(key(&moved), w);
                    walks[w].pos = moved;
                    next.push(w);
                }
            }
        }
        active = next;
    }
    let mut seeds_of: Vec<Vec<usize>> = vec![Vec::new(); walks.len()];
    for w in 0..walks.len() {
        let r = root(&walks, w);
        let seeds = std::mem::take(&mut walks[w].seeds);
        seeds_of[r].extend(seeds);
    }
    let converged: Vec<(Vector3<f64>, Vec<usize>)> = walks
        .iter()
        .zip(seeds_of)
        .filter(|(walk, _)| walk.into.is_none())
        .map(|(walk, seeds)| (walk.pos, seeds))
        .collect();

    // rank candidate modes by window support, then lexicographically
    let mut candidates: Vec<(Vector3<f64>, usize, Vec<usize>)> = converged
        .into_iter()
        .map(|(x, seeds)| {
            let support = index.support(&x, bw2);
            (x, support, seeds)
        })
        .collect();
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(lex_cmp(&a.0, &b.0)));

    let merge2 = 0.25 * bw2;
    let mut modes: Vec<Vector3<f64>> = Vec::new();
    for (x, _, _) in &candidates {
        if modes.iter().all(|m| (m - x).norm_squared() >= merge2) {
            modes.push(*x);
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); modes.len()];
    for (x, _, seeds) in &candidates {
        let nearest = modes
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - x)
                    .norm_squared()
                    .total_cmp(&(b.1 - x).norm_squared())
            })
            .map(|(i, _)| i)
            .expect("at least one mode");
        members[nearest].extend(seeds.iter().copied());
    }
    let mut clusters: Vec<OrientationCluster> = modes
        .into_iter()
        .zip(members)
        .map(|(m, mut idx)| {
            idx.sort_unstable();
            OrientationCluster {
                mode: RotVec(m),
                member_count: idx.len(),
                members: idx,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.member_count
            .cmp(&a.member_count)
            .then(lex_cmp(&a.mode.0, &b.mode.0))
    });
    clusters
}

/// Per-sample cluster labels for a clustering of `n` samples.
pub fn labels(clusters: &[OrientationCluster], n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for (c, cluster) in clusters.iter().enumerate() {
        for &i in &cluster.members {
            out[i] = c;
        }
    }
    out
}

/// Mean silhouette coefficient with Euclidean distance. Members of singleton
/// clusters contribute 0. Returns `None` when fewer than two clusters exist.
pub fn mean_silhouette(samples: &[RotVec], labels: &[usize]) -> Option<f64> {
    silhouette_with(samples.len(), labels, |i, j| samples[i].distance(&samples[j]))
}

fn silhouette_with(n: usize, labels: &[usize], dist: impl Fn(usize, usize) -> f64) -> Option<f64> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if k < 2 || n < 2 {
        return None;
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|s| **s > 0).count() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(i, j);
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Some(total / n as f64)
}

/// Silhouette of the mean-shift labeling at each candidate bandwidth; a
/// labeling with a single cluster scores -1.
pub fn bandwidth_scores(samples: &[RotVec], candidates: &[f64]) -> Vec<f64> {
    scan_bandwidths(samples, candidates).into_iter().map(|(s, _)| s).collect()
}

/// Mean-shift clusters and silhouette score for each candidate.
fn scan_bandwidths(samples: &[RotVec], candidates: &[f64]) -> Vec<(f64, Vec<OrientationCluster>)> {
    let n = samples.len();
    // pairwise distances are shared by every candidate when they fit in memory
    let table = (n <= DISTANCE_TABLE_MAX).then(|| {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = samples[i].distance(&samples[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    });
    // neighbouring candidates often produce the same labeling
    let mut scored: HashMap<Vec<usize>, f64> = HashMap::new();
    candidates
        .iter()
        .map(|&bw| {
            let clusters = mean_shift(samples, bw);
            let score = *scored.entry(labels(&clusters, n)).or_insert_with_key(|lab| {
                let score = match &table {
                    Some(d) => silhouette_with(n, lab, |i, j| d[i * n + j]),
                    None => mean_silhouette(samples, lab),
                };
                score.unwrap_or(-1.0)
            });
            (score, clusters)
        })
        .collect()
}

const DISTANCE_TABLE_MAX: usize = 4096;

/// Picks the candidate bandwidth whose labeling has the highest mean
/// silhouette; equal scores go to the smaller bandwidth. When no candidate
/// splits the samples the largest one is returned.
pub fn select_bandwidth(samples: &[RotVec], candidates: &[f64]) -> f64 {
    let sorted = sorted_candidates(candidates);
    if samples.len() < 2 {
        return sorted[0];
    }
    let scores = bandwidth_scores(samples, &sorted);
    sorted[pick(&scores)]
}

fn sorted_candidates(candidates: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = candidates.iter().copied().filter(|c| *c > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    assert!(!sorted.is_empty(), "no positive bandwidth candidates");
    sorted
}

fn pick(scores: &[f64]) -> usize {
    if scores.iter().all(|s| *s == -1.0) {
        return scores.len() - 1;
    }
    // equal scores come from equal labelings; the narrowest window places the
    // modes most tightly
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    /// Candidate mean-shift bandwidths in radians.
    pub bandwidth_candidates: Vec<f64>,
    /// Clusters smaller than `max(min_cluster_floor, ceil(fraction * n))` are dropped.
    pub min_cluster_fraction: f64,
    pub min_cluster_floor: usize,
    /// Voxels with fewer samples are treated as unvisited.
    pub min_visits: usize,
    /// Emit pooled-orientation entries for unvisited voxels (needed when alpha > 0).
    pub include_unvisited: bool,
    /// Voxels holding more samples are clustered on a fixed random subset of
    /// this size.
    pub max_cluster_samples: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            bandwidth_candidates: (1..=10).map(|i| i as f64 / 10.0).collect(),
            min_cluster_fraction: 0.01,
            min_cluster_floor: 3,
            min_visits: 1,
            include_unvisited: false,
            max_cluster_samples: 1000,
        }
    }
}

impl PatternConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_candidates.is_empty()
            || self.bandwidth_candidates.iter().any(|b| !(*b > 0.0 && b.is_finite()))
        {
            return Err(Error::config(
                "pattern.bandwidth_candidates",
                "need at least one positive candidate",
            ));
        }
        if !(0.0..=1.0).contains(&self.min_cluster_fraction) {
            return Err(Error::config("pattern.min_cluster_fraction", "must lie in [0, 1]"));
        }
        if self.min_visits == 0 {
            return Err(Error::config("pattern.min_visits", "must be at least 1"));
        }
        if self.max_cluster_samples < 2 {
            return Err(Error::config("pattern.max_cluster_samples", "must be at least 2"));
        }
        Ok(())
    }

    fn min_cluster_size(&self, n: usize) -> usize {
        ((self.min_cluster_fraction * n as f64).ceil() as usize).max(self.min_cluster_floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeEntry {
    pub voxel_id: usize,
    pub center: [f64; 3],
    pub rotvec: RotVec,
    pub visited: bool,
    pub visit_count: usize,
}

impl RepresentativeEntry {
    pub fn pose(&self) -> Pose {
        Pose::from_rotvec(Vector3::from(self.center), self.rotvec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub total_samples: usize,
    pub out_of_workspace: usize,
    pub voxels_visited: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeSet {
    pub entries: Vec<RepresentativeEntry>,
    pub summary: PatternSummary,
}

impl RepresentativeSet {
    pub fn from_entries(entries: Vec<RepresentativeEntry>) -> Self {
        let voxels_visited = {
            let mut ids: Vec<usize> = entries.iter().filter(|e| e.visited).map(|e| e.voxel_id).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        };
        RepresentativeSet {
            entries,
            summary: PatternSummary {
                voxels_visited,
                ..Default::default()
            },
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The same set without unvisited-voxel entries.
    pub fn visited_only(&self) -> RepresentativeSet {
        RepresentativeSet {
            entries: self.entries.iter().filter(|e| e.visited).cloned().collect(),
            summary: self.summary.clone(),
        }
    }

    /// SHA-256 over the canonical JSON encoding of the entries.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.entries).expect("entries serialize");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Clusters one voxel's orientations and returns the chosen bandwidth with the
/// surviving clusters. Member indices refer to the samples after lexicographic
/// sorting and subsampling.
pub fn cluster_voxel(samples: &[RotVec], cfg: &PatternConfig) -> (f64, Vec<OrientationCluster>) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    if sorted.len() > cfg.max_cluster_samples {
        let mut idx: Vec<usize> = (0..sorted.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(sorted.len() as u64));
        idx.truncate(cfg.max_cluster_samples);
        idx.sort_unstable();
        sorted = idx.iter().map(|&i| sorted[i]).collect();
    }

    let candidates = sorted_candidates(&cfg.bandwidth_candidates);
    let (bandwidth, clusters) = if sorted.len() < 2 {
        (candidates[0], mean_shift(&sorted, candidates[0]))
    } else {
        let mut scanned = scan_bandwidths(&sorted, &candidates);
        let best = pick(&scanned.iter().map(|(s, _)| *s).collect::<Vec<_>>());
        (candidates[best], scanned.swap_remove(best).1)
    };

    let min_size = cfg.min_cluster_size(sorted.len());
    let mut kept: Vec<OrientationCluster> = clusters
        .iter()
        .filter(|c| c.member_count >= min_size)
        .cloned()
        .collect();
    if kept.is_empty() {
        kept.extend(clusters.into_iter().take(1));
    }
    (bandwidth, kept)
}

/// Builds the representative set from a voxelization.
pub fn representative_poses(vox: &Voxelization, cfg: &PatternConfig) -> RepresentativeSet {
    let visited: Vec<&VoxelStats> = vox
        .voxels
        .iter()
        .filter(|v| v.visit_count >= cfg.min_visits)
        .collect();

    let per_voxel: Vec<Vec<RepresentativeEntry>> = visited
        .par_iter()
        .map(|v| {
            let (_, clusters) = cluster_voxel(&v.orientation_samples, cfg);
            clusters
                .into_iter()
                .map(|c| RepresentativeEntry {
                    voxel_id: v.id,
                    center: v.center,
                    rotvec: c.mode,
                    visited: true,
                    visit_count: v.visit_count,
                })
                .collect()
        })
        .collect();
    let mut entries: Vec<RepresentativeEntry> = per_voxel.into_iter().flatten().collect();

    if cfg.include_unvisited && !entries.is_empty() {
        let pooled: Vec<RotVec> = entries.iter().map(|e| e.rotvec).collect();
        let mut all = Vec::with_capacity(entries.len() + vox.voxels.len() * pooled.len());
        let mut visited_entries = entries.into_iter().peekable();
        for v in &vox.voxels {
            if v.visit_count >= cfg.min_visits {
                while let Some(e) = visited_entries.next_if(|e| e.voxel_id == v.id) {
                    all.push(e);
                }
            } else {
                all.extend(pooled.iter().map(|&rotvec| RepresentativeEntry {
                    voxel_id: v.id,
                    center: v.center,
                    rotvec,
                    visited: false,
                    visit_count: v.visit_count,
                }));
            }
        }
        entries = all;
    }

    RepresentativeSet {
        entries,
        summary: PatternSummary {
            total_samples: vox.total_samples,
            out_of_workspace: vox.out_of_workspace,
            voxels_visited: visited.len(),
        },
    }
}

/// Voxels ranked by visit count (descending, ties by id).
pub fn visit_ranking(vox: &Voxelization) -> Vec<(usize, [f64; 3], usize)> {
    let mut rows: Vec<(usize, [f64; 3], usize)> = vox
        .voxels
        .iter()
        .map(|v| (v.id, v.center, v.visit_count))
        .collect();
    rows.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    rows
}
