//! Orbit enumeration and the evidence-graded probes built on it.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use super::{Cells, GuidedSystem, Orbit, StateSpace};

#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    /// Cap on visited ε/2-cells per orbit set; exceeding it flags the result partial.
    pub max_cells: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions { max_cells: 1 << 22 }
    }
}

/// Breadth-first Λ-orbit set with one representative per deduplication cell.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitCloud {
    /// (point, depth at which it was first reached)
    pub points: Vec<(f64, usize)>,
    /// Fraction of ε-cells containing a cloud point.
    pub coverage: f64,
    /// The frontier emptied before the depth limit: the cloud is closed.
    pub exhausted: bool,
    /// The cell budget was exceeded.
    pub partial: bool,
    /// Number of deduplication cells used for the final pass.
    pub dedup_cells: usize,
    /// A closed cloud that is trustworthy as an invariant set: either every
    /// allowed image of every point is (numerically) another point of the cloud,
    /// or the hit ε-cells stayed the same over four dedup resolutions.
    pub stable: bool,
}

/// Dedup refinements tried before a closed, non-covering cloud is reported unstable.
const MAX_REFINE: u32 = 6;

fn single_pass(sys: &GuidedSystem, x0: f64, depth: usize, coarse: &Cells, fine: &Cells, opts: &OrbitOptions) -> OrbitCloud {
    let x0 = sys.space.normalize(x0);
    let mut visited = HashSet::new();
    visited.insert(fine.index(x0));
    let mut points = vec![(x0, 0)];
    let mut frontier = vec![x0];
    let mut exhausted = false;
    let mut partial = false;
    let drift = !matches!(sys.space, StateSpace::Graph { .. });
    'layers: for d in 1..=depth {
        let mut next = Vec::new();
        for &x in &frontier {
            for i in sys.allowed_generators(x) {
                let mut y = sys.step(i, x);
                if drift && fine.index(y) == fine.index(x) {
                    match follow_drift(sys, i, y, fine) {
                        Some(z) => y = z,
                        None => continue,
                    }
                }
                if visited.insert(fine.index(y)) {
                    points.push((y, d));
                    next.push(y);
                    if visited.len() > opts.max_cells {
                        partial = true;
                        break 'layers;
                    }
                }
            }
        }
        if next.is_empty() {
            exhausted = true;
            break;
        }
        frontier = next;
    }
    let coverage = hit_cells(&points, coarse).len() as f64 / coarse.count as f64;
    OrbitCloud {
        points,
        coverage,
        exhausted,
        partial,
        dedup_cells: fine.count,
        stable: false,
    }
}

/// Steps followed along one generator while its orbit creeps inside a single
/// dedup cell (slow drift near a tangential fixed point).
const DRIFT_STEPS: usize = 1 << 14;

/// First point of the δᵢ-orbit of `y` outside `y`'s dedup cell, if the orbit
/// leaves it within [`DRIFT_STEPS`] allowed steps.
fn follow_drift(sys: &GuidedSystem, i: usize, mut y: f64, fine: &Cells) -> Option<f64> {
    let cell = fine.index(y);
    for _ in 0..DRIFT_STEPS {
        if !sys.is_allowed(i, y) {
            return None;
        }
        let z = sys.step(i, y);
        if fine.index(z) != cell {
            return Some(z);
        }
        if z == y {
            return None;
        }
        y = z;
    }
    None
}

/// Whether the cloud is a finite invariant set up to roundoff.
fn point_closed(sys: &GuidedSystem, points: &[(f64, usize)]) -> bool {
    let sorted = distinct_points(sys, points.iter().map(|p| p.0).collect());
    let tol = sys.tol.step.max(sys.tol.lambda);
    let near = |y: f64| {
        let k = sorted.partition_point(|&p| p < y);
        [k.wrapping_sub(1), k, 0, sorted.len() - 1]
            .iter()
            .filter_map(|&j| sorted.get(j))
            .any(|&p| sys.space.dist(p, y) <= tol)
    };
    sorted
        .iter()
        .all(|&x| sys.allowed_generators(x).into_iter().all(|i| near(sys.step(i, x))))
}

fn hit_cells(points: &[(f64, usize)], coarse: &Cells) -> Vec<usize> {
    let mut cells: Vec<usize> = points.iter().map(|&(x, _)| coarse.index(x)).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Explores at dedup resolution ε/2 and halves it while the cloud closes up
/// without covering, until the cloud is stable (see [`OrbitCloud::stable`]).
/// Merging nearby points makes the representative dynamics lossy (an irrational
/// rotation stops at its first near-return); refinement separates genuine
/// invariant sets from such artefacts.
fn orbit_cloud(sys: &GuidedSystem, x0: f64, depth: usize, coarse: &Cells, opts: &OrbitOptions) -> OrbitCloud {
    if let StateSpace::Graph { .. } = sys.space {
        let mut c = single_pass(sys, x0, depth, coarse, coarse, opts);
        c.stable = c.exhausted && !c.partial;
        return c;
    }
    let mut history: Vec<Vec<usize>> = Vec::new();
    let mut level = 0;
    loop {
        let fine = Cells::with_count(&sys.space, coarse.count << (level + 1));
        let mut cloud = single_pass(sys, x0, depth, coarse, &fine, opts);
        if cloud.coverage >= 1.0 || !cloud.exhausted || cloud.partial {
            return cloud;
        }
        let hit = hit_cells(&cloud.points, coarse);
        let same_cells = history.len() >= 3 && history[history.len() - 3..].iter().all(|h| *h == hit);
        if same_cells || point_closed(sys, &cloud.points) {
            cloud.stable = true;
            return cloud;
        }
        if level == MAX_REFINE || fine.count.saturating_mul(2) > opts.max_cells {
            return cloud;
        }
        history.push(hit);
        level += 1;
    }
}

/// Λ-orbit set of `x0` explored to `depth`, deduplicated per ε/2-cell (finer
/// when the coarse pass closes up without covering the space).
pub fn guided_orbit_set(sys: &GuidedSystem, x0: f64, depth: usize, eps: f64, opts: &OrbitOptions) -> OrbitCloud {
    let coarse = Cells::with_width(&sys.space, eps);
    orbit_cloud(sys, x0, depth, &coarse, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum MinimalityVerdict {
    MinimalEvidence {
        eps: f64,
        depth: usize,
        coverage: f64,
    },
    NotMinimal {
        seed: f64,
        /// Indices of the ε-cells forming a forward-closed proper set.
        witness_cells: Vec<usize>,
        witness_points: Vec<f64>,
    },
    Inconclusive {
        eps: f64,
        depth: usize,
        worst_coverage: f64,
    },
}

impl MinimalityVerdict {
    pub fn is_not_minimal(&self) -> bool {
        matches!(self, MinimalityVerdict::NotMinimal { .. })
    }

    pub fn is_minimal_evidence(&self) -> bool {
        matches!(self, MinimalityVerdict::MinimalEvidence { .. })
    }

    pub fn category(&self) -> &'static str {
        match self {
            MinimalityVerdict::MinimalEvidence { .. } => "MinimalEvidence",
            MinimalityVerdict::NotMinimal { .. } => "NotMinimal",
            MinimalityVerdict::Inconclusive { .. } => "Inconclusive",
        }
    }
}

/// Checks that every allowed image of every witness point lands in a witness cell.
fn witness_is_closed(sys: &GuidedSystem, coarse: &Cells, cells: &[usize], points: &[f64]) -> bool {
    let set: HashSet<usize> = cells.iter().copied().collect();
    points.iter().all(|&x| {
        sys.allowed_generators(x)
            .into_iter()
            .all(|i| set.contains(&coarse.index(sys.step(i, x))))
    })
}

/// One orbit-set exploration per ε-cell seed.
pub fn probe_minimality(sys: &GuidedSystem, eps: f64, depth: usize, opts: &OrbitOptions) -> MinimalityVerdict {
    let coarse = Cells::with_width(&sys.space, eps);
    let seeds = seed_points(&sys.space, &coarse);
    let clouds: Vec<OrbitCloud> = seeds
        .par_iter()
        .map(|&s| orbit_cloud(sys, s, depth, &coarse, opts))
        .collect();
    let mut worst = 1.0f64;
    for (&seed, cloud) in seeds.iter().zip(&clouds) {
        if cloud.coverage >= 1.0 {
            continue;
        }
        worst = worst.min(cloud.coverage);
        if cloud.stable {
            let points: Vec<f64> = cloud.points.iter().map(|p| p.0).collect();
            let cells = hit_cells(&cloud.points, &coarse);
            if cells.len() < coarse.count && witness_is_closed(sys, &coarse, &cells, &points) {
                let witness_points = distinct_points(sys, points);
                return MinimalityVerdict::NotMinimal {
                    seed,
                    witness_cells: cells,
                    witness_points,
                };
            }
        }
    }
    if worst >= 1.0 {
        MinimalityVerdict::MinimalEvidence {
            eps,
            depth,
            coverage: 1.0,
        }
    } else {
        MinimalityVerdict::Inconclusive {
            eps,
            depth,
            worst_coverage: worst,
        }
    }
}

/// Seed position inside each ε-cell; not a dyadic fraction, so seeds never sit
/// on a dedup-cell boundary at any refinement level.
const SEED_OFFSET: f64 = 0.309_016_994_374_947_4;

/// Sorted points with numerically coincident ones (within the step tolerance) merged.
fn distinct_points(sys: &GuidedSystem, mut points: Vec<f64>) -> Vec<f64> {
    points.sort_by(f64::total_cmp);
    let tol = sys.tol.step.max(sys.tol.lambda);
    let mut out: Vec<f64> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().map_or(true, |&q| sys.space.dist(p, q) > tol) {
            out.push(p);
        }
    }
    // circle: the largest point may coincide with the smallest across the wrap
    if out.len() > 1 && sys.space.dist(out[0], out[out.len() - 1]) <= tol {
        out.pop();
    }
    out
}

fn seed_points(space: &StateSpace, coarse: &Cells) -> Vec<f64> {
    match space {
        StateSpace::Graph { nodes } => (0..*nodes).map(|v| v as f64).collect(),
        // centre of the first half-cell, away from every dedup-cell boundary
        _ => (0..coarse.count).map(|k| coarse.bounds(k).0 + SEED_OFFSET * coarse.width).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum WeakAttractorVerdict {
    Yes { eps: f64, depth: usize },
    No { witness_seed: f64 },
    Inconclusive { seed: f64 },
}

/// Whether every ε-cell seed has a Λ-proper orbit entering the closed ε-ball around `x0`.
pub fn probe_weak_attractor(
    sys: &GuidedSystem,
    x0: f64,
    eps: f64,
    depth: usize,
    opts: &OrbitOptions,
) -> WeakAttractorVerdict {
    let coarse = Cells::with_width(&sys.space, eps);
    let seeds = seed_points(&sys.space, &coarse);
    let outcomes: Vec<(bool, bool)> = seeds
        .par_iter()
        .map(|&s| {
            let cloud = orbit_cloud(sys, s, depth, &coarse, opts);
            let reached = cloud.points.iter().any(|&(p, _)| sys.space.dist(p, x0) <= eps);
            (reached, cloud.stable)
        })
        .collect();
    let mut inconclusive = None;
    for (&seed, &(reached, closed)) in seeds.iter().zip(&outcomes) {
        if reached {
            continue;
        }
        if closed {
            return WeakAttractorVerdict::No { witness_seed: seed };
        }
        inconclusive.get_or_insert(seed);
    }
    match inconclusive {
        Some(seed) => WeakAttractorVerdict::Inconclusive { seed },
        None => WeakAttractorVerdict::Yes { eps, depth },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub max_len: usize,
    /// Each cycle lists its points with the start repeated at the end.
    pub cycles: Vec<Orbit>,
}

/// Λ-proper cycles lying entirely in the union of guiding sets.
pub fn find_guided_cycles(sys: &GuidedSystem, max_len: usize) -> CycleReport {
    let space = &sys.space;
    let mut found: Vec<Orbit> = Vec::new();
    for (gi, g) in sys.guiding.iter().enumerate() {
        for (ci, &(lo, hi)) in g.intervals.iter().enumerate() {
            let mut seeds = vec![lo, 0.5 * (lo + hi), hi];
            seeds.dedup();
            for seed in seeds {
                let seed = space.normalize(seed);
                let mut path = Orbit {
                    points: vec![seed],
                    generators: vec![],
                };
                search(sys, (gi, ci), max_len, &mut path, &mut found);
            }
        }
    }
    found.sort_by(|a, b| a.points[0].total_cmp(&b.points[0]).then(a.points.len().cmp(&b.points.len())));
    CycleReport { max_len, cycles: found }
}

fn closes(sys: &GuidedSystem, seed_component: (usize, usize), seed: f64, y: f64) -> bool {
    if sys.space.dist(seed, y) <= sys.tol.step.max(sys.tol.lambda) {
        return true;
    }
    let (gi, ci) = seed_component;
    let (lo, hi) = sys.guiding[gi].intervals[ci];
    hi > lo && sys.guiding[gi].component_of(&sys.space, y, sys.tol.lambda) == Some(ci)
}

fn search(sys: &GuidedSystem, comp: (usize, usize), max_len: usize, path: &mut Orbit, found: &mut Vec<Orbit>) {
    if path.generators.len() >= max_len {
        return;
    }
    let x = *path.points.last().unwrap_or(&0.0);
    let seed = path.points[0];
    for i in sys.allowed_generators(x) {
        let y = sys.step(i, x);
        if !sys.in_guiding_union(y) {
            continue;
        }
        path.points.push(y);
        path.generators.push(i);
        if closes(sys, comp, seed, y) {
            record(sys, path, found);
        } else if !path.points[1..path.points.len() - 1]
            .iter()
            .any(|&p| sys.space.dist(p, y) <= sys.tol.step.max(sys.tol.lambda))
        {
            search(sys, comp, max_len, path, found);
        }
        path.points.pop();
        path.generators.pop();
    }
}

/// Stores the cycle rotated to start at its smallest point, skipping duplicates.
fn record(sys: &GuidedSystem, path: &Orbit, found: &mut Vec<Orbit>) {
    let k = path.generators.len();
    let body = &path.points[..k];
    let start = (0..k).min_by(|&a, &b| body[a].total_cmp(&body[b])).unwrap_or(0);
    let mut points: Vec<f64> = (0..k).map(|j| body[(start + j) % k]).collect();
    let generators: Vec<usize> = (0..k).map(|j| path.generators[(start + j) % k]).collect();
    points.push(points[0]);
    let tol = 1e-6;
    let duplicate = found.iter().any(|c| {
        c.generators == generators
            && c.points.iter().zip(&points).all(|(&a, &b)| sys.space.dist(a, b) <= tol)
    });
    if !duplicate {
        found.push(Orbit { points, generators });
    }
}
