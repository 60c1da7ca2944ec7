use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::CauchyError;
use crate::exprlang::{DomainError, Expression, Node};
use crate::numeric::{bisect, linspace};

/// Points kept before a propagation is cut short.
pub const PROPAGATION_BUDGET: usize = 1 << 22;
const VALIDATION_GRID: usize = 1000;
const CONTRACTION_PAIRS: usize = 2000;

/// Right-hand side H[u, v, x, y]. The affine coefficients are functions of
/// the moving point z: y = z for the α-rule, x = z for the β-rule.
#[derive(Debug, Clone)]
pub enum HShape {
    /// (u + v)/2
    Jensen,
    /// u + v
    Cauchy,
    /// p(z)·u + q(z)·v + r(z)
    Affine { p: Expression, q: Expression, r: Expression },
}

impl HShape {
    fn apply(&self, u: f64, v: f64, z: f64) -> Result<f64, DomainError> {
        Ok(match self {
            HShape::Jensen => 0.5 * (u + v),
            HShape::Cauchy => u + v,
            HShape::Affine { p, q, r } => p.eval(z)? * u + q.eval(z)? * v + r.eval(z)?,
        })
    }
}

/// Which boundary point a derivation starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Seed {
    A,
    B,
}

/// f(F(x,y)) = H[f(x), f(y), x, y] on I = [a, b] with f(a) = A, f(b) = B,
/// seen through α(x) = F(a,x) and β(x) = F(x,b).
#[derive(Debug, Clone)]
pub struct OverdetProblem {
    pub a: f64,
    pub b: f64,
    pub alpha: Expression,
    pub beta: Expression,
    pub h: HShape,
    pub value_a: f64,
    pub value_b: f64,
    /// α(x₀) = a.
    pub x0: f64,
    /// β(y₀) = b.
    pub y0: f64,
}

fn num(x: f64) -> Box<Node> {
    Box::new(Node::Num(x))
}

impl OverdetProblem {
    /// Checks that α, β map I into itself, contract strictly, and reach
    /// the endpoints a and b respectively.
    pub fn new(
        a: f64,
        b: f64,
        alpha: Expression,
        beta: Expression,
        h: HShape,
        value_a: f64,
        value_b: f64,
    ) -> Result<Self, CauchyError> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(CauchyError::Shape(format!("[{a}, {b}] is not an interval")));
        }
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        let grid = linspace(a, b, VALIDATION_GRID);
        for (name, map) in [("α", &alpha), ("β", &beta)] {
            for &x in &grid {
                let y = map.eval(x)?;
                if !(y >= a - slack && y <= b + slack) {
                    return Err(CauchyError::hypothesis(format!("range: {name} maps outside I"), Some(x)));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0x0dd5);
            let adjacent = grid.windows(2).map(|w| (w[0], w[1]));
            let random: Vec<(f64, f64)> = (0..CONTRACTION_PAIRS)
                .map(|_| (rng.gen_range(a..=b), rng.gen_range(a..=b)))
                .collect();
            for (x, y) in adjacent.chain(random) {
                if x == y {
                    continue;
                }
                if !((map.eval(x)? - map.eval(y)?).abs() < (x - y).abs()) {
                    return Err(CauchyError::hypothesis(format!("contraction: {name} is not strictly contracting"), Some(x)));
                }
            }
        }
        let x0 = endpoint_preimage(&alpha, a, &grid, slack)
            .ok_or_else(|| CauchyError::hypothesis("no x₀ with F(a, x₀) = a", Some(a)))?;
        let y0 = endpoint_preimage(&beta, b, &grid, slack)
            .ok_or_else(|| CauchyError::hypothesis("no y₀ with F(y₀, b) = b", Some(b)))?;
        Ok(OverdetProblem {
            a,
            b,
            alpha,
            beta,
            h,
            value_a,
            value_b,
            x0,
            y0,
        })
    }

    /// F(x, y) = (x + y)/2.
    pub fn arithmetic_mean(a: f64, b: f64, h: HShape, value_a: f64, value_b: f64) -> Result<Self, CauchyError> {
        let half = |n: Box<Node>| Node::Mul(num(0.5), n);
        let alpha = Expression::from_node(half(Box::new(Node::Add(num(a), Box::new(Node::Var)))), "t");
        let beta = Expression::from_node(half(Box::new(Node::Add(Box::new(Node::Var), num(b)))), "t");
        Self::new(a, b, alpha, beta, h, value_a, value_b)
    }

    /// F(x, y) = √(xy) on a positive interval.
    pub fn geometric_mean(a: f64, b: f64, h: HShape, value_a: f64, value_b: f64) -> Result<Self, CauchyError> {
        let root = |k: f64| {
            Expression::from_node(
                Node::Call(
                    crate::exprlang::Func::Sqrt,
                    Box::new(Node::Mul(num(k), Box::new(Node::Var))),
                ),
                "t",
            )
        };
        Self::new(a, b, root(a), root(b), h, value_a, value_b)
    }

    /// The Cauchy equation restricted to Γ* on [−1, 1]:
    /// f((t+1)/2) = (f(t) + B)/2 and f((t−1)/2) = (f(t) − B)/2 with B = f(1).
    /// An additive f is odd, so this is the Jensen problem with A = −B.
    pub fn cauchy_gamma_star(value_b: f64) -> Result<Self, CauchyError> {
        Self::arithmetic_mean(-1.0, 1.0, HShape::Jensen, -value_b, value_b)
    }

    fn seed(&self, s: Seed) -> (f64, f64) {
        match s {
            Seed::A => (self.a, self.value_a),
            Seed::B => (self.b, self.value_b),
        }
    }

    /// One step along α (`0`) or β (`1`).
    fn step(&self, rule: u8, z: f64, v: f64) -> Result<(f64, f64), DomainError> {
        if rule == 0 {
            Ok((self.alpha.eval(z)?, self.h.apply(self.value_a, v, z)?))
        } else {
            Ok((self.beta.eval(z)?, self.h.apply(v, self.value_b, z)?))
        }
    }

    /// Point and value reached from `seed` by the rules in `path`.
    pub fn replay(&self, seed: Seed, path: &[u8]) -> Result<(f64, f64), CauchyError> {
        let (mut z, mut v) = self.seed(seed);
        for &r in path {
            (z, v) = self.step(r, z, v)?;
        }
        Ok((z, v))
    }
}

/// A root of map(x) = target, from an exact grid hit or a bracketed sign change.
fn endpoint_preimage(map: &Expression, target: f64, grid: &[f64], slack: f64) -> Option<f64> {
    let g = |x: f64| map.eval_or_nan(x) - target;
    let vals: Vec<f64> = grid.iter().map(|&x| g(x)).collect();
    if let Some(k) = vals.iter().position(|v| v.abs() <= slack) {
        return Some(grid[k]);
    }
    (0..grid.len() - 1)
        .find(|&k| vals[k].signum() != vals[k + 1].signum())
        .and_then(|k| bisect(g, grid[k], grid[k + 1], 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudEntry {
    pub point: f64,
    pub value: f64,
    pub depth: usize,
    pub seed: Seed,
    /// Rules applied from the seed: 0 = α, 1 = β.
    pub path: Vec<u8>,
}

/// A derivation that landed in an occupied ε/2-cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Collision {
    pub depth: usize,
    /// Index of the entry already holding the cell.
    pub existing: usize,
    pub point: f64,
    pub value: f64,
    pub seed: Seed,
    pub path: Vec<u8>,
    /// |value − existing value|.
    pub gap: f64,
    /// |point − existing point|.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Depth,
    Coverage,
    /// No new cells were reached.
    Exhausted,
    BudgetExceeded,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropagationCloud {
    pub eps: f64,
    pub entries: Vec<CloudEntry>,
    pub collisions: Vec<Collision>,
    pub stop: StopReason,
    /// Fraction of the ε-cells of I holding a point.
    pub coverage: f64,
}

impl PropagationCloud {
    pub fn budget_exceeded(&self) -> bool {
        self.stop == StopReason::BudgetExceeded
    }

    /// `t,value,depth` rows sorted by t.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<&CloudEntry> = self.entries.iter().collect();
        rows.sort_by(|x, y| x.point.total_cmp(&y.point));
        let mut out = String::from("t,value,depth\n");
        for e in rows {
            let _ = writeln!(out, "{},{},{}", e.point, e.value, e.depth);
        }
        out
    }

    /// Value stored at exactly `t`, if any.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.entries.iter().find(|e| e.point == t).map(|e| e.value)
    }
}

/// Breadth-first propagation of the boundary values, one cell per ε/2.
pub fn propagate_values(problem: &OverdetProblem, depth: usize, eps: f64) -> Result<PropagationCloud, CauchyError> {
    propagate_values_with_budget(problem, depth, eps, PROPAGATION_BUDGET)
}

pub fn propagate_values_with_budget(
    problem: &OverdetProblem,
    depth: usize,
    eps: f64,
    budget: usize,
) -> Result<PropagationCloud, CauchyError> {
    if !(eps > 0.0) {
        return Err(CauchyError::Shape(format!("ε = {eps} must be positive")));
    }
    let (a, b) = (problem.a, problem.b);
    let cell = |x: f64| ((x - a) / (0.5 * eps)).floor() as i64;
    let coarse = |x: f64| ((x - a) / eps).floor().min(((b - a) / eps).ceil() - 1.0) as i64;
    let total_coarse = (((b - a) / eps).ceil() as usize).max(1);

    let mut entries: Vec<CloudEntry> = Vec::new();
    let mut collisions = Vec::new();
    let mut cells: HashMap<i64, usize> = HashMap::new();
    let mut covered: HashSet<i64> = HashSet::new();
    let mut frontier = Vec::new();
    for s in [Seed::A, Seed::B] {
        let (x, v) = problem.seed(s);
        let c = cell(x);
        if cells.contains_key(&c) {
            continue;
        }
        cells.insert(c, entries.len());
        covered.insert(coarse(x));
        frontier.push(entries.len());
        entries.push(CloudEntry {
            point: x,
            value: v,
            depth: 0,
            seed: s,
            path: Vec::new(),
        });
    }

    let mut stop = StopReason::Depth;
    for d in 1..=depth {
        if covered.len() >= total_coarse {
            stop = StopReason::Coverage;
            break;
        }
        if frontier.is_empty() {
            stop = StopReason::Exhausted;
            break;
        }
        let mut children: Vec<(i64, CloudEntry)> = frontier
            .par_iter()
            .flat_map_iter(|&k| {
                let parent = &entries[k];
                [0u8, 1].into_iter().map(move |r| {
                    let (point, value) = problem.step(r, parent.point, parent.value)?;
                    let mut path = parent.path.clone();
                    path.push(r);
                    Ok((
                        cell(point),
                        CloudEntry {
                            point,
                            value,
                            depth: d,
                            seed: parent.seed,
                            path,
                        },
                    ))
                })
            })
            .collect::<Result<_, DomainError>>()?;
        children.par_sort_by(|(c1, e1), (c2, e2)| c1.cmp(c2).then(e1.seed.cmp(&e2.seed)).then(e1.path.cmp(&e2.path)));

        let mut next = Vec::new();
        for (c, e) in children {
            if let Some(&k) = cells.get(&c) {
                let old = &entries[k];
                collisions.push(Collision {
                    depth: d,
                    existing: k,
                    gap: (e.value - old.value).abs(),
                    distance: (e.point - old.point).abs(),
                    point: e.point,
                    value: e.value,
                    seed: e.seed,
                    path: e.path,
                });
                continue;
            }
            if entries.len() >= budget {
                stop = StopReason::BudgetExceeded;
                break;
            }
            cells.insert(c, entries.len());
            covered.insert(coarse(e.point));
            next.push(entries.len());
            entries.push(e);
        }
        if stop == StopReason::BudgetExceeded {
            break;
        }
        frontier = next;
        if d == depth && covered.len() >= total_coarse {
            stop = StopReason::Coverage;
        }
    }
    Ok(PropagationCloud {
        eps,
        coverage: covered.len() as f64 / total_coarse as f64,
        entries,
        collisions,
        stop,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// Two derivations of the same point disagree.
    Collision(Collision),
    /// Two points within ε whose values differ by at least the cap.
    Modulus { x1: f64, v1: f64, x2: f64, v2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum ConsistencyVerdict {
    Consistent,
    Inconsistent { witness: Witness },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub verdict: ConsistencyVerdict,
    /// Largest value gap between derivations of one point.
    pub max_collision_gap: f64,
    /// Median slope between neighbouring cloud points.
    pub lipschitz_estimate: f64,
    /// max |v(x) − v(y)| over cloud points with |x − y| ≤ ε.
    pub modulus: f64,
    /// 10 · lipschitz_estimate · ε.
    pub cap: f64,
    /// The cloud stopped on its budget, so the verdict covers only part of I.
    pub partial: bool,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.verdict == ConsistencyVerdict::Consistent
    }
}

/// Collisions at one point must agree to `tol`; all other pairs within ε
/// (including cell-mates at distinct points) must obey ω(ε) < cap + tol.
pub fn check_consistency(cloud: &PropagationCloud, eps: f64, tol: f64) -> ConsistencyReport {
    let coincident = |c: &Collision| c.distance <= 1e-12 * (1.0 + c.point.abs());
    let mut max_collision_gap = 0.0f64;
    let mut witness = None;
    for c in cloud.collisions.iter().filter(|c| coincident(c)) {
        max_collision_gap = max_collision_gap.max(c.gap);
        if witness.is_none() && !(c.gap < tol) {
            witness = Some(Witness::Collision(c.clone()));
        }
    }

    let mut samples: Vec<(f64, f64)> = cloud
        .entries
        .iter()
        .map(|e| (e.point, e.value))
        .chain(cloud.collisions.iter().map(|c| (c.point, c.value)))
        .collect();
    samples.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let mut slopes: Vec<f64> = samples
        .windows(2)
        .filter(|w| w[1].0 - w[0].0 > 1e-12 * (1.0 + w[0].0.abs()))
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .collect();
    slopes.sort_by(f64::total_cmp);
    let lipschitz_estimate = if slopes.is_empty() { 0.0 } else { slopes[slopes.len() / 2] };
    let cap = 10.0 * lipschitz_estimate * eps;

    let (modulus, pair) = window_oscillation(&samples, eps);
    if witness.is_none() && !(modulus < cap + tol) {
        if let Some((i, j)) = pair {
            witness = Some(Witness::Modulus {
                x1: samples[i].0,
                v1: samples[i].1,
                x2: samples[j].0,
                v2: samples[j].1,
            });
        }
    }
    ConsistencyReport {
        verdict: match witness {
            None => ConsistencyVerdict::Consistent,
            Some(witness) => ConsistencyVerdict::Inconsistent { witness },
        },
        max_collision_gap,
        lipschitz_estimate,
        modulus,
        cap,
        partial: cloud.budget_exceeded(),
    }
}

/// Largest max − min of the values over windows of width ε in x (sorted
/// input), with the indices attaining it.
fn window_oscillation(samples: &[(f64, f64)], eps: f64) -> (f64, Option<(usize, usize)>) {
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = (0.0, None);
    let mut lo = 0;
    for hi in 0..samples.len() {
        while maxq.back().is_some_and(|&k| samples[k].1 <= samples[hi].1) {
            maxq.pop_back();
        }
        maxq.push_back(hi);
        while minq.back().is_some_and(|&k| samples[k].1 >= samples[hi].1) {
            minq.pop_back();
        }
        minq.push_back(hi);
        while samples[hi].0 - samples[lo].0 > eps {
            lo += 1;
            if maxq[0] < lo {
                maxq.pop_front();
            }
            if minq[0] < lo {
                minq.pop_front();
            }
        }
        let (i, j) = (minq[0], maxq[0]);
        let osc = samples[j].1 - samples[i].1;
        if osc > best.0 {
            best = (osc, Some((i.min(j), i.max(j))));
        }
    }
    best
}
