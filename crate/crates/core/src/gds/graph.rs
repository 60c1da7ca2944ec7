//! Discretized orbit graphs and their terminal strongly connected components.

use serde::Serialize;

use super::{Cells, GeneratorMap, GuidedSystem, GuidingSet, StateSpace};

/// Directed multigraph on cells; edges are (source, target, generator).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitGraph {
    pub nodes: usize,
    pub edges: Vec<(usize, usize, usize)>,
    /// Some image was sampled rather than computed from endpoints.
    pub approximate: bool,
}

impl OrbitGraph {
    pub fn from_edges(nodes: usize, mut edges: Vec<(usize, usize, usize)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        OrbitGraph {
            nodes,
            edges,
            approximate: false,
        }
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.nodes];
        for &(s, t, _) in &self.edges {
            succ[s].push(t);
        }
        for s in &mut succ {
            s.sort_unstable();
            s.dedup();
        }
        succ
    }

    /// Text export, one `src dst gen` line per edge.
    pub fn to_edge_list(&self) -> String {
        self.edges.iter().map(|(s, t, g)| format!("{s} {t} {g}\n")).collect()
    }
}

/// Whether the cell lies entirely within the tolerance band of `g`.
fn cell_inside(space: &StateSpace, g: &GuidingSet, lo: f64, hi: f64, tol: f64) -> bool {
    g.intervals.iter().any(|&(a, b)| {
        if space.is_circle() {
            let period = space.extent().1;
            let u = a - tol + (lo - (a - tol)).rem_euclid(period);
            u + (hi - lo) <= b + tol
        } else {
            a - tol <= lo && hi <= b + tol
        }
    })
}

/// Whether the map is monotone on the cell, judged by its derivative sign.
fn monotone_on(map: &GeneratorMap, lo: f64, hi: f64) -> bool {
    let mut pos = false;
    let mut neg = false;
    for j in 0..=16 {
        let t = lo + (hi - lo) * j as f64 / 16.0;
        match map.derivative(t) {
            Some(d) if d > 1e-14 => pos = true,
            Some(d) if d < -1e-14 => neg = true,
            Some(_) => {}
            None => return false,
        }
    }
    !(pos && neg)
}

/// Cells whose interiors meet the image interval [y0, y1] (unwrapped on circles).
fn hit_cells(cells: &Cells, space: &StateSpace, y0: f64, y1: f64) -> Vec<usize> {
    let (y0, y1) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
    let w = cells.width;
    if y1 - y0 < 1e-12 * w {
        return vec![cells.index(space.normalize(y0))];
    }
    if space.is_circle() && y1 - y0 >= space.extent().1 {
        return (0..cells.count).collect();
    }
    let slack = 1e-12 * w;
    // Unwrapped cell indices covering the interval interior.
    let k0 = ((y0 - cells.lo) / w).floor() as i64;
    let k1 = ((y1 - cells.lo) / w).ceil() as i64;
    let mut out = Vec::new();
    for k in k0..=k1 {
        let c_lo = cells.lo + k as f64 * w;
        let c_hi = c_lo + w;
        if y0.max(c_lo) < y1.min(c_hi) - slack {
            let idx = if space.is_circle() {
                k.rem_euclid(cells.count as i64) as usize
            } else if k < 0 || k as usize >= cells.count {
                continue;
            } else {
                k as usize
            };
            out.push(idx);
        }
    }
    out
}

/// Discretizes a system on `cells` equal cells (graph systems map to their own table).
pub fn build_orbit_graph(sys: &GuidedSystem, cells: usize) -> OrbitGraph {
    if let StateSpace::Graph { nodes } = sys.space {
        let mut edges = Vec::new();
        for (i, g) in sys.generators.iter().enumerate() {
            if let GeneratorMap::Table(t) = g {
                for (v, &w) in t.iter().enumerate() {
                    if sys.is_allowed(i, v as f64) {
                        edges.push((v, w, i));
                    }
                }
            }
        }
        return OrbitGraph::from_edges(nodes, edges);
    }
    let grid = Cells::with_count(&sys.space, cells.max(2));
    let mut edges = Vec::new();
    let mut approximate = false;
    for k in 0..grid.count {
        let (lo, hi) = grid.bounds(k);
        for (i, map) in sys.generators.iter().enumerate() {
            if cell_inside(&sys.space, &sys.guiding[i], lo, hi, sys.tol.lambda) {
                continue;
            }
            let (y0, y1) = if monotone_on(map, lo, hi) {
                (map.eval(lo), map.eval(hi))
            } else {
                approximate = true;
                let samples: Vec<f64> = (0..9).map(|j| map.eval(lo + (hi - lo) * j as f64 / 8.0)).collect();
                let mn = samples.iter().copied().fold(f64::INFINITY, f64::min);
                let mx = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (mn, mx)
            };
            let (y0, y1) = match sys.space {
                StateSpace::Interval { a, b } => (y0.clamp(a, b), y1.clamp(a, b)),
                _ => (y0, y1),
            };
            for t in hit_cells(&grid, &sys.space, y0, y1) {
                edges.push((k, t, i));
            }
        }
    }
    let mut g = OrbitGraph::from_edges(grid.count, edges);
    g.approximate = approximate;
    g
}

/// Terminal strongly connected components, each sorted, listed by smallest node.
pub fn minimal_subsystems(graph: &OrbitGraph) -> Vec<Vec<usize>> {
    let succ = graph.successors();
    let comp = tarjan(&succ);
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut terminal = vec![true; ncomp];
    for (v, out) in succ.iter().enumerate() {
        for &w in out {
            if comp[v] != comp[w] {
                terminal[comp[v]] = false;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for (v, &c) in comp.iter().enumerate() {
        groups[c].push(v);
    }
    let mut out: Vec<Vec<usize>> = groups
        .into_iter()
        .zip(terminal)
        .filter_map(|(g, t)| t.then_some(g))
        .collect();
    out.sort();
    out
}

/// Iterative Tarjan; returns the component id of every node.
fn tarjan(succ: &[Vec<usize>]) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![UNSEEN; n];
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, position in its successor list)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

#[cfg(test)]
pub(crate) mod tests {
    use super::super::testing::*;
    use super::*;

    /// Minimal nonempty forward-closed node sets, by subset enumeration.
    pub fn brute_force_minimal(graph: &OrbitGraph) -> Vec<Vec<usize>> {
        let n = graph.nodes;
        assert!(n <= 16);
        let mut closed_masks = Vec::new();
        for mask in 1u32..(1 << n) {
            if graph
                .edges
                .iter()
                .all(|&(s, t, _)| mask & (1 << s) == 0 || mask & (1 << t) != 0)
            {
                closed_masks.push(mask);
            }
        }
        let mut out: Vec<Vec<usize>> = closed_masks
            .iter()
            .filter(|&&m| !closed_masks.iter().any(|&o| o != m && o & m == o))
            .map(|&m| (0..n).filter(|v| m & (1 << v) != 0).collect())
            .collect();
        out.sort();
        out
    }

    #[test]
    fn chain_with_sink() {
        let g = OrbitGraph::from_edges(3, vec![(0, 1, 0), (1, 2, 0), (2, 2, 0)]);
        assert_eq!(minimal_subsystems(&g), vec![vec![2]]);
    }

    #[test]
    fn two_cycle_with_feeder() {
        let g = OrbitGraph::from_edges(3, vec![(0, 1, 0), (1, 0, 0), (2, 0, 0)]);
        assert_eq!(minimal_subsystems(&g), vec![vec![0, 1]]);
    }

    #[test]
    fn isolated_nodes_are_terminal() {
        let g = OrbitGraph::from_edges(3, vec![(0, 1, 0)]);
        assert_eq!(minimal_subsystems(&g), vec![vec![1], vec![2]]);
        assert_eq!(brute_force_minimal(&g), minimal_subsystems(&g));
    }

    #[test]
    fn standard_pconf_four_cells() {
        let g = build_orbit_graph(&standard_pconf(), 4);
        assert!(!g.approximate);
        // δ₁ = (t+1)/2 sends cell k to cell 2 + k/2; δ₂ = (t-1)/2 to cell k/2
        let expect = vec![
            (0, 0, 1),
            (0, 2, 0),
            (1, 0, 1),
            (1, 2, 0),
            (2, 1, 1),
            (2, 3, 0),
            (3, 1, 1),
            (3, 3, 0),
        ];
        assert_eq!(g.edges, expect);
        assert_eq!(minimal_subsystems(&g), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn rational_circle_has_two_terminal_classes() {
        let g = build_orbit_graph(&circle_system(0.25, 0.5), 8);
        assert_eq!(minimal_subsystems(&g), vec![vec![0, 2, 4, 6], vec![1, 3, 5, 7]]);
    }

    #[test]
    fn edge_list_format() {
        let g = OrbitGraph::from_edges(2, vec![(1, 0, 1), (0, 1, 0)]);
        assert_eq!(g.to_edge_list(), "0 1 0\n1 0 1\n");
    }
}
