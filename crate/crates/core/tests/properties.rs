use proptest::prelude::*;

use gds_core::bvp::{self, BoundaryProblem};
use gds_core::cauchy::{self, HShape, OverdetProblem};
use gds_core::exprlang::parse;
use gds_core::funceq::{self, FunceqSystem, GridFunction};
use gds_core::gds::{
    find_guided_cycles, minimal_subsystems, GeneratorMap, GuidedSystem, GuidingSet, OrbitGraph, StateSpace, Tolerances,
};
use gds_core::pconf::{self, HData, IvpProblem};

fn interval() -> StateSpace {
    StateSpace::Interval { a: -1.0, b: 1.0 }
}

fn exprs(srcs: &[&str]) -> Vec<GeneratorMap> {
    srcs.iter().map(|s| GeneratorMap::expr(parse(s).unwrap())).collect()
}

fn fe_system(a1: &str, a2: &str) -> FunceqSystem {
    let sys = GuidedSystem::unguided(interval(), exprs(&["(t+1)/2", "(t-1)/2"]))
        .unwrap()
        .with_coeffs(vec![parse(a1).unwrap(), parse(a2).unwrap()])
        .unwrap();
    FunceqSystem::new(sys).unwrap()
}

fn poly(c: &[f64]) -> String {
    c.iter()
        .enumerate()
        .map(|(k, a)| format!("({a:e})*t^{k}"))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn coeffs(max_degree: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 1..=max_degree + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_matches_central_difference(c in coeffs(5), x in -2.0..2.0f64) {
        let e = parse(&poly(&c)).unwrap();
        let d = e.differentiate().eval(x).unwrap();
        let h = 1e-6;
        let fd = (e.eval(x + h).unwrap() - e.eval(x - h).unwrap()) / (2.0 * h);
        prop_assert!((d - fd).abs() < 1e-5 * (1.0 + d.abs()), "{d} vs {fd}");
    }

    #[test]
    fn printing_round_trips(c in coeffs(4), x in -2.0..2.0f64) {
        let src = format!("sin({}) / (2 + cos(t))", poly(&c));
        let e = parse(&src).unwrap();
        let again = parse(&e.to_string()).unwrap();
        prop_assert_eq!(e.eval(x).unwrap(), again.eval(x).unwrap());
    }

    /// Minimal forward-closed sets of random guided graphs against subset search.
    #[test]
    fn graph_minimal_subsystems(
        nodes in 1usize..=8,
        tables in prop::collection::vec(prop::collection::vec(0usize..8, 8), 1..=3),
    ) {
        let tables: Vec<Vec<usize>> = tables.iter().map(|t| t[..nodes].iter().map(|&w| w % nodes).collect()).collect();
        let edges: Vec<(usize, usize, usize)> = tables
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.iter().enumerate().map(move |(v, &w)| (v, w, i)))
            .collect();
        let closed = |s: u32| edges.iter().all(|&(u, v, _)| s & (1 << u) == 0 || s & (1 << v) != 0);
        let sets: Vec<u32> = (1u32..(1 << nodes)).filter(|&s| closed(s)).collect();
        let mut brute: Vec<Vec<usize>> = sets
            .iter()
            .filter(|&&s| !sets.iter().any(|&t| t != s && t & s == t))
            .map(|&s| (0..nodes).filter(|&v| s & (1 << v) != 0).collect())
            .collect();
        brute.sort();
        let mut found = minimal_subsystems(&OrbitGraph::from_edges(nodes, edges));
        for s in &mut found {
            s.sort();
        }
        found.sort();
        prop_assert_eq!(found, brute);
    }

    /// Cycles reported on rational rotations re-validate as Λ-proper orbits.
    #[test]
    fn guided_cycles_revalidate(k1 in 1u32..8, k2 in 1u32..8, q in 2u32..9) {
        let sys = GuidedSystem::new(
            StateSpace::circle(),
            exprs(&[&format!("t + 2*pi*{k1}/{q}"), &format!("t + 2*pi*{k2}/{q}")]),
            vec![
                GuidingSet::points(&[0.0, std::f64::consts::PI]),
                GuidingSet::points(&[std::f64::consts::FRAC_PI_2, 1.5 * std::f64::consts::PI]),
            ],
            Tolerances::default(),
        )
        .unwrap();
        for cycle in find_guided_cycles(&sys, 6).cycles {
            prop_assert!(cycle.is_valid(&sys));
            prop_assert!(cycle.points.iter().all(|&x| sys.in_guiding_union(x)));
        }
    }

    #[test]
    fn operator_is_positive(values in prop::collection::vec(0.0..1.0f64, 129)) {
        let sys = fe_system("t^2/2", "1/2");
        let f = GridFunction::new(interval(), values).unwrap();
        let af = funceq::apply_operator(&sys, &f).unwrap();
        prop_assert!(af.values.iter().all(|&v| v >= 0.0));
        // ‖A‖ = sup A1
        let g1 = funceq::apply_operator(&sys, &GridFunction::constant(interval(), 128, 1.0).unwrap()).unwrap();
        prop_assert!(af.sup_norm() <= g1.sup_norm() * f.sup_norm() + 1e-12);
    }

    #[test]
    fn neumann_is_linear(c1 in coeffs(3), c2 in coeffs(3)) {
        let sys = fe_system("1/4", "(1+t^2)/4");
        let tol = 1e-12;
        let grid = |c: &[f64]| GridFunction::from_expr(interval(), 256, &parse(&poly(c)).unwrap()).unwrap();
        let (h1, h2) = (grid(&c1), grid(&c2));
        let sum = GridFunction::new(interval(), h1.values.iter().zip(&h2.values).map(|(a, b)| a + b).collect()).unwrap();
        let (f1, _) = funceq::solve_neumann(&sys, &h1, tol, 10_000).unwrap();
        let (f2, _) = funceq::solve_neumann(&sys, &h2, tol, 10_000).unwrap();
        let (fs, report) = funceq::solve_neumann(&sys, &sum, tol, 10_000).unwrap();
        prop_assert!(report.residual <= 10.0 * tol * (1.0 + sum.sup_norm()));
        let gap = fs.values.iter().zip(f1.values.iter().zip(&f2.values)).map(|(s, (a, b))| (s - a - b).abs()).fold(0.0, f64::max);
        prop_assert!(gap <= 10.0 * tol * (1.0 + sum.sup_norm()), "{gap}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// h := f* − f*∘δ₁ − f*∘δ₂ is compatible and the solve recovers f*.
    #[test]
    fn ivp_round_trip(c in coeffs(4), mu in -1.0..1.0f64) {
        let mut c = c;
        c.resize(5, 0.0);
        c[1] = mu;
        let p = poly(&c);
        let shift = |arg: &str| p.replace('t', &format!("({arg})"));
        let h = parse(&format!("{p} - ({}) - ({})", shift("(t-1)/2"), shift("(t+1)/2"))).unwrap();
        prop_assert!((h.eval(-1.0).unwrap() - h.eval(1.0).unwrap()).abs() < 1e-10);
        let pc = pconf::validate_pconfiguration(exprs(&["(t-1)/2", "(t+1)/2"]), vec![-1.0, 0.0, 1.0], 1e-9).unwrap();
        let m = 256;
        let (f, diag) = pconf::solve_ivp(&IvpProblem::new(pc, HData::Expr(h), 0.0, mu), m).unwrap();
        let exact = |t: f64| c.iter().rev().fold(0.0, |acc, a| acc * t + a);
        let err = f.sup_error(exact);
        prop_assert!(err < 50.0 / (m * m) as f64, "{err}");
        prop_assert!(diag.anchor_identity_defect <= 10.0 * diag.residual.max(1e-15));
    }

    /// Every cloud entry is reproduced bitwise by replaying its derivation.
    #[test]
    fn propagation_paths_replay(b in 0.5..3.0f64, depth in 1usize..8) {
        let problem = OverdetProblem::geometric_mean(1.0, 4.0, HShape::Jensen, 0.0, b).unwrap();
        let cloud = cauchy::propagate_values(&problem, depth, 1.0 / 256.0).unwrap();
        for e in &cloud.entries {
            let (z, v) = problem.replay(e.seed, &e.path).unwrap();
            prop_assert_eq!(z.to_bits(), e.point.to_bits());
            prop_assert_eq!(v.to_bits(), e.value.to_bits());
        }
    }

    /// Jensen values are affine in the seed pair: doubling B doubles v − A-part.
    #[test]
    fn jensen_values_scale_with_the_seed(b in 0.1..5.0f64) {
        let one = OverdetProblem::arithmetic_mean(0.0, 1.0, HShape::Jensen, 0.0, b).unwrap();
        let two = OverdetProblem::arithmetic_mean(0.0, 1.0, HShape::Jensen, 0.0, 2.0 * b).unwrap();
        let (c1, c2) = (
            cauchy::propagate_values(&one, 8, 1.0 / 512.0).unwrap(),
            cauchy::propagate_values(&two, 8, 1.0 / 512.0).unwrap(),
        );
        prop_assert_eq!(c1.entries.len(), c2.entries.len());
        for (e1, e2) in c1.entries.iter().zip(&c2.entries) {
            prop_assert_eq!(e1.point, e2.point);
            prop_assert!((e2.value - 2.0 * e1.value).abs() < 1e-12);
        }
    }

    /// π₃ slides along the characteristic direction: nx − my is preserved.
    #[test]
    fn pi3_keeps_the_characteristic_coordinate(u in 0.0..1.0f64, v in 0.0..1.0f64, c in 0.0..0.24f64) {
        let alpha2 = format!("(1-z)/2 + {c}*(1-z^2)");
        let p = BoundaryProblem::parse("(1+z)/2", &alpha2, 1.0, 1.0, "0", "0", "0").unwrap();
        let (x, y) = (u * (1.0 - v), v * (1.0 - u));
        prop_assume!(p.contains(x, y));
        let (px, py) = bvp::project_pi3((x, y), &p).unwrap();
        prop_assert!(((px - py) - (x - y)).abs() < 1e-12);
        prop_assert!(px >= x - 1e-12 && py >= y - 1e-12);
    }
}
