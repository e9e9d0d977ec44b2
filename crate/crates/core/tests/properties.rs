use std::f64::consts::PI;

use chlimit::catalog::Expr;
use chlimit::elliptic::{mollify_initial, neumann_inverse, star_norm, MeanZeroField, TOOL_TOL};
use chlimit::monotone::MonotoneGraph;
use chlimit::scenario::{fmt_f64, read_csv};
use chlimit::stepper::{solve_trajectory, SpaceTimeFn, StepperConfig};
use chlimit::{Grid, LipschitzPerturbation, ProblemData, ScalarField, TimeGrid};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop_oneof![
        (3usize..80, 0.3f64..3.0).prop_map(|(n, l)| Grid::new_1d(l, n).unwrap()),
        (3usize..14, 3usize..14, 0.3f64..3.0, 0.3f64..3.0).prop_map(|(nx, ny, lx, ly)| Grid::new_2d(lx, ly, nx, ny).unwrap()),
    ]
}

fn field_on(grid: Grid) -> impl Strategy<Value = (Grid, ScalarField)> {
    let n = grid.node_count();
    prop::collection::vec(-2.0f64..2.0, n).prop_map(move |v| (grid.clone(), grid.field(v).unwrap()))
}

fn two_fields_on(grid: Grid) -> impl Strategy<Value = (Grid, ScalarField, ScalarField)> {
    let n = grid.node_count();
    (prop::collection::vec(-2.0f64..2.0, n), prop::collection::vec(-2.0f64..2.0, n))
        .prop_map(move |(a, b)| (grid.clone(), grid.field(a).unwrap(), grid.field(b).unwrap()))
}

fn dot(grid: &Grid, a: &ScalarField, b: &ScalarField) -> f64 {
    grid.integrate(&a.zip_map(b, |p, q| p * q).unwrap()).unwrap()
}

fn linf(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn graphs() -> Vec<MonotoneGraph> {
    vec![
        MonotoneGraph::power(1).unwrap(),
        MonotoneGraph::power(3).unwrap(),
        MonotoneGraph::power(5).unwrap(),
        MonotoneGraph::sinh(),
        MonotoneGraph::sign_jump(1.0).unwrap(),
        MonotoneGraph::sign_jump(0.25).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn discrete_divergence_theorem((grid, f) in grid_strategy().prop_flat_map(field_on), c in -3.0f64..3.0, k in 0.0f64..4.0) {
        let flux = grid.trace_from_fn(|x, y| c + (k * x).sin() * (1.0 + y));
        let lap = grid.laplacian_neumann(&f, &flux).unwrap();
        let lhs = grid.integrate(&lap).unwrap();
        let rhs = grid.boundary_integral(&flux).unwrap();
        let h = grid.spacing().iter().fold(f64::INFINITY, |a, b| a.min(*b));
        // Δ_h scales like 1/h², so round-off in the sum does too
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + linf(&f)) * (1.0 + 1.0 / (h * h)) , "{lhs} vs {rhs}");
    }

    #[test]
    fn laplacian_symmetric_and_nonpositive((grid, f, g) in grid_strategy().prop_flat_map(two_fields_on)) {
        let zero = grid.zero_trace();
        let lf = grid.laplacian_neumann(&f, &zero).unwrap();
        let lg = grid.laplacian_neumann(&g, &zero).unwrap();
        let a = dot(&grid, &g, &lf);
        let b = dot(&grid, &f, &lg);
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())));
        prop_assert!(dot(&grid, &f, &lf) <= 1e-12);
        let n = grid.norms(&f).unwrap();
        prop_assert!((n.grad_l2 * n.grad_l2 + dot(&grid, &f, &lf)).abs() <= 1e-9 * (1.0 + n.grad_l2 * n.grad_l2));
    }

    #[test]
    fn quadrature_exact_on_bilinear(grid in grid_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
        let f = grid.field_from_fn(|x, y| a + b * x + c * y + d * x * y);
        let e = grid.extents().to_vec();
        let exact = if grid.dim() == 1 {
            a * e[0] + b * e[0] * e[0] / 2.0
        } else {
            let (lx, ly) = (e[0], e[1]);
            a * lx * ly + b * lx * lx / 2.0 * ly + c * ly * ly / 2.0 * lx + d * lx * lx * ly * ly / 4.0
        };
        prop_assert!((grid.integrate(&f).unwrap() - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn resolvent_and_yosida_properties(a in -6.0f64..6.0, b in -6.0f64..6.0, log_eps in -8.0f64..0.0) {
        let eps = 10f64.powf(log_eps);
        for g in graphs() {
            let (ja, jb) = (g.resolvent(eps, a).unwrap(), g.resolvent(eps, b).unwrap());
            let (ba, bb) = (g.yosida(eps, a).unwrap(), g.yosida(eps, b).unwrap());
            let scale = 1.0 + ba.abs().max(bb.abs());
            prop_assert!((ja - jb).abs() <= (a - b).abs() + 1e-12, "{} contraction", g.name());
            prop_assert!((ba - bb).abs() <= (a - b).abs() / eps + 1e-10 * scale, "{} Lipschitz", g.name());
            prop_assert!((ba - bb) * (a - b) >= -1e-12 * scale, "{} monotone", g.name());
            prop_assert!(ba.abs() <= g.minimal_section(a).abs() + 1e-12 * scale, "{} dominance", g.name());
            // selection: β_ε(a) ∈ β(J_ε(a))
            let (lo, hi) = g.section_interval(ja);
            prop_assert!(ba >= lo - 1e-10 * scale && ba <= hi + 1e-10 * scale, "{} selection", g.name());
        }
    }

    #[test]
    fn yosida_converges_monotonically(r in -4.0f64..4.0) {
        for g in graphs() {
            if g.section_interval(r).0 != g.section_interval(r).1 {
                continue;
            }
            let target = g.minimal_section(r);
            let mut prev = f64::INFINITY;
            for k in 1..=8 {
                let gap = (g.yosida(10f64.powi(-k), r).unwrap() - target).abs();
                prop_assert!(gap <= prev + 1e-12 * (1.0 + target.abs()), "{} at eps=1e-{k}", g.name());
                prev = gap;
            }
            prop_assert!(prev <= 1e-6 * (1.0 + target.abs()).powi(3));
        }
    }

    #[test]
    fn csv_numbers_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let text = format!("a\n{}\n", fmt_f64(v));
        let (_, rows) = read_csv(&text).unwrap();
        prop_assert_eq!(rows[0][0].to_bits(), v.to_bits());
    }

    #[test]
    fn catalog_matches_closure(a in -5.0f64..5.0, k in 0.0f64..4.0, s in -2.0f64..2.0, x in 0.0f64..1.0, y in 0.0f64..1.0, t in 0.0f64..1.0) {
        let text = format!("{} * cos({k}*pi*x + {s}*t) * exp(-{k}*y) - {a}*x*t + 0.5", fmt_f64(a));
        let e = Expr::parse(&text).unwrap();
        let expected = a * (k * PI * x + s * t).cos() * (-k * y).exp() - a * x * t + 0.5;
        prop_assert!((e.eval(x, y, t) - expected).abs() <= 1e-13 * (1.0 + expected.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// `(‖𝒩v‖ + ‖∇𝒩v‖)/‖v‖_* ≤ 1 + diam/π` by the Poincaré inequality on a box.
    #[test]
    fn inverse_laplacian_bounded_by_star_norm((grid, f) in grid_strategy().prop_flat_map(field_on)) {
        let v = MeanZeroField::project(&grid, &f).unwrap();
        let u = neumann_inverse(&grid, &v, TOOL_TOL).unwrap();
        let n = grid.norms(u.field()).unwrap();
        let s = star_norm(&grid, v.field()).unwrap();
        prop_assume!(s > 1e-12);
        let diam = grid.extents().iter().map(|e| e * e).sum::<f64>().sqrt();
        prop_assert!((n.l2 + n.grad_l2) / s <= 1.0 + diam / PI + 1e-8);
    }

    /// Implicit-Euler chain inequality for the star norm.
    #[test]
    fn star_norm_chain_inequality(grid in grid_strategy(), seeds in prop::collection::vec(0.0f64..1.0, 4..8), dt in 0.01f64..0.5) {
        let fields: Vec<MeanZeroField> = seeds
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let f = grid.field_from_fn(|x, y| (s * 7.0 * x + k as f64).sin() + (3.0 * s * y).cos() * x);
                MeanZeroField::project(&grid, &f).unwrap()
            })
            .collect();
        let mut sum = 0.0;
        for w in fields.windows(2) {
            let diff = w[1].field().zip_map(w[0].field(), |a, b| (a - b) / dt).unwrap();
            let nv = neumann_inverse(&grid, &w[1], TOOL_TOL).unwrap();
            sum += dt * dot(&grid, &diff, nv.field());
        }
        let first = star_norm(&grid, fields[0].field()).unwrap();
        let last = star_norm(&grid, fields.last().unwrap().field()).unwrap();
        prop_assert!(sum >= 0.5 * (last * last - first * first) - 1e-8);
    }

    #[test]
    fn mollifier_converges((grid, f) in grid_strategy().prop_flat_map(field_on)) {
        let grad = grid.norms(&f).unwrap().grad_l2;
        let mut prev = f64::INFINITY;
        for k in 1..=10 {
            let delta = 0.5f64.powi(k);
            let u = mollify_initial(&grid, &f, delta).unwrap();
            let e = grid.norms(&u.zip_map(&f, |a, b| a - b).unwrap()).unwrap().l2;
            prop_assert!(e <= prev + 1e-12);
            prop_assert!(e <= delta.sqrt() * grad + 1e-10);
            prop_assert!((grid.mean(&u).unwrap() - grid.mean(&f).unwrap()).abs() <= 1e-11 * (1.0 + linf(&f)));
            prev = e;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stepper_balances_mass(
        dim2 in any::<bool>(),
        delta in prop_oneof![Just(0.0), 1e-3f64..0.3],
        amp in 0.0f64..1.0,
        flux in -1.0f64..1.0,
        sj in any::<bool>(),
    ) {
        let grid = if dim2 { Grid::new_2d(1.0, 0.7, 9, 7).unwrap() } else { Grid::new_1d(1.3, 33).unwrap() };
        let graph = if sj { MonotoneGraph::sign_jump(0.5).unwrap() } else { MonotoneGraph::power(3).unwrap() };
        let data = ProblemData {
            y0: grid.field_from_fn(|x, y| amp * (PI * x).cos() + 0.1 * y),
            grid,
            tau: 0.8,
            delta,
            lambda: SpaceTimeFn::constant(1.0),
            g: SpaceTimeFn::steady("g", move |x, _| amp * (2.0 * x).sin()),
            h: SpaceTimeFn::new("h", move |x, _, t| flux * (1.0 + t) * (1.0 + x)),
            graph,
            perturbation: LipschitzPerturbation::neg_identity(),
        };
        let tg = TimeGrid::new(0.1, 20).unwrap();
        let cfg = StepperConfig::for_graph(&data.graph);
        let tr = solve_trajectory(&data, &tg, &cfg, true).unwrap();
        prop_assert!(tr.is_complete());
        let grid = &data.grid;
        for n in 1..tr.y.len() {
            let h = data.h.trace(grid, tr.times[n]);
            let expected = grid.mean(&tr.y[n - 1]).unwrap() + tg.dt() * grid.boundary_integral(&h).unwrap() / grid.measure();
            let bound = 1e-10 * (1.0 + linf(&tr.y[n]));
            prop_assert!((grid.mean(&tr.y[n]).unwrap() - expected).abs() <= bound);
        }
    }

    /// Homogeneous double-well with dt ≤ τ/(2 C_π ‖λ‖_∞): energy does not increase.
    #[test]
    fn energy_dissipates(delta in prop_oneof![Just(0.0), 1e-3f64..0.2], amp in 0.05f64..1.5, k in 1usize..4, tau in 0.5f64..2.0) {
        let grid = Grid::new_1d(1.0, 65).unwrap();
        let data = ProblemData {
            y0: grid.field_from_fn(|x, _| amp * (k as f64 * PI * x).cos()),
            grid,
            tau,
            delta,
            lambda: SpaceTimeFn::constant(1.0),
            g: SpaceTimeFn::zero(),
            h: SpaceTimeFn::zero(),
            graph: MonotoneGraph::power(3).unwrap(),
            perturbation: LipschitzPerturbation::neg_identity(),
        };
        let steps = 40;
        let tg = TimeGrid::new(tau / 2.0 * steps as f64 / 40.0, steps).unwrap();
        prop_assert!(tg.dt() <= tau / 2.0);
        let tr = solve_trajectory(&data, &tg, &StepperConfig::default(), false).unwrap();
        prop_assert!(tr.is_complete());
        for w in tr.diagnostics.windows(2) {
            prop_assert!(w[1].energy <= w[0].energy + 1e-8, "{} -> {}", w[0].energy, w[1].energy);
        }
    }
}
