use proptest::prelude::*;
use robust_sonc::model::builtin::{builtin, cubic_problem};
use robust_sonc::model::{ControlProcess, TimeGrid};
use robust_sonc::robust::robust_cost;
use robust_sonc::simulate::{
    generate_paths, perturbation_trace, remainder_orders, simulate_first_variation, simulate_state,
    y1_via_representation, Panel,
};

fn constant(v: f64) -> ControlProcess<f64> {
    ControlProcess::constant(vec![v])
}

/// `sqrt(E max_k |a − b|²)`.
fn sup_l2_gap(a: &Panel<f64>, b: &Panel<f64>) -> f64 {
    let mut acc = 0.0;
    for p in 0..a.paths() {
        let mut worst: f64 = 0.0;
        for k in 0..a.nodes() {
            let d: f64 = a
                .at(p, k)
                .iter()
                .zip(b.at(p, k))
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            worst = worst.max(d);
        }
        acc += worst;
    }
    (acc / a.paths() as f64).sqrt()
}

#[test]
fn cubic_remainders_have_the_variational_orders() {
    let spec = cubic_problem::<f64>();
    let bundle = generate_paths(21, 4_000, &spec.grid).unwrap();
    let eps: Vec<f64> = (3..=7).map(|k| 2f64.powi(-k)).collect();
    let report = remainder_orders(&spec, &constant(0.5), &constant(1.0), 0, &bundle, &eps).unwrap();
    let [s1, s2, s3] = report.slopes.map(Option::unwrap);
    assert!((s1 - 1.0).abs() <= 0.25, "{report:?}");
    assert!((s2 - 2.0).abs() <= 0.25, "{report:?}");
    assert!((s3 - 3.0).abs() <= 0.35, "{report:?}");
}

#[test]
fn representation_gap_halves_with_the_step() {
    let spec = cubic_problem::<f64>();
    let fine = TimeGrid::new(1.0, 400).unwrap();
    let bundle = generate_paths(22, 2_000, &fine).unwrap();
    let mut gaps = Vec::new();
    for factor in [8, 4, 2, 1] {
        let b = bundle.coarsen(factor).unwrap();
        let mut s = spec.clone();
        s.grid = *b.grid();
        let reference = simulate_state(&s, &constant(0.5), 0, &b).unwrap();
        let v = perturbation_trace(&s, &reference, &constant(1.0), &b).unwrap();
        let direct = simulate_first_variation(&s, &reference, &v, &b).unwrap();
        let repr = y1_via_representation(&s, &reference, &v, &b).unwrap();
        gaps.push(sup_l2_gap(&direct, &repr));
    }
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..=3.0).contains(&ratio), "{gaps:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn first_variation_is_linear_in_the_direction(
        name in prop::sample::select(vec!["example", "lq", "cubic", "linear-drift"]),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        seed in 0u64..1_000,
    ) {
        let setup = builtin::<f64>(name).unwrap();
        let spec = &setup.spec;
        let bundle = generate_paths(seed, 64, &spec.grid).unwrap();
        for g in 0..spec.scenarios.len() {
            let reference = simulate_state(spec, &setup.reference, g, &bundle).unwrap();
            let v = perturbation_trace(spec, &reference, &setup.candidate, &bundle).unwrap();
            let w = perturbation_trace(spec, &reference, &ControlProcess::deterministic(|t: f64| vec![0.5 * t]), &bundle)
                .unwrap()
                .expanded(bundle.n_paths());
            let y = |d: &Panel<f64>| simulate_first_variation(spec, &reference, d, &bundle).unwrap();
            let zero = Panel::zeros(bundle.n_paths(), v.nodes(), 1);
            let combined = y(&zero.axpy(a, &v).axpy(b, &w));
            let expected = zero.axpy(a, &y(&v)).axpy(b, &y(&w));
            let scale = 1.0 + expected.max_abs();
            prop_assert!(combined.max_abs_diff(&expected) <= 1e-10 * scale, "{}/{}", name, g);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn paths_depend_only_on_seed_and_index(seed in any::<u64>(), small in 1usize..20, extra in 1usize..20) {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let a = generate_paths(seed, small, &grid).unwrap();
        let b = generate_paths(seed, small + extra, &grid).unwrap();
        for p in 0..small {
            prop_assert_eq!(a.path(p), b.path(p));
        }
        prop_assert_eq!(a, generate_paths(seed, small, &grid).unwrap());
    }

    #[test]
    fn robust_cost_is_the_largest_vertex_cost(
        name in prop::sample::select(vec!["example", "lq", "cubic", "linear-drift"]),
        seed in 0u64..1_000,
        level in -1.0..1.0f64,
    ) {
        let setup = builtin::<f64>(name).unwrap();
        let bundle = generate_paths(seed, 64, &setup.spec.grid).unwrap();
        let table = robust_cost(&setup.spec, &constant(level), &bundle).unwrap();
        let best = table.vertex_costs.iter().map(|e| e.mean).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(table.robust_value, best);
        prop_assert!(!table.argmax_vertices.is_empty());
        for &v in &table.argmax_vertices {
            let w = &setup.spec.measures.vertices[v];
            prop_assert!(table.value_at(w) <= best);
        }
        let interior: Vec<f64> = {
            let k = setup.spec.measures.vertices.len() as f64;
            (0..setup.spec.scenarios.len())
                .map(|g| setup.spec.measures.vertices.iter().map(|v| v[g]).sum::<f64>() / k)
                .collect()
        };
        prop_assert!(table.value_at(&interior) <= best + 1e-12 * best.abs().max(1.0));
    }
}
