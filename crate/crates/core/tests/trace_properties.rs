mod common;

use std::collections::HashMap;

use common::{corpus, oracle_separates, Raster};
use levelflow::geom::Point;
use levelflow::{separation_relation, side_of_curve, trace_level, ScalarField, Side, Topology, Window};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cubic(a: f64, b: f64, c: f64) -> ScalarField {
    let expr = format!("y - ({a:?})*x^3 - ({b:?})*x^2 - ({c:?})*x");
    ScalarField::parse(&expr, Window::new(-1.0, 1.0, -1.0, 1.0, 49, 49).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traced_vertices_lie_on_the_level(
        a in -0.2f64..0.2, b in -0.15f64..0.15, c in -0.15f64..0.15, level in -0.45f64..0.45
    ) {
        let f = cubic(a, b, c);
        let tol = 1e-10;
        for comp in trace_level(&f, level, tol).unwrap() {
            for v in &comp.vertices {
                let value = f.value(*v).unwrap();
                prop_assert!((value - level).abs() <= tol, "{v:?}: {value} vs {level}");
            }
        }
    }

    #[test]
    fn graphs_over_x_give_one_proper_arc(
        a in -0.2f64..0.2, b in -0.15f64..0.15, c in -0.15f64..0.15, level in -0.45f64..0.45
    ) {
        let f = cubic(a, b, c);
        let comps = trace_level(&f, level, 1e-10).unwrap();
        prop_assert_eq!(comps.len(), 1);
        prop_assert_eq!(comps[0].topology, Topology::ProperArc);
    }

    #[test]
    fn side_labels_are_constant_on_flood_regions(field_idx in 0usize..4, t in 0.1f64..0.9, seed in any::<u64>()) {
        let (_, f) = &corpus()[field_idx];
        let (lo, hi) = f.sampled_range().unwrap();
        // Stay away from range ends where arcs get too short to trace reliably.
        let level = lo + (hi - lo) * (0.25 + 0.5 * t);
        let comps = trace_level(f, level, 1e-10).unwrap();
        let Some(c) = comps.iter().find(|c| c.is_proper_arc()) else { return Ok(()); };
        let w = *f.window();
        let raster = Raster::new(w, 300, c);
        // Two sides, though the raster may pinch off slivers where the arc
        // runs within a pixel of the window edge.
        prop_assert!(raster.region_count() >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: HashMap<usize, Side> = HashMap::new();
        for _ in 0..200 {
            let p = Point::new(rng.gen_range(w.xmin..w.xmax), rng.gen_range(w.ymin..w.ymax));
            let Some(region) = raster.region(p) else { continue };
            let side = side_of_curve(c, &w, p, 1e-9).unwrap();
            if side == Side::On {
                continue;
            }
            let first = *seen.entry(region).or_insert(side);
            prop_assert_eq!(first, side, "point {:?}", p);
        }
    }
}

#[test]
fn separation_matches_flood_fill_with_several_components() {
    // On the wide window the levels of the figure field split into pieces
    // between the tangent poles; every pair of pieces is still a pair of
    // proper arcs, so the relation is defined.
    let f = ScalarField::parse(
        "atan(y - tan(x)^2)",
        Window::new(-3.0, 3.0, -4.0, 4.0, 121, 161).unwrap(),
    )
    .unwrap();
    let w = *f.window();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut arcs = Vec::new();
    for _ in 0..12 {
        let level = rng.gen_range(-1.2..1.2);
        arcs.extend(
            trace_level(&f, level, 1e-10)
                .unwrap()
                .into_iter()
                .filter(|c| c.topology == Topology::ProperArc && !c.touches_mask),
        );
    }
    assert!(arcs.len() >= 24, "{}", arcs.len());
    let mut compared = 0;
    for _ in 0..60 {
        let pick: Vec<usize> = (0..3).map(|_| rng.gen_range(0..arcs.len())).collect();
        if pick[0] == pick[1] || pick[1] == pick[2] || pick[0] == pick[2] {
            continue;
        }
        let (k, c, l) = (&arcs[pick[0]], &arcs[pick[1]], &arcs[pick[2]]);
        let Some(expected) = oracle_separates(k, c, l, w, 400) else { continue };
        assert_eq!(separation_relation(k, c, l, &w).unwrap(), expected);
        compared += 1;
    }
    assert!(compared >= 30, "{compared}");
}
