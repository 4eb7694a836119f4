mod common;

use common::corpus;
use levelflow::chart_io::{read_chart, write_chart};
use levelflow::regularity::{plan_levels, FlowParams};
use levelflow::straighten::{build_chart, verify_straightening, StraightenSettings, VerifyOptions};
use levelflow::{chart_apply, chart_invert, GlobalChart, ScalarField, Window};
use proptest::prelude::*;

fn chart_for(f: &ScalarField, strips: usize, rows: usize) -> GlobalChart {
    let plan = plan_levels(f, 8, FlowParams::for_field(f, 1e-10));
    let spine = plan.spine.expect("centre transversal");
    let mut settings = StraightenSettings::for_window(f.window(), strips, 1e-10);
    settings.sampling.rows = rows;
    build_chart(f, &spine, f.window().center(), &settings).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn projection_chart_is_a_translation(
        x0 in -5.0f64..5.0, y0 in -5.0f64..5.0, w in 0.5f64..6.0, n in 9usize..60,
        strips in 2usize..9, rows in 2usize..12
    ) {
        let f = ScalarField::parse("y", Window::new(x0, x0 + w, y0, y0 + w, n, n).unwrap()).unwrap();
        let chart = chart_for(&f, strips, rows);
        let centre = f.window().center();
        for &y in &chart.levels() {
            let (a, b) = chart.domain_at(y).unwrap();
            for i in 0..=10 {
                let x = a + (b - a) * i as f64 / 10.0;
                let p = chart_apply(&chart, x, y).unwrap();
                prop_assert!((p.y - y).abs() <= 1e-12 * (1.0 + y.abs()));
                prop_assert!((p.x - (x + centre.x)).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn accepted_charts_meet_every_gate(field_idx in 1usize..4, strips in 4usize..10, rows in 17usize..25, seed in any::<u64>()) {
        // At least 64 row intervals across the range, as with the defaults.
        let (_, f) = &corpus()[field_idx];
        let chart = chart_for(f, strips, rows);
        let report = verify_straightening(
            f,
            &chart,
            VerifyOptions { grid: (48, 48), roundtrip_samples: 200, seed, order_check: true },
        );
        let cell = f.window().cell_size();
        prop_assert!(report.max_residual <= 2e-2, "{}", report.max_residual);
        prop_assert!(report.max_seam <= 2.0 * cell, "{}", report.max_seam);
        prop_assert_eq!(report.order_violations, 0);
        prop_assert_eq!(report.injectivity_violations, 0);
        prop_assert_eq!(report.monotonicity_violations, 0);
        prop_assert_eq!(report.roundtrip_failures, 0);
        prop_assert!(report.max_roundtrip <= 2.0 * cell);
    }

    #[test]
    fn inverse_then_apply_returns_the_point(field_idx in 1usize..4, u in 0.0f64..1.0, t in 0.02f64..0.98) {
        let (_, f) = &corpus()[field_idx];
        let chart = chart_for(f, 6, 9);
        let (lo, hi) = chart.y_range();
        let y = lo + t * (hi - lo);
        let (a, b) = chart.domain_at(y).unwrap();
        let p = chart_apply(&chart, a + u * (b - a), y).unwrap();
        let cell = f.window().cell_size();
        let (x2, y2) = chart_invert(&chart, f, p, 2.0 * cell).unwrap();
        let q = chart_apply(&chart, x2, y2).unwrap();
        prop_assert!(p.dist(q) <= 2.0 * cell);
    }
}

#[test]
fn chart_text_round_trip_is_bit_exact() {
    for (_, f) in corpus() {
        let chart = chart_for(&f, 5, 7);
        let text = write_chart(&chart);
        let back = read_chart(&text).unwrap();
        assert_eq!(back, chart);
        assert_eq!(write_chart(&back), text);
        for (k, s) in chart.strips.iter().enumerate() {
            for r in 0..s.rows() {
                for i in 0..s.columns() {
                    let x = s.column_coordinate(i) - chart.offsets[k];
                    let a = chart.apply_in_strip(k, x, s.levels[r]).unwrap();
                    let b = back.apply_in_strip(k, x, s.levels[r]).unwrap();
                    assert_eq!((a.x.to_bits(), a.y.to_bits()), (b.x.to_bits(), b.y.to_bits()));
                }
            }
        }
    }
}

#[test]
fn malformed_chart_text_is_rejected() {
    let (_, f) = &corpus()[1];
    let text = write_chart(&chart_for(f, 2, 3));
    assert!(read_chart("").is_err());
    assert!(read_chart("levelflow-chart 2\n").is_err());
    let cut: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
    assert!(read_chart(&cut).is_err());
    let broken = text.replacen("row ", "row nonsense ", 1);
    assert!(read_chart(&broken).is_err());
}

#[test]
fn strip_rows_sit_on_their_levels() {
    for (name, f) in corpus().into_iter().skip(1) {
        let chart = chart_for(&f, 4, 9);
        for s in &chart.strips {
            for r in 0..s.rows() {
                for p in s.row(r) {
                    let v = f.value(*p).unwrap();
                    assert!((v - s.levels[r]).abs() < 1e-2, "{name}: {v} vs {}", s.levels[r]);
                }
            }
        }
    }
}
