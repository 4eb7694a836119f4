//! Numerical test of whether a planar scalar field is topologically
//! equivalent to the projection `(x, y) -> y` on a bounded window, and
//! construction of the straightening chart `phi` with `f(phi(x, y)) = y`.

pub mod chart_io;
pub mod cli;
pub mod expr;
pub mod field;
pub mod geom;
pub mod regularity;
pub mod render;
pub mod straighten;
pub mod trace;

pub use expr::{parse_expression, Expression, ParseError};
pub use field::{FieldError, ScalarField, Window};
pub use geom::Point;
pub use trace::{
    classify_component, separation_relation, side_of_curve, trace_level, LevelComponent,
    LevelFamily, Side, Topology, TraceError,
};
pub use regularity::{
    build_cross_section, check_condition1, check_condition2, check_monotone, run_checks,
    CheckSettings, CrossSection, HypothesisReport, RegularityError, Verdict,
};
pub use straighten::{
    chart_apply, chart_invert, choose_level_sequence, compute_range, glue_strips,
    straighten_strip, verify_straightening, GlobalChart, LevelSequence, RangeInterval,
    StraightenError, StripChart,
};
