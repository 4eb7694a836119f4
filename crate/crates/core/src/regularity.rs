//! Hypothesis checks (connected proper level curves, regular family) and
//! cross-sections along which the field is strictly monotone.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::ScalarField;
use crate::geom::Point;
use crate::trace::{trace_level, Topology, TraceError};

/// Consecutive values closer than this (relative) do not count as a strict
/// increase.
pub const REL_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegularityError {
    #[error("gradient flow stalled at ({}, {}) with |grad f| = {gradient_norm:e}", point.x, point.y)]
    Stall { point: Point, gradient_norm: f64 },
    #[error("field is undefined at ({}, {})", point.x, point.y)]
    Undefined { point: Point },
    #[error("vertex ({}, {}) lies outside the window", point.x, point.y)]
    OutsideWindow { point: Point },
    #[error("arc needs at least 2 vertices")]
    TooShort,
    #[error("invalid span: {0}")]
    BadSpan(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Strict increase from `a` to `b`, with near-equal values counting as ties.
pub fn strictly_increasing(a: f64, b: f64) -> bool {
    b - a > REL_TIE * a.abs().max(b.abs())
}

/// A polyline along which `f` strictly increases from the first vertex to
/// the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub vertices: Vec<Point>,
    pub values: Vec<f64>,
    /// The flow left the window before reaching the requested span.
    pub truncated: bool,
}

impl CrossSection {
    /// `(f(p), f(q))` for the low and high endpoints.
    pub fn span(&self) -> (f64, f64) {
        (self.values[0], *self.values.last().expect("non-empty"))
    }

    pub fn covers(&self, lo: f64, hi: f64, tol: f64) -> bool {
        let (a, b) = self.span();
        a <= lo + tol && hi - tol <= b
    }

    /// Point where the polyline meets `level`: the segment bracketing the
    /// level is searched with the field until `|f - level| <= tol`.
    pub fn point_at_level(&self, field: &ScalarField, level: f64, tol: f64) -> Option<Point> {
        let (a, b) = self.span();
        if level < a - tol || level > b + tol {
            return None;
        }
        let k = self.values.partition_point(|&v| v < level);
        if k == 0 {
            return Some(self.vertices[0]);
        }
        if k == self.values.len() {
            return self.vertices.last().copied();
        }
        field.root_on_segment(self.vertices[k - 1], self.vertices[k], level, tol)
    }

    /// The part of the section between levels `lo` and `hi`; the new
    /// endpoints lie on those levels within `tol`.
    pub fn restrict(
        &self,
        field: &ScalarField,
        lo: f64,
        hi: f64,
        tol: f64,
    ) -> Option<CrossSection> {
        let (a, b) = self.span();
        if !(lo < hi) || lo < a - tol || hi > b + tol {
            return None;
        }
        let start = self.point_at_level(field, lo, tol)?;
        let end = self.point_at_level(field, hi, tol)?;
        let mut vertices = vec![start];
        let mut values = vec![field.value(start)?];
        for (p, &v) in self.vertices.iter().zip(&self.values) {
            if v > lo && v < hi && strictly_increasing(*values.last().expect("non-empty"), v) {
                vertices.push(*p);
                values.push(v);
            }
        }
        let end_value = field.value(end)?;
        while values.len() > 1 && !strictly_increasing(*values.last().expect("non-empty"), end_value) {
            vertices.pop();
            values.pop();
        }
        vertices.push(end);
        values.push(end_value);
        Some(CrossSection {
            vertices,
            values,
            truncated: false,
        })
    }
}

/// Parameters of the gradient-flow integrator.
#[derive(Debug, Clone, Copy)]
pub struct FlowParams {
    /// Target levels are considered reached within this distance.
    pub tol: f64,
    pub eps_grad: f64,
    /// Finite-difference step.
    pub h: f64,
}

impl FlowParams {
    pub fn for_field(field: &ScalarField, tol: f64) -> Self {
        FlowParams {
            tol,
            eps_grad: field.default_eps_grad(),
            h: field.default_fd_step(),
        }
    }
}

/// Cross-section through `p` obtained by integrating the normalized gradient
/// flow upward to `span.1` and downward to `span.0` (explicit Euler, half-cell
/// steps, halving on overshoot). Either end may stop early at the window
/// boundary, in which case the result is marked truncated.
pub fn build_cross_section(
    field: &ScalarField,
    p: Point,
    span: (f64, f64),
    params: FlowParams,
) -> Result<CrossSection, RegularityError> {
    let (lo, hi) = span;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(RegularityError::BadSpan(format!("({lo}, {hi})")));
    }
    let v0 = field
        .evaluate(p)
        .map_err(|_| RegularityError::OutsideWindow { point: p })?
        .ok_or(RegularityError::Undefined { point: p })?;
    let (down, down_cut) = flow(field, p, v0, -1.0, lo, params)?;
    let (up, up_cut) = flow(field, p, v0, 1.0, hi, params)?;
    let mut vertices: Vec<Point> = down.iter().rev().map(|(q, _)| *q).collect();
    let mut values: Vec<f64> = down.iter().rev().map(|(_, v)| *v).collect();
    vertices.push(p);
    values.push(v0);
    for (q, v) in up {
        vertices.push(q);
        values.push(v);
    }
    Ok(CrossSection {
        vertices,
        values,
        truncated: down_cut || up_cut,
    })
}

/// One direction of the flow. Returns the visited points (excluding the
/// start) and whether the window boundary cut it short.
fn flow(
    field: &ScalarField,
    start: Point,
    start_value: f64,
    dir: f64,
    target: f64,
    params: FlowParams,
) -> Result<(Vec<(Point, f64)>, bool), RegularityError> {
    let w = field.window();
    let base = 0.5 * w.dx().min(w.dy());
    let min_step = 1e-12 * base;
    let mut out = Vec::new();
    let (mut x, mut v) = (start, start_value);
    // Enough for several traversals of the window diagonal at base step.
    let max_steps = 64 * (w.nx + w.ny) + 10_000;
    for _ in 0..max_steps {
        if dir * (target - v) <= params.tol {
            return Ok((out, false));
        }
        let g = field
            .gradient_clamped(x, params.h)
            .ok_or(RegularityError::Undefined { point: x })?;
        let norm = g.norm();
        if !(norm >= params.eps_grad) {
            return Err(RegularityError::Stall {
                point: x,
                gradient_norm: norm,
            });
        }
        let d = g * (dir / norm);
        let limit = boundary_limit(w, x, d);
        // Clamped boundary points can sit an ulp inside the window.
        if limit <= 1e-9 * base {
            return Ok((out, true));
        }
        let mut step = base.min(limit);
        let mut tried_secant = false;
        let accepted = loop {
            if step < min_step {
                return Err(RegularityError::Stall {
                    point: x,
                    gradient_norm: norm,
                });
            }
            let hits_boundary = step >= limit;
            let y = if hits_boundary {
                clamp_into(w, x + d * limit)
            } else {
                x + d * step
            };
            match field.value(y) {
                Some(val) if strictly_increasing(dir * v, dir * val) => {
                    if dir * (val - target) > params.tol {
                        // Overshoot: aim at the target once by secant, then halve.
                        if !tried_secant {
                            tried_secant = true;
                            let frac = (target - v) / (val - v);
                            step *= frac.clamp(0.0, 1.0);
                        } else {
                            step *= 0.5;
                        }
                        continue;
                    }
                    break (y, val, hits_boundary);
                }
                _ => step *= 0.5,
            }
        };
        let (y, val, hits_boundary) = accepted;
        out.push((y, val));
        x = y;
        v = val;
        if hits_boundary {
            return Ok((out, dir * (target - v) > params.tol));
        }
    }
    Err(RegularityError::Stall {
        point: x,
        gradient_norm: field.gradient_clamped(x, params.h).map_or(0.0, |g| g.norm()),
    })
}

/// Largest `t >= 0` with `x + t d` inside the window.
fn boundary_limit(w: &crate::field::Window, x: Point, d: Point) -> f64 {
    let mut t = f64::INFINITY;
    if d.x > 0.0 {
        t = t.min((w.xmax - x.x) / d.x);
    } else if d.x < 0.0 {
        t = t.min((w.xmin - x.x) / d.x);
    }
    if d.y > 0.0 {
        t = t.min((w.ymax - x.y) / d.y);
    } else if d.y < 0.0 {
        t = t.min((w.ymin - x.y) / d.y);
    }
    t.max(0.0)
}

fn clamp_into(w: &crate::field::Window, p: Point) -> Point {
    Point::new(p.x.clamp(w.xmin, w.xmax), p.y.clamp(w.ymin, w.ymax))
}

/// Whether `f` is strictly monotone (either direction) along the vertices.
pub fn check_monotone(field: &ScalarField, arc: &[Point]) -> Result<bool, RegularityError> {
    if arc.len() < 2 {
        return Err(RegularityError::TooShort);
    }
    let mut values = Vec::with_capacity(arc.len());
    for &p in arc {
        let v = field
            .evaluate(p)
            .map_err(|_| RegularityError::OutsideWindow { point: p })?
            .ok_or(RegularityError::Undefined { point: p })?;
        if field.is_masked_at(p) {
            return Err(RegularityError::Undefined { point: p });
        }
        values.push(v);
    }
    let up = values.windows(2).all(|w| strictly_increasing(w[0], w[1]));
    let down = values.windows(2).all(|w| strictly_increasing(-w[0], -w[1]));
    Ok(up || down)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Equivalent,
    NotEquivalent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelFailure {
    /// More than one component at the level.
    SplitLevel,
    /// A single component that is not a proper arc.
    NotProperArc,
    /// No component at a level inside the sampled range.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelWitness {
    pub kind: LevelFailure,
    pub level: f64,
    pub component_count: usize,
    pub component_ids: Vec<usize>,
    pub topologies: Vec<Topology>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RangeSource {
    /// Values along the cross-section through the window centre.
    Transversal,
    /// Values over all grid nodes.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition1Report {
    pub pass: bool,
    pub levels: Vec<f64>,
    pub range: Option<(f64, f64)>,
    pub range_source: RangeSource,
    pub failing_levels: usize,
    pub witness: Option<LevelWitness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegularityFailure {
    /// `|grad f|` below threshold at a node, or at a critical point located
    /// inside a failing patch.
    VanishingGradient,
    /// The local straightening test failed without a located critical point.
    NonMonotonePatch,
    /// The gradient or patch samples are undefined.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityWitness {
    pub kind: RegularityFailure,
    pub node: (usize, usize),
    pub point: Point,
    pub gradient_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition2Report {
    pub pass: bool,
    pub eps_grad: f64,
    pub h: f64,
    pub nodes_checked: usize,
    pub failing_nodes: usize,
    pub witness: Option<RegularityWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition")]
pub enum Witness {
    #[serde(rename = "condition1")]
    Level(LevelWitness),
    #[serde(rename = "condition2")]
    Regularity(RegularityWitness),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub expression: String,
    pub condition1: Condition1Report,
    pub condition2: Condition2Report,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
}

/// At most this many witnesses per condition go into the report list.
pub const MAX_REPORTED_WITNESSES: usize = 16;

/// Range of levels to test for connectedness, plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPlan {
    pub range: Option<(f64, f64)>,
    pub source: RangeSource,
    pub levels: Vec<f64>,
    /// The centre cross-section, when it could be built.
    pub spine: Option<CrossSection>,
}

/// Chooses `count` test levels.
///
/// Levels far from the window centre are cut by the window even when their
/// curves are connected in the plane, so the preferred range is the value
/// span of the maximal cross-section through the window centre. If that
/// cross-section cannot be built (the centre is critical or undefined), the
/// range of all node samples is used instead.
pub fn plan_levels(field: &ScalarField, count: usize, params: FlowParams) -> LevelPlan {
    let spine = build_cross_section(
        field,
        field.window().center(),
        (f64::NEG_INFINITY, f64::INFINITY),
        params,
    )
    .ok()
    .filter(|s| s.vertices.len() >= 2 && strictly_increasing(s.span().0, s.span().1));
    let (range, source) = match &spine {
        Some(s) => (Some(s.span()), RangeSource::Transversal),
        None => (field.sampled_range(), RangeSource::Sampled),
    };
    let levels = match range {
        Some((lo, hi)) if hi > lo && count > 0 => (0..count)
            .map(|k| lo + (k as f64 + 0.5) * (hi - lo) / count as f64)
            .collect(),
        _ => Vec::new(),
    };
    LevelPlan {
        range,
        source,
        levels,
        spine,
    }
}

/// Condition (1): every tested level is a single proper arc.
pub fn check_condition1(
    field: &ScalarField,
    levels: &[f64],
    tol: f64,
) -> Result<(Condition1Report, Vec<LevelWitness>), RegularityError> {
    let per_level = levels
        .par_iter()
        .map(|&level| trace_level(field, level, tol).map(|c| (level, c)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut failures = Vec::new();
    for (level, comps) in per_level {
        let kind = match comps.len() {
            0 => Some(LevelFailure::Empty),
            1 if comps[0].topology == Topology::ProperArc => None,
            1 => Some(LevelFailure::NotProperArc),
            _ => Some(LevelFailure::SplitLevel),
        };
        if let Some(kind) = kind {
            failures.push(LevelWitness {
                kind,
                level,
                component_count: comps.len(),
                component_ids: comps.iter().map(|c| c.id).collect(),
                topologies: comps.iter().map(|c| c.topology).collect(),
            });
        }
    }
    let report = Condition1Report {
        pass: failures.is_empty() && !levels.is_empty(),
        levels: levels.to_vec(),
        range: None,
        range_source: RangeSource::Sampled,
        failing_levels: failures.len(),
        witness: failures.first().cloned(),
    };
    Ok((report, failures))
}

/// Condition (2): nonvanishing gradient at every usable node, and a local
/// straightening test on the 3×3 patch around each interior node: `f` must
/// increase strictly along three parallel segments in the gradient direction
/// (through the node and offset to either side).
pub fn check_condition2(
    field: &ScalarField,
    h: f64,
    eps_grad: f64,
) -> (Condition2Report, Vec<RegularityWitness>) {
    let w = *field.window();
    let rows: Vec<(usize, Vec<RegularityWitness>)> = (0..w.ny)
        .into_par_iter()
        .map(|j| {
            let mut checked = 0;
            let mut found = Vec::new();
            for i in 0..w.nx {
                if touches_masked_cell(field, i, j) {
                    continue;
                }
                checked += 1;
                if let Some(wit) = check_node(field, i, j, h, eps_grad) {
                    found.push(wit);
                }
            }
            (checked, found)
        })
        .collect();
    let nodes_checked = rows.iter().map(|r| r.0).sum();
    let failures: Vec<RegularityWitness> = rows.into_iter().flat_map(|r| r.1).collect();
    let witness = failures
        .iter()
        .find(|f| f.kind == RegularityFailure::VanishingGradient)
        .or_else(|| failures.first())
        .cloned();
    let report = Condition2Report {
        pass: failures.is_empty() && nodes_checked > 0,
        eps_grad,
        h,
        nodes_checked,
        failing_nodes: failures.len(),
        witness,
    };
    (report, failures)
}

fn touches_masked_cell(field: &ScalarField, i: usize, j: usize) -> bool {
    let w = field.window();
    let is = [i.checked_sub(1), (i < w.nx - 1).then_some(i)];
    let js = [j.checked_sub(1), (j < w.ny - 1).then_some(j)];
    is.iter()
        .flatten()
        .any(|&a| js.iter().flatten().any(|&b| field.is_cell_masked(a, b)))
}

fn check_node(
    field: &ScalarField,
    i: usize,
    j: usize,
    h: f64,
    eps_grad: f64,
) -> Option<RegularityWitness> {
    let w = field.window();
    let p = w.node(i, j);
    let witness = |kind, point, gradient_norm| {
        Some(RegularityWitness {
            kind,
            node: (i, j),
            point,
            gradient_norm,
        })
    };
    let Some(g) = field.gradient_clamped(p, h) else {
        return witness(RegularityFailure::Undefined, p, None);
    };
    let norm = g.norm();
    if !(norm >= eps_grad) {
        return witness(RegularityFailure::VanishingGradient, p, Some(norm));
    }
    let interior = i > 0 && j > 0 && i + 1 < w.nx && j + 1 < w.ny;
    if !interior {
        return None;
    }
    match patch_is_monotone(field, p, g * (1.0 / norm)) {
        Some(true) => None,
        Some(false) => {
            let half = Point::new(w.dx(), w.dy());
            match locate_critical_point(field, p, half, h, eps_grad) {
                Some((q, gn)) => witness(RegularityFailure::VanishingGradient, q, Some(gn)),
                None => witness(RegularityFailure::NonMonotonePatch, p, Some(norm)),
            }
        }
        None => witness(RegularityFailure::Undefined, p, Some(norm)),
    }
}

/// Samples three parallel segments in direction `n` through and beside `p`,
/// all inside the node's 3×3 patch. `None` if a sample is undefined.
fn patch_is_monotone(field: &ScalarField, p: Point, n: Point) -> Option<bool> {
    let w = field.window();
    let a = w.dx().min(w.dy()) / std::f64::consts::SQRT_2;
    let tangent = n.perp();
    for s in [-1.0, 0.0, 1.0] {
        let mut prev: Option<f64> = None;
        for t in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let q = p + tangent * (s * a) + n * (t * a);
            let v = field.value(q)?;
            if let Some(u) = prev {
                if !strictly_increasing(u, v) {
                    return Some(false);
                }
            }
            prev = Some(v);
        }
    }
    Some(true)
}

/// Newton iteration on `grad f = 0` restricted to the box `p ± half`.
/// Returns the point and its gradient norm when the norm drops below
/// `eps_grad`.
fn locate_critical_point(
    field: &ScalarField,
    p: Point,
    half: Point,
    h: f64,
    eps_grad: f64,
) -> Option<(Point, f64)> {
    let mut q = p;
    for _ in 0..30 {
        let g = field.gradient_clamped(q, h)?;
        if g.norm() < eps_grad {
            return Some((q, g.norm()));
        }
        let gxp = field.gradient_clamped(q + Point::new(h, 0.0), h)?;
        let gxm = field.gradient_clamped(q - Point::new(h, 0.0), h)?;
        let gyp = field.gradient_clamped(q + Point::new(0.0, h), h)?;
        let gym = field.gradient_clamped(q - Point::new(0.0, h), h)?;
        let hxx = (gxp.x - gxm.x) / (2.0 * h);
        let hxy = 0.5 * ((gxp.y - gxm.y) + (gyp.x - gym.x)) / (2.0 * h);
        let hyy = (gyp.y - gym.y) / (2.0 * h);
        let det = hxx * hyy - hxy * hxy;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dx = -(hyy * g.x - hxy * g.y) / det;
        let dy = -(-hxy * g.x + hxx * g.y) / det;
        let next = Point::new(
            (q.x + dx).clamp(p.x - half.x, p.x + half.x),
            (q.y + dy).clamp(p.y - half.y, p.y + half.y),
        );
        if next == q {
            return None;
        }
        q = next;
    }
    None
}

/// Settings for [`run_checks`].
#[derive(Debug, Clone, Copy)]
pub struct CheckSettings {
    pub levels: usize,
    pub trace_tol: f64,
    pub h: f64,
    pub eps_grad: f64,
}

impl CheckSettings {
    pub fn for_field(field: &ScalarField, levels: usize) -> Self {
        CheckSettings {
            levels,
            trace_tol: default_trace_tol(field),
            h: field.default_fd_step(),
            eps_grad: field.default_eps_grad(),
        }
    }

    pub fn flow(&self) -> FlowParams {
        FlowParams {
            tol: self.trace_tol,
            eps_grad: self.eps_grad,
            h: self.h,
        }
    }
}

/// Default tracing tolerance: `1e-10` relative to the sampled value span.
pub fn default_trace_tol(field: &ScalarField) -> f64 {
    let span = field.sampled_range().map_or(1.0, |(lo, hi)| hi - lo);
    1e-10 * span.max(1e-3)
}

/// Runs both hypothesis checks and assembles the report.
pub fn run_checks(
    field: &ScalarField,
    settings: &CheckSettings,
) -> Result<(HypothesisReport, LevelPlan), RegularityError> {
    let plan = plan_levels(field, settings.levels, settings.flow());
    let (mut c1, level_failures) = check_condition1(field, &plan.levels, settings.trace_tol)?;
    c1.range = plan.range;
    c1.range_source = plan.source;
    let (c2, reg_failures) = check_condition2(field, settings.h, settings.eps_grad);

    let verdict = if plan.levels.is_empty() || c2.nodes_checked == 0 {
        Verdict::Inconclusive
    } else if c1.pass && c2.pass {
        Verdict::Equivalent
    } else if !c1.pass {
        Verdict::NotEquivalent
    } else if reg_failures
        .iter()
        .all(|f| f.kind == RegularityFailure::Undefined)
    {
        Verdict::Inconclusive
    } else {
        Verdict::NotEquivalent
    };

    let mut witnesses: Vec<Witness> = level_failures
        .into_iter()
        .take(MAX_REPORTED_WITNESSES)
        .map(Witness::Level)
        .collect();
    let mut reg = reg_failures;
    // Located critical points first.
    reg.sort_by_key(|w| w.kind != RegularityFailure::VanishingGradient);
    witnesses.extend(
        reg.into_iter()
            .take(MAX_REPORTED_WITNESSES)
            .map(Witness::Regularity),
    );
    let report = HypothesisReport {
        expression: field.source().to_string(),
        condition1: c1,
        condition2: c2,
        verdict,
        witnesses,
    };
    Ok((report, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Window;

    fn field(expr: &str, a: f64, b: f64, c: f64, d: f64, n: usize) -> ScalarField {
        ScalarField::parse(expr, Window::new(a, b, c, d, n, n).unwrap()).unwrap()
    }

    fn params(f: &ScalarField) -> FlowParams {
        FlowParams::for_field(f, 1e-10)
    }

    #[test]
    fn vertical_cross_section_for_projection() {
        let f = field("y", -1.0, 1.0, -1.0, 1.0, 33);
        let cs = build_cross_section(&f, Point::new(0.0, 0.0), (-1.0, 1.0), params(&f)).unwrap();
        assert!(cs.vertices.iter().all(|p| p.x.abs() < 1e-12));
        let (lo, hi) = cs.span();
        assert!((lo + 1.0).abs() <= 1e-10 && (hi - 1.0).abs() <= 1e-10);
        assert!(check_monotone(&f, &cs.vertices).unwrap());
    }

    #[test]
    fn parabola_cross_section_values_are_monotone() {
        let f = field("y - x^2", -2.0, 2.0, -2.0, 2.0, 65);
        let cs = build_cross_section(&f, Point::new(1.0, 1.0), (-1.0, 1.0), params(&f)).unwrap();
        // Independent re-evaluation along the returned polyline.
        let vals: Vec<f64> = cs.vertices.iter().map(|p| f.value(*p).unwrap()).collect();
        assert!((vals[0] + 1.0).abs() <= 1e-9);
        assert!((vals.last().unwrap() - 1.0).abs() <= 1e-9);
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        assert!(!cs.truncated);
    }

    #[test]
    fn flow_stalls_at_minimum() {
        let f = field("x^2 + y^2", -2.0, 2.0, -2.0, 2.0, 65);
        match build_cross_section(&f, Point::new(1.0, 0.0), (-1.0, 2.0), params(&f)) {
            Err(RegularityError::Stall { point, .. }) => assert!(point.norm() < 1e-3),
            other => panic!("expected stall, got {other:?}"),
        }
    }

    #[test]
    fn flow_truncates_at_window() {
        let f = field("y", -1.0, 1.0, -1.0, 1.0, 17);
        let cs = build_cross_section(&f, Point::new(0.2, 0.0), (-5.0, 5.0), params(&f)).unwrap();
        assert!(cs.truncated);
        assert_eq!(cs.span(), (-1.0, 1.0));
    }

    #[test]
    fn monotone_examples() {
        let f = field("y", -1.0, 1.0, -1.0, 1.0, 17);
        let vertical: Vec<Point> = (0..5).map(|k| Point::new(0.0, -0.5 + 0.25 * k as f64)).collect();
        let horizontal: Vec<Point> = (0..5).map(|k| Point::new(-0.5 + 0.25 * k as f64, 0.0)).collect();
        assert!(check_monotone(&f, &vertical).unwrap());
        assert!(!check_monotone(&f, &horizontal).unwrap());
        assert!(matches!(
            check_monotone(&f, &[Point::new(0.0, 0.0)]),
            Err(RegularityError::TooShort)
        ));
        assert!(matches!(
            check_monotone(&f, &[Point::new(0.0, 0.0), Point::new(3.0, 0.0)]),
            Err(RegularityError::OutsideWindow { .. })
        ));
    }

    #[test]
    fn condition1_examples() {
        let g = field("y", -1.0, 1.0, -1.0, 1.0, 65);
        let plan = plan_levels(&g, 64, params(&g));
        assert_eq!(plan.source, RangeSource::Transversal);
        let (r, _) = check_condition1(&g, &plan.levels, 1e-10).unwrap();
        assert!(r.pass);

        let sq = field("x^2", -2.0, 2.0, -2.0, 2.0, 65);
        let (r, _) = check_condition1(&sq, &[1.0], 1e-10).unwrap();
        assert!(!r.pass);
        let wit = r.witness.unwrap();
        assert_eq!(wit.level, 1.0);
        assert_eq!(wit.component_count, 2);
        assert_eq!(wit.kind, LevelFailure::SplitLevel);
    }

    #[test]
    fn condition2_examples() {
        let g = field("y", -1.0, 1.0, -1.0, 1.0, 33);
        let (r, _) = check_condition2(&g, g.default_fd_step(), g.default_eps_grad());
        assert!(r.pass);

        let saddle = field("x^2 - y^2", -1.0, 1.0, -1.0, 1.0, 64);
        let (r, _) = check_condition2(&saddle, saddle.default_fd_step(), saddle.default_eps_grad());
        assert!(!r.pass);
        let wit = r.witness.unwrap();
        assert_eq!(wit.kind, RegularityFailure::VanishingGradient);
        assert!(wit.point.norm() <= 2.0 * saddle.window().cell_size());

        let parabola = field("y - x^2", -2.0, 2.0, -2.0, 2.0, 65);
        let (r, _) = check_condition2(&parabola, parabola.default_fd_step(), parabola.default_eps_grad());
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn verdicts() {
        let g = field("y", -1.0, 1.0, -1.0, 1.0, 65);
        let (r, _) = run_checks(&g, &CheckSettings::for_field(&g, 32)).unwrap();
        assert_eq!(r.verdict, Verdict::Equivalent);
        assert!(r.witnesses.is_empty());

        let bowl = field("x^2 + y^2", -1.0, 1.0, -1.0, 1.0, 65);
        let (r, _) = run_checks(&bowl, &CheckSettings::for_field(&bowl, 32)).unwrap();
        assert_eq!(r.verdict, Verdict::NotEquivalent);
        assert!(r
            .condition1
            .witness
            .as_ref()
            .unwrap()
            .topologies
            .contains(&Topology::ClosedLoop));
    }

    #[test]
    fn restrict_keeps_endpoints_on_levels() {
        let f = field("y - x^2", -2.0, 2.0, -2.0, 2.0, 65);
        let cs = build_cross_section(&f, Point::new(0.3, 0.0), (-1.5, 1.5), params(&f)).unwrap();
        let part = cs.restrict(&f, -0.5, 0.25, 1e-12).unwrap();
        let (lo, hi) = part.span();
        assert!((lo + 0.5).abs() <= 1e-12 && (hi - 0.25).abs() <= 1e-12);
        assert!(part.values.windows(2).all(|w| strictly_increasing(w[0], w[1])));
        assert!(check_monotone(&f, &part.vertices).unwrap());
        assert!(cs.restrict(&f, -3.0, 0.0, 1e-12).is_none());
    }
}
