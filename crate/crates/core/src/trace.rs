//! Level-set extraction by marching squares, topology classification, and the
//! side/separation tests for proper arcs.
//!
//! Segments are oriented so that the region where `f >= level` lies on their
//! left. Linking happens by grid-edge identity, so every traced polyline is
//! consistently oriented: ascending values are always to the left of travel.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{ScalarField, Window};
use crate::geom::{distance_to_polyline, point_in_polygon, self_intersects, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("level must be finite, got {0}")]
    NonFiniteLevel(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("component {id} at level {level} is {topology}, expected a proper arc")]
    NotProperArc {
        id: usize,
        level: f64,
        topology: Topology,
    },
    #[error("components must be pairwise distinct")]
    NotDistinct,
    #[error("every vertex of component {id} lies on the separating curve")]
    NoRepresentative { id: usize },
    #[error("malformed component record: {0}")]
    Record(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    ProperArc,
    ClosedLoop,
    Degenerate,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::ProperArc => "ProperArc",
            Topology::ClosedLoop => "ClosedLoop",
            Topology::Degenerate => "Degenerate",
        })
    }
}

impl FromStr for Topology {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ProperArc" => Ok(Topology::ProperArc),
            "ClosedLoop" => Ok(Topology::ClosedLoop),
            "Degenerate" => Ok(Topology::Degenerate),
            other => Err(TraceError::Record(format!("unknown topology `{other}`"))),
        }
    }
}

/// One connected component of a level set inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelComponent {
    pub id: usize,
    pub level: f64,
    pub vertices: Vec<Point>,
    pub topology: Topology,
    /// The component ended against a masked cell or an edge where the
    /// crossing could not be resolved to tolerance.
    pub touches_mask: bool,
}

impl LevelComponent {
    pub fn is_proper_arc(&self) -> bool {
        self.topology == Topology::ProperArc
    }

    pub fn is_closed(&self) -> bool {
        self.vertices.len() >= 2 && self.vertices.first() == self.vertices.last()
    }

    /// `level topology n x1 y1 ... xn yn`
    pub fn to_record(&self) -> String {
        let mut s = format!(
            "{:.16e} {} {}",
            self.level,
            self.topology,
            self.vertices.len()
        );
        for v in &self.vertices {
            s.push_str(&format!(" {:.16e} {:.16e}", v.x, v.y));
        }
        s
    }

    pub fn from_record(line: &str, id: usize) -> Result<Self, TraceError> {
        let mut it = line.split_whitespace();
        let mut next = |what: &str| {
            it.next()
                .ok_or_else(|| TraceError::Record(format!("missing {what}")))
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| TraceError::Record(format!("bad number `{s}`")))
        };
        let level = num(next("level")?)?;
        let topology: Topology = next("topology")?.parse()?;
        let n: usize = next("count")?
            .parse()
            .map_err(|_| TraceError::Record("bad vertex count".into()))?;
        let mut vertices = Vec::with_capacity(n);
        for _ in 0..n {
            let x = num(next("x")?)?;
            let y = num(next("y")?)?;
            vertices.push(Point::new(x, y));
        }
        if it.next().is_some() {
            return Err(TraceError::Record("trailing fields".into()));
        }
        Ok(LevelComponent {
            id,
            level,
            vertices,
            topology,
            touches_mask: false,
        })
    }
}

/// Traced components for a list of levels, in ascending level order.
#[derive(Debug, Clone, Default)]
pub struct LevelFamily {
    pub entries: Vec<(f64, Vec<LevelComponent>)>,
}

impl LevelFamily {
    pub fn trace(field: &ScalarField, levels: &[f64], tol: f64) -> Result<Self, TraceError> {
        let mut entries = levels
            .par_iter()
            .map(|&level| trace_level(field, level, tol).map(|c| (level, c)))
            .collect::<Result<Vec<_>, _>>()?;
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(LevelFamily { entries })
    }

    pub fn components(&self, level: f64) -> Option<&[LevelComponent]> {
        self.entries
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, c)| c.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    On,
}

struct EdgeIndex {
    nx: usize,
    ny: usize,
    horizontal: usize,
}

impl EdgeIndex {
    fn new(w: &Window) -> Self {
        EdgeIndex {
            nx: w.nx,
            ny: w.ny,
            horizontal: (w.nx - 1) * w.ny,
        }
    }

    fn h(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }

    fn v(&self, i: usize, j: usize) -> usize {
        self.horizontal + j * self.nx + i
    }

    /// Grid nodes at the two ends of an edge.
    fn nodes(&self, e: usize) -> ((usize, usize), (usize, usize)) {
        if e < self.horizontal {
            let (j, i) = (e / (self.nx - 1), e % (self.nx - 1));
            ((i, j), (i + 1, j))
        } else {
            let k = e - self.horizontal;
            let (j, i) = (k / self.nx, k % self.nx);
            ((i, j), (i, j + 1))
        }
    }

    fn on_boundary(&self, e: usize) -> bool {
        let ((i, j), _) = self.nodes(e);
        if e < self.horizontal {
            j == 0 || j == self.ny - 1
        } else {
            i == 0 || i == self.nx - 1
        }
    }
}

/// All connected components of `{f = level}` inside the window.
pub fn trace_level(
    field: &ScalarField,
    level: f64,
    tol: f64,
) -> Result<Vec<LevelComponent>, TraceError> {
    if !level.is_finite() {
        return Err(TraceError::NonFiniteLevel(level));
    }
    if !(tol > 0.0) {
        return Err(TraceError::BadTolerance(tol));
    }
    let w = *field.window();
    let index = EdgeIndex::new(&w);
    let above = |i: usize, j: usize| field.node_value(i, j) >= level;

    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut has_prev: HashSet<usize> = HashSet::new();
    let mut link = |from: usize, to: usize| {
        next.entry(from).or_insert(to);
        has_prev.insert(to);
    };

    for j in 0..w.ny - 1 {
        for i in 0..w.nx - 1 {
            if field.is_cell_masked(i, j) {
                continue;
            }
            let state = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
            let edges = [
                index.h(i, j),
                index.v(i + 1, j),
                index.h(i, j + 1),
                index.v(i, j),
            ];
            let crossing: Vec<usize> = (0..4).filter(|&k| state[k] != state[(k + 1) % 4]).collect();
            let pairs: Vec<(usize, usize)> = match crossing.len() {
                2 => vec![(crossing[0], crossing[1])],
                4 => {
                    let center = Point::new(
                        0.5 * (w.node_x(i) + w.node_x(i + 1)),
                        0.5 * (w.node_y(j) + w.node_y(j + 1)),
                    );
                    let center_value = field.value(center).unwrap_or_else(|| {
                        0.25 * (0..4)
                            .map(|k| {
                                let (a, b) = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)][k];
                                field.node_value(a, b)
                            })
                            .sum::<f64>()
                    });
                    if (center_value >= level) == state[0] {
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![(0, 3), (1, 2)]
                    }
                }
                _ => Vec::new(),
            };
            for (a, b) in pairs {
                if state[(a + 1) % 4] {
                    link(edges[b], edges[a]);
                } else {
                    link(edges[a], edges[b]);
                }
            }
        }
    }

    let mut crossings: HashMap<usize, (Point, bool)> = HashMap::new();
    let mut crossing_at = |e: usize| -> (Point, bool) {
        *crossings
            .entry(e)
            .or_insert_with(|| edge_crossing(field, &index, e, level, tol))
    };

    let mut starts: Vec<usize> = next.keys().copied().filter(|e| !has_prev.contains(e)).collect();
    starts.sort_unstable();
    let mut visited: HashSet<usize> = HashSet::new();
    let mut chains: Vec<(Vec<usize>, bool)> = Vec::new();
    for s in starts {
        let mut chain = vec![s];
        visited.insert(s);
        let mut cur = s;
        while let Some(&n) = next.get(&cur) {
            if !visited.insert(n) {
                break;
            }
            chain.push(n);
            cur = n;
        }
        chains.push((chain, false));
    }
    let mut rest: Vec<usize> = next.keys().copied().filter(|e| !visited.contains(e)).collect();
    rest.sort_unstable();
    for s in rest {
        if visited.contains(&s) {
            continue;
        }
        let mut chain = vec![s];
        visited.insert(s);
        let mut cur = s;
        while let Some(&n) = next.get(&cur) {
            if n == s {
                break;
            }
            if !visited.insert(n) {
                break;
            }
            chain.push(n);
            cur = n;
        }
        chains.push((chain, true));
    }

    let merge = 1e-9 * w.cell_size();
    let mut components = Vec::with_capacity(chains.len());
    for (id, (chain, closed)) in chains.into_iter().enumerate() {
        let mut touches_mask = false;
        if !closed {
            let first = chain[0];
            let last = *chain.last().expect("non-empty chain");
            touches_mask |= !index.on_boundary(first) || !index.on_boundary(last);
        }
        let mut vertices: Vec<Point> = Vec::with_capacity(chain.len() + 1);
        for &e in &chain {
            let (p, ok) = crossing_at(e);
            touches_mask |= !ok;
            // Crossings on the edges around a node that lies on the level
            // coincide up to the refinement tolerance; keep one of them.
            if vertices.last().map_or(true, |q| q.dist(p) > merge) {
                vertices.push(p);
            }
        }
        if closed && vertices.len() > 1 {
            if vertices.first() == vertices.last() {
                vertices.pop();
            }
            let first = vertices[0];
            vertices.push(first);
        }
        let mut component = LevelComponent {
            id,
            level,
            vertices,
            topology: Topology::Degenerate,
            touches_mask,
        };
        component.topology = if touches_mask {
            Topology::Degenerate
        } else {
            classify_component(&component, &w)
        };
        components.push(component);
    }
    Ok(components)
}

/// Root of `f - level` on a grid edge: linear interpolation, then Illinois
/// iterations until the residual is within `tol`. The flag is false when the
/// residual could not be brought within tolerance.
fn edge_crossing(
    field: &ScalarField,
    index: &EdgeIndex,
    e: usize,
    level: f64,
    tol: f64,
) -> (Point, bool) {
    let w = field.window();
    let ((ia, ja), (ib, jb)) = index.nodes(e);
    let (pa, pb) = (w.node(ia, ja), w.node(ib, jb));
    let (mut ta, mut fa) = (0.0, field.node_value(ia, ja) - level);
    let (mut tb, mut fb) = (1.0, field.node_value(ib, jb) - level);
    if fa == 0.0 {
        return (pa, true);
    }
    if fb == 0.0 {
        return (pb, true);
    }
    let mut t = ta - fa * (tb - ta) / (fb - fa);
    let mut side = 0i8;
    for _ in 0..100 {
        let p = pa.lerp(pb, t);
        let Some(v) = field.value(p) else {
            return (p, false);
        };
        let r = v - level;
        if r.abs() <= tol {
            return (p, true);
        }
        if (r < 0.0) == (fa < 0.0) {
            ta = t;
            fa = r;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            tb = t;
            fb = r;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        let next = ta - fa * (tb - ta) / (fb - fa);
        t = if next > ta.min(tb) && next < ta.max(tb) {
            next
        } else {
            0.5 * (ta + tb)
        };
        if (tb - ta).abs() < 1e-15 {
            break;
        }
    }
    let p = pa.lerp(pb, t);
    let ok = field.value(p).is_some_and(|v| (v - level).abs() <= tol);
    (p, ok)
}

/// Topology of a traced polyline relative to the window: closed polylines
/// are loops, open simple polylines with both ends on the window boundary
/// (within one cell) are proper arcs, anything else is degenerate.
pub fn classify_component(c: &LevelComponent, w: &Window) -> Topology {
    let distinct = c
        .vertices
        .windows(2)
        .filter(|p| p[0] != p[1])
        .count();
    if c.vertices.len() < 2 || distinct == 0 {
        return Topology::Degenerate;
    }
    if c.is_closed() {
        return if c.vertices.len() >= 4 {
            Topology::ClosedLoop
        } else {
            Topology::Degenerate
        };
    }
    let reach = w.cell_size();
    let first = c.vertices[0];
    let last = *c.vertices.last().expect("non-empty");
    let on_boundary = |p: Point| w.boundary_distance(p) <= reach;
    if on_boundary(first) && on_boundary(last) && !self_intersects(&c.vertices) {
        Topology::ProperArc
    } else {
        Topology::Degenerate
    }
}

/// Which complementary region of `window \ c` contains `p`. Left is the side
/// to the left of the arc's travel direction (where `f` exceeds the level).
pub fn side_of_curve(
    c: &LevelComponent,
    window: &Window,
    p: Point,
    tol: f64,
) -> Result<Side, TraceError> {
    if !c.is_proper_arc() {
        return Err(TraceError::NotProperArc {
            id: c.id,
            level: c.level,
            topology: c.topology,
        });
    }
    if distance_to_polyline(&c.vertices, p) <= tol {
        return Ok(Side::On);
    }
    let ring = left_region(c, window);
    Ok(if point_in_polygon(&ring, p) {
        Side::Left
    } else {
        Side::Right
    })
}

/// Boundary of the left region: the arc followed by the counterclockwise
/// boundary walk from its end back to its start.
fn left_region(c: &LevelComponent, w: &Window) -> Vec<Point> {
    let start = c.vertices[0];
    let end = *c.vertices.last().expect("non-empty");
    let perimeter = w.perimeter();
    let t_end = w.boundary_parameter(end);
    let t_start = w.boundary_parameter(start);
    let mut span = t_start - t_end;
    if span < 0.0 {
        span += perimeter;
    }
    let mut corners: Vec<(f64, Point)> = w
        .corners()
        .iter()
        .filter_map(|&(t, p)| {
            let mut ahead = t - t_end;
            if ahead < 0.0 {
                ahead += perimeter;
            }
            (ahead > 0.0 && ahead < span).then_some((ahead, p))
        })
        .collect();
    corners.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ring = c.vertices.clone();
    ring.extend(corners.into_iter().map(|(_, p)| p));
    ring
}

/// `K | C | L`: whether `k` and `l` lie in different components of
/// `window \ c`.
pub fn separation_relation(
    k: &LevelComponent,
    c: &LevelComponent,
    l: &LevelComponent,
    window: &Window,
) -> Result<bool, TraceError> {
    for comp in [k, c, l] {
        if !comp.is_proper_arc() {
            return Err(TraceError::NotProperArc {
                id: comp.id,
                level: comp.level,
                topology: comp.topology,
            });
        }
    }
    let same = |a: &LevelComponent, b: &LevelComponent| a.level == b.level && a.id == b.id;
    if same(k, c) || same(c, l) || same(k, l) {
        return Err(TraceError::NotDistinct);
    }
    let tol = 1e-9 * window.diagonal();
    let side_k = representative_side(k, c, window, tol)?;
    let side_l = representative_side(l, c, window, tol)?;
    Ok(side_k != side_l)
}

fn representative_side(
    comp: &LevelComponent,
    c: &LevelComponent,
    window: &Window,
    tol: f64,
) -> Result<Side, TraceError> {
    let n = comp.vertices.len();
    let mid = n / 2;
    // Walk outward from the middle vertex until one is off the curve.
    for step in 0..n {
        let candidates = [mid.checked_add(step), mid.checked_sub(step)];
        for idx in candidates.into_iter().flatten().filter(|&i| i < n) {
            let side = side_of_curve(c, window, comp.vertices[idx], tol)?;
            if side != Side::On {
                return Ok(side);
            }
        }
    }
    Err(TraceError::NoRepresentative { id: comp.id })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(expr: &str, a: f64, b: f64, c: f64, d: f64, n: usize) -> ScalarField {
        ScalarField::parse(expr, Window::new(a, b, c, d, n, n).unwrap()).unwrap()
    }

    #[test]
    fn projection_level_is_one_horizontal_arc() {
        let f = field("y", -1.0, 1.0, -1.0, 1.0, 33);
        let comps = trace_level(&f, 0.0, 1e-12).unwrap();
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert_eq!(c.topology, Topology::ProperArc);
        assert_eq!(c.vertices.first().unwrap().x, -1.0);
        assert_eq!(c.vertices.last().unwrap().x, 1.0);
        assert!(c.vertices.iter().all(|v| v.y.abs() < 1e-12));
        assert!(c.vertices.windows(2).all(|w| w[1].x > w[0].x));
    }

    #[test]
    fn circle_is_closed_loop() {
        let f = field("x^2 + y^2", -2.0, 2.0, -2.0, 2.0, 81);
        let comps = trace_level(&f, 1.0, 1e-12).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].topology, Topology::ClosedLoop);
        let cell = f.window().cell_size();
        for v in &comps[0].vertices {
            assert!((v.norm() - 1.0).abs() <= 10.0 * cell);
        }
    }

    #[test]
    fn vertices_meet_tolerance() {
        let f = field("y - x^3 + 0.3*sin(3*x*y)", -1.0, 1.0, -1.0, 1.0, 41);
        let tol = 1e-10;
        for level in [-0.4, 0.0, 0.25] {
            for c in trace_level(&f, level, tol).unwrap() {
                for v in &c.vertices {
                    assert!((f.value(*v).unwrap() - level).abs() <= tol);
                }
            }
        }
    }

    #[test]
    fn out_of_range_level_is_empty() {
        let f = field("y", -1.0, 1.0, -1.0, 1.0, 9);
        assert!(trace_level(&f, 5.0, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn invalid_arguments() {
        let f = field("y", -1.0, 1.0, -1.0, 1.0, 9);
        assert!(matches!(
            trace_level(&f, f64::NAN, 1e-9),
            Err(TraceError::NonFiniteLevel(_))
        ));
        assert!(matches!(
            trace_level(&f, 0.0, 0.0),
            Err(TraceError::BadTolerance(_))
        ));
    }

    #[test]
    fn figure_function_level_is_split() {
        let f = ScalarField::parse(
            "atan(y - tan(x)^2)",
            Window::new(-3.0, 3.0, -4.0, 4.0, 121, 161).unwrap(),
        )
        .unwrap();
        let comps = trace_level(&f, 0.0, 1e-10).unwrap();
        assert!(comps.len() >= 2, "got {} components", comps.len());
    }

    #[test]
    fn masked_cells_make_degenerate_components() {
        // The singular line x = 0 cuts every level curve of y + 1/x.
        let f = field("y + 0.01 / x", -1.0, 1.0, -1.0, 1.0, 40);
        let comps = trace_level(&f, 0.5, 1e-10).unwrap();
        assert!(!comps.is_empty());
        assert!(comps
            .iter()
            .any(|c| c.touches_mask && c.topology == Topology::Degenerate));
    }

    #[test]
    fn classify_examples() {
        let w = Window::new(-1.0, 1.0, -1.0, 1.0, 11, 11).unwrap();
        let mk = |vertices: Vec<Point>| LevelComponent {
            id: 0,
            level: 0.0,
            vertices,
            topology: Topology::Degenerate,
            touches_mask: false,
        };
        let segment = mk(vec![Point::new(-1.0, 0.0), Point::new(0.0, 0.0), Point::new(1.0, 0.0)]);
        assert_eq!(classify_component(&segment, &w), Topology::ProperArc);
        let circle: Vec<Point> = (0..=32)
            .map(|k| {
                let t = k as f64 / 32.0 * std::f64::consts::TAU;
                Point::new(0.5 * t.cos(), 0.5 * t.sin())
            })
            .map(|p| if p.dist(Point::new(0.5, 0.0)) < 1e-12 { Point::new(0.5, 0.0) } else { p })
            .collect();
        assert_eq!(classify_component(&mk(circle), &w), Topology::ClosedLoop);
        assert_eq!(
            classify_component(&mk(vec![Point::new(0.0, 0.0)]), &w),
            Topology::Degenerate
        );
        let dangling = mk(vec![Point::new(-1.0, 0.0), Point::new(0.0, 0.0)]);
        assert_eq!(classify_component(&dangling, &w), Topology::Degenerate);
    }

    #[test]
    fn sides_of_horizontal_line() {
        let f = field("y", -1.0, 1.0, -1.0, 1.0, 21);
        let c = &trace_level(&f, 0.0, 1e-12).unwrap()[0];
        let w = f.window();
        assert_eq!(side_of_curve(c, w, Point::new(0.0, 0.5), 1e-9).unwrap(), Side::Left);
        assert_eq!(side_of_curve(c, w, Point::new(0.0, -0.5), 1e-9).unwrap(), Side::Right);
        assert_eq!(side_of_curve(c, w, Point::new(0.3, 0.0), 1e-9).unwrap(), Side::On);
    }

    #[test]
    fn side_requires_proper_arc() {
        let f = field("x^2 + y^2", -2.0, 2.0, -2.0, 2.0, 21);
        let c = &trace_level(&f, 1.0, 1e-12).unwrap()[0];
        assert!(matches!(
            side_of_curve(c, f.window(), Point::new(0.0, 0.0), 1e-9),
            Err(TraceError::NotProperArc { .. })
        ));
    }

    #[test]
    fn separation_of_parallel_lines() {
        let f = field("y", -1.0, 1.0, -1.0, 1.0, 21);
        let at = |l: f64| trace_level(&f, l, 1e-12).unwrap().remove(0);
        let w = f.window();
        let (m, z, p) = (at(-0.5), at(0.0), at(0.5));
        assert!(separation_relation(&m, &z, &p, w).unwrap());
        let q = at(0.9);
        assert!(!separation_relation(&z, &q, &p, w).unwrap());
        assert!(matches!(
            separation_relation(&z, &z, &p, w),
            Err(TraceError::NotDistinct)
        ));
    }

    #[test]
    fn record_round_trip() {
        let f = field("y - x^2", -1.0, 1.0, -1.0, 1.0, 17);
        let c = trace_level(&f, 0.1, 1e-12).unwrap().remove(0);
        let back = LevelComponent::from_record(&c.to_record(), c.id).unwrap();
        assert_eq!(back.level, c.level);
        assert_eq!(back.vertices, c.vertices);
        assert_eq!(back.topology, c.topology);
        assert!(LevelComponent::from_record("0.5 ProperArc 2 1 2", 0).is_err());
        assert!(LevelComponent::from_record("0.5 Blob 0", 0).is_err());
    }
}
