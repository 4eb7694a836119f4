//! Construction of the straightening chart `phi` with `f(phi(x, y)) = y`.
//!
//! The value range is cut into strips `[c_k, c_{k+1}]`. On each strip the
//! level curves are parameterized by signed arc-length from an anchor
//! cross-section, which gives a sampled chart of the strip. Strips are then
//! glued outward from a reference strip: each neighbour gets the x-offset
//! that makes both strips agree on their shared level curve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{ScalarField, Window};
use crate::geom::{cumulative_length, point_at_length, project_onto, Point};
use crate::regularity::{CrossSection, RegularityError};
use crate::trace::{side_of_curve, trace_level, LevelComponent, Side, Topology, TraceError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StraightenError {
    #[error("every grid node is undefined")]
    AllMasked,
    #[error("range ({lo}, {hi}) is too narrow for margin {margin}")]
    RangeTooNarrow { lo: f64, hi: f64, margin: f64 },
    #[error("need at least {min} {what}, got {got}")]
    TooFew {
        what: &'static str,
        min: usize,
        got: usize,
    },
    #[error("levels must be finite and strictly increasing")]
    NotIncreasing,
    #[error("level {level}: traced component is {topology}, expected a proper arc")]
    NotProperArc { level: f64, topology: Topology },
    #[error("anchor does not reach level {level}")]
    AnchorMisses { level: f64 },
    #[error("strip [{c_lo}, {c_hi}] has no room for a single column step")]
    StripTooNarrow { c_lo: f64, c_hi: f64 },
    #[error("strips {lower} and {upper} do not share a boundary level")]
    StripsNotAdjacent { lower: usize, upper: usize },
    #[error("shared level curves drift apart by {max_drift:e} (tolerance {tolerance:e})")]
    SeamDrift { max_drift: f64, tolerance: f64 },
    #[error("({x}, {y}) is outside the chart domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("({}, {}) is not covered by the chart (distance {distance:e})", point.x, point.y)]
    NotCovered { point: Point, distance: f64 },
    #[error("field is undefined at ({}, {})", point.x, point.y)]
    Undefined { point: Point },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Regularity(#[from] RegularityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Finite(f64),
    NegInfinity,
    PosInfinity,
}

/// The open image interval `(a, b)` and the extreme sampled values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeInterval {
    pub lower: Bound,
    pub upper: Bound,
    pub achieved: (f64, f64),
}

impl RangeInterval {
    pub fn from_span(lo: f64, hi: f64) -> Self {
        RangeInterval {
            lower: Bound::Finite(lo),
            upper: Bound::Finite(hi),
            achieved: (lo, hi),
        }
    }
}

/// Range of the sampled field. An endpoint is reported infinite when some
/// boundary node exceeds `infinite_magnitude` in that direction.
pub fn compute_range(
    field: &ScalarField,
    infinite_magnitude: f64,
) -> Result<RangeInterval, StraightenError> {
    let (lo, hi) = field.sampled_range().ok_or(StraightenError::AllMasked)?;
    let w = field.window();
    let mut boundary = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..w.ny {
        for i in 0..w.nx {
            if i != 0 && j != 0 && i + 1 != w.nx && j + 1 != w.ny {
                continue;
            }
            let v = field.node_value(i, j);
            if v.is_finite() {
                boundary = (boundary.0.min(v), boundary.1.max(v));
            }
        }
    }
    Ok(RangeInterval {
        lower: if boundary.0 < -infinite_magnitude {
            Bound::NegInfinity
        } else {
            Bound::Finite(lo)
        },
        upper: if boundary.1 > infinite_magnitude {
            Bound::PosInfinity
        } else {
            Bound::Finite(hi)
        },
        achieved: (lo, hi),
    })
}

/// Strictly increasing strip boundary levels `c_0 < ... < c_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSequence {
    levels: Vec<f64>,
}

impl LevelSequence {
    pub fn new(levels: Vec<f64>) -> Result<Self, StraightenError> {
        if levels.len() < 2 {
            return Err(StraightenError::TooFew {
                what: "levels",
                min: 2,
                got: levels.len(),
            });
        }
        let ok = levels.iter().all(|l| l.is_finite()) && levels.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(StraightenError::NotIncreasing);
        }
        Ok(LevelSequence { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn max_gap(&self) -> f64 {
        self.levels
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Subdivides gaps wider than `max_gap`.
    pub fn refined(&self, max_gap: f64) -> Self {
        let mut out = vec![self.levels[0]];
        for w in self.levels.windows(2) {
            let parts = ((w[1] - w[0]) / max_gap).ceil().max(1.0) as usize;
            for k in 1..parts {
                out.push(w[0] + (w[1] - w[0]) * k as f64 / parts as f64);
            }
            out.push(w[1]);
        }
        LevelSequence { levels: out }
    }
}

/// `m + 1` equally spaced levels over `[min + margin, max - margin]` of the
/// achieved range.
pub fn choose_level_sequence(
    range: &RangeInterval,
    m: usize,
    margin: f64,
) -> Result<LevelSequence, StraightenError> {
    if m < 2 {
        return Err(StraightenError::TooFew {
            what: "strips",
            min: 2,
            got: m,
        });
    }
    let (lo, hi) = range.achieved;
    let (a, b) = (lo + margin, hi - margin);
    if !(margin >= 0.0) || !(a < b) {
        return Err(StraightenError::RangeTooNarrow { lo, hi, margin });
    }
    let mut levels: Vec<f64> = (0..m).map(|k| a + (b - a) * k as f64 / m as f64).collect();
    levels.push(b);
    LevelSequence::new(levels)
}

/// Sampling parameters for a strip chart.
#[derive(Debug, Clone, Copy)]
pub struct StripSampling {
    /// Number of sampled levels, including both strip boundaries.
    pub rows: usize,
    /// Arc-length spacing of the columns; shared by every strip of a chart
    /// so that rows on a common level line up.
    pub column_step: f64,
    pub trace_tol: f64,
}

/// Sampled chart of one strip `f^{-1}[c_lo, c_hi]`: row `r` lies on level
/// `levels[r]`, column `i` sits at signed arc-length `(i - half_columns) ·
/// column_step` from the anchor along that level curve.
#[derive(Debug, Clone, PartialEq)]
pub struct StripChart {
    pub c_lo: f64,
    pub c_hi: f64,
    pub anchor: CrossSection,
    pub levels: Vec<f64>,
    pub column_step: f64,
    pub half_columns: usize,
    pub samples: Vec<Point>,
}

impl StripChart {
    pub fn columns(&self) -> usize {
        2 * self.half_columns + 1
    }

    pub fn rows(&self) -> usize {
        self.levels.len()
    }

    pub fn half_width(&self) -> f64 {
        self.half_columns as f64 * self.column_step
    }

    pub fn sample(&self, row: usize, col: usize) -> Point {
        self.samples[row * self.columns() + col]
    }

    pub fn row(&self, row: usize) -> &[Point] {
        let n = self.columns();
        &self.samples[row * n..(row + 1) * n]
    }

    /// Arc-length coordinate of column `i`.
    pub fn column_coordinate(&self, i: usize) -> f64 {
        (i as f64 - self.half_columns as f64) * self.column_step
    }

    /// Bilinear interpolation at local coordinates `(u, y)`.
    pub fn eval_local(&self, u: f64, y: f64) -> Option<Point> {
        if y < self.c_lo || y > self.c_hi || u.abs() > self.half_width() * (1.0 + 1e-12) {
            return None;
        }
        let (r, tv) = self.row_fraction(y);
        let (i, tu) = self.column_fraction(u);
        let bottom = self.sample(r, i).lerp(self.sample(r, i + 1), tu);
        let top = self.sample(r + 1, i).lerp(self.sample(r + 1, i + 1), tu);
        Some(bottom.lerp(top, tv))
    }

    fn row_fraction(&self, y: f64) -> (usize, f64) {
        let rows = self.rows();
        let k = self.levels.partition_point(|&l| l <= y);
        let r = k.saturating_sub(1).min(rows - 2);
        let (a, b) = (self.levels[r], self.levels[r + 1]);
        (r, ((y - a) / (b - a)).clamp(0.0, 1.0))
    }

    fn column_fraction(&self, u: f64) -> (usize, f64) {
        let q = (u / self.column_step + self.half_columns as f64).max(0.0);
        let i = (q.floor() as usize).min(self.columns() - 2);
        (i, (q - i as f64).clamp(0.0, 1.0))
    }

    /// Point of the interpolated level curve at `y` nearest to `p`:
    /// `(u, distance)`.
    fn project_local(&self, y: f64, p: Point) -> (f64, f64) {
        let (r, tv) = self.row_fraction(y);
        let curve: Vec<Point> = (0..self.columns())
            .map(|i| self.sample(r, i).lerp(self.sample(r + 1, i), tv))
            .collect();
        project_onto_lattice(&curve, self.half_columns, self.column_step, p)
    }
}

/// Projects `p` onto a polyline whose vertex `i` has coordinate
/// `(i - half) · step`; returns `(coordinate, distance)`.
fn project_onto_lattice(curve: &[Point], half: usize, step: f64, p: Point) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    for (k, w) in curve.windows(2).enumerate() {
        let d = w[1] - w[0];
        let len2 = d.dot(d);
        let t = if len2 > 0.0 {
            ((p - w[0]).dot(d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let dist = p.dist(w[0].lerp(w[1], t));
        if dist < best.1 {
            best = ((k as f64 + t - half as f64) * step, dist);
        }
    }
    best
}

/// Level curve at `level` through the component nearest to `near`.
fn level_curve_near(
    field: &ScalarField,
    level: f64,
    near: Point,
    tol: f64,
) -> Result<(LevelComponent, f64, f64), StraightenError> {
    let comps = trace_level(field, level, tol)?;
    let mut best: Option<(LevelComponent, f64, f64)> = None;
    for c in comps {
        let cum = cumulative_length(&c.vertices);
        let (dist, s, _) = project_onto(&c.vertices, &cum, near);
        if best.as_ref().map_or(true, |b| dist < b.1) {
            best = Some((c, dist, s));
        }
    }
    let (c, dist, s) = best.ok_or(StraightenError::AnchorMisses { level })?;
    if c.topology != Topology::ProperArc {
        return Err(StraightenError::NotProperArc {
            level,
            topology: c.topology,
        });
    }
    if dist > 2.0 * field.window().cell_size() {
        return Err(StraightenError::AnchorMisses { level });
    }
    Ok((c, dist, s))
}

/// Builds the sampled chart of the strip `[c_lo, c_hi]` around `anchor`.
pub fn straighten_strip(
    field: &ScalarField,
    c_lo: f64,
    c_hi: f64,
    anchor: &CrossSection,
    sampling: StripSampling,
) -> Result<StripChart, StraightenError> {
    if sampling.rows < 2 {
        return Err(StraightenError::TooFew {
            what: "rows",
            min: 2,
            got: sampling.rows,
        });
    }
    if !(c_lo < c_hi) {
        return Err(StraightenError::NotIncreasing);
    }
    let tol = sampling.trace_tol;
    let rows = sampling.rows;
    let levels: Vec<f64> = (0..rows)
        .map(|r| {
            if r + 1 == rows {
                c_hi
            } else {
                c_lo + (c_hi - c_lo) * r as f64 / (rows - 1) as f64
            }
        })
        .collect();

    let curves = levels
        .par_iter()
        .map(|&level| {
            let a = anchor
                .point_at_level(field, level, tol)
                .ok_or(StraightenError::AnchorMisses { level })?;
            let (c, _, s0) = level_curve_near(field, level, a, tol)?;
            let cum = cumulative_length(&c.vertices);
            Ok((c.vertices, cum, s0))
        })
        .collect::<Result<Vec<_>, StraightenError>>()?;

    let room = curves
        .iter()
        .map(|(_, cum, s0)| s0.min(cum.last().copied().unwrap_or(0.0) - s0))
        .fold(f64::INFINITY, f64::min);
    let step = sampling.column_step;
    let half_columns = (room / step + 1e-9).floor().max(0.0) as usize;
    if half_columns == 0 {
        return Err(StraightenError::StripTooNarrow { c_lo, c_hi });
    }
    let columns = 2 * half_columns + 1;
    let mut samples = Vec::with_capacity(rows * columns);
    for (vertices, cum, s0) in &curves {
        for i in 0..columns {
            let u = (i as f64 - half_columns as f64) * step;
            samples.push(point_at_length(vertices, cum, s0 + u));
        }
    }
    Ok(StripChart {
        c_lo,
        c_hi,
        anchor: anchor.clone(),
        levels,
        column_step: step,
        half_columns,
        samples,
    })
}

/// Tolerances stored with a chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartTolerances {
    pub trace: f64,
    pub seam: f64,
    pub verify: f64,
}

/// Glued chart over all strips. Evaluation at `(x, y)` uses the strip with
/// `y ∈ [c_k, c_{k+1})` at local coordinate `u = x + offsets[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalChart {
    pub expression: String,
    pub strips: Vec<StripChart>,
    pub offsets: Vec<f64>,
    /// Index of the strip with offset zero.
    pub reference: usize,
    pub range: RangeInterval,
    pub tolerances: ChartTolerances,
    /// Maximum disagreement between neighbouring strips on shared levels.
    pub seam_drift: f64,
}

/// Glues with strip 0 as the reference.
pub fn glue_strips(
    strips: Vec<StripChart>,
    tolerances: ChartTolerances,
) -> Result<GlobalChart, StraightenError> {
    glue_strips_from(strips, 0, tolerances)
}

/// Glues outward from `reference`: upward strips match their bottom anchor
/// point against the strip below, downward strips match their top anchor
/// point against the strip above.
pub fn glue_strips_from(
    strips: Vec<StripChart>,
    reference: usize,
    tolerances: ChartTolerances,
) -> Result<GlobalChart, StraightenError> {
    if strips.is_empty() {
        return Err(StraightenError::TooFew {
            what: "strips",
            min: 1,
            got: 0,
        });
    }
    let reference = reference.min(strips.len() - 1);
    for (k, w) in strips.windows(2).enumerate() {
        if w[0].c_hi != w[1].c_lo {
            return Err(StraightenError::StripsNotAdjacent {
                lower: k,
                upper: k + 1,
            });
        }
    }
    let mut offsets = vec![0.0; strips.len()];
    for k in reference + 1..strips.len() {
        let below = &strips[k - 1];
        let anchor_point = strips[k].sample(0, strips[k].half_columns);
        let (u, _) = project_onto_lattice(
            below.row(below.rows() - 1),
            below.half_columns,
            below.column_step,
            anchor_point,
        );
        offsets[k] = offsets[k - 1] - u;
    }
    for k in (0..reference).rev() {
        let above = &strips[k + 1];
        let top = strips[k].rows() - 1;
        let anchor_point = strips[k].sample(top, strips[k].half_columns);
        let (u, _) = project_onto_lattice(
            above.row(0),
            above.half_columns,
            above.column_step,
            anchor_point,
        );
        offsets[k] = offsets[k + 1] - u;
    }
    let lo = strips[0].c_lo;
    let hi = strips[strips.len() - 1].c_hi;
    let mut chart = GlobalChart {
        expression: String::new(),
        strips,
        offsets,
        reference,
        range: RangeInterval::from_span(lo, hi),
        tolerances,
        seam_drift: 0.0,
    };
    let drift = chart.max_seam_drift();
    chart.seam_drift = drift;
    if !(drift <= tolerances.seam) {
        return Err(StraightenError::SeamDrift {
            max_drift: drift,
            tolerance: tolerances.seam,
        });
    }
    Ok(chart)
}

impl GlobalChart {
    pub fn levels(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.strips.iter().map(|s| s.c_lo).collect();
        out.push(self.strips[self.strips.len() - 1].c_hi);
        out
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.strips[0].c_lo, self.strips[self.strips.len() - 1].c_hi)
    }

    /// Index of the strip owning level `y`.
    pub fn strip_index(&self, y: f64) -> Option<usize> {
        let (lo, hi) = self.y_range();
        if !(y >= lo && y <= hi) {
            return None;
        }
        let k = self.strips.partition_point(|s| s.c_lo <= y);
        Some(k.saturating_sub(1).min(self.strips.len() - 1))
    }

    /// Global x-interval covered by strip `k`.
    pub fn strip_domain(&self, k: usize) -> (f64, f64) {
        let s = &self.strips[k];
        (
            -s.half_width() - self.offsets[k],
            s.half_width() - self.offsets[k],
        )
    }

    /// Global x-interval of the chart at level `y`.
    pub fn domain_at(&self, y: f64) -> Option<(f64, f64)> {
        self.strip_index(y).map(|k| self.strip_domain(k))
    }

    /// `phi(x, y)` evaluated in a specific strip (used for two-sided
    /// evaluation on shared levels).
    pub fn apply_in_strip(&self, k: usize, x: f64, y: f64) -> Option<Point> {
        self.strips.get(k)?.eval_local(x + self.offsets[k], y)
    }

    /// Largest disagreement between adjacent strips along their shared
    /// levels, evaluated at the columns of both strips.
    pub fn max_seam_drift(&self) -> f64 {
        let mut drift: f64 = 0.0;
        for k in 1..self.strips.len() {
            let level = self.strips[k].c_lo;
            for (from, to) in [(k, k - 1), (k - 1, k)] {
                let s = &self.strips[from];
                for i in 0..s.columns() {
                    let x = s.column_coordinate(i) - self.offsets[from];
                    let (Some(p), Some(q)) = (
                        self.apply_in_strip(from, x, level),
                        self.apply_in_strip(to, x, level),
                    ) else {
                        continue;
                    };
                    drift = drift.max(p.dist(q));
                }
            }
        }
        drift
    }
}

/// `phi(x, y)`.
pub fn chart_apply(chart: &GlobalChart, x: f64, y: f64) -> Result<Point, StraightenError> {
    let k = chart
        .strip_index(y)
        .ok_or(StraightenError::OutsideDomain { x, y })?;
    chart
        .apply_in_strip(k, x, y)
        .ok_or(StraightenError::OutsideDomain { x, y })
}

/// `phi^{-1}(p)`: `y = f(p)` and `x` is the arc-length position of `p` along
/// its chart curve, shifted by the strip offset. Fails when `p` is farther
/// than `tol` from the chart image.
///
/// Chart points carry a residual, so `f(p)` may fall just outside the strip
/// (or the chart range) that produced `p`. Strips within the residual
/// tolerance of `f(p)` are all tried, with the level clamped into each, and
/// the closest projection wins.
pub fn chart_invert(
    chart: &GlobalChart,
    field: &ScalarField,
    p: Point,
    tol: f64,
) -> Result<(f64, f64), StraightenError> {
    let value = field
        .evaluate(p)
        .map_err(|_| StraightenError::NotCovered {
            point: p,
            distance: f64::INFINITY,
        })?
        .ok_or(StraightenError::Undefined { point: p })?;
    let slack = chart.tolerances.verify;
    let last = chart.strips.len() - 1;
    let mut best: Option<(f64, f64, f64)> = None;
    for (k, s) in chart.strips.iter().enumerate() {
        if value < s.c_lo - slack || value > s.c_hi + slack {
            continue;
        }
        let mut y = value.clamp(s.c_lo, s.c_hi);
        // Strips own their lower level only; keep `y` in this one.
        if k < last && y >= s.c_hi {
            y = s.c_hi.next_down();
        }
        let (u, distance) = s.project_local(y, p);
        if best.map_or(true, |b| distance < b.2) {
            best = Some((u - chart.offsets[k], y, distance));
        }
    }
    match best {
        Some((x, y, distance)) if distance <= tol => Ok((x, y)),
        Some((_, _, distance)) => Err(StraightenError::NotCovered { point: p, distance }),
        None => Err(StraightenError::NotCovered {
            point: p,
            distance: f64::INFINITY,
        }),
    }
}

/// Results of sweeping a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub grid: (usize, usize),
    pub samples: usize,
    pub undefined_samples: usize,
    pub max_residual: f64,
    pub max_seam: f64,
    pub injectivity_violations: usize,
    pub monotonicity_violations: usize,
    pub order_triples: usize,
    pub order_violations: usize,
    pub roundtrip_samples: usize,
    pub roundtrip_failures: usize,
    pub max_roundtrip: f64,
    pub cell_size: f64,
    pub tolerances: ChartTolerances,
    pub half_widths: Vec<f64>,
    pub offsets: Vec<f64>,
    pub pass: bool,
}

/// Options for [`verify_straightening`].
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub grid: (usize, usize),
    pub roundtrip_samples: usize,
    pub seed: u64,
    /// Check the order invariant on level triples (traces one level per
    /// interior grid row).
    pub order_check: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            grid: (128, 128),
            roundtrip_samples: 1000,
            seed: 0,
            order_check: true,
        }
    }
}

/// Sweeps an `nx × ny` grid over the chart domain and measures residual,
/// seams, injectivity, monotonicity along levels, the order invariant, and
/// the `apply ∘ invert` round trip.
pub fn verify_straightening(
    field: &ScalarField,
    chart: &GlobalChart,
    options: VerifyOptions,
) -> VerificationReport {
    let (nx, ny) = (options.grid.0.max(2), options.grid.1.max(3));
    let w = *field.window();
    let cell = w.cell_size();
    let (lo, hi) = chart.y_range();
    let row_levels: Vec<f64> = (0..ny)
        .map(|r| {
            if r + 1 == ny {
                hi
            } else {
                lo + (hi - lo) * r as f64 / (ny - 1) as f64
            }
        })
        .collect();

    // (x, y, image) per row.
    let rows: Vec<Vec<(f64, f64, Point)>> = row_levels
        .iter()
        .map(|&y| {
            let (a, b) = chart.domain_at(y).expect("level inside chart range");
            (0..nx)
                .filter_map(|i| {
                    let x = a + (b - a) * i as f64 / (nx - 1) as f64;
                    chart_apply(chart, x, y).ok().map(|p| (x, y, p))
                })
                .collect()
        })
        .collect();

    let mut samples = 0;
    let mut undefined = 0;
    let mut max_residual: f64 = 0.0;
    for row in &rows {
        for &(_, y, p) in row {
            samples += 1;
            match field.value(p) {
                Some(v) => max_residual = max_residual.max((v - y).abs()),
                None => undefined += 1,
            }
        }
    }

    let mut max_seam: f64 = 0.0;
    for k in 1..chart.strips.len() {
        let level = chart.strips[k].c_lo;
        let (a0, b0) = chart.strip_domain(k - 1);
        let (a1, b1) = chart.strip_domain(k);
        let (a, b) = (a0.max(a1), b0.min(b1));
        if !(a < b) {
            max_seam = f64::INFINITY;
            continue;
        }
        for i in 0..nx {
            let x = a + (b - a) * i as f64 / (nx - 1) as f64;
            if let (Some(p), Some(q)) = (
                chart.apply_in_strip(k - 1, x, level),
                chart.apply_in_strip(k, x, level),
            ) {
                max_seam = max_seam.max(p.dist(q));
            }
        }
    }

    let monotonicity_violations = rows
        .iter()
        .map(|row| {
            let steps: Vec<Point> = row.windows(2).map(|w| w[1].2 - w[0].2).collect();
            let zero = steps.iter().filter(|d| d.norm() == 0.0).count();
            let reversals = steps.windows(2).filter(|d| d[0].dot(d[1]) <= 0.0).count();
            zero + reversals
        })
        .sum();

    let injectivity_violations = count_injectivity_violations(&rows, cell, w.diagonal());

    let (order_triples, order_violations) = if options.order_check {
        order_invariant(field, chart, &rows)
    } else {
        (0, 0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut roundtrip_failures = 0;
    let mut max_roundtrip: f64 = 0.0;
    for _ in 0..options.roundtrip_samples {
        let y = rng.gen_range(lo..=hi);
        let (a, b) = chart.domain_at(y).expect("level inside chart range");
        let x = rng.gen_range(a..=b);
        let Ok(p) = chart_apply(chart, x, y) else {
            roundtrip_failures += 1;
            continue;
        };
        match chart_invert(chart, field, p, 2.0 * cell)
            .and_then(|(xi, yi)| chart_apply(chart, xi, yi))
        {
            Ok(q) => max_roundtrip = max_roundtrip.max(p.dist(q)),
            Err(_) => roundtrip_failures += 1,
        }
    }

    let tol = chart.tolerances;
    let pass = undefined == 0
        && max_residual <= tol.verify
        && max_seam <= tol.seam
        && injectivity_violations == 0
        && monotonicity_violations == 0
        && order_violations == 0
        && roundtrip_failures == 0
        && max_roundtrip <= 2.0 * cell;

    VerificationReport {
        grid: (nx, ny),
        samples,
        undefined_samples: undefined,
        max_residual,
        max_seam,
        injectivity_violations,
        monotonicity_violations,
        order_triples,
        order_violations,
        roundtrip_samples: options.roundtrip_samples,
        roundtrip_failures,
        max_roundtrip,
        cell_size: cell,
        tolerances: tol,
        half_widths: chart.strips.iter().map(|s| s.half_width()).collect(),
        offsets: chart.offsets.clone(),
        pass,
    }
}

/// Sample pairs that witness a fold of the chart: two samples of one row
/// whose images are within `cell / 2` although they are more than `4 cell`
/// apart in arc-length (the level curve comes back onto itself), or two
/// samples of different rows with coincident images.
///
/// Closeness across rows alone is not a violation: near-critical or steep
/// regions legitimately squeeze many levels into a small patch.
fn count_injectivity_violations(rows: &[Vec<(f64, f64, Point)>], cell: f64, diagonal: f64) -> usize {
    use std::collections::HashMap;
    let radius = 0.5 * cell;
    let coincident = 1e-12 * diagonal;
    let key = |p: Point| ((p.x / radius).floor() as i64, (p.y / radius).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<(usize, f64, Point)>> = HashMap::new();
    for (r, row) in rows.iter().enumerate() {
        for &(x, _, p) in row {
            buckets.entry(key(p)).or_default().push((r, x, p));
        }
    }
    let mut violations = 0;
    for (r, row) in rows.iter().enumerate() {
        for &(xa, _, pa) in row {
            let (kx, ky) = key(pa);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = buckets.get(&(kx + dx, ky + dy)) else {
                        continue;
                    };
                    for &(rb, xb, pb) in bucket {
                        let d = pa.dist(pb);
                        let fold = rb == r && d < radius && (xa - xb).abs() > 4.0 * cell;
                        let collision = rb != r && d <= coincident;
                        if fold || collision {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    // Each pair was counted from both ends.
    violations / 2
}

/// Order invariant over grid rows: for each interior row `r`, the images of
/// row `r - 1` and of row `0` must lie right of the traced level curve of
/// row `r`, and rows `r + 1` and `ny - 1` left of it. Returns
/// `(triples checked, violating samples)`.
fn order_invariant(
    field: &ScalarField,
    chart: &GlobalChart,
    rows: &[Vec<(f64, f64, Point)>],
) -> (usize, usize) {
    let w = *field.window();
    let tol = 1e-9 * w.diagonal();
    let ny = rows.len();
    let results: Vec<(usize, usize)> = (1..ny - 1)
        .into_par_iter()
        .map(|r| {
            let Some(&(_, y2, mid)) = rows[r].get(rows[r].len() / 2) else {
                return (0, 0);
            };
            let Ok((curve, _, _)) = level_curve_near(field, y2, mid, chart.tolerances.trace) else {
                return (0, 1);
            };
            let mut bad = 0;
            let mut triples = 0;
            for (below, above) in [(r - 1, r + 1), (0, ny - 1)] {
                triples += 1;
                for &(_, _, p) in &rows[below] {
                    if side_of_curve(&curve, &w, p, tol) != Ok(Side::Right) {
                        bad += 1;
                    }
                }
                for &(_, _, p) in &rows[above] {
                    if side_of_curve(&curve, &w, p, tol) != Ok(Side::Left) {
                        bad += 1;
                    }
                }
            }
            (triples, bad)
        })
        .collect();
    results
        .into_iter()
        .fold((0, 0), |acc, r| (acc.0 + r.0, acc.1 + r.1))
}

/// Settings for the whole straightening pipeline.
#[derive(Debug, Clone, Copy)]
pub struct StraightenSettings {
    pub strips: usize,
    /// Fraction of the level range left out at each end.
    pub margin_fraction: f64,
    pub sampling: StripSampling,
    pub tolerances: ChartTolerances,
}

impl StraightenSettings {
    pub fn for_window(window: &Window, strips: usize, trace_tol: f64) -> Self {
        let cell = window.cell_size();
        StraightenSettings {
            strips,
            margin_fraction: 0.02,
            sampling: StripSampling {
                rows: 17,
                column_step: cell,
                trace_tol,
            },
            tolerances: ChartTolerances {
                trace: trace_tol,
                seam: 2.0 * cell,
                verify: 1e-2,
            },
        }
    }
}

/// Builds the glued chart from a transversal `spine` cross-section (whose
/// value span fixes the chart range). The reference strip is the one that
/// contains the value at `base`.
pub fn build_chart(
    field: &ScalarField,
    spine: &CrossSection,
    base: Point,
    settings: &StraightenSettings,
) -> Result<GlobalChart, StraightenError> {
    let (lo, hi) = spine.span();
    let range = RangeInterval::from_span(lo, hi);
    let margin = settings.margin_fraction * (hi - lo);
    let sequence = choose_level_sequence(&range, settings.strips, margin)?;
    let levels = sequence.levels().to_vec();
    let tol = settings.sampling.trace_tol;
    let strips = levels
        .par_windows(2)
        .map(|w| {
            let anchor = spine
                .restrict(field, w[0], w[1], tol)
                .ok_or(StraightenError::AnchorMisses { level: w[0] })?;
            straighten_strip(field, w[0], w[1], &anchor, settings.sampling)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let base_value = field
        .value(base)
        .ok_or(StraightenError::Undefined { point: base })?;
    let reference = levels
        .partition_point(|&c| c <= base_value)
        .saturating_sub(1)
        .min(strips.len() - 1);
    let mut chart = glue_strips_from(strips, reference, settings.tolerances)?;
    chart.expression = field.source().to_string();
    chart.range = range;
    Ok(chart)
}
