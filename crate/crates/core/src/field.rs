//! Scalar fields sampled over a rectangular window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expression, Expression, ParseError};
use crate::geom::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("point ({x}, {y}) lies outside the window")]
    OutsideWindow { x: f64, y: f64 },
}

/// Rectangular sampling window with an `nx × ny` node grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Window {
    pub fn new(
        xmin: f64,
        xmax: f64,
        ymin: f64,
        ymax: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self, FieldError> {
        let w = Window {
            xmin,
            xmax,
            ymin,
            ymax,
            nx,
            ny,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let finite = [self.xmin, self.xmax, self.ymin, self.ymax]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(FieldError::InvalidWindow("bounds must be finite".into()));
        }
        if self.xmin >= self.xmax || self.ymin >= self.ymax {
            return Err(FieldError::InvalidWindow(format!(
                "need xmin < xmax and ymin < ymax, got [{}, {}] x [{}, {}]",
                self.xmin, self.xmax, self.ymin, self.ymax
            )));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(FieldError::InvalidWindow(format!(
                "grid must be at least 2x2, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.xmax - self.xmin) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.ymax - self.ymin) / (self.ny - 1) as f64
    }

    /// The larger of the two grid spacings.
    pub fn cell_size(&self) -> f64 {
        self.dx().max(self.dy())
    }

    pub fn diagonal(&self) -> f64 {
        (self.xmax - self.xmin).hypot(self.ymax - self.ymin)
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.xmin + self.xmax),
            0.5 * (self.ymin + self.ymax),
        )
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(self.node_x(i), self.node_y(j))
    }

    pub fn node_x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.xmax
        } else {
            self.xmin + i as f64 * self.dx()
        }
    }

    pub fn node_y(&self, j: usize) -> f64 {
        if j + 1 == self.ny {
            self.ymax
        } else {
            self.ymin + j as f64 * self.dy()
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// Distance from `p` to the nearest window edge (zero on the boundary).
    pub fn boundary_distance(&self, p: Point) -> f64 {
        (p.x - self.xmin)
            .abs()
            .min((self.xmax - p.x).abs())
            .min((p.y - self.ymin).abs())
            .min((self.ymax - p.y).abs())
    }

    /// Position along the boundary, counterclockwise from `(xmin, ymin)`,
    /// of the boundary point nearest to `p`.
    pub fn boundary_parameter(&self, p: Point) -> f64 {
        let w = self.xmax - self.xmin;
        let h = self.ymax - self.ymin;
        let d = [
            (p.y - self.ymin).abs(),
            (self.xmax - p.x).abs(),
            (self.ymax - p.y).abs(),
            (p.x - self.xmin).abs(),
        ];
        let side = (0..4)
            .min_by(|&a, &b| d[a].total_cmp(&d[b]))
            .expect("four sides");
        let cx = p.x.clamp(self.xmin, self.xmax);
        let cy = p.y.clamp(self.ymin, self.ymax);
        match side {
            0 => cx - self.xmin,
            1 => w + (cy - self.ymin),
            2 => w + h + (self.xmax - cx),
            _ => 2.0 * w + h + (self.ymax - cy),
        }
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.xmax - self.xmin) + (self.ymax - self.ymin))
    }

    /// Corners in counterclockwise order with their boundary parameters.
    pub fn corners(&self) -> [(f64, Point); 4] {
        let w = self.xmax - self.xmin;
        let h = self.ymax - self.ymin;
        [
            (0.0, Point::new(self.xmin, self.ymin)),
            (w, Point::new(self.xmax, self.ymin)),
            (w + h, Point::new(self.xmax, self.ymax)),
            (2.0 * w + h, Point::new(self.xmin, self.ymax)),
        ]
    }
}

/// An expression bound to a window, with node samples and a per-cell mask of
/// cells where the expression is undefined or may have a singularity.
#[derive(Debug, Clone)]
pub struct ScalarField {
    expression: Expression,
    source: String,
    window: Window,
    nodes: Vec<f64>,
    masked: Vec<bool>,
}

impl ScalarField {
    pub fn new(expression: Expression, window: Window) -> Result<Self, FieldError> {
        let source = expression.to_string();
        Self::build(expression, source, window)
    }

    pub fn parse(text: &str, window: Window) -> Result<Self, FieldError> {
        let expression = parse_expression(text)?;
        Self::build(expression, text.trim().to_string(), window)
    }

    fn build(expression: Expression, source: String, window: Window) -> Result<Self, FieldError> {
        window.validate()?;
        let (nx, ny) = (window.nx, window.ny);
        let mut nodes = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let p = window.node(i, j);
                nodes.push(expression.eval(p.x, p.y));
            }
        }
        let mut masked = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corners_finite = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
                    .iter()
                    .all(|&(a, b)| nodes[b * nx + a].is_finite());
                let regular = corners_finite
                    && expression.is_regular_on(
                        window.node_x(i),
                        window.node_x(i + 1),
                        window.node_y(j),
                        window.node_y(j + 1),
                    );
                masked.push(!regular);
            }
        }
        Ok(ScalarField {
            expression,
            source,
            window,
            nodes,
            masked,
        })
    }

    pub fn expression(&self) -> &Expression {
        &self.expression
    }

    /// The text the field was parsed from (or the printed tree).
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Sample at grid node `(i, j)`; NaN or infinite where undefined.
    pub fn node_value(&self, i: usize, j: usize) -> f64 {
        self.nodes[j * self.window.nx + i]
    }

    pub fn is_cell_masked(&self, i: usize, j: usize) -> bool {
        self.masked[j * (self.window.nx - 1) + i]
    }

    pub fn masked_cell_count(&self) -> usize {
        self.masked.iter().filter(|m| **m).count()
    }

    /// Whether the cell containing `p` is masked. Points outside count as masked.
    pub fn is_masked_at(&self, p: Point) -> bool {
        match self.cell_of(p) {
            Some((i, j)) => self.is_cell_masked(i, j),
            None => true,
        }
    }

    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let w = &self.window;
        if !w.contains(p) {
            return None;
        }
        let i = (((p.x - w.xmin) / w.dx()).floor() as usize).min(w.nx - 2);
        let j = (((p.y - w.ymin) / w.dy()).floor() as usize).min(w.ny - 2);
        Some((i, j))
    }

    /// `f(p)`, or `Ok(None)` where the expression is undefined.
    pub fn evaluate(&self, p: Point) -> Result<Option<f64>, FieldError> {
        if !self.window.contains(p) {
            return Err(FieldError::OutsideWindow { x: p.x, y: p.y });
        }
        Ok(self.value(p))
    }

    /// `f(p)` without the window check.
    pub fn value(&self, p: Point) -> Option<f64> {
        let v = self.expression.eval(p.x, p.y);
        v.is_finite().then_some(v)
    }

    /// Central-difference gradient with step `h`. `None` if any stencil
    /// point is outside the window or undefined.
    pub fn gradient_fd(&self, p: Point, h: f64) -> Option<Point> {
        let probe = |q: Point| self.evaluate(q).ok().flatten();
        let fxp = probe(Point::new(p.x + h, p.y))?;
        let fxm = probe(Point::new(p.x - h, p.y))?;
        let fyp = probe(Point::new(p.x, p.y + h))?;
        let fym = probe(Point::new(p.x, p.y - h))?;
        Some(Point::new((fxp - fxm) / (2.0 * h), (fyp - fym) / (2.0 * h)))
    }

    /// Like [`gradient_fd`](Self::gradient_fd) but falls back to one-sided
    /// differences where the centered stencil would leave the window.
    pub fn gradient_clamped(&self, p: Point, h: f64) -> Option<Point> {
        let w = &self.window;
        let axis = |lo: Point, hi: Point, span: f64| -> Option<f64> {
            let a = self.evaluate(lo).ok().flatten()?;
            let b = self.evaluate(hi).ok().flatten()?;
            Some((b - a) / span)
        };
        let (xl, xh) = stencil(p.x, h, w.xmin, w.xmax);
        let (yl, yh) = stencil(p.y, h, w.ymin, w.ymax);
        let gx = axis(Point::new(xl, p.y), Point::new(xh, p.y), xh - xl)?;
        let gy = axis(Point::new(p.x, yl), Point::new(p.x, yh), yh - yl)?;
        Some(Point::new(gx, gy))
    }

    /// Point on segment `ab` where `f = level`, found by Illinois iterations
    /// from the linear interpolation of the endpoint values. `None` if the
    /// level is not bracketed or `f` is undefined along the way.
    pub fn root_on_segment(&self, a: Point, b: Point, level: f64, tol: f64) -> Option<Point> {
        let (mut ta, mut fa) = (0.0, self.value(a)? - level);
        let (mut tb, mut fb) = (1.0, self.value(b)? - level);
        if fa.abs() <= tol {
            return Some(a);
        }
        if fb.abs() <= tol {
            return Some(b);
        }
        if (fa < 0.0) == (fb < 0.0) {
            return None;
        }
        let mut side = 0i8;
        let mut t = ta - fa * (tb - ta) / (fb - fa);
        for _ in 0..100 {
            let p = a.lerp(b, t);
            let r = self.value(p)? - level;
            if r.abs() <= tol || (tb - ta).abs() < 1e-15 {
                return Some(p);
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
        }
        Some(a.lerp(b, t))
    }

    /// Default finite-difference step: `(xmax - xmin) / (100 nx)`.
    pub fn default_fd_step(&self) -> f64 {
        (self.window.xmax - self.window.xmin) / (100.0 * self.window.nx as f64)
    }

    /// (min, max) over the finite node samples.
    pub fn sampled_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.nodes.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Default gradient threshold: `1e-6 · value range / window diagonal`.
    pub fn default_eps_grad(&self) -> f64 {
        let span = self.sampled_range().map_or(1.0, |(lo, hi)| hi - lo);
        let span = if span > 0.0 { span } else { 1.0 };
        1e-6 * span / self.window.diagonal()
    }
}

fn stencil(c: f64, h: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = if c - h >= lo { c - h } else { c };
    let b = if c + h <= hi { c + h } else { c };
    (a, b)
}
