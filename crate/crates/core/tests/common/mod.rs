//! Shared helpers for the integration tests: the field corpus, a raster
//! flood-fill oracle for separation, and a runner for the binary.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::process::Command;

use levelflow::geom::Point;
use levelflow::{LevelComponent, ScalarField, Window};

/// Fields whose in-window levels are single proper arcs.
pub fn corpus() -> Vec<(&'static str, ScalarField)> {
    let make = |e: &str, w: Window| ScalarField::parse(e, w).unwrap();
    vec![
        ("y", make("y", Window::new(-1.0, 1.0, -1.0, 1.0, 65, 65).unwrap())),
        ("y - x^2", make("y - x^2", Window::new(-2.0, 2.0, -2.0, 2.0, 97, 97).unwrap())),
        ("y - x^3", make("y - x^3", Window::new(-1.0, 1.0, -1.0, 1.0, 81, 81).unwrap())),
        (
            "atan(y - tan(x)^2)",
            make("atan(y - tan(x)^2)", Window::new(-1.4, 1.4, -4.0, 4.0, 113, 161).unwrap()),
        ),
    ]
}

/// The window rasterized into `n × n` pixels with one curve drawn as a
/// barrier. Curves are drawn densely enough to be 8-connected, which blocks
/// 4-connected flood fill.
pub struct Raster {
    window: Window,
    n: usize,
    blocked: Vec<bool>,
    label: Vec<usize>,
}

const FREE: usize = usize::MAX;

impl Raster {
    pub fn new(window: Window, n: usize, barrier: &LevelComponent) -> Self {
        let mut blocked = vec![false; n * n];
        let pw = (window.xmax - window.xmin) / n as f64;
        let ph = (window.ymax - window.ymin) / n as f64;
        let step = 0.25 * pw.min(ph);
        let mark = |p: Point, blocked: &mut [bool]| {
            if let Some((i, j)) = pixel(&window, n, p) {
                blocked[j * n + i] = true;
            }
        };
        for w in barrier.vertices.windows(2) {
            let len = w[0].dist(w[1]);
            let k = (len / step).ceil().max(1.0) as usize;
            for s in 0..=k {
                mark(w[0].lerp(w[1], s as f64 / k as f64), &mut blocked);
            }
        }
        let mut r = Raster {
            window,
            n,
            blocked,
            label: vec![FREE; n * n],
        };
        r.flood();
        r
    }

    fn flood(&mut self) {
        let n = self.n;
        let mut next = 0;
        for start in 0..n * n {
            if self.blocked[start] || self.label[start] != FREE {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            self.label[start] = next;
            while let Some(c) = queue.pop_front() {
                let (i, j) = (c % n, c / n);
                let mut push = |q: usize| {
                    if !self.blocked[q] && self.label[q] == FREE {
                        self.label[q] = next;
                        queue.push_back(q);
                    }
                };
                if i > 0 {
                    push(c - 1);
                }
                if i + 1 < n {
                    push(c + 1);
                }
                if j > 0 {
                    push(c - n);
                }
                if j + 1 < n {
                    push(c + n);
                }
            }
            next += 1;
        }
    }

    pub fn region_count(&self) -> usize {
        self.label
            .iter()
            .filter(|&&l| l != FREE)
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Flood-fill region of `p`, `None` on the barrier.
    pub fn region(&self, p: Point) -> Option<usize> {
        let (i, j) = pixel(&self.window, self.n, p)?;
        let l = self.label[j * self.n + i];
        (l != FREE).then_some(l)
    }

    /// Region of a curve: the first vertex, searching outward from the
    /// middle, that is off the barrier and away from it by a pixel.
    pub fn curve_region(&self, c: &LevelComponent) -> Option<usize> {
        let n = c.vertices.len();
        let mid = n / 2;
        for step in 0..n {
            for idx in [mid.checked_add(step), mid.checked_sub(step)]
                .into_iter()
                .flatten()
                .filter(|&i| i < n)
            {
                let p = c.vertices[idx];
                if let Some(l) = self.region(p) {
                    if self.neighbourhood_free(p) {
                        return Some(l);
                    }
                }
            }
        }
        None
    }

    fn neighbourhood_free(&self, p: Point) -> bool {
        let Some((i, j)) = pixel(&self.window, self.n, p) else {
            return false;
        };
        let n = self.n as i64;
        (-1..=1).all(|dj| {
            (-1..=1).all(|di| {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                a < 0 || b < 0 || a >= n || b >= n || !self.blocked[(b * n + a) as usize]
            })
        })
    }
}

fn pixel(w: &Window, n: usize, p: Point) -> Option<(usize, usize)> {
    let u = (p.x - w.xmin) / (w.xmax - w.xmin) * n as f64;
    let v = (p.y - w.ymin) / (w.ymax - w.ymin) * n as f64;
    if !(u >= 0.0 && v >= 0.0 && u <= n as f64 && v <= n as f64) {
        return None;
    }
    Some(((u as usize).min(n - 1), (v as usize).min(n - 1)))
}

/// `K | C | L` by flood fill: `None` when either curve has no free pixel.
pub fn oracle_separates(
    k: &LevelComponent,
    c: &LevelComponent,
    l: &LevelComponent,
    window: Window,
    n: usize,
) -> Option<bool> {
    let r = Raster::new(window, n, c);
    Some(r.curve_region(k)? != r.curve_region(l)?)
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn levelflow(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_levelflow"))
        .args(args)
        .env_remove("LEVELFLOW_SEED")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn schema(name: &str) -> serde_json::Value {
    let path = format!("{}/schema/{name}.schema.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Validation errors of `doc` against the named shipped schema.
pub fn schema_errors(name: &str, doc: &serde_json::Value) -> Vec<String> {
    let validator = jsonschema::validator_for(&schema(name)).expect("schema compiles");
    validator.iter_errors(doc).map(|e| e.to_string()).collect()
}

/// Distinct crossing points between a polyline and a set of curves.
/// Crossings at shared segment endpoints are counted once.
pub fn crossing_count(path: &[Point], curves: &[LevelComponent], merge: f64) -> usize {
    let mut hits: Vec<Point> = Vec::new();
    for c in curves {
        for a in path.windows(2) {
            for b in c.vertices.windows(2) {
                if let Some(p) = levelflow::geom::segment_intersection(a[0], a[1], b[0], b[1]) {
                    if hits.iter().all(|h| h.dist(p) > merge) {
                        hits.push(p);
                    }
                }
            }
        }
    }
    hits.len()
}
