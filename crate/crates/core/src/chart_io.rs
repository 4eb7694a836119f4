//! Line-oriented text format for glued charts.
//!
//! Every float is written with `{:.16e}`, which round-trips bit-exactly.
//!
//! ```text
//! levelflow-chart 1
//! expr <expression>
//! range <lower> <upper> <achieved lo> <achieved hi>
//! tolerances <trace> <seam> <verify>
//! seam-drift <d>
//! reference <k>
//! strips <m>
//! strip <c_lo> <c_hi> <offset> <column step> <half columns> <rows>
//! levels <v>...
//! anchor <n> <truncated>
//! <x> <y> <v>            (n lines)
//! row <x> <y> <x> <y>... (rows lines)
//! ```

use thiserror::Error;

use crate::geom::Point;
use crate::regularity::CrossSection;
use crate::straighten::{Bound, ChartTolerances, GlobalChart, RangeInterval, StripChart};

const MAGIC: &str = "levelflow-chart 1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartFormatError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unexpected end of chart file")]
    Truncated,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn bound(b: Bound) -> String {
    match b {
        Bound::Finite(v) => num(v),
        Bound::NegInfinity => "-inf".into(),
        Bound::PosInfinity => "+inf".into(),
    }
}

pub fn write_chart(chart: &GlobalChart) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(MAGIC.into());
    line(format!("expr {}", chart.expression));
    let r = chart.range;
    line(format!(
        "range {} {} {} {}",
        bound(r.lower),
        bound(r.upper),
        num(r.achieved.0),
        num(r.achieved.1)
    ));
    let t = chart.tolerances;
    line(format!(
        "tolerances {} {} {}",
        num(t.trace),
        num(t.seam),
        num(t.verify)
    ));
    line(format!("seam-drift {}", num(chart.seam_drift)));
    line(format!("reference {}", chart.reference));
    line(format!("strips {}", chart.strips.len()));
    for (s, &offset) in chart.strips.iter().zip(&chart.offsets) {
        line(format!(
            "strip {} {} {} {} {} {}",
            num(s.c_lo),
            num(s.c_hi),
            num(offset),
            num(s.column_step),
            s.half_columns,
            s.rows()
        ));
        let levels: Vec<String> = s.levels.iter().map(|&v| num(v)).collect();
        line(format!("levels {}", levels.join(" ")));
        line(format!(
            "anchor {} {}",
            s.anchor.vertices.len(),
            s.anchor.truncated
        ));
        for (p, &v) in s.anchor.vertices.iter().zip(&s.anchor.values) {
            line(format!("{} {} {}", num(p.x), num(p.y), num(v)));
        }
        for r in 0..s.rows() {
            let coords: Vec<String> = s
                .row(r)
                .iter()
                .flat_map(|p| [num(p.x), num(p.y)])
                .collect();
            line(format!("row {}", coords.join(" ")));
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    current: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, ChartFormatError> {
        let (i, l) = self.inner.next().ok_or(ChartFormatError::Truncated)?;
        self.current = i + 1;
        Ok(l)
    }

    fn err(&self, message: impl Into<String>) -> ChartFormatError {
        ChartFormatError::Malformed {
            line: self.current,
            message: message.into(),
        }
    }

    /// Next line, which must start with `key`; returns the rest.
    fn keyed(&mut self, key: &str) -> Result<&'a str, ChartFormatError> {
        let l = self.next()?;
        match l.strip_prefix(key) {
            Some("") => Ok(""),
            Some(rest) if rest.starts_with(' ') => Ok(&rest[1..]),
            _ => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn floats(&self, text: &str) -> Result<Vec<f64>, ChartFormatError> {
        text.split_whitespace()
            .map(|t| self.float(t))
            .collect()
    }

    fn float(&self, t: &str) -> Result<f64, ChartFormatError> {
        t.parse::<f64>()
            .map_err(|_| self.err(format!("bad number `{t}`")))
    }

    fn count(&self, t: Option<&str>) -> Result<usize, ChartFormatError> {
        t.and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("bad count"))
    }

    fn bound(&self, t: Option<&str>) -> Result<Bound, ChartFormatError> {
        match t {
            Some("-inf") => Ok(Bound::NegInfinity),
            Some("+inf") => Ok(Bound::PosInfinity),
            Some(t) => self.float(t).map(Bound::Finite),
            None => Err(self.err("missing bound")),
        }
    }
}

pub fn read_chart(text: &str) -> Result<GlobalChart, ChartFormatError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        current: 0,
    };
    if lines.next()? != MAGIC {
        return Err(lines.err("not a levelflow chart"));
    }
    let expression = lines.keyed("expr")?.to_string();

    let rest = lines.keyed("range")?;
    let mut it = rest.split_whitespace();
    let lower = lines.bound(it.next())?;
    let upper = lines.bound(it.next())?;
    let achieved = lines.floats(&it.collect::<Vec<_>>().join(" "))?;
    if achieved.len() != 2 {
        return Err(lines.err("range needs two achieved values"));
    }
    let range = RangeInterval {
        lower,
        upper,
        achieved: (achieved[0], achieved[1]),
    };

    let rest = lines.keyed("tolerances")?;
    let t = lines.floats(rest)?;
    if t.len() != 3 {
        return Err(lines.err("expected three tolerances"));
    }
    let tolerances = ChartTolerances {
        trace: t[0],
        seam: t[1],
        verify: t[2],
    };
    let rest = lines.keyed("seam-drift")?;
    let seam_drift = lines.float(rest.trim())?;
    let rest = lines.keyed("reference")?;
    let reference = lines.count(Some(rest.trim()))?;
    let rest = lines.keyed("strips")?;
    let m = lines.count(Some(rest.trim()))?;
    if m == 0 || reference >= m {
        return Err(lines.err("bad strip count or reference"));
    }

    let mut strips = Vec::with_capacity(m);
    let mut offsets = Vec::with_capacity(m);
    for _ in 0..m {
        let rest = lines.keyed("strip")?;
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(lines.err("strip header needs six fields"));
        }
        let head = lines.floats(&parts[..4].join(" "))?;
        let half_columns = lines.count(Some(parts[4]))?;
        let rows = lines.count(Some(parts[5]))?;
        if rows < 2 || half_columns == 0 {
            return Err(lines.err("strip too small"));
        }
        let rest = lines.keyed("levels")?;
        let levels = lines.floats(rest)?;
        if levels.len() != rows {
            return Err(lines.err("level count does not match rows"));
        }
        let rest = lines.keyed("anchor")?;
        let mut it = rest.split_whitespace();
        let n = lines.count(it.next())?;
        let truncated = match it.next() {
            Some("true") => true,
            Some("false") => false,
            _ => return Err(lines.err("bad truncated flag")),
        };
        let mut vertices = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let l = lines.next()?;
            let v = lines.floats(l)?;
            if v.len() != 3 {
                return Err(lines.err("anchor vertex needs x y value"));
            }
            vertices.push(Point::new(v[0], v[1]));
            values.push(v[2]);
        }
        let columns = 2 * half_columns + 1;
        let mut samples = Vec::with_capacity(rows * columns);
        for _ in 0..rows {
            let rest = lines.keyed("row")?;
            let v = lines.floats(rest)?;
            if v.len() != 2 * columns {
                return Err(lines.err("row length does not match columns"));
            }
            samples.extend(v.chunks_exact(2).map(|c| Point::new(c[0], c[1])));
        }
        offsets.push(head[2]);
        strips.push(StripChart {
            c_lo: head[0],
            c_hi: head[1],
            anchor: CrossSection {
                vertices,
                values,
                truncated,
            },
            levels,
            column_step: head[3],
            half_columns,
            samples,
        });
    }
    Ok(GlobalChart {
        expression,
        strips,
        offsets,
        reference,
        range,
        tolerances,
        seam_drift,
    })
}
