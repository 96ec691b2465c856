//! Plain-text mesh format and SVG mesh snapshots.
//!
//! ```text
//! vertices 4
//! 0 0 0 1
//! 1 1 0 1
//! 2 1 1 1
//! 3 0 1 1
//! elements 2
//! 0 0 1 2 0.5
//! 1 0 2 3 0.25
//! ```
//!
//! Vertex lines are `index x y boundary`, element lines
//! `index v0 v1 v2 [value]`. Either every element line carries a value or
//! none does. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mesh::{Mesh, MeshError, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing '{0}' section")]
    MissingSection(&'static str),
    #[error("expected {expected} {section}, found {found}")]
    Count { section: &'static str, expected: usize, found: usize },
    #[error("boundary flag of vertex {0} disagrees with the mesh topology")]
    BoundaryMismatch(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Parsed content of a mesh file.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshText {
    pub vertices: Vec<Point>,
    pub boundary: Vec<bool>,
    pub elements: Vec<[usize; 3]>,
    pub values: Option<Vec<f64>>,
}

impl MeshText {
    pub fn from_mesh(mesh: &Mesh, values: Option<&[f64]>) -> MeshText {
        MeshText {
            vertices: mesh.vertices().to_vec(),
            boundary: mesh.boundary_flags().to_vec(),
            elements: mesh.elements().to_vec(),
            values: values.map(|v| v.to_vec()),
        }
    }

    /// Builds the mesh, rejects hanging nodes and checks the stored boundary
    /// flags against it.
    pub fn to_mesh(&self) -> Result<Mesh, ParseError> {
        let mesh = Mesh::from_parts(self.vertices.clone(), self.elements.clone())?;
        mesh.check_conforming()?;
        for (v, &b) in self.boundary.iter().enumerate() {
            if mesh.is_boundary(v) != b {
                return Err(ParseError::BoundaryMismatch(v));
            }
        }
        Ok(mesh)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "vertices {}", self.vertices.len()).unwrap();
        for (i, (p, b)) in self.vertices.iter().zip(&self.boundary).enumerate() {
            writeln!(s, "{i} {:?} {:?} {}", p[0], p[1], u8::from(*b)).unwrap();
        }
        writeln!(s, "elements {}", self.elements.len()).unwrap();
        for (i, t) in self.elements.iter().enumerate() {
            write!(s, "{i} {} {} {}", t[0], t[1], t[2]).unwrap();
            if let Some(v) = &self.values {
                write!(s, " {:?}", v[i]).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

fn header(line: usize, text: &str, name: &'static str) -> Result<usize, ParseError> {
    let mut it = text.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(n), Some(count), None) if n == name => {
            count.parse().map_err(|_| syntax(line, format!("bad {name} count '{count}'")))
        }
        _ => Err(syntax(line, format!("expected '{name} <count>'"))),
    }
}

fn field<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| syntax(line, format!("bad {what} '{tok}'")))
}

fn finite(line: usize, x: f64, what: &str) -> Result<f64, ParseError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(syntax(line, format!("{what} is not finite")))
    }
}

/// Parses the text format. Indices must run from 0 in order.
pub fn parse_mesh_text(text: &str) -> Result<MeshText, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, first) = lines.next().ok_or(ParseError::MissingSection("vertices"))?;
    let nv = header(ln, first, "vertices")?;
    // counts come from untrusted input; grow as lines arrive
    let mut vertices = Vec::with_capacity(nv.min(1 << 16));
    let mut boundary = Vec::with_capacity(nv.min(1 << 16));
    for k in 0..nv {
        let (ln, l) = lines.next().ok_or(ParseError::Count { section: "vertices", expected: nv, found: k })?;
        let mut it = l.split_whitespace();
        let idx: usize = field(ln, it.next(), "vertex index")?;
        if idx != k {
            return Err(syntax(ln, format!("vertex index {idx} out of order, expected {k}")));
        }
        let x = finite(ln, field(ln, it.next(), "x")?, "x")?;
        let y = finite(ln, field(ln, it.next(), "y")?, "y")?;
        let b: u8 = field(ln, it.next(), "boundary flag")?;
        if b > 1 {
            return Err(syntax(ln, "boundary flag must be 0 or 1"));
        }
        if it.next().is_some() {
            return Err(syntax(ln, "trailing fields"));
        }
        vertices.push([x, y]);
        boundary.push(b == 1);
    }

    let (ln, l) = lines.next().ok_or(ParseError::MissingSection("elements"))?;
    let ne = header(ln, l, "elements")?;
    let mut elements = Vec::with_capacity(ne.min(1 << 16));
    let mut values: Vec<f64> = Vec::new();
    let mut with_values: Option<bool> = None;
    for k in 0..ne {
        let (ln, l) = lines.next().ok_or(ParseError::Count { section: "elements", expected: ne, found: k })?;
        let mut it = l.split_whitespace();
        let idx: usize = field(ln, it.next(), "element index")?;
        if idx != k {
            return Err(syntax(ln, format!("element index {idx} out of order, expected {k}")));
        }
        let mut t = [0usize; 3];
        for (j, slot) in t.iter_mut().enumerate() {
            *slot = field(ln, it.next(), &format!("vertex {j}"))?;
            if *slot >= nv {
                return Err(syntax(ln, format!("vertex {slot} out of range")));
            }
        }
        let value = it.next().map(|tok| field::<f64>(ln, Some(tok), "value")).transpose()?;
        if it.next().is_some() {
            return Err(syntax(ln, "trailing fields"));
        }
        match (with_values, value) {
            (None, v) => with_values = Some(v.is_some()),
            (Some(true), None) | (Some(false), Some(_)) => {
                return Err(syntax(ln, "either all or no elements carry a value"));
            }
            _ => {}
        }
        if let Some(v) = value {
            values.push(finite(ln, v, "value")?);
        }
        elements.push(t);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(syntax(ln, "unexpected content after the elements section"));
    }
    let values = if with_values == Some(true) { Some(values) } else { None };
    Ok(MeshText { vertices, boundary, elements, values })
}

/// Color ramp from dark blue through teal to yellow, `t ∈ [0, 1]`.
fn ramp(t: f64) -> String {
    let stops = [(0.0, [68.0, 1.0, 84.0]), (0.5, [33.0, 145.0, 140.0]), (1.0, [253.0, 231.0, 37.0])];
    let t = t.clamp(0.0, 1.0);
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let s = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] + s * (b.1[i] - a.1[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// SVG drawing of the mesh; element fill follows `values` on a log scale
/// when given.
pub fn mesh_svg(mesh: &Mesh, values: Option<&[f64]>) -> String {
    let size = 800.0;
    let margin = 20.0;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in mesh.vertices() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let scale = (size - 2.0 * margin) / span;
    let map = |p: Point| (margin + (p[0] - lo[0]) * scale, size - margin - (p[1] - lo[1]) * scale);

    let logs: Option<(Vec<f64>, f64, f64)> = values.map(|v| {
        let positive = v.iter().copied().filter(|x| *x > 0.0);
        let vmax = positive.clone().fold(f64::NEG_INFINITY, f64::max);
        let vmin = positive.fold(f64::INFINITY, f64::min).max(vmax * 1e-12);
        let l: Vec<f64> = v.iter().map(|x| if *x > 0.0 { x.max(vmin).log10() } else { f64::NAN }).collect();
        (l, vmin.log10(), vmax.log10())
    });

    let stroke = (0.6f64).min(200.0 / (mesh.num_elements() as f64).sqrt().max(1.0));
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for e in 0..mesh.num_elements() {
        let pts: Vec<String> = mesh.corners(e).iter().map(|&p| map(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let fill = match &logs {
            Some((l, a, b)) if l[e].is_finite() => ramp(if b > a { (l[e] - a) / (b - a) } else { 1.0 }),
            Some(_) => ramp(0.0),
            None => "#f4f4f4".to_string(),
        };
        writeln!(s, r#"<polygon points="{}" fill="{fill}" stroke="black" stroke-width="{stroke:.3}"/>"#, pts.join(" ")).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
