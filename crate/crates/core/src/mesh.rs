//! Conforming triangulations with red-green refinement.
//!
//! A [`Mesh`] is an immutable snapshot. Refinement produces a new snapshot
//! together with a [`Prolongation`] that carries P1 coefficient arrays from
//! the old interior vertices to the new ones.
//!
//! Local edge `i` of an element `[v0, v1, v2]` joins `v[i]` and `v[(i + 1) % 3]`;
//! the opposite vertex is `v[(i + 2) % 3]`.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("subdivision count must be at least 1")]
    InvalidSubdivision,
    #[error("element index {index} out of range (mesh has {len} elements)")]
    ElementOutOfRange { index: usize, len: usize },
    #[error("vertex index {index} out of range (mesh has {len} vertices)")]
    VertexOutOfRange { index: usize, len: usize },
    #[error("refinement needs at least one marked element")]
    EmptyMarking,
    #[error("element {0} has non-positive signed area")]
    NonPositiveArea(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("edge ({0}, {1}) is shared by more than two elements or repeated with the same orientation")]
    NonManifoldEdge(usize, usize),
    #[error("element {element} has a hanging node on edge ({a}, {b})")]
    HangingNode { element: usize, a: usize, b: usize },
    #[error("green refinement metadata of element {0} is inconsistent")]
    BadGreenInfo(usize),
    #[error("mesh has no elements")]
    Empty,
}

/// Provenance of a green closure child: the element it was bisected from.
///
/// The parent is stored as `[a, b, c]` with the bisected edge `(a, b)`; the
/// children are `[a, m, c]` and `[m, b, c]` for the midpoint `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreenInfo {
    pub parent: [usize; 3],
    pub sibling: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    neighbors: Vec<[Option<usize>; 3]>,
    green: Vec<Option<GreenInfo>>,
    generation: Vec<u32>,
    /// Edge whose bisection created the vertex; `None` for initial vertices.
    origin: Vec<Option<[usize; 2]>>,
    star_offsets: Vec<usize>,
    star: Vec<usize>,
}

/// An element together with its facewise neighbours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchRef {
    pub center: usize,
    pub members: Vec<usize>,
}

/// Where a vertex of a virtual patch comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalVertex {
    Mesh(usize),
    Midpoint(usize, usize),
}

/// The locally refined patch around an element: red children of the
/// element, green children of each facewise neighbour. Never committed to
/// the mesh; used to evaluate local enrichments.
#[derive(Debug, Clone)]
pub struct VirtualRefinedPatch {
    pub center: usize,
    pub local_vertices: Vec<Point>,
    pub sources: Vec<LocalVertex>,
    pub child_elements: Vec<[usize; 3]>,
    pub parent_map: Vec<usize>,
    pub interior_vertex_ids: Vec<usize>,
}

impl VirtualRefinedPatch {
    /// Distinct mesh elements covered by the patch, in first-seen order.
    pub fn parents(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(4);
        for &p in &self.parent_map {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    /// Values of a P1 function at the local vertices, given its values at
    /// the mesh vertices.
    pub fn interpolate(&self, vertex_values: &[f64]) -> Vec<f64> {
        self.sources
            .iter()
            .map(|s| match *s {
                LocalVertex::Mesh(v) => vertex_values[v],
                LocalVertex::Midpoint(a, b) => 0.5 * (vertex_values[a] + vertex_values[b]),
            })
            .collect()
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Structured diagonal-split grid on `(0,1)²` with `n` cells per side.
pub fn unit_square_mesh(n: usize) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidSubdivision);
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (bl, br, tr, tl) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push([bl, br, tr]);
            elements.push([bl, tr, tl]);
        }
    }
    Mesh::from_parts(vertices, elements)
}

/// L-shaped domain `(-1,1)² \ [0,1]×[-1,0]`, each of the three unit squares
/// meshed like [`unit_square_mesh`] and glued along shared grid lines.
pub fn lshape_mesh(n: usize) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidSubdivision);
    }
    let n = n as i64;
    let h = 1.0 / n as f64;
    // integer lattice keys make gluing exact
    let mut ids: HashMap<(i64, i64), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |i: i64, j: i64, vertices: &mut Vec<Point>| -> usize {
        *ids.entry((i, j)).or_insert_with(|| {
            vertices.push([i as f64 * h, j as f64 * h]);
            vertices.len() - 1
        })
    };
    let mut elements = Vec::new();
    for j in -n..n {
        for i in -n..n {
            if i >= 0 && j < 0 {
                continue;
            }
            let bl = vid(i, j, &mut vertices);
            let br = vid(i + 1, j, &mut vertices);
            let tr = vid(i + 1, j + 1, &mut vertices);
            let tl = vid(i, j + 1, &mut vertices);
            elements.push([bl, br, tr]);
            elements.push([bl, tr, tl]);
        }
    }
    Mesh::from_parts(vertices, elements)
}

impl Mesh {
    /// Builds a mesh from raw vertex and element arrays, validating
    /// orientation and edge manifoldness. Boundary flags are derived from
    /// edges with a single adjacent element.
    pub fn from_parts(vertices: Vec<Point>, elements: Vec<[usize; 3]>) -> Result<Mesh, MeshError> {
        let n = elements.len();
        let origin = vec![None; vertices.len()];
        Self::assemble(vertices, elements, vec![None; n], vec![0; n], origin)
    }

    fn assemble(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        green: Vec<Option<GreenInfo>>,
        generation: Vec<u32>,
        origin: Vec<Option<[usize; 2]>>,
    ) -> Result<Mesh, MeshError> {
        if elements.is_empty() {
            return Err(MeshError::Empty);
        }
        for (i, p) in vertices.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(MeshError::NonFiniteVertex(i));
            }
        }
        let nv = vertices.len();
        for (e, t) in elements.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange { index: v, len: nv });
                }
            }
            let area = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if !(area > 0.0) {
                return Err(MeshError::NonPositiveArea(e));
            }
        }

        // directed edge -> (element, local edge)
        let mut directed: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * elements.len());
        for (e, t) in elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                if directed.insert((a, b), (e, i)).is_some() {
                    return Err(MeshError::NonManifoldEdge(a, b));
                }
            }
        }
        let mut neighbors = vec![[None; 3]; elements.len()];
        let mut boundary = vec![false; nv];
        for (e, t) in elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                match directed.get(&(b, a)) {
                    Some(&(f, _)) => neighbors[e][i] = Some(f),
                    None => {
                        boundary[a] = true;
                        boundary[b] = true;
                    }
                }
            }
        }

        let mut counts = vec![0usize; nv + 1];
        for t in &elements {
            for &v in t {
                counts[v + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut star = vec![0; counts[nv]];
        for (e, t) in elements.iter().enumerate() {
            for &v in t {
                star[fill[v]] = e;
                fill[v] += 1;
            }
        }

        for (e, g) in green.iter().enumerate() {
            if let Some(g) = g {
                let ok = g.sibling < elements.len()
                    && g.sibling != e
                    && green[g.sibling].map(|s| s.parent == g.parent && s.sibling == e) == Some(true);
                if !ok {
                    return Err(MeshError::BadGreenInfo(e));
                }
            }
        }

        Ok(Mesh {
            vertices,
            elements,
            boundary,
            neighbors,
            green,
            generation,
            origin,
            star_offsets: counts,
            star,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn element(&self, e: usize) -> [usize; 3] {
        self.elements[e]
    }

    pub fn corners(&self, e: usize) -> [Point; 3] {
        let t = self.elements[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn neighbors(&self, e: usize) -> [Option<usize>; 3] {
        self.neighbors[e]
    }

    pub fn green_info(&self, e: usize) -> Option<GreenInfo> {
        self.green[e]
    }

    pub fn is_green(&self, e: usize) -> bool {
        self.green[e].is_some()
    }

    pub fn generation(&self, e: usize) -> u32 {
        self.generation[e]
    }

    /// Elements sharing vertex `v`.
    pub fn vertex_star(&self, v: usize) -> &[usize] {
        &self.star[self.star_offsets[v]..self.star_offsets[v + 1]]
    }

    /// Non-boundary vertices in ascending index order; this is the canonical
    /// degree-of-freedom numbering.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| !self.boundary[v]).collect()
    }

    pub fn num_interior_vertices(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.corners(e);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.area(e)).sum()
    }

    /// Longest edge length.
    pub fn diameter(&self, e: usize) -> f64 {
        let [a, b, c] = self.corners(e);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Longest edge over inradius.
    pub fn shape_ratio(&self, e: usize) -> f64 {
        let [a, b, c] = self.corners(e);
        let (l0, l1, l2) = (dist(a, b), dist(b, c), dist(c, a));
        let inradius = 2.0 * signed_area(a, b, c) / (l0 + l1 + l2);
        l0.max(l1).max(l2) / inradius
    }

    pub fn max_shape_ratio(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.shape_ratio(e)).fold(0.0, f64::max)
    }

    /// Verifies that no vertex lies in the interior of any element edge and
    /// that all elements are positively oriented.
    pub fn check_conforming(&self) -> Result<(), MeshError> {
        for e in 0..self.num_elements() {
            if !(self.area(e) > 0.0) {
                return Err(MeshError::NonPositiveArea(e));
            }
        }
        // a vertex on an element edge (other than its endpoints) must be a
        // hanging node; checking midpoint provenance covers refined meshes,
        // the geometric scan below covers arbitrary input
        let mut by_coord: HashMap<(u64, u64), usize> = HashMap::with_capacity(self.vertices.len());
        for (i, p) in self.vertices.iter().enumerate() {
            by_coord.insert((p[0].to_bits(), p[1].to_bits()), i);
        }
        let used = self.used_vertices();
        for (e, t) in self.elements.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                let m = midpoint(self.vertices[a], self.vertices[b]);
                if let Some(&v) = by_coord.get(&(m[0].to_bits(), m[1].to_bits())) {
                    if used[v] {
                        return Err(MeshError::HangingNode { element: e, a, b });
                    }
                }
                if self.neighbors[e][i].is_none() && !(self.boundary[a] && self.boundary[b]) {
                    return Err(MeshError::NonManifoldEdge(a, b));
                }
            }
        }
        Ok(())
    }

    fn used_vertices(&self) -> Vec<bool> {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.elements {
            for &v in t {
                used[v] = true;
            }
        }
        used
    }

    fn check_element(&self, e: usize) -> Result<(), MeshError> {
        if e >= self.num_elements() {
            Err(MeshError::ElementOutOfRange { index: e, len: self.num_elements() })
        } else {
            Ok(())
        }
    }

    /// The element and its edge-adjacent neighbours.
    pub fn facewise_patch(&self, e: usize) -> Result<PatchRef, MeshError> {
        self.check_element(e)?;
        let mut members = vec![e];
        members.extend(self.neighbors[e].iter().flatten().copied());
        Ok(PatchRef { center: e, members })
    }

    /// Red refinement of `e` plus green bisection of each facewise neighbour
    /// towards the shared-edge midpoint.
    pub fn build_refined_patch(&self, e: usize) -> Result<VirtualRefinedPatch, MeshError> {
        self.check_element(e)?;
        let t = self.elements[e];
        let mut sources: Vec<LocalVertex> = t.iter().map(|&v| LocalVertex::Mesh(v)).collect();
        for i in 0..3 {
            sources.push(LocalVertex::Midpoint(t[i], t[(i + 1) % 3]));
        }
        // local ids: corners 0,1,2; midpoint of edge i is 3 + i
        let mut child_elements = vec![[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]];
        let mut parent_map = vec![e; 4];
        let mut interior = Vec::with_capacity(6);
        for i in 0..3 {
            let Some(f) = self.neighbors[e][i] else { continue };
            interior.push(3 + i);
            let ft = self.elements[f];
            let opposite = ft
                .iter()
                .copied()
                .find(|&v| v != t[i] && v != t[(i + 1) % 3])
                .expect("neighbour shares exactly one edge");
            let o = match sources.iter().position(|s| *s == LocalVertex::Mesh(opposite)) {
                Some(o) => o,
                None => {
                    sources.push(LocalVertex::Mesh(opposite));
                    sources.len() - 1
                }
            };
            // the neighbour traverses the shared edge as (t[i+1], t[i])
            let (p, q) = (i, (i + 1) % 3);
            child_elements.push([q, 3 + i, o]);
            child_elements.push([3 + i, p, o]);
            parent_map.push(f);
            parent_map.push(f);
        }
        let members: Vec<usize> = {
            let mut m = vec![e];
            m.extend(self.neighbors[e].iter().flatten().copied());
            m
        };
        for (local, s) in sources.iter().enumerate() {
            if let LocalVertex::Mesh(v) = *s {
                if !self.boundary[v] && self.vertex_star(v).iter().all(|x| members.contains(x)) {
                    interior.push(local);
                }
            }
        }
        interior.sort_unstable();
        let local_vertices = sources
            .iter()
            .map(|s| match *s {
                LocalVertex::Mesh(v) => self.vertices[v],
                LocalVertex::Midpoint(a, b) => midpoint(self.vertices[a], self.vertices[b]),
            })
            .collect();
        Ok(VirtualRefinedPatch {
            center: e,
            local_vertices,
            sources,
            child_elements,
            parent_map,
            interior_vertex_ids: interior,
        })
    }

    /// Red-green refinement with closure.
    ///
    /// Marked green children are replaced by red refinement of their parent.
    /// Afterwards, elements with two or more hanging nodes are refined red and
    /// green children with any hanging node have their parent refined red,
    /// until every remaining element has at most one hanging node, which is
    /// then removed by green bisection.
    pub fn refine(&self, marked: &[usize]) -> Result<(Mesh, Prolongation), MeshError> {
        if marked.is_empty() {
            return Err(MeshError::EmptyMarking);
        }
        for &e in marked {
            self.check_element(e)?;
        }
        let mut work = Work::new(self);
        let mut red: BTreeSet<usize> = marked.iter().copied().collect();
        loop {
            while !red.is_empty() {
                let mut targets = BTreeSet::new();
                for &e in &red {
                    if !work.alive(e) {
                        continue;
                    }
                    if work.elems[e].as_ref().unwrap().green.is_some() {
                        targets.insert(work.unrefine_green(e));
                    } else {
                        targets.insert(e);
                    }
                }
                for e in targets {
                    work.red_refine(e);
                }
                red.clear();
                for e in 0..work.elems.len() {
                    let Some(el) = &work.elems[e] else { continue };
                    let h = work.hanging_count(el.v);
                    if (el.green.is_some() && h >= 1) || h >= 2 {
                        red.insert(e);
                    }
                }
            }
            for e in 0..work.elems.len() {
                let Some(el) = &work.elems[e] else { continue };
                if el.green.is_none() {
                    if let Some(i) = work.single_hanging_edge(el.v) {
                        work.green_split(e, i);
                    }
                }
            }
            for e in 0..work.elems.len() {
                let Some(el) = &work.elems[e] else { continue };
                if work.hanging_count(el.v) >= 1 {
                    red.insert(e);
                }
            }
            if red.is_empty() {
                break;
            }
        }
        work.finish(self)
    }
}

#[derive(Debug, Clone)]
struct WorkElem {
    v: [usize; 3],
    /// (parent vertices, sibling work id)
    green: Option<([usize; 3], usize)>,
    generation: u32,
}

struct Work {
    vertices: Vec<Point>,
    origin: Vec<Option<[usize; 2]>>,
    elems: Vec<Option<WorkElem>>,
    midpoints: HashMap<(usize, usize), usize>,
    use_count: Vec<u32>,
}

impl Work {
    fn new(mesh: &Mesh) -> Work {
        let mut midpoints = HashMap::new();
        for (v, o) in mesh.origin.iter().enumerate() {
            if let Some([a, b]) = *o {
                midpoints.insert(edge_key(a, b), v);
            }
        }
        let mut use_count = vec![0; mesh.vertices.len()];
        for t in &mesh.elements {
            for &v in t {
                use_count[v] += 1;
            }
        }
        let elems = (0..mesh.num_elements())
            .map(|e| {
                Some(WorkElem {
                    v: mesh.elements[e],
                    green: mesh.green[e].map(|g| (g.parent, g.sibling)),
                    generation: mesh.generation[e],
                })
            })
            .collect();
        Work { vertices: mesh.vertices.clone(), origin: mesh.origin.clone(), elems, midpoints, use_count }
    }

    fn alive(&self, e: usize) -> bool {
        self.elems.get(e).map(|x| x.is_some()).unwrap_or(false)
    }

    fn add(&mut self, el: WorkElem) -> usize {
        for &v in &el.v {
            self.use_count[v] += 1;
        }
        self.elems.push(Some(el));
        self.elems.len() - 1
    }

    fn remove(&mut self, e: usize) -> WorkElem {
        let el = self.elems[e].take().expect("element alive");
        for &v in &el.v {
            self.use_count[v] -= 1;
        }
        el
    }

    fn midpoint_vertex(&mut self, a: usize, b: usize) -> usize {
        let key = edge_key(a, b);
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        self.vertices.push(midpoint(self.vertices[key.0], self.vertices[key.1]));
        self.origin.push(Some([key.0, key.1]));
        self.use_count.push(0);
        let m = self.vertices.len() - 1;
        self.midpoints.insert(key, m);
        m
    }

    fn is_hanging(&self, a: usize, b: usize) -> bool {
        match self.midpoints.get(&edge_key(a, b)) {
            Some(&m) => self.use_count[m] > 0,
            None => false,
        }
    }

    fn hanging_count(&self, v: [usize; 3]) -> usize {
        (0..3).filter(|&i| self.is_hanging(v[i], v[(i + 1) % 3])).count()
    }

    fn single_hanging_edge(&self, v: [usize; 3]) -> Option<usize> {
        let edges: Vec<usize> = (0..3).filter(|&i| self.is_hanging(v[i], v[(i + 1) % 3])).collect();
        (edges.len() == 1).then(|| edges[0])
    }

    /// Removes a green pair and restores its parent; returns the parent id.
    fn unrefine_green(&mut self, e: usize) -> usize {
        let el = self.elems[e].clone().expect("alive");
        let (parent, sibling) = el.green.expect("green child");
        self.remove(e);
        if self.alive(sibling) {
            self.remove(sibling);
        }
        self.add(WorkElem { v: parent, green: None, generation: el.generation.saturating_sub(1) })
    }

    fn red_refine(&mut self, e: usize) {
        let el = self.remove(e);
        let [a, b, c] = el.v;
        let mab = self.midpoint_vertex(a, b);
        let mbc = self.midpoint_vertex(b, c);
        let mca = self.midpoint_vertex(c, a);
        let g = el.generation + 1;
        for v in [[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]] {
            self.add(WorkElem { v, green: None, generation: g });
        }
    }

    fn green_split(&mut self, e: usize, edge: usize) {
        let el = self.remove(e);
        let v = el.v;
        let (a, b, c) = (v[edge], v[(edge + 1) % 3], v[(edge + 2) % 3]);
        let m = self.midpoint_vertex(a, b);
        let parent = [a, b, c];
        let g = el.generation + 1;
        let first = self.elems.len();
        self.add(WorkElem { v: [a, m, c], green: Some((parent, first + 1)), generation: g });
        self.add(WorkElem { v: [m, b, c], green: Some((parent, first)), generation: g });
    }

    fn finish(self, old: &Mesh) -> Result<(Mesh, Prolongation), MeshError> {
        let mut remap = vec![usize::MAX; self.elems.len()];
        let mut next = 0;
        for (e, el) in self.elems.iter().enumerate() {
            if el.is_some() {
                remap[e] = next;
                next += 1;
            }
        }
        let mut elements = Vec::with_capacity(next);
        let mut green = Vec::with_capacity(next);
        let mut generation = Vec::with_capacity(next);
        for el in self.elems.iter().flatten() {
            elements.push(el.v);
            green.push(el.green.map(|(parent, sibling)| GreenInfo { parent, sibling: remap[sibling] }));
            generation.push(el.generation);
        }
        let new_vertices: Vec<(usize, [usize; 2])> = (old.num_vertices()..self.vertices.len())
            .map(|v| (v, self.origin[v].expect("refinement vertices have an origin")))
            .collect();
        let mesh = Mesh::assemble(self.vertices, elements, green, generation, self.origin)?;
        let prolongation = Prolongation {
            old_boundary: old.boundary.clone(),
            new_boundary: mesh.boundary.clone(),
            new_vertices,
        };
        Ok((mesh, prolongation))
    }
}

/// Nodal interpolation from a coarse P1 space into the refined one.
///
/// Old vertices keep their indices; every new vertex is the midpoint of the
/// edge it was created from, and is listed after both endpoints.
#[derive(Debug, Clone)]
pub struct Prolongation {
    old_boundary: Vec<bool>,
    new_boundary: Vec<bool>,
    new_vertices: Vec<(usize, [usize; 2])>,
}

impl Prolongation {
    pub fn old_dofs(&self) -> usize {
        self.old_boundary.iter().filter(|b| !**b).count()
    }

    pub fn new_dofs(&self) -> usize {
        self.new_boundary.iter().filter(|b| !**b).count()
    }

    /// Extends vertex values (boundary vertices zero) to the refined mesh.
    pub fn vertex_values(&self, old_values: &[f64]) -> Vec<f64> {
        let mut values = old_values.to_vec();
        values.resize(self.new_boundary.len(), 0.0);
        for &(v, [a, b]) in &self.new_vertices {
            values[v] = 0.5 * (values[a] + values[b]);
        }
        values
    }

    /// Maps coefficients on the old interior vertices (ascending vertex
    /// order) to coefficients on the new interior vertices.
    pub fn apply(&self, coefficients: &[f64]) -> Vec<f64> {
        assert_eq!(coefficients.len(), self.old_dofs(), "coefficient count does not match the coarse mesh");
        let mut old_values = vec![0.0; self.old_boundary.len()];
        let mut k = 0;
        for (v, b) in self.old_boundary.iter().enumerate() {
            if !b {
                old_values[v] = coefficients[k];
                k += 1;
            }
        }
        let values = self.vertex_values(&old_values);
        values
            .iter()
            .zip(&self.new_boundary)
            .filter(|(_, b)| !**b)
            .map(|(x, _)| *x)
            .collect()
    }
}
