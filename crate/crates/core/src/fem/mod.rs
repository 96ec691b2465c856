//! P1 finite element machinery on a [`Mesh`] with homogeneous Dirichlet
//! conditions: degree-of-freedom maps, element geometry, assembly of model
//! operators and residuals, energies and errors.

pub mod quadrature;

use thiserror::Error;

use crate::linalg::{dot, SparseSpd};
use crate::mesh::{Mesh, Point};
use crate::models::{EnergyModel, NormSpec};
pub use quadrature::QuadratureRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("model has no exact solution")]
    NoExactSolution,
    #[error("coefficient count {got} does not match {expected} degrees of freedom")]
    Dimension { expected: usize, got: usize },
    #[error("exact solution gradient undefined at ({0}, {1})")]
    SingularPoint(f64, f64),
}

/// Affine triangle data: corners, area and the constant gradients of the
/// three barycentric hat functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub corners: [Point; 3],
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(corners: [Point; 3]) -> ElementGeometry {
        let [a, b, c] = corners;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let grads = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        ElementGeometry { corners, area: 0.5 * det, grads }
    }

    pub fn point(&self, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.corners;
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    pub fn gradient(&self, vals: [f64; 3]) -> [f64; 2] {
        let g = &self.grads;
        [
            vals[0] * g[0][0] + vals[1] * g[1][0] + vals[2] * g[2][0],
            vals[0] * g[0][1] + vals[1] * g[1][1] + vals[2] * g[2][1],
        ]
    }

    pub fn stiffness(&self) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let v = self.area * (self.grads[i][0] * self.grads[j][0] + self.grads[i][1] * self.grads[j][1]);
                k[i][j] = v;
                k[j][i] = v;
            }
        }
        k
    }

    /// Consistent mass matrix (exact for products of hats).
    pub fn mass(&self) -> [[f64; 3]; 3] {
        let d = self.area / 6.0;
        let o = self.area / 12.0;
        [[d, o, o], [o, d, o], [o, o, d]]
    }

    /// Barycentric interpolation of nodal values.
    pub fn eval(vals: [f64; 3], bary: [f64; 3]) -> f64 {
        vals[0] * bary[0] + vals[1] * bary[1] + vals[2] * bary[2]
    }
}

/// Interior vertex ↔ degree of freedom, numbered by ascending vertex index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    vertex_to_dof: Vec<Option<usize>>,
    dof_to_vertex: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> DofMap {
        let dof_to_vertex = mesh.interior_vertices();
        let mut vertex_to_dof = vec![None; mesh.num_vertices()];
        for (d, &v) in dof_to_vertex.iter().enumerate() {
            vertex_to_dof[v] = Some(d);
        }
        DofMap { vertex_to_dof, dof_to_vertex }
    }

    pub fn len(&self) -> usize {
        self.dof_to_vertex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_vertex.is_empty()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.vertex_to_dof[vertex]
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.dof_to_vertex[dof]
    }

    /// Expands coefficients to all vertices, zero on the boundary.
    pub fn vertex_values(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.vertex_to_dof.len()];
        for (d, &x) in coefficients.iter().enumerate() {
            v[self.dof_to_vertex[d]] = x;
        }
        v
    }
}

/// Interior nodal coefficients of a P1 function; boundary values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(n: usize) -> FeFunction {
        FeFunction { coefficients: vec![0.0; n] }
    }

    pub fn new(coefficients: Vec<f64>) -> FeFunction {
        FeFunction { coefficients }
    }

    /// Nodal interpolant of `f` on the interior vertices.
    pub fn interpolate(mesh: &Mesh, dofs: &DofMap, f: impl Fn(Point) -> f64) -> FeFunction {
        FeFunction { coefficients: (0..dofs.len()).map(|d| f(mesh.vertex(dofs.vertex(d)))).collect() }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients.iter().all(|x| x.is_finite())
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &FeFunction) -> FeFunction {
        FeFunction { coefficients: self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a + c * b).collect() }
    }
}

/// Gram matrix of `‖∇v‖²` or `‖∇v‖² + η‖v‖²` on the interior dofs.
pub fn assemble_gram(mesh: &Mesh, dofs: &DofMap, norm: NormSpec) -> SparseSpd {
    let eta = match norm {
        NormSpec::H1Seminorm => 0.0,
        NormSpec::EtaNorm(eta) => eta,
    };
    assemble_element_matrices(mesh, dofs, |e| {
        let geo = ElementGeometry::new(mesh.corners(e));
        let mut k = geo.stiffness();
        if eta != 0.0 {
            let m = geo.mass();
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] += eta * m[i][j];
                }
            }
        }
        k
    })
}

fn assemble_element_matrices(mesh: &Mesh, dofs: &DofMap, local: impl Fn(usize) -> [[f64; 3]; 3]) -> SparseSpd {
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let t = mesh.element(e);
        let k = local(e);
        for i in 0..3 {
            let Some(di) = dofs.dof(t[i]) else { continue };
            for j in 0..3 {
                let Some(dj) = dofs.dof(t[j]) else { continue };
                triplets.push((di, dj, k[i][j]));
            }
        }
    }
    SparseSpd::from_triplets(dofs.len(), triplets)
}

/// A model bound to a mesh, with per-element geometry and load vectors
/// precomputed.
pub struct Discretization<'a> {
    model: &'a dyn EnergyModel,
    mesh: &'a Mesh,
    dofs: DofMap,
    geometry: Vec<ElementGeometry>,
    loads: Vec<[f64; 3]>,
}

impl<'a> Discretization<'a> {
    pub fn new(model: &'a dyn EnergyModel, mesh: &'a Mesh) -> Discretization<'a> {
        let geometry: Vec<ElementGeometry> =
            (0..mesh.num_elements()).map(|e| ElementGeometry::new(mesh.corners(e))).collect();
        let loads = geometry.iter().map(|g| model.element_load(g)).collect();
        Discretization { model, mesh, dofs: DofMap::new(mesh), geometry, loads }
    }

    pub fn model(&self) -> &'a dyn EnergyModel {
        self.model
    }

    pub fn mesh(&self) -> &'a Mesh {
        self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn num_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    pub fn load(&self, e: usize) -> [f64; 3] {
        self.loads[e]
    }

    pub fn local_values(&self, e: usize, vertex_values: &[f64]) -> [f64; 3] {
        self.mesh.element(e).map(|v| vertex_values[v])
    }

    fn check(&self, u: &FeFunction) -> Result<(), FemError> {
        if u.len() != self.dofs.len() {
            return Err(FemError::Dimension { expected: self.dofs.len(), got: u.len() });
        }
        Ok(())
    }

    /// Energy of element `e` for nodal values `vals`, load term included.
    pub fn element_energy(&self, e: usize, vals: [f64; 3]) -> f64 {
        self.model.element_energy(&self.geometry[e], vals) - dot(&self.loads[e], &vals)
    }

    /// `⟨E'(v), φ_i⟩` restricted to element `e`, load term included.
    pub fn element_residual(&self, e: usize, vals: [f64; 3]) -> [f64; 3] {
        let r = self.model.element_residual(&self.geometry[e], vals);
        let l = self.loads[e];
        [r[0] - l[0], r[1] - l[1], r[2] - l[2]]
    }

    pub fn element_energies(&self, u: &FeFunction) -> Result<Vec<f64>, FemError> {
        self.check(u)?;
        let vv = self.dofs.vertex_values(u.coefficients());
        Ok((0..self.mesh.num_elements()).map(|e| self.element_energy(e, self.local_values(e, &vv))).collect())
    }

    pub fn energy(&self, u: &FeFunction) -> Result<f64, FemError> {
        Ok(self.element_energies(u)?.iter().sum())
    }

    /// `r_i = ⟨E'(u), φ_i⟩` for every interior hat function.
    pub fn assemble_residual(&self, u: &FeFunction) -> Result<Vec<f64>, FemError> {
        self.check(u)?;
        let vv = self.dofs.vertex_values(u.coefficients());
        let mut r = vec![0.0; self.dofs.len()];
        for e in 0..self.mesh.num_elements() {
            let t = self.mesh.element(e);
            let re = self.element_residual(e, self.local_values(e, &vv));
            for i in 0..3 {
                if let Some(d) = self.dofs.dof(t[i]) {
                    r[d] += re[i];
                }
            }
        }
        Ok(r)
    }

    /// Matrix of the linearization operator `A[u]` on the interior dofs.
    pub fn assemble_linearization(&self, u: &FeFunction) -> Result<SparseSpd, FemError> {
        self.check(u)?;
        let vv = self.dofs.vertex_values(u.coefficients());
        Ok(assemble_element_matrices(self.mesh, &self.dofs, |e| {
            self.model.element_linearization(&self.geometry[e], self.local_values(e, &vv))
        }))
    }

    pub fn assemble_gram(&self) -> SparseSpd {
        assemble_gram(self.mesh, &self.dofs, self.model.norm())
    }

    /// Central-difference check of the residual against the energy:
    /// `|⟨E'(u), w⟩ − (E(u+tw) − E(u−tw))/(2t)| / max(1, |⟨E'(u), w⟩|)`.
    pub fn fd_gradient_check(&self, u: &FeFunction, w: &FeFunction, t: f64) -> Result<f64, FemError> {
        self.check(w)?;
        let g = dot(&self.assemble_residual(u)?, w.coefficients());
        let plus = self.energy(&u.axpy(t, w))?;
        let minus = self.energy(&u.axpy(-t, w))?;
        let fd = (plus - minus) / (2.0 * t);
        Ok((g - fd).abs() / g.abs().max(1.0))
    }

    /// `‖∇(u* − u)‖` with the default degree-6 rule.
    pub fn h1_error(&self, u: &FeFunction) -> Result<f64, FemError> {
        self.h1_error_with(u, &QuadratureRule::degree6())
    }

    pub fn h1_error_with(&self, u: &FeFunction, rule: &QuadratureRule) -> Result<f64, FemError> {
        self.check(u)?;
        let exact = self.model.exact_solution().ok_or(FemError::NoExactSolution)?;
        let vv = self.dofs.vertex_values(u.coefficients());
        let mut total = 0.0;
        for e in 0..self.mesh.num_elements() {
            let geo = &self.geometry[e];
            let gu = geo.gradient(self.local_values(e, &vv));
            let mut s = 0.0;
            for (b, w) in rule.iter() {
                let p = geo.point(b);
                let g = exact.gradient(p).map_err(|_| FemError::SingularPoint(p[0], p[1]))?;
                s += w * ((g[0] - gu[0]).powi(2) + (g[1] - gu[1]).powi(2));
            }
            total += geo.area * s;
        }
        Ok(total.sqrt())
    }
}
