//! Local energy-reduction indicators on virtually refined patches, Dörfler
//! marking and the refinement step.
//!
//! The indicator of an element `κ` is the energy drop achieved by one
//! linearized step in the space spanned by the hat functions interior to
//! the refined patch around `κ` and the current iterate `u` itself. Energies
//! are evaluated on the mesh obtained by committing that patch refinement,
//! so every indicator is the exact energy drop of a step in a subspace and
//! therefore nonnegative.

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{Discretization, ElementGeometry, FeFunction};
use crate::linalg::{dense_solve, DenseSym};
use crate::mesh::{Mesh, MeshError, VirtualRefinedPatch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptivityError {
    #[error("marking parameter {0} outside (0, 1)")]
    InvalidTheta(f64),
    #[error("indicator field is empty")]
    EmptyField,
    #[error("indicator field contains a non-finite value at element {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("coefficient count {got} does not match {expected} degrees of freedom")]
    Dimension { expected: usize, got: usize },
}

/// Settings of the indicator sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorOptions {
    /// Drop the global degree of freedom `u` from every local space.
    pub local_only: bool,
    /// Largest element count for which the energy of `s·u` outside the patch
    /// is summed directly for every element; above it a Chebyshev
    /// interpolant in `s` is used.
    pub direct_limit: usize,
    pub chebyshev_nodes: usize,
}

impl Default for IndicatorOptions {
    fn default() -> Self {
        IndicatorOptions { local_only: false, direct_limit: 4096, chebyshev_nodes: 32 }
    }
}

/// Values clamped at zero, plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub values: Vec<f64>,
    /// Smallest value before clamping.
    pub raw_min: f64,
    /// Elements whose local system could not be factorized.
    pub degenerate: usize,
    /// `⟨A[u]u, u⟩`
    pub au_u: f64,
    /// `⟨E'(u), u⟩`
    pub ru: f64,
    pub used_interpolant: bool,
}

impl IndicatorField {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Result of one local step.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStep {
    /// Scaling of the global function, `1 + c₀`.
    pub scale: f64,
    /// Coefficients of the interior patch hats, in the order of
    /// `interior_vertex_ids`.
    pub hat_coefficients: Vec<f64>,
    /// Values of `ũ` at the patch vertices.
    pub patch_values: Vec<f64>,
    /// Energy drop.
    pub delta_e: f64,
    pub degenerate: bool,
}

/// Level quantities shared by all indicators.
struct Globals {
    vertex_values: Vec<f64>,
    element_energies: Vec<f64>,
    element_work: Vec<f64>,
    au_u: f64,
    ru: f64,
    use_global: bool,
}

fn globals(disc: &Discretization, u: &FeFunction, local_only: bool) -> Globals {
    let mesh = disc.mesh();
    let vv = disc.dofs().vertex_values(u.coefficients());
    let mut element_energies = Vec::with_capacity(mesh.num_elements());
    let mut element_work = Vec::with_capacity(mesh.num_elements());
    let mut au_u = 0.0;
    for e in 0..mesh.num_elements() {
        let vals = disc.local_values(e, &vv);
        element_energies.push(disc.element_energy(e, vals));
        let r = disc.element_residual(e, vals);
        element_work.push(r[0] * vals[0] + r[1] * vals[1] + r[2] * vals[2]);
        let a = disc.model().element_linearization(disc.geometry(e), vals);
        for i in 0..3 {
            for j in 0..3 {
                au_u += vals[i] * a[i][j] * vals[j];
            }
        }
    }
    let ru = element_work.iter().sum();
    // without a nonzero iterate the global direction carries no information
    let use_global = !local_only && au_u > 0.0;
    Globals { vertex_values: vv, element_energies, element_work, au_u, ru, use_global }
}

/// `⟨A[u]u, u⟩` on the whole mesh.
pub fn global_au_u(disc: &Discretization, u: &FeFunction) -> f64 {
    globals(disc, u, false).au_u
}

struct PatchEval {
    step: LocalStep,
    /// Energy drop without the contribution of elements outside the patch.
    partial: f64,
}

fn child_geometry(patch: &VirtualRefinedPatch, c: usize) -> ElementGeometry {
    let t = patch.child_elements[c];
    ElementGeometry::new(t.map(|v| patch.local_vertices[v]))
}

fn scaled_energy(disc: &Discretization, e: usize, vals: [f64; 3], s: f64) -> f64 {
    disc.element_energy(e, vals.map(|x| s * x))
}

fn solve_patch(disc: &Discretization, g: &Globals, kappa: usize) -> Result<PatchEval, MeshError> {
    let model = disc.model();
    let patch = disc.mesh().build_refined_patch(kappa)?;
    let uloc = patch.interpolate(&g.vertex_values);
    let m = patch.interior_vertex_ids.len();
    let mut local_dof = vec![None; patch.local_vertices.len()];
    for (k, &v) in patch.interior_vertex_ids.iter().enumerate() {
        local_dof[v] = Some(k);
    }
    let n = if g.use_global { m + 1 } else { m };
    let mut a = DenseSym::zeros(n);
    let mut rhs = vec![0.0; n];
    let geos: Vec<ElementGeometry> = (0..patch.child_elements.len()).map(|c| child_geometry(&patch, c)).collect();
    let mut child_work = 0.0;
    for (c, t) in patch.child_elements.iter().enumerate() {
        let geo = &geos[c];
        let vals = t.map(|v| uloc[v]);
        let ac = model.element_linearization(geo, vals);
        let rc = model.element_residual(geo, vals);
        let lc = model.element_load(geo);
        let rc = [rc[0] - lc[0], rc[1] - lc[1], rc[2] - lc[2]];
        child_work += rc[0] * vals[0] + rc[1] * vals[1] + rc[2] * vals[2];
        let au: [f64; 3] = std::array::from_fn(|i| ac[i][0] * vals[0] + ac[i][1] * vals[1] + ac[i][2] * vals[2]);
        for i in 0..3 {
            let Some(di) = local_dof[t[i]] else { continue };
            rhs[di] -= rc[i];
            if g.use_global {
                a.add(di, m, au[i]);
                a.add(m, di, au[i]);
            }
            for j in 0..3 {
                if let Some(dj) = local_dof[t[j]] {
                    a.add(di, dj, ac[i][j]);
                }
            }
        }
    }
    let parents = patch.parents();
    if g.use_global {
        a.set(m, m, g.au_u);
        let parent_work: f64 = parents.iter().map(|&p| g.element_work[p]).sum();
        rhs[m] = -(g.ru - parent_work + child_work);
    }

    let (coeffs, degenerate) = if n == 0 {
        (Vec::new(), false)
    } else {
        match dense_solve(&a, &rhs) {
            Ok(c) if c.iter().all(|x| x.is_finite()) => (c, false),
            _ => (vec![0.0; n], true),
        }
    };
    let scale = if g.use_global { 1.0 + coeffs[m] } else { 1.0 };
    let hat_coefficients = coeffs[..m].to_vec();
    let mut patch_values: Vec<f64> = uloc.iter().map(|x| scale * x).collect();
    for (k, &v) in patch.interior_vertex_ids.iter().enumerate() {
        patch_values[v] += hat_coefficients[k];
    }

    let mut partial = 0.0;
    for &p in &parents {
        let vals = disc.local_values(p, &g.vertex_values);
        partial -= g.element_energies[p] - scaled_energy(disc, p, vals, scale);
    }
    for (c, t) in patch.child_elements.iter().enumerate() {
        let geo = &geos[c];
        let lc = model.element_load(geo);
        let before = t.map(|v| uloc[v]);
        let after = t.map(|v| patch_values[v]);
        let e_before = model.element_energy(geo, before) - dot3(lc, before);
        let e_after = model.element_energy(geo, after) - dot3(lc, after);
        partial += e_before - e_after;
    }
    let step = LocalStep { scale, hat_coefficients, patch_values, delta_e: partial, degenerate };
    Ok(PatchEval { step, partial })
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `Σ_T [e_T(u) − e_T(s·u)]` over all elements.
fn scaling_drop(disc: &Discretization, g: &Globals, s: f64) -> f64 {
    if s == 1.0 {
        return 0.0;
    }
    (0..disc.mesh().num_elements())
        .map(|e| g.element_energies[e] - scaled_energy(disc, e, disc.local_values(e, &g.vertex_values), s))
        .sum()
}

/// Chebyshev interpolant of a function on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    coefficients: Vec<f64>,
}

impl Chebyshev {
    /// Interpolates `f` at `n` Chebyshev points of the first kind.
    pub fn fit(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64 + Sync) -> Chebyshev {
        let n = n.max(1);
        let nodes: Vec<f64> = (0..n).map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos()).collect();
        let values: Vec<f64> = nodes.par_iter().map(|&x| f(0.5 * (a + b) + 0.5 * (b - a) * x)).collect();
        let coefficients = (0..n)
            .map(|j| {
                let s: f64 = (0..n)
                    .map(|k| values[k] * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                let c = 2.0 * s / n as f64;
                if j == 0 {
                    0.5 * c
                } else {
                    c
                }
            })
            .collect();
        Chebyshev { a, b, coefficients }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = if self.b > self.a { (2.0 * x - self.a - self.b) / (self.b - self.a) } else { 0.0 };
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coefficients.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coefficients[0]
    }
}

/// One local step on the patch around `kappa`. The energy drop accounts for
/// the whole (virtually refined) mesh.
pub fn local_enriched_step(
    disc: &Discretization,
    u: &FeFunction,
    kappa: usize,
    local_only: bool,
) -> Result<LocalStep, AdaptivityError> {
    if u.len() != disc.num_dofs() {
        return Err(AdaptivityError::Dimension { expected: disc.num_dofs(), got: u.len() });
    }
    let g = globals(disc, u, local_only);
    let eval = solve_patch(disc, &g, kappa)?;
    let mut step = eval.step;
    step.delta_e = eval.partial + scaling_drop(disc, &g, step.scale);
    Ok(step)
}

/// Indicators of all elements.
pub fn compute_indicators(
    disc: &Discretization,
    u: &FeFunction,
    options: &IndicatorOptions,
) -> Result<IndicatorField, AdaptivityError> {
    if u.len() != disc.num_dofs() {
        return Err(AdaptivityError::Dimension { expected: disc.num_dofs(), got: u.len() });
    }
    let g = globals(disc, u, options.local_only);
    let ne = disc.mesh().num_elements();
    let evals: Vec<PatchEval> =
        (0..ne).into_par_iter().map(|k| solve_patch(disc, &g, k)).collect::<Result<_, MeshError>>()?;

    let use_interpolant = g.use_global && ne > options.direct_limit;
    let values: Vec<f64> = if !g.use_global {
        evals.iter().map(|p| p.partial).collect()
    } else if use_interpolant {
        let (lo, hi) = evals
            .iter()
            .filter(|p| !p.step.degenerate)
            .fold((1.0f64, 1.0f64), |(lo, hi), p| (lo.min(p.step.scale), hi.max(p.step.scale)));
        let pad = (1e-3 * (hi - lo)).max(1e-6);
        let cheb = Chebyshev::fit(lo - pad, hi + pad, options.chebyshev_nodes, |s| scaling_drop(disc, &g, s));
        evals.iter().map(|p| p.partial + if p.step.scale == 1.0 { 0.0 } else { cheb.eval(p.step.scale) }).collect()
    } else {
        evals.par_iter().map(|p| p.partial + scaling_drop(disc, &g, p.step.scale)).collect()
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(AdaptivityError::NonFinite(i));
    }
    let raw_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(IndicatorField {
        values: values.into_iter().map(|v| v.max(0.0)).collect(),
        raw_min,
        degenerate: evals.iter().filter(|p| p.step.degenerate).count(),
        au_u: g.au_u,
        ru: g.ru,
        used_interpolant: use_interpolant,
    })
}

/// Marked elements and whether marking was forced by an all-zero field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marking {
    pub elements: Vec<usize>,
    pub forced: bool,
}

/// Smallest set whose indicator sum reaches `θ` times the total: the
/// largest values first, ties by ascending element index.
pub fn dorfler_mark(values: &[f64], theta: f64) -> Result<Marking, AdaptivityError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(AdaptivityError::InvalidTheta(theta));
    }
    if values.is_empty() {
        return Err(AdaptivityError::EmptyField);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(AdaptivityError::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let total: f64 = order.iter().map(|&i| values[i]).sum();
    if total <= 0.0 {
        return Ok(Marking { elements: vec![0], forced: true });
    }
    let target = theta * total;
    let mut acc = 0.0;
    let mut elements = Vec::new();
    for &i in &order {
        elements.push(i);
        acc += values[i];
        if acc >= target {
            break;
        }
    }
    Ok(Marking { elements, forced: false })
}

/// Refines the marked elements and carries `u` over to the new mesh.
pub fn refine_step(mesh: &Mesh, u: &FeFunction, marked: &[usize]) -> Result<(Mesh, FeFunction), AdaptivityError> {
    let (refined, prolongation) = mesh.refine(marked)?;
    if u.len() != prolongation.old_dofs() {
        return Err(AdaptivityError::Dimension { expected: prolongation.old_dofs(), got: u.len() });
    }
    let v = FeFunction::new(prolongation.apply(u.coefficients()));
    Ok((refined, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{lshape_mesh, unit_square_mesh};
    use crate::models::{EnergyModel, KacanovModel, SemilinearLogModel, SineGordonModel};
    use crate::solver::{run_level, LevelState, SolverConfig};
    use proptest::prelude::*;

    fn converged(model: &dyn EnergyModel, mesh: Mesh) -> LevelState {
        let n = mesh.num_interior_vertices();
        let state = LevelState::new(model, mesh, FeFunction::zeros(n)).unwrap();
        run_level(model, state, &SolverConfig::default()).unwrap()
    }

    /// Every subset of minimal size reaching the target, by enumeration.
    fn minimal_cardinality(values: &[f64], theta: f64) -> usize {
        let total: f64 = values.iter().sum();
        let n = values.len();
        (0u32..1 << n)
            .filter(|mask| {
                let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| values[i]).sum();
                s >= theta * total
            })
            .map(|mask| mask.count_ones() as usize)
            .min()
            .unwrap()
    }

    #[test]
    fn dorfler_examples() {
        assert_eq!(dorfler_mark(&[4.0, 3.0, 2.0, 1.0], 0.4).unwrap().elements, vec![0]);
        assert_eq!(dorfler_mark(&[1.0, 1.0, 1.0, 1.0], 0.5).unwrap().elements, vec![0, 1]);
        assert_eq!(dorfler_mark(&[0.5, 2.0, 0.25, 1.0], 0.999_999).unwrap().elements.len(), 4);
        assert_eq!(dorfler_mark(&[1.0, 3.0, 3.0], 0.4).unwrap().elements, vec![1]);
        let forced = dorfler_mark(&[0.0, 0.0, 0.0], 0.4).unwrap();
        assert_eq!(forced, Marking { elements: vec![0], forced: true });
        assert!(dorfler_mark(&[1.0], 1.0).is_err());
        assert!(dorfler_mark(&[1.0], 0.0).is_err());
        assert!(dorfler_mark(&[], 0.5).is_err());
        assert!(dorfler_mark(&[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn dorfler_minimal_on_fields_from_small_meshes() {
        let model = SemilinearLogModel::new(1.0, 2.0).unwrap();
        let mesh = unit_square_mesh(2).unwrap();
        let level = converged(&model, mesh);
        let disc = Discretization::new(&model, &level.mesh);
        let field = compute_indicators(&disc, &level.u, &IndicatorOptions::default()).unwrap();
        assert_eq!(field.values.len(), 8);
        for theta in [0.1, 0.4, 0.7, 0.95] {
            let m = dorfler_mark(&field.values, theta).unwrap();
            assert_eq!(m.elements.len(), minimal_cardinality(&field.values, theta));
        }
    }

    proptest! {
        #[test]
        fn dorfler_is_minimal(values in proptest::collection::vec(0.0f64..10.0, 1..=12), theta in 0.05f64..0.95) {
            let m = dorfler_mark(&values, theta).unwrap();
            let total: f64 = values.iter().sum();
            prop_assume!(total > 0.0);
            let s: f64 = m.elements.iter().map(|&i| values[i]).sum();
            prop_assert!(s >= theta * total * (1.0 - 1e-12));
            prop_assert_eq!(m.elements.len(), minimal_cardinality(&values, theta));
        }
    }

    #[test]
    fn chebyshev_reproduces_smooth_functions() {
        let c = Chebyshev::fit(0.5, 2.0, 40, |x: f64| x.ln() + x * x);
        for x in [0.5, 0.77, 1.0, 1.9, 2.0] {
            assert!((c.eval(x) - (x.ln() + x * x)).abs() < 1e-13);
        }
    }

    #[test]
    fn indicators_nonnegative_for_all_models() {
        let cases: Vec<(Box<dyn EnergyModel>, Mesh)> = vec![
            (Box::new(SemilinearLogModel::new(1.0, 2.0).unwrap()), unit_square_mesh(6).unwrap()),
            (Box::new(SineGordonModel::new(0.25).unwrap()), unit_square_mesh(6).unwrap()),
            (Box::new(KacanovModel::new(1.0).unwrap()), lshape_mesh(4).unwrap()),
        ];
        for (model, mesh) in cases {
            let level = converged(model.as_ref(), mesh);
            let disc = Discretization::new(model.as_ref(), &level.mesh);
            let field = compute_indicators(&disc, &level.u, &IndicatorOptions::default()).unwrap();
            assert!(field.raw_min >= -1e-12, "{:?}: {}", model.kind(), field.raw_min);
            assert!(field.total() > 0.0);
            assert_eq!(field.degenerate, 0);
        }
    }

    #[test]
    fn interpolated_and_direct_scaling_agree() {
        let model = SemilinearLogModel::new(1.0, 2.0).unwrap();
        let level = converged(&model, unit_square_mesh(8).unwrap());
        let disc = Discretization::new(&model, &level.mesh);
        let direct = compute_indicators(&disc, &level.u, &IndicatorOptions::default()).unwrap();
        let opts = IndicatorOptions { direct_limit: 0, ..IndicatorOptions::default() };
        let interp = compute_indicators(&disc, &level.u, &opts).unwrap();
        assert!(interp.used_interpolant && !direct.used_interpolant);
        let scale = direct.values.iter().copied().fold(0.0, f64::max);
        for (a, b) in direct.values.iter().zip(&interp.values) {
            assert!((a - b).abs() <= 1e-12 * scale.max(1e-300) + 1e-17, "{a} vs {b}");
        }
    }

    #[test]
    fn local_step_matches_sweep() {
        let model = SineGordonModel::new(0.25).unwrap();
        let level = converged(&model, unit_square_mesh(4).unwrap());
        let disc = Discretization::new(&model, &level.mesh);
        let field = compute_indicators(&disc, &level.u, &IndicatorOptions::default()).unwrap();
        for k in [0, 5, 17] {
            let step = local_enriched_step(&disc, &level.u, k, false).unwrap();
            assert!((step.delta_e.max(0.0) - field.values[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn local_only_drops_scaling() {
        let model = SemilinearLogModel::new(1.0, 2.0).unwrap();
        let level = converged(&model, unit_square_mesh(4).unwrap());
        let disc = Discretization::new(&model, &level.mesh);
        let step = local_enriched_step(&disc, &level.u, 3, true).unwrap();
        assert_eq!(step.scale, 1.0);
        let full = local_enriched_step(&disc, &level.u, 3, false).unwrap();
        assert!(full.delta_e >= step.delta_e - 1e-15);
    }

    #[test]
    fn zero_iterate_uses_local_space_only() {
        let model = SemilinearLogModel::new(1.0, 2.0).unwrap();
        let mesh = unit_square_mesh(4).unwrap();
        let disc = Discretization::new(&model, &mesh);
        let field = compute_indicators(&disc, &FeFunction::zeros(disc.num_dofs()), &IndicatorOptions::default()).unwrap();
        assert_eq!(field.au_u, 0.0);
        assert_eq!(field.degenerate, 0);
        assert!(field.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn indicators_invariant_under_relabeling() {
        let model = SemilinearLogModel::new(1.0, 2.0).unwrap();
        let level = converged(&model, unit_square_mesh(4).unwrap());
        let disc = Discretization::new(&model, &level.mesh);
        let field = compute_indicators(&disc, &level.u, &IndicatorOptions::default()).unwrap();

        // reverse element order and rotate each element's corners
        let mesh = &level.mesh;
        let ne = mesh.num_elements();
        let elements: Vec<[usize; 3]> =
            (0..ne).rev().map(|e| mesh.element(e)).map(|[a, b, c]| [b, c, a]).collect();
        let permuted = Mesh::from_parts(mesh.vertices().to_vec(), elements).unwrap();
        let disc2 = Discretization::new(&model, &permuted);
        let field2 = compute_indicators(&disc2, &level.u, &IndicatorOptions::default()).unwrap();
        let scale = field.values.iter().copied().fold(0.0, f64::max);
        for e in 0..ne {
            let (a, b) = (field.values[e], field2.values[ne - 1 - e]);
            assert!((a - b).abs() <= 1e-10 * scale, "{e}: {a} vs {b}");
        }
    }

    #[test]
    fn refinement_keeps_function_and_energy() {
        let model = KacanovModel::new(1.0).unwrap();
        let level = converged(&model, lshape_mesh(4).unwrap());
        let (fine, v) = refine_step(&level.mesh, &level.u, &[0, 7, 20]).unwrap();
        assert!(fine.num_interior_vertices() > level.mesh.num_interior_vertices());
        let coarse = Discretization::new(&model, &level.mesh);
        let fine_disc = Discretization::new(&model, &fine);
        let cv = coarse.dofs().vertex_values(level.u.coefficients());
        let fv = fine_disc.dofs().vertex_values(v.coefficients());
        for (i, x) in cv.iter().enumerate() {
            assert_eq!(*x, fv[i]);
        }
        // Ψ part is integrated exactly; the weak load is quadrature dependent
        let psi = |d: &Discretization, vv: &[f64]| -> f64 {
            (0..d.mesh().num_elements())
                .map(|e| model.element_energy(d.geometry(e), d.local_values(e, vv)))
                .sum()
        };
        let (a, b) = (psi(&coarse, &cv), psi(&fine_disc, &fv));
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
    }
}
