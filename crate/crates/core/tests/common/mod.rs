//! Global-assembly oracle for the patch indicators: commit the refinement
//! of one element to a real mesh, assemble the enriched space globally and
//! minimize the same linearized model there.

use nalgebra::{DMatrix, DVector};
use vafem::fem::{Discretization, FeFunction};
use vafem::mesh::{unit_square_mesh, Mesh, Point};
use vafem::models::EnergyModel;
use vafem::solver::{run_level, LevelState, SolverConfig};

fn inside(p: Point, tri: [Point; 3]) -> bool {
    let [a, b, c] = tri;
    let d = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / d;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / d;
    let eps = 1e-12;
    l1 >= -eps && l2 >= -eps && 1.0 - l1 - l2 >= -eps
}

fn centroid(m: &Mesh, e: usize) -> Point {
    let c = m.corners(e);
    [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0]
}

/// Energy drop of one linearized step in `span{hats of the refined patch, u}`
/// computed on the committed refinement.
pub fn brute_force(model: &dyn EnergyModel, mesh: &Mesh, u: &FeFunction, kappa: usize, with_global: bool) -> f64 {
    let (fine, prolong) = mesh.refine(&[kappa]).unwrap();
    let uf = FeFunction::new(prolong.apply(u.coefficients()));
    let disc = Discretization::new(model, &fine);
    let a = disc.assemble_linearization(&uf).unwrap();
    let r = disc.assemble_residual(&uf).unwrap();

    let patch: Vec<[Point; 3]> = mesh.facewise_patch(kappa).unwrap().members.iter().map(|&e| mesh.corners(e)).collect();
    let enriched: Vec<usize> = (0..disc.num_dofs())
        .filter(|&d| {
            let v = disc.dofs().vertex(d);
            fine.vertex_star(v).iter().all(|&e| patch.iter().any(|t| inside(centroid(&fine, e), *t)))
        })
        .collect();

    let m = enriched.len();
    let n = if with_global { m + 1 } else { m };
    let dense = |i: usize, j: usize| a.get(enriched[i], enriched[j]);
    let au = a.mul_vec(uf.coefficients());
    let mut mat = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..m {
        for j in 0..m {
            mat[(i, j)] = dense(i, j);
        }
        rhs[i] = -r[enriched[i]];
        if with_global {
            mat[(i, m)] = au[enriched[i]];
            mat[(m, i)] = au[enriched[i]];
        }
    }
    if with_global {
        mat[(m, m)] = uf.coefficients().iter().zip(&au).map(|(x, y)| x * y).sum();
        rhs[m] = -uf.coefficients().iter().zip(&r).map(|(x, y)| x * y).sum::<f64>();
    }
    let c = mat.cholesky().expect("enriched system is SPD").solve(&rhs);
    let mut next = uf.clone();
    if with_global {
        for x in next.coefficients_mut() {
            *x *= 1.0 + c[m];
        }
    }
    for (k, &d) in enriched.iter().enumerate() {
        next.coefficients_mut()[d] += c[k];
    }
    disc.energy(&uf).unwrap() - disc.energy(&next).unwrap()
}

pub fn level(model: &dyn EnergyModel, n: usize) -> LevelState {
    let mesh = unit_square_mesh(n).unwrap();
    let dofs = mesh.num_interior_vertices();
    let state = LevelState::new(model, mesh, FeFunction::zeros(dofs)).unwrap();
    run_level(model, state, &SolverConfig::default()).unwrap()
}
