//! Simplicial meshes, P1 vector spaces, assembly and linear solves.

mod linalg;
mod mesh;
mod space;

use std::sync::Arc;

pub use linalg::{pcg, CgReport, SparseOperator, CG_MAX_ITER, CG_TOL};
pub(crate) use linalg::{dot, norm};
pub use mesh::{
    mesh_box, mesh_simplex, mesh_simplex_divisions, mesh_torus, ElementGeometry, SimplicialMesh,
};
pub use space::{Constraint, P1Space};

use crate::error::{Error, Result};
use crate::tensor::{FourthOrderMap, SymTensor};

/// Stiffness on the unknowns of `space`; periodic spaces get the mean constraint.
pub fn stiffness_operator(space: &P1Space, tangents: &[FourthOrderMap]) -> Result<SparseOperator> {
    let op = space.assemble(tangents)?;
    Ok(match space.constraint() {
        Constraint::Periodic => op.with_mean_constraints(space.mean_constraint_vectors()),
        _ => op,
    })
}

/// Galerkin solution of `−div(𝔸 ∇ˢu) = f` with `u = g` on the boundary.
///
/// `stiffness` holds one elastic stiffness per element; the result is the full
/// nodal displacement vector.
pub fn solve_elastic(
    space: &P1Space,
    stiffness: &[FourthOrderMap],
    f: impl Fn(&[f64; 3]) -> [f64; 3],
    g: impl Fn(&[f64; 3]) -> [f64; 3],
) -> Result<Vec<f64>> {
    if stiffness.len() != space.mesh().n_elements() {
        return Err(Error::input("one stiffness map per element is required"));
    }
    let mut fixed = space.interpolate(g);
    let zeros = vec![0.0; space.n_dofs()];
    fixed = space.expand(&zeros, &fixed);
    let lifted: Vec<SymTensor> = space
        .element_strains(&fixed)
        .iter()
        .zip(stiffness)
        .map(|(e, a)| a.apply(e))
        .collect();
    let load = space.load_vector(f);
    let internal = space.internal_forces(&lifted);
    let rhs_full: Vec<f64> = load.iter().zip(&internal).map(|(l, i)| l - i).collect();
    let rhs = space.restrict_forces(&rhs_full);
    let op = stiffness_operator(space, stiffness)?;
    let mut x = vec![0.0; space.n_dofs()];
    pcg(&op, &rhs, &mut x, CG_TOL, CG_MAX_ITER).map_err(|e| e.context("elastic solve"))?;
    Ok(space.expand(&x, &fixed))
}

/// A vector field that can be sampled at points, with an optional element hint
/// (the element of the target mesh that contains `x`).
pub trait VectorField: Sync {
    fn value(&self, x: &[f64; 3]) -> [f64; 3];
    /// `g[i][j] = ∂U_i/∂x_j`.
    fn gradient(&self, x: &[f64; 3]) -> [[f64; 3]; 3];

    fn value_on(&self, x: &[f64; 3], _element: usize) -> [f64; 3] {
        self.value(x)
    }

    fn gradient_on(&self, x: &[f64; 3], _element: usize) -> [[f64; 3]; 3] {
        self.gradient(x)
    }
}

/// `U(x) = M x + c`.
#[derive(Clone, Copy, Debug)]
pub struct AffineField {
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
}

impl AffineField {
    pub fn from_strain(xi: &SymTensor) -> Self {
        AffineField {
            matrix: xi.to_matrix(),
            offset: [0.0; 3],
        }
    }
}

impl VectorField for AffineField {
    fn value(&self, x: &[f64; 3]) -> [f64; 3] {
        let mut v = self.offset;
        for i in 0..3 {
            for j in 0..3 {
                v[i] += self.matrix[i][j] * x[j];
            }
        }
        v
    }

    fn gradient(&self, _x: &[f64; 3]) -> [[f64; 3]; 3] {
        self.matrix
    }
}

/// A P1 field on some mesh, evaluated by point location.
///
/// When the target mesh is the field's own mesh the element hint is used
/// directly.
pub struct P1Field {
    mesh: Arc<SimplicialMesh>,
    values: Vec<f64>,
    buckets: Vec<Vec<usize>>,
    lower: [f64; 3],
    cell: [f64; 3],
    counts: [usize; 3],
    same_mesh: Option<Arc<SimplicialMesh>>,
}

impl P1Field {
    /// `values` is a full nodal vector on `mesh`.
    pub fn new(mesh: Arc<SimplicialMesh>, values: Vec<f64>) -> Result<Self> {
        let n = mesh.dim().n();
        if values.len() != mesh.n_vertices() * n {
            return Err(Error::input("P1 field values do not match the mesh"));
        }
        let mut lower = [f64::INFINITY; 3];
        let mut upper = [f64::NEG_INFINITY; 3];
        for x in mesh.vertices() {
            for i in 0..n {
                lower[i] = lower[i].min(x[i]);
                upper[i] = upper[i].max(x[i]);
            }
        }
        let per_axis = ((mesh.n_elements() as f64).powf(1.0 / n as f64).ceil() as usize).max(1);
        let mut counts = [1usize; 3];
        let mut cell = [1.0; 3];
        for i in 0..n {
            counts[i] = per_axis;
            cell[i] = ((upper[i] - lower[i]) / per_axis as f64).max(f64::MIN_POSITIVE);
        }
        let mut buckets = vec![Vec::new(); counts.iter().product()];
        for (k, s) in mesh.simplices().iter().enumerate() {
            let mut lo = [usize::MAX; 3];
            let mut hi = [0usize; 3];
            for &v in &s[..=n] {
                for i in 0..n {
                    let b = Self::bucket_coord(mesh.vertices()[v][i], lower[i], cell[i], counts[i]);
                    lo[i] = lo[i].min(b);
                    hi[i] = hi[i].max(b);
                }
            }
            for i in n..3 {
                lo[i] = 0;
                hi[i] = 0;
            }
            for c in lo[2]..=hi[2] {
                for b in lo[1]..=hi[1] {
                    for a in lo[0]..=hi[0] {
                        buckets[(c * counts[1] + b) * counts[0] + a].push(k);
                    }
                }
            }
        }
        Ok(P1Field {
            mesh,
            values,
            buckets,
            lower,
            cell,
            counts,
            same_mesh: None,
        })
    }

    /// Marks `target` as the mesh this field lives on, so element hints are exact.
    pub fn on_target(mut self, target: &Arc<SimplicialMesh>) -> Self {
        if Arc::ptr_eq(target, &self.mesh) {
            self.same_mesh = Some(target.clone());
        }
        self
    }

    fn bucket_coord(x: f64, lower: f64, cell: f64, count: usize) -> usize {
        (((x - lower) / cell).floor().max(0.0) as usize).min(count - 1)
    }

    fn barycentric(&self, k: usize, x: &[f64; 3]) -> [f64; 4] {
        let n = self.mesh.dim().n();
        let g = self.mesh.geometry(k);
        let x0 = self.mesh.vertices()[self.mesh.simplex(k)[0]];
        let mut lam = [0.0; 4];
        let mut rest = 1.0;
        for a in 1..=n {
            lam[a] = (0..n).map(|i| g.grads[a][i] * (x[i] - x0[i])).sum();
            rest -= lam[a];
        }
        lam[0] = rest;
        lam
    }

    /// Element containing `x` (closest by barycentric violation if none does).
    pub fn locate(&self, x: &[f64; 3]) -> usize {
        let n = self.mesh.dim().n();
        let mut idx = 0;
        for i in (0..n).rev() {
            idx = idx * self.counts[i]
                + Self::bucket_coord(x[i], self.lower[i], self.cell[i], self.counts[i]);
        }
        let mut best = (f64::INFINITY, 0);
        for &k in &self.buckets[idx] {
            let lam = self.barycentric(k, x);
            let viol = lam[..=n].iter().fold(0.0f64, |m, l| m.max(-l));
            if viol <= 1e-12 {
                return k;
            }
            if viol < best.0 {
                best = (viol, k);
            }
        }
        best.1
    }

    fn element_for(&self, x: &[f64; 3], hint: usize) -> usize {
        if self.same_mesh.is_some() {
            hint
        } else {
            self.locate(x)
        }
    }

    fn value_in(&self, k: usize, x: &[f64; 3]) -> [f64; 3] {
        let n = self.mesh.dim().n();
        let lam = self.barycentric(k, x);
        let mut v = [0.0; 3];
        for (a, &vert) in self.mesh.simplex(k).iter().enumerate() {
            for i in 0..n {
                v[i] += lam[a] * self.values[vert * n + i];
            }
        }
        v
    }

    fn gradient_in(&self, k: usize) -> [[f64; 3]; 3] {
        let n = self.mesh.dim().n();
        let g = self.mesh.geometry(k);
        let mut grad = [[0.0; 3]; 3];
        for (a, &vert) in self.mesh.simplex(k).iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    grad[i][j] += self.values[vert * n + i] * g.grads[a][j];
                }
            }
        }
        grad
    }
}

impl VectorField for P1Field {
    fn value(&self, x: &[f64; 3]) -> [f64; 3] {
        self.value_in(self.locate(x), x)
    }

    fn gradient(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        self.gradient_in(self.locate(x))
    }

    fn value_on(&self, x: &[f64; 3], element: usize) -> [f64; 3] {
        self.value_in(self.element_for(x, element), x)
    }

    fn gradient_on(&self, x: &[f64; 3], element: usize) -> [[f64; 3]; 3] {
        self.gradient_in(self.element_for(x, element))
    }
}

/// Degree-2 quadrature on element `k`: points and barycentric weights of the
/// vertices, plus weights summing to one.
pub(crate) fn quadrature2(mesh: &SimplicialMesh, k: usize) -> Vec<([f64; 3], [f64; 4], f64)> {
    let n = mesh.dim().n();
    let verts: Vec<[f64; 3]> = mesh.simplex(k).iter().map(|&v| mesh.vertices()[v]).collect();
    let bary: Vec<([f64; 4], f64)> = if n == 2 {
        // edge midpoints
        vec![
            ([0.5, 0.5, 0.0, 0.0], 1.0 / 3.0),
            ([0.0, 0.5, 0.5, 0.0], 1.0 / 3.0),
            ([0.5, 0.0, 0.5, 0.0], 1.0 / 3.0),
        ]
    } else {
        let a = 0.585_410_196_624_968_5;
        let b = 0.138_196_601_125_010_5;
        (0..4)
            .map(|i| {
                let mut l = [b; 4];
                l[i] = a;
                (l, 0.25)
            })
            .collect()
    };
    bary.into_iter()
        .map(|(l, w)| {
            let mut x = [0.0; 3];
            for (a, v) in verts.iter().enumerate() {
                for i in 0..n {
                    x[i] += l[a] * v[i];
                }
            }
            (x, l, w)
        })
        .collect()
}

/// H¹-orthogonal projection of each field onto the (unconstrained) P1 space.
pub fn riesz_project(fields: &[&dyn VectorField], space: &P1Space) -> Result<Vec<Vec<f64>>> {
    if space.constraint() != Constraint::Free {
        return Err(Error::config("the Riesz projection acts on the unconstrained space"));
    }
    let gram = space.assemble_h1_gram()?;
    let mesh = space.mesh();
    let d = mesh.dim().n();
    let mut out = Vec::with_capacity(fields.len());
    for field in fields {
        let mut rhs_full = vec![0.0; space.n_full()];
        for k in 0..mesh.n_elements() {
            let g = mesh.geometry(k);
            for (x, lam, w) in quadrature2(mesh, k) {
                let val = field.value_on(&x, k);
                let grad = field.gradient_on(&x, k);
                for (a, &v) in mesh.simplex(k).iter().enumerate() {
                    for i in 0..d {
                        let lap: f64 = (0..d).map(|j| grad[i][j] * g.grads[a][j]).sum();
                        rhs_full[v * d + i] += g.volume * w * (lap + val[i] * lam[a]);
                    }
                }
            }
        }
        let rhs = space.restrict_forces(&rhs_full);
        // warm start from the nodal interpolant
        let interp: Vec<f64> = {
            let mut full = vec![0.0; space.n_full()];
            for k in 0..mesh.n_elements() {
                for &v in mesh.simplex(k) {
                    let val = field.value_on(&mesh.vertices()[v], k);
                    full[v * d..v * d + d].copy_from_slice(&val[..d]);
                }
            }
            full
        };
        let mut x = space.restrict_values(&interp);
        pcg(&gram, &rhs, &mut x, 1e-13, CG_MAX_ITER).map_err(|e| e.context("Riesz projection"))?;
        out.push(x);
    }
    Ok(out)
}

/// H¹ distance between a P1 field on the space's mesh and a reference field,
/// with degree-2 quadrature.
pub fn h1_error(space: &P1Space, full: &[f64], reference: &dyn VectorField) -> f64 {
    let mesh = space.mesh();
    let d = mesh.dim().n();
    let mut acc = 0.0;
    for k in 0..mesh.n_elements() {
        let g = mesh.geometry(k);
        let grad_h = space.element_gradient(full, k);
        for (x, lam, w) in quadrature2(mesh, k) {
            let val = reference.value_on(&x, k);
            let grad = reference.gradient_on(&x, k);
            for i in 0..d {
                let uh: f64 = mesh
                    .simplex(k)
                    .iter()
                    .enumerate()
                    .map(|(a, &v)| lam[a] * full[v * d + i])
                    .sum();
                acc += g.volume * w * (uh - val[i]).powi(2);
                for j in 0..d {
                    acc += g.volume * w * (grad_h[i][j] - grad[i][j]).powi(2);
                }
            }
        }
    }
    acc.sqrt()
}
