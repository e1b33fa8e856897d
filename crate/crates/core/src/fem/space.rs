use std::sync::Arc;

use rayon::prelude::*;

use super::linalg::SparseOperator;
use super::mesh::{ElementGeometry, SimplicialMesh};
use crate::error::{Error, Result};
use crate::tensor::{Dim, FourthOrderMap, SymTensor, SQRT_2};

/// Which vertices carry constrained values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// Boundary vertices are Dirichlet.
    Dirichlet,
    /// Periodic identification, no Dirichlet vertices.
    Periodic,
    /// No constraint (e.g. for projections).
    Free,
}

/// Continuous, piecewise linear vector fields on a simplicial mesh.
///
/// Nodal vectors come in two layouts: *full* vectors hold `d` values for every
/// mesh vertex (index `v·d + i`), *free* vectors hold only the unknowns (one
/// per non-Dirichlet representative vertex and component).
#[derive(Clone, Debug)]
pub struct P1Space {
    mesh: Arc<SimplicialMesh>,
    constraint: Constraint,
    node_of_vertex: Vec<Option<usize>>,
    n_nodes: usize,
}

impl P1Space {
    pub fn new(mesh: Arc<SimplicialMesh>, constraint: Constraint) -> Result<Self> {
        let nv = mesh.n_vertices();
        let master: Vec<usize> = match (constraint, mesh.periodic_map()) {
            (Constraint::Periodic, Some(p)) => p.to_vec(),
            (Constraint::Periodic, None) => {
                return Err(Error::config("periodic space requires a periodic mesh"))
            }
            _ => (0..nv).collect(),
        };
        let mut node_of_master = vec![None; nv];
        let mut n_nodes = 0;
        for v in 0..nv {
            let m = master[v];
            if m == v && !(constraint == Constraint::Dirichlet && mesh.is_boundary(v)) {
                node_of_master[v] = Some(n_nodes);
                n_nodes += 1;
            }
        }
        let node_of_vertex = (0..nv).map(|v| node_of_master[master[v]]).collect();
        Ok(P1Space {
            mesh,
            constraint,
            node_of_vertex,
            n_nodes,
        })
    }

    pub fn mesh(&self) -> &SimplicialMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    pub fn dim(&self) -> Dim {
        self.mesh.dim()
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    /// Number of unknowns, `d · (free representative vertices)`.
    pub fn n_dofs(&self) -> usize {
        self.n_nodes * self.dim().n()
    }

    pub fn n_full(&self) -> usize {
        self.mesh.n_vertices() * self.dim().n()
    }

    /// Unknown index of component `i` at vertex `v`, `None` if constrained.
    pub fn dof(&self, v: usize, i: usize) -> Option<usize> {
        self.node_of_vertex[v].map(|n| n * self.dim().n() + i)
    }

    pub fn is_fixed(&self, v: usize) -> bool {
        self.node_of_vertex[v].is_none()
    }

    /// Full vector from unknowns; constrained entries are copied from `fixed`.
    pub fn expand(&self, free: &[f64], fixed: &[f64]) -> Vec<f64> {
        let d = self.dim().n();
        let mut full = fixed.to_vec();
        for v in 0..self.mesh.n_vertices() {
            for i in 0..d {
                if let Some(k) = self.dof(v, i) {
                    full[v * d + i] = free[k];
                }
            }
        }
        full
    }

    /// Unknowns read from a full vector (representative entries).
    pub fn restrict_values(&self, full: &[f64]) -> Vec<f64> {
        let d = self.dim().n();
        let mut free = vec![0.0; self.n_dofs()];
        for v in 0..self.mesh.n_vertices() {
            for i in 0..d {
                if let Some(k) = self.dof(v, i) {
                    free[k] = full[v * d + i];
                }
            }
        }
        free
    }

    /// Sums a full force vector onto the unknowns (duplicates accumulate).
    pub fn restrict_forces(&self, full: &[f64]) -> Vec<f64> {
        let d = self.dim().n();
        let mut free = vec![0.0; self.n_dofs()];
        for v in 0..self.mesh.n_vertices() {
            for i in 0..d {
                if let Some(k) = self.dof(v, i) {
                    free[k] += full[v * d + i];
                }
            }
        }
        free
    }

    /// Nodal interpolant of a vector field (full layout).
    pub fn interpolate(&self, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let d = self.dim().n();
        let mut full = vec![0.0; self.n_full()];
        for (v, x) in self.mesh.vertices().iter().enumerate() {
            let val = f(x);
            full[v * d..v * d + d].copy_from_slice(&val[..d]);
        }
        full
    }

    /// Displacement gradient `∂u_i/∂x_j` on element `k`.
    pub fn element_gradient(&self, full: &[f64], k: usize) -> [[f64; 3]; 3] {
        let d = self.dim().n();
        let g = self.mesh.geometry(k);
        let mut grad = [[0.0; 3]; 3];
        for (a, &v) in self.mesh.simplex(k).iter().enumerate() {
            for i in 0..d {
                let u = full[v * d + i];
                for j in 0..d {
                    grad[i][j] += u * g.grads[a][j];
                }
            }
        }
        grad
    }

    /// Constant symmetrized gradient of `u` on element `k`.
    pub fn element_strain(&self, full: &[f64], k: usize) -> Result<SymTensor> {
        if k >= self.mesh.n_elements() {
            return Err(Error::input(format!(
                "element index {k} out of range ({} elements)",
                self.mesh.n_elements()
            )));
        }
        if full.len() != self.n_full() {
            return Err(Error::input("nodal vector has the wrong length"));
        }
        Ok(SymTensor::sym_of(self.dim(), &self.element_gradient(full, k)))
    }

    pub fn element_strains(&self, full: &[f64]) -> Vec<SymTensor> {
        let dim = self.dim();
        (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|k| SymTensor::sym_of(dim, &self.element_gradient(full, k)))
            .collect()
    }

    /// `∫ σ : ∇ˢφ_{v,i}` for every vertex/component (full layout).
    pub fn internal_forces(&self, stresses: &[SymTensor]) -> Vec<f64> {
        let d = self.dim().n();
        let local: Vec<[[f64; 3]; 4]> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|k| element_forces(self.dim(), self.mesh.geometry(k), &stresses[k]))
            .collect();
        let mut full = vec![0.0; self.n_full()];
        for (k, f) in local.iter().enumerate() {
            for (a, &v) in self.mesh.simplex(k).iter().enumerate() {
                for i in 0..d {
                    full[v * d + i] += f[a][i];
                }
            }
        }
        full
    }

    /// Like [`Self::internal_forces`] but accumulating absolute element
    /// contributions; a scale for relative equilibrium residuals.
    pub fn force_magnitudes(&self, stresses: &[SymTensor]) -> Vec<f64> {
        let d = self.dim().n();
        let mut full = vec![0.0; self.n_full()];
        for k in 0..self.mesh.n_elements() {
            let f = element_forces(self.dim(), self.mesh.geometry(k), &stresses[k]);
            for (a, &v) in self.mesh.simplex(k).iter().enumerate() {
                for i in 0..d {
                    full[v * d + i] += f[a][i].abs();
                }
            }
        }
        full
    }

    /// Global stiffness `Σ_k |T_k| Bᵀ D_k B` on the unknowns.
    pub fn assemble(&self, tangents: &[FourthOrderMap]) -> Result<SparseOperator> {
        let dim = self.dim();
        let d = dim.n();
        let nloc = (d + 1) * d;
        let local: Vec<Vec<f64>> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|k| element_stiffness(dim, self.mesh.geometry(k), &tangents[k]))
            .collect();
        let cap = local.len() * nloc * nloc;
        let (mut rows, mut cols, mut vals) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
        for (k, ke) in local.iter().enumerate() {
            let verts = self.mesh.simplex(k);
            for (a, &va) in verts.iter().enumerate() {
                for i in 0..d {
                    let Some(r) = self.dof(va, i) else { continue };
                    for (b, &vb) in verts.iter().enumerate() {
                        for j in 0..d {
                            let Some(c) = self.dof(vb, j) else { continue };
                            rows.push(r);
                            cols.push(c);
                            vals.push(ke[(a * d + i) * nloc + b * d + j]);
                        }
                    }
                }
            }
        }
        let op = SparseOperator::from_triplets(self.n_dofs(), rows, cols, vals)?;
        op.check_symmetric()?;
        Ok(op)
    }

    /// Gram matrix of the H¹ inner product `∫ ∇u:∇v + u·v` on the unknowns.
    pub fn assemble_h1_gram(&self) -> Result<SparseOperator> {
        let d = self.dim().n();
        let (mut rows, mut cols, mut vals) = (vec![], vec![], vec![]);
        let mass_scale = 1.0 / ((d + 1) * (d + 2)) as f64;
        for k in 0..self.mesh.n_elements() {
            let g = self.mesh.geometry(k);
            let verts = self.mesh.simplex(k);
            for (a, &va) in verts.iter().enumerate() {
                for (b, &vb) in verts.iter().enumerate() {
                    let lap: f64 = (0..d).map(|j| g.grads[a][j] * g.grads[b][j]).sum();
                    let mass = mass_scale * if a == b { 2.0 } else { 1.0 };
                    let val = g.volume * (lap + mass);
                    for i in 0..d {
                        if let (Some(r), Some(c)) = (self.dof(va, i), self.dof(vb, i)) {
                            rows.push(r);
                            cols.push(c);
                            vals.push(val);
                        }
                    }
                }
            }
        }
        SparseOperator::from_triplets(self.n_dofs(), rows, cols, vals)
    }

    /// `∫ f·φ_{v,i}` with one-point (barycenter) quadrature, full layout.
    pub fn load_vector(&self, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let d = self.dim().n();
        let mut full = vec![0.0; self.n_full()];
        for k in 0..self.mesh.n_elements() {
            let g = self.mesh.geometry(k);
            let fv = f(&g.barycenter);
            let w = g.volume / (d + 1) as f64;
            for &v in self.mesh.simplex(k) {
                for i in 0..d {
                    full[v * d + i] += w * fv[i];
                }
            }
        }
        full
    }

    /// Per-component lumped nodal weights on the unknowns, used to fix the
    /// mean of periodic fields.
    pub fn mean_constraint_vectors(&self) -> Vec<Vec<f64>> {
        let d = self.dim().n();
        let mut lumped = vec![0.0; self.n_nodes];
        for k in 0..self.mesh.n_elements() {
            let w = self.mesh.geometry(k).volume / (d + 1) as f64;
            for &v in self.mesh.simplex(k) {
                if let Some(n) = self.node_of_vertex[v] {
                    lumped[n] += w;
                }
            }
        }
        (0..d)
            .map(|i| {
                let mut m = vec![0.0; self.n_dofs()];
                for (n, w) in lumped.iter().enumerate() {
                    m[n * d + i] = *w;
                }
                m
            })
            .collect()
    }

    /// Volume-weighted sum over elements.
    pub fn integrate_elementwise(&self, values: &[f64]) -> f64 {
        self.mesh
            .geometries()
            .iter()
            .zip(values)
            .map(|(g, v)| g.volume * v)
            .sum()
    }
}

/// Mandel strain of the unit displacement `e_i` at local vertex `a`.
#[inline]
pub(crate) fn strain_basis(dim: Dim, g: &ElementGeometry, a: usize, i: usize) -> SymTensor {
    let mut s = SymTensor::zero(dim);
    let m = s.mandel_mut();
    for c in 0..dim.k() {
        let (p, q) = dim.pair(c);
        m[c] = if p == q {
            if p == i {
                g.grads[a][i]
            } else {
                0.0
            }
        } else {
            // √2 · ½ (δ_pi ∂_q λ_a + δ_qi ∂_p λ_a)
            let mut v = 0.0;
            if p == i {
                v += g.grads[a][q];
            }
            if q == i {
                v += g.grads[a][p];
            }
            v * SQRT_2 * 0.5
        };
    }
    s
}

fn element_forces(dim: Dim, g: &ElementGeometry, sigma: &SymTensor) -> [[f64; 3]; 4] {
    let d = dim.n();
    let m = sigma.to_matrix();
    let mut f = [[0.0; 3]; 4];
    for a in 0..=d {
        for i in 0..d {
            f[a][i] = g.volume * (0..d).map(|j| m[i][j] * g.grads[a][j]).sum::<f64>();
        }
    }
    f
}

fn element_stiffness(dim: Dim, g: &ElementGeometry, tangent: &FourthOrderMap) -> Vec<f64> {
    let d = dim.n();
    let nloc = (d + 1) * d;
    let basis: Vec<SymTensor> = (0..=d)
        .flat_map(|a| (0..d).map(move |i| (a, i)))
        .map(|(a, i)| strain_basis(dim, g, a, i))
        .collect();
    let images: Vec<SymTensor> = basis.iter().map(|b| tangent.apply(b)).collect();
    let mut ke = vec![0.0; nloc * nloc];
    for r in 0..nloc {
        for c in 0..nloc {
            ke[r * nloc + c] = g.volume * basis[r].inner(&images[c]);
        }
    }
    // exact symmetry for symmetric tangents
    for r in 0..nloc {
        for c in 0..r {
            let s = 0.5 * (ke[r * nloc + c] + ke[c * nloc + r]);
            ke[r * nloc + c] = s;
            ke[c * nloc + r] = s;
        }
    }
    ke
}
