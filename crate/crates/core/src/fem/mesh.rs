use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::Dim;

/// Geometry of one simplex: volume, barycenter and the constant gradients of its
/// barycentric coordinates (row `a` is ∇λ_a).
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub volume: f64,
    pub barycenter: [f64; 3],
    pub grads: [[f64; 3]; 4],
    pub diameter: f64,
}

/// A conforming simplicial mesh, optionally with a periodic vertex identification.
#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    dim: Dim,
    vertices: Vec<[f64; 3]>,
    simplices: Vec<[usize; 4]>,
    boundary: Vec<bool>,
    periodic: Option<Vec<usize>>,
    geometry: Vec<ElementGeometry>,
    h: f64,
}

impl SimplicialMesh {
    /// Builds a mesh, fixing orientation and computing element geometry.
    pub fn new(
        dim: Dim,
        vertices: Vec<[f64; 3]>,
        mut simplices: Vec<[usize; 4]>,
        boundary: Vec<bool>,
        periodic: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = dim.n();
        if boundary.len() != vertices.len() {
            return Err(Error::input("boundary flags must match the vertex count"));
        }
        if let Some(p) = &periodic {
            if p.len() != vertices.len() || p.iter().any(|&m| m >= vertices.len() || p[m] != m) {
                return Err(Error::input("periodic map must send each vertex to a fixed master"));
            }
        }
        let mut geometry = Vec::with_capacity(simplices.len());
        let mut h: f64 = 0.0;
        for s in simplices.iter_mut() {
            if s[..=n].iter().any(|&v| v >= vertices.len()) {
                return Err(Error::input("simplex references a missing vertex"));
            }
            let mut g = element_geometry(dim, &vertices, s)?;
            if g.volume < 0.0 {
                s.swap(0, 1);
                g = element_geometry(dim, &vertices, s)?;
            }
            h = h.max(g.diameter);
            geometry.push(g);
        }
        for g in &geometry {
            if !(g.volume > 1e-12 * h.powi(n as i32)) {
                return Err(Error::input("degenerate simplex in mesh"));
            }
        }
        Ok(SimplicialMesh {
            dim,
            vertices,
            simplices,
            boundary,
            periodic,
            geometry,
            h,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn simplices(&self) -> &[[usize; 4]] {
        &self.simplices
    }

    /// Vertex indices of element `k` (d+1 entries).
    pub fn simplex(&self, k: usize) -> &[usize] {
        &self.simplices[k][..=self.dim.n()]
    }

    pub fn n_elements(&self) -> usize {
        self.simplices.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn periodic_map(&self) -> Option<&[usize]> {
        self.periodic.as_deref()
    }

    pub fn geometry(&self, k: usize) -> &ElementGeometry {
        &self.geometry[k]
    }

    pub fn geometries(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    /// Largest element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn total_volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume).sum()
    }

    /// Largest circumradius/inradius ratio over all elements.
    pub fn max_shape_ratio(&self) -> f64 {
        (0..self.n_elements())
            .map(|k| shape_ratio(self.dim, &self.vertices, &self.simplices[k]))
            .fold(0.0, f64::max)
    }

    /// Checks orientation, non-degeneracy and shape regularity against `max_ratio`.
    pub fn validate(&self, max_ratio: f64) -> Result<()> {
        let vol_floor = 1e-12 * self.h.powi(self.dim.n() as i32);
        for (k, g) in self.geometry.iter().enumerate() {
            if !(g.volume > vol_floor) {
                return Err(Error::input(format!("element {k} is degenerate or inverted")));
            }
        }
        let ratio = self.max_shape_ratio();
        if ratio > max_ratio {
            return Err(Error::input(format!(
                "shape ratio {ratio:.3} exceeds the bound {max_ratio}"
            )));
        }
        Ok(())
    }

    /// Writes the mesh as text: a `vertices` block (`x y [z] boundary_flag`) and a
    /// `simplices` block (vertex indices).
    pub fn to_text(&self) -> String {
        let n = self.dim.n();
        let mut out = String::new();
        writeln!(out, "dim {n}").unwrap();
        writeln!(out, "vertices {}", self.vertices.len()).unwrap();
        for (v, b) in self.vertices.iter().zip(&self.boundary) {
            let coords: Vec<String> = v[..n].iter().map(|c| format!("{c:e}")).collect();
            writeln!(out, "{} {}", coords.join(" "), *b as u8).unwrap();
        }
        writeln!(out, "simplices {}", self.simplices.len()).unwrap();
        for s in &self.simplices {
            let ids: Vec<String> = s[..=n].iter().map(|i| i.to_string()).collect();
            writeln!(out, "{}", ids.join(" ")).unwrap();
        }
        if let Some(p) = &self.periodic {
            writeln!(out, "periodic {}", p.len()).unwrap();
            for m in p {
                writeln!(out, "{m}").unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::input(format!("mesh text: {m}"));
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut cursor = 0usize;
        let mut next = || -> Result<&str> {
            let l = lines.get(cursor).copied().ok_or_else(|| bad("unexpected end of input"))?;
            cursor += 1;
            Ok(l)
        };
        let header = |line: &str, key: &str| -> Result<usize> {
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected `{key}`")));
            }
            parts
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| bad(&format!("bad `{key}` count")))
        };
        let numbers = |line: &str| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect()
        };
        let dim = Dim::new(header(next()?, "dim")?)?;
        let n = dim.n();
        let nv = header(next()?, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        let mut boundary = Vec::with_capacity(nv);
        for _ in 0..nv {
            let vals = numbers(next()?)?;
            if vals.len() != n + 1 {
                return Err(bad("vertex line has wrong arity"));
            }
            let mut v = [0.0; 3];
            v[..n].copy_from_slice(&vals[..n]);
            vertices.push(v);
            boundary.push(vals[n] != 0.0);
        }
        let ns = header(next()?, "simplices")?;
        let mut simplices = Vec::with_capacity(ns);
        for _ in 0..ns {
            let ids = numbers(next()?)?;
            if ids.len() != n + 1 {
                return Err(bad("simplex line has wrong arity"));
            }
            let mut s = [0usize; 4];
            for (a, v) in ids.iter().enumerate() {
                s[a] = *v as usize;
            }
            simplices.push(s);
        }
        let periodic = match next() {
            Err(_) => None,
            Ok(line) => {
                let np = header(line, "periodic")?;
                let mut map = Vec::with_capacity(np);
                for _ in 0..np {
                    map.push(next()?.trim().parse().map_err(|_| bad("bad periodic line"))?);
                }
                Some(map)
            }
        };
        SimplicialMesh::new(dim, vertices, simplices, boundary, periodic)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

fn element_geometry(dim: Dim, vertices: &[[f64; 3]], s: &[usize; 4]) -> Result<ElementGeometry> {
    let n = dim.n();
    let x0 = vertices[s[0]];
    let jac = DMatrix::from_fn(n, n, |i, j| vertices[s[j + 1]][i] - x0[i]);
    let det = jac.determinant();
    let fact = if n == 2 { 2.0 } else { 6.0 };
    let inv = jac
        .try_inverse()
        .ok_or_else(|| Error::input("degenerate simplex in mesh"))?;
    let mut grads = [[0.0; 3]; 4];
    for a in 1..=n {
        for i in 0..n {
            grads[a][i] = inv[(a - 1, i)];
            grads[0][i] -= inv[(a - 1, i)];
        }
    }
    let mut barycenter = [0.0; 3];
    let mut diameter: f64 = 0.0;
    for a in 0..=n {
        for i in 0..n {
            barycenter[i] += vertices[s[a]][i] / (n + 1) as f64;
        }
        for b in 0..a {
            diameter = diameter.max(dist(&vertices[s[a]], &vertices[s[b]]));
        }
    }
    Ok(ElementGeometry {
        volume: det / fact,
        barycenter,
        grads,
        diameter,
    })
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Circumradius over inradius of a simplex.
fn shape_ratio(dim: Dim, vertices: &[[f64; 3]], s: &[usize; 4]) -> f64 {
    let n = dim.n();
    let p: Vec<[f64; 3]> = s[..=n].iter().map(|&i| vertices[i]).collect();
    // circumcenter c solves 2 (p_i − p_0)·c = |p_i|² − |p_0|²
    let a = DMatrix::from_fn(n, n, |i, j| 2.0 * (p[i + 1][j] - p[0][j]));
    let sq = |q: &[f64; 3]| q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
    let b = DVector::from_fn(n, |i, _| sq(&p[i + 1]) - sq(&p[0]));
    let c = match a.lu().solve(&b) {
        Some(c) => c,
        None => return f64::INFINITY,
    };
    let mut cc = [0.0; 3];
    for i in 0..n {
        cc[i] = c[i];
    }
    let circum = dist(&cc, &p[0]);
    let g = element_geometry(dim, vertices, s).map(|g| g.volume.abs()).unwrap_or(0.0);
    // inradius = d·|T| / (sum of facet measures)
    let facet_sum: f64 = (0..=n)
        .map(|skip| {
            let f: Vec<&[f64; 3]> = (0..=n).filter(|&i| i != skip).map(|i| &p[i]).collect();
            if n == 2 {
                dist(f[0], f[1])
            } else {
                let u = [f[1][0] - f[0][0], f[1][1] - f[0][1], f[1][2] - f[0][2]];
                let v = [f[2][0] - f[0][0], f[2][1] - f[0][1], f[2][2] - f[0][2]];
                let cr = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                0.5 * (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt()
            }
        })
        .sum();
    let inradius = n as f64 * g / facet_sum;
    circum / inradius
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Kuhn simplices of the unit cube with base corner `a` on an integer lattice.
fn kuhn_simplices(n: usize, a: [i64; 3]) -> Vec<[[i64; 3]; 4]> {
    permutations(n)
        .into_iter()
        .map(|perm| {
            let mut s = [[0i64; 3]; 4];
            s[0] = a;
            for (step, &axis) in perm.iter().enumerate() {
                s[step + 1] = s[step];
                s[step + 1][axis] += 1;
            }
            s
        })
        .collect()
}

/// Uniform refinement of the simplex with vertices `corners` into `divisions^d`
/// sub-simplices (Freudenthal subdivision of the reference Kuhn simplex mapped
/// affinely onto the input). Vertices on the facets of the input are marked as
/// boundary.
pub fn mesh_simplex_divisions(corners: &[[f64; 3]], dim: Dim, divisions: usize) -> Result<SimplicialMesh> {
    let n = dim.n();
    if corners.len() != n + 1 {
        return Err(Error::input(format!("a {n}-simplex needs {} corners", n + 1)));
    }
    if divisions == 0 {
        return Err(Error::config("mesh_simplex needs at least one division"));
    }
    let m = divisions as i64;
    // reference Kuhn simplex {m ≥ y_0 ≥ y_1 ≥ … ≥ y_{d−1} ≥ 0}
    let inside = |p: &[i64; 3]| -> bool {
        p[0] <= m && p[n - 1] >= 0 && (0..n - 1).all(|i| p[i] >= p[i + 1])
    };
    let mut index = std::collections::HashMap::new();
    let mut vertices = Vec::new();
    let mut boundary = Vec::new();
    let mut simplices = Vec::new();
    let mut vid = |p: [i64; 3], vertices: &mut Vec<[f64; 3]>, boundary: &mut Vec<bool>| -> usize {
        *index.entry(p).or_insert_with(|| {
            // barycentric coordinates λ_0 = 1 − y_0/m, λ_j = (y_{j−1} − y_j)/m, λ_d = y_{d−1}/m
            let mut lam = vec![0.0; n + 1];
            lam[0] = 1.0 - p[0] as f64 / m as f64;
            for j in 1..n {
                lam[j] = (p[j - 1] - p[j]) as f64 / m as f64;
            }
            lam[n] = p[n - 1] as f64 / m as f64;
            let on_facet = p[0] == m || p[n - 1] == 0 || (0..n - 1).any(|i| p[i] == p[i + 1]);
            let mut x = [0.0; 3];
            for (j, l) in lam.iter().enumerate() {
                for i in 0..n {
                    x[i] += l * corners[j][i];
                }
            }
            vertices.push(x);
            boundary.push(on_facet);
            vertices.len() - 1
        })
    };
    let mut cube = [0i64; 3];
    loop {
        for s in kuhn_simplices(n, cube) {
            if s[..=n].iter().all(inside) {
                let mut ids = [0usize; 4];
                for a in 0..=n {
                    ids[a] = vid(s[a], &mut vertices, &mut boundary);
                }
                simplices.push(ids);
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                return SimplicialMesh::new(dim, vertices, simplices, boundary, None);
            }
            cube[i] += 1;
            if cube[i] < m {
                break;
            }
            cube[i] = 0;
            i += 1;
        }
    }
}

/// Uniform refinement of a simplex into elements of diameter strictly below `h`.
pub fn mesh_simplex(corners: &[[f64; 3]], dim: Dim, h: f64) -> Result<SimplicialMesh> {
    if !(h > 0.0) {
        return Err(Error::config(format!("mesh size must be positive, got {h}")));
    }
    let coarse = mesh_simplex_divisions(corners, dim, 1)?;
    let mut m = ((coarse.h() / h).ceil() as usize).max(1);
    loop {
        let mesh = mesh_simplex_divisions(corners, dim, m)?;
        if mesh.h() < h {
            return Ok(mesh);
        }
        m += 1;
    }
}

/// Structured Kuhn triangulation of the box `[lower, upper]` with `divisions[i]`
/// cells along axis `i`; the outer faces are marked as boundary.
pub fn mesh_box(dim: Dim, lower: [f64; 3], upper: [f64; 3], divisions: [usize; 3]) -> Result<SimplicialMesh> {
    let (vertices, simplices, boundary, _) = structured(dim, lower, upper, divisions)?;
    SimplicialMesh::new(dim, vertices, simplices, boundary, None)
}

/// Periodic structured triangulation of the torus `[0,N)^d` with `r` subdivisions
/// per unit cell, so each element lies in exactly one lattice cell.
///
/// All `(N·r+1)^d` grid points are kept as vertices; opposite faces are identified
/// through the periodic map (every vertex points to its representative in
/// `[0, N·r)^d`).
pub fn mesh_torus(dim: Dim, cells: usize, refinements: usize) -> Result<SimplicialMesh> {
    if cells == 0 || refinements == 0 {
        return Err(Error::config("mesh_torus needs N >= 1 and r >= 1"));
    }
    let n = dim.n();
    let m = cells * refinements;
    let mut div = [1usize; 3];
    let mut upper = [0.0; 3];
    for i in 0..n {
        div[i] = m;
        upper[i] = cells as f64;
    }
    let (vertices, simplices, _, grid) = structured(dim, [0.0; 3], upper, div)?;
    let stride = |g: [usize; 3]| -> usize {
        let mut id = 0;
        for i in (0..n).rev() {
            id = id * (m + 1) + g[i];
        }
        id
    };
    let periodic: Vec<usize> = grid
        .iter()
        .map(|g| {
            let mut w = *g;
            for c in w.iter_mut().take(n) {
                *c %= m;
            }
            stride(w)
        })
        .collect();
    let boundary = vec![false; vertices.len()];
    SimplicialMesh::new(dim, vertices, simplices, boundary, Some(periodic))
}

type Structured = (Vec<[f64; 3]>, Vec<[usize; 4]>, Vec<bool>, Vec<[usize; 3]>);

fn structured(dim: Dim, lower: [f64; 3], upper: [f64; 3], divisions: [usize; 3]) -> Result<Structured> {
    let n = dim.n();
    if divisions[..n].contains(&0) {
        return Err(Error::config("structured mesh needs at least one division per axis"));
    }
    let counts: Vec<usize> = (0..n).map(|i| divisions[i] + 1).collect();
    let id = |g: &[i64; 3]| -> usize {
        let mut id = 0usize;
        for i in (0..n).rev() {
            id = id * counts[i] + g[i] as usize;
        }
        id
    };
    let total: usize = counts.iter().product();
    let mut vertices = vec![[0.0; 3]; total];
    let mut boundary = vec![false; total];
    let mut grid = vec![[0usize; 3]; total];
    let mut g = [0i64; 3];
    loop {
        let v = id(&g);
        for i in 0..n {
            let t = g[i] as f64 / divisions[i] as f64;
            vertices[v][i] = lower[i] + t * (upper[i] - lower[i]);
            grid[v][i] = g[i] as usize;
            if g[i] == 0 || g[i] as usize == divisions[i] {
                boundary[v] = true;
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                break;
            }
            g[i] += 1;
            if (g[i] as usize) < counts[i] {
                break;
            }
            g[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    let mut simplices = Vec::new();
    let mut cube = [0i64; 3];
    loop {
        for s in kuhn_simplices(n, cube) {
            let mut ids = [0usize; 4];
            for a in 0..=n {
                ids[a] = id(&s[a]);
            }
            simplices.push(ids);
        }
        let mut i = 0;
        loop {
            if i == n {
                return Ok((vertices, simplices, boundary, grid));
            }
            cube[i] += 1;
            if (cube[i] as usize) < divisions[i] {
                break;
            }
            cube[i] = 0;
            i += 1;
        }
    }
}
