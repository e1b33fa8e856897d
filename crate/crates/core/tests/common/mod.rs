//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

/// Isotropic plane-strain (d = 2) or 3D stiffness in Mandel form, built from scratch.
pub fn stiffness(e: f64, nu: f64, d: usize) -> Vec<Vec<f64>> {
    let k = if d == 2 { 3 } else { 6 };
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mut a = vec![vec![0.0; k]; k];
    for i in 0..k {
        a[i][i] = 2.0 * mu;
    }
    for i in 0..d {
        for j in 0..d {
            a[i][j] += lambda;
        }
    }
    a
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

/// Gradient of the regularized von Mises indicator, `max(|s| − σ_y, 0)/(δ|s|)·s` with `s = dev τ`.
pub fn von_mises_rate(tau: &[f64], d: usize, sy: f64, delta: f64) -> Vec<f64> {
    let mean = tau[..d].iter().sum::<f64>() / d as f64;
    let mut s = tau.to_vec();
    for c in s.iter_mut().take(d) {
        *c -= mean;
    }
    let n = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= sy {
        return vec![0.0; tau.len()];
    }
    let f = (n - sy) / (delta * n);
    s.iter().map(|x| f * x).collect()
}

/// Classical RK4 for `ṗ = ∂Ψ^δ(A(ξ(t) − p) − H p)`, `p(0) = 0`.
/// Returns `(σ, p)` at `t = j·T/substeps` for `j = 0..=substeps`.
pub struct ZeroD {
    pub e: f64,
    pub nu: f64,
    pub h: f64,
    pub sy: f64,
    pub delta: f64,
    pub d: usize,
}

impl ZeroD {
    fn rhs(&self, a: &[Vec<f64>], xi: &[f64], p: &[f64]) -> Vec<f64> {
        let el: Vec<f64> = xi.iter().zip(p).map(|(x, q)| x - q).collect();
        let sigma = matvec(a, &el);
        let tau: Vec<f64> = sigma.iter().zip(p).map(|(s, q)| s - self.h * q).collect();
        von_mises_rate(&tau, self.d, self.sy, self.delta)
    }

    pub fn integrate(&self, xi: &dyn Fn(f64) -> Vec<f64>, t_end: f64, substeps: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let a = stiffness(self.e, self.nu, self.d);
        let k = a.len();
        let dt = t_end / substeps as f64;
        let mut p = vec![0.0; k];
        let stress = |p: &[f64], t: f64| {
            let x = xi(t);
            let el: Vec<f64> = x.iter().zip(p).map(|(x, q)| x - q).collect();
            matvec(&a, &el)
        };
        let mut out = vec![(stress(&p, 0.0), p.clone())];
        let axpy = |p: &[f64], s: f64, k: &[f64]| -> Vec<f64> { p.iter().zip(k).map(|(a, b)| a + s * b).collect() };
        for j in 0..substeps {
            let t = j as f64 * dt;
            let k1 = self.rhs(&a, &xi(t), &p);
            let k2 = self.rhs(&a, &xi(t + 0.5 * dt), &axpy(&p, 0.5 * dt, &k1));
            let k3 = self.rhs(&a, &xi(t + 0.5 * dt), &axpy(&p, 0.5 * dt, &k2));
            let k4 = self.rhs(&a, &xi(t + dt), &axpy(&p, dt, &k3));
            for c in 0..k {
                p[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            out.push((stress(&p, t + dt), p.clone()));
        }
        out
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `L²` norm of a P1 vector field on triangles (edge-midpoint rule, exact for quadratics).
pub fn l2_norm_p1_triangles(vertices: &[[f64; 3]], simplices: &[[usize; 4]], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for s in simplices {
        let [a, b, c] = [vertices[s[0]], vertices[s[1]], vertices[s[2]]];
        let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            for comp in 0..2 {
                let mid = 0.5 * (values[2 * s[i] + comp] + values[2 * s[j] + comp]);
                acc += area / 3.0 * mid * mid;
            }
        }
    }
    acc.sqrt()
}

/// `L²` error of a P1 field against a smooth one on triangles (7-point degree-5 rule).
pub fn l2_error_triangles(
    vertices: &[[f64; 3]],
    simplices: &[[usize; 4]],
    values: &[f64],
    exact: &dyn Fn(f64, f64) -> [f64; 2],
) -> f64 {
    let a1 = 0.059_715_871_789_770;
    let b1 = 0.470_142_064_105_115;
    let a2 = 0.797_426_985_353_087;
    let b2 = 0.101_286_507_323_456;
    let w0 = 0.225;
    let w1 = 0.132_394_152_788_506;
    let w2 = 0.125_939_180_544_827;
    let mut pts = vec![([1.0 / 3.0; 3], w0)];
    for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
        pts.push(([a, b, b], w));
        pts.push(([b, a, b], w));
        pts.push(([b, b, a], w));
    }
    let mut acc = 0.0;
    for s in simplices {
        let v = [vertices[s[0]], vertices[s[1]], vertices[s[2]]];
        let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
        for (lam, w) in &pts {
            let x: f64 = (0..3).map(|i| lam[i] * v[i][0]).sum();
            let y: f64 = (0..3).map(|i| lam[i] * v[i][1]).sum();
            let ex = exact(x, y);
            for comp in 0..2 {
                let uh: f64 = (0..3).map(|i| lam[i] * values[2 * s[i] + comp]).sum();
                acc += area * w * (uh - ex[comp]).powi(2);
            }
        }
    }
    acc.sqrt()
}
