//! The heterogeneous ε-problem: quasi-static elastoplasticity with kinematic
//! hardening on a fixed mesh, integrated by backward Euler.

use std::sync::Arc;

use crate::convex::FlowKind;
use crate::error::{Error, Result};
use crate::fem::{dot, Constraint, P1Space, SimplicialMesh};
use crate::mechanics::{ElementLaw, EquilibriumStep, GLOBAL_TOL};
use crate::media::Realization;
use crate::path::{discrete_h1_norm, validate_grid, StrainPath};
use crate::tensor::{MaterialPoint, SymTensor};

/// A vector field depending on time and position.
pub type TimeField = Arc<dyn Fn(f64, &[f64; 3]) -> [f64; 3] + Send + Sync>;

/// Dirichlet data `U(t, x)`.
#[derive(Clone)]
pub enum BoundaryData {
    /// `U(t, x) = ξ(t)·x + t·a`.
    Affine { xi: StrainPath, a_rate: [f64; 3] },
    General(TimeField),
}

impl BoundaryData {
    pub fn affine(xi: StrainPath) -> Self {
        BoundaryData::Affine {
            xi,
            a_rate: [0.0; 3],
        }
    }

    pub fn value(&self, t: f64, x: &[f64; 3]) -> [f64; 3] {
        match self {
            BoundaryData::Affine { xi, a_rate } => {
                let m = xi.at(t).to_matrix();
                let mut v = [0.0; 3];
                for i in 0..3 {
                    v[i] = t * a_rate[i] + (0..3).map(|j| m[i][j] * x[j]).sum::<f64>();
                }
                v
            }
            BoundaryData::General(f) => f(t, x),
        }
    }
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryData::Affine { xi, a_rate } => f
                .debug_struct("Affine")
                .field("xi", xi)
                .field("a_rate", a_rate)
                .finish(),
            BoundaryData::General(_) => f.write_str("General(..)"),
        }
    }
}

/// Complete data of one ε-problem.
#[derive(Clone, Debug)]
pub struct EpsProblem {
    space: P1Space,
    laws: Vec<ElementLaw>,
    times: Vec<f64>,
    dirichlet: BoundaryData,
    load: Option<TimeFieldDebug>,
    tol: f64,
}

/// Wrapper so problems stay `Debug`.
#[derive(Clone)]
struct TimeFieldDebug(TimeField);

impl std::fmt::Debug for TimeFieldDebug {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TimeField(..)")
    }
}

impl EpsProblem {
    /// Problem with explicit per-element laws.
    pub fn new(
        mesh: Arc<SimplicialMesh>,
        laws: Vec<ElementLaw>,
        times: Vec<f64>,
        dirichlet: BoundaryData,
        load: Option<TimeField>,
    ) -> Result<Self> {
        validate_grid(&times)?;
        if laws.len() != mesh.n_elements() {
            return Err(Error::config("one material law per element is required"));
        }
        let space = P1Space::new(mesh, Constraint::Dirichlet)?;
        for x in space.mesh().vertices() {
            let u0 = dirichlet.value(0.0, x);
            let f0 = load.as_ref().map(|f| f(0.0, x)).unwrap_or([0.0; 3]);
            if u0.iter().chain(&f0).any(|v| v.abs() > 1e-14) {
                return Err(Error::config("boundary data and load must vanish at t = 0"));
            }
        }
        Ok(EpsProblem {
            space,
            laws,
            times,
            dirichlet,
            load: load.map(TimeFieldDebug),
            tol: GLOBAL_TOL,
        })
    }

    /// Coefficients `C(τ_{x/ε}ω)` sampled at element barycenters; each sample is
    /// checked against the law's ellipticity constants.
    pub fn from_realization(
        mesh: Arc<SimplicialMesh>,
        omega: &Realization,
        epsilon: f64,
        delta: f64,
        times: Vec<f64>,
        dirichlet: BoundaryData,
        load: Option<TimeField>,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
        }
        let law = omega.law();
        let (gamma, beta) = (law.gamma() * (1.0 - 1e-12), law.beta() * (1.0 - 1e-12));
        let laws = mesh
            .geometries()
            .iter()
            .map(|g| {
                let m = omega.evaluate(&g.barycenter, epsilon)?;
                if !m.is_elliptic(gamma, beta) {
                    return Err(Error::config("sampled coefficients violate the ellipticity bounds"));
                }
                ElementLaw::new(m, law.flow(), delta)
            })
            .collect::<Result<_>>()?;
        Self::new(mesh, laws, times, dirichlet, load)
    }

    /// Constant coefficients on every element.
    pub fn homogeneous(
        mesh: Arc<SimplicialMesh>,
        material: MaterialPoint,
        flow: FlowKind,
        delta: f64,
        times: Vec<f64>,
        dirichlet: BoundaryData,
        load: Option<TimeField>,
    ) -> Result<Self> {
        let law = ElementLaw::new(material, flow, delta)?;
        let n = mesh.n_elements();
        Self::new(mesh, vec![law; n], times, dirichlet, load)
    }

    /// Overrides the relative equilibrium tolerance.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Same problem on the first `steps` steps of the grid.
    pub fn truncated(&self, steps: usize) -> Result<Self> {
        if steps == 0 || steps >= self.times.len() {
            return Err(Error::config("truncation must keep between 1 and all steps"));
        }
        let mut p = self.clone();
        p.times.truncate(steps + 1);
        Ok(p)
    }

    pub fn space(&self) -> &P1Space {
        &self.space
    }

    pub fn mesh(&self) -> &SimplicialMesh {
        self.space.mesh()
    }

    pub fn laws(&self) -> &[ElementLaw] {
        &self.laws
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dirichlet(&self) -> &BoundaryData {
        &self.dirichlet
    }

    /// Full nodal interpolant of `U(t, ·)`.
    pub fn boundary_values(&self, t: f64) -> Vec<f64> {
        self.space.interpolate(|x| self.dirichlet.value(t, x))
    }

    /// Boundary values used by the solver: affine data without the rigid
    /// translation `t·a`, which does not change any strain and is added back to the
    /// displacement afterwards.
    fn solver_boundary_values(&self, t: f64) -> (Vec<f64>, [f64; 3]) {
        match &self.dirichlet {
            BoundaryData::Affine { xi, a_rate } => {
                let data = BoundaryData::affine(xi.clone());
                let shift = [t * a_rate[0], t * a_rate[1], t * a_rate[2]];
                (self.space.interpolate(|x| data.value(t, x)), shift)
            }
            BoundaryData::General(_) => (self.boundary_values(t), [0.0; 3]),
        }
    }

    /// Dirichlet lift: boundary values, zero at the unknowns.
    pub fn lift(&self, t: f64) -> Vec<f64> {
        let zeros = vec![0.0; self.space.n_dofs()];
        self.space.expand(&zeros, &self.boundary_values(t))
    }

    /// Load vector on the unknowns.
    pub fn load_vector(&self, t: f64) -> Vec<f64> {
        match &self.load {
            Some(f) => self.space.restrict_forces(&self.space.load_vector(|x| (f.0)(t, x))),
            None => vec![0.0; self.space.n_dofs()],
        }
    }

    fn load_at(&self, t: f64, x: &[f64; 3]) -> [f64; 3] {
        self.load.as_ref().map(|f| (f.0)(t, x)).unwrap_or([0.0; 3])
    }
}

/// Per-step solution of the ε-problem. Index 0 is the initial state.
#[derive(Clone, Debug)]
pub struct PlasticTrajectory {
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<SymTensor>>,
    pub e: Vec<Vec<SymTensor>>,
    pub p: Vec<Vec<SymTensor>>,
    pub newton_iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Largest element-level flow-rule defect per step.
    pub flow_residuals: Vec<f64>,
}

impl PlasticTrajectory {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Integrates the ε-problem with backward Euler and a local/global Newton scheme.
pub fn solve_eps(problem: &EpsProblem) -> Result<PlasticTrajectory> {
    let space = &problem.space;
    let ne = space.mesh().n_elements();
    let dim = space.dim();
    let zero = vec![SymTensor::zero(dim); ne];
    let mut traj = PlasticTrajectory {
        times: problem.times.clone(),
        u: vec![vec![0.0; space.n_full()]],
        sigma: vec![zero.clone()],
        e: vec![zero.clone()],
        p: vec![zero],
        newton_iterations: vec![0],
        residuals: vec![0.0],
        flow_residuals: vec![0.0],
    };
    let mut free = vec![0.0; space.n_dofs()];
    for m in 1..problem.times.len() {
        let t = problem.times[m];
        let (fixed, shift) = problem.solver_boundary_values(t);
        let load = problem.load_vector(t);
        let step = EquilibriumStep {
            space,
            laws: &problem.laws,
            dt: t - problem.times[m - 1],
            p_old: &traj.p[m - 1],
            offset: None,
            fixed: &fixed,
            load: &load,
            tol: problem.tol,
        };
        let state = step.solve(free).map_err(|e| e.at_step(m))?;
        free = state.free;
        let sigma: Vec<SymTensor> = state.updates.iter().map(|u| u.sigma).collect();
        traj.e.push(
            sigma
                .iter()
                .zip(&problem.laws)
                .map(|(s, l)| l.material.compliance.apply(s))
                .collect(),
        );
        traj.p.push(state.updates.iter().map(|u| u.p).collect());
        traj.sigma.push(sigma);
        let d = space.dim().n();
        let mut u = state.full;
        if shift != [0.0; 3] {
            for (i, v) in u.iter_mut().enumerate() {
                *v += shift[i % d];
            }
        }
        traj.u.push(u);
        traj.newton_iterations.push(state.newton_iterations);
        traj.residuals.push(state.relative_residual);
        traj.flow_residuals
            .push(state.updates.iter().map(|u| u.residual).fold(0.0, f64::max));
    }
    Ok(traj)
}

fn check_region(traj: &PlasticTrajectory, mesh: &SimplicialMesh, region: &[usize]) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::input("averaging region is empty"));
    }
    if let Some(&k) = region.iter().find(|&&k| k >= traj.sigma[0].len()) {
        return Err(Error::input(format!("element {k} is not in the mesh")));
    }
    Ok(region.iter().map(|&k| mesh.geometry(k).volume).sum())
}

fn region_average(field: &[Vec<SymTensor>], mesh: &SimplicialMesh, region: &[usize], volume: f64) -> Vec<SymTensor> {
    field
        .iter()
        .map(|step| {
            let mut acc = SymTensor::zero(mesh.dim());
            for &k in region {
                acc += step[k].scale(mesh.geometry(k).volume);
            }
            acc.scale(1.0 / volume)
        })
        .collect()
}

/// Volume-weighted average of the stress over `region`, per step.
pub fn average_stress(traj: &PlasticTrajectory, mesh: &SimplicialMesh, region: &[usize]) -> Result<Vec<SymTensor>> {
    let vol = check_region(traj, mesh, region)?;
    Ok(region_average(&traj.sigma, mesh, region, vol))
}

/// Volume-weighted average of the plastic strain over `region`, per step.
pub fn average_plastic_strain(traj: &PlasticTrajectory, mesh: &SimplicialMesh, region: &[usize]) -> Result<Vec<SymTensor>> {
    let vol = check_region(traj, mesh, region)?;
    Ok(region_average(&traj.p, mesh, region, vol))
}

/// Norms, invariant defects and the discrete energy balance of a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResidualReport {
    /// Discrete `H¹(0,T;L²)` norms.
    pub norm_u: f64,
    pub norm_e: f64,
    pub norm_p: f64,
    pub norm_sigma: f64,
    /// `‖U‖_{H¹(0,T;H¹)} + ‖f‖_{H¹(0,T;L²)}`.
    pub data_norm: f64,
    /// `(‖u‖ + ‖e‖ + ‖p‖ + ‖σ‖) / data_norm` (0 for zero data).
    pub ratio: f64,
    pub max_decomposition: f64,
    pub max_constitutive: f64,
    pub max_flow_residual: f64,
    /// Smallest per-element dissipation increment `⟨Δp, σ − Bp⟩`.
    pub min_dissipation: f64,
    /// Defect of the exact discrete energy identity (includes the numerical
    /// dissipation of backward Euler), relative to the total work.
    pub energy_defect_discrete: f64,
    /// Defect of the time-continuous identity `W = ΔE + D` evaluated on the
    /// discrete solution; vanishes as `Δt → 0`.
    pub energy_defect: f64,
}

/// Diagnostics for a solved trajectory.
pub fn residual_report(traj: &PlasticTrajectory, problem: &EpsProblem) -> ResidualReport {
    let space = &problem.space;
    let mesh = space.mesh();
    let vols: Vec<f64> = mesh.geometries().iter().map(|g| g.volume).collect();
    let l2 = |f: &[SymTensor]| -> f64 { f.iter().zip(&vols).map(|(s, v)| v * s.inner(s)).sum::<f64>().sqrt() };
    let l2_diff = |a: &[SymTensor], b: &[SymTensor]| -> f64 {
        a.iter().zip(b).zip(&vols).map(|((x, y), v)| v * (*x - *y).norm().powi(2)).sum::<f64>().sqrt()
    };
    let d = mesh.dim().n();
    let lumped: Vec<f64> = {
        let mut w = vec![0.0; mesh.n_vertices()];
        for k in 0..mesh.n_elements() {
            for &v in mesh.simplex(k) {
                w[v] += vols[k] / (d + 1) as f64;
            }
        }
        w
    };
    let nodal_l2 = |u: &[f64]| -> f64 {
        (0..mesh.n_vertices())
            .map(|v| lumped[v] * (0..d).map(|i| u[v * d + i].powi(2)).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    };
    let nodal_h1 = |u: &[f64]| -> f64 {
        let grad: f64 = (0..mesh.n_elements())
            .map(|k| {
                let g = space.element_gradient(u, k);
                vols[k] * g.iter().flatten().map(|x| x * x).sum::<f64>()
            })
            .sum();
        (nodal_l2(u).powi(2) + grad).sqrt()
    };
    let steps = traj.times.len();
    let series = |f: &dyn Fn(usize) -> f64, inc: &dyn Fn(usize) -> f64| -> f64 {
        let values: Vec<f64> = (0..steps).map(f).collect();
        let incs: Vec<f64> = (0..steps).map(|m| if m == 0 { 0.0 } else { inc(m) }).collect();
        discrete_h1_norm(&traj.times, &values, &incs)
    };
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let norm_u = series(&|m| nodal_l2(&traj.u[m]), &|m| nodal_l2(&diff(&traj.u[m], &traj.u[m - 1])));
    let norm_e = series(&|m| l2(&traj.e[m]), &|m| l2_diff(&traj.e[m], &traj.e[m - 1]));
    let norm_p = series(&|m| l2(&traj.p[m]), &|m| l2_diff(&traj.p[m], &traj.p[m - 1]));
    let norm_sigma = series(&|m| l2(&traj.sigma[m]), &|m| l2_diff(&traj.sigma[m], &traj.sigma[m - 1]));

    let bvals: Vec<Vec<f64>> = traj.times.iter().map(|&t| problem.boundary_values(t)).collect();
    let norm_bc = series(&|m| nodal_h1(&bvals[m]), &|m| nodal_h1(&diff(&bvals[m], &bvals[m - 1])));
    let fvals: Vec<Vec<[f64; 3]>> = traj
        .times
        .iter()
        .map(|&t| mesh.geometries().iter().map(|g| problem.load_at(t, &g.barycenter)).collect())
        .collect();
    let f_l2 = |a: &[[f64; 3]], b: Option<&[[f64; 3]]>| -> f64 {
        a.iter()
            .enumerate()
            .map(|(k, x)| {
                let y = b.map(|b| b[k]).unwrap_or([0.0; 3]);
                vols[k] * (0..3).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };
    let norm_f = series(&|m| f_l2(&fvals[m], None), &|m| f_l2(&fvals[m], Some(&fvals[m - 1])));
    let data_norm = norm_bc + norm_f;
    let total = norm_u + norm_e + norm_p + norm_sigma;
    let ratio = if data_norm > 0.0 { total / data_norm } else { 0.0 };

    let mut max_decomposition: f64 = 0.0;
    let mut max_constitutive: f64 = 0.0;
    let mut min_dissipation = f64::INFINITY;
    let (mut work_sum, mut energy_sum, mut diss_sum, mut num_sum, mut scale) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for m in 1..steps {
        let strains = space.element_strains(&traj.u[m]);
        for k in 0..mesh.n_elements() {
            let (e, p, s) = (traj.e[m][k], traj.p[m][k], traj.sigma[m][k]);
            let law = &problem.laws[k].material;
            max_decomposition = max_decomposition.max((strains[k] - e - p).norm() / (e.norm() + p.norm() + 1.0));
            max_constitutive = max_constitutive.max((e - law.compliance.apply(&s)).norm() / (e.norm() + 1.0));
            let dp = p - traj.p[m - 1][k];
            let back = law.hardening.apply(&p);
            min_dissipation = min_dissipation.min(dp.inner(&(s - back)));
        }
        // work done by the boundary data and the load
        let lift_now = problem.lift(traj.times[m]);
        let lift_prev = problem.lift(traj.times[m - 1]);
        let dlift = diff(&lift_now, &lift_prev);
        let du = diff(&traj.u[m], &traj.u[m - 1]);
        let du_free = space.restrict_values(&diff(&du, &dlift));
        let load = problem.load_vector(traj.times[m]);
        let lift_strain = space.element_strains(&dlift);
        let mut work = dot(&load, &du_free);
        let (mut de, mut diss, mut num) = (0.0, 0.0, 0.0);
        for k in 0..mesh.n_elements() {
            let v = vols[k];
            let law = &problem.laws[k].material;
            let (s1, s0) = (traj.sigma[m][k], traj.sigma[m - 1][k]);
            let (p1, p0) = (traj.p[m][k], traj.p[m - 1][k]);
            work += v * s1.inner(&lift_strain[k]);
            let energy = |s: &SymTensor, p: &SymTensor| {
                0.5 * s.inner(&law.compliance.apply(s)) + 0.5 * p.inner(&law.hardening.apply(p))
            };
            de += v * (energy(&s1, &p1) - energy(&s0, &p0));
            diss += v * (p1 - p0).inner(&(s1 - law.hardening.apply(&p1)));
            let (ds, dp) = (s1 - s0, p1 - p0);
            num += v * 0.5 * (ds.inner(&law.compliance.apply(&ds)) + dp.inner(&law.hardening.apply(&dp)));
        }
        work_sum += work;
        energy_sum += de;
        diss_sum += diss;
        num_sum += num;
        scale += work.abs() + de.abs() + diss.abs();
    }
    let (energy_defect_discrete, energy_defect) = if scale > 0.0 {
        (
            (work_sum - energy_sum - diss_sum - num_sum).abs() / scale,
            (work_sum - energy_sum - diss_sum).abs() / scale,
        )
    } else {
        (0.0, 0.0)
    };
    ResidualReport {
        norm_u,
        norm_e,
        norm_p,
        norm_sigma,
        data_norm,
        ratio,
        max_decomposition,
        max_constitutive,
        max_flow_residual: traj.flow_residuals.iter().copied().fold(0.0, f64::max),
        min_dissipation: if min_dissipation.is_finite() { min_dissipation } else { 0.0 },
        energy_defect_discrete,
        energy_defect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{mesh_box, solve_elastic};
    use crate::path::uniform_grid;
    use crate::tensor::Dim;

    fn square(n: usize) -> Arc<SimplicialMesh> {
        Arc::new(mesh_box(Dim::Two, [0.0; 3], [1.0, 1.0, 0.0], [n, n, 1]).unwrap())
    }

    fn xi(s: f64) -> SymTensor {
        SymTensor::from_mandel(Dim::Two, &[s, -0.5 * s, 0.3 * s]).unwrap()
    }

    fn material(sy: f64) -> MaterialPoint {
        MaterialPoint::isotropic(1.0, 0.3, 0.1, sy, Dim::Two).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let times = uniform_grid(1.0, 3).unwrap();
        let bc = BoundaryData::affine(StrainPath::zero(Dim::Two, 1.0).unwrap());
        let pb = EpsProblem::homogeneous(square(3), material(0.01), FlowKind::VonMisesIndicator, 0.01, times, bc, None).unwrap();
        let traj = solve_eps(&pb).unwrap();
        for m in 0..=3 {
            assert!(traj.u[m].iter().all(|&v| v == 0.0));
            assert!(traj.sigma[m].iter().chain(&traj.p[m]).all(|s| s.max_abs() == 0.0));
        }
        let rep = residual_report(&traj, &pb);
        assert_eq!((rep.norm_u, rep.norm_sigma, rep.norm_p, rep.ratio), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_incompatible_initial_data() {
        let times = uniform_grid(1.0, 2).unwrap();
        let bc = BoundaryData::General(Arc::new(|_, _| [1.0, 0.0, 0.0]));
        let err = EpsProblem::homogeneous(square(2), material(0.01), FlowKind::VonMisesIndicator, 0.01, times, bc, None);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn elastic_limit_matches_linear_solve() {
        let mesh = square(8);
        let times = uniform_grid(1.0, 3).unwrap();
        let path = StrainPath::new(times.clone(), vec![xi(0.0), xi(0.01), xi(-0.02), xi(0.015)]).unwrap();
        let load: TimeField = Arc::new(|t, x| [t * x[1], -t, 0.0]);
        let pb = EpsProblem::homogeneous(
            mesh.clone(),
            material(1e9),
            FlowKind::VonMisesIndicator,
            0.01,
            times.clone(),
            BoundaryData::affine(path.clone()),
            Some(load.clone()),
        )
        .unwrap();
        let traj = solve_eps(&pb).unwrap();
        let a = *material(1e9).stiffness();
        for m in 1..=3 {
            let t = times[m];
            let bc = BoundaryData::affine(path.clone());
            let u = solve_elastic(pb.space(), &vec![a; mesh.n_elements()], |x| load(t, x), |x| bc.value(t, x)).unwrap();
            let err: f64 = u.iter().zip(&traj.u[m]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let nrm: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err <= 1e-8 * nrm, "step {m}: {err} vs {nrm}");
        }
    }

    #[test]
    fn plastic_run_satisfies_invariants() {
        let mesh = square(4);
        let times = uniform_grid(1.0, 8).unwrap();
        let path = StrainPath::from_fn(&times, xi(1.0), |t| 0.05 * (3.0 * t).sin()).unwrap();
        let load: TimeField = Arc::new(|t, x| [0.02 * t * x[0], 0.0, 0.0]);
        let pb = EpsProblem::homogeneous(mesh, material(0.01), FlowKind::VonMisesIndicator, 0.02, times, BoundaryData::affine(path), Some(load)).unwrap();
        let traj = solve_eps(&pb).unwrap();
        assert!(traj.p.last().unwrap().iter().any(|p| p.norm() > 1e-4));
        assert!(traj.residuals.iter().all(|&r| r <= 1e-8));
        let rep = residual_report(&traj, &pb);
        assert!(rep.max_decomposition < 1e-9);
        assert!(rep.max_constitutive < 1e-9);
        assert!(rep.max_flow_residual <= 1e-12);
        assert!(rep.min_dissipation >= -1e-10);
        assert!(rep.energy_defect_discrete < 1e-6, "{}", rep.energy_defect_discrete);
        assert!(rep.energy_defect > rep.energy_defect_discrete);
    }

    #[test]
    fn trajectory_is_deterministic_and_causal() {
        let mesh = square(4);
        let times = uniform_grid(1.0, 6).unwrap();
        let path = StrainPath::from_fn(&times, xi(1.0), |t| 0.04 * t).unwrap();
        let pb = EpsProblem::homogeneous(mesh, material(0.01), FlowKind::NormType, 0.01, times, BoundaryData::affine(path), None).unwrap();
        let a = solve_eps(&pb).unwrap();
        let b = solve_eps(&pb).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.sigma, b.sigma);
        let short = solve_eps(&pb.truncated(3).unwrap()).unwrap();
        for m in 0..=3 {
            assert_eq!(short.u[m], a.u[m]);
            assert_eq!(short.p[m], a.p[m]);
        }
    }

    #[test]
    fn averages_are_linear_and_additive() {
        let mesh = square(4);
        let times = uniform_grid(1.0, 2).unwrap();
        let path = StrainPath::from_fn(&times, xi(1.0), |t| 0.03 * t).unwrap();
        let pb = EpsProblem::homogeneous(mesh.clone(), material(0.01), FlowKind::VonMisesIndicator, 0.01, times, BoundaryData::affine(path), None).unwrap();
        let traj = solve_eps(&pb).unwrap();
        let n = mesh.n_elements();
        let (left, right): (Vec<usize>, Vec<usize>) = (0..n).partition(|&k| k % 3 == 0);
        let all: Vec<usize> = (0..n).collect();
        let va: f64 = left.iter().map(|&k| mesh.geometry(k).volume).sum();
        let vb: f64 = right.iter().map(|&k| mesh.geometry(k).volume).sum();
        let sa = average_stress(&traj, &mesh, &left).unwrap();
        let sb = average_stress(&traj, &mesh, &right).unwrap();
        let s = average_stress(&traj, &mesh, &all).unwrap();
        for m in 0..3 {
            let comb = (sa[m].scale(va) + sb[m].scale(vb)).scale(1.0 / (va + vb));
            assert!((comb - s[m]).max_abs() <= 1e-14 * (1.0 + s[m].max_abs()));
        }
        // homogeneous affine problem: every element carries the same stress
        for k in 0..n {
            assert!((traj.sigma[2][k] - s[2]).max_abs() < 1e-10);
        }
        assert!(average_stress(&traj, &mesh, &[]).is_err());
    }
}
