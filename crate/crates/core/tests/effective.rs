//! FE² solver against the cell operator and the discrete weak form.

use std::sync::Arc;

use stochplast::cell::{sigma, RveConfig};
use stochplast::convex::FlowKind;
use stochplast::effective::{solve_effective, weak_form_residual, MacroConfig, MACRO_TOL};
use stochplast::eps::{BoundaryData, TimeField};
use stochplast::fem::mesh_simplex_divisions;
use stochplast::media::{Distribution, LawSpec, ProbabilityLaw};
use stochplast::path::{uniform_grid, StrainPath};
use stochplast::tensor::{Dim, SymTensor};

fn rve() -> RveConfig {
    let spec = LawSpec {
        young: Distribution::bernoulli(1.0, 3.0),
        nu: Distribution::Point(0.3),
        sigma_y: Distribution::bernoulli(0.01, 0.02),
        hardening: Distribution::Point(0.1),
        flow: FlowKind::VonMisesIndicator,
    };
    RveConfig {
        cells: 3,
        refinements: 1,
        samples: 2,
        delta: 1e-3,
        law: Arc::new(ProbabilityLaw::new(spec, Dim::Two).unwrap()),
        base_seed: 12,
    }
}

fn triangle() -> [[f64; 3]; 3] {
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
}

fn path(times: &[f64]) -> StrainPath {
    let dir = SymTensor::from_mandel(Dim::Two, &[0.03, -0.01, 0.02]).unwrap();
    StrainPath::from_fn(times, dir, |t| (std::f64::consts::PI * t).sin()).unwrap()
}

#[test]
fn single_element_reproduces_the_cell_operator() {
    let mesh = Arc::new(mesh_simplex_divisions(&triangle(), Dim::Two, 1).unwrap());
    assert_eq!(mesh.n_elements(), 1);
    let times = uniform_grid(1.0, 6).unwrap();
    let xi = path(&times);
    let cfg = MacroConfig::new(mesh, rve(), BoundaryData::affine(xi.clone()), times.clone());
    let sol = solve_effective(&cfg).unwrap();
    let reference = sigma(&cfg.rve, &xi, &times).unwrap();
    for m in 0..times.len() {
        let diff = (sol.sigma[m][0] - reference.sigma[m]).norm();
        assert!(diff <= 1e-12 * (1.0 + reference.sigma[m].norm()), "step {m}: {diff}");
        assert!((sol.pi[m][0] - reference.pi[m]).norm() <= 1e-12);
    }
}

#[test]
fn weak_form_holds_for_every_test_function() {
    let mesh = Arc::new(mesh_simplex_divisions(&triangle(), Dim::Two, 4).unwrap());
    let times = uniform_grid(1.0, 3).unwrap();
    let mut cfg = MacroConfig::new(mesh, rve(), BoundaryData::affine(path(&times)), times.clone());
    let load: TimeField = Arc::new(|t, x| [0.02 * t * x[1], -0.01 * t, 0.0]);
    cfg.load = Some(load);
    let sol = solve_effective(&cfg).unwrap();
    for m in 1..times.len() {
        let r = weak_form_residual(&cfg, &sol, m).unwrap();
        assert!(r <= MACRO_TOL, "step {m}: {r}");
    }
    assert!(sol.pi.last().unwrap().iter().any(|p| p.norm() > 0.0));
}
