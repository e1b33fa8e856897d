//! Random checkerboard media.
//!
//! A realization assigns i.i.d. material parameters to the unit cells `z + [0,1)^d`
//! of the integer lattice and is translated by a uniform random shift. Cell
//! values are never stored: the parameters of cell `z` are produced by a
//! ChaCha stream keyed by `(seed, z)`, so every query is a pure function of its
//! inputs and the field is defined on all of ℝ^d.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::FlowKind;
use crate::error::{Error, Result};
use crate::tensor::{ellipticity_constant, isotropic_compliance, Dim, MaterialPoint};

/// ChaCha stream reserved for the shift; cell keys use at most 63 bits.
const SHIFT_STREAM: u64 = u64::MAX;
const COORD_BITS: u32 = 21;

/// Distribution of one scalar material parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Point(f64),
    Uniform { low: f64, high: f64 },
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

impl Distribution {
    /// Two-point law with equal weights.
    pub fn bernoulli(a: f64, b: f64) -> Self {
        Distribution::Discrete {
            values: vec![a, b],
            weights: vec![0.5, 0.5],
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("law.{name}: {m}")));
        match self {
            Distribution::Point(v) if !v.is_finite() => bad("non-finite point mass"),
            Distribution::Uniform { low, high } if !(low <= high) || !low.is_finite() || !high.is_finite() => {
                bad("uniform interval must satisfy low <= high")
            }
            Distribution::Discrete { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return bad("discrete law needs matching non-empty values and weights");
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || values.iter().any(|v| !v.is_finite()) {
                    return bad("discrete law needs finite values and non-negative weights");
                }
                if !(weights.iter().sum::<f64>() > 0.0) {
                    return bad("discrete law has empty support");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Inverse-CDF sample from a uniform variate `u ∈ [0,1)`.
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            Distribution::Point(v) => *v,
            Distribution::Uniform { low, high } => low + (high - low) * u,
            Distribution::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                let target = u * total;
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if target < acc {
                        return *v;
                    }
                }
                // u close to 1 with rounding: last atom with positive weight
                *values
                    .iter()
                    .zip(weights)
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(v, _)| v)
                    .expect("validated non-empty support")
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Point(v) => *v,
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Distribution::Point(_) => 0.0,
            Distribution::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Distribution::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                let m = self.mean();
                values
                    .iter()
                    .zip(weights)
                    .map(|(v, w)| w * (v - m).powi(2))
                    .sum::<f64>()
                    / total
            }
        }
    }

    /// Points that bracket the support (atoms or interval ends).
    fn support_points(&self) -> Vec<f64> {
        match self {
            Distribution::Point(v) => vec![*v],
            Distribution::Uniform { low, high } => vec![*low, *high],
            Distribution::Discrete { values, weights } => values
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(v, _)| *v)
                .collect(),
        }
    }

    fn min(&self) -> f64 {
        self.support_points().into_iter().fold(f64::INFINITY, f64::min)
    }

    fn max(&self) -> f64 {
        self.support_points().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Material parameters of one checkerboard cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellParams {
    pub young: f64,
    pub poisson: f64,
    pub yield_stress: f64,
    pub hardening: f64,
}

impl CellParams {
    pub fn material(&self, dim: Dim) -> Result<MaterialPoint> {
        MaterialPoint::isotropic(self.young, self.poisson, self.hardening, self.yield_stress, dim)
    }
}

/// Serialized form of a [`ProbabilityLaw`] (the `law` block of a run config).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawSpec {
    #[serde(rename = "E")]
    pub young: Distribution,
    pub nu: Distribution,
    pub sigma_y: Distribution,
    /// Kinematic hardening modulus, `B = H·Id`.
    #[serde(rename = "H")]
    pub hardening: Distribution,
    #[serde(default = "default_flow")]
    pub flow: FlowKind,
}

fn default_flow() -> FlowKind {
    FlowKind::VonMisesIndicator
}

/// Independent per-cell distributions of `(E, ν, σ_y, H)` plus the flow-rule kind.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityLaw {
    spec: LawSpec,
    dim: Dim,
    gamma: f64,
    beta: f64,
}

impl ProbabilityLaw {
    pub fn new(spec: LawSpec, dim: Dim) -> Result<Self> {
        spec.young.validate("E")?;
        spec.nu.validate("nu")?;
        spec.sigma_y.validate("sigma_y")?;
        spec.hardening.validate("H")?;
        if !(spec.young.min() > 0.0) {
            return Err(Error::config("law.E must be supported in (0, ∞)"));
        }
        if !(spec.nu.min() > -1.0 && spec.nu.max() < 0.5) {
            return Err(Error::config("law.nu must be supported in (-1, 1/2)"));
        }
        if !(spec.sigma_y.min() > 0.0) {
            return Err(Error::config("law.sigma_y must be supported in (0, ∞)"));
        }
        if !(spec.hardening.min() > 0.0) {
            return Err(Error::config("law.H must be supported in (0, ∞)"));
        }
        // Compliance eigenvalues are (1+ν)/E and a volumetric value; both are
        // monotone in E and the volumetric one is concave in ν, so its extremes over
        // the ν range sit at the ends or at the interior stationary point ν = −1/4.
        let mut nus = vec![spec.nu.min(), spec.nu.max()];
        if nus[0] < -0.25 && nus[1] > -0.25 {
            nus.push(-0.25);
        }
        let mut gamma = f64::INFINITY;
        for &e in &[spec.young.min(), spec.young.max()] {
            for &nu in &nus {
                gamma = gamma.min(ellipticity_constant(&isotropic_compliance(e, nu, dim)?));
            }
        }
        let (hmin, hmax) = (spec.hardening.min(), spec.hardening.max());
        let beta = hmin.min(1.0 / hmax).min(1.0);
        Ok(ProbabilityLaw {
            spec,
            dim,
            gamma,
            beta,
        })
    }

    /// Deterministic law: every cell carries the same parameters.
    pub fn point(p: CellParams, flow: FlowKind, dim: Dim) -> Result<Self> {
        Self::new(
            LawSpec {
                young: Distribution::Point(p.young),
                nu: Distribution::Point(p.poisson),
                sigma_y: Distribution::Point(p.yield_stress),
                hardening: Distribution::Point(p.hardening),
                flow,
            },
            dim,
        )
    }

    pub fn spec(&self) -> &LawSpec {
        &self.spec
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn flow(&self) -> FlowKind {
        self.spec.flow
    }

    /// Uniform ellipticity constant γ of the compliance over the support.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Uniform ellipticity constant β of the hardening over the support.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_deterministic(&self) -> bool {
        [&self.spec.young, &self.spec.nu, &self.spec.sigma_y, &self.spec.hardening]
            .iter()
            .all(|d| d.variance() == 0.0)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> CellParams {
        CellParams {
            young: self.spec.young.sample(rng.random()),
            poisson: self.spec.nu.sample(rng.random()),
            yield_stress: self.spec.sigma_y.sample(rng.random()),
            hardening: self.spec.hardening.sample(rng.random()),
        }
    }
}

/// Lattice cell index.
pub type Cell = [i64; 3];

fn cell_key(dim: Dim, z: &Cell) -> u64 {
    let mut key = 0u64;
    for &c in &z[..dim.n()] {
        let zig = ((c << 1) ^ (c >> 63)) as u64;
        key = (key << COORD_BITS) | (zig & ((1 << COORD_BITS) - 1));
    }
    key
}

/// One sampled medium ω: a seed, a shift and the law.
#[derive(Clone, Debug)]
pub struct Realization {
    seed: u64,
    shift: [f64; 3],
    law: Arc<ProbabilityLaw>,
}

impl PartialEq for Realization {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.shift == other.shift && *self.law == *other.law
    }
}

/// Draws a realization; the shift is uniform on `[0,1)^d` and determined by the seed.
pub fn sample_realization(law: &ProbabilityLaw, seed: u64) -> Realization {
    Realization::new(Arc::new(law.clone()), seed)
}

impl Realization {
    pub fn new(law: Arc<ProbabilityLaw>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SHIFT_STREAM);
        let mut shift = [0.0; 3];
        for s in shift.iter_mut().take(law.dim().n()) {
            *s = rng.random();
        }
        Realization { seed, shift, law }
    }

    /// Realization with a prescribed shift.
    pub fn with_shift(law: Arc<ProbabilityLaw>, seed: u64, shift: [f64; 3]) -> Self {
        Realization { seed, shift, law }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shift(&self) -> [f64; 3] {
        self.shift
    }

    pub fn law(&self) -> &ProbabilityLaw {
        &self.law
    }

    pub fn dim(&self) -> Dim {
        self.law.dim()
    }

    /// Parameters of lattice cell `z` (before shifting); pure in `(seed, z)`.
    pub fn cell_params(&self, z: &Cell) -> CellParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(cell_key(self.dim(), z));
        self.law.draw(&mut rng)
    }

    /// Lattice cell containing `x/ε + shift`.
    pub fn cell_at(&self, x: &[f64], eps: f64) -> Cell {
        let mut z = [0i64; 3];
        for i in 0..self.dim().n() {
            z[i] = (x[i] / eps + self.shift[i]).floor() as i64;
        }
        z
    }

    pub fn params_at(&self, x: &[f64], eps: f64) -> CellParams {
        self.cell_params(&self.cell_at(x, eps))
    }

    /// Material at `x` for the ε-scaled medium, `C_ε(x) = C(τ_{x/ε} ω)`.
    pub fn evaluate(&self, x: &[f64], eps: f64) -> Result<MaterialPoint> {
        if !(eps > 0.0) {
            return Err(Error::config(format!("scale ε must be positive, got {eps}")));
        }
        self.params_at(x, eps).material(self.dim())
    }

    /// `τ_y ω`: evaluating the result at `x` equals evaluating `self` at `x + y`.
    pub fn shifted(&self, y: &[f64]) -> Realization {
        let mut out = self.clone();
        for i in 0..self.dim().n() {
            out.shift[i] += y[i];
        }
        out
    }

    /// Exact mean of `g` over the box `[−L, L]^d` at scale 1.
    pub fn ergodic_average(&self, g: impl Fn(&CellParams) -> f64, half_width: f64) -> Result<f64> {
        if !(half_width >= 1.0) {
            return Err(Error::config("ergodic_average needs L >= 1"));
        }
        let n = self.dim().n();
        let l = half_width;
        // per-axis list of (cell index, overlap length)
        let mut axes: Vec<Vec<(i64, f64)>> = Vec::with_capacity(n);
        for i in 0..n {
            let s = self.shift[i];
            let first = (-l + s).floor() as i64;
            let last = (l + s).ceil() as i64 - 1;
            let mut cells = Vec::new();
            for z in first..=last {
                let lo = (z as f64 - s).max(-l);
                let hi = (z as f64 + 1.0 - s).min(l);
                if hi > lo {
                    cells.push((z, hi - lo));
                }
            }
            axes.push(cells);
        }
        // accumulate deviations from a reference value so constant g is reproduced exactly
        let mut reference = None;
        let mut total = 0.0;
        let mut weight = 0.0;
        let mut idx = vec![0usize; n];
        loop {
            let mut z = [0i64; 3];
            let mut w = 1.0;
            for i in 0..n {
                let (c, len) = axes[i][idx[i]];
                z[i] = c;
                w *= len;
            }
            let v = g(&self.cell_params(&z));
            let r = *reference.get_or_insert(v);
            total += w * (v - r);
            weight += w;
            let mut i = 0;
            loop {
                if i == n {
                    return Ok(r + total / weight);
                }
                idx[i] += 1;
                if idx[i] < axes[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }
}

/// The periodization of a realization on the torus `[0,N)^d`: the N^d block of
/// cells `z ∈ {0,…,N−1}^d` repeated periodically (the shift is not used, cells are
/// lattice aligned).
#[derive(Clone, Debug)]
pub struct TorusRealization {
    pub base: Realization,
    pub cells_per_side: usize,
}

impl TorusRealization {
    pub fn new(base: Realization, cells_per_side: usize) -> Result<Self> {
        if cells_per_side == 0 {
            return Err(Error::config("torus needs N >= 1 cells per side"));
        }
        Ok(TorusRealization {
            base,
            cells_per_side,
        })
    }

    pub fn cell_params(&self, z: &Cell) -> CellParams {
        let n = self.cells_per_side as i64;
        let mut w = [0i64; 3];
        for i in 0..self.base.dim().n() {
            w[i] = z[i].rem_euclid(n);
        }
        self.base.cell_params(&w)
    }

    /// Parameters at a point of the torus (coordinates in cell units).
    pub fn params_at(&self, x: &[f64]) -> CellParams {
        let mut z = [0i64; 3];
        for i in 0..self.base.dim().n() {
            z[i] = x[i].floor() as i64;
        }
        self.cell_params(&z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_phase_e() -> ProbabilityLaw {
        ProbabilityLaw::new(
            LawSpec {
                young: Distribution::bernoulli(1.0, 2.0),
                nu: Distribution::Point(0.3),
                sigma_y: Distribution::Point(0.1),
                hardening: Distribution::Point(0.2),
                flow: FlowKind::VonMisesIndicator,
            },
            Dim::Two,
        )
        .unwrap()
    }

    fn point_law() -> ProbabilityLaw {
        ProbabilityLaw::point(
            CellParams {
                young: 1.0,
                poisson: 0.3,
                yield_stress: 0.1,
                hardening: 0.2,
            },
            FlowKind::VonMisesIndicator,
            Dim::Two,
        )
        .unwrap()
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn point_mass_law_is_constant() {
        let law = point_law();
        let mut st = 7u64;
        for seed in 0..20 {
            let w = sample_realization(&law, seed);
            let ref_mp = w.evaluate(&[0.0, 0.0], 1.0).unwrap();
            for _ in 0..20 {
                let x = [100.0 * lcg(&mut st) - 50.0, 100.0 * lcg(&mut st) - 50.0];
                let eps = 0.01 + lcg(&mut st);
                assert_eq!(w.evaluate(&x, eps).unwrap(), ref_mp);
            }
            assert_eq!(w.ergodic_average(|p| p.young, 3.5).unwrap(), 1.0);
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let law = two_phase_e();
        let a = sample_realization(&law, 42);
        let b = sample_realization(&law, 42);
        assert_eq!(a, b);
        let mut st = 1u64;
        for _ in 0..1000 {
            let x = [40.0 * lcg(&mut st) - 20.0, 40.0 * lcg(&mut st) - 20.0];
            assert_eq!(a.params_at(&x, 0.3), b.params_at(&x, 0.3));
        }
    }

    /// Asymptotic Kolmogorov–Smirnov 1% critical value: 1.628/√n.
    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.total_cmp(b));
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
            .fold(0.0, f64::max)
    }

    #[test]
    fn shift_is_uniform() {
        let law = two_phase_e();
        let n = 10_000;
        let shifts: Vec<[f64; 3]> = (0..n).map(|s| sample_realization(&law, s).shift()).collect();
        for i in 0..2 {
            let coord: Vec<f64> = shifts.iter().map(|s| s[i]).collect();
            assert!(coord.iter().all(|&c| (0.0..1.0).contains(&c)));
            let d = ks_uniform(coord);
            assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
        }
    }

    #[test]
    fn shift_group_law() {
        let law = two_phase_e();
        let w = sample_realization(&law, 3);
        let mut st = 5u64;
        assert_eq!(w.shifted(&[0.0, 0.0]), w);
        for _ in 0..1000 {
            let x = [20.0 * lcg(&mut st) - 10.0, 20.0 * lcg(&mut st) - 10.0];
            let y = [20.0 * lcg(&mut st) - 10.0, 20.0 * lcg(&mut st) - 10.0];
            let a = [5.0 * lcg(&mut st), 5.0 * lcg(&mut st)];
            let xy = [x[0] + y[0], x[1] + y[1]];
            assert_eq!(w.shifted(&y).params_at(&x, 1.0), w.params_at(&xy, 1.0));
            let ab = [a[0] + y[0], a[1] + y[1]];
            assert_eq!(
                w.shifted(&a).shifted(&y).params_at(&x, 1.0),
                w.shifted(&ab).params_at(&x, 1.0)
            );
        }
    }

    #[test]
    fn integer_shift_permutes_cells() {
        let law = two_phase_e();
        let w = Realization::with_shift(Arc::new(law), 11, [0.0; 3]);
        for i in -5..5 {
            for j in -5..5 {
                let x = [i as f64 + 0.5, j as f64 + 0.5];
                let next = [x[0] + 1.0, x[1]];
                assert_eq!(w.shifted(&[1.0, 0.0]).params_at(&x, 1.0), w.params_at(&next, 1.0));
                assert_eq!(w.params_at(&x, 1.0), w.cell_params(&[i, j, 0]));
            }
        }
    }

    #[test]
    fn bernoulli_frequency() {
        let law = two_phase_e();
        let w = sample_realization(&law, 99);
        let mut count = 0;
        for i in 0..100 {
            for j in 0..100 {
                if w.cell_params(&[i, j, 0]).young == 2.0 {
                    count += 1;
                }
            }
        }
        // 99.9% binomial interval for n=10⁴, p=½ is ±0.0165 around ½
        let freq = count as f64 / 1e4;
        assert!((0.48..=0.52).contains(&freq), "{freq}");
    }

    #[test]
    fn ergodic_average_clt_bound() {
        let law = two_phase_e();
        let l: f64 = 32.0;
        let bound = 3.0 * 0.5 / (2.0 * l).powi(2).sqrt();
        let inside = (0..100)
            .filter(|&s| {
                let avg = sample_realization(&law, 1000 + s).ergodic_average(|p| p.young, l).unwrap();
                (avg - 1.5).abs() <= bound
            })
            .count();
        assert!(inside >= 99, "{inside}");
    }

    #[test]
    fn ergodic_average_is_exact_quadrature() {
        // brute-force midpoint quadrature on a fine grid as an independent check
        let law = two_phase_e();
        let w = sample_realization(&law, 5);
        let l = 2.0;
        let exact = w.ergodic_average(|p| p.young, l).unwrap();
        let m = 800;
        let h = 2.0 * l / m as f64;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = [-l + (i as f64 + 0.5) * h, -l + (j as f64 + 0.5) * h];
                acc += w.params_at(&x, 1.0).young;
            }
        }
        let approx = acc / (m * m) as f64;
        assert!((exact - approx).abs() < 5e-3, "{exact} vs {approx}");
    }

    #[test]
    fn invalid_laws() {
        let mut spec = two_phase_e().spec().clone();
        spec.young = Distribution::Discrete {
            values: vec![],
            weights: vec![],
        };
        assert!(ProbabilityLaw::new(spec.clone(), Dim::Two).is_err());
        spec.young = Distribution::Point(-1.0);
        assert!(ProbabilityLaw::new(spec.clone(), Dim::Two).is_err());
        spec.young = Distribution::Point(1.0);
        spec.nu = Distribution::Uniform { low: 0.2, high: 0.5 };
        assert!(ProbabilityLaw::new(spec, Dim::Two).is_err());
    }

    #[test]
    fn law_constants_bound_every_sample() {
        let law = ProbabilityLaw::new(
            LawSpec {
                young: Distribution::Uniform { low: 0.5, high: 3.0 },
                nu: Distribution::Uniform { low: -0.5, high: 0.45 },
                sigma_y: Distribution::Point(0.1),
                hardening: Distribution::Uniform { low: 0.1, high: 0.4 },
                flow: FlowKind::VonMisesIndicator,
            },
            Dim::Three,
        )
        .unwrap();
        let w = sample_realization(&law, 1);
        for i in 0..200 {
            let mp = w.cell_params(&[i, 0, 0]).material(Dim::Three).unwrap();
            assert!(mp.is_elliptic(law.gamma(), law.beta()));
        }
    }

    #[test]
    fn torus_wraps() {
        let law = two_phase_e();
        let t = TorusRealization::new(sample_realization(&law, 8), 4).unwrap();
        assert_eq!(t.cell_params(&[-1, 5, 0]), t.cell_params(&[3, 1, 0]));
        assert_eq!(t.params_at(&[3.5, 1.2]), t.cell_params(&[3, 1, 0]));
    }

    #[test]
    fn law_spec_json_roundtrip() {
        let json = r#"{"E": {"discrete": {"values": [1.0, 2.0], "weights": [0.5, 0.5]}},
                       "nu": {"point": 0.3},
                       "sigma_y": {"uniform": {"low": 0.1, "high": 0.2}},
                       "H": {"point": 0.2}}"#;
        let spec: LawSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.flow, FlowKind::VonMisesIndicator);
        assert_eq!(spec.young, Distribution::bernoulli(1.0, 2.0));
        let again: LawSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
    }
}
