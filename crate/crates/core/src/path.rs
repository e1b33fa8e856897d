//! Time grids and piecewise-linear strain paths.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dim, SymTensor};

/// Uniform grid `0 = t_0 < … < t_steps = T`.
pub fn uniform_grid(t_end: f64, steps: usize) -> Result<Vec<f64>> {
    if !(t_end > 0.0 && t_end.is_finite()) || steps == 0 {
        return Err(Error::config("time grid needs T > 0 and at least one step"));
    }
    Ok((0..=steps).map(|m| t_end * m as f64 / steps as f64).collect())
}

/// Checks that a grid starts at 0 and is strictly increasing.
pub fn validate_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 || times[0] != 0.0 {
        return Err(Error::config("time grid must start at 0 and have at least one step"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::config("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Discrete `H¹(0,T; X)` norm from per-step values `‖w_m‖` and `‖w_m − w_{m−1}‖`.
pub fn discrete_h1_norm(times: &[f64], values: &[f64], increments: &[f64]) -> f64 {
    let mut acc = 0.0;
    for m in 1..times.len() {
        let dt = times[m] - times[m - 1];
        acc += dt * (values[m].powi(2) + (increments[m] / dt).powi(2));
    }
    acc.sqrt()
}

/// Strain evolution `ξ(t)`, piecewise linear between knots, with `ξ(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrainPath {
    dim: Dim,
    knots: Vec<f64>,
    values: Vec<SymTensor>,
}

impl StrainPath {
    pub fn new(knots: Vec<f64>, values: Vec<SymTensor>) -> Result<Self> {
        if knots.len() != values.len() || knots.is_empty() {
            return Err(Error::input("strain path needs one value per knot"));
        }
        validate_grid(&knots)?;
        let dim = values[0].dim();
        if values.iter().any(|v| v.dim() != dim || !v.is_finite()) {
            return Err(Error::input("strain path values must be finite and of one dimension"));
        }
        if values[0].max_abs() != 0.0 {
            return Err(Error::input("strain path must start at zero"));
        }
        Ok(StrainPath { dim, knots, values })
    }

    /// `ξ(t) = (t/T)·ξ_T` on `[0, T]`.
    pub fn ramp(target: SymTensor, t_end: f64) -> Result<Self> {
        Self::new(vec![0.0, t_end], vec![SymTensor::zero(target.dim()), target])
    }

    /// `ξ(t) = f(t)·direction` sampled on `knots` (with `f(0)` forced to 0).
    pub fn from_fn(knots: &[f64], direction: SymTensor, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = knots
            .iter()
            .map(|&t| if t == 0.0 { SymTensor::zero(direction.dim()) } else { direction.scale(f(t)) })
            .collect();
        Self::new(knots.to_vec(), values)
    }

    /// The zero path on `[0, T]`.
    pub fn zero(dim: Dim, t_end: f64) -> Result<Self> {
        Self::new(vec![0.0, t_end], vec![SymTensor::zero(dim); 2])
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[SymTensor] {
        &self.values
    }

    /// Linear interpolation, constant beyond the last knot.
    pub fn at(&self, t: f64) -> SymTensor {
        let k = &self.knots;
        if t <= k[0] {
            return self.values[0];
        }
        if t >= k[k.len() - 1] {
            return self.values[k.len() - 1];
        }
        let i = k.partition_point(|&s| s <= t) - 1;
        let w = (t - k[i]) / (k[i + 1] - k[i]);
        self.values[i].scale(1.0 - w) + self.values[i + 1].scale(w)
    }

    pub fn sample(&self, times: &[f64]) -> Vec<SymTensor> {
        times.iter().map(|&t| self.at(t)).collect()
    }

    /// Discrete `H¹(0,T)` norm on `times`.
    pub fn h1_norm(&self, times: &[f64]) -> f64 {
        let v = self.sample(times);
        let norms: Vec<f64> = v.iter().map(|x| x.norm()).collect();
        let incs: Vec<f64> = (0..v.len())
            .map(|m| if m == 0 { 0.0 } else { (v[m] - v[m - 1]).norm() })
            .collect();
        discrete_h1_norm(times, &norms, &incs)
    }

    pub fn plus(&self, other: &StrainPath) -> Result<StrainPath> {
        let mut knots: Vec<f64> = self.knots.iter().chain(&other.knots).copied().collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let values = knots.iter().map(|&t| self.at(t) + other.at(t)).collect();
        Self::new(knots, values)
    }

    pub fn scale(&self, s: f64) -> StrainPath {
        StrainPath {
            dim: self.dim,
            knots: self.knots.clone(),
            values: self.values.iter().map(|v| v.scale(s)).collect(),
        }
    }

    /// Reads a CSV with rows `t, ξ components (Mandel order)`; a header row is optional.
    pub fn read_csv(path: &Path, dim: Dim) -> Result<Self> {
        let io = |e: csv::Error| Error::input(format!("{}: {e}", path.display()));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(io)?;
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(io)?;
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let nums = match nums {
                Ok(n) => n,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::input(format!("{}: row {}: {e}", path.display(), line + 1))),
            };
            if nums.len() != 1 + dim.k() {
                return Err(Error::input(format!(
                    "{}: row {} needs t plus {} components",
                    path.display(),
                    line + 1,
                    dim.k()
                )));
            }
            knots.push(nums[0]);
            values.push(SymTensor::from_mandel(dim, &nums[1..])?);
        }
        Self::new(knots, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::input(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim.k()).map(|c| format!("xi{c}")));
        w.write_record(&header).map_err(io)?;
        for (t, v) in self.knots.iter().zip(&self.values) {
            let mut row = vec![format!("{t}")];
            row.extend(v.mandel().iter().map(|c| format!("{c}")));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi() -> SymTensor {
        SymTensor::from_mandel(Dim::Two, &[1.0, -0.5, 0.2]).unwrap()
    }

    #[test]
    fn interpolation_and_validation() {
        let p = StrainPath::new(vec![0.0, 1.0, 3.0], vec![SymTensor::zero(Dim::Two), xi(), xi().scale(-1.0)]).unwrap();
        assert_eq!(p.at(0.5), xi().scale(0.5));
        assert!((p.at(2.0) - SymTensor::zero(Dim::Two)).max_abs() < 1e-15);
        assert_eq!(p.at(10.0), xi().scale(-1.0));
        assert!(StrainPath::new(vec![0.0, 1.0], vec![xi(), xi()]).is_err());
        assert!(StrainPath::new(vec![0.0, 0.0], vec![SymTensor::zero(Dim::Two), xi()]).is_err());
    }

    #[test]
    fn h1_norm_of_ramp() {
        // ξ = t·x on [0,1]: ∫|ξ|² + |ξ'|² = |x|²(1/3 + 1); the discrete sum is a right Riemann sum
        let p = StrainPath::ramp(xi(), 1.0).unwrap();
        let grid = uniform_grid(1.0, 2000).unwrap();
        let exact = (xi().norm().powi(2) * (1.0 / 3.0 + 1.0)).sqrt();
        assert!((p.h1_norm(&grid) - exact).abs() < 1e-3 * exact);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("xi.csv");
        let p = StrainPath::new(vec![0.0, 0.5, 1.0], vec![SymTensor::zero(Dim::Two), xi(), xi().scale(2.0)]).unwrap();
        p.write_csv(&file).unwrap();
        assert_eq!(StrainPath::read_csv(&file, Dim::Two).unwrap(), p);
        std::fs::write(&file, "0,0,0,0\n1,2,x,3\n").unwrap();
        assert!(matches!(StrainPath::read_csv(&file, Dim::Two), Err(Error::Input(_))));
    }
}
