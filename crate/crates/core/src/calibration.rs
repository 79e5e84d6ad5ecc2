//! Least-squares calibration of per-memory-type linear area models.

use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::area::AreaCoefficients;
use crate::error::{Error, Result};

/// One (capacity, area) observation for a memory block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaSample {
    #[serde(rename = "size_kB")]
    pub size_kb: f64,
    pub area_mm2: f64,
}

impl AreaSample {
    pub fn new(size_kb: f64, area_mm2: f64) -> Result<Self> {
        if !(size_kb.is_finite() && size_kb > 0.0) {
            return Err(Error::InvalidSample(format!("size_kB = {size_kb} must be > 0")));
        }
        if !(area_mm2.is_finite() && area_mm2 > 0.0) {
            return Err(Error::InvalidSample(format!("area_mm2 = {area_mm2} must be > 0")));
        }
        Ok(AreaSample { size_kb, area_mm2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub beta: f64,
    pub alpha: f64,
    pub r_squared: f64,
}

impl LinearFit {
    pub fn predict(&self, size_kb: f64) -> f64 {
        self.beta * size_kb + self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryType {
    Reg,
    Shared,
    L1,
    L2,
}

impl MemoryType {
    /// The (beta, alpha) pair this memory type maps to in a coefficient set.
    pub fn canonical_fit(self, c: &AreaCoefficients) -> LinearFit {
        let (beta, alpha) = match self {
            MemoryType::Reg => (c.beta_r, c.alpha_r),
            MemoryType::Shared => (c.beta_m, c.alpha_m),
            MemoryType::L1 => (c.beta_l1, c.alpha_l1),
            MemoryType::L2 => (c.beta_l2, c.alpha_l2),
        };
        LinearFit { beta, alpha, r_squared: 1.0 }
    }
}

impl FromStr for MemoryType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reg" => Ok(MemoryType::Reg),
            "shared" => Ok(MemoryType::Shared),
            "l1" => Ok(MemoryType::L1),
            "l2" => Ok(MemoryType::L2),
            other => Err(Error::InvalidConfig(format!("unknown memory type '{other}'"))),
        }
    }
}

/// Ordinary least squares fit of `area = beta * size + alpha`.
///
/// Sums are accumulated over centered values, which keeps the result
/// independent of sample order up to rounding.
pub fn fit_linear(samples: &[AreaSample]) -> Result<LinearFit> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples(format!("need at least 2 samples, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let mean_x = samples.iter().map(|s| s.size_kb).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.area_mm2).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for s in samples {
        let dx = s.size_kb - mean_x;
        let dy = s.area_mm2 - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateSamples("all sample sizes are equal".into()));
    }
    let beta = sxy / sxx;
    let alpha = mean_y - beta * mean_x;
    let ss_res: f64 = samples
        .iter()
        .map(|s| {
            let r = s.area_mm2 - (beta * s.size_kb + alpha);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(LinearFit { beta, alpha, r_squared })
}

/// Area of a memory block of `size_kb` whose fixed overhead is replicated
/// `multiplicity` times (1 for shared/L1 banks, n_SM for the chip-level L2).
pub fn predict_block_area(fit: &LinearFit, size_kb: f64, multiplicity: u32) -> f64 {
    fit.beta * size_kb + fit.alpha * f64::from(multiplicity.max(1))
}

/// Reads a `size_kB,area_mm2` CSV with a mandatory header row.
pub fn read_samples<R: Read>(reader: R) -> Result<Vec<AreaSample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "size_kB" || &headers[1] != "area_mm2" {
        return Err(Error::InvalidSample(format!(
            "expected header 'size_kB,area_mm2', found '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<AreaSample>() {
        let s = row?;
        out.push(AreaSample::new(s.size_kb, s.area_mm2)?);
    }
    Ok(out)
}

pub fn load_samples(path: &Path) -> Result<Vec<AreaSample>> {
    read_samples(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(beta: f64, alpha: f64, xs: &[f64]) -> Vec<AreaSample> {
        xs.iter().map(|&x| AreaSample::new(x, beta * x + alpha).unwrap()).collect()
    }

    #[test]
    fn exact_shared_memory_line() {
        let fit = fit_linear(&line(0.01565, 0.09281, &[24.0, 48.0, 96.0, 192.0, 384.0])).unwrap();
        assert_relative_eq!(fit.beta, 0.01565, max_relative = 1e-9);
        assert_relative_eq!(fit.alpha, 0.09281, max_relative = 1e-9);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_point_line() {
        let s = [AreaSample::new(1.0, 1.0).unwrap(), AreaSample::new(2.0, 3.0).unwrap()];
        let fit = fit_linear(&s).unwrap();
        assert_relative_eq!(fit.beta, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.alpha, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_linear(&[]), Err(Error::DegenerateSamples(_))));
        let one = [AreaSample::new(4.0, 1.0).unwrap()];
        assert!(matches!(fit_linear(&one), Err(Error::DegenerateSamples(_))));
        let same = [AreaSample::new(4.0, 1.0).unwrap(), AreaSample::new(4.0, 2.0).unwrap()];
        assert!(matches!(fit_linear(&same), Err(Error::DegenerateSamples(_))));
    }

    #[test]
    fn block_checkpoints() {
        let c = AreaCoefficients::MAXWELL;
        assert_relative_eq!(
            predict_block_area(&MemoryType::Shared.canonical_fit(&c), 96.0, 1),
            1.59521,
            epsilon = 1e-9
        );
        assert_relative_eq!(predict_block_area(&MemoryType::L1.canonical_fit(&c), 48.0, 1), 7.78124, epsilon = 1e-9);
        assert_relative_eq!(
            predict_block_area(&MemoryType::L2.canonical_fit(&c), 2048.0, 16),
            98.25056,
            epsilon = 1e-9
        );
    }

    #[test]
    fn csv_requires_header() {
        let ok = "size_kB,area_mm2\n1,1\n2,3\n";
        assert_eq!(read_samples(ok.as_bytes()).unwrap().len(), 2);
        assert!(read_samples("1,1\n2,3\n".as_bytes()).is_err());
        assert!(read_samples("size_kB,area_mm2\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn memory_type_names() {
        for (s, m) in
            [("reg", MemoryType::Reg), ("shared", MemoryType::Shared), ("l1", MemoryType::L1), ("l2", MemoryType::L2)]
        {
            assert_eq!(s.parse::<MemoryType>().unwrap(), m);
        }
        assert!("dram".parse::<MemoryType>().is_err());
    }
}
