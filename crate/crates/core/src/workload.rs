//! Stencil benchmark suite, problem sizes and frequency weights.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial extents used for the default size set. 12228 is kept as published.
pub const DEFAULT_SPATIAL: [u64; 4] = [4096, 8192, 12228, 16384];
pub const DEFAULT_TIME: [u64; 5] = [1024, 2048, 4096, 8192, 16384];

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilKernel {
    pub name: String,
    pub dims: u8,
    /// Stencil radius in grid points.
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "default_n_arrays")]
    pub n_arrays: u32,
    pub flops_per_point: u32,
    #[serde(default = "default_bytes_per_elem")]
    pub bytes_per_elem: u32,
    /// Seconds for one stencil update on one thread.
    pub c_iter: f64,
}

fn default_order() -> u32 {
    1
}

fn default_n_arrays() -> u32 {
    2
}

fn default_bytes_per_elem() -> u32 {
    4
}

impl StencilKernel {
    pub fn new(name: &str, dims: u8, flops_per_point: u32, c_iter: f64) -> Self {
        StencilKernel {
            name: name.to_string(),
            dims,
            order: 1,
            n_arrays: default_n_arrays(),
            flops_per_point,
            bytes_per_elem: default_bytes_per_elem(),
            c_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidWorkload(format!("kernel '{}': {msg}", self.name)));
        if self.dims != 2 && self.dims != 3 {
            return bad(format!("dims = {} must be 2 or 3", self.dims));
        }
        if self.order < 1 {
            return bad("order must be >= 1".into());
        }
        if self.n_arrays < 1 {
            return bad("n_arrays must be >= 1".into());
        }
        if self.flops_per_point < 1 {
            return bad("flops_per_point must be >= 1".into());
        }
        if self.bytes_per_elem < 1 {
            return bad("bytes_per_elem must be >= 1".into());
        }
        if !(self.c_iter.is_finite() && self.c_iter > 0.0) {
            return bad(format!("c_iter = {} must be > 0", self.c_iter));
        }
        Ok(())
    }

    pub fn is_3d(&self) -> bool {
        self.dims == 3
    }
}

/// The six benchmark stencils with standard flop counts, all first order.
pub fn standard_kernels(c_iter: f64) -> Vec<StencilKernel> {
    vec![
        StencilKernel::new("Jacobi-2D", 2, 5, c_iter),
        StencilKernel::new("Heat-2D", 2, 10, c_iter),
        StencilKernel::new("Laplacian-2D", 2, 6, c_iter),
        StencilKernel::new("Gradient-2D", 2, 6, c_iter),
        StencilKernel::new("Heat-3D", 3, 14, c_iter),
        StencilKernel::new("Laplacian-3D", 3, 8, c_iter),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSize {
    #[serde(rename = "S1")]
    pub s1: u64,
    #[serde(rename = "S2")]
    pub s2: u64,
    #[serde(rename = "S3", default, skip_serializing_if = "Option::is_none")]
    pub s3: Option<u64>,
    #[serde(rename = "T")]
    pub t: u64,
}

impl ProblemSize {
    pub fn square_2d(s: u64, t: u64) -> Self {
        ProblemSize { s1: s, s2: s, s3: None, t }
    }

    pub fn cube_3d(s: u64, t: u64) -> Self {
        ProblemSize { s1: s, s2: s, s3: Some(s), t }
    }

    pub fn validate_for(&self, kern: &StencilKernel) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidWorkload(format!("size {self:?} for '{}': {msg}", kern.name)));
        if self.s1 == 0 || self.s2 == 0 || self.t == 0 || self.s3 == Some(0) {
            return bad("all extents must be > 0");
        }
        if self.t > self.s1 {
            return bad("T must not exceed S1");
        }
        match (kern.is_3d(), self.s3) {
            (true, None) => bad("3D kernel needs S3"),
            (false, Some(_)) => bad("2D kernel must not set S3"),
            _ => Ok(()),
        }
    }
}

/// `{(S, T) | S in spatial, T in time, T <= S}`, sorted by S then T.
pub fn size_set(dims: u8, spatial: &[u64], time: &[u64]) -> Vec<ProblemSize> {
    let mut spatial = spatial.to_vec();
    let mut time = time.to_vec();
    spatial.sort_unstable();
    spatial.dedup();
    time.sort_unstable();
    time.dedup();
    let mut out = Vec::new();
    for &s in &spatial {
        for &t in time.iter().filter(|&&t| t <= s) {
            out.push(if dims == 3 { ProblemSize::cube_3d(s, t) } else { ProblemSize::square_2d(s, t) });
        }
    }
    out
}

pub fn default_size_set(dims: u8) -> Vec<ProblemSize> {
    size_set(dims, &DEFAULT_SPATIAL, &DEFAULT_TIME)
}

/// Total floating-point operations for one kernel instance.
pub fn instance_flops(kern: &StencilKernel, size: &ProblemSize) -> Result<f64> {
    size.validate_for(kern)?;
    let points = size.s1 as f64 * size.s2 as f64 * size.s3.unwrap_or(1) as f64;
    Ok(f64::from(kern.flops_per_point) * points * size.t as f64)
}

/// Kernels, their problem sizes and the frequency weights of each.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub kernels: Vec<StencilKernel>,
    /// `sizes[i]` are the problem sizes of `kernels[i]`.
    pub sizes: Vec<Vec<ProblemSize>>,
    pub fr_kernel: Vec<f64>,
    /// `fr_size[i][j]` weights `sizes[i][j]` within kernel `i`.
    pub fr_size: Vec<Vec<f64>>,
}

/// One weighted (kernel, size) pair of a workload.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub kernel_index: usize,
    pub size_index: usize,
    pub kernel: &'a StencilKernel,
    pub size: &'a ProblemSize,
    pub weight: f64,
}

impl WorkloadSpec {
    /// Uniform weights over kernels and over each kernel's sizes.
    pub fn uniform(kernels: Vec<StencilKernel>, sizes: Vec<Vec<ProblemSize>>) -> Result<Self> {
        let nk = kernels.len();
        let fr_size = sizes.iter().map(|s| vec![1.0 / s.len() as f64; s.len()]).collect();
        let w = WorkloadSpec { kernels, sizes, fr_kernel: vec![1.0 / nk as f64; nk], fr_size };
        w.validate()?;
        Ok(w)
    }

    /// Standard six kernels over their default size sets, uniform weights.
    pub fn standard(c_iter: f64) -> Result<Self> {
        let kernels = standard_kernels(c_iter);
        let sizes = kernels.iter().map(|k| default_size_set(k.dims)).collect();
        Self::uniform(kernels, sizes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::InvalidWorkload("no kernels".into()));
        }
        if self.sizes.len() != self.kernels.len()
            || self.fr_kernel.len() != self.kernels.len()
            || self.fr_size.len() != self.kernels.len()
        {
            return Err(Error::InvalidWorkload("per-kernel lists have mismatched lengths".into()));
        }
        let mut names = std::collections::HashSet::new();
        for (i, k) in self.kernels.iter().enumerate() {
            k.validate()?;
            if !names.insert(k.name.as_str()) {
                return Err(Error::InvalidWorkload(format!("duplicate kernel name '{}'", k.name)));
            }
            if self.sizes[i].is_empty() {
                return Err(Error::InvalidWorkload(format!("kernel '{}' has no sizes", k.name)));
            }
            if self.fr_size[i].len() != self.sizes[i].len() {
                return Err(Error::InvalidWorkload(format!("kernel '{}': size weights do not match sizes", k.name)));
            }
            for s in &self.sizes[i] {
                s.validate_for(k)?;
            }
            check_distribution(&self.fr_size[i], &format!("size frequencies of '{}'", k.name))?;
        }
        check_distribution(&self.fr_kernel, "kernel frequencies")
    }

    pub fn kernel_index(&self, name: &str) -> Option<usize> {
        self.kernels.iter().position(|k| k.name == name)
    }

    /// Every (kernel, size) pair in declaration order, including zero weights.
    pub fn instances(&self) -> impl Iterator<Item = Instance<'_>> {
        self.kernels.iter().enumerate().flat_map(move |(i, k)| {
            self.sizes[i].iter().enumerate().map(move |(j, s)| Instance {
                kernel_index: i,
                size_index: j,
                kernel: k,
                size: s,
                weight: self.fr_kernel[i] * self.fr_size[i][j],
            })
        })
    }

    /// Same kernels and sizes with all kernel weight on `kernel_index`.
    pub fn with_single_kernel(&self, kernel_index: usize) -> Self {
        let mut w = self.clone();
        for (i, f) in w.fr_kernel.iter_mut().enumerate() {
            *f = if i == kernel_index { 1.0 } else { 0.0 };
        }
        w
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: WorkloadFile = serde_json::from_str(s)?;
        file.into_spec()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

fn check_distribution(weights: &[f64], what: &str) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidWorkload(format!("{what} must be finite and >= 0")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidWorkload(format!("{what} sum to {sum}, expected 1")));
    }
    Ok(())
}

/// On-disk workload description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub kernels: Vec<StencilKernel>,
    #[serde(default)]
    pub sizes: SizesSpec,
    #[serde(default)]
    pub frequencies: FrequencySpec,
    /// Overrides the spatial/time sets used wherever sizes are `"default"`.
    #[serde(default)]
    pub size_set: Option<SizeSetSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeSetSpec {
    pub spatial: Vec<u64>,
    pub time: Vec<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizesSpec {
    #[default]
    #[serde(with = "default_tag")]
    Default,
    List(Vec<ProblemSize>),
    PerKernel(BTreeMap<String, SizesEntry>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizesEntry {
    #[serde(with = "default_tag")]
    Default,
    List(Vec<ProblemSize>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrequencySpec {
    #[default]
    #[serde(with = "uniform_tag")]
    Uniform,
    Explicit {
        #[serde(default)]
        kernel: Weights<BTreeMap<String, f64>>,
        #[serde(default)]
        size: Weights<BTreeMap<String, Weights<Vec<f64>>>>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weights<T> {
    #[default]
    #[serde(with = "uniform_tag")]
    Uniform,
    Explicit(T),
}

macro_rules! unit_tag {
    ($module:ident, $tag:literal) => {
        mod $module {
            use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str($tag)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
                let v = String::deserialize(d)?;
                if v == $tag {
                    Ok(())
                } else {
                    Err(D::Error::custom(format!("expected \"{}\", found \"{}\"", $tag, v)))
                }
            }
        }
    };
}

unit_tag!(default_tag, "default");
unit_tag!(uniform_tag, "uniform");

impl WorkloadFile {
    pub fn into_spec(self) -> Result<WorkloadSpec> {
        let (spatial, time) = match &self.size_set {
            Some(s) => (s.spatial.clone(), s.time.clone()),
            None => (DEFAULT_SPATIAL.to_vec(), DEFAULT_TIME.to_vec()),
        };
        let defaults = |k: &StencilKernel| size_set(k.dims, &spatial, &time);
        let sizes: Vec<Vec<ProblemSize>> = match &self.sizes {
            SizesSpec::Default => self.kernels.iter().map(defaults).collect(),
            SizesSpec::List(list) => self.kernels.iter().map(|_| list.clone()).collect(),
            SizesSpec::PerKernel(map) => {
                check_names(map.keys(), &self.kernels, "sizes")?;
                self.kernels
                    .iter()
                    .map(|k| match map.get(&k.name) {
                        None | Some(SizesEntry::Default) => defaults(k),
                        Some(SizesEntry::List(list)) => list.clone(),
                    })
                    .collect()
            }
        };
        let nk = self.kernels.len();
        let uniform_sizes = |i: usize| vec![1.0 / sizes[i].len() as f64; sizes[i].len()];
        let (fr_kernel, fr_size) = match &self.frequencies {
            FrequencySpec::Uniform => (vec![1.0 / nk as f64; nk], (0..nk).map(uniform_sizes).collect()),
            FrequencySpec::Explicit { kernel, size } => {
                let fr_kernel = match kernel {
                    Weights::Uniform => vec![1.0 / nk as f64; nk],
                    Weights::Explicit(map) => {
                        check_names(map.keys(), &self.kernels, "kernel frequencies")?;
                        self.kernels.iter().map(|k| map.get(&k.name).copied().unwrap_or(0.0)).collect()
                    }
                };
                let fr_size = match size {
                    Weights::Uniform => (0..nk).map(uniform_sizes).collect(),
                    Weights::Explicit(map) => {
                        check_names(map.keys(), &self.kernels, "size frequencies")?;
                        (0..nk)
                            .map(|i| match map.get(&self.kernels[i].name) {
                                None | Some(Weights::Uniform) => uniform_sizes(i),
                                Some(Weights::Explicit(w)) => w.clone(),
                            })
                            .collect()
                    }
                };
                (fr_kernel, fr_size)
            }
        };
        let spec = WorkloadSpec { kernels: self.kernels, sizes, fr_kernel, fr_size };
        spec.validate()?;
        Ok(spec)
    }
}

fn check_names<'a>(keys: impl Iterator<Item = &'a String>, kernels: &[StencilKernel], what: &str) -> Result<()> {
    for key in keys {
        if !kernels.iter().any(|k| &k.name == key) {
            return Err(Error::InvalidWorkload(format!("{what}: unknown kernel '{key}'")));
        }
    }
    Ok(())
}
