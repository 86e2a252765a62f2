//! Toy 2D datasets and seeded sampling.
//!
//! The two built-in layouts place one source domain at the origin and six target
//! domains on a hexagon of radius 3/2; each domain holds 256 points.

pub mod rng;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::{Error, Result};
use rng::Stream;

pub const SEVEN_GAUSSIANS: &str = "seven-gaussians";
pub const GAUSSIAN_PLUS_SIX_UNIFORMS: &str = "gaussian-plus-six-uniforms";
pub const BUILTIN_NAMES: [&str; 2] = [SEVEN_GAUSSIANS, GAUSSIAN_PLUS_SIX_UNIFORMS];

/// Seed used by the built-in configurations.
pub const DEFAULT_DATA_SEED: u64 = 20_190_515;

const TOY_SAMPLES: usize = 256;
const TOY_STD: f64 = 0.2;
const TOY_SIDE: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Gaussian,
    UniformSquare,
}

/// One toy domain: an isotropic Gaussian (scale = std-dev) or an axis-aligned
/// square (scale = side length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub center: [f64; 2],
    pub scale: f64,
    pub sample_count: usize,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "domain scale must be positive, got {}",
                self.scale
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::Config("domain sample_count must be positive".into()));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("domain center must be finite".into()));
        }
        Ok(())
    }

    /// Draws `sample_count` points from this domain.
    pub fn sample(&self, stream: &Stream) -> Result<EmpiricalDistribution> {
        self.sample_n(self.sample_count, stream)
    }

    /// Draws `n` points from the underlying population.
    pub fn sample_n(&self, n: usize, stream: &Stream) -> Result<EmpiricalDistribution> {
        self.validate()?;
        let mut s = stream.clone();
        let [cx, cy] = self.center;
        let points = (0..n)
            .map(|_| match self.kind {
                DomainKind::Gaussian => {
                    let (z0, z1) = s.normal_pair();
                    vec![cx + self.scale * z0, cy + self.scale * z1]
                }
                DomainKind::UniformSquare => {
                    let h = self.scale / 2.0;
                    let x = s.uniform_in(cx - h, cx + h);
                    let y = s.uniform_in(cy - h, cy + h);
                    vec![x, y]
                }
            })
            .collect();
        EmpiricalDistribution::uniform(points)
    }
}

/// Weighted point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let d = EmpiricalDistribution { points, weights };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Contract("distribution has no points".into()));
        }
        EmpiricalDistribution::new(points, vec![1.0 / n as f64; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Contract("distribution has no points".into()));
        }
        if self.points.len() != self.weights.len() {
            return Err(Error::Contract(format!(
                "{} points but {} weights",
                self.points.len(),
                self.weights.len()
            )));
        }
        let d = self.points[0].len();
        if self.points.iter().any(|p| p.len() != d) {
            return Err(Error::Contract("points have mixed dimensions".into()));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite point coordinate".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Contract("weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_rows(&self.points).expect("validated distribution has equal-length rows")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let points = (0..t.rows()).map(|i| t.row(i).to_vec()).collect();
        EmpiricalDistribution::uniform(points)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (mi, x) in m.iter_mut().zip(p) {
                *mi += w * x;
            }
        }
        m
    }
}

/// Source plus target domains with the seed that generates them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub source: DomainSpec,
    pub targets: Vec<DomainSpec>,
    pub seed: u64,
}

/// The six hexagonal target centers at radius 3/2.
pub fn hexagon_centers() -> [[f64; 2]; 6] {
    let h = 3.0 * 3f64.sqrt() / 4.0;
    [
        [1.5, 0.0],
        [-1.5, 0.0],
        [0.75, h],
        [-0.75, h],
        [0.75, -h],
        [-0.75, -h],
    ]
}

pub fn builtin_config(name: &str) -> Result<ToyConfig> {
    let source = DomainSpec {
        kind: DomainKind::Gaussian,
        center: [0.0, 0.0],
        scale: TOY_STD,
        sample_count: TOY_SAMPLES,
    };
    let (kind, scale) = match name {
        SEVEN_GAUSSIANS => (DomainKind::Gaussian, TOY_STD),
        GAUSSIAN_PLUS_SIX_UNIFORMS => (DomainKind::UniformSquare, TOY_SIDE),
        other => {
            return Err(Error::Config(format!(
                "unknown dataset {other:?}; valid names: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    let targets = hexagon_centers()
        .into_iter()
        .map(|center| DomainSpec {
            kind,
            center,
            scale,
            sample_count: TOY_SAMPLES,
        })
        .collect();
    Ok(ToyConfig {
        source,
        targets,
        seed: DEFAULT_DATA_SEED,
    })
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("at least one target domain is required".into()));
        }
        self.source.validate()?;
        self.targets.iter().try_for_each(DomainSpec::validate)
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    /// Domain 0 is the source, 1..=N the targets.
    pub fn domain(&self, index: usize) -> &DomainSpec {
        if index == 0 {
            &self.source
        } else {
            &self.targets[index - 1]
        }
    }

    /// Stream for domain `index` in draw number `draw` (draw 0 is the dataset itself).
    pub fn domain_stream(&self, index: usize, draw: u64) -> Stream {
        Stream::new(self.seed)
            .split("domain")
            .split_index(index as u64)
            .split_index(draw)
    }

    /// The training datasets: source first, then each target.
    pub fn generate(&self) -> Result<Vec<EmpiricalDistribution>> {
        self.validate()?;
        (0..=self.num_targets())
            .map(|i| self.domain(i).sample(&self.domain_stream(i, 0)))
            .collect()
    }
}

/// Samples `size` rows with replacement, uniformly over points.
pub fn minibatch(dist: &EmpiricalDistribution, size: usize, stream: &mut Stream) -> Result<Tensor> {
    if dist.is_empty() {
        return Err(Error::Contract("minibatch from an empty distribution".into()));
    }
    if size == 0 {
        return Err(Error::Contract("minibatch size must be at least 1".into()));
    }
    let d = dist.dim();
    let mut data = Vec::with_capacity(size * d);
    for _ in 0..size {
        data.extend_from_slice(&dist.points[stream.below(dist.len())]);
    }
    Tensor::matrix(size, d, data)
}

/// Writes datasets as CSV with header `x0,..,x{d-1},domain`.
pub fn write_csv(path: &Path, datasets: &[EmpiricalDistribution]) -> Result<()> {
    let d = datasets.first().map_or(2, EmpiricalDistribution::dim);
    let mut out = String::new();
    for k in 0..d {
        let _ = write!(out, "x{k},");
    }
    out.push_str("domain\n");
    for (domain, dist) in datasets.iter().enumerate() {
        for p in &dist.points {
            for v in p {
                let _ = write!(out, "{v:.16e},");
            }
            let _ = writeln!(out, "{domain}");
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads datasets written by [`write_csv`]; weights are uniform.
pub fn read_csv(path: &Path) -> Result<Vec<EmpiricalDistribution>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format {
        offset: 0,
        message: "empty dataset file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.last() != Some(&"domain") || cols.len() < 2 {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad header {header:?}"),
        });
    }
    let d = cols.len() - 1;
    let mut groups: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut offset = header.len() as u64 + 1;
    for line in lines {
        if line.trim().is_empty() {
            offset += line.len() as u64 + 1;
            continue;
        }
        let bad = |message: String| Error::Format { offset, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(bad(format!("expected {} fields, got {}", d + 1, fields.len())));
        }
        let point = fields[..d]
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("bad coordinate: {e}")))?;
        let domain: usize = fields[d]
            .trim()
            .parse()
            .map_err(|e| bad(format!("bad domain index: {e}")))?;
        if groups.len() <= domain {
            groups.resize_with(domain + 1, Vec::new);
        }
        groups[domain].push(point);
        offset += line.len() as u64 + 1;
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, pts)| {
            if pts.is_empty() {
                Err(Error::Format {
                    offset,
                    message: format!("domain {i} has no rows"),
                })
            } else {
                EmpiricalDistribution::uniform(pts)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_gaussians_layout() {
        let cfg = builtin_config(SEVEN_GAUSSIANS).unwrap();
        assert_eq!(cfg.targets.len(), 6);
        assert_eq!(cfg.targets[0].center, [1.5, 0.0]);
        assert_eq!(cfg.targets[0].scale, 0.2);
        assert_eq!(cfg.targets[0].sample_count, 256);
        assert_eq!(cfg.source.center, [0.0, 0.0]);
        let [a, b] = [cfg.targets[0].center, cfg.targets[1].center];
        let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert_eq!(dist, 3.0);
    }

    #[test]
    fn uniforms_layout() {
        let cfg = builtin_config(GAUSSIAN_PLUS_SIX_UNIFORMS).unwrap();
        assert!(cfg
            .targets
            .iter()
            .all(|t| t.kind == DomainKind::UniformSquare && t.scale == 0.4));
        assert_eq!(cfg.source.kind, DomainKind::Gaussian);
    }

    #[test]
    fn unknown_name_lists_valid_names() {
        let err = builtin_config("eight-gaussians").unwrap_err().to_string();
        assert!(err.contains(SEVEN_GAUSSIANS) && err.contains(GAUSSIAN_PLUS_SIX_UNIFORMS));
    }

    #[test]
    fn zero_scale_rejected() {
        let spec = DomainSpec {
            kind: DomainKind::Gaussian,
            center: [0.0, 0.0],
            scale: 0.0,
            sample_count: 4,
        };
        assert!(spec.sample(&Stream::new(1)).is_err());
    }

    #[test]
    fn uniform_square_stays_inside() {
        let spec = DomainSpec {
            kind: DomainKind::UniformSquare,
            center: [1.5, 0.0],
            scale: 0.4,
            sample_count: 20_000,
        };
        let d = spec.sample(&Stream::new(3)).unwrap();
        for p in &d.points {
            assert!((1.3..=1.7).contains(&p[0]) && (-0.2..=0.2).contains(&p[1]), "{p:?}");
        }
    }

    #[test]
    fn gaussian_moments_within_three_standard_errors() {
        let spec = DomainSpec {
            kind: DomainKind::Gaussian,
            center: [0.75, -1.0],
            scale: 0.2,
            sample_count: 20_000,
        };
        let d = spec.sample(&Stream::new(4)).unwrap();
        let n = d.len() as f64;
        let m = d.mean();
        let se_mean = 0.2 / n.sqrt();
        assert!((m[0] - 0.75).abs() < 3.0 * se_mean);
        assert!((m[1] + 1.0).abs() < 3.0 * se_mean);
        let mut cov = [[0.0; 2]; 2];
        for p in &d.points {
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += (p[a] - m[a]) * (p[b] - m[b]) / n;
                }
            }
        }
        // Var of a sample variance is 2σ⁴/n; of a sample covariance σ⁴/n.
        let se_var = (2.0f64).sqrt() * 0.04 / n.sqrt();
        let se_cov = 0.04 / n.sqrt();
        assert!((cov[0][0] - 0.04).abs() < 3.0 * se_var);
        assert!((cov[1][1] - 0.04).abs() < 3.0 * se_var);
        assert!(cov[0][1].abs() < 3.0 * se_cov);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = builtin_config(SEVEN_GAUSSIANS).unwrap();
        let a = cfg.generate().unwrap();
        let b = cfg.generate().unwrap();
        assert_eq!(a, b);
        assert_ne!(a[1].points, a[2].points);
    }

    #[test]
    fn minibatch_semantics() {
        let cfg = builtin_config(SEVEN_GAUSSIANS).unwrap();
        let data = cfg.generate().unwrap();
        let mut s = Stream::new(8);
        let one = minibatch(&data[0], 1, &mut s).unwrap();
        assert!(data[0].points.iter().any(|p| p.as_slice() == one.row(0)));

        let tiny = EmpiricalDistribution::uniform(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let b = minibatch(&tiny, 64, &mut s).unwrap();
        let ones = (0..64).filter(|&i| b.row(i)[0] == 1.0).count();
        assert!(ones > 0 && ones < 64);

        let big = minibatch(&data[0], 100_000, &mut s).unwrap();
        let mean_x = (0..big.rows()).map(|i| big.row(i)[0]).sum::<f64>() / 1e5;
        let mean_y = (0..big.rows()).map(|i| big.row(i)[1]).sum::<f64>() / 1e5;
        // The resampled mean tracks the 256-point dataset mean, itself ~N(0, 0.2/16).
        let dm = data[0].mean();
        assert!((mean_x - dm[0]).abs() < 0.01 && (mean_y - dm[1]).abs() < 0.01);
        assert!(dm[0].abs() < 0.05 && dm[1].abs() < 0.05);
        assert!(minibatch(&data[0], 0, &mut s).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let cfg = builtin_config(GAUSSIAN_PLUS_SIX_UNIFORMS).unwrap();
        let data = cfg.generate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&path, &data).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back, data);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x0,x1,domain\n"));
    }
}
