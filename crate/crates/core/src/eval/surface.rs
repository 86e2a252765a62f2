use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::parallel::parallel_map;
use crate::autodiff::Tensor;
use crate::nets::MlpParams;
use crate::{Error, Result};

/// Rectangular lattice; node `(i, j)` sits at `x_i`, `y_j` with both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    /// `[−2.5, 2.5]²` at 201 × 201.
    fn default() -> Self {
        GridSpec::square(-2.5, 2.5, 201)
    }
}

impl GridSpec {
    pub fn square(lo: f64, hi: f64, n: usize) -> Self {
        GridSpec {
            x_min: lo,
            x_max: hi,
            y_min: lo,
            y_max: hi,
            nx: n,
            ny: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Config(format!(
                "grid resolution must be at least 2 per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        let ok = |a: f64, b: f64| a.is_finite() && b.is_finite() && a < b;
        if !ok(self.x_min, self.x_max) || !ok(self.y_min, self.y_max) {
            return Err(Error::Config("grid ranges must be finite with min < max".into()));
        }
        Ok(())
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (self.x_max - self.x_min) * i as f64 / (self.nx - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + (self.y_max - self.y_min) * j as f64 / (self.ny - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses `lo:hi:n` into a square grid.
impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("grid must look like lo:hi:n, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        let g = GridSpec::square(lo, hi, n);
        g.validate()?;
        Ok(g)
    }
}

/// Critic values at every node, rows of constant `y` stored bottom to top.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl SurfaceGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Evaluates a scalar-output network at every grid node, one grid row per batch.
pub fn value_surface(critic: &MlpParams, spec: &GridSpec, threads: usize) -> Result<SurfaceGrid> {
    spec.validate()?;
    if critic.output_dim() != 1 || critic.input_dim() != 2 {
        return Err(Error::Contract("value surface needs a 2-D scalar critic".into()));
    }
    let rows: Vec<usize> = (0..spec.ny).collect();
    let chunks = parallel_map(&rows, threads, |&j| {
        let y = spec.y(j);
        let data = (0..spec.nx).flat_map(|i| [spec.x(i), y]).collect();
        critic.eval(&Tensor::matrix(spec.nx, 2, data)?)
    });
    let mut values = Vec::with_capacity(spec.len());
    for c in chunks {
        values.extend_from_slice(c?.data());
    }
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("critic value at grid node {bad}")));
    }
    Ok(SurfaceGrid { spec: *spec, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceFormat {
    Csv,
    Svg,
}

impl FromStr for SurfaceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(SurfaceFormat::Csv),
            "svg" => Ok(SurfaceFormat::Svg),
            other => Err(Error::Config(format!("format must be csv or svg, got {other:?}"))),
        }
    }
}

pub fn surface_to_csv(grid: &SurfaceGrid) -> String {
    let mut out = String::from("x,y,f\n");
    for j in 0..grid.spec.ny {
        for i in 0..grid.spec.nx {
            let _ = writeln!(out, "{},{},{}", grid.spec.x(i), grid.spec.y(j), grid.at(i, j));
        }
    }
    out
}

/// Inverse of [`surface_to_csv`].
pub fn parse_surface_csv(text: &str) -> Result<SurfaceGrid> {
    let mut lines = text.lines();
    if lines.next() != Some("x,y,f") {
        return Err(Error::Format {
            offset: 0,
            message: "expected header x,y,f".into(),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut values = Vec::new();
    let mut offset = 6u64;
    for line in lines {
        let fields: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format {
                offset,
                message: format!("bad row {line:?}"),
            })?;
        if fields.len() != 3 {
            return Err(Error::Format {
                offset,
                message: format!("expected 3 fields in {line:?}"),
            });
        }
        xs.push(fields[0]);
        ys.push(fields[1]);
        values.push(fields[2]);
        offset += line.len() as u64 + 1;
    }
    let nx = ys.iter().take_while(|&&y| y == ys[0]).count();
    if nx < 2 || values.len() % nx != 0 {
        return Err(Error::Format {
            offset: 0,
            message: "rows do not form a rectangular grid".into(),
        });
    }
    let ny = values.len() / nx;
    let spec = GridSpec {
        x_min: xs[0],
        x_max: xs[nx - 1],
        y_min: ys[0],
        y_max: ys[values.len() - 1],
        nx,
        ny,
    };
    spec.validate()?;
    Ok(SurfaceGrid { spec, values })
}

fn color(t: f64) -> String {
    let r = (255.0 * t).round() as u8;
    format!("#{:02x}00{:02x}", r, 255 - r)
}

/// Heatmap with a linear blue (minimum) to red (maximum) ramp and an optional
/// scatter overlay of 2-D points.
pub fn surface_to_svg(grid: &SurfaceGrid, scatter: Option<&[Vec<f64>]>) -> String {
    let GridSpec { nx, ny, .. } = grid.spec;
    let (lo, hi) = grid.range();
    let span = hi - lo;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {nx} {ny}" shape-rendering="crispEdges">"#,
        nx * 3,
        ny * 3
    );
    for j in 0..ny {
        let row = ny - 1 - j;
        let mut i = 0;
        while i < nx {
            let c = color(if span > 0.0 { (grid.at(i, j) - lo) / span } else { 0.0 });
            let mut end = i + 1;
            while end < nx && color(if span > 0.0 { (grid.at(end, j) - lo) / span } else { 0.0 }) == c {
                end += 1;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{i}" y="{row}" width="{}" height="1" fill="{c}"/>"#,
                end - i
            );
            i = end;
        }
    }
    if let Some(points) = scatter {
        let s = &grid.spec;
        for p in points {
            let cx = (p[0] - s.x_min) / (s.x_max - s.x_min) * (nx - 1) as f64 + 0.5;
            let cy = (s.y_max - p[1]) / (s.y_max - s.y_min) * (ny - 1) as f64 + 0.5;
            let _ = writeln!(
                out,
                r##"<circle cx="{cx:.3}" cy="{cy:.3}" r="0.8" fill="#ffffff" stroke="#000000" stroke-width="0.2"/>"##
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn export_surface(
    grid: &SurfaceGrid,
    format: SurfaceFormat,
    path: &Path,
    scatter: Option<&[Vec<f64>]>,
) -> Result<()> {
    let text = match format {
        SurfaceFormat::Csv => surface_to_csv(grid),
        SurfaceFormat::Svg => surface_to_svg(grid, scatter),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Layer, Role};

    fn linear(u: [f64; 2], b: f64) -> MlpParams {
        MlpParams::from_layers(
            Role::Critic,
            vec![Layer {
                weight: Tensor::matrix(2, 1, u.to_vec()).unwrap(),
                bias: Tensor::vector(vec![b]),
            }],
        )
        .unwrap()
    }

    #[test]
    fn default_grid_size() {
        let g = value_surface(&linear([0.0, 0.0], 1.0), &GridSpec::default(), 1).unwrap();
        assert_eq!(g.values.len(), 40_401);
        assert!(g.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn linear_critic_reads_x() {
        let spec = GridSpec::square(-1.0, 1.0, 5);
        let g = value_surface(&linear([1.0, 0.0], 0.0), &spec, 1).unwrap();
        for j in 0..5 {
            for i in 0..5 {
                assert_eq!(g.at(i, j), spec.x(i));
            }
        }
    }

    #[test]
    fn threads_do_not_change_values() {
        let arch = crate::nets::Architecture { hidden_width: 16, ..crate::nets::Architecture::toy(1) };
        let f = MlpParams::init(Role::Critic, &arch, &crate::toydata::rng::Stream::new(1));
        let spec = GridSpec::square(-2.0, 2.0, 31);
        assert_eq!(value_surface(&f, &spec, 1).unwrap(), value_surface(&f, &spec, 4).unwrap());
    }

    #[test]
    fn parse_grid_flag() {
        let g: GridSpec = "-2.5:2.5:201".parse().unwrap();
        assert_eq!(g, GridSpec::default());
        assert!("1:0:5".parse::<GridSpec>().is_err());
        assert!("0:1:1".parse::<GridSpec>().is_err());
        assert!("0:1".parse::<GridSpec>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let arch = crate::nets::Architecture { hidden_width: 8, ..crate::nets::Architecture::toy(1) };
        let f = MlpParams::init(Role::Critic, &arch, &crate::toydata::rng::Stream::new(2));
        let g = value_surface(&f, &GridSpec::square(-2.5, 2.5, 9), 1).unwrap();
        assert_eq!(parse_surface_csv(&surface_to_csv(&g)).unwrap(), g);
        let two = value_surface(&f, &GridSpec::square(0.0, 1.0, 2), 1).unwrap();
        assert_eq!(surface_to_csv(&two).lines().count(), 5);
    }

    #[test]
    fn constant_svg_is_single_color() {
        let g = value_surface(&linear([0.0, 0.0], 2.0), &GridSpec::square(0.0, 1.0, 4), 1).unwrap();
        let svg = surface_to_svg(&g, None);
        let fills: std::collections::BTreeSet<_> =
            svg.split("fill=\"").skip(1).map(|s| &s[..7]).collect();
        assert_eq!(fills.len(), 1);
    }

    #[test]
    fn svg_export_is_byte_stable() {
        let g = value_surface(&linear([1.0, -0.5], 0.0), &GridSpec::square(-1.0, 1.0, 11), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        let pts = vec![vec![0.1, 0.2]];
        export_surface(&g, SurfaceFormat::Svg, &a, Some(&pts)).unwrap();
        export_surface(&g, SurfaceFormat::Svg, &b, Some(&pts)).unwrap();
        let text = fs::read_to_string(&a).unwrap();
        assert_eq!(text, fs::read_to_string(&b).unwrap());
        assert!(text.contains("#0000ff") && text.contains("#ff0000") && text.contains("<circle"));
    }
}
