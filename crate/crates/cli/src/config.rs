//! JSON scenario files. Every section and key is optional; unknown keys are
//! rejected.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use gabor_core::frame::{BoundsDomain, DeformOptions, GaborSystem, ProbeSpace};
use gabor_core::lattice::separable_lattice;
use gabor_core::metaplectic::ProbeSet;
use gabor_core::quantum::gaussian_window;
use gabor_core::{c64, Ellipsoid, GridSpec, PhaseBox, PointSet, QuadraticHamiltonian, State};
use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub grid: GridConfig,
    pub window: WindowConfig,
    pub lattice: LatticeConfig,
    pub ellipsoid: EllipsoidConfig,
    pub deformation: DeformationConfig,
    pub tolerances: Tolerances,
    pub bounds: BoundsConfig,
    pub flow: FlowConfig,
    pub covariance: CovarianceConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub hbar: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 1024,
            length: 16.0,
            hbar: 1.0 / (2.0 * PI),
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec, CliError> {
        Ok(GridSpec::centered(self.n, self.length, self.hbar)?)
    }
}

/// Either a Gaussian parameter `Γ = re + i·im` or a state file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub gamma: Option<[f64; 2]>,
    pub samples: Option<PathBuf>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            gamma: Some([0.0, 1.0]),
            samples: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxSpec {
    HalfWidth(f64),
    Bounds { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "box")]
    pub bounds: BoxSpec,
    /// Point-set JSON file used instead of the separable lattice.
    pub points: Option<PathBuf>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            alpha: FRAC_1_SQRT_2,
            beta: FRAC_1_SQRT_2,
            bounds: BoxSpec::HalfWidth(6.0),
            points: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipsoidConfig {
    /// Rows of the symmetric positive definite `2n × 2n` matrix.
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "E")]
    pub energy: f64,
}

impl Default for EllipsoidConfig {
    fn default() -> Self {
        EllipsoidConfig {
            m: vec![vec![1.0, 0.5], vec![0.5, 2.0]],
            energy: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformationConfig {
    pub t: Vec<f64>,
    /// Sweep of energies; defaults to the ellipsoid's `E`.
    #[serde(rename = "E")]
    pub energies: Option<Vec<f64>>,
}

impl Default for DeformationConfig {
    fn default() -> Self {
        DeformationConfig {
            t: (0..9).map(|k| k as f64 * PI / 16.0).collect(),
            energies: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub boundary: f64,
    pub eps_max: f64,
    pub dt_max: f64,
    /// Probe-space margin; `4√ħ` when absent.
    pub margin: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            boundary: 1e-9,
            eps_max: 1.0,
            dt_max: 1e-3,
            margin: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    #[default]
    Probe,
    Full,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub domain: DomainKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub start: Vec<f64>,
    pub t: f64,
    pub eps: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            start: vec![0.5, 0.0],
            t: 2.0,
            eps: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovarianceConfig {
    pub t: Vec<f64>,
    pub z: Vec<[f64; 2]>,
    pub probes: usize,
    pub probe_radius: f64,
    pub seed: u64,
    /// Second grid; adds `defect_coarse` and `ratio` columns.
    pub coarse: Option<GridConfig>,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        CovarianceConfig {
            t: vec![0.0, 0.5, 1.0, PI / 2.0],
            z: vec![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]],
            probes: 8,
            probe_radius: 1.0,
            seed: 0x5eed,
            coarse: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))
    }

    /// Relative file references inside the config resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent();
        if let Some(p) = &cfg.window.samples {
            cfg.window.samples = Some(resolve(base, p));
        }
        if let Some(p) = &cfg.lattice.points {
            cfg.lattice.points = Some(resolve(base, p));
        }
        Ok(cfg)
    }

    pub fn hamiltonian(&self) -> Result<QuadraticHamiltonian, CliError> {
        let rows = &self.ellipsoid.m;
        let d = rows.len();
        if d == 0 || !d.is_multiple_of(2) || rows.iter().any(|r| r.len() != d) {
            return Err(config_err("ellipsoid.M must be a square 2n x 2n matrix"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        Ok(QuadraticHamiltonian::new(m)?)
    }

    pub fn dof(&self) -> Result<usize, CliError> {
        Ok(self.hamiltonian()?.dof())
    }

    /// `M` as a 2×2 matrix; quantum-side commands need `n = 1`.
    pub fn planar_m(&self) -> Result<Matrix2<f64>, CliError> {
        let h = self.hamiltonian()?;
        if h.dof() != 1 {
            return Err(config_err("this command needs a 2 x 2 ellipsoid.M (n = 1)"));
        }
        let m = h.matrix();
        Ok(Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
    }

    pub fn ellipsoid_at(&self, energy: f64) -> Result<Ellipsoid, CliError> {
        Ok(Ellipsoid::new(self.hamiltonian()?, energy)?)
    }

    pub fn ellipsoid(&self) -> Result<Ellipsoid, CliError> {
        self.ellipsoid_at(self.ellipsoid.energy)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.deformation
            .energies
            .clone()
            .unwrap_or_else(|| vec![self.ellipsoid.energy])
    }

    pub fn points(&self) -> Result<PointSet, CliError> {
        let n = self.dof()?;
        let set = if let Some(path) = &self.lattice.points {
            let f = File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            PointSet::read_json(BufReader::new(f))?
        } else {
            let bounds = match &self.lattice.bounds {
                BoxSpec::HalfWidth(h) => PhaseBox::symmetric(n, *h)?,
                BoxSpec::Bounds { lower, upper } => PhaseBox::new(lower.clone(), upper.clone())?,
            };
            separable_lattice(self.lattice.alpha, self.lattice.beta, &bounds, n)?
        };
        if set.dof() != n {
            return Err(config_err(format!(
                "point set has n = {}, ellipsoid.M has n = {n}",
                set.dof()
            )));
        }
        Ok(set)
    }

    pub fn window(&self, g: &GridSpec) -> Result<State, CliError> {
        match (&self.window.gamma, &self.window.samples) {
            (Some([re, im]), None) => Ok(gaussian_window(c64::new(*re, *im), g)?),
            (None, Some(path)) => {
                let f =
                    File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                let (state, file_grid) = State::read_binary(BufReader::new(f))?;
                if file_grid != *g {
                    return Err(config_err(
                        "window sample grid differs from the configured grid",
                    ));
                }
                Ok(state.normalized(g)?)
            }
            _ => Err(config_err(
                "window needs exactly one of `gamma` and `samples`",
            )),
        }
    }

    pub fn margin(&self, g: &GridSpec) -> f64 {
        self.tolerances
            .margin
            .unwrap_or_else(|| ProbeSpace::default_margin(g))
    }

    pub fn system(&self) -> Result<GaborSystem, CliError> {
        let g = self.grid.build()?;
        let points = self.points()?;
        if points.dof() != 1 {
            return Err(config_err("Gabor systems need n = 1"));
        }
        Ok(GaborSystem::new(self.window(&g)?, points, g)?)
    }

    pub fn domain(&self, sys: &GaborSystem) -> Result<BoundsDomain, CliError> {
        Ok(match self.bounds.domain {
            DomainKind::Full => BoundsDomain::Full,
            DomainKind::Probe => {
                let g = sys.grid();
                BoundsDomain::Probe(ProbeSpace::covering(
                    sys.points(),
                    &self.planar_m()?,
                    g,
                    self.margin(g),
                )?)
            }
        })
    }

    pub fn deform_options(&self, sys: &GaborSystem) -> Result<DeformOptions, CliError> {
        Ok(DeformOptions {
            boundary_tol: self.tolerances.boundary,
            eps_max: self.tolerances.eps_max,
            domain: self.domain(sys)?,
        })
    }

    pub fn probes(&self, g: &GridSpec) -> Result<ProbeSet, CliError> {
        let c = &self.covariance;
        Ok(ProbeSet::concentrated(g, c.probes, c.probe_radius, c.seed)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build() {
        let cfg = ScenarioConfig::default();
        let sys = cfg.system().unwrap();
        assert_eq!(sys.len(), 17 * 17);
        assert_eq!(sys.grid().n, 1024);
        assert_eq!(cfg.deformation.t.len(), 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"grid": {"n": 256, "bogus": 1}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"extra": {}}"#).is_err());
        let cfg = ScenarioConfig::from_json(r#"{"grid": {"n": 256, "L": 8.0}, "lattice": {"box": {"lower": [-1, -1], "upper": [1, 2]}}}"#)
            .unwrap();
        assert_eq!(cfg.grid.n, 256);
        assert_eq!(cfg.grid.hbar, GridConfig::default().hbar);
        assert!(matches!(cfg.lattice.bounds, BoxSpec::Bounds { .. }));
    }

    #[test]
    fn bad_matrices_are_config_errors() {
        let cfg = ScenarioConfig::from_json(r#"{"ellipsoid": {"M": [[1, 0], [0, -1]]}}"#).unwrap();
        assert!(matches!(cfg.hamiltonian(), Err(CliError::Config(_))));
        let cfg =
            ScenarioConfig::from_json(r#"{"ellipsoid": {"M": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}}"#)
                .unwrap();
        assert!(matches!(cfg.hamiltonian(), Err(CliError::Config(_))));
    }
}
