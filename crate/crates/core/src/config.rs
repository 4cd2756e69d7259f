//! Run configuration: one JSON file per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Model, ModelOptions};
use crate::forces::{ForceData, ScalarField, Thresholds, VectorField};
use crate::geometry::{build_plate_mesh, build_rod_mesh, Edge, PlateDomain, RodDomain};
use crate::material::{lame_from_engineering, MaterialParams};
use crate::recovery3d::SweepOptions;
use crate::solver::SolveOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_half_widths")]
    pub half_widths: [f64; 2],
    #[serde(default = "default_clamped")]
    pub clamped: Vec<Edge>,
    #[serde(default = "default_length")]
    pub rod_length: f64,
}

fn default_half_widths() -> [f64; 2] {
    [2.0, 2.0]
}

fn default_clamped() -> Vec<Edge> {
    Edge::ALL.to_vec()
}

fn default_length() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub plate: [usize; 2],
    pub rod: usize,
    #[serde(default = "default_plate_order")]
    pub plate_order: usize,
    #[serde(default = "default_rod_order")]
    pub rod_order: usize,
}

fn default_plate_order() -> usize {
    ModelOptions::default().plate_order
}

fn default_rod_order() -> usize {
    ModelOptions::default().rod_order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MaterialConfig {
    Engineering { young: f64, poisson: f64 },
    Lame { lambda: f64, mu: f64 },
}

impl MaterialConfig {
    pub fn params(&self) -> Result<MaterialParams> {
        match *self {
            MaterialConfig::Engineering { young, poisson } => lame_from_engineering(young, poisson),
            MaterialConfig::Lame { lambda, mu } => MaterialParams::from_lame(lambda, mu),
        }
    }
}

/// One force component: a number, an expression in x1, x2, x3, or a CSV table
/// (path relative to the config file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentConfig {
    Number(f64),
    Expr(String),
    Table {
        table: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dims: Option<usize>,
    },
}

impl Default for ComponentConfig {
    fn default() -> Self {
        ComponentConfig::Number(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub plate: f64,
    pub rod: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcesConfig {
    #[serde(default)]
    pub plate: [ComponentConfig; 3],
    #[serde(default)]
    pub rod: [ComponentConfig; 3],
    #[serde(default)]
    pub g1: [ComponentConfig; 3],
    #[serde(default)]
    pub g2: [ComponentConfig; 3],
    #[serde(default = "one")]
    pub scale: f64,
    /// Admissibility thresholds; 0.1μ and 0.1μ/L when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdConfig>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
    pub n: u32,
    pub quadrature: SweepOptions,
    /// A saved result.json whose state is swept instead of solving.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { deltas: vec![0.2, 0.1, 0.05], n: 4, quadrature: SweepOptions::default(), state: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiStartConfig {
    /// Number of random starts besides the configured initial state; 0 disables.
    pub starts: usize,
    pub amplitude: f64,
}

impl Default for MultiStartConfig {
    fn default() -> Self {
        Self { starts: 0, amplitude: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, formats: vec![OutputFormat::Json, OutputFormat::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub mesh: MeshConfig,
    pub material: MaterialConfig,
    pub forces: ForcesConfig,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub multi_start: MultiStartConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory against which relative paths resolve.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Parses and validates a config; errors name the offending field and,
    /// for syntax errors, the line and column.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let at = format!("line {} column {}", inner.line(), inner.column());
            if path.is_empty() || path == "." {
                Error::Config(format!("{at}: {inner}"))
            } else {
                Error::Config(format!("{path} ({at}): {inner}"))
            }
        })?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    /// The normalized config (defaults filled in) as pretty JSON.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        self.plate_domain()?;
        self.rod_domain()?;
        self.material.params().map_err(|e| Error::Config(format!("material: {e}")))?;
        if self.mesh.rod == 0 || self.mesh.plate.contains(&0) {
            return bad("mesh", "element counts must be positive".into());
        }
        if !(1..=20).contains(&self.mesh.plate_order) || !(1..=20).contains(&self.mesh.rod_order) {
            return bad("mesh", "quadrature orders must lie in 1..=20".into());
        }
        self.solver.validate().map_err(|e| Error::Config(format!("solver: {e}")))?;
        let s = &self.sweep;
        if s.n < 2 {
            return bad("sweep.n", format!("plateau parameter {} must be at least 2", s.n));
        }
        if s.deltas.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("sweep.deltas", "values must be strictly decreasing".into());
        }
        for d in &s.deltas {
            if !(*d > 0.0 && *d <= 1.0 / s.n as f64) {
                return bad("sweep.deltas", format!("delta {d} must lie in ]0, 1/n] with n = {}", s.n));
            }
        }
        if !(self.forces.scale.is_finite()) {
            return bad("forces.scale", "must be finite".into());
        }
        if let Some(t) = self.forces.thresholds {
            if !(t.plate > 0.0 && t.rod > 0.0) {
                return bad("forces.thresholds", "must be positive".into());
            }
        }
        if !(self.multi_start.amplitude >= 0.0) {
            return bad("multi_start.amplitude", "must be nonnegative".into());
        }
        let mut paths: Vec<(String, &PathBuf)> = Vec::new();
        for (name, block) in self.force_blocks() {
            for (k, c) in block.iter().enumerate() {
                if let ComponentConfig::Table { table, .. } = c {
                    paths.push((format!("forces.{name}[{k}]"), table));
                }
            }
        }
        if let Some(p) = &s.state {
            paths.push(("sweep.state".into(), p));
        }
        for (field, p) in paths {
            if !self.resolve(p).is_file() {
                return bad(&field, format!("file {} does not exist", self.resolve(p).display()));
            }
        }
        self.forces().map(|_| ())
    }

    fn force_blocks(&self) -> [(&'static str, &[ComponentConfig; 3]); 4] {
        let f = &self.forces;
        [("plate", &f.plate), ("rod", &f.rod), ("g1", &f.g1), ("g2", &f.g2)]
    }

    pub fn plate_domain(&self) -> Result<PlateDomain> {
        PlateDomain::new(self.geometry.half_widths, &self.geometry.clamped).map_err(|e| Error::Config(format!("geometry: {e}")))
    }

    pub fn rod_domain(&self) -> Result<RodDomain> {
        RodDomain::new(self.geometry.rod_length).map_err(|e| Error::Config(format!("geometry: {e}")))
    }

    pub fn material_params(&self) -> Result<MaterialParams> {
        self.material.params()
    }

    pub fn forces(&self) -> Result<ForceData> {
        let mut fd = ForceData::zero();
        fd.scale = self.forces.scale;
        let targets: [&mut VectorField; 4] = [&mut fd.plate, &mut fd.rod, &mut fd.g1, &mut fd.g2];
        for ((name, block), target) in self.force_blocks().into_iter().zip(targets) {
            let default_dims = if name == "plate" { 2 } else { 1 };
            for (k, c) in block.iter().enumerate() {
                let ctx = |e: Error| Error::Config(format!("forces.{name}[{k}]: {e}"));
                target[k] = match c {
                    ComponentConfig::Number(v) => ScalarField::constant(*v),
                    ComponentConfig::Expr(s) => ScalarField::expr(s).map_err(ctx)?,
                    ComponentConfig::Table { table, dims } => {
                        let dims = dims.unwrap_or(default_dims);
                        if !(1..=2).contains(&dims) {
                            return Err(ctx(Error::Forces(format!("table dimension {dims} must be 1 or 2"))));
                        }
                        ScalarField::from_csv(&self.resolve(table), dims).map_err(ctx)?
                    }
                };
            }
        }
        Ok(fd)
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        Ok(match self.forces.thresholds {
            Some(t) => Thresholds { threshold_p: t.plate, threshold_r: t.rod },
            None => Thresholds::default_for(self.material_params()?.mu, self.geometry.rod_length),
        })
    }

    pub fn build_model(&self) -> Result<Model> {
        let plate = build_plate_mesh(&self.plate_domain()?, self.mesh.plate)?;
        let rod = build_rod_mesh(&self.rod_domain()?, self.mesh.rod)?;
        let opts = ModelOptions { plate_order: self.mesh.plate_order, rod_order: self.mesh.rod_order };
        Model::with_options(plate, rod, self.material_params()?, self.forces()?, opts)
    }

    /// The same run on a mesh refined by `factor` in every direction.
    pub fn refined(&self, factor: usize) -> Self {
        let mut c = self.clone();
        c.mesh.plate = [c.mesh.plate[0] * factor, c.mesh.plate[1] * factor];
        c.mesh.rod *= factor;
        c
    }

    pub fn wants(&self, f: OutputFormat) -> bool {
        self.output.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "geometry": {},
        "mesh": {"plate": [4, 4], "rod": 4},
        "material": {"young": 1.0, "poisson": 0.3},
        "forces": {"plate": [0, 0, "0.01*cos(x1)"], "rod": [0.01, 0, 0]}
    }"#;

    #[test]
    fn minimal_config_builds() {
        let c = RunConfig::from_json(MINIMAL, ".").unwrap();
        assert_eq!(c.geometry.clamped.len(), 4);
        assert_eq!(c.sweep.deltas, vec![0.2, 0.1, 0.05]);
        let m = c.build_model().unwrap();
        assert_eq!(m.plate.nx, 4);
        let fd = c.forces().unwrap();
        assert!((fd.f_p([0.5, 0.0])[2] - 0.01 * 0.5f64.cos()).abs() < 1e-16);
        assert_eq!(fd.f_r(0.3), [0.01, 0.0, 0.0]);
    }

    #[test]
    fn echo_is_a_fixed_point() {
        let c = RunConfig::from_json(MINIMAL, ".").unwrap();
        let e = c.echo();
        let again = RunConfig::from_json(&e, ".").unwrap();
        assert_eq!(again, c);
        assert_eq!(again.echo(), e);
    }

    #[test]
    fn errors_name_the_field() {
        let missing = r#"{"geometry": {}, "mesh": {"plate": [4, 4], "rod": 4}, "forces": {}}"#;
        let msg = RunConfig::from_json(missing, ".").unwrap_err().to_string();
        assert!(msg.contains("material"), "{msg}");
        let typo = "{\"geometry\": {},\n \"mesh\": {\"plate\": [4, 4], \"rod\": \"x\"},\n \"material\": {\"young\": 1, \"poisson\": 0.3}, \"forces\": {}}";
        let msg = RunConfig::from_json(typo, ".").unwrap_err().to_string();
        assert!(msg.contains("mesh.rod") && msg.contains("line 2"), "{msg}");
        let expr = MINIMAL.replace("0.01*cos(x1)", "0.01*(x1");
        let msg = RunConfig::from_json(&expr, ".").unwrap_err().to_string();
        assert!(msg.contains("forces.plate[2]"), "{msg}");
    }

    #[test]
    fn sweep_constraints() {
        let with = |s: &str| MINIMAL.replacen("\"geometry\": {},", &format!("\"geometry\": {{}}, \"sweep\": {s},"), 1);
        assert!(RunConfig::from_json(&with(r#"{"deltas": [0.3], "n": 4}"#), ".").is_err());
        assert!(RunConfig::from_json(&with(r#"{"deltas": [0.1, 0.2]}"#), ".").is_err());
        assert!(RunConfig::from_json(&with(r#"{"deltas": [0.25, 0.1], "n": 4}"#), ".").is_ok());
    }

    #[test]
    fn tables_resolve_relative_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("fr.csv"), "x3,value\n0,0\n1,2\n").unwrap();
        let text = MINIMAL.replace("\"rod\": [0.01, 0, 0]", "\"rod\": [0, 0, {\"table\": \"fr.csv\"}]");
        std::fs::write(dir.path().join("run.json"), &text).unwrap();
        let c = RunConfig::from_file(dir.path().join("run.json")).unwrap();
        assert!((c.forces().unwrap().f_r(0.25)[2] - 0.5).abs() < 1e-15);
        std::fs::remove_file(dir.path().join("fr.csv")).unwrap();
        let msg = RunConfig::from_file(dir.path().join("run.json")).unwrap_err().to_string();
        assert!(msg.contains("forces.rod[2]") && msg.contains("does not exist"), "{msg}");
    }
}
