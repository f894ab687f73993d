use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use freeflow::domain::{Domain, DomainSpec, PLPath};
use freeflow::fields::{vortex_field, GridScalarField, GridVectorField};
use freeflow::flows::SpindleSpec;
use freeflow::geometry::Point;
use freeflow::transport::{random_molecules, Molecule, DEFAULT_MASS_SCALE};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliResult};

/// One term `a·sin(ω·p + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequency: Point,
    #[serde(default)]
    pub phase: f64,
}

fn sine_value(terms: &[SineTerm], p: Point) -> f64 {
    terms
        .iter()
        .map(|t| t.amplitude * (t.frequency[0] * p[0] + t.frequency[1] * p[1] + t.phase).sin())
        .sum()
}

fn sine_grad(terms: &[SineTerm], p: Point) -> [f64; 2] {
    terms.iter().fold([0.0, 0.0], |acc, t| {
        let c = t.amplitude * (t.frequency[0] * p[0] + t.frequency[1] * p[1] + t.phase).cos();
        [acc[0] + c * t.frequency[0], acc[1] + c * t.frequency[1]]
    })
}

/// Vector field input for `reconstruct`, `conservativity`, `quotient` and
/// `vortex-demo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    /// `(−y, x)/|·|²` around `center`, zero inside `min_radius`.
    Vortex { center: Point, min_radius: f64 },
    /// `offset + matrix·p`.
    Affine { offset: Point, matrix: [[f64; 2]; 2] },
    /// Gradient of `Σ a·sin(ω·p + φ)`.
    SineGradient { terms: Vec<SineTerm> },
    /// Vector field dump `(i, j, cx, cy, vx, vy)`.
    Csv { path: PathBuf },
}

impl FieldSource {
    pub fn load<'d>(&self, domain: &'d Domain, base_dir: &Path) -> CliResult<GridVectorField<'d>> {
        Ok(match self {
            FieldSource::Vortex { center, min_radius } => {
                if !(*min_radius > 0.0) {
                    return Err(invalid("vortex min_radius must be positive"));
                }
                vortex_field(*center, *min_radius).sample(domain)
            }
            FieldSource::Affine { offset, matrix } => GridVectorField::from_fn(domain, |p| {
                [
                    offset[0] + matrix[0][0] * p[0] + matrix[0][1] * p[1],
                    offset[1] + matrix[1][0] * p[0] + matrix[1][1] * p[1],
                ]
            }),
            FieldSource::SineGradient { terms } => GridVectorField::from_fn(domain, |p| sine_grad(terms, p)),
            FieldSource::Csv { path } => {
                let file = std::fs::File::open(base_dir.join(path))?;
                GridVectorField::read_csv(domain, file)?
            }
        })
    }

    /// Closed-form potential when the field is an exact gradient.
    pub fn exact_potential(&self) -> Option<Box<dyn Fn(Point) -> f64>> {
        match self {
            FieldSource::Affine { offset, matrix } if matrix[0][1] == matrix[1][0] => {
                let (o, m) = (*offset, *matrix);
                Some(Box::new(move |p: Point| {
                    o[0] * p[0]
                        + o[1] * p[1]
                        + 0.5 * (m[0][0] * p[0] * p[0] + 2.0 * m[0][1] * p[0] * p[1] + m[1][1] * p[1] * p[1])
                }))
            }
            FieldSource::SineGradient { terms } => {
                let terms = terms.clone();
                Some(Box::new(move |p| sine_value(&terms, p)))
            }
            _ => None,
        }
    }

    fn referenced_file(&self) -> Option<&Path> {
        match self {
            FieldSource::Csv { path } => Some(path),
            _ => None,
        }
    }
}

/// Scalar input for `lipnorm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSource {
    Sine { terms: Vec<SineTerm> },
    /// Graph distance to the cell containing `from`.
    Distance { from: Point },
    /// Scalar field dump `(i, j, cx, cy, v)`.
    Csv { path: PathBuf },
}

impl PotentialSource {
    pub fn load<'d>(&self, domain: &'d Domain, base_dir: &Path) -> CliResult<GridScalarField<'d>> {
        Ok(match self {
            PotentialSource::Sine { terms } => GridScalarField::from_fn(domain, |p| sine_value(terms, p)),
            PotentialSource::Distance { from } => {
                let sp = domain.shortest_paths(&[(domain.snap(*from)?, 0.0)]);
                GridScalarField::new(domain, sp.dist, domain.interior_mask().to_vec())?
            }
            PotentialSource::Csv { path } => {
                let file = std::fs::File::open(base_dir.join(path))?;
                GridScalarField::read_csv(domain, file)?
            }
        })
    }

    fn referenced_file(&self) -> Option<&Path> {
        match self {
            PotentialSource::Csv { path } => Some(path),
            _ => None,
        }
    }
}

/// Molecule input: inline atoms, a JSON file, or a seeded random draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MoleculeSource {
    Inline { atoms: Vec<InlineAtom> },
    File { path: PathBuf },
    Random { random_atoms: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineAtom {
    pub p: Point,
    pub m: f64,
}

impl MoleculeSource {
    pub fn load(&self, domain: &Domain, base_dir: &Path, seed: u64) -> CliResult<Molecule> {
        Ok(match self {
            MoleculeSource::Inline { atoms } => {
                let text = serde_json::json!({ "atoms": atoms }).to_string();
                Molecule::from_json(domain, &text)?
            }
            MoleculeSource::File { path } => {
                let text = std::fs::read_to_string(base_dir.join(path))?;
                Molecule::from_json(domain, &text)?
            }
            MoleculeSource::Random { random_atoms } => {
                if *random_atoms < 2 {
                    return Err(invalid("a random molecule needs at least 2 atoms"));
                }
                random_molecules(domain, 1, *random_atoms, seed).remove(0)
            }
        })
    }

    fn referenced_file(&self) -> Option<&Path> {
        match self {
            MoleculeSource::File { path } => Some(path),
            _ => None,
        }
    }
}

/// Endpoints for `dist`, with an optional expected distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistBlock {
    pub x: Point,
    pub y: Point,
    #[serde(default)]
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub h: f64,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructBlock {
    #[serde(default)]
    pub probe_paths: Option<usize>,
    /// Refinement levels for a convergence study against the exact potential.
    #[serde(default)]
    pub convergence: Vec<Level>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairs {
    #[default]
    All,
    Random { sources: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mass_scale: Option<u64>,
    /// Mollifier index.
    #[serde(default)]
    pub k: Option<u32>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub field: Option<FieldSource>,
    #[serde(default)]
    pub potential: Option<PotentialSource>,
    #[serde(default)]
    pub molecule: Option<MoleculeSource>,
    #[serde(default)]
    pub spindle: Option<SpindleSpec>,
    #[serde(default)]
    pub dist: Option<DistBlock>,
    /// Closed path for `loopsmear`.
    #[serde(default, rename = "loop")]
    pub loop_path: Option<PLPath>,
    /// Explicit loops for `conservativity`; automatic when absent.
    #[serde(default)]
    pub loops: Option<Vec<PLPath>>,
    #[serde(default)]
    pub reconstruct: Option<ReconstructBlock>,
    #[serde(default)]
    pub pairs: Pairs,
    /// Simply connected comparison domain for `vortex-demo`.
    #[serde(default)]
    pub subdomain: Option<DomainSpec>,
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mass_scale: Option<u64>,
    pub tolerances: Vec<(String, f64)>,
}

/// Parse `NAME=VAL`.
pub fn parse_tol(s: &str) -> CliResult<(String, f64)> {
    let (name, val) = s.split_once('=').ok_or_else(|| invalid(format!("tolerance `{s}` is not NAME=VAL")))?;
    let v: f64 = val.trim().parse().map_err(|_| invalid(format!("tolerance `{s}` has a non-numeric value")))?;
    Ok((name.trim().to_string(), v))
}

/// A validated configuration with its directory and effective settings.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub seed: u64,
    pub mass_scale: u64,
    /// Bytes of every referenced input file, by configured path.
    pub referenced: BTreeMap<String, Vec<u8>>,
}

impl LoadedConfig {
    pub fn from_path(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base_dir, overrides)
    }

    pub fn from_str(text: &str, base_dir: PathBuf, overrides: &Overrides) -> CliResult<Self> {
        let mut config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| invalid(format!("schema: {e}")))?;
        for (name, v) in &overrides.tolerances {
            config.tolerances.insert(name.clone(), *v);
        }
        if let Some(s) = overrides.seed {
            config.seed = Some(s);
        }
        if let Some(m) = overrides.mass_scale {
            config.mass_scale = Some(m);
        }
        for (name, &v) in &config.tolerances {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("tolerance `{name}` must be positive and finite")));
            }
        }
        if config.mass_scale == Some(0) {
            return Err(invalid("mass_scale must be positive"));
        }
        if config.k == Some(0) {
            return Err(invalid("k must be positive"));
        }
        let mut referenced = BTreeMap::new();
        let files = [
            config.field.as_ref().and_then(FieldSource::referenced_file),
            config.potential.as_ref().and_then(PotentialSource::referenced_file),
            config.molecule.as_ref().and_then(MoleculeSource::referenced_file),
        ];
        for rel in files.into_iter().flatten() {
            let bytes = std::fs::read(base_dir.join(rel))
                .map_err(|e| invalid(format!("referenced file {}: {e}", rel.display())))?;
            referenced.insert(rel.display().to_string(), bytes);
        }
        Ok(LoadedConfig {
            seed: config.seed.unwrap_or(0),
            mass_scale: config.mass_scale.unwrap_or(DEFAULT_MASS_SCALE),
            config,
            base_dir,
            referenced,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_flags_parse() {
        assert_eq!(parse_tol("gap=1e-9").unwrap(), ("gap".to_string(), 1e-9));
        assert!(parse_tol("gap").is_err());
        assert!(parse_tol("gap=abc").is_err());
    }

    #[test]
    fn affine_potential_requires_symmetry() {
        let sym = FieldSource::Affine { offset: [1.0, 2.0], matrix: [[2.0, 1.0], [1.0, -1.0]] };
        let f = sym.exact_potential().unwrap();
        // f(p) = p·o + ½ pᵀMp
        assert_eq!(f([1.0, 1.0]), 3.0 + 0.5 * (2.0 + 2.0 - 1.0));
        let skew = FieldSource::Affine { offset: [0.0, 0.0], matrix: [[0.0, -1.0], [1.0, 0.0]] };
        assert!(skew.exact_potential().is_none());
    }

    #[test]
    fn overrides_replace_config_values() {
        let text = r#"{"domain": {"outer": [[0,0],[1,0],[1,1],[0,1]], "norm": "l2", "h": 0.1}, "seed": 4}"#;
        let ov = Overrides { seed: Some(9), mass_scale: Some(64), tolerances: vec![("gap".into(), 1e-6)] };
        let cfg = LoadedConfig::from_str(text, PathBuf::new(), &ov).unwrap();
        assert_eq!((cfg.seed, cfg.mass_scale), (9, 64));
        assert_eq!(cfg.config.tolerances["gap"], 1e-6);
    }
}
