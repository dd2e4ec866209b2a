//! Experiment manifests: which complex, which fields, which sweep.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use witten_core::complex::{icosphere, load_mesh, tag_domain, Complex, DomainTag, MeshSpec};
use witten_core::expr::Expr;
use witten_core::spectral::BoundaryCondition;
use witten_core::witten_ops::{CellField, Gauge, Geometry, MassScheme};
use witten_core::{Error, Result};

/// Where the complex comes from.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MeshRef {
    Icosphere { icosphere: usize },
    File { file: PathBuf },
    Inline(MeshSpec),
}

/// A scalar field given as an expression over coordinates or as one value per vertex.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum FieldDef {
    Expr(String),
    Values(Vec<f64>),
}

/// Top cells of U: explicit indices, or those whose centroid satisfies a predicate.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum DomainDef {
    Cells { cells: Vec<usize> },
    Where {
        #[serde(rename = "where")]
        predicate: String,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub name: Option<String>,
    pub mesh: MeshRef,
    pub phi: Option<FieldDef>,
    /// per-factor weights for product experiments, each in the factor coordinate `x`
    #[serde(default)]
    pub factor_phi: Vec<String>,
    /// conformal factor of the metric
    pub u: Option<FieldDef>,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub degrees: Vec<usize>,
    #[serde(default)]
    pub scheme: MassScheme,
    #[serde(default)]
    pub gauge: Gauge,
    pub boundary: Option<BoundaryCondition>,
    pub domain: Option<DomainDef>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// smoothing indices j
    #[serde(default)]
    pub smoothing: Vec<usize>,
    /// grid sizes for refinement studies
    #[serde(default)]
    pub refinements: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub radii: Vec<f64>,
    /// eigenspaces compared by the puncture distance
    #[serde(default = "default_spaces")]
    pub spaces: usize,
    /// weight of the symmetric gradient term in the Hessian expression
    #[serde(default = "default_coefficient")]
    pub coefficient: f64,
    /// non-gradient twisting field `[X1, X2]` for three-forms
    pub twist: Option<[String; 2]>,
    /// per-step drop of a vanishing collapse eigenvalue
    #[serde(default = "default_drop")]
    pub drop_factor: f64,
    /// relative tolerance of the convergence assertions
    pub assert_tol: Option<f64>,
    /// eigensolver residual target; `--tol` overrides it
    pub solver_tol: Option<f64>,
}

fn default_k() -> usize {
    5
}

fn default_samples() -> usize {
    20
}

fn default_spaces() -> usize {
    3
}

fn default_coefficient() -> f64 {
    2.0
}

fn default_drop() -> f64 {
    5.0
}

/// The manifest resolved against a complex.
pub struct Loaded {
    pub manifest: ExperimentManifest,
    pub complex: Complex,
    pub geometry: Geometry,
    pub weight: CellField,
    pub domain: Option<DomainTag>,
}

impl ExperimentManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut m: ExperimentManifest = serde_json::from_str(&text)?;
        if let MeshRef::File { file } = &mut m.mesh {
            if file.is_relative() {
                *file = path.parent().unwrap_or(Path::new(".")).join(&*file);
            }
        }
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(Error::Invalid("epsilons must lie in (0, 1]".into()));
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Invalid("radii must be positive".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Invalid(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Builds the complex, its geometry and the fields.
    pub fn load(self) -> Result<Loaded> {
        self.check()?;
        let (complex, embedded_phi, embedded_domain) = match &self.mesh {
            MeshRef::Icosphere { icosphere: f } => (icosphere(*f)?.into(), None, None),
            MeshRef::File { file } => {
                if !file.exists() {
                    return Err(Error::Invalid(format!("mesh file {} does not exist", file.display())));
                }
                let m = load_mesh(file)?;
                (m.complex, m.phi, m.domain)
            }
            MeshRef::Inline(spec) => {
                let m = spec.build()?;
                (m.complex, m.phi, m.domain)
            }
        };
        let mut geometry = Geometry::from_complex(&complex)?;
        let weight = match (&self.phi, embedded_phi) {
            (Some(def), _) => field(&complex, def)?,
            (None, Some(v)) => CellField::from_vertices(&complex, &v)?,
            (None, None) => CellField::zeros(&complex),
        };
        if let Some(def) = &self.u {
            geometry = geometry.with_conformal(field(&complex, def)?);
        }
        let domain = match &self.domain {
            None => embedded_domain.map(|cells| DomainTag::from_indices(&complex, &cells)).transpose()?,
            Some(DomainDef::Cells { cells }) => Some(DomainTag::from_indices(&complex, cells)?),
            Some(DomainDef::Where { predicate }) => {
                let e = Expr::parse(predicate)?;
                e.check_arity(complex.vertex_coords(0).len())?;
                Some(tag_domain(&complex, |t| e.eval(&centroid(&complex, t)) > 0.0)?)
            }
        };
        for &p in &self.degrees {
            if p > complex.dimension() {
                return Err(Error::DegreeOutOfRange { p, max: complex.dimension() });
            }
        }
        Ok(Loaded { manifest: self, complex, geometry, weight, domain })
    }
}

/// Vertex field from its definition; expressions see the embedded coordinates.
pub fn field(complex: &Complex, def: &FieldDef) -> Result<CellField> {
    match def {
        FieldDef::Expr(s) => {
            let e = Expr::parse(s)?;
            e.check_arity(complex.vertex_coords(0).len())?;
            CellField::from_fn(complex, |x| e.eval(x))
        }
        FieldDef::Values(v) => CellField::from_vertices(complex, v),
    }
}

/// Centroid of a top cell. On tensor grids the cell midpoint, so cells that
/// wrap around a circle factor are placed correctly.
pub fn centroid(complex: &Complex, t: usize) -> Vec<f64> {
    let n = complex.dimension();
    if let Some(tc) = complex.as_tensor() {
        return tc.cell(n, t).iter().zip(tc.factors()).map(|((_, i), f)| (*i as f64 + 0.5) * f.spacing()).collect();
    }
    let vs = complex.cell_vertices(n, t);
    let dim = complex.vertex_coords(vs[0]).len();
    let mut c = vec![0.0; dim];
    for &v in &vs {
        for (a, b) in c.iter_mut().zip(complex.vertex_coords(v)) {
            *a += b / vs.len() as f64;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_collapse_example() {
        let text = r#"{"mesh":{"icosphere":3},"phi":"0.3*x","alpha":2.0,"degrees":[1],
            "domain":{"where":"abs(z) < 0.35"},"epsilons":[0.1,0.01],"k":3}"#;
        let m: ExperimentManifest = serde_json::from_str(text).unwrap();
        let l = m.load().unwrap();
        assert!(l.domain.is_some());
        assert_eq!(l.complex.num_top(), 180);
    }

    #[test]
    fn rejects_bad_fields() {
        let bad = [
            r#"{"mesh":{"icosphere":1},"phi":"sin(q)"}"#,
            r#"{"mesh":{"icosphere":1},"phi":"w"}"#,
            r#"{"mesh":{"icosphere":1},"epsilons":[0.0]}"#,
            r#"{"mesh":{"icosphere":1},"degrees":[3]}"#,
            r#"{"mesh":{"file":"/nonexistent/mesh.json"}}"#,
        ];
        for t in bad {
            let m: ExperimentManifest = serde_json::from_str(t).unwrap();
            assert!(m.load().is_err(), "{t}");
        }
        assert!(serde_json::from_str::<ExperimentManifest>(r#"{"mesh":{"icosphere":1},"bogus":1}"#).is_err());
    }
}
