//! Experiment configuration: a JSON document parsed into a validated tree.
//!
//! Every object rejects unknown keys. Sections a command does not use may
//! be present and are ignored by it.

use std::sync::Arc;

use carnot_core::algebra::StructureConstants;
use carnot_core::blowup::{BlowupOptions, SurfacePatch, DEFAULT_SCAN};
use carnot_core::factor::{FactorOptions, VolumeMethod};
use carnot_core::metrics::{DistanceSpec, MetricsError, DEFAULT_DINF_C, DEFAULT_HS_EPS, DEFAULT_KORANYI_GAMMA};
use carnot_core::subgroups::{preset, subspace_from_vectors, HomSubspace, Signature};
use carnot_core::{presets, Group};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: Option<GroupConfig>,
    pub distance: Option<DistanceConfig>,
    pub subspace: Option<SubspaceConfig>,
    pub surface: Option<SurfaceConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Sample count: Monte Carlo points, axiom triples or group-law triples.
    pub samples: Option<usize>,
    pub out: Option<String>,
    #[serde(default)]
    pub factor: FactorConfig,
    pub sweep: Option<SweepConfig>,
    pub blowup: Option<BlowupConfig>,
    #[serde(default)]
    pub graph_area: GraphAreaConfig,
    #[serde(default)]
    pub group_law: GroupLawConfig,
    #[serde(default)]
    pub convexity_samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GroupConfig {
    Preset(String),
    Explicit(ExplicitGroup),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitGroup {
    pub step: usize,
    pub layer_dims: Vec<usize>,
    /// Sparse `[k, i, j, value]` entries meaning `c^k_{ij} = value`, 0-based.
    pub bracket: Vec<(usize, usize, usize, f64)>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dinf,
    Koranyi,
    HebischSikora,
    Euclidean,
    Profile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub family: Family,
    #[serde(default)]
    pub params: DistanceParams,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceParams {
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub eps: Option<f64>,
    pub expr: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum SubspaceConfig {
    Preset(String),
    Vectors(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Param,
    Levelset,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub kind: SurfaceKind,
    pub expr: SurfaceExpr,
    pub domain: [[f64; 2]; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceExpr {
    pub x: Option<String>,
    pub y: Option<String>,
    pub t: Option<String>,
    pub f: Option<String>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    Mc,
    NestedQuadrature,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub n_starts: usize,
    pub max_evals: usize,
    pub final_factor: usize,
    pub method: MethodConfig,
}

impl Default for FactorConfig {
    fn default() -> Self {
        let d = FactorOptions::default();
        Self {
            n_starts: d.n_starts,
            max_evals: d.max_evals,
            final_factor: d.final_factor,
            method: MethodConfig::Mc,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub signature: Vec<usize>,
    pub k: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupConfig {
    /// Parameter point `(u, v)`.
    pub point: [f64; 2],
    pub radii: Option<Vec<f64>>,
    pub scan: Option<usize>,
    pub rel_tol: Option<f64>,
    pub sigmas: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphAreaConfig {
    pub n_grid: usize,
    /// Gauss–Legendre panels per axis for the surface-measure cross-check.
    pub panels: usize,
    pub rel_tol: f64,
}

impl Default for GraphAreaConfig {
    fn default() -> Self {
        Self {
            n_grid: 64,
            panels: 8,
            rel_tol: 0.02,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupLawConfig {
    pub tolerance: f64,
}

impl Default for GroupLawConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10 }
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
}

fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing `{key}`"))
}

impl ExperimentConfig {
    /// Structure constants without validation, so that `check-group` can
    /// report a broken bracket as an invariant failure.
    pub fn structure_constants(&self) -> Result<StructureConstants<f64>, CliError> {
        match self.group.as_ref().ok_or_else(|| missing("group"))? {
            GroupConfig::Preset(name) => presets::by_name::<f64>(name)
                .map(|g| g.structure_constants().clone())
                .ok_or_else(|| CliError::Config(format!("unknown group preset `{name}`"))),
            GroupConfig::Explicit(e) => {
                if e.step != e.layer_dims.len() {
                    return Err(CliError::Config(format!("step {} does not match {} layer dimensions", e.step, e.layer_dims.len())));
                }
                StructureConstants::from_tuples(e.layer_dims.clone(), &e.bracket).map_err(|err| CliError::Config(err.to_string()))
            }
        }
    }

    pub fn group(&self) -> Result<Arc<Group>, CliError> {
        let sc = self.structure_constants()?;
        Group::new(sc).map(Arc::new).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn distance(&self, group: &Arc<Group>) -> Result<DistanceSpec, CliError> {
        let cfg = self.distance.as_ref().ok_or_else(|| missing("distance"))?;
        let p = &cfg.params;
        let allowed: &[&str] = match cfg.family {
            Family::Dinf => &["c"],
            Family::Koranyi => &["gamma"],
            Family::HebischSikora => &["eps"],
            Family::Euclidean => &[],
            Family::Profile => &["expr"],
        };
        for (name, set) in [("c", p.c.is_some()), ("gamma", p.gamma.is_some()), ("eps", p.eps.is_some()), ("expr", p.expr.is_some())] {
            if set && !allowed.contains(&name) {
                return Err(CliError::Config(format!("parameter `{name}` does not apply to {:?}", cfg.family)));
            }
        }
        let g = group.clone();
        let built = match cfg.family {
            Family::Dinf => DistanceSpec::dinf(g, p.c.unwrap_or(DEFAULT_DINF_C)),
            Family::Koranyi => DistanceSpec::koranyi(g, p.gamma.unwrap_or(DEFAULT_KORANYI_GAMMA)),
            Family::HebischSikora => DistanceSpec::hebisch_sikora(g, p.eps.unwrap_or(DEFAULT_HS_EPS)),
            Family::Euclidean => DistanceSpec::euclidean(g),
            Family::Profile => DistanceSpec::from_profile_expr(g, p.expr.as_deref().ok_or_else(|| missing("distance.params.expr"))?),
        };
        built.map_err(|e| match e {
            MetricsError::AxiomsFailed { .. } => CliError::Invariant(e.to_string()),
            other => CliError::Config(other.to_string()),
        })
    }

    pub fn subspace(&self, group: &Arc<Group>) -> Result<HomSubspace, CliError> {
        let built = match self.subspace.as_ref().ok_or_else(|| missing("subspace"))? {
            SubspaceConfig::Preset(name) => preset(group.clone(), name),
            SubspaceConfig::Vectors(v) => subspace_from_vectors(group.clone(), v),
        };
        built.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn surface(&self, group: &Group) -> Result<SurfacePatch, CliError> {
        let s = self.surface.as_ref().ok_or_else(|| missing("surface"))?;
        let e = &s.expr;
        let built = match s.kind {
            SurfaceKind::Param => {
                if e.f.is_some() {
                    return Err(CliError::Config("a param surface takes `x`, `y`, `t`, not `f`".into()));
                }
                let get = |v: &Option<String>, k: &str| v.clone().ok_or_else(|| missing(&format!("surface.expr.{k}")));
                SurfacePatch::param(group, &get(&e.x, "x")?, &get(&e.y, "y")?, &get(&e.t, "t")?, s.domain)
            }
            SurfaceKind::Levelset => {
                if e.x.is_some() || e.y.is_some() || e.t.is_some() {
                    return Err(CliError::Config("a levelset surface takes `f` only".into()));
                }
                SurfacePatch::level_set(group, e.f.as_deref().ok_or_else(|| missing("surface.expr.f"))?, s.domain)
            }
        };
        built.map_err(CliError::from)
    }

    pub fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    pub fn factor_options(&self) -> FactorOptions {
        let f = &self.factor;
        FactorOptions {
            n_starts: f.n_starts,
            n_mc: self.samples_or(FactorOptions::default().n_mc),
            seed: self.seed,
            max_evals: f.max_evals,
            final_factor: f.final_factor,
            method: match f.method {
                MethodConfig::Mc => VolumeMethod::MonteCarlo,
                MethodConfig::NestedQuadrature => VolumeMethod::NestedQuadrature,
            },
        }
    }

    pub fn signature(&self, group: &Group) -> Result<(Signature, usize), CliError> {
        let s = self.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
        if s.k == 0 {
            return Err(CliError::Config("sweep.k must be at least 1".into()));
        }
        let sig = Signature::new(group, s.signature.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        Ok((sig, s.k))
    }

    pub fn blowup_options(&self) -> Result<([f64; 2], BlowupOptions), CliError> {
        let b = self.blowup.as_ref().ok_or_else(|| missing("blowup"))?;
        let d = BlowupOptions::default();
        Ok((
            b.point,
            BlowupOptions {
                radii: b.radii.clone().unwrap_or(d.radii),
                scan: b.scan.unwrap_or(DEFAULT_SCAN),
                rel_tol: b.rel_tol.unwrap_or(d.rel_tol),
                sigmas: b.sigmas.unwrap_or(d.sigmas),
                factor: self.factor_options(),
            },
        ))
    }
}
