//! TOML experiment files.
//!
//! ```toml
//! name = "example2"
//! seed = 7
//!
//! [dynamics]
//! drift = { builtin = "example2" }
//! input = { constant = [0.0, 1.0] }
//!
//! [sets]
//! x0 = { box = { lo = [5.3, -0.7], hi = [6.7, 0.7] } }
//! x_r = [0.0, 0.0]
//!
//! [[hazard]]
//! region = { box = { lo = [2.0, -3.0], hi = [4.0, 0.0] } }
//! level = 1.0
//! mode = "raw"
//!
//! [synthesis]
//! input_bound = 1.0
//! ```
//!
//! Everything else has a default; see the field docs. `configs/` holds the
//! shipped scenarios, which are also available by name through [`load`].

use crate::basis::SigmaRule;
use crate::dynamics::{BoxDomain, Sampling, VectorField};
use crate::region::Region;
use crate::safety::HazardPiece;
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const BUILTIN: &[(&str, &str)] = &[
    ("example1", include_str!("../configs/example1.toml")),
    ("example2", include_str!("../configs/example2.toml")),
    (
        "example2_sweep_05_05",
        include_str!("../configs/example2_sweep_05_05.toml"),
    ),
    (
        "example2_sweep_08_02",
        include_str!("../configs/example2_sweep_08_02.toml"),
    ),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub snapshots: SnapshotConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    pub sets: SetsConfig,
    #[serde(default)]
    pub hazard: Vec<HazardPiece>,
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub lqr: LqrConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default = "d_density_grid")]
    pub density_grid: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `example1`, `example2` or `zero`.
    Builtin(String),
    /// One expression in `x1, …, xn` per component.
    Expr(Vec<String>),
    Constant(Vec<f64>),
    /// Row-major `A` for `ẋ = A x`.
    Linear(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub drift: FieldSpec,
    pub input: FieldSpec,
    /// Required unless `drift` is a builtin, which carries its own box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default = "d_dt")]
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    #[serde(default = "d_sampling")]
    pub sampling: Sampling,
    /// Used with `--full`.
    #[serde(default = "d_full_sampling")]
    pub full_sampling: Sampling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "d_grid")]
    pub grid: Vec<usize>,
    /// Used with `--full`.
    #[serde(default = "d_full_grid")]
    pub full_grid: Vec<usize>,
    #[serde(default)]
    pub sigma: SigmaRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsConfig {
    pub x0: Region,
    pub x_r: Vec<f64>,
    #[serde(default = "d_epsilon")]
    pub epsilon_l: f64,
    /// Radius of the target neighborhood cut out of the hazard mass matrix;
    /// defaults to `epsilon_l`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    pub input_bound: f64,
    #[serde(default = "d_ridge")]
    pub ridge: f64,
    /// Midpoint cells per axis for projections and the mass matrix.
    #[serde(default = "d_quad")]
    pub quad_resolution: usize,
    #[serde(default = "d_eq_factor")]
    pub equality_tol_factor: f64,
    /// Basis functions centered within this distance of `x_r` absorb mass;
    /// defaults to `0.75 · d` with `d` the center spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorb_radius: Option<f64>,
    #[serde(default = "d_lp_tol")]
    pub lp_tol: f64,
    #[serde(default = "d_lp_iter")]
    pub lp_max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrConfig {
    /// Diagonal of `Q`; identity when empty.
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default = "d_one")]
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "d_trajectories")]
    pub n_trajectories: usize,
    #[serde(default = "d_t_final")]
    pub t_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_samples")]
    pub n_samples: usize,
    /// Defaults to `dynamics.dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

fn d_dt() -> f64 {
    0.01
}
fn d_sampling() -> Sampling {
    Sampling::Grid(vec![50, 50])
}
fn d_full_sampling() -> Sampling {
    Sampling::Grid(vec![100, 100])
}
fn d_grid() -> Vec<usize> {
    vec![25, 25]
}
fn d_full_grid() -> Vec<usize> {
    vec![50, 50]
}
fn d_epsilon() -> f64 {
    0.002
}
fn d_gamma() -> f64 {
    0.1
}
fn d_ridge() -> f64 {
    1e-8
}
fn d_quad() -> usize {
    200
}
fn d_eq_factor() -> f64 {
    1e-6
}
fn d_lp_tol() -> f64 {
    1e-9
}
fn d_lp_iter() -> usize {
    200
}
fn d_one() -> f64 {
    1.0
}
fn d_trajectories() -> usize {
    10
}
fn d_t_final() -> f64 {
    30.0
}
fn d_horizon() -> f64 {
    50.0
}
fn d_samples() -> usize {
    200
}
fn d_density_grid() -> usize {
    100
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig {
            sampling: d_sampling(),
            full_sampling: d_full_sampling(),
        }
    }
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            grid: d_grid(),
            full_grid: d_full_grid(),
            sigma: SigmaRule::default(),
        }
    }
}

impl Default for LqrConfig {
    fn default() -> Self {
        LqrConfig {
            q: Vec::new(),
            r: 1.0,
        }
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_trajectories: d_trajectories(),
            t_final: d_t_final(),
        }
    }
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            horizon: d_horizon(),
            n_samples: d_samples(),
            dt: None,
        }
    }
}

fn cfg_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        msg: msg.into(),
    }
}

/// Reads `path`, or a builtin scenario when `path` names one and no such file exists.
pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => match BUILTIN.iter().find(|(n, _)| Path::new(n) == path) {
            Some((_, t)) => t.to_string(),
            None => return Err(Error::io(path, e)),
        },
    };
    ExperimentConfig::parse(&text).map_err(|e| match e {
        Error::Config { path: p, msg } => Error::Config {
            path: format!("{}: {p}", path.display()),
            msg,
        },
        other => other,
    })
}

pub fn builtin(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| cfg_err("name", format!("no builtin `{name}`")))?;
    ExperimentConfig::parse(text)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("missing field") || msg.starts_with("unknown field"))
                .unwrap_or("")
                .to_string();
            let line = e.span().map(|s| text[..s.start].lines().count().max(1));
            let at = match line {
                Some(l) => format!("line {l}"),
                None => "document".into(),
            };
            cfg_err(
                if key.is_empty() { &at } else { &key },
                format!("{msg} ({at})"),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// sha256 of the canonical TOML form with `output_dir` cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// A seed for the named random stream, derived from the master seed.
    pub fn sub_seed(&self, label: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(label.as_bytes());
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        if let Some(d) = &self.dynamics.domain {
            return BoxDomain::new(d.lo.clone(), d.hi.clone())
                .map_err(|e| cfg_err("dynamics.domain", e.to_string()));
        }
        match &self.dynamics.drift {
            FieldSpec::Builtin(n) => Ok(builtin_field(n, "dynamics.drift")?.domain().clone()),
            _ => Err(cfg_err("dynamics.domain", "required for non-builtin drift")),
        }
    }

    pub fn drift(&self) -> Result<VectorField> {
        self.field(&self.dynamics.drift, "dynamics.drift")
    }

    pub fn input(&self) -> Result<VectorField> {
        self.field(&self.dynamics.input, "dynamics.input")
    }

    fn field(&self, spec: &FieldSpec, path: &str) -> Result<VectorField> {
        let domain = self.domain()?;
        let n = domain.dim();
        let field = match spec {
            FieldSpec::Builtin(name) => builtin_field(name, path)?.with_domain(domain),
            FieldSpec::Expr(e) => VectorField::from_expressions(path, domain, e)
                .map_err(|e| cfg_err(path, e.to_string()))?,
            FieldSpec::Constant(v) => {
                if v.len() != n {
                    return Err(cfg_err(
                        path,
                        format!("{} components for a {n}-dimensional state", v.len()),
                    ));
                }
                VectorField::constant(domain, v.clone())
            }
            FieldSpec::Linear(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(cfg_err(
                        path,
                        format!("linear field needs a {n}x{n} matrix"),
                    ));
                }
                VectorField::linear(domain, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        };
        if field.dim() != n {
            return Err(cfg_err(
                path,
                format!(
                    "field is {}-dimensional, domain is {n}-dimensional",
                    field.dim()
                ),
            ));
        }
        Ok(field)
    }

    pub fn basis_grid(&self, full: bool) -> &[usize] {
        if full {
            &self.basis.full_grid
        } else {
            &self.basis.grid
        }
    }

    pub fn sampling(&self, full: bool) -> &Sampling {
        if full {
            &self.snapshots.full_sampling
        } else {
            &self.snapshots.sampling
        }
    }

    pub fn delta(&self) -> f64 {
        self.sets.delta.unwrap_or(self.sets.epsilon_l)
    }

    pub fn mc_dt(&self) -> f64 {
        self.mc.dt.unwrap_or(self.dynamics.dt)
    }

    pub fn validate(&self) -> Result<()> {
        let domain = self.domain()?;
        let n = domain.dim();
        self.drift()?;
        self.input()?;
        let pos = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(cfg_err(path, format!("must be positive, got {v}")))
            }
        };
        pos("dynamics.dt", self.dynamics.dt)?;
        pos("synthesis.input_bound", self.synthesis.input_bound)?;
        pos("synthesis.ridge", self.synthesis.ridge)?;
        pos("synthesis.lp_tol", self.synthesis.lp_tol)?;
        pos("simulation.t_final", self.simulation.t_final)?;
        pos("mc.horizon", self.mc.horizon)?;
        pos("mc.dt", self.mc_dt())?;
        pos("lqr.r", self.lqr.r)?;
        if !(self.synthesis.gamma >= 0.0) {
            return Err(cfg_err("synthesis.gamma", "must be nonnegative"));
        }
        if !(self.sets.epsilon_l >= 0.0) || !(self.delta() >= 0.0) {
            return Err(cfg_err("sets.epsilon_l", "radii must be nonnegative"));
        }
        if self.synthesis.quad_resolution < 2 {
            return Err(cfg_err(
                "synthesis.quad_resolution",
                "need at least 2 cells per axis",
            ));
        }
        if self.mc.n_samples == 0 {
            return Err(cfg_err("mc.n_samples", "must be at least 1"));
        }
        for (path, grid) in [
            ("basis.grid", &self.basis.grid),
            ("basis.full_grid", &self.basis.full_grid),
        ] {
            if grid.len() != n || grid.iter().any(|&k| k < 2) {
                return Err(cfg_err(path, format!("need {n} entries of at least 2")));
            }
        }
        for (path, s) in [
            ("snapshots.sampling", &self.snapshots.sampling),
            ("snapshots.full_sampling", &self.snapshots.full_sampling),
        ] {
            if let Sampling::Grid(g) = s {
                if g.len() != n || g.contains(&0) {
                    return Err(cfg_err(path, format!("need {n} positive entries")));
                }
            }
        }
        if let SigmaRule::Factor(f) = self.basis.sigma {
            if !(1.0 / 3.0 - 1e-9..=0.5 + 1e-9).contains(&f) {
                return Err(cfg_err(
                    "basis.sigma",
                    format!("factor {f} violates d <= 3 sigma <= 1.5 d"),
                ));
            }
        }
        if self.sets.x_r.len() != n {
            return Err(cfg_err(
                "sets.x_r",
                format!(
                    "{} entries for a {n}-dimensional state",
                    self.sets.x_r.len()
                ),
            ));
        }
        if !domain.contains(&self.sets.x_r) {
            return Err(cfg_err("sets.x_r", "outside the domain"));
        }
        self.sets
            .x0
            .check_dim(n)
            .map_err(|e| cfg_err("sets.x0", e.to_string()))?;
        for (k, p) in self.hazard.iter().enumerate() {
            let path = format!("hazard[{k}]");
            p.region
                .check_dim(n)
                .map_err(|e| cfg_err(&format!("{path}.region"), e.to_string()))?;
            if !(p.level >= 0.0) {
                return Err(cfg_err(&format!("{path}.level"), "must be nonnegative"));
            }
        }
        if !self.lqr.q.is_empty()
            && (self.lqr.q.len() != n || self.lqr.q.iter().any(|q| !(*q >= 0.0)))
        {
            return Err(cfg_err(
                "lqr.q",
                format!("need {n} nonnegative diagonal entries"),
            ));
        }
        Ok(())
    }
}

fn builtin_field(name: &str, path: &str) -> Result<VectorField> {
    match name {
        "example1" => Ok(VectorField::example1_drift()),
        "example2" => Ok(VectorField::example2_drift()),
        "zero" => Ok(VectorField::zero(BoxDomain::new(
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
        )?)),
        other => Err(cfg_err(
            path,
            format!("unknown builtin field `{other}` (expected example1, example2 or zero)"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for (name, _) in BUILTIN {
            let c = builtin(name).unwrap();
            assert_eq!(c.synthesis.gamma, 0.1);
            assert_eq!(c.domain().unwrap().dim(), 2);
        }
    }

    #[test]
    fn missing_input_bound_names_field() {
        let text = builtin_text("example2").replace("input_bound = 1.0", "");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("input_bound"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = builtin_text("example2").replace("[synthesis]", "[synthesis]\nbogus = 1");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn semantic_errors_carry_paths() {
        let text = builtin_text("example2").replace("x_r = [0.0, 0.0]", "x_r = [0.0, 0.0, 1.0]");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("sets.x_r"), "{err}");
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = builtin("example2").unwrap();
        let h = a.hash();
        a.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), h);
        a.seed += 1;
        assert_ne!(a.hash(), h);
        assert_ne!(a.sub_seed("mc"), a.sub_seed("trajectories"));
    }

    #[test]
    fn round_trip() {
        let a = builtin("example1").unwrap();
        let b = ExperimentConfig::parse(&a.to_toml()).unwrap();
        assert_eq!(a, b);
    }

    fn builtin_text(name: &str) -> String {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .unwrap()
            .1
            .to_string()
    }
}
