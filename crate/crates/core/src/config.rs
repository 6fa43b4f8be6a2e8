//! Run configuration: a TOML file with one section per concern, environment
//! overrides of the form `KSREPEL_<SECTION>_<KEY>`, and validation that
//! reports every problem at once.
//!
//! ```toml
//! [run]
//! seed = 0                 # drives every random draw
//!
//! [domain]
//! dim = 2
//! extents = [1.0, 1.0]     # default: unit box
//! cells = [32, 32]
//!
//! [params]
//! chi = 1.0                # repulsion strength
//! gamma = 1.0              # time constant of the c-equation
//! eps = 0.0                # volume-filling regularisation, 0 or (0, 1/max rho_I]
//! # eps_sweep = [0.4, 0.2, 0.1]   # default: zeta0, zeta0/2, zeta0/4
//!
//! [initial]
//! preset = "cosine"        # constant | cosine | random_smooth | checkpoint
//! amplitude = 0.1
//!
//! [scheme]
//! dt = 1e-3
//! dt_adapt = true
//! drift = "central"        # central | upwind
//! linear_solver = "spectral"   # spectral | conjugate_gradient
//!
//! [probes]
//! t_end = 1.0
//! every = 0.01
//!
//! [output]
//! dir = "out"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{zeta0, SchemeConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::initial::InitialSpec;
use crate::linearized::{ConvolutionParams, SemigroupItem};
use crate::random::FieldGenerator;

pub const ENV_PREFIX: &str = "KSREPEL_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub dim: usize,
    pub extents: Option<Vec<f64>>,
    pub cells: Vec<usize>,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            dim: 1,
            extents: None,
            cells: vec![64],
        }
    }
}

impl DomainSection {
    pub fn grid(&self) -> Result<Grid> {
        let ext = self.extents.clone().unwrap_or_else(|| vec![1.0; self.dim]);
        Grid::new(self.dim, &ext, &self.cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub chi: f64,
    pub gamma: f64,
    pub eps: f64,
    pub eps_sweep: Option<Vec<f64>>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            chi: 1.0,
            gamma: 1.0,
            eps: 0.0,
            eps_sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbesSection {
    pub t_end: f64,
    pub every: f64,
    pub energy: bool,
}

impl Default for ProbesSection {
    fn default() -> Self {
        ProbesSection {
            t_end: 1.0,
            every: 0.01,
            energy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub plots: bool,
    pub checkpoint: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            plots: true,
            checkpoint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupRequest {
    pub item: SemigroupItem,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizedSection {
    /// Coupling `a = 1 − εM` of the linearized block; `None` uses the run's ε.
    pub a: Option<f64>,
    pub samples: usize,
    pub generator: FieldGenerator,
    pub times: usize,
    pub t_max: f64,
    pub semigroup: Vec<SemigroupRequest>,
    pub semigroup_samples: usize,
    pub convolution: Vec<ConvolutionParams>,
    pub convolution_times: Vec<f64>,
}

impl Default for LinearizedSection {
    fn default() -> Self {
        LinearizedSection {
            a: None,
            samples: 20,
            generator: FieldGenerator::trig(3, 1.0),
            times: 50,
            t_max: 5.0,
            semigroup: vec![
                SemigroupRequest { item: SemigroupItem::I, p: f64::INFINITY, q: 2.0 },
                SemigroupRequest { item: SemigroupItem::Ii, p: 4.0, q: 2.0 },
                SemigroupRequest { item: SemigroupItem::Iii, p: 4.0, q: 2.0 },
                SemigroupRequest { item: SemigroupItem::Iv, p: 4.0, q: 2.0 },
            ],
            semigroup_samples: 50,
            convolution: Vec::new(),
            convolution_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarySection {
    pub guesses: usize,
    pub generator: FieldGenerator,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StationarySection {
    fn default() -> Self {
        StationarySection {
            guesses: 10,
            generator: FieldGenerator::trig(2, 1.0),
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IneqSection {
    pub samples: usize,
    pub generator: FieldGenerator,
    /// Power exponents `a` of `h(s) = s^a` checked besides `h(s) = s`.
    pub powers: Vec<f64>,
    /// Also evaluate on the dyadic refinement (identity orders, constant
    /// stability).
    pub refine: bool,
}

impl Default for IneqSection {
    fn default() -> Self {
        IneqSection {
            samples: 100,
            generator: FieldGenerator::trig(1, 1.0),
            powers: vec![0.5],
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub with_zero: bool,
    pub every: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            with_zero: true,
            every: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Run directory to summarise; defaults to the output directory.
    pub input: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub probes: ProbesSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub linearized: LinearizedSection,
    #[serde(default)]
    pub stationary: StationarySection,
    #[serde(default)]
    pub ineq: IneqSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub report: ReportSection,
}

const SECTIONS: [&str; 12] = [
    "run", "domain", "params", "initial", "scheme", "probes", "output", "linearized",
    "stationary", "ineq", "sweep", "report",
];

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `KSREPEL_<SECTION>_<KEY>=value` overrides to a parsed document.
/// Variables naming an unknown section are reported, not ignored.
pub fn apply_env<I>(doc: &mut toml::Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut errs = Vec::new();
    let mut sorted: BTreeMap<String, String> = BTreeMap::new();
    for (k, v) in vars {
        if let Some(rest) = k.strip_prefix(ENV_PREFIX) {
            sorted.insert(rest.to_ascii_lowercase(), v);
        }
    }
    for (rest, v) in sorted {
        let Some((section, key)) = rest.split_once('_') else {
            errs.push(format!("{ENV_PREFIX}{}: expected {ENV_PREFIX}<SECTION>_<KEY>", rest.to_uppercase()));
            continue;
        };
        if !SECTIONS.contains(&section) {
            errs.push(format!("{ENV_PREFIX}{}: unknown section `{section}`", rest.to_uppercase()));
            continue;
        }
        let entry = doc
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry.as_table_mut() {
            Some(t) => {
                t.insert(key.to_string(), parse_value(&v));
            }
            None => errs.push(format!("`{section}` is not a table")),
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

impl RunConfig {
    /// Parses TOML text with the given environment overrides applied.
    pub fn from_toml_with_env<I>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(vec![format!("TOML syntax: {}", e.message())]))?;
        apply_env(&mut doc, vars)?;
        toml::Value::Table(doc)
            .try_into::<RunConfig>()
            .map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_env(text, std::iter::empty())
    }

    /// Reads a config file, applying overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_env(&text, std::env::vars())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(crate::manifest::sha256_hex(&serde_json::to_vec(self)?))
    }

    /// The ε values of an ε-sweep: `eps_sweep` if given, else `ζ0, ζ0/2, ζ0/4`.
    pub fn eps_family(&self, zeta0: f64) -> Vec<f64> {
        self.params
            .eps_sweep
            .clone()
            .unwrap_or_else(|| crate::sweep::halving_family(zeta0, 3))
    }

    /// Every problem with the configuration. Initial data are built (unless
    /// loaded from a checkpoint) to check ε against `1/max ρ_I`.
    pub fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let d = &self.domain;
        if let Some(e) = &d.extents {
            if e.len() != d.dim {
                errs.push(format!("domain.extents has {} entries for dim = {}", e.len(), d.dim));
            }
        }
        let grid = match d.grid() {
            Ok(g) => Some(g),
            Err(e) => {
                errs.push(format!("domain: {e}"));
                None
            }
        };
        let p = &self.params;
        if !(p.chi > 0.0 && p.chi.is_finite()) {
            errs.push(format!("params.chi must be positive, got {}", p.chi));
        }
        if !(p.gamma > 0.0 && p.gamma.is_finite()) {
            errs.push(format!("params.gamma must be positive, got {}", p.gamma));
        }
        if !(p.eps >= 0.0 && p.eps.is_finite()) {
            errs.push(format!("params.eps must be non-negative, got {}", p.eps));
        }
        if let Some(list) = &p.eps_sweep {
            if list.len() < 2 {
                errs.push("params.eps_sweep needs at least two values".into());
            }
            if list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                errs.push("params.eps_sweep entries must be positive".into());
            }
        }
        errs.extend(self.initial.problems(d.dim));
        if let (Some(g), true) = (grid, errs.is_empty()) {
            if !matches!(self.initial, InitialSpec::Checkpoint { .. }) {
                match self.initial.build(&g, self.run.seed) {
                    Ok(s) => {
                        let z = zeta0(&s.rho);
                        if p.eps > z * (1.0 + 1e-12) {
                            errs.push(format!(
                                "params.eps = {} is outside the admissible range (0, zeta0] with zeta0 = 1/max(rho_I) = {z}",
                                p.eps
                            ));
                        }
                        if let Some(list) = &p.eps_sweep {
                            if list.iter().any(|&e| e > z * (1.0 + 1e-12)) {
                                errs.push(format!(
                                    "params.eps_sweep leaves the admissible range (0, zeta0] with zeta0 = {z}"
                                ));
                            }
                        }
                    }
                    Err(Error::Config(list)) => errs.extend(list),
                    Err(e) => errs.push(format!("initial: {e}")),
                }
            }
        }
        if let Err(Error::Config(list)) = self.scheme.validate() {
            errs.extend(list.into_iter().map(|m| format!("scheme.{m}")));
        }
        let pr = &self.probes;
        if !(pr.t_end > 0.0 && pr.t_end.is_finite()) {
            errs.push(format!("probes.t_end must be positive, got {}", pr.t_end));
        }
        if !(pr.every > 0.0 && pr.every <= pr.t_end) {
            errs.push(format!("probes.every must lie in (0, t_end], got {}", pr.every));
        }
        if self.output.dir.is_empty() {
            errs.push("output.dir must not be empty".into());
        }
        let l = &self.linearized;
        if let Some(a) = l.a {
            if !(0.5..=1.0).contains(&a) {
                errs.push(format!("linearized.a must lie in [1/2, 1], got {a}"));
            }
        }
        if l.samples == 0 || l.times == 0 || l.semigroup_samples == 0 {
            errs.push("linearized.samples, times and semigroup_samples must be positive".into());
        }
        if !(l.t_max > 0.0) {
            errs.push(format!("linearized.t_max must be positive, got {}", l.t_max));
        }
        for r in &l.semigroup {
            if let Err(e) = r.item.validate(r.p, r.q) {
                errs.push(format!("linearized.semigroup: {e}"));
            }
        }
        for c in &l.convolution {
            if let Err(e) = c.validate() {
                errs.push(format!("linearized.convolution: {e}"));
            }
        }
        if l.convolution_times.iter().any(|&t| !(t > 0.0)) {
            errs.push("linearized.convolution_times must be positive".into());
        }
        let s = &self.stationary;
        if s.guesses == 0 || s.max_iter == 0 {
            errs.push("stationary.guesses and max_iter must be positive".into());
        }
        if !(s.tol > 0.0) {
            errs.push(format!("stationary.tol must be positive, got {}", s.tol));
        }
        if self.ineq.samples == 0 {
            errs.push("ineq.samples must be positive".into());
        }
        if self.ineq.powers.iter().any(|&a| !(a > 0.0)) {
            errs.push("ineq.powers must be positive".into());
        }
        if !(self.sweep.every > 0.0) {
            errs.push(format!("sweep.every must be positive, got {}", self.sweep.every));
        }
        errs
    }

    /// Resolution problems of the random-field generator in `section`
    /// (`linearized`, `stationary` or `ineq`); other names yield nothing.
    pub fn generator_problems(&self, section: &str) -> Vec<String> {
        let gen = match section {
            "linearized" => &self.linearized.generator,
            "stationary" => &self.stationary.generator,
            "ineq" => &self.ineq.generator,
            _ => return Vec::new(),
        };
        match self.domain.grid().and_then(|g| gen.validate(&g)) {
            Ok(()) => Vec::new(),
            Err(Error::InvalidGrid(_)) => Vec::new(),
            Err(e) => vec![format!("{section}.generator: {e}")],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.problems();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "[domain]\ndim = 2\ncells = [16, 16]\n[probes]\nt_end = 0.1\nevery = 0.01\n";

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let c = RunConfig::from_toml(BASIC).unwrap();
        assert_eq!(c.params, ParamsSection::default());
        assert_eq!(c.scheme, SchemeConfig::default());
        c.validate().unwrap();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn env_overrides_apply() {
        let c = RunConfig::from_toml_with_env(
            BASIC,
            env(&[
                ("KSREPEL_SCHEME_DT", "5e-4"),
                ("KSREPEL_SCHEME_DRIFT", "upwind"),
                ("KSREPEL_RUN_SEED", "17"),
                ("OTHER_VAR", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(c.scheme.dt, 5e-4);
        assert_eq!(c.scheme.drift, crate::dynamics::Drift::Upwind);
        assert_eq!(c.run.seed, 17);
        let err = RunConfig::from_toml_with_env(BASIC, env(&[("KSREPEL_BOGUS_X", "1")])).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[params]\nkappa = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[scheme]\nstep = 1.0\n").is_err());
    }

    #[test]
    fn all_problems_reported_together() {
        let text = "[domain]\ndim = 2\ncells = [16, 16]\n[params]\nchi = -1\ngamma = 0\n[probes]\nt_end = -1\n[scheme]\ndt = 0\n";
        let errs = RunConfig::from_toml(text).unwrap().problems();
        assert!(errs.len() >= 5, "{errs:?}");
    }

    #[test]
    fn eps_above_zeta0_names_the_range() {
        let text = format!("{BASIC}[params]\neps = 0.95\n[initial]\npreset = \"cosine\"\namplitude = 0.2\n");
        let errs = RunConfig::from_toml(&text).unwrap().problems();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("admissible range (0, zeta0]"), "{errs:?}");
        let ok = format!("{BASIC}[params]\neps = 0.8\n");
        RunConfig::from_toml(&ok).unwrap().validate().unwrap();
    }

    #[test]
    fn generator_checked_only_for_its_section() {
        let c = RunConfig::from_toml("[domain]\ndim = 1\ncells = [8]\n").unwrap();
        c.validate().unwrap();
        assert!(c.generator_problems("simulate").is_empty());
        assert!(c.generator_problems("ineq").is_empty());
        assert_eq!(c.generator_problems("linearized").len(), 1);
    }

    #[test]
    fn bad_grid_reported() {
        let errs = RunConfig::from_toml("[domain]\ndim = 4\ncells = [8]\n").unwrap().problems();
        assert!(errs.iter().any(|e| e.starts_with("domain")));
    }
}
