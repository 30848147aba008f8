use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agents::{AgentKind, BudgetTable};
use crate::dataset::SynthConfig;
use crate::error::{Error, Result};
use crate::itrs::{FeedbackMode, ShapingParams, DEFAULT_DELTA};
use crate::perception::{ClassifierConfig, PerceptionConfig};
use crate::pomdp::{DEFAULT_FAIL_PROB, DEFAULT_GAMMA};
use crate::solver::SolverConfig;

/// Default shaping weights for the ITRS agent.
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_BETA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    /// Size of the attribute set queries are drawn from.
    pub attributes: usize,
    /// Attributes per query.
    pub query_size: usize,
    pub batches: usize,
    /// Training trials per batch; defaults to 40 for single-attribute and
    /// 50 for larger queries.
    pub batch_size: Option<usize>,
    pub eval_trials: usize,
    pub feedback: FeedbackSetting,
    pub delta: u64,
    pub agents: Vec<String>,
    pub alpha: f64,
    pub beta: f64,
    /// Random Legal reporting deadline per query size, in cost-seconds.
    pub budgets: Vec<f64>,
    pub sweep: SweepSection,
    pub solver: SolverSection,
    pub perception: PerceptionSection,
    pub model: ModelSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            dataset: DatasetSection::default(),
            attributes: 10,
            query_size: 1,
            batches: 10,
            batch_size: None,
            eval_trials: 1000,
            feedback: FeedbackSetting::FullLabel,
            delta: DEFAULT_DELTA,
            agents: vec!["itrs".into(), "random_legal".into(), "repeated_assembly".into()],
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            budgets: BudgetTable::default().0,
            sweep: SweepSection::default(),
            solver: SolverSection::default(),
            perception: PerceptionSection::default(),
            model: ModelSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSetting {
    FullLabel,
    Strict,
}

impl From<FeedbackSetting> for FeedbackMode {
    fn from(s: FeedbackSetting) -> Self {
        match s {
            FeedbackSetting::FullLabel => FeedbackMode::FullLabel,
            FeedbackSetting::Strict => FeedbackMode::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Directory with features.csv, labels.csv and gamma.csv. When absent a
    /// synthetic dataset is generated.
    pub path: Option<PathBuf>,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub objects: usize,
    pub attributes: usize,
    pub trials: usize,
    /// Separation of informative (context, attribute) pairs, in [0, 1].
    pub level: f64,
    /// Fraction of (behavior, attribute) pairs that are informative; all
    /// are when absent.
    pub informative_fraction: Option<f64>,
    pub feature_dims: usize,
    pub noise: f64,
    pub spread: f64,
    /// Defaults to the experiment seed.
    pub seed: Option<u64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let base = SynthConfig::uniform(30, 10, 1.0, 0);
        SynthSection {
            objects: base.n_objects,
            attributes: base.n_attributes,
            trials: base.trials_per_behavior,
            level: 1.0,
            informative_fraction: None,
            feature_dims: base.feature_dims[0],
            noise: base.noise_scale,
            spread: base.object_spread,
            seed: None,
        }
    }
}

impl SynthSection {
    pub fn to_config(&self, experiment_seed: u64) -> SynthConfig {
        let seed = self.seed.unwrap_or(experiment_seed);
        let base = match self.informative_fraction {
            Some(f) => SynthConfig::sparse(self.objects, self.attributes, self.level, f, seed),
            None => SynthConfig::uniform(self.objects, self.attributes, self.level, seed),
        };
        SynthConfig {
            trials_per_behavior: self.trials,
            feature_dims: vec![self.feature_dims; base.gamma.len()],
            noise_scale: self.noise,
            object_spread: self.spread,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub precision: f64,
    pub max_iter: usize,
    pub max_points: usize,
    pub expansions: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            precision: d.precision,
            max_iter: d.max_iter,
            max_points: d.max_points,
            expansions: d.expansions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionSection {
    pub folds: usize,
    pub iterations: usize,
    pub step: f64,
    pub l2: f64,
}

impl Default for PerceptionSection {
    fn default() -> Self {
        let d = PerceptionConfig::default();
        PerceptionSection {
            folds: d.folds,
            iterations: d.classifier.iterations,
            step: d.classifier.step,
            l2: d.classifier.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub gamma: f64,
    pub fail_prob: f64,
    /// Optional `action,cost_seconds` file.
    pub costs: Option<PathBuf>,
    /// Optional `from_x,action,to_x,prob` file replacing the default graph.
    pub transitions: Option<PathBuf>,
    /// Inline cost overrides by behavior name.
    pub cost: BTreeMap<String, f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            gamma: DEFAULT_GAMMA,
            fail_prob: DEFAULT_FAIL_PROB,
            costs: None,
            transitions: None,
            cost: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write confusions_<batch>.csv.
    pub confusions: bool,
    /// Write policy_<batch>.csv.
    pub policies: bool,
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            confusions: false,
            policies: false,
            plots: true,
        }
    }
}

impl ExperimentConfig {
    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(if self.query_size <= 1 { 40 } else { 50 })
    }

    pub fn shaping(&self) -> Result<ShapingParams> {
        ShapingParams::new(self.alpha, self.beta)
    }

    pub fn agent_kinds(&self) -> Result<Vec<AgentKind>> {
        let mut out = Vec::new();
        for name in &self.agents {
            let kind = match name.as_str() {
                "itrs" => AgentKind::Itrs(self.shaping()?),
                "random_legal" => AgentKind::RandomLegal(BudgetTable(self.budgets.clone())),
                "repeated_assembly" => AgentKind::RepeatedAssembly,
                other => return Err(Error::Config(format!("unknown agent {other:?}"))),
            };
            if out.iter().any(|k: &AgentKind| k.tag() == kind.tag()) {
                return Err(Error::Config(format!("agent {name} listed twice")));
            }
            out.push(kind);
        }
        Ok(out)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            precision: self.solver.precision,
            max_iter: self.solver.max_iter,
            max_points: self.solver.max_points,
            expansions: self.solver.expansions,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }

    pub fn perception_config(&self) -> PerceptionConfig {
        PerceptionConfig {
            folds: self.perception.folds,
            fold_seed: self.seed,
            classifier: ClassifierConfig {
                iterations: self.perception.iterations,
                step: self.perception.step,
                l2: self.perception.l2,
            },
        }
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.attributes == 0 {
            return fail("attributes must be at least 1".into());
        }
        if !(1..=3).contains(&self.query_size) {
            return fail(format!("query_size {} outside [1, 3]", self.query_size));
        }
        if self.query_size > self.attributes {
            return fail("query_size exceeds the attribute count".into());
        }
        if self.batch_size() == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.eval_trials == 0 {
            return fail("eval_trials must be at least 1".into());
        }
        if self.agents.is_empty() {
            return fail("no agents configured".into());
        }
        if self.delta == 0 {
            return fail("delta must be positive".into());
        }
        let kinds = self.agent_kinds()?;
        if kinds.iter().any(|k| matches!(k, AgentKind::RandomLegal(_))) && self.budgets.len() < self.query_size {
            return fail(format!("budgets must cover {}-attribute queries", self.query_size));
        }
        if !(self.model.gamma > 0.0 && self.model.gamma < 1.0) {
            return fail(format!("gamma {} outside (0, 1)", self.model.gamma));
        }
        if !(0.0..1.0).contains(&self.model.fail_prob) {
            return fail(format!("fail_prob {} outside [0, 1)", self.model.fail_prob));
        }
        if self.perception.folds < 2 {
            return fail("perception.folds must be at least 2".into());
        }
        if self.dataset.path.is_none() {
            self.dataset.synth.to_config(self.seed).validate()?;
        }
        Ok(())
    }

    /// Checks the sweep grids on top of [`validate`](Self::validate).
    pub fn validate_sweep(&self) -> Result<()> {
        self.validate()?;
        if self.sweep.alpha.is_empty() || self.sweep.beta.is_empty() {
            return Err(Error::Config("sweep.alpha and sweep.beta must be non-empty".into()));
        }
        for &v in self.sweep.alpha.iter().chain(&self.sweep.beta) {
            ShapingParams::new(v, 0.0)?;
        }
        Ok(())
    }
}

/// Parses a config document after applying `key = value` overrides, where
/// keys are dotted paths. Relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, overrides: &[(String, String)], base_dir: &Path) -> Result<ExperimentConfig> {
    let mut root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
    for (key, raw) in overrides {
        set_dotted(&mut root, key, parse_override(raw))?;
    }
    let mut cfg: ExperimentConfig = toml::Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
    let resolve = |p: &mut Option<PathBuf>| {
        if let Some(path) = p {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
    };
    resolve(&mut cfg.dataset.path);
    resolve(&mut cfg.model.costs);
    resolve(&mut cfg.model.transitions);
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, overrides, base)
}

/// Interprets an override as a TOML value when it parses as one, else as a
/// bare string.
fn parse_override(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Splits trailing `--dotted.key value` / `--dotted.key=value` arguments.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            return Err(Error::Config(format!("unexpected argument {a:?}")));
        };
        match body.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("override --{body} needs a value")))?;
                out.push((body.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = ExperimentConfig::default();
        assert_eq!(c.attributes, 10);
        assert_eq!(c.batch_size(), 40);
        assert_eq!(c.eval_trials, 1000);
        let c2 = ExperimentConfig { query_size: 2, ..c };
        assert_eq!(c2.batch_size(), 50);
    }

    #[test]
    fn dotted_overrides_apply_before_parsing() {
        let text = "seed = 3\n[solver]\nprecision = 0.01\n";
        let ov = parse_override_args(&[
            "--solver.max_iter".into(),
            "20".into(),
            "--dataset.synth.level=0.5".into(),
            "--output.dir".into(),
            "results".into(),
        ])
        .unwrap();
        let c = parse_config(text, &ov, Path::new("/tmp")).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.solver.precision, 0.01);
        assert_eq!(c.solver.max_iter, 20);
        assert_eq!(c.dataset.synth.level, 0.5);
        assert_eq!(c.output.dir, PathBuf::from("results"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("sead = 1\n", &[], Path::new(".")).is_err());
        assert!(parse_config("", &[("solver.nope".into(), "1".into())], Path::new(".")).is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let bad = ExperimentConfig {
            eval_trials: 0,
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            agents: vec!["greedy".into()],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.dataset.synth.attributes = 10;
        assert!(c.validate().is_ok());
        assert!(c.validate_sweep().is_err());
    }
}
