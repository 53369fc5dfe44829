//! Scenario descriptions and the runner that turns them into reports.

use serde::{Deserialize, Serialize};

use super::{
    achievability_diagnostics, generalization_experiment, report_from, resolve_entropy, BoundReport, EntropySource,
    EntropySourceKind, GeneralizationConfig, HarnessError, Mode,
};
use crate::estimators::EstimatorParams;
use crate::gaussian_oracle::{BayesLinearModel, LinearGaussianModel, ModelSpec};
use crate::maxent::{MaxEntDistribution, PNorm};
use crate::predictors::{run_online, PredictorSpec};
use crate::processes::{default_burn_in, gen_ar_with_burn_in, gen_lgssm, mask_labels, InputProcess, MaskSpec, Trajectory};
use crate::rng::derive_seed;

/// Label-missing probability used by `semi` when no mask is configured.
pub const DEFAULT_MASK_RATE: f64 = 0.5;

/// Process to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum ProcessSpec {
    Ar {
        coeffs: Vec<f64>,
        innovation: MaxEntDistribution,
        #[serde(default)]
        burn_in: Option<usize>,
    },
    Lgssm {
        model: ModelSpec,
        #[serde(default)]
        input: InputProcess,
    },
}

impl ProcessSpec {
    pub fn generate(&self, length: usize, seed: u64) -> Result<Trajectory, HarnessError> {
        match self {
            ProcessSpec::Ar { coeffs, innovation, burn_in } => {
                // Deserialization does not validate the law.
                let law = MaxEntDistribution::new(innovation.p(), innovation.mu())
                    .map_err(|e| HarnessError::Config(format!("innovation: {e}")))?;
                let burn_in = burn_in.unwrap_or_else(|| default_burn_in(coeffs.len()));
                Ok(gen_ar_with_burn_in(coeffs, &law, length, seed, burn_in)?)
            }
            ProcessSpec::Lgssm { model, input } => {
                let model = LinearGaussianModel::try_from(model)?;
                Ok(gen_lgssm(&model, input, length, seed)?)
            }
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Supervised]
}

/// One scenario: a process, predictors, norms and information sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub process: Option<ProcessSpec>,
    /// Kept unparsed so a bad entry fails only its own reports.
    #[serde(default)]
    pub predictors: Vec<serde_json::Value>,
    pub p: Vec<PNorm>,
    #[serde(default)]
    pub length: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    /// Labels hidden in `semi` mode; defaults to a rate of [`DEFAULT_MASK_RATE`].
    #[serde(default)]
    pub mask: Option<MaskSpec>,
    #[serde(default)]
    pub entropy: EntropySourceKind,
    #[serde(default)]
    pub estimator: EstimatorParams,
    /// Attach achievability diagnostics (costly: k-NN estimates with permutation floors).
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub generalization: Option<GeneralizationConfig>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(format!("scenario {:?}: {m}", self.name)));
        if self.p.is_empty() {
            return bad("at least one p is required");
        }
        if self.process.is_none() && self.generalization.is_none() {
            return bad("needs a process or a generalization section");
        }
        if self.process.is_some() && self.length == 0 {
            return bad("length must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if let Some(g) = &self.generalization {
            if g.trials == 0 {
                return bad("generalization needs at least one trial");
            }
        }
        Ok(())
    }

    fn source(&self) -> EntropySource {
        match self.entropy {
            EntropySourceKind::Oracle => EntropySource::Oracle,
            EntropySourceKind::Estimated => EntropySource::Estimated(self.estimator),
        }
    }
}

/// A file of scenarios (`[[scenario]]` tables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(rename = "scenario", default)]
    pub scenarios: Vec<ScenarioConfig>,
}

/// A report that could not be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub scenario: String,
    pub seed: u64,
    pub predictor: Option<String>,
    pub mode: Option<Mode>,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub reports: Vec<BoundReport>,
    pub failures: Vec<Failure>,
}

impl ScenarioOutcome {
    fn fail(&mut self, cfg: &ScenarioConfig, seed: u64, predictor: Option<String>, mode: Option<Mode>, error: impl ToString) {
        self.failures.push(Failure { scenario: cfg.name.clone(), seed, predictor, mode, error: error.to_string() });
    }

    pub fn extend(&mut self, other: ScenarioOutcome) {
        self.reports.extend(other.reports);
        self.failures.extend(other.failures);
    }
}

fn predictor_label(v: &serde_json::Value) -> String {
    v.get("kind").and_then(|k| k.as_str()).map_or_else(|| v.to_string(), str::to_string)
}

/// Reports for every (mode, predictor, p) on an existing trajectory.
pub fn run_trajectory(cfg: &ScenarioConfig, t: &Trajectory) -> ScenarioOutcome {
    let mut out = ScenarioOutcome::default();
    let seed = t.seed;
    let source = cfg.source();
    for &mode in &cfg.modes {
        let masked = match mode {
            Mode::Supervised => Ok(t.clone()),
            Mode::Semi => {
                let spec = cfg.mask.clone().unwrap_or(MaskSpec::Rate(DEFAULT_MASK_RATE));
                mask_labels(t, &spec, derive_seed(seed, "semi-mask"))
            }
            Mode::Unsupervised => mask_labels(t, &MaskSpec::Rate(1.0), seed),
            Mode::Generalization => continue,
        };
        let mt = match masked {
            Ok(mt) => mt,
            Err(e) => {
                out.fail(cfg, seed, None, Some(mode), e);
                continue;
            }
        };
        if cfg.predictors.is_empty() {
            continue;
        }
        let entropy = match resolve_entropy(&mt, &source) {
            Ok(h) => h,
            Err(e) => {
                out.fail(cfg, seed, None, Some(mode), e);
                continue;
            }
        };
        for raw in &cfg.predictors {
            let label = predictor_label(raw);
            let result = (|| -> Result<Vec<BoundReport>, HarnessError> {
                let spec: PredictorSpec =
                    serde_json::from_value(raw.clone()).map_err(|e| HarnessError::Config(format!("predictor {label}: {e}")))?;
                let mut predictor = spec.build(&mt)?;
                let trace = run_online(&mt, predictor.as_mut())?;
                let diagnostics = if cfg.diagnostics { Some(achievability_diagnostics(&mt, &trace, &cfg.estimator)?) } else { None };
                cfg.p
                    .iter()
                    .map(|&p| {
                        let mut r = report_from(&mt, &trace, p, &entropy)?;
                        r.scenario = cfg.name.clone();
                        r.mode = mode;
                        if let Some(d) = &diagnostics {
                            r = r.with_diagnostics(d.clone(), &trace.innovations);
                        }
                        Ok(r)
                    })
                    .collect()
            })();
            match result {
                Ok(rs) => out.reports.extend(rs),
                Err(e) => out.fail(cfg, seed, Some(label), Some(mode), e),
            }
        }
    }
    out
}

/// Runs a scenario for every seed. Configuration errors abort; anything that
/// goes wrong inside one report is recorded as a [`Failure`] instead. Output
/// order is fixed by (seed, mode, predictor, p) as listed in the config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, HarnessError> {
    cfg.validate()?;
    let mut out = ScenarioOutcome::default();
    for &seed in &cfg.seeds {
        if let Some(process) = &cfg.process {
            match process.generate(cfg.length, seed) {
                Ok(t) => out.extend(run_trajectory(cfg, &t)),
                Err(e) => out.fail(cfg, seed, None, None, e),
            }
        }
        if let Some(g) = &cfg.generalization {
            let model = match BayesLinearModel::isotropic(g.dim, g.weight_var, g.noise_var) {
                Ok(m) => m,
                Err(e) => {
                    out.fail(cfg, seed, None, Some(Mode::Generalization), e);
                    continue;
                }
            };
            for learner in &g.learners {
                for &p in &cfg.p {
                    match generalization_experiment(&model, g.train_size, *learner, g.trials, p, seed) {
                        Ok(mut r) => {
                            r.scenario = cfg.name.clone();
                            out.reports.push(r);
                        }
                        Err(e) => out.fail(cfg, seed, Some(learner.tag()), Some(Mode::Generalization), e),
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ScenarioConfig {
        serde_json::from_str(json).unwrap()
    }

    const AR: &str = r#"{"generator":"ar","coeffs":[0.9],"innovation":{"p":2,"mu":1.0}}"#;

    #[test]
    fn empty_predictor_list_gives_no_reports() {
        let c = cfg(&format!(r#"{{"name":"e","process":{AR},"p":[2],"length":100}}"#));
        let out = run_scenario(&c).unwrap();
        assert!(out.reports.is_empty() && out.failures.is_empty());
    }

    #[test]
    fn unknown_predictor_fails_alone() {
        let c = cfg(&format!(
            r#"{{"name":"u","process":{AR},"p":[2,"inf"],"length":300,"predictors":[{{"kind":"oracle"}},{{"kind":"zero"}}]}}"#
        ));
        let out = run_scenario(&c).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].predictor.as_deref(), Some("oracle"));
    }

    #[test]
    fn config_errors_abort() {
        assert!(run_scenario(&cfg(&format!(r#"{{"name":"x","process":{AR},"p":[],"length":10}}"#))).is_err());
        assert!(run_scenario(&cfg(r#"{"name":"x","p":[2],"length":10}"#)).is_err());
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"name":"x","p":[2],"lenght":10}"#).is_err());
    }

    #[test]
    fn unstable_process_is_a_failure_entry() {
        let c = cfg(r#"{"name":"x","process":{"generator":"ar","coeffs":[1.2],"innovation":{"p":2,"mu":1.0}},"p":[2],"length":10,"predictors":[{"kind":"zero"}]}"#);
        let out = run_scenario(&c).unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(out.failures.len(), 1);
    }

    #[test]
    fn seeds_give_same_structure() {
        let c = cfg(&format!(
            r#"{{"name":"s","process":{AR},"p":[1,2],"length":500,"seeds":[1,2],"modes":["supervised","semi","unsupervised"],"predictors":[{{"kind":"ar_plugin"}},{{"kind":"zero"}}]}}"#
        ));
        let out = run_scenario(&c).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.reports.len(), 2 * 3 * 2 * 2);
        let (a, b) = out.reports.split_at(12);
        for (x, y) in a.iter().zip(b) {
            assert_eq!((x.mode, &x.predictor, x.p), (y.mode, &y.predictor, y.p));
            assert_ne!(x.empirical_lp, y.empirical_lp);
        }
        assert_eq!(run_scenario(&c).unwrap(), out);
    }
}
