use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::AdvConfig;
use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::metrics::DEFAULT_NEIGHBORS;
use crate::tuning::{ParamRange, SearchSpace, DEFAULT_BUDGET, DEFAULT_FOLDS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Orig,
    Faireg,
    Baln,
    Fairegh,
    Adv,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Orig, Method::Faireg, Method::Baln, Method::Fairegh, Method::Adv];

    pub fn name(self) -> &'static str {
        match self {
            Method::Orig => "orig",
            Method::Faireg => "faireg",
            Method::Baln => "baln",
            Method::Fairegh => "fairegh",
            Method::Adv => "adv",
        }
    }

    pub fn normalizes_labels(self) -> bool {
        matches!(self, Method::Faireg | Method::Fairegh)
    }

    pub fn weights_samples(self) -> bool {
        matches!(self, Method::Baln | Method::Fairegh)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// The mitigation setups: every mitigating method against attribute `a`,
/// attribute `b` and their cross.
pub fn setup_grid(a: &str, b: &str) -> Vec<(Method, Vec<String>)> {
    let selections = [vec![a.to_string()], vec![b.to_string()], vec![a.to_string(), b.to_string()]];
    [Method::Faireg, Method::Baln, Method::Fairegh, Method::Adv]
        .into_iter()
        .flat_map(|m| selections.iter().map(move |s| (m, s.clone())))
        .collect()
}

/// Random linear embeddings of the synthetic features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewSpec {
    pub count: usize,
    pub width: usize,
    pub noise_std: f64,
}

impl Default for ViewSpec {
    fn default() -> Self {
        ViewSpec {
            count: 2,
            width: 16,
            noise_std: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvView {
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        spec: SynthSpec,
        #[serde(default)]
        views: ViewSpec,
    },
    /// One file per view; ids, labels and protected columns must agree.
    Csv { views: Vec<CsvView> },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            spec: SynthSpec::default(),
            views: ViewSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub k: usize,
    pub budget: usize,
    pub c_range: [f64; 2],
    pub adv_range: [f64; 2],
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            k: DEFAULT_FOLDS,
            budget: DEFAULT_BUDGET,
            c_range: [1e-7, 1e2],
            adv_range: [1e-7, 1e-2],
        }
    }
}

impl TuningConfig {
    pub fn kelm_space(&self, seed: u64) -> SearchSpace {
        SearchSpace {
            params: vec![ParamRange::log("c", self.c_range[0], self.c_range[1])],
            budget: self.budget,
            seed,
        }
    }

    pub fn adv_space(&self, seed: u64) -> SearchSpace {
        let [low, high] = self.adv_range;
        SearchSpace {
            params: ["learning_rate", "lambda1", "lambda2"]
                .iter()
                .map(|n| ParamRange::log(n, low, high))
                .collect(),
            budget: self.budget,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub neighbors: usize,
    /// Attributes to evaluate; a name joined with `&` is a cross. Defaults to
    /// every attribute plus the cross of the first two.
    pub attributes: Option<Vec<String>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            neighbors: DEFAULT_NEIGHBORS,
            attributes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub method: Method,
    /// One attribute, or two to use their cross.
    pub protected: Vec<String>,
    pub tuning: TuningConfig,
    pub stack: ForestParams,
    pub adversarial: AdvConfig,
    pub eval: EvalConfig,
    pub test_fraction: f64,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            method: Method::Orig,
            protected: vec!["gender".into()],
            tuning: TuningConfig::default(),
            stack: ForestParams::default(),
            adversarial: AdvConfig::default(),
            eval: EvalConfig::default(),
            test_fraction: 0.2,
            output_dir: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative CSV paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        if let (DataSource::Csv { views }, Some(dir)) = (&mut config.data, path.parent()) {
            for v in views {
                for p in [&mut v.csv, &mut v.manifest] {
                    if p.is_relative() {
                        *p = dir.join(&*p);
                    }
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidArgument(m));
        if self.protected.is_empty() || self.protected.len() > 2 {
            return invalid(format!(
                "protected selection needs one or two attributes, got {}",
                self.protected.len()
            ));
        }
        if self.protected.len() == 2 && self.protected[0] == self.protected[1] {
            return invalid("cannot cross an attribute with itself".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return invalid(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if self.tuning.k < 2 {
            return invalid("tuning needs at least 2 folds".into());
        }
        self.tuning.kelm_space(0).validate()?;
        self.tuning.adv_space(0).validate()?;
        if self.stack.n_trees == 0 || self.stack.min_leaf == 0 {
            return invalid("stacking forest needs trees and a positive min_leaf".into());
        }
        if self.eval.neighbors == 0 {
            return invalid("eval.neighbors must be positive".into());
        }
        self.adversarial.validate()?;
        match &self.data {
            DataSource::Synthetic { spec, views } => {
                spec.validate()?;
                if views.count == 0 || views.width == 0 || !(views.noise_std >= 0.0) {
                    return invalid("views need a positive count and width".into());
                }
            }
            DataSource::Csv { views } if views.is_empty() => return invalid("no CSV views given".into()),
            DataSource::Csv { .. } => {}
        }
        Ok(())
    }
}
