use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::MethodConfig;
use crate::selection::ScorerKind;

/// Hyper-parameter grid of one method. Points are the cartesian product of
/// the value lists, enumerated with the last key (in name order) varying
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub method: String,
    #[serde(default)]
    pub values: BTreeMap<String, Vec<f64>>,
    /// Tuning task; the first task of the dataset when absent.
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default = "all_scorers")]
    pub scorers: Vec<ScorerKind>,
}

fn all_scorers() -> Vec<ScorerKind> {
    ScorerKind::ALL.to_vec()
}

/// Published grid values per method. AR's lower critic bound is tied to the
/// upper one and is not a grid axis.
pub fn published_grid(method: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let table: &[(&str, &[f64])] = match method {
        "source_only" => &[],
        "pada" => &[("lambda", &[0.1, 0.5, 1.0, 5.0, 10.0])],
        "safn" => &[("lambda", &[0.005, 0.01, 0.05, 0.1, 0.5]), ("delta_r", &[0.01, 0.1, 1.0])],
        "ba3us" => &[("lambda_wce", &[0.1, 0.5, 1.0, 5.0, 10.0]), ("lambda_ent", &[0.01, 0.05, 0.1, 0.5, 1.0])],
        "ar" => &[
            ("rho0", &[2.5, 5.0, 7.5, 10.0]),
            ("a_up", &[5.0, 10.0]),
            ("lambda_ent", &[0.01, 0.1, 1.0]),
        ],
        "jumbot" => &[
            ("tau", &[0.001, 0.01, 0.1]),
            ("eta1", &[0.00001, 0.0001, 0.001, 0.01, 0.1]),
            ("eta2", &[0.1, 0.5, 1.0]),
            ("eta3", &[5.0, 10.0, 20.0]),
        ],
        "mpot" => &[
            ("eps", &[0.5, 1.0, 1.5]),
            ("eta1", &[0.0001, 0.001, 0.01, 0.1, 1.0]),
            ("eta2", &[0.1, 1.0, 5.0, 10.0]),
            ("m", &[0.1, 0.2, 0.3, 0.4]),
        ],
        other => return Err(Error::config(format!("unknown method `{other}`"))),
    };
    Ok(table.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect())
}

impl GridSpec {
    /// The published grid for `method`, scored by every scorer.
    pub fn published(method: &str) -> Result<Self> {
        Ok(Self {
            method: method.to_string(),
            values: published_grid(method)?,
            task: None,
            scorers: all_scorers(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.values().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point as a validated method configuration.
    pub fn points(&self) -> Result<Vec<MethodConfig>> {
        if let Some((k, _)) = self.values.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::config(format!("grid for `{}` has no values for `{k}`", self.method)));
        }
        if self.scorers.is_empty() {
            return Err(Error::config("grid needs at least one scorer"));
        }
        let keys: Vec<&String> = self.values.keys().collect();
        let lists: Vec<&Vec<f64>> = self.values.values().collect();
        let mut idx = vec![0usize; keys.len()];
        let mut out = Vec::with_capacity(self.len());
        loop {
            let hp: BTreeMap<String, f64> = keys.iter().zip(&lists).zip(&idx).map(|((k, l), &i)| ((*k).clone(), l[i])).collect();
            out.push(MethodConfig::from_hp(&self.method, &hp)?);
            let mut pos = keys.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < lists[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}
