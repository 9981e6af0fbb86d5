//! Flat `key = value` run settings.
//!
//! Resolution order: built-in defaults, then the config file, then flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

/// `(key, default, description)`; an empty default means unset.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("method", "", "erasure method: rlace, inlp, regression, rayleigh, pls, pca-diff"),
    ("rank", "", "dimension of the removed subspace"),
    ("seed", "0", "master seed"),
    ("pca_dim", "", "reduce inputs with PCA to this many dimensions before fitting"),
    ("task", "auto", "auto, classification or regression"),
    ("positive_label", "", "label string encoded as 1 for two-valued labels"),
    ("outer_loops", "50000", "R-LACE outer loops"),
    ("inner_loops", "1", "R-LACE steps per player per outer loop"),
    ("lr_theta", "0.005", "R-LACE predictor learning rate"),
    ("lr_eraser", "0.005", "R-LACE eraser learning rate"),
    ("weight_decay", "0", "R-LACE decoupled weight decay on the predictor"),
    ("batch_size", "128", "R-LACE mini-batch size"),
    ("eval_every", "1000", "R-LACE outer loops between adversary evaluations"),
    ("dev_fraction", "0.2", "share of the data held out for adversary selection"),
    ("probe_max_iter", "100", "probe Newton iteration budget"),
    ("probe_tol", "1e-8", "probe gradient tolerance"),
    ("probe_l2", "1e-4", "probe ridge penalty"),
    ("center_pairs", "false", "center pair differences before pca-diff"),
    ("test_fraction", "0.3", "held-out share for probe evaluation"),
    ("kmeans_restarts", "10", "k-means restarts"),
    ("sweep_method", "inlp", "method re-fitted by the rank sweep: inlp or rlace"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            values: KEYS
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        if !known(&key) {
            return Err(CliError::usage(format!("unknown setting '{key}'")));
        }
        self.values.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Applies a `KEY=VALUE` flag.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("expected KEY=VALUE, got '{pair}'")))?;
        self.set(k, v)
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text, path)
    }

    pub fn merge_text(&mut self, text: &str, origin: &Path) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| {
                    CliError::usage(format!(
                        "{}:{}: expected 'key = value'",
                        origin.display(),
                        i + 1
                    ))
                })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::usage(format!("invalid value '{v}' for {key}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?
            .ok_or_else(|| CliError::usage(format!("missing required setting '{key}'")))
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// One `key = value` line per setting, with descriptions as comments.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, _, help) in KEYS {
            out.push_str(&format!("# {help}\n{k} = {}\n", self.values[*k]));
        }
        out
    }
}
