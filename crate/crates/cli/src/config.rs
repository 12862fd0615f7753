//! Flat key-value run configuration.
//!
//! Values are layered: experiment defaults, then the `--config` file, then each
//! `--set key=value`, then the dedicated flags. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use toml::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Hit,
    Dim,
    Sbc,
    Corr,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Hit => "hit",
            Experiment::Dim => "dim",
            Experiment::Sbc => "sbc",
            Experiment::Corr => "corr",
            Experiment::Verify => "verify",
        }
    }

    fn defaults(self) -> Vec<(&'static str, Value)> {
        use Value::{Boolean as B, Float as F, Integer as I, String as S};
        let s = |v: &str| S(v.to_string());
        let mut d = vec![("seed", I(1))];
        let ladder = |name: &str, k_min: i64, k_max: Option<i64>| {
            let mut l = vec![
                ("ladder", s(name)),
                ("r0", F(1.0)),
                ("lambda", F(0.5)),
                ("beta", F(0.5)),
                ("radius", F(0.25)),
                ("k_min", I(k_min)),
            ];
            l.extend(k_max.map(|k| ("k_max", I(k))));
            l
        };
        match self {
            Experiment::Hit => {
                d.extend([
                    ("system", s("doubling")),
                    ("mode", s("hitting")),
                    ("x0", s("0.3")),
                    ("trials", I(100)),
                    ("n_max", I(10_000_000)),
                    ("tail", s("all")),
                ]);
                d.extend(ladder("geometric", 4, Some(18)));
            }
            Experiment::Dim => {
                d.extend([
                    ("system", s("doubling")),
                    ("x0", s("0.3")),
                    ("trials", I(1)),
                    ("measure", s("auto")),
                    ("m", I(1_000_000)),
                    ("sample", s("auto")),
                    ("burn_in", I(10_000)),
                    ("stride", I(16)),
                    ("count_floor", I(100)),
                    ("tail", s("8")),
                ]);
                d.extend(ladder("geometric", 2, Some(16)));
            }
            Experiment::Sbc => {
                d.extend([
                    ("system", s("doubling")),
                    ("x0", s("0.3")),
                    ("trials", I(200)),
                    ("n_max", I(100_000)),
                    ("checkpoints", s("decades")),
                    ("measure", s("auto")),
                    ("m", I(1_000_000)),
                    ("sample", s("auto")),
                    ("burn_in", I(10_000)),
                    ("stride", I(16)),
                    ("phi", s("fit")),
                    ("alpha", F(0.2)),
                    ("epsilon", F(0.1)),
                    ("c1", F(1.5)),
                    ("c2", F(1.5)),
                ]);
                d.extend(ladder("power", 1, None));
                d.extend(Self::observable_defaults());
            }
            Experiment::Corr => {
                d.extend([
                    ("system", s("doubling")),
                    ("m", I(1_000_000)),
                    ("sample", s("auto")),
                    ("burn_in", I(10_000)),
                    ("stride", I(16)),
                ]);
                d.extend(Self::observable_defaults());
            }
            Experiment::Verify => {
                d.extend([
                    ("trials", I(200)),
                    ("lipschitz_pairs", I(100_000)),
                    ("crosscheck_seeds", I(100)),
                    ("crosscheck_n_max", I(10_000)),
                    ("monte_carlo", B(false)),
                    ("m", I(1_000_000)),
                ]);
            }
        }
        d
    }

    fn observable_defaults() -> Vec<(&'static str, Value)> {
        let s = |v: &str| Value::String(v.to_string());
        vec![
            ("phi_x0", s("0.5")),
            ("phi_r_in", Value::Float(0.1)),
            ("phi_r_out", Value::Float(0.2)),
            ("psi_x0", s("0.5")),
            ("psi_r_in", Value::Float(0.1)),
            ("psi_r_out", Value::Float(0.2)),
            ("max_lag", Value::Integer(1000)),
        ]
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "hit" => Experiment::Hit,
            "dim" => Experiment::Dim,
            "sbc" => Experiment::Sbc,
            "corr" => Experiment::Corr,
            "verify" => Experiment::Verify,
            other => return Err(ConfigError(format!("unknown experiment `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub experiment: Experiment,
    values: BTreeMap<String, Value>,
    /// Output directory named in the file; not part of the manifest.
    pub out: Option<PathBuf>,
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// `key=value`, with the value read as a TOML scalar when it parses as one.
pub fn parse_assignment(s: &str) -> Result<(String, Value), ConfigError> {
    let Some((k, v)) = s.split_once('=') else {
        return err(format!("expected key=value, got `{s}`"));
    };
    let (k, v) = (k.trim(), v.trim());
    let value = format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

impl Config {
    pub fn new(experiment: Experiment) -> Self {
        let values = experiment
            .defaults()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self { experiment, values, out: None }
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<(), ConfigError> {
        if key == "experiment" {
            let name = value.as_str().unwrap_or_default();
            if name != self.experiment.name() {
                return err(format!("config is for `{name}`, not `{}`", self.experiment));
            }
            return Ok(());
        }
        if key == "out" {
            let Some(dir) = value.as_str() else {
                return err("`out` expects a string");
            };
            self.out = Some(PathBuf::from(dir));
            return Ok(());
        }
        let Some(slot) = self.values.get_mut(key) else {
            return err(format!("unknown key `{key}` for `{}`", self.experiment));
        };
        // Integers are accepted where floats are expected, numbers where text is.
        let value = match (&*slot, value) {
            (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
            (Value::String(_), v @ (Value::Integer(_) | Value::Float(_))) => Value::String(v.to_string()),
            (_, v) => v,
        };
        if std::mem::discriminant(slot) != std::mem::discriminant(&value) {
            return err(format!("`{key}` expects a {}, got `{value}`", slot.type_str()));
        }
        *slot = value;
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let table: toml::Table = text.parse().map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        for (k, v) in table {
            self.set(&k, v)?;
        }
        Ok(())
    }

    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("no default for `{key}`"))
    }

    pub fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("type checked on set")
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).as_float().expect("type checked on set")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key).as_bool().expect("type checked on set")
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        let v = self.get(key).as_integer().expect("type checked on set");
        u64::try_from(v).or_else(|_| err(format!("`{key}` must be non-negative, got {v}")))
    }

    /// The manifest: every key with its resolved value, sorted.
    pub fn to_manifest(&self) -> String {
        let mut t = toml::Table::new();
        t.insert("experiment".into(), Value::String(self.experiment.name().into()));
        for (k, v) in &self.values {
            t.insert(k.clone(), v.clone());
        }
        toml::to_string(&t).expect("flat tables serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignments_take_toml_types() {
        assert_eq!(parse_assignment("n_max=1000").unwrap(), ("n_max".into(), Value::Integer(1000)));
        assert_eq!(parse_assignment("alpha = 0.25").unwrap().1, Value::Float(0.25));
        assert_eq!(parse_assignment("system=rotation:alpha=golden").unwrap().1, Value::String("rotation:alpha=golden".into()));
        assert_eq!(parse_assignment("x0=\"0.3\"").unwrap().1, Value::String("0.3".into()));
        assert!(parse_assignment("nothing").is_err());
    }

    #[test]
    fn layering_and_validation() {
        let mut c = Config::new(Experiment::Hit);
        assert_eq!(c.u64("trials").unwrap(), 100);
        c.set("trials", Value::Integer(5)).unwrap();
        c.set("r0", Value::Integer(1)).unwrap();
        assert_eq!(c.f64("r0"), 1.0);
        assert!(c.set("trials", Value::String("many".into())).is_err());
        assert!(c.set("bogus", Value::Integer(1)).is_err());
        assert!(c.set("experiment", Value::String("dim".into())).is_err());
        c.set("experiment", Value::String("hit".into())).unwrap();
    }

    #[test]
    fn manifest_round_trips() {
        let mut c = Config::new(Experiment::Sbc);
        c.set("beta", Value::Float(0.4)).unwrap();
        let text = c.to_manifest();
        let dir = std::env::temp_dir().join(format!("hd-manifest-{}", std::process::id()));
        std::fs::write(&dir, &text).unwrap();
        let mut d = Config::new(Experiment::Sbc);
        d.merge_file(&dir).unwrap();
        std::fs::remove_file(&dir).unwrap();
        assert_eq!(c, d);
    }
}
