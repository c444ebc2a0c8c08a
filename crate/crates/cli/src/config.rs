use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::ValueEnum;
use num_rational::Rational64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

/// An exact rational read from strings like `"1"` or `"3/2"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio(pub Rational64);

impl FromStr for Ratio {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Rational64::from_str(s.trim())
            .map(Ratio)
            .map_err(|e| format!("not a rational {s:?}: {e}"))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    /// Flat tables only.
    Csv,
}

/// Everything that determines a run's output. Echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub subcommand: String,
    /// Subcommand arguments: measure, sample counts, cutoffs.
    pub parameters: Value,
    pub seed: u64,
    pub precision: u32,
    pub format: Format,
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses one per core. Results do not depend on it.
    pub threads: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_parse_and_print() {
        assert_eq!("3/2".parse::<Ratio>().unwrap().0, Rational64::new(3, 2));
        assert_eq!("4".parse::<Ratio>().unwrap().to_string(), "4");
        assert_eq!("6/4".parse::<Ratio>().unwrap().to_string(), "3/2");
        assert!("x".parse::<Ratio>().is_err());
        assert!("1/0".parse::<Ratio>().is_err());
    }

    #[test]
    fn config_round_trips() {
        let c = ExperimentConfig {
            subcommand: "push-test".into(),
            parameters: serde_json::json!({"n": 1, "p": 2, "s": "3/2"}),
            seed: 7,
            precision: 64,
            format: Format::Csv,
            out: Some("x.csv".into()),
            threads: None,
        };
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}
