//! One JSON document holding every tunable constant.

use std::path::Path;

pub use crate::sim::SimParams as Config;

/// Reads a config file; missing fields take their defaults.
pub fn load(path: &Path) -> crate::Result<Config> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn to_json(config: &Config) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_partial() {
        let c = Config::default();
        let back: Config = serde_json::from_str(&to_json(&c)).unwrap();
        assert_eq!(back, c);
        let partial: Config = serde_json::from_str(r#"{"coverage": {"gamma_min": 2.0}, "seed": 9}"#).unwrap();
        assert_eq!(partial.coverage.gamma_min, 2.0);
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.nbv, Config::default().nbv);
        assert!(serde_json::from_str::<Config>(r#"{"bogus": 1}"#).is_err());
    }
}
