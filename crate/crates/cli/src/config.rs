//! Flat `section.key = value` configuration.

use std::collections::BTreeMap;
use std::fmt;

use carleman::approx::StepFunction;
use carleman::rational::{format_q, parse_q};
use carleman::weights::{WeightSequence, DEFAULT_HORIZON};
use carleman::{GrowthPoly, Real, Q};
use num_traits::{One, Zero};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected `section.key = value`", i + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            let valid_key = k.split_once('.').is_some_and(|(s, n)| {
                !s.is_empty() && !n.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            });
            if !valid_key {
                return err(format!("line {}: bad key `{k}`", i + 1));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return err(format!("line {}: duplicate key `{k}`", i + 1));
            }
        }
        Ok(Config { entries })
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// Fill in `key` when absent, so that reports embed the effective value.
    pub fn default(&mut self, key: &str, value: &str) {
        self.entries.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| ConfigError(format!("missing `{key}`")))
    }

    pub fn q(&self, key: &str) -> Result<Q> {
        let v = self.require(key)?;
        parse_q(v).ok_or_else(|| ConfigError(format!("`{key}`: not a rational: `{v}`")))
    }

    pub fn positive_q(&self, key: &str) -> Result<Q> {
        let v = self.q(key)?;
        if v <= Q::zero() {
            return err(format!("`{key}` must be positive"));
        }
        Ok(v)
    }

    pub fn exponent(&self, key: &str) -> Result<Q> {
        let p = self.q(key)?;
        if p <= Q::zero() || p >= Q::one() {
            return err(format!("`{key}` must lie in (0, 1), got {}", format_q(&p)));
        }
        Ok(p)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        v.parse().map_err(|_| ConfigError(format!("`{key}`: not a count: `{v}`")))
    }

    pub fn f64_positive(&self, key: &str) -> Result<f64> {
        let v = self.require(key)?;
        match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
            _ => match parse_q(v) {
                Some(x) if x > Q::zero() => Ok(carleman::rational::to_f64(&x)),
                _ => err(format!("`{key}` must be a positive number, got `{v}`")),
            },
        }
    }

    pub fn q_list(&self, key: &str) -> Result<Vec<Q>> {
        let v = self.require(key)?;
        v.split(',')
            .map(|s| parse_q(s.trim()).ok_or_else(|| ConfigError(format!("`{key}`: not a rational: `{}`", s.trim()))))
            .collect()
    }

    /// Strictly decreasing positive tolerances.
    pub fn schedule(&self, key: &str) -> Result<Vec<Q>> {
        let s = self.q_list(key)?;
        if s.is_empty() || s.iter().any(|x| x <= &Q::zero()) {
            return err(format!("`{key}` must be a nonempty list of positive rationals"));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return err(format!("`{key}` must be strictly decreasing"));
        }
        Ok(s)
    }

    /// `a:b:c` triples separated by commas, meaning `Σ c χ_[a,b]`.
    pub fn steps(&self, key: &str) -> Result<StepFunction> {
        let v = self.require(key)?;
        let mut out = Vec::new();
        for item in v.split(',') {
            let parts: Vec<&str> = item.trim().split(':').collect();
            let parsed: Option<Vec<Q>> = parts.iter().map(|s| parse_q(s.trim())).collect();
            match parsed {
                Some(t) if t.len() == 3 => out.push((t[0].clone(), t[1].clone(), t[2].clone())),
                _ => return err(format!("`{key}`: expected `a:b:c`, got `{}`", item.trim())),
            }
        }
        StepFunction::new(out).map_err(|e| ConfigError(format!("`{key}`: {e}")))
    }

    pub fn poly(&self, key: &str) -> Result<GrowthPoly> {
        Ok(GrowthPoly(self.q_list(key)?))
    }

    /// The weight sequence described by the `weights` section.
    pub fn weights(&mut self) -> Result<WeightSequence> {
        self.default("weights.kind", "geometric-exponential");
        self.default("weights.horizon", &DEFAULT_HORIZON.to_string());
        let p = self.exponent("weights.p")?;
        let horizon = self.usize("weights.horizon")?;
        let kind = self.require("weights.kind")?.to_string();
        let built = match kind.as_str() {
            "geometric-exponential" => WeightSequence::geometric_exponential(self.q("weights.kappa")?, p, horizon),
            "tempered" => {
                self.default("weights.s", "1");
                WeightSequence::tempered(self.q("weights.kappa")?, self.q("weights.s")?, p, horizon)
            }
            "power" => WeightSequence::power(self.q("weights.kappa")?, self.q("weights.s")?, p, horizon),
            "table" => {
                let v = self.require("weights.logs")?;
                let logs: Option<Vec<Real>> = v.split(',').map(|s| Real::parse_decimal(s.trim())).collect();
                let logs = logs.ok_or_else(|| ConfigError("`weights.logs`: expected decimal log values".into()))?;
                WeightSequence::table_from_logs(logs, p)
            }
            other => return err(format!("unknown weights.kind `{other}`")),
        };
        built.map_err(|e| ConfigError(format!("weights: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use carleman::rational::q;

    #[test]
    fn parses_comments_and_rationals() {
        let c = Config::parse("# header\nweights.p = 1/2  # exponent\n\napprox.schedule = 1/5, 1/10\n").unwrap();
        assert_eq!(c.exponent("weights.p").unwrap(), q(1, 2));
        assert_eq!(c.schedule("approx.schedule").unwrap(), vec![q(1, 5), q(1, 10)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("nodot = 1").is_err());
        assert!(Config::parse("a.b = 1\na.b = 2").is_err());
        assert!(Config::parse("a.b 1").is_err());
        let c = Config::parse("weights.p = 3/2\napprox.schedule = 1/10, 1/5").unwrap();
        assert!(c.exponent("weights.p").is_err());
        assert!(c.schedule("approx.schedule").is_err());
    }

    #[test]
    fn step_triples() {
        let c = Config::parse("approx.steps = 0:1:1, 3/2:2:-2").unwrap();
        let s = c.steps("approx.steps").unwrap();
        assert_eq!(s.steps().len(), 2);
        assert_eq!(s.steps()[1].c, q(-2, 1));
        let bad = Config::parse("approx.steps = 0:1").unwrap();
        assert!(bad.steps("approx.steps").is_err());
    }
}
