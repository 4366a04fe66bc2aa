use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use super::{BoxedGenerator, ExternalGenerator, GeneratorError, GoldOracle, NoisyOracle, TargetMode};
use crate::state::{Dialogue, Schema};

/// A generator named on the command line: `gold:`, `noisy:p=0.25,seed=7`,
/// `exec:<command>` or `tcp:<host>:<port>`.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    Gold,
    Noisy { p: f64, seed: u64 },
    Exec(String),
    Tcp(String),
}

fn bad(spec: &str, reason: impl Into<String>) -> GeneratorError {
    GeneratorError::BadSpec {
        spec: spec.to_string(),
        reason: reason.into(),
    }
}

impl FromStr for GeneratorSpec {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (scheme, rest) = s.split_once(':').ok_or_else(|| bad(s, "expected <kind>:<args>"))?;
        match scheme {
            "gold" if rest.is_empty() => Ok(GeneratorSpec::Gold),
            "gold" => Err(bad(s, "gold takes no arguments")),
            "noisy" => {
                let mut p = None;
                let mut seed = None;
                for part in rest.split(',').filter(|x| !x.is_empty()) {
                    match part.split_once('=') {
                        Some(("p", v)) => {
                            let v: f64 = v.parse().map_err(|_| bad(s, format!("p={v} is not a number")))?;
                            if !(0.0..=1.0).contains(&v) {
                                return Err(bad(s, "p must be in [0, 1]"));
                            }
                            p = Some(v);
                        }
                        Some(("seed", v)) => {
                            seed = Some(v.parse().map_err(|_| bad(s, format!("seed={v} is not an integer")))?);
                        }
                        _ => return Err(bad(s, format!("unknown parameter {part:?}"))),
                    }
                }
                Ok(GeneratorSpec::Noisy {
                    p: p.ok_or_else(|| bad(s, "missing p"))?,
                    seed: seed.unwrap_or(0),
                })
            }
            "exec" if !rest.trim().is_empty() => Ok(GeneratorSpec::Exec(rest.to_string())),
            "tcp" if rest.rsplit_once(':').is_some_and(|(h, port)| !h.is_empty() && port.parse::<u16>().is_ok()) => {
                Ok(GeneratorSpec::Tcp(rest.to_string()))
            }
            "exec" | "tcp" => Err(bad(s, "missing command or address")),
            other => Err(bad(s, format!("unknown generator kind {other:?}"))),
        }
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::Gold => write!(f, "gold:"),
            GeneratorSpec::Noisy { p, seed } => write!(f, "noisy:p={p},seed={seed}"),
            GeneratorSpec::Exec(cmd) => write!(f, "exec:{cmd}"),
            GeneratorSpec::Tcp(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

impl GeneratorSpec {
    /// True for generators that live in another process.
    pub fn is_external(&self) -> bool {
        matches!(self, GeneratorSpec::Exec(_) | GeneratorSpec::Tcp(_))
    }

    /// Builds a fresh generator. Oracles replay `dialogues`; `mode` only
    /// affects the gold oracle.
    pub fn build(
        &self,
        dialogues: &[Dialogue],
        schema: &Schema,
        mode: TargetMode,
        timeout: Duration,
    ) -> Result<BoxedGenerator, GeneratorError> {
        let oracle_err = |e: crate::lev::LevError| bad(&self.to_string(), format!("gold states are invalid: {e}"));
        Ok(match self {
            GeneratorSpec::Gold => Box::new(GoldOracle::new(dialogues, schema, mode).map_err(oracle_err)?),
            GeneratorSpec::Noisy { p, seed } => {
                Box::new(NoisyOracle::new(dialogues, schema, *p, *seed).map_err(oracle_err)?)
            }
            GeneratorSpec::Exec(cmd) => Box::new(ExternalGenerator::spawn(cmd, timeout)?),
            GeneratorSpec::Tcp(addr) => Box::new(ExternalGenerator::connect(addr, timeout)?),
        })
    }

    /// Opens an external generator for protocol-level use.
    pub fn connect(&self, timeout: Duration) -> Result<ExternalGenerator, GeneratorError> {
        match self {
            GeneratorSpec::Exec(cmd) => ExternalGenerator::spawn(cmd, timeout),
            GeneratorSpec::Tcp(addr) => ExternalGenerator::connect(addr, timeout),
            _ => Err(bad(&self.to_string(), "not an external generator")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!("gold:".parse::<GeneratorSpec>().unwrap(), GeneratorSpec::Gold);
        assert_eq!(
            "noisy:p=0.25,seed=7".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Noisy { p: 0.25, seed: 7 }
        );
        assert_eq!(
            "exec:python gen.py --x".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Exec("python gen.py --x".into())
        );
        assert_eq!(
            "tcp:localhost:9000".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Tcp("localhost:9000".into())
        );
    }

    #[test]
    fn rejects_malformed() {
        for s in ["gold", "noisy:p=2", "noisy:seed=1", "noisy:p=x", "noisy:q=1", "exec:", "tcp:host", "grpc:x", "gold:x"] {
            assert!(s.parse::<GeneratorSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn display_round_trips() {
        for s in ["gold:", "noisy:p=0.5,seed=3", "exec:cat", "tcp:127.0.0.1:1"] {
            assert_eq!(s.parse::<GeneratorSpec>().unwrap().to_string(), s);
        }
    }
}
