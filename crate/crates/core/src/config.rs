//! JSON-facing configuration blocks tying basis, penalty and optimizer
//! settings together.

use serde::{Deserialize, Serialize};

use crate::basis::{
    difference_penalty, eval_basis, second_derivative_penalty, BasisMatrix, BasisSpec, PenaltyMatrix,
};
use crate::engine::FitConfig;
use crate::error::{Error, Result};
use crate::spectral::FrequencyGrid;

/// Penalty selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    SecondDerivative,
    Difference { a: usize },
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec::SecondDerivative
    }
}

impl std::str::FromStr for PenaltySpec {
    type Err = Error;

    /// Parses `d2` or `diff:<a>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "d2" {
            return Ok(PenaltySpec::SecondDerivative);
        }
        if let Some(a) = s.strip_prefix("diff:") {
            let a: usize = a
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid difference order `{a}`")))?;
            if a == 0 {
                return Err(Error::Config("difference order must be >= 1".into()));
            }
            return Ok(PenaltySpec::Difference { a });
        }
        Err(Error::Config(format!("unrecognised penalty `{s}` (expected d2 or diff:a)")))
    }
}

impl std::fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PenaltySpec::SecondDerivative => write!(f, "d2"),
            PenaltySpec::Difference { a } => write!(f, "diff:{a}"),
        }
    }
}

impl PenaltySpec {
    pub fn build(&self, spec: &BasisSpec) -> Result<PenaltyMatrix> {
        match *self {
            PenaltySpec::SecondDerivative => second_derivative_penalty(spec),
            PenaltySpec::Difference { a } => difference_penalty(spec.n_basis, a),
        }
    }
}

/// Basis block: `{L, degree, domain, penalty: {kind, a}}`. Without a domain
/// the basis covers `[0, hi]` just past the last grid frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(rename = "L", default = "default_l")]
    pub n_basis: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
    #[serde(default)]
    pub penalty: PenaltySpec,
}

fn default_l() -> usize {
    40
}

fn default_degree() -> usize {
    3
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            n_basis: default_l(),
            degree: default_degree(),
            domain: None,
            penalty: PenaltySpec::default(),
        }
    }
}

impl BasisConfig {
    pub fn spec_for(&self, grid: &FrequencyGrid) -> Result<BasisSpec> {
        let domain = self.domain.unwrap_or_else(|| BasisSpec::domain_for(grid));
        BasisSpec::new(self.n_basis, self.degree, domain)
    }

    /// Basis matrix on `grid` and the matching penalty.
    pub fn build(&self, grid: &FrequencyGrid) -> Result<(BasisMatrix, PenaltyMatrix)> {
        let spec = self.spec_for(grid)?;
        let basis = eval_basis(grid, &spec)?;
        let penalty = self.penalty.build(&spec)?;
        Ok((basis, penalty))
    }
}

/// Everything needed to run one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub basis: BasisConfig,
    pub fit: FitConfig,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::LambdaMode;

    #[test]
    fn penalty_flags() {
        assert_eq!("d2".parse::<PenaltySpec>().unwrap(), PenaltySpec::SecondDerivative);
        assert_eq!("diff:3".parse::<PenaltySpec>().unwrap(), PenaltySpec::Difference { a: 3 });
        assert!("diff:0".parse::<PenaltySpec>().is_err());
        assert!("diff:x".parse::<PenaltySpec>().is_err());
        assert!("l1".parse::<PenaltySpec>().is_err());
        for p in [PenaltySpec::SecondDerivative, PenaltySpec::Difference { a: 2 }] {
            assert_eq!(p.to_string().parse::<PenaltySpec>().unwrap(), p);
        }
    }

    #[test]
    fn model_config_json() {
        let cfg = ModelConfig::from_json(
            r#"{"basis": {"L": 20, "penalty": {"kind": "difference", "a": 2}},
                "fit": {"K": 3, "lambda": {"mode": "fixed", "value": 0.5}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.basis.n_basis, 20);
        assert_eq!(cfg.basis.degree, 3);
        assert_eq!(cfg.basis.penalty, PenaltySpec::Difference { a: 2 });
        assert_eq!(cfg.fit.k, 3);
        assert_eq!(cfg.fit.lambda, LambdaMode::Fixed { value: 0.5 });
        assert_eq!(cfg.fit.max_outer_iters, 500);
        let back = ModelConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(ModelConfig::from_json(r#"{"fit": {}}"#).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ModelConfig::from_json(r#"{"fit": {"K": 2}, "extra": 1}"#).is_err());
        assert!(ModelConfig::from_json(r#"{"fit": {"K": 2, "lamda": 1}}"#).is_err());
        assert!(ModelConfig::from_json(r#"{"basis": {"knots": 3}, "fit": {"K": 2}}"#).is_err());
        assert!(ModelConfig::from_json(r#"{"fit": {"K": 2}}"#).is_ok());
    }
}
