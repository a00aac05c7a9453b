use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::local_limit_k;
use crate::conv::Backend;
use crate::error::{Error, Result};
use crate::interarrival::{DistSpec, InterArrival};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    RenewalMass,
    LocalLimit,
    Darling,
    LdRate,
    FukNagaev,
    ReverseAvg,
    Intersect,
    BigJump,
    IsVsDp,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::RenewalMass => "renewal-mass",
            Kind::LocalLimit => "local-limit",
            Kind::Darling => "darling",
            Kind::LdRate => "ld-rate",
            Kind::FukNagaev => "fuk-nagaev",
            Kind::ReverseAvg => "reverse-avg",
            Kind::Intersect => "intersect",
            Kind::BigJump => "big-jump",
            Kind::IsVsDp => "is-vs-dp",
        }
    }
}

/// Step count used at each `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum KRule {
    Fixed { k: usize },
    /// `⌊1/√(φ(n) r(n))⌋`.
    LocalLimit,
    /// `⌊c / r(n)⌋`.
    InverseTail { c: f64 },
    /// `⌊M / φ(n)⌋`.
    MScaled { m: f64 },
}

impl KRule {
    pub fn k_at(&self, d: &InterArrival, n: usize) -> Result<usize> {
        let k = match *self {
            KRule::Fixed { k } => k,
            KRule::LocalLimit => local_limit_k(d, n)?,
            KRule::InverseTail { c } => (c / d.tail(n)?).floor() as usize,
            KRule::MScaled { m } => {
                let phi = d.phi_eff().ok_or_else(|| Error::RegimeUnknown("law has no slowly varying tag".into()))?;
                (m / phi.eval(n as f64)).floor() as usize
            }
        };
        Ok(k.max(1))
    }
}

/// Window fraction `ε(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "kebab-case")]
pub enum EpsRule {
    /// `c / ln(n + e)`.
    Log { c: f64 },
    Fixed { eps: f64 },
}

impl EpsRule {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            EpsRule::Log { c } => c / (n as f64 + std::f64::consts::E).ln(),
            EpsRule::Fixed { eps } => eps,
        }
    }
}

fn default_samples() -> usize {
    100_000
}

/// One experiment, as read from the `--config` JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub distribution: DistSpec,
    /// Partner law for `intersect`; defaults to `distribution`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<DistSpec>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub k_grid: Vec<usize>,
    #[serde(default)]
    pub m_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_rule: Option<KRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<EpsRule>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Largest index any experiment may touch; defaults to the law's horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub backend: Backend,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON form (keys sorted, defaults filled).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
    }

    pub fn k_rule(&self) -> KRule {
        self.k_rule.unwrap_or(KRule::LocalLimit)
    }

    pub fn eps_rule(&self) -> EpsRule {
        self.eps.unwrap_or(match self.kind {
            Kind::IsVsDp => EpsRule::Fixed {
                eps: crate::rare_event::DEFAULT_EPS,
            },
            _ => EpsRule::Log { c: 1.0 },
        })
    }

    /// Effective horizon for `d`, checked against every grid point.
    pub fn validate(&self, d: &InterArrival) -> Result<usize> {
        let h = self.horizon.unwrap_or(d.horizon());
        if h > d.horizon() {
            return Err(Error::Config(format!(
                "horizon {h} exceeds the distribution horizon {}",
                d.horizon()
            )));
        }
        let needs_n = !matches!(self.kind, Kind::Darling);
        if needs_n && self.n_grid.is_empty() {
            return Err(Error::Config(format!("kind {} needs a non-empty n_grid", self.kind.name())));
        }
        if matches!(self.kind, Kind::Darling) && self.k_grid.is_empty() {
            return Err(Error::Config("kind darling needs a non-empty k_grid".into()));
        }
        if matches!(self.kind, Kind::FukNagaev) && (self.k_grid.is_empty() || self.m_grid.is_empty()) {
            return Err(Error::Config("kind fuk-nagaev needs k_grid and m_grid".into()));
        }
        if let Some(n) = self.n_grid.iter().chain(self.m_grid.iter()).find(|n| **n > h) {
            return Err(Error::Config(format!("grid point {n} beyond horizon {h}")));
        }
        if let Some(n) = self.n_grid.iter().find(|n| **n == 0) {
            return Err(Error::Config(format!("grid point {n} must be positive")));
        }
        if let Some(EpsRule::Fixed { eps }) = self.eps {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::Config(format!("eps = {eps} not in (0, 1)")));
            }
        }
        if self.samples == 0 && matches!(self.kind, Kind::Darling | Kind::IsVsDp) {
            return Err(Error::Config("samples must be >= 1".into()));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order_and_defaults() {
        let a = r#"{"kind":"renewal-mass","n_grid":[1,2],"distribution":{"family":"builtin","name":"delta1","horizon":8}}"#;
        let b = r#"{"distribution":{"horizon":8,"name":"delta1","family":"builtin"},"n_grid":[1,2],"seed":0,"kind":"renewal-mass"}"#;
        let c = r#"{"kind":"renewal-mass","n_grid":[1,3],"distribution":{"family":"builtin","name":"delta1","horizon":8}}"#;
        let ha = ExperimentConfig::from_json(a).unwrap().hash();
        assert_eq!(ha, ExperimentConfig::from_json(b).unwrap().hash());
        assert_ne!(ha, ExperimentConfig::from_json(c).unwrap().hash());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_grids() {
        let bad = r#"{"kind":"renewal-mass","n_grid":[1],"distribution":{"family":"builtin","name":"delta1","horizon":8},"extra":1}"#;
        assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Config(_))));
        let far = r#"{"kind":"renewal-mass","n_grid":[9],"distribution":{"family":"builtin","name":"delta1","horizon":8}}"#;
        let cfg = ExperimentConfig::from_json(far).unwrap();
        let d = cfg.distribution.build().unwrap();
        assert!(matches!(cfg.validate(&d), Err(Error::Config(_))));
    }

    #[test]
    fn log_schedule() {
        let e = EpsRule::Log { c: 1.0 }.at(0);
        assert!((e - 1.0).abs() < 1e-15);
    }
}
