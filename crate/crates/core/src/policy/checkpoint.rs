use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureConfig, SoftmaxSequencePolicy};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

/// Sparse JSON checkpoint: only nonzero weights are stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub feature_config: FeatureConfig,
    pub temperature: f64,
    pub weights: Vec<(u32, f64)>,
}

impl Checkpoint {
    pub fn from_policy(policy: &SoftmaxSequencePolicy) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config_hash: policy.config.config_hash(),
            feature_config: policy.config,
            temperature: policy.temperature,
            weights: policy
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i as u32, *w))
                .collect(),
        }
    }

    /// Rebuild a policy, refusing when the stored hash disagrees with `expected`.
    pub fn into_policy(self, expected: &FeatureConfig) -> Result<SoftmaxSequencePolicy> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", self.format_version)));
        }
        let want = expected.config_hash();
        if self.config_hash != want || self.feature_config.config_hash() != want {
            return Err(Error::Checkpoint(format!(
                "feature-map hash {} does not match expected {want}",
                self.config_hash
            )));
        }
        let mut p = SoftmaxSequencePolicy::new(expected.dialect, expected.mode, expected.table_bits)?;
        p.temperature = self.temperature;
        for (i, w) in self.weights {
            let slot = p
                .weights
                .get_mut(i as usize)
                .ok_or_else(|| Error::Checkpoint(format!("weight index {i} out of range")))?;
            if !w.is_finite() {
                return Err(Error::Checkpoint(format!("non-finite weight at {i}")));
            }
            *slot = w;
        }
        Ok(p)
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("checkpoint serializes")))
    }
}

pub fn save_checkpoint(policy: &SoftmaxSequencePolicy, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_vec(&Checkpoint::from_policy(policy))?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: &FeatureConfig) -> Result<SoftmaxSequencePolicy> {
    let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
    ck.into_policy(expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{Dialect, MacroMode};

    #[test]
    fn round_trip_and_hash_guard() {
        let mut p = SoftmaxSequencePolicy::new(Dialect::Chain { branching: 2 }, MacroMode::Atomic, 8).unwrap();
        p.init_syntax_prior(1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path, p.config()).unwrap();
        assert_eq!(q.weights(), p.weights());
        let other = FeatureConfig { mode: MacroMode::Flexible(4), ..*p.config() };
        assert!(matches!(load_checkpoint(&path, &other), Err(Error::Checkpoint(_))));
    }
}
