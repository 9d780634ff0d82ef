//! Skeleton topology: joint names, the hip, and named limb groups.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::util::atomic_write;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SkeletonTopology {
    pub joint_names: Vec<String>,
    pub hip_index: usize,
    /// Named joint groups that can be dropped together (arms, legs).
    pub limbs: BTreeMap<String, Vec<usize>>,
}

impl SkeletonTopology {
    pub fn joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.joints();
        if j == 0 {
            return Err(Error::Data("topology has no joints".into()));
        }
        if self.hip_index >= j {
            return Err(Error::Data(format!(
                "hip index {} out of range for {j} joints",
                self.hip_index
            )));
        }
        for (name, group) in &self.limbs {
            for &idx in group {
                if idx >= j {
                    return Err(Error::Data(format!(
                        "limb {name:?} references joint {idx}, but skeleton has {j} joints"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let topo: SkeletonTopology = serde_json::from_str(&text)?;
        topo.validate()?;
        Ok(topo)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        atomic_write(path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_bad_indices() {
        let mut topo = SkeletonTopology {
            joint_names: vec!["hip".into(), "head".into()],
            hip_index: 0,
            limbs: BTreeMap::new(),
        };
        assert!(topo.validate().is_ok());
        topo.limbs.insert("arm".into(), vec![5]);
        assert!(topo.validate().is_err());
        topo.limbs.clear();
        topo.hip_index = 2;
        assert!(topo.validate().is_err());
    }
}
