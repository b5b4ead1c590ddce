//! Mixture-model clustering and shard assignment.

mod gmm;
mod partition;

pub use gmm::{fit_gmm, hard_assign, responsibilities, GmmConfig, GmmParams, Point, VARIANCE_FLOOR};
pub use partition::{partition_by_user, partition_cluster_rr, partition_random, ShardPlan, Strategy};

use std::path::Path;

use crate::error::{Error, Result};

impl GmmParams {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
