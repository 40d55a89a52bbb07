use serde::{Deserialize, Serialize};

use crate::cayley::DEFAULT_VERTEX_BUDGET;
use crate::coarse_homotopy::{DEFAULT_EDGE_BUDGET, DEFAULT_STATE_BUDGET};
use crate::error::{CoarseError, Result};

pub const BUDGET_ENV: &str = "COARSEBOX_BUDGET";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    pub vertex_budget: u64,
    pub oracle_state_budget: u64,
    pub oracle_edge_budget: u64,
    pub format: Format,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            vertex_budget: DEFAULT_VERTEX_BUDGET,
            oracle_state_budget: DEFAULT_STATE_BUDGET,
            oracle_edge_budget: DEFAULT_EDGE_BUDGET,
            format: Format::Json,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.vertex_budget == 0 || self.oracle_state_budget == 0 || self.oracle_edge_budget == 0 {
            return Err(CoarseError::InvalidArgument("budgets must be positive".into()));
        }
        Ok(())
    }

    /// Applies a `COARSEBOX_BUDGET` style override.
    pub fn with_budget_override(mut self, value: Option<&str>) -> Result<Self> {
        if let Some(v) = value {
            self.vertex_budget = v
                .trim()
                .parse()
                .map_err(|_| CoarseError::InvalidArgument(format!("{BUDGET_ENV}={v} is not a positive integer")))?;
        }
        self.validate()?;
        Ok(self)
    }
}
