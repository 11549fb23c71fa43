use super::MlpNetwork;

/// Default number of source updates between target-network refreshes.
pub const DEFAULT_LAG_PERIOD: usize = 50;

/// A target network: a wholesale snapshot of a source network that is
/// refreshed every `lag_period` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedCopy {
    shadow: MlpNetwork,
    updates_since_sync: usize,
    lag_period: usize,
}

impl LaggedCopy {
    pub fn new(source: &MlpNetwork, lag_period: usize) -> Self {
        assert!(lag_period > 0, "lag period must be positive");
        LaggedCopy {
            shadow: source.clone(),
            updates_since_sync: 0,
            lag_period,
        }
    }

    pub fn with_default_lag(source: &MlpNetwork) -> Self {
        Self::new(source, DEFAULT_LAG_PERIOD)
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.shadow
    }

    /// Direct access for tests and scripted setups; normal training only
    /// changes the shadow through [`LaggedCopy::maybe_sync`].
    pub fn network_mut(&mut self) -> &mut MlpNetwork {
        &mut self.shadow
    }

    pub fn updates_since_sync(&self) -> usize {
        self.updates_since_sync
    }

    pub fn lag_period(&self) -> usize {
        self.lag_period
    }

    /// Call once per optimizer step on `source`. Returns true when the shadow
    /// was refreshed.
    pub fn maybe_sync(&mut self, source: &MlpNetwork) -> bool {
        self.updates_since_sync += 1;
        if self.updates_since_sync >= self.lag_period {
            self.shadow.copy_params_from(source);
            self.updates_since_sync = 0;
            true
        } else {
            false
        }
    }
}
