use serde::{Deserialize, Serialize};

/// Retransmission timer settings shared by every transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimerConfig {
    pub t1_ms: u64,
    pub t2_ms: u64,
    pub max_retransmits: u32,
    pub transaction_timeout_ms: u64,
}

impl Default for TimerConfig {
    fn default() -> Self {
        TimerConfig {
            t1_ms: 500,
            t2_ms: 4000,
            max_retransmits: 5,
            transaction_timeout_ms: 32_000,
        }
    }
}

impl TimerConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.t1_ms < 1 {
            return Err("t1_ms must be at least 1");
        }
        if self.t2_ms < self.t1_ms {
            return Err("t2_ms must be at least t1_ms");
        }
        Ok(())
    }

    /// Wait before retransmission number `k + 1`: `min(t1 * 2^k, t2)`.
    pub fn interval(&self, k: u32) -> u64 {
        let mut v = self.t1_ms;
        for _ in 0..k {
            if v >= self.t2_ms {
                break;
            }
            v = v.saturating_mul(2);
        }
        v.min(self.t2_ms)
    }
}
