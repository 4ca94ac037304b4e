//! Live resource counters for one scan: wall clock, tokens, and API cost.
//!
//! Cost is tracked in integer nano-USD so per-call accounting sums exactly.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::state::BudgetCounters;

pub const NANO_PER_USD: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetVerdict {
    Ok,
    SoftWarn,
    Exceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitingResource {
    Wall,
    Tokens,
    Cost,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetStatus {
    pub verdict: BudgetVerdict,
    pub limiting_resource: LimitingResource,
}

/// Limits for one scan. `wall_limit_s` defaults to the per-challenge budget
/// of 600 seconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetLimits {
    pub wall_limit_s: f64,
    pub token_limit: u64,
    pub cost_limit_usd: f64,
}

impl Default for BudgetLimits {
    fn default() -> Self {
        BudgetLimits { wall_limit_s: 600.0, token_limit: 200_000, cost_limit_usd: 1.0 }
    }
}

/// Shared, internally synchronized counters. Counters only ever increase.
#[derive(Debug)]
pub struct Budget {
    start: Instant,
    limits: BudgetLimits,
    tokens_used: AtomicU64,
    cost_used_nano: AtomicU64,
}

impl Budget {
    pub fn new(limits: BudgetLimits) -> Self {
        Budget {
            start: Instant::now(),
            limits,
            tokens_used: AtomicU64::new(0),
            cost_used_nano: AtomicU64::new(0),
        }
    }

    pub fn limits(&self) -> &BudgetLimits {
        &self.limits
    }

    pub fn wall_elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    /// Monotonic milliseconds since scan start.
    pub fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    pub fn wall_exceeded(&self) -> bool {
        self.wall_elapsed().as_secs_f64() >= self.limits.wall_limit_s
    }

    pub fn wall_remaining(&self) -> Duration {
        let limit = Duration::from_secs_f64(self.limits.wall_limit_s);
        limit.saturating_sub(self.wall_elapsed())
    }

    pub fn tokens_used(&self) -> u64 {
        self.tokens_used.load(Ordering::SeqCst)
    }

    pub fn cost_used_nano(&self) -> u64 {
        self.cost_used_nano.load(Ordering::SeqCst)
    }

    /// True when at least `tokens` of headroom remain and cost is not
    /// exhausted; used as the pre-flight check before an LLM call.
    pub fn has_llm_headroom(&self, tokens: u64) -> bool {
        let used = self.tokens_used();
        used + tokens <= self.limits.token_limit
            && self.cost_used_nano() < (self.limits.cost_limit_usd * NANO_PER_USD as f64) as u64
    }

    /// Record exact per-call usage; counters are monotonically nondecreasing.
    pub fn record_llm_usage(&self, tokens: u64, cost_nano: u64) {
        self.tokens_used.fetch_add(tokens, Ordering::SeqCst);
        self.cost_used_nano.fetch_add(cost_nano, Ordering::SeqCst);
    }

    pub fn counters(&self) -> BudgetCounters {
        BudgetCounters {
            wall_limit_s: self.limits.wall_limit_s,
            wall_elapsed_s: self.wall_elapsed().as_secs_f64(),
            token_limit: self.limits.token_limit,
            tokens_used: self.tokens_used(),
            cost_limit_usd: self.limits.cost_limit_usd,
            cost_used_usd: self.cost_used_nano() as f64 / NANO_PER_USD as f64,
        }
    }
}

/// Budget verdict over a counter snapshot: exceeded when any counter has
/// reached its limit, soft warning at 90% of any limit.
pub fn check_budget(c: &BudgetCounters) -> BudgetStatus {
    let ratios = [
        (LimitingResource::Wall, c.wall_elapsed_s / c.wall_limit_s.max(f64::MIN_POSITIVE)),
        (
            LimitingResource::Tokens,
            c.tokens_used as f64 / (c.token_limit.max(1)) as f64,
        ),
        (LimitingResource::Cost, c.cost_used_usd / c.cost_limit_usd.max(f64::MIN_POSITIVE)),
    ];
    for (res, ratio) in ratios {
        if ratio >= 1.0 {
            return BudgetStatus { verdict: BudgetVerdict::Exceeded, limiting_resource: res };
        }
    }
    for (res, ratio) in ratios {
        if ratio >= 0.9 {
            return BudgetStatus { verdict: BudgetVerdict::SoftWarn, limiting_resource: res };
        }
    }
    BudgetStatus { verdict: BudgetVerdict::Ok, limiting_resource: LimitingResource::None }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counters(wall: f64, tokens: u64, cost: f64) -> BudgetCounters {
        BudgetCounters {
            wall_limit_s: 600.0,
            wall_elapsed_s: wall,
            token_limit: 200_000,
            tokens_used: tokens,
            cost_limit_usd: 1.0,
            cost_used_usd: cost,
        }
    }

    #[test]
    fn exceeded_wall_at_601_of_600() {
        let status = check_budget(&counters(601.0, 0, 0.0));
        assert_eq!(status.verdict, BudgetVerdict::Exceeded);
        assert_eq!(status.limiting_resource, LimitingResource::Wall);
    }

    #[test]
    fn all_zero_is_ok() {
        let status = check_budget(&counters(0.0, 0, 0.0));
        assert_eq!(status.verdict, BudgetVerdict::Ok);
        assert_eq!(status.limiting_resource, LimitingResource::None);
    }

    #[test]
    fn soft_warn_at_90_percent_tokens() {
        let status = check_budget(&counters(0.0, 180_000, 0.0));
        assert_eq!(status.verdict, BudgetVerdict::SoftWarn);
        assert_eq!(status.limiting_resource, LimitingResource::Tokens);
    }

    #[test]
    fn usage_is_monotonic_and_exact() {
        let b = Budget::new(BudgetLimits::default());
        b.record_llm_usage(100, 300);
        b.record_llm_usage(50, 150);
        assert_eq!(b.tokens_used(), 150);
        assert_eq!(b.cost_used_nano(), 450);
        let c = b.counters();
        assert_eq!(c.tokens_used, 150);
    }

    #[test]
    fn headroom_check() {
        let b = Budget::new(BudgetLimits { token_limit: 100, ..Default::default() });
        assert!(b.has_llm_headroom(100));
        b.record_llm_usage(100, 0);
        assert!(!b.has_llm_headroom(1));
    }
}
