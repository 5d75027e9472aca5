//! Caching scores computed directly from an item's full history. The
//! incremental policies must agree with these.

use super::LfuWindow;
use crate::trace::ItemHistory;

/// Requests for the item among the last `window` global requests, where
/// `global_position` is the 1-based index of the current request.
pub fn lfu_delta_score(history: &ItemHistory, global_position: u64, window: LfuWindow) -> f64 {
    let lower = match window {
        LfuWindow::Infinite => 0,
        LfuWindow::Requests(d) => global_position.saturating_sub(d),
    };
    history
        .positions
        .iter()
        .filter(|&&p| p > lower && p <= global_position)
        .count() as f64
}

/// `−(now − τ_{k−n'+1})` with `n' = min(n, k)`; `−∞` without history.
pub fn lru_n_score(history: &ItemHistory, now: f64, n: usize) -> f64 {
    let k = history.count();
    if k == 0 || n == 0 {
        return f64::NEG_INFINITY;
    }
    let n = n.min(k);
    (history.arrival_times[k - n] - now) + 0.0
}

/// `now − τ_next`; `−∞` when the item is never requested again.
pub fn fif_score(next_arrival: Option<f64>, now: f64) -> f64 {
    match next_arrival {
        Some(t) => now - t,
        None => f64::NEG_INFINITY,
    }
}
