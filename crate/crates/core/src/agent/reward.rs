use crate::policy::fif_score;
use crate::trace::ItemId;

/// Policy scores at one eviction from the FIF scores of each policy's
/// candidate (`None`: the policy proposed nothing).
///
/// Candidates are ranked by increasing FIF score; a candidate scores
/// `|E| − 1 − #{candidates with a strictly lower FIF score}`, so ties share a
/// score. Policies without a candidate get the mean of the assigned scores;
/// with no candidate at all every policy gets 0.
pub fn policy_scores(fif_scores: &[Option<f64>]) -> Vec<f64> {
    let top = fif_scores.len().saturating_sub(1) as f64;
    let present: Vec<f64> = fif_scores.iter().flatten().copied().collect();
    let assigned: Vec<Option<f64>> = fif_scores
        .iter()
        .map(|s| {
            s.map(|s| {
                let lower = present.iter().filter(|o| **o < s).count();
                top - lower as f64
            })
        })
        .collect();
    let given: Vec<f64> = assigned.iter().flatten().copied().collect();
    let mean = if given.is_empty() {
        0.0
    } else {
        given.iter().sum::<f64>() / given.len() as f64
    };
    assigned.into_iter().map(|s| s.unwrap_or(mean)).collect()
}

/// Policy scores for one request, given each policy's eviction candidate and
/// the next request time of any item (`None`: never requested again).
pub fn fif_rank_reward(
    candidates: &[Option<ItemId>],
    next_arrival: impl Fn(ItemId) -> Option<f64>,
    now: f64,
) -> Vec<f64> {
    let scores: Vec<Option<f64>> = candidates
        .iter()
        .map(|c| c.map(|item| fif_score(next_arrival(item), now)))
        .collect();
    policy_scores(&scores)
}
