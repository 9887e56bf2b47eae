use std::cmp::Ordering;

use super::grid::GridResult;
use crate::error::{Error, Result};

/// Ranking used for base-model selection: accuracy descending, then
/// validation loss ascending, then the printed key.
pub fn rank_order(a: &GridResult, b: &GridResult) -> Ordering {
    b.test_accuracy
        .total_cmp(&a.test_accuracy)
        .then(a.val_loss.total_cmp(&b.val_loss))
        .then_with(|| a.key().name_key().cmp(&b.key().name_key()))
}

/// The `k` best grid results in rank order.
pub fn select_base_models(results: &[GridResult], k: usize) -> Result<Vec<GridResult>> {
    if k == 0 || k > results.len() {
        return Err(Error::InvalidArgument(format!("k = {k} with {} results", results.len())));
    }
    let mut sorted = results.to_vec();
    sorted.sort_by(rank_order);
    sorted.truncate(k);
    Ok(sorted)
}
