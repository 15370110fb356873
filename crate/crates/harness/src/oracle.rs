//! Exhaustive search over integer allocations for small instances.

use varalloc_core::allocation::{objective_rp, NormOrder};

use crate::error::{HarnessError, Result};

pub const MAX_ARMS: usize = 4;
pub const MAX_HORIZON: usize = 60;

/// Relative tolerance under which two objective values count as tied.
const TIE_RTOL: f64 = 1e-12;

/// The allocation minimising `R_p` among all compositions of `horizon` into
/// `variances.len()` positive parts. Ties go to the lexicographically
/// smallest allocation.
pub fn oracle_best_allocation(variances: &[f64], p: NormOrder, horizon: usize) -> Result<Vec<usize>> {
    let k = variances.len();
    if k == 0 {
        return Err(HarnessError::config("empty variance profile"));
    }
    if k > MAX_ARMS || horizon > MAX_HORIZON {
        return Err(HarnessError::TooLarge(format!(
            "K = {k}, T = {horizon}; the limits are K <= {MAX_ARMS}, T <= {MAX_HORIZON}"
        )));
    }
    if horizon < k {
        return Err(HarnessError::config(format!("horizon {horizon} is smaller than the number of arms {k}")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut counts = vec![1; k];
    // Compositions in lexicographic order, so a later candidate replaces the
    // incumbent only when strictly better.
    loop {
        let head: usize = counts[..k - 1].iter().sum();
        if head < horizon {
            counts[k - 1] = horizon - head;
            let v = objective_rp(&counts, variances, p)?;
            let better = match &best {
                None => true,
                Some((b, _)) => v < b - TIE_RTOL * b.abs(),
            };
            if better {
                best = Some((v, counts.clone()));
            }
        }
        if !advance(&mut counts[..k - 1], horizon - 1) {
            break;
        }
    }
    Ok(best.expect("at least one composition exists").1)
}

/// Next vector of positive parts with sum at most `cap`, lexicographically.
fn advance(head: &mut [usize], cap: usize) -> bool {
    let mut i = head.len();
    while i > 0 {
        i -= 1;
        head[i] += 1;
        if head.iter().sum::<usize>() <= cap {
            return true;
        }
        head[i] = 1;
    }
    false
}
