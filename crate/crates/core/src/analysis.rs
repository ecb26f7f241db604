//! Closed-form sampling theory for the random-sampling component.

use serde::Serialize;

/// Above this population size products are accumulated in log space.
const LOG_SPACE_THRESHOLD: u64 = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InclusionProbability {
    pub exact: f64,
    pub lower_bound: f64,
}

/// Probability that `n` configurations drawn without replacement from a
/// population of `total` contain a fixed optimal set of size `beta`, and
/// the `((n - beta + 1) / total)^beta` lower bound.
pub fn prob_optimal_in_sample(n: u64, total: u64, beta: u64) -> InclusionProbability {
    if n < beta || beta > total {
        return InclusionProbability { exact: 0.0, lower_bound: 0.0 };
    }
    let exact = if total > LOG_SPACE_THRESHOLD {
        (0..beta)
            .map(|i| ((n - i) as f64).ln() - ((total - i) as f64).ln())
            .sum::<f64>()
            .exp()
    } else {
        (0..beta).map(|i| (n - i) as f64 / (total - i) as f64).product()
    };
    let lower_bound = ((n - beta + 1) as f64 / total as f64).powi(beta as i32);
    InclusionProbability { exact, lower_bound }
}

/// Expected number of draws until all `beta` optimal configurations have
/// been sampled: `beta / (beta + 1) * (total + 1)`.
pub fn expected_samples_to_optimal(total: u64, beta: u64) -> f64 {
    beta as f64 / (beta as f64 + 1.0) * (total as f64 + 1.0)
}

/// Upper bound on the number of distinct configurations when directions are
/// resolved to precision `epsilon`: `p_count * 4 pi / epsilon^2`.
pub fn config_space_cardinality_bound(p_count: u64, epsilon: f64) -> f64 {
    p_count as f64 * 4.0 * std::f64::consts::PI / (epsilon * epsilon)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryReport {
    pub total: u64,
    pub beta: u64,
    pub n: u64,
    pub p_count: u64,
    pub epsilon: f64,
    pub prob_optimal_exact: f64,
    pub prob_optimal_lower_bound: f64,
    pub expected_samples: f64,
    pub config_space_bound: f64,
}

pub fn theory_report(n: u64, total: u64, beta: u64, p_count: u64, epsilon: f64) -> TheoryReport {
    let p = prob_optimal_in_sample(n, total, beta);
    TheoryReport {
        total,
        beta,
        n,
        p_count,
        epsilon,
        prob_optimal_exact: p.exact,
        prob_optimal_lower_bound: p.lower_bound,
        expected_samples: expected_samples_to_optimal(total, beta),
        config_space_bound: config_space_cardinality_bound(p_count, epsilon),
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Exhaustive enumeration over small populations. Targets are the
    //! elements `0..beta`.

    /// Fraction of `n`-subsets of `0..total` containing every target.
    pub fn inclusion_by_enumeration(n: u32, total: u32, beta: u32) -> (u64, u64) {
        let targets = (1u32 << beta) - 1;
        let mut hit = 0;
        let mut all = 0;
        for mask in 0u32..(1 << total) {
            if mask.count_ones() == n {
                all += 1;
                if mask & targets == targets {
                    hit += 1;
                }
            }
        }
        (hit, all)
    }

    /// Distribution of the draw index at which the last target appears in a
    /// uniformly random ordering: every placement of the `beta` targets
    /// among `total` slots is equally likely. Returns counts per `m` and the
    /// number of placements.
    pub fn stopping_distribution(total: u32, beta: u32) -> (Vec<u64>, u64) {
        let mut counts = vec![0u64; total as usize + 1];
        let mut all = 0;
        for mask in 0u32..(1 << total) {
            if mask.count_ones() == beta {
                all += 1;
                let last = 32 - mask.leading_zeros();
                counts[last as usize] += 1;
            }
        }
        (counts, all)
    }
}
