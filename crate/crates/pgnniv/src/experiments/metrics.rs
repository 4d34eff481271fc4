//! Metric suite for scoring trained networks: loss curves, smoothing,
//! integrated prediction error, relative-error statistics, and run-to-run
//! comparisons.

use crate::network::TrainingTrace;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("runs are not comparable: {reason}")]
    NotComparable { reason: String },
}

/// Root-mean-square error per training iteration.
pub fn rmse_curve(trace: &TrainingTrace) -> Result<Vec<f64>, MetricsError> {
    if trace.records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    Ok(trace.records.iter().map(|r| r.mse.sqrt()).collect())
}

/// Penalty value per training iteration.
pub fn pen_curve(trace: &TrainingTrace) -> Result<Vec<f64>, MetricsError> {
    if trace.records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    Ok(trace.records.iter().map(|r| r.pen).collect())
}

/// Centered moving average with the window clipped to the series at the
/// edges. `window = 1` is the identity.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let n = series.len();
    let left = (window - 1) / 2;
    let right = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(n.saturating_sub(1));
            let slice = &series[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Smoothed RMSE at a 1-based iteration, the quantity convergence claims
/// are stated on.
pub fn smoothed_rmse_at(
    trace: &TrainingTrace,
    window: usize,
    iteration: usize,
) -> Result<f64, MetricsError> {
    let rmse = rmse_curve(trace)?;
    if iteration == 0 || iteration > rmse.len() {
        return Err(MetricsError::NotComparable {
            reason: format!("iteration {iteration} outside the {}-step trace", rmse.len()),
        });
    }
    Ok(moving_average(&rmse, window)[iteration - 1])
}

/// Root of the integrated squared difference between two curves over
/// `interval`, by composite Simpson quadrature on `nodes` equally spaced
/// points (`nodes` must be odd).
pub fn l2_error_with_nodes(
    predictor: impl Fn(f64) -> f64,
    oracle: impl Fn(f64) -> f64,
    interval: (f64, f64),
    nodes: usize,
) -> f64 {
    assert!(nodes >= 3 && nodes % 2 == 1, "Simpson needs an odd node count >= 3");
    assert!(interval.1 > interval.0, "empty interval");
    let h = (interval.1 - interval.0) / (nodes - 1) as f64;
    let f = |x: f64| {
        let d = predictor(x) - oracle(x);
        d * d
    };
    let mut acc = f(interval.0) + f(interval.1);
    for k in 1..nodes - 1 {
        let x = interval.0 + h * k as f64;
        acc += f(x) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    (acc * h / 3.0).max(0.0).sqrt()
}

/// Default quadrature: 1001 nodes.
pub fn l2_error(
    predictor: impl Fn(f64) -> f64,
    oracle: impl Fn(f64) -> f64,
    interval: (f64, f64),
) -> f64 {
    l2_error_with_nodes(predictor, oracle, interval, 1001)
}

/// The seven relative-error statistics plus bookkeeping. Quartiles follow
/// linear interpolation of the empirical CDF (the "type 7" convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub min: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    /// Records dropped because the true value was zero.
    pub excluded: usize,
}

/// Relative errors `(pred - truth) / truth`; zero-truth records are
/// excluded and counted.
pub fn relative_errors(predictions: &[f64], truths: &[f64]) -> (Vec<f64>, usize) {
    assert_eq!(predictions.len(), truths.len());
    let mut errors = Vec::with_capacity(predictions.len());
    let mut excluded = 0;
    for (&p, &t) in predictions.iter().zip(truths) {
        if t == 0.0 {
            excluded += 1;
        } else {
            errors.push((p - t) / t);
        }
    }
    (errors, excluded)
}

fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = lo + 1;
    if hi >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn relative_error_stats(predictions: &[f64], truths: &[f64]) -> ErrorStats {
    let (errors, excluded) = relative_errors(predictions, truths);
    stats_of(&errors, excluded)
}

/// Statistics of an arbitrary error sample (used for pre-computed errors).
pub fn stats_of(errors: &[f64], excluded: usize) -> ErrorStats {
    let count = errors.len();
    if count == 0 {
        return ErrorStats {
            min: f64::NAN,
            q1: f64::NAN,
            q2: f64::NAN,
            q3: f64::NAN,
            max: f64::NAN,
            mean: f64::NAN,
            stderr: f64::NAN,
            count,
            excluded,
        };
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let mean = errors.iter().sum::<f64>() / count as f64;
    let stderr = if count > 1 {
        let var =
            errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (count - 1) as f64;
        (var / count as f64).sqrt()
    } else {
        0.0
    };
    ErrorStats {
        min: sorted[0],
        q1: quantile_type7(&sorted, 0.25),
        q2: quantile_type7(&sorted, 0.5),
        q3: quantile_type7(&sorted, 0.75),
        max: sorted[count - 1],
        mean,
        stderr,
        count,
        excluded,
    }
}

/// One run's RMSE curve keyed by seed; `None` marks a diverged run.
#[derive(Debug, Clone)]
pub struct SeedCurve {
    pub seed: u64,
    pub rmse: Option<Vec<f64>>,
}

/// Outcome of comparing run family `a` against `b` (typically constrained
/// against unconstrained).
#[derive(Debug, Clone)]
pub struct RunComparison {
    /// Fraction of (seed, iteration) pairs where `a`'s smoothed RMSE is
    /// below `b`'s; ties count one half.
    pub ordering_fraction: f64,
    /// Summed area under `a`'s smoothed curves over `b`'s.
    pub auc_ratio: f64,
    /// Seats where `a` beats `b` at the query iteration; ties count one
    /// half.
    pub wins_at_query: f64,
    /// Seeds compared on both sides.
    pub compared: usize,
    /// Seeds excluded because at least one side diverged.
    pub excluded_seeds: Vec<u64>,
}

/// Compares two run families seed by seed on their smoothed RMSE curves.
pub fn compare_runs(
    a: &[SeedCurve],
    b: &[SeedCurve],
    window: usize,
    query_iteration: usize,
) -> Result<RunComparison, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::NotComparable {
            reason: format!("{} seeds vs {}", a.len(), b.len()),
        });
    }
    let mut ordering_hits = 0.0;
    let mut ordering_total = 0usize;
    let mut auc_a = 0.0;
    let mut auc_b = 0.0;
    let mut wins = 0.0;
    let mut compared = 0usize;
    let mut excluded = Vec::new();
    for (ra, rb) in a.iter().zip(b) {
        if ra.seed != rb.seed {
            return Err(MetricsError::NotComparable {
                reason: format!("seed mismatch: {} vs {}", ra.seed, rb.seed),
            });
        }
        let (Some(ca), Some(cb)) = (&ra.rmse, &rb.rmse) else {
            excluded.push(ra.seed);
            continue;
        };
        if ca.len() != cb.len() {
            return Err(MetricsError::NotComparable {
                reason: format!("seed {}: {} vs {} iterations", ra.seed, ca.len(), cb.len()),
            });
        }
        if query_iteration == 0 || query_iteration > ca.len() {
            return Err(MetricsError::NotComparable {
                reason: format!("query iteration {query_iteration} outside the trace"),
            });
        }
        let sa = moving_average(ca, window);
        let sb = moving_average(cb, window);
        for (x, y) in sa.iter().zip(&sb) {
            ordering_hits += score(*x, *y);
            ordering_total += 1;
        }
        auc_a += sa.iter().sum::<f64>();
        auc_b += sb.iter().sum::<f64>();
        wins += score(sa[query_iteration - 1], sb[query_iteration - 1]);
        compared += 1;
    }
    if compared == 0 {
        return Err(MetricsError::NotComparable { reason: "no seed completed on both sides".into() });
    }
    Ok(RunComparison {
        ordering_fraction: ordering_hits / ordering_total as f64,
        auc_ratio: auc_a / auc_b,
        wins_at_query: wins,
        compared,
        excluded_seeds: excluded,
    })
}

fn score(a: f64, b: f64) -> f64 {
    if a < b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{TraceRecord, TrainingTrace};

    fn trace_of(mse: &[f64]) -> TrainingTrace {
        TrainingTrace {
            records: mse
                .iter()
                .enumerate()
                .map(|(i, &m)| TraceRecord { iteration: i + 1, mse: m, pen: 0.5, of: m + 0.5 })
                .collect(),
            final_full_loss: None,
        }
    }

    #[test]
    fn rmse_is_square_root_of_mse() {
        let curve = rmse_curve(&trace_of(&[4.0, 9.0])).unwrap();
        assert_eq!(curve, vec![2.0, 3.0]);
        let pens = pen_curve(&trace_of(&[4.0])).unwrap();
        assert_eq!(pens, vec![0.5]);
        assert_eq!(curve.len(), 2);
    }

    #[test]
    fn zero_loss_gives_zero_curves() {
        let curve = rmse_curve(&trace_of(&[0.0, 0.0, 0.0])).unwrap();
        assert!(curve.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn moving_average_cases() {
        let series = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(moving_average(&series, 1), series.to_vec());
        assert_eq!(moving_average(&series, 3), vec![0.5, 1.0, 2.0, 3.0, 3.5]);
        let constant = [2.5; 7];
        assert_eq!(moving_average(&constant, 4), constant.to_vec());
    }

    #[test]
    fn l2_error_analytic_cases() {
        // Identical curves.
        assert_eq!(l2_error(|q| q * q, |q| q * q, (0.0, 10.0)), 0.0);
        // Constant difference c integrates to c^2 * length.
        let e = l2_error(|_| 3.0, |_| 1.0, (0.0, 10.0));
        assert!((e - 2.0 * 10.0f64.sqrt()).abs() < 1e-10, "e = {e}");
        // Polynomial difference: integral of q^4 over [0, 10] is 10^5 / 5.
        let e = l2_error(|q| q * q, |_| 0.0, (0.0, 10.0));
        let want = (1e5 / 5.0f64).sqrt();
        assert!((e - want).abs() / want < 1e-8, "e = {e}");
    }

    #[test]
    fn l2_error_is_grid_independent_for_smooth_curves() {
        let f = |q: f64| q.powf(1.852) * 0.07 - 0.25 * q * q;
        let g = |q: f64| 0.99 * f(q) + 0.01;
        let coarse = l2_error_with_nodes(f, g, (0.0, 10.0), 1001);
        let fine = l2_error_with_nodes(f, g, (0.0, 10.0), 2001);
        assert!((coarse - fine).abs() / fine < 1e-6);
    }

    #[test]
    fn perfect_predictions_give_all_zero_statistics() {
        let truths = [1.0, -2.0, 3.5];
        let stats = relative_error_stats(&truths, &truths);
        assert_eq!(
            (stats.min, stats.q1, stats.q2, stats.q3, stats.max, stats.mean, stats.stderr),
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(stats.excluded, 0);
    }

    #[test]
    fn symmetric_errors_have_zero_median_and_mean() {
        // Errors engineered to be exactly [-1, 0, 1].
        let truths = [1.0, 1.0, 1.0];
        let preds = [0.0, 1.0, 2.0];
        let stats = relative_error_stats(&preds, &truths);
        assert_eq!(stats.q2, 0.0);
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.min, -1.0);
        assert_eq!(stats.max, 1.0);
        // Type-7 quartiles of [-1, 0, 1].
        assert_eq!(stats.q1, -0.5);
        assert_eq!(stats.q3, 0.5);
    }

    #[test]
    fn zero_truth_records_are_excluded_and_counted() {
        let stats = relative_error_stats(&[1.0, 2.0, 3.0], &[0.0, 2.0, 2.0]);
        assert_eq!(stats.excluded, 1);
        assert_eq!(stats.count, 2);
        assert_eq!(stats.mean, 0.25);
    }

    #[test]
    fn identical_run_families_split_the_ordering() {
        let curves = vec![
            SeedCurve { seed: 1, rmse: Some(vec![3.0, 2.0, 1.0]) },
            SeedCurve { seed: 2, rmse: Some(vec![4.0, 2.0, 1.5]) },
        ];
        let cmp = compare_runs(&curves, &curves, 1, 2).unwrap();
        assert_eq!(cmp.ordering_fraction, 0.5);
        assert_eq!(cmp.auc_ratio, 1.0);
        assert_eq!(cmp.wins_at_query, 1.0); // two ties at half each
        assert!(cmp.excluded_seeds.is_empty());
    }

    #[test]
    fn diverged_seed_is_excluded_and_flagged() {
        let a = vec![
            SeedCurve { seed: 1, rmse: Some(vec![1.0, 1.0]) },
            SeedCurve { seed: 2, rmse: None },
        ];
        let b = vec![
            SeedCurve { seed: 1, rmse: Some(vec![2.0, 2.0]) },
            SeedCurve { seed: 2, rmse: Some(vec![2.0, 2.0]) },
        ];
        let cmp = compare_runs(&a, &b, 1, 1).unwrap();
        assert_eq!(cmp.excluded_seeds, vec![2]);
        assert_eq!(cmp.compared, 1);
        assert_eq!(cmp.wins_at_query, 1.0);
        assert_eq!(cmp.ordering_fraction, 1.0);
    }

    #[test]
    fn mismatched_grids_are_contract_errors() {
        let a = vec![SeedCurve { seed: 1, rmse: Some(vec![1.0, 1.0]) }];
        let b = vec![SeedCurve { seed: 1, rmse: Some(vec![1.0]) }];
        assert!(matches!(compare_runs(&a, &b, 1, 1), Err(MetricsError::NotComparable { .. })));
        let c = vec![SeedCurve { seed: 9, rmse: Some(vec![1.0, 1.0]) }];
        assert!(matches!(compare_runs(&a, &c, 1, 1), Err(MetricsError::NotComparable { .. })));
    }

    #[test]
    fn smoothed_rmse_at_respects_bounds() {
        let trace = trace_of(&[9.0, 4.0, 1.0]);
        assert!(smoothed_rmse_at(&trace, 1, 2).is_ok());
        assert!(smoothed_rmse_at(&trace, 1, 4).is_err());
        assert!(smoothed_rmse_at(&trace, 1, 0).is_err());
    }
}
