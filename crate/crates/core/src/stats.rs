//! Small statistics toolbox shared by the estimators and diagnostics.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Weighted mean; weights are frequency weights.
pub fn weighted_mean(x: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw
}

/// Population (divide-by-total-weight) variance.
pub fn weighted_variance(x: &[f64], w: &[f64]) -> f64 {
    let m = weighted_mean(x, w);
    let sw: f64 = w.iter().sum();
    x.iter().zip(w).map(|(a, b)| b * (a - m) * (a - m)).sum::<f64>() / sw
}

/// Population variance (divide by n).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / x.len() as f64
}

/// Population covariance (divide by n).
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1).
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    (variance(x) * n / (n - 1.0)).sqrt()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let c = covariance(x, y);
    let d = (variance(x) * variance(y)).sqrt();
    if d == 0.0 {
        f64::NAN
    } else {
        (c / d).clamp(-1.0, 1.0)
    }
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank ties. NaN when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

pub fn two_sided_normal_p(z: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(z.abs()))).min(1.0)
}

pub fn chi_squared_sf(x: f64, df: f64) -> Result<f64> {
    if x.is_nan() {
        return Ok(f64::NAN);
    }
    let dist = ChiSquared::new(df).map_err(|e| Error::InvalidArgument(format!("chi-squared df {df}: {e}")))?;
    Ok(dist.sf(x))
}

pub fn f_sf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    let dist = FisherSnedecor::new(df1, df2)
        .map_err(|e| Error::InvalidArgument(format!("F({df1}, {df2}): {e}")))?;
    if x.is_nan() {
        return Ok(f64::NAN);
    }
    Ok(dist.sf(x))
}

pub fn student_t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    use statrs::distribution::StudentsT;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(format!("t df {df}: {e}")))?;
    if t.is_nan() {
        return Ok(f64::NAN);
    }
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Holm-Bonferroni step-down decisions at family-wise level `alpha`.
pub fn holm(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut reject = vec![false; m];
    for (rank, &i) in idx.iter().enumerate() {
        if p[i] <= alpha / (m - rank) as f64 {
            reject[i] = true;
        } else {
            break;
        }
    }
    reject
}

/// Benjamini-Hochberg step-up decisions at false-discovery rate `q`.
pub fn benjamini_hochberg(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let cutoff = idx
        .iter()
        .enumerate()
        .filter(|(rank, &i)| p[i] <= (rank + 1) as f64 / m as f64 * q)
        .map(|(rank, _)| rank)
        .last();
    let mut reject = vec![false; m];
    if let Some(k) = cutoff {
        for &i in &idx[..=k] {
            reject[i] = true;
        }
    }
    reject
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_hand_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        // ranks (1,2,3) vs (3,1,2): d = (-2,1,1), 1 - 6*6/(3*8) = -0.5
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn holm_and_bh_textbook() {
        let p = [0.01, 0.04, 0.03, 0.005];
        assert_eq!(holm(&p, 0.05), vec![true, false, false, true]);
        assert_eq!(benjamini_hochberg(&p, 0.05), vec![true, true, true, true]);
        assert_eq!(benjamini_hochberg(&[0.2, 0.5], 0.1), vec![false, false]);
    }

    proptest! {
        #[test]
        fn holm_subset_of_raw_and_monotone(p in proptest::collection::vec(0.0f64..1.0, 1..30), a in 0.001f64..0.2) {
            let h = holm(&p, a);
            let h2 = holm(&p, a * 1.5);
            for i in 0..p.len() {
                if h[i] { prop_assert!(p[i] <= a); prop_assert!(h2[i]); }
            }
        }

        #[test]
        fn bh_nested_in_q(p in proptest::collection::vec(0.0f64..1.0, 1..30), q in 0.001f64..0.3) {
            let small = benjamini_hochberg(&p, q);
            let large = benjamini_hochberg(&p, q * 1.7);
            for i in 0..p.len() {
                if small[i] { prop_assert!(large[i]); }
            }
        }

        #[test]
        fn spearman_symmetric_and_bounded(
            xs in proptest::collection::vec(-100.0f64..100.0, 3..40)
        ) {
            let ys: Vec<f64> = xs.iter().rev().map(|v| v * v).collect();
            let a = spearman(&xs, &ys);
            let b = spearman(&ys, &xs);
            if a.is_finite() {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&a));
            }
        }
    }
}
