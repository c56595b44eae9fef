//! Fixed-effect absorption by alternating weighted demeaning.

use crate::error::{Error, Result};

/// A categorical factor: one level code per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub name: String,
    pub codes: Vec<u32>,
    pub n_levels: usize,
}

impl Factor {
    /// Build from arbitrary keys, assigning level codes in order of first appearance.
    pub fn from_keys<K: Ord + Clone>(name: impl Into<String>, keys: impl IntoIterator<Item = K>) -> Self {
        let mut index = std::collections::BTreeMap::new();
        let codes = keys
            .into_iter()
            .map(|k| {
                let next = index.len() as u32;
                *index.entry(k).or_insert(next)
            })
            .collect();
        Factor {
            name: name.into(),
            codes,
            n_levels: index.len(),
        }
    }

    /// Single-level factor, i.e. an intercept.
    pub fn constant(n: usize) -> Self {
        Factor {
            name: "(intercept)".into(),
            codes: vec![0; n],
            n_levels: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

/// Outcome of demeaning one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepInfo {
    pub sweeps: usize,
    pub last_change: f64,
}

/// Remove every factor's weighted level means from `v` in place.
///
/// Each sweep projects out the factors in order; iteration stops when the
/// largest mean removed during a sweep falls below `tol`.
pub fn demean_in_place(v: &mut [f64], w: &[f64], factors: &[Factor], tol: f64, max_sweeps: usize) -> Result<SweepInfo> {
    if factors.is_empty() {
        return Ok(SweepInfo { sweeps: 0, last_change: 0.0 });
    }
    let sums_w: Vec<Vec<f64>> = factors
        .iter()
        .map(|f| {
            let mut s = vec![0.0; f.n_levels];
            for (c, wi) in f.codes.iter().zip(w) {
                s[*c as usize] += wi;
            }
            s
        })
        .collect();
    let mut acc: Vec<Vec<f64>> = factors.iter().map(|f| vec![0.0; f.n_levels]).collect();
    let mut change = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        change = 0.0f64;
        for ((f, sw), a) in factors.iter().zip(&sums_w).zip(acc.iter_mut()) {
            a.iter_mut().for_each(|x| *x = 0.0);
            for ((c, vi), wi) in f.codes.iter().zip(v.iter()).zip(w) {
                a[*c as usize] += wi * vi;
            }
            for (x, s) in a.iter_mut().zip(sw) {
                *x = if *s > 0.0 { *x / s } else { 0.0 };
                change = change.max(x.abs());
            }
            for (c, vi) in f.codes.iter().zip(v.iter_mut()) {
                *vi -= a[*c as usize];
            }
        }
        // a single factor is exact after one pass
        if change < tol || factors.len() == 1 {
            return Ok(SweepInfo { sweeps: sweep, last_change: change });
        }
    }
    Err(Error::NotConverged { sweeps: max_sweeps, change })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_factor_is_group_demeaning() {
        let mut v = vec![1.0, 3.0, 10.0, 20.0, 30.0];
        let w = vec![1.0, 1.0, 1.0, 1.0, 2.0];
        let f = Factor::from_keys("g", ["a", "a", "b", "b", "b"]);
        demean_in_place(&mut v, &w, &[f], 1e-12, 100).unwrap();
        let gb = (10.0 + 20.0 + 60.0) / 4.0;
        let expected = [-1.0, 1.0, 10.0 - gb, 20.0 - gb, 30.0 - gb];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn two_factors_leave_no_level_means() {
        let n = 60;
        let g1 = Factor::from_keys("a", (0..n).map(|i| i % 7));
        let g2 = Factor::from_keys("b", (0..n).map(|i| (i * 3) % 5));
        let w: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut v: Vec<f64> = (0..n).map(|i| ((i * i) % 11) as f64).collect();
        demean_in_place(&mut v, &w, &[g1.clone(), g2.clone()], 1e-12, 10_000).unwrap();
        for f in [&g1, &g2] {
            let mut s = vec![0.0; f.n_levels];
            for i in 0..n {
                s[f.codes[i] as usize] += w[i] * v[i];
            }
            assert!(s.iter().all(|x| x.abs() < 1e-9));
        }
    }

    #[test]
    fn reports_non_convergence() {
        let g1 = Factor::from_keys("a", [0, 0, 1, 1, 2]);
        let g2 = Factor::from_keys("b", [0, 1, 1, 2, 2]);
        let mut v = vec![1.0, -2.0, 5.0, 0.5, 3.0];
        let r = demean_in_place(&mut v, &[1.0; 5], &[g1, g2], 1e-30, 2);
        assert!(matches!(r, Err(Error::NotConverged { sweeps: 2, .. })));
    }
}
