//! Identification: probability limits, projection statistics, bounds and
//! attenuation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estim::RegressionFit;
use crate::exposure::ExposureVector;
use crate::stats;

/// Linear projection E_p = λE + v with Cov(E, v) = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionStats {
    pub lambda: f64,
    pub var_e: f64,
    pub sigma2_v: f64,
    /// var_e / sigma2_v; infinite when the proxy has no residual noise.
    pub kappa: f64,
    /// Set when a negative σ²_v beyond rounding was clamped to zero.
    pub clamped: bool,
}

impl ProjectionStats {
    pub fn from_parts(lambda: f64, var_e: f64, sigma2_v: f64) -> Result<Self> {
        if !(var_e > 0.0) {
            return Err(Error::Degenerate("Var(E) must be > 0".into()));
        }
        if sigma2_v < 0.0 {
            return Err(Error::InvalidArgument("sigma2_v must be >= 0".into()));
        }
        Ok(ProjectionStats {
            lambda,
            var_e,
            sigma2_v,
            kappa: if sigma2_v > 0.0 { var_e / sigma2_v } else { f64::INFINITY },
            clamped: false,
        })
    }

    /// Build from λ and κ directly (Var(E) normalised to 1).
    pub fn from_lambda_kappa(lambda: f64, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::InvalidArgument("kappa must be >= 0".into()));
        }
        Ok(ProjectionStats {
            lambda,
            var_e: 1.0,
            sigma2_v: if kappa.is_infinite() { 0.0 } else { 1.0 / kappa },
            kappa,
            clamped: false,
        })
    }
}

/// plim β̂ = βλκ/(λ²κ + 1); β/λ as κ → ∞.
pub fn plim(beta: f64, s: &ProjectionStats) -> Result<f64> {
    if !(s.kappa >= 0.0) {
        return Err(Error::InvalidArgument(format!("kappa {} must be >= 0", s.kappa)));
    }
    if s.kappa.is_infinite() {
        if s.lambda == 0.0 {
            return Err(Error::Degenerate("lambda = 0 with no projection noise".into()));
        }
        return Ok(beta / s.lambda);
    }
    Ok(beta * s.lambda * s.kappa / (s.lambda * s.lambda * s.kappa + 1.0))
}

/// λ, Var(E), σ²_v and κ from paired true and proxy values.
pub fn projection_stats(e: &[f64], e_p: &[f64]) -> Result<ProjectionStats> {
    if e.len() != e_p.len() || e.len() < 2 {
        return Err(Error::InvalidArgument("projection needs two equal-length vectors of length >= 2".into()));
    }
    let var_e = stats::variance(e);
    if !(var_e > 0.0) {
        return Err(Error::Degenerate("true exposure has zero variance".into()));
    }
    let lambda = stats::covariance(e_p, e) / var_e;
    let raw = stats::variance(e_p) - lambda * lambda * var_e;
    let (sigma2_v, clamped) = if raw < 0.0 { (0.0, raw < -1e-12) } else { (raw, false) };
    Ok(ProjectionStats {
        lambda,
        var_e,
        sigma2_v,
        kappa: if sigma2_v > 0.0 { var_e / sigma2_v } else { f64::INFINITY },
        clamped,
    })
}

/// [`projection_stats`] over the occupations both vectors share.
pub fn projection_stats_vectors(truth: &ExposureVector, proxy: &ExposureVector) -> Result<ProjectionStats> {
    let (e, p): (Vec<f64>, Vec<f64>) = truth
        .values
        .iter()
        .filter_map(|(k, v)| proxy.get(k).map(|q| (*v, q)))
        .unzip();
    if e.len() < 2 {
        return Err(Error::DisjointSupport("true and proxy exposure".into()));
    }
    projection_stats(&e, &p)
}

/// Interval between baseline and reweighted coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedSet {
    /// Magnitude interval.
    pub low: f64,
    pub high: f64,
    pub width: f64,
    /// (|β̂| − |β̃|) / |β̂|.
    pub attenuation_share: f64,
    pub baseline: f64,
    pub reweighted: f64,
    pub signed_low: f64,
    pub signed_high: f64,
    /// Both endpoints carry the same sign.
    pub same_sign: bool,
    pub term: String,
}

impl IdentifiedSet {
    pub fn contains_magnitude(&self, beta: f64) -> bool {
        (self.low..=self.high).contains(&beta.abs())
    }

    pub fn contains_signed(&self, beta: f64) -> bool {
        (self.signed_low..=self.signed_high).contains(&beta)
    }
}

pub fn bounds_from_coefs(baseline: f64, reweighted: f64) -> Result<IdentifiedSet> {
    if !baseline.is_finite() || !reweighted.is_finite() {
        return Err(Error::InvalidArgument("coefficients must be finite".into()));
    }
    if baseline == 0.0 {
        return Err(Error::Degenerate("baseline coefficient is zero; attenuation share undefined".into()));
    }
    let (a, b) = (baseline.abs(), reweighted.abs());
    let (low, high) = (a.min(b), a.max(b));
    Ok(IdentifiedSet {
        low,
        high,
        width: high - low,
        attenuation_share: (a - b) / a,
        baseline,
        reweighted,
        signed_low: baseline.min(reweighted),
        signed_high: baseline.max(reweighted),
        same_sign: baseline.signum() == reweighted.signum(),
        term: String::new(),
    })
}

/// Bounds from two fits of the same specification, on coefficient `term`.
pub fn bounds(baseline: &RegressionFit, reweighted: &RegressionFit, term: &str) -> Result<IdentifiedSet> {
    if baseline.terms != reweighted.terms {
        return Err(Error::InvalidArgument(
            "baseline and reweighted fits use different specifications".into(),
        ));
    }
    let mut set = bounds_from_coefs(baseline.coef_of(term)?, reweighted.coef_of(term)?)?;
    set.term = term.to_string();
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanDecomposition {
    pub span_base: f64,
    pub span_rw: f64,
    pub span_ratio: f64,
    pub closure: f64,
    /// Zero baseline span: the ratio is 1 when both spans are zero and infinite otherwise.
    pub degenerate: bool,
}

fn span(x: &[f64]) -> f64 {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

pub fn span_decomposition_coefs(baseline: &[f64], reweighted: &[f64]) -> Result<SpanDecomposition> {
    if baseline.len() != reweighted.len() || baseline.len() < 2 {
        return Err(Error::InvalidArgument("span decomposition needs two equal-length lists of >= 2 waves".into()));
    }
    let (sb, sr) = (span(baseline), span(reweighted));
    let (ratio, degenerate) = if sb > 0.0 {
        (sr / sb, false)
    } else if sr == 0.0 {
        (1.0, true)
    } else {
        (f64::INFINITY, true)
    };
    Ok(SpanDecomposition {
        span_base: sb,
        span_rw: sr,
        span_ratio: ratio,
        closure: 1.0 - ratio,
        degenerate,
    })
}

pub fn span_decomposition(baseline: &[RegressionFit], reweighted: &[RegressionFit], term: &str) -> Result<SpanDecomposition> {
    let b = baseline.iter().map(|f| f.coef_of(term)).collect::<Result<Vec<_>>>()?;
    let r = reweighted.iter().map(|f| f.coef_of(term)).collect::<Result<Vec<_>>>()?;
    span_decomposition_coefs(&b, &r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityRun {
    pub skew: f64,
    pub attenuation_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub n: usize,
    /// NaN when the skew or the attenuation share is constant.
    pub spearman_rho: f64,
    /// One-sided p-value for ρ > 0; exact permutation for n ≤ 8.
    pub p_value: f64,
    /// Attenuation strictly increases when runs are sorted by skew.
    pub strictly_increasing: bool,
    pub undefined: bool,
    pub pass: bool,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    // Heap's algorithm
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut out = vec![a.clone()];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

pub fn monotonicity_report(runs: &[MonotonicityRun]) -> Result<MonotonicityReport> {
    let n = runs.len();
    if n < 3 {
        return Err(Error::InvalidArgument("monotonicity needs at least three runs".into()));
    }
    let skew: Vec<f64> = runs.iter().map(|r| r.skew).collect();
    let att: Vec<f64> = runs.iter().map(|r| r.attenuation_share).collect();
    let undefined = stats::variance(&skew) == 0.0 || stats::variance(&att) == 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| skew[*a].total_cmp(&skew[*b]));
    let strictly_increasing = !undefined
        && order.windows(2).all(|w| skew[w[0]] < skew[w[1]] && att[w[0]] < att[w[1]]);
    if undefined {
        return Ok(MonotonicityReport {
            n,
            spearman_rho: f64::NAN,
            p_value: f64::NAN,
            strictly_increasing: false,
            undefined: true,
            pass: false,
        });
    }
    let rho = stats::spearman(&skew, &att);
    let p_value = if n <= 8 {
        let rx = stats::average_ranks(&skew);
        let ry = stats::average_ranks(&att);
        let perms = permutations(n);
        let hits = perms
            .iter()
            .filter(|p| {
                let permuted: Vec<f64> = p.iter().map(|&i| ry[i]).collect();
                stats::pearson(&rx, &permuted) >= rho - 1e-12
            })
            .count();
        hits as f64 / perms.len() as f64
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho).max(1e-300)).sqrt();
        let half = stats::student_t_two_sided_p(t, df)? / 2.0;
        if t > 0.0 {
            half
        } else {
            1.0 - half
        }
    };
    Ok(MonotonicityReport {
        n,
        spearman_rho: rho,
        p_value,
        strictly_increasing,
        undefined: false,
        pass: rho > 0.0 && p_value < 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plim_limits() {
        let s = ProjectionStats::from_lambda_kappa(1.0, 3.0).unwrap();
        assert!((plim(1.0, &s).unwrap() - 0.75).abs() < 1e-15);
        let s = ProjectionStats::from_parts(2.0, 1.0, 0.0).unwrap();
        assert_eq!(plim(1.0, &s).unwrap(), 0.5);
        let s = ProjectionStats::from_lambda_kappa(2.0, 0.0).unwrap();
        assert_eq!(plim(1.0, &s).unwrap(), 0.0);
        assert!(ProjectionStats::from_lambda_kappa(1.0, -1.0).is_err());
    }

    #[test]
    fn amplification_when_lambda_below_one() {
        let s = ProjectionStats::from_lambda_kappa(0.5, 100.0).unwrap();
        assert!(plim(1.0, &s).unwrap().abs() > 1.0);
    }

    #[test]
    fn projection_trivial_cases() {
        let e = [0.1, 0.4, 0.2, 0.9, 0.5];
        let s = projection_stats(&e, &e).unwrap();
        assert!((s.lambda - 1.0).abs() < 1e-12 && s.sigma2_v.abs() < 1e-15);
        let twice: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
        let s = projection_stats(&e, &twice).unwrap();
        assert!((s.lambda - 2.0).abs() < 1e-12 && s.sigma2_v.abs() < 1e-14);
        assert!(projection_stats(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn bounds_arithmetic() {
        let s = bounds_from_coefs(-0.70, -0.38).unwrap();
        assert!((s.low - 0.38).abs() < 1e-12 && (s.high - 0.70).abs() < 1e-12);
        assert!((s.width - 0.32).abs() < 1e-12);
        let s = bounds_from_coefs(-70.09, -38.28).unwrap();
        assert!((s.attenuation_share - 0.454).abs() < 0.0005);
        let s = bounds_from_coefs(-0.139, -0.010).unwrap();
        assert!((s.attenuation_share - 0.928).abs() < 0.0005);
        let s = bounds_from_coefs(0.2, 0.2).unwrap();
        assert_eq!((s.width, s.attenuation_share), (0.0, 0.0));
        assert!(bounds_from_coefs(0.0, 1.0).is_err());
    }

    #[test]
    fn span_cases() {
        let b = [-0.113, -0.120, -0.110, -0.091, -0.083];
        let r = [-0.014, -0.017, -0.009, -0.003, -0.021];
        let d = span_decomposition_coefs(&b, &r).unwrap();
        assert!((d.span_base - 0.037).abs() < 1e-12);
        assert!((d.span_rw - 0.018).abs() < 1e-12);
        assert!((d.span_ratio - 0.49).abs() < 0.005);
        let flat = span_decomposition_coefs(&[0.1, 0.1], &[0.2, 0.2]).unwrap();
        assert!(flat.degenerate && flat.span_ratio == 1.0);
        let same = span_decomposition_coefs(&b, &b).unwrap();
        assert_eq!((same.span_ratio, same.closure), (1.0, 0.0));
        assert!(span_decomposition_coefs(&b, &r[..3]).is_err());
    }

    #[test]
    fn monotone_sweep_passes() {
        let runs: Vec<MonotonicityRun> = [(0.1, 0.04), (0.5, 0.46), (1.0, 0.75), (1.5, 0.77)]
            .iter()
            .map(|(s, a)| MonotonicityRun { skew: *s, attenuation_share: *a })
            .collect();
        let r = monotonicity_report(&runs).unwrap();
        assert_eq!(r.spearman_rho, 1.0);
        assert!((r.p_value - 1.0 / 24.0).abs() < 1e-12);
        assert!(r.strictly_increasing && r.pass);

        let flat: Vec<MonotonicityRun> = (0..4).map(|i| MonotonicityRun { skew: 1.0, attenuation_share: i as f64 }).collect();
        let r = monotonicity_report(&flat).unwrap();
        assert!(r.undefined && !r.pass && r.spearman_rho.is_nan());
    }

    #[test]
    fn large_sweep_uses_t_approximation() {
        let runs: Vec<MonotonicityRun> = (0..12)
            .map(|i| MonotonicityRun { skew: i as f64, attenuation_share: (i as f64).sqrt() })
            .collect();
        let r = monotonicity_report(&runs).unwrap();
        assert!(r.pass && r.p_value < 1e-6);
        let rev: Vec<MonotonicityRun> = runs.iter().map(|m| MonotonicityRun { skew: -m.skew, ..*m }).collect();
        let r = monotonicity_report(&rev).unwrap();
        assert!(!r.pass && r.p_value > 0.99);
    }

    proptest! {
        #[test]
        fn plim_is_continuous_and_matches_limits(lambda in 0.05f64..5.0, beta in -3.0f64..3.0) {
            let big = ProjectionStats::from_lambda_kappa(lambda, 1e12).unwrap();
            prop_assert!((plim(beta, &big).unwrap() - beta / lambda).abs() < 1e-9 * (1.0 + (beta / lambda).abs()));
            let unit = ProjectionStats::from_lambda_kappa(1.0, lambda).unwrap();
            prop_assert!((plim(beta, &unit).unwrap() - beta * lambda / (lambda + 1.0)).abs() < 1e-12);
        }

        #[test]
        fn projection_identity(v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..40)) {
            let e: Vec<f64> = v.iter().map(|p| p.0).collect();
            let ep: Vec<f64> = v.iter().map(|p| p.0 * 1.5 + p.1).collect();
            prop_assume!(stats::variance(&e) > 1e-6);
            let s = projection_stats(&e, &ep).unwrap();
            prop_assert!((stats::variance(&ep) - (s.lambda * s.lambda * s.var_e + s.sigma2_v)).abs() < 1e-10);
        }

        #[test]
        fn bounds_are_ordered(b in -5.0f64..5.0, r in -5.0f64..5.0) {
            prop_assume!(b != 0.0);
            let s = bounds_from_coefs(b, r).unwrap();
            prop_assert!(s.low <= s.high);
            prop_assert!((s.width - (s.high - s.low)).abs() < 1e-15);
            prop_assert!(s.attenuation_share <= 1.0);
        }
    }
}
