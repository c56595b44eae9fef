//! Restricted wild cluster bootstrap (WCR) with Rademacher weights.
//!
//! Works on the partialled-out design, so each draw costs O(G·K): cluster
//! scores and their projections are precomputed once.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::wls::{checked_inverse, gram, Prepared};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats;

pub const MIN_CLUSTERS: usize = 5;
pub const MIN_REPLICATIONS: usize = 99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub term: String,
    pub coef: f64,
    pub t: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
    pub level: f64,
    pub replications: usize,
    pub clusters: usize,
    pub seed: u64,
}

/// Test β_term = `null` and build a symmetric percentile-t interval at `level`.
pub fn wild_cluster_bootstrap(
    pr: &Prepared,
    term: usize,
    null: f64,
    replications: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    if !pr.clustered || pr.clusters < MIN_CLUSTERS {
        return Err(Error::InsufficientClusters {
            found: if pr.clustered { pr.clusters } else { 0 },
            required: MIN_CLUSTERS,
        });
    }
    if replications < MIN_REPLICATIONS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPLICATIONS} bootstrap replications"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("confidence level must lie in (0, 1)".into()));
    }
    let engine = Engine::new(pr, term, null)?;
    let t_obs = (engine.beta_term - null) / engine.se_obs;
    let t_star: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r);
            let v: Vec<f64> = (0..engine.g).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            engine.t_star(&v)
        })
        .collect();

    let exceed = t_star.iter().filter(|t| t.abs() >= t_obs.abs()).count();
    let mut abs_t: Vec<f64> = t_star.iter().map(|t| t.abs()).collect();
    abs_t.sort_by(f64::total_cmp);
    let q = stats::quantile_sorted(&abs_t, level);
    Ok(BootstrapResult {
        term: pr.names[term].clone(),
        coef: engine.beta_term,
        t: t_obs,
        ci_low: engine.beta_term - q * engine.se_obs,
        ci_high: engine.beta_term + q * engine.se_obs,
        p: exceed as f64 / replications as f64,
        level,
        replications,
        clusters: engine.g,
        seed,
    })
}

/// Precomputed cluster pieces for fast bootstrap draws.
struct Engine {
    g: usize,
    term: usize,
    c: f64,
    beta_term: f64,
    se_obs: f64,
    /// Column g is (X'WX)⁻¹ s_g, where s_g is cluster g's restricted score.
    b: DMatrix<f64>,
    /// a_j · s_g.
    alpha: Vec<f64>,
    /// M_g a_j with M_g = X_g'W_gX_g.
    mvec: Vec<DVector<f64>>,
}

impl Engine {
    fn new(pr: &Prepared, term: usize, null: f64) -> Result<Engine> {
        let k = pr.x.len();
        if term >= k {
            return Err(Error::InvalidArgument(format!("term index {term} out of range")));
        }
        let n = pr.n;
        let g_count = pr.clusters;
        let c = pr.small_sample_factor();

        let a = checked_inverse(&gram(&pr.x, &pr.w), &pr.names)?;
        let xty = DVector::from_fn(k, |j, _| pr.x[j].iter().zip(&pr.y).zip(&pr.w).map(|((x, y), w)| x * y * w).sum());
        let beta = &a * xty;

        // unrestricted clustered SE for the observed t
        let resid: Vec<f64> = (0..n).map(|i| pr.y[i] - (0..k).map(|j| pr.x[j][i] * beta[j]).sum::<f64>()).collect();
        let aj: DVector<f64> = a.row(term).transpose();
        let mut proj = vec![0.0; g_count];
        for i in 0..n {
            let xa: f64 = (0..k).map(|j| pr.x[j][i] * aj[j]).sum();
            proj[pr.cluster[i] as usize] += xa * pr.w[i] * resid[i];
        }
        let se_obs = (c * proj.iter().map(|v| v * v).sum::<f64>()).sqrt();

        // restricted fit: y - null·x_term on the remaining columns
        let others: Vec<usize> = (0..k).filter(|&j| j != term).collect();
        let y_r: Vec<f64> = (0..n).map(|i| pr.y[i] - null * pr.x[term][i]).collect();
        let mut beta_r = DVector::zeros(k);
        beta_r[term] = null;
        if !others.is_empty() {
            let xo: Vec<Vec<f64>> = others.iter().map(|&j| pr.x[j].clone()).collect();
            let names: Vec<String> = others.iter().map(|&j| pr.names[j].clone()).collect();
            let ao = checked_inverse(&gram(&xo, &pr.w), &names)?;
            let xoy = DVector::from_fn(xo.len(), |j, _| xo[j].iter().zip(&y_r).zip(&pr.w).map(|((x, y), w)| x * y * w).sum());
            let br = ao * xoy;
            for (pos, &j) in others.iter().enumerate() {
                beta_r[j] = br[pos];
            }
        }
        let e_r: Vec<f64> = (0..n).map(|i| pr.y[i] - (0..k).map(|j| pr.x[j][i] * beta_r[j]).sum::<f64>()).collect();

        let mut s = DMatrix::<f64>::zeros(k, g_count);
        let mut m: Vec<DMatrix<f64>> = vec![DMatrix::zeros(k, k); g_count];
        for i in 0..n {
            let g = pr.cluster[i] as usize;
            let wi = pr.w[i];
            for p in 0..k {
                s[(p, g)] += pr.x[p][i] * wi * e_r[i];
                for q in 0..k {
                    m[g][(p, q)] += pr.x[p][i] * wi * pr.x[q][i];
                }
            }
        }
        Ok(Engine {
            g: g_count,
            term,
            c,
            beta_term: beta[term],
            se_obs,
            b: &a * &s,
            alpha: (0..g_count).map(|g| aj.dot(&s.column(g))).collect(),
            mvec: m.iter().map(|mg| mg * &aj).collect(),
        })
    }

    /// Bootstrap t for cluster multipliers `v`; y* = Xβ_r + v_g e_r.
    fn t_star(&self, v: &[f64]) -> f64 {
        let mut d = DVector::zeros(self.b.nrows());
        for g in 0..self.g {
            d.axpy(v[g], &self.b.column(g), 1.0);
        }
        let mut ss = 0.0;
        for h in 0..self.g {
            let sc = v[h] * self.alpha[h] - self.mvec[h].dot(&d);
            ss += sc * sc;
        }
        let se = (self.c * ss).sqrt();
        if se > 0.0 {
            d[self.term] / se
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estim::absorb::Factor;
    use crate::estim::wls::{fit_prepared, prepare, WlsProblem};
    use rand_distr::{Distribution, StandardNormal};

    fn problem(seed: u64, g: usize, beta: f64) -> WlsProblem {
        let mut rng = rng::stream(seed, 0);
        let per = 30;
        let n = g * per;
        let cl: Vec<usize> = (0..n).map(|i| i / per).collect();
        let shock: Vec<f64> = (0..g).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| beta * x[i] + 0.5 * z[i] + 0.5 * shock[cl[i]] + { let e: f64 = StandardNormal.sample(&mut rng); e })
            .collect();
        WlsProblem::new(y, vec![x, z], vec!["x".into(), "z".into()], vec![1.0; n])
            .cluster(Some(Factor::from_keys("cl", cl)))
    }

    #[test]
    fn deterministic_per_seed() {
        let pr = prepare(&problem(1, 12, 0.3)).unwrap();
        let a = wild_cluster_bootstrap(&pr, 0, 0.0, 199, 0.95, 7).unwrap();
        let b = wild_cluster_bootstrap(&pr, 0, 0.0, 199, 0.95, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observed_t_matches_crve() {
        let pr = prepare(&problem(2, 20, 0.3)).unwrap();
        let fit = fit_prepared(&pr).unwrap();
        let bs = wild_cluster_bootstrap(&pr, 0, 0.0, 99, 0.95, 1).unwrap();
        assert!((bs.t - fit.t[0]).abs() < 1e-9);
        assert!(bs.ci_low < fit.coef[0] && fit.coef[0] < bs.ci_high);
    }

    #[test]
    fn fast_draw_matches_explicit_refit() {
        let pr = prepare(&problem(3, 8, 0.0)).unwrap();
        let null = 0.1;
        let engine = Engine::new(&pr, 0, null).unwrap();
        let v: Vec<f64> = (0..pr.clusters).map(|g| if g % 3 == 0 { -1.0 } else { 1.0 }).collect();

        // restricted fit of y - null·x on z, then an explicit refit on y*
        let xo = vec![pr.x[1].clone()];
        let ao = checked_inverse(&gram(&xo, &pr.w), &["z".to_string()]).unwrap();
        let b_z = ao[(0, 0)]
            * (0..pr.n).map(|i| xo[0][i] * (pr.y[i] - null * pr.x[0][i]) * pr.w[i]).sum::<f64>();
        let mut star = pr.clone();
        star.y = (0..pr.n)
            .map(|i| {
                let fitted = null * pr.x[0][i] + b_z * pr.x[1][i];
                fitted + v[pr.cluster[i] as usize] * (pr.y[i] - fitted)
            })
            .collect();
        let fit = fit_prepared(&star).unwrap();
        let t_brute = (fit.coef[0] - null) / fit.se[0];
        assert!((t_brute - engine.t_star(&v)).abs() < 1e-9);
    }

    #[test]
    fn rejects_few_clusters_and_reps() {
        let pr = prepare(&problem(4, 4, 0.0)).unwrap();
        assert!(matches!(
            wild_cluster_bootstrap(&pr, 0, 0.0, 999, 0.95, 1),
            Err(Error::InsufficientClusters { found: 4, required: 5 })
        ));
        let pr = prepare(&problem(4, 6, 0.0)).unwrap();
        assert!(wild_cluster_bootstrap(&pr, 0, 0.0, 50, 0.95, 1).is_err());
    }
}
