//! Conjugate Gaussian observation model: Normal likelihood with known
//! variance, Normal prior on the mean. Component parameters stay
//! integrated out; clusters carry only counts and per-dimension sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_4;

/// Known-variance Normal likelihood with a Normal prior on the mean.
/// Multivariate points apply the same model to each dimension
/// independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussModel {
    pub mu0: f64,
    pub tau2: f64,
    pub sigma2: f64,
}

impl GaussModel {
    pub fn new(mu0: f64, tau2: f64, sigma2: f64) -> Result<Self> {
        if !(tau2 > 0.0) || !tau2.is_finite() {
            return Err(Error::domain(format!(
                "prior variance must be positive, got {tau2}"
            )));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::domain(format!(
                "observation variance must be positive, got {sigma2}"
            )));
        }
        if !mu0.is_finite() {
            return Err(Error::domain(format!("prior mean must be finite, got {mu0}")));
        }
        Ok(GaussModel { mu0, tau2, sigma2 })
    }
}

/// Sufficient statistics of one cluster: member count and per-dimension
/// sums. A live cluster always has n >= 1; removing the last member
/// deletes the cluster rather than leaving an empty record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStat {
    pub n: u64,
    pub sum: Vec<f64>,
}

impl ClusterStat {
    pub fn empty(dims: usize) -> Self {
        ClusterStat {
            n: 0,
            sum: vec![0.0; dims],
        }
    }

    pub fn singleton(x: &[f64]) -> Self {
        ClusterStat {
            n: 1,
            sum: x.to_vec(),
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.sum.len());
        self.n += 1;
        for (s, v) in self.sum.iter_mut().zip(x) {
            *s += v;
        }
    }

    /// Remove one member. Returns true when the cluster emptied.
    pub fn remove(&mut self, x: &[f64]) -> bool {
        debug_assert!(self.n >= 1);
        self.n -= 1;
        for (s, v) in self.sum.iter_mut().zip(x) {
            *s -= v;
        }
        self.n == 0
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

fn predictive_1d(model: &GaussModel, n: u64, sum: f64, x: f64) -> f64 {
    let prec = 1.0 / model.tau2 + n as f64 / model.sigma2;
    let m = (model.mu0 / model.tau2 + sum / model.sigma2) / prec;
    let v = model.sigma2 + 1.0 / prec;
    let d = x - m;
    -0.5 * (LN_2PI + v.ln() + d * d / v)
}

/// Log posterior-predictive density of `x` given the cluster's current
/// members (empty stat means the prior predictive). Dimensions are
/// independent, so a multivariate point contributes the sum of
/// per-dimension terms.
pub fn predictive_log_density(model: &GaussModel, stat: &ClusterStat, x: &[f64]) -> f64 {
    debug_assert_eq!(stat.sum.len(), x.len());
    x.iter()
        .zip(&stat.sum)
        .map(|(&xi, &si)| predictive_1d(model, stat.n, si, xi))
        .sum()
}

fn evidence_1d(model: &GaussModel, xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n == 0 {
        return 0.0;
    }
    let s: f64 = xs.clone().sum();
    let q: f64 = xs.map(|x| x * x).sum();
    let a = n as f64 / model.sigma2 + 1.0 / model.tau2;
    let b = s / model.sigma2 + model.mu0 / model.tau2;
    let c = q / model.sigma2 + model.mu0 * model.mu0 / model.tau2;
    -0.5 * n as f64 * (LN_2PI + model.sigma2.ln()) - 0.5 * (model.tau2 * a).ln()
        + 0.5 * (b * b / a - c)
}

/// Log marginal likelihood of a set of points sharing one component,
/// with the component mean integrated out. Closed form; used by the
/// exact-posterior oracles.
pub fn log_evidence(model: &GaussModel, members: &[&[f64]]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let dims = members[0].len();
    (0..dims)
        .map(|d| evidence_1d(model, members.iter().map(move |p| p[d])))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}, diff {}", (a - b).abs());
    }

    #[test]
    fn prior_predictive_matches_integral() {
        // N(0; 0, 2) = 1/sqrt(4 pi); cross-checked by numeric integration
        let m = GaussModel::new(0.0, 1.0, 1.0).unwrap();
        let got = predictive_log_density(&m, &ClusterStat::empty(1), &[0.0]);
        close(got, -1.2655121234846454, 1e-12);
    }

    #[test]
    fn predictive_concentrates_on_sample_mean() {
        let m = GaussModel::new(0.0, 1.0, 1.0).unwrap();
        let c = 3.0;
        let n = 1_000_000_000u64;
        let stat = ClusterStat {
            n,
            sum: vec![c * n as f64],
        };
        // limit is N(c, sigma2)
        let got = predictive_log_density(&m, &stat, &[c]);
        close(got, -0.5 * LN_2PI, 1e-6);
        let got_off = predictive_log_density(&m, &stat, &[c + 1.0]);
        close(got_off, -0.5 * (LN_2PI + 1.0), 1e-6);
    }

    #[test]
    fn degenerate_prior_pins_mean() {
        let m = GaussModel::new(5.0, 1e-12, 1.0).unwrap();
        let stat = ClusterStat {
            n: 10,
            sum: vec![-30.0],
        };
        // posterior mean must stay at mu0; peak of predictive is there
        let at_5 = predictive_log_density(&m, &stat, &[5.0]);
        let nearby = predictive_log_density(&m, &stat, &[5.0 + 1e-3]);
        assert!(at_5 > nearby);
        let prec = 1.0 / m.tau2 + 10.0 / m.sigma2;
        let mean = (m.mu0 / m.tau2 + -30.0 / m.sigma2) / prec;
        close(mean, 5.0, 1e-6);
    }

    #[test]
    fn evidence_empty_is_zero() {
        let m = GaussModel::new(0.0, 1.0, 1.0).unwrap();
        assert_eq!(log_evidence(&m, &[]), 0.0);
    }

    #[test]
    fn evidence_single_point_equals_prior_predictive() {
        let m = GaussModel::new(0.5, 2.0, 0.3).unwrap();
        for &x in &[-1.0, 0.0, 2.5] {
            let ev = log_evidence(&m, &[&[x]]);
            let pred = predictive_log_density(&m, &ClusterStat::empty(1), &[x]);
            close(ev, pred, 1e-12);
        }
    }

    #[test]
    fn evidence_equals_sequential_predictive_chain() {
        // the chain rule over members must reproduce the closed form
        let m = GaussModel::new(0.3, 1.7, 0.05).unwrap();
        let xs = [0.1, 0.2, -0.4, 0.15, 3.0];
        let members: Vec<&[f64]> = xs.iter().map(std::slice::from_ref).collect();
        let closed = log_evidence(&m, &members);
        let mut stat = ClusterStat::empty(1);
        let mut chain = 0.0;
        for &x in &xs {
            chain += predictive_log_density(&m, &stat, &[x]);
            stat.add(&[x]);
        }
        close(closed, chain, 1e-9);
    }

    #[test]
    fn evidence_translation_equivariant() {
        let shift = 7.25;
        let a = GaussModel::new(0.0, 1.0, 0.5).unwrap();
        let b = GaussModel::new(shift, 1.0, 0.5).unwrap();
        let xs = [0.3, -1.2, 0.9];
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let ma: Vec<&[f64]> = xs.iter().map(std::slice::from_ref).collect();
        let mb: Vec<&[f64]> = shifted.iter().map(std::slice::from_ref).collect();
        close(log_evidence(&a, &ma), log_evidence(&b, &mb), 1e-9);
    }

    #[test]
    fn multivariate_is_product_over_dims() {
        let m = GaussModel::new(0.0, 1.0, 1.0).unwrap();
        let stat = ClusterStat {
            n: 2,
            sum: vec![1.0, -2.0],
        };
        let joint = predictive_log_density(&m, &stat, &[0.5, 0.5]);
        let d0 = predictive_1d(&m, 2, 1.0, 0.5);
        let d1 = predictive_1d(&m, 2, -2.0, 0.5);
        close(joint, d0 + d1, 1e-12);
    }

    #[test]
    fn stat_add_remove_roundtrip() {
        let mut s = ClusterStat::empty(1);
        s.add(&[2.0]);
        s.add(&[3.0]);
        assert_eq!(s.n, 2);
        assert!(!s.remove(&[3.0]));
        assert!(s.remove(&[2.0]));
        assert!(s.is_empty());
    }

    #[test]
    fn model_rejects_bad_params() {
        assert!(GaussModel::new(0.0, 0.0, 1.0).is_err());
        assert!(GaussModel::new(0.0, 1.0, -1.0).is_err());
        assert!(GaussModel::new(f64::INFINITY, 1.0, 1.0).is_err());
    }
}
