//! Deterministic, splittable random streams plus the distribution and
//! special-function primitives the samplers are built on.
//!
//! Every lane of a run owns one [`RngStream`]. Streams are keyed by
//! `(master_seed, lane_index)`: the same key always yields the same
//! sequence, and distinct lane indices select non-overlapping ChaCha
//! streams, so results never depend on thread scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A deterministic random stream for one lane.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    lane_index: u64,
    rng: ChaCha8Rng,
}

/// Serializable snapshot of a stream's position, used by checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub master_seed: u64,
    pub lane_index: u64,
    pub word_pos_lo: u64,
    pub word_pos_hi: u64,
}

impl RngStream {
    /// Create the stream for `(master_seed, lane_index)`.
    pub fn new(master_seed: u64, lane_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(lane_index);
        RngStream {
            master_seed,
            lane_index,
            rng,
        }
    }

    pub fn lane_index(&self) -> u64 {
        self.lane_index
    }

    pub fn state(&self) -> StreamState {
        let pos = self.rng.get_word_pos();
        StreamState {
            master_seed: self.master_seed,
            lane_index: self.lane_index,
            word_pos_lo: pos as u64,
            word_pos_hi: (pos >> 64) as u64,
        }
    }

    pub fn restore(state: &StreamState) -> Self {
        let mut stream = RngStream::new(state.master_seed, state.lane_index);
        let pos = (state.word_pos_hi as u128) << 64 | state.word_pos_lo as u128;
        stream.rng.set_word_pos(pos);
        stream
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in [0, n).
    pub fn uniform_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.rng.gen_range(0..n)
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Normal(mean, sd^2) draw.
    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Gamma(shape, 1) draw, strictly positive.
    ///
    /// Shapes below one go through the boosting identity
    /// Gamma(a) = Gamma(a+1) * U^(1/a), which `rand_distr` applies
    /// internally; tiny shapes therefore stay usable. Underflow to an
    /// exact zero is resampled away so callers can take logs.
    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        if !(shape > 0.0) || !shape.is_finite() {
            return Err(Error::domain(format!(
                "gamma shape must be positive and finite, got {shape}"
            )));
        }
        let dist = Gamma::new(shape, 1.0)
            .map_err(|e| Error::domain(format!("gamma({shape}): {e}")))?;
        loop {
            let draw = dist.sample(&mut self.rng);
            if draw > 0.0 {
                return Ok(draw);
            }
        }
    }

    /// Dirichlet draw from a concentration vector; entries stay positive
    /// and the result sums to one.
    pub fn dirichlet(&mut self, concentration: &[f64]) -> Result<Vec<f64>> {
        if concentration.len() < 2 {
            return Err(Error::domain(
                "dirichlet needs at least 2 concentration entries".to_string(),
            ));
        }
        if let Some(bad) = concentration.iter().find(|&&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::domain(format!(
                "dirichlet concentration entries must be positive, got {bad}"
            )));
        }
        let mut draws: Vec<f64> = Vec::with_capacity(concentration.len());
        for &a in concentration {
            draws.push(self.gamma(a)?);
        }
        let total: f64 = draws.iter().sum();
        for d in draws.iter_mut() {
            *d /= total;
            if *d <= 0.0 {
                // gamma draws can be subnormal relative to the total
                *d = f64::MIN_POSITIVE;
            }
        }
        let s: f64 = draws.iter().sum();
        for d in draws.iter_mut() {
            *d /= s;
        }
        Ok(draws)
    }

    /// Sample an index from unnormalized log-weights via max subtraction.
    pub fn categorical_log(&mut self, log_weights: &[f64]) -> Result<usize> {
        let max = log_weights
            .iter()
            .copied()
            .filter(|w| w.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::domain(
                "categorical_log: no finite log-weight".to_string(),
            ));
        }
        let mut total = 0.0;
        // two passes keep the hot path allocation-free for small K, which
        // is the common case in the sweeps
        for &w in log_weights {
            if w.is_finite() {
                total += (w - max).exp();
            }
        }
        let target = self.uniform() * total;
        let mut acc = 0.0;
        let mut last_finite = 0;
        for (i, &w) in log_weights.iter().enumerate() {
            if w.is_finite() {
                acc += (w - max).exp();
                last_finite = i;
                if acc > target {
                    return Ok(i);
                }
            }
        }
        Ok(last_finite)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// log of the sum of exponentials, max-subtracted.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values
        .iter()
        .filter(|v| v.is_finite())
        .map(|&v| (v - max).exp())
        .sum();
    max + sum.ln()
}

// Lanczos coefficients, g = 7, 9 terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!(
            "log_gamma requires x > 0, got {x}"
        )));
    }
    Ok(log_gamma_unchecked(x))
}

/// `log_gamma` without the domain check; callers guarantee x > 0.
pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the Lanczos series in its accurate range
        let s = (std::f64::consts::PI * x).sin();
        return std::f64::consts::PI.ln() - s.ln() - log_gamma_unchecked(1.0 - x);
    }
    let xm1 = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (xm1 + i as f64);
    }
    let t = xm1 + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (xm1 + 0.5) * t.ln() - t + acc.ln()
}

/// log(n!) through the gamma function.
pub fn log_factorial(n: u64) -> f64 {
    log_gamma_unchecked(n as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 0);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_lane_differs() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn different_seed_differs() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(43, 0);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn lane_streams_uncorrelated() {
        // pairwise correlation smoke test between adjacent lanes
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let n = 20_000;
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.uniform();
            let y = b.uniform();
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let var_a = saa / nf - (sa / nf).powi(2);
        let var_b = sbb / nf - (sb / nf).powi(2);
        let corr = cov / (var_a * var_b).sqrt();
        assert!(corr.abs() < 0.03, "lane correlation too high: {corr}");
    }

    #[test]
    fn state_roundtrip_resumes_sequence() {
        let mut a = RngStream::new(99, 3);
        for _ in 0..37 {
            a.next_u64();
        }
        let snap = a.state();
        let mut b = RngStream::restore(&snap);
        for _ in 0..50 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn gamma_moments() {
        let mut s = RngStream::new(1, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let d = s.gamma(2.0).unwrap();
            sum += d;
            sumsq += d * d;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((1.99..=2.01).contains(&mean), "gamma mean {mean}");
        assert!((1.97..=2.03).contains(&var), "gamma var {var}");
    }

    #[test]
    fn gamma_small_shape_positive() {
        let mut s = RngStream::new(2, 0);
        for _ in 0..1_000_000 {
            let d = s.gamma(0.25).unwrap();
            assert!(d > 0.0);
        }
    }

    #[test]
    fn gamma_rejects_bad_shape() {
        let mut s = RngStream::new(3, 0);
        assert!(s.gamma(0.0).is_err());
        assert!(s.gamma(-1.0).is_err());
        assert!(s.gamma(f64::NAN).is_err());
    }

    #[test]
    fn dirichlet_symmetric_mean() {
        let mut s = RngStream::new(4, 0);
        let n = 1_000_000;
        let mut first = 0.0;
        for _ in 0..n {
            first += s.dirichlet(&[1.0, 1.0]).unwrap()[0];
        }
        let mean = first / n as f64;
        assert!((0.499..=0.501).contains(&mean), "dirichlet mean {mean}");
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut s = RngStream::new(5, 0);
        let conc = [0.25, 0.25, 0.25, 0.25];
        for _ in 0..1000 {
            let d = s.dirichlet(&conc).unwrap();
            let total: f64 = d.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn dirichlet_variance_small_concentration() {
        // Dirichlet variance a(s-a)/(s^2(s+1)) with a=0.25, s=1 is 0.09375
        let mut s = RngStream::new(6, 0);
        let conc = [0.25, 0.25, 0.25, 0.25];
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = s.dirichlet(&conc).unwrap()[0];
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((0.089..=0.097).contains(&var), "dirichlet var {var}");
    }

    #[test]
    fn dirichlet_rejects_nonpositive() {
        let mut s = RngStream::new(7, 0);
        assert!(s.dirichlet(&[1.0, 0.0]).is_err());
        assert!(s.dirichlet(&[1.0]).is_err());
    }

    #[test]
    fn categorical_degenerate() {
        let mut s = RngStream::new(8, 0);
        for _ in 0..100 {
            assert_eq!(
                s.categorical_log(&[0.0, f64::NEG_INFINITY]).unwrap(),
                0
            );
        }
    }

    #[test]
    fn categorical_uniform_frequencies() {
        let mut s = RngStream::new(9, 0);
        let lw = [3.7, 3.7, 3.7];
        let n = 1_000_000;
        let mut counts = [0u64; 3];
        for _ in 0..n {
            counts[s.categorical_log(&lw).unwrap()] += 1;
        }
        for &c in &counts {
            let f = c as f64 / n as f64;
            assert!((0.329..=0.338).contains(&f), "uniform freq {f}");
        }
    }

    #[test]
    fn categorical_shift_invariant() {
        // (-1000, -1001) must behave like (0, -1): P(0) = e/(1+e)
        let mut s = RngStream::new(10, 0);
        let n = 1_000_000;
        let mut hits = 0u64;
        for _ in 0..n {
            if s.categorical_log(&[-1000.0, -1001.0]).unwrap() == 0 {
                hits += 1;
            }
        }
        let f = hits as f64 / n as f64;
        assert!((0.727..=0.736).contains(&f), "shifted freq {f}");
    }

    #[test]
    fn categorical_all_neg_inf_is_error() {
        let mut s = RngStream::new(11, 0);
        assert!(s
            .categorical_log(&[f64::NEG_INFINITY, f64::NEG_INFINITY])
            .is_err());
    }

    #[test]
    fn gamma_superposition() {
        // sum of P Gamma(alpha/P) draws behaves like Gamma(alpha)
        let alpha = 2.0;
        let p = 8;
        let mut s = RngStream::new(12, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let mut total = 0.0;
            for _ in 0..p {
                total += s.gamma(alpha / p as f64).unwrap();
            }
            sum += total;
            sumsq += total * total;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((mean - alpha).abs() / alpha < 0.02, "superposed mean {mean}");
        assert!((var - alpha).abs() / alpha < 0.02, "superposed var {var}");
    }

    // reference values computed with mpmath at 40 digits
    const LGAMMA_REFS: &[(f64, f64)] = &[
        (1e-3, 6.907178885383853682512),
        (0.01, 4.599479878042021722514),
        (0.1, 2.25271265173420595987),
        (0.5, 0.5723649429247000870717),
        (1.0, 0.0),
        (1.5, -0.1207822376352452223455),
        (2.0, 0.0),
        (5.0, 3.178053830347945619647),
        (10.0, 12.80182748008146961121),
        (123.456, 469.6055471299294687301),
        (1e3, 5905.220423209181211826),
        (1e5, 1051287.708973656894901),
        (1e7, 151180949.3694739139401),
    ];

    #[test]
    fn log_gamma_reference_values() {
        for &(x, want) in LGAMMA_REFS {
            let got = log_gamma(x).unwrap();
            let tol = 1e-10_f64.max(want.abs() * 4e-15);
            assert!(
                (got - want).abs() <= tol,
                "lgamma({x}) = {got}, want {want}, err {}",
                (got - want).abs()
            );
        }
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-3.0).is_err());
    }

    #[test]
    fn log_factorial_small() {
        assert!((log_factorial(0) - 0.0).abs() < 1e-12);
        assert!((log_factorial(4) - 24f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn log_sum_exp_basics() {
        let v = log_sum_exp(&[0.0, 0.0]);
        assert!((v - 2f64.ln()).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
