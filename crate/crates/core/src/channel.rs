//! Rayleigh massive-MIMO channel synthesis and the hardening diagnostics
//! that justify blind combining.
//!
//! All K device channels are i.i.d. CN(0, 1) across M receive antennas. As M
//! grows, HᴴH/M concentrates on the identity (own-channel inner products
//! harden to a constant, cross-channel products vanish), which is what lets
//! the receiver combine with the composite channel alone.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mat::{cnorm_sq, CMat};

/// One channel realization: H = [h_1 ... h_K] (M × K) plus the composite
/// channel h̄ = Σ_k h_k the receiver estimates from a common pilot.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    h: CMat,
    h_bar: Vec<Complex64>,
    m: usize,
    k: usize,
}

impl ChannelSet {
    #[inline]
    pub fn h(&self) -> &CMat {
        &self.h
    }

    #[inline]
    pub fn h_bar(&self) -> &[Complex64] {
        &self.h_bar
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Wrap an explicit channel matrix, deriving the composite channel as the
    /// exact row sum (perfect composite estimation).
    pub fn from_matrix(h: CMat) -> Result<Self> {
        let (m, k) = (h.rows(), h.cols());
        if m == 0 || k == 0 {
            return Err(Error::InvalidInput("channel matrix must be non-empty".into()));
        }
        let h_bar: Vec<Complex64> = (0..m).map(|r| h.row(r).iter().sum()).collect();
        Ok(ChannelSet { h, h_bar, m, k })
    }

    /// Effective post-combining gain of device `k`: h_kᵀ h̄* / M. Hardens to 1.
    pub fn device_gain(&self, k: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..self.m {
            acc += self.h.get(m, k) * self.h_bar[m].conj();
        }
        acc / self.m as f64
    }
}

fn cn01<R: Rng>(rng: &mut R) -> Complex64 {
    // Unit-variance circularly symmetric complex Gaussian.
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Draw an M × K Rayleigh channel with i.i.d. CN(0, 1) entries.
pub fn sample_rayleigh<R: Rng>(m: usize, k: usize, rng: &mut R) -> Result<ChannelSet> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidInput(format!("channel needs m >= 1 and k >= 1, got {m} x {k}")));
    }
    ChannelSet::from_matrix(CMat::from_fn(m, k, |_, _| cn01(rng)))
}

/// Channel-hardening figure of merit: (1/K²) ‖HᴴH/M − I_K‖_F².
/// Expectation is 1/M for i.i.d. CN(0, 1) entries.
pub fn hardening_metric(cs: &ChannelSet) -> f64 {
    let (m, k) = (cs.m, cs.k);
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            let mut g = Complex64::new(0.0, 0.0);
            for r in 0..m {
                g += cs.h.get(r, i).conj() * cs.h.get(r, j);
            }
            let mut e = g / m as f64;
            if i == j {
                e -= 1.0;
            }
            acc += e.norm_sqr();
        }
    }
    acc / (k * k) as f64
}

/// Additive receiver noise block: L × M i.i.d. CN(0, σ²).
#[derive(Debug, Clone)]
pub struct NoiseBlock {
    n: CMat,
    sigma2: f64,
}

impl NoiseBlock {
    #[inline]
    pub fn n(&self) -> &CMat {
        &self.n
    }

    #[inline]
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Draw an L × M AWGN block with per-entry variance `sigma2`.
pub fn sample_awgn<R: Rng>(l: usize, m: usize, sigma2: f64, rng: &mut R) -> Result<NoiseBlock> {
    if sigma2 < 0.0 || !sigma2.is_finite() {
        return Err(Error::InvalidInput(format!("noise variance must be >= 0, got {sigma2}")));
    }
    let scale = (sigma2 / 2.0).sqrt();
    let n = CMat::from_fn(l, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    Ok(NoiseBlock { n, sigma2 })
}

/// Exact per-entry variance of the combined noise n̄ = N h̄*/M, conditional on
/// the realized channel: σ² ‖h̄‖² / M². Concentrates on σ² K / M.
pub fn post_combine_noise_var(cs: &ChannelSet, sigma2: f64) -> f64 {
    sigma2 * cnorm_sq(&cs.h_bar) / (cs.m * cs.m) as f64
}

/// Joint draw of the quantities the combined measurement actually depends
/// on: per-device gains g_k = h_kᵀ h̄*/M and the composite-channel energy
/// ‖h̄‖². Both are functions of C = HᴴH alone, which is complex Wishart
/// CW_K(M, I) and can be drawn by Bartlett decomposition in O(K²) samples
/// instead of O(MK); the joint distribution is identical to sampling H.
#[derive(Debug, Clone)]
pub struct CompositeGains {
    pub gains: Vec<Complex64>,
    pub h_bar_norm_sq: f64,
}

pub fn sample_composite_gains<R: Rng>(m: usize, k: usize, rng: &mut R) -> Result<CompositeGains> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidInput(format!("need m >= 1 and k >= 1, got {m} x {k}")));
    }
    if m < k {
        // Bartlett needs full column rank; fall back to the explicit channel.
        let cs = sample_rayleigh(m, k, rng)?;
        let gains = (0..k).map(|j| cs.device_gain(j)).collect();
        return Ok(CompositeGains { gains, h_bar_norm_sq: cnorm_sq(cs.h_bar()) });
    }

    use rand_distr::{Distribution, Gamma};
    // Lower-triangular Bartlett factor T: |T_jj|² ~ Gamma(M − j, 1) real,
    // T_jk ~ CN(0, 1) below the diagonal; C = T Tᴴ.
    let mut t = vec![Complex64::new(0.0, 0.0); k * k];
    for j in 0..k {
        let gamma = Gamma::new((m - j) as f64, 1.0)
            .map_err(|e| Error::InvalidInput(format!("gamma sampler: {e}")))?;
        t[j * k + j] = Complex64::new(gamma.sample(rng).sqrt(), 0.0);
        for c in 0..j {
            t[j * k + c] = cn01(rng);
        }
    }
    // w = Tᴴ 1, then C 1 = T w and 1ᴴ C 1 = ‖w‖².
    let mut w = vec![Complex64::new(0.0, 0.0); k];
    for (c, wc) in w.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in c..k {
            acc += t[j * k + c].conj();
        }
        *wc = acc;
    }
    let h_bar_norm_sq: f64 = w.iter().map(|x| x.norm_sqr()).sum();
    let gains = (0..k)
        .map(|j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..=j {
                acc += t[j * k + c] * w[c];
            }
            // (C 1)_j = conj(h_jᵀ h̄*), so conjugate back and normalize.
            acc.conj() / m as f64
        })
        .collect();
    Ok(CompositeGains { gains, h_bar_norm_sq })
}
