//! Stochastic uniform scalar quantization, count-vector bookkeeping, and the
//! k-means vector-quantization extension.
//!
//! Each device maps its scalar onto one of `Q` shared codebook levels by
//! randomized rounding between the two bracketing levels, which makes the
//! quantized value conditionally unbiased: E[x | s] = s for in-range s. The
//! receiver only ever needs the histogram of chosen indices (the count
//! vector), never per-device values.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared scalar codebook: `q` equally spaced levels covering `[lo, hi]`,
/// endpoints included, so every in-range source has bracketing codewords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    levels: Vec<f64>,
    lo: f64,
    hi: f64,
    q: usize,
    delta: f64,
    sq_norm: f64,
}

impl Codebook {
    #[inline]
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Number of levels Q.
    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    /// Bits per index, log2(Q).
    #[inline]
    pub fn bits(&self) -> f64 {
        (self.q as f64).log2()
    }

    /// Spacing between adjacent levels.
    #[inline]
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Σ levels², the codebook energy used by the detection-error bound.
    #[inline]
    pub fn sq_norm(&self) -> f64 {
        self.sq_norm
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("codebook serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cb: Codebook = serde_json::from_str(text)?;
        if cb.q < 2 || cb.levels.len() != cb.q {
            return Err(Error::InvalidInput("codebook record inconsistent".into()));
        }
        Ok(cb)
    }
}

/// Build the uniform codebook on `[lo, hi]` with `q` levels.
pub fn make_uniform_codebook(lo: f64, hi: f64, q: usize) -> Result<Codebook> {
    if q < 2 {
        return Err(Error::InvalidInput(format!("codebook needs q >= 2, got {q}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("codebook range must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    let delta = (hi - lo) / (q - 1) as f64;
    let levels: Vec<f64> = (0..q)
        .map(|i| if i == q - 1 { hi } else { lo + i as f64 * delta })
        .collect();
    let sq_norm = levels.iter().map(|u| u * u).sum();
    Ok(Codebook { levels, lo, hi, q, delta, sq_norm })
}

/// Randomized rounding of `s` onto the codebook; returns the 0-based level
/// index. With bracketing levels `u_l <= s < u_{l+1}`, the upper index is
/// chosen with probability `(s - u_l) / delta`, the lower one otherwise.
/// Out-of-range inputs clamp deterministically to the boundary codeword.
pub fn quantize_stochastic<R: Rng>(s: f64, cb: &Codebook, rng: &mut R) -> Result<usize> {
    if !s.is_finite() {
        return Err(Error::InvalidInput(format!("cannot quantize non-finite value {s}")));
    }
    if s < cb.lo {
        return Ok(0);
    }
    if s >= cb.hi {
        return Ok(cb.q - 1);
    }
    let mut l = ((s - cb.lo) / cb.delta) as usize;
    if l > cb.q - 2 {
        l = cb.q - 2;
    }
    // Guard against floating rounding putting s just below levels[l].
    if s < cb.levels[l] && l > 0 {
        l -= 1;
    }
    let gap = cb.levels[l + 1] - cb.levels[l];
    let p_up = (s - cb.levels[l]) / gap;
    if rng.gen::<f64>() < p_up {
        Ok(l + 1)
    } else {
        Ok(l)
    }
}

/// Level value for a 0-based index; `uᵀz` for the one-hot selection `z`.
pub fn dequantize(idx: usize, cb: &Codebook) -> Result<f64> {
    cb.levels
        .get(idx)
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("index {idx} out of range for q = {}", cb.q)))
}

/// Histogram of device index selections; the over-the-air computation target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountVector {
    counts: Vec<u32>,
    k_total: u32,
}

impl CountVector {
    #[inline]
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn k_total(&self) -> u32 {
        self.k_total
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.counts.len()
    }

    /// Number of occupied bins, the effective sparsity of the detection problem.
    pub fn support_size(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Count the chosen indices of all devices into a length-`q` histogram.
pub fn aggregate_counts(indices: &[usize], q: usize) -> Result<CountVector> {
    if indices.is_empty() {
        return Err(Error::InvalidInput("no device indices to aggregate".into()));
    }
    let mut counts = vec![0u32; q];
    for &idx in indices {
        if idx >= q {
            return Err(Error::InvalidInput(format!("device index {idx} out of range for q = {q}")));
        }
        counts[idx] += 1;
    }
    Ok(CountVector { counts, k_total: indices.len() as u32 })
}

/// Reconstruct the average source value from a (possibly fractional) count
/// estimate: `(1/k) uᵀ ẑ`. Raw detector outputs are accepted as-is.
pub fn reconstruct_average(z_hat: &[f64], cb: &Codebook, k: u32) -> Result<f64> {
    if z_hat.len() != cb.q {
        return Err(Error::ShapeMismatch(format!(
            "estimate length {} vs codebook q = {}",
            z_hat.len(),
            cb.q
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("device count k must be >= 1".into()));
    }
    let s: f64 = cb.levels.iter().zip(z_hat.iter()).map(|(u, z)| u * z).sum();
    Ok(s / k as f64)
}

/// Source distribution of the device-local values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceDist {
    /// Uniform on [0, 1].
    Uniform01,
    /// Gaussian truncated to [0, 1] (resampled until in range).
    TruncGauss { mean: f64, std: f64 },
    /// Symmetric Dirichlet on the probability simplex (vector sources).
    DirichletSym { alpha: f64 },
}

impl SourceDist {
    /// Draw one scalar source value.
    pub fn sample_scalar<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            SourceDist::Uniform01 => Ok(rng.gen::<f64>()),
            SourceDist::TruncGauss { mean, std } => {
                for _ in 0..10_000 {
                    let g: f64 = rng.sample::<f64, _>(StandardNormal) * std + mean;
                    if (0.0..=1.0).contains(&g) {
                        return Ok(g);
                    }
                }
                Err(Error::InvalidInput(format!(
                    "truncated Gaussian (mean {mean}, std {std}) puts no mass in [0,1]"
                )))
            }
            SourceDist::DirichletSym { .. } => Err(Error::InvalidInput(
                "Dirichlet source is vector-valued; use sample_vector".into(),
            )),
        }
    }

    /// Draw one vector source value of dimension `w`.
    pub fn sample_vector<R: Rng>(&self, w: usize, rng: &mut R) -> Result<Vec<f64>> {
        match *self {
            SourceDist::DirichletSym { alpha } => {
                if !(alpha > 0.0) {
                    return Err(Error::InvalidInput(format!("Dirichlet alpha must be > 0, got {alpha}")));
                }
                let gamma = Gamma::new(alpha, 1.0)
                    .map_err(|e| Error::InvalidInput(format!("gamma sampler: {e}")))?;
                let mut v: Vec<f64> = (0..w).map(|_| gamma.sample(rng)).collect();
                let total: f64 = v.iter().sum();
                if total <= 0.0 {
                    // All-zero draw has probability zero but guard anyway.
                    v = vec![1.0 / w as f64; w];
                } else {
                    for x in &mut v {
                        *x /= total;
                    }
                }
                Ok(v)
            }
            _ => (0..w).map(|_| self.sample_scalar(rng)).collect(),
        }
    }
}

/// Shared vector codebook of `q` centroids in dimension `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorCodebook {
    centroids: Vec<Vec<f64>>,
    w: usize,
}

impl VectorCodebook {
    #[inline]
    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.centroids.len()
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }
}

/// Result of a k-means fit, keeping the per-iteration objective so callers
/// can check the descent property.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub codebook: VectorCodebook,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub wcss_per_iter: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(v: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Train a `q`-centroid codebook on `samples` with Lloyd iterations after
/// weighted (k-means++) seeding. Deterministic for a fixed RNG stream; empty
/// clusters are reseeded to the sample farthest from its assigned centroid.
pub fn kmeans_fit<R: Rng>(
    samples: &[Vec<f64>],
    q: usize,
    iters: usize,
    rng: &mut R,
) -> Result<KmeansFit> {
    if q == 0 {
        return Err(Error::InvalidInput("kmeans needs q >= 1".into()));
    }
    if samples.len() < q {
        return Err(Error::InvalidInput(format!(
            "kmeans needs at least q = {q} samples, got {}",
            samples.len()
        )));
    }
    let w = samples[0].len();
    if samples.iter().any(|s| s.len() != w) {
        return Err(Error::ShapeMismatch("kmeans samples have mixed dimensions".into()));
    }

    // k-means++ seeding: first centroid uniform, then D²-weighted.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(q);
    centroids.push(samples[rng.gen_range(0..samples.len())].clone());
    let mut d2: Vec<f64> = samples.iter().map(|s| sq_dist(s, &centroids[0])).collect();
    while centroids.len() < q {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.gen::<f64>() * total;
            let mut chosen = samples.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                t -= d;
                if t <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..samples.len())
        };
        centroids.push(samples[pick].clone());
        for (i, s) in samples.iter().enumerate() {
            let d = sq_dist(s, centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let mut assign = vec![0usize; samples.len()];
    let mut wcss_per_iter = Vec::with_capacity(iters);
    for _ in 0..iters {
        // Assignment step.
        let mut wcss = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let (a, d) = nearest_centroid(s, &centroids);
            assign[i] = a;
            wcss += d;
        }
        wcss_per_iter.push(wcss);

        // Update step.
        let mut sums = vec![vec![0.0; w]; q];
        let mut counts = vec![0usize; q];
        for (s, &a) in samples.iter().zip(assign.iter()) {
            counts[a] += 1;
            for (acc, x) in sums[a].iter_mut().zip(s.iter()) {
                *acc += x;
            }
        }
        for c in 0..q {
            if counts[c] > 0 {
                for (m, acc) in centroids[c].iter_mut().zip(sums[c].iter()) {
                    *m = acc / counts[c] as f64;
                }
            } else {
                // Reseed to the sample farthest from its assigned centroid.
                let far = samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (i, sq_dist(s, &centroids[assign[i]])))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                centroids[c] = samples[far].clone();
            }
        }
    }

    Ok(KmeansFit { codebook: VectorCodebook { centroids, w }, wcss_per_iter })
}

/// Convenience wrapper returning only the trained codebook.
pub fn kmeans_codebook<R: Rng>(
    samples: &[Vec<f64>],
    q: usize,
    iters: usize,
    rng: &mut R,
) -> Result<VectorCodebook> {
    kmeans_fit(samples, q, iters, rng).map(|fit| fit.codebook)
}

/// Index of the nearest centroid (Euclidean), ties broken toward the lowest index.
pub fn vq_assign(v: &[f64], vcb: &VectorCodebook) -> Result<usize> {
    if v.len() != vcb.w {
        return Err(Error::ShapeMismatch(format!(
            "vector dimension {} vs codebook dimension {}",
            v.len(),
            vcb.w
        )));
    }
    Ok(nearest_centroid(v, &vcb.centroids).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    fn rng(tag: u64) -> rand_chacha::ChaCha8Rng {
        seed::rng(0xDECAF, &[tag])
    }

    #[test]
    fn uniform_codebook_endpoints_only() {
        let cb = make_uniform_codebook(0.0, 1.0, 2).unwrap();
        assert_eq!(cb.levels(), &[0.0, 1.0]);
        assert_eq!(cb.delta(), 1.0);
    }

    #[test]
    fn uniform_codebook_grid() {
        let cb = make_uniform_codebook(-1.0, 1.0, 4).unwrap();
        let expect = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for (a, b) in cb.levels().iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!((cb.delta() - 2.0 / 3.0).abs() < 1e-15);
        // Adjacent gaps all equal.
        for w in cb.levels().windows(2) {
            assert!((w[1] - w[0] - cb.delta()).abs() < 1e-12);
        }
    }

    #[test]
    fn sq_norm_matches_direct_summation() {
        // Independent oracle: direct summation of (i/255)^2.
        let cb = make_uniform_codebook(0.0, 1.0, 256).unwrap();
        let oracle: f64 = (0..256u32).map(|i| (i as f64 / 255.0).powi(2)).sum();
        assert!((cb.sq_norm() - oracle).abs() < 1e-12);
        assert!((oracle - 85.5006).abs() < 1e-3, "oracle value {oracle}");
    }

    #[test]
    fn codebook_rejects_bad_args() {
        assert!(make_uniform_codebook(0.0, 1.0, 1).is_err());
        assert!(make_uniform_codebook(1.0, 1.0, 4).is_err());
        assert!(make_uniform_codebook(2.0, 1.0, 4).is_err());
    }

    #[test]
    fn quantize_exact_level_is_deterministic() {
        let cb = make_uniform_codebook(0.0, 1.0, 8).unwrap();
        let mut r = rng(1);
        for l in 0..8 {
            let s = cb.levels()[l];
            for _ in 0..100 {
                assert_eq!(quantize_stochastic(s, &cb, &mut r).unwrap(), l);
            }
        }
    }

    #[test]
    fn quantize_midpoint_splits_evenly() {
        let cb = make_uniform_codebook(0.0, 1.0, 4).unwrap();
        let s = (cb.levels()[1] + cb.levels()[2]) / 2.0;
        let mut r = rng(2);
        let n = 10_000;
        let ups = (0..n)
            .filter(|_| quantize_stochastic(s, &cb, &mut r).unwrap() == 2)
            .count();
        let frac = ups as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "up fraction {frac}");
    }

    #[test]
    fn quantize_clamps_out_of_range() {
        let cb = make_uniform_codebook(0.0, 1.0, 16).unwrap();
        let mut r = rng(3);
        assert_eq!(quantize_stochastic(1.7, &cb, &mut r).unwrap(), 15);
        assert_eq!(quantize_stochastic(-0.3, &cb, &mut r).unwrap(), 0);
        assert_eq!(quantize_stochastic(1.0, &cb, &mut r).unwrap(), 15);
        assert!(quantize_stochastic(f64::NAN, &cb, &mut r).is_err());
        assert!(quantize_stochastic(f64::INFINITY, &cb, &mut r).is_err());
    }

    #[test]
    fn dequantize_looks_up_levels() {
        let cb = make_uniform_codebook(0.0, 1.0, 4).unwrap();
        assert!((dequantize(2, &cb).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dequantize(0, &cb).unwrap(), 0.0);
        assert!(dequantize(4, &cb).is_err());
    }

    #[test]
    fn quantizer_is_unbiased() {
        // Monte Carlo oracle for E[dequantize(quantize(s))] = s.
        let cb = make_uniform_codebook(0.0, 1.0, 2).unwrap();
        let mut r = rng(4);
        let s = 0.5;
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| dequantize(quantize_stochastic(s, &cb, &mut r).unwrap(), &cb).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - s).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn quantizer_conditional_variance() {
        let cb = make_uniform_codebook(0.0, 1.0, 8).unwrap();
        let mut r = rng(5);
        let s = 0.3;
        let l = ((s - cb.lo()) / cb.delta()) as usize;
        let expect = (s - cb.levels()[l]) * (cb.levels()[l + 1] - s);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| dequantize(quantize_stochastic(s, &cb, &mut r).unwrap(), &cb).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(
            (var - expect).abs() <= 0.05 * expect,
            "var {var} vs conditional variance {expect}"
        );
    }

    #[test]
    fn aggregate_counts_basics() {
        let cv = aggregate_counts(&[0, 0, 1], 4).unwrap();
        assert_eq!(cv.counts(), &[2, 1, 0, 0]);
        assert_eq!(cv.k_total(), 3);
        assert_eq!(cv.support_size(), 2);

        let collide = aggregate_counts(&[3; 7], 5).unwrap();
        assert_eq!(collide.counts()[3], 7);
        assert_eq!(collide.support_size(), 1);

        assert!(aggregate_counts(&[], 4).is_err());
        assert!(aggregate_counts(&[4], 4).is_err());
    }

    #[test]
    fn birthday_occupancy_at_fine_quantization() {
        // Occupancy oracle: with K = 10 uniform sources and Q = 256 there are
        // ~255 equally likely bins, so P(all distinct) = prod(1 - i/255)
        // ~ 0.835, and P(support >= 9) ~ 0.99.
        let k = 10;
        let cb = make_uniform_codebook(0.0, 1.0, 256).unwrap();
        let mut r = rng(6);
        let trials = 4000;
        let mut all_distinct = 0usize;
        let mut at_least_9 = 0usize;
        for _ in 0..trials {
            let idx: Vec<usize> = (0..k)
                .map(|_| {
                    let s = rand::Rng::gen::<f64>(&mut r);
                    quantize_stochastic(s, &cb, &mut r).unwrap()
                })
                .collect();
            let support = aggregate_counts(&idx, 256).unwrap().support_size();
            if support == k {
                all_distinct += 1;
            }
            if support >= k - 1 {
                at_least_9 += 1;
            }
        }
        let analytic: f64 = (0..k as u32).map(|i| 1.0 - i as f64 / 255.0).product();
        let frac = all_distinct as f64 / trials as f64;
        assert!(
            (frac - analytic).abs() < 0.03,
            "all-distinct fraction {frac} vs analytic {analytic}"
        );
        assert!(at_least_9 as f64 / trials as f64 >= 0.97);
    }

    #[test]
    fn reconstruct_average_plug_in() {
        let cb = make_uniform_codebook(0.0, 1.0, 4).unwrap();
        let x = reconstruct_average(&[2.0, 1.0, 0.0, 0.0], &cb, 3).unwrap();
        assert!((x - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(reconstruct_average(&[0.0; 4], &cb, 3).unwrap(), 0.0);
        assert!(reconstruct_average(&[0.0; 3], &cb, 3).is_err());
        assert!(reconstruct_average(&[0.0; 4], &cb, 0).is_err());
    }

    #[test]
    fn noiseless_pipeline_reconstructs_quantized_average() {
        let cb = make_uniform_codebook(0.0, 1.0, 16).unwrap();
        let mut r = rng(7);
        let sources: Vec<f64> = (0..10).map(|_| rand::Rng::gen::<f64>(&mut r)).collect();
        let idx: Vec<usize> = sources
            .iter()
            .map(|&s| quantize_stochastic(s, &cb, &mut r).unwrap())
            .collect();
        let z = aggregate_counts(&idx, 16).unwrap();
        let xbar_direct: f64 = idx.iter().map(|&i| cb.levels()[i]).sum::<f64>() / 10.0;
        let xbar = reconstruct_average(&z.as_f64(), &cb, 10).unwrap();
        assert!((xbar - xbar_direct).abs() < 1e-12);
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let samples: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 4.0]];
        let mut r = rng(8);
        let cb = kmeans_codebook(&samples, 1, 10, &mut r).unwrap();
        assert!((cb.centroids()[0][0] - 1.0).abs() < 1e-12);
        assert!((cb.centroids()[0][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_exact_fit_when_q_equals_n() {
        let samples: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]];
        let mut r = rng(9);
        let fit = kmeans_fit(&samples, 3, 20, &mut r).unwrap();
        assert!(fit.wcss_per_iter.last().unwrap() < &1e-20);
        for s in &samples {
            let (_, d) = (0..3)
                .map(|i| (i, sq_dist(s, &fit.codebook.centroids()[i])))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d < 1e-20);
        }
    }

    #[test]
    fn kmeans_objective_non_increasing_and_seeded() {
        let mut src = rng(10);
        let dist = SourceDist::DirichletSym { alpha: 1.0 };
        let samples: Vec<Vec<f64>> = (0..2000)
            .map(|_| dist.sample_vector(10, &mut src).unwrap())
            .collect();

        let fit = kmeans_fit(&samples, 16, 30, &mut rng(11)).unwrap();
        for w in fit.wcss_per_iter.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective increased: {} -> {}", w[0], w[1]);
        }
        // Deterministic under the seed.
        let fit2 = kmeans_fit(&samples, 16, 30, &mut rng(11)).unwrap();
        assert_eq!(fit.codebook, fit2.codebook);

        // Finer codebooks fit at least as well as coarse ones (rerun oracle).
        let coarse = kmeans_fit(&samples, 4, 30, &mut rng(12)).unwrap();
        assert!(
            fit.wcss_per_iter.last().unwrap() <= coarse.wcss_per_iter.last().unwrap(),
            "distortion must not grow with codebook size"
        );

        // Probability-simplex centroids stay on the simplex.
        for c in fit.codebook.centroids() {
            let total: f64 = c.iter().sum();
            assert!((total - 1.0).abs() < 1e-6);
            assert!(c.iter().all(|&x| x >= -1e-9));
        }

        assert!(kmeans_codebook(&samples[..3], 16, 10, &mut rng(13)).is_err());
    }

    #[test]
    fn vq_assign_nearest_and_ties() {
        let vcb = VectorCodebook {
            centroids: vec![vec![5.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0]],
            w: 2,
        };
        // Exactly on a centroid.
        assert_eq!(vq_assign(&[5.0, 0.0], &vcb).unwrap(), 0);
        assert_eq!(vq_assign(&[1.0, 0.0], &vcb).unwrap(), 1);
        // Equidistant from centroids 1 and 2: the lower index wins.
        assert_eq!(vq_assign(&[0.0, 0.0], &vcb).unwrap(), 1);
        assert!(vq_assign(&[0.0; 3], &vcb).is_err());
    }

    #[test]
    fn vq_assign_matches_exhaustive_scan() {
        let mut r = rng(14);
        let dist = SourceDist::DirichletSym { alpha: 1.0 };
        let samples: Vec<Vec<f64>> = (0..200)
            .map(|_| dist.sample_vector(6, &mut r).unwrap())
            .collect();
        let vcb = kmeans_codebook(&samples, 8, 20, &mut r).unwrap();
        for _ in 0..100 {
            let v = dist.sample_vector(6, &mut r).unwrap();
            let got = vq_assign(&v, &vcb).unwrap();
            // Brute-force oracle.
            let want = vcb
                .centroids()
                .iter()
                .enumerate()
                .min_by(|a, b| sq_dist(&v, a.1).total_cmp(&sq_dist(&v, b.1)))
                .unwrap()
                .0;
            assert_eq!(got, want);
        }
    }

    #[test]
    fn codebook_json_round_trip() {
        let cb = make_uniform_codebook(-0.5, 0.5, 32).unwrap();
        let back = Codebook::from_json(&cb.to_json()).unwrap();
        assert_eq!(cb, back);
    }

    proptest! {
        #[test]
        fn quantize_index_brackets_source(s in 0.0f64..1.0, seed in 0u64..1000) {
            let cb = make_uniform_codebook(0.0, 1.0, 16).unwrap();
            let mut r = seed::rng(seed, &[99]);
            let idx = quantize_stochastic(s, &cb, &mut r).unwrap();
            prop_assert!(idx < 16);
            // The chosen level is one of the two bracketing levels.
            prop_assert!((cb.levels()[idx] - s).abs() <= cb.delta() + 1e-12);
        }

        #[test]
        fn counts_conserve_mass(idx in proptest::collection::vec(0usize..8, 1..50)) {
            let cv = aggregate_counts(&idx, 8).unwrap();
            prop_assert_eq!(cv.counts().iter().sum::<u32>(), idx.len() as u32);
            prop_assert!(cv.support_size() <= idx.len().min(8));
        }

        #[test]
        fn reconstruction_is_linear(
            z1 in proptest::collection::vec(0.0f64..5.0, 8),
            z2 in proptest::collection::vec(0.0f64..5.0, 8),
            k1 in 1u32..20, k2 in 1u32..20,
        ) {
            let cb = make_uniform_codebook(0.0, 1.0, 8).unwrap();
            let sum: Vec<f64> = z1.iter().zip(z2.iter()).map(|(a, b)| a + b).collect();
            let lhs = reconstruct_average(&sum, &cb, k1 + k2).unwrap() * (k1 + k2) as f64;
            let rhs = reconstruct_average(&z1, &cb, k1).unwrap() * k1 as f64
                + reconstruct_average(&z2, &cb, k2).unwrap() * k2 as f64;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
