//! Analytical error machinery: the quantization/detection MSE bound, optimal
//! codebook-size selection (bound-based and empirical), empirical MSE, and
//! effective-sparsity statistics.
//!
//! The computation error splits into a quantization term that shrinks as
//! 1/Q² and a detection term that grows as Q log Q under a fixed preamble
//! budget L, so the total bound is U-shaped in Q with an interior minimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{run_cell, ScenarioConfig};
use crate::quantize::{
    aggregate_counts, make_uniform_codebook, quantize_stochastic, Codebook, CountVector,
    SourceDist,
};
use crate::seed;

/// Inputs of the analytical MSE bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Half-range: sources live in [−r, r] (a [lo, hi] range maps to
    /// r = (hi − lo)/2 with the bound applied to the centered variable).
    pub r: f64,
    /// Device count.
    pub k: usize,
    /// Preamble length (measurements).
    pub l: usize,
    /// Effective noise variance seen by the detector after combining.
    pub sigma2_eff: f64,
    /// Estimator-dependent constant of the detection bound.
    pub c0: f64,
    /// ‖u‖₂² of the concrete codebook the pointwise terms refer to.
    pub u_sq_norm: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || self.k == 0 || self.l == 0 {
            return Err(Error::InvalidInput("bound needs r > 0, k >= 1, l >= 1".into()));
        }
        if self.sigma2_eff < 0.0 || self.c0 < 0.0 || self.u_sq_norm < 0.0 {
            return Err(Error::InvalidInput("bound terms must be nonnegative".into()));
        }
        Ok(())
    }

    /// Quantization term of the bound: (2/K) · R²/(3 Q²).
    pub fn quant_term(&self, q: usize) -> f64 {
        2.0 * self.r * self.r / (3.0 * self.k as f64 * (q * q) as f64)
    }

    /// Detection term with an explicit codebook energy:
    /// c₀ ‖u‖₂² · 2 σ²_eff Q ln Q / (K L). Natural log; any base change is
    /// absorbed into c₀.
    pub fn detect_term_with_usq(&self, q: usize, u_sq: f64) -> f64 {
        self.c0 * u_sq * 2.0 * self.sigma2_eff * q as f64 * (q as f64).ln()
            / (self.k as f64 * self.l as f64)
    }

    /// Detection term using the stored codebook energy.
    pub fn detect_term(&self, q: usize) -> f64 {
        self.detect_term_with_usq(q, self.u_sq_norm)
    }

    /// Sum of the two terms at the stored codebook energy.
    pub fn total_bound(&self, q: usize) -> f64 {
        self.quant_term(q) + self.detect_term(q)
    }

    /// Total bound with ‖u‖₂² recomputed from the centered codebook on
    /// [−r, r] with `q` levels, as used when sweeping q.
    pub fn total_bound_swept(&self, q: usize) -> Result<f64> {
        let cb = make_uniform_codebook(-self.r, self.r, q)?;
        Ok(self.quant_term(q) + self.detect_term_with_usq(q, cb.sq_norm()))
    }

    /// Sample-complexity condition of the detection bound:
    /// L ≥ K ln(Q/K). Below it the detection term is extrapolated.
    pub fn condition_ok(&self, q: usize) -> bool {
        let needed = self.k as f64 * (q as f64 / self.k as f64).ln();
        (self.l as f64) >= needed
    }
}

/// Quantization term evaluated from a concrete codebook's actual spacing:
/// (2/K) · Δ²/12.
pub fn quant_term_from_codebook(cb: &Codebook, k: usize) -> f64 {
    2.0 * cb.delta() * cb.delta() / (12.0 * k as f64)
}

/// Bound-based optimal codebook size: argmin of the swept total bound over
/// the grid, ties broken toward smaller q.
pub fn optimal_q_bound(bp: &BoundParams, q_grid: &[usize]) -> Result<usize> {
    bp.validate()?;
    if q_grid.is_empty() {
        return Err(Error::InvalidInput("empty q grid".into()));
    }
    let mut grid: Vec<usize> = q_grid.to_vec();
    grid.sort_unstable();
    let mut best_q = 0usize;
    let mut best = f64::INFINITY;
    for &q in &grid {
        if q < 2 {
            return Err(Error::InvalidInput("q grid entries must be >= 2".into()));
        }
        let v = bp.total_bound_swept(q)?;
        if v < best {
            best = v;
            best_q = q;
        }
    }
    Ok(best_q)
}

/// Strict discrete unimodality (for a minimum): strictly decreasing to the
/// argmin, then strictly increasing.
pub fn is_strictly_unimodal(values: &[f64]) -> bool {
    if values.len() < 2 {
        return true;
    }
    let argmin = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    values[..=argmin].windows(2).all(|w| w[1] < w[0])
        && values[argmin..].windows(2).all(|w| w[1] > w[0])
}

/// Mean squared error between per-symbol true averages and estimates.
pub fn empirical_mse(true_avgs: &[f64], estimates: &[f64]) -> Result<f64> {
    if true_avgs.is_empty() || true_avgs.len() != estimates.len() {
        return Err(Error::InvalidInput(format!(
            "need equal nonempty inputs, got {} and {}",
            true_avgs.len(),
            estimates.len()
        )));
    }
    Ok(true_avgs
        .iter()
        .zip(estimates.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / true_avgs.len() as f64)
}

/// Number of occupied quantization bins.
pub fn effective_sparsity(counts: &CountVector) -> usize {
    counts.support_size()
}

/// One point of a sparsity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityPoint {
    pub q: usize,
    pub mean_support: f64,
}

/// Mean effective sparsity per codebook size for `k` devices drawing from
/// `source`, averaged over seeded trials.
pub fn sparsity_sweep(
    source: &SourceDist,
    k: usize,
    q_grid: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<Vec<SparsityPoint>> {
    if k == 0 || trials == 0 {
        return Err(Error::InvalidInput("sparsity sweep needs k >= 1 and trials >= 1".into()));
    }
    let mut points = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let cb = make_uniform_codebook(0.0, 1.0, q)?;
        let mut total = 0usize;
        for trial in 0..trials {
            // Source draws are paired across q (same stream), so the sweep
            // isolates the quantization effect.
            let mut src_rng = seed::rng(master_seed, &[seed::STREAM_SOURCE, trial as u64]);
            let mut q_rng = seed::rng(master_seed, &[seed::STREAM_QUANT, trial as u64, q as u64]);
            let indices: Vec<usize> = (0..k)
                .map(|_| {
                    let s = source.sample_scalar(&mut src_rng)?;
                    quantize_stochastic(s, &cb, &mut q_rng)
                })
                .collect::<Result<_>>()?;
            total += aggregate_counts(&indices, q)?.support_size();
        }
        points.push(SparsityPoint { q, mean_support: total as f64 / trials as f64 });
    }
    Ok(points)
}

/// One measured (q, l, mse) cell for fitting the bound constant.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationRow {
    pub q: usize,
    pub l: usize,
    pub mse: f64,
}

/// Least-squares fit of C₀ against measured MSE over a (q, L) grid: the
/// quantization term is kept fixed and the detection term is scaled.
pub fn calibrate_c0(base: &BoundParams, rows: &[CalibrationRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("calibration needs at least one row".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for row in rows {
        let bp = BoundParams { l: row.l, c0: 1.0, ..*base };
        let cb = make_uniform_codebook(-base.r, base.r, row.q)?;
        let d = bp.detect_term_with_usq(row.q, cb.sq_norm());
        let resid = row.mse - bp.quant_term(row.q);
        num += d * resid;
        den += d * d;
    }
    if den == 0.0 {
        return Err(Error::InvalidInput("detection term vanishes on the calibration grid".into()));
    }
    Ok((num / den).max(0.0))
}

/// Row of an empirical optimal-q table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QMseRow {
    pub q: usize,
    pub mse: f64,
    pub sparsity_mean: f64,
    pub trials: usize,
}

/// Outcome of an empirical optimal-q search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptQEmpirical {
    pub q_star: usize,
    pub rows: Vec<QMseRow>,
}

/// Run the full pipeline per candidate q and return the empirical-MSE argmin
/// plus the per-q table. Trial seeds are shared across q so the comparison is
/// paired on the source draws.
pub fn optimal_q_empirical(
    cfg: &ScenarioConfig,
    q_grid: &[usize],
    trials: usize,
) -> Result<OptQEmpirical> {
    if q_grid.is_empty() || trials == 0 {
        return Err(Error::InvalidInput("empirical q search needs a grid and trials >= 1".into()));
    }
    let mut grid: Vec<usize> = q_grid.to_vec();
    grid.sort_unstable();
    let mut rows = Vec::with_capacity(grid.len());
    let mut best = (0usize, f64::INFINITY);
    for &q in &grid {
        let mut cell_cfg = cfg.clone();
        cell_cfg.q = q;
        cell_cfg.trials = trials;
        let cell = run_cell(&cell_cfg)?;
        if cell.mse_mean < best.1 {
            best = (q, cell.mse_mean);
        }
        rows.push(QMseRow { q, mse: cell.mse_mean, sparsity_mean: cell.sparsity_mean, trials });
    }
    Ok(OptQEmpirical { q_star: best.0, rows })
}

/// Row schema shared by the sweep CSV tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub q: usize,
    pub l: usize,
    pub snr_db: f64,
    pub m: usize,
    pub detector: String,
    pub trials: usize,
    pub mse_empirical: f64,
    pub mse_bound: f64,
    pub sparsity_mean: f64,
    pub seed: u64,
}

impl SweepRecord {
    pub const CSV_HEADER: &'static str =
        "q,l,snr_db,m,detector,trials,mse_empirical,mse_bound,sparsity_mean,seed";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.q,
            self.l,
            self.snr_db,
            self.m,
            self.detector,
            self.trials,
            self.mse_empirical,
            self.mse_bound,
            self.sparsity_mean,
            self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn base_params() -> BoundParams {
        BoundParams { r: 0.5, k: 10, l: 25, sigma2_eff: 1e-3, c0: 1.0, u_sq_norm: 10.0 }
    }

    #[test]
    fn quant_term_plug_in() {
        let bp = BoundParams { r: 0.5, k: 10, l: 25, sigma2_eff: 0.0, c0: 1.0, u_sq_norm: 1.0 };
        let v = bp.quant_term(4);
        assert!((v - 2.0 * 0.25 / (3.0 * 10.0 * 16.0)).abs() < 1e-18);
        assert!((v - 1.0417e-3).abs() < 1e-6);
        // Doubling q divides the term by exactly 4.
        assert!((bp.quant_term(8) - v / 4.0).abs() < 1e-18);
        // Vanishes as q grows.
        assert!(bp.quant_term(1 << 20) < 1e-13);
    }

    #[test]
    fn quant_term_from_codebook_uses_actual_delta() {
        let cb = make_uniform_codebook(-0.5, 0.5, 16).unwrap();
        let v = quant_term_from_codebook(&cb, 10);
        let delta = 1.0 / 15.0;
        assert!((v - 2.0 * delta * delta / 120.0).abs() < 1e-18);
    }

    #[test]
    fn detect_term_plug_in_and_linearity() {
        let mut bp =
            BoundParams { r: 0.5, k: 10, l: 25, sigma2_eff: 0.01, c0: 1.0, u_sq_norm: 10.0 };
        // Formula: c0 ‖u‖² 2 σ² q ln q / (K L).
        let expect = 1.0 * 10.0 * 2.0 * 0.01 * 32.0 * (32f64).ln() / (10.0 * 25.0);
        let got = bp.detect_term(32);
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
        assert!((got - 8.872e-2).abs() < 1e-4);

        // Zero noise kills the term; c0 and sigma scale linearly.
        bp.sigma2_eff = 0.0;
        assert_eq!(bp.detect_term(32), 0.0);
        bp.sigma2_eff = 0.02;
        let doubled = bp.detect_term(32);
        assert!((doubled - 2.0 * expect).abs() < 1e-12);
        bp.c0 = 3.0;
        assert!((bp.detect_term(32) - 3.0 * doubled).abs() < 1e-12);
    }

    #[test]
    fn total_bound_is_sum_and_exceeds_parts() {
        let bp = base_params();
        for q in [2usize, 8, 64] {
            let total = bp.total_bound(q);
            assert!((total - bp.quant_term(q) - bp.detect_term(q)).abs() < 1e-18);
            assert!(total > bp.quant_term(q));
            assert!(total > bp.detect_term(q));
        }
    }

    #[test]
    fn swept_bound_is_u_shaped_on_default_grid() {
        // Grid-evaluation oracle: finite at both ends, interior minimum,
        // discrete strict unimodality.
        let bp = BoundParams { r: 0.5, k: 10, l: 25, sigma2_eff: 1e-3, c0: 1.0, u_sq_norm: 0.0 };
        let grid: Vec<usize> = (1..=8).map(|j| 1usize << j).collect();
        let values: Vec<f64> = grid.iter().map(|&q| bp.total_bound_swept(q).unwrap()).collect();
        assert!(values.iter().all(|v| v.is_finite()));
        let q_star = optimal_q_bound(&bp, &grid).unwrap();
        assert!(q_star > 2 && q_star < 256, "interior minimum expected, got {q_star}");
        assert!(is_strictly_unimodal(&values), "{values:?}");
    }

    #[test]
    fn optimal_q_bound_extremes() {
        let grid: Vec<usize> = (1..=8).map(|j| 1usize << j).collect();
        // c0 = 0: only the decreasing quantization term remains.
        let free = BoundParams { c0: 0.0, ..base_params() };
        assert_eq!(optimal_q_bound(&free, &grid).unwrap(), 256);
        // Huge effective noise: detection dominates everywhere.
        let noisy = BoundParams { sigma2_eff: 1e6, ..base_params() };
        assert_eq!(optimal_q_bound(&noisy, &grid).unwrap(), 2);
        assert!(optimal_q_bound(&base_params(), &[]).is_err());
    }

    #[test]
    fn optimal_q_bound_matches_brute_force() {
        let bp = base_params();
        let grid: Vec<usize> = (1..=8).map(|j| 1usize << j).collect();
        let got = optimal_q_bound(&bp, &grid).unwrap();
        let brute = grid
            .iter()
            .copied()
            .min_by(|&a, &b| {
                bp.total_bound_swept(a).unwrap().total_cmp(&bp.total_bound_swept(b).unwrap())
            })
            .unwrap();
        assert_eq!(got, brute);
    }

    #[test]
    fn optimal_q_bound_monotone_in_l_and_snr() {
        let grid: Vec<usize> = (1..=8).map(|j| 1usize << j).collect();
        let mut prev = 0usize;
        for l in [10usize, 20, 40, 60] {
            let bp = BoundParams { l, ..base_params() };
            let q = optimal_q_bound(&bp, &grid).unwrap();
            assert!(q >= prev, "q* fell from {prev} to {q} as L grew to {l}");
            prev = q;
        }
        // Higher noise (lower SNR) must not enlarge q*.
        let low_snr = BoundParams { sigma2_eff: 1e-1, ..base_params() };
        let high_snr = BoundParams { sigma2_eff: 1e-4, ..base_params() };
        assert!(
            optimal_q_bound(&low_snr, &grid).unwrap() <= optimal_q_bound(&high_snr, &grid).unwrap()
        );
    }

    #[test]
    fn condition_flags_underdetermined_cells() {
        let bp = base_params();
        assert!(bp.condition_ok(16)); // 10 ln(1.6) = 4.7 <= 25
        assert!(!bp.condition_ok(1 << 10)); // 10 ln(102.4) = 46.3 > 25
    }

    #[test]
    fn empirical_mse_cases() {
        assert_eq!(empirical_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(empirical_mse(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert!(empirical_mse(&[], &[]).is_err());
        assert!(empirical_mse(&[1.0], &[1.0, 2.0]).is_err());

        // Permutation invariance and quadratic scaling.
        let a = [0.3, -0.7, 1.1];
        let b = [0.1, 0.2, -0.4];
        let base = empirical_mse(&a, &b).unwrap();
        let perm_a = [1.1, 0.3, -0.7];
        let perm_b = [-0.4, 0.1, 0.2];
        assert!((empirical_mse(&perm_a, &perm_b).unwrap() - base).abs() < 1e-15);
        let a2: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let b2: Vec<f64> = b.iter().map(|x| 2.0 * x).collect();
        assert!((empirical_mse(&a2, &b2).unwrap() - 4.0 * base).abs() < 1e-12);
    }

    #[test]
    fn sparsity_basics() {
        let all_collide = aggregate_counts(&[2; 10], 8).unwrap();
        assert_eq!(effective_sparsity(&all_collide), 1);

        let spread = aggregate_counts(&[0, 1, 2, 3], 8).unwrap();
        assert_eq!(effective_sparsity(&spread), 4);
    }

    #[test]
    fn sparsity_sweep_matches_occupancy_oracle() {
        // Independent occupancy resimulation with its own quantizer model:
        // draw K uniform sources, round stochastically by hand, count bins.
        let k = 10;
        let q_grid = [2usize, 8, 32, 256];
        let trials = 4000;
        let points = sparsity_sweep(&SourceDist::Uniform01, k, &q_grid, trials, 77).unwrap();

        let mut rng = seed::rng(778, &[1]);
        for point in &points {
            let q = point.q;
            let delta = 1.0 / (q - 1) as f64;
            let mut total = 0usize;
            for _ in 0..trials {
                let mut bins = vec![false; q];
                for _ in 0..k {
                    let s: f64 = rng.gen();
                    let l = ((s / delta) as usize).min(q - 2);
                    let p_up = (s - l as f64 * delta) / delta;
                    let idx = if rng.gen::<f64>() < p_up { l + 1 } else { l };
                    bins[idx] = true;
                }
                total += bins.iter().filter(|&&b| b).count();
            }
            let oracle = total as f64 / trials as f64;
            let rel = (point.mean_support - oracle).abs() / oracle;
            assert!(rel < 0.02, "q = {q}: sweep {} vs oracle {oracle}", point.mean_support);
        }

        // Monotone non-decreasing in q, and bounded by min(K, Q).
        for w in points.windows(2) {
            assert!(w[1].mean_support >= w[0].mean_support);
        }
        for p in &points {
            assert!(p.mean_support <= k.min(p.q) as f64);
        }
    }

    #[test]
    fn truncated_gaussian_sparsity_below_uniform() {
        let k = 10;
        let q_grid = [4usize, 16, 64];
        let uniform = sparsity_sweep(&SourceDist::Uniform01, k, &q_grid, 3000, 5).unwrap();
        let gauss = sparsity_sweep(
            &SourceDist::TruncGauss { mean: 0.5, std: 0.15 },
            k,
            &q_grid,
            3000,
            5,
        )
        .unwrap();
        for (u, g) in uniform.iter().zip(gauss.iter()) {
            assert!(
                g.mean_support <= u.mean_support + 0.02,
                "q = {}: gauss {} vs uniform {}",
                u.q,
                g.mean_support,
                u.mean_support
            );
        }
    }

    #[test]
    fn c0_calibration_recovers_planted_constant() {
        let base = base_params();
        let planted = 2.5;
        let rows: Vec<CalibrationRow> = [16usize, 32, 64]
            .iter()
            .flat_map(|&q| {
                [20usize, 40]
                    .iter()
                    .map(move |&l| {
                        let bp = BoundParams { l, c0: planted, ..base };
                        let cb = make_uniform_codebook(-base.r, base.r, q).unwrap();
                        CalibrationRow {
                            q,
                            l,
                            mse: bp.quant_term(q) + bp.detect_term_with_usq(q, cb.sq_norm()),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let fit = calibrate_c0(&base, &rows).unwrap();
        assert!((fit - planted).abs() < 1e-9, "fit {fit}");
    }

    #[test]
    fn unimodality_checker() {
        assert!(is_strictly_unimodal(&[5.0, 3.0, 1.0, 2.0, 4.0]));
        assert!(is_strictly_unimodal(&[1.0, 2.0, 3.0]));
        assert!(is_strictly_unimodal(&[3.0, 2.0, 1.0]));
        assert!(!is_strictly_unimodal(&[3.0, 1.0, 1.0, 2.0]));
        assert!(!is_strictly_unimodal(&[3.0, 1.0, 2.0, 0.5]));
    }
}
