//! Unfolded ISTA with learned parameters.
//!
//! The ISTA recursion is unrolled into a fixed number of layers whose linear
//! operators (A, B), per-layer step scales μ⁽ᵗ⁾, and per-layer thresholds
//! β⁽ᵗ⁾ are trained on simulated transmissions. At initialization the network
//! reproduces plain ISTA layer for layer; training then adapts it to the
//! count-vector distribution, which is where the iteration-count saving comes
//! from. Layer update (sign convention chosen so the init equals ISTA):
//!
//!   z⁽ᵗ⁺¹⁾ = T_{β⁽ᵗ⁾}( z⁽ᵗ⁾ − μ⁽ᵗ⁾ (B z⁽ᵗ⁾ − A ȳ) )
//!
//! with A = p_rᵀ and B = p_rᵀ p_r at init.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airlink::{stack_sensing, SensingMatrix};
use crate::channel::sample_composite_gains;
use crate::error::{Error, Result};
use crate::mat::RMat;
use crate::quantize::{aggregate_counts, make_uniform_codebook, quantize_stochastic, SourceDist};
use crate::seed;

use super::{max_eigen_symmetric, soft_threshold, STEP_MARGIN};

/// Trainable parameters of the unfolded solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ListaParams {
    a: RMat,
    b: RMat,
    beta: Vec<f64>,
    mu: Vec<f64>,
    layers: usize,
}

impl ListaParams {
    #[inline]
    pub fn layers(&self) -> usize {
        self.layers
    }

    #[inline]
    pub fn a(&self) -> &RMat {
        &self.a
    }

    #[inline]
    pub fn b(&self) -> &RMat {
        &self.b
    }

    #[inline]
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    #[inline]
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Output dimension Q.
    #[inline]
    pub fn q(&self) -> usize {
        self.b.cols()
    }

    /// Stacked measurement dimension 2L.
    #[inline]
    pub fn measurement_dim(&self) -> usize {
        self.a.cols()
    }

    /// Mutable access to the measurement operator A (for custom
    /// initialization or external training loops).
    pub fn a_mut(&mut self) -> &mut RMat {
        &mut self.a
    }

    /// Mutable access to the state operator B.
    pub fn b_mut(&mut self) -> &mut RMat {
        &mut self.b
    }

    /// Replace the per-layer step scales.
    pub fn set_mu(&mut self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.layers {
            return Err(Error::ShapeMismatch(format!(
                "{} step scales for {} layers",
                mu.len(),
                self.layers
            )));
        }
        self.mu = mu.to_vec();
        Ok(())
    }

    /// Replace the per-layer thresholds (must be nonnegative).
    pub fn set_beta(&mut self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.layers {
            return Err(Error::ShapeMismatch(format!(
                "{} thresholds for {} layers",
                beta.len(),
                self.layers
            )));
        }
        if beta.iter().any(|&b| b < 0.0) {
            return Err(Error::InvalidInput("thresholds must be nonnegative".into()));
        }
        self.beta = beta.to_vec();
        Ok(())
    }

    /// Check shape compatibility against a stacked sensing operator.
    pub fn validate_against(&self, p_r: &RMat) -> Result<()> {
        if self.a.cols() != p_r.rows() || self.a.rows() != p_r.cols() || self.b.cols() != p_r.cols()
        {
            return Err(Error::ShapeMismatch(format!(
                "solver trained for {}x{} stacked operator, got {}x{}",
                self.a.cols(),
                self.a.rows(),
                p_r.rows(),
                p_r.cols()
            )));
        }
        Ok(())
    }
}

/// Initialize the unfolded solver so its forward pass reproduces ISTA:
/// A = p_rᵀ, B = p_rᵀ p_r, μ⁽ᵗ⁾ = 1/λ_max, β⁽ᵗ⁾ = ρ/λ_max.
pub fn lista_init(p_r: &RMat, t_layers: usize, rho: f64) -> Result<ListaParams> {
    if t_layers == 0 {
        return Err(Error::InvalidInput("unfolded solver needs at least one layer".into()));
    }
    if rho < 0.0 || !rho.is_finite() {
        return Err(Error::InvalidInput(format!("lasso weight must be >= 0, got {rho}")));
    }
    let b = p_r.gram();
    let lambda = max_eigen_symmetric(&b)?;
    let step = 1.0 / (lambda * (1.0 + STEP_MARGIN));
    Ok(ListaParams {
        a: p_r.transpose(),
        b,
        beta: vec![step * rho; t_layers],
        mu: vec![step; t_layers],
        layers: t_layers,
    })
}

/// Forward pass from z⁰ = 0. Returns the final estimate and the per-layer
/// trajectory (layer 1..T).
pub fn lista_forward(params: &ListaParams, y_r: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let q = params.q();
    assert_eq!(y_r.len(), params.a.cols(), "measurement dimension mismatch");
    let mut ay = vec![0.0; q];
    params.a.matvec(y_r, &mut ay);

    let mut z = vec![0.0; q];
    let mut bz = vec![0.0; q];
    let mut traj = Vec::with_capacity(params.layers);
    for t in 0..params.layers {
        params.b.matvec(&z, &mut bz);
        let (mu, beta) = (params.mu[t], params.beta[t]);
        for i in 0..q {
            z[i] = soft_threshold(z[i] - mu * (bz[i] - ay[i]), beta);
        }
        traj.push(z.clone());
    }
    (z, traj)
}

/// Gradients of the batch-mean final-layer squared error.
#[derive(Debug, Clone)]
pub struct ListaGradients {
    pub da: RMat,
    pub db: RMat,
    pub dbeta: Vec<f64>,
    pub dmu: Vec<f64>,
    /// Batch-mean loss at the current parameters.
    pub loss: f64,
}

impl ListaGradients {
    fn zeros(params: &ListaParams) -> Self {
        Self {
            da: RMat::zeros(params.a.rows(), params.a.cols()),
            db: RMat::zeros(params.b.rows(), params.b.cols()),
            dbeta: vec![0.0; params.layers],
            dmu: vec![0.0; params.layers],
            loss: 0.0,
        }
    }

    fn accumulate(&mut self, other: &ListaGradients) {
        for (d, s) in self.da.data_mut().iter_mut().zip(other.da.data().iter()) {
            *d += s;
        }
        for (d, s) in self.db.data_mut().iter_mut().zip(other.db.data().iter()) {
            *d += s;
        }
        for (d, s) in self.dbeta.iter_mut().zip(other.dbeta.iter()) {
            *d += s;
        }
        for (d, s) in self.dmu.iter_mut().zip(other.dmu.iter()) {
            *d += s;
        }
        self.loss += other.loss;
    }

    fn scale(&mut self, c: f64) {
        self.da.data_mut().iter_mut().for_each(|v| *v *= c);
        self.db.data_mut().iter_mut().for_each(|v| *v *= c);
        self.dbeta.iter_mut().for_each(|v| *v *= c);
        self.dmu.iter_mut().for_each(|v| *v *= c);
        self.loss *= c;
    }
}

/// One training sample: stacked measurement and the true count vector.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub y_r: Vec<f64>,
    pub z_true: Vec<f64>,
}

/// Reverse-mode gradients of L = mean_b ‖z⁽ᵀ⁾ − z*‖² through the unrolled
/// layers. The soft-threshold subgradient at the kink is taken as 0.
pub fn lista_gradient(params: &ListaParams, batch: &[TrainSample]) -> Result<ListaGradients> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("gradient needs a nonempty batch".into()));
    }
    let per_sample: Vec<ListaGradients> = batch
        .par_iter()
        .map(|sample| sample_gradient(params, sample))
        .collect();
    let mut total = ListaGradients::zeros(params);
    for g in &per_sample {
        total.accumulate(g);
    }
    total.scale(1.0 / batch.len() as f64);
    Ok(total)
}

fn sample_gradient(params: &ListaParams, sample: &TrainSample) -> ListaGradients {
    let q = params.q();
    let layers = params.layers;
    let mut ay = vec![0.0; q];
    params.a.matvec(&sample.y_r, &mut ay);

    // Forward with cached intermediates.
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(layers + 1); // z⁰..z⁽ᵀ⁾
    let mut us: Vec<Vec<f64>> = Vec::with_capacity(layers); // pre-activations
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(layers); // v = B z − A y
    zs.push(vec![0.0; q]);
    let mut bz = vec![0.0; q];
    for t in 0..layers {
        let z = zs.last().unwrap();
        params.b.matvec(z, &mut bz);
        let mut u = vec![0.0; q];
        let mut v = vec![0.0; q];
        for i in 0..q {
            v[i] = bz[i] - ay[i];
            u[i] = z[i] - params.mu[t] * v[i];
        }
        let mut z_next = vec![0.0; q];
        for i in 0..q {
            z_next[i] = soft_threshold(u[i], params.beta[t]);
        }
        us.push(u);
        vs.push(v);
        zs.push(z_next);
    }

    let z_final = zs.last().unwrap();
    let mut g: Vec<f64> = z_final
        .iter()
        .zip(sample.z_true.iter())
        .map(|(z, t)| 2.0 * (z - t))
        .collect();
    let loss: f64 = z_final
        .iter()
        .zip(sample.z_true.iter())
        .map(|(z, t)| (z - t) * (z - t))
        .sum();

    let mut out = ListaGradients::zeros(params);
    out.loss = loss;
    let mut gu = vec![0.0; q];
    let mut btgu = vec![0.0; q];
    for t in (0..layers).rev() {
        let (u, v, z_in) = (&us[t], &vs[t], &zs[t]);
        let (mu, beta) = (params.mu[t], params.beta[t]);
        let mut dbeta = 0.0;
        let mut dmu = 0.0;
        for i in 0..q {
            let active = u[i].abs() > beta;
            if active {
                gu[i] = g[i];
                dbeta -= g[i] * u[i].signum();
                dmu -= g[i] * v[i];
            } else {
                gu[i] = 0.0;
            }
        }
        out.dbeta[t] += dbeta;
        out.dmu[t] += dmu;

        // dB += −μ · gu zᵀ; dA += +μ · gu yᵀ.
        for i in 0..q {
            if gu[i] == 0.0 {
                continue;
            }
            let gi = gu[i];
            let db_row = &mut out.db.data_mut()[i * q..(i + 1) * q];
            for (d, zv) in db_row.iter_mut().zip(z_in.iter()) {
                *d -= mu * gi * zv;
            }
            let cols = sample.y_r.len();
            let da_row = &mut out.da.data_mut()[i * cols..(i + 1) * cols];
            for (d, yv) in da_row.iter_mut().zip(sample.y_r.iter()) {
                *d += mu * gi * yv;
            }
        }

        // g ← gu − μ Bᵀ gu.
        params.b.tr_matvec(&gu, &mut btgu);
        for i in 0..q {
            g[i] = gu[i] - mu * btgu[i];
        }
    }
    out
}

/// Training loss (final-layer mean squared error).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    FinalLayerMse,
}

/// Training configuration. Data is simulated fresh every batch: random
/// devices, Rayleigh channels, and combined noise at `train_snr_db`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub train_snr_db: f64,
    pub source: SourceDist,
    pub seed: u64,
    pub loss: LossKind,
    pub layers: usize,
    /// Devices per transmission.
    pub k: usize,
    /// Receive antennas.
    pub m: usize,
    /// Codebook range (sources live on [lo, hi]).
    pub lo: f64,
    pub hi: f64,
    /// Scale factor on the universal-threshold ℓ1 weight used at init.
    pub rho_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 10,
            batches_per_epoch: 1000,
            learning_rate: 1e-5,
            train_snr_db: 10.0,
            source: SourceDist::Uniform01,
            seed: 1,
            loss: LossKind::FinalLayerMse,
            layers: 10,
            k: 10,
            m: 1024,
            lo: 0.0,
            hi: 1.0,
            rho_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.epochs == 0
            || self.batches_per_epoch == 0
            || self.layers == 0
            || self.k == 0
            || self.m == 0
        {
            return Err(Error::InvalidInput("training counts must be positive".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidInput(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.lo < self.hi) {
            return Err(Error::InvalidInput("codebook range must satisfy lo < hi".into()));
        }
        Ok(())
    }
}

/// Trained parameters plus the per-batch training-loss curve.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ListaParams,
    pub loss_curve: Vec<f64>,
}

/// Simulate one post-combining measurement for training. The per-device
/// hardening gains and the composite-channel energy are drawn jointly from
/// their exact law (Wishart route), and the combined noise from its exact
/// conditional distribution CN(0, σ²‖h̄‖²/M²) per entry; the resulting
/// measurement has the same distribution as the full superpose-and-combine
/// path without materializing the M × K channel or the L × M noise frame.
pub fn simulate_train_sample<R: Rng>(
    p: &SensingMatrix,
    cfg: &TrainConfig,
    sigma2: f64,
    rng: &mut R,
) -> Result<TrainSample> {
    use num_complex::Complex64;
    use rand_distr::StandardNormal;

    let q = p.q();
    let cb = make_uniform_codebook(cfg.lo, cfg.hi, q)?;
    let indices: Vec<usize> = (0..cfg.k)
        .map(|_| {
            let s = cfg.source.sample_scalar(rng)?;
            quantize_stochastic(s, &cb, rng)
        })
        .collect::<Result<_>>()?;
    let z_true = aggregate_counts(&indices, q)?.as_f64();

    let cg = sample_composite_gains(cfg.m, cfg.k, rng)?;
    let nvar = sigma2 * cg.h_bar_norm_sq / (cfg.m * cfg.m) as f64;
    let nscale = (nvar / 2.0).sqrt();

    let l = p.l();
    let mut y_bar = vec![Complex64::new(0.0, 0.0); l];
    for (k, &idx) in indices.iter().enumerate() {
        let gain = cg.gains[k];
        for (row, y) in y_bar.iter_mut().enumerate() {
            *y += p.p().get(row, idx) * gain;
        }
    }
    for y in y_bar.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *y += Complex64::new(re * nscale, im * nscale);
    }

    Ok(TrainSample { y_r: crate::airlink::stack_measurement(&y_bar), z_true })
}

/// Train the unfolded solver by plain SGD on freshly simulated batches.
/// Deterministic for a fixed config; aborts with a diagnostic if the loss
/// goes non-finite.
pub fn lista_train(p: &SensingMatrix, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let p_r = stack_sensing(p);
    let sigma2 = 10f64.powf(-cfg.train_snr_db / 10.0);
    // Universal-threshold ℓ1 weight from the expected combined noise level.
    let sigma_eff_sq = sigma2 * cfg.k as f64 / cfg.m as f64;
    let rho = cfg.rho_scale * (2.0 * (sigma_eff_sq / 2.0) * (p.q() as f64).ln()).sqrt();
    let mut params = lista_init(&p_r, cfg.layers, rho)?;

    let mut loss_curve = Vec::with_capacity(cfg.epochs * cfg.batches_per_epoch);
    for epoch in 0..cfg.epochs {
        for batch_idx in 0..cfg.batches_per_epoch {
            let batch: Vec<TrainSample> = (0..cfg.batch_size)
                .into_par_iter()
                .map(|sample_idx| {
                    let mut rng = seed::rng(
                        cfg.seed,
                        &[
                            seed::STREAM_TRAIN,
                            epoch as u64,
                            batch_idx as u64,
                            sample_idx as u64,
                        ],
                    );
                    simulate_train_sample(p, cfg, sigma2, &mut rng)
                })
                .collect::<Result<_>>()?;

            let grads = lista_gradient(&params, &batch)?;
            if !grads.loss.is_finite() {
                return Err(Error::DivergentLoss {
                    epoch,
                    batch: batch_idx,
                    loss: grads.loss,
                });
            }
            loss_curve.push(grads.loss);

            let lr = cfg.learning_rate;
            if lr > 0.0 {
                for (pv, gv) in params.a.data_mut().iter_mut().zip(grads.da.data().iter()) {
                    *pv -= lr * gv;
                }
                for (pv, gv) in params.b.data_mut().iter_mut().zip(grads.db.data().iter()) {
                    *pv -= lr * gv;
                }
                for (pv, gv) in params.mu.iter_mut().zip(grads.dmu.iter()) {
                    *pv -= lr * gv;
                }
                for (pv, gv) in params.beta.iter_mut().zip(grads.dbeta.iter()) {
                    *pv = (*pv - lr * gv).max(0.0);
                }
            }
        }
    }
    Ok(TrainOutcome { params, loss_curve })
}

/// Versioned on-disk record for trained parameters.
#[derive(Debug, Serialize, Deserialize)]
struct ListaRecord {
    version: u32,
    q: usize,
    measurement_dim: usize,
    layers: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    beta: Vec<f64>,
    mu: Vec<f64>,
    train: Option<TrainConfig>,
}

const LISTA_RECORD_VERSION: u32 = 1;

pub fn lista_to_json(params: &ListaParams, train: Option<&TrainConfig>) -> String {
    let rec = ListaRecord {
        version: LISTA_RECORD_VERSION,
        q: params.q(),
        measurement_dim: params.measurement_dim(),
        layers: params.layers,
        a: params.a.data().to_vec(),
        b: params.b.data().to_vec(),
        beta: params.beta.clone(),
        mu: params.mu.clone(),
        train: train.cloned(),
    };
    serde_json::to_string(&rec).expect("solver parameters serialize")
}

pub fn lista_from_json(text: &str) -> Result<(ListaParams, Option<TrainConfig>)> {
    let rec: ListaRecord = serde_json::from_str(text)?;
    if rec.version != LISTA_RECORD_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported solver record version {}",
            rec.version
        )));
    }
    if rec.a.len() != rec.q * rec.measurement_dim
        || rec.b.len() != rec.q * rec.q
        || rec.beta.len() != rec.layers
        || rec.mu.len() != rec.layers
    {
        return Err(Error::ShapeMismatch("solver record arrays do not match header".into()));
    }
    let mut a = RMat::zeros(rec.q, rec.measurement_dim);
    a.data_mut().copy_from_slice(&rec.a);
    let mut b = RMat::zeros(rec.q, rec.q);
    b.data_mut().copy_from_slice(&rec.b);
    Ok((
        ListaParams { a, b, beta: rec.beta, mu: rec.mu, layers: rec.layers },
        rec.train,
    ))
}
