//! Preamble generation, uplink superposition, and blind receive combining.
//!
//! Every device modulates its chosen codebook index as one column of a shared
//! L × Q preamble matrix and all devices transmit at once, so the receiver
//! observes Y = P Σ_k z_k h_kᵀ + N. Combining with the composite channel,
//! ȳ = Y h̄*/M, collapses this to ȳ ≈ P z + n̄ once the antenna count is
//! large. Because the count vector z is real and nonnegative, the detectors
//! consume a real-stacked reformulation of that measurement model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, NoiseBlock};
use crate::error::{Error, Result};
use crate::mat::{CMat, RMat};
use crate::seed;

/// Rows of the fixed master preamble codebook.
pub const MASTER_ROWS: usize = 60;
/// Columns of the fixed master preamble codebook.
pub const MASTER_COLS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingKind {
    /// Submatrix of the complex Gaussian master codebook.
    Gaussian,
    /// First q columns of the L × L unitary DFT; orthonormal, needs q <= l.
    Dft,
}

/// Shared L × Q preamble (sensing) matrix.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    p: CMat,
    kind: SensingKind,
    l: usize,
    q: usize,
    /// Seed of the master codebook this was sliced from (Gaussian kind).
    parent_seed: Option<u64>,
}

impl SensingMatrix {
    #[inline]
    pub fn p(&self) -> &CMat {
        &self.p
    }

    #[inline]
    pub fn kind(&self) -> SensingKind {
        self.kind
    }

    #[inline]
    pub fn l(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn parent_seed(&self) -> Option<u64> {
        self.parent_seed
    }

    /// Top-left l × q block, keeping the parent seed so the slice provenance
    /// stays reproducible.
    pub fn submatrix(&self, l: usize, q: usize) -> Result<SensingMatrix> {
        if l > self.l || q > self.q {
            return Err(Error::ShapeMismatch(format!(
                "requested {l} x {q} block from {} x {} matrix",
                self.l, self.q
            )));
        }
        if self.kind == SensingKind::Dft && q > l {
            return Err(Error::InvalidInput("DFT sensing matrix requires q <= l".into()));
        }
        Ok(SensingMatrix {
            p: self.p.submatrix(l, q),
            kind: self.kind,
            l,
            q,
            parent_seed: self.parent_seed,
        })
    }
}

/// The fixed 60 × 256 complex Gaussian master codebook shared by transmitter
/// and receiver; deterministic in `seed`.
pub fn master_codebook(seed: u64) -> SensingMatrix {
    let mut rng = seed::rng(seed, &[seed::STREAM_MASTER_CODEBOOK]);
    let p = CMat::from_fn(MASTER_ROWS, MASTER_COLS, |_, _| {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
    });
    SensingMatrix {
        p,
        kind: SensingKind::Gaussian,
        l: MASTER_ROWS,
        q: MASTER_COLS,
        parent_seed: Some(seed),
    }
}

/// Top-left l × q Gaussian preamble sliced from the master codebook.
pub fn gaussian_sensing_matrix(seed: u64, l: usize, q: usize) -> Result<SensingMatrix> {
    if l == 0 || q == 0 || l > MASTER_ROWS || q > MASTER_COLS {
        return Err(Error::InvalidInput(format!(
            "gaussian preamble must fit the {MASTER_ROWS} x {MASTER_COLS} master codebook, got {l} x {q}"
        )));
    }
    master_codebook(seed).submatrix(l, q)
}

/// First `q` columns of the L × L unitary DFT matrix; PᴴP = I_q.
pub fn dft_sensing_matrix(l: usize, q: usize) -> Result<SensingMatrix> {
    if l == 0 || q == 0 || q > l {
        return Err(Error::InvalidInput(format!("DFT preamble requires 1 <= q <= l, got l = {l}, q = {q}")));
    }
    let scale = 1.0 / (l as f64).sqrt();
    let p = CMat::from_fn(l, q, |r, c| {
        let angle = -2.0 * std::f64::consts::PI * (r * c) as f64 / l as f64;
        Complex64::from_polar(scale, angle)
    });
    Ok(SensingMatrix { p, kind: SensingKind::Dft, l, q, parent_seed: None })
}

/// Received uplink frame: Y = P (Σ_k e_{idx_k} h_kᵀ) + N, accumulated as K
/// rank-1 terms (column of P times the device's channel row).
pub fn transmit_superpose(
    p: &SensingMatrix,
    indices: &[usize],
    cs: &ChannelSet,
    noise: &NoiseBlock,
) -> Result<CMat> {
    if indices.len() != cs.k() {
        return Err(Error::ShapeMismatch(format!(
            "{} device indices vs {} channels",
            indices.len(),
            cs.k()
        )));
    }
    if noise.n().rows() != p.l || noise.n().cols() != cs.m() {
        return Err(Error::ShapeMismatch(format!(
            "noise block {} x {} vs expected {} x {}",
            noise.n().rows(),
            noise.n().cols(),
            p.l,
            cs.m()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= p.q) {
        return Err(Error::InvalidInput(format!("device index {bad} out of range for q = {}", p.q)));
    }

    let m = cs.m();
    let mut y = noise.n().clone();
    for (k, &idx) in indices.iter().enumerate() {
        for l in 0..p.l {
            let plq = p.p.get(l, idx);
            if plq.norm_sqr() == 0.0 {
                continue;
            }
            let row = &mut y.data_mut()[l * m..(l + 1) * m];
            for (mm, yv) in row.iter_mut().enumerate() {
                *yv += plq * cs.h().get(mm, k);
            }
        }
    }
    Ok(y)
}

/// Blind combining with the composite channel: ȳ = Y h̄* / M. No
/// approximation is applied; the hardening step is exact by construction and
/// only the interpretation ȳ ≈ P z relies on large M.
pub fn harden_combine(y: &CMat, cs: &ChannelSet) -> Result<Vec<Complex64>> {
    if y.cols() != cs.m() {
        return Err(Error::ShapeMismatch(format!(
            "frame has {} antenna columns, channel has {}",
            y.cols(),
            cs.m()
        )));
    }
    let m = cs.m() as f64;
    Ok((0..y.rows())
        .map(|l| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (yv, hb) in y.row(l).iter().zip(cs.h_bar().iter()) {
                acc += yv * hb.conj();
            }
            acc / m
        })
        .collect())
}

/// Real-valued reformulation of ȳ = P z + n̄ for a real nonnegative z:
/// stacked measurement [Re ȳ; Im ȳ], stacked operator [Re P; Im P], and the
/// per-entry real noise variance (half the complex one).
#[derive(Debug, Clone)]
pub struct RealStackedModel {
    pub y_r: Vec<f64>,
    pub p_r: RMat,
    pub noise_var_r: f64,
}

/// Stack a complex sensing matrix into its real 2L × Q form.
pub fn stack_sensing(p: &SensingMatrix) -> RMat {
    let (l, q) = (p.l, p.q);
    RMat::from_fn(2 * l, q, |r, c| {
        if r < l {
            p.p.get(r, c).re
        } else {
            p.p.get(r - l, c).im
        }
    })
}

/// Stack a complex measurement into its real 2L form.
pub fn stack_measurement(y_bar: &[Complex64]) -> Vec<f64> {
    y_bar
        .iter()
        .map(|z| z.re)
        .chain(y_bar.iter().map(|z| z.im))
        .collect()
}

/// Build the full real-stacked model for a combined measurement.
pub fn real_stack(y_bar: &[Complex64], p: &SensingMatrix, noise_var: f64) -> Result<RealStackedModel> {
    if y_bar.len() != p.l {
        return Err(Error::ShapeMismatch(format!(
            "measurement length {} vs preamble length {}",
            y_bar.len(),
            p.l
        )));
    }
    Ok(RealStackedModel {
        y_r: stack_measurement(y_bar),
        p_r: stack_sensing(p),
        noise_var_r: noise_var / 2.0,
    })
}

/// Invert `stack_measurement`.
pub fn unstack_measurement(y_r: &[f64]) -> Vec<Complex64> {
    let l = y_r.len() / 2;
    (0..l).map(|i| Complex64::new(y_r[i], y_r[l + i])).collect()
}

/// Structured export of a sensing matrix (documented header plus row-major
/// real/imag arrays) so runs can share identical preambles.
#[derive(Debug, Serialize, Deserialize)]
struct SensingMatrixRecord {
    kind: SensingKind,
    l: usize,
    q: usize,
    seed: Option<u64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

pub fn sensing_to_json(p: &SensingMatrix) -> String {
    let rec = SensingMatrixRecord {
        kind: p.kind,
        l: p.l,
        q: p.q,
        seed: p.parent_seed,
        re: p.p.data().iter().map(|z| z.re).collect(),
        im: p.p.data().iter().map(|z| z.im).collect(),
    };
    serde_json::to_string(&rec).expect("sensing matrix serializes")
}

pub fn sensing_from_json(text: &str) -> Result<SensingMatrix> {
    let rec: SensingMatrixRecord = serde_json::from_str(text)?;
    if rec.re.len() != rec.l * rec.q || rec.im.len() != rec.l * rec.q {
        return Err(Error::ShapeMismatch("sensing matrix record arrays do not match header".into()));
    }
    let p = CMat::from_fn(rec.l, rec.q, |r, c| {
        Complex64::new(rec.re[r * rec.q + c], rec.im[r * rec.q + c])
    });
    Ok(SensingMatrix { p, kind: rec.kind, l: rec.l, q: rec.q, parent_seed: rec.seed })
}
