//! Photon-number and correlation estimation with amplified heterodyne
//! detection versus qubits used as square-law detectors.

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::integrate_adaptive;
use crate::gaussian::{db_to_linear, CovarianceMatrix4};
use crate::ops::{c, C64};
use crate::tomography::PauliExpectations;

/// Linear amplification chain of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorCal {
    /// Linear power gain.
    pub gain: f64,
    /// Added noise photons, referred to the input.
    pub n_add: f64,
}

impl DetectorCal {
    pub fn new(gain: f64, n_add: f64) -> Result<Self> {
        if !(gain > 1.0) || !(n_add >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "detector calibration needs gain > 1 and n_add ≥ 0, got ({gain}, {n_add})"
            )));
        }
        Ok(Self { gain, n_add })
    }

    /// Calibrated chains of the two output channels: 108.67 dB gain with
    /// 26.8 and 13.4 added photons.
    pub fn experiment() -> [Self; 2] {
        let g = db_to_linear(108.67);
        [Self { gain: g, n_add: 26.8 }, Self { gain: g, n_add: 13.40 }]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitDetectorCal {
    /// `ξ = γ_R / γ₁`.
    pub xi: f64,
    /// Dispersive readout SNR `(S_g − S_e)² / Var{S}`.
    pub readout_snr: f64,
}

impl QubitDetectorCal {
    pub fn new(xi: f64, readout_snr: f64) -> Result<Self> {
        if !(xi > 0.0 && xi <= 1.0) || !(readout_snr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "qubit detector needs ξ ∈ (0, 1] and SNR > 0, got ({xi}, {readout_snr})"
            )));
        }
        Ok(Self { xi, readout_snr })
    }

    /// `ξ = γ_R / (γ_R + γ_L + γ_ng)` for qubit `k` of a parameter set.
    pub fn from_qubit(q: &crate::network::QubitParams, k: usize, readout_snr: f64) -> Result<Self> {
        let g1 = q.gamma_r[k] + q.gamma_l[k] + q.gamma_ng[k];
        Self::new(q.gamma_r[k] / g1, readout_snr)
    }
}

/// `N = P_e / ξ`. Valid in linear response only, since the qubit saturates.
pub fn qubit_photon_estimate(p_e: f64, cal: &QubitDetectorCal) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_e) {
        return Err(Error::InvalidArgument(format!("excited population {p_e} outside [0, 1]")));
    }
    Ok(p_e / cal.xi)
}

/// `M = ¼√(ξ₁⁻¹ξ₂⁻¹)(⟨XX⟩ − ⟨YY⟩ − i⟨YX⟩ − i⟨XY⟩)`.
pub fn qubit_correlation_estimate(exps: &PauliExpectations, cal1: &QubitDetectorCal, cal2: &QubitDetectorCal) -> C64 {
    let pre = 0.25 / (cal1.xi * cal2.xi).sqrt();
    let (xx, yy, yx, xy) = (exps.get(1, 1), exps.get(2, 2), exps.get(2, 1), exps.get(1, 2));
    c(xx - yy, -(yx + xy)) * pre
}

/// `(½ + N_add + N₁)² / (N − 1)`.
pub fn heterodyne_variance(n1: f64, n_add: f64, samples: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    Ok((0.5 + n_add + n1).powi(2) / (samples - 1) as f64)
}

/// Per-shot heterodyne variance `(½ + N_add + N₁)²`.
pub fn heterodyne_variance_per_shot(n1: f64, n_add: f64) -> f64 {
    (0.5 + n_add + n1).powi(2)
}

/// Per-shot variance `SNR⁻¹ ξ⁻²` of the qubit estimate, independent of `N`.
pub fn qubit_variance(cal: &QubitDetectorCal) -> Result<f64> {
    if !(cal.readout_snr > 0.0) {
        return Err(Error::InvalidArgument("readout SNR must be positive".into()));
    }
    Ok(1.0 / (cal.readout_snr * cal.xi * cal.xi))
}

/// Per-shot variance when `N` is inferred by inverting the saturating
/// response `P_e = ξN / (1 + 2ξN)`: `SNR⁻¹ ξ⁻² (1 + 2ξN)⁴`.
pub fn qubit_variance_saturated(cal: &QubitDetectorCal, n: f64) -> Result<f64> {
    Ok(qubit_variance(cal)? * (1.0 + 2.0 * cal.xi * n).powi(4))
}

/// Photon number above which heterodyne detection has the lower per-shot
/// variance, using the saturating qubit response. `None` if the qubit is
/// better everywhere on `[0, n_max]`.
pub fn detection_crossover(het: &DetectorCal, qubit: &QubitDetectorCal, n_max: f64) -> Result<Option<f64>> {
    let diff = |n: f64| -> Result<f64> { Ok(heterodyne_variance_per_shot(n, het.n_add) - qubit_variance_saturated(qubit, n)?) };
    let mut lo = 0.0;
    if diff(lo)? <= 0.0 {
        return Ok(Some(0.0));
    }
    let mut hi = n_max;
    if diff(hi)? > 0.0 {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if diff(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeterodyneEstimate {
    /// Sample covariance of the amplified records, in the recorded frame.
    pub raw: Matrix4<f64>,
    /// Records scaled by `ζ = 1/√G` and returned to the (I₁, Q₁, I₂, Q₂) frame.
    pub rescaled: CovarianceMatrix4,
    /// `rescaled` with the added noise removed from the diagonal.
    pub state: CovarianceMatrix4,
}

impl HeterodyneEstimate {
    /// `N̂₁ = (⟨I₁²⟩ + ⟨Q₁²⟩)/2 − ½ − N_add`.
    pub fn photon_number(&self, channel: usize, n_add: f64) -> f64 {
        let k = 2 * channel;
        let m = self.rescaled.matrix();
        (m[(k, k)] + m[(k + 1, k + 1)]) / 2.0 - 0.5 - n_add
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeterodyneSetup {
    pub cal: [DetectorCal; 2],
    /// Channel 2 is recorded as (Q₂, I₂).
    pub swap_channel2: bool,
}

impl HeterodyneSetup {
    pub fn new(cal1: DetectorCal, cal2: DetectorCal) -> Self {
        Self {
            cal: [cal1, cal2],
            swap_channel2: true,
        }
    }

    /// Covariance of the recorded quadratures: `G(V + N_add)` per channel,
    /// `√(G₁G₂)·C` across channels, in the recorded frame.
    pub fn recorded_covariance(&self, v: &CovarianceMatrix4) -> Matrix4<f64> {
        let g = [self.cal[0].gain, self.cal[0].gain, self.cal[1].gain, self.cal[1].gain];
        let add = [self.cal[0].n_add, self.cal[0].n_add, self.cal[1].n_add, self.cal[1].n_add];
        let mut m = Matrix4::from_fn(|i, j| (g[i] * g[j]).sqrt() * v.get(i, j));
        for k in 0..4 {
            m[(k, k)] += g[k] * add[k];
        }
        if self.swap_channel2 {
            m = swap_23(&m);
        }
        m
    }
}

fn swap_23(m: &Matrix4<f64>) -> Matrix4<f64> {
    let p = [0, 1, 3, 2];
    Matrix4::from_fn(|i, j| m[(p[i], p[j])])
}

/// Draws `samples` amplified quadrature records of a Gaussian state and
/// returns the empirical covariance, raw and rescaled.
pub fn heterodyne_sample(v: &CovarianceMatrix4, setup: &HeterodyneSetup, samples: u64, seed: u64) -> Result<HeterodyneEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!("need at least 1000 samples, got {samples}")));
    }
    for cal in &setup.cal {
        DetectorCal::new(cal.gain, cal.n_add)?;
    }
    let cov = setup.recorded_covariance(v);
    let l = cov
        .cholesky()
        .ok_or_else(|| Error::UnphysicalCovariance("recorded covariance is not positive definite".into()))?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = Vector4::<f64>::zeros();
    let mut outer = Matrix4::<f64>::zeros();
    for _ in 0..samples {
        let z = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let x = l * z;
        sum += x;
        outer += x * x.transpose();
    }
    let n = samples as f64;
    let mean = sum / n;
    let raw = (outer - mean * mean.transpose() * n) / (n - 1.0);
    let frame = if setup.swap_channel2 { swap_23(&raw) } else { raw };
    let zeta = [
        1.0 / setup.cal[0].gain.sqrt(),
        1.0 / setup.cal[0].gain.sqrt(),
        1.0 / setup.cal[1].gain.sqrt(),
        1.0 / setup.cal[1].gain.sqrt(),
    ];
    let rescaled = Matrix4::from_fn(|i, j| zeta[i] * zeta[j] * frame[(i, j)]);
    let mut state = rescaled;
    for k in 0..4 {
        state[(k, k)] -= setup.cal[k / 2].n_add;
    }
    Ok(HeterodyneEstimate {
        raw,
        rescaled: CovarianceMatrix4::from_matrix_unchecked(rescaled),
        state: CovarianceMatrix4::from_matrix_unchecked(state),
    })
}

/// Empirical variance of `N̂₁` over `reps` independent records of
/// `samples` shots each. Record `k` uses seed `seed·2³² + k`.
pub fn heterodyne_n1_variance_mc(
    v: &CovarianceMatrix4,
    setup: &HeterodyneSetup,
    samples: u64,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if reps < 2 {
        return Err(Error::InvalidArgument("need at least two repetitions".into()));
    }
    let est: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|k| {
            heterodyne_sample(v, setup, samples, (seed << 32) + k as u64).map(|e| e.photon_number(0, setup.cal[0].n_add))
        })
        .collect::<Result<_>>()?;
    let mean = est.iter().sum::<f64>() / reps as f64;
    Ok(est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64)
}

/// Numerically integrates `γ_R|χ(ω)|²/2π` over the real line and returns
/// the ratio to `ξ = γ_R/γ₁`.
pub fn lorentzian_response_check(gamma_r: f64, gamma_1: f64) -> Result<f64> {
    if !(gamma_r > 0.0 && gamma_1 >= gamma_r) {
        return Err(Error::InvalidArgument(format!(
            "need γ₁ ≥ γ_R > 0, got γ_R = {gamma_r}, γ₁ = {gamma_1}"
        )));
    }
    let half = gamma_1 / 2.0;
    // ω − ω₀ = (γ₁/2)·t/(1 − t²) maps t ∈ (−1, 1) onto the real line
    // after cancelling the Jacobian the integrand is smooth on [−1, 1]
    let integrand = |t: f64| {
        let d = 1.0 - t * t;
        gamma_r / (2.0 * std::f64::consts::PI) * (1.0 + t * t) / (half * (t * t + d * d))
    };
    let tol = 1e-12 * gamma_r / gamma_1;
    let total = integrate_adaptive(integrand, -1.0, 1.0, tol, 50)?;
    Ok(total / (gamma_r / gamma_1))
}

/// Fraction of the Lorentzian weight outside `|ω − ω₀| ≤ w·γ₁`,
/// `1 − (2/π) atan(2w)`.
pub fn lorentzian_truncation_error(w: f64) -> f64 {
    1.0 - 2.0 / std::f64::consts::PI * (2.0 * w).atan()
}
