//! Two-mode Gaussian states in the quadrature picture.
//!
//! Quadrature order is (I₁, Q₁, I₂, Q₂) and the vacuum covariance is `I/2`.

use nalgebra::{Matrix2, Matrix4};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, Bounds, LmOptions};
use crate::ops::{c, hermitian_eigen, CMatrix, C64};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix4 {
    m: Matrix4<f64>,
}

impl CovarianceMatrix4 {
    /// Validates symmetry (1e-12) and the uncertainty principle
    /// `V + (i/2)Ω ≥ 0` (1e-9).
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let asym = (m - m.transpose()).amax();
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(Error::UnphysicalCovariance(format!("asymmetry {asym:e}")));
        }
        let v = Self { m: (m + m.transpose()) / 2.0 };
        let min = v.uncertainty_min_eigenvalue()?;
        if min < -1e-9 {
            return Err(Error::UnphysicalCovariance(format!(
                "V + iΩ/2 has eigenvalue {min:e}"
            )));
        }
        Ok(v)
    }

    pub fn from_matrix_unchecked(m: Matrix4<f64>) -> Self {
        Self { m }
    }

    pub fn vacuum() -> Self {
        Self {
            m: Matrix4::identity() * 0.5,
        }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    fn block(&self, r: usize, c: usize) -> Matrix2<f64> {
        self.m.fixed_view::<2, 2>(2 * r, 2 * c).into_owned()
    }

    /// Smallest eigenvalue of `V + (i/2)Ω`.
    pub fn uncertainty_min_eigenvalue(&self) -> Result<f64> {
        let mut h = CMatrix::from_fn(4, 4, |i, j| C64::from(self.m[(i, j)]));
        for k in 0..2 {
            h[(2 * k, 2 * k + 1)] += c(0.0, 0.5);
            h[(2 * k + 1, 2 * k)] -= c(0.0, 0.5);
        }
        Ok(hermitian_eigen(&h)?.0[0])
    }

    /// Local photon numbers `N_i = (V_II + V_QQ)/2 − 1/2`.
    pub fn photon_numbers(&self) -> (f64, f64) {
        (
            (self.m[(0, 0)] + self.m[(1, 1)]) / 2.0 - 0.5,
            (self.m[(2, 2)] + self.m[(3, 3)]) / 2.0 - 0.5,
        )
    }

    /// `⟨a₁a₂⟩` reconstructed from the cross block.
    pub fn correlation(&self) -> C64 {
        let cb = self.block(0, 1);
        c((cb[(0, 0)] - cb[(1, 1)]) / 2.0, (cb[(0, 1)] + cb[(1, 0)]) / 2.0)
    }

    /// Exchanges `I₂ ↔ Q₂`.
    pub fn swap_second_quadratures(&self) -> Self {
        let mut p = Matrix4::<f64>::zeros();
        p[(0, 0)] = 1.0;
        p[(1, 1)] = 1.0;
        p[(2, 3)] = 1.0;
        p[(3, 2)] = 1.0;
        Self { m: p * self.m * p }
    }
}

/// Lossy two-mode squeezed vacuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmsvModel {
    pub r: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl TmsvModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !(0.0..=1.0).contains(&self.eta1) || !(0.0..=1.0).contains(&self.eta2) {
            return Err(Error::InvalidArgument(format!("invalid TMSV model {self:?}")));
        }
        Ok(())
    }
}

pub fn tmsv_covariance(model: &TmsvModel) -> Result<CovarianceMatrix4> {
    model.validate()?;
    let TmsvModel { r, eta1, eta2 } = *model;
    let sh2 = r.sinh().powi(2);
    let v11 = 0.5 + eta1 * sh2;
    let v33 = 0.5 + eta2 * sh2;
    let v13 = (eta1 * eta2).sqrt() * (2.0 * r).sinh() / 2.0;
    #[rustfmt::skip]
    let m = Matrix4::new(
        v11, 0.0, v13, 0.0,
        0.0, v11, 0.0, -v13,
        v13, 0.0, v33, 0.0,
        0.0, -v13, 0.0, v33,
    );
    Ok(CovarianceMatrix4 { m })
}

fn symplectic_pair(delta: f64, det: f64) -> Result<(f64, f64)> {
    let disc = delta * delta - 4.0 * det;
    if disc < -1e-12 * delta.abs().max(1.0).powi(2) {
        return Err(Error::UnphysicalCovariance(format!("negative discriminant {disc:e}")));
    }
    let root = disc.max(0.0).sqrt();
    let plus = ((delta + root) / 2.0).max(0.0).sqrt();
    // ν₊ν₋ = √det V avoids the cancelling root
    let minus = if plus > 0.0 && det >= 0.0 {
        det.sqrt() / plus
    } else {
        ((delta - root) / 2.0).max(0.0).sqrt()
    };
    Ok((plus, minus))
}

/// Symplectic eigenvalues `(ν₊, ν₋)` of the partially transposed state,
/// with `Δ̃ = det A + det B − 2 det C`.
pub fn symplectic_eigenvalues(v: &CovarianceMatrix4) -> Result<(f64, f64)> {
    let (a, b, cb) = (v.block(0, 0), v.block(1, 1), v.block(0, 1));
    symplectic_pair(a.determinant() + b.determinant() - 2.0 * cb.determinant(), v.m.determinant())
}

/// Symplectic eigenvalues of the state itself, `Δ = det A + det B + 2 det C`.
pub fn symplectic_eigenvalues_state(v: &CovarianceMatrix4) -> Result<(f64, f64)> {
    let (a, b, cb) = (v.block(0, 0), v.block(1, 1), v.block(0, 1));
    symplectic_pair(a.determinant() + b.determinant() + 2.0 * cb.determinant(), v.m.determinant())
}

/// `h(x)` of the Gaussian entanglement of formation; zero for `x ≥ 1`.
pub fn eof_h(x: f64) -> f64 {
    if x >= 1.0 || x <= 0.0 {
        return 0.0;
    }
    let p = (1.0 + x).powi(2) / (4.0 * x);
    let m = (1.0 - x).powi(2) / (4.0 * x);
    let term = |y: f64| if y > 0.0 { y * y.log2() } else { 0.0 };
    term(p) - term(m)
}

/// Gaussian entanglement of formation in ebits, `max(0, h(2ν̃₋))`.
pub fn cv_eof(v: &CovarianceMatrix4) -> Result<f64> {
    let (_, nu) = symplectic_eigenvalues(v)?;
    Ok(eof_h(2.0 * nu).max(0.0))
}

/// `μ = 1/(4√det V)`.
pub fn cv_purity(v: &CovarianceMatrix4) -> Result<f64> {
    let det = v.m.determinant();
    if !(det > 0.0) {
        return Err(Error::UnphysicalCovariance(format!("det V = {det:e}")));
    }
    Ok(1.0 / (4.0 * det.sqrt()))
}

/// `1 + N₁ + N₂ − 2M` with `M` the (phase-optimized) correlation magnitude.
pub fn duan_simon(n1: f64, n2: f64, m_corr: f64) -> f64 {
    1.0 + n1 + n2 - 2.0 * m_corr
}

/// `min_θ (ΔX₋)² + (ΔP₊)²` after rotating mode 2 by the optimal angle.
pub fn duan_simon_covariance(v: &CovarianceMatrix4) -> f64 {
    let (a, b, cb) = (v.block(0, 0), v.block(1, 1), v.block(0, 1));
    let amp = ((cb[(0, 0)] - cb[(1, 1)]).powi(2) + (cb[(0, 1)] + cb[(1, 0)]).powi(2)).sqrt();
    0.5 * (a.trace() + b.trace()) - amp
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmsvFit {
    pub model: TmsvModel,
    /// Frobenius norm of the misfit.
    pub residual: f64,
}

/// Least-squares fit of `(r, η₁, η₂)` to a measured covariance matrix.
pub fn fit_tmsv(v: &CovarianceMatrix4) -> Result<TmsvFit> {
    let target = *v.matrix();
    let res = |p: &[f64]| -> Vec<f64> {
        let model = TmsvModel {
            r: p[0],
            eta1: p[1],
            eta2: p[2],
        };
        match tmsv_covariance(&model) {
            Ok(cm) => (cm.m - target).iter().copied().collect(),
            Err(_) => vec![f64::INFINITY; 16],
        }
    };
    let bounds = Bounds {
        lower: vec![0.0, 0.0, 0.0],
        upper: vec![5.0, 1.0, 1.0],
    };
    let opts = LmOptions {
        max_iter: 2000,
        ..LmOptions::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for r0 in [0.1, 0.45, 0.8, 1.15, 1.5] {
        let out = levenberg_marquardt(res, &[r0, 0.5, 0.5], Some(&bounds), opts);
        if out.cost.is_finite() && best.as_ref().is_none_or(|b| out.cost < b.0) {
            best = Some((out.cost, out.params));
        }
    }
    let (cost, p) = best.ok_or(Error::FitFailure {
        residual: f64::INFINITY,
        reason: "no start produced a finite residual".into(),
    })?;
    Ok(TmsvFit {
        model: TmsvModel {
            r: p[0],
            eta1: p[1],
            eta2: p[2],
        },
        residual: cost.sqrt(),
    })
}

/// `½ coth(ħω / 2k_BT)`.
pub fn thermal_occupation_term(temp: f64, omega: f64) -> f64 {
    let x = HBAR * omega / (2.0 * K_B * temp);
    0.5 / x.tanh()
}

/// Detected noise power `ħω·RBW·G·(½coth(ħω/2k_BT) + N_add)` in W, for
/// `omega` in rad/s and `rbw` in Hz.
pub fn added_noise_model(temp: f64, omega: f64, gain: f64, n_add: f64, rbw: f64) -> Result<f64> {
    if !(temp > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temp}")));
    }
    Ok(HBAR * omega * rbw * gain * (thermal_occupation_term(temp, omega) + n_add))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AddedNoiseFit {
    /// Linear power gain.
    pub gain: f64,
    pub n_add: f64,
    pub r_squared: f64,
}

/// Straight-line fit of noise power against `½coth(ħω/2k_BT)`: the slope
/// gives the gain and the intercept over the slope gives `N_add`.
pub fn fit_added_noise(temps: &[f64], powers: &[f64], omega: f64, rbw: f64) -> Result<AddedNoiseFit> {
    if temps.len() != powers.len() || temps.len() < 2 {
        return Err(Error::InvalidArgument("need at least two paired points".into()));
    }
    if temps.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("temperatures must be positive".into()));
    }
    let x: Vec<f64> = temps.iter().map(|&t| thermal_occupation_term(t, omega)).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, powers.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(powers).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = powers.iter().map(|v| (v - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitFailure {
            residual: f64::NAN,
            reason: "all temperatures give the same occupation".into(),
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok(AddedNoiseFit {
        gain: slope / (HBAR * omega * rbw),
        n_add: intercept / slope,
        r_squared: if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 },
    })
}

/// `ζ = √(2(N_add + ½)/(⟨I²⟩ + ⟨Q²⟩))` from pump-off variances.
pub fn quadrature_scale_factor(var_i_off: f64, var_q_off: f64, n_add: f64) -> Result<f64> {
    if !(var_i_off > 0.0 && var_q_off > 0.0) {
        return Err(Error::InvalidArgument("variances must be positive".into()));
    }
    Ok((2.0 * (n_add + 0.5) / (var_i_off + var_q_off)).sqrt())
}

/// Decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::squeezing_parameter;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn model(r: f64, eta1: f64, eta2: f64) -> CovarianceMatrix4 {
        tmsv_covariance(&TmsvModel { r, eta1, eta2 }).unwrap()
    }

    fn thermal(n: f64) -> CovarianceMatrix4 {
        CovarianceMatrix4::new(Matrix4::identity() * (n + 0.5)).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(*model(0.0, 0.4, 0.9).matrix(), Matrix4::identity() * 0.5);
        assert!((model(0.465, 1.0, 1.0).get(0, 0) - 0.93f64.cosh() / 2.0).abs() < 1e-14);
        let v = model(0.5, 0.5, 0.3);
        assert_eq!(v.get(1, 3), -v.get(0, 2));
        assert!(CovarianceMatrix4::new(*v.matrix()).is_ok());
    }

    #[test]
    fn physical_on_grid() {
        for i in 0..=12 {
            for j in 0..=4 {
                for k in 0..=4 {
                    let v = model(0.25 * i as f64, 0.25 * j as f64, 0.25 * k as f64);
                    assert!(v.uncertainty_min_eigenvalue().unwrap() > -1e-9);
                }
            }
        }
        let mut bad = Matrix4::identity() * 0.5;
        bad[(0, 0)] = 0.1;
        assert!(CovarianceMatrix4::new(bad).is_err());
    }

    #[test]
    fn symplectic_examples() {
        let (p, m) = symplectic_eigenvalues(&CovarianceMatrix4::vacuum()).unwrap();
        assert!((p - 0.5).abs() < 1e-15 && (m - 0.5).abs() < 1e-15);
        for &r in &[0.1, 0.465, 1.3] {
            let (_, m) = symplectic_eigenvalues(&model(r, 1.0, 1.0)).unwrap();
            assert!((m - (-2.0 * r).exp() / 2.0).abs() < 1e-12);
            let (sp, sm) = symplectic_eigenvalues_state(&model(r, 1.0, 1.0)).unwrap();
            assert!((sp - 0.5).abs() < 1e-6 && (sm - 0.5).abs() < 1e-6);
        }
        let (p, m) = symplectic_eigenvalues(&thermal(0.7)).unwrap();
        assert!((p - 1.2).abs() < 1e-12 && (m - 1.2).abs() < 1e-12);
    }

    #[test]
    fn eof_examples() {
        assert_eq!(cv_eof(&CovarianceMatrix4::vacuum()).unwrap(), 0.0);
        assert_eq!(eof_h(1.0), 0.0);
        let r: f64 = 0.465;
        let expected = eof_h((-2.0 * r).exp());
        assert!((cv_eof(&model(r, 1.0, 1.0)).unwrap() - expected).abs() < 1e-12);
        // pure-state oracle: entropy of a thermal state with n = sinh²r
        let n = r.sinh().powi(2);
        let entropy = (n + 1.0) * (n + 1.0).log2() - n * n.log2();
        assert!((expected - entropy).abs() < 1e-12);
    }

    #[test]
    fn eof_monotone_in_squeezing_and_loss() {
        let mut prev = -1.0;
        for k in 0..100 {
            let e = cv_eof(&model(2.0 * k as f64 / 99.0, 1.0, 1.0)).unwrap();
            assert!(e > prev || (k == 0 && e == 0.0));
            prev = e;
        }
        for &r in &[0.3, 0.8] {
            for k in 1..10 {
                let hi = 0.1 * (k + 1) as f64;
                let lo = 0.1 * k as f64;
                assert!(cv_eof(&model(r, lo, 0.7)).unwrap() <= cv_eof(&model(r, hi, 0.7)).unwrap());
                assert!(cv_eof(&model(r, 0.7, lo)).unwrap() <= cv_eof(&model(r, 0.7, hi)).unwrap());
            }
        }
    }

    #[test]
    fn purity_examples() {
        assert!((cv_purity(&CovarianceMatrix4::vacuum()).unwrap() - 1.0).abs() < 1e-15);
        assert!((cv_purity(&model(1.2, 1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        let r = squeezing_parameter(0.5).unwrap();
        let mu = cv_purity(&model(r, 0.5, 0.3)).unwrap();
        assert!((mu - 1.0 / 3.0).abs() < 0.1, "{mu}");
        let bad = CovarianceMatrix4::from_matrix_unchecked(Matrix4::zeros());
        assert!(cv_purity(&bad).is_err());
    }

    #[test]
    fn duan_simon_paths_agree() {
        assert_eq!(duan_simon(0.0, 0.0, 0.0), 1.0);
        for &r in &[0.0, 0.2, 0.7, 1.5] {
            let v = model(r, 1.0, 1.0);
            assert!((duan_simon_covariance(&v) - (-2.0 * r).exp()).abs() < 1e-12);
            let n = r.sinh().powi(2);
            assert!((duan_simon(n, n, r.sinh() * r.cosh()) - (-2.0 * r).exp()).abs() < 1e-12 * (1.0 + n));
        }
        for &(r, e1, e2) in &[(0.3, 0.5, 0.3), (0.9, 0.8, 0.2), (1.4, 0.1, 1.0)] {
            let v = model(r, e1, e2);
            let (n1, n2) = v.photon_numbers();
            let m = v.correlation().norm();
            assert!((duan_simon(n1, n2, m) - duan_simon_covariance(&v)).abs() < 1e-12);
        }
    }

    #[test]
    fn duan_simon_rotation_is_optimal() {
        // correlation carried in the I/Q cross terms, i.e. a rotated pump phase
        let base = model(0.6, 0.7, 0.4);
        let mut m = *base.matrix();
        let v13 = m[(0, 2)];
        let th: f64 = 0.8;
        m[(0, 2)] = v13 * th.cos();
        m[(2, 0)] = m[(0, 2)];
        m[(1, 3)] = -v13 * th.cos();
        m[(3, 1)] = m[(1, 3)];
        m[(0, 3)] = v13 * th.sin();
        m[(3, 0)] = m[(0, 3)];
        m[(1, 2)] = v13 * th.sin();
        m[(2, 1)] = m[(1, 2)];
        let rotated = CovarianceMatrix4::new(m).unwrap();
        assert!((duan_simon_covariance(&rotated) - duan_simon_covariance(&base)).abs() < 1e-12);
        assert!((rotated.correlation() - C64::from_polar(v13, th)).norm() < 1e-12);
    }

    #[test]
    fn lossy_witness_certifies_entanglement() {
        let min = (0..=70)
            .map(|k| {
                let r = squeezing_parameter(k as f64 / 100.0).unwrap();
                duan_simon_covariance(&model(r, 0.5, 0.3))
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min < 1.0);
    }

    #[test]
    fn fit_exact_and_noisy() {
        let truth = TmsvModel {
            r: 0.7,
            eta1: 0.5,
            eta2: 0.3,
        };
        let v = tmsv_covariance(&truth).unwrap();
        let fit = fit_tmsv(&v).unwrap();
        assert!((fit.model.r - 0.7).abs() < 1e-8);
        assert!((fit.model.eta1 - 0.5).abs() < 1e-8);
        assert!((fit.model.eta2 - 0.3).abs() < 1e-8);
        assert!(fit.residual < 1e-10);

        let noise = Normal::new(0.0, 0.005).unwrap();
        let truth = TmsvModel {
            r: 1.0,
            eta1: 0.5,
            eta2: 0.3,
        };
        let clean = *tmsv_covariance(&truth).unwrap().matrix();
        let mut mean = [0.0; 3];
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = clean;
            for i in 0..4 {
                for j in i..4 {
                    let e = noise.sample(&mut rng);
                    m[(i, j)] += e;
                    if i != j {
                        m[(j, i)] += e;
                    }
                }
            }
            let fit = fit_tmsv(&CovarianceMatrix4::from_matrix_unchecked(m)).unwrap();
            assert!((fit.model.r / truth.r - 1.0).abs() < 0.1, "seed {seed}: {fit:?}");
            assert!((fit.model.eta1 / truth.eta1 - 1.0).abs() < 0.15, "seed {seed}: {fit:?}");
            assert!((fit.model.eta2 / truth.eta2 - 1.0).abs() < 0.15, "seed {seed}: {fit:?}");
            mean[0] += fit.model.r / 50.0;
            mean[1] += fit.model.eta1 / 50.0;
            mean[2] += fit.model.eta2 / 50.0;
        }
        assert!((mean[0] / truth.r - 1.0).abs() < 0.03, "{mean:?}");
        assert!((mean[1] / truth.eta1 - 1.0).abs() < 0.03, "{mean:?}");
        assert!((mean[2] / truth.eta2 - 1.0).abs() < 0.03, "{mean:?}");
    }

    #[test]
    fn added_noise_limits_and_fit() {
        let omega = 2.0 * std::f64::consts::PI * 6.761e9;
        let (g, nadd, rbw) = (db_to_linear(108.67), 26.8, 1e3);
        let cold = added_noise_model(1e-6, omega, g, nadd, rbw).unwrap();
        assert!((cold / (HBAR * omega * rbw * g * (0.5 + nadd)) - 1.0).abs() < 1e-12);
        let (t1, t2) = (1e4, 2e4);
        let slope = (added_noise_model(t2, omega, g, nadd, rbw).unwrap()
            - added_noise_model(t1, omega, g, nadd, rbw).unwrap())
            / (t2 - t1);
        assert!((slope / (K_B * rbw * g) - 1.0).abs() < 1e-6);
        assert!(added_noise_model(0.0, omega, g, nadd, rbw).is_err());

        let temps: Vec<f64> = (0..20).map(|k| 0.2 + 0.09 * k as f64).collect();
        let noise = Normal::new(0.0, 0.001).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let powers: Vec<f64> = temps
            .iter()
            .map(|&t| added_noise_model(t, omega, g, nadd, rbw).unwrap() * (1.0 + noise.sample(&mut rng)))
            .collect();
        let fit = fit_added_noise(&temps, &powers, omega, rbw).unwrap();
        assert!((fit.gain / g - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.n_add / nadd - 1.0).abs() < 0.01, "{fit:?}");
    }

    #[test]
    fn scale_factor() {
        assert!((quadrature_scale_factor(27.3, 27.3, 26.8).unwrap() - 1.0).abs() < 1e-15);
        assert!((quadrature_scale_factor(54.6, 54.6, 26.8).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(quadrature_scale_factor(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn quadrature_swap() {
        let v = model(0.5, 0.8, 0.6);
        let s = v.swap_second_quadratures();
        assert_eq!(s.get(0, 3), v.get(0, 2));
        assert_eq!(s.swap_second_quadratures(), v);
    }
}
