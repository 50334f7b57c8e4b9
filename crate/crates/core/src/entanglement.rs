//! Two-qubit entanglement measures and pump optimization.

use crate::error::{check_dim, Error, Result};
use crate::fit::golden_section_max;
use crate::network::{build_effective_me, tms_moments_analytic, NetworkParams};
use crate::ops::{c, hermitian_eigen, hermitian_part, kron, psd_sqrt, sigma_y, CMatrix, DensityMatrix, C64};

/// Spectral values below this are treated as zero before square roots.
const EIG_FLOOR: f64 = 1e-14;

/// `(σy ⊗ σy) ρ* (σy ⊗ σy)`.
pub fn spin_flip(rho: &CMatrix) -> CMatrix {
    let yy = kron(&sigma_y(), &sigma_y());
    &yy * rho.conjugate() * &yy
}

fn check_two_qubit(rho: &DensityMatrix) -> Result<()> {
    check_dim(4, rho.dim())
}

fn wootters(mut lambdas: Vec<f64>) -> f64 {
    lambdas.sort_by(|a, b| b.total_cmp(a));
    (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0)
}

/// Wootters concurrence from the spectrum of `R = √(√ρ ρ̃ √ρ)`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    check_two_qubit(rho)?;
    let s = psd_sqrt(&hermitian_part(rho.matrix()))?;
    let inner = hermitian_part(&(&s * spin_flip(rho.matrix()) * &s));
    let (vals, _) = hermitian_eigen(&inner)?;
    Ok(wootters(
        vals.iter()
            .map(|&v| if v > EIG_FLOOR { v.sqrt() } else { 0.0 })
            .collect(),
    ))
}

/// Concurrence from square roots of the (non-Hermitian) product `ρρ̃`.
pub fn concurrence_via_product(rho: &DensityMatrix) -> Result<f64> {
    check_two_qubit(rho)?;
    let prod = rho.matrix() * spin_flip(rho.matrix());
    let eig = prod
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::InvalidArgument("eigenvalues of ρρ̃ unavailable".into()))?;
    Ok(wootters(
        eig.iter()
            .map(|z| if z.re > EIG_FLOOR { z.re.sqrt() } else { 0.0 })
            .collect(),
    ))
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    term(x) + term(1.0 - x)
}

/// Entanglement of formation from concurrence, `h((1 + √(1−C²))/2)`.
pub fn dv_eof(c: f64) -> Result<f64> {
    if !(-1e-12..=1.0 + 1e-12).contains(&c) {
        return Err(Error::InvalidArgument(format!("concurrence {c} outside [0, 1]")));
    }
    let c = c.clamp(0.0, 1.0);
    Ok(binary_entropy((1.0 + (1.0 - c * c).sqrt()) / 2.0))
}

pub fn dv_purity(rho: &DensityMatrix) -> Result<f64> {
    check_two_qubit(rho)?;
    Ok(rho.purity())
}

/// Closed-form optimum of the lossless bidirectional model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticBounds {
    pub c_star: f64,
    pub r_star: f64,
    pub eps_star: f64,
    pub ef_star: f64,
}

pub fn analytic_bounds() -> AnalyticBounds {
    let s13 = 13f64.sqrt();
    let c_star = (13.0 * s13 - 19.0) / 108.0;
    let r_star = 0.5 * ((4.0 + s13) / 3.0).ln();
    AnalyticBounds {
        c_star,
        r_star,
        eps_star: (r_star / 2.0).tanh(),
        ef_star: dv_eof(c_star).expect("C* lies in [0, 1]"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpOptimum {
    pub eps: f64,
    pub concurrence: f64,
    /// Set when every grid point gave zero concurrence.
    pub all_zero: bool,
}

/// Coarse grid scan of `f` followed by golden-section refinement to
/// `tol` inside the bracketing grid cell.
pub fn maximize_on_grid<F>(f: F, grid: &[f64], tol: f64) -> Result<PumpOptimum>
where
    F: Fn(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty pump grid".into()));
    }
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect::<Result<_>>()?;
    let (k, &best) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if best <= 0.0 {
        return Ok(PumpOptimum {
            eps: grid[0],
            concurrence: 0.0,
            all_zero: true,
        });
    }
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    if hi - lo <= tol {
        return Ok(PumpOptimum {
            eps: grid[k],
            concurrence: best,
            all_zero: false,
        });
    }
    let (x, fx) = golden_section_max(|x| f(x).unwrap_or(f64::NEG_INFINITY), lo, hi, tol);
    Ok(if fx >= best {
        PumpOptimum {
            eps: x,
            concurrence: fx,
            all_zero: false,
        }
    } else {
        PumpOptimum {
            eps: grid[k],
            concurrence: best,
            all_zero: false,
        }
    })
}

/// Steady-state concurrence of the effective model at pump strength `eps`.
pub fn effective_concurrence(params: &NetworkParams, eps: f64) -> Result<f64> {
    let m = tms_moments_analytic(eps, params.jpc.phi_p, params.link)?;
    concurrence(&build_effective_me(params, &m)?.steady_state()?.rho)
}

/// 41 points on `[0, 0.9]`.
pub fn default_pump_grid() -> Vec<f64> {
    (0..41).map(|k| 0.9 * k as f64 / 40.0).collect()
}

/// Pump strength maximizing the effective-model steady-state concurrence.
pub fn optimize_pump(params: &NetworkParams, grid: &[f64]) -> Result<PumpOptimum> {
    if grid.iter().any(|&e| !(0.0..1.0).contains(&e)) {
        return Err(Error::InvalidArgument("pump grid must lie in [0, 1)".into()));
    }
    maximize_on_grid(|e| effective_concurrence(params, e), grid, 1e-4)
}

/// Bell states in the (gg, ge, eg, ee) basis.
pub fn bell_phi_plus() -> crate::ops::CVector {
    let h = 0.5f64.sqrt();
    crate::ops::CVector::from_vec(vec![c(h, 0.0), C64::from(0.0), C64::from(0.0), c(h, 0.0)])
}

pub fn bell_phi_minus() -> crate::ops::CVector {
    let h = 0.5f64.sqrt();
    crate::ops::CVector::from_vec(vec![c(h, 0.0), C64::from(0.0), C64::from(0.0), c(-h, 0.0)])
}

pub fn bell_psi_plus() -> crate::ops::CVector {
    let h = 0.5f64.sqrt();
    crate::ops::CVector::from_vec(vec![C64::from(0.0), c(h, 0.0), c(h, 0.0), C64::from(0.0)])
}

pub fn bell_psi_minus() -> crate::ops::CVector {
    let h = 0.5f64.sqrt();
    crate::ops::CVector::from_vec(vec![C64::from(0.0), c(h, 0.0), c(-h, 0.0), C64::from(0.0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{dark_state, NetworkParams};
    use crate::ops::{sigma_x, CVector, ONE};
    use crate::testutil::random_density;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unitary(rng: &mut impl Rng) -> CMatrix {
        let (a, b, g) = (rng.random::<f64>() * 6.3, rng.random::<f64>() * 6.3, rng.random::<f64>() * 6.3);
        let rz = |t: f64| {
            CMatrix::from_diagonal(&CVector::from_vec(vec![C64::from_polar(1.0, -t / 2.0), C64::from_polar(1.0, t / 2.0)]))
        };
        let rx = (CMatrix::identity(2, 2) * C64::from((b / 2.0).cos())) - sigma_x() * c(0.0, (b / 2.0).sin());
        rz(a) * rx * rz(g)
    }

    #[test]
    fn product_and_bell_states() {
        let prod = DensityMatrix::basis(4, 1);
        assert!(concurrence(&prod).unwrap().abs() < 1e-12);
        let bell = DensityMatrix::pure(&bell_phi_plus());
        assert!((concurrence(&bell).unwrap() - 1.0).abs() < 1e-7);
        assert!((concurrence_via_product(&bell).unwrap() - 1.0).abs() < 1e-7);
        assert!((concurrence(&DensityMatrix::maximally_mixed(4)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dark_state_concurrence() {
        for &n in &[0.01, 0.3, 1.0, 5.0] {
            let rho = DensityMatrix::pure(&dark_state(n, 0.4).unwrap());
            let expected = 2.0 * (n * (n + 1.0)).sqrt() / (2.0 * n + 1.0);
            assert!((concurrence(&rho).unwrap() - expected).abs() < 1e-7, "{n}");
        }
        let rho = DensityMatrix::pure(&dark_state(1.0, 0.0).unwrap());
        assert!((concurrence(&rho).unwrap() - 0.9428).abs() < 1e-4);
    }

    #[test]
    fn two_routes_agree_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            // mix in a strongly entangled component so both branches of max(0, ·) are exercised
            let w: f64 = rng.random();
            let bell = DensityMatrix::pure(&bell_psi_minus()).into_matrix();
            let m = random_density(4, &mut rng).into_matrix() * C64::from(1.0 - w) + bell * C64::from(w);
            let rho = DensityMatrix::from_matrix_unchecked(m);
            let a = concurrence(&rho).unwrap();
            let b = concurrence_via_product(&rho).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn local_unitary_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base = DensityMatrix::from_matrix_unchecked(
            DensityMatrix::pure(&dark_state(0.4, 0.2).unwrap()).into_matrix() * C64::from(0.8)
                + CMatrix::identity(4, 4) * C64::from(0.05),
        );
        let c0 = concurrence(&base).unwrap();
        assert!(c0 > 0.1);
        for _ in 0..20 {
            let u = kron(&random_unitary(&mut rng), &random_unitary(&mut rng));
            let rotated = DensityMatrix::from_matrix_unchecked(&u * base.matrix() * u.adjoint());
            assert!((concurrence(&rotated).unwrap() - c0).abs() < 1e-10);
        }
    }

    #[test]
    fn eof_examples() {
        assert_eq!(dv_eof(0.0).unwrap(), 0.0);
        assert!((dv_eof(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(dv_eof(1.1).is_err());
        let b = analytic_bounds();
        assert!((dv_eof(b.c_star).unwrap() - 0.12).abs() < 0.005);
        let mut prev = 0.0;
        for k in 1..=100 {
            let e = dv_eof(k as f64 / 100.0).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn purity_bounds() {
        assert!((dv_purity(&DensityMatrix::maximally_mixed(4)).unwrap() - 0.25).abs() < 1e-15);
        assert!((dv_purity(&DensityMatrix::pure(&bell_phi_plus())).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn analytic_constants() {
        let b = analytic_bounds();
        let s13 = 13f64.sqrt();
        assert!((b.r_star - ((s13 - 1.0) / 6.0).atanh()).abs() < 1e-14);
        assert!((b.r_star - 0.465).abs() < 1e-3);
        assert!((b.c_star - (13.0 * s13 - 19.0) / 108.0).abs() < 1e-16);
        assert!((b.eps_star - 0.22).abs() < 0.01);
    }

    #[test]
    fn bidirectional_optimum() {
        let p = NetworkParams::ideal(1.0, 100.0, true);
        let opt = optimize_pump(&p, &default_pump_grid()).unwrap();
        let b = analytic_bounds();
        assert!((opt.concurrence - b.c_star).abs() < 1e-6, "{opt:?}");
        assert!((opt.eps - b.eps_star).abs() < 1e-3, "{opt:?}");
    }

    #[test]
    fn chiral_concurrence_is_monotone() {
        let p = NetworkParams::ideal(1.0, 100.0, false);
        let grid = default_pump_grid();
        let vals: Vec<f64> = grid.iter().map(|&e| effective_concurrence(&p, e).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        let opt = optimize_pump(&p, &grid).unwrap();
        assert!((opt.eps - 0.9).abs() < 0.0226);
    }

    #[test]
    fn all_zero_flag() {
        let opt = maximize_on_grid(|_| Ok(0.0), &[0.0, 0.5], 1e-4).unwrap();
        assert!(opt.all_zero);
        assert_eq!(opt.eps, 0.0);
    }

    #[test]
    fn spin_flip_of_product_ground() {
        let g = DensityMatrix::basis(4, 0);
        let flipped = spin_flip(g.matrix());
        assert_eq!(flipped[(3, 3)], ONE);
    }
}
