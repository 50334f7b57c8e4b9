//! Dense complex operator kernel.
//!
//! Qubit basis ordering is `|g⟩ = (1, 0)`, `|e⟩ = (0, 1)` with
//! `σz|e⟩ = +|e⟩` and `σ⁻ = |g⟩⟨e|`. Composite spaces are ordered
//! as (JPC mode 1, JPC mode 2, qubit 1, qubit 2) and described by a
//! [`SpaceLayout`]; the first factor is the most significant index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Ordered subsystem dimensions of a tensor-product Hilbert space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceLayout {
    dims: Vec<usize>,
}

impl SpaceLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layout factors must be positive, got {dims:?}"
            )));
        }
        Ok(Self { dims })
    }

    /// `[n_max + 1, n_max + 1, 2, 2]`: two truncated modes followed by two qubits.
    pub fn jpc_two_qubits(n_max: usize) -> Self {
        Self {
            dims: vec![n_max + 1, n_max + 1, 2, 2],
        }
    }

    pub fn qubits(n: usize) -> Self {
        Self { dims: vec![2; n] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Embeds a single-factor operator at position `site`.
    pub fn embed(&self, op: &CMatrix, site: usize) -> Result<CMatrix> {
        if site >= self.dims.len() {
            return Err(Error::InvalidArgument(format!(
                "site {site} outside layout of {} factors",
                self.dims.len()
            )));
        }
        check_dim(self.dims[site], op.nrows())?;
        let mut out = CMatrix::identity(1, 1);
        for (k, &d) in self.dims.iter().enumerate() {
            if k == site {
                out = kron(&out, op);
            } else {
                out = kron(&out, &CMatrix::identity(d, d));
            }
        }
        Ok(out)
    }
}

/// A density matrix: Hermitian, positive semidefinite, unit trace.
///
/// Construction through [`DensityMatrix::new`] checks the invariants;
/// [`DensityMatrix::from_matrix_unchecked`] is for solver outputs that
/// have already been projected.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    pub fn new(m: CMatrix, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument("density matrix must be square".into()));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidArgument(format!("trace {tr} differs from 1")));
        }
        if hermiticity_error(&m) > tol {
            return Err(Error::InvalidArgument("matrix is not Hermitian".into()));
        }
        let (vals, _) = hermitian_eigen(&m)?;
        if vals.iter().any(|&v| v < -tol) {
            return Err(Error::InvalidArgument("matrix is not positive semidefinite".into()));
        }
        Ok(Self { m })
    }

    pub fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self { m }
    }

    pub fn pure(psi: &CVector) -> Self {
        let norm = psi.norm();
        let v = psi / C64::from(norm);
        Self { m: &v * v.adjoint() }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            m: CMatrix::identity(d, d) / C64::from(d as f64),
        }
    }

    /// Projector onto basis state `k`.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut m = CMatrix::zeros(d, d);
        m[(k, k)] = ONE;
        Self { m }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Tr{ρ²}.
    pub fn purity(&self) -> f64 {
        self.m
            .iter()
            .zip(self.m.adjoint().iter())
            .map(|(a, b)| (a * b).re)
            .sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.m)
            .map(|(v, _)| v.iter().cloned().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NAN)
    }

    /// Symmetrizes, clamps eigenvalues below zero and renormalizes the trace.
    pub fn project_physical(m: &CMatrix) -> Result<Self> {
        let h = hermitian_part(m);
        let (vals, vecs) = hermitian_eigen(&h)?;
        let clamped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("matrix has no positive spectrum".into()));
        }
        let out = from_spectrum(&clamped, &vecs) / C64::from(total);
        Ok(Self {
            m: hermitian_part(&out),
        })
    }
}

impl AsRef<CMatrix> for DensityMatrix {
    fn as_ref(&self) -> &CMatrix {
        &self.m
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    out
}

pub fn kron_all(ops: &[&CMatrix]) -> CMatrix {
    ops.iter()
        .fold(CMatrix::identity(1, 1), |acc, op| kron(&acc, op))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Truncated bosonic lowering operator on `n_max + 1` Fock levels.
pub fn annihilation(n_max: usize) -> Result<CMatrix> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let d = n_max + 1;
    let mut a = CMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    Ok(a)
}

/// `|g⟩⟨e|`
pub fn sigma_minus() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

/// `|e⟩⟨g|`
pub fn sigma_plus() -> CMatrix {
    sigma_minus().adjoint()
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

/// Chosen so that `σ± = (σx ± iσy)/2` in the `(|g⟩, |e⟩)` ordering.
pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, I, -I, ZERO])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[-ONE, ZERO, ZERO, ONE])
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * C64::from(0.5)
}

/// Largest elementwise deviation `max |A − A†|`.
pub fn hermiticity_error(a: &CMatrix) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !a.is_square() {
        return Err(Error::InvalidArgument("eigendecomposition needs a square matrix".into()));
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    if hermiticity_error(a) > 1e-9 * scale {
        return Err(Error::InvalidArgument("matrix is not Hermitian".into()));
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMatrix::zeros(a.nrows(), a.nrows());
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

pub(crate) fn from_spectrum(vals: &[f64], vecs: &CMatrix) -> CMatrix {
    let mut scaled = vecs.clone();
    for (k, &v) in vals.iter().enumerate() {
        scaled.column_mut(k).scale_mut(v);
    }
    &scaled * vecs.adjoint()
}

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Eigenvalues down to −1e-10 are clamped to zero.
pub fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(a)?;
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if let Some(&v) = vals.iter().find(|&&v| v < -1e-10 * scale) {
        return Err(Error::InvalidArgument(format!(
            "matrix is not positive semidefinite (eigenvalue {v:e})"
        )));
    }
    let floor = f64::EPSILON * scale * vals.len() as f64;
    let roots: Vec<f64> = vals.iter().map(|&v| if v > floor { v.sqrt() } else { 0.0 }).collect();
    Ok(hermitian_part(&from_spectrum(&roots, &vecs)))
}

/// `Tr{op · ρ}`.
pub fn expect(op: &CMatrix, rho: &DensityMatrix) -> Result<C64> {
    check_dim(rho.dim(), op.nrows())?;
    check_dim(rho.dim(), op.ncols())?;
    let m = rho.matrix();
    let mut acc = ZERO;
    for i in 0..op.nrows() {
        for k in 0..op.ncols() {
            acc += op[(i, k)] * m[(k, i)];
        }
    }
    Ok(acc)
}

/// Traces out every factor not listed in `keep`; kept factors retain
/// their original relative order.
pub fn partial_trace(
    rho: &DensityMatrix,
    layout: &SpaceLayout,
    keep: &[usize],
) -> Result<DensityMatrix> {
    check_dim(layout.dim(), rho.dim())?;
    let dims = layout.dims();
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.iter().any(|&k| k >= dims.len()) {
        return Err(Error::InvalidArgument(format!(
            "keep set {keep:?} outside layout of {} factors",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep_sorted.contains(k)).collect();
    let d_keep: usize = keep_sorted.iter().map(|&k| dims[k]).product();
    let d_tr: usize = traced.iter().map(|&k| dims[k]).product();

    // Strides of each factor in the full row-major multi-index.
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let offsets = |factors: &[usize], mut idx: usize| -> usize {
        let mut off = 0;
        for &f in factors.iter().rev() {
            off += (idx % dims[f]) * strides[f];
            idx /= dims[f];
        }
        off
    };
    let keep_off: Vec<usize> = (0..d_keep).map(|i| offsets(&keep_sorted, i)).collect();
    let tr_off: Vec<usize> = (0..d_tr).map(|i| offsets(&traced, i)).collect();

    let m = rho.matrix();
    let mut out = CMatrix::zeros(d_keep, d_keep);
    for (j, &kj) in keep_off.iter().enumerate() {
        for (i, &ki) in keep_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &tr_off {
                acc += m[(ki + t, kj + t)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(DensityMatrix { m: out })
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dim(rho.dim(), sigma.dim())?;
    let s = psd_sqrt(rho.matrix())?;
    let inner = hermitian_part(&(&s * sigma.matrix() * &s));
    let root = psd_sqrt(&inner)?;
    Ok(root.trace().re.powi(2))
}

/// `⟨ψ|ρ|ψ⟩` for a normalized `ψ`.
pub fn overlap(psi: &CVector, rho: &DensityMatrix) -> Result<f64> {
    check_dim(rho.dim(), psi.len())?;
    Ok((psi.adjoint() * rho.matrix() * psi)[(0, 0)].re)
}

/// `½ ‖ρ − σ‖₁`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dim(rho.dim(), sigma.dim())?;
    let diff = rho.matrix() - sigma.matrix();
    let (vals, _) = hermitian_eigen(&hermitian_part(&diff))?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// Frobenius norm of a complex matrix.
pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_density;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_identities() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
        let z = kron(&sigma_z(), &identity(2));
        let diag: Vec<f64> = (0..4).map(|i| z[(i, i)].re).collect();
        // σz in (g, e) ordering is diag(−1, 1)
        assert_eq!(diag, vec![-1.0, -1.0, 1.0, 1.0]);
        let zs = kron(&CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]), &identity(2));
        let diag: Vec<f64> = (0..4).map(|i| zs[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn kron_lowering_on_fock_qubit() {
        let a = annihilation(2).unwrap();
        let op = kron(&a, &identity(2));
        // |1⟩⊗|g⟩ has index 1*2 + 0 = 2; |0⟩⊗|g⟩ has index 0
        let mut v = CVector::zeros(6);
        v[2] = ONE;
        let out = &op * &v;
        let mut expected = CVector::zeros(6);
        expected[0] = ONE;
        assert!((out - expected).norm() < 1e-15);
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand_m = |r, c_| CMatrix::from_fn(r, c_, |_, _| c(rng.random(), rng.random()));
        let (a, b, cc) = (rand_m(2, 3), rand_m(3, 2), rand_m(2, 2));
        let lhs = kron(&kron(&a, &b), &cc);
        let rhs = kron(&a, &kron(&b, &cc));
        assert!((lhs - rhs).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn annihilation_operator() {
        assert!(annihilation(0).is_err());
        let a1 = annihilation(1).unwrap();
        assert_eq!(a1, CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]));
        let n_max = 5;
        let a = annihilation(n_max).unwrap();
        let num = a.adjoint() * &a;
        for k in 0..=n_max {
            assert!((num[(k, k)].re - k as f64).abs() < 1e-14);
        }
        let comm = commutator(&a, &a.adjoint());
        for k in 0..n_max {
            assert!((comm[(k, k)] - ONE).norm() < 1e-14);
        }
        assert!((comm[(n_max, n_max)].re + n_max as f64).abs() < 1e-14);
    }

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (sigma_x(), sigma_y(), sigma_z());
        let comm = commutator(&x, &y);
        assert!((comm - z * (I * 2.0)).iter().all(|v| v.norm() < 1e-15));
        let sp = (&x + &y * I) * C64::from(0.5);
        assert_eq!(sp, sigma_plus());
        // σ⁻|e⟩ = |g⟩
        let e = CVector::from_vec(vec![ZERO, ONE]);
        assert_eq!(sigma_minus() * e, CVector::from_vec(vec![ONE, ZERO]));
    }

    #[test]
    fn partial_trace_product_and_bell() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ra = random_density(2, &mut rng);
        let rb = random_density(3, &mut rng);
        let prod = DensityMatrix::from_matrix_unchecked(kron(ra.matrix(), rb.matrix()));
        let layout = SpaceLayout::new(vec![2, 3]).unwrap();
        let back = partial_trace(&prod, &layout, &[0]).unwrap();
        assert!((back.matrix() - ra.matrix()).iter().all(|z| z.norm() < 1e-14));
        let back_b = partial_trace(&prod, &layout, &[1]).unwrap();
        assert!((back_b.matrix() - rb.matrix()).iter().all(|z| z.norm() < 1e-14));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = CVector::from_vec(vec![c(s, 0.0), ZERO, ZERO, c(s, 0.0)]);
        let red = partial_trace(&DensityMatrix::pure(&bell), &SpaceLayout::qubits(2), &[0]).unwrap();
        assert!((red.matrix() - identity(2) * C64::from(0.5)).iter().all(|z| z.norm() < 1e-15));

        let bad = SpaceLayout::new(vec![3, 3]).unwrap();
        assert!(matches!(
            partial_trace(&prod, &bad, &[0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn partial_trace_preserves_trace_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = SpaceLayout::qubits(2);
        for _ in 0..100 {
            let rho = random_density(4, &mut rng);
            let red = partial_trace(&rho, &layout, &[1]).unwrap();
            assert!((red.trace() - ONE).norm() < 1e-12);
            assert!(hermiticity_error(red.matrix()) < 1e-14);
        }
    }

    #[test]
    fn complementary_reductions_share_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = SpaceLayout::new(vec![2, 3, 2]).unwrap();
        let psi = CVector::from_fn(12, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let rho = DensityMatrix::pure(&psi);
        let a = partial_trace(&rho, &layout, &[1]).unwrap();
        let b = partial_trace(&rho, &layout, &[0, 2]).unwrap();
        let (va, _) = hermitian_eigen(a.matrix()).unwrap();
        let (vb, _) = hermitian_eigen(b.matrix()).unwrap();
        let nz = |v: &[f64]| -> Vec<f64> { v.iter().cloned().filter(|x| *x > 1e-12).collect() };
        let (na, nb) = (nz(&va), nz(&vb));
        assert_eq!(na.len(), nb.len());
        for (x, y) in na.iter().zip(&nb) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn psd_sqrt_cases() {
        assert!((psd_sqrt(&identity(3)).unwrap() - identity(3)).iter().all(|z| z.norm() < 1e-14));
        let v = CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let p = &v * v.adjoint();
        let r = psd_sqrt(&(&p * C64::from(4.0))).unwrap();
        assert!((r - &p * C64::from(2.0)).iter().all(|z| z.norm() < 1e-12));
        let non_herm = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(psd_sqrt(&non_herm).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_density(5, &mut rng).into_matrix() * C64::from(3.0);
            let s = psd_sqrt(&a).unwrap();
            assert!(frobenius(&(&s * &s - &a)) < 1e-9);
            assert!(hermiticity_error(&s) < 1e-10);
            let (vals, _) = hermitian_eigen(&s).unwrap();
            assert!(vals[0] > -1e-10);
        }
    }

    #[test]
    fn expectation_values() {
        let g = DensityMatrix::basis(2, 0);
        assert!((expect(&sigma_z(), &g).unwrap() - c(-1.0, 0.0)).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = random_density(4, &mut rng);
        assert!((expect(&identity(4), &rho).unwrap() - ONE).norm() < 1e-12);
        assert!(expect(&identity(3), &rho).is_err());

        // thermal state, geometric-series oracle
        let nbar: f64 = 0.7;
        let n_max = 60;
        let q = nbar / (1.0 + nbar);
        let mut m = CMatrix::zeros(n_max + 1, n_max + 1);
        for n in 0..=n_max {
            m[(n, n)] = C64::from((1.0 - q) * q.powi(n as i32));
        }
        let thermal = DensityMatrix::from_matrix_unchecked(m);
        let a = annihilation(n_max).unwrap();
        let n_exp = expect(&(a.adjoint() * &a), &thermal).unwrap();
        assert!((n_exp.re - nbar).abs() < 1e-9);
        assert!(n_exp.im.abs() < 1e-12);
    }
}
