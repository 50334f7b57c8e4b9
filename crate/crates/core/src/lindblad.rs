//! Liouvillian assembly, steady states and time evolution.
//!
//! Density matrices are vectorized by column stacking, so element
//! `ρ[i, j]` sits at index `i + j·d` and `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

use faer::linalg::solvers::Solve;
use nalgebra::DVector;
use faer::{Mat, Scale};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::ops::{c, hermitian_eigen, hermitian_part, CMatrix, DensityMatrix, SpaceLayout, C64, I, ONE, ZERO};
use crate::sparse::CsrMatrix;

/// A jump operator `c` entering as `rate · D[c]ρ`, with
/// `D[c]ρ = cρc† − (c†cρ + ρc†c)/2`.
#[derive(Debug, Clone)]
pub struct Dissipator {
    pub op: CMatrix,
    pub rate: f64,
}

impl Dissipator {
    pub fn new(op: CMatrix, rate: f64) -> Self {
        Self { op, rate }
    }
}

/// Unidirectional coupling from a source mode into a sink:
/// `rate · ([aρ, σ⁺] + [σ⁻, ρa†])` with `a = source` and `σ⁺ = sink_raise`.
#[derive(Debug, Clone)]
pub struct CascadePair {
    pub source: CMatrix,
    pub sink_raise: CMatrix,
    pub rate: f64,
}

/// Relative entry size below which assembled superoperator entries are dropped.
const DROP_TOL: f64 = 1e-15;

/// Incremental superoperator assembly.
pub struct LiouvillianBuilder {
    layout: SpaceLayout,
    d: usize,
    trip: Vec<(usize, usize, C64)>,
}

fn nonzeros(a: &CMatrix) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

impl LiouvillianBuilder {
    pub fn new(layout: SpaceLayout) -> Self {
        let d = layout.dim();
        Self {
            layout,
            d,
            trip: Vec::new(),
        }
    }

    fn check(&self, a: &CMatrix) -> Result<()> {
        check_dim(self.d, a.nrows())?;
        check_dim(self.d, a.ncols())
    }

    /// Adds the superoperator `ρ ↦ coeff · A ρ B`. `None` stands for the identity.
    pub fn sandwich(&mut self, coeff: C64, a: Option<&CMatrix>, b: Option<&CMatrix>) -> Result<&mut Self> {
        if coeff == ZERO {
            return Ok(self);
        }
        let d = self.d;
        let diag: Vec<(usize, usize, C64)> = (0..d).map(|k| (k, k, ONE)).collect();
        let an = match a {
            Some(m) => {
                self.check(m)?;
                nonzeros(m)
            }
            None => diag.clone(),
        };
        let bn = match b {
            Some(m) => {
                self.check(m)?;
                nonzeros(m)
            }
            None => diag,
        };
        self.trip.reserve(an.len() * bn.len());
        for &(q, p, bv) in &bn {
            for &(i, j, av) in &an {
                self.trip.push((p * d + i, q * d + j, coeff * av * bv));
            }
        }
        Ok(self)
    }

    /// `−i[H, ρ]`.
    pub fn hamiltonian(&mut self, h: &CMatrix) -> Result<&mut Self> {
        self.sandwich(-I, Some(h), None)?;
        self.sandwich(I, None, Some(h))
    }

    pub fn dissipator(&mut self, diss: &Dissipator) -> Result<&mut Self> {
        if diss.rate < 0.0 {
            return Err(Error::InvalidArgument(format!("negative rate {}", diss.rate)));
        }
        let rate = C64::from(diss.rate);
        let cdc = diss.op.adjoint() * &diss.op;
        self.sandwich(rate, Some(&diss.op), Some(&diss.op.adjoint()))?;
        self.sandwich(-rate * 0.5, Some(&cdc), None)?;
        self.sandwich(-rate * 0.5, None, Some(&cdc))
    }

    pub fn cascade(&mut self, pair: &CascadePair) -> Result<&mut Self> {
        if pair.rate < 0.0 {
            return Err(Error::InvalidArgument(format!("negative rate {}", pair.rate)));
        }
        let g = C64::from(pair.rate);
        let a = &pair.source;
        let sp = &pair.sink_raise;
        let sm = sp.adjoint();
        let ad = a.adjoint();
        // [aρ, σ⁺] = aρσ⁺ − σ⁺aρ
        self.sandwich(g, Some(a), Some(sp))?;
        self.sandwich(-g, Some(&(sp * a)), None)?;
        // [σ⁻, ρa†] = σ⁻ρa† − ρa†σ⁻
        self.sandwich(g, Some(&sm), Some(&ad))?;
        self.sandwich(-g, None, Some(&(ad * &sm)))
    }

    /// `coeff · [A, [B, ρ]] = coeff · (ABρ − AρB − BρA + ρBA)`.
    pub fn double_commutator(&mut self, coeff: C64, a: &CMatrix, b: &CMatrix) -> Result<&mut Self> {
        self.sandwich(coeff, Some(&(a * b)), None)?;
        self.sandwich(-coeff, Some(a), Some(b))?;
        self.sandwich(-coeff, Some(b), Some(a))?;
        self.sandwich(coeff, None, Some(&(b * a)))
    }

    pub fn build(self) -> Liouvillian {
        let n = self.d * self.d;
        Liouvillian {
            d: self.d,
            layout: self.layout,
            matrix: CsrMatrix::from_triplets(n, self.trip, DROP_TOL),
        }
    }
}

/// Assembles `−i[H, ·] + Σ rate·D[c] + Σ cascade terms`.
pub fn build_liouvillian(
    h: &CMatrix,
    dissipators: &[Dissipator],
    cascades: &[CascadePair],
    layout: SpaceLayout,
) -> Result<Liouvillian> {
    let mut b = LiouvillianBuilder::new(layout);
    b.hamiltonian(h)?;
    for diss in dissipators {
        b.dissipator(diss)?;
    }
    for pair in cascades {
        b.cascade(pair)?;
    }
    Ok(b.build())
}

/// A master-equation generator acting on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    d: usize,
    layout: SpaceLayout,
    matrix: CsrMatrix,
}

/// Steady-state solution with its solver diagnostics.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `‖L vec(ρ)‖₂ / ‖L‖_F`.
    pub residual: f64,
    /// Relative singular-value gap separating the null vector from the rest
    /// of the spectrum (exact for small blocks, an inverse-iteration
    /// estimate otherwise).
    pub gap: f64,
    /// Size of the symmetry block that was solved.
    pub block_dim: usize,
}

/// Blocks up to this size get an exact singular-value uniqueness check.
const SVD_CHECK_MAX: usize = 400;
/// Relative singular-value gap below which the null space counts as degenerate.
const DEGENERACY_GAP: f64 = 1e-8;

pub fn vectorize(rho: &CMatrix) -> Vec<C64> {
    rho.as_slice().to_vec()
}

pub fn unvectorize(v: &[C64], d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v)
}

impl Liouvillian {
    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn sparse(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> CMatrix {
        self.matrix.to_dense()
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.frobenius()
    }

    /// `L(ρ)` as a matrix.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        check_dim(self.d, rho.nrows())?;
        Ok(unvectorize(&self.matrix.mul_vec(rho.as_slice()), self.d))
    }

    /// `max_{mn} |Tr{L(E_mn)}|`: zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let mut col_sums = vec![ZERO; self.d * self.d];
        for k in 0..self.d {
            for (col, v) in self.matrix.row(k * (self.d + 1)) {
                col_sums[col] += v;
            }
        }
        col_sums.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Unique steady state by direct solve on the symmetry block that
    /// contains the populations, with one population row replaced by the
    /// trace constraint.
    pub fn steady_state(&self) -> Result<SteadyState> {
        let d = self.d;
        let labels = self.matrix.components();
        let diag_labels: Vec<usize> = (0..d).map(|k| labels[k * (d + 1)]).collect();
        let root = diag_labels[0];
        if diag_labels.iter().any(|&l| l != root) {
            return Err(Error::DegenerateSteadyState { gap: 0.0 });
        }
        let block: Vec<usize> = (0..d * d).filter(|&i| labels[i] == root).collect();
        let n = block.len();
        let sub = self.matrix.submatrix(&block);
        let norm = self.frobenius().max(f64::MIN_POSITIVE);

        let is_diag: Vec<bool> = block.iter().map(|&i| i % (d + 1) == 0).collect();
        let pivot_row = is_diag.iter().position(|&b| b).expect("block holds populations");
        let a = Mat::<C64>::from_fn(n, n, |i, k| {
            if i == pivot_row {
                if is_diag[k] {
                    ONE
                } else {
                    ZERO
                }
            } else {
                sub[(i, k)]
            }
        });
        let lu = a.partial_piv_lu();
        let mut rhs = Mat::<C64>::zeros(n, 1);
        rhs[(pivot_row, 0)] = ONE;
        let x = lu.solve(&rhs);
        if (0..n).any(|k| !x[(k, 0)].re.is_finite() || !x[(k, 0)].im.is_finite()) {
            return Err(Error::DegenerateSteadyState { gap: 0.0 });
        }

        let gap = if n <= SVD_CHECK_MAX {
            let mut sv: Vec<f64> = sub.singular_values().iter().copied().collect();
            sv.sort_by(f64::total_cmp);
            let top = sv.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
            if n >= 2 {
                sv[1] / top
            } else {
                1.0
            }
        } else {
            // Inverse iteration on the bordered matrix: a near-singular
            // border means a second null direction of L.
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let mut v = Mat::<C64>::from_fn(n, 1, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let mut est = f64::INFINITY;
            for _ in 0..4 {
                let nv = v.norm_l2();
                v *= Scale(C64::from(1.0 / nv));
                let w = lu.solve(&v);
                let nw = w.norm_l2();
                if !nw.is_finite() {
                    est = 0.0;
                    break;
                }
                est = est.min(1.0 / nw);
                v = w;
            }
            est / norm
        };
        if !(gap > DEGENERACY_GAP) {
            return Err(Error::DegenerateSteadyState { gap });
        }

        let mut full = vec![ZERO; d * d];
        for (k, &i) in block.iter().enumerate() {
            full[i] = x[(k, 0)];
        }
        let residual = self
            .matrix
            .mul_vec(&full)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
            / norm;
        let mut m = hermitian_part(&unvectorize(&full, d));
        let tr = m.trace();
        m /= tr;
        let rho = clamp_spectrum(m)?;
        Ok(SteadyState {
            rho,
            residual,
            gap,
            block_dim: n,
        })
    }

    /// Fixed-step classical Runge–Kutta integration of `vec(ρ̇) = L vec(ρ)`.
    pub fn evolve(&self, rho0: &DensityMatrix, t: f64, steps: usize) -> Result<DensityMatrix> {
        check_dim(self.d, rho0.dim())?;
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("evolution time must be ≥ 0, got {t}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("steps must be ≥ 1".into()));
        }
        if t == 0.0 {
            return Ok(rho0.clone());
        }
        let h = t / steps as f64;
        let mut y = vectorize(rho0.matrix());
        self.rk4_steps(&mut y, h, steps)?;
        Ok(DensityMatrix::from_matrix_unchecked(hermitian_part(&unvectorize(&y, self.d))))
    }

    /// Step count keeping `h · ‖L‖_∞ ≤ 0.1`.
    pub fn default_steps(&self, t: f64) -> usize {
        let bound = self.matrix.max_abs_row_sum();
        ((t * bound / 0.1).ceil() as usize).max(1)
    }

    /// Samples `ρ(t)` at each (ascending) time in `times`, integrating
    /// continuously with a step no larger than `max_step`.
    pub fn trajectory(&self, rho0: &DensityMatrix, times: &[f64], max_step: f64) -> Result<Vec<DensityMatrix>> {
        check_dim(self.d, rho0.dim())?;
        if !(max_step > 0.0) {
            return Err(Error::InvalidArgument("max_step must be positive".into()));
        }
        let mut y = vectorize(rho0.matrix());
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            if t < now {
                return Err(Error::InvalidArgument("times must be ascending and ≥ 0".into()));
            }
            let span = t - now;
            if span > 0.0 {
                let steps = (span / max_step).ceil().max(1.0) as usize;
                self.rk4_steps(&mut y, span / steps as f64, steps)?;
                now = t;
            }
            out.push(DensityMatrix::from_matrix_unchecked(hermitian_part(&unvectorize(&y, self.d))));
        }
        Ok(out)
    }

    fn rk4_steps(&self, y: &mut [C64], h: f64, steps: usize) -> Result<()> {
        let n = y.len();
        let d = self.d;
        let trace = |v: &[C64]| (0..d).map(|k| v[k * (d + 1)]).sum::<C64>();
        let tr0 = trace(y);
        let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
        let mut tmp = vec![ZERO; n];
        let hc = C64::from(h);
        for step in 0..steps {
            self.matrix.mul_vec_into(y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + k1[i] * (hc * 0.5);
            }
            self.matrix.mul_vec_into(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + k2[i] * (hc * 0.5);
            }
            self.matrix.mul_vec_into(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + k3[i] * hc;
            }
            self.matrix.mul_vec_into(&tmp, &mut k4);
            for i in 0..n {
                y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (hc / 6.0);
            }
            if step % 64 == 63 || step + 1 == steps {
                let drift = (trace(y) - tr0).norm();
                let blown = y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite() || z.norm() > 1.0 + 1e-6);
                if drift > 1e-6 || blown {
                    return Err(Error::StepSize {
                        drift: if drift.is_finite() { drift } else { f64::INFINITY },
                        steps,
                    });
                }
            }
        }
        Ok(())
    }

    /// `exp(L t)` applied to `ρ0` by scaling and squaring; intended for
    /// cross-checks on small spaces (Hilbert dimension ≤ 16).
    pub fn evolve_exact(&self, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        check_dim(self.d, rho0.dim())?;
        if self.d > 16 {
            return Err(Error::InvalidArgument(format!(
                "dense exponential limited to Hilbert dimension 16, got {}",
                self.d
            )));
        }
        let prop = expm(&(self.to_dense() * C64::from(t)));
        let v = &prop * DVector::from_vec(vectorize(rho0.matrix()));
        Ok(DensityMatrix::from_matrix_unchecked(hermitian_part(&unvectorize(v.as_slice(), self.d))))
    }
}

/// Hermitian matrix with unit trace → density matrix, clamping eigenvalues
/// in `[−1e-9, 0)` to zero.
fn clamp_spectrum(m: CMatrix) -> Result<DensityMatrix> {
    let (vals, _) = hermitian_eigen(&m)?;
    let min = vals.first().copied().unwrap_or(0.0);
    if min >= 0.0 {
        return Ok(DensityMatrix::from_matrix_unchecked(m));
    }
    if min < -1e-9 {
        return Err(Error::InvalidArgument(format!(
            "steady state has negative eigenvalue {min:e}"
        )));
    }
    DensityMatrix::project_physical(&m)
}

/// Dense matrix exponential: Taylor series with scaling and squaring.
pub fn expm(a: &CMatrix) -> CMatrix {
    let norm1 = (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / C64::from(2f64.powi(squarings as i32));
    let n = a.nrows();
    let mut result = CMatrix::identity(n, n);
    let mut term = CMatrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / C64::from(k as f64);
        result += &term;
        if term.iter().all(|z| z.norm() < 1e-18) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
