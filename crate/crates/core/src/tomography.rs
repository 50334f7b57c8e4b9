//! Two-qubit Pauli tomography: forward model, shot-noise simulation,
//! frame alignment and constrained least-squares reconstruction.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::fit::{bfgs_minimize, BfgsOptions, BfgsStatus};
use crate::ops::{
    c, from_spectrum, hermitian_eigen, hermitian_part, identity, kron, sigma_x, sigma_y, sigma_z, CMatrix, DensityMatrix, C64,
};

pub const PAULI_LABELS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// Minimum `|⟨XX⟩|`, `|⟨YY⟩|` for a defined frame angle.
pub const FRAME_THRESHOLD: f64 = 1e-3;
/// Required KKT residual of a reconstruction.
pub const KKT_TOL: f64 = 1e-8;

pub fn pauli(k: usize) -> CMatrix {
    match k {
        0 => identity(2),
        1 => sigma_x(),
        2 => sigma_y(),
        3 => sigma_z(),
        _ => panic!("Pauli index {k} out of range"),
    }
}

fn pauli2(i: usize, j: usize) -> CMatrix {
    kron(&pauli(i), &pauli(j))
}

/// `⟨σ₁^i ⊗ σ₂^j⟩` for `i, j ∈ {I, X, Y, Z}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliExpectations {
    values: [[f64; 4]; 4],
}

impl PauliExpectations {
    /// Fixes `⟨II⟩ = 1` and checks every other entry lies in `[−1−tol, 1+tol]`.
    pub fn new(mut values: [[f64; 4]; 4], tol: f64) -> Result<Self> {
        values[0][0] = 1.0;
        for row in &values {
            for &v in row {
                if !v.is_finite() || v.abs() > 1.0 + tol {
                    return Err(Error::InvalidArgument(format!("expectation {v} outside [-1, 1]")));
                }
            }
        }
        Ok(Self { values })
    }

    /// No range check; used for deliberately unphysical inputs.
    pub fn from_values_unchecked(mut values: [[f64; 4]; 4]) -> Self {
        values[0][0] = 1.0;
        Self { values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if (i, j) != (0, 0) {
            self.values[i][j] = v;
        }
    }

    pub fn values(&self) -> &[[f64; 4]; 4] {
        &self.values
    }

    /// `¼ Σ ⟨σ^i σ^j⟩ σ^i⊗σ^j`; Hermitian with unit trace but not necessarily PSD.
    pub fn linear_inversion(&self) -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m += pauli2(i, j) * C64::from(self.values[i][j] / 4.0);
            }
        }
        m
    }

    /// Writes `i,j,value` rows with Pauli labels.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        wr.write_record(["i", "j", "value"]).map_err(io)?;
        for i in 0..4 {
            for j in 0..4 {
                wr.write_record([
                    PAULI_LABELS[i].to_string(),
                    PAULI_LABELS[j].to_string(),
                    format!("{:.17e}", self.values[i][j]),
                ])
                .map_err(io)?;
            }
        }
        wr.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut values = [[f64::NAN; 4]; 4];
        let label = |s: &str| {
            PAULI_LABELS
                .iter()
                .position(|&l| s.len() == 1 && s.starts_with(l))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown Pauli label {s:?}")))
        };
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
            if rec.len() != 3 {
                return Err(Error::InvalidArgument(format!("expected 3 fields, got {}", rec.len())));
            }
            let (i, j) = (label(rec[0].trim())?, label(rec[1].trim())?);
            values[i][j] = rec[2]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad value {:?}: {e}", &rec[2])))?;
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("missing Pauli entries".into()));
        }
        Ok(Self::from_values_unchecked(values))
    }
}

/// Measurement axis selected by a pre-rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Z,
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::Z, Axis::PlusX, Axis::MinusX, Axis::PlusY, Axis::MinusY];

    pub fn pauli_index(self) -> usize {
        match self {
            Axis::Z => 3,
            Axis::PlusX | Axis::MinusX => 1,
            Axis::PlusY | Axis::MinusY => 2,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Axis::MinusX | Axis::MinusY => -1.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub bases: Vec<(Axis, Axis)>,
}

impl BasisSet {
    /// All 25 axis pairs.
    pub fn standard() -> Self {
        let bases = Axis::ALL
            .iter()
            .flat_map(|&a| Axis::ALL.iter().map(move |&b| (a, b)))
            .collect();
        Self { bases }
    }

    /// Whether every one of the 16 Pauli products is measured by some basis.
    pub fn covers_all(&self) -> bool {
        let mut seen = [[false; 4]; 4];
        seen[0][0] = true;
        for &(a, b) in &self.bases {
            let (i, j) = (a.pauli_index(), b.pauli_index());
            seen[i][0] = true;
            seen[0][j] = true;
            seen[i][j] = true;
        }
        seen.iter().flatten().all(|&s| s)
    }
}

pub fn expectations_from_state(rho: &DensityMatrix) -> Result<PauliExpectations> {
    check_dim(4, rho.dim())?;
    let mut values = [[0.0; 4]; 4];
    for (i, row) in values.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (rho.matrix() * pauli2(i, j)).trace().re;
        }
    }
    Ok(PauliExpectations::from_values_unchecked(values))
}

/// Shot-noise simulation of the tomography sequence.
///
/// Each basis yields `shots` joint outcomes. Every qubit's outcome is
/// flipped with probability `readout_error`, and all estimates of the same
/// Pauli product are averaged after undoing the axis sign. The returned
/// values are not corrected for readout contrast.
pub fn simulate_measurements(
    rho: &DensityMatrix,
    bases: &BasisSet,
    shots: u64,
    readout_error: f64,
    seed: u64,
) -> Result<PauliExpectations> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be ≥ 1".into()));
    }
    if !(0.0..=0.5).contains(&readout_error) {
        return Err(Error::InvalidArgument(format!("readout error {readout_error} outside [0, 0.5]")));
    }
    if !bases.covers_all() {
        return Err(Error::InvalidArgument("basis set does not cover all Pauli products".into()));
    }
    let exact = expectations_from_state(rho)?;
    let contrast = 1.0 - 2.0 * readout_error;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = [[0.0; 4]; 4];
    let mut count = [[0u32; 4]; 4];
    for &(a, b) in &bases.bases {
        let (i, j) = (a.pauli_index(), b.pauli_index());
        let (sa, sb) = (a.sign(), b.sign());
        let e1 = contrast * sa * exact.get(i, 0);
        let e2 = contrast * sb * exact.get(0, j);
        let e12 = contrast * contrast * sa * sb * exact.get(i, j);
        // outcome order (+,+), (+,−), (−,+), (−,−)
        let probs = [
            (1.0 + e1 + e2 + e12) / 4.0,
            (1.0 + e1 - e2 - e12) / 4.0,
            (1.0 - e1 + e2 - e12) / 4.0,
            (1.0 - e1 - e2 + e12) / 4.0,
        ]
        .map(|p: f64| p.max(0.0));
        let counts = multinomial(&mut rng, shots, &probs)?;
        let n = shots as f64;
        let m1 = (counts[0] + counts[1]) as f64 - (counts[2] + counts[3]) as f64;
        let m2 = (counts[0] + counts[2]) as f64 - (counts[1] + counts[3]) as f64;
        let m12 = (counts[0] + counts[3]) as f64 - (counts[1] + counts[2]) as f64;
        for (ii, jj, v) in [(i, 0, sa * m1 / n), (0, j, sb * m2 / n), (i, j, sa * sb * m12 / n)] {
            sum[ii][jj] += v;
            count[ii][jj] += 1;
        }
    }
    let mut values = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            if count[i][j] > 0 {
                values[i][j] = sum[i][j] / count[i][j] as f64;
            }
        }
    }
    Ok(PauliExpectations::from_values_unchecked(values))
}

fn multinomial(rng: &mut ChaCha8Rng, n: u64, probs: &[f64; 4]) -> Result<[u64; 4]> {
    let total: f64 = probs.iter().sum();
    let mut left = n;
    let mut mass = total;
    let mut out = [0u64; 4];
    for k in 0..3 {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let p = (probs[k] / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, p)
            .map_err(|e| Error::InvalidArgument(format!("binomial: {e}")))?
            .sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= probs[k];
    }
    out[3] = left;
    Ok(out)
}

/// Divides single-qubit terms by `1 − 2p` and correlators by `(1 − 2p)²`.
pub fn correct_readout(exps: &PauliExpectations, readout_error: f64) -> Result<PauliExpectations> {
    if !(0.0..0.5).contains(&readout_error) {
        return Err(Error::InvalidArgument(format!(
            "readout error {readout_error} must lie in [0, 0.5)"
        )));
    }
    let k = 1.0 - 2.0 * readout_error;
    let mut out = *exps;
    for i in 0..4 {
        for j in 0..4 {
            let order = (i > 0) as i32 + (j > 0) as i32;
            out.values[i][j] = exps.values[i][j] / k.powi(order);
        }
    }
    Ok(out)
}

/// Adds independent Gaussian noise of width `sigma` to all entries except `⟨II⟩`.
pub fn add_gaussian_noise(exps: &PauliExpectations, sigma: f64, seed: u64) -> Result<PauliExpectations> {
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(format!("noise width: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = *exps;
    for i in 0..4 {
        for j in 0..4 {
            if (i, j) != (0, 0) {
                out.values[i][j] += dist.sample(&mut rng);
            }
        }
    }
    Ok(out)
}

/// `tan φ = ½(⟨XY⟩/⟨XX⟩ − ⟨YX⟩/⟨YY⟩)`.
pub fn frame_rotation_angle(exps: &PauliExpectations) -> Result<f64> {
    let (xx, yy) = (exps.get(1, 1), exps.get(2, 2));
    if xx.abs() < FRAME_THRESHOLD || yy.abs() < FRAME_THRESHOLD {
        return Err(Error::UndefinedFrame {
            threshold: FRAME_THRESHOLD,
        });
    }
    Ok((0.5 * (exps.get(1, 2) / xx - exps.get(2, 1) / yy)).atan())
}

/// Rotates the qubit-2 Bloch components back by `phi` about z.
pub fn apply_frame_rotation(exps: &PauliExpectations, phi: f64) -> PauliExpectations {
    let (cs, sn) = (phi.cos(), phi.sin());
    let mut out = *exps;
    for i in 0..4 {
        let (x, y) = (exps.values[i][1], exps.values[i][2]);
        out.values[i][1] = cs * x + sn * y;
        out.values[i][2] = -sn * x + cs * y;
    }
    out
}

/// `exp(−iθσz/2)`, which rotates Bloch vectors by `+θ` about z.
pub fn z_rotation(theta: f64) -> CMatrix {
    let mut u = CMatrix::zeros(2, 2);
    u[(0, 0)] = C64::from_polar(1.0, theta / 2.0);
    u[(1, 1)] = C64::from_polar(1.0, -theta / 2.0);
    u
}

/// Applies `z_rotation(theta)` to qubit 2.
pub fn rotate_qubit2(rho: &DensityMatrix, theta: f64) -> Result<DensityMatrix> {
    check_dim(4, rho.dim())?;
    let u = kron(&identity(2), &z_rotation(theta));
    Ok(DensityMatrix::from_matrix_unchecked(&u * rho.matrix() * u.adjoint()))
}

/// Unweighted squared misfit `Σ (Tr{ρ σ^i⊗σ^j} − ⟨σ^i σ^j⟩)²`.
pub fn tomography_cost(rho: &CMatrix, exps: &PauliExpectations) -> f64 {
    let mut cost = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let r = (rho * pauli2(i, j)).trace().re - exps.get(i, j);
            cost += r * r;
        }
    }
    cost
}

/// Gradient `∂cost/∂ρ = 2 Σ r_k P_k`.
fn cost_gradient(rho: &CMatrix, exps: &PauliExpectations) -> CMatrix {
    let mut g = CMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            let p = pauli2(i, j);
            let r = (rho * &p).trace().re - exps.get(i, j);
            g += p * C64::from(2.0 * r);
        }
    }
    g
}

/// Optimality residual over the set of density matrices: with
/// `λ = Tr{Gρ}`, `‖(G − λ)ρ‖_F` plus the negative part of the spectrum of `G − λ`.
pub fn kkt_residual(rho: &CMatrix, exps: &PauliExpectations) -> Result<f64> {
    let g = cost_gradient(rho, exps);
    let lambda = (&g * rho).trace().re;
    let shifted = &g - identity(4) * C64::from(lambda);
    let comp = (&shifted * rho).norm();
    let shifted_h = (&shifted + shifted.adjoint()) * C64::from(0.5);
    let min = hermitian_eigen(&shifted_h)?.0[0];
    Ok(comp + (-min).max(0.0))
}

const OFFDIAG: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn t_from_params(p: &[f64]) -> CMatrix {
    let mut t = CMatrix::zeros(4, 4);
    for k in 0..4 {
        t[(k, k)] = C64::from(p[k]);
    }
    for (m, &(i, j)) in OFFDIAG.iter().enumerate() {
        t[(i, j)] = c(p[4 + 2 * m], p[5 + 2 * m]);
    }
    t
}

fn params_from_t(t: &CMatrix) -> Vec<f64> {
    let mut p = vec![0.0; 16];
    for k in 0..4 {
        p[k] = t[(k, k)].re;
    }
    for (m, &(i, j)) in OFFDIAG.iter().enumerate() {
        p[4 + 2 * m] = t[(i, j)].re;
        p[5 + 2 * m] = t[(i, j)].im;
    }
    p
}

/// `ρ = T†T / Tr{T†T}`.
fn rho_from_params(p: &[f64]) -> Option<(CMatrix, CMatrix, f64)> {
    let t = t_from_params(p);
    let s: f64 = t.iter().map(|z| z.norm_sqr()).sum();
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    let rho = t.adjoint() * &t / C64::from(s);
    Some((rho, t, s))
}

fn objective(p: &[f64], exps: &PauliExpectations) -> (f64, Vec<f64>) {
    let Some((rho, t, s)) = rho_from_params(p) else {
        return (f64::INFINITY, vec![0.0; 16]);
    };
    let g = cost_gradient(&rho, exps);
    let lambda = (&g * &rho).trace().re;
    let x = &t * (&g - identity(4) * C64::from(lambda)) * C64::from(2.0 / s);
    let mut grad = vec![0.0; 16];
    for k in 0..4 {
        grad[k] = x[(k, k)].re;
    }
    for (m, &(i, j)) in OFFDIAG.iter().enumerate() {
        grad[4 + 2 * m] = x[(i, j)].re;
        grad[5 + 2 * m] = x[(i, j)].im;
    }
    (tomography_cost(&rho, exps), grad)
}

/// Linear-inversion estimate with negative eigenvalues set to zero and the
/// trace restored.
pub fn projected_linear_inversion(exps: &PauliExpectations) -> Result<DensityMatrix> {
    DensityMatrix::project_physical(&exps.linear_inversion())
}

/// Nearest density matrix to the linear-inversion estimate in Frobenius
/// norm, found by projecting its spectrum onto the probability simplex.
/// Since the Pauli products are orthogonal this minimizes the cost exactly.
fn frobenius_projection(exps: &PauliExpectations) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(&hermitian_part(&exps.linear_inversion()))?;
    let mut desc = vals.clone();
    desc.sort_by(|a, b| b.total_cmp(a));
    let mut shift = desc[0] - 1.0;
    let mut acc = 0.0;
    for (k, &v) in desc.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (k + 1) as f64;
        if v > t {
            shift = t;
        }
    }
    let weights: Vec<f64> = vals.iter().map(|&v| (v - shift).max(0.0)).collect();
    Ok(hermitian_part(&from_spectrum(&weights, &vecs)))
}

/// Lower-triangular `T` with `T†T = ρ`, exact also for rank-deficient `ρ`.
/// The index-reversed matrix is written as `M†M` from its spectrum and
/// `M = QR` gives the factor up to row phases.
fn factor_start(rho: &CMatrix) -> Vec<f64> {
    let rev = CMatrix::from_fn(4, 4, |i, j| rho[(3 - i, 3 - j)]);
    let Ok((vals, vecs)) = hermitian_eigen(&hermitian_part(&rev)) else {
        return params_from_t(&(identity(4) * C64::from(0.5)));
    };
    let mut m = vecs.adjoint();
    for (k, v) in vals.iter().enumerate() {
        m.row_mut(k).scale_mut(v.max(0.0).sqrt());
    }
    let mut r = m.qr().r();
    for k in 0..4 {
        let d = r[(k, k)];
        if d.norm() > 0.0 {
            let phase = d.conj() / d.norm();
            r.row_mut(k).iter_mut().for_each(|z| *z *= phase);
        }
    }
    params_from_t(&CMatrix::from_fn(4, 4, |i, j| r[(3 - i, 3 - j)]))
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub rho: DensityMatrix,
    pub cost: f64,
    pub kkt: f64,
    pub iterations: usize,
    /// Starting points tried (1 when the projected start certified).
    pub starts: usize,
}

const RESTART_SEED: u64 = 0x5eed_7060;

/// Least-squares state reconstruction constrained to density matrices.
///
/// Minimizes [`tomography_cost`] over `ρ = T†T / Tr{T†T}` with BFGS, first
/// from the Frobenius projection of the linear-inversion estimate, then from three seeded
/// random starts if that run does not reach [`KKT_TOL`].
pub fn mle_reconstruct(exps: &PauliExpectations) -> Result<Reconstruction> {
    if exps.values().iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite expectation value".into()));
    }
    let mut starts = vec![factor_start(&frobenius_projection(exps)?)];
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for _ in 0..3 {
        starts.push((0..16).map(|_| normal.sample(&mut rng)).collect());
    }
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut total_iter = 0;
    let mut tried = 0;
    for x0 in starts {
        tried += 1;
        let out = bfgs_minimize(
            |p| objective(p, exps),
            &x0,
            BfgsOptions::default(),
            |p, _| {
                rho_from_params(p)
                    .and_then(|(rho, _, _)| kkt_residual(&rho, exps).ok())
                    .is_some_and(|k| k < KKT_TOL)
            },
        );
        total_iter += out.iterations;
        let kkt = rho_from_params(&out.x)
            .and_then(|(rho, _, _)| kkt_residual(&rho, exps).ok())
            .unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|b| out.cost < b.0) {
            best = Some((out.cost, out.x.clone(), kkt));
        }
        if out.status == BfgsStatus::Converged {
            break;
        }
    }
    let (cost, p, kkt) = best.expect("at least one start");
    let (rho, _, _) = rho_from_params(&p).ok_or(Error::NonConvergence {
        cost,
        iterations: total_iter,
        best: p.clone(),
    })?;
    if !(kkt < KKT_TOL) {
        return Err(Error::NonConvergence {
            cost,
            iterations: total_iter,
            best: rho.iter().flat_map(|z| [z.re, z.im]).collect(),
        });
    }
    let herm = (&rho + rho.adjoint()) * C64::from(0.5);
    let tr = herm.trace().re;
    Ok(Reconstruction {
        rho: DensityMatrix::from_matrix_unchecked(herm / C64::from(tr)),
        cost,
        kkt,
        iterations: total_iter,
        starts: tried,
    })
}
