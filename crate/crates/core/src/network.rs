//! Physical models of the squeezer–qubit network.
//!
//! All rates and frequencies are angular, in rad/µs, so times come out in
//! µs. [`angular`] converts a value quoted as `f = ω/2π` in MHz.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, Bounds, LmOptions};
use crate::lindblad::{build_liouvillian, CascadePair, Dissipator, Liouvillian, LiouvillianBuilder, SteadyState};
use crate::ops::{
    annihilation, c, expect, identity, partial_trace, sigma_minus, sigma_z, CMatrix, CVector, DensityMatrix,
    SpaceLayout, C64, I, ZERO,
};

/// `2π · f` for `f` in MHz, giving rad/µs.
pub fn angular(mhz: f64) -> f64 {
    2.0 * PI * mhz
}

/// Inverse of [`angular`].
pub fn to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JpcParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub eps_p: f64,
    pub phi_p: f64,
    /// Mode frequencies; carried for bookkeeping, they enter no equation
    /// in the rotating frame.
    pub omega1: f64,
    pub omega2: f64,
}

/// Per-qubit rates, index 0 for qubit 1 and 1 for qubit 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitParams {
    pub delta: [f64; 2],
    pub gamma_r: [f64; 2],
    pub gamma_l: [f64; 2],
    pub gamma_phi: [f64; 2],
    pub gamma_ng: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub eta1: f64,
    pub eta2: f64,
}

impl LinkParams {
    pub const LOSSLESS: Self = Self { eta1: 1.0, eta2: 1.0 };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkParams {
    pub jpc: JpcParams,
    pub qubits: QubitParams,
    pub link: LinkParams,
}

impl NetworkParams {
    /// Measured device parameters: κ/2π = (60, 75) MHz, waveguide couplings
    /// γ_w/2π = (1.48, 0.70) MHz split evenly into left and right emission,
    /// γ_φ/2π = (0.04, 0.03) MHz, γ_ng/2π = (0.05, 0.35) MHz, η = (0.5, 0.3).
    pub fn table_one() -> Self {
        let gw = [angular(1.48), angular(0.70)];
        Self {
            jpc: JpcParams {
                kappa1: angular(60.0),
                kappa2: angular(75.0),
                eps_p: 0.25,
                phi_p: 0.0,
                omega1: angular(6761.0),
                omega2: angular(10044.0),
            },
            qubits: QubitParams {
                delta: [0.0, 0.0],
                gamma_r: [gw[0] / 2.0, gw[1] / 2.0],
                gamma_l: [gw[0] / 2.0, gw[1] / 2.0],
                gamma_phi: [angular(0.04), angular(0.03)],
                gamma_ng: [angular(0.05), angular(0.35)],
            },
            link: LinkParams { eta1: 0.5, eta2: 0.3 },
        }
    }

    /// Symmetric lossless network with only waveguide emission: rate
    /// `gamma_r` to the right and, if `bidirectional`, the same to the left.
    pub fn ideal(gamma_r: f64, kappa: f64, bidirectional: bool) -> Self {
        let gl = if bidirectional { gamma_r } else { 0.0 };
        Self {
            jpc: JpcParams {
                kappa1: kappa,
                kappa2: kappa,
                eps_p: 0.0,
                phi_p: 0.0,
                omega1: 0.0,
                omega2: 0.0,
            },
            qubits: QubitParams {
                delta: [0.0; 2],
                gamma_r: [gamma_r; 2],
                gamma_l: [gl; 2],
                gamma_phi: [0.0; 2],
                gamma_ng: [0.0; 2],
            },
            link: LinkParams::LOSSLESS,
        }
    }

    pub fn with_eps(mut self, eps_p: f64) -> Self {
        self.jpc.eps_p = eps_p;
        self
    }

    /// Same network with the left-going emission removed.
    pub fn chiral(mut self) -> Self {
        self.qubits.gamma_l = [0.0; 2];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let j = &self.jpc;
        if !(j.kappa1 > 0.0 && j.kappa2 > 0.0) {
            return Err(Error::InvalidArgument("mode decay rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&j.eps_p) {
            return Err(Error::AboveThreshold { eps: j.eps_p });
        }
        let q = &self.qubits;
        for rates in [q.gamma_r, q.gamma_l, q.gamma_phi, q.gamma_ng] {
            if rates.iter().any(|&g| !(g >= 0.0)) {
                return Err(Error::InvalidArgument(format!("qubit rates must be ≥ 0, got {rates:?}")));
            }
        }
        for eta in [self.link.eta1, self.link.eta2] {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::InvalidArgument(format!("transmittance {eta} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Photon numbers and cross-correlation of the field reaching the qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmsMoments {
    pub n1: f64,
    pub n2: f64,
    pub m12: C64,
}

impl TmsMoments {
    pub const VACUUM: Self = Self {
        n1: 0.0,
        n2: 0.0,
        m12: ZERO,
    };

    /// `|M|² ≤ max(N₁, N₂)·(min(N₁, N₂) + 1)`, with a small relative slack.
    pub fn is_physical(&self) -> bool {
        let (lo, hi) = (self.n1.min(self.n2), self.n1.max(self.n2));
        lo >= 0.0 && self.m12.norm_sqr() <= hi * (lo + 1.0) * (1.0 + 1e-12) + 1e-15
    }
}

/// `r = 2 artanh ε_p`.
pub fn squeezing_parameter(eps_p: f64) -> Result<f64> {
    if eps_p >= 1.0 || eps_p.is_nan() {
        return Err(Error::AboveThreshold { eps: eps_p });
    }
    if eps_p < 0.0 {
        return Err(Error::InvalidArgument(format!("pump strength must be ≥ 0, got {eps_p}")));
    }
    Ok(2.0 * eps_p.atanh())
}

/// `ε_p = tanh(r/2)`.
pub fn pump_for_squeezing(r: f64) -> f64 {
    (r / 2.0).tanh()
}

/// Output-field moments: `N_i = η_i sinh²r`, `M = √(η₁η₂) e^{iφ} sinh r cosh r`.
pub fn tms_moments_analytic(eps_p: f64, phi_p: f64, link: LinkParams) -> Result<TmsMoments> {
    let r = squeezing_parameter(eps_p)?;
    let (s, ch) = (r.sinh(), r.cosh());
    Ok(TmsMoments {
        n1: link.eta1 * s * s,
        n2: link.eta2 * s * s,
        m12: C64::from_polar((link.eta1 * link.eta2).sqrt() * s * ch, phi_p),
    })
}

/// Operators of the mode–qubit space at a given truncation.
struct FullOps {
    layout: SpaceLayout,
    a: [CMatrix; 2],
    sm: [CMatrix; 2],
    sz: [CMatrix; 2],
}

impl FullOps {
    fn new(n_max: usize) -> Result<Self> {
        let layout = SpaceLayout::jpc_two_qubits(n_max);
        let a = annihilation(n_max)?;
        Ok(Self {
            a: [layout.embed(&a, 0)?, layout.embed(&a, 1)?],
            sm: [layout.embed(&sigma_minus(), 2)?, layout.embed(&sigma_minus(), 3)?],
            sz: [layout.embed(&sigma_z(), 2)?, layout.embed(&sigma_z(), 3)?],
            layout,
        })
    }
}

/// Squeezer modes and qubits with the cascaded drive, on Fock space
/// truncated at `n_max` photons per mode.
pub fn build_full_cascaded(params: &NetworkParams, n_max: usize) -> Result<Liouvillian> {
    params.validate()?;
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!("n_max must be ≥ 2, got {n_max}")));
    }
    let ops = FullOps::new(n_max)?;
    let j = &params.jpc;
    let q = &params.qubits;
    let pump = C64::from_polar(0.5 * (j.kappa1 * j.kappa2).sqrt() * j.eps_p, j.phi_p);
    let a1a2 = &ops.a[0] * &ops.a[1];
    let mut h = (a1a2.adjoint() * pump - &a1a2 * pump.conj()) * I;
    for k in 0..2 {
        h += &ops.sz[k] * C64::from(q.delta[k] / 2.0);
    }
    let kappa = [j.kappa1, j.kappa2];
    let eta = [params.link.eta1, params.link.eta2];
    let mut diss = Vec::new();
    let mut casc = Vec::new();
    for k in 0..2 {
        diss.push(Dissipator::new(ops.a[k].clone(), kappa[k]));
        diss.push(Dissipator::new(ops.sm[k].clone(), q.gamma_r[k] + q.gamma_l[k] + q.gamma_ng[k]));
        diss.push(Dissipator::new(ops.sz[k].clone(), q.gamma_phi[k] / 2.0));
        casc.push(CascadePair {
            source: ops.a[k].clone(),
            sink_raise: ops.sm[k].adjoint(),
            rate: (kappa[k] * q.gamma_r[k] * eta[k]).sqrt(),
        });
    }
    build_liouvillian(&h, &diss, &casc, ops.layout)
}

/// Largest population allowed in the top Fock level of either mode.
pub const FOCK_TAIL_TOL: f64 = 1e-6;

/// Steady state of the cascaded model with its truncation diagnostics.
#[derive(Debug, Clone)]
pub struct CascadedSolution {
    pub full: SteadyState,
    /// Reduced two-qubit state.
    pub qubits: DensityMatrix,
    pub n_max: usize,
    /// Probability that either mode occupies its highest retained level.
    pub top_population: f64,
    /// Intracavity occupations `⟨a_i†a_i⟩`.
    pub occupations: [f64; 2],
}

impl CascadedSolution {
    pub fn converged(&self) -> bool {
        self.top_population < FOCK_TAIL_TOL
    }
}

pub fn solve_cascaded(params: &NetworkParams, n_max: usize) -> Result<CascadedSolution> {
    let l = build_full_cascaded(params, n_max)?;
    let full = l.steady_state()?;
    let layout = l.layout().clone();
    let qubits = partial_trace(&full.rho, &layout, &[2, 3])?;
    let m = full.rho.matrix();
    let n = n_max + 1;
    let mut top = 0.0;
    let mut occ = [0.0; 2];
    for idx in 0..layout.dim() {
        let n1 = idx / (4 * n);
        let n2 = (idx / 4) % n;
        let p = m[(idx, idx)].re;
        if n1 == n_max || n2 == n_max {
            top += p;
        }
        occ[0] += n1 as f64 * p;
        occ[1] += n2 as f64 * p;
    }
    Ok(CascadedSolution {
        full,
        qubits,
        n_max,
        top_population: top,
        occupations: occ,
    })
}

/// Raises the truncation from `start` until the top Fock population drops
/// below [`FOCK_TAIL_TOL`]. Returns the last attempt when `limit` is
/// reached; check [`CascadedSolution::converged`].
pub fn solve_cascaded_auto(params: &NetworkParams, start: usize, limit: usize) -> Result<CascadedSolution> {
    let mut n_max = start.max(2);
    loop {
        let sol = solve_cascaded(params, n_max)?;
        if sol.converged() || n_max >= limit {
            return Ok(sol);
        }
        n_max += 1;
    }
}

/// Default starting truncation for the cascaded model.
pub fn default_n_max(eps_p: f64) -> usize {
    if eps_p <= 0.3 {
        4
    } else if eps_p <= 0.5 {
        6
    } else {
        10
    }
}

fn add_effective_qubit_terms(
    b: &mut LiouvillianBuilder,
    q: &QubitParams,
    moments: &TmsMoments,
    sm: [&CMatrix; 2],
    sz: [&CMatrix; 2],
) -> Result<()> {
    let n = [moments.n1, moments.n2];
    for k in 0..2 {
        let sp = sm[k].adjoint();
        b.dissipator(&Dissipator::new(sm[k].clone(), (n[k] + 1.0) * q.gamma_r[k]))?;
        b.dissipator(&Dissipator::new(sp, n[k] * q.gamma_r[k]))?;
        b.dissipator(&Dissipator::new(sm[k].clone(), q.gamma_ng[k] + q.gamma_l[k]))?;
        b.dissipator(&Dissipator::new(sz[k].clone(), q.gamma_phi[k] / 2.0))?;
    }
    let g = (q.gamma_r[0] * q.gamma_r[1]).sqrt();
    b.double_commutator(moments.m12 * g, &sm[0].adjoint(), &sm[1].adjoint())?;
    b.double_commutator(moments.m12.conj() * g, sm[0], sm[1])?;
    Ok(())
}

fn check_moments(moments: &TmsMoments) -> Result<()> {
    if !moments.is_physical() {
        return Err(Error::InvalidArgument(format!("unphysical field moments {moments:?}")));
    }
    Ok(())
}

/// Two-qubit master equation with the squeezer eliminated.
pub fn build_effective_me(params: &NetworkParams, moments: &TmsMoments) -> Result<Liouvillian> {
    params.validate()?;
    check_moments(moments)?;
    let layout = SpaceLayout::qubits(2);
    let sm = [layout.embed(&sigma_minus(), 0)?, layout.embed(&sigma_minus(), 1)?];
    let sz = [layout.embed(&sigma_z(), 0)?, layout.embed(&sigma_z(), 1)?];
    let q = &params.qubits;
    let h = &sz[0] * C64::from(q.delta[0] / 2.0) + &sz[1] * C64::from(q.delta[1] / 2.0);
    let mut b = LiouvillianBuilder::new(layout);
    b.hamiltonian(&h)?;
    add_effective_qubit_terms(&mut b, q, moments, [&sm[0], &sm[1]], [&sz[0], &sz[1]])?;
    Ok(b.build())
}

/// Effective-model steady state at the network's own pump setting.
pub fn effective_steady_state(params: &NetworkParams) -> Result<SteadyState> {
    let moments = tms_moments_analytic(params.jpc.eps_p, params.jpc.phi_p, params.link)?;
    build_effective_me(params, &moments)?.steady_state()
}

/// `(√(N+1)|gg⟩ + e^{iφ}√N|ee⟩)/√(2N+1)` in the basis (gg, ge, eg, ee).
pub fn dark_state(n_char: f64, phi_p: f64) -> Result<CVector> {
    if !(n_char >= 0.0) {
        return Err(Error::InvalidArgument(format!("photon number must be ≥ 0, got {n_char}")));
    }
    let norm = (2.0 * n_char + 1.0).sqrt();
    let mut v = CVector::zeros(4);
    v[0] = C64::from((n_char + 1.0).sqrt() / norm);
    v[3] = C64::from_polar(n_char.sqrt() / norm, phi_p);
    Ok(v)
}

/// Two-mode squeezed vacuum `∝ Σ tanh(r)ⁿ |n, n⟩`, rejecting truncations
/// whose first omitted amplitude `tanh(r)^{n_max+1}` exceeds 1e-8.
pub fn tms_pure_state(r: f64, n_max: usize) -> Result<CVector> {
    let t = r.tanh().abs();
    let tail = t.powi(n_max as i32 + 1);
    if tail >= 1e-8 {
        return Err(Error::Truncation(format!(
            "tanh(r)^(n_max+1) = {tail:.2e} for r = {r}, n_max = {n_max}"
        )));
    }
    Ok(tms_pure_state_truncated(r, n_max))
}

/// Normalized two-mode squeezed vacuum on the truncated space without the
/// tail check. Index `n₁·(n_max+1) + n₂`.
pub fn tms_pure_state_truncated(r: f64, n_max: usize) -> CVector {
    let n = n_max + 1;
    let t = r.tanh();
    let mut v = CVector::zeros(n * n);
    let mut amp = 1.0;
    for k in 0..n {
        v[k * n + k] = C64::from(amp);
        amp *= t;
    }
    let norm = v.norm();
    v / C64::from(norm)
}

/// `i(a₁†σ₁⁻ − a₁σ₁⁺ + a₂†σ₂⁻ − a₂σ₂⁺)` on the layout `[n_max+1, n_max+1, 2, 2]`.
pub fn jc_coupling(n_max: usize) -> Result<CMatrix> {
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!("n_max must be ≥ 2, got {n_max}")));
    }
    let n = n_max + 1;
    let d = 4 * n * n;
    let index = |n1: usize, n2: usize, q: usize| (n1 * n + n2) * 4 + q;
    let mut h = CMatrix::zeros(d, d);
    for n1 in 0..n {
        for n2 in 0..n {
            for q in 0..4 {
                let col = index(n1, n2, q);
                // qubit k is excited when bit (1 − k) of q is set
                for (k, bit) in [(0usize, 2usize), (1, 1)] {
                    let (m, m_other) = if k == 0 { (n1, n2) } else { (n2, n1) };
                    let place = |mk: usize| if k == 0 { (mk, m_other) } else { (m_other, mk) };
                    if q & bit != 0 && m < n_max {
                        // i a†σ⁻ : |m, e⟩ → √(m+1) |m+1, g⟩
                        let (a, b) = place(m + 1);
                        h[(index(a, b, q & !bit), col)] += I * ((m + 1) as f64).sqrt();
                    }
                    if q & bit == 0 && m > 0 {
                        // −i aσ⁺ : |m, g⟩ → √m |m−1, e⟩
                        let (a, b) = place(m - 1);
                        h[(index(a, b, q | bit), col)] -= I * (m as f64).sqrt();
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Peak power gain `G₀ = ((P+1)/(P−1))²` and bandwidth `δω = κ((1−P)/(1+P))²`
/// with `P = ε_p²`.
pub fn gain_bandwidth(kappa: f64, eps_p: f64) -> Result<(f64, f64)> {
    if eps_p >= 1.0 {
        return Err(Error::AboveThreshold { eps: eps_p });
    }
    if !(eps_p >= 0.0) {
        return Err(Error::InvalidArgument(format!("pump strength must be ≥ 0, got {eps_p}")));
    }
    let p = eps_p * eps_p;
    let g0 = ((p + 1.0) / (p - 1.0)).powi(2);
    let dw = kappa * ((1.0 - p) / (1.0 + p)).powi(2);
    Ok((g0, dw))
}

/// `ε_p = 10^{(P_p − α)/20}`.
pub fn pump_power_to_eps(p_dbm: f64, alpha_dbm: f64) -> Result<f64> {
    let eps = 10f64.powf((p_dbm - alpha_dbm) / 20.0);
    if eps >= 1.0 {
        return Err(Error::AboveThreshold { eps });
    }
    Ok(eps)
}

/// Coherent-drive transmission past a qubit side-coupled to a waveguide.
pub fn s21_transmission(delta: f64, omega_drive: f64, gamma_w: f64, gamma_d: f64) -> Result<C64> {
    if !(gamma_d > 0.0) {
        return Err(Error::InvalidArgument(format!("γ_d must be positive, got {gamma_d}")));
    }
    let x = delta / gamma_d;
    let sat = omega_drive * omega_drive / (gamma_w * gamma_d);
    let num = c(1.0, -x) * (gamma_w / (2.0 * gamma_d));
    Ok(C64::from(1.0) - num / (1.0 + x * x + sat))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S21Fit {
    pub gamma_d: f64,
    /// `γ_w / 2γ_d`.
    pub depth: f64,
    pub rms: f64,
}

/// Fits weak-drive `|S₂₁|(Δ)` data for `(γ_d, γ_w/2γ_d)`.
pub fn fit_s21_magnitude(delta: &[f64], magnitude: &[f64]) -> Result<S21Fit> {
    if delta.len() != magnitude.len() || delta.len() < 4 {
        return Err(Error::InvalidArgument("need at least 4 paired points".into()));
    }
    let model = |d: f64, gd: f64, depth: f64| {
        let x = d / gd;
        (C64::from(1.0) - c(1.0, -x) * depth / (1.0 + x * x)).norm()
    };
    let (imin, &ymin) = magnitude
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let depth0 = (1.0 - ymin).clamp(0.05, 0.95);
    let half = 1.0 - depth0 / 2.0;
    let mut width = 0.0f64;
    for (d, m) in delta.iter().zip(magnitude) {
        if *m <= half {
            width = width.max((d - delta[imin]).abs());
        }
    }
    let span = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let gd0 = if width > 0.0 { width } else { span / 4.0 };
    let res = |p: &[f64]| -> Vec<f64> {
        delta
            .iter()
            .zip(magnitude)
            .map(|(&d, &m)| model(d, p[0], p[1]) - m)
            .collect()
    };
    let bounds = Bounds {
        lower: vec![1e-9 * span.max(1e-300), 0.0],
        upper: vec![f64::INFINITY, 1.0],
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for scale in [0.5, 1.0, 2.0] {
        let out = levenberg_marquardt(res, &[gd0 * scale, depth0], Some(&bounds), LmOptions::default());
        if best.as_ref().is_none_or(|b| out.cost < b.0) {
            best = Some((out.cost, out.params));
        }
    }
    let (cost, p) = best.expect("at least one start");
    let rms = (cost / delta.len() as f64).sqrt();
    if !rms.is_finite() {
        return Err(Error::FitFailure {
            residual: rms,
            reason: "non-finite transmission residual".into(),
        });
    }
    Ok(S21Fit {
        gamma_d: p[0],
        depth: p[1],
        rms,
    })
}

/// Qubit order of the four-qubit model: outer pair first, then inner.
pub const OUTER: [usize; 2] = [0, 1];
pub const INNER: [usize; 2] = [2, 3];

/// Four qubits ordered (outer 1, outer 2, inner 1, inner 2). The outer
/// pair is driven by the squeezed field exactly as in the two-qubit
/// effective model; each inner qubit exchanges excitations with its outer
/// partner at rate `j_exchange` and otherwise only dephases and decays
/// into non-guided modes.
pub fn build_four_qubit_me(params: &NetworkParams, j_exchange: f64, moments: &TmsMoments) -> Result<Liouvillian> {
    params.validate()?;
    check_moments(moments)?;
    if !(j_exchange >= 0.0) {
        return Err(Error::InvalidArgument(format!("exchange coupling must be ≥ 0, got {j_exchange}")));
    }
    let layout = SpaceLayout::qubits(4);
    let sm: Vec<CMatrix> = (0..4)
        .map(|k| layout.embed(&sigma_minus(), k))
        .collect::<Result<_>>()?;
    let sz: Vec<CMatrix> = (0..4).map(|k| layout.embed(&sigma_z(), k)).collect::<Result<_>>()?;
    let q = &params.qubits;
    let mut h = CMatrix::zeros(16, 16);
    for k in 0..2 {
        let (o, i) = (OUTER[k], INNER[k]);
        let hop = sm[i].adjoint() * &sm[o];
        h += (&hop + hop.adjoint()) * C64::from(j_exchange);
        h += (&sz[o] + &sz[i]) * C64::from(q.delta[k] / 2.0);
    }
    let mut b = LiouvillianBuilder::new(layout);
    b.hamiltonian(&h)?;
    add_effective_qubit_terms(&mut b, q, moments, [&sm[0], &sm[1]], [&sz[0], &sz[1]])?;
    for k in 0..2 {
        let i = INNER[k];
        b.dissipator(&Dissipator::new(sm[i].clone(), q.gamma_ng[k]))?;
        b.dissipator(&Dissipator::new(sz[i].clone(), q.gamma_phi[k] / 2.0))?;
    }
    Ok(b.build())
}

/// `γ_w ≈ ω_q² Z₀ C_c² / C` (SI units in, s⁻¹ out).
pub fn waveguide_coupling_estimate(omega_q: f64, z0: f64, c_coupling: f64, c_total: f64) -> Result<f64> {
    if !(omega_q > 0.0 && z0 > 0.0 && c_coupling > 0.0 && c_total > 0.0) {
        return Err(Error::InvalidArgument("all inputs must be positive".into()));
    }
    Ok(omega_q * omega_q * z0 * c_coupling * c_coupling / c_total)
}

/// `⟨a†a⟩` of mode `k` in a full mode–qubit state.
pub fn mode_occupation(rho: &DensityMatrix, n_max: usize, k: usize) -> Result<f64> {
    let layout = SpaceLayout::jpc_two_qubits(n_max);
    let a = layout.embed(&annihilation(n_max)?, k)?;
    Ok(expect(&(a.adjoint() * a), rho)?.re)
}

/// Identity on the two-mode Fock space; used to lift qubit states.
pub fn fock_identity(n_max: usize) -> CMatrix {
    identity((n_max + 1) * (n_max + 1))
}
