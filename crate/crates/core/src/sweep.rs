//! Parameter sweeps over the network models.
//!
//! Each sweep evaluates its grid points independently (in parallel through
//! rayon) and returns a [`SweepResult`] whose rows follow the grid order.
//! Grid values use the units listed by [`SweepVariable::unit`]; rates are
//! quoted as `f = ω/2π` in MHz and converted with [`angular`].

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::entanglement::{bell_phi_minus, bell_phi_plus, concurrence, default_pump_grid, dv_eof, dv_purity, maximize_on_grid, optimize_pump};
use crate::error::{Error, Result};
use crate::fit::{fit_lorentzian, LorentzianFit};
use crate::gaussian::{cv_eof, duan_simon, tmsv_covariance, TmsvModel};
use crate::network::{
    angular, build_effective_me, build_four_qubit_me, default_n_max, gain_bandwidth, solve_cascaded_auto,
    squeezing_parameter, tms_moments_analytic, to_mhz, NetworkParams, TmsMoments, INNER, OUTER,
};
use crate::lindblad::SteadyState;
use crate::ops::{kron, overlap, partial_trace, CMatrix, CVector, DensityMatrix, SpaceLayout};

/// Rows whose solver residual exceeds this are flagged.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Largest truncation tried by the cascaded model.
pub const CASCADED_N_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepVariable {
    EpsP,
    TPulse,
    Detuning,
    JExchange,
    GammaPhi,
    GammaNg,
    Asymmetry,
    Eta,
}

impl SweepVariable {
    pub const ALL: [Self; 8] = [
        Self::EpsP,
        Self::TPulse,
        Self::Detuning,
        Self::JExchange,
        Self::GammaPhi,
        Self::GammaNg,
        Self::Asymmetry,
        Self::Eta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::EpsP => "eps_p",
            Self::TPulse => "t_pulse",
            Self::Detuning => "detuning",
            Self::JExchange => "j_exchange",
            Self::GammaPhi => "gamma_phi",
            Self::GammaNg => "gamma_ng",
            Self::Asymmetry => "asymmetry",
            Self::Eta => "eta",
        }
    }

    /// Unit of the grid values. The limit-sweep rates are ratios to γ_R.
    pub fn unit(self) -> &'static str {
        match self {
            Self::EpsP | Self::Asymmetry | Self::Eta => "1",
            Self::TPulse => "us",
            Self::Detuning | Self::JExchange => "MHz",
            Self::GammaPhi | Self::GammaNg => "gamma_R",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep variable '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Model {
    #[default]
    Effective,
    Cascaded,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Self::Effective => "effective",
            Self::Cascaded => "cascaded",
        }
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(Self::Effective),
            "cascaded" => Ok(Self::Cascaded),
            _ => Err(Error::InvalidArgument(format!("unknown model '{s}'"))),
        }
    }
}

/// Column groups that can be requested in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    Populations,
    Coherences,
    Concurrence,
    Purity,
    DvEof,
    DuanSimon,
    CvEof,
    Moments,
}

impl Observable {
    pub const ALL: [Self; 8] = [
        Self::Populations,
        Self::Coherences,
        Self::Concurrence,
        Self::Purity,
        Self::DvEof,
        Self::DuanSimon,
        Self::CvEof,
        Self::Moments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Populations => "populations",
            Self::Coherences => "coherences",
            Self::Concurrence => "concurrence",
            Self::Purity => "purity",
            Self::DvEof => "dv_eof",
            Self::DuanSimon => "duan_simon",
            Self::CvEof => "cv_eof",
            Self::Moments => "moments",
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown observable '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub network: NetworkParams,
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub model: Model,
    /// Column groups to keep; empty keeps everything.
    pub outputs: Vec<Observable>,
    pub seed: u64,
    /// Starting Fock truncation for the cascaded model; chosen from the
    /// pump strength when `None`.
    pub n_max: Option<usize>,
    /// Optimize the pump strength at every grid point (four-qubit sweep).
    pub optimize_pump: bool,
}

impl SweepConfig {
    pub fn new(network: NetworkParams, variable: SweepVariable, grid: Vec<f64>) -> Self {
        Self {
            network,
            variable,
            grid,
            model: Model::Effective,
            outputs: Vec::new(),
            seed: 0,
            n_max: None,
            optimize_pump: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("sweep grid contains non-finite values".into()));
        }
        if self.grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("sweep grid must be sorted ascending".into()));
        }
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        let in_range = match self.variable {
            SweepVariable::EpsP => lo >= 0.0 && hi < 1.0,
            SweepVariable::Eta => lo >= 0.0 && hi <= 1.0,
            SweepVariable::Asymmetry => lo >= 0.0 && hi < 1.0,
            SweepVariable::Detuning => true,
            SweepVariable::TPulse | SweepVariable::JExchange | SweepVariable::GammaPhi | SweepVariable::GammaNg => {
                lo >= 0.0
            }
        };
        if !in_range {
            return Err(match self.variable {
                SweepVariable::EpsP if hi >= 1.0 => Error::AboveThreshold { eps: hi },
                v => Error::InvalidArgument(format!("grid [{lo}, {hi}] out of range for {v}")),
            });
        }
        Ok(())
    }

    fn expect_variable(&self, allowed: &[SweepVariable]) -> Result<()> {
        self.validate()?;
        if !allowed.contains(&self.variable) {
            return Err(Error::InvalidArgument(format!(
                "sweep variable {} not supported here (expected one of {allowed:?})",
                self.variable
            )));
        }
        Ok(())
    }

    fn keeps(&self, group: Option<Observable>) -> bool {
        match group {
            None => true,
            Some(g) => self.outputs.is_empty() || self.outputs.contains(&g),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub group: Option<Observable>,
}

fn col(name: &str, unit: &str, group: Option<Observable>) -> Column {
    Column {
        name: name.into(),
        unit: unit.into(),
        group,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    /// Computed, but a diagnostic is out of tolerance.
    Flagged(String),
    /// The solver failed; values are NaN.
    Failed(String),
}

impl RowStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok)
    }

    fn label(&self) -> String {
        match self {
            Self::Ok => "ok".into(),
            Self::Flagged(m) => format!("flagged: {m}"),
            Self::Failed(m) => format!("failed: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// One value per column, the grid value first.
    pub values: Vec<f64>,
    pub residual: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub sweep: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    pub metadata: Vec<(String, String)>,
}

impl SweepResult {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Values of one column, in grid order.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status.is_ok())
    }

    /// Writes `#`-prefixed metadata lines followed by a CSV table whose
    /// header cells read `name [unit]`, plus `residual` and `status`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidArgument(format!("write failed: {e}"));
        writeln!(out, "# sweep = {}", self.sweep).map_err(io)?;
        writeln!(
            out,
            "# units: rates and frequencies are entered as f = omega/2pi in MHz and converted internally to omega = 2pi*f in rad/us; times in us"
        )
        .map_err(io)?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}").map_err(io)?;
        }
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header: Vec<String> = self.columns.iter().map(|c| format!("{} [{}]", c.name, c.unit)).collect();
        header.push("residual [1]".into());
        header.push("status".into());
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.values.iter().map(|v| format!("{v}")).collect();
            rec.push(format!("{}", row.residual));
            rec.push(row.status.label());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

/// Evaluates `f` on every grid point in parallel. Failed points become
/// NaN rows with the error recorded in their status.
fn run_grid<F>(sweep: &str, cfg: &SweepConfig, columns: Vec<Column>, f: F) -> SweepResult
where
    F: Fn(f64) -> Result<(Vec<f64>, f64, RowStatus)> + Sync,
{
    let width = columns.len();
    let rows: Vec<Row> = cfg
        .grid
        .par_iter()
        .map(|&x| match f(x) {
            Ok((mut values, residual, status)) => {
                values.insert(0, x);
                debug_assert_eq!(values.len(), width);
                let status = match status {
                    RowStatus::Ok if !(residual < RESIDUAL_TOL) => {
                        RowStatus::Flagged(format!("residual {residual:.2e} above {RESIDUAL_TOL:e}"))
                    }
                    s => s,
                };
                Row { values, residual, status }
            }
            Err(e) => {
                let mut values = vec![f64::NAN; width];
                values[0] = x;
                Row {
                    values,
                    residual: f64::NAN,
                    status: RowStatus::Failed(e.to_string()),
                }
            }
        })
        .collect();
    let keep: Vec<bool> = columns.iter().map(|c| cfg.keeps(c.group)).collect();
    let columns = columns.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(c, _)| c).collect();
    let rows = rows
        .into_iter()
        .map(|mut r| {
            r.values = r.values.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| v).collect();
            r
        })
        .collect();
    SweepResult {
        sweep: sweep.into(),
        columns,
        rows,
        metadata: base_metadata(cfg),
    }
}

fn base_metadata(cfg: &SweepConfig) -> Vec<(String, String)> {
    let p = &cfg.network;
    let mhz = |v: [f64; 2]| format!("{}, {}", to_mhz(v[0]), to_mhz(v[1]));
    vec![
        ("model".into(), cfg.model.name().into()),
        ("variable".into(), format!("{} [{}]", cfg.variable, cfg.variable.unit())),
        ("seed".into(), cfg.seed.to_string()),
        ("kappa_mhz".into(), format!("{}, {}", to_mhz(p.jpc.kappa1), to_mhz(p.jpc.kappa2))),
        ("eps_p".into(), p.jpc.eps_p.to_string()),
        ("gamma_r_mhz".into(), mhz(p.qubits.gamma_r)),
        ("gamma_l_mhz".into(), mhz(p.qubits.gamma_l)),
        ("gamma_phi_mhz".into(), mhz(p.qubits.gamma_phi)),
        ("gamma_ng_mhz".into(), mhz(p.qubits.gamma_ng)),
        ("eta".into(), format!("{}, {}", p.link.eta1, p.link.eta2)),
        ("residual_tolerance".into(), format!("{RESIDUAL_TOL:e}")),
    ]
}

fn push_meta(res: &mut SweepResult, key: &str, value: impl ToString) {
    res.metadata.push((key.into(), value.to_string()));
}

/// Columns describing a two-qubit state, in the order produced by
/// [`state_values`].
fn state_columns() -> Vec<Column> {
    use Observable::*;
    vec![
        col("p_gg", "1", Some(Populations)),
        col("p_ge", "1", Some(Populations)),
        col("p_eg", "1", Some(Populations)),
        col("p_ee", "1", Some(Populations)),
        col("re_rho_gg_ee", "1", Some(Coherences)),
        col("im_rho_gg_ee", "1", Some(Coherences)),
        col("abs_rho_gg_ee", "1", Some(Coherences)),
        col("concurrence", "1", Some(Concurrence)),
        col("purity", "1", Some(Purity)),
        col("dv_eof", "ebit", Some(DvEof)),
    ]
}

fn state_values(rho: &DensityMatrix) -> Result<Vec<f64>> {
    let m = rho.matrix();
    let coh = m[(0, 3)];
    let c = concurrence(rho)?;
    Ok(vec![
        m[(0, 0)].re,
        m[(1, 1)].re,
        m[(2, 2)].re,
        m[(3, 3)].re,
        coh.re,
        coh.im,
        coh.norm(),
        c,
        dv_purity(rho)?,
        dv_eof(c)?,
    ])
}

fn field_columns() -> Vec<Column> {
    use Observable::*;
    vec![
        col("n1", "photons", Some(Moments)),
        col("n2", "photons", Some(Moments)),
        col("abs_m", "photons", Some(Moments)),
        col("duan_simon", "1", Some(DuanSimon)),
        col("cv_eof", "ebit", Some(CvEof)),
    ]
}

fn field_values(params: &NetworkParams, r: f64, m: &TmsMoments) -> Result<Vec<f64>> {
    let v = tmsv_covariance(&TmsvModel {
        r,
        eta1: params.link.eta1,
        eta2: params.link.eta2,
    })?;
    Ok(vec![m.n1, m.n2, m.m12.norm(), duan_simon(m.n1, m.n2, m.m12.norm()), cv_eof(&v)?])
}

/// Two-qubit steady state of the chosen model at the network's pump.
/// Returns the reduced qubit state, solver residual, truncation used and
/// status.
fn two_qubit_steady(params: &NetworkParams, cfg: &SweepConfig) -> Result<(DensityMatrix, f64, usize, RowStatus)> {
    match cfg.model {
        Model::Effective => {
            let m = tms_moments_analytic(params.jpc.eps_p, params.jpc.phi_p, params.link)?;
            let ss: SteadyState = build_effective_me(params, &m)?.steady_state()?;
            Ok((ss.rho, ss.residual, 0, RowStatus::Ok))
        }
        Model::Cascaded => {
            let start = cfg.n_max.unwrap_or_else(|| default_n_max(params.jpc.eps_p));
            let sol = solve_cascaded_auto(params, start, CASCADED_N_LIMIT.max(start))?;
            let status = if sol.converged() {
                RowStatus::Ok
            } else {
                RowStatus::Flagged(format!(
                    "Fock tail {:.2e} at n_max = {}",
                    sol.top_population, sol.n_max
                ))
            };
            Ok((sol.qubits, sol.full.residual, sol.n_max, status))
        }
    }
}

/// Steady state versus pump strength.
///
/// Columns: the two-qubit populations and `ρ_gg,ee` coherence, concurrence,
/// purity and entanglement of formation; the field moments reaching the
/// qubits with their Duan–Simon value and Gaussian entanglement of
/// formation; `tanh_2r`, the concurrence of the lossless chiral limit; and
/// `n_max`, the truncation used by the cascaded model (0 for the effective
/// model).
pub fn run_pump_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.expect_variable(&[SweepVariable::EpsP])?;
    let mut columns = vec![col("eps_p", "1", None), col("r", "1", None)];
    columns.extend(state_columns());
    columns.extend(field_columns());
    columns.push(col("tanh_2r", "1", Some(Observable::Concurrence)));
    columns.push(col("n_max", "1", None));
    let res = run_grid("sweep-pump", cfg, columns, |eps| {
        let params = cfg.network.with_eps(eps);
        let r = squeezing_parameter(eps)?;
        let m = tms_moments_analytic(eps, params.jpc.phi_p, params.link)?;
        let (rho, residual, n_max, status) = two_qubit_steady(&params, cfg)?;
        let mut v = vec![r];
        v.extend(state_values(&rho)?);
        v.extend(field_values(&params, r, &m)?);
        v.push((2.0 * r).tanh());
        v.push(n_max as f64);
        Ok((v, residual, status))
    });
    Ok(res)
}

/// Time at which `C(t)` first reaches a fraction of its steady value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stabilization {
    /// In µs.
    pub time: f64,
    pub steady_concurrence: f64,
    pub fraction: f64,
}

/// Evolves the effective model from `|gg⟩` on a 1 ns grid until the
/// concurrence reaches `fraction` of its steady value, interpolating
/// linearly between samples.
pub fn stabilization_time(params: &NetworkParams, fraction: f64, t_max: f64) -> Result<Stabilization> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let m = tms_moments_analytic(params.jpc.eps_p, params.jpc.phi_p, params.link)?;
    let l = build_effective_me(params, &m)?;
    let c_ss = concurrence(&l.steady_state()?.rho)?;
    if c_ss <= 0.0 {
        return Err(Error::InvalidArgument("steady state is separable".into()));
    }
    let target = fraction * c_ss;
    let dt = 1e-3;
    let chunk = 1000;
    let mut rho = DensityMatrix::basis(4, 0);
    let (mut t_prev, mut c_prev) = (0.0, 0.0);
    let mut t0 = 0.0;
    while t0 < t_max {
        let times: Vec<f64> = (1..=chunk).map(|k| k as f64 * dt).collect();
        let traj = l.trajectory(&rho, &times, dt)?;
        for (k, state) in traj.iter().enumerate() {
            let t = t0 + times[k];
            let c = concurrence(state)?;
            if c >= target {
                let time = t_prev + (target - c_prev) / (c - c_prev) * (t - t_prev);
                return Ok(Stabilization {
                    time,
                    steady_concurrence: c_ss,
                    fraction,
                });
            }
            t_prev = t;
            c_prev = c;
        }
        rho = traj.last().expect("non-empty chunk").clone();
        t0 += chunk as f64 * dt;
    }
    Err(Error::InvalidArgument(format!(
        "concurrence did not reach {fraction} of its steady value within {t_max} us"
    )))
}

/// Pump pulse of variable length applied to `|gg⟩` under the effective
/// model. The residual column holds `|Tr ρ(t) − 1|`; the metadata records
/// the steady concurrence and the 90% stabilization time in µs and in
/// units of `1/γ_R` of qubit 1.
pub fn run_time_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.expect_variable(&[SweepVariable::TPulse])?;
    if cfg.model != Model::Effective {
        return Err(Error::InvalidArgument("the time sweep uses the effective model".into()));
    }
    let params = cfg.network;
    let m = tms_moments_analytic(params.jpc.eps_p, params.jpc.phi_p, params.link)?;
    let l = build_effective_me(&params, &m)?;
    let steady = l.steady_state()?;
    let c_ss = concurrence(&steady.rho)?;
    let mut columns = vec![col("t_pulse", "us", None)];
    columns.extend(state_columns());
    columns.push(col("c_over_steady", "1", Some(Observable::Concurrence)));
    let max_step = 1e-3;
    let rho0 = DensityMatrix::basis(4, 0);
    let mut res = run_grid("sweep-time", cfg, columns, |t| {
        let rho = l.trajectory(&rho0, &[t], max_step)?.pop().expect("one sample");
        let mut v = state_values(&rho)?;
        v.push(if c_ss > 0.0 { v[7] / c_ss } else { f64::NAN });
        Ok((v, (rho.trace().re - 1.0).abs(), RowStatus::Ok))
    });
    push_meta(&mut res, "steady_concurrence", c_ss);
    push_meta(&mut res, "steady_residual", steady.residual);
    match stabilization_time(&params, 0.9, 100.0) {
        Ok(s) => {
            push_meta(&mut res, "t90_us", s.time);
            push_meta(&mut res, "t90_gamma_r", s.time * params.qubits.gamma_r[0]);
        }
        Err(e) => push_meta(&mut res, "t90_us", format!("unavailable ({e})")),
    }
    Ok(res)
}

/// Detuning sweep result with its Lorentzian fit (FWHM in MHz).
#[derive(Debug, Clone)]
pub struct DetuningSweep {
    pub result: SweepResult,
    pub fit: Option<LorentzianFit>,
}

/// Cascaded steady state with the qubits detuned by `δ₁ = −δ₂ = δ` from
/// their modes, so that `ω_q1 + ω_q2` stays on the pump. Grid in MHz.
pub fn run_detuning_sweep(cfg: &SweepConfig) -> Result<DetuningSweep> {
    cfg.expect_variable(&[SweepVariable::Detuning])?;
    if cfg.model != Model::Cascaded {
        return Err(Error::InvalidArgument(
            "the detuning sweep needs the cascaded model: opposite detunings cancel in the effective model".into(),
        ));
    }
    let mut columns = vec![col("detuning", "MHz", None)];
    columns.extend(state_columns());
    columns.push(col("n_max", "1", None));
    let mut res = run_grid("sweep-detuning", cfg, columns, |delta| {
        let mut params = cfg.network;
        params.qubits.delta = [angular(delta), -angular(delta)];
        let (rho, residual, n_max, status) = two_qubit_steady(&params, cfg)?;
        let mut v = state_values(&rho)?;
        v.push(n_max as f64);
        Ok((v, residual, status))
    });
    let fit = detuning_fit(&res);
    match &fit {
        Some(f) => {
            push_meta(&mut res, "lorentzian_fwhm_mhz", f.fwhm);
            push_meta(&mut res, "lorentzian_center_mhz", f.center);
            push_meta(&mut res, "lorentzian_amplitude", f.amplitude);
            push_meta(&mut res, "lorentzian_rms", f.rms);
        }
        None => push_meta(&mut res, "lorentzian_fwhm_mhz", "fit failed"),
    }
    let (_, dw) = gain_bandwidth(cfg.network.jpc.kappa1, cfg.network.jpc.eps_p)?;
    push_meta(&mut res, "gain_bandwidth_mhz", to_mhz(dw));
    Ok(DetuningSweep { result: res, fit })
}

fn detuning_fit(res: &SweepResult) -> Option<LorentzianFit> {
    let x = res.column("detuning")?;
    let y = res.column("concurrence")?;
    let (x, y): (Vec<f64>, Vec<f64>) = x.into_iter().zip(y).filter(|(_, c)| c.is_finite()).unzip();
    fit_lorentzian(&x, &y).ok()
}

/// Imperfection-free chiral network carrying the configured mean coupling
/// and mode decay rates.
pub fn chiral_base(params: &NetworkParams) -> NetworkParams {
    let g = 0.5 * (params.qubits.gamma_r[0] + params.qubits.gamma_r[1]);
    let mut base = NetworkParams::ideal(g, params.jpc.kappa1, false);
    base.jpc.kappa2 = params.jpc.kappa2;
    base.jpc.phi_p = params.jpc.phi_p;
    base
}

/// Applies one limiting factor to an imperfection-free chiral network.
/// Dephasing and non-guided rates are ratios to each qubit's `γ_R`;
/// asymmetry `a` sets `γ_R = γ̄(1 ∓ a)`; `eta` sets both transmittances.
pub fn apply_limit(base: &NetworkParams, variable: SweepVariable, x: f64) -> Result<NetworkParams> {
    let mut p = *base;
    let q = &mut p.qubits;
    match variable {
        SweepVariable::GammaPhi => q.gamma_phi = [x * q.gamma_r[0], x * q.gamma_r[1]],
        SweepVariable::GammaNg => q.gamma_ng = [x * q.gamma_r[0], x * q.gamma_r[1]],
        SweepVariable::Asymmetry => {
            let g = 0.5 * (q.gamma_r[0] + q.gamma_r[1]);
            q.gamma_r = [g * (1.0 - x), g * (1.0 + x)];
        }
        SweepVariable::Eta => {
            p.link.eta1 = x;
            p.link.eta2 = x;
        }
        v => return Err(Error::InvalidArgument(format!("{v} is not a limiting factor"))),
    }
    p.validate()?;
    Ok(p)
}

/// Optimized concurrence under a single limiting factor. Each point starts
/// from [`chiral_base`] of the configured network, applies the swept
/// imperfection through [`apply_limit`] and optimizes the pump strength.
pub fn run_limit_sweeps(cfg: &SweepConfig) -> Result<SweepResult> {
    use SweepVariable::*;
    cfg.expect_variable(&[GammaPhi, GammaNg, Asymmetry, Eta])?;
    let base = chiral_base(&cfg.network);
    let grid = default_pump_grid();
    let columns = vec![
        col(cfg.variable.name(), cfg.variable.unit(), None),
        col("eps_star", "1", None),
        col("c_star", "1", Some(Observable::Concurrence)),
        col("dv_eof_star", "ebit", Some(Observable::DvEof)),
        col("grid_edge", "1", None),
    ];
    let mut res = run_grid("sweep-limits", cfg, columns, |x| {
        let p = apply_limit(&base, cfg.variable, x)?;
        let opt = optimize_pump(&p, &grid)?;
        let edge = opt.eps >= grid[grid.len() - 1] - 1e-9;
        let ss = build_effective_me(&p, &tms_moments_analytic(opt.eps, p.jpc.phi_p, p.link)?)?.steady_state()?;
        Ok((
            vec![opt.eps, opt.concurrence, dv_eof(opt.concurrence)?, if edge { 1.0 } else { 0.0 }],
            ss.residual,
            RowStatus::Ok,
        ))
    });
    push_meta(
        &mut res,
        "pump_grid",
        format!("{} points on [{}, {}]", grid.len(), grid[0], grid[grid.len() - 1]),
    );
    push_meta(&mut res, "base_gamma_r_mhz", to_mhz(base.qubits.gamma_r[0]));
    Ok(res)
}

/// `|Φ⁺⟩_out ⊗ |Φ⁻⟩_in` in the four-qubit ordering (outer 1, outer 2,
/// inner 1, inner 2).
pub fn four_qubit_target() -> CVector {
    let a = CMatrix::from_column_slice(4, 1, bell_phi_plus().as_slice());
    let b = CMatrix::from_column_slice(4, 1, bell_phi_minus().as_slice());
    CVector::from_column_slice(kron(&a, &b).as_slice())
}

/// Pair concurrences of the four-qubit steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourQubitPoint {
    pub eps: f64,
    pub outer: f64,
    pub inner: f64,
    pub overlap: f64,
    pub residual: f64,
}

pub fn four_qubit_point(params: &NetworkParams, j_exchange: f64, eps: f64) -> Result<FourQubitPoint> {
    let m = tms_moments_analytic(eps, params.jpc.phi_p, params.link)?;
    let ss = build_four_qubit_me(params, j_exchange, &m)?.steady_state()?;
    let layout = SpaceLayout::qubits(4);
    let outer = concurrence(&partial_trace(&ss.rho, &layout, &OUTER)?)?;
    let inner = concurrence(&partial_trace(&ss.rho, &layout, &INNER)?)?;
    Ok(FourQubitPoint {
        eps,
        outer,
        inner,
        overlap: overlap(&four_qubit_target(), &ss.rho)?,
        residual: ss.residual,
    })
}

/// Pump strength maximizing the smaller of the two pair concurrences.
pub fn optimize_four_qubit(params: &NetworkParams, j_exchange: f64) -> Result<FourQubitPoint> {
    let grid: Vec<f64> = (1..20).map(|k| 0.05 * k as f64).collect();
    let opt = maximize_on_grid(
        |e| four_qubit_point(params, j_exchange, e).map(|p| p.outer.min(p.inner)),
        &grid,
        1e-3,
    )?;
    four_qubit_point(params, j_exchange, opt.eps)
}

/// Two entangled pairs: the outer pair is driven by the squeezed field and
/// each inner qubit exchanges excitations with its outer partner. Grid in
/// MHz. With `optimize_pump` the pump is chosen per point to maximize the
/// weaker pair; otherwise the configured pump is used.
pub fn run_four_qubit(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.expect_variable(&[SweepVariable::JExchange])?;
    let columns = vec![
        col("j_exchange", "MHz", None),
        col("eps_p", "1", None),
        col("c_outer", "1", Some(Observable::Concurrence)),
        col("c_inner", "1", Some(Observable::Concurrence)),
        col("overlap_target", "1", None),
    ];
    let mut res = run_grid("four-qubit", cfg, columns, |j| {
        let p = if cfg.optimize_pump {
            optimize_four_qubit(&cfg.network, angular(j))?
        } else {
            four_qubit_point(&cfg.network, angular(j), cfg.network.jpc.eps_p)?
        };
        Ok((vec![p.eps, p.outer, p.inner, p.overlap], p.residual, RowStatus::Ok))
    });
    let two = if cfg.optimize_pump {
        optimize_pump(&cfg.network, &default_pump_grid())?.concurrence
    } else {
        concurrence(&two_qubit_steady(&cfg.network, &SweepConfig { model: Model::Effective, ..cfg.clone() })?.0)?
    };
    push_meta(&mut res, "two_qubit_concurrence", two);
    push_meta(&mut res, "target", "Phi+ (outer) x Phi- (inner)");
    Ok(res)
}

/// Gaussian entanglement of the field against the entanglement that ends
/// up in the qubits.
///
/// The rate columns multiply each entanglement of formation by the gain
/// bandwidth `δω/2π` of mode 1, in Mebit/s. This is one of several
/// possible bandwidth conventions and is meant for orientation only.
pub fn run_entanglement_transfer(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.expect_variable(&[SweepVariable::EpsP])?;
    let columns = vec![
        col("eps_p", "1", None),
        col("cv_eof", "ebit", Some(Observable::CvEof)),
        col("dv_eof", "ebit", Some(Observable::DvEof)),
        col("ratio", "1", None),
        col("bandwidth", "MHz", None),
        col("cv_rate", "Mebit/s", Some(Observable::CvEof)),
        col("dv_rate", "Mebit/s", Some(Observable::DvEof)),
    ];
    let mut res = run_grid("transfer", cfg, columns, |eps| {
        let params = cfg.network.with_eps(eps);
        let r = squeezing_parameter(eps)?;
        let v = tmsv_covariance(&TmsvModel {
            r,
            eta1: params.link.eta1,
            eta2: params.link.eta2,
        })?;
        let e_cv = cv_eof(&v)?;
        let (rho, residual, _, status) = two_qubit_steady(&params, cfg)?;
        let e_dv = dv_eof(concurrence(&rho)?)?;
        let ratio = if e_cv > 0.0 { e_dv / e_cv } else { f64::NAN };
        let bw = to_mhz(gain_bandwidth(params.jpc.kappa1, eps)?.1);
        Ok((vec![e_cv, e_dv, ratio, bw, e_cv * bw, e_dv * bw], residual, status))
    });
    push_meta(
        &mut res,
        "rate_convention",
        "E_F x gain bandwidth of mode 1; orientation only, not a calibrated ebit rate",
    );
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::C64;

    fn lin(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn config_validation() {
        let net = NetworkParams::table_one();
        assert!(SweepConfig::new(net, SweepVariable::EpsP, vec![]).validate().is_err());
        assert!(SweepConfig::new(net, SweepVariable::EpsP, vec![0.2, 0.1]).validate().is_err());
        assert!(matches!(
            SweepConfig::new(net, SweepVariable::EpsP, vec![0.2, 1.0]).validate(),
            Err(Error::AboveThreshold { .. })
        ));
        assert!(SweepConfig::new(net, SweepVariable::EpsP, vec![0.0, 0.5]).validate().is_ok());
        let cfg = SweepConfig::new(net, SweepVariable::TPulse, vec![0.1]);
        assert!(run_pump_sweep(&cfg).is_err());
    }

    #[test]
    fn names_round_trip() {
        for v in SweepVariable::ALL {
            assert_eq!(v.name().parse::<SweepVariable>().unwrap(), v);
        }
        for o in Observable::ALL {
            assert_eq!(o.name().parse::<Observable>().unwrap(), o);
        }
        assert_eq!("cascaded".parse::<Model>().unwrap(), Model::Cascaded);
        assert!("bogus".parse::<Model>().is_err());
    }

    #[test]
    fn pump_sweep_table_one() {
        let cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::EpsP, lin(0.0, 0.8, 17));
        let res = run_pump_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 17);
        assert!(res.all_ok());
        let c = res.column("concurrence").unwrap();
        let eps = res.column("eps_p").unwrap();
        let (k, cmax) = c.iter().enumerate().fold((0, 0.0), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
        assert!((cmax - 0.10).abs() < 0.03, "C max {cmax}");
        assert!((eps[k] - 0.25).abs() <= 0.05);
        let mu = res.column("purity").unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-12);
        assert!((mu[16] - 0.25).abs() < 0.05);
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn pump_sweep_ideal_overlay() {
        let net = NetworkParams::ideal(1.0, 100.0, false);
        let cfg = SweepConfig::new(net, SweepVariable::EpsP, lin(0.0, 0.6, 7));
        let res = run_pump_sweep(&cfg).unwrap();
        let c = res.column("concurrence").unwrap();
        let t = res.column("tanh_2r").unwrap();
        for (a, b) in c.iter().zip(&t) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn output_selection_and_failed_rows() {
        let mut cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::EpsP, vec![0.1, 0.2]);
        cfg.outputs = vec![Observable::Concurrence];
        let res = run_pump_sweep(&cfg).unwrap();
        let names: Vec<&str> = res.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["eps_p", "r", "concurrence", "tanh_2r", "n_max"]);
        assert!(res.rows.iter().all(|r| r.values.len() == 5));

        let bad = SweepConfig::new(NetworkParams::table_one(), SweepVariable::GammaPhi, vec![0.0, 1.0]);
        let res = run_grid("t", &bad, vec![col("x", "1", None), col("y", "1", None)], |x| {
            if x > 0.5 {
                Err(Error::InvalidArgument("boom".into()))
            } else {
                Ok((vec![2.0], 0.0, RowStatus::Ok))
            }
        });
        assert!(res.rows[0].status.is_ok());
        assert!(matches!(res.rows[1].status, RowStatus::Failed(_)));
        assert!(res.rows[1].values[1].is_nan());
        let res = run_grid("t", &bad, vec![col("x", "1", None)], |_| Ok((vec![], 1e-6, RowStatus::Ok)));
        assert!(matches!(res.rows[0].status, RowStatus::Flagged(_)));
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::EpsP, lin(0.0, 0.5, 6));
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_pump_sweep(&cfg).unwrap().write_csv(&mut a).unwrap();
        run_pump_sweep(&cfg).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("# sweep = sweep-pump\n# units:"));
        assert!(text.contains("eps_p [1],r [1],p_gg [1]"));
    }

    #[test]
    fn time_sweep_limits() {
        let mut grid = vec![0.0];
        grid.extend((0..7).map(|k| 10f64.powf(-2.0 + 0.5 * k as f64)));
        let cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::TPulse, grid);
        let res = run_time_sweep(&cfg).unwrap();
        assert!(res.all_ok());
        let c = res.column("concurrence").unwrap();
        let pgg = res.column("p_gg").unwrap();
        assert_eq!(c[0], 0.0);
        assert!((pgg[0] - 1.0).abs() < 1e-15);
        let c_ss: f64 = res.meta("steady_concurrence").unwrap().parse().unwrap();
        assert!((c[7] - c_ss).abs() < 1e-4);
        let t90: f64 = res.meta("t90_us").unwrap().parse().unwrap();
        assert!(t90 > 0.0 && t90 < 1.0);
    }

    #[test]
    fn stabilization_crossing_is_bracketed() {
        let p = NetworkParams::table_one();
        let s = stabilization_time(&p, 0.9, 10.0).unwrap();
        let m = tms_moments_analytic(p.jpc.eps_p, 0.0, p.link).unwrap();
        let l = build_effective_me(&p, &m).unwrap();
        let rho0 = DensityMatrix::basis(4, 0);
        let traj = l.trajectory(&rho0, &[s.time - 2e-3, s.time + 2e-3], 1e-4).unwrap();
        let target = 0.9 * s.steady_concurrence;
        assert!(concurrence(&traj[0]).unwrap() < target);
        assert!(concurrence(&traj[1]).unwrap() > target);
    }

    #[test]
    fn detuning_needs_cascaded() {
        let cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::Detuning, vec![0.0]);
        assert!(run_detuning_sweep(&cfg).is_err());
    }

    #[test]
    fn detuning_symmetric_and_peaked() {
        let mut cfg = SweepConfig::new(NetworkParams::ideal(angular(1.0), angular(60.0), false).with_eps(0.15),
            SweepVariable::Detuning, vec![-30.0, 0.0, 30.0]);
        cfg.model = Model::Cascaded;
        cfg.n_max = Some(3);
        let out = run_detuning_sweep(&cfg).unwrap();
        let c = out.result.column("concurrence").unwrap();
        assert!((c[0] - c[2]).abs() < 1e-6);
        assert!(c[1] > c[0]);
    }

    #[test]
    fn limit_sweep_ideal_and_dephasing() {
        let mut cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::GammaPhi, vec![0.0, 0.05, 0.2]);
        let res = run_limit_sweeps(&cfg).unwrap();
        let c = res.column("c_star").unwrap();
        assert!(c[0] > 0.99, "ideal chiral C* {}", c[0]);
        assert_eq!(res.column("grid_edge").unwrap()[0], 1.0);
        assert!(c[0] > c[1] && c[1] > c[2]);
        cfg.variable = SweepVariable::EpsP;
        assert!(run_limit_sweeps(&cfg).is_err());
    }

    #[test]
    fn apply_limit_sets_one_factor() {
        let base = chiral_base(&NetworkParams::table_one());
        assert_eq!(base.qubits.gamma_l, [0.0; 2]);
        let p = apply_limit(&base, SweepVariable::Asymmetry, 0.5).unwrap();
        let g = base.qubits.gamma_r[0];
        assert!((p.qubits.gamma_r[0] - 0.5 * g).abs() < 1e-12);
        assert!((p.qubits.gamma_r[1] - 1.5 * g).abs() < 1e-12);
        let p = apply_limit(&base, SweepVariable::Eta, 0.9).unwrap();
        assert_eq!((p.link.eta1, p.link.eta2), (0.9, 0.9));
        assert!(apply_limit(&base, SweepVariable::Eta, 1.5).is_err());
        assert!(apply_limit(&base, SweepVariable::EpsP, 0.1).is_err());
    }

    #[test]
    fn four_qubit_without_exchange() {
        let mut net = NetworkParams::ideal(angular(1.0), angular(60.0), false).with_eps(0.3);
        // inner qubits need some decay for a unique steady state at J = 0
        net.qubits.gamma_ng = [angular(0.01); 2];
        let cfg = SweepConfig::new(net, SweepVariable::JExchange, vec![0.0, 1.0]);
        let res = run_four_qubit(&cfg).unwrap();
        let inner = res.column("c_inner").unwrap();
        let outer = res.column("c_outer").unwrap();
        assert!(inner[0].abs() < 1e-10);
        let two: f64 = res.meta("two_qubit_concurrence").unwrap().parse().unwrap();
        assert!((outer[0] - two).abs() < 1e-8);
        assert!(inner[1] > 0.0);
    }

    #[test]
    fn four_qubit_target_ordering() {
        let t = four_qubit_target();
        let h = 0.5;
        // |gg gg⟩, |gg ee⟩, |ee gg⟩, |ee ee⟩ with the inner sign flip
        for (idx, v) in [(0, h), (3, -h), (12, h), (15, -h)] {
            assert!((t[idx] - C64::from(v)).norm() < 1e-15);
        }
        assert!((t.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transfer_vacuum_and_ratio() {
        let cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::EpsP, vec![0.0, 0.1, 0.25]);
        let res = run_entanglement_transfer(&cfg).unwrap();
        let cv = res.column("cv_eof").unwrap();
        let dv = res.column("dv_eof").unwrap();
        assert_eq!((cv[0], dv[0]), (0.0, 0.0));
        assert!(res.column("ratio").unwrap()[0].is_nan());
        assert!(cv[2] > dv[2] && dv[2] > 0.0);
        let bw = res.column("bandwidth").unwrap();
        assert!((bw[0] - 60.0).abs() < 1e-9);
    }
}
