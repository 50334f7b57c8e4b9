mod config;
mod plot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use tmsq::detection::{
    heterodyne_n1_variance_mc, heterodyne_sample, heterodyne_variance, heterodyne_variance_per_shot, qubit_photon_estimate,
    qubit_variance, qubit_variance_saturated, detection_crossover, DetectorCal, HeterodyneSetup, QubitDetectorCal,
};
use tmsq::entanglement::{concurrence, dv_purity};
use tmsq::gaussian::{tmsv_covariance, TmsvModel};
use tmsq::network::{
    build_effective_me, effective_steady_state, squeezing_parameter, tms_moments_analytic, LinkParams, NetworkParams,
};
use tmsq::ops::{fidelity, DensityMatrix};
use tmsq::sweep::{
    run_detuning_sweep, run_entanglement_transfer, run_four_qubit, run_limit_sweeps, run_pump_sweep, run_time_sweep,
    Column, Model, Row, RowStatus, SweepConfig, SweepResult, SweepVariable,
};
use tmsq::tomography::{
    apply_frame_rotation, correct_readout, frame_rotation_angle, mle_reconstruct, rotate_qubit2, simulate_measurements,
    BasisSet,
};
use tmsq::validate::{run_criterion, run_validate, ValidationReport, CRITERIA};

use config::{Config, Grid};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Effective,
    Cascaded,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Effective => Model::Effective,
            ModelArg::Cascaded => Model::Cascaded,
        }
    }
}

/// Entanglement distribution between qubits driven by a two-mode squeezed
/// field: parameter sweeps, tomography and detection studies.
#[derive(Debug, Parser)]
#[command(name = "tmsq", version)]
struct Cli {
    /// TOML parameter file (rates in MHz). Defaults to the device parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV files, plots and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Model used for steady states (the detuning sweep defaults to cascaded).
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
    /// Skip SVG plots.
    #[arg(long, global = true)]
    no_plots: bool,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady state versus pump strength.
    SweepPump,
    /// Pump pulse length from the ground state.
    SweepTime,
    /// Qubit detuning with energy conservation, with a Lorentzian fit.
    SweepDetuning,
    /// Optimized concurrence under each limiting factor.
    SweepLimits,
    /// Two pairs linked by exchange coupling.
    FourQubit,
    /// Gaussian versus qubit entanglement of formation.
    Transfer,
    /// Simulated two-qubit tomography and reconstruction.
    TomoDemo,
    /// Heterodyne versus qubit photon-number estimation.
    DetectCompare,
    /// Runs the validation suite; exits non-zero on any failure.
    Validate {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

struct Ctx {
    cfg: Config,
    net: NetworkParams,
    out: PathBuf,
    seed: u64,
    model: Option<Model>,
    plots: bool,
}

impl Ctx {
    fn sweep_config(&self, variable: SweepVariable, grid: &Grid, default_model: Model) -> Result<SweepConfig> {
        let mut sc = SweepConfig::new(self.net, variable, grid.values(variable.name())?);
        sc.model = match (self.model, variable) {
            (Some(m), _) => m,
            (None, SweepVariable::Detuning) => default_model,
            (None, _) => self.cfg.model()?.unwrap_or(default_model),
        };
        sc.outputs = self.cfg.observables()?;
        sc.seed = self.seed;
        sc.n_max = grid.n_max;
        sc.optimize_pump = grid.optimize_pump;
        Ok(sc)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, res: &SweepResult, stem: &str, plot: Option<(&str, &[&str], bool)>) -> Result<PathBuf> {
        let csv_path = self.path(&format!("{stem}.csv"));
        let mut f = BufWriter::new(File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?);
        res.write_csv(&mut f)?;
        f.flush()?;
        drop(f);
        if self.plots {
            if let Some((x, ys, log_x)) = plot {
                plot::plot_csv(&csv_path, &self.path(&format!("{stem}.svg")), stem, x, ys, log_x)?;
            }
        }
        let bad = res.rows.iter().filter(|r| !r.status.is_ok()).count();
        println!("wrote {} ({} rows, {bad} flagged)", csv_path.display(), res.rows.len());
        Ok(csv_path)
    }
}

fn grid<'a>(g: &'a Option<Grid>, name: &str) -> Result<&'a Grid> {
    g.as_ref().with_context(|| format!("configuration has no [sweep.{name}] grid"))
}

const STATE_PLOT: &[&str] = &["p_gg", "p_ge", "p_eg", "p_ee", "abs_rho_gg_ee", "concurrence", "purity"];

fn sweep_pump(ctx: &Ctx) -> Result<()> {
    let sc = ctx.sweep_config(SweepVariable::EpsP, grid(&ctx.cfg.sweep.pump, "pump")?, Model::Effective)?;
    let mut res = run_pump_sweep(&sc)?;
    if let Some(alpha) = ctx.cfg.jpc.alpha_dbm {
        // ε_p = 10^{(P − α)/20}
        res.columns.push(Column {
            name: "pump_power".into(),
            unit: "dBm".into(),
            group: None,
        });
        for row in &mut res.rows {
            let eps = row.values[0];
            row.values.push(alpha + 20.0 * eps.log10());
        }
        res.metadata.push(("alpha_dbm".into(), alpha.to_string()));
    }
    ctx.write(&res, "sweep_pump", Some(("eps_p", STATE_PLOT, false)))?;
    Ok(())
}

fn sweep_time(ctx: &Ctx) -> Result<()> {
    let sc = ctx.sweep_config(SweepVariable::TPulse, grid(&ctx.cfg.sweep.time, "time")?, Model::Effective)?;
    let res = run_time_sweep(&sc)?;
    ctx.write(&res, "sweep_time", Some(("t_pulse", STATE_PLOT, true)))?;
    if let Some(t) = res.meta("t90_us") {
        println!("90% stabilization time: {t} us");
    }
    Ok(())
}

fn sweep_detuning(ctx: &Ctx) -> Result<()> {
    let sc = ctx.sweep_config(SweepVariable::Detuning, grid(&ctx.cfg.sweep.detuning, "detuning")?, Model::Cascaded)?;
    let out = run_detuning_sweep(&sc)?;
    ctx.write(&out.result, "sweep_detuning", Some(("detuning", &["concurrence", "purity"], false)))?;
    match out.fit {
        Some(f) => println!("Lorentzian FWHM: {:.2} MHz", f.fwhm),
        None => println!("Lorentzian fit failed"),
    }
    Ok(())
}

fn sweep_limits(ctx: &Ctx) -> Result<()> {
    let l = &ctx.cfg.sweep.limits;
    let entries = [
        (SweepVariable::GammaPhi, &l.gamma_phi),
        (SweepVariable::GammaNg, &l.gamma_ng),
        (SweepVariable::Asymmetry, &l.asymmetry),
        (SweepVariable::Eta, &l.eta),
    ];
    let mut any = false;
    for (var, g) in entries {
        let Some(g) = g else { continue };
        any = true;
        let sc = ctx.sweep_config(var, g, Model::Effective)?;
        let res = run_limit_sweeps(&sc)?;
        ctx.write(&res, &format!("sweep_limits_{}", var.name()), Some((var.name(), &["c_star", "eps_star"], false)))?;
    }
    if !any {
        anyhow::bail!("configuration has no [sweep.limits.*] grids");
    }
    Ok(())
}

fn four_qubit(ctx: &Ctx) -> Result<()> {
    let g = grid(&ctx.cfg.sweep.four_qubit, "four_qubit")?;
    let mut sc = ctx.sweep_config(SweepVariable::JExchange, g, Model::Effective)?;
    if g.chiral {
        sc.network = sc.network.chiral();
    }
    if let Some([eta1, eta2]) = g.eta {
        sc.network.link = LinkParams { eta1, eta2 };
    }
    let res = run_four_qubit(&sc)?;
    ctx.write(&res, "four_qubit", Some(("j_exchange", &["c_outer", "c_inner", "overlap_target"], false)))?;
    Ok(())
}

fn transfer(ctx: &Ctx) -> Result<()> {
    let sc = ctx.sweep_config(SweepVariable::EpsP, grid(&ctx.cfg.sweep.transfer, "transfer")?, Model::Effective)?;
    let res = run_entanglement_transfer(&sc)?;
    ctx.write(&res, "transfer", Some(("eps_p", &["cv_eof", "dv_eof"], false)))?;
    Ok(())
}

fn write_rho(path: &Path, rho: &DensityMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "re", "im"])?;
    let m = rho.matrix();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_record(&[i.to_string(), j.to_string(), m[(i, j)].re.to_string(), m[(i, j)].im.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn tomo_demo(ctx: &Ctx) -> Result<()> {
    let t = &ctx.cfg.tomo;
    let truth = effective_steady_state(&ctx.net)?.rho;
    let frame = t.frame_angle_deg.to_radians();
    let rotated = rotate_qubit2(&truth, frame)?;
    let raw = simulate_measurements(&rotated, &BasisSet::standard(), t.shots, t.readout_error, ctx.seed)?;
    let corrected = correct_readout(&raw, t.readout_error)?;
    let (phi, exps) = match frame_rotation_angle(&corrected) {
        Ok(phi) => (phi, apply_frame_rotation(&corrected, phi)),
        Err(e) => {
            println!("frame correction skipped: {e}");
            (0.0, corrected)
        }
    };
    let rec = mle_reconstruct(&exps)?;
    raw.write_csv(File::create(ctx.path("tomo_expectations_raw.csv"))?)?;
    exps.write_csv(File::create(ctx.path("tomo_expectations.csv"))?)?;
    write_rho(&ctx.path("tomo_rho.csv"), &rec.rho)?;
    write_rho(&ctx.path("tomo_rho_true.csv"), &truth)?;
    let mut s = String::new();
    use std::fmt::Write as _;
    writeln!(s, "eps_p = {}", ctx.net.jpc.eps_p)?;
    writeln!(s, "shots_per_basis = {}", t.shots)?;
    writeln!(s, "readout_error = {}", t.readout_error)?;
    writeln!(s, "seed = {}", ctx.seed)?;
    writeln!(s, "frame_angle_true_deg = {}", t.frame_angle_deg)?;
    writeln!(s, "frame_angle_estimated_deg = {}", phi.to_degrees())?;
    writeln!(s, "fidelity = {}", fidelity(&rec.rho, &truth)?)?;
    writeln!(s, "concurrence_true = {}", concurrence(&truth)?)?;
    writeln!(s, "concurrence_reconstructed = {}", concurrence(&rec.rho)?)?;
    writeln!(s, "purity_reconstructed = {}", dv_purity(&rec.rho)?)?;
    writeln!(s, "cost = {:e}", rec.cost)?;
    writeln!(s, "kkt_residual = {:e}", rec.kkt)?;
    writeln!(s, "iterations = {}", rec.iterations)?;
    std::fs::write(ctx.path("tomo_summary.txt"), &s)?;
    print!("{s}");
    Ok(())
}

fn detect_compare(ctx: &Ctx) -> Result<()> {
    let d = &ctx.cfg.detect;
    let grid = Grid {
        start: Some(d.start),
        stop: Some(d.stop),
        points: Some(d.points),
        ..Grid::default()
    }
    .values("detect")?;
    let [cal1, cal2] = DetectorCal::experiment();
    let setup = HeterodyneSetup::new(cal1, cal2);
    let qcal = QubitDetectorCal::from_qubit(&ctx.net.qubits, 0, d.readout_snr)?;
    let unit = |n: &str, u: &str| Column {
        name: n.into(),
        unit: u.into(),
        group: None,
    };
    let columns = vec![
        unit("eps_p", "1"),
        unit("n1", "photons"),
        unit("n1_heterodyne", "photons"),
        unit("n1_qubit_raw", "photons"),
        unit("het_var_per_shot", "photons^2"),
        unit("het_var_record", "photons^2"),
        unit("het_var_record_mc", "photons^2"),
        unit("qubit_var_per_shot", "photons^2"),
        unit("qubit_var_saturated", "photons^2"),
        unit("het_over_qubit", "1"),
    ];
    let mut rows = Vec::new();
    for (k, &eps) in grid.iter().enumerate() {
        let row = (|| -> tmsq::Result<(Vec<f64>, f64)> {
            let params = ctx.net.with_eps(eps);
            let v = tmsv_covariance(&TmsvModel {
                r: squeezing_parameter(eps)?,
                eta1: params.link.eta1,
                eta2: params.link.eta2,
            })?;
            let n1 = v.photon_numbers().0;
            let seed = ctx.seed.wrapping_mul(1000).wrapping_add(k as u64);
            let n_het = heterodyne_sample(&v, &setup, d.samples, seed)?.photon_number(0, cal1.n_add);
            let mc = heterodyne_n1_variance_mc(&v, &setup, d.samples, d.reps, seed)?;
            let m = tms_moments_analytic(eps, params.jpc.phi_p, params.link)?;
            let ss = build_effective_me(&params, &m)?.steady_state()?;
            let rm = ss.rho.matrix();
            let p_e = rm[(2, 2)].re + rm[(3, 3)].re;
            let het = heterodyne_variance_per_shot(n1, cal1.n_add);
            let qv = qubit_variance(&qcal)?;
            Ok((
                vec![
                    eps,
                    n1,
                    n_het,
                    qubit_photon_estimate(p_e, &qcal)?,
                    het,
                    heterodyne_variance(n1, cal1.n_add, d.samples)?,
                    mc,
                    qv,
                    qubit_variance_saturated(&qcal, n1)?,
                    het / qv,
                ],
                ss.residual,
            ))
        })();
        rows.push(match row {
            Ok((values, residual)) => Row {
                values,
                residual,
                status: RowStatus::Ok,
            },
            Err(e) => {
                let mut values = vec![f64::NAN; columns.len()];
                values[0] = eps;
                Row {
                    values,
                    residual: f64::NAN,
                    status: RowStatus::Failed(e.to_string()),
                }
            }
        });
    }
    let crossover = detection_crossover(&cal1, &qcal, 1e3)?;
    let res = SweepResult {
        sweep: "detect-compare".into(),
        columns,
        rows,
        metadata: vec![
            ("seed".into(), ctx.seed.to_string()),
            ("samples_per_record".into(), d.samples.to_string()),
            ("records".into(), d.reps.to_string()),
            ("heterodyne_gain_db".into(), format!("{}", 10.0 * cal1.gain.log10())),
            ("heterodyne_n_add".into(), format!("{}, {}", cal1.n_add, cal2.n_add)),
            ("qubit_xi".into(), qcal.xi.to_string()),
            ("qubit_readout_snr".into(), qcal.readout_snr.to_string()),
            (
                "crossover_photons".into(),
                crossover.map_or("none".into(), |n| n.to_string()),
            ),
        ],
    };
    ctx.write(&res, "detect_compare", Some(("eps_p", &["n1", "n1_heterodyne", "n1_qubit_raw"], false)))?;
    Ok(())
}

fn print_report(report: &ValidationReport) {
    for c in &report.criteria {
        let detail: Vec<String> = c.measurements.iter().map(|m| m.to_string()).collect();
        println!(
            "criterion {:02} {} ({:.2}s) {}{}",
            c.id,
            if c.passed() { "PASS" } else { "FAIL" },
            c.runtime.as_secs_f64(),
            c.error.as_deref().map(|e| format!("error: {e}; ")).unwrap_or_default(),
            detail.join("; ")
        );
    }
    if report.negative_control.is_some() {
        println!(
            "negative control {}",
            if report.control_detected() { "PASS (mutation detected)" } else { "FAIL (mutation not detected)" }
        );
    }
}

fn validate(ctx: &Ctx, only: &[u8]) -> Result<bool> {
    let report = if only.is_empty() {
        run_validate()
    } else {
        for id in only {
            if !CRITERIA.iter().any(|(k, _)| k == id) {
                anyhow::bail!("no criterion {id}");
            }
        }
        ValidationReport {
            criteria: only.iter().map(|&id| run_criterion(id)).collect(),
            negative_control: None,
        }
    };
    print_report(&report);
    let path = ctx.path("report.txt");
    let mut f = BufWriter::new(File::create(&path)?);
    report.write_text(&mut f)?;
    f.flush()?;
    println!("wrote {}", path.display());
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let cfg = Config::load(cli.config.as_deref())?;
    let net = cfg.network()?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let ctx = Ctx {
        cfg,
        net,
        out: cli.out,
        seed: cli.seed,
        model: cli.model.map(Model::from),
        plots: !cli.no_plots,
    };
    match cli.command {
        Command::SweepPump => sweep_pump(&ctx)?,
        Command::SweepTime => sweep_time(&ctx)?,
        Command::SweepDetuning => sweep_detuning(&ctx)?,
        Command::SweepLimits => sweep_limits(&ctx)?,
        Command::FourQubit => four_qubit(&ctx)?,
        Command::Transfer => transfer(&ctx)?,
        Command::TomoDemo => tomo_demo(&ctx)?,
        Command::DetectCompare => detect_compare(&ctx)?,
        Command::Validate { only } => return validate(&ctx, &only),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
