//! Property tests for invariants that must hold across the parameter space.

use proptest::prelude::*;
use tmsq::entanglement::{concurrence, concurrence_via_product, dv_eof};
use tmsq::gaussian::{cv_eof, cv_purity, duan_simon_covariance, tmsv_covariance, TmsvModel};
use tmsq::network::{angular, effective_steady_state, squeezing_parameter, NetworkParams};
use tmsq::sweep::{run_pump_sweep, SweepConfig, SweepVariable};
use tmsq::tomography::{expectations_from_state, mle_reconstruct, PauliExpectations};
use tmsq::{CMatrix, CVector, DensityMatrix, C64};

fn werner(p: f64) -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi = CVector::from_vec(vec![C64::from(s), C64::from(0.0), C64::from(0.0), C64::from(s)]);
    let m = DensityMatrix::pure(&psi).into_matrix() * C64::from(p)
        + CMatrix::identity(4, 4) * C64::from((1.0 - p) / 4.0);
    DensityMatrix::new(m, 1e-12).unwrap()
}

fn random_state(entries: &[f64]) -> DensityMatrix {
    let a = CMatrix::from_fn(4, 4, |i, j| C64::new(entries[2 * (4 * i + j)], entries[2 * (4 * i + j) + 1]));
    let m = &a * a.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m / C64::from(tr), 1e-10).unwrap()
}

fn check_physical(rho: &DensityMatrix, tol: f64) {
    assert!((rho.trace().re - 1.0).abs() < tol, "trace {}", rho.trace());
    assert!(rho.trace().im.abs() < tol);
    assert!(rho.min_eigenvalue() > -tol, "min eigenvalue {}", rho.min_eigenvalue());
    let h = rho.matrix() - rho.matrix().adjoint();
    assert!(h.norm() < tol);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn werner_concurrence_matches_closed_form(p in 0.0f64..=1.0) {
        let c = concurrence(&werner(p)).unwrap();
        prop_assert!((c - ((3.0 * p - 1.0) / 2.0).max(0.0)).abs() < 1e-10);
    }

    #[test]
    fn pure_state_concurrence_is_twice_overlap(theta in 0.0f64..std::f64::consts::PI, phi in -3.0f64..3.0) {
        let (a, b) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let psi = CVector::from_vec(vec![C64::from(a), C64::from(0.0), C64::from(0.0), C64::from_polar(b, phi)]);
        let c = concurrence(&DensityMatrix::pure(&psi)).unwrap();
        prop_assert!((c - 2.0 * a * b).abs() < 1e-10);
    }

    #[test]
    fn concurrence_bounds_and_methods_agree(entries in prop::collection::vec(-1.0f64..1.0, 32)) {
        let rho = random_state(&entries);
        let c = concurrence(&rho).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - concurrence_via_product(&rho).unwrap()).abs() < 1e-7);
        let e = dv_eof(c).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&e) && e <= c + 1e-12);
    }

    #[test]
    fn effective_steady_state_is_physical(
        eps in 0.0f64..0.9,
        gr1 in 0.2f64..2.0,
        gr2 in 0.2f64..2.0,
        gl in 0.0f64..1.0,
        gphi in 0.0f64..0.2,
        gng in 0.01f64..0.5,
        eta1 in 0.2f64..=1.0,
        eta2 in 0.2f64..=1.0,
    ) {
        let mut p = NetworkParams::ideal(angular(1.0), angular(60.0), false).with_eps(eps);
        p.qubits.gamma_r = [angular(gr1), angular(gr2)];
        p.qubits.gamma_l = [angular(gl * gr1), angular(gl * gr2)];
        p.qubits.gamma_phi = [angular(gphi); 2];
        p.qubits.gamma_ng = [angular(gng); 2];
        p.link.eta1 = eta1;
        p.link.eta2 = eta2;
        let ss = effective_steady_state(&p).unwrap();
        prop_assert!(ss.residual < 1e-8);
        check_physical(&ss.rho, 1e-9);
        let c = concurrence(&ss.rho).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!(ss.rho.purity() <= 1.0 + 1e-10);
    }

    #[test]
    fn gaussian_state_respects_uncertainty(eps in 0.0f64..0.95, eta1 in 0.0f64..=1.0, eta2 in 0.0f64..=1.0) {
        let r = squeezing_parameter(eps).unwrap();
        let v = tmsv_covariance(&TmsvModel { r, eta1, eta2 }).unwrap();
        prop_assert!(v.uncertainty_min_eigenvalue().unwrap() > -1e-9);
        let mu = cv_purity(&v).unwrap();
        prop_assert!(mu > 0.0 && mu <= 1.0 + 1e-12);
        prop_assert!(cv_eof(&v).unwrap() >= 0.0);
    }

    #[test]
    fn lossless_tmsv_entropy_matches_closed_form(eps in 0.01f64..0.9) {
        let r = squeezing_parameter(eps).unwrap();
        let v = tmsv_covariance(&TmsvModel { r, eta1: 1.0, eta2: 1.0 }).unwrap();
        let (c2, s2) = (r.cosh().powi(2), r.sinh().powi(2));
        let expected = c2 * c2.log2() - s2 * s2.log2();
        prop_assert!((cv_eof(&v).unwrap() - expected).abs() < 1e-9 * expected.max(1.0));
        prop_assert!((cv_purity(&v).unwrap() - 1.0).abs() < 1e-9);
        prop_assert!(duan_simon_covariance(&v) < 1.0);
    }

    #[test]
    fn mle_output_is_physical(entries in prop::collection::vec(-1.0f64..1.0, 32), noise in prop::collection::vec(-0.2f64..0.2, 16)) {
        let truth = random_state(&entries);
        let mut exps = expectations_from_state(&truth).unwrap();
        for (k, dn) in noise.iter().enumerate() {
            let (i, j) = (k / 4, k % 4);
            exps.set(i, j, (exps.get(i, j) + dn).clamp(-1.0, 1.0));
        }
        let rec = mle_reconstruct(&exps).unwrap();
        check_physical(&rec.rho, 1e-9);
    }

    #[test]
    fn pauli_csv_round_trip(entries in prop::collection::vec(-1.0f64..1.0, 32)) {
        let exps = expectations_from_state(&random_state(&entries)).unwrap();
        let mut buf = Vec::new();
        exps.write_csv(&mut buf).unwrap();
        let back = PauliExpectations::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), exps.values());
    }
}

#[test]
fn sweep_output_is_deterministic() {
    let grid: Vec<f64> = (0..8).map(|k| 0.1 * k as f64).collect();
    let cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::EpsP, grid);
    let render = || {
        let mut buf = Vec::new();
        run_pump_sweep(&cfg).unwrap().write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let first = render();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    assert_eq!(first, pool.install(render));
    assert_eq!(first, render());
}

#[test]
fn sweep_csv_reads_back() {
    let grid = vec![0.0, 0.2, 0.4];
    let cfg = SweepConfig::new(NetworkParams::table_one(), SweepVariable::EpsP, grid.clone());
    let res = run_pump_sweep(&cfg).unwrap();
    let mut buf = Vec::new();
    res.write_csv(&mut buf).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(buf.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(header.len(), res.columns.len() + 2);
    assert_eq!(header[0], "eps_p [1]");
    let conc = res.column("concurrence").unwrap();
    let k = header.iter().position(|h| h.starts_with("concurrence ")).unwrap();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.unwrap();
        assert_eq!(rec[0].parse::<f64>().unwrap(), grid[row]);
        assert_eq!(rec[k].parse::<f64>().unwrap(), conc[row]);
        assert_eq!(&rec[header.len() - 1], "ok");
    }
}
