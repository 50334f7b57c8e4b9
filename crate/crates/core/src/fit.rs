//! Small nonlinear least-squares and 1-D search utilities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the relative cost decrease falls below this.
    pub ftol: f64,
    /// Stop when the relative step falls below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-15,
            xtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Box constraints applied by clamping each trial point.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    fn clamp(&self, p: &mut [f64]) {
        for (k, x) in p.iter_mut().enumerate() {
            *x = x.clamp(self.lower[k], self.upper[k]);
        }
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, p: &[f64], m: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-7 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let up = f(&q);
        q[k] = p[k] - h;
        let dn = f(&q);
        q[k] = p[k];
        for i in 0..m {
            jac[(i, k)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    jac
}

/// Levenberg–Marquardt with a central-difference Jacobian.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64], bounds: Option<&Bounds>, opts: LmOptions) -> LmResult
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut p = p0.to_vec();
    if let Some(b) = bounds {
        b.clamp(&mut p);
    }
    let mut r = residuals(&p);
    let m = r.len();
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let jac = jacobian(&residuals, &p, m);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() < 1e-300 {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            if let Some(b) = bounds {
                b.clamp(&mut trial);
            }
            let rt = residuals(&trial);
            let ct = sum_sq(&rt);
            if ct.is_finite() && ct < cost {
                let rel_step = trial
                    .iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1e-8))
                    .fold(0.0, f64::max);
                let rel_cost = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_cost < opts.ftol || rel_step < opts.xtol {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no descent direction left: at a (local) minimum to working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LmResult {
        params: p,
        cost,
        iterations: it,
        converged,
    }
}

/// Maximizes a unimodal `f` on `[a, b]` to an interval width of `tol`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// `A / (1 + (2 (x − x0) / w)²)`.
pub fn lorentzian(x: f64, amplitude: f64, center: f64, fwhm: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    amplitude / (1.0 + u * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFit {
    pub amplitude: f64,
    pub center: f64,
    pub fwhm: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

/// Least-squares Lorentzian fit (amplitude, center, FWHM).
pub fn fit_lorentzian(x: &[f64], y: &[f64]) -> Result<LorentzianFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 paired points".into()));
    }
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let x0 = x[imax];
    // initial width from the half-maximum crossing farthest from the peak
    let mut half = 0.0f64;
    for (xi, yi) in x.iter().zip(y) {
        if *yi >= 0.5 * ymax {
            half = half.max((xi - x0).abs());
        }
    }
    let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    let w0 = if half > 0.0 { 2.0 * half } else { span / 2.0 };
    let res = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| lorentzian(xi, p[0], p[1], p[2]) - yi)
            .collect()
    };
    let bounds = Bounds {
        lower: vec![0.0, f64::NEG_INFINITY, 1e-12 * span.max(1e-300)],
        upper: vec![f64::INFINITY; 3],
    };
    let out = levenberg_marquardt(res, &[ymax, x0, w0], Some(&bounds), LmOptions::default());
    let rms = (out.cost / x.len() as f64).sqrt();
    if !out.converged || !out.cost.is_finite() {
        return Err(Error::FitFailure {
            residual: rms,
            reason: "Lorentzian fit did not converge".into(),
        });
    }
    Ok(LorentzianFit {
        amplitude: out.params[0],
        center: out.params[1],
        fwhm: out.params[2].abs(),
        rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfgsStatus {
    /// The caller's stopping rule accepted the iterate.
    Converged,
    /// No relative cost decrease above 1e-14 for `stall_window` iterations.
    Stagnated,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub status: BfgsStatus,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub stall_window: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            stall_window: 50,
        }
    }
}

fn armijo<F: Fn(&[f64]) -> (f64, Vec<f64>)>(
    f: &F,
    x: &[f64],
    fx: f64,
    g: &[f64],
    dir: &[f64],
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let slope: f64 = g.iter().zip(dir).map(|(a, b)| a * b).sum();
    if !(slope < 0.0) {
        return None;
    }
    let mut alpha = 1.0;
    for _ in 0..60 {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let (ft, gt) = f(&trial);
        if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
            return Some((trial, ft, gt));
        }
        alpha *= 0.5;
    }
    None
}

/// Quasi-Newton minimization with an Armijo backtracking line search.
///
/// `f` returns the cost and its gradient. `stop` is consulted after every
/// accepted step and ends the run when it returns true.
pub fn bfgs_minimize<F, S>(f: F, x0: &[f64], opts: BfgsOptions, mut stop: S) -> BfgsResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    S: FnMut(&[f64], f64) -> bool,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut stall_ref = fx;
    let mut stall = 0;
    if stop(&x, fx) {
        return BfgsResult {
            x,
            cost: fx,
            iterations: 0,
            status: BfgsStatus::Converged,
        };
    }
    for it in 1..=opts.max_iter {
        let gv = DVector::from_column_slice(&g);
        let dir: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let step = armijo(&f, &x, fx, &g, &dir).or_else(|| {
            h = DMatrix::identity(n, n);
            let sd: Vec<f64> = g.iter().map(|v| -v).collect();
            armijo(&f, &x, fx, &g, &sd)
        });
        let Some((xn, fnew, gn)) = step else {
            return BfgsResult {
                x,
                cost: fx,
                iterations: it,
                status: BfgsStatus::Stagnated,
            };
        };
        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = xn;
        fx = fnew;
        g = gn;
        if stop(&x, fx) {
            return BfgsResult {
                x,
                cost: fx,
                iterations: it,
                status: BfgsStatus::Converged,
            };
        }
        if stall_ref - fx > 1e-14 * fx.abs() {
            stall_ref = fx;
            stall = 0;
        } else {
            stall += 1;
            if stall >= opts.stall_window {
                return BfgsResult {
                    x,
                    cost: fx,
                    iterations: it,
                    status: BfgsStatus::Stagnated,
                };
            }
        }
    }
    BfgsResult {
        x,
        cost: fx,
        iterations: opts.max_iter,
        status: BfgsStatus::MaxIterations,
    }
}

fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    (a, fa): (f64, f64),
    (m, fm): (f64, f64),
    (b, fb): (f64, f64),
    whole: f64,
    tol: f64,
    depth: usize,
) -> Option<f64> {
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        simpson_step(f, (a, fa), (lm, flm), (m, fm), left, tol / 2.0, depth - 1)?
            + simpson_step(f, (m, fm), (rm, frm), (b, fb), right, tol / 2.0, depth - 1)?,
    )
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_depth: usize) -> Result<f64> {
    let m = (a + b) / 2.0;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
        return Err(Error::Integration("integrand is not finite at the sample points".into()));
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, (a, fa), (m, fm), (b, fb), whole, tol, max_depth)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Integration(format!("no convergence to {tol:e} within depth {max_depth}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lm_recovers_exponential() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&x| 2.5 * (-1.3 * x).exp() + 0.2).collect();
        let out = levenberg_marquardt(
            |p| t.iter().zip(&y).map(|(&x, &v)| p[0] * (-p[1] * x).exp() + p[2] - v).collect(),
            &[1.0, 0.5, 0.0],
            None,
            LmOptions::default(),
        );
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-8);
        assert!((out.params[1] - 1.3).abs() < 1e-8);
        assert!((out.params[2] - 0.2).abs() < 1e-8);
    }

    #[test]
    fn bounds_are_respected() {
        let out = levenberg_marquardt(
            |p| vec![p[0] - 3.0],
            &[0.5],
            Some(&Bounds {
                lower: vec![0.0],
                upper: vec![1.0],
            }),
            LmOptions::default(),
        );
        assert!((out.params[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.37).powi(2) + 2.0, 0.0, 1.0, 1e-8);
        assert!((x - 0.37).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lorentzian_fit_exact() {
        let x: Vec<f64> = (-30..=30).map(|i| i as f64 * 2.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| lorentzian(v, 0.3, 1.5, 44.0)).collect();
        let fit = fit_lorentzian(&x, &y).unwrap();
        assert!((fit.fwhm - 44.0).abs() < 1e-6);
        assert!((fit.center - 1.5).abs() < 1e-6);
        assert!((fit.amplitude - 0.3).abs() < 1e-9);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            (v, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
        };
        let out = bfgs_minimize(f, &[-1.2, 1.0], BfgsOptions::default(), |_, v| v < 1e-20);
        assert_eq!(out.status, BfgsStatus::Converged);
        assert!((out.x[0] - 1.0).abs() < 1e-9 && (out.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bfgs_reports_stagnation() {
        let out = bfgs_minimize(|x: &[f64]| (x[0] * x[0] + 1.0, vec![2.0 * x[0]]), &[1.0], BfgsOptions::default(), |_, _| false);
        assert_eq!(out.status, BfgsStatus::Stagnated);
        assert!(out.x[0].abs() < 1e-6);
    }

    #[test]
    fn adaptive_simpson() {
        let v = integrate_adaptive(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 40).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
        let v = integrate_adaptive(|x: f64| 1.0 / (1.0 + x * x), -1.0, 1.0, 1e-13, 40).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(integrate_adaptive(|x: f64| (x * 1e4).sin().abs(), 0.0, 1.0, 1e-14, 3).is_err());
    }
}
