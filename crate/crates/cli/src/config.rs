//! TOML run configuration. Rates are read in MHz (`f = ω/2π`).

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tmsq::network::{angular, JpcParams, LinkParams, NetworkParams, QubitParams};
use tmsq::sweep::{Model, Observable};

pub const DEFAULT_CONFIG: &str = include_str!("../config/table_one.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub observables: Vec<String>,
    pub jpc: Jpc,
    pub qubits: Qubits,
    pub link: Link,
    #[serde(default)]
    pub sweep: Sweeps,
    #[serde(default)]
    pub tomo: Tomo,
    #[serde(default)]
    pub detect: Detect,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jpc {
    pub kappa_mhz: [f64; 2],
    pub eps_p: f64,
    #[serde(default)]
    pub phi_p: f64,
    #[serde(default)]
    pub omega_mhz: [f64; 2],
    #[serde(default)]
    pub alpha_dbm: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Qubits {
    pub gamma_r_mhz: [f64; 2],
    #[serde(default)]
    pub gamma_l_mhz: [f64; 2],
    #[serde(default)]
    pub gamma_phi_mhz: [f64; 2],
    #[serde(default)]
    pub gamma_ng_mhz: [f64; 2],
    #[serde(default)]
    pub delta_mhz: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub eta: [f64; 2],
}

/// Either explicit `values` or `points` samples from `start` to `stop`,
/// optionally log-spaced.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub log: bool,
    pub n_max: Option<usize>,
    #[serde(default)]
    pub optimize_pump: bool,
    #[serde(default)]
    pub chiral: bool,
    pub eta: Option<[f64; 2]>,
}

impl Grid {
    pub fn values(&self, what: &str) -> Result<Vec<f64>> {
        if let Some(v) = &self.values {
            return Ok(v.clone());
        }
        let (Some(a), Some(b), Some(n)) = (self.start, self.stop, self.points) else {
            bail!("grid for {what} needs `values` or `start`, `stop` and `points`");
        };
        if n == 0 {
            bail!("grid for {what} has zero points");
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        if self.log {
            if !(a > 0.0 && b > 0.0) {
                bail!("log grid for {what} needs positive bounds");
            }
            let (la, lb) = (a.ln(), b.ln());
            return Ok((0..n).map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp()).collect());
        }
        Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub gamma_phi: Option<Grid>,
    pub gamma_ng: Option<Grid>,
    pub asymmetry: Option<Grid>,
    pub eta: Option<Grid>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweeps {
    pub pump: Option<Grid>,
    pub time: Option<Grid>,
    pub detuning: Option<Grid>,
    #[serde(default)]
    pub limits: Limits,
    pub four_qubit: Option<Grid>,
    pub transfer: Option<Grid>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tomo {
    pub shots: u64,
    pub readout_error: f64,
    pub frame_angle_deg: f64,
}

impl Default for Tomo {
    fn default() -> Self {
        Self {
            shots: 100_000,
            readout_error: 0.05,
            frame_angle_deg: 20.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Detect {
    pub samples: u64,
    pub reps: usize,
    pub readout_snr: f64,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for Detect {
    fn default() -> Self {
        Self {
            samples: 100_000,
            reps: 50,
            readout_snr: 1.0,
            start: 0.0,
            stop: 0.6,
            points: 13,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        match path {
            None => Self::parse(DEFAULT_CONFIG),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    pub fn network(&self) -> Result<NetworkParams> {
        let a = |v: [f64; 2]| [angular(v[0]), angular(v[1])];
        let q = &self.qubits;
        let p = NetworkParams {
            jpc: JpcParams {
                kappa1: angular(self.jpc.kappa_mhz[0]),
                kappa2: angular(self.jpc.kappa_mhz[1]),
                eps_p: self.jpc.eps_p,
                phi_p: self.jpc.phi_p,
                omega1: angular(self.jpc.omega_mhz[0]),
                omega2: angular(self.jpc.omega_mhz[1]),
            },
            qubits: QubitParams {
                delta: a(q.delta_mhz),
                gamma_r: a(q.gamma_r_mhz),
                gamma_l: a(q.gamma_l_mhz),
                gamma_phi: a(q.gamma_phi_mhz),
                gamma_ng: a(q.gamma_ng_mhz),
            },
            link: LinkParams {
                eta1: self.link.eta[0],
                eta2: self.link.eta[1],
            },
        };
        p.validate().context("invalid network parameters")?;
        Ok(p)
    }

    pub fn model(&self) -> Result<Option<Model>> {
        self.model.as_deref().map(|m| m.parse().map_err(anyhow::Error::from)).transpose()
    }

    pub fn observables(&self) -> Result<Vec<Observable>> {
        self.observables
            .iter()
            .map(|o| o.parse().map_err(anyhow::Error::from))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_table_one() {
        let cfg = Config::load(None).unwrap();
        let net = cfg.network().unwrap();
        let t = NetworkParams::table_one();
        assert_eq!(net.link, t.link);
        for k in 0..2 {
            assert!((net.qubits.gamma_r[k] - t.qubits.gamma_r[k]).abs() < 1e-12);
            assert!((net.qubits.gamma_ng[k] - t.qubits.gamma_ng[k]).abs() < 1e-12);
        }
        assert!((net.jpc.kappa2 - t.jpc.kappa2).abs() < 1e-12);
        assert_eq!(cfg.model().unwrap(), Some(Model::Effective));
    }

    #[test]
    fn grids() {
        let g = Grid {
            start: Some(1.0),
            stop: Some(100.0),
            points: Some(3),
            log: true,
            ..Grid::default()
        };
        let v = g.values("t").unwrap();
        assert!((v[1] - 10.0).abs() < 1e-12 && (v[2] - 100.0).abs() < 1e-12);
        assert!(Grid::default().values("x").is_err());
        let g = Grid {
            values: Some(vec![0.1, 0.2]),
            ..Grid::default()
        };
        assert_eq!(g.values("x").unwrap(), vec![0.1, 0.2]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = DEFAULT_CONFIG.replace("eps_p = 0.25", "eps_p = 0.25\nbogus = 1");
        assert!(Config::parse(&bad).is_err());
        let above = DEFAULT_CONFIG.replace("eps_p = 0.25", "eps_p = 1.5");
        assert!(Config::parse(&above).unwrap().network().is_err());
        let m = DEFAULT_CONFIG.replace("model = \"effective\"", "model = \"other\"");
        assert!(Config::parse(&m).unwrap().model().is_err());
    }
}
