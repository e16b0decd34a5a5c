//! TOML scenario files.
//!
//! ```toml
//! m = 4
//! g = 2
//! users_per_group = 2        # or [2, 3]
//! seed = 7
//! # channels = "h.csv"       # optional; otherwise drawn from `seed`
//!
//! [error]
//! mu2 = 0.25                 # or: matrices = [{ re = [[..]], im = [[..]] }, ...]
//!
//! [noise]
//! sigma2 = 1.0               # or one value per user
//!
//! [targets]                  # power minimization
//! tau = [1.0, 1.0]
//!
//! [power]
//! gamma = 4.0                # max-min fairness
//! mode = "sum"               # or "per_antenna"
//! ```
//!
//! Exactly one of `targets.tau` and `power.gamma` must be present. The channel
//! CSV has one row per user and `2M` columns of interleaved real/imaginary parts;
//! lines starting with `#` are ignored.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Deserialize;

use super::{generate_channels, Design, PowerMode, Scenario, Uncertainty, User};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); n]),
            OneOrMany::Many(v) if v.len() == n => Ok(v.clone()),
            OneOrMany::Many(v) => Err(Error::Config(format!(
                "{what}: expected {n} values, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixConfig {
    fn to_matrix(&self, m: usize) -> Result<DMatrix<Complex64>> {
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == m && rows.iter().all(|r| r.len() == m);
        if !shape_ok(&self.re) || !self.im.as_ref().map_or(true, shape_ok) {
            return Err(Error::Config(format!("uncertainty matrix must be {m}x{m}")));
        }
        Ok(DMatrix::from_fn(m, m, |i, j| {
            let im = self.im.as_ref().map_or(0.0, |x| x[i][j]);
            Complex64::new(self.re[i][j], im)
        }))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorConfig {
    pub mu2: Option<f64>,
    pub matrices: Option<Vec<MatrixConfig>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma2: OneOrMany<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma2: OneOrMany::One(1.0),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsConfig {
    pub tau: OneOrMany<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub gamma: Option<f64>,
    pub mode: PowerMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub m: usize,
    pub g: usize,
    pub users_per_group: OneOrMany<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub channels: Option<PathBuf>,
    #[serde(default)]
    pub error: ErrorConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub targets: Option<TargetsConfig>,
    pub power: PowerConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Group label of every user, groups laid out consecutively.
    pub fn membership(&self) -> Result<Vec<usize>> {
        let sizes = self.users_per_group.expand(self.g, "users_per_group")?;
        Ok(sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &n)| std::iter::repeat(g).take(n))
            .collect())
    }

    /// Builds the scenario. A relative `channels` path is resolved against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Scenario> {
        let membership = self.membership()?;
        let n_users = membership.len();
        let channels = match &self.channels {
            Some(p) => {
                let path = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                let h = load_channels_csv(&path, self.m)?;
                if h.len() != n_users {
                    return Err(Error::Config(format!(
                        "{}: {} channel rows for {n_users} users",
                        path.display(),
                        h.len()
                    )));
                }
                h
            }
            None => {
                let mut groups = vec![Vec::new(); self.g];
                for (i, &g) in membership.iter().enumerate() {
                    groups[g].push(i);
                }
                generate_channels(self.m, &groups, self.seed)
            }
        };

        let uncertainties: Vec<Uncertainty> = match (&self.error.mu2, &self.error.matrices) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either error.mu2 or error.matrices".into()))
            }
            (Some(mu2), None) => vec![Uncertainty::sphere(*mu2)?; n_users],
            (None, Some(ms)) => {
                if ms.len() != n_users {
                    return Err(Error::Config(format!(
                        "{} uncertainty matrices for {n_users} users",
                        ms.len()
                    )));
                }
                ms.iter()
                    .map(|mc| Uncertainty::ellipsoid(mc.to_matrix(self.m)?))
                    .collect::<Result<_>>()?
            }
            (None, None) => vec![Uncertainty::Exact; n_users],
        };
        let noise = self.noise.sigma2.expand(n_users, "noise.sigma2")?;

        let design = match (&self.targets, self.power.gamma) {
            (Some(t), None) => Design::PowerMin {
                targets: t.tau.expand(self.g, "targets.tau")?,
            },
            (None, Some(gamma)) => Design::MaxMinFair { power_limit: gamma },
            _ => {
                return Err(Error::Config(
                    "give exactly one of targets.tau (power minimization) or power.gamma (max-min)"
                        .into(),
                ))
            }
        };

        let users = membership
            .into_iter()
            .zip(channels)
            .zip(uncertainties)
            .zip(noise)
            .map(|(((group, channel), uncertainty), noise)| User {
                group,
                channel,
                uncertainty,
                noise,
            })
            .collect();
        Scenario::new(self.m, self.g, users, self.power.mode, design)
    }
}

/// Reads channel estimates: one row per user, `2M` interleaved re/im columns.
pub fn load_channels_csv(path: &Path, antennas: usize) -> Result<Vec<DVector<Complex64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("row {row}: {message}"),
    };
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(row, e.to_string()))?;
        if record.len() != 2 * antennas {
            return Err(parse_err(
                row,
                format!("expected {} columns, got {}", 2 * antennas, record.len()),
            ));
        }
        let values: Vec<f64> = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(row, e.to_string())))
            .collect::<Result<_>>()?;
        out.push(DVector::from_fn(antennas, |m, _| {
            Complex64::new(values[2 * m], values[2 * m + 1])
        }));
    }
    Ok(out)
}
