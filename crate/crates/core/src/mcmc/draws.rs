//! Retained posterior draws, their summaries and on-disk persistence.
//!
//! Draws are written as CSV with columns `chain,iteration,<params...>`; a JSON
//! sidecar next to the CSV records the configuration, seed, RNG algorithm,
//! per-chain sampler statistics, fixed quantities and the summary table.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::FitConfig;
use super::diagnostics::{ess, rhat};
use crate::error::{Error, Result};
use crate::rng::RNG_ALGORITHM;
use crate::stats;

pub const DRAWS_FORMAT_VERSION: u32 = 1;

/// Convergence threshold on the largest split R-hat.
pub const RHAT_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    /// Divergent transitions after warm-up.
    pub divergences: usize,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    /// Post-warm-up transitions that hit the maximum tree depth.
    pub max_depth_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub median: f64,
    pub q97_5: f64,
    pub rhat: f64,
    pub ess: f64,
    pub mcse: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Sidecar {
    format_version: u32,
    model: Option<String>,
    seed: u64,
    rng_algorithm: String,
    config: FitConfig,
    fixed: Vec<(String, f64)>,
    chains: Vec<ChainStats>,
    max_rhat: f64,
    converged: bool,
    summary: Vec<ParamSummary>,
}

/// Fields of the sidecar needed to rebuild a [`PosteriorDraws`]; the summary
/// table is recomputed from the draws.
#[derive(Debug, Deserialize)]
struct SidecarHead {
    format_version: u32,
    model: Option<String>,
    config: FitConfig,
    fixed: Vec<(String, f64)>,
    chains: Vec<ChainStats>,
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    names: Vec<String>,
    /// `values[chain][param][draw]`
    values: Vec<Vec<Vec<f64>>>,
    fixed: Vec<(String, f64)>,
    config: FitConfig,
    stats: Vec<ChainStats>,
    model: Option<String>,
}

impl PosteriorDraws {
    pub fn new(
        names: Vec<String>,
        values: Vec<Vec<Vec<f64>>>,
        fixed: Vec<(String, f64)>,
        config: FitConfig,
        stats: Vec<ChainStats>,
    ) -> Self {
        Self {
            names,
            values,
            fixed,
            config,
            stats,
            model: None,
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn model(&self) -> Option<&str> {
        self.model.as_deref()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.values.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.values.first().and_then(|c| c.first()).map_or(0, Vec::len)
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.draws_per_chain()
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn chain_stats(&self) -> &[ChainStats] {
        &self.stats
    }

    pub fn fixed(&self) -> &[(String, f64)] {
        &self.fixed
    }

    pub fn total_divergences(&self) -> usize {
        self.stats.iter().map(|s| s.divergences).sum()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index(name).is_some() || self.fixed.iter().any(|(n, _)| n == name)
    }

    /// All draws of `name`, chains concatenated in order. Fixed quantities
    /// yield a constant column.
    pub fn get(&self, name: &str) -> Result<Vec<f64>> {
        if let Some(j) = self.index(name) {
            return Ok(self.values.iter().flat_map(|c| c[j].iter().copied()).collect());
        }
        if let Some((_, v)) = self.fixed.iter().find(|(n, _)| n == name) {
            return Ok(vec![*v; self.total_draws()]);
        }
        Err(Error::MissingParameter(name.to_string()))
    }

    pub fn chains_of(&self, name: &str) -> Result<Vec<&[f64]>> {
        let j = self.index(name).ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        Ok(self.values.iter().map(|c| c[j].as_slice()).collect())
    }

    pub fn mean(&self, name: &str) -> Result<f64> {
        Ok(stats::mean(&self.get(name)?))
    }

    pub fn summarize(&self, name: &str) -> Result<ParamSummary> {
        let all = self.get(name)?;
        let mean = stats::mean(&all);
        let sd = if all.len() > 1 { stats::sample_sd(&all) } else { 0.0 };
        let mut sorted = all.clone();
        sorted.sort_by(f64::total_cmp);
        let (r, e) = match self.chains_of(name) {
            Ok(chains) => {
                let r = if chains.len() >= 2 { rhat(&chains).unwrap_or(f64::NAN) } else { f64::NAN };
                (r, ess(&chains).unwrap_or(f64::NAN))
            }
            Err(_) => (f64::NAN, f64::NAN),
        };
        Ok(ParamSummary {
            name: name.to_string(),
            mean,
            sd,
            q2_5: stats::quantile_sorted(&sorted, 0.025),
            median: stats::quantile_sorted(&sorted, 0.5),
            q97_5: stats::quantile_sorted(&sorted, 0.975),
            rhat: r,
            ess: e,
            mcse: sd / e.sqrt(),
        })
    }

    pub fn summary(&self) -> Vec<ParamSummary> {
        self.names.iter().map(|n| self.summarize(n).expect("name exists")).collect()
    }

    /// Largest split R-hat over all sampled quantities; NaN values (constant
    /// columns) are ignored.
    pub fn max_rhat(&self) -> f64 {
        if self.n_chains() < 2 {
            return f64::NAN;
        }
        (0..self.names.len())
            .filter_map(|j| {
                let chains: Vec<&[f64]> = self.values.iter().map(|c| c[j].as_slice()).collect();
                rhat(&chains).ok().filter(|r| r.is_finite())
            })
            .fold(f64::NAN, f64::max)
    }

    /// False when any quantity has split R-hat above [`RHAT_THRESHOLD`].
    pub fn converged(&self) -> bool {
        let r = self.max_rhat();
        r.is_nan() || r <= RHAT_THRESHOLD
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        let warmup = self.config.warmup;
        let thin = self.config.thin;
        for (c, chain) in self.values.iter().enumerate() {
            for k in 0..self.draws_per_chain() {
                let mut row = Vec::with_capacity(self.names.len() + 2);
                row.push((c + 1).to_string());
                row.push((warmup + (k + 1) * thin).to_string());
                row.extend(chain.iter().map(|col| col[k].to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// JSON metadata describing the fit.
    pub fn sidecar_json(&self) -> Result<String> {
        let side = Sidecar {
            format_version: DRAWS_FORMAT_VERSION,
            model: self.model.clone(),
            seed: self.config.seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            config: self.config.clone(),
            fixed: self.fixed.clone(),
            chains: self.stats.clone(),
            max_rhat: self.max_rhat(),
            converged: self.converged(),
            summary: self.summary(),
        };
        serde_json::to_string_pretty(&side).map_err(|e| Error::SchemaError(e.to_string()))
    }

    /// Sidecar path for a draws CSV: `draws.csv` maps to `draws.json`.
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the CSV and its JSON sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(csv_path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        let mut j = File::create(Self::sidecar_path(csv_path))?;
        j.write_all(self.sidecar_json()?.as_bytes())?;
        j.write_all(b"\n")?;
        Ok(())
    }

    /// Reads a draws CSV and, when present, its sidecar.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let side_path = Self::sidecar_path(csv_path);
        let side: Option<SidecarHead> = if side_path.exists() {
            let mut s = String::new();
            File::open(&side_path)?.read_to_string(&mut s)?;
            Some(serde_json::from_str(&s).map_err(|e| Error::SchemaError(e.to_string()))?)
        } else {
            None
        };
        let mut draws = Self::read_csv(File::open(csv_path)?)?;
        if let Some(side) = side {
            if side.format_version != DRAWS_FORMAT_VERSION {
                return Err(Error::SchemaError(format!(
                    "unsupported draws format version {}",
                    side.format_version
                )));
            }
            draws.config = side.config;
            draws.fixed = side.fixed;
            draws.stats = side.chains;
            draws.model = side.model;
        }
        Ok(draws)
    }

    /// Parses the CSV layout produced by [`PosteriorDraws::write_csv`]. The
    /// configuration is left at defaults apart from the chain count.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.len() < 3 || &header[0] != "chain" || &header[1] != "iteration" {
            return Err(Error::SchemaError("draws header must start with chain,iteration".into()));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut values: Vec<Vec<Vec<f64>>> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(csv_err)?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::ParseError {
                    line,
                    message: format!("`{s}`: {e}"),
                })
            };
            let chain = parse(&rec[0])? as usize;
            if chain == 0 || chain > values.len() + 1 {
                return Err(Error::ParseError {
                    line,
                    message: format!("unexpected chain index {chain}"),
                });
            }
            if chain == values.len() + 1 {
                values.push(vec![Vec::new(); names.len()]);
            }
            for (j, col) in values[chain - 1].iter_mut().enumerate() {
                col.push(parse(&rec[j + 2])?);
            }
        }
        let config = FitConfig {
            chains: values.len(),
            ..FitConfig::default()
        };
        Ok(Self::new(names, values, Vec::new(), config, Vec::new()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
