use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hbcombine::bbm::{self, fit_bbm_with, BbmOptions, SigmaSMode};
use hbcombine::classical::{self, Estimate, Method, TrimOptions, WeightMode, WeightVector};
use hbcombine::data::{load_csv_with, CsvOptions, Dataset};
use hbcombine::mcmc::{FitConfig, PosteriorDraws};
use hbcombine::ppc::ppc_pvalue;
use hbcombine::rng::DEFAULT_SEED;
use hbcombine::simulation::run_study;
use hbcombine::ubm::{self, fit_ubm_with, UbmOptions};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::scenario;

/// Version stamped on every JSON document the CLI emits.
pub const OUTPUT_VERSION: u32 = 1;

pub fn run(cli: &Cli) -> CliResult<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Estimate(a) => estimate(cli, a, seed),
        Command::FitUbm(a) => fit_ubm_cmd(cli, a, seed),
        Command::FitBbm(a) => fit_bbm_cmd(cli, a, seed),
        Command::Ppc(a) => ppc(cli, a, seed),
        Command::Simulate(a) => simulate(cli, a),
        Command::Weights(a) => weights(cli, a),
    }
}

fn load_data(a: &DataArgs) -> CliResult<Dataset> {
    Ok(load_csv_with(
        &a.data,
        CsvOptions {
            add_intercept: !a.no_intercept,
        },
    )?)
}

fn write_primary(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn envelope(schema: &str, body: Value) -> String {
    let mut v = json!({ "schema": schema, "version": OUTPUT_VERSION });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
    s.push('\n');
    s
}

fn csv_table<S: AsRef<str>>(header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r.iter().map(AsRef::as_ref)).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn num(x: f64) -> String {
    x.to_string()
}

// ---------------------------------------------------------------- estimate

#[derive(Serialize)]
struct EstimateRow {
    method: Method,
    parameter: String,
    estimate: f64,
    se: Option<f64>,
    ci_low: f64,
    ci_high: f64,
}

fn estimate(cli: &Cli, a: &EstimateArgs, seed: u64) -> CliResult<()> {
    let data = load_data(&a.data)?;
    if a.covariates && !data.has_covariates() {
        return Err(hbcombine::Error::MissingCovariates.into());
    }
    let methods: Vec<Method> = if a.method.eq_ignore_ascii_case("all") {
        if a.covariates {
            vec![Method::Lr, Method::Wlr, Method::Twlr]
        } else {
            vec![Method::Raw, Method::Weighted, Method::Trimmed]
        }
    } else {
        let m: Method = a.method.parse()?;
        if matches!(m, Method::Ubm | Method::Bbm) {
            return Err(CliError::Usage(format!("`{m}` is fitted with fit-{m}")));
        }
        vec![m]
    };
    let trim = TrimOptions {
        trim_factor: a.trim_factor,
        bootstrap_b: a.bootstrap,
        seed,
    };
    let mut rows = Vec::new();
    let mut weight_rows: Vec<(Method, WeightVector)> = Vec::new();
    for m in methods {
        let (est, w): (Vec<Estimate>, Option<WeightVector>) = match m {
            Method::Raw => (vec![classical::raw_mean(&data)?], None),
            Method::Weighted => {
                let (e, w) = classical::weighted_mean(&data)?;
                (vec![e], Some(w))
            }
            Method::Trimmed => {
                let (e, w) = classical::trimmed_weighted_mean(&data, &trim)?;
                (vec![e], Some(w))
            }
            Method::Lr | Method::Wlr | Method::Twlr => {
                let mode = match m {
                    Method::Lr => WeightMode::Unweighted,
                    Method::Wlr => WeightMode::InverseVariance,
                    _ => WeightMode::Trimmed,
                };
                let (e, w) = classical::linear_fit(&data, mode, &trim)?;
                (e, (m != Method::Lr).then_some(w))
            }
            Method::Ubm | Method::Bbm => unreachable!("rejected above"),
        };
        let regression = matches!(m, Method::Lr | Method::Wlr | Method::Twlr);
        for (j, e) in est.into_iter().enumerate() {
            rows.push(EstimateRow {
                method: m,
                parameter: if regression { format!("beta[{j}]") } else { "mu".into() },
                estimate: e.point,
                se: e.se,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
            });
        }
        if let Some(w) = w {
            check_weights(&w)?;
            weight_rows.push((m, w));
        }
    }
    if let Some(path) = &a.weights_out {
        let text = csv_table(
            &["method", "source_id", "weight", "lambda"],
            weight_rows.iter().flat_map(|(m, w)| {
                data.observations().iter().enumerate().map(move |(i, o)| {
                    vec![m.to_string(), o.source_id.clone(), num(w.weights[i]), num(w.standardized[i])]
                })
            }),
        );
        fs::write(path, text)?;
    }
    let text = match cli.format {
        Format::Json => envelope("hbcombine/estimate", json!({ "rows": rows })),
        Format::Csv => csv_table(
            &["method", "parameter", "estimate", "se", "ci_low", "ci_high"],
            rows.iter().map(|r| {
                vec![
                    r.method.to_string(),
                    r.parameter.clone(),
                    num(r.estimate),
                    r.se.map(num).unwrap_or_default(),
                    num(r.ci_low),
                    num(r.ci_high),
                ]
            }),
        ),
    };
    write_primary(cli.out.as_deref(), &text)
}

fn check_weights(w: &WeightVector) -> CliResult<()> {
    let total: f64 = w.standardized.iter().sum();
    if (total - 1.0).abs() > 1e-10 || w.standardized.iter().any(|l| !l.is_finite()) {
        return Err(CliError::Internal(format!("standardized weights sum to {total}")));
    }
    Ok(())
}

// --------------------------------------------------------------------- fit

fn fit_config(a: &FitArgs, base: FitConfig, seed: u64) -> CliResult<FitConfig> {
    let mut c = if a.fast { FitConfig::fast() } else { base };
    c.seed = seed;
    if let Some(v) = a.chains {
        c.chains = v;
    }
    if let Some(v) = a.iter {
        c.iterations = v;
    }
    if let Some(v) = a.warmup {
        c.warmup = v;
    }
    if let Some(v) = a.thin {
        c.thin = v;
    }
    if let Some(v) = a.target_accept {
        c.target_accept = v;
    }
    if let Some(v) = a.max_tree_depth {
        c.max_tree_depth = v;
    }
    for p in &a.priors {
        let (name, value) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--prior expects NAME=VALUE, got `{p}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--prior {name}: `{value}` is not a number")))?;
        c.priors.set(name.trim(), value)?;
    }
    c.check()?;
    Ok(c)
}

fn draws_path(cli: &Cli) -> CliResult<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| CliError::Usage("fit commands need --out <draws.csv>".into()))
}

fn report_fit(cli: &Cli, draws: &PosteriorDraws, path: &Path) -> CliResult<()> {
    draws.save(path)?;
    let summary = draws.summary();
    let text = match cli.format {
        Format::Json => envelope(
            "hbcombine/fit",
            json!({
                "model": draws.model(),
                "seed": draws.config().seed,
                "draws_file": path.display().to_string(),
                "chains": draws.n_chains(),
                "draws_per_chain": draws.draws_per_chain(),
                "total_draws": draws.total_draws(),
                "divergences": draws.total_divergences(),
                "max_rhat": draws.max_rhat(),
                "converged": draws.converged(),
                "status": if draws.converged() { "ok" } else { "not_converged" },
                "parameters": summary,
            }),
        ),
        Format::Csv => csv_table(
            &["name", "mean", "sd", "q2_5", "median", "q97_5", "rhat", "ess", "mcse"],
            summary.iter().map(|s| {
                vec![
                    s.name.clone(),
                    num(s.mean),
                    num(s.sd),
                    num(s.q2_5),
                    num(s.median),
                    num(s.q97_5),
                    num(s.rhat),
                    num(s.ess),
                    num(s.mcse),
                ]
            }),
        ),
    };
    if !draws.converged() {
        eprintln!(
            "warning: not converged (max R-hat {:.3}); see the summary before using these draws",
            draws.max_rhat()
        );
    }
    std::io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn fit_ubm_cmd(cli: &Cli, a: &FitUbmArgs, seed: u64) -> CliResult<()> {
    let path = draws_path(cli)?;
    let data = load_data(&a.data)?;
    let config = fit_config(&a.fit, FitConfig::default(), seed)?;
    let draws = fit_ubm_with(&data, &config, UbmOptions { fixed_tau: a.fix_tau })?;
    report_fit(cli, &draws, &path)
}

fn fit_bbm_cmd(cli: &Cli, a: &FitBbmArgs, seed: u64) -> CliResult<()> {
    let path = draws_path(cli)?;
    let data = load_data(&a.data)?;
    let config = fit_config(&a.fit, FitConfig::default(), seed)?;
    let sigma_s = match a.fix_sigma_s.as_deref() {
        None => SigmaSMode::Sampled,
        Some(v) if v.eq_ignore_ascii_case("empirical") => SigmaSMode::Empirical,
        Some(v) => SigmaSMode::Fixed(v.parse().map_err(|_| {
            CliError::Usage(format!("--fix-sigma-s expects `empirical` or a number, got `{v}`"))
        })?),
    };
    let draws = fit_bbm_with(&data, &config, BbmOptions { sigma_s })?;
    report_fit(cli, &draws, &path)
}

// --------------------------------------------------------------------- ppc

fn load_draws(path: &Path, expected: &str) -> CliResult<PosteriorDraws> {
    let draws = PosteriorDraws::load(path)?;
    match draws.model() {
        Some(m) if m != expected => Err(CliError::Usage(format!(
            "{} holds `{m}` draws; `{expected}` draws are required",
            path.display()
        ))),
        _ => Ok(draws),
    }
}

fn ppc(cli: &Cli, a: &PpcArgs, seed: u64) -> CliResult<()> {
    let data = load_data(&a.data)?;
    let draws = load_draws(&a.draws, "bbm")?;
    let res = ppc_pvalue(&data, &draws, seed)?;
    if let Some(p) = &a.pairs_out {
        let mut buf = Vec::new();
        res.write_pairs_csv(&mut buf)?;
        fs::write(p, buf)?;
    }
    let text = match cli.format {
        Format::Json => envelope("hbcombine/ppc", json!({ "p_value": res.p_value, "n_draws": res.n_draws })),
        Format::Csv => csv_table(&["p_value", "n_draws"], [vec![num(res.p_value), res.n_draws.to_string()]]),
    };
    write_primary(cli.out.as_deref(), &text)
}

// ---------------------------------------------------------------- simulate

fn simulate(cli: &Cli, a: &SimulateArgs) -> CliResult<()> {
    let mut study = scenario::load(&a.scenarios)?;
    for s in &mut study.scenarios {
        if let Some(seed) = cli.seed {
            s.seed = seed;
        }
        if a.full_scale {
            s.n_reps = 500;
        }
        if let Some(r) = a.reps {
            s.n_reps = r;
        }
    }
    let config = fit_config(&a.fit, FitConfig::default(), cli.seed.unwrap_or(DEFAULT_SEED))?;
    let out = run_study(&study.scenarios, &study.methods, &config)?;
    if let Some(p) = &a.records_out {
        let mut buf = Vec::new();
        out.write_records_csv(&mut buf)?;
        fs::write(p, buf)?;
    }
    for f in &out.failures {
        eprintln!("warning: {} rep {} {}: {}", f.scenario, f.rep, f.method, f.message);
    }
    let text = match cli.format {
        Format::Json => envelope(
            "hbcombine/simulate",
            json!({ "rows": out.metrics.rows, "failures": out.failures }),
        ),
        Format::Csv => {
            let mut buf = Vec::new();
            out.metrics.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("utf-8 csv")
        }
    };
    write_primary(cli.out.as_deref(), &text)
}

// ----------------------------------------------------------------- weights

fn weights(cli: &Cli, a: &WeightsArgs) -> CliResult<()> {
    let data = load_data(&a.data)?;
    let method: Method = a.method.parse()?;
    let need_draws = || {
        a.draws
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{method} weights need --draws <draws.csv>")))
    };
    let w = match method {
        Method::Weighted => classical::weighted_mean(&data)?.1,
        Method::Trimmed => WeightVector::new(classical::trimmed_weights(&data.s(), a.trim_factor)),
        Method::Ubm => ubm::ubm_weights(&data, &load_draws(need_draws()?, "ubm")?)?,
        Method::Bbm => bbm::bbm_weights(&data, &load_draws(need_draws()?, "bbm")?)?,
        other => return Err(CliError::Usage(format!("no weights for method `{other}`"))),
    };
    check_weights(&w)?;
    let text = match cli.format {
        Format::Json => {
            let rows: Vec<Value> = data
                .observations()
                .iter()
                .enumerate()
                .map(|(i, o)| json!({ "source_id": o.source_id, "weight": w.weights[i], "lambda": w.standardized[i] }))
                .collect();
            envelope("hbcombine/weights", json!({ "method": method, "rows": rows }))
        }
        Format::Csv => csv_table(
            &["source_id", "weight", "lambda"],
            data.observations()
                .iter()
                .enumerate()
                .map(|(i, o)| vec![o.source_id.clone(), num(w.weights[i]), num(w.standardized[i])]),
        ),
    };
    write_primary(cli.out.as_deref(), &text)
}
