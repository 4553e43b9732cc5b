use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{header, load, KernelConfig, KernelSourceKind, LimitConfig, ModelName, SimulateConfig, TestConfig};
use super::{Cli, Command, ExperimentArgs, ExperimentName, KernelArgs, LimitArgs, SimulateArgs, TestArgs};
use crate::distance::{AnalyticDistribution, Normal, SortedSample, Uniform};
use crate::dynsys::{generate_ensemble, simulate_arma, simulate_ma, EnsembleConfig, Observable, PendulumParams};
use crate::error::{Error, Result};
use crate::hac::{estimate_long_run_covariance, HacConfig};
use crate::io::{
    read_ensemble, read_kernel, read_series, write_acvf, write_ensemble, write_kernel, write_series, Metadata,
};
use crate::kernels::{
    arma_acvf, default_grid, ma_acvf, model_grid_covariance, ArmaModel, GridSpec, MaModel, DEFAULT_ARMA_LAGS,
};
use crate::limitlaw::{simulate_limit, LimitEnsemble, LimitMode};
use crate::rng::derive_seed;
use crate::testing::{
    bonferroni_pairwise, one_sample_test, run_experiment, ExperimentSpec, GeneratorSpec, KernelSource, PairDesign,
};

const PENDULUM_BURN_IN: usize = 50_000;
/// Bartlett truncation for pendulum observables, about `n/20`. Velocity
/// indicators stay correlated over thousands of steps at `dt = 1e-3`.
const PENDULUM_LAGS: usize = 2_500;
const PENDULUM_DESK_LAGS: usize = 1_000;

pub(super) fn dispatch(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    let out = c.out.as_path();
    let cfg = c.config.as_deref();
    match &cli.command {
        Command::Simulate(a) => simulate(resolve_simulate(a, cfg, c.seed)?, out),
        Command::Kernel(a) => kernel(resolve_kernel(a, cfg)?, out),
        Command::Limit(a) => limit(resolve_limit(a, cfg, c.seed)?, out),
        Command::Test(a) => test(resolve_test(a, cfg, c.seed)?, out),
        Command::Experiment(a) => experiment(resolve_experiment(a, cfg, c.seed)?, out),
    }
}

fn base<T: Default + serde::de::DeserializeOwned>(cfg: Option<&Path>, command: &str) -> Result<T> {
    match cfg {
        Some(p) => load(p, command),
        None => Ok(T::default()),
    }
}

macro_rules! set {
    ($cfg:expr, $($field:ident <- $value:expr),+ $(,)?) => {
        $(if let Some(v) = $value { $cfg.$field = v; })+
    };
}

fn resolve_simulate(a: &SimulateArgs, cfg: Option<&Path>, seed: Option<u64>) -> Result<SimulateConfig> {
    let mut c: SimulateConfig = base(cfg, "simulate")?;
    set!(c, model <- a.model, n <- a.n, traj <- a.traj, mean <- a.mean, energy <- a.energy,
        steps <- a.steps, dt <- a.dt, seed <- seed);
    if a.burn_in.is_some() {
        c.burn_in = a.burn_in;
    }
    c.burn_in.get_or_insert(match c.model {
        ModelName::Ma3 => 0,
        ModelName::Arma53 => crate::dynsys::DEFAULT_ARMA_BURN_IN,
        ModelName::Pendulum => PENDULUM_BURN_IN,
    });
    Ok(c)
}

fn resolve_kernel(a: &KernelArgs, cfg: Option<&Path>) -> Result<KernelConfig> {
    let mut c: KernelConfig = base(cfg, "kernel")?;
    set!(c, source <- a.source, model <- a.model, mean <- a.mean, grid_size <- a.grid_size,
        tail_trim <- a.tail_trim, burn_in <- a.burn_in);
    if a.lags.is_some() {
        c.lags = a.lags;
    }
    if !a.data.is_empty() {
        c.data = a.data.clone();
    }
    Ok(c)
}

fn resolve_limit(a: &LimitArgs, cfg: Option<&Path>, seed: Option<u64>) -> Result<LimitConfig> {
    let mut c: LimitConfig = base(cfg, "limit")?;
    set!(c, mode <- a.mode, draws <- a.draws, seed <- seed);
    if a.kernel.is_some() {
        c.kernel = a.kernel.clone();
    }
    Ok(c)
}

fn resolve_test(a: &TestArgs, cfg: Option<&Path>, seed: Option<u64>) -> Result<TestConfig> {
    let mut c: TestConfig = base(cfg, "test")?;
    set!(c, mode <- a.mode, alpha <- a.alpha, draws <- a.draws, seed <- seed, pairs <- a.pairs.clone());
    if !a.data.is_empty() {
        c.data = a.data.clone();
    }
    if a.kernel.is_some() {
        c.kernel = a.kernel.clone();
    }
    if a.ensemble.is_some() {
        c.ensemble = a.ensemble.clone();
    }
    if a.target.is_some() {
        c.target = a.target.clone();
    }
    Ok(c)
}

fn default_experiment(name: ExperimentName) -> ExperimentSpec {
    let alphas = vec![0.01, 0.05, 0.10];
    let full_pairs = PairDesign::Cross { per_group: 50 };
    match name {
        ExperimentName::Ma3 => ExperimentSpec::ma3(false, vec![50, 100, 250, 500, 750, 1000], alphas, full_pairs, 0),
        ExperimentName::Arma53 => ExperimentSpec {
            generator: GeneratorSpec::Arma53 {
                means: [0.0, 0.0],
                burn_in: crate::dynsys::DEFAULT_ARMA_BURN_IN,
                acvf_lags: DEFAULT_ARMA_LAGS,
            },
            n_list: vec![1000],
            ..ExperimentSpec::ma3(true, vec![], alphas, full_pairs, 0)
        },
        ExperimentName::Pendulum => ExperimentSpec {
            generator: GeneratorSpec::Pendulum {
                energies: [70.0, 178.0],
                trajectories: 1000,
                burn_in: PENDULUM_BURN_IN,
                dt: 1e-3,
                params: PendulumParams::default(),
                observables: Observable::ALL.to_vec(),
            },
            n_list: vec![50_000],
            kernel: KernelSource::Hac {
                lags: Some(PENDULUM_LAGS),
            },
            ..ExperimentSpec::ma3(true, vec![], alphas, full_pairs, 0)
        },
    }
}

fn name_of(spec: &ExperimentSpec) -> ExperimentName {
    match spec.generator {
        GeneratorSpec::Ma3 { .. } => ExperimentName::Ma3,
        GeneratorSpec::Arma53 { .. } => ExperimentName::Arma53,
        GeneratorSpec::Pendulum { .. } => ExperimentName::Pendulum,
    }
}

fn resolve_experiment(a: &ExperimentArgs, cfg: Option<&Path>, seed: Option<u64>) -> Result<ExperimentSpec> {
    let mut s = match cfg {
        Some(p) => {
            let s: ExperimentSpec = load(p, "experiment")?;
            if name_of(&s) != a.name {
                return Err(Error::invalid("the configuration file describes a different experiment"));
            }
            s
        }
        None => default_experiment(a.name),
    };
    if a.desk_scale {
        match &mut s.generator {
            GeneratorSpec::Pendulum { trajectories, burn_in, .. } => {
                *trajectories = 100;
                *burn_in = 5_000;
                s.n_list = vec![20_000];
                if let KernelSource::Hac { lags } = &mut s.kernel {
                    *lags = Some(PENDULUM_DESK_LAGS);
                }
            }
            _ => s.design = PairDesign::Independent { pairs: 500 },
        }
    }
    match &mut s.generator {
        GeneratorSpec::Ma3 { means } | GeneratorSpec::Arma53 { means, .. } => {
            if a.null {
                means[1] = means[0];
            } else if a.divergent {
                *means = [0.0, 0.5];
            }
        }
        GeneratorSpec::Pendulum {
            trajectories,
            energies,
            burn_in,
            dt,
            observables,
            ..
        } => {
            if a.null || a.divergent {
                return Err(Error::invalid("pendulum experiments always report both cases"));
            }
            *trajectories = a.trajectories.unwrap_or(*trajectories);
            *burn_in = a.burn_in.unwrap_or(*burn_in);
            *dt = a.dt.unwrap_or(*dt);
            if let Some(o) = &a.observables {
                *observables = o.clone();
            }
            if let Some(e) = &a.energies {
                *energies = <[f64; 2]>::try_from(e.as_slice())
                    .map_err(|_| Error::invalid("--energies takes exactly two values"))?;
            }
        }
    }
    if let GeneratorSpec::Arma53 { burn_in, .. } = &mut s.generator {
        *burn_in = a.burn_in.unwrap_or(*burn_in);
    }
    set!(s, n_list <- a.n.clone(), alphas <- a.alphas.clone(), draws <- a.draws, bins <- a.bins, seed <- seed);
    if let Some(p) = a.pairs {
        s.design = PairDesign::Independent { pairs: p };
    }
    if let Some(g) = a.per_group {
        s.design = PairDesign::Cross { per_group: g };
    }
    if let Some(j) = a.grid_size {
        s.grid.size = j;
    }
    if let Some(k) = &a.kernel {
        s.kernel = match k.as_str() {
            "model" => KernelSource::Model,
            "hac" => KernelSource::Hac { lags: None },
            path => KernelSource::File { path: PathBuf::from(path) },
        };
    }
    if let (Some(l), KernelSource::Hac { lags }) = (a.lags, &mut s.kernel) {
        *lags = Some(l);
    }
    Ok(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_text(path: &Path, meta: &Metadata, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = String::new();
    for (k, v) in meta.entries() {
        text.push_str(&format!("# {k}={v}\n"));
    }
    text.push_str(body);
    fs::write(path, text)?;
    Ok(())
}

fn simulate(c: SimulateConfig, out: &Path) -> Result<()> {
    let burn_in = c.burn_in.expect("resolved");
    let meta = header("simulate", &c)?;
    match c.model {
        ModelName::Ma3 | ModelName::Arma53 => {
            if c.n == 0 || c.traj == 0 {
                return Err(Error::invalid("n and traj must be positive"));
            }
            let arma = match c.model {
                ModelName::Ma3 => ArmaModel::from_ma(&MaModel::ma3(c.mean)),
                _ => ArmaModel::arma53(c.mean),
            };
            let series: Vec<Vec<f64>> = (0..c.traj)
                .into_par_iter()
                .map(|m| {
                    let seed = derive_seed(c.seed, m as u64);
                    if c.model == ModelName::Ma3 {
                        Ok(simulate_ma(&MaModel::ma3(c.mean), c.n, burn_in, seed))
                    } else {
                        simulate_arma(&arma, c.n, burn_in, seed)
                    }
                })
                .collect::<Result<_>>()?;
            let meta = meta.with("model", format!("{:?}", c.model).to_lowercase());
            write_series(&out.join("series.csv"), &meta, &series)
        }
        ModelName::Pendulum => {
            let cfg = EnsembleConfig {
                energy: c.energy,
                n_traj: c.traj,
                n_steps: c.steps,
                dt: c.dt,
                burn_in,
                record: Observable::ALL.to_vec(),
                seed: c.seed,
            };
            for (obs, series) in generate_ensemble(&cfg, &c.params)? {
                let meta = meta
                    .clone()
                    .with("model", "pendulum")
                    .with("observable", obs)
                    .with("energy", c.energy)
                    .with("dt", c.dt)
                    .with("burn_in", burn_in)
                    .with("seed", c.seed);
                write_series(&out.join(format!("{obs}.csv")), &meta, &series)?;
            }
            Ok(())
        }
    }
}

fn load_series(paths: &[PathBuf]) -> Result<(Vec<Metadata>, Vec<Vec<f64>>)> {
    if paths.is_empty() {
        return Err(Error::invalid("no --data files given"));
    }
    let mut metas = Vec::new();
    let mut all = Vec::new();
    for p in paths {
        let (m, s) = read_series(p)?;
        metas.push(m);
        all.extend(s);
    }
    Ok((metas, all))
}

/// HAC needs time-ordered data: refuse files flagged as sorted and data
/// in which every series is monotone.
fn check_time_order(metas: &[Metadata], series: &[Vec<f64>]) -> Result<()> {
    if metas.iter().any(|m| m.get("order") == Some("sorted")) {
        return Err(Error::invalid("HAC estimation needs time-ordered series, got sorted data"));
    }
    let monotone = |s: &Vec<f64>| s.len() >= 3 && s.windows(2).all(|w| w[0] <= w[1]) && s[0] < s[s.len() - 1];
    if series.iter().all(monotone) {
        return Err(Error::invalid("every series is sorted by value; HAC estimation needs time order"));
    }
    Ok(())
}

fn kernel(c: KernelConfig, out: &Path) -> Result<()> {
    let grid_spec = GridSpec {
        size: c.grid_size,
        tail_trim: c.tail_trim,
    };
    let meta = header("kernel", &c)?;
    match c.source {
        KernelSourceKind::Model => {
            let acvf = match c.model {
                ModelName::Ma3 => {
                    let m = MaModel::ma3(c.mean);
                    ma_acvf(&m, c.lags.unwrap_or(m.order()))?
                }
                ModelName::Arma53 => arma_acvf(&ArmaModel::arma53(c.mean), c.lags.unwrap_or(DEFAULT_ARMA_LAGS))?,
                ModelName::Pendulum => {
                    return Err(Error::invalid("the pendulum has no model kernel; use --source hac"));
                }
            };
            let target = Normal::new(acvf.mean(), acvf.variance().sqrt())?;
            let grid = default_grid(&target, grid_spec)?;
            let cov = model_grid_covariance(&acvf, &grid)?;
            let meta = meta.with("source", "model").with("lags", acvf.max_lag());
            write_kernel(&out.join("kernel.csv"), &meta, &cov)?;
            write_acvf(&out.join("acvf.csv"), &meta, &acvf)
        }
        KernelSourceKind::Hac => {
            let (metas, series) = load_series(&c.data)?;
            check_time_order(&metas, &series)?;
            let cfg = HacConfig {
                lags: c.lags,
                grid: grid_spec,
                burn_in: c.burn_in,
            };
            let cov = estimate_long_run_covariance(&series, &cfg)?;
            let n = series[0].len().saturating_sub(c.burn_in);
            let meta = meta.with("source", "hac").with("lags", cfg.effective_lags(n));
            write_kernel(&out.join("kernel.csv"), &meta, &cov)
        }
    }
}

fn limit(c: LimitConfig, out: &Path) -> Result<()> {
    let path = c.kernel.as_ref().ok_or_else(|| Error::invalid("--kernel is required"))?;
    let (_, cov) = read_kernel(path)?;
    let ens = simulate_limit(&cov, c.mode, c.draws, c.seed)?;
    write_ensemble(&out.join("ensemble.csv"), &header("limit", &c)?, &ens)
}

fn parse_target(s: &str) -> Result<Box<dyn AnalyticDistribution>> {
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    let v = crate::io::parse_list(args)?;
    match (kind, v.as_slice()) {
        ("normal", [m, sd]) => Ok(Box::new(Normal::new(*m, *sd)?)),
        ("normal", []) => Ok(Box::new(Normal::standard())),
        ("uniform", [lo, hi]) => Ok(Box::new(Uniform::new(*lo, *hi)?)),
        _ => Err(Error::invalid(format!("unknown target '{s}'; use normal:MEAN,SD or uniform:LO,HI"))),
    }
}

fn test_ensemble(c: &TestConfig) -> Result<LimitEnsemble> {
    let ens = match (&c.ensemble, &c.kernel) {
        (Some(p), _) => read_ensemble(p)?.1,
        (None, Some(p)) => simulate_limit(&read_kernel(p)?.1, c.mode, c.draws, c.seed)?,
        (None, None) => return Err(Error::invalid("either --kernel or --ensemble is required")),
    };
    if ens.mode() != c.mode {
        return Err(Error::invalid(format!("the ensemble is {} but the test is {}", ens.mode(), c.mode)));
    }
    Ok(ens)
}

fn test(c: TestConfig, out: &Path) -> Result<()> {
    let (_, series) = load_series(&c.data)?;
    let ens = test_ensemble(&c)?;
    let doc = match c.mode {
        LimitMode::Pairwise => {
            let sorted: Vec<SortedSample> = series.into_iter().map(SortedSample::new).collect::<Result<_>>()?;
            let report = bonferroni_pairwise(&sorted, &c.pairs, &ens, c.alpha)?;
            json!({
                "command": "test",
                "config": c,
                "family_alpha": report.family_alpha,
                "bonferroni_alpha": report.bonferroni_alpha,
                "rejections": report.rejections(),
                "results": report.pair_indices.iter().zip(&report.results)
                    .map(|(p, r)| json!({"pair": p, "result": r}))
                    .collect::<Vec<_>>(),
            })
        }
        LimitMode::OneSample => {
            let target = parse_target(c.target.as_deref().ok_or_else(|| Error::invalid("--target is required"))?)?;
            let results = series
                .into_iter()
                .map(|s| one_sample_test(&SortedSample::new(s)?, target.as_ref(), &ens, c.alpha))
                .collect::<Result<Vec<_>>>()?;
            json!({
                "command": "test",
                "config": c,
                "results": results.iter().enumerate()
                    .map(|(i, r)| json!({"series": i, "result": r}))
                    .collect::<Vec<_>>(),
            })
        }
    };
    write_json(&out.join("result.json"), &doc)
}

fn experiment(s: ExperimentSpec, out: &Path) -> Result<()> {
    let outcome = run_experiment(&s)?;
    let meta = header("experiment", &s)?;
    write_text(&out.join("table.csv"), &meta, &outcome.table_csv())?;
    write_text(&out.join("histograms.csv"), &meta, &outcome.histograms_csv())?;
    write_json(
        &out.join("result.json"),
        &json!({
            "command": "experiment",
            "config": s,
            "cells": outcome.cells,
            "notes": outcome.notes,
        }),
    )
}
