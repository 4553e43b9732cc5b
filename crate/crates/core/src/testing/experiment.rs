//! Rejection-rate experiments over many trajectory pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{scaled_statistic, w1_empirical, Normal, SortedSample};
use crate::dynsys::{
    generate_ensemble, simulate_arma, simulate_ma, EnsembleConfig, Observable, PendulumParams,
};
use crate::error::{Error, Result};
use crate::hac::{default_bandwidth, estimate_long_run_covariance, estimate_long_run_covariance_on_grid, HacConfig};
use crate::io::read_kernel;
use crate::kernels::{
    arma_acvf, default_grid, ma_acvf, model_grid_covariance, AcvfSequence, ArmaModel, GridCovariance, GridSpec,
    MaModel, DEFAULT_ARMA_LAGS,
};
use crate::limitlaw::{simulate_limit, LimitEnsemble, LimitMode, DEFAULT_DRAWS};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// MA(3) reference model; group `g` has mean `means[g]`.
    Ma3 { means: [f64; 2] },
    /// ARMA(5,3) reference model.
    Arma53 {
        means: [f64; 2],
        #[serde(default = "default_arma_burn_in")]
        burn_in: usize,
        #[serde(default = "default_acvf_lags")]
        acvf_lags: usize,
    },
    /// Two constant-energy double-pendulum ensembles. `n` counts recorded
    /// steps after the burn-in.
    Pendulum {
        energies: [f64; 2],
        trajectories: usize,
        burn_in: usize,
        dt: f64,
        #[serde(default)]
        params: PendulumParams,
        observables: Vec<Observable>,
    },
}

fn default_arma_burn_in() -> usize {
    crate::dynsys::DEFAULT_ARMA_BURN_IN
}

fn default_acvf_lags() -> usize {
    DEFAULT_ARMA_LAGS
}

/// How pairs are formed for the linear generators. The pendulum always
/// uses within-energy pairs (convergent) and cross-energy pairs (divergent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PairDesign {
    /// Each pair is a fresh (group 0, group 1) couple of trajectories.
    Independent { pairs: usize },
    /// `per_group` trajectories per group and all cross-group pairs.
    Cross { per_group: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSource {
    /// Closed-form kernel of the generating model (linear generators only).
    Model,
    /// Newey–West estimate from the generated trajectories.
    Hac { lags: Option<usize> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub generator: GeneratorSpec,
    pub n_list: Vec<usize>,
    pub alphas: Vec<f64>,
    pub design: PairDesign,
    pub kernel: KernelSource,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_draws")]
    pub draws: usize,
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_draws() -> usize {
    DEFAULT_DRAWS
}

fn default_bins() -> usize {
    50
}

impl ExperimentSpec {
    /// The MA(3) power study: means 0 and 0.5, or both 0 for the null.
    pub fn ma3(null: bool, n_list: Vec<usize>, alphas: Vec<f64>, design: PairDesign, seed: u64) -> Self {
        Self {
            generator: GeneratorSpec::Ma3 {
                means: [0.0, if null { 0.0 } else { 0.5 }],
            },
            n_list,
            alphas,
            design,
            kernel: KernelSource::Model,
            grid: GridSpec::default(),
            draws: DEFAULT_DRAWS,
            seed,
            bins: default_bins(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return Err(Error::invalid("n_list must hold sample sizes of at least 2"));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::invalid("alphas must lie in (0, 1)"));
        }
        if self.draws == 0 || self.bins == 0 {
            return Err(Error::invalid("draws and bins must be positive"));
        }
        match self.design {
            PairDesign::Independent { pairs: 0 } | PairDesign::Cross { per_group: 0 } => {
                return Err(Error::invalid("the pair design is empty"))
            }
            _ => {}
        }
        if let GeneratorSpec::Pendulum { trajectories, observables, .. } = &self.generator {
            if *trajectories < 2 || observables.is_empty() {
                return Err(Error::invalid("pendulum runs need at least 2 trajectories and one observable"));
            }
            if self.kernel == KernelSource::Model {
                return Err(Error::invalid("the pendulum has no closed-form kernel; use hac or file"));
            }
        }
        Ok(())
    }
}

/// Rejections out of `pairs` for one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub case: String,
    pub observable: String,
    pub n: usize,
    pub alpha: f64,
    pub rejections: usize,
    pub pairs: usize,
}

impl Cell {
    pub fn rate(&self) -> f64 {
        self.rejections as f64 / self.pairs as f64
    }
}

/// Common-bin counts of scaled statistics and limit draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub case: String,
    pub observable: String,
    pub n: usize,
    pub edges: Vec<f64>,
    pub statistic_counts: Vec<u64>,
    pub limit_counts: Vec<u64>,
}

impl Histogram {
    fn build(case: &str, observable: &str, n: usize, stats: &[f64], draws: &[f64], bins: usize) -> Self {
        let top = stats.iter().chain(draws).fold(0.0_f64, |m, v| m.max(*v));
        let width = if top > 0.0 { top / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|b| b as f64 * width).collect();
        let count = |xs: &[f64]| {
            let mut c = vec![0u64; bins];
            for x in xs {
                let b = ((x / width) as usize).min(bins - 1);
                c[b] += 1;
            }
            c
        };
        Self {
            case: case.into(),
            observable: observable.into(),
            n,
            edges,
            statistic_counts: count(stats),
            limit_counts: count(draws),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub cells: Vec<Cell>,
    pub histograms: Vec<Histogram>,
    pub notes: Vec<String>,
}

impl ExperimentOutcome {
    pub fn cell(&self, case: &str, observable: &str, n: usize, alpha: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.case == case && c.observable == observable && c.n == n && c.alpha == alpha)
    }

    /// Rejection rates in percent, one row per (case, observable, n) and
    /// one column per level.
    pub fn table_csv(&self) -> String {
        let mut alphas: Vec<f64> = Vec::new();
        let mut rows: BTreeMap<(String, String, usize), Vec<Option<f64>>> = BTreeMap::new();
        let mut order: Vec<(String, String, usize)> = Vec::new();
        for c in &self.cells {
            if !alphas.contains(&c.alpha) {
                alphas.push(c.alpha);
            }
        }
        for c in &self.cells {
            let key = (c.case.clone(), c.observable.clone(), c.n);
            let slot = rows.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                vec![None; alphas.len()]
            });
            let a = alphas.iter().position(|a| *a == c.alpha).unwrap();
            slot[a] = Some(100.0 * c.rate());
        }
        let mut out = String::from("case,observable,n");
        for a in &alphas {
            let _ = write!(out, ",alpha={a}");
        }
        out.push('\n');
        for key in order {
            let _ = write!(out, "{},{},{}", key.0, key.1, key.2);
            for v in &rows[&key] {
                match v {
                    Some(v) => {
                        let _ = write!(out, ",{v:.4}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn histograms_csv(&self) -> String {
        let mut out = String::from("case,observable,n,bin_lo,bin_hi,statistic_count,limit_count\n");
        for h in &self.histograms {
            for b in 0..h.statistic_counts.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:?},{:?},{},{}",
                    h.case,
                    h.observable,
                    h.n,
                    h.edges[b],
                    h.edges[b + 1],
                    h.statistic_counts[b],
                    h.limit_counts[b]
                );
            }
        }
        out
    }
}

/// Runs the experiment. Every random quantity derives from `spec.seed`, and
/// per-pair work is reduced in index order, so the outcome does not depend
/// on the worker count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    match &spec.generator {
        GeneratorSpec::Pendulum { .. } => run_pendulum(spec),
        _ => run_linear(spec),
    }
}

enum Linear {
    Ma(MaModel, MaModel),
    Arma(ArmaModel, ArmaModel, usize),
}

impl Linear {
    fn generate(&self, group: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            Linear::Ma(a, b) => Ok(simulate_ma(if group == 0 { a } else { b }, n, 0, seed)),
            Linear::Arma(a, b, burn) => simulate_arma(if group == 0 { a } else { b }, n, *burn, seed),
        }
    }

    fn acvf(&self, lags: usize) -> Result<AcvfSequence> {
        match self {
            Linear::Ma(a, _) => ma_acvf(a, a.order()),
            Linear::Arma(a, _, _) => arma_acvf(a, lags),
        }
    }
}

fn case_name(same: bool) -> &'static str {
    if same {
        "convergent"
    } else {
        "divergent"
    }
}

const ENSEMBLE_TAG: u64 = 0xE45E_4B1E;

fn ensemble_for(cov: &GridCovariance, spec: &ExperimentSpec, tag: u64) -> Result<LimitEnsemble> {
    simulate_limit(cov, LimitMode::Pairwise, spec.draws, derive_seed(spec.seed, ENSEMBLE_TAG ^ tag))
}

/// `stats` holds equal-sized runs, one per ensemble in `ens`.
fn tally(case: &str, observable: &str, n: usize, stats: &[f64], ens: &[&LimitEnsemble], spec: &ExperimentSpec) -> Vec<Cell> {
    let chunk = stats.len() / ens.len();
    spec.alphas
        .iter()
        .map(|&alpha| {
            let mut rejections = 0;
            for (e, part) in ens.iter().zip(stats.chunks(chunk)) {
                let q = e.quantile(1.0 - alpha);
                rejections += part.iter().filter(|&&t| t > q).count();
            }
            Cell {
                case: case.into(),
                observable: observable.into(),
                n,
                alpha,
                rejections,
                pairs: stats.len(),
            }
        })
        .collect()
}

fn run_linear(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let (gen, lags) = match &spec.generator {
        GeneratorSpec::Ma3 { means } => (Linear::Ma(MaModel::ma3(means[0]), MaModel::ma3(means[1])), 3),
        GeneratorSpec::Arma53 {
            means,
            burn_in,
            acvf_lags,
        } => (
            Linear::Arma(ArmaModel::arma53(means[0]), ArmaModel::arma53(means[1]), *burn_in),
            *acvf_lags,
        ),
        GeneratorSpec::Pendulum { .. } => unreachable!(),
    };
    let means = match &spec.generator {
        GeneratorSpec::Ma3 { means } | GeneratorSpec::Arma53 { means, .. } => *means,
        GeneratorSpec::Pendulum { .. } => unreachable!(),
    };
    let case = case_name(means[0] == means[1]);
    let mut notes = Vec::new();

    let fixed = match &spec.kernel {
        KernelSource::Model => {
            let acvf = gen.acvf(lags)?;
            let target = Normal::new(acvf.mean(), acvf.variance().sqrt())?;
            let grid = default_grid(&target, spec.grid)?;
            notes.push(format!("model kernel on {} grid points, {} acvf lags", grid.len(), acvf.max_lag()));
            Some(model_grid_covariance(&acvf, &grid)?)
        }
        KernelSource::File { path } => {
            notes.push(format!("kernel read from {}", path.display()));
            Some(read_kernel(path)?.1)
        }
        KernelSource::Hac { .. } => None,
    };
    let fixed_ens = fixed.as_ref().map(|c| ensemble_for(c, spec, 0)).transpose()?;

    let (groups, pairs): (Vec<usize>, Vec<(usize, usize)>) = match spec.design {
        PairDesign::Independent { pairs } => (
            (0..2 * pairs).map(|i| i % 2).collect(),
            (0..pairs).map(|p| (2 * p, 2 * p + 1)).collect(),
        ),
        PairDesign::Cross { per_group } => (
            (0..2 * per_group).map(|i| i / per_group).collect(),
            (0..per_group)
                .flat_map(|i| (0..per_group).map(move |j| (i, per_group + j)))
                .collect(),
        ),
    };

    let mut cells = Vec::new();
    let mut histograms = Vec::new();
    for &n in &spec.n_list {
        let seed_n = derive_seed(spec.seed, n as u64);
        let raw: Vec<Vec<f64>> = groups
            .par_iter()
            .enumerate()
            .map(|(i, &g)| gen.generate(g, n, derive_seed(seed_n, i as u64)))
            .collect::<Result<_>>()?;
        let own_ens;
        let ens = match (&spec.kernel, &fixed_ens) {
            (KernelSource::Hac { lags }, _) => {
                let cfg = HacConfig {
                    lags: *lags,
                    grid: spec.grid,
                    burn_in: 0,
                };
                let cov = estimate_long_run_covariance(&raw, &cfg)?;
                notes.push(format!(
                    "n={n}: hac kernel with L={}, psd_repaired={}",
                    cfg.effective_lags(n),
                    cov.psd_repaired()
                ));
                own_ens = ensemble_for(&cov, spec, n as u64)?;
                &own_ens
            }
            (_, Some(e)) => e,
            _ => unreachable!(),
        };
        let sorted: Vec<SortedSample> = raw.into_par_iter().map(SortedSample::new).collect::<Result<_>>()?;
        let stats = pair_statistics(&sorted, &pairs, n);
        cells.extend(tally(case, "x", n, &stats, &[ens], spec));
        histograms.push(Histogram::build(case, "x", n, &stats, ens.draws(), spec.bins));
    }
    Ok(ExperimentOutcome {
        cells,
        histograms,
        notes,
    })
}

fn pair_statistics(sorted: &[SortedSample], pairs: &[(usize, usize)], n: usize) -> Vec<f64> {
    pairs
        .par_iter()
        .map(|&(i, j)| scaled_statistic(w1_empirical(&sorted[i], &sorted[j]), n))
        .collect()
}

fn run_pendulum(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let GeneratorSpec::Pendulum {
        energies,
        trajectories,
        burn_in,
        dt,
        params,
        observables,
    } = &spec.generator
    else {
        unreachable!()
    };
    let m = *trajectories;
    let file_cov = match &spec.kernel {
        KernelSource::File { path } => Some(read_kernel(path)?.1),
        _ => None,
    };
    let lags = match &spec.kernel {
        KernelSource::Hac { lags } => *lags,
        _ => None,
    };
    let mut cells = Vec::new();
    let mut histograms = Vec::new();
    let mut notes = Vec::new();
    let within: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let cross: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..m).map(move |j| (i, m + j))).collect();

    for &n in &spec.n_list {
        let mut per_energy = Vec::new();
        for (e, &energy) in energies.iter().enumerate() {
            let cfg = EnsembleConfig {
                energy,
                n_traj: m,
                n_steps: burn_in + n,
                dt: *dt,
                burn_in: *burn_in,
                record: observables.clone(),
                seed: derive_seed(spec.seed, e as u64),
            };
            per_energy.push(generate_ensemble(&cfg, params)?);
        }
        for (k, &obs) in observables.iter().enumerate() {
            let name = obs.to_string();
            let (a, b) = (&per_energy[0][k].1, &per_energy[1][k].1);
            let union: Vec<&Vec<f64>> = a.iter().chain(b.iter()).collect();
            let sorted: Vec<SortedSample> = union
                .par_iter()
                .map(|s| SortedSample::from_slice(s))
                .collect::<Result<_>>()?;

            // one grid for all three kernels: quantiles of the pooled union
            let (cov_a, cov_b) = match &file_cov {
                Some(c) => (c.clone(), c.clone()),
                None => {
                    let pooled = SortedSample::new(union.iter().flat_map(|s| s.iter().copied()).collect())?;
                    let grid = default_grid(&pooled, spec.grid)?;
                    let lags = lags.unwrap_or_else(|| default_bandwidth(n));
                    let ca = estimate_long_run_covariance_on_grid(&union[..m], &grid, lags, 0)?;
                    let cb = estimate_long_run_covariance_on_grid(&union[m..], &grid, lags, 0)?;
                    notes.push(format!(
                        "n={n} {name}: hac kernels with L={lags}, psd_repaired={}/{}",
                        ca.psd_repaired(),
                        cb.psd_repaired()
                    ));
                    (ca, cb)
                }
            };
            let tag = derive_seed(n as u64, k as u64);

            // convergent: within-energy pairs, each energy with its own kernel
            let ens_a = ensemble_for(&cov_a, spec, derive_seed(tag, 0))?;
            let ens_b = ensemble_for(&cov_b, spec, derive_seed(tag, 1))?;
            let mut stats = pair_statistics(&sorted[..m], &within, n);
            stats.extend(pair_statistics(&sorted[m..], &within, n));
            cells.extend(tally("convergent", &name, n, &stats, &[&ens_a, &ens_b], spec));
            let draws: Vec<f64> = ens_a.draws().iter().chain(ens_b.draws()).copied().collect();
            histograms.push(Histogram::build("convergent", &name, n, &stats, &draws, spec.bins));

            // divergent: cross-energy pairs against the law with covariance
            // Σ_a + Σ_b, i.e. the pairwise law of the averaged kernel
            let cov_u = GridCovariance::new(
                cov_a.grid().to_vec(),
                (cov_a.matrix() + cov_b.matrix()) * 0.5,
                cov_a.psd_repaired() || cov_b.psd_repaired(),
            )?;
            let ens_u = ensemble_for(&cov_u, spec, derive_seed(tag, 2))?;
            let stats = pair_statistics(&sorted, &cross, n);
            cells.extend(tally("divergent", &name, n, &stats, &[&ens_u], spec));
            histograms.push(Histogram::build("divergent", &name, n, &stats, ens_u.draws(), spec.bins));
        }
        notes.push(format!(
            "n={n}: {m} trajectories per energy, burn-in {burn_in} steps, dt={dt}"
        ));
    }
    Ok(ExperimentOutcome {
        cells,
        histograms,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(null: bool) -> ExperimentSpec {
        let mut s = ExperimentSpec::ma3(null, vec![200], vec![0.05, 0.1], PairDesign::Independent { pairs: 40 }, 3);
        s.draws = 2000;
        s.bins = 10;
        s
    }

    #[test]
    fn outcome_shape_and_histogram_totals() {
        let out = run_experiment(&small(false)).unwrap();
        assert_eq!(out.cells.len(), 2);
        assert!(out.cells.iter().all(|c| c.pairs == 40 && c.case == "divergent"));
        let h = &out.histograms[0];
        assert_eq!(h.statistic_counts.iter().sum::<u64>(), 40);
        assert_eq!(h.limit_counts.iter().sum::<u64>(), 2000);
        let lo = out.cell("divergent", "x", 200, 0.05).unwrap().rejections;
        let hi = out.cell("divergent", "x", 200, 0.1).unwrap().rejections;
        assert!(lo <= hi);
        let table = out.table_csv();
        assert!(table.starts_with("case,observable,n,alpha=0.05,alpha=0.1\n"));
        assert_eq!(table.lines().count(), 2);
    }

    #[test]
    fn reruns_are_identical() {
        assert_eq!(run_experiment(&small(true)).unwrap(), run_experiment(&small(true)).unwrap());
    }

    #[test]
    fn cross_design_counts_pairs() {
        let mut s = small(true);
        s.design = PairDesign::Cross { per_group: 5 };
        let out = run_experiment(&s).unwrap();
        assert!(out.cells.iter().all(|c| c.pairs == 25 && c.case == "convergent"));
    }

    #[test]
    fn spec_validation_and_schema() {
        let mut s = small(true);
        s.alphas = vec![1.5];
        assert!(run_experiment(&s).is_err());
        let json = serde_json::to_string(&small(false)).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, small(false));
        let extra = json.replacen("\"seed\"", "\"sead\":1,\"seed\"", 1);
        assert!(serde_json::from_str::<ExperimentSpec>(&extra).is_err());
    }
}
