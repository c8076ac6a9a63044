//! One resolved configuration and one runner per subcommand.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use shaplit_core::bounds::global_test;
use shaplit_core::config::{PredictorSpec, SamplerSpec};
use shaplit_core::experiments::ExperimentConfig;
use shaplit_core::explain::{
    explain_players, group_game, hierarchical_explain, summand_seed, HierarchyConfig,
    SelectionRule, SummandConfig,
};
use shaplit_core::games::{check_axioms, exact_shapley, exact_shapley_all, Coalition};
use shaplit_core::masking::{
    generate_boolean, generate_patch_images, ConditionalSampler, Masker, Partition, PatchGenerator,
    PatchGeometry,
};
use shaplit_core::predictors::{
    make_cnn, make_fcn, train, GeneratorSource, TrainConfig, DEFAULT_HIDDEN,
};
use shaplit_core::report::{GlobalReport, Payload, ReportDocument, ShapleyReport, TestReport};
use shaplit_core::rng::derive_seed;
use shaplit_core::testing::{
    crt, estimate_gamma, hrt, shaplit, CrtStatistic, ShaplitConfig, TestStatistic,
};
use shaplit_core::Error;

use crate::settings::{
    config_object, emit, invocation, labeled_matrix, load_point, load_rows, resolve, usage,
    CliResult, Common,
};

fn zero() -> usize {
    0
}
fn one() -> usize {
    1
}
fn thousand() -> usize {
    1000
}
fn alpha() -> f64 {
    0.05
}

fn masker(
    sampler: Arc<dyn ConditionalSampler>,
    groups: &Option<Vec<Vec<usize>>>,
) -> CliResult<Masker> {
    let dim = sampler.dim();
    Ok(match groups {
        Some(g) => Masker::new(sampler, Partition::new(dim, g.clone())?)?,
        None => Masker::singletons(sampler)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapleyConfig {
    pub seed: u64,
    pub predictor: PredictorSpec,
    pub sampler: SamplerSpec,
    pub data: Option<PathBuf>,
    #[serde(default = "zero")]
    pub row: usize,
    pub x: Option<Vec<f64>>,
    pub groups: Option<Vec<Vec<usize>>>,
    /// All players when absent.
    pub feature: Option<usize>,
    /// Masked draws per game value.
    #[serde(default = "thousand")]
    pub draws: usize,
}

pub fn run_shapley(common: &Common, flags: &impl Serialize) -> CliResult<()> {
    let (cfg, resolved): (ShapleyConfig, Value) = resolve(common, flags)?;
    let (x, rows) = load_point(&cfg.data, cfg.row, &cfg.x)?;
    let f = cfg.predictor.build()?;
    let m = masker(cfg.sampler.build(rows.as_deref())?, &cfg.groups)?;
    let game = group_game(f.as_ref(), &x, &m, cfg.draws, cfg.seed)?;
    let (features, axioms) = match cfg.feature {
        Some(j) => (vec![exact_shapley(&game, j)?], None),
        None => {
            let all = exact_shapley_all(&game)?;
            let axioms = check_axioms(&game, &all)?;
            (all, Some(axioms))
        }
    };
    let draws = if m.is_deterministic() { 1 } else { cfg.draws };
    let payload = Payload::Shapley(ShapleyReport {
        players: m.players(),
        draws,
        features,
        axioms,
    });
    emit(
        &ReportDocument::new(invocation("shapley", resolved, cfg.seed, common), payload),
        common,
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShaplitCmdConfig {
    pub seed: u64,
    pub predictor: PredictorSpec,
    pub sampler: SamplerSpec,
    pub data: Option<PathBuf>,
    #[serde(default = "zero")]
    pub row: usize,
    pub x: Option<Vec<f64>>,
    pub groups: Option<Vec<Vec<usize>>>,
    pub feature: usize,
    /// Every coalition of the other players when absent.
    pub coalition: Option<Vec<usize>>,
    #[serde(default = "thousand")]
    pub k: usize,
    #[serde(default = "one")]
    pub l: usize,
    /// Identity for `l = 1`, the mean otherwise, when absent.
    pub statistic: Option<TestStatistic>,
    /// Also estimate gamma from this many paired draws.
    pub gamma_draws: Option<usize>,
}

pub fn run_shaplit(common: &Common, flags: &impl Serialize) -> CliResult<()> {
    let (cfg, resolved): (ShaplitCmdConfig, Value) = resolve(common, flags)?;
    let (x, rows) = load_point(&cfg.data, cfg.row, &cfg.x)?;
    let f = cfg.predictor.build()?;
    let m = masker(cfg.sampler.build(rows.as_deref())?, &cfg.groups)?;
    let n = m.players();
    if cfg.feature >= n {
        return Err(Error::Domain(format!("feature {} outside 0..{n}", cfg.feature)).into());
    }
    let coalitions: Vec<Coalition> = match &cfg.coalition {
        Some(c) => {
            let c = Coalition::from_members(n, c.iter().copied())?;
            if c.contains(cfg.feature) {
                return Err(Error::Domain(
                    "the coalition must not contain the tested feature".into(),
                )
                .into());
            }
            vec![c]
        }
        None => Coalition::excluding(n, cfg.feature)?.collect(),
    };
    let statistic = cfg.statistic.unwrap_or(TestStatistic::for_draws(cfg.l));
    let tests = coalitions
        .into_iter()
        .map(|c| {
            let seed = summand_seed(cfg.seed, cfg.feature, c);
            let test_cfg = ShaplitConfig {
                k: cfg.k,
                l: cfg.l,
                statistic,
                seed,
            };
            let outcome = shaplit(f.as_ref(), &x, cfg.feature, c, &m, &test_cfg)?;
            let gamma = cfg
                .gamma_draws
                .map(|draws| estimate_gamma(f.as_ref(), &x, cfg.feature, c, &m, draws, seed))
                .transpose()?;
            Ok(TestReport {
                feature: cfg.feature,
                coalition: Some(c.members().collect()),
                outcome,
                gamma,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let doc = ReportDocument::new(
        invocation("shaplit", resolved, cfg.seed, common),
        Payload::Tests(tests),
    );
    emit(&doc, common)
}

fn crt_statistic() -> CrtStatistic {
    CrtStatistic::AbsCorrelation
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrtCmdConfig {
    pub seed: u64,
    pub sampler: SamplerSpec,
    /// Labeled CSV.
    pub data: PathBuf,
    /// Every feature when absent.
    pub feature: Option<usize>,
    #[serde(default = "thousand")]
    pub k: usize,
    #[serde(default = "crt_statistic")]
    pub statistic: CrtStatistic,
}

pub fn run_crt(common: &Common, flags: &impl Serialize) -> CliResult<()> {
    let (cfg, resolved): (CrtCmdConfig, Value) = resolve(common, flags)?;
    let rows = load_rows(&cfg.data)?;
    let (flat, labels) = labeled_matrix(&rows)?;
    let sampler = cfg.sampler.build(Some(&rows))?;
    let features: Vec<usize> = match cfg.feature {
        Some(j) => vec![j],
        None => (0..sampler.dim()).collect(),
    };
    let tests = features
        .into_iter()
        .map(|j| {
            let seed = derive_seed(cfg.seed, &[j as u64]);
            let outcome = crt(
                &flat,
                &labels,
                j,
                sampler.as_ref(),
                cfg.statistic,
                cfg.k,
                seed,
            )?;
            Ok(TestReport {
                feature: j,
                coalition: None,
                outcome,
                gamma: None,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let doc = ReportDocument::new(
        invocation("crt", resolved, cfg.seed, common),
        Payload::Tests(tests),
    );
    emit(&doc, common)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HrtCmdConfig {
    pub seed: u64,
    pub predictor: PredictorSpec,
    pub sampler: SamplerSpec,
    /// Labeled holdout CSV.
    pub data: PathBuf,
    pub groups: Option<Vec<Vec<usize>>>,
    /// Every player when absent.
    pub feature: Option<usize>,
    #[serde(default = "one")]
    pub k: usize,
}

pub fn run_hrt(common: &Common, flags: &impl Serialize) -> CliResult<()> {
    let (cfg, resolved): (HrtCmdConfig, Value) = resolve(common, flags)?;
    let rows = load_rows(&cfg.data)?;
    let (flat, labels) = labeled_matrix(&rows)?;
    let f = cfg.predictor.build()?;
    let m = masker(cfg.sampler.build(Some(&rows))?, &cfg.groups)?;
    let features: Vec<usize> = match cfg.feature {
        Some(j) => vec![j],
        None => (0..m.players()).collect(),
    };
    let tests = features
        .into_iter()
        .map(|j| {
            let seed = derive_seed(cfg.seed, &[j as u64]);
            Ok(TestReport {
                feature: j,
                coalition: None,
                outcome: hrt(f.as_ref(), &flat, &labels, j, &m, cfg.k, seed)?,
                gamma: None,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let doc = ReportDocument::new(
        invocation("hrt", resolved, cfg.seed, common),
        Payload::Tests(tests),
    );
    emit(&doc, common)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalCmdConfig {
    /// Not used by the computation; recorded for completeness.
    #[serde(default)]
    pub seed: u64,
    /// A report written by `explain`.
    pub report: PathBuf,
    #[serde(default = "alpha")]
    pub alpha: f64,
}

pub fn run_global(common: &Common, flags: &impl Serialize) -> CliResult<()> {
    let (cfg, resolved): (GlobalCmdConfig, Value) = resolve(common, flags)?;
    let doc = ReportDocument::read(&cfg.report)?;
    let Payload::Explain(features) = doc.payload else {
        return Err(Error::Domain(
            "the global test needs a report written by `explain` (without --image)".into(),
        )
        .into());
    };
    let mut chain_holds = true;
    let tests = features
        .iter()
        .map(|fr| {
            let triples: Vec<_> = fr
                .records
                .iter()
                .map(|r| (r.coalition, r.weight, r.p))
                .collect();
            let g = global_test(fr.feature, fr.phi, &triples, cfg.alpha)?;
            // Monte Carlo records get their per-summand slack
            let slack: f64 = fr.records.iter().map(|r| r.weight * r.slack).sum();
            chain_holds &= g.weighted_p <= 1.0 - g.phi + slack + 1e-12;
            Ok(g)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let payload = Payload::Global(GlobalReport { tests, chain_holds });
    emit(
        &ReportDocument::new(invocation("global", resolved, cfg.seed, common), payload),
        common,
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainCmdConfig {
    pub seed: u64,
    pub predictor: PredictorSpec,
    pub sampler: SamplerSpec,
    pub data: Option<PathBuf>,
    #[serde(default = "zero")]
    pub row: usize,
    pub x: Option<Vec<f64>>,
    pub groups: Option<Vec<Vec<usize>>>,
    /// Every player when absent.
    pub features: Option<Vec<usize>>,
    #[serde(default = "thousand")]
    pub k: usize,
    #[serde(default = "one")]
    pub l: usize,
    #[serde(default = "thousand")]
    pub m: usize,
    #[serde(default = "alpha")]
    pub alpha: f64,
    /// `[height, width]`: explain image quadrants hierarchically.
    pub image: Option<[usize; 2]>,
    #[serde(default = "one")]
    pub depth: usize,
    #[serde(default)]
    pub rule: SelectionRule,
    #[serde(default = "one")]
    pub min_side: usize,
}

pub fn run_explain(common: &Common, flags: &impl Serialize) -> CliResult<()> {
    let (cfg, resolved): (ExplainCmdConfig, Value) = resolve(common, flags)?;
    let (x, rows) = load_point(&cfg.data, cfg.row, &cfg.x)?;
    let f = cfg.predictor.build()?;
    let sampler = cfg.sampler.build(rows.as_deref())?;
    let summands = SummandConfig {
        k: cfg.k,
        l: cfg.l,
        m: cfg.m,
        alpha: cfg.alpha,
        seed: cfg.seed,
    };
    let payload = match cfg.image {
        Some([height, width]) => {
            if cfg.groups.is_some() {
                return Err(usage("--image and --groups are mutually exclusive"));
            }
            let hierarchy = HierarchyConfig {
                depth: cfg.depth,
                rule: cfg.rule,
                min_side: cfg.min_side,
                summands,
            };
            Payload::Regions(hierarchical_explain(
                f.as_ref(),
                &x,
                height,
                width,
                sampler,
                &hierarchy,
            )?)
        }
        None => {
            let m = masker(sampler, &cfg.groups)?;
            let players: Vec<usize> = cfg
                .features
                .clone()
                .unwrap_or_else(|| (0..m.players()).collect());
            Payload::Explain(explain_players(f.as_ref(), &x, &m, &players, &summands)?)
        }
    };
    emit(
        &ReportDocument::new(invocation("explain", resolved, cfg.seed, common), payload),
        common,
    )
}

/// Runs an experiment from the config file, with `--seed` taking precedence.
pub fn run_experiment(common: &Common, id: &str, out_dir: &std::path::Path) -> CliResult<()> {
    let mut value = config_object(common)?;
    if let Some(found) = value.get("experiment").and_then(Value::as_str) {
        if found != id {
            return Err(usage(format!(
                "config is for experiment `{found}`, not `{id}`"
            )));
        }
    }
    value.insert("experiment".into(), id.into());
    if let Some(seed) = common.seed {
        value.insert("seed".into(), seed.into());
    }
    let cfg = ExperimentConfig::from_value(Value::Object(value))?;
    std::fs::create_dir_all(out_dir).map_err(Error::from)?;
    let timestamp = common.timestamp.then(crate::settings::timestamp_now);
    cfg.run(out_dir, timestamp)?;
    eprintln!("wrote {} results to {}", cfg.id(), out_dir.display());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Boolean,
    Patch,
}

fn two() -> usize {
    2
}
fn five() -> usize {
    5
}
fn seven() -> usize {
    7
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    pub generator: GeneratorKind,
    pub count: usize,
    /// Output CSV; the generator parameters and ground truth go to a
    /// `.meta.json` file beside it.
    pub output: PathBuf,
    #[serde(default = "two")]
    pub k: usize,
    #[serde(default = "five")]
    pub n: usize,
    #[serde(default = "seven")]
    pub d: usize,
    #[serde(default = "two")]
    pub r: usize,
    #[serde(default = "two")]
    pub s: usize,
    /// Patch noise variance; `1/d^2` when absent.
    pub sigma2: Option<f64>,
    /// Patch activation probability; the balanced default when absent.
    pub eta: Option<f64>,
}

pub fn run_generate(common: &Common, flags: &impl Serialize) -> CliResult<()> {
    let (cfg, _): (GenerateConfig, Value) = resolve(common, flags)?;
    let data = match cfg.generator {
        GeneratorKind::Boolean => generate_boolean(cfg.k, cfg.n, cfg.count, cfg.seed)?,
        GeneratorKind::Patch => {
            let generator = patch_generator(cfg.d, cfg.r, cfg.s, cfg.sigma2, cfg.eta)?;
            generate_patch_images(&generator, cfg.count, cfg.seed)
        }
    };
    data.save(&cfg.output)?;
    eprintln!(
        "wrote {} samples to {}",
        data.samples.len(),
        cfg.output.display()
    );
    Ok(())
}

fn patch_generator(
    d: usize,
    r: usize,
    s: usize,
    sigma2: Option<f64>,
    eta: Option<f64>,
) -> CliResult<PatchGenerator> {
    let geometry = PatchGeometry::new(d, r, s)?;
    let sigma2 = sigma2.unwrap_or(1.0 / (d * d) as f64);
    let g = PatchGenerator::new(geometry, sigma2)?;
    Ok(match eta {
        Some(eta) => PatchGenerator::with_params(geometry, g.x0, sigma2, eta)?,
        None => g,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelArch {
    Cnn,
    Fcn,
}

fn train_samples() -> usize {
    10_000
}
fn hidden() -> usize {
    DEFAULT_HIDDEN
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub seed: u64,
    pub model: ModelArch,
    /// Output model JSON, usable as `{"kind": "cnn", "path": ...}`.
    pub output: PathBuf,
    #[serde(default = "seven")]
    pub d: usize,
    #[serde(default = "two")]
    pub r: usize,
    #[serde(default = "two")]
    pub s: usize,
    pub sigma2: Option<f64>,
    pub eta: Option<f64>,
    #[serde(default = "train_samples")]
    pub samples: usize,
    #[serde(default = "one")]
    pub epochs: usize,
    #[serde(default = "hidden")]
    pub hidden: usize,
}

pub fn run_train(common: &Common, flags: &impl Serialize) -> CliResult<()> {
    let (cfg, _): (TrainCmdConfig, Value) = resolve(common, flags)?;
    let generator = patch_generator(cfg.d, cfg.r, cfg.s, cfg.sigma2, cfg.eta)?;
    let geometry = generator.geometry;
    let source = GeneratorSource {
        generator,
        seed: derive_seed(cfg.seed, &[1]),
        count: cfg.samples,
    };
    let init = derive_seed(cfg.seed, &[2]);
    let shuffle = derive_seed(cfg.seed, &[3]);
    let (json, report) = match cfg.model {
        ModelArch::Cnn => {
            let mut net = make_cnn(geometry, init);
            let tc = TrainConfig {
                epochs: cfg.epochs,
                ..TrainConfig::adam(shuffle)
            };
            let report = train(&mut net, &source, &tc)?;
            (
                serde_json::to_string_pretty(&net).map_err(Error::from)?,
                report,
            )
        }
        ModelArch::Fcn => {
            let mut net = make_fcn(geometry.dim(), cfg.hidden, init)?;
            let tc = TrainConfig {
                epochs: cfg.epochs,
                ..TrainConfig::sgd(shuffle)
            };
            let report = train(&mut net, &source, &tc)?;
            (
                serde_json::to_string_pretty(&net).map_err(Error::from)?,
                report,
            )
        }
    };
    std::fs::write(&cfg.output, json + "\n").map_err(Error::from)?;
    eprintln!(
        "loss trace {:?} after {} steps",
        report.loss_trace, report.steps
    );
    Ok(())
}
