//! The `simulate`, `detect`, `evaluate` and `benchmark` subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rfcd::eval::{
    auc, compare, diag_distance, evaluate_method, robust_problem, roc, summarize, Method,
    MethodOutcome, MethodReport, Observations,
};
use rfcd::robust::{
    box_smooth, energy_image, otsu_threshold, robust_fusion, threshold_map, ChangeMask,
    ChangeScores, HalfStep, Stage,
};
use rfcd::sim::Scenario;
use rfcd::sim::{
    decimate_mask, rasterize_mask, synthetic_reference, ChangeEpoch, ChangeRule, PairPlan,
    SimulatedPair, Simulator,
};
use rfcd::MultiBandImage;
use serde::{Deserialize, Serialize};

use crate::config::{EpochName, RuleConfig, RunConfig, ScenarioName, Tau, TauRule};
use crate::mbif::{read_image, write_image};
use crate::pgm::{read_mask_pgm, write_mask_pgm};
use crate::sidecar::SensorPair;
use crate::{CliError, CliResult};

pub const Y_HR: &str = "y_hr.mbif";
pub const Y_LR: &str = "y_lr.mbif";
pub const TRUTH: &str = "truth.pgm";
pub const LATENT_TI: &str = "latent_ti.mbif";
pub const LATENT_TJ: &str = "latent_tj.mbif";
pub const MANIFEST: &str = "manifest.json";

const OTSU_BINS: usize = 256;

/// Resolved configuration of one command invocation.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub quiet: bool,
}

impl Run {
    pub fn new(config: RunConfig, quiet: bool) -> Self {
        Self { config, quiet }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out_dir(&self) -> CliResult<PathBuf> {
        let out = self
            .config
            .paths
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        Ok(out)
    }

    fn input_dir(&self) -> CliResult<PathBuf> {
        self.config.paths.input.clone().ok_or_else(|| {
            CliError::Config("paths.input: an input dataset directory is required".into())
        })
    }
}

/// Contents of `manifest.json`. Only `sensors` is needed to run detection
/// on an external dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sensors: SensorPair,
    #[serde(default)]
    pub scenario: Option<ScenarioName>,
    #[serde(default)]
    pub epoch: Option<EpochName>,
    #[serde(default)]
    pub rule: Option<RuleConfig>,
    #[serde(default)]
    pub noise_seed: Option<u64>,
    #[serde(default)]
    pub scene_seed: Option<u64>,
    #[serde(default)]
    pub unmix_error: Option<f64>,
    #[serde(default)]
    pub truth_pixels: Option<usize>,
    #[serde(default)]
    pub config: Option<RunConfig>,
}

impl Manifest {
    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Data(format!("{}: {}: {}", path.display(), e.path(), e.inner())))
    }
}

fn rule_config(rule: ChangeRule) -> RuleConfig {
    match rule {
        ChangeRule::Identity => RuleConfig::Identity,
        ChangeRule::Swap { i, j } => RuleConfig::Swap { i, j },
        ChangeRule::Replace { i, j } => RuleConfig::Replace { i, j },
        ChangeRule::Rescale { i, factor } => RuleConfig::Rescale { i, factor },
    }
}

fn scenario_name(s: Scenario) -> ScenarioName {
    match s {
        Scenario::Pan => ScenarioName::Pan,
        Scenario::Ms => ScenarioName::Ms,
    }
}

/// Unmixed reference scene of the configured simulation.
fn simulator(run: &Run) -> CliResult<Simulator> {
    let cfg = &run.config;
    let x_ref = match &cfg.simulation.reference {
        Some(path) => read_image(path)?,
        None => synthetic_reference(&cfg.scene_settings(), cfg.simulation.scene.seed)?.image,
    };
    let start = Instant::now();
    let sim = Simulator::new(&x_ref, cfg.simulation_settings(), cfg.simulation.scene.seed)?;
    run.log(format!(
        "unmixed {} bands of {} into {} endmembers in {:.1} s (relative error {:.2e})",
        x_ref.bands(),
        x_ref.shape(),
        cfg.simulation.endmembers,
        start.elapsed().as_secs_f64(),
        sim.unmix_error()
    ));
    Ok(sim)
}

/// Simulates one observation pair with known change.
pub fn simulate(run: &Run) -> CliResult<PathBuf> {
    let cfg = &run.config;
    let out = run.out_dir()?;
    let sim = simulator(run)?;
    let mask_spec = cfg.mask_spec(sim.model().shape());
    let mask = rasterize_mask(&mask_spec)?;
    let plan = PairPlan {
        rule: cfg.change_rule(&sim, &mask),
        mask: mask_spec,
        epoch: cfg.simulation.epoch.into(),
        scenario: cfg.simulation.scenario.into(),
        seed: cfg.simulation.seed,
    };
    let pair = sim.simulate(&plan)?;
    write_image(&pair.y_hr, &out.join(Y_HR))?;
    write_image(&pair.y_lr, &out.join(Y_LR))?;
    write_mask_pgm(&pair.truth_mask, &out.join(TRUTH))?;
    write_image(&pair.latent_ti, &out.join(LATENT_TI))?;
    write_image(&pair.latent_tj, &out.join(LATENT_TJ))?;

    // output locations do not belong to the dataset description
    let mut stored = cfg.clone();
    stored.paths = Default::default();
    let manifest = Manifest {
        sensors: SensorPair::describe(&pair.hr_sensor, &pair.lr_sensor),
        scenario: Some(scenario_name(pair.scenario)),
        epoch: Some(match pair.epoch {
            ChangeEpoch::Ti => EpochName::Ti,
            ChangeEpoch::Tj => EpochName::Tj,
        }),
        rule: Some(rule_config(pair.rule)),
        noise_seed: Some(cfg.simulation.seed),
        scene_seed: Some(cfg.simulation.scene.seed),
        unmix_error: Some(sim.unmix_error()),
        truth_pixels: Some(pair.truth_mask.count()),
        config: Some(stored),
    };
    let path = out.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    run.log(format!(
        "{} pair, {} rule on {} pixels written to {}",
        pair.scenario.name(),
        pair.rule.name(),
        pair.truth_mask.count(),
        out.display()
    ));
    Ok(out)
}

/// Observations and sensors of a dataset directory.
struct Dataset {
    y_hr: MultiBandImage,
    y_lr: MultiBandImage,
    hr_sensor: rfcd::degradation::SensorModel,
    lr_sensor: rfcd::degradation::SensorModel,
    manifest: Manifest,
}

impl Dataset {
    fn load(dir: &Path) -> CliResult<Self> {
        let manifest = Manifest::read(dir)?;
        let y_hr = read_image(&dir.join(Y_HR))?;
        let y_lr = read_image(&dir.join(Y_LR))?;
        let (hr_sensor, lr_sensor) = manifest.sensors.build(y_lr.bands())?;
        Ok(Self {
            y_hr,
            y_lr,
            hr_sensor,
            lr_sensor,
            manifest,
        })
    }

    fn observations(&self) -> Observations<'_> {
        Observations {
            y_hr: &self.y_hr,
            y_lr: &self.y_lr,
            hr_sensor: &self.hr_sensor,
            lr_sensor: &self.lr_sensor,
        }
    }
}

#[derive(Serialize)]
struct TraceRow {
    step: usize,
    iter: usize,
    stage: &'static str,
    #[serde(rename = "J")]
    objective: f64,
    data_hr: f64,
    data_lr: f64,
    reg_latent: f64,
    reg_change: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_trace(path: &Path, steps: &[HalfStep]) -> CliResult<()> {
    write_csv(
        path,
        steps.iter().enumerate().map(|(step, h)| TraceRow {
            step,
            iter: h.iter,
            stage: match h.stage {
                Stage::Initial => "initial",
                Stage::Fusion => "fusion",
                Stage::Correction => "correction",
            },
            objective: h.terms.total(),
            data_hr: h.terms.data_hr,
            data_lr: h.terms.data_lr,
            reg_latent: h.terms.reg_latent,
            reg_change: h.terms.reg_change,
        }),
    )
}

fn decision_threshold(run: &Run, smoothed: &ChangeScores, input: &Path) -> CliResult<f64> {
    Ok(match run.config.cva.tau {
        Tau::Fixed(t) => t,
        Tau::Rule(TauRule::Otsu) => otsu_threshold(smoothed, OTSU_BINS),
        Tau::Rule(TauRule::Roc) => {
            let truth = read_mask_pgm(&input.join(TRUTH))?;
            roc(smoothed, &truth)?.optimal_point().threshold
        }
    })
}

/// Robust fusion of a dataset followed by sCVA.
pub fn detect(run: &Run) -> CliResult<PathBuf> {
    let input = run.input_dir()?;
    let out = run.out_dir()?;
    let data = Dataset::load(&input)?;
    let settings = run.config.method_settings();
    let prob = robust_problem(&data.observations(), &settings)?;
    let start = Instant::now();
    let result = match robust_fusion(&prob) {
        Ok(r) => r,
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                write_trace(&out.join("trace.csv"), &partial.half_steps)?;
            }
            return Err(failure.error.into());
        }
    };
    write_trace(&out.join("trace.csv"), &result.half_steps)?;
    write_image(&result.latent, &out.join("x_hat.mbif"))?;
    write_image(result.change.image(), &out.join("dx_hat.mbif"))?;
    let energy = energy_image(&result.change);
    let energy_img = MultiBandImage::new(1, energy.shape(), energy.energy().to_vec())?;
    write_image(&energy_img, &out.join("energy.mbif"))?;
    let smoothed = box_smooth(&energy, run.config.cva.radius);
    let tau = decision_threshold(run, &smoothed, &input)?;
    let mask = threshold_map(&smoothed, tau);
    write_mask_pgm(&mask, &out.join("mask.pgm"))?;
    run.log(format!(
        "{} outer iterations in {:.1} s{}, tau {tau:.4e}, {} changed pixels",
        result.objective_trace.len() - 1,
        start.elapsed().as_secs_f64(),
        if result.converged {
            ""
        } else {
            " (iteration cap reached)"
        },
        mask.count()
    ));
    Ok(out)
}

#[derive(Serialize)]
struct ReportRow<'a> {
    method: &'a str,
    scenario: &'a str,
    auc: f64,
    dist: f64,
    runtime_s: f64,
    n_pixels: usize,
}

#[derive(Serialize)]
struct RocRow<'a> {
    method: &'a str,
    threshold: f64,
    pfa: f64,
    pd: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    method: &'a str,
    scenario: &'a str,
    pairs: usize,
    failures: usize,
    mean_auc: f64,
    mean_dist: f64,
    pooled_auc: f64,
    pooled_dist: f64,
    mean_runtime_s: f64,
}

fn check_truth(truth: &ChangeMask) -> CliResult<()> {
    let n = truth.count();
    if n == 0 || n == truth.as_slice().len() {
        return Err(CliError::Data(format!(
            "truth mask has {n} changed pixels out of {}; ROC needs both classes",
            truth.as_slice().len()
        )));
    }
    Ok(())
}

/// External detector scores read from a one-band image on the HR or LR grid.
fn external_report(
    path: &Path,
    data: &Dataset,
    truth_hr: &ChangeMask,
) -> CliResult<(f64, f64, usize, rfcd::eval::RocCurve)> {
    let img = read_image(path)?;
    if img.bands() != 1 {
        return Err(CliError::Data(format!(
            "{}: scores need 1 band, found {}",
            path.display(),
            img.bands()
        )));
    }
    let scores = ChangeScores::new(img.as_slice().to_vec(), img.shape())?;
    let truth = if scores.shape() == truth_hr.shape() {
        truth_hr.clone()
    } else {
        let grid = data
            .lr_sensor
            .spatial
            .as_ref()
            .map(|s| s.grid)
            .ok_or_else(|| {
                CliError::Data(format!(
                    "{}: scores grid {} differs from the truth grid",
                    path.display(),
                    scores.shape()
                ))
            })?;
        decimate_mask(truth_hr, &grid)?
    };
    let curve = roc(&scores, &truth)?;
    Ok((
        auc(&curve),
        diag_distance(&curve),
        truth.as_slice().len(),
        curve,
    ))
}

/// Scores every configured method on a dataset with known truth.
pub fn evaluate(run: &Run) -> CliResult<PathBuf> {
    let input = run.input_dir()?;
    let out = run.out_dir()?;
    let data = Dataset::load(&input)?;
    let truth = read_mask_pgm(&input.join(TRUTH))?;
    check_truth(&truth)?;
    let scenario = data
        .manifest
        .scenario
        .map_or("unknown", |s| Scenario::from(s).name());
    let settings = run.config.method_settings();
    let obs = data.observations();
    let mut outcomes: Vec<MethodOutcome> = Vec::new();
    for method in run.config.methods() {
        let report = evaluate_method(method, &obs, &truth, &settings);
        match &report {
            Ok(r) => run.log(format!(
                "{method}: auc {:.4}, dist {:.4} ({:.2} s)",
                r.auc, r.dist, r.runtime_s
            )),
            Err(e) => run.log(format!("{method}: failed: {e}")),
        }
        outcomes.push(MethodOutcome { method, report });
    }
    if let Some(err) = outcomes.iter().find_map(|o| o.report.as_ref().err()) {
        return Err(err.clone().into());
    }
    let reports: Vec<&MethodReport> = outcomes
        .iter()
        .filter_map(|o| o.report.as_ref().ok())
        .collect();
    let external = run
        .config
        .evaluation
        .scores
        .as_ref()
        .map(|p| external_report(p, &data, &truth))
        .transpose()?;

    let mut rows: Vec<ReportRow> = reports
        .iter()
        .map(|r| ReportRow {
            method: r.method.name(),
            scenario,
            auc: r.auc,
            dist: r.dist,
            runtime_s: r.runtime_s,
            n_pixels: r.truth.as_slice().len(),
        })
        .collect();
    let mut roc_rows: Vec<RocRow> = reports
        .iter()
        .flat_map(|r| {
            r.curve.points().iter().map(|p| RocRow {
                method: r.method.name(),
                threshold: p.threshold,
                pfa: p.pfa,
                pd: p.pd,
            })
        })
        .collect();
    if let Some((auc, dist, n_pixels, curve)) = &external {
        rows.push(ReportRow {
            method: "external",
            scenario,
            auc: *auc,
            dist: *dist,
            runtime_s: 0.0,
            n_pixels: *n_pixels,
        });
        roc_rows.extend(curve.points().iter().map(|p| RocRow {
            method: "external",
            threshold: p.threshold,
            pfa: p.pfa,
            pd: p.pd,
        }));
    }
    write_csv(&out.join("report.csv"), rows)?;
    write_csv(&out.join("roc.csv"), roc_rows)?;
    let summary = summarize(std::slice::from_ref(&outcomes))?;
    write_csv(&out.join("summary.csv"), summary_rows(&summary, scenario))?;
    Ok(out)
}

fn summary_rows<'a>(
    summary: &'a [rfcd::eval::MethodSummary],
    scenario: &'a str,
) -> impl Iterator<Item = SummaryRow<'a>> {
    summary.iter().map(move |s| SummaryRow {
        method: s.method.name(),
        scenario,
        pairs: s.pairs,
        failures: s.failures,
        mean_auc: s.mean_auc,
        mean_dist: s.mean_dist,
        pooled_auc: s.pooled_auc,
        pooled_dist: s.pooled_dist,
        mean_runtime_s: s.mean_runtime_s,
    })
}

#[derive(Serialize)]
struct PairRow<'a> {
    pair: usize,
    scenario: &'a str,
    epoch: &'a str,
    rule: &'a str,
    truth_pixels: usize,
    method: &'a str,
    auc: f64,
    dist: f64,
    runtime_s: f64,
    error: String,
}

struct PairRun {
    plan: PairPlan,
    truth_pixels: usize,
    outcomes: Vec<MethodOutcome>,
}

fn run_pair(
    sim: &Simulator,
    plan: &PairPlan,
    methods: &[Method],
    run: &Run,
    index: usize,
) -> PairRun {
    let settings = run.config.method_settings();
    let simulated: rfcd::Result<SimulatedPair> = sim.simulate(plan);
    let (truth_pixels, outcomes) = match simulated {
        Ok(pair) => (pair.truth_mask.count(), compare(&pair, methods, &settings)),
        Err(e) => (
            0,
            methods
                .iter()
                .map(|&method| MethodOutcome {
                    method,
                    report: Err(e.clone()),
                })
                .collect(),
        ),
    };
    for o in &outcomes {
        if let Err(e) = &o.report {
            run.log(format!(
                "pair {index} ({}) {}: failed: {e}",
                plan.scenario.name(),
                o.method
            ));
        }
    }
    PairRun {
        plan: plan.clone(),
        truth_pixels,
        outcomes,
    }
}

/// Simulated suite scored by every method, one row per pair and method
/// plus one aggregate row per method and scenario.
pub fn benchmark(run: &Run) -> CliResult<PathBuf> {
    let cfg = &run.config;
    let out = run.out_dir()?;
    let sim = simulator(run)?;
    let plans = sim.suite_plan(cfg.benchmark.n_masks, cfg.simulation.seed)?;
    let methods = cfg.methods();
    let start = Instant::now();
    let pairs: Vec<PairRun> = plans
        .par_iter()
        .enumerate()
        .map(|(k, plan)| run_pair(&sim, plan, &methods, run, k))
        .collect();
    run.log(format!(
        "{} pairs scored in {:.1} s",
        pairs.len(),
        start.elapsed().as_secs_f64()
    ));

    let rows = pairs.iter().enumerate().flat_map(|(k, p)| {
        p.outcomes.iter().map(move |o| {
            let ok = o.report.as_ref().ok();
            PairRow {
                pair: k,
                scenario: p.plan.scenario.name(),
                epoch: match p.plan.epoch {
                    ChangeEpoch::Ti => "ti",
                    ChangeEpoch::Tj => "tj",
                },
                rule: p.plan.rule.name(),
                truth_pixels: p.truth_pixels,
                method: o.method.name(),
                auc: ok.map_or(f64::NAN, |r| r.auc),
                dist: ok.map_or(f64::NAN, |r| r.dist),
                runtime_s: ok.map_or(f64::NAN, |r| r.runtime_s),
                error: o
                    .report
                    .as_ref()
                    .err()
                    .map(ToString::to_string)
                    .unwrap_or_default(),
            }
        })
    });
    write_csv(&out.join("pairs.csv"), rows)?;

    let mut aggregate = Vec::new();
    for scenario in [Scenario::Pan, Scenario::Ms] {
        let group: Vec<Vec<MethodOutcome>> = pairs
            .iter()
            .filter(|p| p.plan.scenario == scenario)
            .map(|p| {
                p.outcomes
                    .iter()
                    .map(|o| MethodOutcome {
                        method: o.method,
                        report: o.report.clone(),
                    })
                    .collect()
            })
            .collect();
        aggregate.push((scenario, summarize(&group)?));
    }
    write_csv(
        &out.join("aggregate.csv"),
        aggregate
            .iter()
            .flat_map(|(s, summary)| summary_rows(summary, s.name())),
    )?;
    for (scenario, summary) in &aggregate {
        for s in summary {
            run.log(format!(
                "{} {}: mean auc {:.4}, pooled auc {:.4}, {} failures",
                scenario.name(),
                s.method,
                s.mean_auc,
                s.pooled_auc,
                s.failures
            ));
        }
    }
    if pairs
        .iter()
        .all(|p| p.outcomes.iter().all(|o| o.report.is_err()))
    {
        return Err(CliError::Data("every pair of the suite failed".into()));
    }
    Ok(out)
}
