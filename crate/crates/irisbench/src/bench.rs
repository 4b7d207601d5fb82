//! Benchmark orchestration: sweeps the obfuscation parameter grid over a
//! dataset, scoring each grid point for recognition privacy, attack risk,
//! segmentation utility, gaze utility, and per-image obfuscation runtime.
//!
//! Wall-clock numbers appear only in the markdown report; the CSV outputs
//! hold nothing machine-dependent, so two runs with the same config produce
//! byte-identical CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::gaze::{
    evaluate_gaze_gt, fit_on_enroll, proxy_probe, summarize_proxy, GazeMetrics, GazeModel,
    ProxyProbe,
};
use crate::imagecore::RngSeed;
use crate::obfuscation::{assign_donor, obfuscate, realize_method, MethodSpec};
use crate::recognition::{
    score_probe, segment_for_scoring, summarize_outcomes, PrivacyMetrics, ProbeOutcome,
    Recognizer, Thresholds,
};
use crate::synthgen::{generate_dataset, load_dataset, Dataset, EyeSample};
use crate::{Error, Result};

/// Sweep configuration. Parsed from a flat `key = value` text file; every
/// field has a default, so an empty file runs the full default benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Directory holding a saved dataset. When unset, a synthetic dataset
    /// of `identities` x `samples_per_identity` is generated in memory.
    pub dataset: Option<PathBuf>,
    pub identities: usize,
    pub samples_per_identity: usize,
    /// Seed for dataset synthesis (ignored when `dataset` is set).
    pub master_seed: u64,
    /// Seed for the per-probe donor and noise streams.
    pub run_seed: u64,
    /// Seed for the shared feature extractor (c2 templates and style transfer).
    pub extractor_seed: u64,
    pub blur_sigmas: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub downsample_scales: Vec<f64>,
    pub rubber_sheet: bool,
    pub style_iterations: Vec<usize>,
    /// Fraction of the probe split evaluated on style-transfer rows.
    pub style_fraction: f64,
    /// Worker threads for the per-sample parallel sections; 0 = one per core.
    pub workers: usize,
    /// Soft per-row wall-clock budget in seconds; rows that exceed it are
    /// flagged in the markdown report. 0 disables the check.
    pub time_budget_s: f64,
    pub out_dir: PathBuf,
}

impl Default for BenchConfig {
    fn default() -> BenchConfig {
        BenchConfig {
            dataset: None,
            identities: 20,
            samples_per_identity: 10,
            master_seed: 77,
            run_seed: 11,
            extractor_seed: 202,
            blur_sigmas: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            noise_sigmas: vec![0.01, 0.05, 0.1, 0.2, 0.5],
            downsample_scales: vec![1.5, 2.0, 3.0, 4.0, 5.0],
            rubber_sheet: true,
            style_iterations: vec![1, 10, 50, 100, 200],
            style_fraction: 0.25,
            workers: 0,
            time_budget_s: 0.0,
            out_dir: PathBuf::from("bench_out"),
        }
    }
}

impl BenchConfig {
    /// Parses the flat `key = value` format. Blank lines and `#` comments
    /// are skipped; later assignments override earlier ones; unknown keys
    /// are rejected so typos cannot silently fall back to defaults.
    pub fn parse(text: &str) -> Result<BenchConfig> {
        let mut cfg = BenchConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let n = idx + 1;
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {n}: expected key = value, got {line:?}"
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dataset" => {
                    cfg.dataset = if value.is_empty() {
                        None
                    } else {
                        Some(PathBuf::from(value))
                    };
                }
                "identities" => cfg.identities = parse_scalar(n, key, value)?,
                "samples_per_identity" => {
                    cfg.samples_per_identity = parse_scalar(n, key, value)?
                }
                "master_seed" => cfg.master_seed = parse_scalar(n, key, value)?,
                "run_seed" => cfg.run_seed = parse_scalar(n, key, value)?,
                "extractor_seed" => cfg.extractor_seed = parse_scalar(n, key, value)?,
                "blur_sigmas" => cfg.blur_sigmas = parse_list(n, key, value)?,
                "noise_sigmas" => cfg.noise_sigmas = parse_list(n, key, value)?,
                "downsample_scales" => cfg.downsample_scales = parse_list(n, key, value)?,
                "rubber_sheet" => cfg.rubber_sheet = parse_scalar(n, key, value)?,
                "style_iterations" => cfg.style_iterations = parse_list(n, key, value)?,
                "style_fraction" => cfg.style_fraction = parse_scalar(n, key, value)?,
                "workers" => cfg.workers = parse_scalar(n, key, value)?,
                "time_budget_s" => cfg.time_budget_s = parse_scalar(n, key, value)?,
                "out" => cfg.out_dir = PathBuf::from(value),
                _ => {
                    return Err(Error::Config(format!("line {n}: unknown key {key:?}")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<BenchConfig> {
        BenchConfig::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.identities < 2 {
            return Err(Error::Config("identities must be at least 2".into()));
        }
        if self.samples_per_identity < 2 {
            return Err(Error::Config(
                "samples_per_identity must be at least 2".into(),
            ));
        }
        if self.blur_sigmas.is_empty()
            || self.noise_sigmas.is_empty()
            || self.downsample_scales.is_empty()
            || self.style_iterations.is_empty()
        {
            return Err(Error::Config("parameter grids must be non-empty".into()));
        }
        if self.blur_sigmas.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("blur sigmas must be positive".into()));
        }
        if self.noise_sigmas.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::Config("noise sigmas must be non-negative".into()));
        }
        if self.downsample_scales.iter().any(|&s| !(s >= 1.0)) {
            return Err(Error::Config("downsample scales must be >= 1".into()));
        }
        if self.style_iterations.iter().any(|&e| e == 0) {
            return Err(Error::Config("style iteration counts must be >= 1".into()));
        }
        if !(self.style_fraction > 0.0 && self.style_fraction <= 1.0) {
            return Err(Error::Config("style_fraction must be in (0, 1]".into()));
        }
        if !(self.time_budget_s >= 0.0) {
            return Err(Error::Config("time_budget_s must be non-negative".into()));
        }
        Ok(())
    }

    /// The row set: baseline first, then one row per grid point in the
    /// fixed method order.
    pub fn grid(&self) -> Vec<MethodSpec> {
        let mut rows = vec![MethodSpec::None];
        rows.extend(
            self.blur_sigmas
                .iter()
                .map(|&sigma| MethodSpec::Blur { sigma }),
        );
        rows.extend(
            self.noise_sigmas
                .iter()
                .map(|&sigma| MethodSpec::Noise { sigma }),
        );
        rows.extend(
            self.downsample_scales
                .iter()
                .map(|&scale| MethodSpec::Downsample { scale }),
        );
        if self.rubber_sheet {
            rows.push(MethodSpec::RubberSheet);
        }
        rows.extend(
            self.style_iterations
                .iter()
                .map(|&iterations| MethodSpec::StyleTransfer { iterations }),
        );
        rows
    }
}

fn parse_scalar<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value for {key}: {value:?}")))
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("line {line}: bad value for {key}: {s:?}")))
        })
        .collect()
}

/// One evaluated grid point.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub spec: MethodSpec,
    pub privacy: PrivacyMetrics,
    pub gaze: GazeMetrics,
    /// Mean/median wall-clock of the obfuscate call, milliseconds per image.
    pub mean_ms: f64,
    pub median_ms: f64,
    /// Total wall-clock of the row, seconds.
    pub row_s: f64,
    pub budget_exceeded: bool,
}

/// Full sweep result.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub thresholds: Thresholds,
    /// Gaze error with ground-truth masks and glints (no obfuscation).
    pub gt_gaze_deg: f64,
    pub gt_gaze_failed: usize,
    pub n_identities: usize,
    pub n_enroll: usize,
    pub n_probes: usize,
    pub rows: Vec<BenchRow>,
}

/// Runs the full sweep. Grid points execute sequentially so their timing
/// never interleaves; the samples inside a grid point run in parallel and
/// feed order-independent reducers, so worker count cannot change results.
pub fn run(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run_inner(config))
    } else {
        run_inner(config)
    }
}

fn run_inner(config: &BenchConfig) -> Result<BenchReport> {
    let dataset = match &config.dataset {
        Some(dir) => load_dataset(dir)?,
        None => generate_dataset(
            config.identities,
            config.samples_per_identity,
            RngSeed(config.master_seed),
        )?,
    };
    let ids = dataset.identity_ids();
    if ids.len() < 2 {
        return Err(Error::InvalidState(format!(
            "benchmark needs at least 2 identities, dataset has {}",
            ids.len()
        )));
    }
    let n_enroll = dataset.enroll().count();
    let probes: Vec<&EyeSample> = dataset.probe().collect();
    if probes.is_empty() {
        return Err(Error::InvalidState("probe split is empty".into()));
    }

    let run_seed = RngSeed(config.run_seed);
    let extractor_seed = RngSeed(config.extractor_seed);
    let rec = Recognizer::enroll(&dataset, extractor_seed)?;
    let model = fit_on_enroll(&dataset)?;
    let (gt_gaze_deg, gt_gaze_failed) = evaluate_gaze_gt(&dataset, &model)?;

    let mut rows = Vec::new();
    for spec in config.grid() {
        let row = evaluate_row(&dataset, &probes, &rec, &model, &spec, config, run_seed, extractor_seed);
        eprintln!(
            "row {:<14} {:<10} {:>4} probes  acc {:.3}/{:.3}  far {:.3}/{:.3}  gaze {:.2}  {:.1}s",
            row.spec.name(),
            row.spec.param_label(),
            row.privacy.n_probes,
            row.privacy.acc_c1,
            row.privacy.acc_c2,
            row.privacy.far_c1,
            row.privacy.far_c2,
            row.gaze.mean_deg,
            row.row_s,
        );
        rows.push(row);
    }

    Ok(BenchReport {
        config: config.clone(),
        thresholds: rec.thresholds,
        gt_gaze_deg,
        gt_gaze_failed,
        n_identities: ids.len(),
        n_enroll,
        n_probes: probes.len(),
        rows,
    })
}

/// Evenly spaced deterministic subsample of `0..n`: exactly
/// `max(1, round(n * fraction))` indices.
fn subsample_indices(n: usize, fraction: f64) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..n).collect();
    }
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n);
    (0..k).map(|j| j * n / k).collect()
}

struct ProbeRecord {
    outcome: Option<ProbeOutcome>,
    proxy: Option<ProxyProbe>,
    obfuscate_ms: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_row(
    dataset: &Dataset,
    probes: &[&EyeSample],
    rec: &Recognizer,
    model: &GazeModel,
    spec: &MethodSpec,
    config: &BenchConfig,
    run_seed: RngSeed,
    extractor_seed: RngSeed,
) -> BenchRow {
    let fraction = match spec {
        MethodSpec::StyleTransfer { .. } => config.style_fraction,
        _ => 1.0,
    };
    let indices = subsample_indices(probes.len(), fraction);

    let started = Instant::now();
    // Each probe is obfuscated exactly once; recognition, gaze, and
    // segmentation metrics all read that one image. Only the obfuscate
    // call itself is timed.
    let records: Vec<ProbeRecord> = indices
        .par_iter()
        .map(|&idx| {
            let sample = probes[idx];
            let Ok(donor) = assign_donor(dataset, sample.identity_id, idx, run_seed) else {
                return ProbeRecord {
                    outcome: None,
                    proxy: None,
                    obfuscate_ms: None,
                };
            };
            let donor_id = donor.identity_id;
            let method = realize_method(spec, donor, idx, run_seed, extractor_seed);
            let (image, obfuscate_ms) = match &method {
                Some(m) => {
                    let t0 = Instant::now();
                    let out = obfuscate(sample, m);
                    let ms = t0.elapsed().as_secs_f64() * 1e3;
                    match out {
                        Ok(img) => (img, Some(ms)),
                        Err(_) => {
                            return ProbeRecord {
                                outcome: None,
                                proxy: None,
                                obfuscate_ms: None,
                            };
                        }
                    }
                }
                None => (sample.image.clone(), Some(0.0)),
            };
            // One segmentation estimate per probe image feeds recognition,
            // gaze, and the IoU columns alike; if it fails, the probe counts
            // as failed in every stream.
            match segment_for_scoring(&image) {
                Ok((seg, glints)) => ProbeRecord {
                    outcome: Some(score_probe(
                        rec,
                        &image,
                        &seg,
                        &glints.mask,
                        sample.identity_id,
                        donor_id,
                    )),
                    proxy: proxy_probe(model, sample, &seg, &glints).ok(),
                    obfuscate_ms,
                },
                Err(_) => ProbeRecord {
                    outcome: None,
                    proxy: None,
                    obfuscate_ms,
                },
            }
        })
        .collect();
    let row_s = started.elapsed().as_secs_f64();

    let outcomes: Vec<Option<ProbeOutcome>> = records.iter().map(|r| r.outcome.clone()).collect();
    let proxies: Vec<Option<ProxyProbe>> = records.iter().map(|r| r.proxy).collect();
    let mut times: Vec<f64> = records.iter().filter_map(|r| r.obfuscate_ms).collect();
    let mean_ms = if times.is_empty() {
        f64::NAN
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    };
    let median_ms = median(&mut times);

    BenchRow {
        spec: spec.clone(),
        privacy: summarize_outcomes(&outcomes, rec.thresholds),
        gaze: summarize_proxy(&proxies),
        mean_ms,
        median_ms,
        row_s,
        budget_exceeded: config.time_budget_s > 0.0 && row_s > config.time_budget_s,
    }
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Emission

/// Writes `report.csv`, `privacy.csv`, `gaze.csv`, `report.md`, and the
/// raw dump `report_raw.tsv` into `dir`. Deterministic content except for
/// wall-clock numbers, which appear only in the markdown and raw files.
pub fn emit(report: &BenchReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), render_report_csv(report))?;
    fs::write(dir.join("privacy.csv"), render_privacy_csv(report))?;
    fs::write(dir.join("gaze.csv"), render_gaze_csv(report))?;
    fs::write(dir.join("report.md"), render_markdown(report))?;
    fs::write(dir.join("report_raw.tsv"), render_raw(report))?;
    Ok(())
}

/// CSV float: fixed six decimals so output never depends on float Display
/// quirks; NaN (no scorable probe) prints as empty field.
fn csv_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.6}")
    }
}

/// Markdown float: published-table precision.
fn md_f(x: f64) -> String {
    if x.is_nan() {
        "-".into()
    } else {
        format!("{x:.3}")
    }
}

pub fn render_report_csv(report: &BenchReport) -> String {
    let mut out = String::from(
        "method,params,n_probes,acc_c1,acc_c2,far_c1,far_c2,far_any_c1,far_any_c2,\
         iou_skin,iou_sclera,iou_iris,iou_pupil,gaze_mean_deg,n_failed_rec,n_failed_gaze\n",
    );
    for row in &report.rows {
        let p = &row.privacy;
        let g = &row.gaze;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.spec.name(),
            row.spec.param_label(),
            p.n_probes,
            csv_f(p.acc_c1),
            csv_f(p.acc_c2),
            csv_f(p.far_c1),
            csv_f(p.far_c2),
            csv_f(p.far_any_c1),
            csv_f(p.far_any_c2),
            csv_f(g.skin_iou),
            csv_f(g.sclera_iou),
            csv_f(g.iris_iou),
            csv_f(g.pupil_iou),
            csv_f(g.mean_deg),
            p.n_failed,
            g.n_failed,
        );
    }
    out
}

pub fn render_privacy_csv(report: &BenchReport) -> String {
    let mut out = String::from("method,params,acc_c1,acc_c2,far_c1,far_c2,n_failed\n");
    for row in &report.rows {
        let p = &row.privacy;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.spec.name(),
            row.spec.param_label(),
            csv_f(p.acc_c1),
            csv_f(p.acc_c2),
            csv_f(p.far_c1),
            csv_f(p.far_c2),
            p.n_failed,
        );
    }
    out
}

pub fn render_gaze_csv(report: &BenchReport) -> String {
    let mut out = String::from("method,params,mean_deg,n_failed\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.spec.name(),
            row.spec.param_label(),
            csv_f(row.gaze.mean_deg),
            row.gaze.n_failed,
        );
    }
    out
}

/// Published reference numbers shown in the comparison column and the
/// reference appendix of the markdown report. These come from the original
/// deep-model evaluation; c1/c2 there are pretrained CNN classifiers and
/// m2 is an appearance-based gaze regressor that this harness does not
/// implement.
struct PaperRow {
    method: &'static str,
    params: &'static str,
    acc_c1: f64,
    acc_c2: f64,
    far_c1: f64,
    far_c2: f64,
    iou: [f64; 4],
    m1: f64,
    m2: f64,
}

#[rustfmt::skip]
const PAPER_REFERENCE: &[PaperRow] = &[
    PaperRow { method: "none", params: "", acc_c1: 0.962, acc_c2: 0.978, far_c1: 0.001, far_c2: 0.000, iou: [0.995, 0.932, 0.956, 0.945], m1: 6.970, m2: 3.190 },
    PaperRow { method: "blur", params: "sigma=1", acc_c1: 0.959, acc_c2: 0.964, far_c1: 0.001, far_c2: 0.000, iou: [0.995, 0.932, 0.956, 0.945], m1: 6.970, m2: 3.193 },
    PaperRow { method: "blur", params: "sigma=2", acc_c1: 0.953, acc_c2: 0.963, far_c1: 0.001, far_c2: 0.000, iou: [0.995, 0.932, 0.956, 0.944], m1: 6.971, m2: 3.197 },
    PaperRow { method: "blur", params: "sigma=3", acc_c1: 0.951, acc_c2: 0.963, far_c1: 0.001, far_c2: 0.000, iou: [0.995, 0.932, 0.956, 0.944], m1: 6.970, m2: 3.198 },
    PaperRow { method: "blur", params: "sigma=4", acc_c1: 0.951, acc_c2: 0.963, far_c1: 0.001, far_c2: 0.000, iou: [0.995, 0.932, 0.956, 0.944], m1: 6.971, m2: 3.199 },
    PaperRow { method: "blur", params: "sigma=5", acc_c1: 0.949, acc_c2: 0.963, far_c1: 0.001, far_c2: 0.001, iou: [0.995, 0.932, 0.956, 0.944], m1: 6.970, m2: 3.199 },
    PaperRow { method: "noise", params: "sigma=0.01", acc_c1: 0.961, acc_c2: 0.975, far_c1: 0.001, far_c2: 0.000, iou: [0.995, 0.932, 0.956, 0.945], m1: 6.970, m2: 3.189 },
    PaperRow { method: "noise", params: "sigma=0.05", acc_c1: 0.950, acc_c2: 0.964, far_c1: 0.001, far_c2: 0.002, iou: [0.995, 0.932, 0.956, 0.945], m1: 6.970, m2: 3.192 },
    PaperRow { method: "noise", params: "sigma=0.1", acc_c1: 0.949, acc_c2: 0.963, far_c1: 0.002, far_c2: 0.002, iou: [0.995, 0.932, 0.955, 0.942], m1: 6.970, m2: 3.199 },
    PaperRow { method: "noise", params: "sigma=0.2", acc_c1: 0.948, acc_c2: 0.963, far_c1: 0.002, far_c2: 0.002, iou: [0.995, 0.931, 0.953, 0.936], m1: 6.975, m2: 3.217 },
    PaperRow { method: "noise", params: "sigma=0.5", acc_c1: 0.948, acc_c2: 0.963, far_c1: 0.001, far_c2: 0.000, iou: [0.995, 0.929, 0.947, 0.931], m1: 7.019, m2: 3.259 },
    PaperRow { method: "downsample", params: "s=1.5", acc_c1: 0.831, acc_c2: 0.222, far_c1: 0.001, far_c2: 0.006, iou: [0.995, 0.925, 0.944, 0.917], m1: 7.039, m2: 3.425 },
    PaperRow { method: "downsample", params: "s=2", acc_c1: 0.662, acc_c2: 0.150, far_c1: 0.004, far_c2: 0.007, iou: [0.995, 0.924, 0.940, 0.903], m1: 7.042, m2: 3.872 },
    PaperRow { method: "downsample", params: "s=3", acc_c1: 0.462, acc_c2: 0.070, far_c1: 0.006, far_c2: 0.004, iou: [0.994, 0.923, 0.935, 0.883], m1: 7.053, m2: 4.353 },
    PaperRow { method: "downsample", params: "s=4", acc_c1: 0.344, acc_c2: 0.031, far_c1: 0.008, far_c2: 0.006, iou: [0.994, 0.922, 0.932, 0.865], m1: 7.080, m2: 4.854 },
    PaperRow { method: "downsample", params: "s=5", acc_c1: 0.278, acc_c2: 0.026, far_c1: 0.009, far_c2: 0.005, iou: [0.994, 0.922, 0.930, 0.850], m1: 7.108, m2: 5.287 },
    PaperRow { method: "rubber_sheet", params: "", acc_c1: 0.069, acc_c2: 0.025, far_c1: 0.245, far_c2: 0.369, iou: [0.994, 0.918, 0.931, 0.897], m1: 7.008, m2: 19.574 },
    PaperRow { method: "style_transfer", params: "e=1", acc_c1: 0.835, acc_c2: 0.175, far_c1: 0.005, far_c2: 0.041, iou: [0.995, 0.928, 0.949, 0.933], m1: 7.016, m2: 3.187 },
    PaperRow { method: "style_transfer", params: "e=10", acc_c1: 0.835, acc_c2: 0.175, far_c1: 0.005, far_c2: 0.041, iou: [0.995, 0.928, 0.949, 0.933], m1: 7.016, m2: 3.187 },
    PaperRow { method: "style_transfer", params: "e=50", acc_c1: 0.773, acc_c2: 0.112, far_c1: 0.008, far_c2: 0.054, iou: [0.995, 0.927, 0.948, 0.930], m1: 6.976, m2: 3.199 },
    PaperRow { method: "style_transfer", params: "e=100", acc_c1: 0.742, acc_c2: 0.093, far_c1: 0.011, far_c2: 0.054, iou: [0.995, 0.927, 0.947, 0.928], m1: 6.988, m2: 3.214 },
    PaperRow { method: "style_transfer", params: "e=200", acc_c1: 0.696, acc_c2: 0.064, far_c1: 0.012, far_c2: 0.062, iou: [0.995, 0.925, 0.945, 0.924], m1: 7.026, m2: 3.329 },
];

fn paper_row(spec: &MethodSpec) -> Option<&'static PaperRow> {
    let name = spec.name();
    let params = spec.param_label();
    PAPER_REFERENCE
        .iter()
        .find(|r| r.method == name && r.params == params)
}

fn method_display(spec: &MethodSpec) -> &'static str {
    match spec {
        MethodSpec::None => "baseline",
        MethodSpec::Blur { .. } => "blur",
        MethodSpec::Noise { .. } => "noise",
        MethodSpec::Downsample { .. } => "downsample",
        MethodSpec::RubberSheet => "rubber sheet",
        MethodSpec::StyleTransfer { .. } => "style transfer",
    }
}

pub fn render_markdown(report: &BenchReport) -> String {
    let cfg = &report.config;
    let mut out = String::new();
    let _ = writeln!(out, "# Iris obfuscation benchmark\n");
    match &cfg.dataset {
        Some(dir) => {
            let _ = writeln!(
                out,
                "Dataset: loaded from `{}` ({} identities, {} enroll / {} probe samples).",
                dir.display(),
                report.n_identities,
                report.n_enroll,
                report.n_probes,
            );
        }
        None => {
            let _ = writeln!(
                out,
                "Dataset: synthetic, {} identities x {} samples (master seed {}), \
                 {} enroll / {} probe samples.",
                cfg.identities,
                cfg.samples_per_identity,
                cfg.master_seed,
                report.n_enroll,
                report.n_probes,
            );
        }
    }
    let _ = writeln!(
        out,
        "Seeds: run {}, extractor {}. Frozen thresholds: tau1 = {:.6} (c1 Hamming), \
         tau2 = {:.6} (c2 distance), both fit at the equal-error point on enrollment data.",
        cfg.run_seed, cfg.extractor_seed, report.thresholds.tau1, report.thresholds.tau2,
    );
    let _ = writeln!(
        out,
        "Gaze fit sanity (ground-truth masks, no obfuscation): mean error {:.3} deg \
         over {} probes ({} failed).",
        report.gt_gaze_deg,
        report.n_probes - report.gt_gaze_failed,
        report.gt_gaze_failed,
    );
    let _ = writeln!(
        out,
        "Style-transfer rows evaluate a {:.0}% probe subsample; `n` is per row.\n",
        cfg.style_fraction * 100.0,
    );

    let _ = writeln!(out, "## Results\n");
    let _ = writeln!(
        out,
        "| method | params | n | acc c1 | acc c2 | far c1 | far c2 | IoU skin | IoU sclera \
         | IoU iris | IoU pupil | gaze m1 (deg) | mean ms | median ms | failed (rec/gaze) \
         | paper (deep models) |",
    );
    let _ = writeln!(
        out,
        "|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|",
    );
    for row in &report.rows {
        let p = &row.privacy;
        let g = &row.gaze;
        let runtime = if row.spec == MethodSpec::None {
            ("-".to_string(), "-".to_string())
        } else {
            (md_f(row.mean_ms), md_f(row.median_ms))
        };
        let reference = match paper_row(&row.spec) {
            Some(r) => format!(
                "acc {:.3}/{:.3}, far {:.3}/{:.3}, m1 {:.3} deg",
                r.acc_c1, r.acc_c2, r.far_c1, r.far_c2, r.m1,
            ),
            None => "-".into(),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {}/{} | {} |",
            method_display(&row.spec),
            if row.spec.param_label().is_empty() {
                "-".into()
            } else {
                row.spec.param_label()
            },
            p.n_probes,
            md_f(p.acc_c1),
            md_f(p.acc_c2),
            md_f(p.far_c1),
            md_f(p.far_c2),
            md_f(g.skin_iou),
            md_f(g.sclera_iou),
            md_f(g.iris_iou),
            md_f(g.pupil_iou),
            md_f(g.mean_deg),
            runtime.0,
            runtime.1,
            p.n_failed,
            g.n_failed,
            reference,
        );
    }

    if report.rows.iter().any(|r| r.budget_exceeded) {
        let _ = writeln!(out);
        for row in report.rows.iter().filter(|r| r.budget_exceeded) {
            let _ = writeln!(
                out,
                "- Budget: row {} {} took {:.1}s, over the {:.1}s per-row budget.",
                row.spec.name(),
                row.spec.param_label(),
                row.row_s,
                cfg.time_budget_s,
            );
        }
    }

    let _ = writeln!(out, "\n## Reference: paper (deep models)\n");
    let _ = writeln!(
        out,
        "Published results this harness is compared against. There, c1 is a pretrained \
         feed-forward CNN classifier, c2 a style-feature classifier over pretrained CNN \
         feature maps, m1 a model-based gaze estimator, and m2 an appearance-based deep \
         gaze regressor (not implemented here).\n",
    );
    let _ = writeln!(
        out,
        "| method | params | acc c1 | acc c2 | far c1 | far c2 | IoU skin | IoU sclera \
         | IoU iris | IoU pupil | m1 (deg) | m2 (deg) |",
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|---|---|");
    for r in PAPER_REFERENCE {
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
            r.method.replace('_', " "),
            if r.params.is_empty() { "-" } else { r.params },
            r.acc_c1,
            r.acc_c2,
            r.far_c1,
            r.far_c2,
            r.iou[0],
            r.iou[1],
            r.iou[2],
            r.iou[3],
            r.m1,
            r.m2,
        );
    }

    let _ = writeln!(out, "\n## Caveats\n");
    let _ = writeln!(
        out,
        "- Substitution: c1 here is a classical Gabor-phase iris code matched by \
         rotation-searched Hamming distance, not the pretrained deep CNN behind the \
         reference numbers. Absolute values are not comparable; only orderings are.",
    );
    let _ = writeln!(
        out,
        "- Expected divergence: blur and noise degrade this Gabor matcher more than \
         the reference deep classifiers, where canonical image processing had only a \
         marginal impact on accuracy. Low-pass and additive perturbations directly \
         attenuate the band-limited phase structure the Gabor code quantizes.",
    );
    let _ = writeln!(
        out,
        "- The c2 classifier uses style features from a fixed random-weight extractor \
         rather than pretrained network features; the m2 appearance-based gaze row of \
         the reference table has no counterpart here.",
    );
    let _ = writeln!(
        out,
        "- Runtimes are wall-clock per obfuscate call (mean/median over the row's \
         probes) and vary across machines and runs; they appear only in this markdown \
         file so the CSV outputs stay byte-identical for identical configs.",
    );
    let _ = writeln!(
        out,
        "- Sample sizes: every cell reports its own `n`; style-transfer rows use the \
         configured probe subsample.",
    );
    out
}

// ---------------------------------------------------------------------------
// Raw dump: full-precision persistence so reports can be re-rendered
// without re-running the sweep.

pub fn render_raw(report: &BenchReport) -> String {
    let cfg = &report.config;
    let mut out = String::from("# raw bench report v1\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}\t{v}");
    };
    kv(
        "dataset",
        cfg.dataset
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    );
    kv("identities", cfg.identities.to_string());
    kv("samples_per_identity", cfg.samples_per_identity.to_string());
    kv("master_seed", cfg.master_seed.to_string());
    kv("run_seed", cfg.run_seed.to_string());
    kv("extractor_seed", cfg.extractor_seed.to_string());
    kv("style_fraction", cfg.style_fraction.to_string());
    kv("time_budget_s", cfg.time_budget_s.to_string());
    kv("tau1", report.thresholds.tau1.to_string());
    kv("tau2", report.thresholds.tau2.to_string());
    kv("gt_gaze_deg", report.gt_gaze_deg.to_string());
    kv("gt_gaze_failed", report.gt_gaze_failed.to_string());
    kv("n_identities", report.n_identities.to_string());
    kv("n_enroll", report.n_enroll.to_string());
    kv("n_probes", report.n_probes.to_string());
    for row in &report.rows {
        let p = &row.privacy;
        let g = &row.gaze;
        let fields = [
            row.spec.name().to_string(),
            row.spec.param_label(),
            p.n_probes.to_string(),
            p.acc_c1.to_string(),
            p.acc_c2.to_string(),
            p.far_c1.to_string(),
            p.far_c2.to_string(),
            p.far_any_c1.to_string(),
            p.far_any_c2.to_string(),
            p.n_failed.to_string(),
            g.mean_deg.to_string(),
            g.skin_iou.to_string(),
            g.sclera_iou.to_string(),
            g.iris_iou.to_string(),
            g.pupil_iou.to_string(),
            g.n_failed.to_string(),
            g.n_probes.to_string(),
            row.mean_ms.to_string(),
            row.median_ms.to_string(),
            row.row_s.to_string(),
            row.budget_exceeded.to_string(),
        ];
        let _ = writeln!(out, "row\t{}", fields.join("\t"));
    }
    out
}

fn parse_spec(name: &str, params: &str) -> Result<MethodSpec> {
    let bad = || Error::Config(format!("raw report: bad method row {name:?} {params:?}"));
    let value = || params.split_once('=').map(|(_, v)| v).ok_or_else(bad);
    Ok(match name {
        "none" => MethodSpec::None,
        "rubber_sheet" => MethodSpec::RubberSheet,
        "blur" => MethodSpec::Blur {
            sigma: value()?.parse().map_err(|_| bad())?,
        },
        "noise" => MethodSpec::Noise {
            sigma: value()?.parse().map_err(|_| bad())?,
        },
        "downsample" => MethodSpec::Downsample {
            scale: value()?.parse().map_err(|_| bad())?,
        },
        "style_transfer" => MethodSpec::StyleTransfer {
            iterations: value()?.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    })
}

/// Parses `render_raw` output. Grids in the reconstructed config are
/// rebuilt from the row set, so re-rendered reports echo the grid that
/// actually ran.
pub fn parse_raw(text: &str) -> Result<BenchReport> {
    let mut cfg = BenchConfig::default();
    let mut thresholds = Thresholds {
        tau1: f64::NAN,
        tau2: f64::NAN,
    };
    let mut gt_gaze_deg = f64::NAN;
    let mut gt_gaze_failed = 0usize;
    let mut n_identities = 0usize;
    let mut n_enroll = 0usize;
    let mut n_probes = 0usize;
    let mut rows = Vec::new();
    cfg.blur_sigmas.clear();
    cfg.noise_sigmas.clear();
    cfg.downsample_scales.clear();
    cfg.style_iterations.clear();
    cfg.rubber_sheet = false;

    let field_err = |k: &str| Error::Config(format!("raw report: bad value for {k}"));
    for line in text.lines() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let key = parts.next().unwrap_or_default();
        if key != "row" {
            let value = parts.next().unwrap_or_default();
            match key {
                "dataset" => {
                    cfg.dataset = if value.is_empty() {
                        None
                    } else {
                        Some(PathBuf::from(value))
                    };
                }
                "identities" => cfg.identities = value.parse().map_err(|_| field_err(key))?,
                "samples_per_identity" => {
                    cfg.samples_per_identity = value.parse().map_err(|_| field_err(key))?
                }
                "master_seed" => cfg.master_seed = value.parse().map_err(|_| field_err(key))?,
                "run_seed" => cfg.run_seed = value.parse().map_err(|_| field_err(key))?,
                "extractor_seed" => {
                    cfg.extractor_seed = value.parse().map_err(|_| field_err(key))?
                }
                "style_fraction" => {
                    cfg.style_fraction = value.parse().map_err(|_| field_err(key))?
                }
                "time_budget_s" => {
                    cfg.time_budget_s = value.parse().map_err(|_| field_err(key))?
                }
                "tau1" => thresholds.tau1 = value.parse().map_err(|_| field_err(key))?,
                "tau2" => thresholds.tau2 = value.parse().map_err(|_| field_err(key))?,
                "gt_gaze_deg" => gt_gaze_deg = value.parse().map_err(|_| field_err(key))?,
                "gt_gaze_failed" => {
                    gt_gaze_failed = value.parse().map_err(|_| field_err(key))?
                }
                "n_identities" => n_identities = value.parse().map_err(|_| field_err(key))?,
                "n_enroll" => n_enroll = value.parse().map_err(|_| field_err(key))?,
                "n_probes" => n_probes = value.parse().map_err(|_| field_err(key))?,
                _ => return Err(Error::Config(format!("raw report: unknown key {key:?}"))),
            }
            continue;
        }
        let fields: Vec<&str> = parts.collect();
        if fields.len() != 21 {
            return Err(Error::Config(format!(
                "raw report: row needs 21 fields, got {}",
                fields.len()
            )));
        }
        let spec = parse_spec(fields[0], fields[1])?;
        let pf = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Config(format!("raw report: bad row field {i}")))
        };
        let pu = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| Error::Config(format!("raw report: bad row field {i}")))
        };
        match &spec {
            MethodSpec::None => {}
            MethodSpec::Blur { sigma } => cfg.blur_sigmas.push(*sigma),
            MethodSpec::Noise { sigma } => cfg.noise_sigmas.push(*sigma),
            MethodSpec::Downsample { scale } => cfg.downsample_scales.push(*scale),
            MethodSpec::RubberSheet => cfg.rubber_sheet = true,
            MethodSpec::StyleTransfer { iterations } => cfg.style_iterations.push(*iterations),
        }
        let n_row = pu(2)?;
        rows.push(BenchRow {
            spec,
            privacy: PrivacyMetrics {
                acc_c1: pf(3)?,
                acc_c2: pf(4)?,
                far_c1: pf(5)?,
                far_c2: pf(6)?,
                far_any_c1: pf(7)?,
                far_any_c2: pf(8)?,
                n_failed: pu(9)?,
                n_probes: n_row,
            },
            gaze: GazeMetrics {
                mean_deg: pf(10)?,
                skin_iou: pf(11)?,
                sclera_iou: pf(12)?,
                iris_iou: pf(13)?,
                pupil_iou: pf(14)?,
                n_failed: pu(15)?,
                n_probes: pu(16)?,
            },
            mean_ms: pf(17)?,
            median_ms: pf(18)?,
            row_s: pf(19)?,
            budget_exceeded: fields[20] == "true",
        });
    }
    if rows.is_empty() {
        return Err(Error::Config("raw report: no rows".into()));
    }
    Ok(BenchReport {
        config: cfg,
        thresholds,
        gt_gaze_deg,
        gt_gaze_failed,
        n_identities,
        n_enroll,
        n_probes,
        rows,
    })
}

pub fn load_raw(dir: &Path) -> Result<BenchReport> {
    parse_raw(&fs::read_to_string(dir.join("report_raw.tsv"))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    // Smallest dataset that still supports the gaze fit (24 enroll pairs).
    fn tiny_config() -> BenchConfig {
        BenchConfig {
            identities: 6,
            samples_per_identity: 8,
            master_seed: 5,
            run_seed: 6,
            extractor_seed: 7,
            blur_sigmas: vec![2.0],
            noise_sigmas: vec![0.1],
            downsample_scales: vec![3.0],
            rubber_sheet: true,
            style_iterations: vec![2],
            style_fraction: 1.0,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn default_grid_matches_published_shape() {
        let rows = BenchConfig::default().grid();
        assert_eq!(rows.len(), 22);
        assert_eq!(rows[0], MethodSpec::None);
        let names: Vec<&str> = rows.iter().map(|s| s.name()).collect();
        assert_eq!(names.iter().filter(|n| **n == "blur").count(), 5);
        assert_eq!(names.iter().filter(|n| **n == "noise").count(), 5);
        assert_eq!(names.iter().filter(|n| **n == "downsample").count(), 5);
        assert_eq!(names.iter().filter(|n| **n == "rubber_sheet").count(), 1);
        assert_eq!(names.iter().filter(|n| **n == "style_transfer").count(), 5);
        // Every default grid point has a published reference row.
        assert!(rows.iter().all(|s| paper_row(s).is_some()));
    }

    #[test]
    fn config_parses_flat_keys() {
        let cfg = BenchConfig::parse(
            "# comment\n\
             identities = 4\n\
             samples_per_identity = 6\n\
             blur_sigmas = 1, 2.5\n\
             rubber_sheet = false\n\
             style_iterations = 3\n\
             style_fraction = 0.5\n\
             out = somewhere/else\n",
        )
        .unwrap();
        assert_eq!(cfg.identities, 4);
        assert_eq!(cfg.samples_per_identity, 6);
        assert_eq!(cfg.blur_sigmas, vec![1.0, 2.5]);
        assert!(!cfg.rubber_sheet);
        assert_eq!(cfg.style_iterations, vec![3]);
        assert_eq!(cfg.style_fraction, 0.5);
        assert_eq!(cfg.out_dir, PathBuf::from("somewhere/else"));
        // Defaults survive for unset keys.
        assert_eq!(cfg.noise_sigmas.len(), 5);
    }

    #[test]
    fn config_rejects_bad_input() {
        assert!(BenchConfig::parse("unknown_key = 3").is_err());
        assert!(BenchConfig::parse("identities").is_err());
        assert!(BenchConfig::parse("identities = ten").is_err());
        assert!(BenchConfig::parse("identities = 1").is_err());
        assert!(BenchConfig::parse("blur_sigmas = ").is_err());
        assert!(BenchConfig::parse("style_fraction = 0").is_err());
        assert!(BenchConfig::parse("downsample_scales = 0.5").is_err());
    }

    #[test]
    fn subsample_is_even_and_exact() {
        assert_eq!(subsample_indices(8, 1.0), (0..8).collect::<Vec<_>>());
        assert_eq!(subsample_indices(8, 0.5), vec![0, 2, 4, 6]);
        assert_eq!(subsample_indices(100, 0.25).len(), 25);
        assert_eq!(subsample_indices(3, 0.01), vec![0]);
        let idx = subsample_indices(10, 0.3);
        assert_eq!(idx.len(), 3);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn median_handles_odd_even_empty() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn tiny_sweep_produces_full_report() {
        let cfg = tiny_config();
        let report = run(&cfg).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert_eq!(report.n_identities, 6);
        assert_eq!(report.n_enroll, 24);
        assert_eq!(report.n_probes, 24);
        for row in &report.rows {
            assert_eq!(row.privacy.n_probes, 24, "row {}", row.spec.name());
            assert_eq!(row.gaze.n_probes, 24);
            assert!(row.privacy.n_failed <= row.privacy.n_probes);
            if row.spec != MethodSpec::None {
                assert!(row.mean_ms >= 0.0 && row.median_ms >= 0.0);
            }
        }
        let base = &report.rows[0];
        assert!(base.privacy.acc_c1 > 0.5, "baseline c1 {}", base.privacy.acc_c1);
        assert!(base.gaze.pupil_iou > 0.7);

        let dir = tempdir().unwrap();
        emit(&report, dir.path()).unwrap();
        for f in [
            "report.csv",
            "privacy.csv",
            "gaze.csv",
            "report.md",
            "report_raw.tsv",
        ] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }

        let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + report.rows.len());
        assert!(
            !csv.contains("mean_ms") && !csv.contains("median_ms"),
            "runtimes must stay out of the CSV"
        );
        let privacy = fs::read_to_string(dir.path().join("privacy.csv")).unwrap();
        assert!(privacy.starts_with("method,params,acc_c1,acc_c2,far_c1,far_c2,n_failed\n"));
        let gazecsv = fs::read_to_string(dir.path().join("gaze.csv")).unwrap();
        assert!(gazecsv.starts_with("method,params,mean_deg,n_failed\n"));

        let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
        let md_rows = md
            .lines()
            .skip_while(|l| !l.starts_with("| method"))
            .skip(2)
            .take_while(|l| l.starts_with('|'))
            .count();
        assert_eq!(md_rows, report.rows.len());
        assert!(md.contains("paper (deep models)"));
        assert!(md.contains("0.962"));
        assert!(md.contains("0.978"));

        // Re-emit over the same directory: byte-identical markdown and CSVs.
        let before = fs::read_to_string(dir.path().join("report.md")).unwrap();
        emit(&report, dir.path()).unwrap();
        assert_eq!(before, fs::read_to_string(dir.path().join("report.md")).unwrap());

        // Raw dump round-trips to identical renders.
        let loaded = load_raw(dir.path()).unwrap();
        assert_eq!(render_report_csv(&loaded), csv);
        assert_eq!(render_markdown(&loaded), md);
    }

    #[test]
    fn reruns_are_byte_identical_on_csv() {
        let cfg = BenchConfig {
            rubber_sheet: true,
            blur_sigmas: vec![1.5],
            noise_sigmas: vec![0.2],
            downsample_scales: vec![2.0],
            style_iterations: vec![1],
            ..tiny_config()
        };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(render_report_csv(&a), render_report_csv(&b));
        assert_eq!(render_privacy_csv(&a), render_privacy_csv(&b));
        assert_eq!(render_gaze_csv(&a), render_gaze_csv(&b));
    }

    #[test]
    fn style_rows_subsample_probes() {
        let cfg = BenchConfig {
            style_fraction: 0.5,
            ..tiny_config()
        };
        let report = run(&cfg).unwrap();
        let style = report
            .rows
            .iter()
            .find(|r| matches!(r.spec, MethodSpec::StyleTransfer { .. }))
            .unwrap();
        let blur = report
            .rows
            .iter()
            .find(|r| matches!(r.spec, MethodSpec::Blur { .. }))
            .unwrap();
        assert_eq!(style.privacy.n_probes, 12);
        assert_eq!(blur.privacy.n_probes, 24);
    }
}
