//! Experiment runner: random permutations, train/test splits, parameter
//! sweeps, CRPS and calibration summaries, and their CSV/JSON output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ccps::{conservative_p, fit_ccps, make_folds};
use crate::conformity::{ConformityMeasureSpec, NwParams};
use crate::data::{Dataset, Observation};
use crate::distribution::TauSource;
use crate::error::{Error, Result};
use crate::metrics::{BoxStats, CalibrationCurve, calibration_curve, crps_crisp, ks_distance_uniform, pit_values};
use crate::regressors::{RegressorKind, RegressorSpec};
use crate::scps::{Split, fit_scps};
use crate::synth::{Generator, generate};

/// Reads a numeric CSV whose last column is the label.
///
/// A first line with any non-numeric cell is taken as a header and
/// skipped. Blank lines are ignored.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(fs::File::open(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(k as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if k == 0 && width.is_none() && parsed.iter().any(|v| v.is_err()) {
            width = Some(record.len());
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(line, format!("expected {w} fields, found {}", record.len())));
            }
            _ => {}
        }
        if record.len() < 2 {
            return Err(parse_err(line, "need at least one feature and a label".into()));
        }
        let mut row = Vec::with_capacity(record.len());
        for (cell, value) in record.iter().zip(parsed) {
            match value {
                Ok(v) if v.is_finite() => row.push(v),
                _ => return Err(parse_err(line, format!("`{cell}` is not a finite number"))),
            }
        }
        ys.push(row.pop().unwrap());
        xs.push(row);
    }
    if ys.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::from_rows(xs, ys)
}

/// Per-feature training means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: &Dataset) -> Result<Scaler> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = train.len() as f64;
        let d = train.feature_dim();
        let mut means = vec![0.0; d];
        for o in train {
            for (m, v) in means.iter_mut().zip(o.x()) {
                *m += v / n;
            }
        }
        let mut stds = vec![0.0; d];
        for o in train {
            for ((s, v), m) in stds.iter_mut().zip(o.x()).zip(&means) {
                *s += (v - m) * (v - m) / n;
            }
        }
        stds.iter_mut().for_each(|s| *s = s.sqrt());
        Ok(Scaler { means, stds })
    }

    /// `(x - mean) / std`, with zero-variance features mapped to 0.
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let obs = data
            .iter()
            .map(|o| {
                data.check_dim(o.x())?;
                let x = o
                    .x()
                    .iter()
                    .zip(self.means.iter().zip(&self.stds))
                    .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
                    .collect();
                Observation::new(x, o.y())
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(obs)
    }
}

/// Scales `train` and every dataset in `others` with the training
/// statistics.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, Scaler)> {
    let scaler = Scaler::fit(train)?;
    let others = others.iter().map(|d| scaler.transform(d)).collect::<Result<_>>()?;
    Ok((scaler.transform(train)?, others, scaler))
}

pub const RIDGE_GRID: [f64; 5] = [0.0, 0.01, 0.1, 1.0, 10.0];
pub const KNN_GRID: [usize; 5] = [1, 3, 5, 10, 20];

/// Picks the hyperparameter with the smallest cross-validated mean squared
/// error over contiguous folds; ties go to the earlier grid entry. Least
/// squares has nothing to tune and is returned unchanged.
pub fn tune(spec: &RegressorSpec, train: &Dataset, folds: usize) -> Result<RegressorSpec> {
    if spec.kind == RegressorKind::LeastSquares {
        return Ok(spec.clone());
    }
    if train.len() < folds.max(3) {
        return Err(Error::invalid(format!("tuning needs at least {} observations", folds.max(3))));
    }
    let partition = make_folds(train.len(), folds)?;
    let smallest_fit = (0..folds).map(|k| train.len() - partition.fold(k).len()).min().unwrap();
    let candidates: Vec<RegressorSpec> = match spec.kind {
        RegressorKind::Ridge => RIDGE_GRID
            .iter()
            .map(|&l| RegressorSpec {
                ridge_lambda: l,
                ..spec.clone()
            })
            .collect(),
        RegressorKind::Knn => KNN_GRID
            .iter()
            .filter(|&&k| k <= smallest_fit)
            .map(|&k| RegressorSpec {
                knn_k: k,
                ..spec.clone()
            })
            .collect(),
        RegressorKind::LeastSquares => unreachable!(),
    };
    let mut best: Option<(f64, RegressorSpec)> = None;
    for cand in candidates {
        let mut sse = 0.0;
        for k in 0..folds {
            let fitted = cand.fit(&train.subset(&partition.complement(k))?)?;
            for &i in partition.fold(k) {
                let o = train.get(i);
                sse += (o.y() - fitted.predict(o.x())?).powi(2);
            }
        }
        let mse = sse / train.len() as f64;
        if best.as_ref().is_none_or(|(b, _)| mse < *b) {
            best = Some((mse, cand));
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::invalid("no feasible hyperparameter"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synth { generator: Generator, n: usize, noise: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Simple,
    Normalized,
    Nw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Crps,
    Calibration,
}

/// `0.01, 0.05, 0.10, ..., 0.95, 0.99`.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut g = vec![0.01];
    g.extend((1..20).map(|k| k as f64 / 20.0));
    g.push(0.99);
    g
}

/// `0.01, 0.02, ..., 0.99`.
pub fn calibration_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub test_len: usize,
    pub permutations: usize,
    pub alphas: Vec<f64>,
    pub ks: Vec<usize>,
    pub regressor: RegressorSpec,
    pub measure: MeasureKind,
    pub mode: Mode,
    pub tune: bool,
    pub seed: u64,
    pub conservative_2x: bool,
}

impl ExperimentConfig {
    /// Defaults: 10 permutations, the default grids, least squares with the
    /// simple measure, CRPS mode, tuning on, seed 0.
    pub fn new(source: DataSource, test_len: usize) -> Self {
        ExperimentConfig {
            source,
            test_len,
            permutations: 10,
            alphas: default_alpha_grid(),
            ks: (2..=20).collect(),
            regressor: RegressorSpec::least_squares(),
            measure: MeasureKind::Simple,
            mode: Mode::Crps,
            tune: true,
            seed: 0,
            conservative_2x: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::invalid("at least one permutation is needed"));
        }
        if self.test_len == 0 {
            return Err(Error::invalid("test length must be positive"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::invalid(format!("alpha {a} outside (0, 1)")));
        }
        if let Some(k) = self.ks.iter().find(|k| **k < 2) {
            return Err(Error::invalid(format!("fold count {k} below 2")));
        }
        if self.mode == Mode::Calibration && (self.alphas.is_empty() || self.ks.is_empty()) {
            return Err(Error::invalid("calibration mode needs an alpha and a fold count"));
        }
        if let DataSource::Synth { n, noise, .. } = self.source {
            if n == 0 || !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::invalid("synthetic source needs n >= 1 and a finite noise >= 0"));
            }
        }
        self.regressor.validate()
    }
}

/// CRPS losses for one grid value, pooled over permutations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint<P> {
    pub param: P,
    pub losses: Vec<f64>,
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub k: usize,
    pub scps_pit: Vec<f64>,
    pub ccps_pit: Vec<f64>,
    pub scps_curve: CalibrationCurve,
    pub ccps_curve: CalibrationCurve,
    pub scps_ks: f64,
    pub ccps_ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationInfo {
    pub index: usize,
    pub stream: u64,
    pub measure: ConformityMeasureSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub scps_seconds: f64,
    pub ccps_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub dataset_size: usize,
    pub training_size: usize,
    pub skipped_alphas: Vec<f64>,
    pub skipped_ks: Vec<usize>,
    pub permutations: Vec<PermutationInfo>,
    pub scps: Vec<SweepPoint<f64>>,
    pub ccps: Vec<SweepPoint<usize>>,
    pub calibration: Option<CalibrationResult>,
    pub timings: Timings,
}

impl ExperimentReport {
    /// Grid value with the smallest median CRPS.
    pub fn best_scps(&self) -> Option<&SweepPoint<f64>> {
        self.scps.iter().min_by(|a, b| a.stats.median.total_cmp(&b.stats.median))
    }

    pub fn best_ccps(&self) -> Option<&SweepPoint<usize>> {
        self.ccps.iter().min_by(|a, b| a.stats.median.total_cmp(&b.stats.median))
    }
}

fn load_source(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.source {
        DataSource::Csv(path) => load_csv(path),
        DataSource::Synth { generator, n, noise } => generate(*generator, *n, *noise, config.seed),
    }
}

fn measure_spec(config: &ExperimentConfig, regressor: RegressorSpec, train: &Dataset) -> ConformityMeasureSpec {
    match config.measure {
        MeasureKind::Simple => ConformityMeasureSpec::Simple(regressor),
        MeasureKind::Normalized => ConformityMeasureSpec::Normalized(regressor),
        MeasureKind::Nw => {
            let n = train.len() as f64;
            let mean = train.labels().sum::<f64>() / n;
            let std = (train.labels().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
            ConformityMeasureSpec::NadarayaWatson(NwParams::sigmoid(1.0, if std > 0.0 { 0.2 * std } else { 1.0 }))
        }
    }
}

fn crisp_losses<S: crate::metrics::PredictiveSystem>(system: &S, test: &Dataset) -> Result<Vec<f64>> {
    test.iter()
        .map(|o| crps_crisp(&system.predict(o.x())?, o.y()))
        .collect()
}

/// Runs the whole protocol: for every permutation, the last `test_len`
/// observations are the test set, features are scaled and the regressor is
/// tuned on the training part, and each grid value is fitted and scored.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let data = load_source(config)?;
    if config.test_len >= data.len() {
        return Err(Error::invalid(format!(
            "test length {} leaves no training data among {} observations",
            config.test_len,
            data.len()
        )));
    }
    let n = data.len() - config.test_len;

    let mut alphas = Vec::new();
    let mut skipped_alphas = Vec::new();
    for &a in &config.alphas {
        if Split::Fraction(a).proper_size(n).is_ok() {
            alphas.push(a);
        } else {
            log::warn!("skipping alpha = {a}: no valid split of {n} training observations");
            skipped_alphas.push(a);
        }
    }
    let (ks, skipped_ks): (Vec<usize>, Vec<usize>) = config.ks.iter().partition(|&&k| k <= n);
    for k in &skipped_ks {
        log::warn!("skipping K = {k}: more folds than {n} training observations");
    }
    if config.mode == Mode::Calibration && (alphas.is_empty() || ks.is_empty()) {
        return Err(Error::invalid("the calibration alpha or fold count is infeasible"));
    }

    let mut scps_losses = vec![Vec::new(); alphas.len()];
    let mut ccps_losses = vec![Vec::new(); ks.len()];
    let mut scps_pit = Vec::new();
    let mut ccps_pit = Vec::new();
    let mut permutations = Vec::new();
    let (mut scps_seconds, mut ccps_seconds) = (0.0, 0.0);

    for p in 0..config.permutations {
        let stream = p as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let train = data.subset(&order[..n])?;
        let test = data.subset(&order[n..])?;
        let (train, scaled, _) = standardize(&train, &[&test])?;
        let test = scaled.into_iter().next().unwrap();

        let regressor = if config.tune && config.measure != MeasureKind::Nw {
            tune(&config.regressor, &train, 3)?
        } else {
            config.regressor.clone()
        };
        let spec = measure_spec(config, regressor, &train);
        spec.validate()?;
        permutations.push(PermutationInfo {
            index: p,
            stream,
            measure: spec.clone(),
        });

        match config.mode {
            Mode::Crps => {
                let t = Instant::now();
                let per_alpha = alphas
                    .par_iter()
                    .map(|&a| crisp_losses(&fit_scps(&train, Split::Fraction(a), &spec)?, &test))
                    .collect::<Result<Vec<_>>>()?;
                scps_seconds += t.elapsed().as_secs_f64();
                for (acc, l) in scps_losses.iter_mut().zip(per_alpha) {
                    acc.extend(l);
                }
                let t = Instant::now();
                let per_k = ks
                    .par_iter()
                    .map(|&k| crisp_losses(&fit_ccps(&train, k, &spec)?, &test))
                    .collect::<Result<Vec<_>>>()?;
                ccps_seconds += t.elapsed().as_secs_f64();
                for (acc, l) in ccps_losses.iter_mut().zip(per_k) {
                    acc.extend(l);
                }
            }
            Mode::Calibration => {
                let t = Instant::now();
                let scps = fit_scps(&train, Split::Fraction(alphas[0]), &spec)?;
                let mut taus = TauSource::new(config.seed.wrapping_add(2 * stream));
                scps_pit.extend(pit_values(&scps, &test, &mut taus)?);
                scps_seconds += t.elapsed().as_secs_f64();
                let t = Instant::now();
                let ccps = fit_ccps(&train, ks[0], &spec)?;
                let mut taus = TauSource::new(config.seed.wrapping_add(2 * stream + 1));
                let pit = pit_values(&ccps, &test, &mut taus)?;
                ccps_pit.extend(pit.into_iter().map(|v| if config.conservative_2x { conservative_p(v) } else { v }));
                ccps_seconds += t.elapsed().as_secs_f64();
            }
        }
    }

    let sweep = |losses: Vec<Vec<f64>>| -> Result<Vec<(Vec<f64>, BoxStats)>> {
        losses
            .into_iter()
            .map(|l| {
                let s = BoxStats::from_values(&l)?;
                Ok((l, s))
            })
            .collect()
    };
    let (scps, ccps) = match config.mode {
        Mode::Crps => (
            alphas
                .iter()
                .zip(sweep(scps_losses)?)
                .map(|(&param, (losses, stats))| SweepPoint { param, losses, stats })
                .collect(),
            ks.iter()
                .zip(sweep(ccps_losses)?)
                .map(|(&param, (losses, stats))| SweepPoint { param, losses, stats })
                .collect(),
        ),
        Mode::Calibration => (Vec::new(), Vec::new()),
    };
    let calibration = match config.mode {
        Mode::Crps => None,
        Mode::Calibration => {
            let grid = calibration_grid();
            Some(CalibrationResult {
                alpha: alphas[0],
                k: ks[0],
                scps_curve: calibration_curve(&scps_pit, &grid)?,
                ccps_curve: calibration_curve(&ccps_pit, &grid)?,
                scps_ks: ks_distance_uniform(&scps_pit)?,
                ccps_ks: ks_distance_uniform(&ccps_pit)?,
                scps_pit,
                ccps_pit,
            })
        }
    };
    Ok(ExperimentReport {
        config: config.clone(),
        dataset_size: data.len(),
        training_size: n,
        skipped_alphas,
        skipped_ks,
        permutations,
        scps,
        ccps,
        calibration,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
            scps_seconds,
            ccps_seconds,
        },
    })
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn stats_row(param: String, s: &BoxStats) -> Vec<String> {
    vec![
        param,
        s.min.to_string(),
        s.q1.to_string(),
        s.median.to_string(),
        s.q3.to_string(),
        s.max.to_string(),
    ]
}

fn curve_rows(c: &CalibrationCurve) -> Vec<Vec<String>> {
    c.alphas
        .iter()
        .zip(&c.empirical_cdf)
        .map(|(a, f)| vec![a.to_string(), f.to_string()])
        .collect()
}

/// Writes the report files into `dir`, creating it if needed, and returns
/// the paths written.
pub fn write_outputs(report: &ExperimentReport, dir: &Path, emit_raw: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    match &report.calibration {
        None => {
            const HEAD: [&str; 5] = ["min", "q1", "median", "q3", "max"];
            let head = |first: &'static str| {
                let mut h = vec![first];
                h.extend(HEAD);
                h
            };
            write_rows(
                &out("scps_boxstats.csv"),
                &head("alpha"),
                report.scps.iter().map(|s| stats_row(s.param.to_string(), &s.stats)),
            )?;
            write_rows(
                &out("ccps_boxstats.csv"),
                &head("K"),
                report.ccps.iter().map(|s| stats_row(s.param.to_string(), &s.stats)),
            )?;
            if emit_raw {
                let l = report.config.test_len;
                write_rows(
                    &out("scps_raw.csv"),
                    &["alpha", "permutation", "test_index", "crps"],
                    report.scps.iter().flat_map(|s| {
                        s.losses.iter().enumerate().map(move |(i, v)| {
                            vec![s.param.to_string(), (i / l).to_string(), (i % l).to_string(), v.to_string()]
                        })
                    }),
                )?;
                write_rows(
                    &out("ccps_raw.csv"),
                    &["K", "permutation", "test_index", "crps"],
                    report.ccps.iter().flat_map(|s| {
                        s.losses.iter().enumerate().map(move |(i, v)| {
                            vec![s.param.to_string(), (i / l).to_string(), (i % l).to_string(), v.to_string()]
                        })
                    }),
                )?;
            }
        }
        Some(c) => {
            write_rows(&out("calibration_scps.csv"), &["alpha", "F_alpha"], curve_rows(&c.scps_curve))?;
            write_rows(&out("calibration_ccps.csv"), &["alpha", "F_alpha"], curve_rows(&c.ccps_curve))?;
            if emit_raw {
                let rows = |v: &[f64]| v.iter().map(|p| vec![p.to_string()]).collect::<Vec<_>>();
                write_rows(&out("scps_pit.csv"), &["pit"], rows(&c.scps_pit))?;
                write_rows(&out("ccps_pit.csv"), &["pit"], rows(&c.ccps_pit))?;
            }
        }
    }
    let summary = JsonReport::from(report);
    let mut f = fs::File::create(out("report.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    Ok(written)
}

/// `report.json`: the report without the raw loss and PIT vectors.
#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a ExperimentConfig,
    dataset_size: usize,
    training_size: usize,
    skipped_alphas: &'a [f64],
    skipped_ks: &'a [usize],
    permutations: &'a [PermutationInfo],
    scps: Vec<(f64, &'a BoxStats)>,
    ccps: Vec<(usize, &'a BoxStats)>,
    calibration: Option<JsonCalibration>,
    timings: &'a Timings,
}

#[derive(Serialize)]
struct JsonCalibration {
    alpha: f64,
    k: usize,
    scps_ks: f64,
    ccps_ks: f64,
    scps_max_deviation: f64,
    ccps_max_deviation: f64,
}

impl<'a> From<&'a ExperimentReport> for JsonReport<'a> {
    fn from(r: &'a ExperimentReport) -> Self {
        JsonReport {
            config: &r.config,
            dataset_size: r.dataset_size,
            training_size: r.training_size,
            skipped_alphas: &r.skipped_alphas,
            skipped_ks: &r.skipped_ks,
            permutations: &r.permutations,
            scps: r.scps.iter().map(|s| (s.param, &s.stats)).collect(),
            ccps: r.ccps.iter().map(|s| (s.param, &s.stats)).collect(),
            calibration: r.calibration.as_ref().map(|c| JsonCalibration {
                alpha: c.alpha,
                k: c.k,
                scps_ks: c.scps_ks,
                ccps_ks: c.ccps_ks,
                scps_max_deviation: c.scps_curve.max_deviation(),
                ccps_max_deviation: c.ccps_curve.max_deviation(),
            }),
            timings: &r.timings,
        }
    }
}

/// Writes a dataset as CSV with a header `x1, ..., xd, y`.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let d = data.feature_dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        path,
        &header,
        data.iter().map(|o| {
            let mut row: Vec<String> = o.x().iter().map(f64::to_string).collect();
            row.push(o.y().to_string());
            row
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let d = load_csv(&write(&dir, "a.csv", "1,2,3\n4,5,6\n7,8,9\n")).unwrap();
        assert_eq!((d.len(), d.feature_dim()), (3, 2));
        assert_eq!(d.get(2).y(), 9.0);
        let d = load_csv(&write(&dir, "b.csv", "a,b,label\n1,2,3\n\n4,5,6\n")).unwrap();
        assert_eq!(d.len(), 2);
        match load_csv(&write(&dir, "c.csv", "1,2,3\n4,5\n")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match load_csv(&write(&dir, "d.csv", "x,y\n1,2\n3,oops\n")) {
            Err(e @ Error::Parse { line: 3, .. }) => assert!(e.is_data_error()),
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_csv(&write(&dir, "e.csv", "")), Err(Error::EmptyDataset)));
        assert!(matches!(load_csv(&write(&dir, "f.csv", "a,b\n")), Err(Error::EmptyDataset)));
        assert!(load_csv(&dir.path().join("missing.csv")).unwrap_err().is_data_error());
    }

    #[test]
    fn standardization() {
        let train = Dataset::from_rows(vec![vec![0.0, 5.0], vec![2.0, 5.0]], vec![0.0, 1.0]).unwrap();
        let test = Dataset::from_rows(vec![vec![4.0, 1.0]], vec![0.0]).unwrap();
        let (t, others, scaler) = standardize(&train, &[&test]).unwrap();
        assert_eq!(t.get(0).x(), &[-1.0, 0.0]);
        assert_eq!(t.get(1).x(), &[1.0, 0.0]);
        assert_eq!(others[0].get(0).x(), &[3.0, 0.0]);
        assert_eq!(scaler.means, vec![1.0, 5.0]);
    }

    fn rows(f: impl Fn(f64) -> f64, n: usize) -> Dataset {
        // interleaved inputs so that contiguous folds spread over the range
        let xs: Vec<f64> = (0..n).map(|i| ((i * 7) % n) as f64).collect();
        Dataset::from_rows(xs.iter().map(|&x| vec![x]).collect(), xs.iter().map(|&x| f(x)).collect()).unwrap()
    }

    #[test]
    fn tuning() {
        let linear = rows(|x| 3.0 * x - 1.0, 30);
        assert_eq!(tune(&RegressorSpec::ridge(1.0), &linear, 3).unwrap().ridge_lambda, 0.0);
        let wiggly = rows(|x| (x * x) % 7.0, 31);
        // every point has a twin 0.001 away with the same label in another fold
        let xs: Vec<f64> = (0..30).map(|j| (j % 15) as f64 + if j < 15 { 0.0 } else { 0.001 }).collect();
        let ys: Vec<f64> = xs.iter().map(|x| ((x.floor() as usize * 7) % 5) as f64).collect();
        let twins = Dataset::from_rows(xs.iter().map(|&x| vec![x]).collect(), ys).unwrap();
        assert_eq!(tune(&RegressorSpec::knn(5), &twins, 3).unwrap().knn_k, 1);
        let k = tune(&RegressorSpec::knn(5), &wiggly, 3).unwrap().knn_k;
        assert!(KNN_GRID.contains(&k));
        let small = rows(|x| x, 6);
        assert!(tune(&RegressorSpec::knn(1), &small, 3).unwrap().knn_k <= 4);
        let ls = RegressorSpec::least_squares();
        assert_eq!(tune(&ls, &small, 3).unwrap(), ls);
    }

    fn synth_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            DataSource::Synth {
                generator: Generator::HomoscedasticLinear,
                n: 60,
                noise: 1.0,
            },
            10,
        );
        c.permutations = 1;
        c.alphas = vec![0.5];
        c.ks = vec![2];
        c
    }

    #[test]
    fn multiset_sizes() {
        let r = run_experiment(&synth_config()).unwrap();
        assert_eq!(r.scps.len(), 1);
        assert_eq!(r.scps[0].losses.len(), 10);
        assert_eq!(r.ccps[0].losses.len(), 10);
        let mut c = synth_config();
        c.permutations = 3;
        c.alphas = vec![0.001, 0.5, 0.9];
        c.ks = vec![2, 5, 500];
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.skipped_alphas, vec![0.001]);
        assert_eq!(r.skipped_ks, vec![500]);
        assert!(r.scps.iter().all(|s| s.losses.len() == 30));
        assert!(r.ccps.iter().all(|s| s.losses.len() == 30));
    }

    #[test]
    fn calibration_mode() {
        let mut c = synth_config();
        c.mode = Mode::Calibration;
        c.permutations = 2;
        let r = run_experiment(&c).unwrap();
        let cal = r.calibration.unwrap();
        assert_eq!(cal.scps_pit.len(), 20);
        assert_eq!(cal.scps_curve.alphas.len(), 99);
        assert!(r.scps.is_empty());
    }

    #[test]
    fn config_errors() {
        let mut c = synth_config();
        c.test_len = 60;
        assert!(!run_experiment(&c).unwrap_err().is_data_error());
        let mut c = synth_config();
        c.permutations = 0;
        assert!(run_experiment(&c).is_err());
        let mut c = synth_config();
        c.alphas = vec![1.5];
        assert!(run_experiment(&c).is_err());
    }

    #[test]
    fn outputs() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_experiment(&synth_config()).unwrap();
        let files = write_outputs(&r, dir.path(), true).unwrap();
        assert_eq!(files.len(), 5);
        let text = fs::read_to_string(dir.path().join("scps_boxstats.csv")).unwrap();
        assert!(text.starts_with("alpha,min,q1,median,q3,max\n0.5,"));
        assert!(!text.contains('\r'));
        let text = fs::read_to_string(dir.path().join("ccps_boxstats.csv")).unwrap();
        assert!(text.starts_with("K,min,q1,median,q3,max\n2,"));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json["config"]["seed"], 0);
        assert!(json["timings"]["total_seconds"].is_number());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate(Generator::HeteroscedasticLinear, 25, 1.0, 3).unwrap();
        let p = dir.path().join("d.csv");
        write_dataset(&d, &p).unwrap();
        assert_eq!(load_csv(&p).unwrap(), d);
    }
}
