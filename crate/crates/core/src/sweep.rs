//! Sweep harness: runs (theory, simulation) grids over
//! (gamma, lambda, eps, flip, sigma2) axes, averages over seeds, and emits
//! CSV / JSON-lines rows. Presets encode the experiment recipes behind each
//! figure-style study at desk scale.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    default_theta_star, generate_dataset, seeded_rng, PerturbationNorm, ProblemConfig, Task,
    RNG_ALGO,
};
use crate::linreg::{linreg_asymptotics, min_norm_fit, optimal_lambda, ridge_fit, LambdaGrid};
use crate::logreg::{
    fit_max_margin, fit_regularized, gd_classification_path, FitOptions, GdClassSchedule,
    TrainResult,
};
use crate::risks::{classification_risks, regression_risks};
use crate::theory::{solve_nonseparable, solve_separable};
use crate::{Error, Result};

/// Extension hook so the sweep shares one lazily built quadrature grid.
pub(crate) mod grid_cache {
    use crate::numerics::QuadratureGrid;
    use std::sync::OnceLock;

    static GRID: OnceLock<QuadratureGrid> = OnceLock::new();

    pub fn default_grid() -> &'static QuadratureGrid {
        GRID.get_or_init(QuadratureGrid::default_grid)
    }
}

/// Gradient-descent path settings for the early-stopping experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdPathSpec {
    pub steps: usize,
    pub init_lr: f64,
    pub double_every: usize,
    pub double_until: usize,
    pub snapshot_stride: usize,
}

/// Experiment grid: the cartesian product of the non-empty axes, times
/// seeds; empty axes fall back to the base config value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub id: String,
    pub base: ProblemConfig,
    #[serde(default)]
    pub gamma_list: Vec<f64>,
    #[serde(default)]
    pub lambda_list: Vec<f64>,
    /// Test radius; also the training radius for classification.
    #[serde(default)]
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub flip_list: Vec<f64>,
    #[serde(default)]
    pub sigma2_list: Vec<f64>,
    pub seeds: usize,
    pub theory: bool,
    pub empirical: bool,
    /// Linear regression only: add the oracle-optimal lambda as an extra
    /// point per (gamma, sigma2, eps).
    #[serde(default)]
    pub include_optimal_lambda: bool,
    /// Replace per-lambda fits by a gradient-descent path (classification).
    #[serde(default)]
    pub gd_path: Option<GdPathSpec>,
    /// Record wall-clock times; off by default so output is reproducible
    /// byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be >= 1".into()));
        }
        if self.gamma_list.is_empty()
            && self.lambda_list.is_empty()
            && self.eps_list.is_empty()
            && self.flip_list.is_empty()
            && self.sigma2_list.is_empty()
        {
            return Err(Error::Config("at least one axis must be nonempty".into()));
        }
        Ok(())
    }
}

/// Unpopulated statistics stay NaN in memory; they serialize to JSON null
/// and to empty CSV cells.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One output row; all fields needed to re-run the point are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub regime: String,
    pub gamma: f64,
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    pub eps_train: f64,
    pub eps_test: f64,
    pub flip_prob: f64,
    pub sigma2: f64,
    /// Seed index, or "theory".
    pub seed: String,
    #[serde(with = "nan_as_null")]
    pub sr: f64,
    #[serde(with = "nan_as_null")]
    pub ar: f64,
    #[serde(with = "nan_as_null")]
    pub nu_par: f64,
    #[serde(with = "nan_as_null")]
    pub perp_l2: f64,
    /// ||P_perp theta||_1 / sqrt(d).
    #[serde(with = "nan_as_null")]
    pub perp_l1_scaled: f64,
    #[serde(with = "nan_as_null")]
    pub robust_margin: f64,
    #[serde(with = "nan_as_null")]
    pub robust_avg_margin: f64,
    #[serde(with = "nan_as_null")]
    pub l1_over_l2: f64,
    #[serde(with = "nan_as_null")]
    pub train_loss: f64,
    pub wall_ms: u64,
    pub rng_algo: String,
    pub base_seed: u64,
    pub status: String,
}

pub const CSV_HEADER: &str = "experiment,regime,gamma,d,n,lambda,eps_train,eps_test,flip_prob,\
sigma2,seed,sr,ar,nu_par,perp_l2,perp_l1_scaled,robust_margin,robust_avg_margin,l1_over_l2,\
train_loss,wall_ms,rng_algo,base_seed,status";

/// Hard desk-scale caps; large runs must opt out explicitly.
pub const MAX_D: usize = 16_000;
pub const MAX_N: usize = 2_000;

#[derive(Debug, Clone, Copy)]
struct Point {
    gamma: f64,
    lambda: f64,
    eps: f64,
    flip: f64,
    sigma2: f64,
    index: usize,
}

fn axis(values: &[f64], fallback: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

fn points(spec: &SweepSpec) -> Vec<Point> {
    let base = &spec.base;
    let mut out = Vec::new();
    let mut index = 0;
    for &gamma in &axis(&spec.gamma_list, base.gamma()) {
        for &lambda in &axis(&spec.lambda_list, base.lambda) {
            for &eps in &axis(&spec.eps_list, base.eps_test) {
                for &flip in &axis(&spec.flip_list, base.label_flip_prob) {
                    for &sigma2 in &axis(&spec.sigma2_list, base.sigma2) {
                        out.push(Point {
                            gamma,
                            lambda,
                            eps,
                            flip,
                            sigma2,
                            index,
                        });
                        index += 1;
                    }
                }
            }
        }
    }
    out
}

/// Run the sweep. Rows come back sorted by (point index, seed) regardless of
/// the worker count; per-point failures are recorded in the row status and
/// never abort the sweep.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let pts = points(spec);
    for p in &pts {
        let d = (p.gamma * spec.base.n as f64).round() as usize;
        if d > MAX_D || spec.base.n > MAX_N {
            return Err(Error::Config(format!(
                "point gamma={} implies d={d}, above the desk-scale caps (d<={MAX_D}, n<={MAX_N})",
                p.gamma
            )));
        }
    }

    let jobs = jobs.max(1).min(pts.len().max(1));
    let mut groups: Vec<Option<Vec<ResultRow>>> = vec![None; pts.len()];
    if jobs == 1 {
        for (i, p) in pts.iter().enumerate() {
            groups[i] = Some(run_point(spec, p));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results: Vec<std::sync::Mutex<Option<Vec<ResultRow>>>> =
            (0..pts.len()).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= pts.len() {
                        break;
                    }
                    let rows = run_point(spec, &pts[i]);
                    *results[i].lock().unwrap() = Some(rows);
                });
            }
        });
        for (i, cell) in results.into_iter().enumerate() {
            groups[i] = cell.into_inner().unwrap();
        }
    }
    Ok(groups.into_iter().flatten().flatten().collect())
}

fn blank_row(spec: &SweepSpec, p: &Point, d: usize) -> ResultRow {
    ResultRow {
        experiment: spec.id.clone(),
        regime: String::new(),
        gamma: p.gamma,
        d,
        n: spec.base.n,
        lambda: p.lambda,
        eps_train: match spec.base.task {
            Task::Regression => 0.0,
            Task::Classification => p.eps,
        },
        eps_test: p.eps,
        flip_prob: p.flip,
        sigma2: p.sigma2,
        seed: String::new(),
        sr: f64::NAN,
        ar: f64::NAN,
        nu_par: f64::NAN,
        perp_l2: f64::NAN,
        perp_l1_scaled: f64::NAN,
        robust_margin: f64::NAN,
        robust_avg_margin: f64::NAN,
        l1_over_l2: f64::NAN,
        train_loss: f64::NAN,
        wall_ms: 0,
        rng_algo: RNG_ALGO.into(),
        base_seed: spec.base.seed,
        status: "ok".into(),
    }
}

fn run_point(spec: &SweepSpec, p: &Point) -> Vec<ResultRow> {
    let d = (p.gamma * spec.base.n as f64).round() as usize;
    let mut rows = Vec::new();
    match spec.base.task {
        Task::Regression => run_regression_point(spec, p, d, &mut rows),
        Task::Classification => run_classification_point(spec, p, d, &mut rows),
    }
    rows
}

fn run_regression_point(spec: &SweepSpec, p: &Point, d: usize, rows: &mut Vec<ResultRow>) {
    let mut lambdas = vec![(p.lambda, "fixed")];
    if spec.include_optimal_lambda {
        match optimal_lambda(p.gamma, p.sigma2, p.eps, &LambdaGrid::default()) {
            Ok((l_opt, _)) => lambdas.push((l_opt, "optimal")),
            Err(e) => {
                let mut row = blank_row(spec, p, d);
                row.regime = "ridge-opt".into();
                row.seed = "theory".into();
                row.status = format!("optimal-lambda failed: {e}");
                rows.push(row);
            }
        }
    }

    for (lambda, kind) in lambdas {
        let regime = if lambda == 0.0 {
            "minnorm".to_string()
        } else if kind == "optimal" {
            "ridge-opt".to_string()
        } else {
            "ridge".to_string()
        };
        if spec.theory {
            let started = Instant::now();
            let mut row = blank_row(spec, p, d);
            row.regime = regime.clone();
            row.lambda = lambda;
            row.seed = "theory".into();
            match linreg_asymptotics(lambda, p.gamma, p.sigma2, p.eps) {
                Ok(a) => {
                    row.sr = a.sr;
                    row.ar = a.ar;
                    row.perp_l2 = a.perp_mass.sqrt();
                }
                Err(e) => row.status = format!("theory failed: {e}"),
            }
            if spec.timing {
                row.wall_ms = started.elapsed().as_millis() as u64;
            }
            rows.push(row);
        }
        if spec.empirical {
            for seed_ix in 0..spec.seeds {
                let started = Instant::now();
                let mut row = blank_row(spec, p, d);
                row.regime = regime.clone();
                row.lambda = lambda;
                row.seed = seed_ix.to_string();
                let config = ProblemConfig {
                    d,
                    n: spec.base.n,
                    task: Task::Regression,
                    sigma2: p.sigma2,
                    label_flip_prob: 0.0,
                    eps_train: 0.0,
                    eps_test: p.eps,
                    perturbation_norm: PerturbationNorm::L2,
                    consistent: true,
                    lambda,
                    seed: point_seed(spec.base.seed, p.index, seed_ix),
                };
                match regression_fit_row(&config, lambda, p.eps) {
                    Ok((sr, ar, est)) => {
                        row.sr = sr;
                        row.ar = ar;
                        row.nu_par = est.0;
                        row.perp_l2 = est.1;
                        row.perp_l1_scaled = est.2 / (d as f64).sqrt();
                    }
                    Err(e) => row.status = format!("fit failed: {e}"),
                }
                if spec.timing {
                    row.wall_ms = started.elapsed().as_millis() as u64;
                }
                rows.push(row);
            }
        }
    }
}

fn regression_fit_row(
    config: &ProblemConfig,
    lambda: f64,
    eps: f64,
) -> Result<(f64, f64, (f64, f64, f64))> {
    let ds = generate_dataset(config, &default_theta_star(config.d))?;
    let est = if lambda > 0.0 {
        ridge_fit(&ds, lambda)?
    } else {
        min_norm_fit(&ds)?
    };
    let risks = regression_risks(&est, eps);
    Ok((risks.sr, risks.ar, (est.nu_par, est.perp_l2, est.perp_l1)))
}

fn run_classification_point(spec: &SweepSpec, p: &Point, d: usize, rows: &mut Vec<ResultRow>) {
    let eps0 = p.eps * (d as f64).sqrt();
    let regime = if p.lambda == 0.0 { "maxmargin" } else { "logridge" };

    if spec.theory {
        let started = Instant::now();
        let mut row = blank_row(spec, p, d);
        row.regime = format!("theory-{regime}");
        row.seed = "theory".into();
        let grid = grid_cache::default_grid();
        let solved = if p.lambda == 0.0 {
            if p.flip > 0.0 {
                Err(Error::Config(
                    "separability threshold under label noise is undetermined; \
                     pick a regime explicitly"
                        .into(),
                ))
            } else {
                solve_separable(p.gamma, eps0, p.flip, None, grid)
            }
        } else {
            solve_nonseparable(p.gamma, eps0, p.lambda, p.flip, None, grid)
        };
        match solved {
            Ok(pred) => {
                let (nu_par, nu_perp, delta) = pred.alignment();
                row.sr = pred.sr;
                row.ar = pred.ar;
                row.nu_par = nu_par;
                row.perp_l2 = nu_perp;
                row.perp_l1_scaled = delta;
            }
            Err(e) => row.status = format!("theory failed: {e}"),
        }
        if spec.timing {
            row.wall_ms = started.elapsed().as_millis() as u64;
        }
        rows.push(row);
    }

    if !spec.empirical {
        return;
    }
    for seed_ix in 0..spec.seeds {
        let config = ProblemConfig {
            d,
            n: spec.base.n,
            task: Task::Classification,
            sigma2: 0.0,
            label_flip_prob: p.flip,
            eps_train: p.eps,
            eps_test: p.eps,
            perturbation_norm: spec.base.perturbation_norm,
            consistent: spec.base.consistent,
            lambda: p.lambda,
            seed: point_seed(spec.base.seed, p.index, seed_ix),
        };
        if let Some(gd) = &spec.gd_path {
            run_gd_rows(spec, p, d, &config, gd, seed_ix, rows);
            continue;
        }
        let started = Instant::now();
        let mut row = blank_row(spec, p, d);
        row.regime = regime.into();
        row.seed = seed_ix.to_string();
        match classification_fit_row(&config, p) {
            Ok((fit, status)) => {
                fill_classification_row(&mut row, &fit, p.eps, d);
                row.status = status;
            }
            Err(e) => row.status = format!("fit failed: {e}"),
        }
        if spec.timing {
            row.wall_ms = started.elapsed().as_millis() as u64;
        }
        rows.push(row);
    }
}

fn classification_fit_row(config: &ProblemConfig, p: &Point) -> Result<(TrainResult, String)> {
    let ds = generate_dataset(config, &default_theta_star(config.d))?;
    let opts = FitOptions::default();
    if p.lambda > 0.0 {
        let fit = fit_regularized(
            &ds,
            p.eps,
            config.perturbation_norm,
            config.consistent,
            p.lambda,
            &opts,
        )?;
        return Ok((fit, "ok".into()));
    }
    match fit_max_margin(&ds, p.eps, config.perturbation_norm, config.consistent, &opts) {
        Ok(fit) => Ok((fit, "ok".into())),
        Err(Error::Infeasible(_)) => {
            // not robustly separable: the lambda -> 0 limit of the
            // regularized problem is the non-interpolating minimizer
            let fit = fit_regularized(
                &ds,
                p.eps,
                config.perturbation_norm,
                config.consistent,
                1e-6,
                &opts,
            )?;
            Ok((fit, "maxmargin infeasible; lambda=1e-6 fit".into()))
        }
        Err(e) => Err(e),
    }
}

fn fill_classification_row(row: &mut ResultRow, fit: &TrainResult, eps: f64, d: usize) {
    let est = &fit.estimator;
    if let Ok(risks) = classification_risks(est, eps) {
        row.sr = risks.sr;
        row.ar = risks.ar;
    }
    row.nu_par = est.nu_par;
    row.perp_l2 = est.perp_l2;
    row.perp_l1_scaled = est.perp_l1 / (d as f64).sqrt();
    row.robust_margin = fit.robust_margin;
    row.robust_avg_margin = fit.robust_avg_margin;
    row.l1_over_l2 = fit.l1_over_l2;
    row.train_loss = fit.final_loss;
}

fn run_gd_rows(
    spec: &SweepSpec,
    p: &Point,
    d: usize,
    config: &ProblemConfig,
    gd: &GdPathSpec,
    seed_ix: usize,
    rows: &mut Vec<ResultRow>,
) {
    let started = Instant::now();
    let schedule = GdClassSchedule {
        init_lr: gd.init_lr,
        double_every: gd.double_every,
        double_until: gd.double_until,
    };
    let ds = match generate_dataset(config, &default_theta_star(config.d)) {
        Ok(ds) => ds,
        Err(e) => {
            let mut row = blank_row(spec, p, d);
            row.seed = seed_ix.to_string();
            row.status = format!("dataset failed: {e}");
            rows.push(row);
            return;
        }
    };
    match gd_classification_path(
        &ds,
        p.eps,
        config.perturbation_norm,
        config.consistent,
        gd.steps,
        &schedule,
        gd.snapshot_stride,
    ) {
        Ok(snaps) => {
            for (step, fit) in snaps {
                let mut row = blank_row(spec, p, d);
                row.regime = format!("gd@{step}");
                row.seed = seed_ix.to_string();
                if step > 0 {
                    fill_classification_row(&mut row, &fit, p.eps, d);
                } else {
                    row.train_loss = fit.final_loss;
                }
                if spec.timing {
                    row.wall_ms = started.elapsed().as_millis() as u64;
                }
                rows.push(row);
            }
        }
        Err(e) => {
            let mut row = blank_row(spec, p, d);
            row.regime = "gd".into();
            row.seed = seed_ix.to_string();
            row.status = format!("gd failed: {e}");
            rows.push(row);
        }
    }
}

fn point_seed(base_seed: u64, point_index: usize, seed_ix: usize) -> u64 {
    use rand::Rng;
    seeded_rng(base_seed, "sweep.point", &[point_index as u64, seed_ix as u64]).gen()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

/// Render a float with 12 significant digits (NaN prints as empty).
fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.11e}")
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(128 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let fields = [
            r.experiment.clone(),
            r.regime.clone(),
            fmt_float(r.gamma),
            r.d.to_string(),
            r.n.to_string(),
            fmt_float(r.lambda),
            fmt_float(r.eps_train),
            fmt_float(r.eps_test),
            fmt_float(r.flip_prob),
            fmt_float(r.sigma2),
            r.seed.clone(),
            fmt_float(r.sr),
            fmt_float(r.ar),
            fmt_float(r.nu_par),
            fmt_float(r.perp_l2),
            fmt_float(r.perp_l1_scaled),
            fmt_float(r.robust_margin),
            fmt_float(r.robust_avg_margin),
            fmt_float(r.l1_over_l2),
            fmt_float(r.train_loss),
            r.wall_ms.to_string(),
            r.rng_algo.clone(),
            r.base_seed.to_string(),
            r.status.replace(',', ";"),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Parse rows back from [`rows_to_csv`] output.
pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    let f = |s: &str| -> f64 {
        if s.is_empty() {
            f64::NAN
        } else {
            s.parse().unwrap_or(f64::NAN)
        }
    };
    let mut rows = Vec::new();
    for line in lines {
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 24 {
            return Err(Error::Config(format!("bad CSV row: {line}")));
        }
        rows.push(ResultRow {
            experiment: c[0].into(),
            regime: c[1].into(),
            gamma: f(c[2]),
            d: c[3].parse().unwrap_or(0),
            n: c[4].parse().unwrap_or(0),
            lambda: f(c[5]),
            eps_train: f(c[6]),
            eps_test: f(c[7]),
            flip_prob: f(c[8]),
            sigma2: f(c[9]),
            seed: c[10].into(),
            sr: f(c[11]),
            ar: f(c[12]),
            nu_par: f(c[13]),
            perp_l2: f(c[14]),
            perp_l1_scaled: f(c[15]),
            robust_margin: f(c[16]),
            robust_avg_margin: f(c[17]),
            l1_over_l2: f(c[18]),
            train_loss: f(c[19]),
            wall_ms: c[20].parse().unwrap_or(0),
            rng_algo: c[21].into(),
            base_seed: c[22].parse().unwrap_or(0),
            status: c[23].into(),
        });
    }
    Ok(rows)
}

pub fn rows_to_json_lines(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("row serializes"));
        out.push('\n');
    }
    out
}

pub fn rows_from_json_lines(text: &str) -> Result<Vec<ResultRow>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Config(format!("bad JSON line: {e}")))
        })
        .collect()
}

/// Write rows to `path` in the chosen format (LF newlines, fixed header).
pub fn emit(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => rows_to_csv(rows),
        OutputFormat::JsonLines => rows_to_json_lines(rows),
    };
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Frozen experiment recipes. Desk-scale: n = 10^3, five seeds, minutes per
/// preset on a laptop.
pub fn preset(name: &str) -> Result<SweepSpec> {
    let reg_base = |seed| ProblemConfig {
        d: 1000,
        n: 1000,
        task: Task::Regression,
        sigma2: 0.0,
        label_flip_prob: 0.0,
        eps_train: 0.0,
        eps_test: 0.4,
        perturbation_norm: PerturbationNorm::L2,
        consistent: true,
        lambda: 0.0,
        seed,
    };
    let cls_base = |seed| ProblemConfig {
        d: 8000,
        n: 1000,
        task: Task::Classification,
        sigma2: 0.0,
        label_flip_prob: 0.0,
        eps_train: 0.1,
        eps_test: 0.1,
        perturbation_norm: PerturbationNorm::Linf,
        consistent: true,
        lambda: 0.0,
        seed,
    };
    let spec = match name {
        // min-norm vs optimally-regularized ridge, noisy observations
        "fig2a" => SweepSpec {
            id: "fig2a".into(),
            base: reg_base(20_240_201),
            gamma_list: vec![0.25, 0.5, 0.8, 1.25, 2.0, 4.0, 8.0],
            lambda_list: vec![0.0],
            eps_list: vec![0.4],
            flip_list: vec![],
            sigma2_list: vec![0.2],
            seeds: 5,
            theory: true,
            empirical: true,
            include_optimal_lambda: true,
            gd_path: None,
            timing: false,
        },
        // same grid, noiseless observations
        "fig2b" => SweepSpec {
            id: "fig2b".into(),
            base: reg_base(20_240_202),
            gamma_list: vec![0.25, 0.5, 0.8, 1.25, 2.0, 4.0, 8.0],
            lambda_list: vec![0.0],
            eps_list: vec![0.4],
            flip_list: vec![],
            sigma2_list: vec![0.0],
            seeds: 5,
            theory: true,
            empirical: true,
            include_optimal_lambda: true,
            gd_path: None,
            timing: false,
        },
        // robust risk vs lambda, theory curves only
        "fig3" => SweepSpec {
            id: "fig3".into(),
            base: reg_base(20_240_203),
            gamma_list: vec![2.0, 4.0, 8.0],
            lambda_list: log_grid(1e-3, 10.0, 25),
            eps_list: vec![0.4],
            flip_list: vec![],
            sigma2_list: vec![0.0],
            seeds: 1,
            theory: true,
            empirical: false,
            include_optimal_lambda: false,
            gd_path: None,
            timing: false,
        },
        // ridge benefit for adversarial logistic regression, lambda scan
        "fig4a" => SweepSpec {
            id: "fig4a".into(),
            base: ProblemConfig {
                consistent: false,
                ..cls_base(20_240_204)
            },
            gamma_list: vec![8.0],
            lambda_list: vec![10.0, 1.0, 0.1, 0.01, 1e-3, 1e-4, 0.0],
            eps_list: vec![0.1],
            flip_list: vec![],
            sigma2_list: vec![],
            seeds: 5,
            theory: false,
            empirical: true,
            include_optimal_lambda: false,
            gd_path: None,
            timing: false,
        },
        // early stopping: gradient-descent path at d/n = 8
        "fig4b" => SweepSpec {
            id: "fig4b".into(),
            base: ProblemConfig {
                consistent: false,
                ..cls_base(20_240_205)
            },
            gamma_list: vec![8.0],
            lambda_list: vec![0.0],
            eps_list: vec![0.1],
            flip_list: vec![],
            sigma2_list: vec![],
            seeds: 5,
            theory: false,
            empirical: true,
            include_optimal_lambda: false,
            gd_path: Some(GdPathSpec {
                steps: 3000,
                init_lr: 0.01,
                double_every: 250,
                double_until: 2500,
                snapshot_stride: 100,
            }),
            timing: false,
        },
        // margins and sparsity diagnostics across lambda
        "fig5" => SweepSpec {
            id: "fig5".into(),
            base: cls_base(20_240_206),
            gamma_list: vec![8.0],
            lambda_list: vec![5.0, 1.0, 0.1, 0.01, 1e-3, 0.0],
            eps_list: vec![0.1],
            flip_list: vec![],
            sigma2_list: vec![],
            seeds: 5,
            theory: false,
            empirical: true,
            include_optimal_lambda: false,
            gd_path: None,
            timing: false,
        },
        // label-noise study: unregularized vs lambda scan across flips
        "fig6" => SweepSpec {
            id: "fig6".into(),
            base: cls_base(20_240_207),
            gamma_list: vec![8.0],
            lambda_list: vec![10.0, 1.0, 0.01, 1e-4, 0.0],
            eps_list: vec![0.1],
            flip_list: vec![0.0, 0.02, 0.05, 0.1, 0.15, 0.2],
            sigma2_list: vec![],
            seeds: 5,
            theory: false,
            empirical: true,
            include_optimal_lambda: false,
            gd_path: None,
            timing: false,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}'; available: fig2a fig2b fig3 fig4a fig4b fig5 fig6"
            )))
        }
    };
    Ok(spec)
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}
