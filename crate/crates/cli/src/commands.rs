use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;

use nutaxis_core::diagnostics::{DiagnosticsRecord, VerdictStatus};
use nutaxis_core::exponent::{self, Classification, ExponentError, IterationSettings};
use nutaxis_core::io::config::{parse_config, ConfigError, RunConfig};
use nutaxis_core::io::report::{write_report, RunReport};
use nutaxis_core::io::series::{read_series, write_series};
use nutaxis_core::io::snapshot::write_snapshot;
use nutaxis_core::solver::{run, Observer, SimState};

use crate::error::CliError;

fn load_config(path: &Path) -> Result<(RunConfig, PathBuf), CliError> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = parse_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn initial_state(cfg: &RunConfig, base: &Path) -> Result<SimState, CliError> {
    cfg.initial_state(base).map_err(|e| match e {
        ConfigError::Snapshot { .. } => CliError::Io(anyhow::anyhow!(e)),
        _ => CliError::Usage(e.to_string()),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// Writes one snapshot per sample into `dir`, remembering the first failure.
struct SnapshotWriter {
    dir: PathBuf,
    count: usize,
    error: Option<anyhow::Error>,
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, state: &SimState, _: &DiagnosticsRecord) {
        if self.error.is_some() {
            return;
        }
        let path = self.dir.join(format!("snap_{:06}.ntx", self.count));
        self.count += 1;
        if let Err(e) = write_snapshot(state, &path) {
            self.error = Some(anyhow::Error::new(e).context(format!("writing {}", path.display())));
        }
    }
}

/// Runs one configuration into `out` and returns its report.
fn run_into(cfg: &RunConfig, base: &Path, out: &Path, check: bool) -> Result<RunReport, CliError> {
    let s0 = initial_state(cfg, base)?;
    create_dir(out)?;
    let mut snapshots = SnapshotWriter {
        dir: out.join("snapshots"),
        count: 0,
        error: None,
    };
    if cfg.output.snapshots {
        create_dir(&snapshots.dir)?;
    }
    let mut observers: Vec<&mut dyn Observer> = Vec::new();
    if cfg.output.snapshots {
        observers.push(&mut snapshots);
    }
    let result = run(&s0, &cfg.model, &cfg.time, &mut observers);
    if let Some(e) = snapshots.error {
        return Err(CliError::Io(e));
    }

    let check = check || cfg.output.verdict;
    let analyze = |rec: &DiagnosticsRecord| {
        RunReport::analyze(rec, &cfg.model, cfg.output.tail_fraction, cfg.output.tolerance, check)
    };
    let write = |rec: &DiagnosticsRecord, report: &RunReport| -> Result<(), CliError> {
        let series = out.join("series.csv");
        write_series(rec, &series).with_context(|| format!("writing {}", series.display()))?;
        let path = out.join("report.json");
        write_report(report, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    };
    match result {
        Ok(rec) => {
            let report = analyze(&rec);
            write(&rec, &report)?;
            Ok(report)
        }
        Err(failure) => {
            let report = analyze(&failure.partial).aborted(&failure.error);
            write(&failure.partial, &report)?;
            Err(CliError::Solver(failure.error.to_string()))
        }
    }
}

fn assert_pass(report: &RunReport) -> Result<(), CliError> {
    match &report.verdict {
        Some(v) if v.status == VerdictStatus::Pass => Ok(()),
        Some(v) => Err(CliError::Assertion(format!(
            "convergence verdict {:?}: {}",
            v.status, v.reason
        ))),
        None => Err(CliError::Assertion(
            "no large-time prediction applies to these parameters".into(),
        )),
    }
}

fn verdict_label(report: &RunReport) -> &'static str {
    match report.verdict.as_ref().map(|v| v.status) {
        Some(VerdictStatus::Pass) => "PASS",
        Some(VerdictStatus::Fail) => "FAIL",
        Some(VerdictStatus::Inconclusive) => "INCONCLUSIVE",
        None => "NONE",
    }
}

pub fn simulate(config: &Path, out: Option<&Path>, assert: bool) -> Result<(), CliError> {
    let (cfg, base) = load_config(config)?;
    let out = out.map_or_else(|| cfg.output.dir.clone(), Path::to_path_buf);
    let report = run_into(&cfg, &base, &out, assert)?;
    println!(
        "t = {}  samples = {}  verdict = {}",
        report.t_final,
        report.samples,
        verdict_label(&report)
    );
    if assert {
        assert_pass(&report)?;
    }
    Ok(())
}

fn parse_axis(spec: &str) -> Result<(String, Vec<f64>), CliError> {
    let usage = |m: String| CliError::Usage(format!("--axis {spec:?}: {m}"));
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| usage("expected name=v1,v2,...".into()))?;
    let values: Vec<f64> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| usage(format!("{v:?} is not a number"))))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(usage("axis is empty".into()));
    }
    Ok((name.trim().to_owned(), values))
}

pub fn sweep(
    config: &Path,
    axes: &[String],
    out: Option<&Path>,
    threads: Option<usize>,
    assert: bool,
) -> Result<(), CliError> {
    if axes.len() > 2 {
        return Err(CliError::Usage("at most two --axis options".into()));
    }
    let (template, base) = load_config(config)?;
    let axes: Vec<(String, Vec<f64>)> = axes.iter().map(|a| parse_axis(a)).collect::<Result<_, _>>()?;

    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for (_, values) in &axes {
        points = points
            .iter()
            .flat_map(|p| values.iter().map(move |&v| [p.as_slice(), &[v]].concat()))
            .collect();
    }
    let configs: Vec<RunConfig> = points
        .iter()
        .map(|p| {
            axes.iter().zip(p).try_fold(template.clone(), |cfg, ((name, _), &v)| {
                cfg.with_param(name, v).map_err(|e| CliError::Usage(e.to_string()))
            })
        })
        .collect::<Result<_, _>>()?;

    let out = out.map_or_else(|| template.output.dir.clone(), Path::to_path_buf);
    create_dir(&out)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Io(e.into()))?;
    let results: Vec<Result<RunReport, CliError>> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| run_into(cfg, &base, &out.join(format!("run_{i:03}")), assert))
            .collect()
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run".to_owned()];
    header.extend(axes.iter().map(|(n, _)| n.clone()));
    header.extend(
        ["status", "final_res_u", "final_res_v", "fitted_decay_rate", "verdict", "error"]
            .map(String::from),
    );
    let csv_err = |e: csv::Error| CliError::Io(e.into());
    w.write_record(&header).map_err(csv_err)?;
    let fmt = |x: Option<f64>| x.map(|x| format!("{x:?}")).unwrap_or_default();
    for (i, (point, result)) in points.iter().zip(&results).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(point.iter().map(|x| format!("{x:?}")));
        match result {
            Ok(r) => row.extend([
                "completed".to_owned(),
                fmt(r.verdict.as_ref().map(|v| v.tail_res_u_max).or(Some(f64::NAN))),
                fmt(r.verdict.as_ref().map(|v| v.tail_res_v_max).or(Some(f64::NAN))),
                fmt(r.fitted_decay_rate),
                verdict_label(r).to_owned(),
                String::new(),
            ]),
            Err(e) => row.extend([
                "failed".to_owned(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.to_string(),
            ]),
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error().into()))?;
    let summary = out.join("summary.csv");
    nutaxis_core::io::write_atomic(&summary, &bytes)
        .with_context(|| format!("writing {}", summary.display()))?;
    println!("{} runs, summary in {}", results.len(), summary.display());

    // report the most severe child failure
    let mut worst: Option<CliError> = None;
    for (i, r) in results.into_iter().enumerate() {
        let e = match r {
            Ok(report) if assert => match assert_pass(&report) {
                Ok(()) => continue,
                Err(e) => e,
            },
            Ok(_) => continue,
            Err(e) => e,
        };
        eprintln!("run_{i:03}: {e}");
        let rank = |e: &CliError| match e {
            CliError::Io(_) => 3,
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 1,
            CliError::Assertion(_) => 0,
        };
        if worst.as_ref().map_or(true, |w| rank(&e) > rank(w)) {
            worst = Some(e);
        }
    }
    worst.map_or(Ok(()), Err)
}

pub struct ExponentRequest {
    pub single: Option<f64>,
    pub m_min: f64,
    pub m_max: f64,
    pub samples: Option<usize>,
    pub bisect: bool,
    pub tol: f64,
    pub out: Option<PathBuf>,
}

pub fn exponent(req: ExponentRequest) -> Result<(), CliError> {
    let settings = IterationSettings::default();
    let ms: Vec<f64> = match req.single {
        Some(m) => {
            if !(m > 1.0 && m < 2.0) {
                return Err(CliError::Usage(format!("--m must lie in (1, 2), got {m}")));
            }
            vec![m]
        }
        None => {
            let (lo, hi) = (req.m_min, req.m_max);
            if !(lo >= 1.0 && hi <= 2.0 && lo < hi) {
                return Err(CliError::Usage(format!(
                    "range ({lo}, {hi}) must lie within (1, 2)"
                )));
            }
            let n = match (req.samples, req.bisect) {
                (Some(n), _) => n,
                (None, true) => 0,
                (None, false) => 11,
            };
            (1..=n)
                .map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64)
                .collect()
        }
    };

    if !ms.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Io(e.into());
        w.write_record(["m", "classification", "a_star", "iterations"])
            .map_err(csv_err)?;
        for &m in &ms {
            let r = exponent::iterate_ak(m, settings).map_err(|e| CliError::Usage(e.to_string()))?;
            let limit = match r.classification {
                Classification::ConvergesTo(a) => format!("{a:?}"),
                _ => String::new(),
            };
            w.write_record([
                format!("{m:?}"),
                r.classification.label().to_owned(),
                limit,
                r.k_truncated.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error().into()))?;
        match &req.out {
            Some(dir) => {
                create_dir(dir)?;
                let path = dir.join("exponent.csv");
                nutaxis_core::io::write_atomic(&path, &bytes)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            None => print!("{}", String::from_utf8_lossy(&bytes)),
        }
    }

    if req.bisect {
        if req.single.is_some() {
            return Err(CliError::Usage("--bisect needs a range, not --m".into()));
        }
        if !(req.tol > 0.0) {
            return Err(CliError::Usage(format!("--tol must be positive, got {}", req.tol)));
        }
        let t = exponent::bisect_threshold(req.m_min, req.m_max, req.tol, settings).map_err(|e| match e {
            ExponentError::Inconclusive { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        })?;
        let mc = exponent::critical_m();
        println!("threshold = {t}");
        println!("closed_form = {mc}");
        println!("abs_error = {:e}", (t - mc).abs());
    }
    Ok(())
}

pub fn diagnose(
    config: &Path,
    series: Option<&Path>,
    out: Option<&Path>,
    assert: bool,
) -> Result<(), CliError> {
    let (cfg, _) = load_config(config)?;
    let series = series.map_or_else(
        || out.unwrap_or(&cfg.output.dir).join("series.csv"),
        Path::to_path_buf,
    );
    let mut rec = read_series(&series).with_context(|| format!("reading {}", series.display()))?;
    rec.xi = cfg.model.xi;
    let report = RunReport::analyze(
        &rec,
        &cfg.model,
        cfg.output.tail_fraction,
        cfg.output.tolerance,
        true,
    );
    match out {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join("report.json");
            write_report(&report, &path).with_context(|| format!("writing {}", path.display()))?;
            println!("verdict = {}", verdict_label(&report));
        }
        None => println!("{}", report.to_json()),
    }
    if assert {
        assert_pass(&report)?;
    }
    Ok(())
}
