//! The `suprec` command line.
//!
//! Every subcommand reads a TOML experiment file (see [`config`]), runs on a
//! rayon pool of the requested size and writes a CSV whose first lines are a
//! `#`-prefixed copy of the fully resolved configuration. Thread count and
//! output path are not part of that block, so reruns with the same seed are
//! byte-identical.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 I/O error.

pub mod config;
pub mod eval;
pub mod format;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bounds::{sample_complexity_upper, BoundConstants, SampleComplexityQuery};
use crate::error::Error;
use crate::model::ProblemInstance;
use crate::montecarlo::{
    calibrate_c_heavy, calibrate_c_sample, estimate_success, find_nstar, fit_log_log_slope, sweep_phase_transition,
    verify_bound, verify_separation, NStar, SweepRecord,
};
use config::ExperimentConfig;
use format::{comment_block, g17};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "suprec",
    version,
    about = "Support recovery experiments from Gaussian linear measurements"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output file; overrides `experiment.output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Master seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = one per core). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Write to standard output instead of a file.
    #[arg(long, global = true)]
    pub stdout: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the success probability at a fixed configuration.
    Trial,
    /// Find n* for every m in `sweep.m_list` and fit the log-log slope.
    Sweep,
    /// Find the smallest n reaching success rate 1 - delta.
    Nstar,
    /// Compare simulated tails with the analytic bounds.
    VerifyBounds,
    /// Fraction of instances satisfying the separation condition for all pairs.
    VerifySeparation,
    /// Evaluate one closed-form bound, e.g. `bounds-eval heavy_q3 n=10 m=4 t=0.3`.
    BoundsEval {
        name: String,
        /// `key=value` parameters.
        args: Vec<String>,
    },
    /// Dump one generated instance as JSON.
    Generate {
        /// Trial index of the instance.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

/// A reason to stop with a nonzero exit code.
#[derive(Debug)]
enum Failure {
    Verification(String),
    Config(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Verification(_) => EXIT_VERIFICATION,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = if cli.threads == 0 {
        dispatch(&cli)
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Failure::Config(format!(
                "cannot build a pool of {} threads: {e}",
                cli.threads
            ))),
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Verification(m) => eprintln!("verification failed: {m}"),
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Io(m) => eprintln!("i/o error: {m}"),
            }
            f.code()
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    if let Command::BoundsEval { name, args } = &cli.command {
        let (header, row) = eval::bounds_eval(name, args)?;
        println!("{header}\n{row}");
        return Ok(());
    }
    let mut cfg = load_config(cli)?;
    if let Some(seed) = cli.seed {
        if seed > i64::MAX as u64 {
            return Err(Failure::Config(
                "invalid configuration: `seed`: must be below 2^63".into(),
            ));
        }
        cfg.override_seed(seed);
    }
    let sink = Sink::new(cli, &cfg);
    match &cli.command {
        Command::Trial => cmd_trial(&cfg, &sink),
        Command::Sweep => cmd_sweep(&cfg, &sink),
        Command::Nstar => cmd_nstar(&cfg, &sink),
        Command::VerifyBounds => cmd_verify_bounds(&cfg, &sink),
        Command::VerifySeparation => cmd_verify_separation(&cfg, &sink),
        Command::Generate { trial } => cmd_generate(&cfg, &sink, *trial),
        Command::BoundsEval { .. } => unreachable!(),
    }
}

fn load_config(cli: &Cli) -> std::result::Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("this subcommand needs --config <path>".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Where CSV text goes.
struct Sink {
    path: Option<PathBuf>,
}

impl Sink {
    fn new(cli: &Cli, cfg: &ExperimentConfig) -> Self {
        let path = if cli.stdout {
            None
        } else {
            cli.out
                .clone()
                .or_else(|| cfg.experiment.output.as_ref().map(PathBuf::from))
        };
        Sink { path }
    }

    fn write(&self, text: &str) -> Outcome {
        match &self.path {
            Some(p) => write_file(p, text),
            None => {
                let mut out = io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| Failure::Io(format!("stdout: {e}")))
            }
        }
    }

    /// Writes a secondary CSV next to the main one (`x.csv` gives `x.summary.csv`),
    /// or after a blank line on standard output.
    fn write_summary(&self, text: &str) -> Outcome {
        match &self.path {
            Some(p) => write_file(&p.with_extension("summary.csv"), text),
            None => Sink { path: None }.write(&format!("\n{text}")),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn csv(cfg: &ExperimentConfig, command: &str, extra: &[String], header: &str, rows: &[String]) -> String {
    let mut out = format!("# suprec {command}\n");
    out.push_str(&comment_block(&cfg.resolved()));
    for line in extra {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

fn cmd_trial(cfg: &ExperimentConfig, sink: &Sink) -> Outcome {
    let p = cfg.problem()?;
    let trials = cfg.experiment.trials;
    eprintln!("trial: d={} k={} m={} n={}, {trials} trials", p.d, p.k, p.m, p.n);
    let e = estimate_success(&p, trials)?;
    let row = [
        p.d.to_string(),
        p.k.to_string(),
        p.m.to_string(),
        p.n.to_string(),
        g17(p.sigma2),
        g17(p.x_min),
        g17(p.x_max),
        p.signal_mode.name().to_string(),
        e.trials.to_string(),
        e.successes.to_string(),
        g17(e.rate),
        g17(e.ci_low),
        g17(e.ci_high),
        p.seed.to_string(),
    ]
    .join(",");
    sink.write(&csv(
        cfg,
        "trial",
        &[],
        "d,k,m,n,sigma2,x_min,x_max,signal_mode,trials,successes,rate,ci_low,ci_high,master_seed",
        &[row],
    ))
}

fn sweep_row(r: &SweepRecord) -> String {
    let (nstar, found) = match r.nstar {
        NStar::Found(n) => (n.to_string(), 1),
        NStar::NotFound { .. } => (String::new(), 0),
    };
    format!(
        "{},{},{},{:.6},{},{},{},{},{}",
        r.d,
        r.k,
        r.m,
        r.k_over_m(),
        g17(r.delta),
        nstar,
        found,
        r.trials,
        r.master_seed
    )
}

fn cmd_sweep(cfg: &ExperimentConfig, sink: &Sink) -> Outcome {
    let base = cfg.problem()?;
    let s = &cfg.sweep;
    if s.m_list.is_empty() {
        return Err(Failure::Config(
            "invalid configuration: `m_list`: must not be empty".into(),
        ));
    }
    let (delta, trials) = (cfg.experiment.delta, cfg.experiment.trials);
    let mut records = Vec::with_capacity(s.m_list.len());
    for &m in &s.m_list {
        let r = sweep_phase_transition(&base, &[m], delta, trials, s.n_max)?.remove(0);
        match r.nstar {
            NStar::Found(n) => eprintln!("sweep: m={m} k/m={:.3} n*={n}", r.k_over_m()),
            NStar::NotFound { last_n, last_rate } => {
                eprintln!("sweep: m={m} n* not found up to n={last_n} (rate {last_rate:.3})")
            }
        }
        records.push(r);
    }
    let rows: Vec<String> = records.iter().map(sweep_row).collect();
    sink.write(&csv(
        cfg,
        "sweep",
        &[],
        "d,k,m,k_over_m,delta,nstar,found,trials,master_seed",
        &rows,
    ))?;

    let [lo, hi] = s.slope_window;
    let fit = fit_log_log_slope(&records, lo, hi);
    let outside = records.iter().filter(|r| r.outside_regime).count();
    let (slope, intercept, points) = match fit {
        Some(f) => (g17(f.slope), g17(f.intercept), f.points),
        None => (String::new(), String::new(), 0),
    };
    let summary = format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        base.d,
        base.k,
        g17(delta),
        trials,
        g17(lo),
        g17(hi),
        points,
        slope,
        intercept,
        outside,
        base.seed
    );
    sink.write_summary(&csv(
        cfg,
        "sweep summary",
        &["slope of ln n* against ln(k/m) over found points with k/m in the window".into()],
        "d,k,delta,trials,window_low,window_high,points,slope,intercept,outside_regime_points,master_seed",
        &[summary],
    ))
}

fn cmd_nstar(cfg: &ExperimentConfig, sink: &Sink) -> Outcome {
    let p = cfg.problem()?;
    let (delta, trials) = (cfg.experiment.delta, cfg.experiment.trials);
    let search = find_nstar(&p, delta, trials, cfg.nstar.n_max)?;
    let (nstar, found, last_n, last_rate) = match search.nstar {
        NStar::Found(n) => (n.to_string(), 1, n, search.rate_at(n).unwrap_or(f64::NAN)),
        NStar::NotFound { last_n, last_rate } => (String::new(), 0, last_n, last_rate),
    };
    eprintln!("nstar: {} probes", search.probes.len());
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        p.d,
        p.k,
        p.m,
        g17(delta),
        nstar,
        found,
        last_n,
        g17(last_rate),
        trials,
        p.seed
    );
    let probes: Vec<String> = search
        .probes
        .iter()
        .map(|(n, e)| format!("probe n={n} successes={}/{}", e.successes, e.trials))
        .collect();
    sink.write(&csv(
        cfg,
        "nstar",
        &probes,
        "d,k,m,delta,nstar,found,last_n,last_rate,trials,master_seed",
        &[row],
    ))
}

fn cmd_verify_bounds(cfg: &ExperimentConfig, sink: &Sink) -> Outcome {
    let vb = &cfg.verify_bounds;
    let mut extra = Vec::new();
    if vb.calibrate_c_heavy {
        let cal = calibrate_c_heavy(vb.replications, vb.seed.wrapping_add(1))?;
        let msg = match cal.c_heavy {
            Some(c) => format!("calibrated c_heavy = {} (reported only; not applied)", g17(c)),
            None => "calibration: no grid value of c_heavy passes".to_string(),
        };
        eprintln!("verify-bounds: {msg}");
        extra.push(msg);
    }
    let mut rows = Vec::new();
    let mut failures = 0usize;
    for probe in &vb.probe {
        let (probe, selector) = probe.to_probe(vb.replications)?;
        let report = verify_bound(&probe, selector, &cfg.constants, vb.seed)?;
        if let Some(mu) = report.mu_max {
            extra.push(format!(
                "{} n={} m={}: simulated mu_max = {}",
                selector.name(),
                probe.n,
                probe.m,
                g17(mu)
            ));
        }
        for c in &report.checks {
            failures += usize::from(!c.pass);
            rows.push(format!(
                "{},{},{},{},{},{},{},{}",
                selector.name(),
                probe.n,
                probe.m,
                g17(c.t),
                g17(c.empirical),
                g17(c.std_err),
                g17(c.analytic),
                u8::from(c.pass)
            ));
        }
        eprintln!(
            "verify-bounds: {} n={} m={}: {}",
            selector.name(),
            probe.n,
            probe.m,
            if report.pass { "pass" } else { "FAIL" }
        );
    }
    sink.write(&csv(
        cfg,
        "verify-bounds",
        &extra,
        "lemma,n,m,t,empirical,std_err,analytic,pass",
        &rows,
    ))?;
    if failures > 0 {
        return Err(Failure::Verification(format!("{failures} of {} rows fail", rows.len())));
    }
    Ok(())
}

fn cmd_verify_separation(cfg: &ExperimentConfig, sink: &Sink) -> Outcome {
    let mut p = cfg.problem()?;
    let (delta, instances) = (cfg.experiment.delta, cfg.experiment.trials);
    let vs = &cfg.verify_separation;
    let mut extra = Vec::new();
    let mut constants: BoundConstants = cfg.constants;
    if vs.calibrate_c_sample {
        let calib_cfg = p.clone().with_seed(p.seed.wrapping_add(1));
        let cal = calibrate_c_sample(&calib_cfg, delta, instances)?;
        let c = cal
            .c_sample
            .ok_or_else(|| Failure::Verification("no grid value of c_sample reaches the target".into()))?;
        extra.push(format!("calibrated c_sample = {} on seed {}", g17(c), calib_cfg.seed));
        eprintln!("verify-separation: calibrated c_sample = {c}");
        constants.c_sample = c;
    }
    if let Some(f) = vs.n_factor {
        let s = sample_complexity_upper(&SampleComplexityQuery::from_config(&p, delta), &constants)?;
        p.n = ((f * s.value).ceil() as usize).max(1);
        extra.push(format!("n = ceil({} * {}) = {}", g17(f), g17(s.value), p.n));
    }
    let summary = verify_separation(&p, delta, instances)?;
    let satisfied = summary.satisfied.iter().filter(|&&s| s).count();
    let pass = summary.fraction >= 1.0 - delta;
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        p.d,
        p.k,
        p.m,
        p.n,
        g17(delta),
        g17(constants.c_sample),
        instances,
        satisfied,
        g17(summary.fraction),
        u8::from(pass),
        p.seed
    );
    sink.write(&csv(
        cfg,
        "verify-separation",
        &extra,
        "d,k,m,n,delta,c_sample,instances,satisfied,fraction,pass,master_seed",
        &[row],
    ))?;
    if !pass {
        return Err(Failure::Verification(format!(
            "separation holds on {satisfied} of {instances} instances, below 1 - delta"
        )));
    }
    Ok(())
}

fn cmd_generate(cfg: &ExperimentConfig, sink: &Sink, trial: u64) -> Outcome {
    let p = cfg.problem()?;
    let inst = ProblemInstance::generate(&p, trial)?;
    let mut json = inst.to_json();
    json.push('\n');
    sink.write(&json)
}
