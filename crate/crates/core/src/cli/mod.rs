//! Command-line front end: configuration, dispatch and result files.

mod config;
mod svg;

pub use config::{Format, Loaded, RunConfig, SCHEMA};
pub use svg::ladder_svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{limiting_data, run_ladder, tune_side, verify, LadderConfig, Status, Tolerances, Verdict};
use crate::modes::{extract_beta_tilde, Side};
use crate::stripgrid::transverse_points;
use crate::transverse::{transverse_modes, transverse_modes_fd};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "wgspec", version, about = "Eigenvalues of a planar waveguide with two distant perturbations")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration (schema "wgspec-1").
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `outputs.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the per-distance solves (0 = all cores).
    #[arg(long, global = true, env = "WGSPEC_JOBS")]
    jobs: Option<usize>,
    /// Seed of the Lanczos start vectors.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Minus,
    Plus,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transverse thresholds nu_j, optionally against the finite-difference values.
    Transverse {
        #[arg(long)]
        fd: bool,
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Spectrum and far-field amplitudes of the limiting operators.
    Limiting {
        #[arg(long, value_enum, default_value = "both")]
        side: SideArg,
        /// Also extract the partner amplitude for levels only one side carries.
        #[arg(long)]
        beta_tilde: bool,
    },
    /// Direct solves and predictions over the distance ladder.
    Ladder,
    /// Runs the ladder and checks the selected asymptotic statements.
    Verify,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_FAIL,
    }
}

/// Where results go and in which formats.
struct Sink {
    dir: PathBuf,
    formats: Vec<Format>,
}

impl Sink {
    fn new(cli: &Cli, loaded: &Loaded) -> Result<Self> {
        let dir = cli
            .out
            .clone()
            .or_else(|| loaded.raw.outputs.dir.as_ref().map(|d| loaded.base.join(d)))
            .unwrap_or_else(|| PathBuf::from("wgspec-out"));
        let formats = match cli.format {
            Some(f) => vec![f],
            None => loaded.raw.outputs.formats.clone().unwrap_or_else(|| vec![Format::All]),
        };
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, formats })
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.iter().any(|&g| g == f || g == Format::All)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        if self.wants(Format::Json) {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            std::fs::write(self.path(name), text)?;
        }
        Ok(())
    }
}

fn load(cli: &Cli) -> Result<Loaded> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Config {
        path: String::new(),
        message: "--config is required".into(),
    })?;
    Loaded::from_file(path)
}

fn ladder_config(cli: &Cli, loaded: &Loaded) -> Result<LadderConfig> {
    let mut cfg = loaded.ladder_config(cli.jobs.unwrap_or(0), cli.seed)?;
    if let Some(t) = &loaded.raw.tune {
        let tuned = tune_side(&mut cfg, t.side)?;
        log::info!(
            "tuned the {} side by x{:.9} to lambda* = {:.12} in {} iterations",
            t.side,
            tuned.multiplier,
            tuned.lambda,
            tuned.iterations
        );
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct TransverseRow {
    j: usize,
    nu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    nu_fd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_over_h2: Option<f64>,
}

fn cmd_transverse(cli: &Cli, loaded: &Loaded, fd: bool, modes: Option<usize>) -> Result<i32> {
    let g = &loaded.raw.geometry;
    let count = modes.or(loaded.raw.transverse.modes).unwrap_or(5);
    let fd = fd || loaded.raw.transverse.fd;
    let exact = transverse_modes(g.width, count)?;
    let ny = transverse_points(g.width, g.h)?;
    let h = g.width / (ny + 1) as f64;
    let approx = if fd { Some(transverse_modes_fd(g.width, ny, count)?) } else { None };
    let rows: Vec<TransverseRow> = exact
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let nu_fd = approx.as_ref().map(|a| a[i].nu);
            let error = nu_fd.map(|v| (v - m.nu).abs());
            TransverseRow {
                j: m.index,
                nu: m.nu,
                nu_fd,
                error,
                error_over_h2: error.map(|e| e / (h * h)),
            }
        })
        .collect();
    let sink = Sink::new(cli, loaded)?;
    for r in &rows {
        match (r.nu_fd, r.error) {
            (Some(v), Some(e)) => println!("j = {:2}  nu = {:.12}  fd = {:.12}  err = {:.3e}", r.j, r.nu, v, e),
            _ => println!("j = {:2}  nu = {:.12}", r.j, r.nu),
        }
    }
    sink.json("transverse.json", &rows)?;
    if sink.wants(Format::Csv) {
        let mut w = csv::Writer::from_path(sink.path("transverse.csv"))?;
        w.write_record(["j", "nu", "nu_fd", "error"])?;
        for r in &rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([r.j.to_string(), r.nu.to_string(), opt(r.nu_fd), opt(r.error)])?;
        }
        w.flush()?;
    }
    Ok(EXIT_PASS)
}

fn cmd_limiting(cli: &Cli, loaded: &Loaded, side: SideArg, beta_tilde: bool) -> Result<i32> {
    let mut cfg = loaded.ladder_config(cli.jobs.unwrap_or(0), cli.seed).or_else(|_| {
        let mut c = LadderConfig::new(
            loaded.raw.geometry.width,
            loaded.raw.geometry.h,
            loaded.minus.clone(),
            loaded.plus.clone(),
            vec![loaded.minus.half_width + loaded.plus.half_width],
        );
        c.limiting_margin = loaded.raw.geometry.limiting_margin;
        if let Some(k) = loaded.raw.solver.max_pairs {
            c.max_pairs = k;
        }
        Ok::<_, Error>(c)
    })?;
    if let Some(t) = &loaded.raw.tune {
        tune_side(&mut cfg, t.side)?;
    }
    let sink = Sink::new(cli, loaded)?;
    let mut lim = limiting_data(&cfg)?;
    let sides: &[Side] = match side {
        SideArg::Minus => &[Side::Minus],
        SideArg::Plus => &[Side::Plus],
        SideArg::Both => &[Side::Minus, Side::Plus],
    };
    let want_bt = beta_tilde || loaded.raw.beta_tilde;
    for &s in sides {
        let other_vals = match s {
            Side::Minus => lim.plus.eigenvalues(),
            Side::Plus => lim.minus.eigenvalues(),
        };
        let (other_op, other_spec) = match s {
            Side::Minus => (&lim.plus_op, &cfg.plus),
            Side::Plus => (&lim.minus_op, &cfg.minus),
        };
        let mut tildes = Vec::new();
        let spectrum = match s {
            Side::Minus => &lim.minus,
            Side::Plus => &lim.plus,
        };
        for lv in &spectrum.levels {
            let shared = other_vals.iter().any(|v| (v - lv.lambda).abs() <= crate::harness::MATCH_TOL);
            tildes.push(if want_bt && !shared {
                Some(extract_beta_tilde(other_op, other_spec, lv.lambda, s).map(|(b, _)| b)?)
            } else {
                None
            });
        }
        let spectrum = match s {
            Side::Minus => &mut lim.minus,
            Side::Plus => &mut lim.plus,
        };
        for (lv, bt) in spectrum.levels.iter_mut().zip(tildes) {
            lv.beta_tilde = bt;
        }
        println!("{s} side: {} level(s) below nu_1 = {:.12}", spectrum.levels.len(), spectrum.threshold);
        for (i, lv) in spectrum.levels.iter().enumerate() {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
            println!(
                "  lambda = {:.12}  p = {}  beta = {}  plateau = {}  beta~ = {}",
                lv.lambda,
                lv.multiplicity,
                fmt(lv.beta),
                fmt(lv.plateau_deviation),
                fmt(lv.beta_tilde)
            );
            if let (Some(p), true) = (&lv.profile, sink.wants(Format::Csv)) {
                p.save_csv(&sink.path(&format!("profile_{s}_{i}.csv")))?;
            }
        }
        for n in &spectrum.notes {
            println!("  note: {n}");
        }
        sink.json(&format!("limiting_{s}.json"), spectrum)?;
    }
    Ok(EXIT_PASS)
}

fn print_ladder(report: &crate::harness::LadderReport) {
    for (k, c) in report.clusters.iter().enumerate() {
        println!(
            "cluster {k}: lambda* = {:.12}  p = {}+{}  s = {:.6}",
            c.lambda_star, c.p_minus, c.p_plus, c.s
        );
    }
    for p in &report.points {
        if let Some(e) = &p.error {
            println!("l = {:>6}: failed: {e}", p.l);
            continue;
        }
        let vals: Vec<String> = p.levels.iter().map(|lv| format!("{:.12}", lv.lambda)).collect();
        println!("l = {:>6} ({} unknowns): {}", p.l, p.unknowns, vals.join(" "));
    }
    for s in &report.series {
        if let Some(f) = s.gap_fit {
            println!("cluster {}: gap rate {:.6}, prefactor {:.6e}, R^2 {:.6}", s.cluster, f.rate, f.prefactor, f.r2);
        }
        if let Some(f) = s.shift_fit {
            println!("cluster {}: shift rate {:.6}, prefactor {:.6e}, R^2 {:.6}", s.cluster, f.rate, f.prefactor, f.r2);
        }
    }
}

fn save_ladder(sink: &Sink, report: &crate::harness::LadderReport) -> Result<()> {
    sink.json("ladder.json", report)?;
    if sink.wants(Format::Csv) {
        report.write_csv(std::fs::File::create(sink.path("ladder.csv"))?)?;
    }
    if sink.wants(Format::Svg) {
        std::fs::write(sink.path("ladder.svg"), ladder_svg(report))?;
    }
    Ok(())
}

fn cmd_ladder(cli: &Cli, loaded: &Loaded) -> Result<i32> {
    let cfg = ladder_config(cli, loaded)?;
    let sink = Sink::new(cli, loaded)?;
    let report = run_ladder(&cfg)?;
    print_ladder(&report);
    save_ladder(&sink, &report)?;
    Ok(EXIT_PASS)
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        println!("{:<12} {:?}", v.theorem.name(), v.status);
        for c in &v.checks {
            println!(
                "    {:<4} {:<44} measured {:>12.6e}  expected {:>12.6e}  margin {:.4}{}",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.measured,
                c.expected,
                c.margin,
                if c.informative { "  (informative)" } else { "" }
            );
        }
        for n in &v.notes {
            println!("    note: {n}");
        }
    }
}

fn cmd_verify(cli: &Cli, loaded: &Loaded) -> Result<i32> {
    let cfg = ladder_config(cli, loaded)?;
    let sink = Sink::new(cli, loaded)?;
    let report = run_ladder(&cfg)?;
    let verdicts: Vec<Verdict> = match loaded.theorems() {
        Some(ts) => ts.iter().map(|&t| verify(&report, t, &Tolerances::default())).collect(),
        None => report.verdicts.clone(),
    };
    print_verdicts(&verdicts);
    save_ladder(&sink, &report)?;
    sink.json("verdicts.json", &verdicts)?;
    Ok(verdict_code(&verdicts))
}

/// 0 when everything passes, 1 on any failure, 4 when only inconclusive
/// verdicts stand in the way.
pub fn verdict_code(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().any(|v| v.status == Status::Fail) {
        EXIT_FAIL
    } else if verdicts.is_empty() || verdicts.iter().any(|v| v.status == Status::Inconclusive) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_PASS
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let loaded = load(cli)?;
    match &cli.command {
        Command::Transverse { fd, modes } => cmd_transverse(cli, &loaded, *fd, *modes),
        Command::Limiting { side, beta_tilde } => cmd_limiting(cli, &loaded, *side, *beta_tilde),
        Command::Ladder => cmd_ladder(cli, &loaded),
        Command::Verify => cmd_verify(cli, &loaded),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
