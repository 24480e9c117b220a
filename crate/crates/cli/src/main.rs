//! `hopf-energy` command-line interface.
//!
//! Exit codes: 0 when every check passes, 2 when a mathematical check is
//! violated, 1 on operational errors (bad input, I/O, numerical breakdown).
//!
//! Settings come from, in increasing precedence: built-in defaults, the
//! `--config` JSON file, command-line flags. Inside the config file the
//! top-level keys override the nested `optimizer` object.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use hopf_energy::inequality::{run_lab, LabConfig};
use hopf_energy::optimizer::{
    minimize_problem, probe, sweep, OptimizationReport, OptimizerConfig, Problem, ProbeReport, SweepRow,
};
use hopf_energy::phi::{default_t_grid, jacobian_check, moment_identities};
use hopf_energy::quadrature::build_quadrature;
use hopf_energy::report::{Envelope, Meta};
use hopf_energy::shape::energy;
use hopf_energy::{fields::boundary_mismatch, DomainSpec, Error, FieldSpec, Result};
use serde::Serialize;

use config::{
    parse_list, parse_resolution, resolve_domain, resolve_field, resolve_resolution, FieldArg, Format, RunConfig,
};
use output::{csv_rows, fixed, opt, sci, table, verdict, Rendered};

/// Tolerance for the transport moment residuals, relative to `vol(K)`.
const TRANSPORT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
struct F64List(Vec<f64>);

#[derive(Debug, Clone)]
struct UsizeList(Vec<usize>);

fn f64_list(s: &str) -> std::result::Result<F64List, String> {
    parse_list(s).map(F64List)
}

fn usize_list(s: &str) -> std::result::Result<UsizeList, String> {
    parse_list(s).map(UsizeList)
}

#[derive(Parser, Debug)]
#[command(name = "hopf-energy", version, about = "Energy of unit vector fields on spherical domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON settings file; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Add wall-clock time to the report (output is then no longer reproducible byte for byte).
    #[arg(long, global = true)]
    timing: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sphere S^(2k+1).
    #[arg(long, global = true)]
    k: Option<usize>,
    /// `full` or `cap:rho=R`.
    #[arg(long, global = true)]
    domain: Option<String>,
    /// Quadrature resolution `NR,NA`.
    #[arg(long, global = true, value_parser = parse_resolution)]
    resolution: Option<[usize; 2]>,
    /// `hopf`, `hopf-opposite` or `file:PATH`.
    #[arg(long, global = true)]
    field: Option<String>,
    /// Comma-separated t values.
    #[arg(long = "t-grid", global = true, value_parser = f64_list)]
    t_grid: Option<F64List>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Randomized checks of the matrix identities and inequalities.
    VerifyIdentities {
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, value_parser = usize_list)]
        dims: Option<UsizeList>,
    },
    /// Energy of a field on a domain.
    Energy,
    /// Moment identities behind the volume of x + t v(x).
    Transport,
    /// Numeric vs closed-form Jacobian determinant at random points.
    Jacobian {
        #[arg(long)]
        points: Option<usize>,
    },
    /// Penalized minimization over boundary-pinned perturbations.
    Optimize {
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Optimizer runs over a list of cap radii.
    Sweep {
        #[arg(long, value_parser = f64_list)]
        rho: Option<F64List>,
        #[command(flatten)]
        opt: OptArgs,
    },
}

#[derive(clap::Args, Debug)]
struct OptArgs {
    /// Number of random starts.
    #[arg(long)]
    runs: Option<u64>,
    /// Divergence penalty weight (scaled by 1/vol).
    #[arg(long)]
    lambda: Option<f64>,
    /// Boundary penalty weight.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    generators: Option<usize>,
}

/// Flags merged over the config file.
struct Settings {
    cfg: RunConfig,
    format: Format,
    out: Option<PathBuf>,
    timing: bool,
}

impl Settings {
    fn k(&self) -> usize {
        self.cfg.k.unwrap_or(1)
    }

    fn domain(&self) -> Result<DomainSpec> {
        resolve_domain(self.k(), self.cfg.domain.as_deref())
    }

    fn field(&self) -> Result<FieldSpec> {
        resolve_field(self.k(), self.cfg.field.clone())
    }

    fn resolution(&self) -> [usize; 2] {
        resolve_resolution(self.k(), self.cfg.resolution)
    }

    fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(0)
    }

    fn meta(&self, command: &str) -> Meta {
        Meta::new(command).with_k(self.k()).with_seed(self.seed())
    }

    /// Optimizer config: nested `optimizer` object, then top-level keys, then flags.
    fn optimizer(&self, a: &OptArgs) -> Result<OptimizerConfig> {
        let mut o = match &self.cfg.optimizer {
            Some(o) => o.clone(),
            None => OptimizerConfig::for_domain(self.domain()?),
        };
        if self.cfg.k.is_some() || self.cfg.domain.is_some() {
            o.domain = self.domain()?;
        }
        if let Some([r, a]) = self.cfg.resolution {
            o.radial = r;
            o.angular = a;
        }
        if let Some(s) = self.cfg.seed {
            o.seed = s;
        }
        if let Some(l) = a.lambda {
            o.penalty_div = l;
        }
        if let Some(m) = a.mu {
            o.penalty_boundary = m;
        }
        if let Some(i) = a.max_iters {
            o.max_iters = i;
        }
        if let Some(g) = a.generators {
            o.generators = g;
        }
        o.validate()?;
        Ok(o)
    }
}

fn merge(cli: &Cli) -> Result<Settings> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! over {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = Some(v);
            }
        };
    }
    over!(k, cli.k);
    over!(domain, cli.domain.clone());
    over!(resolution, cli.resolution);
    over!(field, cli.field.clone().map(FieldArg::Name));
    over!(t_grid, cli.t_grid.clone().map(|l| l.0));
    over!(seed, cli.seed);
    over!(threads, cli.threads);
    over!(out, cli.out.clone());
    over!(format, cli.format);
    match &cli.command {
        Command::VerifyIdentities { samples, dims } => {
            over!(samples, *samples);
            over!(dims, dims.clone().map(|d| d.0));
        }
        Command::Jacobian { points } => over!(points, *points),
        Command::Optimize { opt } => over!(runs, opt.runs),
        Command::Sweep { rho, opt } => {
            over!(rho, rho.clone().map(|r| r.0));
            over!(runs, opt.runs);
        }
        Command::Energy | Command::Transport => {}
    }
    let timing = cli.timing || cfg.timing.unwrap_or(false);
    Ok(Settings { format: cfg.format.unwrap_or(Format::Json), out: cfg.out.clone(), timing, cfg })
}

fn name_of(c: &Command) -> &'static str {
    match c {
        Command::VerifyIdentities { .. } => "verify-identities",
        Command::Energy => "energy",
        Command::Transport => "transport",
        Command::Jacobian { .. } => "jacobian",
        Command::Optimize { .. } => "optimize",
        Command::Sweep { .. } => "sweep",
    }
}

fn finish<T: Serialize>(s: &Settings, mut meta: Meta, start: Instant, result: T, passed: Option<bool>) -> Envelope<T> {
    if s.timing {
        meta.wall_clock_s = Some(start.elapsed().as_secs_f64());
    }
    let env = Envelope::new(meta, result);
    match passed {
        Some(p) => env.with_verdict(p),
        None => env,
    }
}

fn cmd_verify_identities(s: &Settings, start: Instant) -> Result<(Rendered, u8)> {
    let defaults = LabConfig::default();
    let cfg = LabConfig {
        samples: s.cfg.samples.unwrap_or(defaults.samples),
        dims: s.cfg.dims.clone().unwrap_or(defaults.dims),
        seed: s.seed(),
        ..defaults
    };
    let report = run_lab(&cfg)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![r.check.name().into(), r.dim.to_string(), r.samples.to_string(), sci(r.value), sci(r.threshold), verdict(r.passed)]
        })
        .collect();
    let mut pretty = table(&["check", "dim", "samples", "value", "threshold", "status"], &rows);
    if let Some(v) = &report.violation {
        pretty.push_str(&format!(
            "violation: {} dim {} sample {} value {:e}\n",
            v.check.name(),
            v.dim,
            v.sample_index,
            v.value
        ));
    }
    let csv = csv_rows(&report.rows)?;
    let code = if report.passed { 0 } else { 2 };
    let passed = report.passed;
    let env = finish(s, Meta::new("verify-identities").with_seed(cfg.seed), start, report, Some(passed));
    Ok((Rendered::new(&env, csv, pretty)?, code))
}

#[derive(Serialize)]
struct EnergyOut {
    domain: String,
    field: FieldSpec,
    #[serde(flatten)]
    report: hopf_energy::EnergyReport,
    boundary_mismatch: Option<f64>,
}

fn cmd_energy(s: &Settings, start: Instant) -> Result<(Rendered, u8)> {
    let domain = s.domain()?;
    let field = s.field()?;
    let [nr, na] = s.resolution();
    let rule = build_quadrature(&domain, nr, na)?;
    let report = energy(&field, &rule, s.k())?;
    let mismatch = if domain.has_boundary() { Some(boundary_mismatch(&field, &rule)?) } else { None };
    let pretty = format!(
        "domain     {}\nvol        {}\nenergy     {}\nbound      {}\ngap        {}\ngap/vol    {}\nmismatch   {}\nnodes      {}\n",
        domain.label(),
        fixed(report.vol_k),
        fixed(report.energy),
        fixed(report.bound),
        sci(report.gap),
        sci(report.gap / report.vol_k),
        opt(mismatch, sci),
        report.nodes
    );
    let out = EnergyOut { domain: domain.label(), field, report, boundary_mismatch: mismatch };
    let csv = csv_rows(&[&out.report])?;
    let env = finish(s, s.meta("energy").with_resolution(nr, na), start, out, None);
    Ok((Rendered::new(&env, csv, pretty)?, 0))
}

#[derive(Serialize)]
struct MomentRow {
    i: usize,
    eta: f64,
    direct: f64,
    fit: f64,
    residual_direct: f64,
    residual_fit: f64,
}

fn cmd_transport(s: &Settings, start: Instant) -> Result<(Rendered, u8)> {
    let domain = s.domain()?;
    let field = s.field()?;
    let [nr, na] = s.resolution();
    let rule = build_quadrature(&domain, nr, na)?;
    let grid = s.cfg.t_grid.clone().unwrap_or_else(default_t_grid);
    let report = moment_identities(&field, &rule, &grid)?;
    let vol = report.vol_k;
    // the η identities are specific to Hopf fields; other fields only get the internal consistency check
    let passed = if field.linear_operator().is_some() {
        report.max_residual() < TRANSPORT_TOL * vol
    } else {
        report.direct_vs_fit.iter().all(|d| d.abs() < TRANSPORT_TOL * vol)
    };
    let rows: Vec<MomentRow> = (0..report.eta.len())
        .map(|i| MomentRow {
            i: i + 1,
            eta: report.eta[i],
            direct: report.moments_direct[i],
            fit: report.moments_fit[i],
            residual_direct: report.residual_direct[i],
            residual_fit: report.residual_fit[i],
        })
        .collect();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![r.i.to_string(), fixed(r.eta), fixed(r.direct), fixed(r.fit), sci(r.residual_direct / vol), sci(r.residual_fit / vol)]
        })
        .collect();
    let mut pretty = format!("domain {}  vol {}\n", domain.label(), fixed(vol));
    pretty.push_str(&table(&["i", "eta_i", "direct", "fit", "res_direct/vol", "res_fit/vol"], &cells));
    pretty.push_str(&format!("status {}\n", verdict(passed)));
    let csv = csv_rows(&rows)?;
    let env = finish(s, s.meta("transport").with_resolution(nr, na), start, report, Some(passed));
    Ok((Rendered::new(&env, csv, pretty)?, if passed { 0 } else { 2 }))
}

fn cmd_jacobian(s: &Settings, start: Instant) -> Result<(Rendered, u8)> {
    let domain = s.domain()?;
    let field = s.field()?;
    let points = s.cfg.points.unwrap_or(100);
    let grid = s.cfg.t_grid.clone().unwrap_or_else(|| vec![0.01, 0.05, 0.1]);
    let report = jacobian_check(&field, &domain, points, &grid, s.seed())?;
    let cells: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                r.points.to_string(),
                sci(r.max_rel_det_error),
                sci(r.max_leg_normal),
                sci(r.max_field_entry_error),
                verdict(r.passed),
            ]
        })
        .collect();
    let pretty = table(&["t", "points", "det_rel_err", "leg_normal", "field_entry_err", "status"], &cells);
    let csv = csv_rows(&report.rows)?;
    let passed = report.passed;
    let env = finish(s, s.meta("jacobian"), start, report, Some(passed));
    Ok((Rendered::new(&env, csv, pretty)?, if passed { 0 } else { 2 }))
}

#[derive(Serialize)]
struct RunSummary {
    run: usize,
    converged: bool,
    feasible: bool,
    iterations: usize,
    energy: f64,
    bound: f64,
    gap: f64,
    div_residual: f64,
    boundary_mismatch: f64,
    bound_respected: bool,
}

fn summarize(i: usize, r: &OptimizationReport) -> RunSummary {
    RunSummary {
        run: i,
        converged: r.converged,
        feasible: r.feasible,
        iterations: r.trajectory.len().saturating_sub(1),
        energy: r.final_energy.energy,
        bound: r.final_energy.bound,
        gap: r.gap_to_bound,
        div_residual: r.div_residual,
        boundary_mismatch: r.boundary_mismatch,
        bound_respected: r.bound_respected,
    }
}

fn summary_table(runs: &[RunSummary]) -> String {
    let cells: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.run.to_string(),
                r.converged.to_string(),
                r.feasible.to_string(),
                r.iterations.to_string(),
                fixed(r.energy),
                sci(r.gap),
                sci(r.div_residual),
                sci(r.boundary_mismatch),
            ]
        })
        .collect();
    table(&["run", "converged", "feasible", "iters", "energy", "gap", "div", "mismatch"], &cells)
}

#[derive(Serialize)]
#[serde(untagged)]
enum OptimizeOut {
    Single(Box<OptimizationReport>),
    Probe(Box<ProbeReport>),
}

fn cmd_optimize(s: &Settings, a: &OptArgs, start: Instant) -> Result<(Rendered, u8)> {
    let cfg = s.optimizer(a)?;
    let runs = s.cfg.runs.unwrap_or(1);
    let meta = Meta::new("optimize").with_k(cfg.domain.k()).with_resolution(cfg.radial, cfg.angular).with_seed(cfg.seed);
    if runs == 1 {
        let problem = Problem::new(&cfg)?;
        let c0 = s.cfg.initial.clone().unwrap_or_else(|| problem.random_start(0));
        let report = minimize_problem(&problem, &c0)?;
        let violated = report.violates_bound();
        let mut pretty = summary_table(&[summarize(0, &report)]);
        pretty.push_str(&format!("bound respected {}\n", verdict(!violated)));
        let csv = csv_rows(&report.trajectory)?;
        let env = finish(s, meta, start, OptimizeOut::Single(Box::new(report)), Some(!violated));
        return Ok((Rendered::new(&env, csv, pretty)?, if violated { 2 } else { 0 }));
    }
    let report = probe(&cfg, runs)?;
    let rows: Vec<RunSummary> = report.runs.iter().enumerate().map(|(i, r)| summarize(i, r)).collect();
    let mut pretty = summary_table(&rows);
    pretty.push_str(&format!(
        "gradient norm at Hopf {}\nviolations {}\n",
        sci(report.hopf_gradient_norm),
        report.violations
    ));
    let csv = csv_rows(&rows)?;
    let passed = report.violations == 0;
    let env = finish(s, meta, start, OptimizeOut::Probe(Box::new(report)), Some(passed));
    Ok((Rendered::new(&env, csv, pretty)?, if passed { 0 } else { 2 }))
}

fn cmd_sweep(s: &Settings, a: &OptArgs, start: Instant) -> Result<(Rendered, u8)> {
    let template = s.optimizer(a)?;
    let k = template.domain.k();
    let rho = s.cfg.rho.clone().unwrap_or_else(|| vec![0.5, 1.0, std::f64::consts::FRAC_PI_2, 2.0]);
    let domains: Vec<DomainSpec> = rho.iter().map(|&r| DomainSpec::cap(k, r)).collect::<Result<_>>()?;
    let runs = s.cfg.runs.unwrap_or(1);
    let rows: Vec<SweepRow> = sweep(&domains, &template, runs);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.domain.clone(),
                fixed(r.vol),
                fixed(r.vol_exact),
                fixed(r.bound),
                opt(r.min_energy, fixed),
                opt(r.gap, sci),
                opt(r.div_residual, sci),
                opt(r.boundary_mismatch, sci),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let pretty = table(&["domain", "vol", "vol_exact", "bound", "min_energy", "gap", "div", "mismatch", "error"], &cells);
    let csv = csv_rows(&rows)?;
    let passed = rows.iter().all(|r| !r.violation);
    let meta = Meta::new("sweep").with_k(k).with_resolution(template.radial, template.angular).with_seed(template.seed);
    let env = finish(s, meta, start, rows, Some(passed));
    Ok((Rendered::new(&env, csv, pretty)?, if passed { 0 } else { 2 }))
}

fn run(cli: &Cli) -> Result<u8> {
    let start = Instant::now();
    let s = merge(cli)?;
    s.cfg.check_command(name_of(&cli.command))?;
    if let Some(n) = s.cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let (rendered, code) = match &cli.command {
        Command::VerifyIdentities { .. } => cmd_verify_identities(&s, start)?,
        Command::Energy => cmd_energy(&s, start)?,
        Command::Transport => cmd_transport(&s, start)?,
        Command::Jacobian { .. } => cmd_jacobian(&s, start)?,
        Command::Optimize { opt } => cmd_optimize(&s, opt, start)?,
        Command::Sweep { opt, .. } => cmd_sweep(&s, opt, start)?,
    };
    rendered.write(s.format, s.out.as_deref())?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
