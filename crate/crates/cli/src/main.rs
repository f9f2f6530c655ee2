//! `levy-bsde` command-line front end.
//!
//! Exit codes: 0 on success, 1 when a check inside a report fails (or a
//! `--verify` comparison does), 2 on configuration errors.

mod plot;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levy_bsde::config::{ExperimentConfig, Operation};
use levy_bsde::rates::{self, RateReport};
use levy_bsde::{Error, LevyModel};

#[derive(Parser)]
#[command(name = "levy-bsde", version, about = "Compound-Poisson approximation of Lévy processes and BSDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List built-in models with their Blumenthal–Getoor index.
    Models,
    /// Tail masses, partial moments and C_β over the radii 1/n.
    Analyze(Opts),
    /// Strong error of the compound-Poisson levels.
    RateProcess(Opts),
    /// Strong error of the BSDE solutions across levels.
    RateBsde(Opts),
    /// BSDE error with a level-dependent generator.
    RateGap(Opts),
    /// Wasserstein lower bound against the coupled upper estimate.
    Wasserstein(Opts),
    /// Analytic second-moment brackets of the atomic examples.
    Boundary(Opts),
    /// Gap between a Poisson process and its Bernoulli random walk.
    Appendix(Opts),
}

#[derive(Args, Clone, Default)]
struct Opts {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG log-log plots.
    #[arg(long)]
    plot: bool,
    /// Compare against existing outputs instead of trusting them.
    #[arg(long)]
    verify: bool,
    /// cgmy, merton, stable-like, atomic-harmonic or atomic-logharmonic.
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long = "G")]
    g: Option<f64>,
    #[arg(long = "M")]
    m: Option<f64>,
    #[arg(long = "Y")]
    y: Option<f64>,
    #[arg(long)]
    intensity: Option<f64>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    stdev: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c_pos: Option<f64>,
    #[arg(long)]
    c_neg: Option<f64>,
    #[arg(long)]
    lambda_pos: Option<f64>,
    #[arg(long)]
    lambda_neg: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u64>>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta_below: Option<f64>,
    #[arg(long)]
    eps_ref: Option<f64>,
    #[arg(long = "K")]
    steps: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    n_ref: Option<u64>,
    #[arg(long)]
    nmax: Option<u64>,
    #[arg(long = "k-n", value_delimiter = ',')]
    k_n: Option<Vec<u64>>,
    /// Generator as JSON, e.g. '{"kind":"linear","a":0.5,"b":0}'.
    #[arg(long)]
    generator: Option<String>,
    /// Terminal condition as JSON, e.g. '{"kind":"abs-capped","cap":2}'.
    #[arg(long)]
    terminal: Option<String>,
}

enum Failure {
    Config(String),
    Check(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Domain(_) | Error::ReferenceBias { .. } | Error::Json(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn model_from_flags(o: &Opts, kind: &str) -> Result<LevyModel, Failure> {
    let v = |x: Option<f64>, d: f64| x.unwrap_or(d);
    Ok(match kind {
        "cgmy" => LevyModel::cgmy(v(o.c, 1.0), v(o.g, 5.0), v(o.m, 5.0), v(o.y, 0.5)),
        "merton" => LevyModel::merton(v(o.intensity, 1.0), v(o.mean, 0.0), v(o.stdev, 1.0)),
        "stable-like" => LevyModel::stable_like(
            v(o.c_pos, 1.0),
            v(o.c_neg, 1.0),
            v(o.alpha, 0.5),
            v(o.lambda_pos, 1.0),
            v(o.lambda_neg, 1.0),
        ),
        "atomic-harmonic" => LevyModel::harmonic(),
        "atomic-logharmonic" => LevyModel::log_harmonic(),
        other => return Err(Failure::Config(format!("configuration error: unknown model kind '{other}'"))),
    })
}

fn load_config(o: &Opts, needs_model: bool) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &o.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => {
            let model = match &o.model {
                Some(kind) => model_from_flags(o, kind)?,
                None if needs_model => return Err(Failure::Config("configuration error: no model, pass --config or --model".into())),
                None => LevyModel::harmonic(),
            };
            ExperimentConfig::new(model)
        }
    };
    if o.config.is_some() && o.model.is_some() {
        cfg.model = model_from_flags(o, o.model.as_deref().unwrap())?;
    }
    if let Some(x) = o.seed {
        cfg.seed = x;
    }
    if let Some(x) = &o.out {
        cfg.out = Some(x.clone());
    }
    if let Some(x) = &o.levels {
        cfg.levels = x.clone();
    }
    if let Some(x) = o.paths {
        cfg.paths = x;
    }
    if let Some(x) = o.horizon {
        cfg.horizon = x;
    }
    if o.beta.is_some() {
        cfg.beta = o.beta;
    }
    if o.beta_below.is_some() {
        cfg.beta_below = o.beta_below;
    }
    if let Some(x) = o.eps_ref {
        cfg.eps_ref = x;
    }
    if let Some(x) = o.steps {
        cfg.solver.steps = x;
    }
    if let Some(x) = o.nodes {
        cfg.solver.nodes = x;
    }
    if let Some(x) = o.degree {
        cfg.solver.degree = x;
    }
    if let Some(x) = o.n_ref {
        cfg.solver.n_ref = x;
    }
    if let Some(x) = o.nmax {
        cfg.n_max = x;
    }
    if let Some(x) = &o.k_n {
        cfg.k_n = x.clone();
    }
    if let Some(g) = &o.generator {
        cfg.generator = Some(serde_json::from_str(g).map_err(|e| Failure::Config(format!("--generator: {e}")))?);
    }
    if let Some(t) = &o.terminal {
        cfg.terminal = Some(serde_json::from_str(t).map_err(|e| Failure::Config(format!("--terminal: {e}")))?);
    }
    Ok(cfg)
}

/// Writes (or with `verify`, compares) one artifact.
struct Sink {
    dir: PathBuf,
    verify: bool,
    hash: String,
    mismatches: Vec<String>,
}

fn embedded_hash(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix("# config_hash="))
}

impl Sink {
    fn emit(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        if self.verify {
            match fs::read(&path) {
                Ok(old) => {
                    if name.ends_with(".csv") {
                        let text = String::from_utf8_lossy(&old);
                        if embedded_hash(&text) != Some(self.hash.as_str()) {
                            self.mismatches.push(format!("{}: config hash differs", path.display()));
                        }
                    }
                    if old != bytes {
                        self.mismatches.push(format!("{}: content differs", path.display()));
                    }
                    println!("verified {}", path.display());
                    return Ok(());
                }
                Err(_) => println!("{}: nothing to verify, writing", path.display()),
            }
        }
        fs::write(&path, bytes)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn rate(&mut self, stem: &str, r: &RateReport, seed: u64, plot: bool) -> std::io::Result<()> {
        let mut buf = vec![];
        r.write_csv(&mut buf, &self.hash, seed)?;
        self.emit(&format!("{stem}.csv"), &buf)?;
        if plot {
            let title = format!("{} ({})", r.quantity, r.model.name());
            self.emit(&format!("{stem}.svg"), plot::rate_svg(r, &title).as_bytes())?;
        }
        Ok(())
    }
}

fn print_rate(r: &RateReport) {
    println!(
        "{} on {}: fitted slope {:.4} (95% CI [{:.4}, {:.4}]), theory {:.4} at beta = {}, asymptotic {:.4}",
        r.quantity, r.model.name(), r.fit.slope, r.fit.ci.0, r.fit.ci.1, r.theory_slope, r.beta, r.asymptotic_slope
    );
    for (i, n) in r.levels.iter().enumerate() {
        let flag = if r.bound_ok[i] { "" } else { "  BOUND VIOLATED" };
        println!("  n={n:<6} error {:.6e} ± {:.2e}  bound {:.6e}{flag}", r.errors[i].mean, r.errors[i].se, r.bound_curve[i]);
    }
    for w in &r.warnings {
        println!("  warning: {w}");
    }
}

fn models() -> Outcome {
    println!("{:<20} {:<42} {:<18} parameters", "kind", "measure", "beta_star");
    let rows = [
        ("cgmy", "C e^{-G|x|}|x|^{-1-Y} / C e^{-Mx}x^{-1-Y}", "max(0, Y)", "C > 0, G > 0, M > 0, Y < 2"),
        ("merton", "intensity * N(mean, stdev^2)", "0", "intensity > 0, stdev > 0"),
        ("stable-like", "c± |x|^{-1-alpha} e^{-lambda± |x|}", "alpha", "c± >= 0, lambda± > 0 where c± > 0, 0 <= alpha < 2"),
        ("atomic-harmonic", "unit atoms at 1/i, i >= 1", "1", "none"),
        ("atomic-logharmonic", "unit atoms at sqrt(ln i)/i, i >= 2", "1", "none"),
    ];
    for (k, m, b, p) in rows {
        println!("{k:<20} {m:<42} beta_star = {b:<6} {p}");
    }
    Ok(())
}

fn analyze(cfg: &ExperimentConfig, sink: &mut Sink) -> Outcome {
    let m = &cfg.model;
    let beta = cfg.beta();
    let cb = m.c_beta(beta)?;
    let mut s = format!("# config_hash={}\n# seed={}\n# model={} beta={beta} c_beta={cb}\n", sink.hash, cfg.seed, m.name());
    s.push_str("n,eps,tail_mass,m1,m2,m_beta,compensator_mean,second_moment_beyond\n");
    for &n in &cfg.levels {
        let eps = 1.0 / n as f64;
        s.push_str(&format!(
            "{n},{eps},{},{},{},{},{},{}\n",
            m.tail_mass(eps)?,
            m.partial_moment(1.0, eps)?,
            m.partial_moment(2.0, eps)?,
            m.partial_moment(beta, eps)?,
            m.compensator_mean(eps)?,
            m.second_moment_beyond(eps)?
        ));
    }
    print!("{s}");
    sink.emit("analyze.csv", s.as_bytes())?;
    Ok(())
}

fn run(cmd: Command) -> Outcome {
    let (op, o) = match cmd {
        Command::Models => return models(),
        Command::Analyze(o) => (Operation::Analyze, o),
        Command::RateProcess(o) => (Operation::RateProcess, o),
        Command::RateBsde(o) => (Operation::RateBsde, o),
        Command::RateGap(o) => (Operation::RateGap, o),
        Command::Wasserstein(o) => (Operation::Wasserstein, o),
        Command::Boundary(o) => (Operation::Boundary, o),
        Command::Appendix(o) => (Operation::Appendix, o),
    };
    let needs_model = !matches!(op, Operation::Boundary | Operation::Appendix);
    let cfg = load_config(&o, needs_model)?;
    cfg.validate(op)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let mut sink = Sink { dir, verify: o.verify, hash: cfg.hash(), mismatches: vec![] };
    let seed = cfg.seed;
    let mut failed: Vec<String> = vec![];

    match op {
        Operation::Analyze => analyze(&cfg, &mut sink)?,
        Operation::RateProcess => {
            let r = rates::run_process_rate(&cfg.model, &cfg.levels, cfg.eps_ref, cfg.paths, cfg.horizon, cfg.beta(), seed)?;
            print_rate(&r.report);
            if !r.report.passed() {
                failed.push("per-level error exceeds the bound".into());
            }
            sink.rate("rate-process", &r.report, seed, o.plot)?;
        }
        Operation::RateBsde | Operation::RateGap => {
            let p = cfg.problem();
            let rc = cfg.bsde_rate_config();
            let r = if op == Operation::RateBsde {
                rates::run_bsde_rate(&p, &cfg.levels, &rc, cfg.paths, cfg.beta(), seed)?
            } else {
                rates::run_generator_gap_rate(&p, &cfg.levels, &rc, cfg.paths, cfg.beta(), seed)?
            };
            print_rate(&r.y);
            print_rate(&r.u);
            if !r.y.gap_terms.is_empty() {
                println!("  dominant term per level: {:?}", r.y.dominant_terms());
            }
            let stem = if op == Operation::RateBsde { "rate-bsde" } else { "rate-gap" };
            sink.rate(&format!("{stem}-y"), &r.y, seed, o.plot)?;
            sink.rate(&format!("{stem}-u"), &r.u, seed, o.plot)?;
        }
        Operation::Wasserstein => {
            let reports = cfg
                .levels
                .iter()
                .map(|&n| rates::wasserstein_bounds(&cfg.model, n, cfg.eps_ref, cfg.paths, cfg.horizon, seed))
                .collect::<Result<Vec<_>, _>>()?;
            for r in &reports {
                println!(
                    "n={:<6} lower {:.6e}  upper {:.6e} ± {:.2e}  c_T {}{}",
                    r.n,
                    r.lower,
                    r.coupled_upper.mean,
                    r.coupled_upper.se,
                    r.c_t,
                    if r.ok { "" } else { "  LOWER > UPPER" }
                );
                if !r.ok {
                    failed.push(format!("lower bound exceeds upper estimate at n={}", r.n));
                }
            }
            let mut buf = vec![];
            rates::write_lower_bound_csv(&mut buf, &reports, &sink.hash, seed)?;
            sink.emit("wasserstein.csv", &buf)?;
        }
        Operation::Boundary => {
            let r = rates::check_bg_boundary_examples(cfg.n_max)?;
            for e in &r.examples {
                let verdict = if e.passed() { "pass" } else { "FAIL" };
                let note = if e.counted { "" } else { " (reference only)" };
                println!("{:<24} {verdict} ({} of {} values outside){note}", e.name, e.failures.len(), e.checked);
                if let Some((n, v, lo, hi)) = e.failures.first() {
                    println!("  first failure n={n}: {v} not in [{lo}, {hi}]");
                }
            }
            if !r.passed() {
                failed.push("bracket violated".into());
            }
            let mut buf = vec![];
            r.write_csv(&mut buf, &sink.hash, seed)?;
            sink.emit("boundary.csv", &buf)?;
        }
        Operation::Appendix => {
            let reports = cfg
                .k_n
                .iter()
                .map(|&k| rates::appendix_random_walk_gap(cfg.horizon, k, cfg.paths, seed))
                .collect::<Result<Vec<_>, _>>()?;
            for r in &reports {
                println!(
                    "T={} k_n={:<9} E sup|N - S| = {:.5} ± {:.5}  bound {:.5}  {}",
                    r.horizon,
                    r.k_n,
                    r.estimate.mean,
                    r.estimate.se,
                    r.bound,
                    if r.passed { "pass" } else { "FAIL" }
                );
                if !r.passed {
                    failed.push(format!("estimate below bound at k_n={}", r.k_n));
                }
            }
            let mut buf = vec![];
            rates::AppendixReport::write_csv(&reports, &mut buf, &sink.hash, seed)?;
            sink.emit("appendix.csv", &buf)?;
        }
    }
    failed.extend(sink.mismatches.iter().map(|m| format!("verify: {m}")));
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = std::env::var("LEVY_BSDE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
