//! The `rcons` command line.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! numeric failures and violated preconditions.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{mse_bound, CovarianceForm, CovarianceModel};
use crate::config::{Experiment, ExperimentConfig, GraphSpec};
use crate::engine::{initial_state, run_trial, TrialTrajectory};
use crate::ensemble::{compare_empirical_analytic, ensemble_stats, run_ensemble, Comparison, EnsembleStats};
use crate::error::{Error, Result};
use crate::graph::{Family, Graph};
use crate::output::{json_document, write_file, Cell, Csv, Header};
use crate::presets::{preset, FigureKind, FIGURES};
use crate::rng::{sensing_stream, TrialStream};

#[derive(Debug, Parser)]
#[command(name = "rcons", version, about = "Robust consensus over noisy channels: simulation and analysis")]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of trials; overrides the file.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory; overrides the file. Without one, results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Iteration horizon; overrides the file.
    #[arg(long, global = true)]
    t_max: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral summary of a graph.
    Graphs(GraphsArgs),
    /// Run one trial and emit its trajectory.
    Simulate {
        /// Trial index; selects the random streams.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run an ensemble and emit covariance statistics.
    Ensemble,
    /// Emit the analytic report as JSON.
    Analyze,
    /// Emit the data series of a bundled figure preset.
    Figdata {
        /// One of fig1 .. fig7.
        figure: String,
    },
}

#[derive(Debug, Args)]
struct GraphsArgs {
    /// Named family: complete, star, ring, line, tree, cubic, k_regular_lattice, bipartite_complete.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Degree of a k-regular lattice.
    #[arg(long)]
    k: Option<usize>,
    /// Part sizes `p,q` of a complete bipartite graph.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    parts: Option<Vec<usize>>,
    /// Edge-list file.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Summarise every family at `--n`.
    #[arg(long)]
    table: bool,
    /// Also write the graph as an edge list.
    #[arg(long)]
    write_edges: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Graphs(args) => graphs(cli, args),
        Command::Simulate { trial } => simulate(cli, *trial),
        Command::Ensemble => ensemble(cli),
        Command::Analyze => analyze_cmd(cli),
        Command::Figdata { figure } => figdata(cli, figure),
    }
}

fn apply_overrides(mut cfg: ExperimentConfig, cli: &Cli) -> Result<ExperimentConfig> {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.trials {
        cfg.trials = m;
    }
    if let Some(t) = cli.t_max {
        cfg.t_max = t;
        if let Some(cps) = &mut cfg.checkpoints {
            cps.retain(|&c| c <= t);
            if cps.last() != Some(&t) {
                cps.push(t);
            }
        }
    }
    if let Some(o) = &cli.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_config(cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this subcommand needs --config FILE".into()))?;
    let cfg = apply_overrides(ExperimentConfig::load(path)?, cli)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn header(command: &str, ex: &Experiment) -> Header {
    Header::new(command, ex.config.hash(), ex.config.seed)
        .note("graph", ex.config.graph.label())
        .note("h", ex.h.formula())
        .note("f", ex.f.formula())
        .note("noise", ex.config.noise.describe())
}

/// Writes `name` into `dir`, or to stdout when there is no directory.
fn emit(dir: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    match dir {
        Some(d) => write_file(d, name, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn graph_row(csv: &mut Csv, label: &str, g: &Graph, closed: Option<f64>) -> Result<()> {
    let s = g.spectrum()?;
    csv.row(&[
        label.into(),
        g.node_count().into(),
        g.edge_count().into(),
        g.max_degree().into(),
        s.lambda2().into(),
        s.lambda_max().into(),
        closed.map_or(Cell::Text("nan".into()), Cell::Real),
    ]);
    Ok(())
}

fn family_from_args(args: &GraphsArgs) -> Result<Family> {
    let name = args.family.as_deref().unwrap_or_default();
    Ok(match name {
        "complete" => Family::Complete,
        "star" => Family::Star,
        "ring" => Family::Ring,
        "line" => Family::Line,
        "tree" => Family::Tree,
        "cubic" => Family::Cubic,
        "k_regular_lattice" => Family::KRegularLattice {
            k: args.k.ok_or_else(|| Error::Config("k_regular_lattice needs --k".into()))?,
        },
        "bipartite_complete" => match args.parts.as_deref() {
            Some([p, q]) => Family::BipartiteComplete { p: *p, q: *q },
            _ => return Err(Error::Config("bipartite_complete needs --parts P,Q".into())),
        },
        other => return Err(Error::Config(format!("unknown graph family `{other}`"))),
    })
}

fn graphs(cli: &Cli, args: &GraphsArgs) -> Result<()> {
    let mut csv = Csv::new(&["graph", "n", "edges", "d_max", "lambda2", "lambda_n", "lambda2_closed_form"]);
    let mut written: Option<Graph> = None;
    let (hash_src, seed) = if args.table {
        let n = args.n.ok_or_else(|| Error::Config("--table needs --n".into()))?;
        let mut families = vec![Family::Complete, Family::Star, Family::Ring, Family::Line, Family::Tree];
        if n % 2 == 0 && n >= 4 {
            families.push(Family::Cubic);
        }
        if n > 4 {
            families.push(Family::KRegularLattice { k: 4 });
        }
        families.push(Family::BipartiteComplete { p: n / 2, q: n - n / 2 });
        for fam in families {
            let g = crate::graph::build_named(fam, n)?;
            graph_row(&mut csv, &fam.name(), &g, fam.algebraic_connectivity(n))?;
        }
        (format!("table n={n}"), 0)
    } else if let Some(path) = &args.edges {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let g = Graph::parse_edge_list(&text)?;
        graph_row(&mut csv, &format!("file({})", path.display()), &g, None)?;
        let src = g.to_edge_list();
        written = Some(g);
        (src, 0)
    } else if args.family.is_some() {
        let fam = family_from_args(args)?;
        let n = match fam {
            Family::BipartiteComplete { p, q } => p + q,
            _ => args.n.ok_or_else(|| Error::Config("--family needs --n".into()))?,
        };
        let g = crate::graph::build_named(fam, n)?;
        graph_row(&mut csv, &fam.name(), &g, fam.algebraic_connectivity(n))?;
        written = Some(g);
        (format!("{} n={n}", fam.name()), 0)
    } else {
        let (cfg, base) = load_config(cli)?;
        let g = cfg.graph.build(cfg.seed, &base)?;
        let closed = match &cfg.graph {
            GraphSpec::Complete { n } => Family::Complete.algebraic_connectivity(*n),
            GraphSpec::Star { n } => Family::Star.algebraic_connectivity(*n),
            GraphSpec::Ring { n } => Family::Ring.algebraic_connectivity(*n),
            GraphSpec::Line { n } => Family::Line.algebraic_connectivity(*n),
            GraphSpec::KRegularLattice { n, k } => Family::KRegularLattice { k: *k }.algebraic_connectivity(*n),
            GraphSpec::BipartiteComplete { p, q } => {
                Family::BipartiteComplete { p: *p, q: *q }.algebraic_connectivity(p + q)
            }
            _ => None,
        };
        graph_row(&mut csv, &cfg.graph.label(), &g, closed)?;
        written = Some(g);
        (cfg.hash(), cfg.seed)
    };
    if let (Some(path), Some(g)) = (&args.write_edges, &written) {
        std::fs::write(path, g.to_edge_list())?;
    }
    let hash = if hash_src.len() == 64 { hash_src } else { sha_hex(hash_src.as_bytes()) };
    let text = csv.render(&Header::new("graphs", hash, seed));
    emit(cli.out.as_deref(), "graphs.csv", &text)
}

fn sha_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn trajectory_csv(trajectories: &[TrialTrajectory]) -> Csv {
    let mut csv = Csv::new(&["trial", "t", "node", "value"]);
    for tr in trajectories {
        for (t, x) in &tr.checkpoints {
            for (node, v) in x.iter().enumerate() {
                csv.row(&[tr.trial.into(), (*t).into(), node.into(), (*v).into()]);
            }
        }
    }
    csv
}

fn summary_csv(trajectories: &[TrialTrajectory]) -> Csv {
    let mut csv = Csv::new(&["trial", "theta_hat", "dispersion_final", "seed"]);
    for tr in trajectories {
        csv.row(&[tr.trial.into(), tr.theta_hat.into(), tr.final_dispersion().into(), tr.seed.into()]);
    }
    csv
}

fn simulate(cli: &Cli, trial: usize) -> Result<()> {
    let (cfg, base) = load_config(cli)?;
    let mut ex = cfg.resolve(&base)?;
    let gain = ex.gain()?;
    let spec = ex.ensemble_spec(gain)?;
    let n = spec.system.graph.node_count();
    let init = match &ex.shared {
        Some(s) => s.clone(),
        None => initial_state(&ex.sensing, n, &mut sensing_stream(cfg.seed, trial))?,
    };
    let mut stream = TrialStream::new(cfg.seed, trial);
    let tr = run_trial(&spec.system, spec.schedule, &init.values, cfg.t_max, &spec.plan, &mut stream)
        .map_err(|e| Error::Trial { trial, seed: cfg.seed, source: Box::new(e) })?;
    let h = header("simulate", &ex).note("gain", spec.schedule.gain);
    eprintln!("h(x) = {}; f(x) = {}; noise: {}", ex.h.formula(), ex.f.formula(), cfg.noise.describe());
    let out = cfg.output.as_deref();
    emit(out, "trajectory.csv", &trajectory_csv(std::slice::from_ref(&tr)).render(&h))?;
    if out.is_some() {
        emit(out, "summary.csv", &summary_csv(std::slice::from_ref(&tr)).render(&h))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EnsembleSummary {
    trials: usize,
    gain: f64,
    centering: &'static str,
    theta_hat_mean: f64,
    theta_hat_var: f64,
    bias: f64,
    bias_se: f64,
    mse: f64,
    mse_bound: Option<f64>,
    comparison: Option<Comparison>,
    analytic_unavailable: Option<String>,
}

struct EnsembleRun {
    trajectories: Vec<TrialTrajectory>,
    stats: EnsembleStats,
    summary: EnsembleSummary,
    model: Option<CovarianceModel>,
}

fn run_experiment_ensemble(ex: &mut Experiment) -> Result<EnsembleRun> {
    let gain = ex.gain()?;
    let spec = ex.ensemble_spec(gain)?;
    let schedule = spec.schedule;
    let trajectories = run_ensemble(&spec)?;
    let stats = ensemble_stats(&trajectories)?;
    // Analytic side is optional: laws without finite moments or unstable
    // gains still produce empirical output.
    let analytic = ex.functionals().map(|fx| {
        let model = ex.covariance_model();
        (fx, model)
    });
    let (mse_b, model, cmp, why) = match analytic {
        Ok((fx, Ok(model))) => {
            let cmp = compare_empirical_analytic(&stats, &model, ex.config.t_max)?;
            (Some(mse_bound(&ex.graph, &fx, schedule).mse_bound), Some(model), Some(cmp), None)
        }
        Ok((fx, Err(e))) => (Some(mse_bound(&ex.graph, &fx, schedule).mse_bound), None, None, Some(e.to_string())),
        Err(e) => (None, None, None, Some(e.to_string())),
    };
    let summary = EnsembleSummary {
        trials: stats.trials,
        gain,
        centering: "per-trial theta_hat = x_bar(t_max)",
        theta_hat_mean: stats.theta_hat_mean,
        theta_hat_var: stats.theta_hat_var,
        bias: stats.bias,
        bias_se: stats.bias_se,
        mse: stats.mse,
        mse_bound: mse_b,
        comparison: cmp,
        analytic_unavailable: why,
    };
    Ok(EnsembleRun { trajectories, stats, summary, model })
}

fn checkpoint_csv(series: &str, run: &EnsembleRun, t_max: usize) -> Csv {
    let mut csv = checkpoint_csv_empty();
    append_checkpoints(&mut csv, series, run, t_max);
    csv
}

fn checkpoint_csv_empty() -> Csv {
    Csv::new(&[
        "series",
        "t",
        "cov_norm",
        "min_eigenvalue",
        "mean_dispersion",
        "analytic_finite_norm",
        "analytic_limit_norm",
    ])
}

fn append_checkpoints(csv: &mut Csv, series: &str, run: &EnsembleRun, t_max: usize) {
    let limit = run.model.as_ref().map(|m| m.limit(CovarianceForm::Validated).norm);
    for c in &run.stats.checkpoints {
        let finite = run
            .model
            .as_ref()
            .map(|m| crate::analysis::spectral_norm(&m.finite_horizon(c.t, Some(t_max))));
        let opt = |v: Option<f64>| v.map_or(Cell::Text("nan".into()), Cell::Real);
        csv.row(&[
            series.into(),
            c.t.into(),
            c.norm.into(),
            c.min_eigenvalue.into(),
            c.mean_dispersion.into(),
            opt(finite),
            opt(limit),
        ]);
    }
}

fn ensemble(cli: &Cli) -> Result<()> {
    let (cfg, base) = load_config(cli)?;
    let mut ex = cfg.resolve(&base)?;
    let run = run_experiment_ensemble(&mut ex)?;
    let h = header("ensemble", &ex).note("gain", run.summary.gain);
    let out = cfg.output.as_deref();
    emit(out, "ensemble_checkpoints.csv", &checkpoint_csv("ensemble", &run, cfg.t_max).render(&h))?;
    if out.is_some() {
        emit(out, "ensemble_trials.csv", &summary_csv(&run.trajectories).render(&h))?;
        emit(out, "ensemble_summary.json", &json_document(&h, &run.summary)?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnalyzeBody {
    graph: String,
    noise: crate::noise::NoiseModel,
    h: String,
    f: String,
    report: crate::analysis::AnalyticReport,
}

fn analyze_cmd(cli: &Cli) -> Result<()> {
    let (cfg, base) = load_config(cli)?;
    let mut ex = cfg.resolve(&base)?;
    let report = ex.report()?;
    let body = AnalyzeBody {
        graph: cfg.graph.label(),
        noise: cfg.noise,
        h: ex.h.formula(),
        f: ex.f.formula(),
        report,
    };
    let text = json_document(&header("analyze", &ex), &body)?;
    emit(cfg.output.as_deref(), "analysis.json", &text)
}

#[derive(Debug, Serialize)]
struct SeriesSummary {
    series: String,
    config_hash: String,
    gain: f64,
    lambda2: f64,
    e_f_squared: Option<f64>,
    g_prime_zero: Option<f64>,
    ratio: Option<f64>,
    stability_margin: Option<f64>,
    limit_norm: Option<f64>,
    c_star_norm: Option<f64>,
    theta_hat_mean: f64,
    theta_hat_var: f64,
    /// Validated asymptotic variance of the first node.
    asymptotic_var_node0: Option<f64>,
    /// `t_max * var(x_1(t_max) - theta_hat)` across trials.
    empirical_var_node0: f64,
}

fn figdata(cli: &Cli, figure: &str) -> Result<()> {
    let fig = preset(figure).ok_or_else(|| {
        Error::Config(format!("unknown figure `{figure}`; expected one of {}", FIGURES.join(", ")))
    })?;
    let root = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let dir = root.join(fig.name);
    let mut series_hashes = Vec::new();
    let mut cov = checkpoint_csv_empty();
    let mut trajectories = Csv::new(&["series", "trial", "t", "node", "value"]);
    let mut trials = Csv::new(&["series", "trial", "theta_hat", "dispersion_final", "seed"]);
    let mut summaries = Vec::new();
    let mut seed = 0;
    for (label, cfg) in &fig.series {
        let mut cfg = apply_overrides(cfg.clone(), cli)?;
        cfg.output = None;
        seed = cfg.seed;
        series_hashes.push(cfg.hash());
        let mut ex = cfg.resolve(Path::new("."))?;
        let run = run_experiment_ensemble(&mut ex)?;
        append_checkpoints(&mut cov, label, &run, cfg.t_max);
        for tr in &run.trajectories {
            trials.row(&[
                label.as_str().into(),
                tr.trial.into(),
                tr.theta_hat.into(),
                tr.final_dispersion().into(),
                tr.seed.into(),
            ]);
            if fig.kind != FigureKind::CovarianceNorm {
                for (t, x) in &tr.checkpoints {
                    let nodes = if fig.kind == FigureKind::FirstNode { &x[..1] } else { &x[..] };
                    for (node, v) in nodes.iter().enumerate() {
                        trajectories.row(&[
                            label.as_str().into(),
                            tr.trial.into(),
                            (*t).into(),
                            node.into(),
                            (*v).into(),
                        ]);
                    }
                }
            }
        }
        let fx = ex.functionals().ok();
        let report = ex.report().ok();
        let last = run.stats.checkpoints.last().expect("t_max is recorded");
        summaries.push(SeriesSummary {
            series: label.clone(),
            config_hash: cfg.hash(),
            gain: run.summary.gain,
            lambda2: ex.spectrum()?.lambda2(),
            e_f_squared: fx.as_ref().map(|f| f.e_f_squared),
            g_prime_zero: fx.as_ref().map(|f| f.e_f_prime),
            ratio: fx.as_ref().map(|f| f.ratio),
            stability_margin: report.as_ref().map(|r| r.stability_margin),
            limit_norm: report.as_ref().map(|r| r.c_rc_norm),
            c_star_norm: report.as_ref().map(|r| r.c_star_norm),
            theta_hat_mean: run.stats.theta_hat_mean,
            theta_hat_var: run.stats.theta_hat_var,
            asymptotic_var_node0: report.as_ref().map(|r| r.c_rc[0][0]),
            empirical_var_node0: last.covariance[(0, 0)],
        });
    }
    let hash = sha_hex(series_hashes.join(",").as_bytes());
    let h = Header::new(format!("figdata {}", fig.name), hash, seed).note("title", fig.title);
    let name = fig.name;
    match fig.kind {
        FigureKind::CovarianceNorm => write_file(&dir, &format!("{name}_cov_norm.csv"), &cov.render(&h))?,
        FigureKind::Trajectories | FigureKind::FirstNode => {
            write_file(&dir, &format!("{name}_trajectories.csv"), &trajectories.render(&h))?;
            write_file(&dir, &format!("{name}_dispersion.csv"), &cov.render(&h))?;
        }
    }
    write_file(&dir, &format!("{name}_trials.csv"), &trials.render(&h))?;
    write_file(&dir, &format!("{name}_summary.json"), &json_document(&h, &summaries)?)?;
    Ok(())
}
