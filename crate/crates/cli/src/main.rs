//! `relay-sim`: command-line front end for relay-core.
//!
//! Every subcommand starts from a JSON run configuration (or the defaults),
//! applies flag overrides, validates the result, and stamps each output with
//! the seed and the SHA-256 of the effective configuration.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use relay_core::blockage::{trajectory, Scheme};
use relay_core::config::{run_experiment, RangeChoice, RunConfig};
use relay_core::finite_range::{
    expected_zone_area_hr, expected_zone_length_hr, hitting_time_sample, trajectory_hr, FiniteState, StoppageLaw,
};
use relay_core::heights::HeightSpec;
use relay_core::landscape::{IntensityProfile, Landscape};
use relay_core::relay_tree::{
    build_forest, classify_eft, expected_building_count, expected_zone_length_given_angle, expected_zone_length_palm,
    Strictness,
};
use relay_core::validation::checks::{run_check, CheckOptions, DENSITY_CHECKS};
use relay_core::validation::{par_map, substream, threads_from_env};
use relay_core::Point;

#[derive(Parser, Debug)]
#[command(name = "relay-sim", version, about = "Line-of-sight relay networks over Poisson building processes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_reps: Option<u64>,
    /// Constant intensity λ.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Height law as JSON, e.g. '{"kind":"exponential","rate":1.0}'.
    #[arg(long, global = true)]
    heights: Option<String>,
    /// tau, tau1 or tau2.
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// horizontal:R | disc:R | rect:W,H | diamond:R | profile:file.csv
    #[arg(long, global = true)]
    range: Option<String>,
    /// Tabular output (CSV); stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample blockage trajectories as CSV rows `rep,hop,x,h,t`.
    Trajectory {
        #[arg(long)]
        n_hops: Option<usize>,
        #[arg(long)]
        start_height: Option<f64>,
    },
    /// Run the Monte Carlo versus closed-form checks; exit code 2 on failure.
    DensityCheck {
        /// Criterion ids (default: the density checks).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        /// Replication scale relative to the acceptance suite.
        #[arg(long, default_value_t = 0.1)]
        scale: f64,
        /// Evaluate closed forms at a perturbed intensity (negative control).
        #[arg(long)]
        sabotage: bool,
    },
    /// Zone length and building count: closed forms and Monte Carlo.
    Zone {
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        tan_theta: Option<f64>,
        /// Also write `t,cdf` on this many grid intervals to the output.
        #[arg(long)]
        cdf_grid: Option<usize>,
    },
    /// Export the relay forest of one window as CSV.
    Tree {
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Horizontal finite range: zone-length identity, hitting times, area.
    Finite {
        /// Write hitting times as CSV `rep,T` instead of the identity report.
        #[arg(long)]
        hitting_times: bool,
        #[arg(long)]
        start_height: Option<f64>,
        /// Also estimate the truncated zone area with this many height nodes.
        #[arg(long)]
        area_nodes: Option<usize>,
    },
    /// General finite range: stoppage law against Monte Carlo.
    Stoppage {
        #[arg(long)]
        start_height: Option<f64>,
        /// Also write `x,cdf,ecdf` on this many grid intervals to the output.
        #[arg(long)]
        cdf_grid: Option<usize>,
    },
}

/// Failure of a validation subcommand, mapped to exit code 2.
#[derive(Debug)]
struct ValidationFailed(String);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "validation failed: {}", self.0)
    }
}

impl std::error::Error for ValidationFailed {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<ValidationFailed>().is_some() => {
            eprintln!("relay-sim: {e}");
            ExitCode::from(2)
        }
        // A closed downstream pipe (e.g. `| head`) is not an error.
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("relay-sim: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c.downcast_ref::<std::io::Error>().or_else(|| match c.downcast_ref::<relay_core::Error>() {
            Some(relay_core::Error::Io(io)) => Some(io),
            _ => None,
        });
        io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(p) => {
            let s = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_json(&s)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = common.seed {
        c.seed = v;
    }
    if let Some(v) = common.n_reps {
        c.n_reps = v;
    }
    if let Some(v) = common.lambda {
        c.intensity = IntensityProfile::Constant(v);
    }
    if let Some(v) = &common.heights {
        c.heights = serde_json::from_str::<HeightSpec>(v).context("parsing --heights")?;
    }
    if let Some(v) = common.scheme {
        c.scheme = v;
    }
    if let Some(v) = &common.range {
        c.range = Some(v.clone());
    }
    if let Some(v) = &common.output {
        c.output = Some(v.clone());
    }
    if let Some(v) = &common.report {
        c.report = Some(v.clone());
    }
    Ok(c)
}

fn config_hash(c: &RunConfig) -> Result<String> {
    let bytes = serde_json::to_vec(c)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Extended reals print as `inf` / `-inf`.
fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        Value::Null
    } else {
        Value::String(fmt_num(v))
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Stamp {
    hash: String,
    seed: u64,
}

impl Stamp {
    fn header(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "# config_sha256={}", self.hash)?;
        writeln!(w, "# seed={}", self.seed)?;
        Ok(())
    }

    fn comments(&self) -> Vec<String> {
        vec![format!("config_sha256={}", self.hash), format!("seed={}", self.seed)]
    }

    fn report(&self, c: &RunConfig, mut body: Value) -> Result<()> {
        body["seed"] = json!(self.seed);
        body["config_sha256"] = json!(self.hash);
        let mut w = sink(c.report.as_deref())?;
        serde_json::to_writer_pretty(&mut w, &body)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut c = load_config(&cli.common)?;
    let threads = threads_from_env();
    match cli.cmd {
        Command::Trajectory { n_hops, start_height } => {
            c.experiment = "trajectory".into();
            c.n_hops = n_hops.unwrap_or(c.n_hops);
            c.start_height = start_height.unwrap_or(c.start_height);
            cmd_trajectory(&c, threads)
        }
        Command::DensityCheck { criteria, scale, sabotage } => {
            if scale.is_nan() || scale <= 0.0 {
                bail!("--scale must be positive");
            }
            cmd_density_check(&c, threads, &criteria, scale, sabotage)
        }
        Command::Zone { beta, tan_theta, cdf_grid } => {
            c.experiment = "zone".into();
            c.beta = beta.or(c.beta);
            c.tan_theta = tan_theta.or(c.tan_theta);
            cmd_zone(&c, threads, cdf_grid)
        }
        Command::Tree { window, margin } => {
            c.window = window.unwrap_or(c.window);
            c.margin = margin.unwrap_or(c.margin);
            cmd_tree(&c)
        }
        Command::Finite { hitting_times, start_height, area_nodes } => {
            c.experiment = if hitting_times { "hitting_time" } else { "finite_zone" }.into();
            c.start_height = start_height.unwrap_or(c.start_height);
            cmd_finite(&c, threads, hitting_times, area_nodes)
        }
        Command::Stoppage { start_height, cdf_grid } => {
            c.experiment = "stoppage".into();
            c.start_height = start_height.unwrap_or(c.start_height);
            cmd_stoppage(&c, threads, cdf_grid)
        }
    }
}

fn stamp(c: &RunConfig) -> Result<Stamp> {
    c.validate()?;
    Ok(Stamp { hash: config_hash(c)?, seed: c.seed })
}

fn cmd_trajectory(c: &RunConfig, threads: Option<usize>) -> Result<()> {
    let st = stamp(c)?;
    let m = c.height_model()?;
    let tr = c.tolerances.truncation();
    let start = Point::new(0.0, c.start_height);
    let range = c.range_choice()?;
    // Rows per replication as `(x, h, t)`.
    let rows: Vec<relay_core::Result<Vec<(f64, f64, f64)>>> = match range {
        None => par_map(c.n_reps, c.seed, threads, |_, s| {
            let path = trajectory(&c.intensity, &m, start, c.n_hops, c.scheme, s.clone(), &tr)?;
            Ok(path.iter().map(|b| (b.x, b.h, b.t)).collect())
        }),
        Some(RangeChoice::Horizontal(r)) => par_map(c.n_reps, c.seed, threads, |_, s| {
            let path = trajectory_hr(&c.intensity, &m, r, start, c.n_hops, s.clone())?;
            Ok(path
                .iter()
                .filter_map(|(p, f)| match f {
                    FiniteState::Alive { t, .. } => Some((p.x, p.y, *t)),
                    FiniteState::Cemetery => None,
                })
                .collect())
        }),
        Some(RangeChoice::General(_)) => bail!("trajectory supports only horizontal:R ranges"),
    };
    let mut w = sink(c.output.as_deref())?;
    st.header(&mut w)?;
    writeln!(w, "rep,hop,x,h,t")?;
    for (rep, r) in rows.into_iter().enumerate() {
        match r {
            Ok(path) => {
                for (hop, (x, h, t)) in path.into_iter().enumerate() {
                    writeln!(w, "{rep},{hop},{},{},{}", fmt_num(x), fmt_num(h), fmt_num(t))?;
                }
            }
            Err(e) => writeln!(w, "# rep {rep} censored: {e}")?,
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_density_check(c: &RunConfig, threads: Option<usize>, criteria: &[u8], scale: f64, sabotage: bool) -> Result<()> {
    let st = stamp(c)?;
    let ids: Vec<u8> = if criteria.is_empty() { DENSITY_CHECKS.to_vec() } else { criteria.to_vec() };
    let opts = CheckOptions { seed: c.seed, threads, scale, sabotage };
    let mut outcomes = Vec::new();
    let mut failed = Vec::new();
    for id in ids {
        let out = run_check(id, &opts)?;
        eprintln!("{}", out.summary());
        if !out.passed {
            failed.push(id);
        }
        outcomes.push(out);
    }
    let body = json!({ "sabotage": sabotage, "scale": scale, "passed": failed.is_empty(), "outcomes": outcomes });
    st.report(c, body)?;
    if !failed.is_empty() {
        return Err(ValidationFailed(format!("criteria {failed:?} failed")).into());
    }
    Ok(())
}

fn cmd_zone(c: &RunConfig, threads: Option<usize>, cdf_grid: Option<usize>) -> Result<()> {
    let st = stamp(c)?;
    let m = c.height_model()?;
    let strict = Strictness::of(c.scheme);
    let mut closed = serde_json::Map::new();
    if let (Some(lambda), Some(beta)) = (c.intensity.constant(), c.beta) {
        match c.tan_theta {
            Some(t) => {
                closed.insert(
                    "expected_length".into(),
                    num(expected_zone_length_given_angle(lambda, &m, beta, t, strict)),
                );
                if t > 0.0 {
                    closed.insert("expected_building_count".into(), num(expected_building_count(lambda, &m, beta, t)));
                }
            }
            None => {
                closed
                    .insert("expected_length_palm".into(), num(expected_zone_length_palm(lambda, &m, beta, c.scheme)));
            }
        }
    }
    // An unbounded zone cannot be sampled; report the closed form only.
    let unbounded = closed.values().any(|v| v.as_str() == Some("inf"));
    let mc = if unbounded { Vec::new() } else { run_experiment(c, threads)? };
    if let (Some(n), Some(lambda), Some(beta), Some(t)) = (cdf_grid, c.intensity.constant(), c.beta, c.tan_theta) {
        let top = if t > 0.0 { beta / t } else { 10.0 / lambda };
        let mut w = sink(c.output.as_deref())?;
        st.header(&mut w)?;
        writeln!(w, "t,cdf")?;
        for i in 0..=n.max(1) {
            let x = top * i as f64 / n.max(1) as f64;
            let v = relay_core::relay_tree::zone_length_cdf(lambda, &m, beta, t, x, strict);
            writeln!(w, "{},{}", fmt_num(x), fmt_num(v))?;
        }
        w.flush()?;
    }
    let eft = classify_eft(&m, c.scheme).map(|e| e.to_string()).unwrap_or_else(|e| e.to_string());
    st.report(c, json!({ "scheme": c.scheme, "beta": c.beta.map(num), "tan_theta": c.tan_theta.map(num), "closed_form": closed, "monte_carlo": mc, "eft_class": eft }))
}

fn cmd_tree(c: &RunConfig) -> Result<()> {
    let st = stamp(c)?;
    let m = c.height_model()?;
    let l = Landscape::generate(&c.intensity, &m, 0.0, c.window, substream(c.seed, 0));
    let f = build_forest(&l, c.scheme, &c.tolerances.truncation(), c.margin)?;
    let mut comments = st.comments();
    comments.push(format!("scheme={} window=[0,{}] margin={}", c.scheme, c.window, c.margin));
    if let Ok(class) = classify_eft(&m, c.scheme) {
        comments.push(format!("eft_class={class}"));
    }
    comments.push(format!("censored_fraction={}", f.censored_fraction()));
    let w = sink(c.output.as_deref())?;
    f.write_csv(w, &comments)?;
    Ok(())
}

fn cmd_finite(c: &RunConfig, threads: Option<usize>, hitting_times: bool, area_nodes: Option<usize>) -> Result<()> {
    let st = stamp(c)?;
    let Some(RangeChoice::Horizontal(r)) = c.range_choice()? else {
        bail!("finite needs --range horizontal:R");
    };
    let m = c.height_model()?;
    if hitting_times {
        let t = par_map(c.n_reps, c.seed, threads, |_, s| {
            hitting_time_sample(&c.intensity, &m, r, c.start_height, s.clone())
        });
        let mut w = sink(c.output.as_deref())?;
        st.header(&mut w)?;
        writeln!(w, "rep,T")?;
        for (rep, v) in t.into_iter().enumerate() {
            writeln!(w, "{rep},{}", v?)?;
        }
        w.flush()?;
        return Ok(());
    }
    let z = expected_zone_length_hr(&c.intensity, &m, r, c.n_reps, c.seed, threads, None)?;
    let mut body = json!({
        "range": r,
        "expected_zone_length": {
            "via_hitting_time": z.via_hitting_time,
            "direct": z.direct,
            "agree": z.agree(),
        },
    });
    if let Some(k) = area_nodes {
        let a = expected_zone_area_hr(&c.intensity, &m, r, k, c.n_reps, c.seed, threads)?;
        body["truncated_area"] = serde_json::to_value(&a)?;
    }
    st.report(c, body)
}

fn cmd_stoppage(c: &RunConfig, threads: Option<usize>, cdf_grid: Option<usize>) -> Result<()> {
    let st = stamp(c)?;
    let Some(RangeChoice::General(range)) = c.range_choice()? else {
        bail!("stoppage needs a general range such as --range disc:1");
    };
    let m = c.height_model()?;
    let o = Point::new(0.0, c.start_height);
    let law = StoppageLaw::new(&c.intensity, &m, o, &range);
    let cap = law.cap();
    let mean = relay_core::quad::quad(|u| law.survival(u), 0.0, cap, 1e-13, 1e-10);
    let mc = run_experiment(c, threads)?;
    if let Some(n) = cdf_grid {
        let xs: Vec<f64> = par_map(c.n_reps, c.seed, threads, |_, s| {
            let mut l = Landscape::lazy(&c.intensity, &m, 0.0, s.clone());
            relay_core::finite_range::stoppage_point(&mut l, o, &range).map(|p| p.x)
        })
        .into_iter()
        .collect::<relay_core::Result<_>>()?;
        let ecdf = relay_core::validation::Ecdf::new(xs)?;
        let mut w = sink(c.output.as_deref())?;
        st.header(&mut w)?;
        writeln!(w, "x,cdf,ecdf")?;
        for i in 0..=n.max(1) {
            let x = cap * i as f64 / n.max(1) as f64;
            writeln!(w, "{},{},{}", fmt_num(x), fmt_num(law.cdf(x)), fmt_num(ecdf.eval(x)))?;
        }
        w.flush()?;
    }
    st.report(c, json!({ "cap": num(cap), "atom_at_cap": num(law.atom()), "law_mean": num(mean), "monte_carlo": mc }))
}
