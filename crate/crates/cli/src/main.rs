//! `fpalign` command-line front end.
//!
//! Exit status: 0 on success, 2 for usage or input errors, 3 when a result
//! breaks an internal invariant.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fpalign::evaluation::{compute_eer, run_protocol, ImpostorRule, ProtocolOptions};
use fpalign::match_loop::run_matcher;
use fpalign::pair_weights::build_pair_queue;
use fpalign::registration::{objective, solve_alignment};
use fpalign::synth::{brute_force_align, generate_dataset, write_ground_truth, SynthParams};
use fpalign::template_io::{read_template, scan_dataset, write_template};
use fpalign::{MatchConfig, MinutiaTemplate, TemplateError};

use crate::config::{apply_config_text, override_schedule, parse_frame};

#[derive(Parser)]
#[command(
    name = "fpalign",
    version,
    about = "Minutia matching by iterative weighted global alignment"
)]
struct Cli {
    /// Extra diagnostics on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare a query template against a reference template.
    Match {
        query: PathBuf,
        template: PathBuf,
        #[command(flatten)]
        matcher: MatcherArgs,
    },
    /// Run the verification protocol over a directory of `<subject>_<impression>.mnt` files.
    Eval {
        dataset: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads for the comparisons.
        #[arg(long)]
        jobs: Option<usize>,
        /// Leave per-comparison timings out so outputs are reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
        #[arg(long, value_enum, default_value_t = ImpostorArg::All)]
        impostors: ImpostorArg,
        #[command(flatten)]
        matcher: MatcherArgs,
    },
    /// Write a synthetic dataset with ground-truth sidecars.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        subjects: u32,
        #[arg(long, default_value_t = 4)]
        impressions: u32,
        #[arg(long)]
        min_minutiae: Option<usize>,
        #[arg(long)]
        max_minutiae: Option<usize>,
        #[arg(long)]
        max_rotation: Option<f64>,
        #[arg(long)]
        max_translation: Option<f64>,
        #[arg(long)]
        position_jitter: Option<f64>,
        #[arg(long)]
        direction_jitter: Option<f64>,
        #[arg(long)]
        drop_fraction: Option<f64>,
        #[arg(long)]
        spurious_fraction: Option<f64>,
    },
    /// Closed-form alignment over the initial all-pairs weights.
    Align {
        query: PathBuf,
        template: PathBuf,
        /// Also run the rotation grid search and report the gap.
        #[arg(long)]
        oracle: bool,
        /// Grid step of the oracle, degrees.
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[command(flatten)]
        matcher: MatcherArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ImpostorArg {
    /// Every cross-subject pair of impressions.
    All,
    /// First impressions only.
    First,
}

#[derive(Args)]
struct MatcherArgs {
    /// `key = value` file of matcher settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for symmetry with `synth`; matching is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    tstep: Option<f64>,
    #[arg(long)]
    tmin: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    td: Option<f64>,
    #[arg(long)]
    tpsi: Option<f64>,
    /// `image` or `minutia`.
    #[arg(long, value_parser = parse_frame)]
    octant_frame: Option<fpalign::model::OctantFrame>,
}

enum Failure {
    Input(anyhow::Error),
    Internal(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

type CmdResult = Result<(), Failure>;

impl MatcherArgs {
    fn resolve(&self) -> anyhow::Result<MatchConfig> {
        let mut cfg = MatchConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            cfg = apply_config_text(&text, cfg)
                .with_context(|| format!("config {}", path.display()))?;
        }
        override_schedule(&mut cfg, self.t1, self.tstep, self.tmin);
        if let Some(v) = self.c1 {
            cfg.c1 = v;
        }
        if let Some(v) = self.c2 {
            cfg.c2 = v;
        }
        if let Some(v) = self.td {
            cfg.t_d = v;
        }
        if let Some(v) = self.tpsi {
            cfg.t_psi = v;
        }
        if let Some(v) = self.octant_frame {
            cfg.octant_frame = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads a template, naming the file in parse diagnostics.
fn load(path: &Path) -> anyhow::Result<MinutiaTemplate> {
    match read_template(path) {
        Ok(t) => Ok(t),
        Err(e @ TemplateError::Io { .. }) => Err(e.into()),
        Err(e) => Err(anyhow::Error::new(e).context(path.display().to_string())),
    }
}

fn print_json(v: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("JSON values always serialize")
    );
}

fn cmd_match(query: &Path, template: &Path, args: &MatcherArgs, verbose: u8) -> CmdResult {
    let cfg = args.resolve()?;
    let u = load(query)?;
    let v = load(template)?;
    let r = run_matcher(&u, &v, &cfg);
    r.check_invariants(&cfg).map_err(Failure::Internal)?;
    if verbose > 0 {
        for it in &r.iterations {
            eprintln!(
                "T={} removed={} left={} theta={:.4}",
                it.threshold, it.removed, it.queue_len_after, it.alignment.theta
            );
        }
    }
    print_json(&json!({
        "score": r.score,
        "converged": r.converged,
        "theta": r.final_alignment.theta,
        "a": r.final_alignment.a,
        "b": r.final_alignment.b,
        "matched_count": r.matched_pairs.len(),
        "iterations": r.iterations.len(),
    }));
    Ok(())
}

fn cmd_align(
    query: &Path,
    template: &Path,
    oracle: bool,
    step: f64,
    args: &MatcherArgs,
) -> CmdResult {
    let cfg = args.resolve()?;
    if !(step.is_finite() && step > 0.0) {
        return Err(anyhow!("--step must be positive").into());
    }
    let u = load(query)?;
    let v = load(template)?;
    let q = build_pair_queue(&u, &v, &cfg)?;
    let (p, diag) = solve_alignment(&q, &u, &v, &cfg)?;
    let cost = objective(&q, &u, &v, &p)?;
    let mut out = json!({
        "theta": p.theta,
        "a": p.a,
        "b": p.b,
        "objective": cost,
        "ill_posed": diag.ill_posed,
        "w1": diag.w1,
        "w4": diag.w4,
    });
    if oracle {
        let o = brute_force_align(&q, &u, &v, step)?;
        let o_cost = objective(&q, &u, &v, &o)?;
        out["oracle"] = json!({
            "theta": o.theta,
            "a": o.a,
            "b": o.b,
            "objective": o_cost,
            "step": step,
            "theta_gap": fpalign::angle_diff(p.theta, o.theta),
        });
    }
    print_json(&out);
    Ok(())
}

fn cmd_eval(
    dataset: &Path,
    out: &Path,
    jobs: Option<usize>,
    no_timing: bool,
    impostors: ImpostorArg,
    args: &MatcherArgs,
) -> CmdResult {
    let cfg = args.resolve()?;
    if jobs == Some(0) {
        return Err(anyhow!("--jobs must be at least 1").into());
    }
    let manifest = scan_dataset(dataset, "mnt")?;
    if manifest.is_empty() {
        return Err(anyhow!(
            "no <subject>_<impression>.mnt files in {}",
            dataset.display()
        )
        .into());
    }
    let opts = ProtocolOptions {
        impostor_rule: match impostors {
            ImpostorArg::All => ImpostorRule::AllPairs,
            ImpostorArg::First => ImpostorRule::FirstImpressions,
        },
        record_timing: !no_timing,
        jobs,
    };
    let outcome = run_protocol(&manifest, &cfg, &opts);
    for f in &outcome.failures {
        eprintln!("skipping {}_{}: {}", f.key.0, f.key.1, f.error);
    }
    let report = compute_eer(&outcome.scores)?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let csv_path = out.join("scores.csv");
    let file = fs::File::create(&csv_path)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    outcome.scores.write_csv(std::io::BufWriter::new(file))?;
    let extra = json!({
        "dataset": manifest.name,
        "templates": manifest.len(),
        "impostor_rule": match impostors { ImpostorArg::All => "all", ImpostorArg::First => "first" },
        "load_failures": outcome.failures.len(),
        "skipped_comparisons": outcome.skipped,
        "config": cfg,
    });
    let report_path = out.join("report.json");
    let text =
        serde_json::to_string_pretty(&report.to_json(extra)).context("serializing report")?;
    fs::write(&report_path, text + "\n")
        .with_context(|| format!("cannot write {}", report_path.display()))?;

    println!(
        "EER {:.3}%  genuine {}  impostor {}",
        report.eer, report.genuine.count, report.impostor.count
    );
    if let Some(ms) = report.mean_time_ms {
        println!("mean comparison time {ms:.3} ms");
    }
    Ok(())
}

fn cmd_synth(
    out: &Path,
    seed: u64,
    subjects: u32,
    impressions: u32,
    params: SynthParams,
) -> CmdResult {
    let samples = generate_dataset(&params, subjects, impressions, seed)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for s in &samples {
        let stem = out.join(format!("{}_{}", s.subject, s.impression));
        let mnt = stem.with_extension("mnt");
        fs::write(&mnt, write_template(&s.template))
            .with_context(|| format!("cannot write {}", mnt.display()))?;
        let gt = stem.with_extension("gt");
        fs::write(&gt, write_ground_truth(&s.truth))
            .with_context(|| format!("cannot write {}", gt.display()))?;
    }
    println!("wrote {} templates to {}", samples.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Match {
            query,
            template,
            matcher,
        } => cmd_match(&query, &template, &matcher, cli.verbose),
        Command::Align {
            query,
            template,
            oracle,
            step,
            matcher,
        } => cmd_align(&query, &template, oracle, step, &matcher),
        Command::Eval {
            dataset,
            out,
            jobs,
            no_timing,
            impostors,
            matcher,
        } => cmd_eval(&dataset, &out, jobs, no_timing, impostors, &matcher),
        Command::Synth {
            out,
            seed,
            subjects,
            impressions,
            min_minutiae,
            max_minutiae,
            max_rotation,
            max_translation,
            position_jitter,
            direction_jitter,
            drop_fraction,
            spurious_fraction,
        } => {
            let d = SynthParams::default();
            let params = SynthParams {
                min_minutiae: min_minutiae.unwrap_or(d.min_minutiae),
                max_minutiae: max_minutiae.unwrap_or(d.max_minutiae),
                max_rotation: max_rotation.unwrap_or(d.max_rotation),
                max_translation: max_translation.unwrap_or(d.max_translation),
                position_jitter: position_jitter.unwrap_or(d.position_jitter),
                direction_jitter: direction_jitter.unwrap_or(d.direction_jitter),
                drop_fraction: drop_fraction.unwrap_or(d.drop_fraction),
                spurious_fraction: spurious_fraction.unwrap_or(d.spurious_fraction),
                ..d
            };
            cmd_synth(&out, seed, subjects, impressions, params)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
