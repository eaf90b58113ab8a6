#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arbor4d::esrvf::{tree_forward, tree_inverse, EsrvfTree};
use arbor4d::metric::geodesic;
use arbor4d::spatreg::{
    align, cycle_consistency, register_trees, serialize_registration, CycleReport,
};
use arbor4d::stats::{
    build_model, build_population, karcher_mean_trajectories, karcher_mean_trees, parse_model,
    serialize_model, synthesize, MeanRule, Population,
};
use arbor4d::synthgen::{gen_tree, gen_tree4d, parse_spec};
use arbor4d::trajectory::{
    fit_basis, geodesic4d, invert_trajectory, prepare_tree, spatiotemporal_pipeline,
    PipelineResult,
};
use arbor4d::treemodel::{
    export_mesh, parse_sequence, parse_tree, serialize_sequence, serialize_tree, Tree, Tree4D,
    SEQ_FORMAT, TREE_FORMAT,
};
use arbor4d::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "arbor4d", version, about = "Elastic shape analysis of 3D and 4D trees")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, env = "ARBOR4D_THREADS", global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register tree 2 onto tree 1
    RegisterSpatial {
        tree1: PathBuf,
        tree2: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Spatiotemporal registration of two sequences; writes warp and report
    RegisterTemporal {
        seq1: PathBuf,
        seq2: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Full pipeline; also writes both aligned sequences
    Pipeline {
        seq1: PathBuf,
        seq2: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Geodesic between two trees or two sequences
    Geodesic {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Karcher mean of trees or sequences
    Mean {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        passes: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Mean and principal modes of a set of sequences, saved as a model
    Modes {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short = 'k', long, default_value_t = 3)]
        modes: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Random or prescribed sequence from a model
    Synth {
        model: PathBuf,
        /// Comma-separated coefficients in standard deviations
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        coeffs: Option<Vec<f64>>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Synthetic tree or growth sequence from a growth spec
    Gen {
        spec: PathBuf,
        /// Single full-grown tree instead of a sequence
        #[arg(long)]
        tree: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Generalized-cylinder OBJ mesh of a tree
    ExportMesh {
        tree: PathBuf,
        #[arg(long, default_value_t = 12)]
        segments: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Evaluation protocols
    Eval {
        suite: Suite,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Cycle-consistency thresholds
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.02, 0.01])]
        thresholds: Vec<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    GeodesicError,
    CycleConsistency,
    DescriptionLength,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input() { 2 } else { 3 })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    match &cli.command {
        Command::RegisterSpatial { tree1, tree2, out } => register_spatial(&cfg, tree1, tree2, out),
        Command::RegisterTemporal { seq1, seq2, out } => pipeline(&cfg, seq1, seq2, out, false),
        Command::Pipeline { seq1, seq2, out } => pipeline(&cfg, seq1, seq2, out, true),
        Command::Geodesic { a, b, steps, out } => geodesic_cmd(&cfg, a, b, *steps, out),
        Command::Mean { inputs, passes, out } => mean_cmd(&cfg, inputs, *passes, out),
        Command::Modes { inputs, modes, out } => modes_cmd(&cfg, inputs, *modes, out),
        Command::Synth { model, coeffs, out } => synth(&cfg, model, coeffs.as_deref(), out),
        Command::Gen { spec, tree, out } => gen(&cfg, &cli.overrides, spec, *tree, out),
        Command::ExportMesh { tree, segments, out } => {
            let t = parse_tree(&read(tree)?)?;
            write(out, &export_mesh(&t, *segments)?)
        }
        Command::Eval { suite, inputs, thresholds, out } => eval(&cfg, *suite, inputs, thresholds, out),
    }
}

fn read(p: &Path) -> Result<Vec<u8>> {
    fs::read(p).map_err(|e| Error::Malformed(format!("{}: {e}", p.display())))
}

fn write(p: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(p, bytes)?;
    Ok(())
}

fn write_json(p: &Path, v: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    write(p, &bytes)
}

fn report(cfg: &RunConfig, body: Value) -> Value {
    let mut v = json!({ "config": cfg });
    if let (Some(m), Value::Object(b)) = (v.as_object_mut(), body) {
        m.extend(b);
    }
    v
}

fn format_of(bytes: &[u8]) -> Result<String> {
    let v: Value = serde_json::from_slice(bytes)?;
    v.get("format")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| Error::Malformed("missing `format` field".into()))
}

enum Input {
    Tree(Tree),
    Sequence(Tree4D),
}

fn read_input(p: &Path) -> Result<Input> {
    let bytes = read(p)?;
    match format_of(&bytes)?.as_str() {
        TREE_FORMAT => Ok(Input::Tree(parse_tree(&bytes)?)),
        SEQ_FORMAT => Ok(Input::Sequence(parse_sequence(&bytes)?)),
        other => Err(Error::Format { expected: format!("{TREE_FORMAT} or {SEQ_FORMAT}"), found: other.into() }),
    }
}

fn read_trees(paths: &[PathBuf]) -> Result<Vec<Tree>> {
    paths.iter().map(|p| parse_tree(&read(p)?)).collect()
}

fn read_sequences(paths: &[PathBuf]) -> Result<Vec<Tree4D>> {
    paths.iter().map(|p| parse_sequence(&read(p)?)).collect()
}

fn esrvf(cfg: &RunConfig, t: &Tree) -> Result<EsrvfTree> {
    Ok(tree_forward(&prepare_tree(t, cfg.samples, cfg.scale_normalize)?))
}

fn register_spatial(cfg: &RunConfig, p1: &Path, p2: &Path, out: &Path) -> Result<()> {
    let q1 = esrvf(cfg, &parse_tree(&read(p1)?)?)?;
    let q2 = esrvf(cfg, &parse_tree(&read(p2)?)?)?;
    let r = register_trees(&q1, &q2, &cfg.weights, &cfg.registration())?;
    let (_, moved) = align(&q1, &q2, &r.map)?;
    write(&out.join("registration.json"), &serialize_registration(&r.map)?)?;
    write(&out.join("registered.json"), &serialize_tree(&tree_inverse(&moved).pruned()))?;
    write_json(
        &out.join("report.json"),
        &report(
            cfg,
            json!({
                "distance_before": r.identity_cost.max(0.0).sqrt(),
                "distance_after": r.distance,
                "rounds": r.history,
                "degenerate_rotation": r.degenerate_rotation,
            }),
        ),
    )
}

fn run_pipeline(cfg: &RunConfig, h1: &Tree4D, h2: &Tree4D) -> Result<PipelineResult> {
    spatiotemporal_pipeline(h1, h2, &cfg.weights, &cfg.pipeline())
}

fn pipeline(cfg: &RunConfig, p1: &Path, p2: &Path, out: &Path, sequences: bool) -> Result<()> {
    let h1 = parse_sequence(&read(p1)?)?;
    let h2 = parse_sequence(&read(p2)?)?;
    let r = run_pipeline(cfg, &h1, &h2)?;
    let mut clamped = 0;
    if sequences {
        let (a1, c1) = invert_trajectory(&r.srvf1, &r.basis)?;
        let (a2, c2) = invert_trajectory(&r.temporal.aligned, &r.basis)?;
        clamped = c1 + c2;
        write(&out.join("aligned1.json"), &serialize_sequence(&a1))?;
        write(&out.join("aligned2.json"), &serialize_sequence(&a2))?;
    }
    write_json(&out.join("warp.json"), &json!({ "warp": r.temporal.warp }))?;
    write_json(
        &out.join("report.json"),
        &report(
            cfg,
            json!({
                "components": r.basis.k,
                "distance_before": r.distance_before,
                "distance_after": r.distance_after,
                "identity_warp": r.temporal.time_warp().is_identity(),
                "clamped_radii": clamped,
            }),
        ),
    )
}

fn numbered(out: &Path, j: usize) -> PathBuf {
    out.join(format!("geodesic_{j:03}.json"))
}

fn geodesic_cmd(cfg: &RunConfig, a: &Path, b: &Path, steps: usize, out: &Path) -> Result<()> {
    if steps < 2 {
        return Err(Error::Argument(format!("a geodesic needs at least 2 steps, got {steps}")));
    }
    match (read_input(a)?, read_input(b)?) {
        (Input::Tree(t1), Input::Tree(t2)) => {
            let q1 = esrvf(cfg, &t1)?;
            let q2 = esrvf(cfg, &t2)?;
            let r = register_trees(&q1, &q2, &cfg.weights, &cfg.registration())?;
            let (ext, moved) = align(&q1, &q2, &r.map)?;
            let path = geodesic(&ext, &moved, steps)?;
            for (j, q) in path.iter().enumerate() {
                let t = match j {
                    0 => t1.clone(),
                    j if j == steps - 1 => t2.clone(),
                    _ => tree_inverse(q).pruned(),
                };
                write(&numbered(out, j), &serialize_tree(&t))?;
            }
        }
        (Input::Sequence(h1), Input::Sequence(h2)) => {
            let r = run_pipeline(cfg, &h1, &h2)?;
            let path = geodesic4d(&r.srvf1, &r.temporal.aligned, &r.basis, steps)?;
            for (j, h) in path.iter().enumerate() {
                let h = match j {
                    0 => &h1,
                    j if j == steps - 1 => &h2,
                    _ => h,
                };
                write(&numbered(out, j), &serialize_sequence(h))?;
            }
        }
        _ => return Err(Error::Mismatch("geodesic endpoints must both be trees or both sequences".into())),
    }
    Ok(())
}

fn population(cfg: &RunConfig, seqs: &[Tree4D]) -> Result<Population> {
    build_population(
        seqs,
        &cfg.weights,
        cfg.samples,
        cfg.scale_normalize,
        cfg.trajectory_samples,
        &cfg.registration(),
        &cfg.basis(),
    )
}

fn mean_cmd(cfg: &RunConfig, inputs: &[PathBuf], passes: usize, out: &Path) -> Result<()> {
    let first = read_input(&inputs[0])?;
    match first {
        Input::Tree(t) => {
            let trees = read_trees(inputs)?;
            if trees.len() == 1 {
                return write(out, &serialize_tree(&t));
            }
            let qs = trees.iter().map(|t| esrvf(cfg, t)).collect::<Result<Vec<_>>>()?;
            let m = karcher_mean_trees(&qs, &cfg.weights, &cfg.registration(), passes)?;
            write(out, &serialize_tree(&tree_inverse(&m.mean).pruned()))
        }
        Input::Sequence(h) => {
            let seqs = read_sequences(inputs)?;
            if seqs.len() == 1 {
                return write(out, &serialize_sequence(&h));
            }
            let pop = population(cfg, &seqs)?;
            let m = karcher_mean_trajectories(&pop.srvfs, &cfg.temporal(), MeanRule::Running, passes)?;
            let (tree, _) = invert_trajectory(&m.mean, &pop.basis)?;
            write(out, &serialize_sequence(&tree))
        }
    }
}

fn modes_cmd(cfg: &RunConfig, inputs: &[PathBuf], k: usize, out: &Path) -> Result<()> {
    let seqs = read_sequences(inputs)?;
    if seqs.len() < 2 {
        return Err(Error::Argument("modes need at least 2 sequences".into()));
    }
    let pop = population(cfg, &seqs)?;
    let m = karcher_mean_trajectories(&pop.srvfs, &cfg.temporal(), MeanRule::Running, 1)?;
    let model = build_model(&m.aligned, &m.mean, pop.basis, k, cfg.clamp)?;
    write(out, &serialize_model(&model)?)
}

fn synth(cfg: &RunConfig, model: &Path, coeffs: Option<&[f64]>, out: &Path) -> Result<()> {
    let mut model = parse_model(&read(model)?)?;
    model.clamp = cfg.clamp;
    let s = synthesize(&model, coeffs, cfg.seed)?;
    if s.clamped_radii > 0 {
        log::warn!("{} negative radii set to zero", s.clamped_radii);
    }
    write(out, &serialize_sequence(&s.tree))
}

fn gen(cfg: &RunConfig, o: &Overrides, spec: &Path, tree: bool, out: &Path) -> Result<()> {
    let spec = parse_spec(&read(spec)?)?;
    let seed = if o.seed.is_some() { cfg.seed } else { spec.seed };
    if tree {
        write(out, &serialize_tree(&gen_tree(&spec, seed)?))
    } else {
        write(out, &serialize_sequence(&gen_tree4d(&spec, seed)?))
    }
}

#[derive(Serialize)]
struct Summary {
    mean: f64,
    median: f64,
    std: f64,
}

fn summary(xs: &[f64]) -> Summary {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
    let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    Summary { mean, median, std }
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn eval(cfg: &RunConfig, suite: Suite, inputs: &[PathBuf], thresholds: &[f64], out: &Path) -> Result<()> {
    let body = match suite {
        Suite::GeodesicError => {
            let trees = read_trees(inputs)?;
            if trees.len() < 2 {
                return Err(Error::Argument("geodesic-error needs at least 2 trees".into()));
            }
            let qs = trees.par_iter().map(|t| esrvf(cfg, t)).collect::<Result<Vec<_>>>()?;
            let d = pairs(qs.len())
                .par_iter()
                .map(|&(i, j)| {
                    let r = register_trees(&qs[i], &qs[j], &cfg.weights, &cfg.registration())?;
                    Ok((r.identity_cost.max(0.0).sqrt(), r.distance))
                })
                .collect::<Result<Vec<_>>>()?;
            let before: Vec<f64> = d.iter().map(|x| x.0).collect();
            let after: Vec<f64> = d.iter().map(|x| x.1).collect();
            json!({ "pairs": d.len(), "before": summary(&before), "after": summary(&after) })
        }
        Suite::CycleConsistency => {
            let trees = read_trees(inputs)?;
            if trees.len() < 2 {
                return Err(Error::Argument("cycle-consistency needs at least 2 trees".into()));
            }
            let reports = pairs(trees.len())
                .par_iter()
                .map(|&(i, j)| {
                    cycle_consistency(&trees[i], &trees[j], cfg.samples, &cfg.weights, &cfg.registration(), thresholds)
                })
                .collect::<Result<Vec<CycleReport>>>()?;
            let samples: usize = reports.iter().map(|r| r.samples).sum();
            let violation: Vec<f64> = (0..thresholds.len())
                .map(|t| {
                    reports.iter().map(|r| r.violation_percent[t] * r.samples as f64).sum::<f64>() / samples as f64
                })
                .collect();
            json!({ "thresholds": thresholds, "violation_percent": violation, "pairs": reports })
        }
        Suite::DescriptionLength => {
            let mut trees = Vec::new();
            for p in inputs {
                match read_input(p)? {
                    Input::Tree(t) => trees.push(t),
                    Input::Sequence(h) => trees.extend(h.frames().iter().cloned()),
                }
            }
            let qs = trees.par_iter().map(|t| esrvf(cfg, t)).collect::<Result<Vec<_>>>()?;
            let fit = fit_basis(&qs, &cfg.weights, &cfg.registration(), &cfg.basis())?;
            let curve = fit.basis.energy_curve();
            let needed = |f: f64| curve.iter().position(|e| *e >= f - 1e-12).map(|i| i + 1);
            json!({
                "samples": qs.len(),
                "energy": curve,
                "components_for": { "0.9": needed(0.9), "0.95": needed(0.95), "0.99": needed(0.99) },
            })
        }
    };
    write_json(out, &report(cfg, body))
}
