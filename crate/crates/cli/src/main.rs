use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use proqoi_core::bitplane::BitplaneConfig;
use proqoi_core::codec::{constant_mask, write_store, SourceRecord};
use proqoi_core::harness::{
    self, ingest, load_originals, parse_schedule, qoi_check, write_f64, write_sweep_csv, ByteOrder,
    DatasetSpec, Dtype, SynthKind,
};
use proqoi_core::retrieve::parse_qoi_spec;
use proqoi_core::snapshot::SnapshotLadder;
use proqoi_core::{
    refactor_variable, CodecConfig, CodecKind, OutlierMask, QoiRequest, RetrieveOptions,
    SegmentStore, Session, ToleranceMode, VariableData,
};

const EXIT_UNSATISFIED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "proqoi",
    version,
    about = "Progressive QoI-guaranteed data retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refactor raw arrays into a segment store.
    Refactor(RefactorArgs),
    /// Fetch just enough data to meet QoI tolerances.
    Retrieve(RetrieveArgs),
    /// Retrieve over a schedule of tolerances and write one CSV row per step.
    Sweep(SweepArgs),
    /// Compare the built-in QoI trees with closed-form evaluation.
    QoiCheck(QoiCheckArgs),
    /// Generate synthetic fields as `<out>/<name>.f64`.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RefactorArgs {
    /// `path` or `path:D1xD2...`. One file holding every variable back to
    /// back, or one file per `--var`.
    #[arg(long, required = true)]
    input: Vec<String>,
    #[arg(long = "var", required = true)]
    vars: Vec<String>,
    #[arg(long, default_value = "bitplane")]
    codec: CodecKind,
    /// Snapshot tolerance ladder, relative to each variable's range.
    #[arg(long)]
    ladder: Option<SnapshotLadder>,
    /// Hierarchical-basis levels for the bitplane codec.
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long, default_value = "f64")]
    dtype: Dtype,
    #[arg(long, default_value = "little")]
    byte_order: ByteOrder,
    /// Comma separated variables masked where all of them equal
    /// `--mask-constant`. Repeatable.
    #[arg(long)]
    mask_group: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    mask_constant: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    store: PathBuf,
    /// `name=expr@tau`, `BUILTIN@tau` or `expr@tau`. Repeatable.
    #[arg(long, required = true)]
    qoi: Vec<String>,
    /// Tolerance for QoIs given without `@tau`.
    #[arg(long)]
    tau: Option<f64>,
    /// Tolerances are absolute instead of relative to the QoI range.
    #[arg(long)]
    absolute: bool,
    /// Known QoI range to measure relative tolerances against.
    #[arg(long, conflicts_with = "absolute")]
    qoi_range: Option<f64>,
    #[arg(long, default_value_t = proqoi_core::retrieve::REDUCTION_FACTOR)]
    reduction_factor: f64,
    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// JSON report; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, required = true)]
    qoi: Vec<String>,
    /// `default`, `geom:<start>,<ratio>,<count>` or a comma separated list.
    #[arg(long, default_value = "default")]
    schedule: String,
    /// Directory of `<name>.f64` originals; defaults to the sources
    /// recorded at refactor time.
    #[arg(long)]
    original: Option<PathBuf>,
    /// Skip the originals even if available.
    #[arg(long)]
    no_original: bool,
    #[arg(long, default_value_t = proqoi_core::retrieve::REDUCTION_FACTOR)]
    reduction_factor: f64,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QoiCheckArgs {
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    kind: SynthKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = harness::DEFAULT_ZERO_FRACTION)]
    zero_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    let result = match cli.command {
        Command::Refactor(a) => cmd_refactor(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::QoiCheck(a) => cmd_qoi_check(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_UNSATISFIED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("PROQOI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("PROQOI_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("building the thread pool")
}

fn cmd_refactor(a: RefactorArgs) -> Result<bool> {
    let mut config = CodecConfig::new(a.codec);
    config.bitplane = BitplaneConfig { levels: a.levels };
    if let Some(ladder) = a.ladder {
        config.ladder = ladder;
    }

    let mut vars: Vec<VariableData> = Vec::new();
    let mut sources: Vec<SourceRecord> = Vec::new();
    let groups: Vec<(DatasetSpec, Vec<String>)> = if a.input.len() == 1 {
        vec![(DatasetSpec::parse(&a.input[0])?, a.vars.clone())]
    } else if a.input.len() == a.vars.len() {
        a.input
            .iter()
            .zip(&a.vars)
            .map(|(i, v)| Ok((DatasetSpec::parse(i)?, vec![v.clone()])))
            .collect::<Result<_>>()?
    } else {
        bail!(
            "give one --input for all variables or one per --var ({} inputs, {} variables)",
            a.input.len(),
            a.vars.len()
        );
    };
    for (mut spec, names) in groups {
        spec.dtype = a.dtype;
        spec.byte_order = a.byte_order;
        let loaded = ingest(&spec, &names)?;
        let path = fs::canonicalize(&spec.path)
            .with_context(|| format!("resolving {}", spec.path.display()))?;
        for (i, v) in loaded.iter().enumerate() {
            sources.push(SourceRecord {
                path: path.clone(),
                dtype: a.dtype.as_str().to_string(),
                byte_order: a.byte_order.as_str().to_string(),
                offset: (i * v.len()) as u64,
            });
        }
        vars.extend(loaded);
    }

    let mut masks: Vec<Option<OutlierMask>> = vec![None; vars.len()];
    for group in &a.mask_group {
        let idx: Vec<usize> = group
            .split(',')
            .map(|n| {
                let n = n.trim();
                vars.iter()
                    .position(|v| v.name() == n)
                    .with_context(|| format!("mask group names unknown variable `{n}`"))
            })
            .collect::<Result<_>>()?;
        let members: Vec<&VariableData> = idx.iter().map(|&i| &vars[i]).collect();
        let mask = constant_mask(&members, a.mask_constant)?;
        for i in idx {
            if masks[i].is_some() {
                bail!("`{}` is in more than one mask group", vars[i].name());
            }
            masks[i] = Some(mask.clone());
        }
    }

    let mut encoded = Vec::with_capacity(vars.len());
    for ((var, mask), source) in vars.iter().zip(&masks).zip(sources) {
        let mut e = refactor_variable(var, mask.as_ref(), a.mask_constant, &config)
            .with_context(|| format!("refactoring `{}`", var.name()))?;
        e.record.source = Some(source);
        encoded.push(e);
    }
    let manifest = write_store(&a.out, &encoded)?;
    for v in &manifest.variables {
        println!(
            "{}: {} segments, {} bytes, final bound {:e}",
            v.name,
            v.segments.len(),
            v.total_bytes(),
            v.segments.last().map_or(0.0, |s| s.nominal_bound)
        );
    }
    Ok(true)
}

fn requests(
    specs: &[String],
    variables: &[String],
    default_tau: Option<f64>,
    mode: ToleranceMode,
) -> Result<Vec<QoiRequest>> {
    specs
        .iter()
        .map(|s| {
            let spec = parse_qoi_spec(s, variables)?;
            let tau = spec
                .tolerance
                .or(default_tau)
                .with_context(|| format!("no tolerance for `{s}`; append @tau or pass --tau"))?;
            Ok(QoiRequest::new(spec.name, spec.expr, tau)?.with_mode(mode))
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_retrieve(a: RetrieveArgs) -> Result<bool> {
    let store = SegmentStore::open(&a.store)?;
    let variables: Vec<String> = store
        .manifest()
        .names()
        .into_iter()
        .map(String::from)
        .collect();
    let mode = if a.absolute {
        ToleranceMode::Absolute
    } else if let Some(r) = a.qoi_range {
        ToleranceMode::KnownRange(r)
    } else {
        ToleranceMode::Relative
    };
    let reqs = requests(&a.qoi, &variables, a.tau, mode)?;
    let options = RetrieveOptions {
        reduction_factor: a.reduction_factor,
    };
    let mut session = Session::new(&store);
    let report = session.retrieve(&reqs, &options)?;

    if let Some(path) = &a.trace {
        let mut w = create(path)?;
        report.write_trace(&mut w)?;
        w.flush()?;
    }
    let json = report.to_json()?;
    match &a.report {
        Some(path) => {
            fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
            for q in &report.qois {
                eprintln!(
                    "{}: estimated {:e} (tolerance {:e}) {}",
                    q.name,
                    q.max_estimated.as_f64(),
                    q.tolerance,
                    if q.satisfied { "ok" } else { "NOT satisfied" }
                );
            }
            eprintln!(
                "{} bytes in {} iterations, {:.4} bits per value",
                report.total_bytes, report.iterations, report.bitrate
            );
        }
        None => println!("{json}"),
    }
    Ok(report.satisfied)
}

fn cmd_sweep(a: SweepArgs) -> Result<bool> {
    let store = SegmentStore::open(&a.store)?;
    let variables: Vec<String> = store
        .manifest()
        .names()
        .into_iter()
        .map(String::from)
        .collect();
    let schedule = parse_schedule(&a.schedule)?;
    let qois = a
        .qoi
        .iter()
        .map(|s| {
            let spec = parse_qoi_spec(s, &variables)?;
            Ok((spec.name, spec.expr))
        })
        .collect::<Result<Vec<_>>>()?;
    let originals = if a.no_original {
        None
    } else {
        load_originals(&store, a.original.as_deref())?
    };
    let options = RetrieveOptions {
        reduction_factor: a.reduction_factor,
    };
    let rows = harness::sweep(&store, &qois, originals.as_deref(), &schedule, &options)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            write_sweep_csv(&mut w, &rows)?;
            w.flush()?;
        }
        None => write_sweep_csv(io::stdout().lock(), &rows)?,
    }
    Ok(rows.iter().all(|r| r.satisfied))
}

fn cmd_qoi_check(a: QoiCheckArgs) -> Result<bool> {
    let report = qoi_check(a.trials, a.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(true)
}

fn cmd_synth(a: SynthArgs) -> Result<bool> {
    let vars = harness::synth_with(a.kind, a.n, a.seed, a.zero_fraction)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for v in &vars {
        let path = a.out.join(format!("{}.f64", v.name()));
        write_f64(&path, v.values())?;
        println!("{}", path.display());
    }
    Ok(true)
}
