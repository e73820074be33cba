//! Command-line driver.

use std::path::PathBuf;
use std::sync::mpsc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;
use splitinfer_core::adversary::{
    oracle_output, solve_layer, collect_pairs, count_residuals, AttackError, CheatStrategy, CheatingDavid,
    SessionArgs,
};
use splitinfer_core::codec::{CodecError, FixedPointCodec};
use splitinfer_core::decompose::{
    charlie_cost_ratio, decompose, diagnostics, DecomposeError, Decomposition,
};
use splitinfer_core::field::{PrimeField, MERSENNE_61};
use splitinfer_core::matrix::{vec_add, vec_sub, RealMatrix};
use splitinfer_core::model::{gen_random_model_with, Activation, Layer, MlpModel, ModelError, QuantizedModel};
use splitinfer_core::protocol::{
    freivalds_check, precompute_one, run_session, Mode, Outcome, ProtocolError, Transcript,
};
use splitinfer_core::rng;

use crate::io::{self, FileError};
use crate::stats::{
    self, distinguish_views, estimate_detection_parallel, real_view_histograms, simulated_view_histograms,
    uniformity, DetectionJson, UniformityReport, ViewsReport,
};
use crate::tcp::{self, DavidServer, SessionError};

pub const EXIT_OUTPUT: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_SESSION: i32 = 4;

/// Bound used when loading model files.
pub const MODEL_WEIGHT_BOUND: f64 = 4096.0;

#[derive(Debug, Parser)]
#[command(name = "splitinfer", version, about = "Split inference between a trusted and an untrusted party")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Field modulus.
    #[arg(long, global = true, default_value_t = MERSENNE_61)]
    pub prime: u64,
    /// Fixed-point fraction bits.
    #[arg(long, global = true, default_value_t = 16)]
    pub frac_bits: u32,
    /// Freivalds checks per layer in malicious mode.
    #[arg(long, global = true, default_value_t = 1)]
    pub check_count: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded random model file.
    GenModel(GenModelArgs),
    /// Split a model into Charlie and David files.
    Decompose(DecomposeArgs),
    /// Plain local inference (float and quantized).
    Infer(InferArgs),
    /// Run David as a TCP worker.
    ServeDavid(ServeArgs),
    /// Run one inference session.
    Run(RunArgs),
    /// Weight recovery and cheating-detection experiments.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Cost accounting and timings for Charlie's online work.
    Bench(BenchArgs),
    /// Statistical tests on David's view.
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Debug, Args)]
pub struct GenModelArgs {
    /// Comma-separated widths d_1,...,d_{L+1}.
    #[arg(long, default_value = "16,32,16,4", value_delimiter = ',')]
    pub dims: Vec<usize>,
    /// One activation for all layers, or one per layer.
    #[arg(long, default_value = "relu", value_delimiter = ',')]
    pub activation: Vec<String>,
    /// Draw integer weights in [-N, N] instead of reals in [-1, 1].
    #[arg(long)]
    pub integer_bound: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// One rank for all layers, or one per layer.
    #[arg(long, default_value = "0", value_delimiter = ',')]
    pub ranks: Vec<usize>,
    #[arg(long)]
    pub out_charlie: PathBuf,
    #[arg(long)]
    pub out_david: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Comma-separated input vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "input_file")]
    pub input: Option<Vec<f64>>,
    /// JSON array file with the input vector.
    #[arg(long)]
    pub input_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub david: PathBuf,
    /// Listen address; defaults to $SLIPWIRE_ADDR or 127.0.0.1:7462.
    #[arg(long)]
    pub addr: Option<String>,
    /// Stop after this many connections.
    #[arg(long)]
    pub connections: Option<u64>,
    /// Deviate from the protocol (see `run --cheat`).
    #[arg(long)]
    pub cheat: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Insecure,
    Honest,
    Malicious,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Insecure => Mode::Insecure,
            ModeArg::Honest => Mode::Honest,
            ModeArg::Malicious => Mode::Malicious,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub charlie: PathBuf,
    /// David's file; required for the in-process transport.
    #[arg(long)]
    pub david: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Honest)]
    pub mode: ModeArg,
    /// `inproc`, `tcp` (default address) or `tcp:HOST:PORT`.
    #[arg(long, default_value = "inproc")]
    pub transport: String,
    /// In-process only: `honest`, `random:L`, `flip:L:INDEX:OFFSET` or `noise:L:v1;v2;...`.
    #[arg(long)]
    pub cheat: Option<String>,
    /// Mask set index drawn from the seed.
    #[arg(long, default_value_t = 0)]
    pub inference_id: u64,
    /// Write Charlie's transcript as JSON.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    /// Solve for a layer's weights from David's transcripts.
    Recover(RecoverArgs),
    /// Estimate how often a cheating David is caught.
    Soundness(SoundnessArgs),
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "0", value_delimiter = ',')]
    pub ranks: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Insecure)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub layer: u32,
    /// Sessions used to solve; defaults to the layer's input width.
    #[arg(long)]
    pub queries: Option<usize>,
    /// Additional sessions used only to verify the solution.
    #[arg(long, default_value_t = 20)]
    pub held_out: usize,
}

#[derive(Debug, Args)]
pub struct SoundnessArgs {
    #[arg(long)]
    pub charlie: PathBuf,
    #[arg(long)]
    pub david: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Defaults to `random:L` on the last layer.
    #[arg(long)]
    pub cheat: Option<String>,
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub charlie: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub iterations: u32,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Compare David's real masked views with simulated ones.
    Views(ViewsArgs),
}

#[derive(Debug, Args)]
pub struct ViewsArgs {
    #[arg(long)]
    pub charlie: PathBuf,
    #[arg(long)]
    pub david: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub sessions: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Honest)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = stats::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[command(flatten)]
    pub input: InputArgs,
}

/// Invalid flags or configuration detected before any session starts.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Exit code for an error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>()
            || cause.is::<CodecError>()
            || cause.is::<ModelError>()
            || cause.is::<DecomposeError>()
            || cause.is::<clap::Error>()
        {
            return EXIT_USAGE;
        }
        if let Some(FileError::Model { .. } | FileError::Malformed { .. } | FileError::Version { .. }) =
            cause.downcast_ref::<FileError>()
        {
            return EXIT_USAGE;
        }
        if cause.is::<SessionError>() {
            return EXIT_SESSION;
        }
        if let Some(e) = cause.downcast_ref::<ProtocolError>() {
            return match e {
                ProtocolError::Codec(_) => EXIT_USAGE,
                _ => EXIT_SESSION,
            };
        }
    }
    EXIT_FAILURE
}

pub fn run(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    match &cli.command {
        Command::GenModel(a) => cmd_gen_model(g, a),
        Command::Decompose(a) => cmd_decompose(g, a),
        Command::Infer(a) => cmd_infer(g, a),
        Command::ServeDavid(a) => cmd_serve(g, a),
        Command::Run(a) => cmd_run(g, a),
        Command::Attack(AttackCommand::Recover(a)) => cmd_recover(g, a),
        Command::Attack(AttackCommand::Soundness(a)) => cmd_soundness(g, a),
        Command::Bench(a) => cmd_bench(g, a),
        Command::Stats(StatsCommand::Views(a)) => cmd_views(g, a),
    }
}

fn emit<T: Serialize>(g: &GlobalOpts, value: &T, text: impl FnOnce() -> String) {
    if g.json {
        println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
    } else {
        print!("{}", text());
    }
}

fn parse_activations(tags: &[String], layers: usize) -> Result<Vec<Activation>> {
    let acts = tags
        .iter()
        .map(|t| Activation::from_tag(t).ok_or_else(|| UsageError(format!("unknown activation `{t}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    match acts.len() {
        1 => Ok(vec![acts[0]; layers]),
        n if n == layers => Ok(acts),
        n => usage(format!("{n} activations given for {layers} layers")),
    }
}

fn broadcast_ranks(ranks: &[usize], layers: usize) -> Result<Vec<usize>> {
    match ranks.len() {
        1 => Ok(vec![ranks[0]; layers]),
        n if n == layers => Ok(ranks.to_vec()),
        n => usage(format!("{n} ranks given for {layers} layers")),
    }
}

/// Seeded model with integer weights in `[-bound, bound]`.
pub fn gen_integer_model(seed: u64, dims: &[usize], acts: &[Activation], bound: u32) -> Result<MlpModel, ModelError> {
    if dims.len() < 2 {
        return Err(ModelError::TooFewDims(dims.len()));
    }
    if dims.contains(&0) {
        return Err(ModelError::ZeroWidth);
    }
    let mut r = rng::substream(seed, rng::MODEL, 1);
    let b = bound as i64;
    let layers = dims
        .windows(2)
        .zip(acts)
        .map(|(w, &activation)| {
            let data = (0..w[0] * w[1]).map(|_| r.random_range(-b..=b) as f64).collect();
            Ok(Layer {
                weights: RealMatrix::from_rows(w[1], w[0], data)?,
                activation,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    MlpModel::new(layers, bound.max(1) as f64)
}

fn cmd_gen_model(g: &GlobalOpts, a: &GenModelArgs) -> Result<i32> {
    if a.dims.len() < 2 {
        return usage("--dims needs at least two widths");
    }
    let acts = parse_activations(&a.activation, a.dims.len() - 1)?;
    let model = match a.integer_bound {
        Some(b) => gen_integer_model(g.seed, &a.dims, &acts, b)?,
        None => gen_random_model_with(g.seed, &a.dims, &acts)?,
    };
    io::save_model(&a.out, &model)?;
    #[derive(Serialize)]
    struct Report<'a> {
        path: &'a std::path::Path,
        dims: Vec<usize>,
    }
    emit(g, &Report { path: &a.out, dims: model.dims() }, || {
        format!("wrote {} with dims {:?}\n", a.out.display(), model.dims())
    });
    Ok(EXIT_OUTPUT)
}

fn codec_for(g: &GlobalOpts, model: &MlpModel) -> Result<FixedPointCodec> {
    let field = PrimeField::new(g.prime).map_err(|e| UsageError(format!("--prime: {e}")))?;
    Ok(FixedPointCodec::auto_bound(field, g.frac_bits, model.max_input_width())?)
}

#[derive(Debug, Serialize)]
pub struct DecomposeReport {
    pub modulus: u64,
    pub frac_bits: u32,
    pub value_bound: f64,
    pub svd_ranks: Vec<usize>,
    pub energy_fractions: Vec<f64>,
    pub residual_ratios: Vec<f64>,
    pub david_only_rel_error: f64,
    pub check_count: usize,
    pub charlie_macs: u64,
    pub full_macs: u64,
    pub cost_ratio: f64,
}

fn cmd_decompose(g: &GlobalOpts, a: &DecomposeArgs) -> Result<i32> {
    let model = io::load_model(&a.model, MODEL_WEIGHT_BOUND)?;
    let ranks = broadcast_ranks(&a.ranks, model.num_layers())?;
    let codec = codec_for(g, &model)?;
    let d = decompose(&model, &ranks, codec)?;
    let diag = diagnostics(&d, &model, g.seed)?;
    io::save_charlie(&a.out_charlie, &d)?;
    io::save_david(&a.out_david, &d.david_part())?;
    let cost = d.charlie_cost_ratio(g.check_count);
    let report = DecomposeReport {
        modulus: codec.field().modulus(),
        frac_bits: codec.frac_bits(),
        value_bound: codec.value_bound(),
        svd_ranks: ranks,
        energy_fractions: diag.layers.iter().map(|l| l.energy_fraction).collect(),
        residual_ratios: diag.layers.iter().map(|l| l.residual_ratio).collect(),
        david_only_rel_error: diag.david_only_rel_error,
        check_count: g.check_count,
        charlie_macs: cost.charlie_macs,
        full_macs: cost.full_macs,
        cost_ratio: cost.ratio(),
    };
    emit(g, &report, || {
        let mut s = format!(
            "field p={} f={} B={}\n",
            report.modulus, report.frac_bits, report.value_bound
        );
        for (i, l) in diag.layers.iter().enumerate() {
            s += &format!(
                "layer {}: svd_rank {} energy {:.6} residual {:.6}\n",
                i + 1,
                l.svd_rank,
                l.energy_fraction,
                l.residual_ratio
            );
        }
        s += &format!("david-only relative error {:.6}\n", report.david_only_rel_error);
        s += &format!(
            "cost ratio {:.6} ({} / {} MACs, check_count {})\n",
            report.cost_ratio, report.charlie_macs, report.full_macs, report.check_count
        );
        s
    });
    Ok(EXIT_OUTPUT)
}

fn read_input(g: &GlobalOpts, a: &InputArgs, width: usize) -> Result<Vec<f64>> {
    let x = match (&a.input, &a.input_file) {
        (Some(v), _) => v.clone(),
        (None, Some(p)) => io::load_input(p)?,
        (None, None) => {
            let mut r = rng::substream(g.seed, rng::INPUTS, 0);
            (0..width).map(|_| r.random_range(-1.0..=1.0)).collect()
        }
    };
    if x.len() != width {
        return usage(format!("input has {} values, the model expects {width}", x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return usage("input contains a non-finite value");
    }
    Ok(x)
}

fn decode_all(codec: &FixedPointCodec, v: &[u64]) -> Vec<f64> {
    v.iter().map(|&e| codec.decode(e)).collect()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn cmd_infer(g: &GlobalOpts, a: &InferArgs) -> Result<i32> {
    let model = io::load_model(&a.model, MODEL_WEIGHT_BOUND)?;
    let x = read_input(g, &a.input, model.dims()[0])?;
    let quant = QuantizedModel::new(&model, codec_for(g, &model)?)?;
    let float = model.infer_float(&x)?;
    let trace = quant.infer_quantized(&x)?;
    #[derive(Serialize)]
    struct Report {
        float: Vec<f64>,
        quantized: Vec<f64>,
        field: Vec<u64>,
    }
    let r = Report {
        float,
        quantized: trace.output.clone(),
        field: trace.output_field().to_vec(),
    };
    emit(g, &r, || format!("output {}\nfloat {}\n", fmt_vec(&r.quantized), fmt_vec(&r.float)));
    Ok(EXIT_OUTPUT)
}

/// Parses `honest`, `random:L`, `flip:L:INDEX:OFFSET` or `noise:L:v1;v2;...`.
pub fn parse_cheat(spec: &str) -> Result<CheatStrategy, UsageError> {
    let bad = || UsageError(format!("bad cheat spec `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<u64>().map_err(|_| bad());
    let layer = |s: &str| s.parse::<u32>().ok().filter(|&l| l >= 1).ok_or_else(bad);
    match parts.as_slice() {
        ["honest"] => Ok(CheatStrategy::HonestPlay),
        ["random", l] => Ok(CheatStrategy::RandomReply { layer: layer(l)? }),
        ["flip", l, i, o] => Ok(CheatStrategy::CoordinateFlip {
            layer: layer(l)?,
            index: num(i)? as usize,
            offset: num(o)?,
        }),
        ["noise", l, v] => Ok(CheatStrategy::AdditiveNoise {
            layer: layer(l)?,
            delta: v.split(';').map(num).collect::<Result<_, _>>()?,
        }),
        _ => Err(bad()),
    }
}

fn check_cheat_layer(s: &CheatStrategy, layers: usize) -> Result<()> {
    match s.layer() {
        Some(l) if l as usize > layers => usage(format!("cheat layer {l} exceeds the model's {layers} layers")),
        _ => Ok(()),
    }
}

fn cmd_serve(g: &GlobalOpts, a: &ServeArgs) -> Result<i32> {
    let part = io::load_david(&a.david)?;
    let addr = a.addr.clone().unwrap_or_else(tcp::default_addr);
    let mut server = DavidServer::bind(&addr, part).with_context(|| format!("binding {addr}"))?;
    if let Some(spec) = &a.cheat {
        server = server.with_cheat(parse_cheat(spec)?, g.seed);
    }
    let (tx, rx) = mpsc::channel();
    let server = server.with_sink(tx);
    eprintln!("david listening on {}", server.local_addr()?);
    let handle = server.spawn(a.connections);
    for rec in rx {
        match rec.result {
            Ok(t) => eprintln!(
                "connection {}: {}",
                rec.connection,
                match t.outcome {
                    Some(Outcome::Abort) => "aborted",
                    Some(Outcome::Output(_)) => "completed",
                    None => "unfinished",
                }
            ),
            Err(e) => eprintln!("connection {}: {e}", rec.connection),
        }
    }
    handle.join().expect("server thread")?;
    Ok(EXIT_OUTPUT)
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub mode: &'static str,
    pub aborted: bool,
    pub output: Option<Vec<f64>>,
    pub field_output: Option<Vec<u64>>,
}

fn cmd_run(g: &GlobalOpts, a: &RunArgs) -> Result<i32> {
    let decomp = io::load_charlie(&a.charlie)?;
    let mode: Mode = a.mode.into();
    if mode == Mode::Malicious && g.check_count == 0 {
        return usage("malicious mode needs --check-count >= 1");
    }
    let x = read_input(g, &a.input, decomp.dims()[0])?;
    let cheat = a.cheat.as_deref().map(parse_cheat).transpose()?;
    if let Some(c) = &cheat {
        check_cheat_layer(c, decomp.num_layers())?;
    }
    let mut masks = precompute_one(&decomp, mode, g.check_count, g.seed, a.inference_id)?;
    let (outcome, transcript): (Outcome, Transcript) = match a.transport.as_str() {
        "inproc" => {
            let Some(path) = &a.david else {
                return usage("--david is required for the in-process transport");
            };
            let part = io::load_david(path)?;
            if part.dims != decomp.dims() || part.modulus != decomp.codec().field().modulus() {
                return usage("Charlie and David files do not belong to the same split");
            }
            let adversary = CheatingDavid::new(
                cheat.unwrap_or(CheatStrategy::HonestPlay),
                rng::substream(g.seed, rng::ADVERSARY, a.inference_id),
            );
            let res = run_session(&decomp, &part, mode, &x, &mut masks, adversary)?;
            (res.outcome, res.charlie)
        }
        t if t == "tcp" || t.starts_with("tcp:") => {
            if cheat.is_some() {
                return usage("--cheat applies to the in-process transport; pass it to serve-david instead");
            }
            let addr = t.strip_prefix("tcp:").map(str::to_string).unwrap_or_else(tcp::default_addr);
            tcp::run_remote(addr.as_str(), &decomp, mode, g.check_count, &x, &mut masks)?
        }
        other => return usage(format!("unknown transport `{other}`")),
    };
    if let Some(p) = &a.transcript {
        io::save_transcript(p, mode, &transcript)?;
    }
    let codec = decomp.codec();
    let report = RunReport {
        mode: mode.tag(),
        aborted: outcome.is_abort(),
        output: outcome.output().map(|v| decode_all(codec, v)),
        field_output: outcome.output().map(<[u64]>::to_vec),
    };
    emit(g, &report, || match &report.output {
        Some(v) => format!("output {}\n", fmt_vec(v)),
        None => "ABORT\n".to_string(),
    });
    Ok(if outcome.is_abort() { EXIT_ABORT } else { EXIT_OUTPUT })
}

#[derive(Debug, Serialize)]
pub struct RecoverReport {
    pub mode: &'static str,
    pub layer: u32,
    pub queries: usize,
    pub held_out: usize,
    pub solved: bool,
    pub exact_match: bool,
    pub held_out_residuals: usize,
    pub verdict: &'static str,
    pub error: Option<String>,
}

/// Query inputs on the fixed-point grid: integers `k / 2^f` with `|k| ≤ max(2^f, 8)`,
/// clipped to the value bound.
fn query_input(codec: &FixedPointCodec, seed: u64, j: u64, width: usize) -> Vec<f64> {
    let scale = codec.scale() as f64;
    let k = f64::min(f64::max(scale, 8.0), codec.value_bound() * scale) as i64;
    let mut r = rng::substream(seed, rng::INPUTS, j);
    (0..width).map(|_| r.random_range(-k..=k) as f64 / scale).collect()
}

/// Runs `queries + held_out` sessions and tries to solve for layer `layer`.
pub fn recover_experiment(
    model: &MlpModel,
    decomp: &Decomposition,
    mode: Mode,
    layer: u32,
    queries: usize,
    held_out: usize,
    seed: u64,
) -> Result<RecoverReport> {
    if layer == 0 || layer as usize > decomp.num_layers() {
        return usage(format!("layer {layer} is out of range 1..={}", decomp.num_layers()));
    }
    let codec = *decomp.codec();
    let quant = QuantizedModel::new(model, codec)?;
    let david = decomp.david_part();
    let width = decomp.dims()[0];
    let mut transcripts = Vec::with_capacity(queries + held_out);
    for j in 0..(queries + held_out) as u64 {
        let x = query_input(&codec, seed, j, width);
        let mut masks = precompute_one(decomp, mode, 1, seed, j)?;
        let res = run_session(decomp, &david, mode, &x, &mut masks, splitinfer_core::protocol::Honest)?;
        transcripts.push(res.david);
    }
    let pairs = collect_pairs(&transcripts, layer);
    let idx = layer as usize - 1;
    let field = *codec.field();
    let (fit, check) = pairs.split_at(queries.min(pairs.len()));
    let mut report = RecoverReport {
        mode: mode.tag(),
        layer,
        queries,
        held_out,
        solved: false,
        exact_match: false,
        held_out_residuals: 0,
        verdict: "NO MATCH",
        error: None,
    };
    match solve_layer(&field, fit, &david.weights[idx], codec.frac_bits()) {
        Ok(rec) => {
            report.solved = true;
            report.exact_match = rec.weights == quant.weights()[idx];
            report.held_out_residuals = count_residuals(&field, &rec.weights, check, codec.frac_bits());
            if report.exact_match {
                report.verdict = "EXACT MATCH";
            }
        }
        Err(e @ AttackError::Singular { .. }) => report.error = Some(e.to_string()),
        Err(e) => return Err(e.into()),
    }
    Ok(report)
}

fn cmd_recover(g: &GlobalOpts, a: &RecoverArgs) -> Result<i32> {
    let model = io::load_model(&a.model, MODEL_WEIGHT_BOUND)?;
    let ranks = broadcast_ranks(&a.ranks, model.num_layers())?;
    let decomp = decompose(&model, &ranks, codec_for(g, &model)?)?;
    let layer = a.layer;
    if layer == 0 || layer as usize > model.num_layers() {
        return usage(format!("--layer must be in 1..={}", model.num_layers()));
    }
    let queries = a.queries.unwrap_or(model.dims()[layer as usize - 1]);
    let r = recover_experiment(&model, &decomp, a.mode.into(), layer, queries, a.held_out, g.seed)?;
    emit(g, &r, || {
        let mut s = format!(
            "mode {} layer {}: {} queries, {} held out\n",
            r.mode, r.layer, r.queries, r.held_out
        );
        if let Some(e) = &r.error {
            s += &format!("solver: {e}\n");
        } else {
            s += &format!("held-out residuals {}/{}\n", r.held_out_residuals, r.held_out);
        }
        s += r.verdict;
        s.push('\n');
        s
    });
    Ok(EXIT_OUTPUT)
}

#[derive(Debug, Serialize)]
pub struct SoundnessReport {
    pub modulus: u64,
    pub check_count: usize,
    pub strategy: String,
    pub predicted_accept_rate: f64,
    #[serde(flatten)]
    pub detection: DetectionJson,
}

fn cmd_soundness(g: &GlobalOpts, a: &SoundnessArgs) -> Result<i32> {
    let decomp = io::load_charlie(&a.charlie)?;
    let part = io::load_david(&a.david)?;
    if g.check_count == 0 {
        return usage("--check-count must be at least 1");
    }
    let layers = decomp.num_layers();
    let spec = a.cheat.clone().unwrap_or_else(|| format!("random:{layers}"));
    let strategy = parse_cheat(&spec)?;
    check_cheat_layer(&strategy, layers)?;
    let x = read_input(g, &a.input, decomp.dims()[0])?;
    let codec = *decomp.codec();
    let quant = QuantizedModel::from_field_weights(codec, decomp.recombined(), decomp.activations().to_vec())?;
    let expected = oracle_output(&quant, &x)?;
    let args = SessionArgs {
        decomp: &decomp,
        david: &part,
        mode: Mode::Malicious,
        check_count: g.check_count,
        input: &x,
        expected: &expected,
        seed: g.seed,
    };
    let report = estimate_detection_parallel(&args, &strategy, a.trials)?;
    let p = codec.field().modulus() as f64;
    let r = SoundnessReport {
        modulus: codec.field().modulus(),
        check_count: g.check_count,
        strategy: spec,
        predicted_accept_rate: p.powi(-(g.check_count as i32)),
        detection: DetectionJson::from(&report),
    };
    emit(g, &r, || {
        let d = &r.detection;
        format!(
            "p={} k={} cheat={} trials={}\n\
             {:<14} {:>10} {:>12} {:>26}\n\
             {:<14} {:>10} {:>12.6} [{:.6}, {:.6}]\n\
             {:<14} {:>10} {:>12.6} [{:.6}, {:.6}]\n\
             predicted accept rate 1/p^k = {:.6e}\n",
            r.modulus,
            r.check_count,
            r.strategy,
            d.trials,
            "outcome",
            "count",
            "rate",
            "wilson 95%",
            "aborted",
            d.aborted,
            d.abort_rate,
            d.abort_ci.0,
            d.abort_ci.1,
            "accept-wrong",
            d.accepted_wrong,
            d.accept_wrong_rate,
            d.accept_wrong_ci.0,
            d.accept_wrong_ci.1,
            r.predicted_accept_rate
        )
    });
    Ok(EXIT_OUTPUT)
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub dims: Vec<usize>,
    pub svd_ranks: Vec<usize>,
    pub check_count: usize,
    pub charlie_macs: u64,
    pub full_macs: u64,
    pub analytic_ratio: f64,
    pub epsilon: f64,
    pub pass: bool,
    pub iterations: u32,
    pub precompute_secs: f64,
    pub charlie_online_secs: f64,
    pub full_local_secs: f64,
    pub measured_ratio: f64,
}

impl BenchReport {
    pub fn render(&self) -> String {
        format!(
            "dims {:?} svd_ranks {:?} check_count {}\n\
             analytic ratio {:.6} ({} / {} MACs)\n\
             epsilon {} {}\n\
             precompute {:.6}s per inference\n\
             charlie online {:.6}s per inference\n\
             full local {:.6}s per inference\n\
             measured ratio {:.6}\n",
            self.dims,
            self.svd_ranks,
            self.check_count,
            self.analytic_ratio,
            self.charlie_macs,
            self.full_macs,
            self.epsilon,
            if self.pass { "PASS" } else { "FAIL" },
            self.precompute_secs,
            self.charlie_online_secs,
            self.full_local_secs,
            self.measured_ratio
        )
    }
}

/// Analytic cost plus timings of Charlie's online kernel (factored
/// low-rank product, masking, unmasking and checks) against dense local
/// inference. David's replies are computed outside the timed region.
pub fn bench(decomp: &Decomposition, check_count: usize, iterations: u32, epsilon: f64, seed: u64) -> Result<BenchReport> {
    let codec = *decomp.codec();
    let field = *codec.field();
    let dims = decomp.dims();
    let ranks = decomp.svd_ranks();
    let cost = charlie_cost_ratio(&ranks, &dims, check_count);
    let mode = if check_count > 0 { Mode::Malicious } else { Mode::Honest };
    let recombined = decomp.recombined();
    let iterations = iterations.max(1);

    let mut precompute_secs = 0.0;
    let mut charlie_secs = 0.0;
    let mut full_secs = 0.0;
    for it in 0..iterations as u64 {
        let x = query_input(&codec, seed, it, dims[0]);
        let input: Vec<u64> = x.iter().map(|&v| codec.encode(v)).collect::<Result<_, _>>()?;

        let t = Instant::now();
        let mut masks = precompute_one(decomp, mode, check_count, seed, it)?;
        precompute_secs += t.elapsed().as_secs_f64();
        let material = masks.take()?;

        let t = Instant::now();
        let mut a = input.clone();
        for (w, act) in recombined.iter().zip(decomp.activations()) {
            let y = w.matvec(&field, &a)?;
            a = y.into_iter().map(|e| act.apply_field(&field, codec.rescale(e))).collect();
        }
        full_secs += t.elapsed().as_secs_f64();

        let mut a = input;
        for (i, split) in decomp.layers().iter().enumerate() {
            let m = &material.layers[i];
            let sent = match &m.pad {
                Some(r) => vec_add(&field, &a, r),
                None => a.clone(),
            };
            let reply = split.david_field.matvec(&field, &sent)?;
            let t = Instant::now();
            let local = split.low_rank.apply_field(&codec, &a)?;
            let sent_again = match &m.pad {
                Some(r) => vec_add(&field, &a, r),
                None => a.clone(),
            };
            if let Some(chk) = &m.check {
                if !freivalds_check(&field, &chk.z, &chk.v, &sent_again, &reply)? {
                    bail!("benchmark check failed at layer {}", i + 1);
                }
            }
            let david = match &m.cancel {
                Some(c) => vec_sub(&field, &reply, c),
                None => reply,
            };
            let act = decomp.activations()[i];
            a = local
                .iter()
                .zip(&david)
                .map(|(&c, &d)| act.apply_field(&field, codec.rescale(field.add(c, d))))
                .collect();
            charlie_secs += t.elapsed().as_secs_f64();
        }
    }
    let n = iterations as f64;
    let ratio = cost.ratio();
    Ok(BenchReport {
        dims,
        svd_ranks: ranks,
        check_count,
        charlie_macs: cost.charlie_macs,
        full_macs: cost.full_macs,
        analytic_ratio: ratio,
        epsilon,
        pass: ratio < epsilon,
        iterations,
        precompute_secs: precompute_secs / n,
        charlie_online_secs: charlie_secs / n,
        full_local_secs: full_secs / n,
        measured_ratio: if full_secs > 0.0 { charlie_secs / full_secs } else { f64::NAN },
    })
}

fn cmd_bench(g: &GlobalOpts, a: &BenchArgs) -> Result<i32> {
    let decomp = io::load_charlie(&a.charlie)?;
    let r = bench(&decomp, g.check_count, a.iterations, a.epsilon, g.seed)?;
    emit(g, &r, || r.render());
    Ok(EXIT_OUTPUT)
}

#[derive(Debug, Serialize)]
pub struct ViewsCliReport {
    pub sessions: u64,
    pub mode: &'static str,
    #[serde(flatten)]
    pub views: ViewsReport,
    pub insecure: UniformityReport,
}

fn cmd_views(g: &GlobalOpts, a: &ViewsArgs) -> Result<i32> {
    let decomp = io::load_charlie(&a.charlie)?;
    let part = io::load_david(&a.david)?;
    if decomp.num_layers() < 2 {
        return usage("view statistics need at least two layers");
    }
    if part.modulus > splitinfer_core::adversary::MAX_HIST_MODULUS {
        return usage("view statistics need a small prime (use --prime at decompose time)");
    }
    let x = read_input(g, &a.input, decomp.dims()[0])?;
    let mode: Mode = a.mode.into();
    let quant = QuantizedModel::from_field_weights(*decomp.codec(), decomp.recombined(), decomp.activations().to_vec())?;
    let input = quant.encode_input(&x)?;
    let output = oracle_output(&quant, &x)?;
    let real = real_view_histograms(&decomp, &part, mode, &x, a.sessions, g.seed)?;
    let sim = simulated_view_histograms(&input, &output, &part, a.sessions, g.seed)?;
    let null = simulated_view_histograms(&input, &output, &part, a.sessions, g.seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let insecure = real_view_histograms(&decomp, &part, Mode::Insecure, &x, a.sessions, g.seed)?;
    let r = ViewsCliReport {
        sessions: a.sessions,
        mode: mode.tag(),
        views: distinguish_views(&real, &sim, &null, a.alpha)?,
        insecure: uniformity(&insecure, a.alpha)?,
    };
    emit(g, &r, || {
        let v = &r.views;
        format!(
            "{} sessions, p={}, {} masked coordinates\n\
             {} views: pooled chi-square p={:.4} ({})\n\
             simulated views: pooled chi-square p={:.4} ({})\n\
             insecure views: pooled chi-square p={:.4e} ({})\n\
             TV real vs simulated {:.5}, simulated vs simulated {:.5}, noise bound {:.5} ({})\n",
            r.sessions,
            v.real.modulus,
            v.real.coordinates,
            r.mode,
            v.real.pooled_p_value,
            verdict(&v.real),
            v.simulated.pooled_p_value,
            verdict(&v.simulated),
            r.insecure.pooled_p_value,
            verdict(&r.insecure),
            v.tv_real_vs_simulated_mean,
            v.tv_null_mean,
            v.tv_noise_bound,
            if v.within_band { "within band" } else { "outside band" }
        )
    });
    Ok(EXIT_OUTPUT)
}

fn verdict(u: &UniformityReport) -> &'static str {
    if u.rejects_uniformity {
        "rejects uniformity"
    } else {
        "uniform"
    }
}
