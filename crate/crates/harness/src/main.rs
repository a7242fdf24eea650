use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use transduce_core::decoders::DecodeConfig;
use transduce_core::lm::NGramLM;
use transduce_core::network::{Model, ModelKind, Optimizer, TrainConfig, Utterance};
use transduce_core::{Error, Result};
use transduce_harness::ablation::{load_models, run_decoder_ablation};
use transduce_harness::align::export_alignment;
use transduce_harness::data::{generate_dataset, read_dataset, write_dataset, Dataset};
use transduce_harness::decode::{best, decode_set, encode, search, DecodeMode, Decoded};
use transduce_harness::experiment::{train_model, ExperimentConfig};
use transduce_harness::metrics::{wer_breakdown, MetricsReport};
use transduce_harness::report::{fmt_f, Table};
use transduce_harness::sweep::{run_downsample_sweep, run_forward_only};

#[derive(Parser)]
#[command(name = "transduce", about = "Train, decode and compare CTC, RNN-T and attention transducers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args, Clone, Default)]
struct TrainFlags {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    anneal: Option<f64>,
    /// sgd or adam.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    weight_noise: Option<f64>,
    #[arg(long)]
    stop_below: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, c: &mut TrainConfig) -> Result<()> {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(lr, clip_norm, epochs, batch, anneal, weight_noise, stop_below);
        if let Some(o) = &self.optimizer {
            c.optimizer = match o.as_str() {
                "sgd" => Optimizer::Sgd,
                "adam" => Optimizer::Adam,
                other => return Err(Error::Config(format!("unknown optimizer {other:?}"))),
            };
        }
        c.validate()
    }
}

#[derive(Args, Clone, Default)]
struct DecodeFlags {
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    lm_weight: Option<f64>,
    #[arg(long)]
    word_bonus: Option<f64>,
    #[arg(long)]
    length_norm: Option<f64>,
    #[arg(long)]
    coverage_weight: Option<f64>,
    #[arg(long)]
    rescore_weight: Option<f64>,
    #[arg(long)]
    max_symbols_per_step: Option<usize>,
    #[arg(long)]
    max_output_len: Option<usize>,
}

impl DecodeFlags {
    fn config(&self) -> DecodeConfig {
        let mut c = DecodeConfig::default();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(beam_width, lm_weight, word_bonus, length_norm, coverage_weight, rescore_weight, max_symbols_per_step, max_output_len);
        c
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Split {
    Train,
    Dev,
    Test,
}

fn split(data: &Dataset, s: Split) -> &[Utterance] {
    match s {
        Split::Train => &data.train,
        Split::Dev => &data.dev,
        Split::Test => &data.test,
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Greedy,
    Beam,
    BeamLm,
}

impl From<Mode> for DecodeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Greedy => DecodeMode::Greedy,
            Mode::Beam => DecodeMode::Beam,
            Mode::BeamLm => DecodeMode::BeamLm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/dev/test sets and the LM text corpus.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the character n-gram LM on a dataset's text corpus.
    TrainLm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        k: Option<f64>,
    },
    /// Train one model kind; writes `<kind>.model` and a per-epoch CSV.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: ModelKind,
        #[arg(long)]
        data_dir: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Decode a split to JSON lines.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        set: Split,
        #[arg(long, value_enum, default_value = "beam")]
        mode: Mode,
        #[arg(long)]
        lm: Option<PathBuf>,
        /// Also log greedy/beam/rescored outputs for empty-reference utterances.
        #[arg(long)]
        dump_noise: bool,
        #[command(flatten)]
        decode: DecodeFlags,
    },
    /// Score a JSON-lines decode file.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        decodes: PathBuf,
    },
    /// Greedy / beam / beam+LM ablation over trained models.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_dir: PathBuf,
        /// Directory holding `ctc.model`, `rnnt.model` and `attention.model`.
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        beam_width: Option<usize>,
    },
    /// Train and score at several encoder downsampling factors.
    SweepDownsample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Bidirectional against forward-only encoders at matched parameter count.
    ForwardOnly {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Export alignment heatmaps for one utterance.
    Align {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        set: Split,
        /// Utterance id; defaults to the first one with a nonempty reference.
        #[arg(long)]
        utterance: Option<String>,
    },
}

fn metrics_table(m: &MetricsReport) -> Table {
    let mut t = Table::new(&["utterances", "ref_words", "wer", "subs", "ins", "dels", "cer", "seed"]);
    t.push(vec![
        m.utterances.to_string(),
        m.words.ref_len.to_string(),
        fmt_f(m.wer),
        fmt_f(m.subs),
        fmt_f(m.ins),
        fmt_f(m.dels),
        fmt_f(m.cer),
        m.seed.map_or_else(String::new, |s| s.to_string()),
    ]);
    t
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for it in items {
        let line = serde_json::to_string(it).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

fn read_decodes(path: &Path) -> Result<Vec<Decoded>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

#[derive(Serialize)]
struct NoiseTriple {
    id: String,
    greedy: String,
    beam: String,
    rescored: String,
}

fn noise_triples(model: &Model, utts: &[Utterance], cfg: &DecodeConfig, lm: Option<&NGramLM>) -> Result<Vec<NoiseTriple>> {
    let alphabet = &model.spec().alphabet;
    utts.iter()
        .filter(|u| u.reference.is_empty())
        .map(|u| {
            let enc = encode(model, &u.frames).map_err(|e| e.for_utterance(&u.id))?;
            let run = |mode: DecodeMode| -> Result<String> {
                Ok(best(model, search(model, &enc, mode, cfg, lm)?, mode, cfg, lm).text(alphabet))
            };
            Ok(NoiseTriple {
                id: u.id.clone(),
                greedy: run(DecodeMode::Greedy)?,
                beam: run(DecodeMode::Beam)?,
                rescored: if lm.is_some() { run(DecodeMode::BeamLm)? } else { String::new() },
            })
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => {
            let mut cfg = common.config()?;
            if let Some(s) = common.seed {
                cfg.data.seed = s;
            }
            let data = generate_dataset(&cfg.data)?;
            write_dataset(&common.out_dir, &data)?;
            eprintln!(
                "wrote {} train, {} dev, {} test utterances to {}",
                data.train.len(),
                data.dev.len(),
                data.test.len(),
                common.out_dir.display()
            );
        }
        Command::TrainLm { common, data_dir, order, k } => {
            let mut cfg = common.config()?;
            cfg.lm.order = order.unwrap_or(cfg.lm.order);
            cfg.lm.k = k.unwrap_or(cfg.lm.k);
            let data = read_dataset(&data_dir)?;
            let lm = cfg.train_lm(&data.lm_corpus)?;
            fs::create_dir_all(&common.out_dir)?;
            lm.save(&common.out_dir.join("lm.txt"))?;
        }
        Command::Train { common, kind, data_dir, train } => {
            let cfg = common.config()?;
            let mut tc = cfg.train.for_kind(kind).clone();
            train.apply(&mut tc)?;
            let data = read_dataset(&data_dir)?;
            let trained = train_model(cfg.model.spec(kind, &cfg.data), &data.train, &tc, cfg.seed)?;
            fs::create_dir_all(&common.out_dir)?;
            trained.model.save(&common.out_dir.join(format!("{kind}.model")))?;
            let mut t = Table::new(&["epoch", "lr", "loss", "per_symbol", "steps"]);
            for m in &trained.history {
                t.push(vec![m.epoch.to_string(), fmt_f(m.lr), fmt_f(m.loss), fmt_f(m.per_symbol), m.steps.to_string()]);
            }
            t.write(&common.out_dir, &format!("train_{kind}"))?;
            eprintln!(
                "{kind}: {} parameters, {} utterances dropped as infeasible",
                trained.model.parameter_count(),
                trained.dropped
            );
        }
        Command::Decode { common, model, data_dir, set, mode, lm, dump_noise, decode } => {
            let model = Model::load(&model)?;
            let data = read_dataset(&data_dir)?;
            let lm = lm.map(|p| NGramLM::load(&p)).transpose()?;
            let mode = DecodeMode::from(mode);
            if mode == DecodeMode::BeamLm && lm.is_none() {
                return Err(Error::Config("beam-lm decoding needs --lm".into()));
            }
            let cfg = decode.config();
            let utts = split(&data, set);
            let out = decode_set(&model, utts, mode, &cfg, lm.as_ref())?;
            fs::create_dir_all(&common.out_dir)?;
            write_jsonl(&common.out_dir.join("decodes.jsonl"), &out)?;
            if dump_noise {
                let triples = noise_triples(&model, utts, &cfg, lm.as_ref())?;
                write_jsonl(&common.out_dir.join("noise.jsonl"), &triples)?;
            }
        }
        Command::Score { common, decodes } => {
            let d = read_decodes(&decodes)?;
            let refs: Vec<&str> = d.iter().map(|x| x.reference.as_str()).collect();
            let hyps: Vec<&str> = d.iter().map(|x| x.hypothesis.as_str()).collect();
            let m = wer_breakdown(&refs, &hyps)?.with_echo(None, common.seed);
            let t = metrics_table(&m);
            t.write(&common.out_dir, "score")?;
            print!("{}", t.to_text());
        }
        Command::Ablate { common, data_dir, model_dir, lm, beam_width } => {
            let mut cfg = common.config()?;
            cfg.decode.beam_width = beam_width.unwrap_or(cfg.decode.beam_width);
            let data = read_dataset(&data_dir)?;
            let models = load_models(&model_dir, &ModelKind::ALL)?;
            let lm = NGramLM::load(&lm)?;
            let pairs: Vec<(ModelKind, &Model)> = models.iter().map(|m| (m.kind(), m)).collect();
            let report = run_decoder_ablation(&pairs, &lm, &data.dev, &data.test, &cfg.decode)?;
            let t = report.table();
            t.write(&common.out_dir, "ablation")?;
            print!("{}", t.to_text());
        }
        Command::SweepDownsample { common, data_dir } => {
            let cfg = common.config()?;
            let data = read_dataset(&data_dir)?;
            let report = run_downsample_sweep(&cfg, &data)?;
            report.table().write(&common.out_dir, "sweep")?;
            let s = report.summary();
            s.write(&common.out_dir, "sweep_summary")?;
            print!("{}", s.to_text());
        }
        Command::ForwardOnly { common, data_dir } => {
            let cfg = common.config()?;
            let data = read_dataset(&data_dir)?;
            let report = run_forward_only(&cfg, &data)?;
            let t = report.table();
            t.write(&common.out_dir, "forward_only")?;
            print!("{}", t.to_text());
        }
        Command::Align { common, model, data_dir, set, utterance } => {
            let model = Model::load(&model)?;
            let data = read_dataset(&data_dir)?;
            let utts = split(&data, set);
            let utt = match &utterance {
                Some(id) => utts.iter().find(|u| &u.id == id),
                None => utts.iter().find(|u| !u.reference.is_empty()),
            }
            .ok_or_else(|| Error::Config("no matching utterance".into()))?;
            let stem = format!("{}_{}", model.kind(), utt.id);
            let out = export_alignment(&model, utt, &common.out_dir, &stem)?;
            for h in &out.heatmaps {
                eprintln!("{}: {}x{} -> {}", h.name, h.matrix.rows(), h.matrix.cols(), h.pgm.display());
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Utterance { source, .. } => exit_code(source),
        Error::NonFinite(_) | Error::NonFiniteAt { .. } | Error::NonFiniteLoss(_) | Error::EmptyReduction => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
