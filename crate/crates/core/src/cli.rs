//! Command-line entry point. Every run writes `<out>.run.json` next to its
//! main output; `hotflip --config <file>` replays it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{edit_statistics, nearest_neighbors, success_vs_confidence, write_curve_csv, write_neighbors_csv, CurveMode, NeighborIndex};
use crate::attack::{attack_dataset, parse_kinds, write_attack_csv, AttackConfig, Method, VocabIndex};
use crate::corpus::{build_alphabet, build_word_vocab, dev_split, encode_examples, load_agnews, load_sst_binary, EncodeOptions, LabeledExample, LabeledText};
use crate::models::checkpoint::Checkpoint;
use crate::models::{train, CharItem, CharModel, CharModelConfig, EpochMetrics, NoAugment, TrainConfig, WordIndex, WordItem, WordModel, WordModelConfig};
use crate::robustness::{adversarial_train, robustness_report, write_robustness_csv, AdvMethod, AdvTrainConfig, Mixing};
use crate::wordattack::{load_embeddings, word_attack_dataset, write_word_attack_csv, PosLexicon, StopWords, WordAttackConfig, WordConstraintConfig, WordResources};
use crate::{synth, Error, Result};

pub const DATA_DIR_ENV: &str = "HOTFLIP_DATA_DIR";
const RUN_CONFIG_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "hotflip", version, about = "Gradient-guided adversarial edits against text classifiers", args_conflicts_with_subcommands = true)]
struct Cli {
    /// Replay a run from its saved `.run.json`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

/// A fully resolved run, as written beside its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Train a character or word classifier.
    Train(TrainArgs),
    /// Attack a character model on a labeled file.
    Attack(AttackArgs),
    /// Train a character model with adversarial augmentation.
    Advtrain(AdvTrainArgs),
    /// Clean error and attack success for several models.
    Report(ReportArgs),
    /// Attack success rate against the confidence threshold.
    Curve(CurveArgs),
    /// Constrained word substitutions against a word model.
    Wordattack(WordAttackArgs),
    /// Nearest vocabulary words in a character model's word space.
    Neighbors(NeighborArgs),
    /// Write synthetic news and sentiment data sets.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Char,
    Word,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Keep letter case when encoding.
    #[arg(long)]
    pub no_lowercase: bool,
    #[arg(long, default_value_t = 40)]
    pub max_words: usize,
    #[arg(long, default_value_t = 16)]
    pub max_chars: usize,
    #[arg(long, default_value_t = 16)]
    pub char_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub kernel_width: usize,
    #[arg(long, default_value_t = 64)]
    pub kernels: usize,
    #[arg(long, default_value_t = 1)]
    pub highway_layers: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1)]
    pub lstm_layers: usize,
    /// Word model: embedding size.
    #[arg(long, default_value_t = 50)]
    pub word_dim: usize,
    /// Word model: convolution widths.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    pub widths: Vec<usize>,
    /// Word model: kernels per width.
    #[arg(long, default_value_t = 25)]
    pub word_kernels: usize,
    /// Word model: pretrained vectors for initialization.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "char")]
    pub arch: Arch,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    /// Early stopping after this many epochs without dev improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
    /// Use only the first N examples of the file.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackFlags {
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    #[arg(long, default_value_t = 0.10)]
    pub budget: f64,
    #[arg(long, default_value = "flip,insert,delete")]
    pub ops: String,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Allow edits that produce training-vocabulary words.
    #[arg(long)]
    pub no_vocab_constraint: bool,
    #[arg(long, default_value_t = 20)]
    pub keystar_queries: usize,
    #[arg(long)]
    pub max_edits: Option<usize>,
    /// Test for success only once the budget is spent.
    #[arg(long)]
    pub final_check_only: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl AttackFlags {
    fn config(&self) -> Result<AttackConfig> {
        let config = AttackConfig {
            beam_width: self.beam,
            budget: self.budget,
            kinds: parse_kinds(&self.ops)?,
            tau: self.tau,
            vocab_constraint: !self.no_vocab_constraint,
            seed: self.seed,
            keystar_queries: self.keystar_queries,
            max_edits: self.max_edits,
            check_every_step: !self.final_check_only,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Beam,
    Greedy,
    Keystar,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Beam => Method::Beam,
            MethodArg::Greedy => Method::Greedy,
            MethodArg::Keystar => Method::KeyStar,
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "beam")]
    pub method: MethodArg,
    #[command(flatten)]
    pub attack: AttackFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvMethodArg {
    HotflipWhite,
    KeystarBlack,
    EmbedNoise,
    None,
}

impl From<AdvMethodArg> for AdvMethod {
    fn from(m: AdvMethodArg) -> Self {
        match m {
            AdvMethodArg::HotflipWhite => AdvMethod::HotflipWhite,
            AdvMethodArg::KeystarBlack => AdvMethod::KeystarBlack,
            AdvMethodArg::EmbedNoise => AdvMethod::EmbedNoise,
            AdvMethodArg::None => AdvMethod::None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixingArg {
    Concat,
    Alternate,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_enum, default_value = "hotflip-white")]
    pub method: AdvMethodArg,
    #[arg(long, default_value_t = 0.20)]
    pub r_frac: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_scale: f64,
    #[arg(long, value_enum, default_value = "concat")]
    pub mixing: MixingArg,
    #[arg(long)]
    pub no_vocab_constraint: bool,
    #[arg(long, default_value_t = 5)]
    pub keystar_queries: usize,
    /// Fine-tune this checkpoint instead of starting from scratch.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportArgs {
    /// `name=checkpoint`, repeatable.
    #[arg(long = "model", required = true)]
    pub models: Vec<String>,
    #[arg(long)]
    pub data: PathBuf,
    /// Attack with the configured edit kinds instead of flips only.
    #[arg(long)]
    pub full_ops: bool,
    #[command(flatten)]
    pub attack: AttackFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveModeArg {
    Reattack,
    Rethreshold,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "beam")]
    pub method: MethodArg,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9")]
    pub taus: Vec<f64>,
    #[arg(long, value_enum, default_value = "reattack")]
    pub mode: CurveModeArg,
    #[command(flatten)]
    pub attack: AttackFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordAttackArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Pretrained vectors for the similarity constraint.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// `word<TAB>tag` part-of-speech lexicon.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Stop-word list, one per line; the built-in English list otherwise.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    #[arg(long, default_value_t = 2)]
    pub max_flips: usize,
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    /// Measure similarity with the classifier's own embeddings.
    #[arg(long)]
    pub model_embeddings: bool,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "word", value_delimiter = ',', required = true)]
    pub words: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub news_train: usize,
    #[arg(long, default_value_t = 2_000)]
    pub news_test: usize,
    #[arg(long, default_value_t = 4_000)]
    pub sst_train: usize,
    #[arg(long, default_value_t = 1_000)]
    pub sst_test: usize,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// 0 success, 2 bad input, 3 failure while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Encode { .. } | Error::Degenerate(_) | Error::Contract(_) | Error::Checkpoint(_) | Error::Io { .. } | Error::Json(_) => 2,
        Error::Exhausted | Error::Diverged { .. } | Error::Diff(_) | Error::Output(_) => 3,
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let result = match (cli.config, cli.command) {
        (Some(path), _) => load_run_config(&path).and_then(|rc| run(rc.command)),
        (None, Some(command)) => run(resolve(command)),
        (None, None) => {
            eprintln!("error: a subcommand or --config is required (see --help)");
            return 2;
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rc: RunConfig = serde_json::from_str(&text)?;
    if rc.version != RUN_CONFIG_VERSION {
        return Err(Error::Contract(format!("run config version {} is not {RUN_CONFIG_VERSION}", rc.version)));
    }
    Ok(rc)
}

/// Relative data paths are taken from `HOTFLIP_DATA_DIR` when it is set.
fn data_path(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Fixes environment-dependent inputs so the saved config replays exactly.
fn resolve(command: Command) -> Command {
    match command {
        Command::Train(mut a) => {
            a.data = data_path(&a.data);
            Command::Train(a)
        }
        Command::Advtrain(mut a) => {
            a.train.data = data_path(&a.train.data);
            Command::Advtrain(a)
        }
        Command::Attack(mut a) => {
            a.data = data_path(&a.data);
            Command::Attack(a)
        }
        Command::Report(mut a) => {
            a.data = data_path(&a.data);
            Command::Report(a)
        }
        Command::Curve(mut a) => {
            a.data = data_path(&a.data);
            Command::Curve(a)
        }
        Command::Wordattack(mut a) => {
            a.data = data_path(&a.data);
            Command::Wordattack(a)
        }
        other => other,
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn run(command: Command) -> Result<()> {
    let out = match &command {
        Command::Train(a) => a.out.clone(),
        Command::Advtrain(a) => a.train.out.clone(),
        Command::Attack(a) => a.out.clone(),
        Command::Report(a) => a.out.clone(),
        Command::Curve(a) => a.out.clone(),
        Command::Wordattack(a) => a.out.clone(),
        Command::Neighbors(a) => a.out.clone(),
        Command::Synth(a) => a.out_dir.join("synth"),
    };
    match &command {
        Command::Train(a) => cmd_train(a)?,
        Command::Advtrain(a) => cmd_advtrain(a)?,
        Command::Attack(a) => cmd_attack(a)?,
        Command::Report(a) => cmd_report(a)?,
        Command::Curve(a) => cmd_curve(a)?,
        Command::Wordattack(a) => cmd_wordattack(a)?,
        Command::Neighbors(a) => cmd_neighbors(a)?,
        Command::Synth(a) => cmd_synth(a)?,
    }
    write_json(&sibling(&out, ".run.json"), &RunConfig { version: RUN_CONFIG_VERSION, command })
}

fn limited<T>(mut items: Vec<T>, limit: Option<usize>) -> Vec<T> {
    if let Some(n) = limit {
        items.truncate(n);
    }
    items
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig { batch_size: a.batch_size, learning_rate: a.lr, clip: a.clip, max_epochs: a.epochs, patience: a.patience, seed: a.seed }
}

fn write_metrics(out: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        train_loss: f64,
        dev_acc: f64,
    }
    let path = sibling(out, ".metrics.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    for m in metrics {
        w.serialize(Row { epoch: m.epoch, train_loss: m.train_loss, dev_acc: m.dev_accuracy })?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

fn encode_options(m: &ModelArgs) -> EncodeOptions {
    EncodeOptions { max_words: m.max_words, max_chars: m.max_chars, lowercase: !m.no_lowercase }
}

/// Fresh or checkpoint-initialized character model plus encoded data.
fn char_setup(a: &TrainArgs, init: Option<&Path>) -> Result<(CharModel, Vec<LabeledExample>)> {
    let texts = limited(load_agnews(&a.data, false)?, a.limit);
    let model = match init {
        Some(path) => Checkpoint::load(path)?.into_char()?,
        None => {
            let opts = encode_options(&a.model);
            let alphabet = build_alphabet(texts.iter().map(|t| t.text.as_str()), &opts)?;
            let vocab = build_word_vocab(texts.iter().map(|t| t.text.as_str()), &opts)?;
            let m = &a.model;
            let config = CharModelConfig {
                encode: opts,
                char_dim: m.char_dim,
                kernel_width: m.kernel_width,
                kernels: m.kernels,
                highway_layers: m.highway_layers,
                hidden: m.hidden,
                lstm_layers: m.lstm_layers,
                classes: 4,
            };
            CharModel::new(config, alphabet, vocab, a.seed)?
        }
    };
    let examples = encode_examples(&texts, &model.alphabet, &model.config.encode)?;
    Ok((model, examples))
}

fn train_char(a: &TrainArgs, adv: &AdvTrainConfig, init: Option<&Path>) -> Result<()> {
    let (model, examples) = char_setup(a, init)?;
    let items: Vec<CharItem> = examples.iter().map(CharItem::from).collect();
    let (train_items, dev_items) = dev_split(&items, a.dev_fraction, a.seed)?;
    let vocab = VocabIndex::new(&model.vocab, &model.alphabet);
    let outcome = adversarial_train(model, &train_items, &dev_items, &train_config(a), adv, &vocab)?;
    Checkpoint::Char(outcome.model).save(&a.out)?;
    write_metrics(&a.out, &outcome.metrics)
}

fn train_word(a: &TrainArgs) -> Result<()> {
    let texts = limited(load_sst_binary(&a.data, !a.model.no_lowercase)?.examples, a.limit);
    let (train_texts, dev_texts) = dev_split(&texts, a.dev_fraction, a.seed)?;
    let index = WordIndex::new(train_texts.iter().flat_map(|t| t.tokens()).map(str::to_string));
    let pretrained = a.model.embeddings.as_deref().map(load_embeddings).transpose()?;
    let config = WordModelConfig { dim: a.model.word_dim, widths: a.model.widths.clone(), kernels: a.model.word_kernels, classes: 2 };
    let model = WordModel::new(config, index, pretrained.as_ref().map(|e| &e.table), a.seed)?;
    let items = |texts: &[LabeledText]| -> Vec<WordItem> { texts.iter().map(|t| WordItem { ids: model.encode(&t.tokens()), label: t.label }).collect() };
    let (train_items, dev_items) = (items(&train_texts), items(&dev_texts));
    let outcome = train(model.clone(), &train_items, &dev_items, 2, &train_config(a), &mut NoAugment)?;
    Checkpoint::Word(outcome.model).save(&a.out)?;
    write_metrics(&a.out, &outcome.metrics)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    match a.arch {
        Arch::Char => train_char(a, &AdvTrainConfig { method: AdvMethod::None, ..AdvTrainConfig::default() }, None),
        Arch::Word => train_word(a),
    }
}

fn cmd_advtrain(a: &AdvTrainArgs) -> Result<()> {
    if a.train.arch != Arch::Char {
        return Err(Error::Contract("adversarial training needs --arch char".into()));
    }
    let adv = AdvTrainConfig {
        method: a.method.into(),
        r_train: a.r_frac,
        noise_scale: a.noise_scale,
        mixing: match a.mixing {
            MixingArg::Concat => Mixing::Concat,
            MixingArg::Alternate => Mixing::Alternate,
        },
        vocab_constraint: !a.no_vocab_constraint,
        keystar_queries: a.keystar_queries,
    };
    train_char(&a.train, &adv, a.init.as_deref())
}

fn load_char(path: &Path) -> Result<CharModel> {
    Checkpoint::load(path)?.into_char()
}

fn test_examples(model: &CharModel, data: &Path, limit: Option<usize>) -> Result<Vec<LabeledExample>> {
    let texts = limited(load_agnews(data, false)?, limit);
    encode_examples(&texts, &model.alphabet, &model.config.encode)
}

fn cmd_attack(a: &AttackArgs) -> Result<()> {
    let config = a.attack.config()?;
    let model = load_char(&a.model)?;
    let examples = test_examples(&model, &a.data, a.attack.limit)?;
    let vocab = VocabIndex::new(&model.vocab, &model.alphabet);
    let report = attack_dataset(&model, &examples, &vocab, a.method.into(), &config, a.attack.jobs)?;
    let mut w = create(&a.out)?;
    write_attack_csv(&mut w, &report.records)?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        #[serde(flatten)]
        summary: &'a crate::attack::AttackSummary,
        edit_statistics: crate::analysis::EditStatistics,
    }
    let summary = Summary { summary: &report.summary, edit_statistics: edit_statistics(&report.records) };
    println!("{}", serde_json::to_string(&summary)?);
    write_json(&sibling(&a.out, ".summary.json"), &summary)
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let config = a.attack.config()?;
    let mut loaded = Vec::new();
    for spec in &a.models {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Contract(format!("--model expects name=checkpoint, got {spec:?}")))?;
        loaded.push((name.to_string(), load_char(Path::new(path))?));
    }
    let first = &loaded.first().expect("clap requires one model").1;
    let texts = limited(load_agnews(&a.data, false)?, a.attack.limit);
    for (name, m) in &loaded {
        if m.alphabet != first.alphabet || m.config.encode != first.config.encode {
            return Err(Error::Contract(format!("model {name:?} encodes text differently from the first model")));
        }
    }
    let examples = encode_examples(&texts, &first.alphabet, &first.config.encode)?;
    let models: Vec<(String, &CharModel)> = loaded.iter().map(|(n, m)| (n.clone(), m)).collect();
    let rows = robustness_report(&models, &examples, &config, a.full_ops, a.attack.jobs)?;
    let mut w = create(&a.out)?;
    write_robustness_csv(&mut w, &rows)?;
    w.flush().map_err(|e| Error::io(&a.out, e))
}

fn cmd_curve(a: &CurveArgs) -> Result<()> {
    let config = a.attack.config()?;
    let model = load_char(&a.model)?;
    let examples = test_examples(&model, &a.data, a.attack.limit)?;
    let vocab = VocabIndex::new(&model.vocab, &model.alphabet);
    let mode = match a.mode {
        CurveModeArg::Reattack => CurveMode::Reattack,
        CurveModeArg::Rethreshold => CurveMode::Rethreshold,
    };
    let curve = success_vs_confidence(&model, &examples, &vocab, a.method.into(), &config, &a.taus, mode, a.attack.jobs)?;
    for (lo, hi) in &curve.violations {
        eprintln!("warning: success rate rises from tau {lo} to tau {hi}");
    }
    let mut w = create(&a.out)?;
    write_curve_csv(&mut w, &curve)?;
    w.flush().map_err(|e| Error::io(&a.out, e))
}

fn cmd_wordattack(a: &WordAttackArgs) -> Result<()> {
    let model = Checkpoint::load(&a.model)?.into_word()?;
    let texts = limited(load_sst_binary(&a.data, true)?.examples, a.limit);
    let examples: Vec<(Vec<usize>, usize)> = texts.iter().map(|t| (model.encode(&t.tokens()), t.label)).collect();
    let res = WordResources {
        embeddings: load_embeddings(&a.embeddings)?,
        pos: PosLexicon::load(&a.lexicon)?,
        stopwords: match &a.stopwords {
            Some(p) => StopWords::load(p)?,
            None => StopWords::default(),
        },
    };
    let config = WordAttackConfig {
        beam_width: a.beam,
        max_flips: a.max_flips,
        constraints: WordConstraintConfig { threshold: a.threshold, model_embeddings: a.model_embeddings, ..WordConstraintConfig::default() },
    };
    let (records, summary) = word_attack_dataset(&model, &examples, &res, &config)?;
    let mut w = create(&a.out)?;
    write_word_attack_csv(&mut w, &records)?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    println!("{}", serde_json::to_string(&summary)?);
    write_json(&sibling(&a.out, ".summary.json"), &summary)
}

fn cmd_neighbors(a: &NeighborArgs) -> Result<()> {
    let model = load_char(&a.model)?;
    let index = NeighborIndex::load_or_build(&model, &a.model)?;
    let reports = a
        .words
        .iter()
        .map(|w| nearest_neighbors(&model, &index, &w.to_lowercase(), a.k))
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(&a.out)?;
    write_neighbors_csv(&mut w, &reports)?;
    w.flush().map_err(|e| Error::io(&a.out, e))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let news = synth::news_corpus(a.news_train + a.news_test, a.seed);
    let (train_news, test_news) = news.split_at(a.news_train);
    synth::write_agnews_csv(&a.out_dir.join("news_train.csv"), train_news)?;
    synth::write_agnews_csv(&a.out_dir.join("news_test.csv"), test_news)?;
    let sst = synth::sentiment_corpus(a.sst_train + a.sst_test, a.seed);
    let (train_sst, test_sst) = sst.split_at(a.sst_train);
    synth::write_sst(&a.out_dir.join("sst_train.tsv"), train_sst)?;
    synth::write_sst(&a.out_dir.join("sst_test.tsv"), test_sst)?;
    synth::write_embeddings(&a.out_dir.join("embeddings.txt"), &synth::sentiment_embeddings(a.dim, a.seed))?;
    synth::write_lexicon(&a.out_dir.join("pos.tsv"), &synth::sentiment_lexicon())
}
