use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use friend_audit_core::evaluation::{chi_square_2x2, pearson_correlation};
use friend_audit_core::features::{compute_features, load_snapshot, SocialSnapshot};
use friend_audit_core::learning::{
    balance_dataset, build_dataset, cross_validate, ModelBundle, PairLabel, TargetName,
};
use friend_audit_core::quality::{screen_participants, ParticipantRecord};
use friend_audit_core::rules::{validate_rule_table, RuleTable};
use friend_audit_core::session::{parse_log, AuditSession, Mode, SessionRequest, Status};
use friend_audit_core::synth::{generate_participants, generate_population};
use friend_audit_core::ChiSquare;

use crate::config::{AlgoChoice, Config};
use crate::service::{ScriptStep, Service};

#[derive(Debug, Parser)]
#[command(name = "friend-audit", version, about = "Audit a user's friends for abuse and suggest defenses")]
pub struct Cli {
    /// TOML settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic population and optional screening participants.
    Gen(GenArgs),
    /// Run one audit session from a script (questionnaire) or from models (wild).
    Audit(AuditArgs),
    /// Train one model per target and write them as a bundle.
    Train(TrainArgs),
    /// Cross-validate a learner and print the report.
    Evaluate(EvaluateArgs),
    /// Screen participant records and print the report.
    Screen(ScreenArgs),
    /// Statistics helpers.
    Stats {
        #[command(subcommand)]
        stat: StatsCommand,
    },
    /// Check a rule table for totality and unreachable rules.
    ValidateRules(ValidateArgs),
    /// Serve the audit protocol over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: u64,
    /// Output directory for snapshot.jsonl, truth.jsonl and participants.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub friends_min: Option<usize>,
    #[arg(long)]
    pub friends_max: Option<usize>,
    #[arg(long)]
    pub abuse_rate: Option<f64>,
    /// Also write this many screening participant records.
    #[arg(long, default_value_t = 0)]
    pub participants: usize,
    /// How many of the participants fail at least one check.
    #[arg(long, default_value_t = 0)]
    pub violators: usize,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, required_unless_present = "replay")]
    pub snapshot: Option<PathBuf>,
    #[arg(long, required_unless_present = "replay")]
    pub participant: Option<String>,
    #[arg(long, required_unless_present = "replay")]
    pub seed: Option<u64>,
    #[arg(long, default_value = "cli")]
    pub session_id: String,
    #[arg(long, default_value_t = friend_audit_core::session::DEFAULT_SAMPLE_SIZE)]
    pub sample_size: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Questionnaire)]
    pub mode: ModeArg,
    /// JSONL of `{"op":"responses",...}` and `{"op":"decision",...}` steps.
    /// In wild mode only decisions apply, after the predictions.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Model bundle for wild mode.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub attention_failed: bool,
    /// Write the session log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Print the friend queue and stop.
    #[arg(long)]
    pub queue: bool,
    /// Replay an existing log, check it and print its summary.
    #[arg(long, conflicts_with_all = ["snapshot", "script", "models", "queue"])]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Questionnaire,
    Wild,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Pair labels, one JSON object per line (`gen` writes truth.jsonl).
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// q1..q5, decision or all.
    #[arg(long, default_value = "all")]
    pub target: String,
    #[arg(long, value_enum, default_value_t = AlgoChoice::Forest)]
    pub algo: AlgoChoice,
    #[arg(long)]
    pub seed: u64,
    /// Train on the raw class distribution instead of balancing first.
    #[arg(long)]
    pub no_balance: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub target: TargetName,
    #[arg(long, value_enum, default_value_t = AlgoChoice::Forest)]
    pub algo: AlgoChoice,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// Participant records, one JSON object per line.
    #[arg(long)]
    pub records: PathBuf,
    /// Write the retained records here.
    #[arg(long)]
    pub retained: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Pearson chi-square test of a 2x2 table given row by row.
    Chi2 { a: u64, b: u64, c: u64, d: u64 },
    /// Pearson correlation of two columns (whitespace or comma separated).
    Pearson { file: PathBuf },
    /// Feature vector of one friend pair.
    Features {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        friend: String,
    },
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// `canonical` or a rule table file.
    #[arg(long, default_value = "canonical")]
    pub table: String,
    /// Defaults to the config file's `sandbox_enabled`.
    #[arg(long, value_enum)]
    pub sandbox: Option<Toggle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Keep session logs in this directory and reload them on start.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

type CliResult = Result<(), String>;

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 on success, 1 on a domain error, 2 on a usage error.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    if !text.contains("Usage:") {
                        use clap::CommandFactory;
                        let _ = writeln!(err, "\n{}", Cli::command().render_usage());
                    }
                    2
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(args) => gen(args, &config, out),
        Command::Audit(args) => audit(args, &config, out),
        Command::Train(args) => train(args, &config, out),
        Command::Evaluate(args) => evaluate(args, &config, out),
        Command::Screen(args) => screen(args, &config, out),
        Command::Stats { stat } => stats(stat, out),
        Command::ValidateRules(args) => validate_rules(args, &config, out),
        Command::Serve(args) => serve(args, &config),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

fn emit(out: &mut dyn Write, text: impl std::fmt::Display) -> CliResult {
    writeln!(out, "{text}").map_err(|e| e.to_string())
}

fn read_snapshot(path: &Path) -> Result<SocialSnapshot, String> {
    let file = File::open(path).map_err(io_err(path))?;
    load_snapshot(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1))?;
        items.push(item);
    }
    Ok(items)
}

fn write_file(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(io_err(path))
}

fn gen(args: GenArgs, config: &Config, out: &mut dyn Write) -> CliResult {
    let mut params = config.population.clone();
    params.seed = args.seed;
    params.sandbox_enabled = config.sandbox_enabled;
    if let Some(n) = args.users {
        params.user_count = n;
    }
    if let Some(lo) = args.friends_min {
        params.friends_per_user.0 = lo;
    }
    if let Some(hi) = args.friends_max {
        params.friends_per_user.1 = hi;
    }
    if let Some(rate) = args.abuse_rate {
        params.abuse_rate = rate;
    }
    let pop = generate_population(&params).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    write_file(&args.out.join("snapshot.jsonl"), &pop.snapshot.to_jsonl())?;
    write_file(&args.out.join("truth.jsonl"), &pop.truth_jsonl())?;
    emit(
        out,
        format!(
            "{} participants, {} users, {} labeled pairs, abuse share {:.3}",
            pop.participants.len(),
            pop.snapshot.user_count(),
            pop.truth.len(),
            pop.abuse_share()
        ),
    )?;
    if args.participants > 0 || args.violators > 0 {
        let sample = generate_participants(args.participants, args.violators, &config.quality, args.seed)
            .map_err(|e| e.to_string())?;
        let mut text = String::new();
        for r in &sample.records {
            text.push_str(&serde_json::to_string(r).map_err(|e| e.to_string())?);
            text.push('\n');
        }
        write_file(&args.out.join("participants.jsonl"), &text)?;
        emit(out, format!("{} participant records, {} violators", sample.records.len(), args.violators))?;
    }
    Ok(())
}

fn load_labels(data: &DataArgs) -> Result<(SocialSnapshot, Vec<PairLabel>), String> {
    Ok((read_snapshot(&data.snapshot)?, read_jsonl(&data.truth)?))
}

fn targets(list: &str) -> Result<Vec<TargetName>, String> {
    if list == "all" {
        return Ok(TargetName::ALL.to_vec());
    }
    list.split(',')
        .map(|t| t.trim().parse::<TargetName>().map_err(|e| e.to_string()))
        .collect()
}

fn train(args: TrainArgs, config: &Config, out: &mut dyn Write) -> CliResult {
    let (snapshot, labels) = load_labels(&args.data)?;
    let algorithm = config.learner.algorithm(args.algo, args.seed);
    let mut bundle = ModelBundle::default();
    for target in targets(&args.target)? {
        let mut data = build_dataset(&snapshot, &labels, target).map_err(|e| e.to_string())?;
        if !args.no_balance {
            data = balance_dataset(&data, args.seed).map_err(|e| format!("{target}: {e}"))?;
        }
        let model = algorithm.train(&data).map_err(|e| format!("{target}: {e}"))?;
        emit(out, format!("{target}: trained on {} instances", data.len()))?;
        bundle.insert(model);
    }
    write_file(&args.out, &bundle.to_json())?;
    emit(out, format!("wrote {}", args.out.display()))
}

fn evaluate(args: EvaluateArgs, config: &Config, out: &mut dyn Write) -> CliResult {
    let (snapshot, labels) = load_labels(&args.data)?;
    let data = build_dataset(&snapshot, &labels, args.target).map_err(|e| e.to_string())?;
    let algorithm = config.learner.algorithm(args.algo, args.seed);
    let report = cross_validate(&data, algorithm, args.k, args.seed).map_err(|e| e.to_string())?;
    let text = report.render();
    if let Some(path) = &args.out {
        write_file(path, &text)?;
    }
    emit(out, text.trim_end())
}

fn screen(args: ScreenArgs, config: &Config, out: &mut dyn Write) -> CliResult {
    let records: Vec<ParticipantRecord> = read_jsonl(&args.records)?;
    let screening = screen_participants(&records, &config.quality);
    if let Some(path) = &args.retained {
        let mut text = String::new();
        for r in &screening.retained {
            text.push_str(&serde_json::to_string(r).map_err(|e| e.to_string())?);
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    emit(out, screening.report(&config.quality).trim_end())
}

fn stats(stat: StatsCommand, out: &mut dyn Write) -> CliResult {
    match stat {
        StatsCommand::Chi2 { a, b, c, d } => {
            let r: ChiSquare = chi_square_2x2([[a, b], [c, d]]).map_err(|e| e.to_string())?;
            emit(out, format!("chi2 = {:.4}, df = {}, p = {:.3}", r.statistic, r.df, r.p_value))
        }
        StatsCommand::Pearson { file } => {
            let text = std::fs::read_to_string(&file).map_err(io_err(&file))?;
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (n, line) in text.lines().enumerate() {
                let fields: Vec<&str> = line
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|f| !f.is_empty())
                    .collect();
                match fields.as_slice() {
                    [] => continue,
                    [x, y] => {
                        let parse = |s: &str| {
                            s.parse::<f64>()
                                .map_err(|e| format!("{}:{}: {s:?}: {e}", file.display(), n + 1))
                        };
                        xs.push(parse(x)?);
                        ys.push(parse(y)?);
                    }
                    _ => return Err(format!("{}:{}: expected two columns", file.display(), n + 1)),
                }
            }
            let r: f64 = pearson_correlation(&xs, &ys).map_err(|e| e.to_string())?;
            emit(out, format!("r = {r:.4}, n = {}", xs.len()))
        }
        StatsCommand::Features { snapshot, user, friend } => {
            let s = read_snapshot(&snapshot)?;
            let v = compute_features(&s, &user, &friend).map_err(|e| e.to_string())?;
            emit(out, serde_json::to_string_pretty(&v).map_err(|e| e.to_string())?)
        }
    }
}

fn validate_rules(args: ValidateArgs, config: &Config, out: &mut dyn Write) -> CliResult {
    let sandbox = args.sandbox.map_or(config.sandbox_enabled, |t| t == Toggle::On);
    let table = if args.table == "canonical" {
        RuleTable::canonical(sandbox)
    } else {
        let path = Path::new(&args.table);
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let rules = friend_audit_core::rules::parse_rules(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        // unchecked so a non-total table still gets a report
        RuleTable::new_unchecked(rules, sandbox).map_err(|e| format!("{}: {e}", path.display()))?
    };
    let report = validate_rule_table(&table);
    emit(out, report.to_string().trim_end())?;
    if report.total {
        Ok(())
    } else {
        Err(format!("rule table leaves {} tuples unmatched", report.unmatched.len()))
    }
}

fn audit(args: AuditArgs, config: &Config, out: &mut dyn Write) -> CliResult {
    let session_config = config.session_config()?;
    if let Some(path) = &args.replay {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let session = parse_log(&text)
            .and_then(|log| AuditSession::replay(&log, &session_config.table))
            .map_err(|e| format!("{}: {e}", path.display()))?;
        emit(out, format!("{}: {} records replayed identically", path.display(), session.log().len()))?;
        return match session.summary() {
            Ok(summary) => emit(out, summary),
            Err(_) => emit(out, "session is still in progress"),
        };
    }
    let (Some(snapshot_path), Some(participant), Some(seed)) = (&args.snapshot, &args.participant, args.seed) else {
        return Err("--snapshot, --participant and --seed are required".into());
    };
    let snapshot = read_snapshot(snapshot_path)?;
    let request = SessionRequest {
        session_id: args.session_id.clone(),
        participant_id: participant.clone(),
        mode: match args.mode {
            ModeArg::Questionnaire => Mode::Questionnaire,
            ModeArg::Wild => Mode::Wild,
        },
        sample_size: args.sample_size,
        seed,
        attention_passed: !args.attention_failed,
    };
    let mut session = AuditSession::create(&snapshot, &request, &session_config).map_err(|e| e.to_string())?;
    if args.queue {
        for f in session.friends() {
            emit(out, &f.entry.friend_id)?;
        }
        return Ok(());
    }

    let result = drive(&args, &snapshot, &mut session, out);
    if let Some(path) = &args.log {
        write_file(path, &session.log_jsonl())?;
    }
    result?;
    match session.status() {
        Status::Complete => emit(out, session.summary().map_err(|e| e.to_string())?),
        Status::InProgress => emit(
            out,
            format!(
                "session in progress; next step: {}",
                serde_json::to_string(&session.next_step()).map_err(|e| e.to_string())?
            ),
        ),
    }
}

fn drive(args: &AuditArgs, snapshot: &SocialSnapshot, session: &mut AuditSession, out: &mut dyn Write) -> CliResult {
    match args.mode {
        ModeArg::Wild => {
            let path = args.models.as_ref().ok_or("wild mode needs --models")?;
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let bundle = ModelBundle::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let surfaced = session.run_wild(&bundle, snapshot).map_err(|e| e.to_string())?;
            for (friend, s) in &surfaced {
                emit(out, format!("{friend}\t{}\trule {}", s.action, s.matched_rule))?;
            }
            match &args.script {
                Some(path) => apply_script(path, session),
                None => Ok(()),
            }
        }
        ModeArg::Questionnaire => {
            let path = args.script.as_ref().ok_or("questionnaire mode needs --script")?;
            apply_script(path, session)
        }
    }
}

fn apply_script(path: &Path, session: &mut AuditSession) -> CliResult {
    let steps: Vec<ScriptStep> = read_jsonl(path)?;
    for (n, step) in steps.iter().enumerate() {
        step.apply(session)
            .map_err(|e| format!("{}: step {}: {}", path.display(), n + 1, e.message))?;
    }
    Ok(())
}

fn serve(args: ServeArgs, config: &Config) -> CliResult {
    let snapshot = read_snapshot(&args.snapshot)?;
    let mut service = Service::new(snapshot, config.session_config()?);
    if let Some(path) = &args.models {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        service = service.with_models(ModelBundle::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?);
    }
    if let Some(dir) = &args.store {
        service = service.with_store(dir)?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime
        .block_on(crate::http::serve(Arc::new(service), args.addr))
        .map_err(|e| e.to_string())
}
