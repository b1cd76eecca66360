use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use procstate::abstraction::{Lexicon, RoleSynonyms};
use procstate::corpus::{load_coref, load_procedures, CorpusFormat, LabeledProcedure};
use procstate::gat_ref::{invariant_suite, InvariantReport};
use procstate::global_reasoning::ReasoningOptions;
use procstate::local_rules::RuleSet;
use procstate::metrics::{evaluate, Tier};
use procstate::par::Execution;
use procstate::parse_model::{load_srl_dir, load_trips_dir, ActionClassMap, Ontology};
use procstate::pipeline::Predictor;
use procstate::prediction::{parse_predictions, prediction_rows, write_predictions};
use procstate::semgraph::{build_srl_graph, build_trips_graph, extend_qa_graph, GraphOptions, SemanticGraph};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MISSING_FILE: u8 = 3;
const EXIT_SCHEMA: u8 = 4;
const EXIT_CONFIG: u8 = 5;

/// Track entity existence and location through procedural text from its semantic parses.
#[derive(Parser, Debug)]
#[command(name = "procstate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict location grids and write them as a prediction TSV.
    Predict(PredictArgs),
    /// Write the abstracted event frames of every step.
    Abstract(AbstractArgs),
    /// Build semantic graphs, optionally extended with question/step nodes.
    BuildGraph(GraphArgs),
    /// Score a prediction TSV against the gold grids of a corpus.
    Evaluate(EvaluateArgs),
    /// Run the graph-attention reference invariant suite.
    GatCheck(GatCheckArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, short = 'j')]
    jobs: Option<usize>,
    /// Write to this file instead of stdout.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ParserKind {
    Trips,
    Srl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CorpusKind {
    Json,
    ProparaTsv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TierArg {
    Sentence,
    Document,
    Decision,
    All,
}

#[derive(Args, Debug)]
struct Input {
    /// Corpus file (JSON Lines) or ProPara TSV directory.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusKind::Json)]
    corpus_format: CorpusKind,
    /// Coreference sidecar (JSON Lines).
    #[arg(long)]
    coref: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LexiconArgs {
    /// Directory holding ontology.tsv, action_classes.tsv, role_synonyms.tsv and
    /// rules_disabled.txt; files that are absent fall back to the built-in tables.
    #[arg(long, env = "PROCSTATE_CONFIG_DIR")]
    config_dir: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    roles: Option<PathBuf>,
    /// Rule names to disable, one per line.
    #[arg(long)]
    disable_rules: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    input: Input,
    /// Directory of `<id>.trips.json` parse files.
    #[arg(long)]
    parses: PathBuf,
    #[arg(long, value_enum, default_value_t = ParserKind::Trips)]
    parser: ParserKind,
    /// Rewrite a second destroy at a new location to no action instead of a move.
    #[arg(long)]
    strict_destroy: bool,
    #[command(flatten)]
    lexicon: LexiconArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct AbstractArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long)]
    parses: PathBuf,
    #[arg(long, value_enum, default_value_t = ParserKind::Trips)]
    parser: ParserKind,
    #[command(flatten)]
    lexicon: LexiconArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[command(flatten)]
    input: Input,
    /// Directory of `<id>.trips.json` or `<id>.srl.json` parse files.
    #[arg(long)]
    parses: PathBuf,
    #[arg(long, value_enum, default_value_t = ParserKind::Trips)]
    parser: ParserKind,
    /// Add a QA extension for this entity (repeatable).
    #[arg(long = "qa-entity")]
    qa_entities: Vec<String>,
    /// Add a QA extension for every entity of every procedure.
    #[arg(long, conflicts_with = "qa_entities")]
    qa_all: bool,
    /// Skip argument-argument edges involving adjunct (ARGM-*) arguments.
    #[arg(long)]
    no_adjunct_edges: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    input: Input,
    /// Prediction TSV.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_enum, default_value_t = TierArg::All)]
    tier: TierArg,
    /// TRIPS parse directory; enables the ambiguous-step overlay.
    #[arg(long)]
    parses: Option<PathBuf>,
    #[command(flatten)]
    lexicon: LexiconArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct GatCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random graphs.
    #[arg(long, default_value_t = 100)]
    graphs: usize,
    #[command(flatten)]
    common: Common,
}

/// A valid file with an unusable value, or an unsupported flag combination.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<procstate::Error>() {
            return match e {
                procstate::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                    EXIT_MISSING_FILE
                }
                procstate::Error::Io { .. } => EXIT_FAILURE,
                procstate::Error::OntologyCycle(_) => EXIT_CONFIG,
                _ => EXIT_SCHEMA,
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return EXIT_MISSING_FILE;
            }
        }
    }
    EXIT_FAILURE
}

impl Common {
    fn execution(&self) -> Execution {
        match self.jobs {
            Some(1) => Execution::Sequential,
            _ => Execution::Parallel,
        }
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.output {
            Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }
}

fn json_text(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load_corpus(input: &Input) -> Result<Vec<LabeledProcedure>> {
    let format = match input.corpus_format {
        CorpusKind::Json => CorpusFormat::Json,
        CorpusKind::ProparaTsv => CorpusFormat::ProparaTsv,
    };
    let mut corpus = load_procedures(&input.corpus, format)?;
    if let Some(coref) = &input.coref {
        load_coref(coref, &mut corpus)?;
    }
    info!("loaded {} procedures from {}", corpus.len(), input.corpus.display());
    Ok(corpus)
}

fn ids(corpus: &[LabeledProcedure]) -> impl Iterator<Item = &str> {
    corpus.iter().map(|lp| lp.procedure.id.as_str())
}

impl LexiconArgs {
    /// An explicit flag wins, then the config directory, then the built-in table.
    fn pick(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit
            .clone()
            .or_else(|| self.config_dir.as_ref().map(|d| d.join(name)).filter(|p| p.exists()))
    }

    fn lexicon(&self) -> Result<Lexicon> {
        if let Some(dir) = &self.config_dir {
            if !dir.is_dir() {
                bail!(config_error(format!("config dir {} is not a directory", dir.display())));
            }
        }
        let ontology = match self.pick(&self.ontology, "ontology.tsv") {
            Some(p) => Ontology::load(&p)?,
            None => Ontology::builtin(),
        };
        ontology.validate()?;
        let classes = match self.pick(&self.classes, "action_classes.tsv") {
            Some(p) => ActionClassMap::load(&p)?,
            None => ActionClassMap::builtin(),
        };
        let roles = match self.pick(&self.roles, "role_synonyms.tsv") {
            Some(p) => RoleSynonyms::load(&p)?,
            None => RoleSynonyms::builtin(),
        };
        Ok(Lexicon {
            ontology,
            classes,
            roles,
        })
    }

    fn rules(&self) -> Result<RuleSet> {
        match self.pick(&self.disable_rules, "rules_disabled.txt") {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| procstate::Error::Io {
                    path: p.clone(),
                    source: e,
                })?;
                Ok(RuleSet::parse_overrides(&text, &p.display().to_string())?)
            }
            None => Ok(RuleSet::all()),
        }
    }
}

fn require_trips(parser: ParserKind, command: &str) -> Result<()> {
    if parser == ParserKind::Srl {
        bail!(config_error(format!(
            "{command} needs logical-form parses; --parser srl is only supported by build-graph"
        )));
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    require_trips(args.parser, "predict")?;
    let predictor = Predictor {
        lexicon: args.lexicon.lexicon()?,
        rules: args.lexicon.rules()?,
        options: ReasoningOptions {
            strict_destroy: args.strict_destroy,
        },
    };
    let corpus = load_corpus(&args.input)?;
    let parses = load_trips_dir(&args.parses, ids(&corpus))?;
    let inputs: Vec<_> = corpus
        .iter()
        .map(|lp| (&lp.procedure, parses[&lp.procedure.id].as_slice()))
        .collect();
    let grids = predictor.predict_all(&inputs, args.common.execution())?;
    let text = match args.common.format {
        Format::Text => write_predictions(&grids),
        Format::Json => json_text(&prediction_rows(&grids)),
    };
    args.common.emit(&text)
}

fn cmd_abstract(args: &AbstractArgs) -> Result<()> {
    require_trips(args.parser, "abstract")?;
    let predictor = Predictor {
        lexicon: args.lexicon.lexicon()?,
        ..Predictor::default()
    };
    let corpus = load_corpus(&args.input)?;
    let parses = load_trips_dir(&args.parses, ids(&corpus))?;
    let per_procedure = procstate::par::try_map(&corpus, args.common.execution(), |lp| {
        predictor.abstract_procedure(&lp.procedure, &parses[&lp.procedure.id])
    })?;
    let text = match args.common.format {
        Format::Json => {
            let doc: Vec<_> = corpus
                .iter()
                .zip(&per_procedure)
                .map(|(lp, steps)| {
                    json!({
                        "procedure_id": lp.procedure.id,
                        "steps": steps.iter().zip(&lp.procedure.steps).map(|(a, s)| json!({
                            "step": s.index,
                            "frames": a.frames,
                            "passive": a.passive,
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect();
            json_text(&doc)
        }
        Format::Text => {
            let mut out = String::new();
            for (lp, steps) in corpus.iter().zip(&per_procedure) {
                for (a, s) in steps.iter().zip(&lp.procedure.steps) {
                    for f in &a.frames {
                        let mut cols = vec![
                            lp.procedure.id.clone(),
                            s.index.to_string(),
                            format!("{:?}", f.action_class).to_uppercase(),
                            f.predicate_word.clone(),
                        ];
                        cols.extend(f.roles.iter().map(|(k, v)| format!("{k}={}", v.text)));
                        for (k, v) in [("TO_LOC", &f.to_loc), ("FROM_LOC", &f.from_loc), ("AT_LOC", &f.at_loc)] {
                            if let Some(v) = v {
                                cols.push(format!("{k}={}", v.text));
                            }
                        }
                        out.push_str(&cols.join("\t"));
                        out.push('\n');
                    }
                    for p in &a.passive {
                        out.push_str(&format!(
                            "{}\t{}\tPASSIVE\t{}\tAT_LOC={}\n",
                            lp.procedure.id, s.index, p.holder.text, p.location.text
                        ));
                    }
                }
            }
            out
        }
    };
    args.common.emit(&text)
}

fn cmd_build_graph(args: &GraphArgs) -> Result<()> {
    let corpus = load_corpus(&args.input)?;
    let opts = GraphOptions {
        adjunct_arg_edges: !args.no_adjunct_edges,
    };
    let exec = args.common.execution();
    let graphs: Vec<SemanticGraph> = match args.parser {
        ParserKind::Trips => {
            let parses = load_trips_dir(&args.parses, ids(&corpus))?;
            procstate::par::try_map(&corpus, exec, |lp| {
                build_trips_graph(&lp.procedure, &parses[&lp.procedure.id])
            })?
        }
        ParserKind::Srl => {
            let parses = load_srl_dir(&args.parses, ids(&corpus))?;
            procstate::par::try_map(&corpus, exec, |lp| {
                build_srl_graph(&lp.procedure, &parses[&lp.procedure.id], &opts)
            })?
        }
    };
    for name in &args.qa_entities {
        if !corpus.iter().any(|lp| lp.procedure.entity(name).is_some()) {
            bail!(config_error(format!(
                "--qa-entity {name:?} is not an entity of any procedure"
            )));
        }
    }

    let mut records = Vec::new();
    for (lp, g) in corpus.iter().zip(&graphs) {
        records.push((lp.procedure.id.clone(), None, g.clone()));
        for e in &lp.procedure.entities {
            if args.qa_all || args.qa_entities.contains(&e.name) {
                records.push((
                    lp.procedure.id.clone(),
                    Some(e.name.clone()),
                    extend_qa_graph(g, e, &lp.procedure),
                ));
            }
        }
    }
    let text = match args.common.format {
        Format::Json => json_text(
            &records
                .iter()
                .map(|(pid, entity, g)| json!({"procedure_id": pid, "entity": entity, "graph": g}))
                .collect::<Vec<_>>(),
        ),
        Format::Text => {
            let mut out = String::from("procedure\tentity\tnodes\tedges\n");
            for (pid, entity, g) in &records {
                out.push_str(&format!(
                    "{pid}\t{}\t{}\t{}\n",
                    entity.as_deref().unwrap_or("-"),
                    g.nodes.len(),
                    g.edges.len()
                ));
            }
            out
        }
    };
    args.common.emit(&text)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let corpus = load_corpus(&args.input)?;
    let pred_text = std::fs::read_to_string(&args.pred).map_err(|e| procstate::Error::Io {
        path: args.pred.clone(),
        source: e,
    })?;
    let pred = parse_predictions(&pred_text, &args.pred.display().to_string())?;
    let lexicon = args.lexicon.lexicon()?;
    let parses = match &args.parses {
        Some(dir) => Some(load_trips_dir(dir, ids(&corpus))?),
        None => None,
    };
    let tier = match args.tier {
        TierArg::Sentence => Tier::Sentence,
        TierArg::Document => Tier::Document,
        TierArg::Decision => Tier::Decision,
        TierArg::All => Tier::All,
    };
    if parses.is_none() && matches!(tier, Tier::Decision | Tier::All) {
        info!("no --parses given; the ambiguous-step overlay is omitted");
    }
    let report = evaluate(&pred, &corpus, parses.as_ref(), &lexicon, tier, args.common.execution())?;
    let text = match args.common.format {
        Format::Json => json_text(&report),
        Format::Text => report.to_table(),
    };
    args.common.emit(&text)
}

fn cmd_gat_check(args: &GatCheckArgs) -> Result<bool> {
    let report = invariant_suite(args.seed, args.graphs);
    let text = match args.common.format {
        Format::Json => json_text(&json!({"passed": report.passed(), "report": report})),
        Format::Text => format!(
            "seed {}: {} graphs\n\
             max |row sum - 1|         {:.3e} (limit {:.0e})\n\
             max permutation error     {:.3e} (limit {:.0e})\n\
             locality violations       {}\n\
             non-finite outputs        {}\n\
             sequential/parallel diffs {}\n\
             {}\n",
            report.seed,
            report.graphs,
            report.max_row_sum_error,
            InvariantReport::ROW_SUM_TOLERANCE,
            report.max_permutation_error,
            InvariantReport::PERMUTATION_TOLERANCE,
            report.locality_violations,
            report.non_finite_outputs,
            report.sequential_parallel_mismatches,
            if report.passed() { "PASS" } else { "FAIL" }
        ),
    };
    args.common.emit(&text)?;
    Ok(report.passed())
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Predict(a) => &a.common,
        Command::Abstract(a) => &a.common,
        Command::BuildGraph(a) => &a.common,
        Command::Evaluate(a) => &a.common,
        Command::GatCheck(a) => &a.common,
    }
}

fn run(cmd: &Command) -> Result<bool> {
    match cmd {
        Command::Predict(a) => cmd_predict(a).map(|_| true),
        Command::Abstract(a) => cmd_abstract(a).map(|_| true),
        Command::BuildGraph(a) => cmd_build_graph(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| true),
        Command::GatCheck(a) => cmd_gat_check(a),
    }
}

#[cfg(feature = "parallel")]
fn run_with_jobs(cmd: &Command, jobs: Option<usize>) -> Result<bool> {
    match jobs {
        Some(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| run(cmd))
        }
        _ => run(cmd),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_jobs(cmd: &Command, jobs: Option<usize>) -> Result<bool> {
    if jobs.is_some_and(|n| n > 1) {
        log::warn!("built without the parallel feature; --jobs is ignored");
    }
    run(cmd)
}

/// The cause chain joined by ": ", skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn report_error(err: &anyhow::Error, code: u8, format: Format) {
    let message = describe(err);
    match format {
        Format::Json => eprintln!("{}", json!({"error": message, "exit_code": code})),
        Format::Text => eprintln!("error: {message}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let c = common(&cli.command);
    if c.jobs == Some(0) {
        report_error(&config_error("--jobs must be at least 1"), EXIT_CONFIG, c.format);
        return ExitCode::from(EXIT_CONFIG);
    }
    match run_with_jobs(&cli.command, c.jobs) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(err) => {
            let code = exit_code(&err);
            report_error(&err, code, c.format);
            ExitCode::from(code)
        }
    }
}
