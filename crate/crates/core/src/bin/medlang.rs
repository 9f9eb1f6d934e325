use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use medlang::corpus::{read_units, write_transcript, write_units};
use medlang::glm::{
    fit_mediator_model, fit_outcome_model, fold_plan, write_mediator_tables, write_outcome_tables, Dataset,
    GlmOptions,
};
use medlang::measure::{
    build_records, read_records, write_records, BuildOptions, Lexicon, MeasurementSpec, RecordSchema, TopicConfig,
};
use medlang::mediation::{estimate_all, EstimationConfig, XWeighting};
use medlang::pipeline::{ingest, rerun_manifest, run_pipeline, Manifest, RunConfig};
use medlang::report::{read_estimates_jsonl, render_report, write_estimates_csv, write_estimates_jsonl, write_plot_data};
use medlang::rng::derive_seed;
use medlang::scm::{exact_effects, render_transcript, violation_study, write_study, Knob, ScmSpec, StudyConfig};
use medlang::{Error, Result};

#[derive(Parser)]
#[command(name = "medlang", version, about = "Causal mediation analysis of language in conversation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a transcript and extract advocate/justice units.
    Ingest(IngestArgs),
    /// Measure treatment, outcome, confounders and mediators for each unit.
    Measure(MeasureArgs),
    /// Fit cross-fitted nuisance tables and export them as CSV.
    Fit(FitArgs),
    /// Estimate natural direct and indirect effects per mediator.
    Estimate(EstimateArgs),
    /// Sample records (and optionally transcripts) from a structural model.
    Simulate(SimulateArgs),
    /// Estimator bias as one assumption-violating edge is strengthened.
    Study(StudyArgs),
    /// Run the whole pipeline from a config file or a manifest.
    Run(RunArgs),
    /// Render the text report for saved estimates.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    transcripts: PathBuf,
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Units file; the sorted utterances are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    units: PathBuf,
    /// Full transcript, needed for the chief justice's introductions.
    /// Defaults to the utterance file written by `ingest`.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "hedging,disfluency,topic")]
    mediators: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "prior_interruptions")]
    confounders: Vec<String>,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    topics: usize,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    /// Accept only "- -" as the interruption marker.
    #[arg(long)]
    strict_dash: bool,
    /// Records file; the schema is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Weight confounder cells by the training-fold distribution instead of per unit.
    #[arg(long, value_enum, default_value_t = Weighting::PerUnit)]
    x_weighting: Weighting,
    /// Drop the treatment x mediator interaction from the outcome model.
    #[arg(long)]
    no_interaction: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    PerUnit,
    TrainingMarginal,
}

impl ModelArgs {
    fn glm(&self) -> GlmOptions {
        GlmOptions {
            interaction: !self.no_interaction,
            ..GlmOptions::default()
        }
    }

    fn weighting(&self) -> XWeighting {
        match self.x_weighting {
            Weighting::PerUnit => XWeighting::PerUnit,
            Weighting::TrainingMarginal => XWeighting::TrainingMarginal,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    records: PathBuf,
    /// Re-plan folds; otherwise the folds stored in the records are used.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    mediators: Option<Vec<String>>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long, value_delimiter = ',')]
    mediators: Option<Vec<String>>,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.90)]
    ci: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    n: usize,
    /// Overrides the seed stored in the spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    /// Also write a transcript and metadata sidecar that measure back to the records.
    #[arg(long)]
    render: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    knob: Knob,
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// CSV output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Replay a previous run and check every checksum.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory; overrides the config's.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Estimates in newline-delimited JSON.
    #[arg(long)]
    estimates: PathBuf,
    /// Also write report.txt and plot_data.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn load_records(path: &Path) -> Result<(Vec<medlang::measure::CausalRecord>, RecordSchema)> {
    let records = read_records(open(path)?)?;
    let schema_path = sidecar(path, "schema.json");
    let schema: RecordSchema = serde_json::from_reader(open(&schema_path)?)?;
    Ok((records, schema))
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let (utterances, units) = ingest(&a.transcripts, a.metadata.as_deref())?;
    let mut w = create(&a.out)?;
    write_units(&units, &mut w)?;
    w.flush()?;
    let mut w = create(&sidecar(&a.out, "utterances.jsonl"))?;
    write_transcript(&utterances, &mut w)?;
    w.flush()?;
    eprintln!("{} utterances, {} units", utterances.len(), units.len());
    Ok(())
}

fn cmd_measure(a: MeasureArgs) -> Result<()> {
    let units = read_units(open(&a.units)?)?;
    let transcripts = a.transcripts.clone().unwrap_or_else(|| sidecar(&a.units, "utterances.jsonl"));
    let utterances = medlang::corpus::parse_transcript(open(&transcripts)?)?;
    let lexicon = match &a.lexicon {
        Some(p) => Lexicon::parse(&fs::read_to_string(p)?)?,
        None => Lexicon::default_hedging(),
    };
    let spec = MeasurementSpec {
        strict_dash: a.strict_dash,
        ..MeasurementSpec::with_lexicon(lexicon)
    };
    let options = BuildOptions {
        n_folds: a.folds,
        seed: a.seed,
        confounders: a.confounders,
        mediators: a.mediators,
        topic: TopicConfig {
            k: a.topics,
            sweeps: a.sweeps,
            burn_in: a.burn_in,
            ..TopicConfig::default()
        },
        topic_train_fold: 0,
    };
    let measured = build_records(&utterances, &units, &spec, &options, None)?;
    let mut w = create(&a.out)?;
    write_records(&measured.records, &mut w)?;
    w.flush()?;
    serde_json::to_writer_pretty(create(&sidecar(&a.out, "schema.json"))?, &measured.schema)?;
    if let Some(model) = &measured.topic_model {
        serde_json::to_writer_pretty(create(&sidecar(&a.out, "topics.json"))?, model)?;
    }
    for e in &measured.exclusions {
        log::warn!("excluded {}: {}", e.unit_id, e.reason);
    }
    eprintln!("{} records, {} excluded", measured.records.len(), measured.exclusions.len());
    Ok(())
}

fn dataset(records: &[medlang::measure::CausalRecord], schema: &RecordSchema, folds: Option<usize>, seed: u64) -> Result<Dataset> {
    match folds {
        None => Dataset::from_records(records, schema),
        Some(f) => {
            let ids: Vec<String> = records.iter().map(|r| r.unit_id.clone()).collect();
            Dataset::with_plan(records, schema, &fold_plan(&ids, f, seed)?)
        }
    }
}

fn mediator_list(given: Option<Vec<String>>, schema: &RecordSchema) -> Vec<String> {
    given.unwrap_or_else(|| schema.mediators.iter().map(|m| m.name.clone()).collect())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let (records, schema) = load_records(&a.records)?;
    let data = dataset(&records, &schema, a.folds, a.seed)?;
    let glm = a.model.glm();
    let mut g = Vec::new();
    let mut f = Vec::new();
    for m in mediator_list(a.mediators, &schema) {
        g.push(fit_mediator_model(&data, &m, &glm)?);
        f.push(fit_outcome_model(&data, &m, &glm)?);
    }
    fs::create_dir_all(&a.out)?;
    let schema = data.schema();
    write_mediator_tables(&g, schema, create(&a.out.join("mediator_tables.csv"))?)?;
    write_outcome_tables(&f, schema, create(&a.out.join("outcome_tables.csv"))?)?;
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let (records, schema) = load_records(&a.records)?;
    let data = Dataset::from_records(&records, &schema)?;
    let config = EstimationConfig {
        n_bootstrap: a.bootstrap,
        seed: derive_seed(a.seed, "bootstrap"),
        ci_level: a.ci,
        x_weighting: a.model.weighting(),
        glm: a.model.glm(),
    };
    let estimates = estimate_all(&data, &mediator_list(a.mediators, &schema), &config)?;
    fs::create_dir_all(&a.out)?;
    write_estimates_csv(&estimates, create(&a.out.join("estimates.csv"))?)?;
    let mut w = create(&a.out.join("estimates.jsonl"))?;
    write_estimates_jsonl(&estimates, &mut w)?;
    w.flush()?;
    write_plot_data(&estimates, create(&a.out.join("plot_data.csv"))?)?;
    print!("{}", render_report(&estimates));
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = ScmSpec::load(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let sim = medlang::scm::generate_with_folds(&spec, a.n, a.folds)?;
    fs::create_dir_all(&a.out)?;
    let mut w = create(&a.out.join("records.jsonl"))?;
    write_records(&sim.records, &mut w)?;
    w.flush()?;
    serde_json::to_writer_pretty(create(&a.out.join("records.schema.json"))?, &sim.schema)?;
    if spec.coupling == 0.0 && spec.carryover == 0.0 {
        serde_json::to_writer_pretty(create(&a.out.join("oracle.json"))?, &exact_effects(&spec)?)?;
    }
    if a.render {
        let corpus = render_transcript(&sim)?;
        let mut w = create(&a.out.join("transcripts.jsonl"))?;
        write_transcript(&corpus.utterances, &mut w)?;
        w.flush()?;
        let mut w = create(&a.out.join("metadata.jsonl"))?;
        for (case, attrs) in &corpus.metadata {
            let mut obj = serde_json::Map::new();
            obj.insert("case_id".into(), case.clone().into());
            for (k, v) in attrs {
                obj.insert(k.clone(), v.clone().into());
            }
            serde_json::to_writer(&mut w, &obj)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_study(a: StudyArgs) -> Result<()> {
    let spec = ScmSpec::load(&a.spec)?;
    let config = StudyConfig {
        knob: a.knob,
        grid: a.grid,
        n: a.n,
        seed: a.seed,
        estimation: EstimationConfig {
            n_bootstrap: 0,
            x_weighting: a.model.weighting(),
            glm: a.model.glm(),
            ..EstimationConfig::default()
        },
    };
    let rows = violation_study(&spec, &config)?;
    match &a.out {
        Some(p) => write_study(&rows, create(p)?)?,
        None => write_study(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    if let Some(path) = &a.manifest {
        let manifest = Manifest::load(path)?;
        let out = a
            .out
            .or_else(|| path.parent().map(Path::to_path_buf))
            .ok_or_else(|| Error::Config("no output directory".into()))?;
        let (_, mismatches) = rerun_manifest(&manifest, &out)?;
        if !mismatches.is_empty() {
            for m in &mismatches {
                eprintln!("checksum mismatch: {m}");
            }
            return Err(Error::Data(format!("{} files differ from the manifest", mismatches.len())));
        }
        eprintln!("all checksums match");
        return Ok(());
    }
    let path = a.config.expect("clap requires config or manifest");
    let mut config = RunConfig::load(&path)?;
    if a.out.is_some() {
        config.out = a.out;
    }
    let result = run_pipeline(&config)?;
    eprintln!(
        "{} units, {} records, {} excluded",
        result.n_units,
        result.measured.records.len(),
        result.measured.exclusions.len()
    );
    print!("{}", render_report(&result.estimates));
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let estimates = read_estimates_jsonl(open(&a.estimates)?)?;
    let text = render_report(&estimates);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), &text)?;
        write_plot_data(&estimates, create(&dir.join("plot_data.csv"))?)?;
    }
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MEDLANG_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Study(a) => cmd_study(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
