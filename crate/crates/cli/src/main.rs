use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rpsg_core::config::PipelineConfig;
use rpsg_core::corpus::{load_corpus, read_json_lines, write_json_lines, Corpus, CorpusRecord, Format};
use rpsg_core::demo::demo_corpus;
use rpsg_core::dp::{compute_delta, PrivacyParams};
use rpsg_core::error::{ConfigViolation, Error, ErrorClass, Result};
use rpsg_core::metrics::evaluate;
use rpsg_core::mia::run_attacks;
use rpsg_core::pii;
use rpsg_core::pipeline::{
    load_private, membership_split, pool, redact_seeds, run_abstraction, run_pipeline, run_selection, run_synthetic,
    run_variants, select_seeds, Adapters, CandidateLine,
};
use rpsg_core::refinement::refine;
use rpsg_core::rng::RngStream;

#[derive(Parser)]
#[command(name = "rpsg", version, about = "Privacy-preserving synthetic text generation")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides [run].out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// A positive number or "inf".
    #[arg(long, value_parser = parse_epsilon)]
    epsilon: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    emit_lineage: bool,
    /// Log full request bodies sent to remote adapters. They may contain private text.
    #[arg(long)]
    unsafe_debug: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print delta and sigma for a privacy budget.
    Calibrate {
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: f64,
        #[arg(long)]
        n_priv: usize,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        sensitivity: f64,
    },
    /// Redact seeds and write scored abstraction candidates.
    Abstract(Common),
    /// Pick one candidate per seed with the Gaussian mechanism.
    Select(Common),
    /// Generate variants and synthetic records from the selected candidates.
    Generate(Common),
    /// Deduplicate, filter and redact the synthetic pool.
    Refine(Common),
    /// Utility and diversity metrics of a corpus against the seeds.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to refined.jsonl in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Membership-inference attacks against a surrogate trained on a corpus.
    Mia {
        #[command(flatten)]
        common: Common,
        /// Defaults to refined.jsonl in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Count PII entities in a corpus file.
    PiiScan {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Every stage end to end, with report.json and manifest.json.
    Run(Common),
    /// Write a labeled synthetic demo corpus.
    DemoCorpus {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        pii_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_epsilon(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    match s.parse::<f64>() {
        Ok(e) if e > 0.0 => Ok(e),
        _ => Err(format!("expected a positive number or \"inf\", got {s:?}")),
    }
}

fn config_error(key: &str, constraint: String) -> Error {
    Error::Config(vec![ConfigViolation {
        key: key.into(),
        constraint,
    }])
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(&c.config)
        .map_err(|e| config_error("<file>", format!("cannot read {}: {e}", c.config.display())))?;
    let mut cfg = PipelineConfig::from_toml(&text, c.config.parent())?;
    if let Some(out) = &c.out {
        cfg.run.out_dir = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.run.seed = seed;
    }
    if let Some(eps) = c.epsilon {
        cfg.privacy.epsilon = eps;
    }
    if let Some(jobs) = c.jobs {
        cfg.run.jobs = jobs;
    }
    if c.emit_lineage {
        cfg.run.emit_lineage = true;
    }
    cfg.validate()
}

/// Loaded config plus what every stage command needs.
struct Stage {
    cfg: PipelineConfig,
    adapters: Adapters,
    root: RngStream,
    out: PathBuf,
}

impl Stage {
    fn new(c: &Common) -> Result<Self> {
        let cfg = load_config(c)?;
        let adapters = Adapters::from_config(&cfg, c.unsafe_debug);
        let out = cfg.run.out_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| config_error("[run].out_dir", format!("{}: {e}", out.display())))?;
        Ok(Self {
            root: RngStream::root(cfg.run.seed),
            cfg,
            adapters,
            out,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn corpus_and_seeds(&self) -> Result<(Corpus, Corpus)> {
        let corpus = load_private(&self.cfg)?;
        let seeds = select_seeds(&self.cfg, &corpus)?;
        Ok((corpus, seeds))
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        pool(self.cfg.run.jobs)?.install(f)
    }
}

fn write_json(value: &impl serde::Serialize, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
}

fn cmd_abstract(c: &Common) -> Result<()> {
    let st = Stage::new(c)?;
    let (_, seeds) = st.corpus_and_seeds()?;
    let (redacted, redactions) = redact_seeds(seeds.records());
    let abs = st.cfg.abstractor();
    let retries = st.cfg.embedder.retries.max(st.cfg.sentiment.retries);
    let candidates = st.install(|| {
        run_abstraction(
            &redacted,
            &st.adapters,
            &abs.params(),
            retries,
            &st.cfg.abstraction,
            &st.root.derive("abstraction"),
        )
    })?;
    write_json_lines(&candidates, &st.path("candidates.jsonl"))?;
    print(json!({"seeds": seeds.len(), "candidates": candidates.len(), "seed_pii_redactions": redactions}));
    Ok(())
}

fn cmd_select(c: &Common) -> Result<()> {
    let st = Stage::new(c)?;
    let corpus = load_private(&st.cfg)?;
    let candidates: Vec<CandidateLine> = read_json_lines(&st.path("candidates.jsonl"))?;
    let privacy = st.cfg.privacy.params(corpus.len())?;
    let (dpc, receipts) = run_selection(&candidates, &privacy, &st.root.derive("dp"))?;
    write_json_lines(&dpc, &st.path("dpc.jsonl"))?;
    write_json(&receipts, &st.path("selections.json"))?;
    print(json!({"selected": dpc.len(), "privacy": privacy}));
    Ok(())
}

fn cmd_generate(c: &Common) -> Result<()> {
    let st = Stage::new(c)?;
    let dpc: Vec<CorpusRecord> = read_json_lines(&st.path("dpc.jsonl"))?;
    let params = st.cfg.synthesizer().params();
    let gen = st.adapters.synthesizer.as_ref();
    let profile = st.cfg.data.profile;
    let (variants, synthetic) = st.install(|| {
        let variants = run_variants(&dpc, gen, &params, profile, &st.root.derive("variants"))?;
        let per = st.cfg.data.synthetic_per_variant;
        let synthetic = run_synthetic(&variants, per, gen, &params, profile, &st.root.derive("synthetic"))?;
        Ok((variants, synthetic))
    })?;
    write_json_lines(&variants, &st.path("variants.jsonl"))?;
    write_json_lines(&synthetic, &st.path("synthetic.jsonl"))?;
    print(json!({"variants": variants.len(), "synthetic": synthetic.len()}));
    Ok(())
}

fn cmd_refine(c: &Common) -> Result<()> {
    let st = Stage::new(c)?;
    let (_, seeds) = st.corpus_and_seeds()?;
    let variants: Vec<CorpusRecord> = read_json_lines(&st.path("variants.jsonl"))?;
    let synthetic: Vec<CorpusRecord> = read_json_lines(&st.path("synthetic.jsonl"))?;
    let refined = st.install(|| {
        refine(
            &variants,
            &synthetic,
            seeds.records(),
            st.adapters.embedder.as_ref(),
            st.cfg.embedder.retries,
            &st.cfg.refinement,
        )
    })?;
    write_json_lines(&refined.records, &st.path("refined.jsonl"))?;
    write_json(&refined.report, &st.path("refinement.json"))?;
    let leak = pii::leak_rate(&Corpus::new(refined.records.clone())?)?;
    print(json!({
        "input": synthetic.len(),
        "refined": refined.records.len(),
        "tau": refined.report.tau,
        "pii_leak_rate": leak,
    }));
    Ok(())
}

fn input_texts(st: &Stage, input: Option<&Path>) -> Result<Vec<String>> {
    let path = input.map(Path::to_path_buf).unwrap_or_else(|| st.path("refined.jsonl"));
    let records: Vec<CorpusRecord> = read_json_lines(&path)?;
    Ok(records.into_iter().map(|r| r.text).collect())
}

fn cmd_eval(c: &Common, input: Option<&Path>) -> Result<()> {
    let st = Stage::new(c)?;
    let (_, seeds) = st.corpus_and_seeds()?;
    let texts = input_texts(&st, input)?;
    let report = st.install(|| {
        evaluate(
            &texts,
            &seeds.texts(),
            st.adapters.embedder.as_ref(),
            st.cfg.embedder.retries,
            &st.cfg.metrics,
            &st.root.derive("metrics"),
        )
    })?;
    write_json(&report, &st.path("metrics.json"))?;
    print(serde_json::to_value(&report)?);
    Ok(())
}

fn cmd_mia(c: &Common, input: Option<&Path>) -> Result<()> {
    let st = Stage::new(c)?;
    let corpus = load_private(&st.cfg)?;
    let texts = input_texts(&st, input)?;
    let split = membership_split(&st.cfg, &corpus)?;
    let report = st.install(|| {
        run_attacks(&texts, &split, &st.cfg.refinement.surrogate(), &st.cfg.mia, &st.root.derive("mia"))
    })?;
    write_json(&report, &st.path("mia.json"))?;
    let auc: serde_json::Map<String, serde_json::Value> =
        report.attacks.iter().map(|a| (a.attack.name().to_string(), json!(a.auc))).collect();
    print(json!({"members": report.members, "nonmembers": report.nonmembers, "auc": auc}));
    Ok(())
}

fn cmd_run(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let adapters = Adapters::from_config(&cfg, c.unsafe_debug);
    let out = run_pipeline(&cfg, &adapters, &cfg.run.out_dir)?;
    let r = &out.report;
    print(json!({
        "out_dir": cfg.run.out_dir,
        "refined": out.refined.len(),
        "stages": r.stages,
        "tau": r.tau,
        "sigma": r.privacy.map(|p| p.sigma),
        "pii_leak_rate": r.pii_leak_rate,
        "mia_auc": r.mia_auc,
        "mia_skipped": r.mia_skipped,
    }));
    Ok(())
}

fn cmd_calibrate(epsilon: f64, n_priv: usize, delta: Option<f64>, sensitivity: f64) -> Result<()> {
    let delta = match delta {
        Some(d) => d,
        None => compute_delta(n_priv)?,
    };
    let p = PrivacyParams::new(epsilon, delta, sensitivity)?;
    print(json!({
        "epsilon": if epsilon.is_infinite() { json!("inf") } else { json!(epsilon) },
        "n_priv": n_priv,
        "delta": p.delta,
        "sensitivity": p.sensitivity,
        "sigma": p.sigma,
    }));
    Ok(())
}

fn cmd_pii_scan(input: &Path, format: Option<&str>) -> Result<()> {
    let format = match format {
        Some("jsonl") => Format::Jsonl,
        Some("csv") => Format::Csv,
        Some(other) => return Err(Error::InvalidInput(format!("unknown format {other:?}"))),
        None if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => Format::Csv,
        None => Format::Jsonl,
    };
    let corpus = load_corpus(input, format)?;
    print(serde_json::to_value(pii::scan(&corpus)?)?);
    Ok(())
}

fn cmd_demo(n: usize, pii_rate: f64, seed: u64, output: &Path) -> Result<()> {
    let corpus = demo_corpus(n, pii_rate, &mut RngStream::new(seed, "demo"))?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    rpsg_core::corpus::save_jsonl(&corpus, output)?;
    print(json!({"records": corpus.len(), "output": output}));
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Adapter => 3,
        ErrorClass::Data => 4,
        ErrorClass::Other => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Calibrate {
            epsilon,
            n_priv,
            delta,
            sensitivity,
        } => cmd_calibrate(*epsilon, *n_priv, *delta, *sensitivity),
        Command::Abstract(c) => cmd_abstract(c),
        Command::Select(c) => cmd_select(c),
        Command::Generate(c) => cmd_generate(c),
        Command::Refine(c) => cmd_refine(c),
        Command::Eval { common, input } => cmd_eval(common, input.as_deref()),
        Command::Mia { common, input } => cmd_mia(common, input.as_deref()),
        Command::PiiScan { input, format } => cmd_pii_scan(input, format.as_deref()),
        Command::Run(c) => cmd_run(c),
        Command::DemoCorpus {
            n,
            pii_rate,
            seed,
            output,
        } => cmd_demo(*n, *pii_rate, *seed, output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_values() {
        assert_eq!(parse_epsilon("inf"), Ok(f64::INFINITY));
        assert_eq!(parse_epsilon(" Infinity "), Ok(f64::INFINITY));
        assert_eq!(parse_epsilon("0.5"), Ok(0.5));
        assert!(parse_epsilon("0").is_err());
        assert!(parse_epsilon("-1").is_err());
        assert!(parse_epsilon("nan").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
