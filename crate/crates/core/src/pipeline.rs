//! Stage wiring for a full run, plus the per-stage entry points the CLI
//! exposes for resuming from persisted intermediates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::abstraction::{abstract_all, AbstractionAdapters, AbstractionConfig, Agreement, ScoredCandidate};
use crate::config::PipelineConfig;
use crate::corpus::{load_corpus, sample_seeds, write_json_lines, write_jsonl, Corpus, CorpusRecord, Role};
use crate::dp::{normalize_similarity, select_for_corpus, PrivacyParams, SeedCandidates, SelectionReceipt};
use crate::error::{Error, Result};
use crate::generation::{self, build_prompt, DatasetProfile, Embedder, GenStage, GenerationParams, SentimentClassifier, TextGenerator};
use crate::metrics::{evaluate, MetricReport};
use crate::mia::{make_split, run_attacks, MembershipSplit, MiaReport};
use crate::pii::{self, PiiCategory};
use crate::refinement::{refine, RefinementReport};
use crate::rng::RngStream;
use crate::surrogate::corpus_fingerprint;

pub const REPORT_SCHEMA: &str = "rpsg.report.v1";
pub const MANIFEST_SCHEMA: &str = "rpsg.manifest.v1";

/// The external models a run talks to.
#[derive(Clone)]
pub struct Adapters {
    pub abstractor: Arc<dyn TextGenerator>,
    pub synthesizer: Arc<dyn TextGenerator>,
    pub embedder: Arc<dyn Embedder>,
    pub sentiment: Arc<dyn SentimentClassifier>,
}

impl Adapters {
    pub fn from_config(cfg: &PipelineConfig, unsafe_debug: bool) -> Self {
        Self {
            abstractor: cfg.abstractor().build_generator(unsafe_debug),
            synthesizer: cfg.synthesizer().build_generator(unsafe_debug),
            embedder: cfg.embedder.build_embedder(unsafe_debug),
            sentiment: cfg.sentiment.build_sentiment(unsafe_debug),
        }
    }
}

/// A scored abstraction candidate as stored in `candidates.jsonl`: the
/// record fields plus its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLine {
    #[serde(flatten)]
    pub record: CorpusRecord,
    pub rank: usize,
    pub cosine: f64,
    pub confidence: f64,
    pub agreement: Agreement,
    pub score: f64,
}

impl CandidateLine {
    fn new(rank: usize, c: ScoredCandidate) -> Self {
        Self {
            record: c.record,
            rank,
            cosine: c.cosine,
            confidence: c.confidence,
            agreement: c.agreement,
            score: c.score,
        }
    }
}

pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// The private corpus named by `[data]`.
pub fn load_private(cfg: &PipelineConfig) -> Result<Corpus> {
    let path = cfg.data.private.as_deref().ok_or_else(|| Error::invalid("[data].private is not set"))?;
    let corpus = load_corpus(path, cfg.data.resolved_format())?;
    if corpus.is_empty() {
        return Err(Error::invalid("private corpus is empty"));
    }
    Ok(corpus)
}

/// The run's seed set, drawn from the `seeds` substream.
pub fn select_seeds(cfg: &PipelineConfig, corpus: &Corpus) -> Result<Corpus> {
    let n = cfg.data.n_seeds.unwrap_or(corpus.len());
    sample_seeds(corpus, n, &mut RngStream::root(cfg.run.seed).derive("seeds"))
}

/// Member/nonmember split whose members are the run's seeds. A `[mia]`
/// member count other than the seed count draws a different member set.
pub fn membership_split(cfg: &PipelineConfig, corpus: &Corpus) -> Result<MembershipSplit> {
    let n_seeds = cfg.data.n_seeds.unwrap_or(corpus.len());
    let members = match cfg.mia.members {
        Some(m) => m.resolve(corpus.len())?,
        None => n_seeds,
    };
    if members != n_seeds {
        log::warn!("[mia].members = {members} differs from the seed count {n_seeds}; members are not the seeds");
    }
    make_split(corpus, members, cfg.mia.balanced, &mut RngStream::root(cfg.run.seed).derive("seeds"))
}

/// Redacts structured PII from each seed before anything leaves the process.
pub fn redact_seeds(seeds: &[CorpusRecord]) -> (Vec<CorpusRecord>, BTreeMap<PiiCategory, usize>) {
    let mut counts = BTreeMap::new();
    let out = seeds
        .iter()
        .map(|s| {
            let r = pii::redact(&s.text);
            for (c, n) in r.counts {
                *counts.entry(c).or_default() += n;
            }
            CorpusRecord { text: r.text, ..s.clone() }
        })
        .collect();
    (out, counts)
}

pub fn run_abstraction(
    seeds: &[CorpusRecord],
    adapters: &Adapters,
    params: &GenerationParams,
    retries: u32,
    cfg: &AbstractionConfig,
    rng: &RngStream,
) -> Result<Vec<CandidateLine>> {
    let a = AbstractionAdapters {
        generator: adapters.abstractor.as_ref(),
        sentiment: adapters.sentiment.as_ref(),
        embedder: adapters.embedder.as_ref(),
        retries,
    };
    let per_seed = abstract_all(seeds, a, params, cfg, rng)?;
    Ok(per_seed
        .into_iter()
        .flat_map(|cands| cands.into_iter().enumerate().map(|(i, c)| CandidateLine::new(i, c)))
        .collect())
}

/// One DP-protected candidate per seed, in first-appearance seed order.
pub fn run_selection(
    candidates: &[CandidateLine],
    params: &PrivacyParams,
    rng: &RngStream,
) -> Result<(Vec<CorpusRecord>, Vec<SelectionReceipt>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&CandidateLine>> = BTreeMap::new();
    for c in candidates {
        let seed = c
            .record
            .lineage
            .clone()
            .ok_or_else(|| Error::invalid(format!("candidate {} has no seed lineage", c.record.id)))?;
        if !groups.contains_key(&seed) {
            order.push(seed.clone());
        }
        groups.entry(seed).or_default().push(c);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|c| c.rank);
    }
    let seeds: Vec<SeedCandidates> = order
        .iter()
        .map(|s| SeedCandidates {
            seed_id: s.clone(),
            utilities: groups[s].iter().map(|c| normalize_similarity(c.cosine)).collect(),
        })
        .collect();
    let receipts = select_for_corpus(&seeds, params, rng)?;
    let dpc = receipts
        .iter()
        .map(|r| {
            let c = groups[&r.seed_id][r.selected];
            CorpusRecord {
                role: Role::DpCandidate,
                ..c.record.clone()
            }
        })
        .collect();
    Ok((dpc, receipts))
}

fn seed_of(r: &CorpusRecord) -> &str {
    r.id.split('.').next().unwrap_or(&r.id)
}

/// One variant per DP candidate.
pub fn run_variants(
    dpc: &[CorpusRecord],
    generator: &dyn TextGenerator,
    params: &GenerationParams,
    profile: DatasetProfile,
    rng: &RngStream,
) -> Result<Vec<CorpusRecord>> {
    dpc.par_iter()
        .map(|d| {
            let stage = |e: Error| e.in_stage("variants", &d.id);
            let prompt = build_prompt(GenStage::Variant, profile, &d.text).map_err(stage)?;
            let text = generation::generate(generator, &prompt, params, &mut rng.derive(&d.id)).map_err(stage)?;
            Ok(CorpusRecord {
                id: format!("{}.v", seed_of(d)),
                text,
                sentiment: d.sentiment,
                role: Role::Variant,
                lineage: Some(d.id.clone()),
            })
        })
        .collect()
}

/// `per_variant` synthetic records per variant.
pub fn run_synthetic(
    variants: &[CorpusRecord],
    per_variant: usize,
    generator: &dyn TextGenerator,
    params: &GenerationParams,
    profile: DatasetProfile,
    rng: &RngStream,
) -> Result<Vec<CorpusRecord>> {
    let jobs: Vec<(&CorpusRecord, usize)> = variants.iter().flat_map(|v| (0..per_variant).map(move |j| (v, j))).collect();
    jobs.par_iter()
        .map(|&(v, j)| {
            let id = format!("{}.s{j:02}", seed_of(v));
            let stage = |e: Error| e.in_stage("synthetic", &id);
            let prompt = build_prompt(GenStage::Synthetic, profile, &v.text).map_err(stage)?;
            let text = generation::generate(generator, &prompt, params, &mut rng.derive(&id)).map_err(stage)?;
            Ok(CorpusRecord {
                id,
                text,
                sentiment: v.sentiment,
                role: Role::Synthetic,
                lineage: Some(v.id.clone()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub input: usize,
    pub output: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub config: PipelineConfig,
    pub private_count: Option<usize>,
    pub seed_ids: Vec<String>,
    pub seed_fingerprint: Option<String>,
    pub seed_pii_redactions: BTreeMap<PiiCategory, usize>,
    pub privacy: Option<PrivacyParams>,
    pub selections: Vec<SelectionReceipt>,
    pub stages: Vec<StageCount>,
    pub tau: Option<f64>,
    pub refinement: Option<RefinementReport>,
    pub metrics: Option<MetricReport>,
    pub mia: Option<MiaReport>,
    pub mia_auc: BTreeMap<String, f64>,
    pub mia_skipped: Option<String>,
    pub pii_leak_rate: Option<f64>,
    pub outputs: Vec<OutputFile>,
}

impl RunReport {
    fn new(cfg: &PipelineConfig) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            complete: false,
            failed_stage: None,
            error: None,
            config: cfg.clone(),
            private_count: None,
            seed_ids: Vec::new(),
            seed_fingerprint: None,
            seed_pii_redactions: BTreeMap::new(),
            privacy: None,
            selections: Vec::new(),
            stages: Vec::new(),
            tau: None,
            refinement: None,
            metrics: None,
            mia: None,
            mia_auc: BTreeMap::new(),
            mia_skipped: None,
            pii_leak_rate: None,
            outputs: Vec::new(),
        }
    }

    fn count(&mut self, stage: &str, input: usize, output: usize) {
        self.stages.push(StageCount {
            stage: stage.into(),
            input,
            output,
        });
    }

    pub fn stage(&self, name: &str) -> Option<&StageCount> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub report: RunReport,
    /// Refined id → private seed id; present only with lineage emission.
    pub lineage: Option<BTreeMap<String, String>>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub refined: Vec<CorpusRecord>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    adapters: &'a Adapters,
    out: PathBuf,
    report: RunReport,
    lineage: BTreeMap<String, String>,
}

impl Run<'_> {
    fn persist<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<()> {
        let path = self.out.join(name);
        write_json_lines(items, &path)?;
        self.report.outputs.push(OutputFile {
            name: name.into(),
            records: items.len(),
            sha256: sha256_file(&path)?,
        });
        Ok(())
    }

    fn stages(&mut self) -> std::result::Result<Vec<CorpusRecord>, (&'static str, Error)> {
        let cfg = self.cfg;
        let root = RngStream::root(cfg.run.seed);
        let at = |stage: &'static str| move |e: Error| (stage, e);

        let corpus = load_private(cfg).map_err(at("load"))?;
        self.report.private_count = Some(corpus.len());
        let n_seeds = cfg.data.n_seeds.unwrap_or(corpus.len());
        let seeds = select_seeds(cfg, &corpus).map_err(at("seeds"))?;
        self.report.count("seeds", corpus.len(), seeds.len());
        self.report.seed_ids = seeds.iter().map(|r| r.id.clone()).collect();
        self.report.seed_fingerprint = Some(corpus_fingerprint(&seeds.texts()));

        let (redacted, pii_counts) = redact_seeds(seeds.records());
        self.report.seed_pii_redactions = pii_counts;
        self.report.count("seed_pii", seeds.len(), redacted.len());

        let abs = cfg.abstractor();
        let candidates = run_abstraction(
            &redacted,
            self.adapters,
            &abs.params(),
            cfg.embedder.retries.max(cfg.sentiment.retries),
            &cfg.abstraction,
            &root.derive("abstraction"),
        )
        .map_err(at("abstraction"))?;
        self.report.count("abstraction", redacted.len(), candidates.len());
        self.persist("candidates.jsonl", &candidates).map_err(at("abstraction"))?;

        let privacy = cfg.privacy.params(corpus.len()).map_err(at("selection"))?;
        self.report.privacy = Some(privacy);
        let (dpc, receipts) = run_selection(&candidates, &privacy, &root.derive("dp")).map_err(at("selection"))?;
        self.report.count("selection", candidates.len(), dpc.len());
        self.report.selections = receipts;
        self.persist("dpc.jsonl", &dpc).map_err(at("selection"))?;

        let syn_cfg = cfg.synthesizer();
        let params = syn_cfg.params();
        let variants = run_variants(
            &dpc,
            self.adapters.synthesizer.as_ref(),
            &params,
            cfg.data.profile,
            &root.derive("variants"),
        )
        .map_err(at("variants"))?;
        self.report.count("variants", dpc.len(), variants.len());
        self.persist("variants.jsonl", &variants).map_err(at("variants"))?;

        let synthetic = run_synthetic(
            &variants,
            cfg.data.synthetic_per_variant,
            self.adapters.synthesizer.as_ref(),
            &params,
            cfg.data.profile,
            &root.derive("synthetic"),
        )
        .map_err(at("synthetic"))?;
        self.report.count("synthetic", variants.len(), synthetic.len());
        self.persist("synthetic.jsonl", &synthetic).map_err(at("synthetic"))?;
        for s in &synthetic {
            let seed = seed_of(s).to_string();
            self.lineage.insert(s.id.clone(), seed);
        }

        let refined = refine(
            &variants,
            &synthetic,
            seeds.records(),
            self.adapters.embedder.as_ref(),
            cfg.embedder.retries,
            &cfg.refinement,
        )
        .map_err(at("refinement"))?;
        for t in &refined.report.traces {
            self.report.count(&t.stage, t.input, t.output);
        }
        self.report.count("refined", synthetic.len(), refined.records.len());
        self.report.tau = Some(refined.report.tau);
        self.report.refinement = Some(refined.report.clone());
        let kept: std::collections::HashSet<&str> = refined.records.iter().map(|r| r.id.as_str()).collect();
        self.lineage.retain(|id, _| kept.contains(id.as_str()));
        self.persist("refined.jsonl", &refined.records).map_err(at("refinement"))?;

        let refined_corpus = Corpus::new(refined.records.clone()).map_err(at("pii"))?;
        self.report.pii_leak_rate = Some(pii::leak_rate(&refined_corpus).map_err(at("pii"))?);

        let refined_texts = refined_corpus.texts();
        let metrics = evaluate(
            &refined_texts,
            &seeds.texts(),
            self.adapters.embedder.as_ref(),
            cfg.embedder.retries,
            &cfg.metrics,
            &root.derive("metrics"),
        )
        .map_err(at("metrics"))?;
        self.report.metrics = Some(metrics);

        if n_seeds >= corpus.len() {
            self.report.mia_skipped = Some("every private record is a seed; no nonmembers remain".into());
        } else {
            let split = membership_split(cfg, &corpus).map_err(at("mia"))?;
            let mia = run_attacks(&refined_texts, &split, &cfg.refinement.surrogate(), &cfg.mia, &root.derive("mia"))
                .map_err(at("mia"))?;
            for a in &mia.attacks {
                self.report.mia_auc.insert(a.attack.name().into(), a.auc);
            }
            self.report.mia = Some(mia);
        }
        Ok(refined.records)
    }
}

/// Runs every stage, writing intermediates, `report.json` and
/// `manifest.json` under `out_dir`. On failure the report is still written,
/// marked incomplete, and the stage error is returned.
pub fn run_pipeline(cfg: &PipelineConfig, adapters: &Adapters, out_dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut run = Run {
        cfg,
        adapters,
        out: out_dir.to_path_buf(),
        report: RunReport::new(cfg),
        lineage: BTreeMap::new(),
    };
    let result = pool(cfg.run.jobs)?.install(|| run.stages());
    let err = match result {
        Ok(refined) => {
            run.report.complete = true;
            Ok(refined)
        }
        Err((stage, e)) => {
            log::error!("stage {stage} failed: {e}");
            run.report.failed_stage = Some(stage.into());
            run.report.error = Some(e.to_string());
            Err(e)
        }
    };
    write_json(&run.report, &out_dir.join("report.json"))?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        report: run.report.clone(),
        lineage: cfg.run.emit_lineage.then(|| run.lineage.clone()),
    };
    write_json(&manifest, &out_dir.join("manifest.json"))?;
    err.map(|refined| RunOutcome {
        report: run.report,
        refined,
    })
}

/// Writes a record corpus as JSONL; shared by the CLI stage commands.
pub fn save_records(records: &[CorpusRecord], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_jsonl(records, path)
}
