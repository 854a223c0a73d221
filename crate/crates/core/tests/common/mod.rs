#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;

use rpsg_core::config::{AdapterConfig, AdapterKind, PipelineConfig};
use rpsg_core::corpus::save_jsonl;
use rpsg_core::demo::demo_corpus;
use rpsg_core::generation::prompt::template;
use rpsg_core::generation::stub::ShuffleGenerator;
use rpsg_core::generation::{AdapterResult, DatasetProfile, GenStage, GenerationParams, Prompt, TextGenerator};
use rpsg_core::pipeline::Adapters;
use rpsg_core::rng::RngStream;

/// Writes a demo corpus of `n` records into `dir` and returns its path.
pub fn write_demo(dir: &Path, n: usize, pii_rate: f64, seed: u64) -> PathBuf {
    let corpus = demo_corpus(n, pii_rate, &mut RngStream::new(seed, "demo")).unwrap();
    let path = dir.join("private.jsonl");
    save_jsonl(&corpus, &path).unwrap();
    path
}

pub fn stub(kind: AdapterKind) -> AdapterConfig {
    AdapterConfig {
        kind,
        ..AdapterConfig::default()
    }
}

/// Stub-only configuration over `private`.
pub fn stub_config(private: PathBuf, n_seeds: usize, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.data.private = Some(private);
    cfg.data.n_seeds = Some(n_seeds);
    cfg.generator = stub(AdapterKind::StubSynonym);
    cfg.synthesizer = Some(stub(AdapterKind::StubShuffle));
    cfg.embedder = stub(AdapterKind::Stub);
    cfg.sentiment = stub(AdapterKind::Stub);
    cfg.run.out_dir = out.to_path_buf();
    cfg
}

/// Identity for abstraction and variants. For synthetic prompts it returns
/// the input verbatim with probability `copy_rate` and a word shuffle
/// otherwise, then appends `suffix`.
pub struct CopyOrShuffle {
    pub copy_rate: f64,
    pub suffix: Option<String>,
}

impl TextGenerator for CopyOrShuffle {
    fn complete(&self, prompt: &Prompt, params: &GenerationParams, rng: &mut RngStream) -> AdapterResult<String> {
        let synthetic = [DatasetProfile::RedditStyle, DatasetProfile::PubmedStyle]
            .iter()
            .any(|&p| prompt.instruction.as_deref() == Some(template(p, GenStage::Synthetic)));
        if !synthetic {
            return Ok(prompt.input.clone());
        }
        let mut out = if rng.random::<f64>() < self.copy_rate {
            prompt.input.clone()
        } else {
            ShuffleGenerator.complete(prompt, params, rng)?
        };
        if let Some(s) = &self.suffix {
            out.push(' ');
            out.push_str(s);
        }
        Ok(out)
    }
}

/// Stub adapters from `cfg`, with both generators replaced by `gen`.
pub fn with_generator(cfg: &PipelineConfig, gen: CopyOrShuffle) -> Adapters {
    let gen: Arc<dyn TextGenerator> = Arc::new(gen);
    Adapters {
        abstractor: gen.clone(),
        synthesizer: gen,
        ..Adapters::from_config(cfg, false)
    }
}
