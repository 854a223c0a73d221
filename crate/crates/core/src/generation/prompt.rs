use serde::{Deserialize, Serialize};

use crate::corpus::Sentiment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetProfile {
    #[default]
    RedditStyle,
    PubmedStyle,
}

impl std::str::FromStr for DatasetProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reddit-style" | "reddit" => Ok(DatasetProfile::RedditStyle),
            "pubmed-style" | "pubmed" => Ok(DatasetProfile::PubmedStyle),
            other => Err(Error::invalid(format!("unknown dataset profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenStage {
    Variant,
    Synthetic,
}

impl std::str::FromStr for GenStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variant" => Ok(GenStage::Variant),
            "synthetic" => Ok(GenStage::Synthetic),
            other => Err(Error::invalid(format!("unknown generation stage {other:?}"))),
        }
    }
}

pub fn template(profile: DatasetProfile, stage: GenStage) -> &'static str {
    match (profile, stage) {
        (DatasetProfile::RedditStyle, GenStage::Variant) => {
            "Below is an abstracted self-disclosure statement. Use it to infer the original meaning and rewrite it into a realistic self-disclosure passage:"
        }
        (DatasetProfile::RedditStyle, GenStage::Synthetic) => {
            "Rephrase the following self-disclosure passage into a different but semantically similar version:"
        }
        (DatasetProfile::PubmedStyle, GenStage::Variant) => {
            "Below is an abstracted abstract of a medical research paper. Rewrite this and preserve the original meaning:"
        }
        (DatasetProfile::PubmedStyle, GenStage::Synthetic) => {
            "Rephrase the following sentences as an abstract for medical research paper:"
        }
    }
}

/// Tone prefix used ahead of abstraction when the seed's polarity is known.
pub fn control_phrase(sentiment: Option<Sentiment>) -> Option<&'static str> {
    match sentiment? {
        Sentiment::Positive => Some("Keep positive tone:"),
        Sentiment::Negative => Some("Keep negative tone:"),
    }
}

/// An instruction plus the text it applies to. Stub adapters only look at
/// `input`; remote adapters send the rendered string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub instruction: Option<String>,
    pub input: String,
}

impl Prompt {
    pub fn plain(input: impl Into<String>) -> Self {
        Self {
            instruction: None,
            input: input.into(),
        }
    }

    pub fn render(&self) -> String {
        match &self.instruction {
            Some(i) => format!("{i}\n{}", self.input),
            None => self.input.clone(),
        }
    }
}

pub fn build_prompt(stage: GenStage, profile: DatasetProfile, input: &str) -> Result<Prompt> {
    if input.trim().is_empty() {
        return Err(Error::invalid("prompt input text is empty"));
    }
    Ok(Prompt {
        instruction: Some(template(profile, stage).to_string()),
        input: input.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reddit_variant_prompt() {
        let p = build_prompt(GenStage::Variant, DatasetProfile::RedditStyle, "t").unwrap();
        assert_eq!(
            p.render(),
            "Below is an abstracted self-disclosure statement. Use it to infer the original meaning and rewrite it into a realistic self-disclosure passage:\nt"
        );
    }

    #[test]
    fn golden_templates() {
        let cases = [
            (DatasetProfile::RedditStyle, GenStage::Synthetic, "Rephrase the following self-disclosure passage into a different but semantically similar version:"),
            (DatasetProfile::PubmedStyle, GenStage::Variant, "Below is an abstracted abstract of a medical research paper. Rewrite this and preserve the original meaning:"),
            (DatasetProfile::PubmedStyle, GenStage::Synthetic, "Rephrase the following sentences as an abstract for medical research paper:"),
        ];
        for (p, s, want) in cases {
            assert_eq!(template(p, s), want);
            assert_eq!(build_prompt(s, p, "x").unwrap().render(), format!("{want}\nx"));
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(build_prompt(GenStage::Synthetic, DatasetProfile::PubmedStyle, " ").is_err());
    }

    #[test]
    fn control_phrases() {
        assert_eq!(control_phrase(Some(Sentiment::Positive)), Some("Keep positive tone:"));
        assert_eq!(control_phrase(Some(Sentiment::Negative)), Some("Keep negative tone:"));
        assert_eq!(control_phrase(None), None);
    }
}
