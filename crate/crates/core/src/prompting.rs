//! Quality-level prompt construction.
//!
//! Each assessment task gets its own prompt set: a fixed template instantiated
//! once per quality level, ordered from worst to best, plus the initial prompt
//! the image was generated from. Keeping the two tasks on separate prompt sets
//! avoids steering both predictions with the same text.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which quality dimension is being assessed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Visual quality of the image itself.
    Perception,
    /// How well the image matches its initial prompt.
    Alignment,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskKind::Perception => write!(f, "perception"),
            TaskKind::Alignment => write!(f, "alignment"),
        }
    }
}

/// Prompt template family. Antonym and adjective describe visual quality
/// (perception task); adverb describes text-image correspondence (alignment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptScheme {
    /// "{ant} photo." with ant in [bad, good]. L = 2.
    Antonym,
    /// "A photo of {adj} quality." with adj in [bad, poor, fair, good, perfect]. L = 5.
    Adjective,
    /// "A photo that {adv} matches {pt}." with adv in [badly, poorly, fairly, well, perfectly]. L = 5.
    Adverb,
}

impl std::fmt::Display for PromptScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PromptScheme::Antonym => write!(f, "antonym"),
            PromptScheme::Adjective => write!(f, "adjective"),
            PromptScheme::Adverb => write!(f, "adverb"),
        }
    }
}

const ANTONYMS: [&str; 2] = ["bad", "good"];
const ADJECTIVES: [&str; 5] = ["bad", "poor", "fair", "good", "perfect"];
const ADVERBS: [&str; 5] = ["badly", "poorly", "fairly", "well", "perfectly"];

impl PromptScheme {
    /// Number of quality levels the scheme defines.
    pub fn levels(&self) -> usize {
        match self {
            PromptScheme::Antonym => ANTONYMS.len(),
            PromptScheme::Adjective => ADJECTIVES.len(),
            PromptScheme::Adverb => ADVERBS.len(),
        }
    }

    /// Level words in ascending quality order.
    pub fn level_words(&self) -> &'static [&'static str] {
        match self {
            PromptScheme::Antonym => &ANTONYMS,
            PromptScheme::Adjective => &ADJECTIVES,
            PromptScheme::Adverb => &ADVERBS,
        }
    }

    /// Whether the scheme applies to the given task.
    pub fn valid_for(&self, task: TaskKind) -> bool {
        match self {
            PromptScheme::Antonym | PromptScheme::Adjective => task == TaskKind::Perception,
            PromptScheme::Adverb => task == TaskKind::Alignment,
        }
    }

    /// Schemes usable for a task, in a fixed enumeration order.
    pub fn for_task(task: TaskKind) -> Vec<PromptScheme> {
        match task {
            TaskKind::Perception => vec![PromptScheme::Antonym, PromptScheme::Adjective],
            TaskKind::Alignment => vec![PromptScheme::Adverb],
        }
    }

    fn instantiate(&self, level_word: &str, initial_prompt: &str) -> String {
        match self {
            PromptScheme::Antonym => format!("{level_word} photo."),
            PromptScheme::Adjective => format!("A photo of {level_word} quality."),
            PromptScheme::Adverb => {
                format!("A photo that {level_word} matches {initial_prompt}.")
            }
        }
    }
}

/// The task-specific sentences for one image, worst quality first, together
/// with the initial prompt used to generate the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub task: TaskKind,
    pub scheme: PromptScheme,
    /// One sentence per quality level, index 0 = worst, last = best.
    pub sentences: Vec<String>,
    pub initial_prompt: String,
}

impl PromptSet {
    /// Number of quality levels L.
    pub fn levels(&self) -> usize {
        self.sentences.len()
    }
}

/// Builds the prompt set for a task from its scheme's frozen level words.
///
/// The initial prompt is inserted verbatim; no case or punctuation rewriting.
pub fn build_prompts(
    task: TaskKind,
    scheme: PromptScheme,
    initial_prompt: &str,
) -> Result<PromptSet> {
    build_prompts_with_levels(task, scheme, initial_prompt, None)
}

/// Like [`build_prompts`] but with an optional custom level-word list
/// (ascending quality). L is inferred from the list length.
pub fn build_prompts_with_levels(
    task: TaskKind,
    scheme: PromptScheme,
    initial_prompt: &str,
    custom_levels: Option<&[String]>,
) -> Result<PromptSet> {
    if !scheme.valid_for(task) {
        return Err(Error::Config(format!(
            "prompt scheme `{scheme}` is not valid for task `{task}`"
        )));
    }
    if initial_prompt.trim().is_empty() {
        return Err(Error::Input("initial prompt must not be empty".into()));
    }
    let sentences: Vec<String> = match custom_levels {
        Some(levels) => {
            if levels.len() < 2 {
                return Err(Error::Config(
                    "custom level list needs at least 2 entries".into(),
                ));
            }
            levels
                .iter()
                .map(|w| scheme.instantiate(w, initial_prompt))
                .collect()
        }
        None => scheme
            .level_words()
            .iter()
            .map(|w| scheme.instantiate(w, initial_prompt))
            .collect(),
    };
    Ok(PromptSet {
        task,
        scheme,
        sentences,
        initial_prompt: initial_prompt.to_string(),
    })
}
