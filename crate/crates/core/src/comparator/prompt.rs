use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::types::{LanguageInstruction, Verdict};

pub const DEFAULT_TEMPLATE: &str = "\
Image 1: {IMAGE 1}
Image 2: {IMAGE 2}

The goal {LANGUAGE INSTRUCTION}.

Answer the following questions:
1. What is shown in Image 1?
2. What is shown in Image 2?
3. Is there any difference between Image 1 and Image 2 in terms of achieving the goal?
4. Is the goal better achieved in Image 1 or in Image 2? Explain your reasoning.

If the goal is better achieved in Image 2 than it is in Image 1, {FORMATTING INSTRUCTIONS}.
";

pub const FORMATTING_INSTRUCTIONS: &str = "\
finish your reply with the line \"ANSWER: 2\". \
If it is better achieved in Image 1, finish with the line \"ANSWER: 1\". \
If neither image is closer to the goal, or you cannot tell, finish with the line \"ANSWER: SAME\"";

const INSTRUCTION_SLOT: &str = "{LANGUAGE INSTRUCTION}";
const FORMATTING_SLOT: &str = "{FORMATTING INSTRUCTIONS}";
const IMAGE_SLOTS: [&str; 2] = ["{IMAGE 1}", "{IMAGE 2}"];

static ANSWER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)ANSWER:\s*(1|2|SAME)\b").expect("valid pattern"));

/// A validated prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        for slot in [INSTRUCTION_SLOT, FORMATTING_SLOT] {
            if !text.contains(slot) {
                return Err(Error::PromptTemplate(format!("template is missing the {slot} placeholder")));
            }
        }
        match (text.find(IMAGE_SLOTS[0]), text.find(IMAGE_SLOTS[1])) {
            (Some(a), Some(b)) if a < b => {}
            (Some(_), Some(_)) => {
                return Err(Error::PromptTemplate("{IMAGE 1} must precede {IMAGE 2}".into()));
            }
            _ => return Err(Error::PromptTemplate("template needs both {IMAGE 1} and {IMAGE 2}".into())),
        }
        Ok(Self { text })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes the instruction and formatting block. Image slots stay in
    /// place; attachments are sent in slot order.
    pub fn render(&self, instruction: &LanguageInstruction) -> String {
        self.text
            .replace(INSTRUCTION_SLOT, instruction.as_str())
            .replace(FORMATTING_SLOT, FORMATTING_INSTRUCTIONS)
    }
}

pub fn render_prompt(template: &str, instruction: &LanguageInstruction) -> Result<String> {
    Ok(PromptTemplate::new(template)?.render(instruction))
}

/// The last answer marker decides; text without one is `NoDecision`.
pub fn parse_response(raw_text: &str) -> Verdict {
    let last = ANSWER.captures_iter(raw_text).last();
    match last.map(|c| c[1].to_ascii_uppercase()) {
        Some(ref m) if m == "1" => Verdict::PreferFirst,
        Some(ref m) if m == "2" => Verdict::PreferSecond,
        Some(_) => Verdict::NoDecision,
        None => {
            log::warn!("comparator reply has no answer marker: {raw_text:?}");
            Verdict::NoDecision
        }
    }
}
