//! Item, review and user prompt templates.

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use super::{AspectCatalog, AspectError, Domain};
use crate::corpus::{Interaction, ItemRecord};

pub const DEFAULT_MAX_REVIEWS: usize = 10;

const RATING_PLACEHOLDER: &str = "<rating>";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}

/// Domain wording substituted into the templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Persona {
    pub critic: &'static str,
    pub recommender: &'static str,
    pub noun: &'static str,
}

impl Persona {
    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Movies => Persona {
                critic: "movie critic",
                recommender: "movie recommender",
                noun: "movie",
            },
            Domain::Clothing => Persona {
                critic: "fashion critic",
                recommender: "fashion recommender",
                noun: "clothing item",
            },
            Domain::Games => Persona {
                critic: "video game critic",
                recommender: "video game recommender",
                noun: "video game",
            },
            Domain::Custom => Persona {
                critic: "product critic",
                recommender: "product recommender",
                noun: "product",
            },
        }
    }

    fn article(&self) -> &'static str {
        match self.noun.as_bytes().first() {
            Some(b'a' | b'e' | b'i' | b'o' | b'u') => "an",
            _ => "a",
        }
    }
}

fn indent(text: &str, width: usize) -> String {
    let pad = " ".repeat(width);
    text.lines()
        .map(|l| format!("{pad}{l}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn scoring_and_format_blocks(catalog: &AspectCatalog) -> (String, String) {
    let scoring = catalog
        .aspects()
        .iter()
        .map(|a| format!("{}: {}", a.name, a.description))
        .collect::<Vec<_>>()
        .join("\n");
    let format = catalog
        .names()
        .map(|n| format!("{n}: {RATING_PLACEHOLDER}"))
        .collect::<Vec<_>>()
        .join("\n");
    (scoring, format)
}

fn response_instructions(format_block: &str) -> String {
    format!(
        "Your response should be in the following format, where {RATING_PLACEHOLDER} is a number between 1 and 10:\n\
         {format_block}\n\nDo NOT include any other information in your response."
    )
}

/// Renders the metadata block describing one item.
pub fn render_item_text(item: &ItemRecord) -> String {
    let mut blocks = vec![format!("title:\n{}", indent(&item.title, 2))];
    if !item.description.trim().is_empty() {
        blocks.push(format!("description:\n{}", indent(&item.description, 2)));
    }
    if let Some(avg) = item.average_rating {
        let line = match item.rating_count {
            Some(n) => format!("{avg:.1}/5.0 ({n} users)"),
            None => format!("{avg:.1}/5.0"),
        };
        blocks.push(format!("rating:\n  {line}"));
    }
    if !item.categories.is_empty() {
        blocks.push(format!(
            "categories:\n{}",
            indent(&item.categories.join("\n"), 2)
        ));
    }
    if !item.details.is_empty() {
        let lines: Vec<String> = item
            .details
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect();
        blocks.push(format!("details:\n{}", indent(&lines.join("\n"), 2)));
    }
    blocks.join("\n")
}

fn review_date(timestamp_ms: i64) -> String {
    DateTime::from_timestamp_millis(timestamp_ms)
        .map(|t| t.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Renders one review, with the reviewed item nested under `product:`.
pub fn render_review_text(review: &Interaction, item: &ItemRecord) -> String {
    format!(
        "rating:\n  {:.1}\nreviewTime:\n  {}\nsummary:\n{}\nreviewText:\n{}\nproduct:\n{}",
        review.rating,
        review_date(review.timestamp),
        indent(&review.summary, 2),
        indent(&review.review_text, 2),
        indent(&render_item_text(item), 2),
    )
}

pub fn render_item_prompt(item: &ItemRecord, catalog: &AspectCatalog) -> PromptPair {
    let persona = Persona::for_domain(catalog.domain);
    let (scoring, format) = scoring_and_format_blocks(catalog);
    let (a, noun) = (persona.article(), persona.noun);
    let system = format!(
        "You are a {critic}. You have been asked to review {a} {noun}. \n\n\
         You should rate the {noun} on a scale of 1 to 10 (1 is the most negative and 10 is the most positive) on the following dimensions:\n\
         {scoring}\n\n{instructions}",
        critic = persona.critic,
        instructions = response_instructions(&format),
    );
    let user = format!(
        "Here is some information about {a} {noun}:\n{}",
        render_item_text(item)
    );
    PromptPair { system, user }
}

/// Renders the user prompt from the most recent `max_reviews` reviews,
/// oldest first.
pub fn render_user_prompt(
    history: &[(&Interaction, &ItemRecord)],
    catalog: &AspectCatalog,
    max_reviews: usize,
) -> Result<PromptPair, AspectError> {
    if history.is_empty() {
        return Err(AspectError::EmptyHistory);
    }
    let persona = Persona::for_domain(catalog.domain);
    let (scoring, format) = scoring_and_format_blocks(catalog);
    let (a, noun) = (persona.article(), persona.noun);
    let system = format!(
        "You are a {recommender}. You will be given some previous {noun} reviews of a user. \
         You have been asked to recommend {a} {noun} to the user.\n\n\
         You should rate the {noun} which you think the user will like on a scale of 1 to 10 (1 is the least likely and 10 is the most likely) on the following dimensions:\n\
         {scoring}\n\n{instructions}",
        recommender = persona.recommender,
        instructions = response_instructions(&format),
    );
    let start = history.len().saturating_sub(max_reviews.max(1));
    let reviews = history[start..]
        .iter()
        .enumerate()
        .map(|(idx, (review, item))| {
            format!(
                "review {}:\n{}",
                idx + 1,
                indent(&render_review_text(review, item), 2)
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let user = format!("Here are some previous {noun} reviews of the user:\n{reviews}");
    Ok(PromptPair { system, user })
}

/// Aspect names listed in a system prompt's response-format block, in order.
pub fn format_block_names(system: &str) -> Vec<String> {
    let suffix = format!(": {RATING_PLACEHOLDER}");
    system
        .lines()
        .filter_map(|l| l.strip_suffix(&suffix))
        .filter(|name| !name.contains("<rating> is"))
        .map(str::to_string)
        .collect()
}
