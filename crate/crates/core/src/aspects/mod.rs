//! Aspect catalogs and prompt rendering.

mod catalog;
mod prompt;

use thiserror::Error;

pub use catalog::{
    builtin_catalog, generic_catalog, truncate_catalog, Aspect, AspectCatalog, Domain,
};
pub use prompt::{
    format_block_names, render_item_prompt, render_item_text, render_review_text,
    render_user_prompt, Persona, PromptPair, DEFAULT_MAX_REVIEWS,
};

#[derive(Debug, Error, PartialEq)]
pub enum AspectError {
    #[error("unknown domain {0:?}; valid domains are movies, clothing, games")]
    UnknownDomain(String),
    #[error("catalog must contain at least one aspect")]
    EmptyCatalog,
    #[error("aspect {0:?} has an empty or malformed name or description")]
    InvalidAspect(String),
    #[error("aspect {0:?} appears more than once")]
    DuplicateAspect(String),
    #[error("cannot truncate a catalog of {m} aspects to {k}")]
    TruncationOutOfRange { k: usize, m: usize },
    #[error("user history is empty")]
    EmptyHistory,
    #[error("catalog file: {0}")]
    CatalogFile(String),
}
