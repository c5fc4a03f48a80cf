//! Built-in aspect catalogs for the movies, clothing and games domains.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AspectError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Movies,
    Clothing,
    Games,
    Custom,
}

impl Domain {
    pub const BUILTIN: [Domain; 3] = [Domain::Movies, Domain::Clothing, Domain::Games];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Movies => "movies",
            Domain::Clothing => "clothing",
            Domain::Games => "games",
            Domain::Custom => "custom",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = AspectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "movies" => Ok(Domain::Movies),
            "clothing" => Ok(Domain::Clothing),
            "games" => Ok(Domain::Games),
            "custom" => Ok(Domain::Custom),
            _ => Err(AspectError::UnknownDomain(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Aspect {
    pub name: String,
    pub description: String,
}

impl Aspect {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
        }
    }
}

/// Ordered aspects; the order fixes guided-embedding coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AspectCatalog {
    pub domain: Domain,
    aspects: Vec<Aspect>,
}

impl AspectCatalog {
    pub fn new(domain: Domain, aspects: Vec<Aspect>) -> Result<Self, AspectError> {
        if aspects.is_empty() {
            return Err(AspectError::EmptyCatalog);
        }
        let mut seen = std::collections::HashSet::new();
        for a in &aspects {
            if a.name.trim().is_empty() || a.description.trim().is_empty() {
                return Err(AspectError::InvalidAspect(a.name.clone()));
            }
            if a.name.contains(':') || a.name.contains('\n') {
                return Err(AspectError::InvalidAspect(a.name.clone()));
            }
            if !seen.insert(a.name.to_lowercase()) {
                return Err(AspectError::DuplicateAspect(a.name.clone()));
            }
        }
        Ok(Self { domain, aspects })
    }

    pub fn aspects(&self) -> &[Aspect] {
        &self.aspects
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.aspects.iter().map(|a| a.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        let needle = name.trim().to_lowercase();
        self.aspects
            .iter()
            .position(|a| a.name.to_lowercase() == needle)
    }

    /// Stable hex digest of domain, names and descriptions.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.domain.as_str());
        for a in &self.aspects {
            hasher.update([0u8]);
            hasher.update(&a.name);
            hasher.update([1u8]);
            hasher.update(&a.description);
        }
        hex::encode(hasher.finalize())
    }

    /// Loads a custom catalog: a JSON array of `{name, description}` objects.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AspectError> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path)
            .map_err(|e| AspectError::CatalogFile(format!("{}: {e}", path.display())))?;
        let aspects: Vec<Aspect> = serde_json::from_str(&body)
            .map_err(|e| AspectError::CatalogFile(format!("{}: {e}", path.display())))?;
        Self::new(Domain::Custom, aspects)
    }
}

const MOVIES: [(&str, &str); 12] = [
    ("story complexity", "How intricate and multi-layered the storyline is (e.g., 1 for very simple, 10 for highly complex)."),
    ("dialogue complexity", "The sophistication of the conversations and monologues (e.g., 1 for simple, 10 for highly sophisticated)."),
    ("intellectual challenge", "How hard to understand the movie is for the audience (e.g., 1 for not challenging, 10 for very hard)."),
    ("emotional intensity", "The degree to which the movie elicits strong emotional responses (e.g., 1 for no emotional impact, 10 for deeply emotional)."),
    ("visual & auditory intensity", "The impact of visuals, special effects, and sound design (e.g., 1 for minimal impact, 10 for highly intense)."),
    ("tension level", "The suspense and edge-of-your-seat moments (e.g., 1 for no tension, 10 for extremely tense)."),
    ("pace", "The rhythm of the movie, from slow and reflective to fast and action-packed (e.g., 1 for very slow, 10 for very fast)."),
    ("realism vs. fantasy", "Rate from realism to fantasy (e.g., 1 for highly realistic, 10 for pure fantasy)."),
    ("historical vs. contemporary", "Rate from historical to contemporary (e.g., 1 for purely historical, 10 for completely modern)."),
    ("social value alignment", "The degree to which the movie reflects social values or conveys meaningful societal themes (e.g., 1 for no alignment, 10 for strong alignment)."),
    ("individual viewing vs. group viewing", "Rate based on suitability for watching alone vs. with a group (e.g., 1 for perfect for solo viewing, 10 for ideal for group viewing)."),
    ("movie length (duration)", "Evaluate how long is the movie (e.g., 1 for very short, 10 for very long)."),
];

const CLOTHING: [(&str, &str); 12] = [
    ("color brightness", "Bright colors vs. dark colors (e.g., 1 for dark, 10 for bright)."),
    ("color diversity", "Monochromatic vs. multicolored items (e.g., 1 for monochromatic, 10 for multicolored)."),
    ("complexity", "Simple design vs. intricate details (e.g., 1 for simple, 10 for intricate)."),
    ("shape or structure", "Loose vs. fitted designs (e.g., 1 for loose, 10 for fitted)."),
    ("formality", "Casual vs. formal wear (e.g., 1 for casual, 10 for formal)."),
    ("versatility", "Single-purpose vs. multipurpose items (e.g., 1 for single-purpose, 10 for multipurpose)."),
    ("trendiness", "Classic vs. trendy styles (e.g., 1 for classic, 10 for trendy)."),
    ("social class", "Items associated with a social message (e.g., 1 for no social message, 10 for social message)."),
    ("brand popularity", "Well-known vs. niche brands (e.g., 1 for niche, 10 for well-known)."),
    ("occasion suitability", "Everyday use vs. special occasion items (e.g., 1 for everyday, 10 for special occasion)."),
    ("storage features", "Availability of pockets, compartments, or zippers (e.g., 1 for no storage, 10 for multiple storage options)."),
    ("ease of care", "Machine washable vs. dry clean only, need Iron v.s. Iron-free (e.g., 1 for dry clean only, 10 for machine washable)."),
];

const GAMES: [(&str, &str); 12] = [
    ("difficulty level", "Easy to play vs. challenging to master (e.g., 1 for very easy, 10 for extremely challenging)."),
    ("genre popularity", "Niche genre vs. mainstream genre (e.g., 1 for niche, 10 for mainstream)."),
    ("game length", "Short play sessions vs. long campaigns (e.g., 1 for short, 10 for long)."),
    ("graphics quality", "Retro-style graphics vs. cutting-edge visuals (e.g., 1 for retro, 10 for cutting-edge)."),
    ("replay value", "Low replayability vs. high replayability (e.g., 1 for low, 10 for high)."),
    ("story depth", "Simple storylines vs. intricate narratives (e.g., 1 for simple, 10 for intricate)."),
    ("multiplayer focus", "Solo play vs. multiplayer emphasis (e.g., 1 for solo, 10 for multiplayer)."),
    ("accessibility", "Casual-friendly vs. requiring advanced skills/equipment (e.g., 1 for casual, 10 for advanced)."),
    ("gaming style and emotional resonance", "Relaxed exploration vs. competitive gameplay, Games that elicit strong emotions vs. neutral tones (e.g., 1 for relaxed, 10 for competitive)."),
    ("customization", "Games with deep customization options v.s. limited customization options (e.g., 1 for deep customization, 10 for limited customization)."),
    ("realism", "Preference for realistic simulations vs. fantasy settings (e.g., 1 for realistic, 10 for fantasy)."),
    ("achievement system", "Rich achievement integration vs. basic completion tracking (e.g., 1 for basic, 10 for rich)."),
];

pub fn builtin_catalog(domain: Domain) -> Result<AspectCatalog, AspectError> {
    let rows: &[(&str, &str)] = match domain {
        Domain::Movies => &MOVIES,
        Domain::Clothing => &CLOTHING,
        Domain::Games => &GAMES,
        Domain::Custom => return Err(AspectError::UnknownDomain(domain.to_string())),
    };
    AspectCatalog::new(
        domain,
        rows.iter().map(|(n, d)| Aspect::new(*n, *d)).collect(),
    )
}

/// Keeps the first `k` aspects in catalog order.
pub fn truncate_catalog(catalog: &AspectCatalog, k: usize) -> Result<AspectCatalog, AspectError> {
    if k == 0 || k > catalog.len() {
        return Err(AspectError::TruncationOutOfRange {
            k,
            m: catalog.len(),
        });
    }
    AspectCatalog::new(catalog.domain, catalog.aspects[..k].to_vec())
}

/// A catalog of `m` neutral aspects, for synthetic runs whose `m` does not
/// match a built-in table.
pub fn generic_catalog(m: usize) -> Result<AspectCatalog, AspectError> {
    AspectCatalog::new(
        Domain::Custom,
        (1..=m)
            .map(|j| {
                Aspect::new(
                    format!("aspect {j}"),
                    format!("Planted aspect number {j} (e.g., 1 for low, 10 for high)."),
                )
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn movies_order() {
        let c = builtin_catalog(Domain::Movies).unwrap();
        assert_eq!(c.len(), 12);
        let names: Vec<_> = c.names().take(3).collect();
        assert_eq!(
            names,
            [
                "story complexity",
                "dialogue complexity",
                "intellectual challenge"
            ]
        );
        assert!(c.aspects()[0]
            .description
            .starts_with("How intricate and multi-layered the storyline"));
    }

    #[test]
    fn games_and_clothing_contents() {
        let games = builtin_catalog(Domain::Games).unwrap();
        assert!(games.position("replay value").is_some());
        assert!(games.position("multiplayer focus").is_some());
        let clothing = builtin_catalog(Domain::Clothing).unwrap();
        let care = &clothing.aspects()[clothing.position("ease of care").unwrap()];
        assert!(care.description.contains("1 for dry clean only"));
    }

    #[test]
    fn unknown_domain_lists_valid_ones() {
        let err = "books".parse::<Domain>().unwrap_err();
        assert!(err.to_string().contains("movies, clothing, games"));
        assert!(builtin_catalog(Domain::Custom).is_err());
    }

    #[test]
    fn truncation_is_prefix() {
        let c = builtin_catalog(Domain::Movies).unwrap();
        assert_eq!(truncate_catalog(&c, 12).unwrap(), c);
        let three = truncate_catalog(&c, 3).unwrap();
        assert_eq!(three.aspects(), &c.aspects()[..3]);
        let six = truncate_catalog(&c, 6).unwrap();
        let nine = truncate_catalog(&c, 9).unwrap();
        assert_eq!(six.aspects(), &nine.aspects()[..6]);
        assert!(truncate_catalog(&c, 0).is_err());
        assert!(truncate_catalog(&c, 13).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let c = builtin_catalog(Domain::Movies).unwrap();
        assert_eq!(
            c.fingerprint(),
            builtin_catalog(Domain::Movies).unwrap().fingerprint()
        );
        assert_ne!(
            c.fingerprint(),
            truncate_catalog(&c, 11).unwrap().fingerprint()
        );
    }

    #[test]
    fn duplicate_names_rejected() {
        let dup = vec![Aspect::new("pace", "x"), Aspect::new("Pace", "y")];
        assert!(matches!(
            AspectCatalog::new(Domain::Custom, dup),
            Err(AspectError::DuplicateAspect(_))
        ));
    }
}
