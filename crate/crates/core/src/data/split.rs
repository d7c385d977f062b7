//! Dataset-split shorthand such as `12346F-5BW`.
//!
//! Digits `1`..=`7` name Friends seasons (`s01`..`s07`); letters name the
//! movies: `B` bourne, `W` wolf, `F` figures, `L` life. A dash separates the
//! datasets the base models are fit on from those used to fit the stacking
//! weights.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CODES: [(char, &str); 11] = [
    ('1', "s01"),
    ('2', "s02"),
    ('3', "s03"),
    ('4', "s04"),
    ('5', "s05"),
    ('6', "s06"),
    ('7', "s07"),
    ('B', "bourne"),
    ('W', "wolf"),
    ('F', "figures"),
    ('L', "life"),
];

/// Tag for a shorthand character, if it is part of the alphabet.
pub fn tag_for_code(c: char) -> Option<&'static str> {
    CODES.iter().find(|(k, _)| *k == c).map(|(_, t)| *t)
}

/// Shorthand character for a tag, if it has one.
pub fn code_for_tag(tag: &str) -> Option<char> {
    CODES.iter().find(|(_, t)| *t == tag).map(|(k, _)| *k)
}

/// All tags of the alphabet in canonical order.
pub fn all_tags() -> impl Iterator<Item = &'static str> {
    CODES.iter().map(|(_, t)| *t)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub fit_tags: BTreeSet<String>,
    pub stack_tags: BTreeSet<String>,
    pub test_tags: BTreeSet<String>,
}

impl DatasetSplit {
    /// Parse `fit[-stack]`. Test tags are supplied separately, see
    /// [`parse_tag_segment`].
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.split('-');
        let fit = parts.next().unwrap_or_default();
        let stack = parts.next();
        if parts.next().is_some() {
            return Err(Error::Split(format!("{s:?} has more than one dash")));
        }
        let fit_tags = parse_tag_segment(fit)?;
        let stack_tags = match stack {
            Some(seg) => parse_tag_segment(seg)?,
            None => BTreeSet::new(),
        };
        Ok(Self {
            fit_tags,
            stack_tags,
            test_tags: BTreeSet::new(),
        })
    }

    pub fn with_test_tags(mut self, test: BTreeSet<String>) -> Self {
        self.test_tags = test;
        self
    }

    /// Fit and stacking data must not overlap for a stacked model to be
    /// estimated on held-out predictions.
    pub fn check_fit_stack_disjoint(&self) -> Result<()> {
        let overlap: Vec<&String> = self.fit_tags.intersection(&self.stack_tags).collect();
        if overlap.is_empty() {
            Ok(())
        } else {
            Err(Error::Split(format!(
                "fit and stack tags overlap: {}",
                overlap.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }

    /// Test data must be disjoint from everything used in fitting.
    pub fn check_test_held_out(&self) -> Result<()> {
        let used: BTreeSet<&String> = self.fit_tags.union(&self.stack_tags).collect();
        let leaked: Vec<&str> = self
            .test_tags
            .iter()
            .filter(|t| used.contains(t))
            .map(|s| s.as_str())
            .collect();
        if leaked.is_empty() {
            Ok(())
        } else {
            Err(Error::Split(format!(
                "test tags also used for fitting: {}",
                leaked.join(", ")
            )))
        }
    }

    /// Canonical shorthand: alphabet order within each segment.
    pub fn to_shorthand(&self) -> String {
        let fit = canonical_segment(&self.fit_tags);
        if self.stack_tags.is_empty() {
            fit
        } else {
            format!("{fit}-{}", canonical_segment(&self.stack_tags))
        }
    }
}

impl fmt::Display for DatasetSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_shorthand())
    }
}

/// Parse one dash-free segment (e.g. `5BW`) into its tag set.
pub fn parse_tag_segment(seg: &str) -> Result<BTreeSet<String>> {
    if seg.is_empty() {
        return Err(Error::Split("empty segment".into()));
    }
    let mut tags = BTreeSet::new();
    for c in seg.chars() {
        let tag = tag_for_code(c)
            .ok_or_else(|| Error::Split(format!("unknown character {c:?} in {seg:?}")))?;
        if !tags.insert(tag.to_string()) {
            return Err(Error::Split(format!("duplicate character {c:?} in {seg:?}")));
        }
    }
    Ok(tags)
}

fn canonical_segment(tags: &BTreeSet<String>) -> String {
    CODES
        .iter()
        .filter(|(_, t)| tags.contains(*t))
        .map(|(c, _)| *c)
        .collect()
}
