//! Tag percentage matching over externally supplied per-song tag sets.

use std::collections::BTreeMap;
use std::path::Path;

use super::EvalError;

pub type TagSet = std::collections::BTreeSet<String>;

/// Load `song_id,tag` lines into per-song tag sets.
pub fn load_song_tags(path: &Path) -> Result<BTreeMap<String, TagSet>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut tags: BTreeMap<String, TagSet> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (song, tag) = line.split_once(',').ok_or_else(|| EvalError::Line {
            path: path.display().to_string(),
            line: i + 1,
            what: "expected song_id,tag".to_string(),
        })?;
        tags.entry(song.trim().to_string())
            .or_default()
            .insert(tag.trim().to_string());
    }
    Ok(tags)
}

/// Tags of the user's liked songs ranked by occurrence count (descending,
/// ties alphabetical). The top-k preferred tags T_k are the first k entries.
pub fn ranked_tags<'a>(liked_song_tags: impl Iterator<Item = &'a TagSet>) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for set in liked_song_tags {
        for tag in set {
            *counts.entry(tag).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().map(|(t, _)| t.to_string()).collect()
}

/// Percentage of songs whose tag set intersects the preferred set:
/// `100/|S| · |{s : Tags(s) ∩ T_k ≠ ∅}|`.
pub fn percentage_matching(tag_sets: &[&TagSet], preferred: &TagSet) -> Result<f64, EvalError> {
    if tag_sets.is_empty() {
        return Err(EvalError::TooFewSeries { need: 1, got: 0 });
    }
    let matched = tag_sets
        .iter()
        .filter(|set| set.iter().any(|t| preferred.contains(t)))
        .count();
    Ok(100.0 * matched as f64 / tag_sets.len() as f64)
}

/// Arithmetic mean of per-user percentage-matching values.
pub fn avg_percentage_matching(per_user: &[f64]) -> f64 {
    if per_user.is_empty() {
        return 0.0;
    }
    per_user.iter().sum::<f64>() / per_user.len() as f64
}
