//! Play-count triplets to rating triples and a per-user train/test split.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng::sub_rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {what}")]
    Line {
        path: String,
        line: usize,
        what: String,
    },
    #[error("thresholds must be strictly ascending, got {0:?}")]
    BadThresholds([u64; 4]),
    #[error("song {0:?} is not in the corpus")]
    UnknownSong(String),
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One raw `(user, song, play_count)` record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user_id: String,
    pub song_id: String,
    pub play_count: u64,
}

/// An indexed rating in 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingTriple {
    pub user: usize,
    pub song: usize,
    pub rating: u8,
}

/// Play-count breakpoints: rating = 1 + number of thresholds exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds(pub [u64; 4]);

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds([1, 2, 4, 8])
    }
}

impl Thresholds {
    pub fn new(values: [u64; 4]) -> Result<Self, DatasetError> {
        if values.windows(2).any(|w| w[0] >= w[1]) || values[0] == 0 {
            return Err(DatasetError::BadThresholds(values));
        }
        Ok(Thresholds(values))
    }
}

/// Indexed interactions with train/test rating folds.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub user_index: BTreeMap<String, usize>,
    pub song_index: BTreeMap<String, usize>,
    pub train: Vec<RatingTriple>,
    pub test: Vec<RatingTriple>,
    /// For each user, the set of song indices rated in the train fold.
    pub rated_by_user: Vec<HashSet<usize>>,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.user_index.len()
    }

    pub fn n_songs(&self) -> usize {
        self.song_index.len()
    }

    /// User ids ordered by index.
    pub fn user_ids(&self) -> Vec<&str> {
        let mut ids = vec![""; self.n_users()];
        for (id, &u) in &self.user_index {
            ids[u] = id;
        }
        ids
    }

    /// Candidate songs for recommendation: everything the user has not rated
    /// in train (or all songs when `include_rated`).
    pub fn candidates(&self, user: usize, include_rated: bool) -> Vec<usize> {
        (0..self.n_songs())
            .filter(|s| include_rated || !self.rated_by_user[user].contains(s))
            .collect()
    }
}

/// Load tab-separated `user_id  song_id  play_count` lines. Duplicate
/// `(user, song)` pairs are summed. Returns interactions sorted by
/// `(user_id, song_id)`.
pub fn load_triplets(path: &Path) -> Result<Vec<Interaction>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_triplets(&text, &path.display().to_string())
}

fn parse_triplets(text: &str, path: &str) -> Result<Vec<Interaction>, DatasetError> {
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |what: &str| DatasetError::Line {
            path: path.to_string(),
            line: i + 1,
            what: what.to_string(),
        };
        let mut parts = line.split('\t');
        let user = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| fail("missing user id"))?;
        let song = parts
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| fail("missing song id"))?;
        let count: u64 = parts
            .next()
            .ok_or_else(|| fail("missing play count"))?
            .trim()
            .parse()
            .map_err(|_| fail("play count is not a positive integer"))?;
        if count == 0 {
            return Err(fail("play count must be at least 1"));
        }
        *counts
            .entry((user.to_string(), song.to_string()))
            .or_insert(0) += count;
    }
    Ok(counts
        .into_iter()
        .map(|((user_id, song_id), play_count)| Interaction {
            user_id,
            song_id,
            play_count,
        })
        .collect())
}

/// Keep only users who interacted with at least `min_unique` distinct songs.
pub fn filter_users(interactions: Vec<Interaction>, min_unique: usize) -> Vec<Interaction> {
    let mut unique: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for it in &interactions {
        unique.entry(&it.user_id).or_default().insert(&it.song_id);
    }
    let keep: HashSet<String> = unique
        .into_iter()
        .filter(|(_, songs)| songs.len() >= min_unique)
        .map(|(user, _)| user.to_string())
        .collect();
    interactions
        .into_iter()
        .filter(|it| keep.contains(&it.user_id))
        .collect()
}

/// Map a play count to a 1–5 rating: 1 plus the number of thresholds the
/// count exceeds, so outliers saturate at 5.
pub fn rating_for_count(play_count: u64, thresholds: &Thresholds) -> u8 {
    1 + thresholds.0.iter().filter(|&&t| play_count > t).count() as u8
}

/// Canonical id→index maps: users and songs sorted by id. `extra_songs` lets
/// the caller index the full content corpus, not just rated songs.
pub fn build_indices(
    interactions: &[Interaction],
    extra_songs: &[String],
) -> (BTreeMap<String, usize>, BTreeMap<String, usize>) {
    let users: BTreeSet<&str> = interactions.iter().map(|i| i.user_id.as_str()).collect();
    let mut songs: BTreeSet<&str> = interactions.iter().map(|i| i.song_id.as_str()).collect();
    songs.extend(extra_songs.iter().map(|s| s.as_str()));
    let user_index = users
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i))
        .collect();
    let song_index = songs
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i))
        .collect();
    (user_index, song_index)
}

/// Apply the rating map to every interaction, producing indexed triples.
pub fn playcounts_to_ratings(
    interactions: &[Interaction],
    thresholds: &Thresholds,
    user_index: &BTreeMap<String, usize>,
    song_index: &BTreeMap<String, usize>,
) -> Vec<RatingTriple> {
    interactions
        .iter()
        .map(|it| RatingTriple {
            user: user_index[&it.user_id],
            song: song_index[&it.song_id],
            rating: rating_for_count(it.play_count, thresholds),
        })
        .collect()
}

/// Per-user stratified split: `ceil(test_fraction · n_u)` ratings go to test,
/// capped so every user keeps at least one train rating. Deterministic under
/// `seed`.
pub fn split_ratings(
    ratings: &[RatingTriple],
    n_users: usize,
    test_fraction: f64,
    seed: u64,
) -> (Vec<RatingTriple>, Vec<RatingTriple>) {
    let mut per_user: Vec<Vec<RatingTriple>> = vec![Vec::new(); n_users];
    for &r in ratings {
        per_user[r.user].push(r);
    }
    let mut rng = sub_rng(seed, "split", 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for list in per_user.iter_mut() {
        list.sort_by_key(|r| r.song);
        list.shuffle(&mut rng);
        let n = list.len();
        if n == 0 {
            continue;
        }
        let n_test = (((n as f64) * test_fraction).ceil() as usize).min(n - 1);
        test.extend_from_slice(&list[..n_test]);
        train.extend_from_slice(&list[n_test..]);
    }
    let key = |r: &RatingTriple| (r.user, r.song);
    train.sort_by_key(key);
    test.sort_by_key(key);
    (train, test)
}

/// Assemble a [`Dataset`] from its parts.
pub fn assemble(
    user_index: BTreeMap<String, usize>,
    song_index: BTreeMap<String, usize>,
    train: Vec<RatingTriple>,
    test: Vec<RatingTriple>,
) -> Dataset {
    let mut rated_by_user = vec![HashSet::new(); user_index.len()];
    for r in &train {
        rated_by_user[r.user].insert(r.song);
    }
    Dataset {
        user_index,
        song_index,
        train,
        test,
        rated_by_user,
    }
}

/// Write the split manifest: `user,song,rating,fold` rows sorted by
/// (user, song, fold), ids in their original text form.
pub fn save_split(path: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    let user_ids = dataset.user_ids();
    let mut song_ids = vec![""; dataset.n_songs()];
    for (id, &s) in &dataset.song_index {
        song_ids[s] = id;
    }
    let mut rows: Vec<(usize, usize, u8, &str)> = dataset
        .train
        .iter()
        .map(|r| (r.user, r.song, r.rating, "train"))
        .chain(
            dataset
                .test
                .iter()
                .map(|r| (r.user, r.song, r.rating, "test")),
        )
        .collect();
    rows.sort();
    let mut out = String::from("user,song,rating,fold\n");
    for (u, s, rating, fold) in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            user_ids[u], song_ids[s], rating, fold
        ));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a split manifest back, indexing songs through the corpus index so
/// rating triples line up with lookup rows.
pub fn load_split(
    path: &Path,
    song_index: &BTreeMap<String, usize>,
) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut users: BTreeSet<String> = BTreeSet::new();
    let mut rows: Vec<(String, usize, u8, bool)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fail = |what: &str| DatasetError::Line {
            path: path.display().to_string(),
            line: i + 1,
            what: what.to_string(),
        };
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(fail("expected user,song,rating,fold"));
        }
        let song = *song_index
            .get(parts[1])
            .ok_or_else(|| DatasetError::UnknownSong(parts[1].to_string()))?;
        let rating: u8 = parts[2].parse().map_err(|_| fail("bad rating"))?;
        if !(1..=5).contains(&rating) {
            return Err(fail("rating must be 1..=5"));
        }
        let is_test = match parts[3] {
            "train" => false,
            "test" => true,
            _ => return Err(fail("fold must be train or test")),
        };
        users.insert(parts[0].to_string());
        rows.push((parts[0].to_string(), song, rating, is_test));
    }
    let user_index: BTreeMap<String, usize> = users
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (user_id, song, rating, is_test) in rows {
        let triple = RatingTriple {
            user: user_index[&user_id],
            song,
            rating,
        };
        if is_test {
            test.push(triple);
        } else {
            train.push(triple);
        }
    }
    Ok(assemble(user_index, song_index.clone(), train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn it(user: &str, song: &str, count: u64) -> Interaction {
        Interaction {
            user_id: user.into(),
            song_id: song.into(),
            play_count: count,
        }
    }

    #[test]
    fn triplet_parsing_and_duplicate_sum() {
        let rows = parse_triplets("u1\ts1\t2\nu1\ts2\t1\nu2\ts1\t7\n", "t").unwrap();
        assert_eq!(rows.len(), 3);

        let summed = parse_triplets("u1\ts1\t2\nu1\ts1\t3\n", "t").unwrap();
        assert_eq!(summed, vec![it("u1", "s1", 5)]);

        assert!(parse_triplets("", "t").unwrap().is_empty());

        let err = parse_triplets("u1\ts1\t2\nbroken line\n", "t").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn user_filter_boundary() {
        let mut rows = Vec::new();
        for i in 0..20 {
            rows.push(it("keep", &format!("s{i}"), 1));
        }
        for i in 0..19 {
            rows.push(it("drop", &format!("s{i}"), 1));
        }
        let kept = filter_users(rows, 20);
        assert!(kept.iter().all(|r| r.user_id == "keep"));
        assert_eq!(kept.len(), 20);
    }

    #[test]
    fn rating_map_examples() {
        let t = Thresholds::default();
        assert_eq!(rating_for_count(1, &t), 1);
        assert_eq!(rating_for_count(2, &t), 2);
        assert_eq!(rating_for_count(3, &t), 3);
        assert_eq!(rating_for_count(5, &t), 4);
        assert_eq!(rating_for_count(3532, &t), 5);
    }

    #[test]
    fn rating_map_is_monotone_and_surjective() {
        let t = Thresholds::default();
        let mut seen = BTreeSet::new();
        let mut prev = 0;
        for count in 1..=100u64 {
            let r = rating_for_count(count, &t);
            assert!(r >= prev && (1..=5).contains(&r));
            prev = r;
            seen.insert(r);
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn thresholds_must_ascend() {
        assert!(Thresholds::new([1, 2, 4, 8]).is_ok());
        assert!(Thresholds::new([1, 2, 2, 8]).is_err());
        assert!(Thresholds::new([0, 1, 2, 3]).is_err());
    }

    fn ratings_for_one_user(n: usize) -> Vec<RatingTriple> {
        (0..n)
            .map(|s| RatingTriple {
                user: 0,
                song: s,
                rating: 3,
            })
            .collect()
    }

    #[test]
    fn split_examples() {
        let (train, test) = split_ratings(&ratings_for_one_user(5), 1, 0.2, 9);
        assert_eq!((train.len(), test.len()), (4, 1));

        let again = split_ratings(&ratings_for_one_user(5), 1, 0.2, 9);
        assert_eq!((train.clone(), test.clone()), again);

        let (train1, test1) = split_ratings(&ratings_for_one_user(1), 1, 0.2, 9);
        assert_eq!((train1.len(), test1.len()), (1, 0));
    }

    #[test]
    fn split_partitions_and_respects_fraction() {
        use rand::Rng;
        let mut rng = crate::rng::sub_rng(3, "test-split", 0);
        let mut ratings = Vec::new();
        for u in 0..8 {
            let n = rng.gen_range(1..15);
            for s in 0..n {
                ratings.push(RatingTriple {
                    user: u,
                    song: s,
                    rating: rng.gen_range(1..=5),
                });
            }
        }
        let (train, test) = split_ratings(&ratings, 8, 0.2, 42);
        assert_eq!(train.len() + test.len(), ratings.len());
        let mut all: Vec<(usize, usize)> = train
            .iter()
            .chain(&test)
            .map(|r| (r.user, r.song))
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), ratings.len());
        for u in 0..8 {
            let n_u = ratings.iter().filter(|r| r.user == u).count();
            let t_u = test.iter().filter(|r| r.user == u).count();
            assert!((t_u as f64 - 0.2 * n_u as f64).abs() <= 1.0);
            if n_u > 0 {
                assert!(
                    train.iter().any(|r| r.user == u),
                    "user {u} lost all train ratings"
                );
            }
        }
    }

    #[test]
    fn indices_are_stable_under_permutation() {
        let a = vec![it("u2", "s2", 1), it("u1", "s1", 1)];
        let b = vec![it("u1", "s1", 1), it("u2", "s2", 1)];
        assert_eq!(build_indices(&a, &[]), build_indices(&b, &[]));
    }

    #[test]
    fn split_manifest_roundtrip() {
        let rows = vec![it("u1", "sa", 1), it("u1", "sb", 9), it("u2", "sa", 3)];
        let (user_index, song_index) = build_indices(&rows, &["sc".to_string()]);
        let triples =
            playcounts_to_ratings(&rows, &Thresholds::default(), &user_index, &song_index);
        let (train, test) = split_ratings(&triples, user_index.len(), 0.2, 5);
        let ds = assemble(user_index, song_index, train, test);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.csv");
        save_split(&path, &ds).unwrap();
        let loaded = load_split(&path, &ds.song_index).unwrap();
        assert_eq!(loaded.train, ds.train);
        assert_eq!(loaded.test, ds.test);
        assert_eq!(loaded.user_index, ds.user_index);

        // Same seed, same bytes.
        let path2 = dir.path().join("split2.csv");
        save_split(&path2, &ds).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }
}
