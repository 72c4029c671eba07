//! Offline evaluation: ranking quality (MAP@K), DTW-based content validation
//! of explanations, and tag percentage matching over supplied tag sets.

mod dtw;
mod tags;
mod validate;

pub use dtw::{avg_pairwise_dtw, dtw};
pub use tags::{avg_percentage_matching, load_song_tags, percentage_matching, ranked_tags, TagSet};
pub use validate::{save_dtw_validation, validate_explanations, DtwValidationRow};

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::models::{recommend, Ranker};
use crate::pool::thread_pool;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {need} series, got {got}")]
    TooFewSeries { need: usize, got: usize },
    #[error("empty series")]
    EmptySeries,
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
}

/// MAP@K with the per-user average precisions behind it. Users without a
/// relevant test item are excluded from the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_name: String,
    pub k: usize,
    pub map: f64,
    /// (user index, AP@K) for every evaluated user.
    pub per_user_ap: Vec<(usize, f64)>,
    pub seed: u64,
}

/// AP@K = (1/min(K, |relevant|)) · Σ_{i≤K} precision@i · rel(i); 0 when
/// nothing is relevant.
pub fn average_precision_at_k(ranking: &[usize], relevant: &HashSet<usize>, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for (i, song) in ranking.iter().take(k).enumerate() {
        if relevant.contains(song) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / k.min(relevant.len()) as f64
}

/// Rank every user's unrated candidates and average the per-user AP@K.
/// `relevance_min_rating` restricts which held-out items count as relevant
/// (1 accepts any rating).
pub fn map_at_k(
    ranker: &dyn Ranker,
    dataset: &Dataset,
    k: usize,
    relevance_min_rating: u8,
    model_name: &str,
    seed: u64,
) -> EvalReport {
    let mut relevant_by_user: Vec<HashSet<usize>> = vec![HashSet::new(); dataset.n_users()];
    for r in &dataset.test {
        if r.rating >= relevance_min_rating {
            relevant_by_user[r.user].insert(r.song);
        }
    }
    let users: Vec<usize> = (0..dataset.n_users())
        .filter(|&u| !relevant_by_user[u].is_empty())
        .collect();
    let per_user_ap: Vec<(usize, f64)> = thread_pool().install(|| {
        users
            .par_iter()
            .map(|&u| {
                let candidates = dataset.candidates(u, false);
                let ranked = recommend(ranker, u, &candidates, k);
                let ranking: Vec<usize> = ranked.items.iter().map(|(s, _)| *s).collect();
                (u, average_precision_at_k(&ranking, &relevant_by_user[u], k))
            })
            .collect()
    });
    let map = if per_user_ap.is_empty() {
        0.0
    } else {
        per_user_ap.iter().map(|(_, ap)| ap).sum::<f64>() / per_user_ap.len() as f64
    };
    EvalReport {
        model_name: model_name.to_string(),
        k,
        map,
        per_user_ap,
        seed,
    }
}

/// Write the per-user AP table (`user,ap`), user ids in text form.
pub fn save_eval_report(
    path: &Path,
    report: &EvalReport,
    user_ids: &[&str],
) -> Result<(), EvalError> {
    let mut out = String::from("user,ap\n");
    for &(u, ap) in &report.per_user_ap {
        out.push_str(&format!("{},{:.12}\n", user_ids[u], ap));
    }
    std::fs::write(path, out).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{assemble, RatingTriple};
    use std::collections::BTreeMap;

    fn relevant(items: &[usize]) -> HashSet<usize> {
        items.iter().copied().collect()
    }

    #[test]
    fn ap_examples() {
        // All of the top K relevant.
        assert_eq!(
            average_precision_at_k(&[1, 2, 3], &relevant(&[1, 2, 3]), 3),
            1.0
        );
        // (rel, irrel, rel) with two relevant items at K = 3.
        let ap = average_precision_at_k(&[7, 8, 9], &relevant(&[7, 9]), 3);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12, "{ap}");
        // Nothing relevant in the top K.
        assert_eq!(average_precision_at_k(&[1, 2], &relevant(&[5]), 2), 0.0);
        assert_eq!(average_precision_at_k(&[1, 2], &HashSet::new(), 2), 0.0);
    }

    #[test]
    fn ap_ignores_everything_below_rank_k() {
        let rel = relevant(&[2, 5, 8]);
        let a = average_precision_at_k(&[2, 1, 5, 9, 7, 8], &rel, 3);
        let b = average_precision_at_k(&[2, 1, 5, 8, 7, 9], &rel, 3);
        assert_eq!(a, b);
    }

    /// Brute force: recompute precision@i from scratch at every rank.
    fn brute_force_ap(ranking: &[usize], rel: &HashSet<usize>, k: usize) -> f64 {
        if rel.is_empty() {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 1..=k.min(ranking.len()) {
            if rel.contains(&ranking[i - 1]) {
                let hits = ranking[..i].iter().filter(|s| rel.contains(s)).count();
                sum += hits as f64 / i as f64;
            }
        }
        sum / k.min(rel.len()) as f64
    }

    #[test]
    fn ap_matches_brute_force_on_random_instances() {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let mut rng = crate::rng::sub_rng(17, "test-ap", 0);
        for _ in 0..50 {
            let n = rng.gen_range(1..20usize);
            let mut ranking: Vec<usize> = (0..n).collect();
            ranking.shuffle(&mut rng);
            let rel: HashSet<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
            let k = rng.gen_range(1..=n);
            let a = average_precision_at_k(&ranking, &rel, k);
            let b = brute_force_ap(&ranking, &rel, k);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    struct FixedScores {
        scores: Vec<Vec<f32>>,
    }

    impl Ranker for FixedScores {
        fn score(&self, user: usize, song: usize) -> f32 {
            self.scores[user][song]
        }
    }

    fn toy_dataset(n_users: usize, n_songs: usize, test: Vec<RatingTriple>) -> Dataset {
        let user_index: BTreeMap<String, usize> =
            (0..n_users).map(|u| (format!("u{u}"), u)).collect();
        let song_index: BTreeMap<String, usize> =
            (0..n_songs).map(|s| (format!("s{s}"), s)).collect();
        assemble(user_index, song_index, Vec::new(), test)
    }

    #[test]
    fn perfect_ranker_reaches_map_one() {
        let test = vec![
            RatingTriple {
                user: 0,
                song: 2,
                rating: 4,
            },
            RatingTriple {
                user: 1,
                song: 0,
                rating: 5,
            },
        ];
        let dataset = toy_dataset(2, 4, test);
        let ranker = FixedScores {
            scores: vec![vec![0.0, 0.1, 9.0, 0.2], vec![9.0, 0.3, 0.1, 0.0]],
        };
        let report = map_at_k(&ranker, &dataset, 10, 1, "fixed", 0);
        assert_eq!(report.map, 1.0);
        assert_eq!(report.per_user_ap.len(), 2);
    }

    #[test]
    fn users_without_test_items_are_excluded() {
        let test = vec![RatingTriple {
            user: 0,
            song: 1,
            rating: 2,
        }];
        let dataset = toy_dataset(3, 3, test);
        let ranker = FixedScores {
            scores: vec![vec![0.5, 0.9, 0.1]; 3],
        };
        let report = map_at_k(&ranker, &dataset, 2, 1, "fixed", 0);
        assert_eq!(report.per_user_ap.len(), 1);
        assert_eq!(report.map, 1.0);

        // Raising the relevance threshold empties the pool.
        let strict = map_at_k(&ranker, &dataset, 2, 3, "fixed", 0);
        assert_eq!(strict.per_user_ap.len(), 0);
        assert_eq!(strict.map, 0.0);
    }
}
