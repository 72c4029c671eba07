//! Rating models: the sequence-based recommender, the matrix-factorization
//! ablation, and the ItemPop popularity baseline, plus top-K recommendation.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use train::{
    to_examples, train_mf_epoch, train_seer_epoch, Example, MfTrainer, SeerTrainer, TrainOptions,
};

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::RatingTriple;
use crate::nn::{dot, sequence_forward, CellParams, CellType, Matrix, INIT_WEIGHT_LIMIT};
use crate::pool::thread_pool;
use crate::rng::sub_rng;
use crate::timeseries::SongLookup;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {what}")]
    BadCheckpoint { path: String, what: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Hyperparameters and corpus dimensions baked into a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeerConfig {
    pub cell_type: CellType,
    /// User latent size; the hidden state has the same size so the two can
    /// be multiplied into a rating.
    pub latent: usize,
    /// Normalized step count of the lookup the model was trained on.
    pub target_steps: usize,
    /// Songs in that lookup (recorded for checkpoint validation).
    pub n_songs: usize,
}

/// User embedding plus one recurrent cell over song content.
#[derive(Debug, Clone, PartialEq)]
pub struct SeerModel {
    pub user_embedding: Matrix,
    pub cell: CellParams,
    pub config: SeerConfig,
    pub seed: u64,
}

impl SeerModel {
    pub fn init(n_users: usize, config: SeerConfig, seed: u64) -> Self {
        let mut rng = sub_rng(seed, "init", 0);
        let user_embedding = Matrix::uniform(n_users, config.latent, INIT_WEIGHT_LIMIT, &mut rng);
        let cell = CellParams::init(
            config.cell_type,
            crate::timeseries::FEATURES,
            config.latent,
            &mut rng,
        );
        SeerModel {
            user_embedding,
            cell,
            config,
            seed,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_embedding.rows
    }

    /// Score an arbitrary series (row-major, 32 wide) for a user: the dot
    /// product of the user's latent vector with the final hidden state.
    /// Unbounded; predictions above 5 are legal and reported raw.
    pub fn predict_series(&self, user: usize, rows: &[f32], valid_steps: usize) -> f32 {
        let h = sequence_forward(&self.cell, rows, valid_steps);
        dot(self.user_embedding.row(user), &h)
    }

    /// Score a song by its lookup row.
    pub fn predict(&self, user: usize, lookup: &SongLookup, song: usize) -> f32 {
        let (rows, valid) = lookup.series(song);
        self.predict_series(user, rows, valid)
    }
}

/// Plain matrix factorization: the ablation where the song tower is replaced
/// by a free item embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub user_embedding: Matrix,
    pub item_embedding: Matrix,
    pub seed: u64,
}

impl MfModel {
    pub fn init(n_users: usize, n_songs: usize, latent: usize, seed: u64) -> Self {
        let mut rng = sub_rng(seed, "init", 0);
        MfModel {
            user_embedding: Matrix::uniform(n_users, latent, INIT_WEIGHT_LIMIT, &mut rng),
            item_embedding: Matrix::uniform(n_songs, latent, INIT_WEIGHT_LIMIT, &mut rng),
            seed,
        }
    }

    pub fn latent(&self) -> usize {
        self.user_embedding.cols
    }

    pub fn predict(&self, user: usize, song: usize) -> f32 {
        dot(self.user_embedding.row(user), self.item_embedding.row(song))
    }
}

/// Anything that can score a (user, song) pair for ranking.
pub trait Ranker: Sync {
    fn score(&self, user: usize, song: usize) -> f32;
}

pub struct SeerRanker<'a> {
    pub model: &'a SeerModel,
    pub lookup: &'a SongLookup,
}

impl Ranker for SeerRanker<'_> {
    fn score(&self, user: usize, song: usize) -> f32 {
        self.model.predict(user, self.lookup, song)
    }
}

impl Ranker for MfModel {
    fn score(&self, user: usize, song: usize) -> f32 {
        self.predict(user, song)
    }
}

/// Non-personalized popularity baseline: every user gets the same list.
pub struct ItemPop {
    counts: Vec<usize>,
}

impl ItemPop {
    pub fn from_train(train: &[RatingTriple], n_songs: usize) -> Self {
        let mut counts = vec![0usize; n_songs];
        for r in train {
            counts[r.song] += 1;
        }
        ItemPop { counts }
    }

    /// Global ranking: interaction count descending, ties by ascending index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        order
    }
}

impl Ranker for ItemPop {
    fn score(&self, _user: usize, song: usize) -> f32 {
        self.counts[song] as f32
    }
}

/// A user's top-K songs with scores, descending; ties break toward the
/// smaller song index.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<(usize, f32)>,
}

/// Score every candidate and keep the top K. Scoring is read-only and runs
/// in parallel; the sort is total, so the output is deterministic.
pub fn recommend(ranker: &dyn Ranker, user: usize, candidates: &[usize], k: usize) -> RankedList {
    let mut scored: Vec<(usize, f32)> = thread_pool().install(|| {
        candidates
            .par_iter()
            .map(|&song| (song, ranker.score(user, song)))
            .collect()
    });
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    RankedList {
        user,
        items: scored,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::FEATURES;

    fn tiny_lookup(n_songs: usize, target_steps: usize, seed: u64) -> SongLookup {
        use rand::Rng;
        let mut rng = sub_rng(seed, "test-lookup", 0);
        let series: Vec<crate::timeseries::SongTimeSeries> = (0..n_songs)
            .map(|s| {
                let valid = rng.gen_range(1..=target_steps);
                let mut data = vec![0.0f32; target_steps * FEATURES];
                for row in data.chunks_mut(FEATURES).take(valid) {
                    let ch = rng.gen_range(0..16);
                    row[ch] = rng.gen_range(0.1..1.0f32);
                    row[16 + ch] = rng.gen_range(0.1..1.0f32);
                }
                crate::timeseries::SongTimeSeries {
                    data,
                    valid_steps: valid,
                    song_id: format!("s{s:03}"),
                }
            })
            .collect();
        crate::timeseries::build_lookup(&series).unwrap()
    }

    fn tiny_model(n_users: usize, lookup: &SongLookup, seed: u64) -> SeerModel {
        SeerModel::init(
            n_users,
            SeerConfig {
                cell_type: CellType::Gru,
                latent: 4,
                target_steps: lookup.target_steps,
                n_songs: lookup.n_songs(),
            },
            seed,
        )
    }

    #[test]
    fn zero_cell_scores_everything_zero() {
        let lookup = tiny_lookup(3, 5, 1);
        let mut model = tiny_model(2, &lookup, 1);
        model.cell = CellParams::zeros(CellType::Gru, FEATURES, 4);
        for u in 0..2 {
            for s in 0..3 {
                assert_eq!(model.predict(u, &lookup, s), 0.0);
            }
        }
    }

    #[test]
    fn prediction_is_a_dot_product() {
        let lookup = tiny_lookup(1, 4, 2);
        let mut model = tiny_model(1, &lookup, 2);
        // d = 2 model with a forced hidden state is easier to check by hand,
        // so check against an independently computed dot product instead.
        let (rows, valid) = lookup.series(0);
        let h = sequence_forward(&model.cell, rows, valid);
        let expected: f32 = model
            .user_embedding
            .row(0)
            .iter()
            .zip(&h)
            .map(|(a, b)| a * b)
            .sum();
        assert_eq!(model.predict(0, &lookup, 0), expected);

        // And the 2-vector example: U_u = (1, 2), h = (3, −1) → 1.
        model.user_embedding = Matrix {
            rows: 1,
            cols: 2,
            data: vec![1.0, 2.0],
        };
        assert_eq!(dot(model.user_embedding.row(0), &[3.0, -1.0]), 1.0);
    }

    #[test]
    fn prediction_is_linear_in_the_embedding_row() {
        let lookup = tiny_lookup(4, 6, 3);
        let mut model = tiny_model(2, &lookup, 3);
        let base = model.predict(1, &lookup, 2);
        for v in model.user_embedding.row_mut(1) {
            *v *= 2.5;
        }
        let scaled = model.predict(1, &lookup, 2);
        assert!(
            (scaled - 2.5 * base).abs() < 1e-5,
            "{scaled} vs {}",
            2.5 * base
        );
    }

    #[test]
    fn mf_examples() {
        let mut mf = MfModel::init(1, 1, 2, 0);
        mf.user_embedding.data = vec![1.0, 2.0];
        mf.item_embedding.data = vec![3.0, -1.0];
        assert_eq!(mf.predict(0, 0), 1.0);

        let zero = MfModel {
            user_embedding: Matrix::zeros(2, 3),
            item_embedding: Matrix::zeros(2, 3),
            seed: 0,
        };
        assert_eq!(zero.predict(1, 1), 0.0);
    }

    #[test]
    fn itempop_ranking_and_rating_invariance() {
        let t = |user, song, rating| RatingTriple { user, song, rating };
        let a = [
            t(0, 0, 1),
            t(1, 0, 1),
            t(0, 1, 5),
            t(1, 1, 5),
            t(2, 1, 5),
            t(0, 2, 3),
        ];
        let pop = ItemPop::from_train(&a, 4);
        assert_eq!(pop.ranking(), vec![1, 0, 2, 3]);

        // Same interactions, different ratings: identical ranking.
        let b = [
            t(0, 0, 5),
            t(1, 0, 2),
            t(0, 1, 1),
            t(1, 1, 1),
            t(2, 1, 2),
            t(0, 2, 5),
        ];
        assert_eq!(ItemPop::from_train(&b, 4).ranking(), pop.ranking());

        let empty = ItemPop::from_train(&[], 0);
        assert!(empty.ranking().is_empty());
    }

    #[test]
    fn recommend_matches_brute_force_top_k() {
        let lookup = tiny_lookup(30, 5, 4);
        let model = tiny_model(3, &lookup, 4);
        let ranker = SeerRanker {
            model: &model,
            lookup: &lookup,
        };
        let candidates: Vec<usize> = (0..30).collect();
        for user in 0..3 {
            let got = recommend(&ranker, user, &candidates, 7);
            let mut all: Vec<(usize, f32)> = candidates
                .iter()
                .map(|&s| (s, model.predict(user, &lookup, s)))
                .collect();
            all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            all.truncate(7);
            assert_eq!(got.items, all);
            for w in got.items.windows(2) {
                assert!(w[0].1 >= w[1].1);
            }
        }
    }

    #[test]
    fn recommend_handles_small_and_empty_candidate_sets() {
        let lookup = tiny_lookup(3, 4, 5);
        let model = tiny_model(1, &lookup, 5);
        let ranker = SeerRanker {
            model: &model,
            lookup: &lookup,
        };
        assert_eq!(recommend(&ranker, 0, &[], 10).items.len(), 0);
        assert_eq!(recommend(&ranker, 0, &[0, 1, 2], 10).items.len(), 3);
    }
}
