//! SeER: a hybrid song recommender that scores (user, song) pairs by combining
//! a learned user embedding with the final hidden state of a recurrent network
//! run over the song's MIDI event stream. Recommendations come with 10-second
//! segment explanations produced by scoring every sliding window of the song
//! and returning the argmax.
//!
//! The crate is organized as a pipeline:
//!
//! * [`midi`] — Standard MIDI File / MIDICSV parsing and segment export
//! * [`timeseries`] — MIDI events to 32-feature time series, song lookup matrix
//! * [`dataset`] — play-count triplets to 1–5 ratings, train/test split
//! * [`nn`] — dense matrices, RNN/GRU/LSTM cells, BPTT gradients, Adam
//! * [`models`] — the rating model, MF and ItemPop baselines, checkpoints
//! * [`explain`] — segment forward propagation explanations
//! * [`eval`] — MAP@K, DTW validation, tag percentage matching
//! * [`commands`] — the CLI entry points (`seer` binary)

pub mod commands;
pub mod dataset;
pub mod eval;
pub mod explain;
pub mod midi;
pub mod models;
pub mod nn;
pub mod pool;
pub mod rng;
pub mod synth;
pub mod timeseries;
