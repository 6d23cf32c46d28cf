//! Bias rating for sentiment analysis systems: template corpora, built-in and
//! external scorers, Welch t-tests, backdoor-adjusted deconfounding and
//! array-split ratings.

pub mod bridge;
pub mod causal;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod pipeline;
pub mod rater;
pub mod sas;
pub mod selftest;
pub mod stats;
