pub mod cat;
pub mod fa;
pub mod filter;
pub mod fit_irt;
pub mod pipeline;
pub mod preprocess;
pub mod reconstruct;
pub mod split;
pub mod subsample;
pub mod synergy;
pub mod tune;
