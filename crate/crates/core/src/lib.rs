pub mod agent;
pub mod cli;
pub mod data;
pub mod datasets;
pub mod engine;
pub mod kg;
pub mod learn;
pub mod transform;
pub mod vectorize;
