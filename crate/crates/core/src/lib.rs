pub mod bands;
pub mod cli;
pub mod dataset;
pub mod layout;
pub mod pipeline;
pub mod service;
pub mod signatures;
pub mod similarity;
pub mod spectral;
pub mod stats;
