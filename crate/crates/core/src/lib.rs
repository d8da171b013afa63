pub mod cli;
pub mod dirschrod;
pub mod exterior_hodge;
pub mod family;
pub mod grid;
pub mod numlin;
pub mod opmodule;
pub mod opstar;
pub mod spectral_flow;
pub mod suites;
