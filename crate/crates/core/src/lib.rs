pub mod cli;
pub mod config;
pub mod data;
pub mod dsp;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod params;
pub mod report;
pub mod taxonomy;
pub mod tensor;
pub mod train;
pub mod weights;
