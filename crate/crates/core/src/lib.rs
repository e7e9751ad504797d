pub mod data;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod labeling;
pub mod models;
pub mod numerics;
pub mod pipeline;
pub mod sentiment;
pub mod training;
