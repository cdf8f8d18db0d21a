//! Core building blocks: annotated datasets, procedural driving scenes,
//! detection metrics, Frechet distance and a small CPU network toolkit.

pub mod dataset;
pub mod deteval;
pub mod exec;
pub mod fid;
pub mod imaging;
pub mod nn;
pub mod scenes;
pub mod seeding;
