pub mod bp;
pub mod channel;
pub mod cluster;
pub mod codec;
pub mod config;
pub mod dna;
pub mod erasure;
pub mod error;
pub mod experiment;
pub mod fastq;
pub mod fountain;
pub mod gf256;
pub mod pipeline;
pub mod rs;
pub mod stats;

pub use error::{Error, Result};
