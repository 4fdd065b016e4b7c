//! Platform-independent core of the structured video captioning toolkit.
//!
//! Everything here works on in-memory frames and text. File formats,
//! networking and the command line live in the `structcap` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod amc;
pub mod blur;
pub mod camera;
pub mod caption;
pub mod chat;
pub mod dataset;
pub mod enhancer;
pub mod flow;
pub mod hints;
pub mod image;
pub mod metrics;
pub mod orchestrator;
pub mod pipeline;
pub mod prompts;
pub mod sampling;
pub mod text;
