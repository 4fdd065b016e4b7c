//! Host side of structcap: frame decoding, PNG and tensor files, the HTTP
//! model adapter and chat clients, the mock adapter service, run
//! configuration, the batch runner and the CLI plumbing.
//!
//! The captioning logic itself lives in [`structcap_core`].

pub mod config;
pub mod contract;
pub mod fixtures;
pub mod http;
pub mod ingest;
pub mod mock_server;
pub mod packs;
pub mod pngio;
pub mod ratelimit;
pub mod run;
pub mod services;
pub mod tensor;
pub mod wire;

pub use structcap_core as core;
