//! Command-line and HTTP front ends over [`boundex_core::api::Engine`].

pub mod cli;
pub mod server;
pub mod worker;
