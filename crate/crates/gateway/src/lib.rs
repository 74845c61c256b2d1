//! HTTP gateway, encrypted keystore and the `permadid` command line.

pub mod cli;
pub mod http;
pub mod keystore;
