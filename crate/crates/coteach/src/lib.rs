//! File formats, pipeline stages, wire protocol and instruction server built
//! on `coteach-core`. The `coteach` binary wires these into a CLI.

pub mod bench;
pub mod formats;
pub mod pipeline;
pub mod protocol;
pub mod server;
