//! Trace files, reports, parallel sweeps and the `kvevict` command line,
//! on top of the algorithms in [`kvevict_core`].

pub mod cli;
pub mod parallel;
pub mod report;
pub mod trace_io;

pub use kvevict_core;
pub use trace_io::{read_trace, read_trace_file, write_trace, write_trace_file, TraceIoError};
