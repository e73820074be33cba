pub mod io;
pub mod stats;
pub mod tcp;
pub mod cli;
