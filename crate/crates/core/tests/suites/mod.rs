//! Check bodies shared by the core integration tests and the acceptance run.
#![allow(dead_code)]

pub mod oracles;
pub mod random;
pub mod replays;
