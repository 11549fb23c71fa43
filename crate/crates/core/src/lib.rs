pub mod algo;
pub mod env;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod select;
pub mod tabular;
pub mod util;
