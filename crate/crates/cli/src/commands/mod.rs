pub mod data;
pub mod eval;
pub mod sample;
pub mod study;
pub mod train;
