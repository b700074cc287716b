pub mod diagnose;
pub mod eval;
pub mod simulate;
pub mod train;
