pub mod audit;
pub mod sample;
pub mod simulate;
pub mod train;
pub mod verify;
