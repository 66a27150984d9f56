pub mod check;
pub mod simulate;
pub mod synthesize;
pub mod verify;
