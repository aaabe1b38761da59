pub mod categorical;
pub mod error;
pub mod genmodel;
pub mod inference;
pub mod srp;
pub mod market;
pub mod config;
pub mod sim;
pub mod trace;
pub mod plot;
pub mod verify;
