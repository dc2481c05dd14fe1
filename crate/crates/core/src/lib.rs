//! Capacity region membership, schedule construction and bit-exact
//! simulation for the deterministic relay network of four users and a relay
//! that carries private messages of its own.

pub mod cli;
pub mod detour;
pub mod error;
pub mod model;
pub mod reduction;
pub mod region;
pub mod sim;
pub mod sos;
