//! Diffusion numerics at desk scale.

pub mod check;
pub mod edm;
pub mod toy;
