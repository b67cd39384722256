//! Lagrangean mechanics from Hamilton–Jacobi hypersurfaces over a principal bundle.
//!
//! The fundamental object is a hypersurface `E = {G = 0}` in the contact elements
//! of `U = M × fiber`, with `G` independent of the fiber coordinate. Extremals
//! are projections of its characteristics; the fiber coordinate along a strip is
//! the action. Lagrangians, wave diagrams, conserved quantities, caustics and
//! phase-space holonomy are all derived from `E`.

pub mod bundle;
pub mod contact;
pub mod error;
pub mod export;
pub mod expr;
pub mod integrate;
pub mod manifold;
pub mod noether;
pub mod numeric;
pub mod phase;
pub mod scenarios;
pub mod symbol;
pub mod wavefront;

pub mod cli;
pub mod config;

pub use contact::{
    action_increment, batch_propagate, characteristic_field, propagate, CharacteristicState, FiberGroup, Strip,
    Symbol, SymbolSurface,
};
pub use error::{Error, Result};
pub use integrate::IntegratorConfig;
