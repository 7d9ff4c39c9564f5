//! Integer convex quadratic simultaneous games: exact integer best
//! responses, best-response dynamics, and approximate mixed equilibria
//! recovered from the cycles those dynamics enter.

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod finite;
pub mod game;
pub mod instgen;
pub mod io;
pub mod iqp;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod scenarios;

pub use error::{Error, Result};
pub use game::{Adequacy, AdequacyReport, IcqsInstance, PlayerProblem};
pub use linalg::Matrix;
