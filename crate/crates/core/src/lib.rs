pub mod cli;
pub mod driver;
pub mod error;
pub mod extraction;
pub mod moment;
pub mod polynomial;
pub mod problem_file;
pub mod relaxation;
pub mod sdp;

pub use error::{Error, Result};
pub use polynomial::{Monomial, MonomialBasis, Polynomial, VarNames};
