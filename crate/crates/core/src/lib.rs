//! Free Point Transformer: learned, correspondence-free non-rigid point set
//! registration trained with a Chamfer objective.

pub mod error;
pub mod geometry;
pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod deform;
pub mod loss;
pub mod net;
pub mod numeric;
pub mod shapes;
pub mod spine;
pub mod train;

pub use error::{Error, Result};
