#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Anchor-free localization of IoT nodes from pairwise ranges, followed by
//! SNR-constrained topology extraction.
//!
//! The localization pipeline splits the range graph into globally rigid
//! patches ([`rigidity`]), embeds each patch ([`embed`]), and stitches the
//! patches into one frame by synchronizing reflections, rotations and
//! translations ([`sync`]). Topology extraction ([`topo`]) assigns transmit
//! powers under the link model in [`radio`] and compares the iterative
//! MaxNTtop extractor with LMST and brute-force baselines.

pub mod embed;
pub mod error;
pub mod geom;
pub mod harness;
pub mod metrics;
pub mod radio;
pub mod rigidity;
pub mod scenario;
mod serde_util;
pub mod sync;
pub mod topo;

pub use error::{Error, Result};
pub use geom::Point;
