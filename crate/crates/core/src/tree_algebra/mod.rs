//! Exact combinatorics of finite subtrees of the infinite d-regular tree:
//! addressing, splitting operations, canonical forms, shape and type
//! enumeration.

mod address;
mod canonical;
mod enumerate;
mod tree;

pub use address::TreeAddress;
pub use canonical::{canonical_code, shape_code, CanonicalCode};
pub use enumerate::{
    HShape, ShapeId, ShapeTable, TypeClass, TypeId, TypeJumps, TypeTable, DEFAULT_ENUM_BOUND,
};
pub use tree::{
    active_edges, ball, ball_around, ball_size, h_split, random_reembedding, regrow_scheme,
    Ambient, FiniteTree, SplitSide,
};
