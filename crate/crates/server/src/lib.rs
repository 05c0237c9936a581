//! Study store, HTTP refinement service and command line for `abdkit`.
//!
//! A study is a CT volume plus its current tissue masks, edited through
//! brush strokes on axial slices with optimistic versioning. See
//! [`store`] for the on-disk layout and [`api`] for the endpoints.

pub mod api;
pub mod cli;
pub mod edit;
pub mod render;
pub mod store;
