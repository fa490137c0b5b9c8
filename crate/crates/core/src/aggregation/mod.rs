//! Global descriptor formation.
//!
//! `g = normalize(flatten(ePN(O2P({f}))))`: element-wise max over per-point
//! outer products, singular values raised to a power `α`, row-major
//! flatten, then L2 normalization. Every stage has an exact backward pass.

mod descfile;
mod descriptor;
mod epn;
mod pool;
mod svd;

pub use descfile::{read_descriptor_file, write_descriptor_file, DescriptorRecord};
pub use descriptor::{
    aggregate, aggregate_backward, aggregate_with_cache, flatten_normalize, AggregateCache,
    GlobalDescriptor,
};
pub use epn::{epn, epn_backward, DEFAULT_EPN_ALPHA};
pub use pool::{pool_backward, second_order_pool, PooledMatrix};
pub use svd::{svd_square, Svd};
