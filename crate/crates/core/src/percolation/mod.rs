//! Site, bond and long-range percolation restricted to the anchor's cluster: lazy sampling,
//! exact shape enumeration, and exact cluster probabilities.

mod enumerate;
mod model;
mod sample;

pub use enumerate::{
    cluster_probability_exact, enumerate_exact, ClusterProbability, Enumeration, EnumerationOptions, Shape,
    DEFAULT_SHAPE_LIMIT,
};
pub use model::{LongRangeKernel, ModelKind, PercolationModel, TRUNCATION_EPS};
pub use sample::{tail_estimate, Cluster, Sampler, TailEstimate, TailRow};
