pub mod ir;
pub mod depgraph;
pub mod analytics;
pub mod sage;
pub mod pipeline;
mod seed;
pub mod corpus;
pub mod cli;
