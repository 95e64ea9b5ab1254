//! Quality-diversity evolution of swarm controllers with fault injection and
//! recovery analysis.

pub mod descriptors;
pub mod env;
pub mod genome;
pub mod qd;
pub mod recovery;
pub mod seed;
pub mod sim;
pub mod tasks;
