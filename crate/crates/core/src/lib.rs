pub mod forge;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod probe;
pub mod trainer;
