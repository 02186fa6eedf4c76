pub mod audio;
pub mod dynamics;
pub mod embed;
pub mod perturb;
pub mod pipeline;
pub mod seed;
pub mod stats;
