pub mod channel;
pub mod conic;
pub mod config;
pub mod consts;
pub mod error;
pub mod fim;
pub mod geometry;
pub mod harness;
pub mod navigation;
pub mod optimizer;
pub mod scenario;
pub mod sensing;
pub mod waveform;
