pub mod config;
pub mod experiments;
pub mod registry;
pub mod report;
pub mod stats;
