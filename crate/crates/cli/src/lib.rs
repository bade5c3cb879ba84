pub mod bench;
pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod runtime;
pub mod task;
