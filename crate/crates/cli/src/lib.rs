//! Command-line pipeline and HTTP service for the `softik` library.

pub mod args;
pub mod commands;
pub mod config;
pub mod service;
pub mod store;
pub mod waypoints;
