//! The course operations service: configuration, data loading, the event
//! store, HTTP endpoints and the command-line tool.

pub mod api;
pub mod cli;
pub mod config;
pub mod data;
pub mod demo;
pub mod server;
pub mod store;
pub mod views;
