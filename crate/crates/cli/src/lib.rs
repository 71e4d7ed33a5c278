//! Command-line front end for the survey/register reliability toolkit.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
