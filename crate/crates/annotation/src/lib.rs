//! Backend for human annotation of sampled frames.
//!
//! A [`Project`] fixes a sampling plan per video and allocates every video
//! to one (worker, scheme) pair by block randomization. Label submissions and
//! timer events go through a single-writer [`Store`] that appends to a JSON
//! lines log before acknowledging. [`http::router`] exposes the store over
//! HTTP.

mod allocation;
mod error;
pub mod http;
mod project;
mod store;

pub use allocation::{allocate, Allocation};
pub use error::{AnnotationError, Result};
pub use project::{
    export_labels, summarize_time, write_export, CreateProject, LabelSubmission, Project, Task, TimeSummary, TimerEvent,
    TimerKind, VideoTime,
};
pub use store::Store;
