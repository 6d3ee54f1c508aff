//! Deep fair clustering: an autoencoder with one decoder branch per
//! sensitive group, trained so that cluster assignments carry as much
//! information about the data as possible given the group while carrying as
//! little as possible about the group itself. Also provides the evaluation
//! metrics (ACC, NMI, Balance, MNCE, F_β) used to score fair clusterings.

pub mod autodiff;
pub mod cli;
pub mod clustering;
pub mod container;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
