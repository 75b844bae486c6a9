//! Elastic execution control plane for tightly-coupled batch jobs.
//!
//! A [`coordinator`] tracks the job phase and the executor registry, an
//! [`executor`] agent supervises one workload rank per node, and a
//! [`monitor`] decides when to grow the job and provisions new executors.
//! All three talk over the framed protocol in [`wireproto`]. The
//! [`harness`] runs the experiments on top.

pub mod bins;
pub mod coordinator;
pub mod executor;
pub mod harness;
pub mod monitor;
pub mod signals;
pub mod transport;
pub mod wireproto;
pub mod workloads;
