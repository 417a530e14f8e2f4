//! Hyperthread-granularity, interference-aware cluster scheduling.
//!
//! This crate models clusters down to individual hyperthreads (HTs) and
//! simulates the placement of latency-sensitive service instances under
//! SMT contention. It provides:
//!
//! - [`topology`]: servers → sockets → physical cores → hyperthreads,
//!   allocation state, and neighbor classification (sharing-core,
//!   sharing-socket, opposite-socket).
//! - [`workload`]: service catalogs, instance requests, and reproducible
//!   synthetic trace generation.
//! - [`oracle`]: a synthetic ground-truth contention model — per-HT
//!   utilization under linear sharing-core/sharing-socket coupling,
//!   solved as a damped fixed point.
//! - [`nn`]: a small dense-tensor kernel (f64) with hand-written
//!   reverse-mode gradients: matmul, masked attention, feed-forward
//!   layers, and an Adam optimizer.
//! - [`predictor`]: the hierarchical attention model that predicts per-HT
//!   CPU utilization from a socket's occupancy, plus flat-MLP and
//!   historical-average baselines.
//! - [`selector`]: topology-aware candidate HT-set enumeration via a
//!   sliding window over a socket's idle HTs.
//! - [`scorer`]: interference scores derived from predicted utilization
//!   with and without co-location.
//! - [`scheduler`]: the full prediction-guided placement pipeline and
//!   five baseline strategies behind one interface.
//! - [`sim`]: trace-driven episodes, metric computation, and training
//!   data collection.
//!
//! The crate is `no_std`-compatible (`--no-default-features --features
//! libm`); all IO and file formats live in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod mathf;
pub mod nn;
pub mod oracle;
pub mod predictor;
pub mod scenario;
pub mod scheduler;
pub mod scorer;
pub mod selector;
pub mod sim;
pub mod topology;
pub mod workload;
