//! Discrete-event simulator quantifying double-spending risk in
//! proof-of-work blockchains under man-in-the-middle network partitions.
//!
//! The crate models an Ethereum-Homestead-style chain (total-difficulty fork
//! choice, per-block difficulty adjustment, uncle references), a latency
//! overlay with partition events abstracting BGP hijacking and ARP spoofing,
//! power-weighted stochastic mining, the balance-attack trial loop, a
//! Monte Carlo experiment harness, and a peering-aware feasibility analysis
//! of route-hijack partitions against real pool/AS data.

pub mod analysis;
pub mod attack;
pub mod chain;
pub mod error;
pub mod intel;
pub mod mining;
pub mod netsim;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};
