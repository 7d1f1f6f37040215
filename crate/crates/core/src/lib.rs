//! Discovery, static analysis and classification of NFT phishing sites, plus
//! analytics for the surrounding scam ecosystem.
//!
//! The crate is organised as a set of loosely coupled stages:
//!
//! * [`registry`] loads the list of known NFT collections.
//! * [`squatgen`] and [`ctingest`] produce candidate look-alike domains.
//! * [`snapshot`] fetches candidate sites into a content-addressed corpus.
//! * [`siteanalysis`] extracts chain addresses, audits links and labels the
//!   attack vector of each snapshot.
//! * [`features`] and [`classifier`] turn analyses into verdicts.
//! * [`sentinel`], [`chainlytics`] and [`promolytics`] measure blocklist
//!   response, financial impact and promotion-driven engagement.
//! * [`config`] and [`pipeline`] wire the stages together.

pub mod chainlytics;
pub mod classifier;
pub mod config;
pub mod ctingest;
pub mod features;
pub mod pipeline;
pub mod promolytics;
pub mod psl;
pub mod registry;
pub mod sentinel;
pub mod siteanalysis;
pub mod snapshot;
pub mod squatgen;
pub mod stats;

pub use registry::{CollectionRecord, CollectionRegistry};
pub use snapshot::SiteSnapshot;
