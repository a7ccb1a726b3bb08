//! Core library for exploring molecular datasets.
//!
//! The pipeline runs bottom-up: SMILES text is parsed into [`smiles::MolecularGraph`]s,
//! turned into sparse bit [`fingerprint::Fingerprint`]s, then clustered
//! ([`cluster`]) or embedded in two dimensions ([`embed`]), with the embedding
//! scored by [`quality`]. Molecule records live in the embedded document store
//! ([`docstore`]). The [`analysis`] module glues these together for the CLI and
//! the HTTP server so both produce identical numbers.

pub mod analysis;
pub mod cluster;
pub mod docstore;
pub mod embed;
pub mod fingerprint;
pub mod quality;
pub mod smiles;

pub(crate) mod linalg;
