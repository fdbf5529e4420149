//! In-silico blocking-probe DNA computer for graph 3-coloring.
//!
//! The pipeline mirrors the wet-lab procedure: design codewords for every
//! (path position, color), assemble the path-consistent solution space from
//! two half-libraries, convert it to single strands, block invalid strands
//! with paperclip probes in one pass, extend and amplify the survivors, then
//! sequence and decode. Every run is checked against an exhaustive oracle.

pub mod cli;
pub mod codec;
pub mod graph;
pub mod library;
pub mod probeop;
pub mod rng;
pub mod seqsim;
