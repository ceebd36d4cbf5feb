// SPDX-License-Identifier: MIT OR Apache-2.0

//! Query-key score probes for multiple-choice logical reasoning.

pub mod logic;
pub mod datagen;
pub mod runtime;
pub mod probe;
pub mod calibration;
pub mod harness;
