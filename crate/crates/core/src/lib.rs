//! Differentiable logics for constraint-guided training.
//!
//! Logical constraints written in a small DSL ([`formula`]) are compiled into
//! differentiable loss terms under DL2 or one of several fuzzy-logic
//! semantics ([`logics`]), recorded on a scalar reverse-mode tape
//! ([`autodiff`]), and added to the cross-entropy loss of a small
//! feed-forward classifier ([`network`]) as `L = L_CE + lambda * L_L`.
//! [`experiment`] runs the training protocol, lambda sweeps and CSV reports.

pub mod autodiff;
pub mod constraints;
pub mod data;
pub mod experiment;
pub mod formula;
pub mod logics;
pub mod network;
