//! Bi-level data-reweighted training of a pairwise candidate judge, and the
//! Best-of-N voting harness it serves.
//!
//! Modules, bottom up:
//! - [`diffcore`]: scalar tape autodiff with gradients and Hessian-vector products
//! - [`minilang`]: executable mini-language, mutation generators, synthetic corpora
//! - [`judge`]: features, pairwise scorer, verifiable reward, DPO/KTO/ORPO/GRPO losses
//! - [`reweight`]: domain, instance-table and instance-net data weights
//! - [`bilevel`]: alternating lower/upper updates with unrolled hypergradients
//! - [`selector`]: pairwise-voting Best-of-N plus random and oracle baselines

pub mod bilevel;
pub mod diffcore;
pub mod judge;
pub mod manifest;
pub mod minilang;
pub mod reweight;
pub mod rng;
pub mod selector;
