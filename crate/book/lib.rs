//! Runs the code blocks of the guide as doctests.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/netlists.md")]
pub mod netlists {}
#[doc = include_str!("src/partition.md")]
pub mod partition {}
#[doc = include_str!("src/proofs.md")]
pub mod proofs {}
#[doc = include_str!("src/campaigns.md")]
pub mod campaigns {}
#[doc = include_str!("src/oracles.md")]
pub mod oracles {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("src/http.md")]
pub mod http {}
