//! Runs the guide snippets as doc-tests. One module per chapter so a failing
//! block is easy to trace back.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/basis.md")]
pub mod ch01_basis {}
#[doc = include_str!("../../../book/src/loss.md")]
pub mod ch02_loss {}
#[doc = include_str!("../../../book/src/fitting.md")]
pub mod ch03_fitting {}
#[doc = include_str!("../../../book/src/tail-index.md")]
pub mod ch04_tail_index {}
#[doc = include_str!("../../../book/src/extrapolation.md")]
pub mod ch05_extrapolation {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod ch06_simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod ch07_cli {}
