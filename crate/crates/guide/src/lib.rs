//! mdbook cannot run listings that depend on workspace crates, so each chapter is
//! pulled in as the docs of an empty module and `cargo test --doc` runs them.
//! One module per chapter keeps failures traceable to their file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/instances.md")]
pub mod instances {}
#[doc = include_str!("../../../book/src/paths.md")]
pub mod paths {}
#[doc = include_str!("../../../book/src/checks.md")]
pub mod checks {}
#[doc = include_str!("../../../book/src/portfolio.md")]
pub mod portfolio {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
