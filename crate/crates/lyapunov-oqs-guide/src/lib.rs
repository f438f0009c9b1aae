//! The guide in `book/` is written for mdbook, which cannot run Rust snippets
//! against a workspace crate. Each chapter is pulled in here as the doc
//! comment of an empty module so that `cargo test --doc` compiles and runs
//! every snippet. A failing doctest is reported under the module named after
//! its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/quickstart.md")]
pub mod quickstart {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/levels.md")]
pub mod levels {}
#[doc = include_str!("../../../book/src/two_time.md")]
pub mod two_time {}
#[doc = include_str!("../../../book/src/currents.md")]
pub mod currents {}
#[doc = include_str!("../../../book/src/oracles.md")]
pub mod oracles {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
