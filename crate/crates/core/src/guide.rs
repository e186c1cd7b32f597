//! Keeps the book's code snippets honest: every chapter is included as a
//! doc comment here, so `cargo test --doc` compiles and runs each `rust`
//! fence against the current crate.

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/stacks-and-patches.md")]
    mod stacks_and_patches {}
    #[doc = include_str!("../../../book/src/synthetic-scenes.md")]
    mod synthetic_scenes {}
    #[doc = include_str!("../../../book/src/classical-selection.md")]
    mod classical_selection {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
