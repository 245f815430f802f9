//! Compiles the code samples of the book in `book/src` as doc-tests.

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}

    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}

    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}

    #[doc = include_str!("../../../book/src/pretraining.md")]
    mod pretraining {}

    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}

    #[doc = include_str!("../../../book/src/qubo.md")]
    mod qubo {}

    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}

    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}

    #[doc = include_str!("../../../book/src/reproducing.md")]
    mod reproducing {}
}
