//! The guide's chapters as doctests. Nothing here is meant to be used; run
//! `cargo test -p uqnet-book` to check every listing in `book/src`.

#[cfg(doctest)]
mod chapters {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;

    #[doc = include_str!("../../../book/src/emulators.md")]
    pub struct Emulators;

    #[doc = include_str!("../../../book/src/dlm.md")]
    pub struct Dlm;

    #[doc = include_str!("../../../book/src/networks.md")]
    pub struct Networks;

    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub struct Scenarios;

    #[doc = include_str!("../../../book/src/persistence.md")]
    pub struct Persistence;

    #[doc = include_str!("../../../book/src/service.md")]
    pub struct Service;
}
