//! Holds the `acceptance` test target only; run it with
//! `cargo test -p strokelab-acceptance --test acceptance`.
