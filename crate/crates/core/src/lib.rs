pub mod grammar;
pub mod inference;
pub mod lm;
pub mod logspace;
pub mod metrics;
pub mod oracle;
pub mod proposals;
pub mod taggers;
pub mod tetratag;
pub mod tree;
