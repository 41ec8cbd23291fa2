//! Coupon allocation under a budget: a user-intent model scores every coupon
//! amount, and a multiple-choice knapsack allocator with an online dual
//! threshold decides who gets what.

pub mod allocator;
pub mod cli;
pub mod error;
pub mod eval;
pub mod iidn;
pub mod money;
pub mod nn;
pub mod simulator;

pub use error::{Error, Result};
pub use money::Cents;
