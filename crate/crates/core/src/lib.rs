//! Boosted hurdle distributional regression.
//!
//! Presence/absence is modelled by a component-wise boosted GAM with a logit
//! link; counts given presence by a boosted GAMLSS for the zero-truncated
//! negative binomial with modelled mean and overdispersion. Both parts share
//! one set of base-learner types (centred linear, dummy, P-spline deviation,
//! tensor-product surface and their varying-coefficient forms), each pinned
//! to one effective degree of freedom.

pub mod basis;
pub mod boost;
pub mod data;
pub mod error;
pub mod family;
pub mod hurdle;
pub mod stabsel;

pub use error::{Error, Result};
