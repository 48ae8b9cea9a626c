pub mod cauchy;
pub mod csvfmt;
pub mod expr;
pub mod ode;
pub mod problem;
pub mod pmp;
pub mod tail;
pub mod transversality;
