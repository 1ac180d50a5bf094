// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod matkernel;
pub mod quantstate;
pub mod driveprep;
pub mod qfcchannel;
pub mod spectral;
pub mod tomosim;
pub mod bellsweep;
pub mod cli;
