#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod frame;
pub mod iface;
pub mod relay;
pub mod spoof;
pub mod bond;
pub mod channel;
pub mod engine;
pub mod experiment;
