#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod dynamics;
pub mod feedback_opt;
pub mod nonsmooth;
pub mod stylized;
