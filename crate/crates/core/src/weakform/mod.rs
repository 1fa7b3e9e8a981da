//! Weak-form system construction: separable test functions, automatic
//! hyperparameter selection and convolutional assembly of `b = G c`.

mod assemble;
mod library;
mod select;
mod testfn;

pub use assemble::{
    assemble, assemble_scaled, condition_number, unscale_coefficients, TestFunctionBasis, WeakSystem,
};
pub use library::{LibrarySpec, Term};
pub use select::{
    default_query_strides, max_half_support, query_count, rescale, select_support, Corner,
    Gammas, SupportSelection, DEFAULT_TAU, DEFAULT_TAU_HAT, QUERY_POSITIONS_PER_AXIS,
};
pub use testfn::{order_for_support, reference_testfn_1d, MAX_ORDER};
