//! Visitor types for enumerating parameters and buffers by stable name.

use ndarray::ArrayViewMutD;

/// Mutable view of one trainable array and its gradient accumulator.
pub struct ParamMut<'a> {
    pub value: ArrayViewMutD<'a, f64>,
    pub grad: ArrayViewMutD<'a, f64>,
}

/// Mutable view of a non-trainable state array (e.g. running statistics).
pub struct BufferMut<'a> {
    pub value: ArrayViewMutD<'a, f64>,
}

pub type ParamVisitor<'v> = dyn FnMut(&str, ParamMut<'_>) + 'v;
pub type BufferVisitor<'v> = dyn FnMut(&str, BufferMut<'_>) + 'v;
