//! Small fixed-size vector/tensor helpers used throughout the assembly kernels.
//!
//! Everything here is 2D: velocity-like quantities are `Vec2`, stress/strain
//! quantities are `Mat2` with the Frobenius inner product.

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub const ZERO_MAT2: Mat2 = [[0.0; 2]; 2];

/// Frobenius inner product `A : B`.
#[inline]
pub fn ddot(a: &Mat2, b: &Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Frobenius norm `|A|`.
#[inline]
pub fn frob(a: &Mat2) -> f64 {
    ddot(a, a).sqrt()
}

#[inline]
pub fn trace(a: &Mat2) -> f64 {
    a[0][0] + a[1][1]
}

#[inline]
pub fn scale(a: &Mat2, s: f64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

#[inline]
pub fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

#[inline]
pub fn sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

#[inline]
pub fn dot2(a: &Vec2, b: &Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm2(a: &Vec2) -> f64 {
    dot2(a, a).sqrt()
}

/// Matrix-vector product `A n` (rows of `A` dotted with `n`).
#[inline]
pub fn matvec2(a: &Mat2, n: &Vec2) -> Vec2 {
    [
        a[0][0] * n[0] + a[0][1] * n[1],
        a[1][0] * n[0] + a[1][1] * n[1],
    ]
}

/// The canonical 2x2 unit tensors, indexed as `c = 2*row + col`.
pub const UNIT_TENSORS: [Mat2; 4] = [
    [[1.0, 0.0], [0.0, 0.0]],
    [[0.0, 1.0], [0.0, 0.0]],
    [[0.0, 0.0], [1.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0]],
];

/// Generator of the skew-symmetric tensors in 2D.
pub const SKEW_GEN: Mat2 = [[0.0, 1.0], [-1.0, 0.0]];
