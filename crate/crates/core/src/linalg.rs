//! Dense complex linear algebra on the small operator spaces used here.
//!
//! Everything is generic over nalgebra's square matrix storage so the same
//! code serves the 8×8 single-donor space (stack allocated) and the 64×64
//! two-donor space (heap allocated).

use nalgebra::allocator::Allocator;
use nalgebra::{DMatrix, DefaultAllocator, Dim, OMatrix, SMatrix};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type Op8 = SMatrix<C64, 8, 8>;
pub type Mat2 = SMatrix<C64, 2, 2>;
pub type DOp = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// e^{iθ}
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

pub mod pauli {
    use super::*;

    pub fn id() -> Mat2 {
        Mat2::identity()
    }
    pub fn x() -> Mat2 {
        Mat2::new(ZERO, ONE, ONE, ZERO)
    }
    pub fn y() -> Mat2 {
        Mat2::new(ZERO, -I, I, ZERO)
    }
    pub fn z() -> Mat2 {
        Mat2::new(ONE, ZERO, ZERO, -ONE)
    }
    /// 2Sz for a spin stored as index 0 = down, index 1 = up.
    pub fn z_spin() -> Mat2 {
        Mat2::new(-ONE, ZERO, ZERO, ONE)
    }
    /// 2Sy in the same down/up ordering; note the sign flip relative to σy.
    pub fn y_spin() -> Mat2 {
        -y()
    }
    /// |1⟩⟨0| in a {0 = lower, 1 = upper} spin convention, i.e. the raising
    /// operator σ+ = (σx + iσy)/2 when index 1 is spin up.
    pub fn raise() -> Mat2 {
        Mat2::new(ZERO, ZERO, ONE, ZERO)
    }
    pub fn lower() -> Mat2 {
        Mat2::new(ZERO, ONE, ZERO, ZERO)
    }
}

/// Tensor product of three 2×2 factors in orbital ⊗ electron ⊗ nuclear
/// order.
pub fn kron3(a: &Mat2, b: &Mat2, cc: &Mat2) -> Op8 {
    let mut out = Op8::zeros();
    for i in 0..8 {
        let (ia, ib, ic) = (i >> 2, (i >> 1) & 1, i & 1);
        for j in 0..8 {
            let (ja, jb, jc) = (j >> 2, (j >> 1) & 1, j & 1);
            out[(i, j)] = a[(ia, ja)] * b[(ib, jb)] * cc[(ic, jc)];
        }
    }
    out
}

/// Kronecker product of two dynamically sized operators.
pub fn kron(a: &DOp, b: &DOp) -> DOp {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DOp::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn to_dyn<const N: usize>(m: &SMatrix<C64, N, N>) -> DOp {
    DOp::from_fn(N, N, |i, j| m[(i, j)])
}

pub fn to_static<const N: usize>(m: &DOp) -> SMatrix<C64, N, N> {
    assert_eq!(m.shape(), (N, N));
    SMatrix::<C64, N, N>::from_fn(|i, j| m[(i, j)])
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1<D: Dim>(a: &OMatrix<C64, D, D>) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    let mut best = 0.0f64;
    for col in a.column_iter() {
        let s: f64 = col.iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

/// Matrix exponential by scaling and squaring with a truncated Taylor
/// series. The series is summed until the next term drops below machine
/// precision relative to the scaled norm, so accuracy does not depend on
/// a fixed degree.
pub fn expm<D: Dim>(a: &OMatrix<C64, D, D>) -> OMatrix<C64, D, D>
where
    DefaultAllocator: Allocator<D, D>,
{
    let (n, _) = a.shape_generic();
    let norm = norm1(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * C64::from(0.5f64.powi(squarings));
    let scaled_norm = norm * 0.5f64.powi(squarings);

    let mut result = OMatrix::<C64, D, D>::identity_generic(n, n);
    let mut term = OMatrix::<C64, D, D>::identity_generic(n, n);
    let mut bound = 1.0;
    for k in 1..40 {
        term = &term * &scaled * C64::from(1.0 / k as f64);
        result += &term;
        bound *= scaled_norm / k as f64;
        if bound < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// exp(−i·H·dt) for Hermitian H.
#[inline]
pub fn propagator_step<D: Dim>(h: &OMatrix<C64, D, D>, dt: f64) -> OMatrix<C64, D, D>
where
    DefaultAllocator: Allocator<D, D>,
{
    expm(&(h * C64::new(0.0, -dt)))
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// ascending; column k of the returned matrix is the k-th eigenvector.
pub fn eigh(h: &DOp) -> (Vec<f64>, DOp) {
    let n = h.nrows();
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DOp::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn eigh8(h: &Op8) -> (Vec<f64>, Op8) {
    let (vals, vecs) = eigh(&to_dyn(h));
    (vals, to_static(&vecs))
}

/// Largest singular value.
pub fn op_norm<D: Dim>(a: &OMatrix<C64, D, D>) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    let dynm = DOp::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    dynm.singular_values().max()
}

/// ‖A − A†‖ relative to ‖A‖ (zero for the zero matrix).
pub fn hermiticity_defect<D: Dim>(a: &OMatrix<C64, D, D>) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    let scale = op_norm(a);
    if scale == 0.0 {
        return 0.0;
    }
    op_norm(&(a - a.adjoint())) / scale
}

/// ‖U†U − 𝟙‖ in operator norm.
pub fn unitarity_defect<D: Dim>(u: &OMatrix<C64, D, D>) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    let (n, _) = u.shape_generic();
    let g = u.adjoint() * u - OMatrix::<C64, D, D>::identity_generic(n, n);
    op_norm(&g)
}

/// Closest unitary in Frobenius norm (polar factor), U = W·V† from the SVD.
pub fn nearest_unitary(a: &DOp) -> DOp {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    u * v_t
}

pub fn nearest_unitary2(a: &Mat2) -> Mat2 {
    to_static(&nearest_unitary(&to_dyn(a)))
}

/// Extracts the sub-block of `u` with rows and columns listed in `idx`.
pub fn sub_block<D: Dim>(u: &OMatrix<C64, D, D>, idx: &[usize]) -> DOp
where
    DefaultAllocator: Allocator<D, D>,
{
    DOp::from_fn(idx.len(), idx.len(), |i, j| u[(idx[i], idx[j])])
}

/// Single-qubit rotations with σz = diag(1, −1).
pub fn rz(theta: f64) -> Mat2 {
    Mat2::new(cis(-theta / 2.0), ZERO, ZERO, cis(theta / 2.0))
}

pub fn rx(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    Mat2::new(r(co), c(0.0, -s), c(0.0, -s), r(co))
}

pub fn ry(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    Mat2::new(r(co), r(-s), r(s), r(co))
}
