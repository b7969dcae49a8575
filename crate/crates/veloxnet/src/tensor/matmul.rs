//! Matrix-product kernels shared by the tensor op and the layer backends.
//!
//! Three access patterns cover every layer in the crate:
//!   `mm`      C = A·B        (im2col forward, linear forward, dense gate)
//!   `mm_a_bt` C = A·Bᵀ       (dot-product form; weight-transposed products)
//!   `mm_at_b` C = Aᵀ·B       (weight gradients)
//!
//! All kernels are deterministic under rayon: every output element is the
//! result of one fixed-order summation, and `mm_at_b` merges fixed-size row
//! chunks in index order.

use super::Scalar;
use rayon::prelude::*;

/// Below this many multiply-adds the sequential path wins.
const PAR_THRESHOLD_OPS: usize = 1 << 15;

/// C(m×p) = A(m×k) · B(k×p); `out` must be zeroed by the caller.
pub(crate) fn mm<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], p: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * p);
    debug_assert_eq!(out.len(), m * p);
    let row = |orow: &mut [T], arow: &[T]| {
        for (t, &aik) in arow.iter().enumerate() {
            let brow = &b[t * p..(t + 1) * p];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o = *o + aik * bv;
            }
        }
    };
    if m * k * p >= PAR_THRESHOLD_OPS {
        out.par_chunks_mut(p)
            .zip(a.par_chunks(k))
            .for_each(|(orow, arow)| row(orow, arow));
    } else {
        for (orow, arow) in out.chunks_mut(p).zip(a.chunks(k)) {
            row(orow, arow);
        }
    }
}

/// C(m×p) = A(m×k) · B(p×k)ᵀ — each output is a dot of two contiguous rows.
pub(crate) fn mm_a_bt<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], p: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), p * k);
    debug_assert_eq!(out.len(), m * p);
    let row = |orow: &mut [T], arow: &[T]| {
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow.iter()) {
                acc = acc + av * bv;
            }
            *o = acc;
        }
    };
    if m * k * p >= PAR_THRESHOLD_OPS {
        out.par_chunks_mut(p)
            .zip(a.par_chunks(k))
            .for_each(|(orow, arow)| row(orow, arow));
    } else {
        for (orow, arow) in out.chunks_mut(p).zip(a.chunks(k)) {
            row(orow, arow);
        }
    }
}

/// Rows per partial product in `mm_at_b`. Fixed (not thread-count dependent)
/// so the merge order, and hence the float result, is build-stable.
const AT_B_CHUNK_ROWS: usize = 1024;

/// C(m×n) = A(r×m)ᵀ · B(r×n), accumulated into `out` (`out += AᵀB`).
pub(crate) fn mm_at_b<T: Scalar>(a: &[T], r: usize, m: usize, b: &[T], n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), r * m);
    debug_assert_eq!(b.len(), r * n);
    debug_assert_eq!(out.len(), m * n);
    let chunk = |arows: &[T], brows: &[T]| {
        let mut part = vec![T::zero(); m * n];
        for (arow, brow) in arows.chunks_exact(m).zip(brows.chunks_exact(n)) {
            for (i, &av) in arow.iter().enumerate() {
                let prow = &mut part[i * n..(i + 1) * n];
                for (pv, &bv) in prow.iter_mut().zip(brow.iter()) {
                    *pv = *pv + av * bv;
                }
            }
        }
        part
    };
    if r * m * n >= PAR_THRESHOLD_OPS && r > AT_B_CHUNK_ROWS {
        let parts: Vec<Vec<T>> = a
            .par_chunks(AT_B_CHUNK_ROWS * m)
            .zip(b.par_chunks(AT_B_CHUNK_ROWS * n))
            .map(|(ar, br)| chunk(ar, br))
            .collect();
        for part in parts {
            for (o, v) in out.iter_mut().zip(part) {
                *o = *o + v;
            }
        }
    } else {
        let part = chunk(a, b);
        for (o, v) in out.iter_mut().zip(part) {
            *o = *o + v;
        }
    }
}
