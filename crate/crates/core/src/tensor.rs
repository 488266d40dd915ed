//! Dense f64 tensors and the matrix products the network layers reduce to.
//!
//! Shapes are explicit, storage is row-major `Vec<f64>`. The three matmul
//! variants are the only hot paths in the crate; with the `parallel` feature
//! they split across output rows, which keeps every per-element summation
//! order fixed, so parallel and sequential runs are bitwise identical.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Contract(
                "tensor data length does not match shape".to_string(),
            ));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Max |a - b| over all elements; shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Contract("tensor shape mismatch".to_string()));
        }
        let mut m = 0.0f64;
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            let d = if a > b { a - b } else { b - a };
            if d > m {
                m = d;
            }
        }
        Ok(m)
    }
}

/// Smallest row count at which splitting a matmul across threads pays off.
#[cfg(feature = "parallel")]
const PAR_MIN_WORK: usize = 1 << 17;

/// `c[m,n] = a[m,k] * b[k,n]`
pub fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let row = |ci: &mut [f64], i: usize| {
        ci.fill(0.0);
        let ar = &a[i * k..(i + 1) * k];
        for (l, &ail) in ar.iter().enumerate() {
            if ail == 0.0 {
                continue;
            }
            let br = &b[l * n..(l + 1) * n];
            for (cv, &bv) in ci.iter_mut().zip(br.iter()) {
                *cv += ail * bv;
            }
        }
    };
    run_rows(c, n, m * k * n, row);
}

/// `c[m,n] = a[m,k] * b[n,k]^T` (dot products of rows).
pub fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let row = |ci: &mut [f64], i: usize| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, cv) in ci.iter_mut().enumerate() {
            let br = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (x, y) in ar.iter().zip(br.iter()) {
                s += x * y;
            }
            *cv = s;
        }
    };
    run_rows(c, n, m * k * n, row);
}

/// `c[m,n] = a[k,m]^T * b[k,n]`.
pub fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let row = |ci: &mut [f64], i: usize| {
        ci.fill(0.0);
        for l in 0..k {
            let ali = a[l * m + i];
            if ali == 0.0 {
                continue;
            }
            let br = &b[l * n..(l + 1) * n];
            for (cv, &bv) in ci.iter_mut().zip(br.iter()) {
                *cv += ali * bv;
            }
        }
    };
    run_rows(c, n, m * k * n, row);
}

#[cfg(feature = "parallel")]
fn run_rows<F: Fn(&mut [f64], usize) + Sync>(c: &mut [f64], n: usize, work: usize, f: F) {
    use rayon::prelude::*;
    if work >= PAR_MIN_WORK && c.len() > n {
        c.par_chunks_mut(n).enumerate().for_each(|(i, ci)| f(ci, i));
    } else {
        for (i, ci) in c.chunks_mut(n).enumerate() {
            f(ci, i);
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn run_rows<F: Fn(&mut [f64], usize)>(c: &mut [f64], n: usize, _work: usize, f: F) {
    for (i, ci) in c.chunks_mut(n).enumerate() {
        f(ci, i);
    }
}

/// L2 norm of a slice.
pub fn l2_norm(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v * v;
    }
    libm::sqrt(s)
}

/// Normalize `x` to unit L2 norm in place; returns the original norm.
pub fn l2_normalize(x: &mut [f64]) -> f64 {
    let n = l2_norm(x);
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
    n
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += x * y;
    }
    s
}
