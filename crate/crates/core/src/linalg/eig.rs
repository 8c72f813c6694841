use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigendecomposition `A = V diag(values) Vᵀ` of a real symmetric matrix,
/// eigenvalues ascending, eigenvectors in the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
    pub sweeps: usize,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Only the upper triangle of `a` is read. Rotations follow a fixed row-cyclic
/// order, so the output is deterministic for a given input. Sweeps stop when
/// the off-diagonal part underflows to zero.
pub fn jacobi_eigh<T: Real>(a: &Matrix<T>, max_sweeps: usize) -> Result<SymEigen<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: a.cols() });
    }
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Matrix::identity(n);
    let mut d: Vec<T> = a.diagonal();
    let mut b = d.clone();
    let mut z = vec![T::zero(); n];
    let hundred = T::lit(100.0);
    let n2 = T::from_count(n * n);

    let mut sweeps = 0;
    loop {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)].abs();
            }
        }
        if off < T::min_positive_value() {
            break;
        }
        if !off.is_finite() {
            return Err(Error::NoConvergence { sweeps });
        }
        if sweeps >= max_sweeps {
            return Err(Error::NoConvergence { sweeps });
        }
        sweeps += 1;
        let thresh = if sweeps < 4 { T::lit(0.2) * off / n2 } else { T::zero() };

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let g = hundred * apq.abs();
                if sweeps > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[(p, q)] = T::zero();
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = T::lit(0.5) * h / apq;
                    let t = T::one() / (theta.abs() + (T::one() + theta * theta).sqrt());
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let tau = s / (T::one() + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a[(p, q)] = T::zero();
                let rot = |a: &mut Matrix<T>, i: usize, j: usize, k: usize, l: usize| {
                    let g = a[(i, j)];
                    let h = a[(k, l)];
                    a[(i, j)] = g - s * (h + g * tau);
                    a[(k, l)] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rot(&mut a, j, p, j, q);
                }
                for j in (p + 1)..q {
                    rot(&mut a, p, j, j, q);
                }
                for j in (q + 1)..n {
                    rot(&mut a, p, j, q, j);
                }
                for j in 0..n {
                    rot(&mut v, j, p, j, q);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = T::zero();
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors, sweeps })
}
