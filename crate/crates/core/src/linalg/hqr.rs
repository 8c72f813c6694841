use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues `(re, im)` of a general real square matrix.
///
/// Reduction to upper Hessenberg form by stabilized elimination followed by
/// the Francis double-shift QR iteration. Intended for the small reduced
/// matrices produced by the exponential fitting code.
pub fn eigenvalues_general<T: Real>(a: &Matrix<T>) -> Result<Vec<(T, T)>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: a.cols() });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = a.clone();
    to_hessenberg(&mut h);
    hqr(h)
}

fn to_hessenberg<T: Real>(a: &mut Matrix<T>) {
    let n = a.rows();
    for m in 1..n.saturating_sub(1) {
        let mut x = T::zero();
        let mut piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in (m - 1)..n {
                let t = a[(piv, j)];
                a[(piv, j)] = a[(m, j)];
                a[(m, j)] = t;
            }
            for j in 0..n {
                let t = a[(j, piv)];
                a[(j, piv)] = a[(j, m)];
                a[(j, m)] = t;
            }
        }
        if x != T::zero() {
            for i in (m + 1)..n {
                let mut y = a[(i, m - 1)];
                if y != T::zero() {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        let v = a[(m, j)];
                        a[(i, j)] -= y * v;
                    }
                    for j in 0..n {
                        let v = a[(j, i)];
                        a[(j, m)] += y * v;
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            a[(i, j)] = T::zero();
        }
    }
}

fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (1-based indices
/// internally, mirroring the classical formulation).
fn hqr<T: Real>(mut h: Matrix<T>) -> Result<Vec<(T, T)>> {
    let n = h.rows() as isize;
    macro_rules! a {
        ($i:expr, $j:expr) => {
            h[(($i - 1) as usize, ($j - 1) as usize)]
        };
    }
    let mut wr = vec![T::zero(); n as usize + 1];
    let mut wi = vec![T::zero(); n as usize + 1];

    let mut anorm = T::zero();
    for i in 1..=n {
        for j in (i - 1).max(1)..=n {
            anorm += a!(i, j).abs();
        }
    }
    let mut nn = n;
    let mut t = T::zero();
    let half = T::lit(0.5);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a!(l - 1, l - 1).abs() + a!(l, l).abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a!(l, l - 1).abs() + s == s {
                    a!(l, l - 1) = T::zero();
                    break;
                }
                l -= 1;
            }
            let mut x = a!(nn, nn);
            if l == nn {
                wr[nn as usize] = x + t;
                wi[nn as usize] = T::zero();
                nn -= 1;
            } else {
                let mut y = a!(nn - 1, nn - 1);
                let mut w = a!(nn, nn - 1) * a!(nn - 1, nn);
                if l == nn - 1 {
                    let p = half * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= T::zero() {
                        z = p + sign(z, p);
                        wr[(nn - 1) as usize] = x + z;
                        wr[nn as usize] = x + z;
                        if z != T::zero() {
                            wr[nn as usize] = x - w / z;
                        }
                        wi[(nn - 1) as usize] = T::zero();
                        wi[nn as usize] = T::zero();
                    } else {
                        wr[(nn - 1) as usize] = x + p;
                        wr[nn as usize] = x + p;
                        wi[(nn - 1) as usize] = -z;
                        wi[nn as usize] = z;
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return Err(Error::NoConvergence { sweeps: its });
                    }
                    if its == 10 || its == 20 {
                        t += x;
                        for i in 1..=nn {
                            a!(i, i) -= x;
                        }
                        let s = a!(nn, nn - 1).abs() + a!(nn - 1, nn - 2).abs();
                        x = T::lit(0.75) * s;
                        y = x;
                        w = T::lit(-0.4375) * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    let (mut p, mut q, mut r);
                    loop {
                        let z = a!(m, m);
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a!(m + 1, m) + a!(m, m + 1);
                        q = a!(m + 1, m + 1) - z - rr - ss;
                        r = a!(m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a!(m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a!(m - 1, m - 1).abs() + z.abs() + a!(m + 1, m + 1).abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a!(i, i - 2) = T::zero();
                        if i != m + 2 {
                            a!(i, i - 3) = T::zero();
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = a!(k, k - 1);
                            q = a!(k + 1, k - 1);
                            r = T::zero();
                            if k != nn - 1 {
                                r = a!(k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != T::zero() {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != T::zero() {
                            if k == m {
                                if l != m {
                                    a!(k, k - 1) = -a!(k, k - 1);
                                }
                            } else {
                                a!(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            let z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                let mut pp = a!(k, j) + q * a!(k + 1, j);
                                if k != nn - 1 {
                                    pp += r * a!(k + 2, j);
                                    a!(k + 2, j) -= pp * z;
                                }
                                a!(k + 1, j) -= pp * y;
                                a!(k, j) -= pp * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                let mut pp = x * a!(i, k) + y * a!(i, k + 1);
                                if k != nn - 1 {
                                    pp += z * a!(i, k + 2);
                                    a!(i, k + 2) -= pp * r;
                                }
                                a!(i, k + 1) -= pp * q;
                                a!(i, k) -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok((1..=n as usize).map(|i| (wr[i], wi[i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_real(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
        v
    }

    #[test]
    fn upper_triangular() {
        let a = Matrix::from_rows(&[vec![1.0, 5.0, -2.0], vec![0.0, 3.0, 7.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let ev = sorted_real(eigenvalues_general(&a).unwrap());
        for (e, x) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert!((e.0 - x).abs() < 1e-12 && e.1.abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_has_complex_pair() {
        let a = Matrix::from_rows(&[vec![0.0, -2.0], vec![2.0, 0.0]]).unwrap();
        let ev = sorted_real(eigenvalues_general(&a).unwrap());
        assert!(ev[0].0.abs() < 1e-14 && (ev[0].1 + 2.0).abs() < 1e-14);
        assert!((ev[1].1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn similarity_transform_of_diagonal() {
        // B D B⁻¹ with known spectrum.
        let d = [0.9, 0.5, 0.25, 0.1, 0.05, 0.01];
        let n = d.len();
        let b = Matrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { ((i + 2 * j) % 5) as f64 * 0.1 });
        let binv = super::super::Lu::new(&b).unwrap().inverse();
        let a = b.scale_cols(&d).matmul(&binv);
        let ev = sorted_real(eigenvalues_general(&a).unwrap());
        let mut expect = d.to_vec();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, x) in ev.iter().zip(expect) {
            assert!((e.0 - x).abs() < 1e-12, "{} vs {}", e.0, x);
            assert!(e.1.abs() < 1e-12);
        }
    }
}
