//! Dense symmetric indefinite `P A P^T = L D L^T` (Bunch-Kaufman pivoting)
//! with inertia.

/// Eigenvalue sign counts of a factored matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pivot {
    One,
    Two,
}

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    /// Row-major; the strict lower triangle holds L, the diagonal and the
    /// first subdiagonal of 2x2 blocks hold D.
    a: Vec<f64>,
    perm: Vec<usize>,
    pivots: Vec<(usize, Pivot)>,
    pub inertia: Inertia,
}

impl Ldl {
    /// Factors the symmetric matrix whose lower triangle is stored row-major
    /// in `a` (`n * n` entries; the upper triangle is ignored).
    pub fn factor(mut a: Vec<f64>, n: usize) -> Ldl {
        assert_eq!(a.len(), n * n);
        let alpha = (1.0 + 17f64.sqrt()) / 8.0;
        let scale = (0..n).fold(0.0f64, |m, i| {
            a[i * n..=i * n + i].iter().fold(m, |m, v| m.max(v.abs()))
        });
        let zero_tol = 1e-14 * scale.max(1e-300);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();
        let mut inertia = Inertia::default();
        let mut col = vec![0.0; n];
        let mut col2 = vec![0.0; n];
        let mut nz: Vec<usize> = Vec::with_capacity(n);
        let idx = |i: usize, j: usize| i * n + j;

        let mut k = 0;
        while k < n {
            let absakk = a[idx(k, k)].abs();
            let mut imax = k;
            let mut colmax = 0.0;
            for i in k + 1..n {
                let v = a[idx(i, k)].abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            let (kstep, kp) = if absakk.max(colmax) <= zero_tol {
                (1, k)
            } else if absakk >= alpha * colmax {
                (1, k)
            } else {
                let mut rowmax = 0.0f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[idx(imax, j)].abs());
                }
                for i in imax + 1..n {
                    rowmax = rowmax.max(a[idx(i, imax)].abs());
                }
                if absakk >= alpha * colmax * (colmax / rowmax) {
                    (1, k)
                } else if a[idx(imax, imax)].abs() >= alpha * rowmax {
                    (1, imax)
                } else {
                    (2, imax)
                }
            };
            let kk = k + kstep - 1;
            if kp != kk {
                for i in kp + 1..n {
                    a.swap(idx(i, kk), idx(i, kp));
                }
                for j in kk + 1..kp {
                    a.swap(idx(j, kk), idx(kp, j));
                }
                a.swap(idx(kk, kk), idx(kp, kp));
                for j in 0..kk {
                    a.swap(idx(kk, j), idx(kp, j));
                }
                perm.swap(kk, kp);
            }

            if kstep == 1 {
                let d = a[idx(k, k)];
                if d.abs() <= zero_tol {
                    inertia.zero += 1;
                    a[idx(k, k)] = 0.0;
                    for i in k + 1..n {
                        a[idx(i, k)] = 0.0;
                    }
                } else {
                    if d > 0.0 {
                        inertia.positive += 1;
                    } else {
                        inertia.negative += 1;
                    }
                    nz.clear();
                    for i in k + 1..n {
                        col[i] = a[idx(i, k)];
                        if col[i] != 0.0 {
                            nz.push(i);
                        }
                    }
                    for (p, &i) in nz.iter().enumerate() {
                        let li = col[i] / d;
                        let row = i * n;
                        for &j in &nz[..=p] {
                            a[row + j] -= li * col[j];
                        }
                        a[idx(i, k)] = li;
                    }
                }
                pivots.push((k, Pivot::One));
            } else {
                let d11 = a[idx(k, k)];
                let d21 = a[idx(k + 1, k)];
                let d22 = a[idx(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if d11 + d22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                nz.clear();
                for i in k + 2..n {
                    col[i] = a[idx(i, k)];
                    col2[i] = a[idx(i, k + 1)];
                    if col[i] != 0.0 || col2[i] != 0.0 {
                        nz.push(i);
                    }
                }
                for (p, &i) in nz.iter().enumerate() {
                    let l1 = (col[i] * d22 - col2[i] * d21) / det;
                    let l2 = (col2[i] * d11 - col[i] * d21) / det;
                    let row = i * n;
                    for &j in &nz[..=p] {
                        a[row + j] -= l1 * col[j] + l2 * col2[j];
                    }
                    a[idx(i, k)] = l1;
                    a[idx(i, k + 1)] = l2;
                }
                pivots.push((k, Pivot::Two));
            }
            k += kstep;
        }
        Ldl {
            n,
            a,
            perm,
            pivots,
            inertia,
        }
    }

    /// Solves `A x = b` in place. Zero pivots are treated as zero rows.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let a = &self.a;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One => {
                    let yk = y[k];
                    if yk != 0.0 {
                        for i in k + 1..n {
                            y[i] -= a[i * n + k] * yk;
                        }
                    }
                }
                Pivot::Two => {
                    let (y1, y2) = (y[k], y[k + 1]);
                    for i in k + 2..n {
                        y[i] -= a[i * n + k] * y1 + a[i * n + k + 1] * y2;
                    }
                }
            }
        }
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One => {
                    let d = a[k * n + k];
                    y[k] = if d == 0.0 { 0.0 } else { y[k] / d };
                }
                Pivot::Two => {
                    let d11 = a[k * n + k];
                    let d21 = a[(k + 1) * n + k];
                    let d22 = a[(k + 1) * n + k + 1];
                    let det = d11 * d22 - d21 * d21;
                    let (y1, y2) = (y[k], y[k + 1]);
                    y[k] = (d22 * y1 - d21 * y2) / det;
                    y[k + 1] = (d11 * y2 - d21 * y1) / det;
                }
            }
        }
        for &(k, piv) in self.pivots.iter().rev() {
            match piv {
                Pivot::One => {
                    let mut s = y[k];
                    for i in k + 1..n {
                        s -= a[i * n + k] * y[i];
                    }
                    y[k] = s;
                }
                Pivot::Two => {
                    let (mut s1, mut s2) = (y[k], y[k + 1]);
                    for i in k + 2..n {
                        s1 -= a[i * n + k] * y[i];
                        s2 -= a[i * n + k + 1] * y[i];
                    }
                    y[k] = s1;
                    y[k + 1] = s2;
                }
            }
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = y[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lower(full: &[f64], n: usize) -> Vec<f64> {
        let mut a = full.to_vec();
        for i in 0..n {
            for j in i + 1..n {
                a[i * n + j] = f64::NAN;
            }
        }
        a
    }

    fn matvec(full: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| full[i * n + j] * x[j]).sum())
            .collect()
    }

    #[test]
    fn solves_random_indefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 3, 5, 8, 13] {
            let mut full = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = rng.gen_range(-1.0..1.0);
                    full[i * n + j] = v;
                    full[j * n + i] = v;
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = Ldl::factor(lower(&full, n), n);
            let mut x = b.clone();
            f.solve(&mut x);
            let r = matvec(&full, n, &x);
            for i in 0..n {
                assert!((r[i] - b[i]).abs() < 1e-9, "n={n}");
            }
            assert_eq!(f.inertia.positive + f.inertia.negative + f.inertia.zero, n);
        }
    }

    #[test]
    fn inertia_of_saddle_matrix() {
        // SPD 2x2 block bordered by two independent constraints.
        let n = 4;
        let full = vec![
            4.0, 1.0, 1.0, 0.0, //
            1.0, 3.0, 0.0, 1.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0,
        ];
        let f = Ldl::factor(lower(&full, n), n);
        assert_eq!(
            f.inertia,
            Inertia {
                positive: 2,
                negative: 2,
                zero: 0
            }
        );
        let neg = vec![-1.0, 0.0, 0.0, -2.0];
        let f = Ldl::factor(lower(&neg, 2), 2);
        assert_eq!(f.inertia.negative, 2);
    }

    #[test]
    fn zero_diagonal_needs_two_by_two_pivot() {
        let full = vec![0.0, 1.0, 1.0, 0.0];
        let f = Ldl::factor(lower(&full, 2), 2);
        assert_eq!(f.inertia.positive, 1);
        assert_eq!(f.inertia.negative, 1);
        let mut x = vec![3.0, 5.0];
        f.solve(&mut x);
        assert!((x[0] - 5.0).abs() < 1e-14 && (x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_reports_zero() {
        let full = vec![1.0, 1.0, 1.0, 1.0];
        let f = Ldl::factor(lower(&full, 2), 2);
        assert_eq!(f.inertia.zero, 1);
    }
}
