//! Primal active-set method for small strictly convex QPs
//! `min 1/2 y^T H y + g^T y` subject to `G y <= h`.

use super::ldl::Ldl;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub y: Vec<f64>,
    /// Multipliers of the rows of `G`, all non-negative.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

/// Dense QP data; `h_mat` and `g_rows` are row-major.
#[derive(Debug, Clone)]
pub struct Qp<'a> {
    pub n: usize,
    pub h_mat: &'a [f64],
    pub g: &'a [f64],
    pub g_rows: &'a [f64],
    pub h: &'a [f64],
}

impl Qp<'_> {
    fn m(&self) -> usize {
        self.h.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.g_rows[i * self.n..(i + 1) * self.n]
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        let n = self.n;
        let mut v = 0.0;
        for i in 0..n {
            let hy: f64 = (0..n).map(|j| self.h_mat[i * n + j] * y[j]).sum();
            v += y[i] * (0.5 * hy + self.g[i]);
        }
        v
    }

    /// Solves from a feasible starting point. Returns `None` if `start` is
    /// infeasible by more than `1e-9` or the iteration cap is hit.
    pub fn solve(&self, start: &[f64]) -> Option<QpSolution> {
        let n = self.n;
        let m = self.m();
        let feas_tol = 1e-9;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut y = start.to_vec();
        for i in 0..m {
            if dot(self.row(i), &y) - self.h[i] > feas_tol * self.h[i].abs().max(1.0) {
                return None;
            }
        }
        let mut active: Vec<usize> = Vec::new();
        let max_iter = 10 * (n + m) + 20;
        // Set after an unblocked full step: y then minimizes over the working
        // set and any remaining step is roundoff.
        let mut on_minimizer = false;
        for iter in 0..max_iter {
            let k = active.len();
            let nn = n + k;
            let mut kkt = vec![0.0; nn * nn];
            for i in 0..n {
                for j in 0..=i {
                    kkt[i * nn + j] = self.h_mat[i * n + j];
                }
            }
            for (a, &ci) in active.iter().enumerate() {
                let r = n + a;
                kkt[r * nn..r * nn + n].copy_from_slice(self.row(ci));
                kkt[r * nn + r] = -1e-14;
            }
            let mut rhs = vec![0.0; nn];
            for i in 0..n {
                let hy: f64 = (0..n).map(|j| self.h_mat[i * n + j] * y[j]).sum();
                rhs[i] = -(hy + self.g[i]);
            }
            Ldl::factor(kkt, nn).solve(&mut rhs);
            let p = &rhs[..n];
            let ynorm = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let pnorm = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if on_minimizer || pnorm <= 1e-12 * ynorm {
                on_minimizer = false;
                let lam = &rhs[n..];
                let (worst, wval) = lam
                    .iter()
                    .enumerate()
                    .fold((usize::MAX, -1e-12), |(bi, bv), (i, &v)| {
                        if v < bv {
                            (i, v)
                        } else {
                            (bi, bv)
                        }
                    });
                if worst == usize::MAX || wval >= -1e-12 {
                    let mut multipliers = vec![0.0; m];
                    for (a, &ci) in active.iter().enumerate() {
                        multipliers[ci] = lam[a].max(0.0);
                    }
                    return Some(QpSolution {
                        y,
                        multipliers,
                        iterations: iter + 1,
                    });
                }
                active.remove(worst);
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if active.contains(&i) {
                    continue;
                }
                let gp = dot(self.row(i), p);
                if gp > 1e-14 * pnorm {
                    let slack = (self.h[i] - dot(self.row(i), &y)).max(0.0);
                    let a = slack / gp;
                    if a < alpha {
                        alpha = a;
                        blocking = Some(i);
                    }
                }
            }
            for i in 0..n {
                y[i] += alpha * p[i];
            }
            match blocking {
                Some(b) => active.push(b),
                None => on_minimizer = true,
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_halfspace() {
        // min 1/2 |y - (2, 2)|^2  s.t. y0 + y1 <= 2  ->  (1, 1), multiplier 1
        let h_mat = [1.0, 0.0, 0.0, 1.0];
        let g = [-2.0, -2.0];
        let rows = [1.0, 1.0];
        let h = [2.0];
        let qp = Qp {
            n: 2,
            h_mat: &h_mat,
            g: &g,
            g_rows: &rows,
            h: &h,
        };
        let s = qp.solve(&[0.0, 0.0]).unwrap();
        assert!((s.y[0] - 1.0).abs() < 1e-12 && (s.y[1] - 1.0).abs() < 1e-12);
        assert!((s.multipliers[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearly_parallel_active_rows_terminate() {
        let h = [1.8067771227738256, 0.8630619349310978, 0.0, 0.8630619349310978, 1.923273457440155, 0.0, 0.0, 0.0, 1.4156284500332017];
        let g = [-2.738848232151946, 0.6501852928342288, 0.2617165246818694];
        let rows = [
            0.46796671188652145, -0.8833888337946003, 0.8533044072956896,
            0.8490431033098158, 0.0, -0.16540383507148101,
            0.8172090235969852, 0.0, -0.18302217149523572,
        ];
        let rhs = [-0.6013614028715432, 0.4226568357444565, 0.4259416086246858];
        let start = [-0.35857608789101747, -0.19897443699953518, -0.7726803240189224];
        let qp = Qp { n: 3, h_mat: &h, g: &g, g_rows: &rows, h: &rhs };
        let sol = qp.solve(&start).expect("terminates");
        assert!(sol.multipliers.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn rejects_infeasible_start() {
        let h_mat = [1.0];
        let qp = Qp {
            n: 1,
            h_mat: &h_mat,
            g: &[0.0],
            g_rows: &[1.0],
            h: &[0.0],
        };
        assert!(qp.solve(&[1.0]).is_none());
    }
}
