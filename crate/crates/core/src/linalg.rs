//! Small sparse kernels the solvers need: a banded SPD Cholesky factorization
//! for the diffusion group operators and restarted GMRES for the
//! within-group transport fixed point.

use crate::error::{Error, Result};

/// Symmetric band matrix, lower band stored row by row:
/// entry `(i, j)` with `i - bw <= j <= i` lives at `i * (bw + 1) + (j + bw - i)`.
#[derive(Clone, Debug)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to `(i, j)` and, implicitly, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bw, "entry ({i},{j}) outside the band");
        let s = self.slot(r, c);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let bw = self.bw;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            let row = &self.data[i * (bw + 1)..(i + 1) * (bw + 1)];
            let mut acc = 0.0;
            for j in j0..i {
                let a = row[j + bw - i];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc + row[bw] * x[i];
        }
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Solver(format!(
                            "matrix not positive definite at row {i} (pivot {s:e})"
                        )));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandCholesky {
            n: self.n,
            bw,
            l,
        })
    }
}

/// `A = L L^T` with `L` stored in the same band layout.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Solves in place.
    pub fn solve(&self, b: &mut [f64]) {
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            let mut s = b[i];
            for j in j0..i {
                s -= self.l[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..self.n).rev() {
            let b_i = b[i] / self.l[i * w + bw];
            b[i] = b_i;
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                b[j] -= self.l[i * w + (j + bw - i)] * b_i;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Restarted GMRES for `A x = b`, starting from the contents of `x`.
/// Stops when `||b - A x|| <= tol * ||b||`.
pub fn gmres<F>(
    mut apply: F,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<KrylovStats>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let m = restart.max(1);
    let mut basis: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; n]).collect();
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut w = vec![0.0; n];
    let mut total = 0;

    loop {
        apply(x, &mut w);
        for i in 0..n {
            basis[0][i] = b[i] - w[i];
        }
        let beta = norm2(&basis[0]);
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok(KrylovStats {
                iterations: total,
                relative_residual: rel,
            });
        }
        if total >= max_iter {
            return Err(Error::Solver(format!(
                "GMRES did not reach {tol:e} in {max_iter} iterations (residual {rel:e})"
            )));
        }
        basis[0].iter_mut().for_each(|v| *v /= beta);
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;

        let mut k_used = 0;
        for k in 0..m {
            let (head, tail) = basis.split_at_mut(k + 1);
            apply(&head[k], &mut tail[0]);
            let v = &mut tail[0];
            for (j, q) in head.iter().enumerate() {
                let hjk: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                h[j][k] = hjk;
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= hjk * qi);
            }
            let hn = norm2(v);
            h[k + 1][k] = hn;
            if hn > 0.0 {
                v.iter_mut().for_each(|vi| *vi /= hn);
            }
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                return Err(Error::Solver("GMRES breakdown (zero Hessenberg column)".into()));
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= tol * 0.5 || hn == 0.0 || total >= max_iter {
                break;
            }
        }

        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut()
                .zip(&basis[j])
                .for_each(|(xi, qi)| *xi += yj * qi);
        }
    }
}
