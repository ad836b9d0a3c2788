//! Type-I discrete sine transform through a complex FFT of length 2(n+1),
//! and the fast Dirichlet solver for (-Δ_h + c) on a rectangle built on it.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// X_k = Σ_{j=1..n} x_j sin(π j k / (n+1)), applied to many rows at once.
pub struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dst1 { n, fft: planner.plan_fft_forward(2 * (n + 1)) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    // two real rows share one complex transform: y = x + i z gives
    // X = -Im(Y)/2 and Z = Re(Y)/2 on k = 1..n
    fn pair(&self, x: &mut [f64], z: Option<&mut [f64]>, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        let m = 2 * (n + 1);
        buf[0] = Complex64::new(0.0, 0.0);
        buf[n + 1] = Complex64::new(0.0, 0.0);
        match &z {
            Some(z) => {
                for j in 0..n {
                    buf[j + 1] = Complex64::new(x[j], z[j]);
                    buf[m - 1 - j] = Complex64::new(-x[j], -z[j]);
                }
            }
            None => {
                for j in 0..n {
                    buf[j + 1] = Complex64::new(x[j], 0.0);
                    buf[m - 1 - j] = Complex64::new(-x[j], 0.0);
                }
            }
        }
        self.fft.process_with_scratch(buf, scratch);
        for k in 0..n {
            x[k] = -0.5 * buf[k + 1].im;
        }
        if let Some(z) = z {
            for k in 0..n {
                z[k] = 0.5 * buf[k + 1].re;
            }
        }
    }

    /// In-place transform of every contiguous row of length n in `data`.
    pub fn rows(&self, data: &mut [f64]) {
        let n = self.n;
        let m = 2 * (n + 1);
        let scratch_len = self.fft.get_inplace_scratch_len();
        data.par_chunks_mut(2 * n).for_each_init(
            || (vec![Complex64::new(0.0, 0.0); m], vec![Complex64::new(0.0, 0.0); scratch_len]),
            |(buf, scratch), chunk| {
                if chunk.len() == 2 * n {
                    let (x, z) = chunk.split_at_mut(n);
                    self.pair(x, Some(z), buf, scratch);
                } else {
                    self.pair(chunk, None, buf, scratch);
                }
            },
        );
    }
}

fn transpose(src: &[f64], dst: &mut [f64], rows: usize, cols: usize) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Exact inverse of (-Δ_h + c) with homogeneous Dirichlet data on an
/// nx × ny interior grid (row-major, x fastest).
pub struct FastPoisson {
    nx: usize,
    ny: usize,
    dx: Dst1,
    dy: Dst1,
    lam_x: Vec<f64>,
    lam_y: Vec<f64>,
    shift: f64,
}

impl FastPoisson {
    pub fn new(nx: usize, ny: usize, h: f64, shift: f64) -> Self {
        let lam = |n: usize| -> Vec<f64> {
            (1..=n)
                .map(|k| {
                    let s = (std::f64::consts::PI * k as f64 / (2.0 * (n + 1) as f64)).sin();
                    4.0 * s * s / (h * h)
                })
                .collect()
        };
        FastPoisson { nx, ny, dx: Dst1::new(nx), dy: Dst1::new(ny), lam_x: lam(nx), lam_y: lam(ny), shift }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// u = (-Δ_h + c)^{-1} f; `work` must hold nx·ny values.
    pub fn solve(&self, f: &[f64], u: &mut [f64], work: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        u.copy_from_slice(f);
        self.dx.rows(u);
        transpose(u, work, ny, nx);
        self.dy.rows(work);
        // work is ny-fastest: work[i * ny + j] ↔ mode (i, j)
        let norm = 4.0 / ((nx + 1) as f64 * (ny + 1) as f64);
        work.par_chunks_mut(ny).enumerate().for_each(|(i, row)| {
            let lx = self.lam_x[i] + self.shift;
            for (j, v) in row.iter_mut().enumerate() {
                *v *= norm / (lx + self.lam_y[j]);
            }
        });
        self.dy.rows(work);
        transpose(work, u, nx, ny);
        self.dx.rows(u);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (1..=n)
            .map(|k| {
                (1..=n)
                    .map(|j| x[j - 1] * (std::f64::consts::PI * (j * k) as f64 / (n + 1) as f64).sin())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum() {
        for n in [1, 4, 7, 15, 20] {
            let rows = 3;
            let data: Vec<f64> = (0..n * rows).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
            let mut out = data.clone();
            Dst1::new(n).rows(&mut out);
            for r in 0..rows {
                let want = naive(&data[r * n..(r + 1) * n]);
                for k in 0..n {
                    assert!((out[r * n + k] - want[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn poisson_inverts_the_stencil() {
        let (nx, ny, h, c) = (9, 13, 0.3, 0.7);
        let f: Vec<f64> = (0..nx * ny).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let mut u = vec![0.0; nx * ny];
        let mut w = vec![0.0; nx * ny];
        FastPoisson::new(nx, ny, h, c).solve(&f, &mut u, &mut w);
        let at = |i: isize, j: isize| {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                0.0
            } else {
                u[j as usize * nx + i as usize]
            }
        };
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let lap = (4.0 * at(i, j) - at(i - 1, j) - at(i + 1, j) - at(i, j - 1) - at(i, j + 1)) / (h * h);
                let r = lap + c * at(i, j) - f[j as usize * nx + i as usize];
                assert!(r.abs() < 1e-11, "{r}");
            }
        }
    }
}
