//! Regular periodic grids on `[0,1)^d` and their Fourier transforms.
//!
//! Arrays are stored row-major with the first axis slowest:
//! `idx = (i0 * n + i1) * n + i2` in three dimensions, `i0 * n + i1` in two.
//! Spectral arrays use the same layout with mode `m = j` for `j ≤ n/2` and
//! `m = j − n` above. The forward transform is scaled by `1/n^d`, so the zero
//! mode holds the mean and `Σ|û|² = ∫|u|²`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    d: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {d}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { d, n })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of nodes, `n^d`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Per-axis indices of a flat index; unused axes are zero.
    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        if self.d == 3 {
            [idx / (n * n), (idx / n) % n, idx % n]
        } else {
            [idx / n, idx % n, 0]
        }
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        if self.d == 3 {
            (c[0] * self.n + c[1]) * self.n + c[2]
        } else {
            c[0] * self.n + c[1]
        }
    }

    pub fn node_position(&self, idx: usize) -> Vec3 {
        let c = self.coords(idx);
        let h = self.h();
        let z = if self.d == 3 { c[2] as f64 * h } else { 0.0 };
        Vec3::new(c[0] as f64 * h, c[1] as f64 * h, z)
    }

    #[inline]
    pub fn mode_of(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let c = self.coords(idx);
        let z = if self.d == 3 { self.mode_of(c[2]) } else { 0 };
        [self.mode_of(c[0]), self.mode_of(c[1]), z]
    }

    /// Flat index of an integer mode (wrapped periodically).
    pub fn mode_index(&self, m: [i64; 3]) -> usize {
        let n = self.n as i64;
        let w = |x: i64| x.rem_euclid(n) as usize;
        self.index([w(m[0]), w(m[1]), if self.d == 3 { w(m[2]) } else { 0 }])
    }

    /// Largest retained mode magnitude per axis under the two-thirds rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n as i64 - 1) / 3
    }
}

/// FFT plans and wavenumber tables for one grid.
#[derive(Clone)]
pub struct Transform {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: [Vec<f64>; 3],
    k2: Vec<f64>,
    mask: Vec<bool>,
    neg: Vec<usize>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform").field("grid", &self.grid).finish()
    }
}

impl Transform {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n());
        let inv = planner.plan_fft_inverse(grid.n());
        let len = grid.len();
        let cut = grid.dealias_cutoff();
        let mut k = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        let mut k2 = vec![0.0; len];
        let mut mask = vec![false; len];
        let mut neg = vec![0; len];
        for idx in 0..len {
            let m = grid.mode(idx);
            for a in 0..3 {
                k[a][idx] = TWO_PI * m[a] as f64;
            }
            k2[idx] = k[0][idx].powi(2) + k[1][idx].powi(2) + k[2][idx].powi(2);
            mask[idx] = m.iter().all(|x| x.abs() <= cut);
            neg[idx] = grid.mode_index([-m[0], -m[1], -m[2]]);
        }
        Self {
            grid,
            fwd,
            inv,
            k,
            k2,
            mask,
            neg,
        }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Wavevector component `k_a = 2π m_a` for every spectral index.
    #[inline]
    pub fn k(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    #[inline]
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// True for modes kept by the two-thirds rule.
    #[inline]
    pub fn dealias_mask(&self) -> &[bool] {
        &self.mask
    }

    /// Index of the mode `−k`.
    #[inline]
    pub fn negated(&self, idx: usize) -> usize {
        self.neg[idx]
    }

    fn along_axes(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let len = data.len();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // The last axis is contiguous.
        plan.process_with_scratch(data, &mut scratch);
        let mut lines = vec![Complex64::new(0.0, 0.0); len];
        for axis in 0..self.grid.d() - 1 {
            let stride = n.pow((self.grid.d() - 1 - axis) as u32);
            let block = n * stride;
            let mut pos = 0;
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    for j in 0..n {
                        lines[pos + j] = data[outer + j * stride + inner];
                    }
                    pos += n;
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            let mut pos = 0;
            for outer in (0..len).step_by(block) {
                for inner in 0..stride {
                    for j in 0..n {
                        data[outer + j * stride + inner] = lines[pos + j];
                    }
                    pos += n;
                }
            }
        }
    }

    /// In-place forward transform, scaled by `1/n^d`.
    pub fn forward(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.grid.len());
        self.along_axes(data, &self.fwd);
        let s = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    /// In-place unscaled inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.grid.len());
        self.along_axes(data, &self.inv);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Inverse transform of a Hermitian spectrum; the imaginary residue is
    /// discarded.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut data = spectrum.to_vec();
        self.inverse(&mut data);
        data.into_iter().map(|z| z.re).collect()
    }

    /// Forward transforms of two real fields with one complex transform.
    pub fn forward_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward(&mut z);
        let mut fa = vec![Complex64::new(0.0, 0.0); z.len()];
        let mut fb = vec![Complex64::new(0.0, 0.0); z.len()];
        for idx in 0..z.len() {
            let zc = z[self.neg[idx]].conj();
            fa[idx] = 0.5 * (z[idx] + zc);
            fb[idx] = Complex64::new(0.0, -0.5) * (z[idx] - zc);
        }
        (fa, fb)
    }

    /// Inverse transforms of two Hermitian spectra with one complex transform.
    pub fn inverse_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| x + i * y).collect();
        self.inverse(&mut z);
        (z.iter().map(|v| v.re).collect(), z.iter().map(|v| v.im).collect())
    }

    /// Inverse transforms of any number of Hermitian spectra, two at a time.
    pub fn inverse_many(&self, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spectra.len());
        let mut chunks = spectra.chunks_exact(2);
        for pair in &mut chunks {
            let (x, y) = self.inverse_pair(pair[0], pair[1]);
            out.push(x);
            out.push(y);
        }
        if let [last] = chunks.remainder() {
            out.push(self.inverse_real(last));
        }
        out
    }

    /// Forward transforms of any number of real fields, two at a time.
    pub fn forward_many(&self, fields: &[&[f64]]) -> Vec<Vec<Complex64>> {
        let mut out = Vec::with_capacity(fields.len());
        let mut chunks = fields.chunks_exact(2);
        for pair in &mut chunks {
            let (x, y) = self.forward_pair(pair[0], pair[1]);
            out.push(x);
            out.push(y);
        }
        if let [last] = chunks.remainder() {
            out.push(self.forward_real(last));
        }
        out
    }
}
