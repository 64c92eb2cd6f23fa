//! Weighted particle cloud on the torus and its characteristic dynamics.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{min_image, CommKernel};
use crate::relkin::{v_of_w, LightSpeed};
use crate::Vec3;

/// Largest accepted RK4 step for the unit-rate drag relaxation.
pub const MAX_DT: f64 = 0.5;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: Vec3,
    pub w: Vec3,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    particles: Vec<Particle>,
    d: usize,
    c: LightSpeed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDeriv {
    pub dx: Vec<Vec3>,
    pub dw: Vec<Vec3>,
}

/// How the pairwise alignment sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceMethod {
    /// O(N) for constant kernels, cell lists for short compact support,
    /// direct summation otherwise.
    #[default]
    Auto,
    Direct,
    CellList,
}

/// Wraps a coordinate into `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

#[inline]
fn wrap_point(x: &Vec3) -> Vec3 {
    Vec3::new(wrap_unit(x.x), wrap_unit(x.y), wrap_unit(x.z))
}

impl Ensemble {
    /// Builds an ensemble of unit total mass, or an empty one (vacuum).
    pub fn new(particles: Vec<Particle>, d: usize, c: LightSpeed) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidEnsemble(format!("dimension must be 2 or 3, got {d}")));
        }
        let mut total = 0.0;
        for (i, p) in particles.iter().enumerate() {
            if !(p.mass > 0.0 && p.mass.is_finite()) {
                return Err(Error::InvalidEnsemble(format!("particle {i} has mass {}", p.mass)));
            }
            for a in 0..3 {
                if !(0.0..1.0).contains(&p.x[a]) {
                    return Err(Error::InvalidEnsemble(format!("particle {i} lies outside [0,1)^d")));
                }
                if !p.w[a].is_finite() {
                    return Err(Error::InvalidEnsemble(format!("particle {i} has a non-finite velocity")));
                }
            }
            if d == 2 && (p.x.z != 0.0 || p.w.z != 0.0) {
                return Err(Error::InvalidEnsemble(format!(
                    "particle {i} has a third component in two dimensions"
                )));
            }
            total += p.mass;
        }
        if !particles.is_empty() && (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidEnsemble(format!("total mass is {total}, expected 1")));
        }
        Ok(Self { particles, d, c })
    }

    pub fn vacuum(d: usize, c: LightSpeed) -> Result<Self> {
        Self::new(Vec::new(), d, c)
    }

    #[inline]
    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn c(&self) -> LightSpeed {
        self.c
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.particles.iter().map(|p| p.x).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.mass).sum()
    }

    /// `Σ m_p w_p`.
    pub fn momentum(&self) -> Vec3 {
        self.particles.iter().fold(Vec3::zeros(), |acc, p| acc + p.w * p.mass)
    }

    /// Classical velocities `v̂(w_p)`.
    pub fn velocities(&self) -> Result<Vec<Vec3>> {
        self.particles.iter().map(|p| v_of_w(&p.w, self.c)).collect()
    }

    /// Largest `|w_p|`.
    pub fn support_radius(&self) -> f64 {
        self.particles.iter().map(|p| p.w.norm()).fold(0.0, f64::max)
    }

    /// `L_p = −Σ_q m_q φ(d_T(x_p, x_q)) (v_p − v_q)` for every particle.
    pub fn alignment_forces(&self, k: &CommKernel) -> Result<Vec<Vec3>> {
        self.alignment_forces_with(k, ForceMethod::Auto)
    }

    pub fn alignment_forces_with(&self, k: &CommKernel, method: ForceMethod) -> Result<Vec<Vec3>> {
        let v = self.velocities()?;
        Ok(self.alignment_from_velocities(k, &v, method))
    }

    pub fn alignment_from_velocities(&self, k: &CommKernel, v: &[Vec3], method: ForceMethod) -> Vec<Vec3> {
        match method {
            ForceMethod::Direct => self.alignment_direct(k, v),
            ForceMethod::CellList => match k.compact_support() {
                Some(r) => self.alignment_cells(k, v, r),
                None => self.alignment_direct(k, v),
            },
            ForceMethod::Auto => {
                if let CommKernel::Constant { amplitude } = k {
                    return self.alignment_constant(*amplitude, v);
                }
                match k.compact_support() {
                    Some(r) if r < 1.0 / 3.0 => self.alignment_cells(k, v, r),
                    _ => self.alignment_direct(k, v),
                }
            }
        }
    }

    fn alignment_constant(&self, amplitude: f64, v: &[Vec3]) -> Vec<Vec3> {
        let mut vbar = Vec3::zeros();
        let mut mass = 0.0;
        for (p, vp) in self.particles.iter().zip(v) {
            vbar += vp * p.mass;
            mass += p.mass;
        }
        v.iter().map(|vp| (vbar - vp * mass) * amplitude).collect()
    }

    fn alignment_direct(&self, k: &CommKernel, v: &[Vec3]) -> Vec<Vec3> {
        let n = self.particles.len();
        let mut out = vec![Vec3::zeros(); n];
        let ps = &self.particles;
        for p in 0..n {
            let (xp, vp, mp) = (ps[p].x, v[p], ps[p].mass);
            let mut acc = Vec3::zeros();
            for q in (p + 1)..n {
                let dx = min_image(xp.x - ps[q].x.x);
                let dy = min_image(xp.y - ps[q].x.y);
                let dz = min_image(xp.z - ps[q].x.z);
                let phi = k.eval((dx * dx + dy * dy + dz * dz).sqrt());
                let t = (v[q] - vp) * phi;
                acc += t * ps[q].mass;
                out[q] -= t * mp;
            }
            out[p] += acc;
        }
        out
    }

    fn alignment_cells(&self, k: &CommKernel, v: &[Vec3], support: f64) -> Vec<Vec3> {
        let nc = if support > 0.0 { (1.0 / support).floor() as usize } else { usize::MAX };
        if nc < 3 {
            return self.alignment_direct(k, v);
        }
        let nc = nc.min(64);
        let dims = if self.d == 3 { [nc, nc, nc] } else { [nc, nc, 1] };
        let cell_of = |x: &Vec3| -> [usize; 3] {
            let f = |y: f64, m: usize| ((y * m as f64) as usize).min(m - 1);
            [f(x.x, dims[0]), f(x.y, dims[1]), f(x.z, dims[2])]
        };
        let flat = |c: [usize; 3]| (c[0] * dims[1] + c[1]) * dims[2] + c[2];
        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (i, p) in self.particles.iter().enumerate() {
            cells[flat(cell_of(&p.x))].push(i);
        }
        let zr: &[i64] = if self.d == 3 { &[-1, 0, 1] } else { &[0] };
        let ps = &self.particles;
        ps.iter()
            .enumerate()
            .map(|(p, pp)| {
                let c = cell_of(&pp.x);
                let mut acc = Vec3::zeros();
                for &ox in &[-1i64, 0, 1] {
                    for &oy in &[-1i64, 0, 1] {
                        for &oz in zr {
                            let nb = [
                                (c[0] as i64 + ox).rem_euclid(dims[0] as i64) as usize,
                                (c[1] as i64 + oy).rem_euclid(dims[1] as i64) as usize,
                                (c[2] as i64 + oz).rem_euclid(dims[2] as i64) as usize,
                            ];
                            for &q in &cells[flat(nb)] {
                                if q == p {
                                    continue;
                                }
                                let dx = min_image(pp.x.x - ps[q].x.x);
                                let dy = min_image(pp.x.y - ps[q].x.y);
                                let dz = min_image(pp.x.z - ps[q].x.z);
                                let phi = k.eval((dx * dx + dy * dy + dz * dz).sqrt());
                                acc += (v[q] - v[p]) * (phi * ps[q].mass);
                            }
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// Drag on every particle, `u(x_p) − w_p`.
    pub fn drag_forces(&self, u_at: &[Vec3]) -> Result<Vec<Vec3>> {
        if u_at.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: u_at.len(),
            });
        }
        Ok(self.particles.iter().zip(u_at).map(|(p, u)| u - p.w).collect())
    }

    /// Characteristic velocities: `dx = v̂(w)`, `dw = L + (u − w)`, where `u`
    /// holds the (possibly mollified) fluid velocity at the particles.
    pub fn rhs(&self, k: &CommKernel, u_at: &[Vec3]) -> Result<EnsembleDeriv> {
        self.rhs_with(k, u_at, ForceMethod::Auto)
    }

    pub fn rhs_with(&self, k: &CommKernel, u_at: &[Vec3], method: ForceMethod) -> Result<EnsembleDeriv> {
        let v = self.velocities()?;
        let align = self.alignment_from_velocities(k, &v, method);
        let drag = self.drag_forces(u_at)?;
        let dw = align.iter().zip(&drag).map(|(a, b)| a + b).collect();
        Ok(EnsembleDeriv { dx: v, dw })
    }

    /// `x + h dx` (wrapped), `w + h dw`; masses are carried over untouched.
    pub fn advanced(&self, k: &EnsembleDeriv, h: f64) -> Ensemble {
        let particles = self
            .particles
            .iter()
            .zip(k.dx.iter().zip(&k.dw))
            .map(|(p, (dx, dw))| Particle {
                x: wrap_point(&(p.x + dx * h)),
                w: p.w + dw * h,
                mass: p.mass,
            })
            .collect();
        Ensemble {
            particles,
            d: self.d,
            c: self.c,
        }
    }

    /// Classical RK4 update from the four stage derivatives.
    pub fn rk4_combine(&self, ks: [&EnsembleDeriv; 4], dt: f64) -> Ensemble {
        let s = dt / 6.0;
        let particles = self
            .particles
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let dx = ks[0].dx[i] + (ks[1].dx[i] + ks[2].dx[i]) * 2.0 + ks[3].dx[i];
                let dw = ks[0].dw[i] + (ks[1].dw[i] + ks[2].dw[i]) * 2.0 + ks[3].dw[i];
                Particle {
                    x: wrap_point(&(p.x + dx * s)),
                    w: p.w + dw * s,
                    mass: p.mass,
                }
            })
            .collect();
        Ensemble {
            particles,
            d: self.d,
            c: self.c,
        }
    }

    /// Writes the checkpoint CSV: a `# d=.., c=..` line, a header, then one
    /// row `x1..xd,w1..wd,mass` per particle.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# d={}, c={}", self.d, self.c.get())?;
        let xs: Vec<String> = (1..=self.d).map(|a| format!("x{a}")).collect();
        let ws: Vec<String> = (1..=self.d).map(|a| format!("w{a}")).collect();
        writeln!(w, "{},{},mass", xs.join(","), ws.join(","))?;
        for p in &self.particles {
            let mut row: Vec<String> = Vec::with_capacity(2 * self.d + 1);
            row.extend((0..self.d).map(|a| p.x[a].to_string()));
            row.extend((0..self.d).map(|a| p.w[a].to_string()));
            row.push(p.mass.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Ensemble> {
        let mut lines = r.lines();
        let meta = lines.next().ok_or_else(|| Error::Parse("empty ensemble file".into()))??;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing '# d=.., c=..' line".into()))?;
        let mut d = None;
        let mut c = None;
        for part in meta.split(',') {
            let (key, value) = part
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field '{part}'")))?;
            match key.trim() {
                "d" => d = value.trim().parse::<usize>().ok(),
                "c" => c = value.trim().parse::<f64>().ok(),
                other => return Err(Error::Parse(format!("unknown header field '{other}'"))),
            }
        }
        let d = d.ok_or_else(|| Error::Parse("header lacks d".into()))?;
        let c = LightSpeed::new(c.ok_or_else(|| Error::Parse("header lacks c".into()))?)?;
        let _columns = lines.next().ok_or_else(|| Error::Parse("missing column header".into()))??;
        let mut particles = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            if vals.len() != 2 * d + 1 {
                return Err(Error::Parse(format!(
                    "row {}: expected {} columns, found {}",
                    row + 1,
                    2 * d + 1,
                    vals.len()
                )));
            }
            let mut x = Vec3::zeros();
            let mut w = Vec3::zeros();
            for a in 0..d {
                x[a] = vals[a];
                w[a] = vals[d + a];
            }
            particles.push(Particle {
                x,
                w,
                mass: vals[2 * d],
            });
        }
        Ensemble::new(particles, d, c)
    }
}

/// One RK4 step of an ensemble whose derivative is supplied by `rhs`, which
/// receives each stage state and its time offset within the step.
pub fn step_rk4<F>(e: &Ensemble, dt: f64, mut rhs: F) -> Result<Ensemble>
where
    F: FnMut(&Ensemble, f64) -> Result<EnsembleDeriv>,
{
    if !(dt.is_finite() && (0.0..=MAX_DT).contains(&dt)) {
        return Err(Error::TimeStep(dt));
    }
    if dt == 0.0 {
        return Ok(e.clone());
    }
    let k1 = rhs(e, 0.0)?;
    let k2 = rhs(&e.advanced(&k1, 0.5 * dt), 0.5 * dt)?;
    let k3 = rhs(&e.advanced(&k2, 0.5 * dt), 0.5 * dt)?;
    let k4 = rhs(&e.advanced(&k3, dt), dt)?;
    Ok(e.rk4_combine([&k1, &k2, &k3, &k4], dt))
}

/// Discretization of the initial particle density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialEnsemble {
    /// Uniform positions, Gaussian velocities around `drift` with standard
    /// deviation `sigma`, truncated to `|w| ≤ w_max` by rejection.
    Gaussian {
        drift: [f64; 3],
        sigma: f64,
        w_max: f64,
    },
    /// Uniform positions; particles alternate between `+w0` and `−w0`.
    TwoBeam { w0: [f64; 3] },
    /// Particles read from an ensemble checkpoint.
    File { path: PathBuf },
}

fn vec_in_dim(v: [f64; 3], d: usize) -> Result<Vec3> {
    if d == 2 && v[2] != 0.0 {
        return Err(Error::InvalidEnsemble("third velocity component set in two dimensions".into()));
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

/// Deterministic sample of `n` equal-mass particles.
pub fn sample_initial(spec: &InitialEnsemble, n: usize, seed: u64, d: usize, c: LightSpeed) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::InvalidEnsemble("particle count must be at least 1".into()));
    }
    if let InitialEnsemble::File { path } = spec {
        let file = std::fs::File::open(path)?;
        let e = Ensemble::read_csv(std::io::BufReader::new(file))?;
        if e.len() != n || e.d() != d || e.c() != c {
            return Err(Error::InvalidEnsemble(format!(
                "{} holds {} particles in d={} with c={}, configuration expects {} in d={} with c={}",
                path.display(),
                e.len(),
                e.d(),
                e.c().get(),
                n,
                d,
                c.get()
            )));
        }
        return Ok(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass = 1.0 / n as f64;
    let position = |rng: &mut ChaCha8Rng| {
        let z = if d == 3 { rng.gen::<f64>() } else { 0.0 };
        Vec3::new(rng.gen::<f64>(), rng.gen::<f64>(), z)
    };
    let mut particles = Vec::with_capacity(n);
    match spec {
        InitialEnsemble::Gaussian { drift, sigma, w_max } => {
            let drift = vec_in_dim(*drift, d)?;
            if !(*sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidEnsemble(format!("sigma must be nonnegative, got {sigma}")));
            }
            if !(*w_max > drift.norm()) {
                return Err(Error::InvalidEnsemble("w_max must exceed |drift|".into()));
            }
            let normal = Normal::new(0.0, *sigma).map_err(|e| Error::InvalidEnsemble(e.to_string()))?;
            for _ in 0..n {
                let x = position(&mut rng);
                let w = loop {
                    let z = if d == 3 { normal.sample(&mut rng) } else { 0.0 };
                    let w = drift + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), z);
                    if w.norm() <= *w_max {
                        break w;
                    }
                };
                particles.push(Particle { x, w, mass });
            }
        }
        InitialEnsemble::TwoBeam { w0 } => {
            let w0 = vec_in_dim(*w0, d)?;
            for i in 0..n {
                let x = position(&mut rng);
                let w = if i % 2 == 0 { w0 } else { -w0 };
                particles.push(Particle { x, w, mass });
            }
        }
        InitialEnsemble::File { .. } => unreachable!(),
    }
    Ensemble::new(particles, d, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relkin::w_of_v;
    use approx::assert_relative_eq;

    fn c(x: f64) -> LightSpeed {
        LightSpeed::new(x).unwrap()
    }

    fn random_ensemble(n: usize, seed: u64) -> Ensemble {
        let spec = InitialEnsemble::Gaussian {
            drift: [0.2, -0.1, 0.3],
            sigma: 0.8,
            w_max: 4.0,
        };
        sample_initial(&spec, n, seed, 3, c(1.5)).unwrap()
    }

    #[test]
    fn aligned_ensemble_feels_no_alignment() {
        let spec = InitialEnsemble::TwoBeam { w0: [0.4, 0.1, 0.0] };
        let mut e = sample_initial(&spec, 10, 1, 3, c(2.0)).unwrap();
        for p in &mut e.particles {
            p.w = Vec3::new(0.4, 0.1, 0.0);
        }
        let k = CommKernel::Algebraic { amplitude: 1.0, beta: 1.0 };
        for f in e.alignment_forces(&k).unwrap() {
            assert_eq!(f, Vec3::zeros());
        }
    }

    #[test]
    fn two_body_constant_kernel() {
        let cc = c(2.0);
        let v1 = Vec3::new(0.5, 0.0, 0.0);
        let v2 = Vec3::new(-0.2, 0.3, 0.0);
        let e = Ensemble::new(
            vec![
                Particle { x: Vec3::new(0.1, 0.2, 0.3), w: w_of_v(&v1, cc).unwrap(), mass: 0.5 },
                Particle { x: Vec3::new(0.8, 0.6, 0.1), w: w_of_v(&v2, cc).unwrap(), mass: 0.5 },
            ],
            3,
            cc,
        )
        .unwrap();
        let k = CommKernel::Constant { amplitude: 1.0 };
        for method in [ForceMethod::Auto, ForceMethod::Direct] {
            let f = e.alignment_forces_with(&k, method).unwrap();
            assert!((f[0] - (v2 - v1) * 0.5).norm() < 1e-12);
        }
    }

    #[test]
    fn alignment_is_antisymmetric_and_dissipative() {
        let e = random_ensemble(200, 4);
        let kernels = [
            CommKernel::Constant { amplitude: 1.0 },
            CommKernel::Algebraic { amplitude: 1.0, beta: 2.0 },
        ];
        for k in &kernels {
            let f = e.alignment_forces(k).unwrap();
            let total = e.particles.iter().zip(&f).fold(Vec3::zeros(), |a, (p, l)| a + l * p.mass);
            assert!(total.norm() < 1e-14, "{total}");
            let work: f64 = e.particles.iter().zip(&f).map(|(p, l)| p.mass * p.w.dot(l)).sum();
            assert!(work <= 0.0);
        }
    }

    #[test]
    fn direct_and_fast_paths_agree() {
        let e = random_ensemble(300, 5);
        let k = CommKernel::Constant { amplitude: 0.7 };
        let a = e.alignment_forces_with(&k, ForceMethod::Auto).unwrap();
        let b = e.alignment_forces_with(&k, ForceMethod::Direct).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
        let t = CommKernel::Tabulated {
            r: vec![0.0, 0.1, 0.2, 0.25],
            phi: vec![1.0, 0.6, 0.2, 0.0],
        };
        let a = e.alignment_forces_with(&t, ForceMethod::CellList).unwrap();
        let b = e.alignment_forces_with(&t, ForceMethod::Direct).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn drag_examples() {
        let e = Ensemble::new(
            vec![Particle { x: Vec3::zeros(), w: Vec3::new(0.25, 0.0, 0.0), mass: 1.0 }],
            3,
            c(1.0),
        )
        .unwrap();
        assert_eq!(e.drag_forces(&[Vec3::new(1.0, 0.0, 0.0)]).unwrap()[0], Vec3::new(0.75, 0.0, 0.0));
        assert_eq!(e.drag_forces(&[Vec3::zeros()]).unwrap()[0], Vec3::new(-0.25, 0.0, 0.0));
        assert_eq!(e.drag_forces(&[Vec3::new(0.25, 0.0, 0.0)]).unwrap()[0], Vec3::zeros());
        assert!(e.drag_forces(&[]).is_err());
    }

    #[test]
    fn single_particle_rhs_is_pure_relaxation() {
        let cc = c(1.0);
        let w = Vec3::new(0.3, -0.7, 0.2);
        let e = Ensemble::new(vec![Particle { x: Vec3::new(0.5, 0.5, 0.5), w, mass: 1.0 }], 3, cc).unwrap();
        let k = CommKernel::Constant { amplitude: 3.0 };
        let r = e.rhs(&k, &[Vec3::zeros()]).unwrap();
        assert_eq!(r.dw[0], -w);
        assert!((r.dx[0] - v_of_w(&w, cc).unwrap()).norm() == 0.0);
    }

    #[test]
    fn mirrored_pair_has_opposite_accelerations() {
        let cc = c(2.0);
        let w = Vec3::new(0.6, 0.2, -0.1);
        let e = Ensemble::new(
            vec![
                Particle { x: Vec3::new(0.3, 0.4, 0.5), w, mass: 0.5 },
                Particle { x: Vec3::new(0.7, 0.6, 0.5), w: -w, mass: 0.5 },
            ],
            3,
            cc,
        )
        .unwrap();
        let k = CommKernel::Algebraic { amplitude: 1.0, beta: 2.0 };
        let r = e.rhs(&k, &[Vec3::zeros(), Vec3::zeros()]).unwrap();
        assert!((r.dw[0] + r.dw[1]).norm() < 1e-15);
    }

    #[test]
    fn rhs_momentum_balance() {
        let e = random_ensemble(64, 7);
        let u: Vec<Vec3> = (0..64).map(|i| Vec3::new((i as f64).sin(), 0.1, -0.2)).collect();
        let k = CommKernel::Algebraic { amplitude: 1.0, beta: 1.0 };
        let r = e.rhs(&k, &u).unwrap();
        let lhs = e.particles.iter().zip(&r.dw).fold(Vec3::zeros(), |a, (p, dw)| a + dw * p.mass);
        let rhs = e.particles.iter().zip(&u).fold(Vec3::zeros(), |a, (p, u)| a + (u - p.w) * p.mass);
        assert!((lhs - rhs).norm() < 1e-14);
        for dx in &r.dx {
            assert!(dx.norm() < 1.5);
        }
    }

    #[test]
    fn zero_step_is_identity_and_range_is_checked() {
        let e = random_ensemble(8, 1);
        let k = CommKernel::Constant { amplitude: 1.0 };
        let u = vec![Vec3::zeros(); 8];
        let same = step_rk4(&e, 0.0, |s, _| s.rhs(&k, &u)).unwrap();
        assert_eq!(same, e);
        assert!(matches!(step_rk4(&e, 0.6, |s, _| s.rhs(&k, &u)), Err(Error::TimeStep(_))));
        assert!(step_rk4(&e, -0.1, |s, _| s.rhs(&k, &u)).is_err());
    }

    #[test]
    fn relaxation_step_error_is_fifth_order() {
        let w0 = Vec3::new(1.0, 0.0, 0.0);
        let e = Ensemble::new(vec![Particle { x: Vec3::zeros(), w: w0, mass: 1.0 }], 3, c(2.0)).unwrap();
        let k = CommKernel::Constant { amplitude: 1.0 };
        for dt in [0.1, 0.05] {
            let next = step_rk4(&e, dt, |s, _| s.rhs(&k, &[Vec3::zeros()])).unwrap();
            let err = next.particles[0].w.x - (-dt as f64).exp();
            // The truncated series omits the −dt⁵/120 term of exp(−dt).
            assert_relative_eq!(err, dt.powi(5) / 120.0, max_relative = dt);
        }
    }

    fn two_body(dt: f64, t_end: f64) -> Ensemble {
        let cc = c(1.0);
        let mut e = Ensemble::new(
            vec![
                Particle { x: Vec3::new(0.1, 0.1, 0.0), w: Vec3::new(0.9, 0.3, 0.0), mass: 0.5 },
                Particle { x: Vec3::new(0.6, 0.4, 0.0), w: Vec3::new(-0.5, 0.8, 0.0), mass: 0.5 },
            ],
            2,
            cc,
        )
        .unwrap();
        let k = CommKernel::Algebraic { amplitude: 2.0, beta: 1.0 };
        let u = [Vec3::new(0.1, 0.0, 0.0); 2];
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            e = step_rk4(&e, dt, |s, _| s.rhs(&k, &u)).unwrap();
        }
        e
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let reference = two_body(1e-5, 0.5);
        let err = |dt: f64| {
            let e = two_body(dt, 0.5);
            e.particles
                .iter()
                .zip(&reference.particles)
                .map(|(a, b)| {
                    let dx = Vec3::new(min_image(a.x.x - b.x.x), min_image(a.x.y - b.x.y), 0.0);
                    dx.norm() + (a.w - b.w).norm()
                })
                .sum::<f64>()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((13.0..=19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn sampling_examples() {
        let spec = InitialEnsemble::Gaussian {
            drift: [0.5, 0.0, 0.0],
            sigma: 0.3,
            w_max: 2.0,
        };
        let one = sample_initial(&spec, 1, 3, 3, c(2.0)).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.particles[0].mass, 1.0);
        let a = sample_initial(&spec, 100, 3, 3, c(2.0)).unwrap();
        let b = sample_initial(&spec, 100, 3, 3, c(2.0)).unwrap();
        assert_eq!(a, b);
        assert!(a.support_radius() <= 2.0);
        let beams = sample_initial(&InitialEnsemble::TwoBeam { w0: [1.0, 0.0, 0.0] }, 10, 3, 2, c(2.0)).unwrap();
        let plus = beams.particles.iter().filter(|p| p.w == Vec3::new(1.0, 0.0, 0.0)).count();
        let minus = beams.particles.iter().filter(|p| p.w == Vec3::new(-1.0, 0.0, 0.0)).count();
        assert_eq!((plus, minus), (5, 5));
        assert!(beams.momentum().norm() < 1e-15);
        assert!(sample_initial(&spec, 0, 3, 3, c(2.0)).is_err());
    }

    #[test]
    fn support_radius_examples() {
        let cc = c(10.0);
        assert_eq!(
            Ensemble::new(vec![Particle { x: Vec3::zeros(), w: Vec3::zeros(), mass: 1.0 }], 3, cc)
                .unwrap()
                .support_radius(),
            0.0
        );
        let e = Ensemble::new(vec![Particle { x: Vec3::zeros(), w: Vec3::new(3.0, 4.0, 0.0), mass: 1.0 }], 3, cc)
            .unwrap();
        assert_eq!(e.support_radius(), 5.0);
    }

    #[test]
    fn invalid_ensembles_are_rejected() {
        let cc = c(1.0);
        let p = Particle { x: Vec3::new(1.0, 0.0, 0.0), w: Vec3::zeros(), mass: 1.0 };
        assert!(Ensemble::new(vec![p], 3, cc).is_err());
        let p = Particle { x: Vec3::zeros(), w: Vec3::zeros(), mass: 0.4 };
        assert!(Ensemble::new(vec![p], 3, cc).is_err());
        let p = Particle { x: Vec3::new(0.0, 0.0, 0.5), w: Vec3::zeros(), mass: 1.0 };
        assert!(Ensemble::new(vec![p], 2, cc).is_err());
        assert!(Ensemble::vacuum(3, cc).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let e = random_ensemble(20, 11);
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# d=3, c=1.5\nx1,x2,x3,w1,w2,w3,mass\n"));
        let back = Ensemble::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, e);
        assert!(Ensemble::read_csv(&b"x1,x2\n"[..]).is_err());
    }

    #[test]
    fn wrap_stays_in_unit_interval() {
        for x in [-1e-18, -0.3, 1.0, 2.5, 0.999_999_999_999_999_9] {
            let y = wrap_unit(x);
            assert!((0.0..1.0).contains(&y), "{x} -> {y}");
        }
    }
}
