//! Quadrature on the unit pupil disk.
//!
//! Rings are Gauss-Legendre nodes in the equal-area variable `u = rho^2`, so a
//! ring weight is the fraction of pupil area it represents and the weights sum
//! to one. Any polynomial in `u` of degree below `2 * rings` integrates exactly,
//! which covers products of Zernike radial polynomials up to high order. The
//! azimuth is sampled uniformly, which is exact for trigonometric polynomials
//! of order below `spokes`.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "at least one node");
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on the three-term recurrence.
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PupilGrid {
    /// Normalized pupil radius of each ring, ascending.
    pub rho: Vec<f64>,
    /// Area fraction of each ring; sums to one.
    pub weight: Vec<f64>,
    pub spokes: usize,
}

impl PupilGrid {
    pub fn new(rings: usize, spokes: usize) -> Self {
        let (x, w) = gauss_legendre(rings);
        let rho = x.iter().map(|&t| (0.5 * (t + 1.0)).sqrt()).collect();
        let weight = w.iter().map(|&t| 0.5 * t).collect();
        Self {
            rho,
            weight,
            spokes,
        }
    }

    pub fn rings(&self) -> usize {
        self.rho.len()
    }

    pub fn phi(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.spokes as f64
    }

    /// Area-weighted mean of a radial profile.
    pub fn mean(&self, values: &[f64]) -> f64 {
        self.weight.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Area-weighted inner product of two radial profiles.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weight
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }
}

/// A full two-dimensional map sampled on a [`PupilGrid`], ring-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PupilMap {
    pub grid: PupilGrid,
    pub values: Vec<f64>,
}

impl PupilMap {
    pub fn from_fn(grid: PupilGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.rings() * grid.spokes);
        for &rho in &grid.rho {
            for k in 0..grid.spokes {
                values.push(f(rho, grid.phi(k)));
            }
        }
        Self { grid, values }
    }

    /// Rotationally symmetric map built from a radial profile.
    pub fn from_radial(grid: PupilGrid, profile: &[f64]) -> Self {
        assert_eq!(profile.len(), grid.rings());
        let spokes = grid.spokes;
        let values = profile
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(spokes))
            .collect();
        Self { grid, values }
    }

    pub fn value(&self, ring: usize, spoke: usize) -> f64 {
        self.values[ring * self.grid.spokes + spoke]
    }

    /// Area-weighted inner product with a function of `(rho, phi)`.
    pub fn project(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let spokes = self.grid.spokes;
        let mut total = 0.0;
        for (i, (&rho, &w)) in self.grid.rho.iter().zip(&self.grid.weight).enumerate() {
            let row = &self.values[i * spokes..(i + 1) * spokes];
            let ring: f64 = row
                .iter()
                .enumerate()
                .map(|(k, v)| v * f(rho, self.grid.phi(k)))
                .sum();
            total += w * ring / spokes as f64;
        }
        total
    }

    pub fn mean(&self) -> f64 {
        self.project(|_, _| 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
