//! Orthonormal Zernike polynomials on the unit disk, Noll single-index order.
//!
//! `Z_j(rho, phi) = N_n^m R_n^|m|(rho) T(m phi)` with `T = cos` for `m > 0`,
//! `sin` for `m < 0` and `1` for `m = 0`. The normalization makes each mode's
//! RMS over the disk equal to one, so coefficients are RMS contributions in the
//! units of the decomposed map. Noll indices start at 1 (piston); within a
//! radial order `|m|` ascends and even indices carry the cosine term.
//!
//! The full mapping up to order 12 ships as `data/zernike_noll_order12.csv`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pupil::{PupilGrid, PupilMap};

pub const MAX_RADIAL_ORDER: u32 = 12;

pub fn mode_count(max_order: u32) -> usize {
    let n = max_order as usize;
    (n + 1) * (n + 2) / 2
}

/// `(n, m)` for a Noll index `j >= 1`.
pub fn noll_to_nm(j: usize) -> (u32, i32) {
    assert!(j >= 1, "Noll indices start at 1");
    let mut n = 0usize;
    while (n + 1) * (n + 2) / 2 < j {
        n += 1;
    }
    let first = n * (n + 1) / 2 + 1;
    let offset = j - first;
    // |m| values of this order in ascending order; each nonzero |m| takes two slots.
    let mut slot = 0usize;
    let mut m_abs = n % 2;
    loop {
        let width = if m_abs == 0 { 1 } else { 2 };
        if offset < slot + width {
            break;
        }
        slot += width;
        m_abs += 2;
    }
    let m = if m_abs == 0 {
        0
    } else {
        // the slot pair is (first + slot, first + slot + 1); the even index gets cos
        let idx = if offset == slot { first + slot } else { first + slot + 1 };
        if idx % 2 == 0 {
            m_abs as i32
        } else {
            -(m_abs as i32)
        }
    };
    (n as u32, m)
}

pub fn nm_to_noll(n: u32, m: i32) -> usize {
    assert!(m.unsigned_abs() <= n && (n - m.unsigned_abs()) % 2 == 0, "invalid (n, m)");
    let first = n as usize * (n as usize + 1) / 2 + 1;
    (first..first + n as usize + 1)
        .find(|&j| noll_to_nm(j) == (n, m))
        .expect("every valid (n, m) has a Noll index")
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Radial polynomial `R_n^m(rho)` for `m >= 0`.
pub fn radial(n: u32, m: u32, rho: f64) -> f64 {
    debug_assert!(m <= n && (n - m) % 2 == 0);
    let half_sum = (n + m) / 2;
    let half_diff = (n - m) / 2;
    (0..=half_diff)
        .map(|k| {
            let c = factorial(n - k) / (factorial(k) * factorial(half_sum - k) * factorial(half_diff - k));
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * c * rho.powi((n - 2 * k) as i32)
        })
        .sum()
}

pub fn normalization(n: u32, m: i32) -> f64 {
    let base = f64::from(n + 1);
    if m == 0 {
        base.sqrt()
    } else {
        (2.0 * base).sqrt()
    }
}

pub fn zernike(n: u32, m: i32, rho: f64, phi: f64) -> f64 {
    let r = normalization(n, m) * radial(n, m.unsigned_abs(), rho);
    match m {
        0 => r,
        m if m > 0 => r * (f64::from(m) * phi).cos(),
        m => r * (f64::from(-m) * phi).sin(),
    }
}

pub fn zernike_noll(j: usize, rho: f64, phi: f64) -> f64 {
    let (n, m) = noll_to_nm(j);
    zernike(n, m, rho, phi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZernikeSpectrum {
    pub max_order: u32,
    /// `coefficients[j - 1]` is the coefficient of Noll mode `j`.
    pub coefficients: Vec<f64>,
    /// RMS of the map minus its reconstruction, on the analysis grid.
    pub reconstruction_rms: f64,
}

impl ZernikeSpectrum {
    pub fn get(&self, n: u32, m: i32) -> f64 {
        self.coefficients[nm_to_noll(n, m) - 1]
    }

    pub fn noll(&self, j: usize) -> f64 {
        self.coefficients[j - 1]
    }

    /// `(noll, n, m, coefficient)` rows in Noll order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, u32, i32, f64)> + '_ {
        self.coefficients.iter().enumerate().map(|(i, &c)| {
            let (n, m) = noll_to_nm(i + 1);
            (i + 1, n, m, c)
        })
    }

    /// Sum of squared coefficients without piston.
    pub fn variance(&self) -> f64 {
        self.coefficients.iter().skip(1).map(|c| c * c).sum()
    }

    pub fn reconstruct(&self, grid: &PupilGrid) -> PupilMap {
        PupilMap::from_fn(grid.clone(), |rho, phi| {
            self.rows().map(|(_, n, m, c)| c * zernike(n, m, rho, phi)).sum()
        })
    }
}

fn check_order(max_order: u32) -> Result<()> {
    if max_order > MAX_RADIAL_ORDER {
        return Err(Error::Config(format!(
            "maximum radial order {max_order} exceeds {MAX_RADIAL_ORDER}"
        )));
    }
    Ok(())
}

/// Projects a two-dimensional pupil map onto the Zernike modes up to `max_order`.
pub fn decompose(map: &PupilMap, max_order: u32) -> Result<ZernikeSpectrum> {
    check_order(max_order)?;
    if !map.is_finite() {
        return Err(Error::Numerical("pupil map contains non-finite samples".into()));
    }
    let grid = &map.grid;
    let spokes = grid.spokes;
    let orders = max_order as usize + 1;

    // Azimuthal Fourier sums per ring: cos_sums[i][m], sin_sums[i][m].
    let mut cos_sums = vec![vec![0.0; orders]; grid.rings()];
    let mut sin_sums = vec![vec![0.0; orders]; grid.rings()];
    for i in 0..grid.rings() {
        let row = &map.values[i * spokes..(i + 1) * spokes];
        for m in 0..orders {
            let (mut c, mut s) = (0.0, 0.0);
            for (k, v) in row.iter().enumerate() {
                let (sn, cs) = (m as f64 * grid.phi(k)).sin_cos();
                c += v * cs;
                s += v * sn;
            }
            cos_sums[i][m] = c / spokes as f64;
            sin_sums[i][m] = s / spokes as f64;
        }
    }

    let count = mode_count(max_order);
    let mut coefficients = Vec::with_capacity(count);
    for j in 1..=count {
        let (n, m) = noll_to_nm(j);
        let ma = m.unsigned_abs() as usize;
        let norm = normalization(n, m);
        let mut c = 0.0;
        for i in 0..grid.rings() {
            let az = if m >= 0 { cos_sums[i][ma] } else { sin_sums[i][ma] };
            c += grid.weight[i] * norm * radial(n, ma as u32, grid.rho[i]) * az;
        }
        coefficients.push(c);
    }

    let mut spectrum = ZernikeSpectrum {
        max_order,
        coefficients,
        reconstruction_rms: 0.0,
    };
    let recon = spectrum.reconstruct(grid);
    let residual: Vec<f64> = map
        .values
        .iter()
        .zip(&recon.values)
        .map(|(a, b)| a - b)
        .collect();
    let residual = PupilMap {
        grid: grid.clone(),
        values: residual,
    };
    spectrum.reconstruction_rms = mean_square(&residual).sqrt();
    if !spectrum.coefficients.iter().all(|c| c.is_finite()) {
        return Err(Error::Numerical("non-finite Zernike coefficient".into()));
    }
    Ok(spectrum)
}

fn mean_square(map: &PupilMap) -> f64 {
    let sq = PupilMap {
        grid: map.grid.clone(),
        values: map.values.iter().map(|v| v * v).collect(),
    };
    sq.mean()
}

/// Decomposition of a rotationally symmetric profile; only `m = 0` modes are nonzero.
pub fn decompose_radial(grid: &PupilGrid, profile: &[f64], max_order: u32) -> Result<ZernikeSpectrum> {
    check_order(max_order)?;
    if profile.len() != grid.rings() {
        return Err(Error::Config("profile length does not match the pupil grid".into()));
    }
    if !profile.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("radial profile contains non-finite samples".into()));
    }
    let count = mode_count(max_order);
    let mut coefficients = vec![0.0; count];
    let mut recon = vec![0.0; grid.rings()];
    for n in (0..=max_order).step_by(2) {
        let j = nm_to_noll(n, 0);
        let basis: Vec<f64> = grid.rho.iter().map(|&r| zernike(n, 0, r, 0.0)).collect();
        let c = grid.dot(profile, &basis);
        coefficients[j - 1] = c;
        for (r, b) in recon.iter_mut().zip(&basis) {
            *r += c * b;
        }
    }
    let diff: Vec<f64> = profile.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(ZernikeSpectrum {
        max_order,
        coefficients,
        reconstruction_rms: grid.mean(&diff).sqrt(),
    })
}

/// The Noll mapping as comma-separated values.
pub fn index_table(max_order: u32) -> String {
    let mut out = String::from("noll,n,m\n");
    for j in 1..=mode_count(max_order) {
        let (n, m) = noll_to_nm(j);
        out.push_str(&format!("{j},{n},{m}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noll_ordering_matches_standard_table() {
        let expected = [
            (1, 0, 0),
            (2, 1, 1),
            (3, 1, -1),
            (4, 2, 0),
            (5, 2, -2),
            (6, 2, 2),
            (7, 3, -1),
            (8, 3, 1),
            (9, 3, -3),
            (10, 3, 3),
            (11, 4, 0),
            (12, 4, 2),
            (13, 4, -2),
            (14, 4, 4),
            (15, 4, -4),
            (22, 6, 0),
            (37, 8, 0),
        ];
        for (j, n, m) in expected {
            assert_eq!(noll_to_nm(j), (n, m), "j={j}");
            assert_eq!(nm_to_noll(n, m), j);
        }
    }

    #[test]
    fn shipped_index_table_is_current() {
        let shipped = include_str!("../data/zernike_noll_order12.csv");
        assert_eq!(shipped, index_table(MAX_RADIAL_ORDER));
    }

    #[test]
    fn radial_polynomials() {
        let r = 0.7f64;
        assert!((radial(2, 0, r) - (2.0 * r * r - 1.0)).abs() < 1e-15);
        assert!((radial(4, 0, r) - (6.0 * r.powi(4) - 6.0 * r * r + 1.0)).abs() < 1e-15);
        assert!((radial(3, 1, r) - (3.0 * r.powi(3) - 2.0 * r)).abs() < 1e-15);
        for n in 0..=12u32 {
            for m in (n % 2..=n).step_by(2) {
                assert!((radial(n, m, 1.0) - 1.0).abs() < 1e-10, "R_{n}^{m}(1)");
            }
        }
    }

    #[test]
    fn modes_are_orthonormal_on_the_grid() {
        let grid = PupilGrid::new(16, 32);
        for a in 1..=mode_count(6) {
            let map = PupilMap::from_fn(grid.clone(), |r, p| zernike_noll(a, r, p));
            for b in 1..=mode_count(6) {
                let ip = map.project(|r, p| zernike_noll(b, r, p));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12, "<Z{a}, Z{b}> = {ip}");
            }
        }
    }

    #[test]
    fn defocus_map_uses_piston_and_defocus_only() {
        let grid = PupilGrid::new(32, 64);
        let map = PupilMap::from_fn(grid, |r, _| r * r);
        let spec = decompose(&map, 8).unwrap();
        assert!((spec.get(0, 0) - 0.5).abs() < 1e-13);
        assert!((spec.get(2, 0) - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-13);
        for (j, _, _, c) in spec.rows() {
            if j != 1 && j != 4 {
                assert!(c.abs() < 1e-13, "Z{j} = {c}");
            }
        }
        assert!(spec.reconstruction_rms < 1e-13);
    }

    #[test]
    fn quartic_map_uses_piston_defocus_and_spherical() {
        let grid = PupilGrid::new(32, 64);
        let profile: Vec<f64> = grid.rho.iter().map(|r| r.powi(4)).collect();
        let spec = decompose_radial(&grid, &profile, 8).unwrap();
        // rho^4 = 1/3 + (1/(2 sqrt 3)) Z4 + (1/(6 sqrt 5)) Z11
        assert!((spec.get(0, 0) - 1.0 / 3.0).abs() < 1e-13);
        assert!((spec.get(2, 0) - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-13);
        assert!((spec.get(4, 0) - 1.0 / (6.0 * 5f64.sqrt())).abs() < 1e-13);
        assert!(spec.get(6, 0).abs() < 1e-13);
        let map = PupilMap::from_radial(grid, &profile);
        let full = decompose(&map, 8).unwrap();
        for (a, b) in spec.coefficients.iter().zip(&full.coefficients) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn order_limit_and_non_finite_input() {
        let grid = PupilGrid::new(8, 16);
        let map = PupilMap::from_fn(grid.clone(), |_, _| 0.0);
        assert!(matches!(decompose(&map, 13), Err(Error::Config(_))));
        let bad = PupilMap::from_fn(grid, |r, _| if r > 0.5 { f64::NAN } else { 0.0 });
        assert!(matches!(decompose(&bad, 4), Err(Error::Numerical(_))));
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> PupilGrid {
        PupilGrid::new(64, 128)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parseval_holds_for_mode_mixtures(coeffs in proptest::collection::vec(-1.0f64..1.0, 91)) {
            let grid = grid();
            let map = PupilMap::from_fn(grid.clone(), |r, p| {
                coeffs.iter().enumerate().map(|(i, c)| c * zernike_noll(i + 1, r, p)).sum()
            });
            let spec = decompose(&map, MAX_RADIAL_ORDER).unwrap();
            let recon = spec.reconstruct(&grid);
            let mean = recon.mean();
            let var = PupilMap {
                grid: grid.clone(),
                values: recon.values.iter().map(|v| (v - mean) * (v - mean)).collect(),
            }
            .mean();
            prop_assert!((spec.variance() - var).abs() <= 1e-10 * var);
            for (a, b) in spec.coefficients.iter().zip(&coeffs) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn smooth_map_round_trips(a in -0.6f64..0.6, b in -0.6f64..0.6, c in -1.0f64..1.0) {
            let grid = grid();
            let map = PupilMap::from_fn(grid.clone(), |r, p| {
                let (x, y) = (r * p.cos(), r * p.sin());
                c * (a * x + b * y).exp() + 0.2 * (x * y - 0.3 * x * x * y)
            });
            let spec = decompose(&map, MAX_RADIAL_ORDER).unwrap();
            prop_assert!(spec.reconstruction_rms < 1e-6);
        }
    }
}
