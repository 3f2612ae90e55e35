//! Vectorial focusing through the layer stack in the Debye approximation.
//!
//! Each pupil ring carries a plane-wave cone with direction sine `s = NA * rho`
//! (in air). Inside the stack the radial (extraordinary) and azimuthal
//! (ordinary) components pick up their own phase. The objective is taken to be
//! corrected for the polarization-averaged wavefront of the stack, so the two
//! modes reach focus with phases `+pi dW` and `-pi dW`, where `dW = W_e - W_o`
//! in waves. The focal region is an isotropic medium with the ordinary index of
//! the last layer, and axial positions are measured inside it.
//!
//! Because every phase is rotationally symmetric the azimuthal pupil integral
//! is done in closed form, leaving three radial sums per point:
//!
//! ```text
//! I0 = sum w (cf E_e + E_o) J0(k s r)
//! I1 = sum w  st E_e        J1(k s r)
//! I2 = sum w (cf E_e - E_o) J2(k s r)
//! ```
//!
//! with `st`, `cf` the sine and cosine of the ray angle in the focal medium and
//! `E_*` the mode phase factors including defocus `exp(i k z kz)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::birefringence::{LayerStack, Mode, Polarization};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::pupil::gauss_legendre;
use crate::search::{bisect_last_true, golden_section};
use crate::wavefront::{wavefront_map, FocusingConfig};

/// Half-width of the Airy core, `0.5145 lambda / NA`, in units of `lambda / NA`.
pub const AIRY_FWHM_FACTOR: f64 = 0.514_497_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Apodization {
    /// Amplitude `1 / sqrt(cos theta)` per unit pupil area (sine condition).
    #[default]
    Aplanatic,
    /// Constant amplitude per unit pupil area.
    Uniform,
}

/// Which eigenmodes contribute to the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelection {
    Both,
    Only(Mode),
}

#[derive(Debug, Clone, Default)]
pub struct PsfOptions {
    pub apodization: Apodization,
    /// Extra wavefront shared by both modes, one value per pupil ring, in waves.
    pub common_aberration: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct Ring {
    /// Lateral wavenumber `k0 s`, rad/nm.
    k_lateral: f64,
    /// Axial wavenumber in the focal medium, rad/nm.
    k_axial: f64,
    sin_focal: f64,
    cos_focal: f64,
    weight: f64,
    extraordinary: Complex64,
    ordinary: Complex64,
}

/// Radial sums at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Integrals {
    pub i0: Complex64,
    pub i1: Complex64,
    pub i2: Complex64,
}

impl Integrals {
    /// Field components for the given input polarization at azimuth `psi`.
    pub fn field(&self, polarization: Polarization, psi: f64) -> [Complex64; 3] {
        let (s2, c2) = (2.0 * psi).sin_cos();
        let (s1, c1) = psi.sin_cos();
        let i = Complex64::i();
        let x = [self.i0 - self.i2 * c2, -self.i2 * s2, 2.0 * i * self.i1 * c1];
        let y = [-self.i2 * s2, self.i0 + self.i2 * c2, 2.0 * i * self.i1 * s1];
        match polarization {
            Polarization::LinearX => x,
            Polarization::LinearY => y,
            Polarization::Circular => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                [
                    (x[0] + i * y[0]) * h,
                    (x[1] + i * y[1]) * h,
                    (x[2] + i * y[2]) * h,
                ]
            }
        }
    }

    pub fn intensity(&self, polarization: Polarization, psi: f64) -> f64 {
        self.field(polarization, psi).iter().map(|c| c.norm_sqr()).sum()
    }

    /// Intensity averaged over azimuth, the same for every input polarization.
    pub fn azimuthal_average(&self) -> f64 {
        self.i0.norm_sqr() + self.i2.norm_sqr() + 2.0 * self.i1.norm_sqr()
    }
}

/// Ring coefficients with the defocus phase of one plane folded in.
struct Plane {
    k_lateral: Vec<f64>,
    c0: Vec<Complex64>,
    c1: Vec<Complex64>,
    c2: Vec<Complex64>,
}

impl Plane {
    fn integrals(&self, r_nm: f64) -> Integrals {
        let mut out = Integrals::default();
        if r_nm == 0.0 {
            out.i0 = self.c0.iter().sum();
            return out;
        }
        for (i, &k) in self.k_lateral.iter().enumerate() {
            let (j0, j1, j2) = bessel012(k * r_nm);
            out.i0 += self.c0[i] * j0;
            out.i1 += self.c1[i] * j1;
            out.i2 += self.c2[i] * j2;
        }
        out
    }
}

fn bessel012(x: f64) -> (f64, f64, f64) {
    let j0 = puruspe::Jn(0, x);
    let j1 = puruspe::Jn(1, x);
    let j2 = if x > 2.0 {
        2.0 * j1 / x - j0
    } else {
        puruspe::Jn(2, x)
    };
    (j0, j1, j2)
}

/// Precomputed focusing geometry for one stack and configuration.
#[derive(Debug, Clone)]
pub struct FocalEngine {
    cfg: FocusingConfig,
    focal_index: f64,
    rings: Vec<Ring>,
    /// Squared on-axis field of the unaberrated system at `z = 0`.
    normalization: f64,
}

impl FocalEngine {
    pub fn new(stack: &LayerStack, cfg: &FocusingConfig) -> Result<Self> {
        Self::with_options(stack, cfg, &PsfOptions::default())
    }

    pub fn with_options(stack: &LayerStack, cfg: &FocusingConfig, options: &PsfOptions) -> Result<Self> {
        let map = wavefront_map(stack, cfg)?;
        let delta = map.difference();
        let rings = map.grid.rings();
        if let Some(c) = &options.common_aberration {
            if c.len() != rings {
                return Err(Error::Config(format!(
                    "common aberration has {} samples for {rings} pupil rings",
                    c.len()
                )));
            }
        }
        let focal_index = stack.focal_index();
        let k0 = 2.0 * PI / cfg.wavelength_nm;
        let na = cfg.numerical_aperture;
        let mut out = Vec::with_capacity(rings);
        let mut reference = 0.0;
        for i in 0..rings {
            let s = na * map.grid.rho[i];
            let cos_air = (1.0 - s * s).sqrt();
            let sin_focal = s / focal_index;
            let cos_focal = (1.0 - sin_focal * sin_focal).sqrt();
            let weight = match options.apodization {
                Apodization::Aplanatic => map.grid.weight[i] / cos_air.sqrt(),
                Apodization::Uniform => map.grid.weight[i],
            };
            let common = options.common_aberration.as_ref().map_or(0.0, |c| c[i]);
            let half = PI * delta[i];
            let base = 2.0 * PI * common;
            out.push(Ring {
                k_lateral: k0 * s,
                k_axial: k0 * (focal_index * focal_index - s * s).sqrt(),
                sin_focal,
                cos_focal,
                weight,
                extraordinary: Complex64::from_polar(1.0, base + half),
                ordinary: Complex64::from_polar(1.0, base - half),
            });
            reference += weight * (cos_focal + 1.0);
        }
        Ok(Self {
            cfg: *cfg,
            focal_index,
            rings: out,
            normalization: reference * reference,
        })
    }

    /// The same geometry with every aberration removed.
    pub fn unaberrated(&self) -> Self {
        let mut clean = self.clone();
        for r in &mut clean.rings {
            r.extraordinary = Complex64::new(1.0, 0.0);
            r.ordinary = Complex64::new(1.0, 0.0);
        }
        clean
    }

    pub fn config(&self) -> &FocusingConfig {
        &self.cfg
    }

    pub fn focal_index(&self) -> f64 {
        self.focal_index
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    fn plane(&self, z_nm: f64, modes: ModeSelection) -> Plane {
        let n = self.rings.len();
        let mut plane = Plane {
            k_lateral: Vec::with_capacity(n),
            c0: Vec::with_capacity(n),
            c1: Vec::with_capacity(n),
            c2: Vec::with_capacity(n),
        };
        let (use_e, use_o) = match modes {
            ModeSelection::Both => (1.0, 1.0),
            ModeSelection::Only(Mode::Extraordinary) => (1.0, 0.0),
            ModeSelection::Only(Mode::Ordinary) => (0.0, 1.0),
        };
        for r in &self.rings {
            let w = r.weight * Complex64::from_polar(1.0, r.k_axial * z_nm);
            let e = w * r.extraordinary * use_e;
            let o = w * r.ordinary * use_o;
            plane.k_lateral.push(r.k_lateral);
            plane.c0.push(e * r.cos_focal + o);
            plane.c1.push(e * r.sin_focal);
            plane.c2.push(e * r.cos_focal - o);
        }
        plane
    }

    /// Unnormalized radial sums at lateral radius `r_nm` and defocus `z_nm`.
    pub fn integrals(&self, r_nm: f64, z_nm: f64, modes: ModeSelection) -> Integrals {
        self.plane(z_nm, modes).integrals(r_nm)
    }

    /// Normalized intensity at a point of the focal region.
    pub fn intensity(&self, x_nm: f64, y_nm: f64, z_nm: f64) -> f64 {
        let r = x_nm.hypot(y_nm);
        let psi = y_nm.atan2(x_nm);
        self.integrals(r, z_nm, ModeSelection::Both)
            .intensity(self.cfg.polarization, psi)
            / self.normalization
    }

    /// Normalized on-axis intensity.
    pub fn on_axis(&self, z_nm: f64, modes: ModeSelection) -> f64 {
        let mut sum = Complex64::default();
        for r in &self.rings {
            let w = r.weight * Complex64::from_polar(1.0, r.k_axial * z_nm);
            let e = r.extraordinary * r.cos_focal;
            let o = r.ordinary;
            sum += w * match modes {
                ModeSelection::Both => e + o,
                ModeSelection::Only(Mode::Extraordinary) => e,
                ModeSelection::Only(Mode::Ordinary) => o,
            };
        }
        sum.norm_sqr() / self.normalization
    }

    /// Azimuthally averaged, normalized intensity on `radii_nm` in the plane `z_nm`.
    pub fn radial_profile(&self, radii_nm: &[f64], z_nm: f64) -> Vec<f64> {
        let plane = self.plane(z_nm, ModeSelection::Both);
        let norm = self.normalization;
        map_indexed(radii_nm.len(), self.cfg.execution, |i| {
            plane.integrals(radii_nm[i]).azimuthal_average() / norm
        })
    }

    /// Half-intensity axial width of the unaberrated on-axis profile, in nm.
    pub fn depth_of_focus_nm(&self) -> Result<f64> {
        let clean = self.unaberrated();
        let na = self.cfg.numerical_aperture;
        let step = 0.25 * self.cfg.wavelength_nm * self.focal_index / (na * na);
        let mut hi = step;
        while clean.on_axis(hi, ModeSelection::Both) >= 0.5 {
            hi += step;
            if hi > 1e3 * step {
                return Err(Error::Numerical("depth of focus search diverged".into()));
            }
        }
        let half = bisect_last_true(
            |z| Ok(clean.on_axis(z, ModeSelection::Both) >= 0.5),
            0.0,
            hi,
            1e-6 * step,
        )?;
        Ok(2.0 * half)
    }

    /// Defocus tolerance equivalent to `lambda / 200` of edge OPD.
    fn focus_tolerance_nm(&self) -> f64 {
        let na = self.cfg.numerical_aperture;
        self.cfg.wavelength_nm / 200.0 * 2.0 * self.focal_index / (na * na)
    }

    /// Location and value of the highest on-axis intensity within three depths
    /// of focus of the nominal focus.
    pub fn best_focus(&self, modes: ModeSelection) -> Result<(f64, f64)> {
        let dof = self.depth_of_focus_nm()?;
        let step = dof / 8.0;
        let n = 48;
        let zs: Vec<f64> = (0..=n).map(|k| (k as f64 - (n / 2) as f64) * step).collect();
        let values: Vec<f64> = zs.iter().map(|&z| self.on_axis(z, modes)).collect();
        let best = argmax(&values);
        let m = golden_section(
            |z| Ok(-self.on_axis(z, modes)),
            zs[best] - step,
            zs[best] + step,
            self.focus_tolerance_nm(),
        )?;
        let (z, peak) = if -m.value >= values[best] {
            (m.x, -m.value)
        } else {
            (zs[best], values[best])
        };
        Ok((z, peak))
    }

    /// Peak on-axis intensity over defocus relative to the unaberrated peak.
    pub fn strehl(&self) -> Result<f64> {
        Ok(self.best_focus(ModeSelection::Both)?.1)
    }

    /// Full width at half maximum of the azimuthally averaged lateral profile
    /// at defocus `z_nm`, taken at the outermost half-maximum crossing.
    pub fn fwhm_nm(&self, z_nm: f64) -> Result<f64> {
        let scale = self.cfg.wavelength_nm / self.cfg.numerical_aperture;
        let dr = 0.01 * scale;
        let count = 3001;
        let radii: Vec<f64> = (0..count).map(|k| k as f64 * dr).collect();
        let profile = self.radial_profile(&radii, z_nm);
        let peak = profile[argmax(&profile)];
        if !(peak > 0.0) {
            return Err(Error::Numerical("lateral profile has no positive peak".into()));
        }
        let half = 0.5 * peak;
        let last = profile
            .iter()
            .rposition(|&v| v >= half)
            .expect("peak sample is above half maximum");
        if last + 1 >= count {
            return Err(Error::Numerical(format!(
                "spot is wider than the {} nm scan radius",
                radii[count - 1]
            )));
        }
        let plane = self.plane(z_nm, ModeSelection::Both);
        let norm = self.normalization;
        let r = bisect_last_true(
            |r| Ok(plane.integrals(r).azimuthal_average() / norm >= half),
            radii[last],
            radii[last + 1],
            1e-6 * scale,
        )?;
        Ok(2.0 * r)
    }

    /// Power through the plane `z_nm` inside radius `r_max_nm`, normalized units.
    pub fn plane_energy(&self, z_nm: f64, r_max_nm: f64) -> f64 {
        let panel = 0.25 * self.cfg.wavelength_nm / self.cfg.numerical_aperture;
        let panels = (r_max_nm / panel).ceil().max(1.0) as usize;
        let width = r_max_nm / panels as f64;
        let (x, w) = gauss_legendre(8);
        let mut radii = Vec::with_capacity(panels * 8);
        let mut weights = Vec::with_capacity(panels * 8);
        for p in 0..panels {
            let a = p as f64 * width;
            for (xi, wi) in x.iter().zip(&w) {
                let r = a + 0.5 * width * (xi + 1.0);
                radii.push(r);
                weights.push(0.5 * width * wi * r);
            }
        }
        let profile = self.radial_profile(&radii, z_nm);
        2.0 * PI * profile.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>()
    }

    /// Intensity on a rectangular grid in the lateral or meridional plane.
    pub fn grid(&self, region: &Region) -> Result<FieldGrid> {
        region.validate(&self.cfg)?;
        let (nu, nv) = region.samples();
        let (du, dv) = region.spacing_nm();
        let (u0, v0) = region.origin_nm();
        let pol = self.cfg.polarization;
        let norm = self.normalization;
        let values = match *region {
            Region::Lateral { z_um, .. } => {
                let plane = self.plane(z_um * 1e3, ModeSelection::Both);
                map_indexed(nu * nv, self.cfg.execution, |idx| {
                    let x = u0 + (idx % nu) as f64 * du;
                    let y = v0 + (idx / nu) as f64 * dv;
                    plane
                        .integrals(x.hypot(y))
                        .intensity(pol, y.atan2(x))
                        / norm
                })
            }
            Region::Axial { .. } => {
                let rows = map_indexed(nv, self.cfg.execution, |row| {
                    let plane = self.plane(v0 + row as f64 * dv, ModeSelection::Both);
                    (0..nu)
                        .map(|col| {
                            let x = u0 + col as f64 * du;
                            let psi = if x < 0.0 { PI } else { 0.0 };
                            plane.integrals(x.abs()).intensity(pol, psi) / norm
                        })
                        .collect::<Vec<f64>>()
                });
                rows.into_iter().flatten().collect()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite intensity sample".into()));
        }
        Ok(FieldGrid {
            region: *region,
            width: nu,
            height: nv,
            spacing_u_nm: du,
            spacing_v_nm: dv,
            origin_u_nm: u0,
            origin_v_nm: v0,
            values,
        })
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Sampling region for [`FocalEngine::grid`], centred on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    /// `samples x samples` points in the plane at defocus `z_um`.
    Lateral {
        half_width_um: f64,
        samples: usize,
        z_um: f64,
    },
    /// `x` across `samples_x` points, `z` from `z_min_um` to `z_max_um`.
    Axial {
        half_width_um: f64,
        samples_x: usize,
        z_min_um: f64,
        z_max_um: f64,
        samples_z: usize,
    },
}

impl Region {
    pub fn lateral(half_width_um: f64, samples: usize, z_um: f64) -> Self {
        Region::Lateral {
            half_width_um,
            samples,
            z_um,
        }
    }

    fn samples(&self) -> (usize, usize) {
        match *self {
            Region::Lateral { samples, .. } => (samples, samples),
            Region::Axial {
                samples_x,
                samples_z,
                ..
            } => (samples_x, samples_z),
        }
    }

    fn spacing_nm(&self) -> (f64, f64) {
        let step = |half: f64, n: usize| 2.0 * half * 1e3 / (n - 1) as f64;
        match *self {
            Region::Lateral {
                half_width_um,
                samples,
                ..
            } => {
                let d = step(half_width_um, samples);
                (d, d)
            }
            Region::Axial {
                half_width_um,
                samples_x,
                z_min_um,
                z_max_um,
                samples_z,
            } => (
                step(half_width_um, samples_x),
                (z_max_um - z_min_um) * 1e3 / (samples_z - 1) as f64,
            ),
        }
    }

    fn origin_nm(&self) -> (f64, f64) {
        match *self {
            Region::Lateral { half_width_um, .. } => (-half_width_um * 1e3, -half_width_um * 1e3),
            Region::Axial {
                half_width_um,
                z_min_um,
                ..
            } => (-half_width_um * 1e3, z_min_um * 1e3),
        }
    }

    /// Lateral spacing must not exceed `lambda / (8 NA)`.
    pub fn validate(&self, cfg: &FocusingConfig) -> Result<()> {
        let (nu, nv) = self.samples();
        if nu < 2 || nv < 2 {
            return Err(Error::Config("a region needs at least two samples per axis".into()));
        }
        let (du, dv) = self.spacing_nm();
        if !(du > 0.0 && dv > 0.0 && du.is_finite() && dv.is_finite()) {
            return Err(Error::Config("region extent must be positive".into()));
        }
        let limit = cfg.wavelength_nm / (8.0 * cfg.numerical_aperture);
        if du > limit * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "lateral spacing {du} nm exceeds the sampling limit {limit} nm"
            )));
        }
        Ok(())
    }
}

/// Normalized intensity samples, row-major with `u` fastest.
/// For lateral grids `(u, v) = (x, y)`; for axial grids `(u, v) = (x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub region: Region,
    pub width: usize,
    pub height: usize,
    pub spacing_u_nm: f64,
    pub spacing_v_nm: f64,
    pub origin_u_nm: f64,
    pub origin_v_nm: f64,
    /// Intensity relative to the unaberrated focal peak.
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn coordinates_nm(&self, u: usize, v: usize) -> (f64, f64) {
        (
            self.origin_u_nm + u as f64 * self.spacing_u_nm,
            self.origin_v_nm + v as f64 * self.spacing_v_nm,
        )
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Intensity grid through `stack`, with `defocus_um` added to a lateral
/// region's plane position.
pub fn vector_psf(
    stack: &LayerStack,
    cfg: &FocusingConfig,
    region: &Region,
    defocus_um: f64,
) -> Result<FieldGrid> {
    let engine = FocalEngine::new(stack, cfg)?;
    let shifted = match *region {
        Region::Lateral {
            half_width_um,
            samples,
            z_um,
        } => Region::lateral(half_width_um, samples, z_um + defocus_um),
        Region::Axial {
            half_width_um,
            samples_x,
            z_min_um,
            z_max_um,
            samples_z,
        } => Region::Axial {
            half_width_um,
            samples_x,
            z_min_um: z_min_um + defocus_um,
            z_max_um: z_max_um + defocus_um,
            samples_z,
        },
    };
    engine.grid(&shifted)
}

pub fn strehl(stack: &LayerStack, cfg: &FocusingConfig) -> Result<f64> {
    FocalEngine::new(stack, cfg)?.strehl()
}

/// Spot diameter at the wavefront best focus relative to the unaberrated spot.
///
/// The wavefront best focus is `z = 0`, where the polarization-averaged
/// wavefront is fully corrected.
pub fn resolution_factor(stack: &LayerStack, cfg: &FocusingConfig) -> Result<f64> {
    FocalEngine::new(stack, cfg)?.resolution_factor()
}

/// On-axis intensity versus defocus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxialProfile {
    pub z_um: Vec<f64>,
    pub total: Vec<f64>,
    pub ordinary: Vec<f64>,
    pub extraordinary: Vec<f64>,
    /// Local maxima of the total profile reaching half the global maximum.
    pub peaks_um: Vec<f64>,
    /// Refined foci of the ordinary and extraordinary modes.
    pub ordinary_focus_um: f64,
    pub extraordinary_focus_um: f64,
    /// Unaberrated half-intensity axial width.
    pub depth_of_focus_um: f64,
}

impl AxialProfile {
    /// Distance between the two modal foci.
    pub fn modal_separation_um(&self) -> f64 {
        (self.extraordinary_focus_um - self.ordinary_focus_um).abs()
    }

    /// Distance between the outermost significant peaks of the total profile.
    pub fn peak_separation_um(&self) -> f64 {
        match (self.peaks_um.first(), self.peaks_um.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

pub fn axial_profile(
    stack: &LayerStack,
    cfg: &FocusingConfig,
    z_min_um: f64,
    z_max_um: f64,
    samples: usize,
) -> Result<AxialProfile> {
    FocalEngine::new(stack, cfg)?.axial_profile(z_min_um, z_max_um, samples)
}

impl FocalEngine {
    /// On-axis intensity of both modes together and of each alone over
    /// `samples` evenly spaced defocus values.
    pub fn axial_profile(&self, z_min_um: f64, z_max_um: f64, samples: usize) -> Result<AxialProfile> {
        if !(z_min_um < z_max_um) || samples < 3 {
            return Err(Error::Config(format!(
                "axial range [{z_min_um}, {z_max_um}] um with {samples} samples is invalid"
            )));
        }
        let step = (z_max_um - z_min_um) / (samples - 1) as f64;
        let z_um: Vec<f64> = (0..samples).map(|k| z_min_um + k as f64 * step).collect();
        let eval = |modes| -> Vec<f64> {
            map_indexed(samples, self.cfg.execution, |k| self.on_axis(z_um[k] * 1e3, modes))
        };
        let total = eval(ModeSelection::Both);
        let ordinary = eval(ModeSelection::Only(Mode::Ordinary));
        let extraordinary = eval(ModeSelection::Only(Mode::Extraordinary));

        let global = total[argmax(&total)];
        let peaks_um = (0..samples)
            .filter(|&k| {
                let left = k == 0 || total[k] > total[k - 1];
                let right = k + 1 == samples || total[k] >= total[k + 1];
                left && right && total[k] >= 0.5 * global
            })
            .map(|k| z_um[k])
            .collect();

        let tol = self.focus_tolerance_nm() * 1e-3;
        let refine = |profile: &[f64], mode| -> Result<f64> {
            let k = argmax(profile);
            let lo = z_um[k.saturating_sub(1)];
            let hi = z_um[(k + 1).min(samples - 1)];
            let m = golden_section(
                |z| Ok(-self.on_axis(z * 1e3, ModeSelection::Only(mode))),
                lo,
                hi,
                tol,
            )?;
            Ok(if -m.value >= profile[k] { m.x } else { z_um[k] })
        };
        let ordinary_focus_um = refine(&ordinary, Mode::Ordinary)?;
        let extraordinary_focus_um = refine(&extraordinary, Mode::Extraordinary)?;
        let depth_of_focus_um = self.depth_of_focus_nm()? * 1e-3;
        Ok(AxialProfile {
            z_um,
            total,
            ordinary,
            extraordinary,
            peaks_um,
            ordinary_focus_um,
            extraordinary_focus_um,
            depth_of_focus_um,
        })
    }

    /// Spot diameter at `z = 0` relative to the unaberrated spot.
    pub fn resolution_factor(&self) -> Result<f64> {
        Ok(self.fwhm_nm(0.0)? / self.unaberrated().fwhm_nm(0.0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birefringence::pupil_polarization_split;
    use crate::parallel::Execution;
    use crate::materials::{fused_silica, sapphire};
    use crate::pupil::PupilGrid;

    fn cfg(na: f64) -> FocusingConfig {
        FocusingConfig::new(na, 442.0).with_rings(128)
    }

    /// Field by explicit summation over pupil points, scaled like the engine.
    fn direct_intensity(
        stack: &LayerStack,
        c: &FocusingConfig,
        x: f64,
        y: f64,
        z: f64,
    ) -> f64 {
        let map = wavefront_map(stack, c).unwrap();
        let delta = map.difference();
        let grid = PupilGrid::new(c.pupil_rings, c.pupil_spokes);
        let n_f = stack.focal_index();
        let k0 = 2.0 * PI / c.wavelength_nm;
        let field = |dw: &[f64], x: f64, y: f64, z: f64| {
            let mut e = [Complex64::default(); 3];
            for i in 0..grid.rings() {
                let s = c.numerical_aperture * grid.rho[i];
                let st = s / n_f;
                let cf = (1.0 - st * st).sqrt();
                let w = grid.weight[i] / (1.0 - s * s).sqrt().sqrt() / grid.spokes as f64;
                let kz = k0 * (n_f * n_f - s * s).sqrt();
                for k in 0..grid.spokes {
                    let phi = grid.phi(k);
                    let (sp, cp) = phi.sin_cos();
                    let a = pupil_polarization_split(phi, c.polarization);
                    let ph = k0 * s * (x * cp + y * sp) + kz * z;
                    let ae = a.extraordinary * Complex64::from_polar(w, ph + PI * dw[i]);
                    let ao = a.ordinary * Complex64::from_polar(w, ph - PI * dw[i]);
                    e[0] += ae * cf * cp - ao * sp;
                    e[1] += ae * cf * sp + ao * cp;
                    e[2] += ae * st;
                }
            }
            e.iter().map(|c| c.norm_sqr()).sum::<f64>()
        };
        let zero = vec![0.0; grid.rings()];
        field(&delta, x, y, z) / field(&zero, 0.0, 0.0, 0.0)
    }

    #[test]
    fn bessel_form_matches_direct_pupil_sum() {
        let stack = LayerStack::single(sapphire(), 0.3).unwrap();
        for pol in [Polarization::LinearX, Polarization::LinearY, Polarization::Circular] {
            let c = FocusingConfig::new(0.6, 442.0)
                .with_rings(64)
                .with_polarization(pol);
            let c = FocusingConfig {
                pupil_spokes: 128,
                ..c
            };
            let engine = FocalEngine::new(&stack, &c).unwrap();
            for &(x, y, z) in &[(0.0, 0.0, 0.0), (250.0, 0.0, 300.0), (130.0, -410.0, -900.0), (-600.0, 220.0, 50.0)] {
                let a = engine.intensity(x, y, z);
                let b = direct_intensity(&stack, &c, x, y, z);
                assert!((a - b).abs() < 1e-6 * (1.0 + b), "{pol} ({x},{y},{z}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn unaberrated_peak_is_unity_on_axis() {
        let engine = FocalEngine::new(&LayerStack::empty(), &cfg(0.4)).unwrap();
        assert!((engine.intensity(0.0, 0.0, 0.0) - 1.0).abs() < 1e-12);
        let (z, peak) = engine.best_focus(ModeSelection::Both).unwrap();
        assert!(z.abs() < 1.0);
        assert!((peak - 1.0).abs() < 1e-9);
        assert!(engine.on_axis(500.0, ModeSelection::Both) < 1.0);
    }

    #[test]
    fn airy_width_at_moderate_na() {
        let engine = FocalEngine::new(&LayerStack::empty(), &cfg(0.4)).unwrap();
        let fwhm = engine.fwhm_nm(0.0).unwrap();
        let airy = AIRY_FWHM_FACTOR * 442.0 / 0.4;
        assert!((fwhm / airy - 1.0).abs() < 0.03, "{fwhm} vs {airy}");
    }

    #[test]
    fn circular_input_is_rotationally_symmetric() {
        let stack = LayerStack::single(sapphire(), 0.5).unwrap();
        let engine = FocalEngine::new(&stack, &cfg(0.5)).unwrap();
        for z in [0.0, 1500.0] {
            let r = 300.0;
            let vals: Vec<f64> = (0..12)
                .map(|k| {
                    let a = k as f64 * PI / 6.0;
                    engine.intensity(r * a.cos(), r * a.sin(), z)
                })
                .collect();
            let max = vals.iter().cloned().fold(0.0, f64::max);
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((max - min) / max < 1e-12);
        }
    }

    #[test]
    fn isotropic_slab_changes_nothing_after_correction() {
        let stack = LayerStack::single(fused_silica(), 1.0).unwrap();
        let engine = FocalEngine::new(&stack, &cfg(0.45)).unwrap();
        assert!((engine.strehl().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn region_sampling_limit() {
        let c = cfg(0.5);
        assert!(Region::lateral(1.0, 101, 0.0).validate(&c).is_ok());
        assert!(Region::lateral(10.0, 21, 0.0).validate(&c).is_err());
        assert!(Region::lateral(1.0, 1, 0.0).validate(&c).is_err());
    }

    #[test]
    fn grid_matches_pointwise_and_paths_agree() {
        let stack = LayerStack::single(sapphire(), 0.4).unwrap();
        let c = cfg(0.4).with_polarization(Polarization::LinearX);
        let region = Region::lateral(0.4, 15, 0.2);
        let par = FocalEngine::new(&stack, &c.with_execution(Execution::Parallel))
            .unwrap()
            .grid(&region)
            .unwrap();
        let engine = FocalEngine::new(&stack, &c.with_execution(Execution::Sequential)).unwrap();
        let seq = engine.grid(&region).unwrap();
        assert_eq!(par, seq);
        let (x, y) = seq.coordinates_nm(3, 11);
        assert!((seq.at(3, 11) - engine.intensity(x, y, 200.0)).abs() < 1e-15);
        assert!(seq.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn axial_profile_of_empty_stack_has_single_centred_peak() {
        let p = axial_profile(&LayerStack::empty(), &cfg(0.4), -6.0, 6.0, 121).unwrap();
        assert_eq!(p.peaks_um.len(), 1);
        assert!(p.peaks_um[0].abs() < 1e-9);
        assert!(p.modal_separation_um() < 1e-3);
        for k in 0..p.total.len() {
            assert!((p.total[k] - p.total[p.total.len() - 1 - k]).abs() < 1e-9);
        }
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::birefringence::Layer;
    use crate::materials::{quartz, sapphire};
    use crate::parallel::Execution;
    use crate::zernike::zernike;
    use proptest::prelude::*;

    fn stack() -> impl Strategy<Value = LayerStack> {
        (0.05f64..1.2, 0.0f64..1.0).prop_map(|(hs, hq)| {
            let mut layers = Vec::new();
            if hq > 0.05 {
                layers.push(Layer::new(quartz(), hq).unwrap());
            }
            layers.push(Layer::new(sapphire(), hs).unwrap());
            LayerStack::new(layers).unwrap()
        })
    }

    fn cfg(na: f64) -> FocusingConfig {
        FocusingConfig::new(na, 442.0).with_rings(96)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn plane_energy_is_conserved(st in stack(), na in 0.2f64..0.6) {
            let engine = FocalEngine::new(&st, &cfg(na)).unwrap();
            let dof = engine.depth_of_focus_nm().unwrap();
            let r_max = 40.0 * 442.0 / na;
            let reference = engine.plane_energy(0.0, r_max);
            for z in [-2.0 * dof, -0.7 * dof, 1.3 * dof] {
                let e = engine.plane_energy(z, r_max);
                prop_assert!((e / reference - 1.0).abs() < 5e-3, "z={} {} vs {}", z, e, reference);
            }
        }

        #[test]
        fn circular_spot_is_round(st in stack(), na in 0.2f64..0.8, r in 50.0f64..1500.0, z in -3000.0f64..3000.0) {
            let engine = FocalEngine::new(&st, &cfg(na)).unwrap();
            let vals: Vec<f64> = (0..16)
                .map(|k| {
                    let a = k as f64 * PI / 8.0 + 0.1;
                    engine.intensity(r * a.cos(), r * a.sin(), z)
                })
                .collect();
            let max = vals.iter().cloned().fold(0.0, f64::max);
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!((max - min) <= 1e-3 * max);
        }

        #[test]
        fn grids_do_not_depend_on_threading(st in stack(), na in 0.2f64..0.8, x in prop_oneof![Just(Polarization::LinearX), Just(Polarization::Circular)]) {
            let c = cfg(na).with_polarization(x);
            let region = Region::lateral(0.3, 13, 0.4);
            let a = FocalEngine::new(&st, &c.with_execution(Execution::Sequential)).unwrap().grid(&region).unwrap();
            let b = FocalEngine::new(&st, &c.with_execution(Execution::Parallel)).unwrap().grid(&region).unwrap();
            prop_assert!(a.values.iter().zip(&b.values).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn vector_width_matches_airy_at_low_na() {
        let engine = FocalEngine::new(&LayerStack::empty(), &cfg(0.1)).unwrap();
        let airy = AIRY_FWHM_FACTOR * 442.0 / 0.1;
        assert!((engine.fwhm_nm(0.0).unwrap() / airy - 1.0).abs() < 0.01);
    }

    #[test]
    fn small_spherical_follows_marechal() {
        let c = cfg(0.3);
        let grid = c.grid();
        for sigma in [0.01, 0.02, 1.0 / 30.0] {
            let options = PsfOptions {
                apodization: Apodization::Uniform,
                common_aberration: Some(grid.rho.iter().map(|&r| sigma * zernike(4, 0, r, 0.0)).collect()),
            };
            let s = FocalEngine::with_options(&LayerStack::empty(), &c, &options)
                .unwrap()
                .strehl()
                .unwrap();
            let marechal = 1.0 - (2.0 * PI * sigma).powi(2);
            assert!((s / marechal - 1.0).abs() < 0.01, "sigma={sigma}: {s} vs {marechal}");
        }
    }
}
