//! Per-polarization wavefront maps of a layer stack over the unit pupil.
//!
//! The stack is taken to replace an equal thickness of air, and every map is
//! referenced to the on-axis ray, so for each mode
//!
//! ```text
//! W(rho) = sum_layers h * [(kz(s) - kz(0)) - (sqrt(1 - s^2) - 1)] / lambda,   s = NA * rho
//! ```
//!
//! in waves. Because the optic axis is normal to the layers both maps are
//! rotationally symmetric and are stored as radial profiles on the Gauss rings
//! of a [`PupilGrid`]. Two-dimensional maps are synthesized from them on demand.

use serde::{Deserialize, Serialize};

use crate::birefringence::{kz, LayerStack, Mode, Polarization, pupil_polarization_split};
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::pupil::{PupilGrid, PupilMap};
use crate::zernike;

pub const MIN_PUPIL_RINGS: usize = 64;
pub const MIN_PUPIL_SPOKES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusingConfig {
    pub numerical_aperture: f64,
    /// Vacuum wavelength.
    pub wavelength_nm: f64,
    pub polarization: Polarization,
    pub pupil_rings: usize,
    pub pupil_spokes: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl FocusingConfig {
    /// Circular polarization, 256 rings, 256 spokes.
    pub fn new(numerical_aperture: f64, wavelength_nm: f64) -> Self {
        Self {
            numerical_aperture,
            wavelength_nm,
            polarization: Polarization::Circular,
            pupil_rings: 256,
            pupil_spokes: 256,
            execution: Execution::default(),
        }
    }

    pub fn with_polarization(mut self, polarization: Polarization) -> Self {
        self.polarization = polarization;
        self
    }

    pub fn with_rings(mut self, rings: usize) -> Self {
        self.pupil_rings = rings;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let na = self.numerical_aperture;
        if !(na > 0.0 && na < 1.0) {
            return Err(Error::Config(format!("numerical aperture {na} must be in (0, 1)")));
        }
        let nm = self.wavelength_nm;
        if !(150.0..=2000.0).contains(&nm) {
            return Err(Error::Config(format!("wavelength {nm} nm must be in [150, 2000]")));
        }
        if self.pupil_rings < MIN_PUPIL_RINGS || self.pupil_spokes < MIN_PUPIL_SPOKES {
            return Err(Error::Config(format!(
                "pupil sampling {}x{} is below the minimum {MIN_PUPIL_RINGS}x{MIN_PUPIL_SPOKES}",
                self.pupil_rings, self.pupil_spokes
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> PupilGrid {
        PupilGrid::new(self.pupil_rings, self.pupil_spokes)
    }
}

/// Radial wavefront profiles of both modes, in waves at the configured wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefrontMap {
    pub grid: PupilGrid,
    pub numerical_aperture: f64,
    pub wavelength_nm: f64,
    pub ordinary: Vec<f64>,
    pub extraordinary: Vec<f64>,
}

impl WavefrontMap {
    pub fn mode(&self, mode: Mode) -> &[f64] {
        match mode {
            Mode::Ordinary => &self.ordinary,
            Mode::Extraordinary => &self.extraordinary,
        }
    }

    /// `W_e - W_o`.
    pub fn difference(&self) -> Vec<f64> {
        self.extraordinary
            .iter()
            .zip(&self.ordinary)
            .map(|(e, o)| e - o)
            .collect()
    }

    /// Polarization-averaged wavefront `(W_o + W_e) / 2`.
    pub fn mean(&self) -> Vec<f64> {
        self.extraordinary
            .iter()
            .zip(&self.ordinary)
            .map(|(e, o)| 0.5 * (e + o))
            .collect()
    }

    /// Two-dimensional map of the wavefront weighted by the power each pupil
    /// point couples into the two modes for the given input polarization.
    /// For linear-x input this is `cos^2(phi) W_e + sin^2(phi) W_o`: the
    /// defocus difference becomes astigmatism.
    pub fn synthesize(&self, polarization: Polarization) -> PupilMap {
        let spokes = self.grid.spokes;
        let mut values = Vec::with_capacity(self.grid.rings() * spokes);
        for (wo, we) in self.ordinary.iter().zip(&self.extraordinary) {
            for k in 0..spokes {
                let a = pupil_polarization_split(self.grid.phi(k), polarization);
                values.push(a.ordinary.norm_sqr() * wo + a.extraordinary.norm_sqr() * we);
            }
        }
        PupilMap {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ordinary.iter().chain(&self.extraordinary).all(|v| v.is_finite())
    }
}

/// Wavefront of one mode on the pupil rings of `cfg`, in waves.
pub fn stack_aberration(stack: &LayerStack, cfg: &FocusingConfig, mode: Mode) -> Result<Vec<f64>> {
    cfg.validate()?;
    let grid = cfg.grid();
    stack_profile(stack, cfg, &grid, mode)
}

fn stack_profile(
    stack: &LayerStack,
    cfg: &FocusingConfig,
    grid: &PupilGrid,
    mode: Mode,
) -> Result<Vec<f64>> {
    check_propagating(stack, cfg)?;
    let na = cfg.numerical_aperture;
    let nm_per_mm = 1e6;
    let values = map_indexed(grid.rings(), cfg.execution, |i| -> Result<f64> {
        let s = na * grid.rho[i];
        let air = (1.0 - s * s).sqrt() - 1.0;
        let mut opd_nm = 0.0;
        for layer in stack.layers() {
            let rel = kz(&layer.material, s, mode)? - kz(&layer.material, 0.0, mode)?;
            opd_nm += layer.thickness_mm * nm_per_mm * (rel - air);
        }
        Ok(opd_nm / cfg.wavelength_nm)
    });
    values.into_iter().collect()
}

fn check_propagating(stack: &LayerStack, cfg: &FocusingConfig) -> Result<()> {
    for (idx, layer) in stack.layers().iter().enumerate() {
        let m = &layer.material;
        let limit = m.n_o.min(m.n_e);
        if cfg.numerical_aperture >= limit {
            return Err(Error::Config(format!(
                "layer {} ('{}'): NA {} reaches the evanescent limit {limit}",
                idx + 1,
                m.name,
                cfg.numerical_aperture
            )));
        }
    }
    Ok(())
}

pub fn wavefront_map(stack: &LayerStack, cfg: &FocusingConfig) -> Result<WavefrontMap> {
    cfg.validate()?;
    let grid = cfg.grid();
    let ordinary = stack_profile(stack, cfg, &grid, Mode::Ordinary)?;
    let extraordinary = stack_profile(stack, cfg, &grid, Mode::Extraordinary)?;
    let map = WavefrontMap {
        grid,
        numerical_aperture: cfg.numerical_aperture,
        wavelength_nm: cfg.wavelength_nm,
        ordinary,
        extraordinary,
    };
    if !map.is_finite() {
        return Err(Error::Numerical("non-finite wavefront sample".into()));
    }
    Ok(map)
}

/// `W_e - W_o` in waves.
pub fn aberration_difference(stack: &LayerStack, cfg: &FocusingConfig) -> Result<Vec<f64>> {
    Ok(wavefront_map(stack, cfg)?.difference())
}

/// `W_e - W_o` at the pupil edge, evaluated directly at `s = NA`, in waves.
pub fn edge_difference(stack: &LayerStack, cfg: &FocusingConfig) -> Result<f64> {
    cfg.validate()?;
    check_propagating(stack, cfg)?;
    let s = cfg.numerical_aperture;
    let mut opd_mm = 0.0;
    for layer in stack.layers() {
        let m = &layer.material;
        let e = kz(m, s, Mode::Extraordinary)? - kz(m, 0.0, Mode::Extraordinary)?;
        let o = kz(m, s, Mode::Ordinary)? - kz(m, 0.0, Mode::Ordinary)?;
        opd_mm += layer.thickness_mm * (e - o);
    }
    Ok(opd_mm * 1e6 / cfg.wavelength_nm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Removal {
    pub piston: bool,
    pub defocus: bool,
}

impl Removal {
    pub const NONE: Removal = Removal {
        piston: false,
        defocus: false,
    };
    pub const PISTON: Removal = Removal {
        piston: true,
        defocus: false,
    };
    pub const PISTON_DEFOCUS: Removal = Removal {
        piston: true,
        defocus: true,
    };
}

fn defocus_basis(grid: &PupilGrid) -> Vec<f64> {
    grid.rho.iter().map(|&r| zernike::zernike(2, 0, r, 0.0)).collect()
}

/// Removes the requested modes from a radial profile by orthogonal projection.
pub fn remove_modes(grid: &PupilGrid, profile: &[f64], removal: Removal) -> Vec<f64> {
    let mut out = profile.to_vec();
    if removal.piston {
        let mean = grid.mean(&out);
        out.iter_mut().for_each(|v| *v -= mean);
    }
    if removal.defocus {
        let basis = defocus_basis(grid);
        let c = grid.dot(&out, &basis);
        out.iter_mut().zip(&basis).for_each(|(v, b)| *v -= c * b);
    }
    out
}

/// Area-weighted RMS of a radial profile after removing the listed modes.
pub fn rms_wavefront(grid: &PupilGrid, profile: &[f64], removal: Removal) -> f64 {
    let r = remove_modes(grid, profile, removal);
    grid.dot(&r, &r).max(0.0).sqrt()
}

/// Area-weighted RMS of a two-dimensional map after removing the listed modes.
pub fn rms_pupil_map(map: &PupilMap, removal: Removal) -> f64 {
    let mut values = map.values.clone();
    let grid = &map.grid;
    if removal.piston {
        let mean = map.mean();
        values.iter_mut().for_each(|v| *v -= mean);
    }
    if removal.defocus {
        let tmp = PupilMap {
            grid: grid.clone(),
            values: values.clone(),
        };
        let c = tmp.project(|r, _| zernike::zernike(2, 0, r, 0.0));
        let spokes = grid.spokes;
        for (i, &rho) in grid.rho.iter().enumerate() {
            let z = zernike::zernike(2, 0, rho, 0.0);
            values[i * spokes..(i + 1) * spokes]
                .iter_mut()
                .for_each(|v| *v -= c * z);
        }
    }
    let sq = PupilMap {
        grid: grid.clone(),
        values: values.iter().map(|v| v * v).collect(),
    };
    sq.mean().max(0.0).sqrt()
}

/// Polarization aberration left after the best common refocus, in waves RMS.
///
/// A refocus moves both eigenmodes by the same defocus, fitted here to the
/// polarization-averaged wavefront. The difference `W_e - W_o` is therefore
/// untouched by it: its own defocus term is the part that turns into
/// astigmatism for linear input and cannot be refocused away. Only its piston
/// (a uniform retardance) is removed.
pub fn best_focus_residual(stack: &LayerStack, cfg: &FocusingConfig) -> Result<f64> {
    let map = wavefront_map(stack, cfg)?;
    Ok(residual_of_map(&map))
}

pub(crate) fn residual_of_map(map: &WavefrontMap) -> f64 {
    let grid = &map.grid;
    let basis = defocus_basis(grid);
    let shared = grid.dot(&map.mean(), &basis);
    let refocus = |w: &[f64]| -> Vec<f64> {
        w.iter().zip(&basis).map(|(v, b)| v - shared * b).collect()
    };
    let wo = refocus(&map.ordinary);
    let we = refocus(&map.extraordinary);
    let diff: Vec<f64> = we.iter().zip(&wo).map(|(e, o)| e - o).collect();
    rms_wavefront(grid, &diff, Removal::PISTON)
}


#[cfg(test)]
mod properties {
    use super::*;
    use crate::birefringence::Layer;
    use crate::materials::{quartz, sapphire, sapphire_rounded, UniaxialMaterial};
    use proptest::prelude::*;

    fn material() -> impl Strategy<Value = UniaxialMaterial> {
        prop_oneof![
            Just(sapphire()),
            Just(quartz()),
            Just(sapphire_rounded()),
            (1.3f64..2.5).prop_map(|n| UniaxialMaterial::isotropic("glass", n).unwrap()),
            (1.3f64..2.5, -0.03f64..0.03).prop_map(|(n, d)| UniaxialMaterial::new("x", n, n + d).unwrap()),
        ]
    }

    fn stack() -> impl Strategy<Value = LayerStack> {
        proptest::collection::vec((material(), 0.05f64..2.0), 1..4).prop_map(|layers| {
            LayerStack::new(layers.into_iter().map(|(m, h)| Layer::new(m, h).unwrap()).collect()).unwrap()
        })
    }

    fn cfg(na: f64) -> FocusingConfig {
        FocusingConfig::new(na, 442.0).with_rings(64).with_execution(Execution::Sequential)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn difference_vanishes_only_for_isotropic_stacks(st in stack(), na in 0.05f64..0.9) {
            let diff = aberration_difference(&st, &cfg(na)).unwrap();
            let max = diff.iter().fold(0.0f64, |a, d| a.max(d.abs()));
            if st.is_isotropic() {
                prop_assert!(max <= 1e-12);
            } else {
                prop_assert!(max > 1e-9);
            }
        }

        #[test]
        fn difference_is_linear_in_thickness(m in material(), h in 0.01f64..5.0, na in 0.05f64..0.9) {
            let one = aberration_difference(&LayerStack::single(m.clone(), h).unwrap(), &cfg(na)).unwrap();
            let two = aberration_difference(&LayerStack::single(m, 2.0 * h).unwrap(), &cfg(na)).unwrap();
            for (a, b) in one.iter().zip(&two) {
                prop_assert_eq!((2.0 * a).to_bits(), b.to_bits());
            }
        }

        #[test]
        fn leading_order_defocus(
            m in prop_oneof![Just(sapphire()), Just(quartz()), Just(sapphire_rounded())],
            h in 0.05f64..3.0,
            na in 0.01f64..0.2,
        ) {
            let c = cfg(na);
            let diff = aberration_difference(&LayerStack::single(m.clone(), h).unwrap(), &c).unwrap();
            let grid = c.grid();
            let defocus = grid.dot(&diff, &defocus_basis(&grid));
            let n = 0.5 * (m.n_o + m.n_e);
            // rho^2 carries 1 / (2 sqrt 3) of defocus
            let predicted = h * 1e6 * m.delta_n() / (n * n) * na * na / (2.0 * 3f64.sqrt()) / c.wavelength_nm;
            prop_assert!((defocus / predicted - 1.0).abs() < 0.01, "{} vs {}", defocus, predicted);
        }

        #[test]
        fn rms_converges_with_ring_count(st in stack(), na in 0.1f64..0.9) {
            let coarse = cfg(na).with_rings(64);
            let fine = cfg(na).with_rings(128);
            let a = best_focus_residual(&st, &coarse).unwrap();
            let b = best_focus_residual(&st, &fine).unwrap();
            prop_assert!((a - b).abs() < 1e-4);
            let ma = wavefront_map(&st, &coarse).unwrap();
            let mb = wavefront_map(&st, &fine).unwrap();
            let ra = rms_wavefront(&ma.grid, &ma.ordinary, Removal::PISTON_DEFOCUS);
            let rb = rms_wavefront(&mb.grid, &mb.ordinary, Removal::PISTON_DEFOCUS);
            prop_assert!((ra - rb).abs() < 1e-4);
        }
    }
}
