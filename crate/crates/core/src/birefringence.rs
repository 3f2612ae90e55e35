//! Plane-wave optics of uniaxial layers with the optic axis along the surface
//! normal.
//!
//! A plane wave leaving the objective with direction sine `s` (in air) keeps
//! that tangential component through every flat interface. Inside a layer the
//! ordinary and extraordinary waves then travel with normalized axial
//! wavenumbers
//!
//! ```text
//! kz_o(s) = sqrt(n_o^2 - s^2)
//! kz_e(s) = n_o * sqrt(1 - s^2 / n_e^2)
//! ```
//!
//! and a layer of thickness `h` adds an optical path `h * kz(s)`. With the
//! axis normal to the surface the radial (p) pupil component drives the
//! extraordinary wave and the azimuthal (s) component the ordinary wave.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{Catalog, UniaxialMaterial};

pub const MAX_LAYER_THICKNESS_MM: f64 = 10.0;
pub const MAX_STACK_THICKNESS_MM: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ordinary,
    Extraordinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarization {
    LinearX,
    LinearY,
    #[default]
    Circular,
}

impl std::str::FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-x" | "x" => Ok(Polarization::LinearX),
            "linear-y" | "y" => Ok(Polarization::LinearY),
            "circular" => Ok(Polarization::Circular),
            other => Err(Error::Config(format!(
                "unknown polarization '{other}' (expected linear-x, linear-y or circular)"
            ))),
        }
    }
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Polarization::LinearX => "linear-x",
            Polarization::LinearY => "linear-y",
            Polarization::Circular => "circular",
        })
    }
}

fn evanescent(m: &UniaxialMaterial, s: f64, limit: f64) -> Error {
    Error::Evanescent {
        material: m.name.clone(),
        sine: s,
        limit,
    }
}

pub fn kz_ordinary(m: &UniaxialMaterial, s: f64) -> Result<f64> {
    let limit = m.n_o.min(m.n_e);
    if !(0.0..limit).contains(&s) {
        return Err(evanescent(m, s, limit));
    }
    Ok((m.n_o * m.n_o - s * s).sqrt())
}

pub fn kz_extraordinary(m: &UniaxialMaterial, s: f64) -> Result<f64> {
    if !(0.0..m.n_e).contains(&s) {
        return Err(evanescent(m, s, m.n_e));
    }
    if m.n_e == m.n_o {
        return Ok((m.n_o * m.n_o - s * s).sqrt());
    }
    let q = s / m.n_e;
    Ok(m.n_o * (1.0 - q * q).sqrt())
}

pub fn kz(m: &UniaxialMaterial, s: f64, mode: Mode) -> Result<f64> {
    match mode {
        Mode::Ordinary => kz_ordinary(m, s),
        Mode::Extraordinary => kz_extraordinary(m, s),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub material: UniaxialMaterial,
    pub thickness_mm: f64,
}

impl Layer {
    pub fn new(material: UniaxialMaterial, thickness_mm: f64) -> Result<Self> {
        if !(thickness_mm.is_finite()
            && thickness_mm > 0.0
            && thickness_mm <= MAX_LAYER_THICKNESS_MM)
        {
            return Err(Error::Config(format!(
                "layer '{}': thickness {thickness_mm} mm must be in (0, {MAX_LAYER_THICKNESS_MM}]",
                material.name
            )));
        }
        Ok(Self {
            material,
            thickness_mm,
        })
    }

    /// Optical path `h * kz` in millimetres.
    pub fn phase(&self, s: f64, mode: Mode) -> Result<f64> {
        Ok(self.thickness_mm * kz(&self.material, s, mode)?)
    }
}

pub fn layer_phase(layer: &Layer, s: f64, mode: Mode) -> Result<f64> {
    layer.phase(s, mode)
}

/// Layers in the order the light meets them, from the objective toward the
/// information plane. The surrounding medium is air.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerStack {
    layers: Vec<Layer>,
}

impl LayerStack {
    /// A stack with no layers: focusing in air.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let stack = Self { layers };
        let total = stack.total_thickness_mm();
        if total > MAX_STACK_THICKNESS_MM {
            return Err(Error::Config(format!(
                "stack thickness {total} mm exceeds {MAX_STACK_THICKNESS_MM} mm"
            )));
        }
        Ok(stack)
    }

    pub fn single(material: UniaxialMaterial, thickness_mm: f64) -> Result<Self> {
        Self::new(vec![Layer::new(material, thickness_mm)?])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn total_thickness_mm(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness_mm).sum()
    }

    pub fn is_isotropic(&self) -> bool {
        self.layers.iter().all(|l| l.material.is_isotropic())
    }

    /// Largest direction sine for which every layer propagates both modes.
    pub fn max_sine(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.material.n_o.min(l.material.n_e))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the isotropic medium the focal region is taken to lie in:
    /// the ordinary index of the last layer, or air for an empty stack.
    pub fn focal_index(&self) -> f64 {
        self.layers.last().map_or(1.0, |l| l.material.n_o)
    }

    /// Parses `layer: <material> <thickness_mm>` records.
    pub fn parse(text: &str, catalog: &Catalog) -> Result<Self> {
        let mut layers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let rest = line
                .strip_prefix("layer:")
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("expected 'layer: <material> <thickness_mm>', found '{line}'"),
                })?;
            let mut parts = rest.split_whitespace();
            let (Some(name), Some(thickness), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected exactly a material name and a thickness".into(),
                });
            };
            let material = catalog.get(name).ok_or_else(|| Error::UnknownMaterial {
                name: name.to_owned(),
                line: line_no,
            })?;
            let thickness: f64 = thickness.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("thickness '{thickness}' is not a number"),
            })?;
            let layer = Layer::new(material.clone(), thickness).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            layers.push(layer);
        }
        Self::new(layers)
    }

    pub fn to_text(&self) -> String {
        self.layers
            .iter()
            .map(|l| format!("layer: {} {}\n", l.material.name, l.thickness_mm))
            .collect()
    }
}

/// Longitudinal separation of the ordinary and extraordinary foci.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalSplit {
    /// `2 h |dn| / n_o`, measured inside the crystal.
    pub in_medium_um: f64,
    /// The same separation expressed as an air-equivalent focus shift, `2 h |dn| / n_o^2`.
    pub in_air_um: f64,
}

pub fn focal_split(h_mm: f64, m: &UniaxialMaterial) -> FocalSplit {
    focal_split_with_delta_n(h_mm, m.n_o, m.delta_n())
}

/// Focal split with an explicitly supplied birefringence, e.g. a rounded value.
pub fn focal_split_with_delta_n(h_mm: f64, n_o: f64, delta_n: f64) -> FocalSplit {
    let in_medium_um = 2.0 * h_mm * 1e3 * delta_n.abs() / n_o;
    FocalSplit {
        in_medium_um,
        in_air_um: in_medium_um / n_o,
    }
}

/// Complex amplitudes coupled into the two eigenmodes at one pupil point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeAmplitudes {
    pub ordinary: Complex64,
    pub extraordinary: Complex64,
}

impl ModeAmplitudes {
    pub fn power(&self) -> f64 {
        self.ordinary.norm_sqr() + self.extraordinary.norm_sqr()
    }
}

/// Splits the input polarization at pupil azimuth `phi` into the azimuthal
/// (ordinary) and radial (extraordinary) components.
pub fn pupil_polarization_split(phi: f64, pol: Polarization) -> ModeAmplitudes {
    let (sin, cos) = phi.sin_cos();
    match pol {
        Polarization::LinearX => ModeAmplitudes {
            ordinary: Complex64::new(-sin, 0.0),
            extraordinary: Complex64::new(cos, 0.0),
        },
        Polarization::LinearY => ModeAmplitudes {
            ordinary: Complex64::new(cos, 0.0),
            extraordinary: Complex64::new(sin, 0.0),
        },
        Polarization::Circular => {
            let e = Complex64::from_polar(std::f64::consts::FRAC_1_SQRT_2, phi);
            ModeAmplitudes {
                ordinary: Complex64::i() * e,
                extraordinary: e,
            }
        }
    }
}
