//! Uniaxial material constants and the material catalog.
//!
//! Catalog files are line oriented. Each record is a block of `key=value`
//! lines, blocks are separated by blank lines and `#` starts a comment:
//!
//! ```text
//! # sapphire at 442 nm
//! name=sapphire
//! n_o=1.78038
//! n_e=1.77206
//! ref_wavelength_nm=442
//! ```
//!
//! `name`, `n_o` and `n_e` are required. Any other key is kept as inert
//! metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used to call a material isotropic.
pub const ISOTROPY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniaxialMaterial {
    pub name: String,
    /// Ordinary index.
    pub n_o: f64,
    /// Extraordinary (principal) index.
    pub n_e: f64,
    /// Wavelength at which the indices are quoted, when known.
    pub ref_wavelength_nm: Option<f64>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpticalSign {
    Negative,
    Positive,
    Isotropic,
}

impl std::fmt::Display for OpticalSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OpticalSign::Negative => "negative",
            OpticalSign::Positive => "positive",
            OpticalSign::Isotropic => "isotropic",
        })
    }
}

impl UniaxialMaterial {
    pub fn new(name: impl Into<String>, n_o: f64, n_e: f64) -> Result<Self> {
        let material = Self {
            name: name.into(),
            n_o,
            n_e,
            ref_wavelength_nm: None,
            metadata: BTreeMap::new(),
        };
        material.validate()?;
        Ok(material)
    }

    pub fn isotropic(name: impl Into<String>, n: f64) -> Result<Self> {
        Self::new(name, n, n)
    }

    pub fn with_ref_wavelength(mut self, nm: f64) -> Self {
        self.ref_wavelength_nm = Some(nm);
        self
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Self {
        self.metadata.insert(key.to_owned(), value.to_owned());
        self
    }

    /// Signed birefringence `n_e - n_o`.
    pub fn delta_n(&self) -> f64 {
        self.n_e - self.n_o
    }

    pub fn optical_sign(&self) -> OpticalSign {
        let dn = self.delta_n();
        if dn.abs() <= ISOTROPY_TOLERANCE {
            OpticalSign::Isotropic
        } else if dn < 0.0 {
            OpticalSign::Negative
        } else {
            OpticalSign::Positive
        }
    }

    pub fn is_isotropic(&self) -> bool {
        self.optical_sign() == OpticalSign::Isotropic
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [("n_o", self.n_o), ("n_e", self.n_e)] {
            if !(value.is_finite() && (1.0..3.0).contains(&value)) {
                return Err(Error::IndexOutOfRange {
                    name: self.name.clone(),
                    field,
                    value,
                });
            }
        }
        if self.name.is_empty() || self.name.contains(char::is_whitespace) {
            return Err(Error::Config(format!(
                "material name '{}' must be non-empty and contain no whitespace",
                self.name
            )));
        }
        if let Some(nm) = self.ref_wavelength_nm {
            if !(nm.is_finite() && nm > 0.0) {
                return Err(Error::Config(format!(
                    "material '{}': ref_wavelength_nm must be positive",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Sapphire (Al2O3), c-axis cut, indices at 442 nm.
pub fn sapphire() -> UniaxialMaterial {
    UniaxialMaterial {
        name: "sapphire".into(),
        n_o: 1.78038,
        n_e: 1.77206,
        ref_wavelength_nm: Some(442.0),
        metadata: table_metadata("crystalline", "9", "2300", "34", "5.6"),
    }
}

/// Sapphire with the birefringence rounded to |dn| = 8e-3.
pub fn sapphire_rounded() -> UniaxialMaterial {
    let mut m = sapphire();
    m.name = "sapphire-rounded".into();
    m.n_e = m.n_o - 8e-3;
    m
}

/// Crystalline quartz. The wavelength of these indices is not known.
pub fn quartz() -> UniaxialMaterial {
    UniaxialMaterial {
        name: "quartz".into(),
        n_o: 1.5443,
        n_e: 1.5534,
        ref_wavelength_nm: None,
        metadata: table_metadata("crystalline", "7", "1960", "3", "0.55"),
    }
}

pub fn fused_silica() -> UniaxialMaterial {
    UniaxialMaterial {
        name: "fused-silica".into(),
        n_o: 1.4585,
        n_e: 1.4585,
        ref_wavelength_nm: None,
        metadata: table_metadata("amorphous", "5.3-6.5", "1350", "1.3", "0.55"),
    }
}

pub fn air() -> UniaxialMaterial {
    UniaxialMaterial {
        name: "air".into(),
        n_o: 1.0,
        n_e: 1.0,
        ref_wavelength_nm: None,
        metadata: BTreeMap::new(),
    }
}

fn table_metadata(
    state: &str,
    mohs: &str,
    fusing_k: &str,
    conductivity: &str,
    expansion: &str,
) -> BTreeMap<String, String> {
    [
        ("state", state),
        ("mohs_hardness", mohs),
        ("fusing_temperature_k", fusing_k),
        ("thermal_conductivity_w_per_mk", conductivity),
        ("thermal_expansion_1e-6_per_k", expansion),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

/// Ordered collection of materials with unique names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    entries: Vec<UniaxialMaterial>,
}

impl Catalog {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut catalog = Self::empty();
        for m in [
            sapphire(),
            sapphire_rounded(),
            quartz(),
            fused_silica(),
            air(),
        ] {
            catalog.insert(m);
        }
        catalog
    }

    /// Built-in entries overlaid with the records of `text`.
    pub fn load(text: &str) -> Result<Self> {
        let mut catalog = Self::builtin();
        for m in parse_records(text)? {
            catalog.insert(m);
        }
        Ok(catalog)
    }

    /// Inserts or replaces by name; a replaced entry keeps its position.
    pub fn insert(&mut self, material: UniaxialMaterial) {
        match self.entries.iter_mut().find(|m| m.name == material.name) {
            Some(slot) => *slot = material,
            None => self.entries.push(material),
        }
    }

    pub fn get(&self, name: &str) -> Option<&UniaxialMaterial> {
        self.entries.iter().find(|m| m.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&UniaxialMaterial> {
        self.get(name).ok_or_else(|| Error::UnknownMaterial {
            name: name.to_owned(),
            line: 0,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &UniaxialMaterial> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serializes every entry in the catalog file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "name={}", m.name);
            // `{}` on f64 prints the shortest string that parses back to the same bits.
            let _ = writeln!(out, "n_o={}", m.n_o);
            let _ = writeln!(out, "n_e={}", m.n_e);
            if let Some(nm) = m.ref_wavelength_nm {
                let _ = writeln!(out, "ref_wavelength_nm={nm}");
            }
            for (k, v) in &m.metadata {
                let _ = writeln!(out, "{k}={v}");
            }
        }
        out
    }
}

#[derive(Default)]
struct PendingRecord {
    first_line: usize,
    fields: Vec<(String, String, usize)>,
}

/// Parses the records of a catalog document without adding built-ins.
pub fn parse_records(text: &str) -> Result<Vec<UniaxialMaterial>> {
    let mut records = Vec::new();
    let mut pending: Option<PendingRecord> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            // Only a truly blank line terminates a block; comment lines do not.
            if raw.trim().is_empty() {
                if let Some(rec) = pending.take() {
                    records.push(finish_record(rec)?);
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected key=value, found '{line}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty key".into(),
            });
        }
        let rec = pending.get_or_insert_with(|| PendingRecord {
            first_line: line_no,
            fields: Vec::new(),
        });
        if rec.fields.iter().any(|(k, _, _)| k == key) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key '{key}' in record"),
            });
        }
        rec.fields.push((key.to_owned(), value.to_owned(), line_no));
    }
    if let Some(rec) = pending.take() {
        records.push(finish_record(rec)?);
    }
    Ok(records)
}

fn finish_record(rec: PendingRecord) -> Result<UniaxialMaterial> {
    let mut name = None;
    let mut n_o = None;
    let mut n_e = None;
    let mut ref_wavelength_nm = None;
    let mut metadata = BTreeMap::new();

    let number = |value: &str, line: usize, key: &str| -> Result<f64> {
        value.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("'{key}' must be a decimal number, found '{value}'"),
        })
    };

    for (key, value, line) in rec.fields {
        match key.as_str() {
            "name" => name = Some(value),
            "n_o" => n_o = Some(number(&value, line, &key)?),
            "n_e" => n_e = Some(number(&value, line, &key)?),
            "ref_wavelength_nm" => ref_wavelength_nm = Some(number(&value, line, &key)?),
            _ => {
                metadata.insert(key, value);
            }
        }
    }

    let name = name.ok_or_else(|| Error::Parse {
        line: rec.first_line,
        message: "record has no 'name'".into(),
    })?;
    let missing = |field: &str| Error::Parse {
        line: rec.first_line,
        message: format!("record '{name}' has no '{field}'"),
    };
    let material = UniaxialMaterial {
        n_o: n_o.ok_or_else(|| missing("n_o"))?,
        n_e: n_e.ok_or_else(|| missing("n_e"))?,
        name,
        ref_wavelength_nm,
        metadata,
    };
    material.validate()?;
    Ok(material)
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn material() -> impl Strategy<Value = UniaxialMaterial> {
        (1.0f64..2.99, -0.05f64..0.05, proptest::option::of(150.0f64..2000.0), "[a-z][a-z0-9-]{0,11}")
            .prop_map(|(n_o, dn, nm, name)| {
                let mut m = UniaxialMaterial::new(name, n_o, (n_o + dn).clamp(1.0, 2.999)).unwrap();
                m.ref_wavelength_nm = nm;
                m
            })
    }

    proptest! {
        #[test]
        fn sign_follows_delta_n(m in material()) {
            let expected = if m.delta_n().abs() <= ISOTROPY_TOLERANCE {
                OpticalSign::Isotropic
            } else if m.delta_n() < 0.0 {
                OpticalSign::Negative
            } else {
                OpticalSign::Positive
            };
            prop_assert_eq!(m.optical_sign(), expected);
        }

        #[test]
        fn catalog_text_round_trips_bitwise(entries in proptest::collection::vec(material(), 1..6)) {
            let mut cat = Catalog::empty();
            for m in entries {
                cat.insert(m);
            }
            let again = Catalog::load(&cat.to_text()).unwrap();
            for m in cat.iter() {
                let back = again.get(&m.name).unwrap();
                prop_assert_eq!(back.n_o.to_bits(), m.n_o.to_bits());
                prop_assert_eq!(back.n_e.to_bits(), m.n_e.to_bits());
                prop_assert_eq!(back.ref_wavelength_nm.map(f64::to_bits), m.ref_wavelength_nm.map(f64::to_bits));
            }
        }
    }
}
