//! Output files: comma-separated tables, 16-bit graymaps and the run manifest.
//!
//! Numbers are written with Rust's shortest round-trip formatting so tables are
//! byte-identical across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::psf::{AxialProfile, FieldGrid, Region};
use crate::wavefront::WavefrontMap;
use crate::zernike::ZernikeSpectrum;

/// Columns `rho,w_o_waves,w_e_waves,delta_w_waves`, one row per pupil ring.
pub fn map_csv(map: &WavefrontMap) -> String {
    let mut out = String::from("rho,w_o_waves,w_e_waves,delta_w_waves\n");
    for i in 0..map.grid.rings() {
        let (o, e) = (map.ordinary[i], map.extraordinary[i]);
        let _ = writeln!(out, "{},{},{},{}", map.grid.rho[i], o, e, e - o);
    }
    out
}

/// Columns `noll,n,m,coefficient_waves`.
pub fn zernike_csv(spectrum: &ZernikeSpectrum) -> String {
    let mut out = String::from("noll,n,m,coefficient_waves\n");
    for (j, n, m, c) in spectrum.rows() {
        let _ = writeln!(out, "{j},{n},{m},{c}");
    }
    out
}

fn axis_names(grid: &FieldGrid) -> (&'static str, &'static str) {
    match grid.region {
        Region::Lateral { .. } => ("x_nm", "y_nm"),
        Region::Axial { .. } => ("x_nm", "z_nm"),
    }
}

/// Columns `x_nm,y_nm,intensity` (or `x_nm,z_nm,intensity`), row-major.
pub fn grid_csv(grid: &FieldGrid) -> String {
    let (u, v) = axis_names(grid);
    let mut out = format!("{u},{v},intensity\n");
    for row in 0..grid.height {
        for col in 0..grid.width {
            let (a, b) = grid.coordinates_nm(col, row);
            let _ = writeln!(out, "{a},{b},{}", grid.at(col, row));
        }
    }
    out
}

/// Binary 16-bit graymap (`P5`, maxval 65535, big-endian samples) scaled so
/// the grid peak maps to 65535. The first image row is the largest `y` (or
/// `z`) so the picture reads with the axis pointing up. A comment line
/// records the peak intensity relative to the unaberrated focus.
pub fn grid_pgm(grid: &FieldGrid) -> Vec<u8> {
    let peak = grid.peak();
    let mut out = format!(
        "P5\n# peak-normalized intensity; peak={peak}\n{} {}\n65535\n",
        grid.width, grid.height
    )
    .into_bytes();
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    for row in (0..grid.height).rev() {
        for col in 0..grid.width {
            let level = (grid.at(col, row) * scale).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    out
}

/// Columns `z_um,total,ordinary,extraordinary`.
pub fn axial_csv(profile: &AxialProfile) -> String {
    let mut out = String::from("z_um,total,ordinary,extraordinary\n");
    for k in 0..profile.z_um.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            profile.z_um[k], profile.total[k], profile.ordinary[k], profile.extraordinary[k]
        );
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce the files of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, parameters: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_owned(),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn add_input(&mut self, path: &Path, contents: &[u8]) {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(contents),
        });
    }
}

/// Writes output files into one directory and records them for the manifest.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        fs::write(self.root.join(name), contents)?;
        self.written.push(name.to_owned());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<PathBuf> {
        manifest.outputs = self.written.clone();
        self.write_json("manifest.json", &manifest)?;
        Ok(self.root)
    }
}
