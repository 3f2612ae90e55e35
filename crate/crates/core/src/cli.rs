//! Command-line front end.
//!
//! Each subcommand prints a short `key: value` summary and, when it computes
//! something, writes its tables, a `results.json` record and a
//! `manifest.json` into `--out-dir`. The summary is generated from the
//! record, so every printed number is also in the file.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::birefringence::{focal_split, Layer, LayerStack, Polarization};
use crate::compensator::{
    design_closed_form, max_allowable_thickness, optimize_thickness, residual_ratio, residual_scan,
    DesignResult, ResidualReport, MARECHAL_RMS_WAVES,
};
use crate::error::{Error, Result};
use crate::export::{self, OutputDir, RunManifest};
use crate::materials::Catalog;
use crate::parallel::Execution;
use crate::psf::{Apodization, FocalEngine, ModeSelection, PsfOptions, Region};
use crate::wavefront::{
    best_focus_residual, edge_difference, rms_wavefront, wavefront_map, FocusingConfig, Removal,
};
use crate::zernike::{self, MAX_RADIAL_ORDER};

#[derive(Debug, Parser)]
#[command(name = "birefocus", version, about = "Focusing through birefringent layers and compensator design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the material catalog.
    Materials(MaterialsArgs),
    /// Wavefront maps and Zernike spectra of a layer stack.
    Aberration(AberrationArgs),
    /// Focal intensity, Strehl ratio and spot metrics of a layer stack.
    Psf(PsfArgs),
    /// Compensator plate thickness design.
    Design(DesignArgs),
    /// Largest substrate thickness within a wavefront criterion.
    Allowable(AllowableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ListFormat {
    Human,
    Machine,
}

#[derive(Debug, Args, Serialize)]
pub struct MaterialsArgs {
    /// Catalog file whose records extend or override the built-ins.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "human")]
    pub format: ListFormat,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FocusArgs {
    /// Numerical aperture of the objective, in (0, 1).
    #[arg(long)]
    pub na: f64,
    /// Vacuum wavelength, nm.
    #[arg(long)]
    pub wavelength_nm: f64,
    /// Input polarization: linear-x, linear-y or circular.
    #[arg(long, default_value = "circular")]
    pub polarization: Polarization,
    #[arg(long, default_value_t = 256)]
    pub rings: usize,
    #[arg(long, default_value_t = 256)]
    pub spokes: usize,
    /// Run on a single thread.
    #[arg(long)]
    pub sequential: bool,
}

impl FocusArgs {
    fn config(&self) -> Result<FocusingConfig> {
        let cfg = FocusingConfig {
            numerical_aperture: self.na,
            wavelength_nm: self.wavelength_nm,
            polarization: self.polarization,
            pupil_rings: self.rings,
            pupil_spokes: self.spokes,
            execution: if self.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AberrationArgs {
    /// Stack file of `layer: <material> <thickness_mm>` lines.
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub focus: FocusArgs,
    #[arg(long, default_value_t = MAX_RADIAL_ORDER)]
    pub max_order: u32,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ApodizationArg {
    Aplanatic,
    Uniform,
}

#[derive(Debug, Args, Serialize)]
pub struct PsfArgs {
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub focus: FocusArgs,
    /// Half-width of the lateral and meridional grids, um.
    #[arg(long, default_value_t = 2.0)]
    pub half_width_um: f64,
    /// Samples per lateral axis.
    #[arg(long, default_value_t = 129)]
    pub samples: usize,
    /// Plane of the lateral grid, um from the nominal focus.
    #[arg(long, default_value_t = 0.0)]
    pub defocus_um: f64,
    /// Axial scan covers this distance on each side of the nominal focus, um.
    #[arg(long, default_value_t = 20.0)]
    pub axial_half_range_um: f64,
    #[arg(long, default_value_t = 401)]
    pub axial_samples: usize,
    #[arg(long, value_enum, default_value = "aplanatic")]
    pub apodization: ApodizationArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    Closed,
    Optimize,
}

#[derive(Debug, Args, Serialize)]
pub struct DesignArgs {
    #[arg(long, default_value = "sapphire")]
    pub substrate: String,
    #[arg(long, default_value = "quartz")]
    pub compensator: String,
    #[arg(long, value_enum, default_value = "closed")]
    pub mode: DesignMode,
    /// Total thickness to split, mm (closed form).
    #[arg(long)]
    pub total: Option<f64>,
    /// Substrate thickness, mm (optimization).
    #[arg(long)]
    pub substrate_mm: Option<f64>,
    /// Compensator thickness search interval `lower,upper`, mm.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.1, 1.0])]
    pub bounds: Vec<f64>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub focus: FocusArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AllowableArgs {
    #[arg(long, default_value = "sapphire")]
    pub material: String,
    /// RMS wavefront criterion, waves.
    #[arg(long, default_value_t = MARECHAL_RMS_WAVES)]
    pub criterion_waves: f64,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub focus: FocusArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `args` (program name first), runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Materials(args) => cmd_materials(&args, out),
        Command::Aberration(args) => cmd_aberration(&args, out),
        Command::Psf(args) => cmd_psf(&args, out),
        Command::Design(args) => cmd_design(&args, out),
        Command::Allowable(args) => cmd_allowable(&args, out),
    }
}

struct Inputs {
    catalog: Catalog,
    digests: Vec<(PathBuf, Vec<u8>)>,
}

impl Inputs {
    fn load(catalog: Option<&Path>) -> Result<Self> {
        let mut inputs = Inputs {
            catalog: Catalog::builtin(),
            digests: Vec::new(),
        };
        if let Some(path) = catalog {
            let bytes = std::fs::read(path)?;
            inputs.catalog = Catalog::load(&String::from_utf8_lossy(&bytes))?;
            inputs.digests.push((path.to_owned(), bytes));
        }
        Ok(inputs)
    }

    fn stack(&mut self, path: &Path) -> Result<LayerStack> {
        let bytes = std::fs::read(path)?;
        let stack = LayerStack::parse(&String::from_utf8_lossy(&bytes), &self.catalog)?;
        self.digests.push((path.to_owned(), bytes));
        Ok(stack)
    }

    fn manifest(&self, subcommand: &str, params: &impl Serialize) -> Result<RunManifest> {
        let mut manifest = RunManifest::new(subcommand, serde_json::to_value(params)?);
        for (path, bytes) in &self.digests {
            manifest.add_input(path, bytes);
        }
        Ok(manifest)
    }
}

/// Prints the scalar leaves of `record` as `path: value` lines. Arrays of
/// more than eight elements are summarized by their length.
fn print_summary(out: &mut impl Write, record: &Value) -> Result<()> {
    fn walk(out: &mut impl Write, prefix: &str, v: &Value) -> std::io::Result<()> {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let path = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(out, &path, child)?;
                }
                Ok(())
            }
            Value::Array(items) if items.len() > 8 => {
                writeln!(out, "{prefix}: [{} values]", items.len())
            }
            Value::Array(items) if items.iter().all(|i| !i.is_object()) => {
                let parts: Vec<String> = items.iter().map(|i| i.to_string()).collect();
                writeln!(out, "{prefix}: [{}]", parts.join(", "))
            }
            Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(out, &format!("{prefix}[{i}]"), child)?;
                }
                Ok(())
            }
            Value::String(s) => writeln!(out, "{prefix}: {s}"),
            other => writeln!(out, "{prefix}: {other}"),
        }
    }
    walk(out, "", record)?;
    Ok(())
}

fn stack_record(stack: &LayerStack) -> Value {
    Value::Array(
        stack
            .layers()
            .iter()
            .map(|l| json!({ "material": l.material.name, "thickness_mm": l.thickness_mm }))
            .collect(),
    )
}

fn cmd_materials(args: &MaterialsArgs, out: &mut impl Write) -> Result<()> {
    let inputs = Inputs::load(args.catalog.as_deref())?;
    match args.format {
        ListFormat::Machine => {
            writeln!(out, "name,n_o,n_e,sign,delta_n")?;
            for m in inputs.catalog.iter() {
                writeln!(out, "{},{},{},{},{}", m.name, m.n_o, m.n_e, m.optical_sign(), m.delta_n())?;
            }
        }
        ListFormat::Human => {
            writeln!(out, "{:<18} {:>9} {:>9} {:>10} {:>11}", "name", "n_o", "n_e", "sign", "delta_n")?;
            for m in inputs.catalog.iter() {
                writeln!(
                    out,
                    "{:<18} {:>9} {:>9} {:>10} {:>11.5}",
                    m.name,
                    m.n_o,
                    m.n_e,
                    m.optical_sign().to_string(),
                    m.delta_n()
                )?;
            }
        }
    }
    Ok(())
}

fn cmd_aberration(args: &AberrationArgs, out: &mut impl Write) -> Result<()> {
    let cfg = args.focus.config()?;
    let mut inputs = Inputs::load(args.catalog.as_deref())?;
    let stack = inputs.stack(&args.stack)?;
    let map = wavefront_map(&stack, &cfg)?;
    let grid = &map.grid;
    let delta = map.difference();
    let delta_spectrum = zernike::decompose_radial(grid, &delta, args.max_order)?;
    let synthesized = map.synthesize(cfg.polarization);
    let pol_spectrum = zernike::decompose(&synthesized, args.max_order)?;

    let splits: Vec<Value> = stack
        .layers()
        .iter()
        .map(|l| {
            let s = focal_split(l.thickness_mm, &l.material);
            json!({
                "material": l.material.name,
                "in_medium_um": s.in_medium_um,
                "in_air_um": s.in_air_um,
            })
        })
        .collect();
    let signed: f64 = stack
        .layers()
        .iter()
        .map(|l| 2.0 * l.thickness_mm * 1e3 * l.material.delta_n() / l.material.n_o)
        .sum();
    let edge = edge_difference(&stack, &cfg)?;
    let record = json!({
        "stack": stack_record(&stack),
        "numerical_aperture": cfg.numerical_aperture,
        "wavelength_nm": cfg.wavelength_nm,
        "polarization": cfg.polarization.to_string(),
        "rms_waves": {
            "ordinary": rms_wavefront(grid, &map.ordinary, Removal::PISTON),
            "extraordinary": rms_wavefront(grid, &map.extraordinary, Removal::PISTON),
            "difference": rms_wavefront(grid, &delta, Removal::PISTON),
            "difference_without_defocus": rms_wavefront(grid, &delta, Removal::PISTON_DEFOCUS),
        },
        "best_focus_residual_waves": best_focus_residual(&stack, &cfg)?,
        "edge_difference_waves": edge,
        "edge_difference_um": edge * cfg.wavelength_nm * 1e-3,
        "focal_split_um": signed.abs(),
        "focal_split_layers": splits,
        "zernike_difference": {
            "defocus_waves": delta_spectrum.get(2, 0),
            "primary_spherical_waves": delta_spectrum.get(4, 0),
            "secondary_spherical_waves": delta_spectrum.get(6, 0),
            "reconstruction_rms_waves": delta_spectrum.reconstruction_rms,
        },
        "zernike_polarized_reconstruction_rms_waves": pol_spectrum.reconstruction_rms,
    });

    let mut dir = OutputDir::create(&args.out_dir)?;
    dir.write("wavefront.csv", export::map_csv(&map))?;
    dir.write("zernike_difference.csv", export::zernike_csv(&delta_spectrum))?;
    dir.write("zernike_polarized.csv", export::zernike_csv(&pol_spectrum))?;
    dir.write_json("results.json", &record)?;
    dir.finish(inputs.manifest("aberration", args)?)?;
    print_summary(out, &record)
}

fn cmd_psf(args: &PsfArgs, out: &mut impl Write) -> Result<()> {
    let cfg = args.focus.config()?;
    let mut inputs = Inputs::load(args.catalog.as_deref())?;
    let stack = inputs.stack(&args.stack)?;
    let options = PsfOptions {
        apodization: match args.apodization {
            ApodizationArg::Aplanatic => Apodization::Aplanatic,
            ApodizationArg::Uniform => Apodization::Uniform,
        },
        common_aberration: None,
    };
    let engine = FocalEngine::with_options(&stack, &cfg, &options)?;
    let lateral = engine.grid(&Region::lateral(args.half_width_um, args.samples, args.defocus_um))?;
    let h = args.axial_half_range_um;
    let meridional = engine.grid(&Region::Axial {
        half_width_um: args.half_width_um,
        samples_x: args.samples,
        z_min_um: -h,
        z_max_um: h,
        samples_z: args.axial_samples,
    })?;
    let axial = engine.axial_profile(-h, h, args.axial_samples)?;
    let (best_z, strehl) = engine.best_focus(ModeSelection::Both)?;
    let fwhm = engine.fwhm_nm(0.0)?;
    let reference_fwhm = engine.unaberrated().fwhm_nm(0.0)?;
    let record = json!({
        "stack": stack_record(&stack),
        "numerical_aperture": cfg.numerical_aperture,
        "wavelength_nm": cfg.wavelength_nm,
        "polarization": cfg.polarization.to_string(),
        "focal_index": engine.focal_index(),
        "strehl": strehl,
        "best_focus_um": best_z * 1e-3,
        "fwhm_nm": fwhm,
        "unaberrated_fwhm_nm": reference_fwhm,
        "resolution_factor": fwhm / reference_fwhm,
        "axial": {
            "peaks_um": axial.peaks_um,
            "ordinary_focus_um": axial.ordinary_focus_um,
            "extraordinary_focus_um": axial.extraordinary_focus_um,
            "modal_separation_um": axial.modal_separation_um(),
            "peak_separation_um": axial.peak_separation_um(),
            "depth_of_focus_um": axial.depth_of_focus_um,
            "separation_over_depth_of_focus": axial.modal_separation_um() / axial.depth_of_focus_um,
        },
        "lateral_grid_peak": lateral.peak(),
        "meridional_grid_peak": meridional.peak(),
    });

    let mut dir = OutputDir::create(&args.out_dir)?;
    dir.write("lateral.csv", export::grid_csv(&lateral))?;
    dir.write("lateral.pgm", export::grid_pgm(&lateral))?;
    dir.write("meridional.csv", export::grid_csv(&meridional))?;
    dir.write("meridional.pgm", export::grid_pgm(&meridional))?;
    dir.write("axial.csv", export::axial_csv(&axial))?;
    dir.write_json("results.json", &record)?;
    dir.finish(inputs.manifest("psf", args)?)?;
    print_summary(out, &record)
}

#[derive(Serialize)]
struct DesignRecord<'a> {
    substrate: &'a str,
    compensator: &'a str,
    method: crate::compensator::DesignMethod,
    substrate_mm: f64,
    compensator_mm: f64,
    total_mm: f64,
    ratio: f64,
    report: &'a ResidualReport,
}

fn design_record<'a>(d: &'a DesignResult, report: &'a ResidualReport) -> DesignRecord<'a> {
    DesignRecord {
        substrate: &d.substrate.name,
        compensator: &d.compensator.name,
        method: d.method,
        substrate_mm: d.substrate_mm,
        compensator_mm: d.compensator_mm,
        total_mm: d.substrate_mm + d.compensator_mm,
        ratio: d.ratio,
        report,
    }
}

fn cmd_design(args: &DesignArgs, out: &mut impl Write) -> Result<()> {
    let cfg = args.focus.config()?;
    let inputs = Inputs::load(args.catalog.as_deref())?;
    let substrate = inputs.catalog.require(&args.substrate)?.clone();
    let compensator = inputs.catalog.require(&args.compensator)?.clone();
    let mut dir = OutputDir::create(&args.out_dir)?;
    let (design, report) = match args.mode {
        DesignMode::Closed => {
            let total = args
                .total
                .ok_or_else(|| Error::Config("--mode closed requires --total".into()))?;
            let design = design_closed_form(total, &substrate, &compensator)?;
            let report = residual_ratio(&design, &cfg)?;
            (design, report)
        }
        DesignMode::Optimize => {
            let h = args
                .substrate_mm
                .ok_or_else(|| Error::Config("--mode optimize requires --substrate-mm".into()))?;
            let layer = Layer::new(substrate, h)?;
            let bounds = (args.bounds[0], args.bounds[1]);
            let result = optimize_thickness(&layer, &compensator, &cfg, bounds)?;
            let scan = residual_scan(&layer, &compensator, &cfg, bounds, 41)?;
            let mut csv = String::from("compensator_mm,residual_rms_waves\n");
            for (t, r) in scan {
                csv.push_str(&format!("{t},{r}\n"));
            }
            dir.write("scan.csv", csv)?;
            result
        }
    };
    let record = serde_json::to_value(design_record(&design, &report))?;
    dir.write_json("results.json", &record)?;
    dir.finish(inputs.manifest("design", args)?)?;
    print_summary(out, &record)
}

fn cmd_allowable(args: &AllowableArgs, out: &mut impl Write) -> Result<()> {
    let cfg = args.focus.config()?;
    let inputs = Inputs::load(args.catalog.as_deref())?;
    let material = inputs.catalog.require(&args.material)?.clone();
    let h = max_allowable_thickness(&material, &cfg, args.criterion_waves)?;
    let record = json!({
        "material": material.name,
        "numerical_aperture": cfg.numerical_aperture,
        "wavelength_nm": cfg.wavelength_nm,
        "criterion_waves": args.criterion_waves,
        "max_thickness_mm": h,
    });
    let mut dir = OutputDir::create(&args.out_dir)?;
    dir.write_json("results.json", &record)?;
    dir.finish(inputs.manifest("allowable", args)?)?;
    print_summary(out, &record)
}
