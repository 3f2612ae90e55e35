//! Compensator plate design for a birefringent substrate.
//!
//! A plate of opposite optical sign placed in the beam produces a wavefront
//! difference `W_e - W_o` of opposite sign. Choosing its thickness cancels the
//! substrate's difference to leading order in the aperture; the remaining
//! higher-order part is the residual reported here.

use serde::{Deserialize, Serialize};

use crate::birefringence::{Layer, LayerStack, MAX_LAYER_THICKNESS_MM};
use crate::error::{Error, Result};
use crate::materials::{quartz, sapphire, OpticalSign, UniaxialMaterial};
use crate::search::{bisect_last_true, golden_section};
use crate::wavefront::{best_focus_residual, FocusingConfig};

/// Tabulated compensator-to-substrate thickness ratio for the built-in
/// sapphire and quartz.
pub const SAPPHIRE_QUARTZ_RATIO: f64 = 0.68;

/// Diffraction-limited RMS wavefront error, in waves.
pub const MARECHAL_RMS_WAVES: f64 = 1.0 / 14.0;

/// Golden-section tolerance on the compensator thickness, mm.
pub const THICKNESS_TOLERANCE_MM: f64 = 1e-4;

/// Bisection tolerance on the allowable thickness, mm.
pub const ALLOWABLE_TOLERANCE_MM: f64 = 1e-3;

const COARSE_SCAN_POINTS: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMethod {
    ClosedForm,
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub substrate: UniaxialMaterial,
    pub compensator: UniaxialMaterial,
    pub substrate_mm: f64,
    pub compensator_mm: f64,
    /// `compensator_mm / substrate_mm`.
    pub ratio: f64,
    pub method: DesignMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual_rms_waves: f64,
    pub uncompensated_rms_waves: f64,
    pub ratio_percent: f64,
    pub numerical_aperture: f64,
    pub wavelength_nm: f64,
    pub substrate_mm: f64,
    pub compensator_mm: f64,
}

fn same_indices(a: &UniaxialMaterial, b: &UniaxialMaterial) -> bool {
    a.n_o == b.n_o && a.n_e == b.n_e
}

fn check_pair(substrate: &UniaxialMaterial, compensator: &UniaxialMaterial) -> Result<()> {
    if substrate.is_isotropic() {
        return Err(Error::Isotropic(substrate.name.clone()));
    }
    let (a, b) = (substrate.optical_sign(), compensator.optical_sign());
    if b == OpticalSign::Isotropic || a == b {
        return Err(Error::NoCompensation {
            substrate: substrate.name.clone(),
            compensator: compensator.name.clone(),
        });
    }
    Ok(())
}

/// Leading-order thickness ratio `|dn_s / n_s^2| / |dn_c / n_c^2|`, using the
/// ordinary indices.
pub fn generalized_ratio(substrate: &UniaxialMaterial, compensator: &UniaxialMaterial) -> Result<f64> {
    check_pair(substrate, compensator)?;
    let strength = |m: &UniaxialMaterial| (m.delta_n() / (m.n_o * m.n_o)).abs();
    Ok(strength(substrate) / strength(compensator))
}

/// Splits a total thickness between substrate and compensator in the fixed
/// leading-order ratio.
pub fn design_closed_form(
    total_mm: f64,
    substrate: &UniaxialMaterial,
    compensator: &UniaxialMaterial,
) -> Result<DesignResult> {
    if !(total_mm.is_finite() && total_mm > 0.0) {
        return Err(Error::Config(format!("total thickness {total_mm} mm must be positive")));
    }
    let ratio = if same_indices(substrate, &sapphire()) && same_indices(compensator, &quartz()) {
        check_pair(substrate, compensator)?;
        SAPPHIRE_QUARTZ_RATIO
    } else {
        generalized_ratio(substrate, compensator)?
    };
    let substrate_mm = total_mm / (1.0 + ratio);
    Ok(DesignResult {
        substrate: substrate.clone(),
        compensator: compensator.clone(),
        substrate_mm,
        compensator_mm: total_mm - substrate_mm,
        ratio,
        method: DesignMethod::ClosedForm,
    })
}

fn stack_of(
    substrate: &UniaxialMaterial,
    substrate_mm: f64,
    compensator: &UniaxialMaterial,
    compensator_mm: f64,
) -> Result<LayerStack> {
    let mut layers = vec![Layer::new(substrate.clone(), substrate_mm)?];
    if compensator_mm > 0.0 {
        layers.insert(0, Layer::new(compensator.clone(), compensator_mm)?);
    }
    LayerStack::new(layers)
}

/// Residual of the substrate read through a compensator of the given thickness.
pub fn compensated_residual(
    substrate: &Layer,
    compensator: &UniaxialMaterial,
    compensator_mm: f64,
    cfg: &FocusingConfig,
) -> Result<f64> {
    let stack = stack_of(&substrate.material, substrate.thickness_mm, compensator, compensator_mm)?;
    best_focus_residual(&stack, cfg)
}

/// Compares the compensated stack of `design` with its substrate alone.
pub fn residual_ratio(design: &DesignResult, cfg: &FocusingConfig) -> Result<ResidualReport> {
    let substrate = Layer::new(design.substrate.clone(), design.substrate_mm)?;
    let uncompensated = best_focus_residual(&LayerStack::new(vec![substrate.clone()])?, cfg)?;
    if uncompensated == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let residual = if design.compensator_mm > 0.0 {
        compensated_residual(&substrate, &design.compensator, design.compensator_mm, cfg)?
    } else {
        uncompensated
    };
    Ok(ResidualReport {
        residual_rms_waves: residual,
        uncompensated_rms_waves: uncompensated,
        ratio_percent: 100.0 * residual / uncompensated,
        numerical_aperture: cfg.numerical_aperture,
        wavelength_nm: cfg.wavelength_nm,
        substrate_mm: design.substrate_mm,
        compensator_mm: design.compensator_mm,
    })
}

/// Evenly spaced `(thickness, residual)` samples over `bounds`.
pub fn residual_scan(
    substrate: &Layer,
    compensator: &UniaxialMaterial,
    cfg: &FocusingConfig,
    bounds: (f64, f64),
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = bounds;
    (0..points)
        .map(|k| {
            let t = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            Ok((t, compensated_residual(substrate, compensator, t, cfg)?))
        })
        .collect()
}

/// Compensator thickness minimizing the residual within `bounds` (mm).
pub fn optimize_thickness(
    substrate: &Layer,
    compensator: &UniaxialMaterial,
    cfg: &FocusingConfig,
    bounds: (f64, f64),
) -> Result<(DesignResult, ResidualReport)> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && lo < hi && hi <= MAX_LAYER_THICKNESS_MM) {
        return Err(Error::Config(format!(
            "compensator bounds [{lo}, {hi}] mm must satisfy 0 < lower < upper <= {MAX_LAYER_THICKNESS_MM}"
        )));
    }
    check_pair(&substrate.material, compensator)?;
    cfg.validate()?;
    let profile = residual_scan(substrate, compensator, cfg, bounds, COARSE_SCAN_POINTS)?;
    let mut best = 0;
    for (k, &(_, v)) in profile.iter().enumerate() {
        if v < profile[best].1 {
            best = k;
        }
    }
    if best == 0 || best == profile.len() - 1 {
        return Err(Error::NoInteriorMinimum {
            lower: lo,
            upper: hi,
            profile,
        });
    }
    let m = golden_section(
        |t| compensated_residual(substrate, compensator, t, cfg),
        profile[best - 1].0,
        profile[best + 1].0,
        THICKNESS_TOLERANCE_MM,
    )?;
    let design = DesignResult {
        substrate: substrate.material.clone(),
        compensator: compensator.clone(),
        substrate_mm: substrate.thickness_mm,
        compensator_mm: m.x,
        ratio: m.x / substrate.thickness_mm,
        method: DesignMethod::Optimized,
    };
    let report = residual_ratio(&design, cfg)?;
    Ok((design, report))
}

/// Largest single-layer thickness of `material` whose residual stays within
/// `criterion_waves` RMS.
pub fn max_allowable_thickness(
    material: &UniaxialMaterial,
    cfg: &FocusingConfig,
    criterion_waves: f64,
) -> Result<f64> {
    if material.is_isotropic() {
        return Err(Error::Isotropic(material.name.clone()));
    }
    if !(criterion_waves > 0.0 && criterion_waves.is_finite()) {
        return Err(Error::Config(format!(
            "criterion {criterion_waves} waves must be positive"
        )));
    }
    cfg.validate()?;
    let within = |h: f64| -> Result<bool> {
        if h <= 0.0 {
            return Ok(true);
        }
        let stack = LayerStack::single(material.clone(), h)?;
        Ok(best_focus_residual(&stack, cfg)? <= criterion_waves)
    };
    if within(MAX_LAYER_THICKNESS_MM)? {
        return Err(Error::Config(format!(
            "'{}' stays within {criterion_waves} waves beyond the {MAX_LAYER_THICKNESS_MM} mm layer limit",
            material.name
        )));
    }
    bisect_last_true(within, 0.0, MAX_LAYER_THICKNESS_MM, ALLOWABLE_TOLERANCE_MM)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{fused_silica, sapphire_rounded};

    fn round3(x: f64) -> f64 {
        (x * 1e3).round() / 1e3
    }

    #[test]
    fn closed_form_tabulated_rows() {
        let d = design_closed_form(1.2, &sapphire(), &quartz()).unwrap();
        assert_eq!((round3(d.substrate_mm), round3(d.compensator_mm)), (0.714, 0.486));
        assert_eq!(d.substrate_mm + d.compensator_mm, 1.2);
        assert_eq!(d.ratio, 0.68);
        let d = design_closed_form(0.6, &sapphire(), &quartz()).unwrap();
        assert_eq!((round3(d.substrate_mm), round3(d.compensator_mm)), (0.357, 0.243));
        assert_eq!(d.method, DesignMethod::ClosedForm);
    }

    #[test]
    fn generalized_ratio_from_indices() {
        let r = generalized_ratio(&sapphire(), &quartz()).unwrap();
        // |8.32e-3 / 1.78038^2| / |9.1e-3 / 1.5443^2|
        let oracle = (0.00832 / (1.78038f64 * 1.78038)) / (0.0091 / (1.5443f64 * 1.5443));
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 0.688).abs() < 0.002);
        let d = design_closed_form(1.0, &sapphire_rounded(), &quartz()).unwrap();
        assert!((d.ratio - generalized_ratio(&sapphire_rounded(), &quartz()).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn pair_errors() {
        assert!(matches!(
            design_closed_form(1.0, &sapphire(), &sapphire_rounded()),
            Err(Error::NoCompensation { .. })
        ));
        assert!(matches!(
            design_closed_form(1.0, &fused_silica(), &quartz()),
            Err(Error::Isotropic(_))
        ));
        assert!(matches!(
            design_closed_form(1.0, &sapphire(), &fused_silica()),
            Err(Error::NoCompensation { .. })
        ));
        assert!(design_closed_form(0.0, &sapphire(), &quartz()).is_err());
    }

    #[test]
    fn zero_compensator_is_identity() {
        let mut d = design_closed_form(1.2, &sapphire(), &quartz()).unwrap();
        d.compensator_mm = 0.0;
        let cfg = FocusingConfig::new(0.45, 442.0).with_rings(64);
        let r = residual_ratio(&d, &cfg).unwrap();
        assert_eq!(r.ratio_percent, 100.0);
    }

    #[test]
    fn isotropic_substrate_rejected_by_optimizer() {
        let cfg = FocusingConfig::new(0.45, 442.0).with_rings(64);
        let layer = Layer::new(fused_silica(), 0.7).unwrap();
        assert!(matches!(
            optimize_thickness(&layer, &quartz(), &cfg, (0.1, 1.0)),
            Err(Error::Isotropic(_))
        ));
        assert!(matches!(
            max_allowable_thickness(&fused_silica(), &cfg, MARECHAL_RMS_WAVES),
            Err(Error::Isotropic(_))
        ));
    }

    #[test]
    fn bounds_without_interior_minimum() {
        let cfg = FocusingConfig::new(0.45, 442.0).with_rings(64);
        let layer = Layer::new(sapphire(), 0.714).unwrap();
        match optimize_thickness(&layer, &quartz(), &cfg, (0.6, 1.0)) {
            Err(Error::NoInteriorMinimum { profile, .. }) => assert_eq!(profile.len(), COARSE_SCAN_POINTS),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn allowable_thickness_limits() {
        let cfg = FocusingConfig::new(0.4, 442.0).with_rings(64);
        let tiny = max_allowable_thickness(&sapphire(), &cfg, 1e-7).unwrap();
        assert!(tiny < ALLOWABLE_TOLERANCE_MM);
        let h = max_allowable_thickness(&sapphire(), &cfg, MARECHAL_RMS_WAVES).unwrap();
        let per_mm = best_focus_residual(&LayerStack::single(sapphire(), 1.0).unwrap(), &cfg).unwrap();
        assert!((h - MARECHAL_RMS_WAVES / per_mm).abs() <= ALLOWABLE_TOLERANCE_MM);
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::materials::sapphire_rounded;
    use proptest::prelude::*;

    fn cfg(na: f64, nm: f64) -> FocusingConfig {
        FocusingConfig::new(na, nm).with_rings(64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn closed_form_total_is_exact(total in 0.01f64..20.0) {
            let d = design_closed_form(total, &sapphire(), &quartz()).unwrap();
            prop_assert_eq!(d.substrate_mm + d.compensator_mm, total);
            prop_assert!(d.substrate_mm > 0.0 && d.compensator_mm > 0.0);
        }

        #[test]
        fn optimum_tracks_closed_form(na in 0.1f64..0.45, h in 0.3f64..1.0) {
            let layer = Layer::new(sapphire(), h).unwrap();
            let (d, report) = optimize_thickness(&layer, &quartz(), &cfg(na, 442.0), (0.05 * h, 1.5 * h)).unwrap();
            prop_assert!((d.ratio / SAPPHIRE_QUARTZ_RATIO - 1.0).abs() < 0.03);
            prop_assert!((0.0..=100.0).contains(&report.ratio_percent));
        }

        #[test]
        fn optimum_scales_with_substrate(na in 0.2f64..0.6, h in 0.2f64..0.8) {
            let c = cfg(na, 650.0);
            let one = optimize_thickness(&Layer::new(sapphire(), h).unwrap(), &quartz(), &c, (0.05, 2.0)).unwrap().0;
            let two = optimize_thickness(&Layer::new(sapphire(), 2.0 * h).unwrap(), &quartz(), &c, (0.1, 4.0)).unwrap().0;
            prop_assert!((two.compensator_mm / (2.0 * one.compensator_mm) - 1.0).abs() < 0.01);
        }

        #[test]
        fn optimum_does_not_depend_on_wavelength(na in 0.1f64..0.45, nm in 300.0f64..1200.0) {
            let layer = Layer::new(sapphire(), 0.714).unwrap();
            let a = optimize_thickness(&layer, &quartz(), &cfg(na, 442.0), (0.1, 1.0)).unwrap().0;
            let b = optimize_thickness(&layer, &quartz(), &cfg(na, nm), (0.1, 1.0)).unwrap().0;
            prop_assert!((a.compensator_mm - b.compensator_mm).abs() <= 2.0 * THICKNESS_TOLERANCE_MM);
        }

        #[test]
        fn residual_is_unimodal_in_compensator_thickness(na in 0.1f64..0.7) {
            let layer = Layer::new(sapphire(), 0.714).unwrap();
            let scan = residual_scan(&layer, &quartz(), &cfg(na, 442.0), (0.05, 1.2), 60).unwrap();
            let best = scan.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap().0;
            prop_assert!(scan[..=best].windows(2).all(|w| w[1].1 < w[0].1));
            prop_assert!(scan[best..].windows(2).all(|w| w[1].1 > w[0].1));
        }

        #[test]
        fn same_sign_plate_never_helps(na in 0.1f64..0.7, t in 0.01f64..2.0) {
            let layer = Layer::new(sapphire(), 0.714).unwrap();
            let c = cfg(na, 442.0);
            let alone = best_focus_residual(&LayerStack::new(vec![layer.clone()]).unwrap(), &c).unwrap();
            let with = compensated_residual(&layer, &sapphire_rounded(), t, &c).unwrap();
            prop_assert!(with >= alone);
        }

        #[test]
        fn allowable_thickness_scales_inversely_with_birefringence(n in 1.4f64..2.2, dn in 0.002f64..0.01) {
            let c = cfg(0.4, 442.0);
            let a = UniaxialMaterial::new("a", n, n - dn).unwrap();
            let b = UniaxialMaterial::new("b", n, n - 2.0 * dn).unwrap();
            let ha = max_allowable_thickness(&a, &c, MARECHAL_RMS_WAVES).unwrap();
            let hb = max_allowable_thickness(&b, &c, MARECHAL_RMS_WAVES).unwrap();
            prop_assert!((ha / (2.0 * hb) - 1.0).abs() < 0.02 + 2.0 * ALLOWABLE_TOLERANCE_MM / ha);
        }
    }
}
