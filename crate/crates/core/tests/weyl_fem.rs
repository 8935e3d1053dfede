use std::f64::consts::PI;

use np_corner::dispersion::{convert_contrast, Contrast, CornerAngle};
use np_corner::weyl::*;
use np_corner::Error;

fn right() -> CornerAngle {
    CornerAngle::new(PI / 2.0).unwrap()
}

#[test]
fn corner_residual_decreases_and_normalization_holds() {
    let ctx = weyl_context(PI / 2.0, 2f64.powi(-6), 0.05).unwrap();
    let rep = weyl_sweep(-2.0, right(), &dyadic_eps(4, 6), CUTOFF_R0, &ctx, None).unwrap();
    assert!(rep.residuals_decreasing(), "{:?}", rep.rows);
    for row in &rep.rows {
        assert!((row.fem_norm - 1.0).abs() < 0.02, "{row:?}");
    }
    let l2: Vec<f64> = rep.rows.iter().map(|r| r.l2_norm).collect();
    assert!(l2.windows(2).all(|w| w[1] < w[0]), "{l2:?}");
}

#[test]
fn mismatched_beta_is_not_approximate_eigenvalue() {
    let ctx = weyl_context(PI / 2.0, 2f64.powi(-6), 0.05).unwrap();
    let field = build_weyl_field(-2.0, right(), 2f64.powi(-6), CUTOFF_R0, RealPart::default()).unwrap();
    let matched = weyl_residual(&field, &ctx, convert_contrast(Contrast::K(-2.0)).unwrap().beta).unwrap();
    let outside = convert_contrast(Contrast::K(-8.0)).unwrap().beta;
    let off = weyl_residual(&field, &ctx, outside).unwrap();
    assert!(off.residual > matched.residual + 0.05, "{off:?} vs {matched:?}");
}

#[test]
fn flat_control_does_not_decay() {
    let ctx = weyl_context(PI, 2f64.powi(-6), 0.05).unwrap();
    let rep = weyl_sweep(-2.0, right(), &dyadic_eps(4, 6), CUTOFF_R0, &ctx, None).unwrap();
    assert!(!rep.residuals_decreasing(), "{:?}", rep.rows);
}

#[test]
fn coarse_mesh_is_rejected() {
    let ctx = weyl_context(PI / 2.0, 2f64.powi(-4), 0.1).unwrap();
    let field = build_weyl_field(-2.0, right(), 2f64.powi(-9), CUTOFF_R0, RealPart::default()).unwrap();
    assert!(matches!(weyl_residual(&field, &ctx, 1.0 / 3.0), Err(Error::MeshTooCoarse { .. })));
}
