use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::dataio::Table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(x: f64, y: f64, weight: f64) -> Self {
        WeightedPoint { x, y, weight }
    }
}

/// Standard deviational ellipse, one-standard-deviation axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipseSummary {
    pub center_x: f64,
    pub center_y: f64,
    /// Angle of the major axis from +x, counter-clockwise, in [0, π).
    pub theta: f64,
    pub sigma_major: f64,
    pub sigma_minor: f64,
    pub area: f64,
}

/// Weighted mean centre and principal axes of the weighted covariance.
pub fn sde(points: &[WeightedPoint]) -> Result<EllipseSummary> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "an ellipse needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.weight >= 0.0) || !p.x.is_finite() || !p.y.is_finite() || !p.weight.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let w: f64 = points.iter().map(|p| p.weight).sum();
    if !(w > 0.0) {
        return Err(Error::InvalidArgument("total weight must be positive".into()));
    }
    let cx = points.iter().map(|p| p.weight * p.x).sum::<f64>() / w;
    let cy = points.iter().map(|p| p.weight * p.y).sum::<f64>() / w;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += p.weight * dx * dx;
        syy += p.weight * dy * dy;
        sxy += p.weight * dx * dy;
    }
    sxx /= w;
    syy /= w;
    sxy /= w;
    let half_diff = (sxx - syy) / 2.0;
    let radius = half_diff.hypot(sxy);
    let major = (sxx + syy) / 2.0 + radius;
    let det = sxx * syy - sxy * sxy;
    let minor = if major > 0.0 { (det / major).max(0.0) } else { 0.0 };
    let mut theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta -= PI;
    }
    let (a, b) = (major.max(0.0).sqrt(), minor.sqrt());
    Ok(EllipseSummary {
        center_x: cx,
        center_y: cy,
        theta,
        sigma_major: a,
        sigma_minor: b,
        area: PI * a * b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CentroidStep {
    pub year: i32,
    pub ellipse: EllipseSummary,
    /// Movement of the centre since the previous year.
    pub drift: Option<(f64, f64)>,
}

/// One ellipse per year, weighting province coordinates by emissions.
pub fn centroid_path(
    yearly: &BTreeMap<i32, BTreeMap<String, f64>>,
    coordinates: &BTreeMap<String, (f64, f64)>,
) -> Result<Vec<CentroidStep>> {
    let mut out: Vec<CentroidStep> = Vec::with_capacity(yearly.len());
    for (&year, weights) in yearly {
        let points = weights
            .iter()
            .map(|(province, &w)| {
                let &(x, y) = coordinates.get(province).ok_or_else(|| {
                    Error::InvalidArgument(format!("no coordinates for province `{province}`"))
                })?;
                Ok(WeightedPoint::new(x, y, w))
            })
            .collect::<Result<Vec<_>>>()?;
        let ellipse = sde(&points).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{year}: {m}")),
            other => other,
        })?;
        let drift = out
            .last()
            .map(|p| (ellipse.center_x - p.ellipse.center_x, ellipse.center_y - p.ellipse.center_y));
        out.push(CentroidStep { year, ellipse, drift });
    }
    Ok(out)
}

/// `year,center_x,center_y,theta,sigma_major,sigma_minor,area,drift_x,drift_y`;
/// the first year has zero drift.
pub fn ellipse_table(path: &[CentroidStep]) -> Table {
    let mut t = Table::new([
        "year", "center_x", "center_y", "theta", "sigma_major", "sigma_minor", "area", "drift_x", "drift_y",
    ]);
    for s in path {
        let (dx, dy) = s.drift.unwrap_or((0.0, 0.0));
        let e = &s.ellipse;
        t.push(vec![
            s.year.into(),
            e.center_x.into(),
            e.center_y.into(),
            e.theta.into(),
            e.sigma_major.into(),
            e.sigma_minor.into(),
            e.area.into(),
            dx.into(),
            dy.into(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix2;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64, f64)]) -> Vec<WeightedPoint> {
        v.iter().map(|&(x, y, w)| WeightedPoint::new(x, y, w)).collect()
    }

    #[test]
    fn symmetric_cross_is_a_circle() {
        let e = sde(&pts(&[(1.0, 0.0, 1.0), (-1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (0.0, -1.0, 1.0)])).unwrap();
        assert_eq!((e.center_x, e.center_y), (0.0, 0.0));
        assert_eq!(e.sigma_major, e.sigma_minor);
    }

    #[test]
    fn collinear_points_on_diagonal() {
        let e = sde(&pts(&[(0.0, 0.0, 1.0), (1.0, 1.0, 2.0), (3.0, 3.0, 1.0)])).unwrap();
        assert_eq!(e.sigma_minor, 0.0);
        assert!((e.theta - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let e = sde(&pts(&[(2.0, 5.0, 1.0), (2.0, 5.0, 3.0), (2.0, 5.0, 1.0)])).unwrap();
        assert_eq!((e.sigma_major, e.sigma_minor, e.theta), (0.0, 0.0, 0.0));
    }

    #[test]
    fn too_few_points_or_weight() {
        assert!(sde(&pts(&[(0.0, 0.0, 1.0), (1.0, 1.0, 1.0)])).is_err());
        assert!(sde(&pts(&[(0.0, 0.0, 0.0), (1.0, 1.0, 0.0), (2.0, 0.0, 0.0)])).is_err());
    }

    #[test]
    fn point_mass_centre() {
        let yearly = BTreeMap::from([(2000, BTreeMap::from([("A".to_string(), 0.0), ("B".to_string(), 5.0), ("C".to_string(), 0.0)]))]);
        let coords = BTreeMap::from([
            ("A".to_string(), (0.0, 0.0)),
            ("B".to_string(), (3.0, 4.0)),
            ("C".to_string(), (1.0, 9.0)),
        ]);
        let path = centroid_path(&yearly, &coords).unwrap();
        assert_eq!((path[0].ellipse.center_x, path[0].ellipse.center_y), (3.0, 4.0));
        let mut missing = coords.clone();
        missing.remove("C");
        let err = centroid_path(&yearly, &missing).unwrap_err();
        assert!(err.to_string().contains("`C`"));
    }

    fn cloud() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, 0.1f64..10.0), 3..25)
    }

    proptest! {
        #[test]
        fn agrees_with_eigen_decomposition(c in cloud()) {
            let p = pts(&c);
            let e = sde(&p).unwrap();
            let w: f64 = c.iter().map(|t| t.2).sum();
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for &(x, y, wt) in &c {
                let (dx, dy) = (x - e.center_x, y - e.center_y);
                sxx += wt * dx * dx; syy += wt * dy * dy; sxy += wt * dx * dy;
            }
            let m = Matrix2::new(sxx / w, sxy / w, sxy / w, syy / w);
            let eig = m.symmetric_eigen();
            let (imax, imin) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
            let scale = eig.eigenvalues[imax].abs().max(1.0);
            prop_assert!((e.sigma_major.powi(2) - eig.eigenvalues[imax]).abs() <= 1e-9 * scale);
            prop_assert!((e.sigma_minor.powi(2) - eig.eigenvalues[imin].max(0.0)).abs() <= 1e-9 * scale);
            let v = eig.eigenvectors.column(imax);
            // the major axis direction agrees up to sign when the axes are distinct
            if eig.eigenvalues[imax] - eig.eigenvalues[imin] > 1e-6 * scale {
                let cross = v[0] * e.theta.sin() - v[1] * e.theta.cos();
                prop_assert!(cross.abs() <= 1e-6);
            }
            prop_assert!(e.sigma_major >= e.sigma_minor);
            prop_assert!((0.0..PI).contains(&e.theta));
        }

        #[test]
        fn translation_invariance(c in cloud(), tx in -100.0f64..100.0, ty in -100.0f64..100.0) {
            let a = sde(&pts(&c)).unwrap();
            let moved: Vec<_> = c.iter().map(|&(x, y, w)| (x + tx, y + ty, w)).collect();
            let b = sde(&pts(&moved)).unwrap();
            prop_assert!((b.center_x - a.center_x - tx).abs() < 1e-9);
            prop_assert!((b.center_y - a.center_y - ty).abs() < 1e-9);
            prop_assert!((b.sigma_major - a.sigma_major).abs() < 1e-9 * a.sigma_major.max(1.0));
            prop_assert!((b.sigma_minor - a.sigma_minor).abs() < 1e-7 * a.sigma_major.max(1.0));
        }

        #[test]
        fn weight_rescaling_invariance(c in cloud(), k in 0.01f64..100.0) {
            let a = sde(&pts(&c)).unwrap();
            let scaled: Vec<_> = c.iter().map(|&(x, y, w)| (x, y, w * k)).collect();
            let b = sde(&pts(&scaled)).unwrap();
            prop_assert!((b.sigma_major - a.sigma_major).abs() < 1e-9 * a.sigma_major.max(1.0));
            prop_assert!((b.center_x - a.center_x).abs() < 1e-9 * a.center_x.abs().max(1.0));
        }

        #[test]
        fn rotation_equivariance(c in cloud(), phi in 0.0f64..PI) {
            let a = sde(&pts(&c)).unwrap();
            let (s, co) = phi.sin_cos();
            let rotated: Vec<_> = c.iter().map(|&(x, y, w)| (co * x - s * y, s * x + co * y, w)).collect();
            let b = sde(&pts(&rotated)).unwrap();
            prop_assert!((b.sigma_major - a.sigma_major).abs() < 1e-8 * a.sigma_major.max(1.0));
            prop_assert!((b.sigma_minor - a.sigma_minor).abs() < 1e-6 * a.sigma_major.max(1.0));
            if a.sigma_major - a.sigma_minor > 1e-3 * a.sigma_major {
                let mut d = (b.theta - a.theta - phi).rem_euclid(PI);
                if d > PI / 2.0 { d -= PI; }
                prop_assert!(d.abs() < 1e-6);
            }
        }
    }
}
