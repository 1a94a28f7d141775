//! Trajectory geometry: RDP simplification, PCA plane fit, Kåsa circle fit.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::GroundingError;
use crate::perception::Vec3;

/// Distance from `p` to the segment `a..b`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Ramer–Douglas–Peucker simplification. Returns the indices of retained
/// points in order; the endpoints are always kept.
pub fn rdp_indices(points: &[Vec3], epsilon: f64) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (mut worst, mut worst_d) = (lo, -1.0);
        for i in lo + 1..hi {
            let d = point_segment_distance(&points[i], &points[lo], &points[hi]);
            if d > worst_d {
                worst = i;
                worst_d = d;
            }
        }
        if worst_d > epsilon {
            keep[worst] = true;
            stack.push((lo, worst));
            stack.push((worst, hi));
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

pub fn rdp(points: &[Vec3], epsilon: f64) -> Vec<Vec3> {
    rdp_indices(points, epsilon).into_iter().map(|i| points[i]).collect()
}

/// Principal axes of a point set, largest variance first.
#[derive(Debug, Clone, Copy)]
pub struct PlaneFit {
    pub centroid: Vec3,
    pub axes: [Vec3; 3],
    pub variances: [f64; 3],
}

impl PlaneFit {
    pub fn normal(&self) -> Vec3 {
        self.axes[2]
    }
}

pub fn fit_plane(points: &[Vec3]) -> Result<PlaneFit, GroundingError> {
    if points.len() < 3 {
        return Err(GroundingError::DegenerateGeometry(format!("{} points; need at least 3", points.len())));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes = order.map(|i| Vector3::from(eig.eigenvectors.column(i)).normalize());
    let variances = order.map(|i| eig.eigenvalues[i].max(0.0));
    let scale = variances[0];
    if !(scale > 0.0) || variances[1] <= scale * 1e-12 {
        return Err(GroundingError::DegenerateGeometry("points are collinear".into()));
    }
    Ok(PlaneFit { centroid, axes, variances })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationFit {
    /// Unit axis; the motion is counterclockwise about it.
    pub axis: Vec3,
    pub center: Vec3,
    pub radius: f64,
    /// Absolute swept angle in radians.
    pub angle: f64,
}

fn wrap_angle(mut a: f64) -> f64 {
    use std::f64::consts::PI;
    while a > PI {
        a -= 2.0 * PI;
    }
    while a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Algebraic circle fit `x² + y² = 2ax + 2by + c`; returns `(a, b, r)`.
pub fn kasa_fit(points: &[[f64; 2]]) -> Result<(f64, f64, f64), GroundingError> {
    if points.len() < 3 {
        return Err(GroundingError::DegenerateGeometry("need at least 3 points for a circle".into()));
    }
    // centered normal equations of the algebraic fit; better conditioned
    // than solving the raw design matrix
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    let (mx, my) = (mx / n, my / n);
    let (mut suu, mut suv, mut svv, mut ru, mut rv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (u, v) = (p[0] - mx, p[1] - my);
        let r = u * u + v * v;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        ru += u * r;
        rv += v * r;
    }
    let det = suu * svv - suv * suv;
    if !(det.abs() > f64::EPSILON * (suu * svv).abs()) {
        return Err(GroundingError::DegenerateGeometry("circle fit failed: points are collinear".into()));
    }
    let uc = 0.5 * (svv * ru - suv * rv) / det;
    let vc = 0.5 * (suu * rv - suv * ru) / det;
    let r2 = uc * uc + vc * vc + (suu + svv) / n;
    if !(r2 > 0.0) || !r2.is_finite() {
        return Err(GroundingError::DegenerateGeometry("circle fit has no real radius".into()));
    }
    Ok((mx + uc, my + vc, r2.sqrt()))
}

/// Fits a plane, then a circle in that plane, and accumulates the swept
/// angle along the trajectory.
pub fn fit_rotation(points: &[Vec3], min_radius: f64) -> Result<RotationFit, GroundingError> {
    let plane = fit_plane(points)?;
    let (e1, e2) = (plane.axes[0], plane.axes[1]);
    let projected: Vec<[f64; 2]> = points
        .iter()
        .map(|p| {
            let d = p - plane.centroid;
            [d.dot(&e1), d.dot(&e2)]
        })
        .collect();
    let (a, b, radius) = kasa_fit(&projected)?;
    if radius < min_radius {
        return Err(GroundingError::DegenerateGeometry(format!("radius {radius} below {min_radius}")));
    }
    let thetas: Vec<f64> = projected.iter().map(|p| (p[1] - b).atan2(p[0] - a)).collect();
    let swept: f64 = thetas.windows(2).map(|w| wrap_angle(w[1] - w[0])).sum();
    let angle = swept.abs();
    if !(angle > 0.0 && angle < 2.0 * std::f64::consts::PI) {
        return Err(GroundingError::DegenerateGeometry(format!("swept angle {angle} outside (0, 2π)")));
    }
    let normal = e1.cross(&e2).normalize();
    let axis = if swept > 0.0 { normal } else { -normal };
    Ok(RotationFit { axis, center: plane.centroid + e1 * a + e2 * b, radius, angle })
}

/// Plane normal of a planar sweep, oriented toward the camera (negative z).
pub fn surface_normal(points: &[Vec3]) -> Result<Vec3, GroundingError> {
    let plane = fit_plane(points)?;
    let mut n = plane.normal();
    if n.z.abs() > 1e-12 {
        if n.z > 0.0 {
            n = -n;
        }
    } else if n.dot(&(-plane.centroid)) < 0.0 {
        n = -n;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlideFit {
    pub displacement: Vec3,
    /// Length of the displacement along the trajectory's first principal axis.
    pub principal_magnitude: f64,
}

pub fn fit_slide(points: &[Vec3]) -> Result<SlideFit, GroundingError> {
    if points.len() < 2 {
        return Err(GroundingError::InsufficientTrajectory { needed: 2, found: points.len() });
    }
    let displacement = points[points.len() - 1] - points[0];
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let imax = eig.eigenvalues.imax();
    let principal_magnitude = if eig.eigenvalues[imax] > 0.0 {
        displacement.dot(&Vector3::from(eig.eigenvectors.column(imax))).abs()
    } else {
        0.0
    };
    Ok(SlideFit { displacement, principal_magnitude })
}
