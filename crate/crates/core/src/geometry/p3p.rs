//! Minimal absolute pose from three 2D-3D correspondences.
//!
//! Follows Kneip's direct formulation: an intermediate camera frame and an
//! intermediate world frame reduce the problem to a quartic in the cosine of
//! the angle between two planes, from which camera center and orientation
//! follow in closed form. Each candidate is then polished by Newton steps on
//! the three point-distance constraints and re-aligned with an absolute
//! orientation fit, which brings exact inputs down to round-off.

use nalgebra::{DMatrix, Matrix3, Schur, Vector3};

use super::{bearing, project, Correspondence, Pose};
use crate::error::{Error, Result};
use crate::features::CameraIntrinsics;

/// Candidates whose reprojection residual exceeds this are dropped.
const MAX_RESIDUAL_PX: f64 = 1e-6;

/// Up to four world-to-camera poses consistent with the three
/// correspondences, sorted by translation (x, then y, then z).
pub fn p3p_solve(
    c1: &Correspondence,
    c2: &Correspondence,
    c3: &Correspondence,
    k: &CameraIntrinsics,
) -> Result<Vec<Pose>> {
    let world = [c1.point3d, c2.point3d, c3.point3d];
    let bearings = [bearing(&c1.pixel, k), bearing(&c2.pixel, k), bearing(&c3.pixel, k)];

    let span = (world[1] - world[0]).norm().max((world[2] - world[0]).norm());
    let area = (world[1] - world[0]).cross(&(world[2] - world[0])).norm();
    if !(area > 1e-10 * span * span) {
        return Err(Error::DegenerateGeometry("world points are collinear"));
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if bearings[i].cross(&bearings[j]).norm() < 1e-12 {
            return Err(Error::DegenerateGeometry("bearing vectors coincide"));
        }
    }

    let mut poses: Vec<Pose> = Vec::with_capacity(4);
    for (rotation_cw, center) in kneip_candidates(&world, &bearings) {
        let guess = Pose {
            rotation: rotation_cw.transpose(),
            translation: -(rotation_cw.transpose() * center),
        };
        let Some(pose) = polish(&guess, &world, &bearings) else {
            continue;
        };
        let residual = [c1, c2, c3]
            .iter()
            .map(|c| project(&c.point3d, &pose, k).map(|px| (px - c.pixel).norm()))
            .try_fold(0.0f64, |m, r| r.map(|r| m.max(r)));
        let Ok(residual) = residual else { continue };
        if residual > MAX_RESIDUAL_PX {
            continue;
        }
        let duplicate = poses.iter().any(|p| {
            p.translation_error(&pose) < 1e-9 && (p.rotation - pose.rotation).abs().max() < 1e-9
        });
        if !duplicate {
            poses.push(pose);
        }
    }
    poses.sort_by(|a, b| {
        let (ta, tb) = (a.translation, b.translation);
        ta.x.total_cmp(&tb.x)
            .then(ta.y.total_cmp(&tb.y))
            .then(ta.z.total_cmp(&tb.z))
    });
    Ok(poses)
}

/// Raw closed-form candidates as (camera-to-world rotation, camera center).
fn kneip_candidates(world: &[Vector3<f64>; 3], bearings: &[Vector3<f64>; 3]) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
    let frame_of = |f1: &Vector3<f64>, f2: &Vector3<f64>| {
        let e1 = *f1;
        let e3 = f1.cross(f2).normalize();
        let e2 = e3.cross(&e1);
        Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()])
    };

    let (mut f1, mut f2) = (bearings[0], bearings[1]);
    let (mut p1, mut p2) = (world[0], world[1]);
    let p3 = world[2];
    let mut t = frame_of(&f1, &f2);
    let mut f3 = t * bearings[2];
    // keep the third bearing on the negative side of the intermediate frame
    if f3.z > 0.0 {
        std::mem::swap(&mut f1, &mut f2);
        std::mem::swap(&mut p1, &mut p2);
        t = frame_of(&f1, &f2);
        f3 = t * bearings[2];
    }

    let n1 = (p2 - p1).normalize();
    let n3 = n1.cross(&(p3 - p1)).normalize();
    let n2 = n3.cross(&n1);
    let n = Matrix3::from_rows(&[n1.transpose(), n2.transpose(), n3.transpose()]);
    let p3n = n * (p3 - p1);

    let d12 = (p2 - p1).norm();
    let phi1 = f3.x / f3.z;
    let phi2 = f3.y / f3.z;
    let (q1, q2) = (p3n.x, p3n.y);

    let cos_beta = f1.dot(&f2);
    let mut b = 1.0 / (1.0 - cos_beta * cos_beta) - 1.0;
    b = if cos_beta < 0.0 { -b.sqrt() } else { b.sqrt() };

    let phi1_2 = phi1 * phi1;
    let phi2_2 = phi2 * phi2;
    let q1_2 = q1 * q1;
    let q1_3 = q1_2 * q1;
    let q1_4 = q1_3 * q1;
    let q2_2 = q2 * q2;
    let q2_3 = q2_2 * q2;
    let q2_4 = q2_3 * q2;
    let d12_2 = d12 * d12;
    let b2 = b * b;

    let a4 = -phi2_2 * q2_4 - q2_4 * phi1_2 - q2_4;
    let a3 = 2.0 * q2_3 * d12 * b + 2.0 * phi2_2 * q2_3 * d12 * b - 2.0 * phi2 * q2_3 * phi1 * d12;
    let a2 = -phi2_2 * q2_2 * q1_2 - phi2_2 * q2_2 * d12_2 * b2 - phi2_2 * q2_2 * d12_2
        + phi2_2 * q2_4
        + q2_4 * phi1_2
        + 2.0 * q1 * q2_2 * d12
        + 2.0 * phi1 * phi2 * q1 * q2_2 * d12 * b
        - q2_2 * q1_2 * phi1_2
        + 2.0 * q1 * q2_2 * phi2_2 * d12
        - q2_2 * d12_2 * b2
        - 2.0 * q1_2 * q2_2;
    let a1 = 2.0 * q1_2 * q2 * d12 * b + 2.0 * phi2 * q2_3 * phi1 * d12
        - 2.0 * phi2_2 * q2_3 * d12 * b
        - 2.0 * q1 * q2 * d12_2 * b;
    let a0 = -2.0 * phi2 * q2_2 * phi1 * q1 * d12 * b + phi2_2 * q2_2 * d12_2 + 2.0 * q1_3 * d12
        - q1_2 * d12_2
        + phi2_2 * q2_2 * q1_2
        - q1_4
        - 2.0 * phi2_2 * q2_2 * q1 * d12
        + q2_2 * phi1_2 * q1_2
        + phi2_2 * q2_2 * d12_2 * b2;

    let nt = n.transpose();
    let mut out = Vec::with_capacity(4);
    for cos_theta in quartic_real_roots([a4, a3, a2, a1, a0]) {
        let cos_theta = cos_theta.clamp(-1.0, 1.0);
        let cot_alpha = (-phi1 * q1 / phi2 - cos_theta * q2 + d12 * b)
            / (-phi1 * cos_theta * q2 / phi2 + q1 - d12);
        if !cot_alpha.is_finite() {
            continue;
        }
        let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        let sin_alpha = (1.0 / (cot_alpha * cot_alpha + 1.0)).sqrt();
        let mut cos_alpha = (1.0 - sin_alpha * sin_alpha).max(0.0).sqrt();
        if cot_alpha < 0.0 {
            cos_alpha = -cos_alpha;
        }
        let scale = d12 * (sin_alpha * b + cos_alpha);
        let c_local = Vector3::new(
            cos_alpha * scale,
            cos_theta * sin_alpha * scale,
            sin_theta * sin_alpha * scale,
        );
        let center = p1 + nt * c_local;
        let r_local = Matrix3::new(
            -cos_alpha,
            -sin_alpha * cos_theta,
            -sin_alpha * sin_theta,
            sin_alpha,
            -cos_alpha * cos_theta,
            -cos_alpha * sin_theta,
            0.0,
            -sin_theta,
            cos_theta,
        );
        let rotation = nt * r_local.transpose() * t;
        out.push((rotation, center));
    }
    out
}

/// Real roots of `c[0] x^4 + c[1] x^3 + c[2] x^2 + c[3] x + c[4]`.
fn quartic_real_roots(c: [f64; 5]) -> Vec<f64> {
    polynomial_real_roots(&c)
}

/// Real roots of a polynomial with coefficients in descending powers, from
/// the eigenvalues of its companion matrix, polished by Newton iterations.
/// Vanishing leading coefficients lower the degree.
fn polynomial_real_roots(c: &[f64]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let lead = c.iter().position(|v| v.abs() > 1e-14 * scale).unwrap_or(c.len());
    let c: Vec<f64> = c[lead..].iter().map(|v| v / scale).collect();
    let degree = c.len().saturating_sub(1);
    if degree == 0 {
        return Vec::new();
    }
    let companion = DMatrix::from_fn(degree, degree, |i, j| {
        if i == 0 {
            -c[j + 1] / c[0]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let Some(schur) = Schur::try_new(companion, f64::EPSILON, 1000) else {
        return Vec::new();
    };
    let poly = |x: f64| c.iter().fold(0.0, |acc, v| acc * x + v);
    let dpoly = |x: f64| {
        c[..degree]
            .iter()
            .enumerate()
            .fold(0.0, |acc, (i, v)| acc * x + (degree - i) as f64 * v)
    };
    schur
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-4 * (1.0 + z.re.abs()))
        .map(|z| newton(z.re, poly, dpoly))
        .collect()
}

fn newton(mut x: f64, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
    let mut fx = f(x);
    for _ in 0..8 {
        let d = df(x);
        if d == 0.0 || fx == 0.0 {
            break;
        }
        let next = x - fx / d;
        let fnext = f(next);
        if !(fnext.abs() < fx.abs()) {
            break;
        }
        x = next;
        fx = fnext;
    }
    x
}

/// Newton refinement of the three depths along the bearings against the
/// pairwise world distances, followed by a rigid fit.
fn polish(guess: &Pose, world: &[Vector3<f64>; 3], bearings: &[Vector3<f64>; 3]) -> Option<Pose> {
    let mut lambda = Vector3::from_fn(|i, _| guess.transform(&world[i]).dot(&bearings[i]));
    if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return None;
    }
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    let cos: Vec<f64> = pairs.iter().map(|&(i, j)| bearings[i].dot(&bearings[j])).collect();
    let dist2: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| (world[i] - world[j]).norm_squared())
        .collect();
    let residual = |l: &Vector3<f64>| {
        Vector3::from_fn(|r, _| {
            let (i, j) = pairs[r];
            l[i] * l[i] + l[j] * l[j] - 2.0 * cos[r] * l[i] * l[j] - dist2[r]
        })
    };
    let mut res = residual(&lambda);
    for _ in 0..10 {
        let mut jac = Matrix3::zeros();
        for (r, &(i, j)) in pairs.iter().enumerate() {
            jac[(r, i)] = 2.0 * lambda[i] - 2.0 * cos[r] * lambda[j];
            jac[(r, j)] = 2.0 * lambda[j] - 2.0 * cos[r] * lambda[i];
        }
        let Some(step) = jac.lu().solve(&res) else { break };
        let next = lambda - step;
        let next_res = residual(&next);
        if !(next_res.norm() < res.norm()) {
            break;
        }
        lambda = next;
        res = next_res;
    }
    let camera: [Vector3<f64>; 3] = [
        bearings[0] * lambda[0],
        bearings[1] * lambda[1],
        bearings[2] * lambda[2],
    ];
    Some(absolute_orientation(world, &camera))
}

/// Rigid transform `camera = R world + t` by the SVD method.
fn absolute_orientation(world: &[Vector3<f64>; 3], camera: &[Vector3<f64>; 3]) -> Pose {
    let wc = (world[0] + world[1] + world[2]) / 3.0;
    let cc = (camera[0] + camera[1] + camera[2]) / 3.0;
    let mut h = Matrix3::zeros();
    for i in 0..3 {
        h += (world[i] - wc) * (camera[i] - cc).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    Pose {
        rotation,
        translation: cc - rotation * wc,
    }
}
