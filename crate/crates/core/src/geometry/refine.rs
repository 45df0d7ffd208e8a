//! Gauss-Newton minimization of the squared reprojection error over a pose.
//!
//! Rotation updates are left-multiplied axis-angle increments,
//! `R <- exp(w) R`, translation updates are additive.

use nalgebra::{Matrix2x3, Matrix6, SMatrix, Vector2, Vector6};

use super::{exp_so3, orthonormalize, project_camera, skew, Correspondence, Pose};
use crate::error::{Error, Result};
use crate::features::CameraIntrinsics;

const MIN_DECREASE: f64 = 1e-10;
const DAMPING: f64 = 1e-6;

/// Cost after every accepted iteration, starting with the initial cost.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrace {
    pub costs: Vec<f64>,
}

/// Sum of squared pixel residuals. Points behind the camera are an error.
pub fn reprojection_cost(pose: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<f64> {
    let mut cost = 0.0;
    for c in corrs {
        let r = project_camera(&pose.transform(&c.point3d), k)? - c.pixel;
        cost += r.norm_squared();
    }
    Ok(cost)
}

/// Residual `project(X) - u` and its 2x6 Jacobian with respect to
/// `(w, dt)` at the current pose.
pub fn residual_jacobian(
    pose: &Pose,
    c: &Correspondence,
    k: &CameraIntrinsics,
) -> Result<(Vector2<f64>, SMatrix<f64, 2, 6>)> {
    let rx = pose.rotation * c.point3d;
    let p = rx + pose.translation;
    let residual = project_camera(&p, k)? - c.pixel;
    let iz = 1.0 / p.z;
    let jp = Matrix2x3::new(
        k.fx * iz, 0.0, -k.fx * p.x * iz * iz,
        0.0, k.fy * iz, -k.fy * p.y * iz * iz,
    );
    let mut j = SMatrix::<f64, 2, 6>::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jp * -skew(&rx)));
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&jp);
    Ok((residual, j))
}

fn apply(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let w = delta.fixed_rows::<3>(0).into_owned();
    let dt = delta.fixed_rows::<3>(3).into_owned();
    Pose {
        rotation: orthonormalize(&(exp_so3(&w) * pose.rotation)),
        translation: pose.translation + dt,
    }
}

pub fn refine_pose(
    initial: &Pose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    iterations: usize,
) -> Result<Pose> {
    refine_pose_traced(initial, corrs, k, iterations).map(|(p, _)| p)
}

pub fn refine_pose_traced(
    initial: &Pose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    iterations: usize,
) -> Result<(Pose, RefineTrace)> {
    if corrs.len() < 4 {
        return Err(Error::TooFewCorrespondences { needed: 4, got: corrs.len() });
    }
    let mut pose = *initial;
    let mut cost = reprojection_cost(&pose, corrs, k)?;
    let mut trace = RefineTrace { costs: vec![cost] };

    for _ in 0..iterations {
        if cost == 0.0 {
            break;
        }
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for c in corrs {
            let (r, j) = residual_jacobian(&pose, c, k)?;
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        let delta = match h.cholesky() {
            Some(ch) => ch.solve(&-g),
            None => {
                let damped = h + Matrix6::identity() * DAMPING;
                damped.cholesky().ok_or(Error::SingularNormalEquations)?.solve(&-g)
            }
        };

        // halve the step until the cost does not increase
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..20 {
            let candidate = apply(&pose, &(delta * step));
            if let Ok(c) = reprojection_cost(&candidate, corrs, k) {
                if c <= cost {
                    accepted = Some((candidate, c));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, next_cost)) = accepted else { break };
        let decrease = cost - next_cost;
        pose = next;
        cost = next_cost;
        trace.costs.push(cost);
        if decrease < MIN_DECREASE {
            break;
        }
    }
    Ok((pose, trace))
}
