use nalgebra::{DMatrix, DVector, Translation3, UnitQuaternion, Vector3};

use super::{JointType, KinematicsError, RobotModel};
use crate::geometry::{Capsule, Pose, Vec3};

/// World poses of every link and every joint frame, indexed like the model.
#[derive(Debug, Clone)]
pub struct LinkPoses {
    pub links: Vec<Pose>,
    /// Joint frame (parent pose composed with origin) before joint motion.
    pub joints: Vec<Pose>,
}

impl LinkPoses {
    pub fn link(&self, model: &RobotModel, name: &str) -> Result<&Pose, KinematicsError> {
        Ok(&self.links[model.link(name)?])
    }
}

fn base_pose(q: &DVector<f64>) -> Pose {
    Pose::from_parts(Translation3::new(q[0], q[1], 0.0), UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q[2]))
}

fn joint_motion(kind: JointType, axis: &Vec3, value: f64) -> Pose {
    match kind {
        JointType::Revolute => {
            Pose::from_parts(Translation3::identity(), UnitQuaternion::from_scaled_axis(axis * value))
        }
        JointType::Prismatic => Pose::from_parts(Translation3::from(axis * value), UnitQuaternion::identity()),
        JointType::Fixed => Pose::identity(),
    }
}

/// World pose of every link. The root sits at the planar base pose
/// `(px, py, 0)` with yaw ψ.
pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<LinkPoses, KinematicsError> {
    model.check_configuration(q)?;
    let mut links = vec![Pose::identity(); model.links.len()];
    let mut joints = vec![Pose::identity(); model.joints.len()];
    links[model.root] = base_pose(q);
    for &ji in &model.order {
        let j = &model.joints[ji];
        let r = &model.resolved[ji];
        let frame = links[r.parent] * j.origin;
        let value = r.dof.map_or(0.0, |i| q[i]);
        links[r.child] = frame * joint_motion(j.kind, &j.axis, value);
        joints[ji] = frame;
    }
    Ok(LinkPoses { links, joints })
}

/// Geometric Jacobian of the body-fixed point of `link` currently at
/// `point_world`. Rows are world linear velocity then world angular velocity.
pub fn point_jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    link: &str,
    point_world: &Vec3,
) -> Result<DMatrix<f64>, KinematicsError> {
    let link = model.link(link)?;
    let poses = forward_kinematics(model, q)?;
    Ok(point_jacobian_with(model, &poses, link, point_world))
}

pub(crate) fn point_jacobian_with(model: &RobotModel, poses: &LinkPoses, link: usize, p: &Vec3) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(6, model.dof());
    if model.base_planar {
        let base = poses.links[model.root].translation.vector;
        jac[(0, 0)] = 1.0;
        jac[(1, 1)] = 1.0;
        let lever = p - base;
        // z × lever
        jac[(0, 2)] = -lever.y;
        jac[(1, 2)] = lever.x;
        jac[(5, 2)] = 1.0;
    }
    for ji in model.ancestor_joints(link) {
        let Some(col) = model.resolved[ji].dof else { continue };
        let frame = &poses.joints[ji];
        let axis = frame.rotation * model.joints[ji].axis;
        match model.joints[ji].kind {
            JointType::Revolute => {
                let lin = axis.cross(&(p - frame.translation.vector));
                jac.fixed_view_mut::<3, 1>(0, col).copy_from(&lin);
                jac.fixed_view_mut::<3, 1>(3, col).copy_from(&axis);
            }
            JointType::Prismatic => jac.fixed_view_mut::<3, 1>(0, col).copy_from(&axis),
            JointType::Fixed => {}
        }
    }
    jac
}

/// Capsules of every link that has one, in world coordinates.
pub fn world_capsules(model: &RobotModel, q: &DVector<f64>) -> Result<Vec<(String, Capsule)>, KinematicsError> {
    let poses = forward_kinematics(model, q)?;
    Ok(capsules_with(model, &poses).map(|(i, c)| (model.links[i].name.clone(), c)).collect())
}

pub(crate) fn capsules_with<'a>(model: &'a RobotModel, poses: &'a LinkPoses) -> impl Iterator<Item = (usize, Capsule)> + 'a {
    model
        .links
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.capsule.map(|c| (i, c.transformed(&poses.links[i]))))
}
