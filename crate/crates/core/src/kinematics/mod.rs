//! Robot description, forward kinematics, point Jacobians and world-frame
//! link capsules for a planar-base bimanual manipulator.
//!
//! Generalized coordinates are `q = [px, py, ψ, θ₁ … θₙ]`: the base position
//! in the plane, its yaw, then one entry per revolute or prismatic joint in
//! declaration order. Fixed joints carry no coordinate.

pub(crate) mod chain;

use std::collections::{BTreeSet, HashMap};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pose_serde, Capsule, Pose, Vec3};

pub use chain::{forward_kinematics, point_jacobian, world_capsules, LinkPoses};

/// Number of base coordinates ahead of the joint coordinates.
pub const BASE_DOF: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid robot model: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    pub name: String,
    pub parent: String,
    pub child: String,
    #[serde(rename = "type")]
    pub kind: JointType,
    /// Unit axis in the joint frame.
    #[serde(default = "default_axis", with = "crate::geometry::vec3_array")]
    pub axis: Vec3,
    /// Joint frame relative to the parent link frame at zero displacement.
    #[serde(with = "pose_serde")]
    pub origin: Pose,
    /// Position limits `[lo, hi]` in rad or m; ignored for fixed joints.
    #[serde(default)]
    pub limits: [f64; 2],
    /// Speed limit in rad/s or m/s.
    #[serde(default = "default_max_velocity")]
    pub max_velocity: f64,
}

fn default_axis() -> Vec3 {
    Vec3::z()
}

fn default_max_velocity() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub name: String,
    /// Collision proxy in the link frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capsule: Option<Capsule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndEffectors {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotJson {
    base_planar: bool,
    #[serde(default = "default_base_max_velocity")]
    base_max_velocity: [f64; 3],
    joints: Vec<Joint>,
    links: Vec<Link>,
    end_effectors: EndEffectors,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    self_collision_pairs: Option<Vec<[String; 2]>>,
}

fn default_base_max_velocity() -> [f64; 3] {
    [0.5, 0.5, 1.0]
}

/// Joint with its indices resolved.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedJoint {
    pub parent: usize,
    pub child: usize,
    /// Column in `q`, absent for fixed joints.
    pub dof: Option<usize>,
}

/// Validated, immutable robot description.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub base_planar: bool,
    /// Speed limits for (px, py, ψ).
    pub base_max_velocity: [f64; 3],
    pub joints: Vec<Joint>,
    pub links: Vec<Link>,
    pub end_effectors: EndEffectors,
    pub self_collision_pairs: Vec<(String, String)>,
    pairs_explicit: bool,
    root: usize,
    /// Joint indices in parent-before-child order.
    order: Vec<usize>,
    resolved: Vec<ResolvedJoint>,
    /// Joint that moves each link, `None` for the root.
    parent_joint: Vec<Option<usize>>,
    link_index: HashMap<String, usize>,
    dof_joints: Vec<usize>,
}

impl RobotModel {
    pub fn from_json(text: &str) -> Result<Self, KinematicsError> {
        let raw: RobotJson = serde_json::from_str(text).map_err(|e| KinematicsError::Model(e.to_string()))?;
        Self::build(raw)
    }

    pub fn to_json(&self) -> String {
        let raw = RobotJson {
            base_planar: self.base_planar,
            base_max_velocity: self.base_max_velocity,
            joints: self.joints.clone(),
            links: self.links.clone(),
            end_effectors: self.end_effectors.clone(),
            self_collision_pairs: self
                .pairs_explicit
                .then(|| self.self_collision_pairs.iter().map(|(a, b)| [a.clone(), b.clone()]).collect()),
        };
        serde_json::to_string_pretty(&raw).expect("robot serializes")
    }

    /// Two 7-DOF arms on a prismatic torso over a planar base: 3 + 1 + 2×7 = 18
    /// coordinates.
    pub fn default_bimanual() -> Self {
        Self::from_json(include_str!("../../assets/robot.json")).expect("bundled robot is valid")
    }

    fn build(raw: RobotJson) -> Result<Self, KinematicsError> {
        let bad = |m: String| Err(KinematicsError::Model(m));
        let mut link_index = HashMap::new();
        for (i, l) in raw.links.iter().enumerate() {
            if link_index.insert(l.name.clone(), i).is_some() {
                return bad(format!("duplicate link '{}'", l.name));
            }
            if let Some(c) = &l.capsule {
                Capsule::new(c.endpoint_a, c.endpoint_b, c.radius)
                    .map_err(|e| KinematicsError::Model(format!("link '{}': {e}", l.name)))?;
            }
        }
        let find = |name: &str, what: &str| -> Result<usize, KinematicsError> {
            link_index.get(name).copied().ok_or_else(|| KinematicsError::Model(format!("{what} '{name}' is not a link")))
        };

        let mut parent_joint = vec![None; raw.links.len()];
        let mut resolved = Vec::with_capacity(raw.joints.len());
        let mut dof_joints = Vec::new();
        let mut names = BTreeSet::new();
        for (ji, j) in raw.joints.iter().enumerate() {
            if !names.insert(j.name.as_str()) {
                return bad(format!("duplicate joint '{}'", j.name));
            }
            let parent = find(&j.parent, "joint parent")?;
            let child = find(&j.child, "joint child")?;
            if parent_joint[child].replace(ji).is_some() {
                return bad(format!("link '{}' has two parents", j.child));
            }
            let dof = match j.kind {
                JointType::Fixed => None,
                _ => {
                    if (j.axis.norm() - 1.0).abs() > 1e-6 {
                        return bad(format!("joint '{}' axis is not unit length", j.name));
                    }
                    let [lo, hi] = j.limits;
                    if !(lo < hi) {
                        return bad(format!("joint '{}' limits need lo < hi, got [{lo}, {hi}]", j.name));
                    }
                    if !(j.max_velocity > 0.0) {
                        return bad(format!("joint '{}' max_velocity must be positive", j.name));
                    }
                    dof_joints.push(ji);
                    Some(BASE_DOF + dof_joints.len() - 1)
                }
            };
            resolved.push(ResolvedJoint { parent, child, dof });
        }
        let roots: Vec<usize> = (0..raw.links.len()).filter(|&i| parent_joint[i].is_none()).collect();
        let &[root] = roots.as_slice() else {
            return bad(format!("expected exactly one root link, found {}", roots.len()));
        };

        // Breadth-first from the root; anything unreached sits on a cycle.
        let mut order = Vec::with_capacity(resolved.len());
        let mut frontier = vec![root];
        while let Some(link) = frontier.pop() {
            for (ji, r) in resolved.iter().enumerate() {
                if r.parent == link {
                    order.push(ji);
                    frontier.push(r.child);
                }
            }
        }
        if order.len() != resolved.len() {
            return bad("joint graph has a cycle".into());
        }
        for hand in [&raw.end_effectors.left, &raw.end_effectors.right] {
            find(hand, "end effector")?;
        }
        if raw.base_max_velocity.iter().any(|v| !(*v > 0.0)) {
            return bad("base_max_velocity entries must be positive".into());
        }

        let mut model = RobotModel {
            base_planar: raw.base_planar,
            base_max_velocity: raw.base_max_velocity,
            joints: raw.joints,
            links: raw.links,
            end_effectors: raw.end_effectors,
            self_collision_pairs: Vec::new(),
            pairs_explicit: raw.self_collision_pairs.is_some(),
            root,
            order,
            resolved,
            parent_joint,
            link_index,
            dof_joints,
        };
        model.self_collision_pairs = match raw.self_collision_pairs {
            Some(pairs) => {
                for [a, b] in &pairs {
                    for l in [a, b] {
                        let i = model.link(l)?;
                        if model.links[i].capsule.is_none() {
                            return bad(format!("self-collision link '{l}' has no capsule"));
                        }
                    }
                }
                pairs.into_iter().map(|[a, b]| (a, b)).collect()
            }
            None => model.non_adjacent_capsule_pairs(),
        };
        Ok(model)
    }

    /// Length of `q`.
    pub fn dof(&self) -> usize {
        BASE_DOF + self.dof_joints.len()
    }

    pub fn link(&self, name: &str) -> Result<usize, KinematicsError> {
        self.link_index.get(name).copied().ok_or_else(|| KinematicsError::Parameter(format!("unknown link '{name}'")))
    }

    pub fn root_link(&self) -> &str {
        &self.links[self.root].name
    }

    pub fn end_effector(&self, hand: Hand) -> &str {
        match hand {
            Hand::Left => &self.end_effectors.left,
            Hand::Right => &self.end_effectors.right,
        }
    }

    /// Name of the joint driving coordinate `i` (base coordinates are
    /// `base_x`, `base_y`, `base_yaw`).
    pub fn coordinate_name(&self, i: usize) -> &str {
        match i {
            0 => "base_x",
            1 => "base_y",
            2 => "base_yaw",
            _ => &self.joints[self.dof_joints[i - BASE_DOF]].name,
        }
    }

    /// Column in `q` driven by the named joint.
    pub fn joint_coordinate(&self, joint: &str) -> Result<usize, KinematicsError> {
        let ji = self.joints.iter().position(|j| j.name == joint);
        ji.and_then(|ji| self.resolved[ji].dof)
            .ok_or_else(|| KinematicsError::Parameter(format!("'{joint}' is not a moving joint")))
    }

    /// Position limits per coordinate; base coordinates are unbounded.
    pub fn position_limits(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.dof();
        let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(n, f64::INFINITY);
        for (k, &ji) in self.dof_joints.iter().enumerate() {
            lo[BASE_DOF + k] = self.joints[ji].limits[0];
            hi[BASE_DOF + k] = self.joints[ji].limits[1];
        }
        (lo, hi)
    }

    /// Speed limit per coordinate; zero for a locked base.
    pub fn velocity_limits(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dof());
        if self.base_planar {
            for i in 0..BASE_DOF {
                v[i] = self.base_max_velocity[i];
            }
        }
        for (k, &ji) in self.dof_joints.iter().enumerate() {
            v[BASE_DOF + k] = self.joints[ji].max_velocity;
        }
        v
    }

    /// Clamps joint coordinates into their limits; base coordinates pass through.
    pub fn clamp(&self, q: &DVector<f64>) -> DVector<f64> {
        let (lo, hi) = self.position_limits();
        DVector::from_iterator(q.len(), q.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])))
    }

    pub fn check_configuration(&self, q: &DVector<f64>) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::Parameter(format!("configuration has {} entries, model needs {}", q.len(), self.dof())));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(KinematicsError::Parameter("configuration is not finite".into()));
        }
        Ok(())
    }

    /// Coordinates that move `link`, nearest first.
    pub(crate) fn ancestor_joints(&self, link: usize) -> impl Iterator<Item = usize> + '_ {
        let mut cur = link;
        std::iter::from_fn(move || {
            let j = self.parent_joint[cur]?;
            cur = self.resolved[j].parent;
            Some(j)
        })
    }

    /// Every pair of capsule-bearing links, minus pairs where one link is the
    /// nearest capsule-bearing ancestor of the other. Ordered by link index.
    fn non_adjacent_capsule_pairs(&self) -> Vec<(String, String)> {
        let capsule_parent = |link: usize| {
            let mut cur = link;
            while let Some(j) = self.parent_joint[cur] {
                cur = self.resolved[j].parent;
                if self.links[cur].capsule.is_some() {
                    return Some(cur);
                }
            }
            None
        };
        let with_capsule: Vec<usize> = (0..self.links.len()).filter(|&i| self.links[i].capsule.is_some()).collect();
        let mut pairs = Vec::new();
        for (k, &a) in with_capsule.iter().enumerate() {
            for &b in &with_capsule[k + 1..] {
                if capsule_parent(a) != Some(b) && capsule_parent(b) != Some(a) {
                    pairs.push((self.links[a].name.clone(), self.links[b].name.clone()));
                }
            }
        }
        pairs
    }
}
