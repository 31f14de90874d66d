//! Rigid poses and primitive-shape collision queries.
//!
//! Every shape is treated as a convex core (point, segment or box) swept by a
//! ball: a sphere is a point core, a capsule a segment core, a box a box core
//! with a zero sweep radius. Inflating a shape by a margin grows the sweep
//! radius, so two shapes collide exactly when the distance between their cores
//! is at most the sum of their sweep radii.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rigid transform: position in meters plus a unit-quaternion orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose(pub Isometry3<f64>);

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose(Isometry3::identity())
    }

    pub fn from_parts(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose(Isometry3::from_parts(Translation3::from(position), orientation))
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose(Isometry3::translation(x, y, z))
    }

    /// Pure rotation about the z axis.
    pub fn rot_z(angle: f64) -> Self {
        Pose(Isometry3::rotation(Vector3::z() * angle))
    }

    /// Planar pose: translation in the xy plane plus heading about z.
    pub fn planar(x: f64, y: f64, theta: f64) -> Self {
        Pose::from_parts(
            Vector3::new(x, y, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta),
        )
    }

    pub fn from_rpy(position: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Pose::from_parts(position, UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    pub fn position(&self) -> Vector3<f64> {
        self.0.translation.vector
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.0.rotation
    }

    /// `self` followed by `other`, with `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut iso = self.0 * other.0;
        iso.rotation.renormalize();
        Pose(iso)
    }

    pub fn inverse(&self) -> Pose {
        Pose(self.0.inverse())
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.0 * Point3::from(*p)).coords
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.rotation * v
    }

    /// Translation distance and rotation angle between two poses.
    pub fn error_to(&self, other: &Pose) -> (f64, f64) {
        let dp = (other.position() - self.position()).norm();
        let dr = self.orientation().angle_to(&other.orientation());
        (dp, dr)
    }

    /// Bit pattern of the pose components, used as an exact cache key.
    pub fn key(&self) -> [u64; 7] {
        let t = self.position();
        let q = self.orientation();
        [
            t.x.to_bits(),
            t.y.to_bits(),
            t.z.to_bits(),
            q.w.to_bits(),
            q.i.to_bits(),
            q.j.to_bits(),
            q.k.to_bits(),
        ]
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    #[serde(default)]
    position: [f64; 3],
    /// `[w, x, y, z]`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quaternion: Option<[f64; 4]>,
    /// Roll, pitch, yaw in degrees (fixed-axis x, y, z).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rpy_deg: Option<[f64; 3]>,
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let t = self.position();
        let q = self.orientation();
        PoseRepr {
            position: [t.x, t.y, t.z],
            quaternion: Some([q.w, q.i, q.j, q.k]),
            rpy_deg: None,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PoseRepr::deserialize(d)?;
        let position = Vector3::from(repr.position);
        let orientation = match (repr.quaternion, repr.rpy_deg) {
            (Some(_), Some(_)) => {
                return Err(D::Error::custom("pose has both `quaternion` and `rpy_deg`"))
            }
            (Some([w, x, y, z]), None) => {
                let q = nalgebra::Quaternion::new(w, x, y, z);
                if q.norm() < 1e-9 {
                    return Err(D::Error::custom("zero quaternion"));
                }
                UnitQuaternion::from_quaternion(q)
            }
            (None, Some([r, p, y])) => {
                UnitQuaternion::from_euler_angles(r.to_radians(), p.to_radians(), y.to_radians())
            }
            (None, None) => UnitQuaternion::identity(),
        };
        Ok(Pose::from_parts(position, orientation))
    }
}

/// Geometric primitive. Capsules run along their local z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    Capsule { radius: f64, length: f64 },
    Box { half_extents: Vector3<f64> },
}

/// A primitive placed in some parent frame, inflated by `margin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub local_pose: Pose,
    pub margin: f64,
}

impl Shape {
    pub fn sphere(radius: f64) -> Self {
        Shape::new(ShapeKind::Sphere { radius })
    }

    pub fn capsule(radius: f64, length: f64) -> Self {
        Shape::new(ShapeKind::Capsule { radius, length })
    }

    pub fn cuboid(hx: f64, hy: f64, hz: f64) -> Self {
        Shape::new(ShapeKind::Box {
            half_extents: Vector3::new(hx, hy, hz),
        })
    }

    fn new(kind: ShapeKind) -> Self {
        Shape {
            kind,
            local_pose: Pose::identity(),
            margin: 0.0,
        }
    }

    pub fn at(mut self, local_pose: Pose) -> Self {
        self.local_pose = local_pose;
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = match self.kind {
            ShapeKind::Sphere { radius } => radius > 0.0,
            ShapeKind::Capsule { radius, length } => radius > 0.0 && length > 0.0,
            ShapeKind::Box { half_extents } => half_extents.iter().all(|&h| h > 0.0),
        };
        if !dims_ok {
            return Err(Error::Invalid(format!("shape dimensions must be positive: {:?}", self.kind)));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Invalid(format!("negative shape margin {}", self.margin)));
        }
        Ok(())
    }

    /// Resolve the shape into world coordinates given its parent frame pose.
    pub fn place(&self, parent: &Pose) -> PlacedShape {
        let pose = parent.compose(&self.local_pose);
        let (core, sweep) = match self.kind {
            ShapeKind::Sphere { radius } => (Core::Point(pose.position()), radius),
            ShapeKind::Capsule { radius, length } => {
                let half = Vector3::new(0.0, 0.0, 0.5 * length);
                let a = pose.transform_point(&-half);
                let b = pose.transform_point(&half);
                (Core::Segment(a, b), radius)
            }
            ShapeKind::Box { half_extents } => (
                Core::Box {
                    pose: pose.0,
                    half: half_extents,
                },
                0.0,
            ),
        };
        let radius = sweep + self.margin;
        let (center, core_extent) = match &core {
            Core::Point(p) => (*p, 0.0),
            Core::Segment(a, b) => (0.5 * (a + b), 0.5 * (b - a).norm()),
            Core::Box { pose, half } => (pose.translation.vector, half.norm()),
        };
        PlacedShape {
            core,
            radius,
            center,
            bound: core_extent + radius,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeRepr {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_extents: Option<[f64; 3]>,
    #[serde(default)]
    pose: Pose,
    #[serde(default)]
    margin: f64,
}

impl Serialize for Shape {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut repr = ShapeRepr {
            kind: String::new(),
            radius: None,
            length: None,
            half_extents: None,
            pose: self.local_pose,
            margin: self.margin,
        };
        match self.kind {
            ShapeKind::Sphere { radius } => {
                repr.kind = "sphere".into();
                repr.radius = Some(radius);
            }
            ShapeKind::Capsule { radius, length } => {
                repr.kind = "capsule".into();
                repr.radius = Some(radius);
                repr.length = Some(length);
            }
            ShapeKind::Box { half_extents } => {
                repr.kind = "box".into();
                repr.half_extents = Some(half_extents.into());
            }
        }
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Shape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ShapeRepr::deserialize(d)?;
        let missing = |f: &str| D::Error::custom(format!("{} shape needs `{f}`", r.kind));
        let kind = match r.kind.as_str() {
            "sphere" => ShapeKind::Sphere {
                radius: r.radius.ok_or_else(|| missing("radius"))?,
            },
            "capsule" => ShapeKind::Capsule {
                radius: r.radius.ok_or_else(|| missing("radius"))?,
                length: r.length.ok_or_else(|| missing("length"))?,
            },
            "box" => ShapeKind::Box {
                half_extents: r.half_extents.ok_or_else(|| missing("half_extents"))?.into(),
            },
            other => return Err(D::Error::custom(format!("unknown shape type `{other}`"))),
        };
        let shape = Shape {
            kind,
            local_pose: r.pose,
            margin: r.margin,
        };
        shape.validate().map_err(D::Error::custom)?;
        Ok(shape)
    }
}

#[derive(Debug, Clone, Copy)]
enum Core {
    Point(Vector3<f64>),
    Segment(Vector3<f64>, Vector3<f64>),
    Box { pose: Isometry3<f64>, half: Vector3<f64> },
}

/// A shape resolved into world coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PlacedShape {
    core: Core,
    radius: f64,
    center: Vector3<f64>,
    bound: f64,
}

impl PlacedShape {
    /// Distance between the surfaces; negative values are clipped to zero.
    pub fn distance(&self, other: &PlacedShape) -> f64 {
        (core_distance(&self.core, &other.core) - self.radius - other.radius).max(0.0)
    }

    /// True iff the inflated shapes touch or overlap.
    pub fn collides(&self, other: &PlacedShape) -> bool {
        let reach = self.bound + other.bound;
        if (self.center - other.center).norm_squared() > reach * reach {
            return false;
        }
        core_distance(&self.core, &other.core) <= self.radius + other.radius
    }

    /// Support distance along a unit direction.
    pub fn support(&self, dir: &Vector3<f64>) -> f64 {
        let core = match &self.core {
            Core::Point(p) => p.dot(dir),
            Core::Segment(a, b) => a.dot(dir).max(b.dot(dir)),
            Core::Box { pose, half } => {
                let local = pose.rotation.inverse() * dir;
                pose.translation.vector.dot(dir)
                    + half.x * local.x.abs()
                    + half.y * local.y.abs()
                    + half.z * local.z.abs()
            }
        };
        core + self.radius
    }

    pub fn center(&self) -> Vector3<f64> {
        self.center
    }
}

/// A set of world-placed obstacle shapes.
#[derive(Debug, Clone, Default)]
pub struct CollisionWorld {
    shapes: Vec<PlacedShape>,
    owners: Vec<String>,
}

impl CollisionWorld {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, owner: impl Into<String>, shape: PlacedShape) {
        self.shapes.push(shape);
        self.owners.push(owner.into());
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn shapes(&self) -> &[PlacedShape] {
        &self.shapes
    }

    pub fn owners(&self) -> &[String] {
        &self.owners
    }

    pub fn collides(&self, shape: &PlacedShape) -> bool {
        self.shapes.iter().any(|s| s.collides(shape))
    }

    /// Owner of the first world shape touching `shape`.
    pub fn first_contact(&self, shape: &PlacedShape) -> Option<&str> {
        self.shapes
            .iter()
            .position(|s| s.collides(shape))
            .map(|i| self.owners[i].as_str())
    }
}

pub fn shapes_collide(a: &Shape, a_pose: &Pose, b: &Shape, b_pose: &Pose) -> bool {
    a.place(a_pose).collides(&b.place(b_pose))
}

fn core_distance(a: &Core, b: &Core) -> f64 {
    use Core::*;
    match (a, b) {
        (Point(p), Point(q)) => (p - q).norm(),
        (Point(p), Segment(s0, s1)) | (Segment(s0, s1), Point(p)) => point_segment(p, s0, s1),
        (Segment(a0, a1), Segment(b0, b1)) => segment_segment(a0, a1, b0, b1),
        (Point(p), Box { pose, half }) | (Box { pose, half }, Point(p)) => {
            let local = pose.inverse_transform_point(&Point3::from(*p)).coords;
            point_box_sq(&local, half).sqrt()
        }
        (Segment(s0, s1), Box { pose, half }) | (Box { pose, half }, Segment(s0, s1)) => {
            let a = pose.inverse_transform_point(&Point3::from(*s0)).coords;
            let b = pose.inverse_transform_point(&Point3::from(*s1)).coords;
            segment_box_sq(&a, &b, half).sqrt()
        }
        (Box { pose: pa, half: ha }, Box { pose: pb, half: hb }) => box_box(pa, ha, pb, hb),
    }
}

fn point_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * t - p).norm()
}

fn segment_segment(p1: &Vector3<f64>, q1: &Vector3<f64>, p2: &Vector3<f64>, q2: &Vector3<f64>) -> f64 {
    // Closest points of two segments (Ericson, Real-Time Collision Detection 5.1.9).
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let eps = 1e-15;
    let (s, t);
    if a <= eps && e <= eps {
        return r.norm();
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > eps * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = p1 + d1 * s;
    let c2 = p2 + d2 * t;
    (c1 - c2).norm()
}

fn point_box_sq(p: &Vector3<f64>, half: &Vector3<f64>) -> f64 {
    (0..3)
        .map(|i| {
            let excess = p[i].abs() - half[i];
            if excess > 0.0 {
                excess * excess
            } else {
                0.0
            }
        })
        .sum()
}

/// Squared distance from segment `a`-`b` to an axis-aligned box centered at the
/// origin. The squared distance along the segment is a convex piecewise
/// quadratic whose pieces change only where a coordinate crosses a slab plane,
/// so the minimum is found exactly by minimizing each piece.
fn segment_box_sq(a: &Vector3<f64>, b: &Vector3<f64>, half: &Vector3<f64>) -> f64 {
    let d = b - a;
    let mut breaks = [0.0f64; 8];
    let mut n = 0;
    breaks[n] = 0.0;
    n += 1;
    breaks[n] = 1.0;
    n += 1;
    for i in 0..3 {
        if d[i].abs() > 1e-300 {
            for plane in [-half[i], half[i]] {
                let t = (plane - a[i]) / d[i];
                if t > 0.0 && t < 1.0 {
                    breaks[n] = t;
                    n += 1;
                }
            }
        }
    }
    let ts = &mut breaks[..n];
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let at = |t: f64| point_box_sq(&(a + d * t), half);
    let mut best = at(0.0).min(at(1.0));
    for w in ts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 - t0 <= 0.0 {
            continue;
        }
        let tm = 0.5 * (t0 + t1);
        let pm = a + d * tm;
        // Quadratic sum over the axes that are outside their slab on this piece.
        let mut outside = [(0.0, 0.0); 3];
        let mut m = 0;
        let (mut qa, mut qb) = (0.0, 0.0);
        for i in 0..3 {
            let offset = if pm[i] > half[i] {
                a[i] - half[i]
            } else if pm[i] < -half[i] {
                a[i] + half[i]
            } else {
                continue;
            };
            outside[m] = (offset, d[i]);
            m += 1;
            qa += d[i] * d[i];
            qb += 2.0 * offset * d[i];
        }
        let t = if qa > 0.0 { (-qb / (2.0 * qa)).clamp(t0, t1) } else { t0 };
        let piece: f64 = outside[..m].iter().map(|(o, di)| (o + di * t).powi(2)).sum();
        best = best.min(piece);
        if best == 0.0 {
            break;
        }
    }
    best
}

const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

fn box_corners(pose: &Isometry3<f64>, half: &Vector3<f64>) -> [Vector3<f64>; 8] {
    let mut out = [Vector3::zeros(); 8];
    for (i, c) in out.iter_mut().enumerate() {
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
        let local = Point3::new(sx * half.x, sy * half.y, sz * half.z);
        *c = (pose * local).coords;
    }
    out
}

/// Two convex polyhedra intersect iff an edge of one meets the other (or one
/// contains the other, in which case its edges lie inside), and when disjoint
/// their closest points lie on some edge, so the minimum over all edge-to-box
/// distances is the exact box-box distance.
fn box_box(pa: &Isometry3<f64>, ha: &Vector3<f64>, pb: &Isometry3<f64>, hb: &Vector3<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for (edges_of, e_half, other, o_half) in [(pa, ha, pb, hb), (pb, hb, pa, ha)] {
        let corners = box_corners(edges_of, e_half);
        let local: Vec<Vector3<f64>> = corners
            .iter()
            .map(|c| other.inverse_transform_point(&Point3::from(*c)).coords)
            .collect();
        for (i, j) in BOX_EDGES {
            best = best.min(segment_box_sq(&local[i], &local[j], o_half));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best.sqrt()
}
