//! X-ray rendering of a Blocky skeleton.
//!
//! The skeleton is a union of eight superellipsoid bones (four main bones on a
//! circular spine arc, four secondary limb bones at the spine ends). Images are
//! produced by marching orthographic rays along the view axis, integrating the
//! chord length spent inside bone material and mapping it through
//! Beer-Lambert attenuation `1 - exp(-mu * length)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::blocky::BlockyParams;
use crate::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Shape parameters map onto `[0, MAX_SHAPE]`.
pub const MAX_SHAPE: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoneRole {
    MainBone,
    SecondaryBone,
}

/// One superellipsoid primitive, expressed in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bone {
    pub center: Vec3,
    pub half_extents: Vec3,
    /// Shape parameter in `[0, 1.6]`.
    pub shape: f64,
    /// Rotation of the bone about the body z axis (radians).
    pub heading: f64,
    pub role: BoneRole,
}

/// Eight bones plus the rigid body-to-world transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bones: Vec<Bone>,
    /// Body-to-world rotation.
    pub rotation: Mat3,
    pub translation: Vec3,
}

/// Fixed skeleton proportions (scene units at `block_scale = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonGeometry {
    pub main_half_extent: f64,
    pub spine_spacing: f64,
    pub limb_half_extents: Vec3,
    /// Distance of limb centres from the spine axis.
    pub limb_lateral: f64,
    /// Along-axis offset of a limb from its spine-end bone when fully retracted.
    pub limb_retracted: f64,
    /// Additional along-axis travel between `arm_pos = 0` and `arm_pos = 1`.
    pub limb_stroke: f64,
}

impl Default for SkeletonGeometry {
    fn default() -> Self {
        Self {
            main_half_extent: 0.3,
            spine_spacing: 0.62,
            limb_half_extents: [0.24, 0.2, 0.2],
            limb_lateral: 0.5,
            limb_retracted: -0.4,
            limb_stroke: 0.7,
        }
    }
}

/// Body-to-world rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn pose_rotation(pitch: f64, yaw: f64, roll: f64) -> Mat3 {
    let (sa, ca) = (libm::sin(yaw), libm::cos(yaw));
    let (sb, cb) = (libm::sin(pitch), libm::cos(pitch));
    let (sc, cc) = (libm::sin(roll), libm::cos(roll));
    [
        [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
        [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
        [-sb, cb * sc, cb * cc],
    ]
}

fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

fn norm(v: Vec3) -> f64 {
    libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

/// Point on a planar arc of curvature `kappa` at arc length `s`, starting at
/// the origin heading along +x, together with the tangent angle.
fn arc_point(kappa: f64, s: f64) -> (f64, f64, f64) {
    let theta = kappa * s;
    if libm::fabs(theta) < 1e-12 {
        return (s, 0.5 * kappa * s * s, theta);
    }
    let half = libm::sin(0.5 * theta);
    (libm::sin(theta) / kappa, 2.0 * half * half / kappa, theta)
}

/// Exponent of the secondary bones: the main exponent moved by `sphere_diff`
/// away from the nearer end of the nominal range, clamped to `[0, 1.6]`.
pub fn secondary_shape(bone_shape: f64, sphere_diff: f64) -> f64 {
    let moved = if bone_shape >= 0.5 { bone_shape - sphere_diff } else { bone_shape + sphere_diff };
    moved.clamp(0.0, MAX_SHAPE)
}

pub fn build_scene(params: &BlockyParams) -> Scene {
    build_scene_with(params, &SkeletonGeometry::default())
}

/// Lays out the eight bones for `params`.
///
/// Main bones sit at arc lengths `(i - 1.5) * spacing` on an arc of curvature
/// `spine_bend / block_scale`, recentred on their mean. Two limbs hang off each
/// spine end, one either side of the axis, pushed along the outward tangent by
/// `limb_retracted + arm_pos * limb_stroke`.
pub fn build_scene_with(params: &BlockyParams, geo: &SkeletonGeometry) -> Scene {
    let scale = params.block_scale;
    let kappa = params.spine_bend / scale;
    let spacing = geo.spine_spacing * scale;
    let main_shape = params.bone_shape.clamp(0.0, MAX_SHAPE);
    let limb_shape = secondary_shape(params.bone_shape, params.sphere_diff);

    let mut spine = [(0.0, 0.0, 0.0); 4];
    for (i, slot) in spine.iter_mut().enumerate() {
        *slot = arc_point(kappa, (i as f64 - 1.5) * spacing);
    }
    let cx = spine.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let cy = spine.iter().map(|p| p.1).sum::<f64>() / 4.0;

    let h = geo.main_half_extent * scale;
    let mut bones: Vec<Bone> = spine
        .iter()
        .map(|&(x, y, theta)| Bone {
            center: [x - cx, y - cy, 0.0],
            half_extents: [h, h, h],
            shape: main_shape,
            heading: theta,
            role: BoneRole::MainBone,
        })
        .collect();

    let along = (geo.limb_retracted + params.arm_pos * geo.limb_stroke) * scale;
    let lateral = geo.limb_lateral * scale;
    let limb_half = [
        geo.limb_half_extents[0] * scale,
        geo.limb_half_extents[1] * scale,
        geo.limb_half_extents[2] * scale,
    ];
    for (end, outward) in [(3usize, 1.0f64), (0usize, -1.0f64)] {
        let anchor = bones[end];
        let theta = anchor.heading;
        let tangent = [outward * libm::cos(theta), outward * libm::sin(theta)];
        let normal = [-libm::sin(theta), libm::cos(theta)];
        for side in [1.0f64, -1.0] {
            bones.push(Bone {
                center: [
                    anchor.center[0] + side * lateral * normal[0] + along * tangent[0],
                    anchor.center[1] + side * lateral * normal[1] + along * tangent[1],
                    0.0,
                ],
                half_extents: limb_half,
                shape: limb_shape,
                heading: theta,
                role: BoneRole::SecondaryBone,
            });
        }
    }

    Scene {
        bones,
        rotation: pose_rotation(params.pitch, params.yaw, params.roll),
        translation: [params.offset_x, params.offset_y, 0.0],
    }
}

/// Implicit-power exponent for a shape parameter: 2 (sphere) to 8 (near cuboid).
pub fn implicit_power(shape: f64) -> f64 {
    2.0 + 6.0 * shape.clamp(0.0, 1.0)
}

/// Fractional narrowing of the far (+x) end for pointed shapes (`shape > 1`).
pub fn taper(shape: f64) -> f64 {
    0.8 * ((shape - 1.0) / (MAX_SHAPE - 1.0)).clamp(0.0, 1.0)
}

impl Bone {
    /// Transforms a body-frame point into this bone's local frame.
    #[inline]
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        let (s, c) = (libm::sin(self.heading), libm::cos(self.heading));
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    }

    /// Signed distance bound from a local-frame point.
    ///
    /// The superellipsoid term is `min(h) * (||q / h||_p - 1)`; since
    /// `||.||_p <= ||.||_2` for `p >= 2` this is 1-Lipschitz and vanishes on
    /// the surface. Pointed bones intersect it with four exact half-space
    /// distances that taper the cross-section linearly along local x.
    #[inline]
    pub fn local_distance(&self, q: Vec3) -> f64 {
        let h = self.half_extents;
        let p = implicit_power(self.shape);
        let u = [libm::fabs(q[0]) / h[0], libm::fabs(q[1]) / h[1], libm::fabs(q[2]) / h[2]];
        let m = u[0].max(u[1]).max(u[2]);
        let n = if m == 0.0 {
            0.0
        } else {
            let sum = libm::pow(u[0] / m, p) + libm::pow(u[1] / m, p) + libm::pow(u[2] / m, p);
            m * libm::pow(sum, 1.0 / p)
        };
        let hmin = h[0].min(h[1]).min(h[2]);
        let mut d = hmin * (n - 1.0);
        let tau = taper(self.shape);
        if tau > 0.0 {
            for (axis, ext) in [(1usize, h[1]), (2usize, h[2])] {
                let k = ext * tau / (2.0 * h[0]);
                let inv = 1.0 / libm::sqrt(1.0 + k * k);
                let base = k * (q[0] + h[0]) - ext;
                d = d.max((q[axis] + base) * inv).max((-q[axis] + base) * inv);
            }
        }
        d
    }

    fn bounding_radius(&self) -> f64 {
        norm(self.half_extents)
    }
}

impl Scene {
    #[inline]
    pub fn to_body(&self, p: Vec3) -> Vec3 {
        let d = [p[0] - self.translation[0], p[1] - self.translation[1], p[2] - self.translation[2]];
        mat_t_vec(&self.rotation, d)
    }

    pub fn bone_center_world(&self, bone: &Bone) -> Vec3 {
        let c = mat_vec(&self.rotation, bone.center);
        [c[0] + self.translation[0], c[1] + self.translation[1], c[2] + self.translation[2]]
    }

    fn check(&self) -> Result<()> {
        for (i, b) in self.bones.iter().enumerate() {
            if !b.half_extents.iter().all(|&e| e.is_finite() && e > 0.0) {
                return Err(Error::Render(format!("bone {i} has a degenerate extent")));
            }
            if !(b.center.iter().all(|c| c.is_finite()) && b.shape.is_finite() && b.heading.is_finite()) {
                return Err(Error::Render(format!("bone {i} has non-finite placement")));
            }
        }
        Ok(())
    }
}

/// Signed distance (negative inside) from a world point to the union of bones.
pub fn sdf(point: Vec3, scene: &Scene) -> f64 {
    let body = scene.to_body(point);
    scene
        .bones
        .iter()
        .map(|b| b.local_distance(b.to_local(body)))
        .fold(f64::INFINITY, f64::min)
}

/// Ray-marching and compositing controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub resolution: u32,
    /// Attenuation coefficient per scene unit.
    pub mu: f64,
    /// Width and height of the orthographic view (scene units).
    pub view_extent: f64,
    pub max_steps: u32,
    pub hit_epsilon: f64,
    pub chord_step: f64,
    /// Subpixel grid size per axis (1 = off).
    pub supersample: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            resolution: 128,
            mu: 1.2,
            view_extent: 3.6,
            max_steps: 192,
            hit_epsilon: 1e-3,
            chord_step: 0.01,
            supersample: 1,
        }
    }
}

impl RenderSettings {
    pub fn with_resolution(mut self, resolution: u32) -> Self {
        self.resolution = resolution;
        self
    }

    fn check(&self) -> Result<()> {
        if !matches!(self.resolution, 64 | 128 | 256) {
            return Err(Error::Render(format!("resolution {} not in {{64, 128, 256}}", self.resolution)));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Render("mu must be finite and nonnegative".into()));
        }
        if !(self.view_extent > 0.0 && self.chord_step > 0.0 && self.hit_epsilon > 0.0) {
            return Err(Error::Render("view extent, chord step and hit epsilon must be positive".into()));
        }
        if self.supersample == 0 || self.max_steps == 0 {
            return Err(Error::Render("supersample and max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Row-major grayscale attenuation image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct XrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<f32>,
}

impl XrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![0.0; (width * height) as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[(y * self.width + x) as usize]
    }

    /// 8-bit quantisation, rounding to nearest.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_gray8(width: u32, height: u32, data: &[u8]) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::Shape { expected: (width * height) as usize, actual: data.len() });
        }
        Ok(Self { width, height, pixels: data.iter().map(|&b| b as f32 / 255.0).collect() })
    }

    /// Box-filter downsampling by an integer factor.
    pub fn downsample(&self, factor: u32) -> Result<Self> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(Error::Render(format!(
                "cannot downsample {}x{} by {factor}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Self::new(w, h);
        let norm = 1.0 / (factor * factor) as f32;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += self.get(x * factor + dx, y * factor + dy);
                    }
                }
                out.pixels[(y * w + x) as usize] = acc * norm;
            }
        }
        Ok(out)
    }

    pub fn mean_abs_diff(&self, other: &Self) -> f64 {
        let n = self.pixels.len().max(1) as f64;
        self.pixels.iter().zip(&other.pixels).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / n
    }
}

pub fn quantize(v: f32) -> u8 {
    let scaled = v.clamp(0.0, 1.0) * 255.0;
    // round half up; values are nonnegative
    (scaled + 0.5) as u8
}

pub fn render(params: &BlockyParams, settings: &RenderSettings) -> Result<XrayImage> {
    params.validate().map_err(|e| Error::Render(format!("{e}")))?;
    render_scene(&build_scene(params), settings)
}

/// A bone whose bounding sphere meets the current ray, with the ray
/// expressed in the bone's local frame as `origin + t * direction`.
struct Candidate<'a> {
    bone: &'a Bone,
    origin: Vec3,
    direction: Vec3,
}

impl Candidate<'_> {
    #[inline]
    fn distance(&self, t: f64) -> f64 {
        let q = [
            self.origin[0] + t * self.direction[0],
            self.origin[1] + t * self.direction[1],
            self.origin[2] + t * self.direction[2],
        ];
        self.bone.local_distance(q)
    }
}

/// Renders an arbitrary scene.
pub fn render_scene(scene: &Scene, settings: &RenderSettings) -> Result<XrayImage> {
    settings.check()?;
    scene.check()?;
    let res = settings.resolution;
    let mut image = XrayImage::new(res, res);
    let ss = settings.supersample;
    let sub = 1.0 / ss as f64;
    let pixel = settings.view_extent / res as f64;
    let half = 0.5 * settings.view_extent;

    let centers: Vec<(Vec3, f64)> =
        scene.bones.iter().map(|b| (scene.bone_center_world(b), b.bounding_radius())).collect();
    let mut candidates: Vec<Candidate<'_>> = Vec::with_capacity(scene.bones.len());

    for row in 0..res {
        for col in 0..res {
            let mut acc = 0.0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let x = -half + (col as f64 + (sx as f64 + 0.5) * sub) * pixel;
                    let y = half - (row as f64 + (sy as f64 + 0.5) * sub) * pixel;
                    let length = chord_length(scene, &centers, &mut candidates, x, y, settings);
                    acc += 1.0 - libm::exp(-settings.mu * length);
                }
            }
            image.pixels[(row * res + col) as usize] = (acc / (ss * ss) as f64).clamp(0.0, 1.0) as f32;
        }
    }
    Ok(image)
}

/// Material length along the view ray through world `(x, y)`.
fn chord_length<'a>(
    scene: &'a Scene,
    centers: &[(Vec3, f64)],
    candidates: &mut Vec<Candidate<'a>>,
    x: f64,
    y: f64,
    settings: &RenderSettings,
) -> f64 {
    candidates.clear();
    let mut t0 = f64::INFINITY;
    let mut t1 = f64::NEG_INFINITY;
    for (bone, (c, r)) in scene.bones.iter().zip(centers) {
        let d2 = (x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]);
        if d2 <= r * r {
            let w = libm::sqrt(r * r - d2);
            t0 = t0.min(c[2] - w);
            t1 = t1.max(c[2] + w);
            let origin = bone.to_local(scene.to_body([x, y, 0.0]));
            let far = bone.to_local(scene.to_body([x, y, 1.0]));
            let direction = [far[0] - origin[0], far[1] - origin[1], far[2] - origin[2]];
            candidates.push(Candidate { bone, origin, direction });
        }
    }
    if candidates.is_empty() {
        return 0.0;
    }

    // Rays are parallel to world z; bones off the ray line can never be hit,
    // so restricting the distance to candidates keeps the march conservative.
    let field = |t: f64| -> f64 { candidates.iter().map(|c| c.distance(t)).fold(f64::INFINITY, f64::min) };

    let h = settings.chord_step;
    let mut t = t0 - settings.hit_epsilon;
    let mut steps = 0u32;
    let mut length = 0.0;
    while t < t1 && steps < settings.max_steps {
        let d = field(t);
        if d > settings.hit_epsilon {
            t += d;
            steps += 1;
            continue;
        }
        // Fixed-step chord integration until clearly outside again.
        loop {
            let dm = field(t + 0.5 * h);
            if dm < 0.0 {
                length += h;
            }
            t += h;
            if t >= t1 || dm > h {
                break;
            }
        }
    }
    length
}
