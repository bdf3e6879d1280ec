//! Built-in scenes used when no scene file is given.

use volquad::scenes::{AnalyticField, ColorProfile, FieldKind, RayRig, SceneSpec, SegmentSpec};
use volquad::{FarPlane, RaySegment};

/// A scene with its field already validated.
#[derive(Debug, Clone)]
pub struct Scene {
    pub field: AnalyticField,
    pub segment: RaySegment,
    pub far_plane: FarPlane,
    pub rig: Option<RayRig>,
}

impl Scene {
    pub fn from_spec(spec: &SceneSpec) -> volquad::Result<Self> {
        Ok(Self { field: spec.field()?, segment: spec.segment()?, far_plane: spec.far_plane, rig: spec.rig.clone() })
    }

    pub fn to_spec(&self) -> SceneSpec {
        SceneSpec {
            far_plane: self.far_plane,
            segment: SegmentSpec { near: self.segment.near(), far: self.segment.far() },
            field: self.field.field.clone(),
            color: self.field.color.clone(),
            rig: self.rig.clone(),
        }
    }
}

fn scene(field: FieldKind, color: ColorProfile, near: f64, far: f64, far_plane: FarPlane, rig: Option<RayRig>) -> Scene {
    Scene {
        field: AnalyticField::new(field, color).expect("built-in scene is valid"),
        segment: RaySegment::new(near, far).expect("built-in segment is valid"),
        far_plane,
        rig,
    }
}

/// Smooth bump, off-centre so that opacity and its slope differ at the two
/// ends of the segment (a symmetric, vanishing profile would make the
/// quadrature errors converge far faster than the generic rate).
pub fn gaussian_bump() -> Scene {
    scene(
        FieldKind::GaussianBump { amplitude: 3.0, center: 1.2, width: 0.5 },
        ColorProfile::Uniform { value: vec![1.0] },
        0.0,
        2.0,
        FarPlane::Open,
        None,
    )
}

/// Steep wall with a color ramp behind it.
pub fn logistic_wall() -> Scene {
    scene(
        FieldKind::LogisticStep { amplitude: 10.0, steepness: 40.0, center: 1.0 },
        ColorProfile::Gradient { start: 0.0, end: 2.0, from: vec![0.0], to: vec![1.0] },
        0.0,
        2.0,
        FarPlane::Opaque,
        None,
    )
}

/// A wall steep enough that most of the mass lands in one or two bins, where
/// the in-bin density is far from uniform.
pub fn steep_sampler_fixture() -> Scene {
    scene(
        FieldKind::LogisticStep { amplitude: 50.0, steepness: 40.0, center: 1.0 },
        ColorProfile::Uniform { value: vec![1.0] },
        0.0,
        2.0,
        FarPlane::Open,
        None,
    )
}

/// Nearly transparent uniform medium: the in-bin density is almost flat, so
/// even the surrogate sampler is accurate.
pub fn thin_uniform_fixture() -> Scene {
    scene(
        FieldKind::ConstantSlab { tau: 1e-3, start: 0.0, end: 1.0 },
        ColorProfile::Uniform { value: vec![1.0] },
        0.0,
        1.0,
        FarPlane::Open,
        None,
    )
}

/// Logistic wall seen at a range of grazing angles.
pub fn grazing_wall() -> Scene {
    let angles = (0..24).map(|i| (5.0 + 85.0 * i as f64 / 23.0).to_radians()).collect();
    scene(
        FieldKind::LogisticStep { amplitude: 10.0, steepness: 40.0, center: 1.0 },
        ColorProfile::Gradient { start: 0.0, end: 2.0, from: vec![0.0], to: vec![1.0] },
        0.0,
        2.0,
        FarPlane::Opaque,
        Some(RayRig::Grazing { amplitude: 10.0, steepness: 40.0, surface_offset: 1.0, angles, window: 1.0 }),
    )
}
