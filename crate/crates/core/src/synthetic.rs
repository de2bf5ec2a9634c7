//! Synthetic fully colored clouds for desk-scale experiments: a sphere, a
//! flat patch and a two-plane dihedral, colored by low-frequency cosine
//! fields with an optional sharp edge.
//!
//! Coordinates are rounded to `f32` so a cloud survives a PLY roundtrip
//! unchanged.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{ColorPoint, ColorPointCloud, Point3, Rgb};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Square patch in the z = 0 plane centered at the origin.
    Plane { side: f64 },
    /// Two square half-planes meeting along the y axis at `angle_deg`.
    Dihedral { side: f64, angle_deg: f64 },
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere { .. } => "sphere",
            Shape::Plane { .. } => "plane",
            Shape::Dihedral { .. } => "dihedral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorField {
    /// Spatial frequency in cycles per unit length.
    pub frequency: f64,
    /// Peak deviation from mid-gray per channel.
    pub amplitude: f64,
    /// Adds a step of this height across the plane x = 0 when set.
    pub edge_step: Option<f64>,
}

impl Default for ColorField {
    fn default() -> Self {
        ColorField {
            frequency: 0.05,
            amplitude: 90.0,
            edge_step: None,
        }
    }
}

impl ColorField {
    pub fn color_at(&self, p: Point3) -> Rgb {
        // Each channel varies along its own direction with its own phase.
        const DIRS: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 0.8, 0.6], [0.6, -0.48, 0.64]];
        const PHASE: [f64; 3] = [0.0, 1.3, 2.6];
        let step = match self.edge_step {
            Some(h) if p[0] > 0.0 => h,
            Some(h) => -h,
            None => 0.0,
        } / 2.0;
        let mut out = [0.0; 3];
        for c in 0..3 {
            let t: f64 = (0..3).map(|a| DIRS[c][a] * p[a]).sum();
            let sign = if c == 1 { -1.0 } else { 1.0 };
            out[c] = 127.5 + self.amplitude * (2.0 * PI * self.frequency * t + PHASE[c]).cos() + sign * step;
        }
        Rgb::from_f64(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub shape: Shape,
    pub points: usize,
    pub color: ColorField,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn sphere(points: usize, seed: u64) -> Self {
        SyntheticConfig {
            shape: Shape::Sphere { radius: 10.0 },
            points,
            color: ColorField::default(),
            seed,
        }
    }
}

fn round_f32(p: Point3) -> Point3 {
    p.map(|c| c as f32 as f64)
}

pub fn generate(config: &SyntheticConfig) -> Result<ColorPointCloud> {
    if config.points == 0 {
        return Err(Error::InvalidConfig("point count must be positive".into()));
    }
    let size_ok = match config.shape {
        Shape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
        Shape::Plane { side } => side > 0.0 && side.is_finite(),
        Shape::Dihedral { side, angle_deg } => {
            side > 0.0 && side.is_finite() && angle_deg > 0.0 && angle_deg < 360.0
        }
    };
    if !size_ok {
        return Err(Error::InvalidConfig(format!("invalid shape parameters: {:?}", config.shape)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let points = (0..config.points)
        .map(|_| {
            let p = round_f32(sample(config.shape, &mut rng));
            ColorPoint::original(p, config.color.color_at(p))
        })
        .collect();
    let provenance = format!(
        "synthetic {} n={} seed={}",
        config.shape.name(),
        config.points,
        config.seed
    );
    Ok(ColorPointCloud::new(points, provenance))
}

fn sample(shape: Shape, rng: &mut ChaCha8Rng) -> Point3 {
    match shape {
        Shape::Sphere { radius } => {
            // Uniform on the sphere: uniform height and uniform azimuth.
            let z: f64 = rng.random_range(-1.0..=1.0);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let r = (1.0 - z * z).max(0.0).sqrt();
            [radius * r * phi.cos(), radius * r * phi.sin(), radius * z]
        }
        Shape::Plane { side } => {
            let h = side / 2.0;
            [rng.random_range(-h..h), rng.random_range(-h..h), 0.0]
        }
        Shape::Dihedral { side, angle_deg } => {
            let h = side / 2.0;
            let u: f64 = rng.random_range(-h..h);
            let y: f64 = rng.random_range(-h..h);
            if u < 0.0 {
                [u, y, 0.0]
            } else {
                // The second face leaves the fold at `angle_deg` from the first.
                let a = PI - angle_deg.to_radians();
                [u * a.cos(), y, u * a.sin()]
            }
        }
    }
}

/// The clouds used for acceptance and benchmarks, scaled by `points`.
pub fn standard_suite(points: usize, seed: u64) -> Vec<SyntheticConfig> {
    let edge = ColorField {
        edge_step: Some(80.0),
        ..ColorField::default()
    };
    vec![
        SyntheticConfig::sphere(points, seed),
        SyntheticConfig {
            shape: Shape::Plane { side: 24.0 },
            points,
            color: ColorField::default(),
            seed: seed.wrapping_add(1),
        },
        SyntheticConfig {
            shape: Shape::Dihedral { side: 24.0, angle_deg: 120.0 },
            points,
            color: edge,
            seed: seed.wrapping_add(2),
        },
        SyntheticConfig {
            shape: Shape::Sphere { radius: 10.0 },
            points,
            color: edge,
            seed: seed.wrapping_add(3),
        },
    ]
}
