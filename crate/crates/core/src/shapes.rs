//! Small library of procedural meshes used as a stand-in training corpus.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point};

/// Shapes used for training.
pub const TRAIN_PRIMITIVES: [&str; 10] = [
    "chair", "table", "lamp", "stool", "cup", "tee", "ell", "stairs", "dumbbell", "ring",
];

/// Shapes kept out of training for evaluation.
pub const HELDOUT_PRIMITIVES: [&str; 5] = ["bench", "shelf", "arch", "desk", "bottle"];

pub fn primitive_names() -> impl Iterator<Item = &'static str> {
    TRAIN_PRIMITIVES.iter().chain(HELDOUT_PRIMITIVES.iter()).copied()
}

/// Axis-aligned box with the given centre and half extents.
pub fn cuboid(center: Point, half: Point) -> Mesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
        vertices.push([
            center[0] + s(0) * half[0],
            center[1] + s(1) * half[1],
            center[2] + s(2) * half[2],
        ]);
    }
    let faces = vec![
        [0, 2, 1], [1, 2, 3], // z-
        [4, 5, 6], [5, 7, 6], // z+
        [0, 1, 4], [1, 5, 4], // y-
        [2, 6, 3], [3, 6, 7], // y+
        [0, 4, 2], [2, 4, 6], // x-
        [1, 3, 5], [3, 7, 5], // x+
    ];
    Mesh { vertices, faces }
}

/// Capped frustum along z with radii `r0` at the bottom and `r1` at the top.
pub fn frustum(center: Point, r0: f64, r1: f64, half_height: f64, segments: usize) -> Mesh {
    let mut vertices = vec![
        [center[0], center[1], center[2] - half_height],
        [center[0], center[1], center[2] + half_height],
    ];
    for j in 0..segments {
        let a = 2.0 * PI * j as f64 / segments as f64;
        let (s, c) = a.sin_cos();
        vertices.push([center[0] + r0 * c, center[1] + r0 * s, center[2] - half_height]);
        vertices.push([center[0] + r1 * c, center[1] + r1 * s, center[2] + half_height]);
    }
    let mut faces = Vec::with_capacity(4 * segments);
    for j in 0..segments {
        let k = (j + 1) % segments;
        let (b0, t0, b1, t1) = (2 + 2 * j, 3 + 2 * j, 2 + 2 * k, 3 + 2 * k);
        faces.push([0, b1, b0]);
        faces.push([1, t0, t1]);
        faces.push([b0, b1, t0]);
        faces.push([t0, b1, t1]);
    }
    Mesh { vertices, faces }
}

pub fn cylinder(center: Point, radius: f64, half_height: f64, segments: usize) -> Mesh {
    frustum(center, radius, radius, half_height, segments)
}

pub fn sphere(center: Point, radius: f64, rings: usize, segments: usize) -> Mesh {
    let mut vertices = Vec::new();
    for i in 0..=rings {
        let theta = PI * i as f64 / rings as f64;
        for j in 0..segments {
            let phi = 2.0 * PI * j as f64 / segments as f64;
            vertices.push([
                center[0] + radius * theta.sin() * phi.cos(),
                center[1] + radius * theta.sin() * phi.sin(),
                center[2] + radius * theta.cos(),
            ]);
        }
    }
    let mut faces = Vec::new();
    for i in 0..rings {
        for j in 0..segments {
            let k = (j + 1) % segments;
            let (a, b) = (i * segments + j, i * segments + k);
            let (c, d) = (a + segments, b + segments);
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    Mesh { vertices, faces }
}

/// Torus around the z axis.
pub fn torus(center: Point, major: f64, minor: f64, rings: usize, segments: usize) -> Mesh {
    let mut vertices = Vec::with_capacity(rings * segments);
    for i in 0..rings {
        let u = 2.0 * PI * i as f64 / rings as f64;
        for j in 0..segments {
            let v = 2.0 * PI * j as f64 / segments as f64;
            let r = major + minor * v.cos();
            vertices.push([
                center[0] + r * u.cos(),
                center[1] + r * u.sin(),
                center[2] + minor * v.sin(),
            ]);
        }
    }
    let mut faces = Vec::new();
    for i in 0..rings {
        let ni = (i + 1) % rings;
        for j in 0..segments {
            let nj = (j + 1) % segments;
            let (a, b) = (i * segments + j, i * segments + nj);
            let (c, d) = (ni * segments + j, ni * segments + nj);
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    Mesh { vertices, faces }
}

fn union(parts: impl IntoIterator<Item = Mesh>) -> Mesh {
    let mut out = Mesh::default();
    for p in parts {
        out.merge(&p);
    }
    out
}

fn legs(xs: f64, ys: f64, z: f64, half: Point) -> Vec<Mesh> {
    [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
        .iter()
        .map(|&(sx, sy)| cuboid([sx * xs, sy * ys, z], half))
        .collect()
}

/// Builds the named primitive. Names are listed in [`TRAIN_PRIMITIVES`] and
/// [`HELDOUT_PRIMITIVES`].
pub fn primitive(name: &str) -> Result<Mesh> {
    let mesh = match name {
        "chair" => {
            let mut parts = legs(0.4, 0.4, -0.5, [0.05, 0.05, 0.5]);
            parts.push(cuboid([0.0, 0.0, 0.05], [0.48, 0.48, 0.05]));
            parts.push(cuboid([0.0, 0.43, 0.6], [0.48, 0.05, 0.5]));
            union(parts)
        }
        "table" => {
            let mut parts = legs(0.8, 0.45, -0.35, [0.05, 0.05, 0.35]);
            parts.push(cuboid([0.0, 0.0, 0.04], [0.95, 0.55, 0.04]));
            union(parts)
        }
        "lamp" => union([
            cylinder([0.0, 0.0, -0.95], 0.35, 0.05, 24),
            cylinder([0.0, 0.0, -0.2], 0.04, 0.7, 12),
            frustum([0.15, 0.0, 0.7], 0.45, 0.2, 0.25, 24),
        ]),
        "stool" => union([
            cylinder([0.0, 0.0, 0.4], 0.45, 0.06, 24),
            cylinder([0.25, 0.0, -0.2], 0.04, 0.55, 8),
            cylinder([-0.15, 0.22, -0.2], 0.04, 0.55, 8),
            cylinder([-0.15, -0.22, -0.2], 0.04, 0.55, 8),
        ]),
        "cup" => union([
            frustum([0.0, 0.0, 0.0], 0.35, 0.5, 0.6, 32),
            cuboid([0.62, 0.0, 0.1], [0.06, 0.04, 0.3]),
        ]),
        "tee" => union([
            cuboid([0.0, 0.0, 0.8], [0.9, 0.15, 0.15]),
            cuboid([0.0, 0.0, -0.1], [0.15, 0.15, 0.8]),
        ]),
        "ell" => union([
            cuboid([-0.6, 0.0, 0.1], [0.15, 0.2, 0.9]),
            cuboid([0.1, 0.0, -0.65], [0.6, 0.2, 0.15]),
        ]),
        "stairs" => union((0..4).map(|i| {
            let h = 0.25 * (i + 1) as f64;
            cuboid([-0.75 + 0.5 * i as f64, 0.0, -1.0 + h], [0.25, 0.5, h])
        })),
        "dumbbell" => union([
            sphere([-0.7, 0.0, 0.0], 0.3, 10, 16),
            sphere([0.7, 0.15, 0.0], 0.22, 10, 16),
            cylinder([0.0, 0.0, 0.0], 0.06, 0.7, 12),
        ]),
        "ring" => union([
            torus([0.0, 0.0, 0.0], 0.7, 0.15, 32, 12),
            cuboid([0.0, 0.0, 0.3], [0.1, 0.1, 0.3]),
        ]),
        "bench" => {
            let mut parts = legs(0.9, 0.2, -0.3, [0.06, 0.06, 0.3]);
            parts.push(cuboid([0.0, 0.0, 0.03], [1.0, 0.28, 0.03]));
            parts.push(cuboid([0.0, 0.25, 0.3], [1.0, 0.03, 0.2]));
            union(parts)
        }
        "shelf" => {
            let mut parts = vec![
                cuboid([-0.6, 0.0, 0.0], [0.03, 0.3, 1.0]),
                cuboid([0.6, 0.0, 0.0], [0.03, 0.3, 1.0]),
                cuboid([0.0, 0.28, 0.0], [0.6, 0.02, 1.0]),
            ];
            parts.extend((0..4).map(|i| cuboid([0.0, 0.0, -0.95 + 0.6 * i as f64], [0.6, 0.3, 0.03])));
            union(parts)
        }
        "arch" => union([
            cuboid([-0.7, 0.0, -0.3], [0.15, 0.2, 0.7]),
            cuboid([0.7, 0.0, -0.3], [0.15, 0.2, 0.7]),
            cuboid([0.0, 0.0, 0.55], [0.85, 0.2, 0.15]),
            cuboid([-0.2, 0.0, 0.8], [0.3, 0.15, 0.1]),
        ]),
        "desk" => {
            let mut parts = vec![
                cuboid([0.0, 0.0, 0.35], [0.9, 0.45, 0.04]),
                cuboid([0.6, 0.0, -0.1], [0.3, 0.45, 0.4]),
            ];
            parts.push(cuboid([-0.82, -0.37, -0.1], [0.05, 0.05, 0.4]));
            parts.push(cuboid([-0.82, 0.37, -0.1], [0.05, 0.05, 0.4]));
            union(parts)
        }
        "bottle" => union([
            cylinder([0.0, 0.0, -0.35], 0.35, 0.55, 32),
            frustum([0.0, 0.0, 0.35], 0.35, 0.1, 0.15, 32),
            cylinder([0.0, 0.0, 0.7], 0.1, 0.2, 16),
        ]),
        _ => return Err(Error::Invalid(format!("unknown primitive {name:?}"))),
    };
    Ok(mesh)
}
