//! Voxel-grid containers, world/voxel mapping, interpolation, and warping.
//!
//! Conventions used throughout the crate:
//! - linear index = `x + nx*(y + ny*z)` (x fastest, NIfTI order);
//! - `world(v) = origin + v ⊙ spacing`, with `origin` the world position of
//!   the *center* of voxel (0,0,0); all world units are millimeters;
//! - sampling outside the grid returns a background value (default 0).

mod nifti;

pub use nifti::{read_labels, read_nifti, read_scalar, read_vector_field, write_nifti, NiftiVolume};

use crate::error::{Error, Result};
use crate::real::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Axis-aligned voxel-grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry<T> {
    /// Voxels per axis.
    pub dims: [usize; 3],
    /// mm per voxel, all positive.
    pub spacing: [T; 3],
    /// World position (mm) of the center of voxel (0,0,0).
    pub origin: [T; 3],
}

impl<T: Real> GridGeometry<T> {
    pub fn new(dims: [usize; 3], spacing: [T; 3], origin: [T; 3]) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "all dims must be >= 1");
        assert!(spacing.iter().all(|&s| s > T::zero()), "all spacing must be > 0");
        Self { dims, spacing, origin }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, v: [usize; 3]) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    #[inline]
    pub fn contains(&self, v: [i64; 3]) -> bool {
        (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < self.dims[a])
    }

    /// World position of a voxel center.
    #[inline]
    pub fn world(&self, v: [usize; 3]) -> [T; 3] {
        [
            self.origin[0] + T::of_usize(v[0]) * self.spacing[0],
            self.origin[1] + T::of_usize(v[1]) * self.spacing[1],
            self.origin[2] + T::of_usize(v[2]) * self.spacing[2],
        ]
    }

    /// Continuous voxel coordinates of a world point.
    #[inline]
    pub fn world_to_voxel(&self, p: [T; 3]) -> [T; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Nearest voxel to a world point, `None` when it rounds outside the grid.
    #[inline]
    pub fn nearest_voxel(&self, p: [T; 3]) -> Option<[usize; 3]> {
        let c = self.world_to_voxel(p);
        let mut v = [0usize; 3];
        for a in 0..3 {
            let r = c[a].round();
            if r < T::zero() {
                return None;
            }
            let i = r.to_usize()?;
            if i >= self.dims[a] {
                return None;
            }
            v[a] = i;
        }
        Some(v)
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self == other
    }
}

/// What a scalar grid stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Intensity,
    DoseGray,
}

/// Dense 3D grid of scalar samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid<T> {
    pub geometry: GridGeometry<T>,
    pub values: Vec<T>,
    pub kind: GridKind,
}

impl<T: Real> ScalarGrid<T> {
    pub fn new(geometry: GridGeometry<T>, values: Vec<T>, kind: GridKind) -> Self {
        assert_eq!(values.len(), geometry.len(), "value count must equal product of dims");
        debug_assert!(values.iter().all(|v| v.is_finite()), "all values must be finite");
        Self { geometry, values, kind }
    }

    pub fn zeros(geometry: GridGeometry<T>, kind: GridKind) -> Self {
        let n = geometry.len();
        Self { geometry, values: vec![T::zero(); n], kind }
    }

    #[inline]
    pub fn at(&self, v: [usize; 3]) -> T {
        self.values[self.geometry.index(v)]
    }

    /// Trilinear interpolation at continuous voxel coordinates. Corners that
    /// fall outside the grid contribute `background`.
    pub fn sample_voxel(&self, c: [T; 3], background: T) -> T {
        sample_trilinear_raw(&self.geometry, |i| self.values[i], c, background)
    }

    /// Trilinear interpolation at a world point (mm); outside returns `background`.
    pub fn sample_trilinear(&self, p: [T; 3], background: T) -> T {
        self.sample_voxel(self.geometry.world_to_voxel(p), background)
    }

    pub fn min_max(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for &v in &self.values {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }
}

/// Shared trilinear kernel over any indexed value source.
///
/// The all-integer fast path returns the stored value without arithmetic so
/// that zero and integer-voxel displacements stay bit-exact.
#[inline]
pub(crate) fn sample_trilinear_raw<T: Real>(
    geom: &GridGeometry<T>,
    value: impl Fn(usize) -> T,
    c: [T; 3],
    background: T,
) -> T {
    let f = [c[0].floor(), c[1].floor(), c[2].floor()];
    let fr = [c[0] - f[0], c[1] - f[1], c[2] - f[2]];
    let i = [f[0].as_f64() as i64, f[1].as_f64() as i64, f[2].as_f64() as i64];

    if fr[0] == T::zero() && fr[1] == T::zero() && fr[2] == T::zero() {
        return if geom.contains(i) {
            value(geom.index([i[0] as usize, i[1] as usize, i[2] as usize]))
        } else {
            background
        };
    }

    let mut acc = T::zero();
    for dz in 0..2i64 {
        let wz = if dz == 0 { T::one() - fr[2] } else { fr[2] };
        for dy in 0..2i64 {
            let wy = if dy == 0 { T::one() - fr[1] } else { fr[1] };
            for dx in 0..2i64 {
                let wx = if dx == 0 { T::one() - fr[0] } else { fr[0] };
                let v = [i[0] + dx, i[1] + dy, i[2] + dz];
                let val = if geom.contains(v) {
                    value(geom.index([v[0] as usize, v[1] as usize, v[2] as usize]))
                } else {
                    background
                };
                acc = acc + wx * wy * wz * val;
            }
        }
    }
    acc
}

/// Integer-labeled organ occupancy grid. Label 0 is background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMask<T> {
    pub geometry: GridGeometry<T>,
    pub labels: Vec<u16>,
    pub label_names: BTreeMap<u16, String>,
}

impl<T: Real> LabelMask<T> {
    pub fn new(geometry: GridGeometry<T>, labels: Vec<u16>, label_names: BTreeMap<u16, String>) -> Self {
        assert_eq!(labels.len(), geometry.len(), "label count must equal product of dims");
        debug_assert!(
            labels.iter().filter(|&&l| l != 0).all(|l| label_names.contains_key(l)),
            "every nonzero label present must appear in label_names"
        );
        Self { geometry, labels, label_names }
    }

    pub fn zeros(geometry: GridGeometry<T>) -> Self {
        let n = geometry.len();
        Self { geometry, labels: vec![0; n], label_names: BTreeMap::new() }
    }

    #[inline]
    pub fn at(&self, v: [usize; 3]) -> u16 {
        self.labels[self.geometry.index(v)]
    }

    /// Nearest-neighbor label at a world point; 0 outside the grid.
    #[inline]
    pub fn sample_nearest(&self, p: [T; 3]) -> u16 {
        match self.geometry.nearest_voxel(p) {
            Some(v) => self.at(v),
            None => 0,
        }
    }

    /// Occupancy of one label as a flat boolean grid.
    pub fn binary(&self, label: u16) -> Vec<bool> {
        self.labels.iter().map(|&l| l == label).collect()
    }

    pub fn count(&self, label: u16) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// 6-connected dilation of one label by `n` sweeps, returned as booleans.
    pub fn dilate(&self, label: u16, n: usize) -> Vec<bool> {
        let mut cur = self.binary(label);
        let dims = self.geometry.dims;
        for _ in 0..n {
            let prev = cur.clone();
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        let idx = self.geometry.index([x, y, z]);
                        if prev[idx] {
                            continue;
                        }
                        let mut on = false;
                        for (dx, dy, dz) in NEIGHBORS6 {
                            let v = [x as i64 + dx, y as i64 + dy, z as i64 + dz];
                            if self.geometry.contains(v)
                                && prev[self.geometry.index([v[0] as usize, v[1] as usize, v[2] as usize])]
                            {
                                on = true;
                                break;
                            }
                        }
                        if on {
                            cur[idx] = true;
                        }
                    }
                }
            }
        }
        cur
    }
}

pub const NEIGHBORS6: [(i64, i64, i64); 6] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];

/// Displacement-field convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Maps reference-grid points to deformed positions: `x ↦ x + V(x)`.
    ForwardPush,
    /// Maps deformed-grid points back to reference positions.
    BackwardPull,
}

impl std::fmt::Display for Convention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Convention::ForwardPush => write!(f, "forward_push"),
            Convention::BackwardPull => write!(f, "backward_pull"),
        }
    }
}

/// Dense 3D grid of displacement vectors (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField<T> {
    pub geometry: GridGeometry<T>,
    pub vectors: Vec<[T; 3]>,
    pub convention: Convention,
}

impl<T: Real> VectorField<T> {
    pub fn new(geometry: GridGeometry<T>, vectors: Vec<[T; 3]>, convention: Convention) -> Self {
        assert_eq!(vectors.len(), geometry.len(), "vector count must equal product of dims");
        Self { geometry, vectors, convention }
    }

    pub fn zeros(geometry: GridGeometry<T>, convention: Convention) -> Self {
        let n = geometry.len();
        Self { geometry, vectors: vec![[T::zero(); 3]; n], convention }
    }

    #[inline]
    pub fn at(&self, v: [usize; 3]) -> [T; 3] {
        self.vectors[self.geometry.index(v)]
    }

    /// Component-wise trilinear sample at continuous voxel coordinates;
    /// outside contributions are zero.
    pub fn sample_voxel(&self, c: [T; 3]) -> [T; 3] {
        [
            sample_trilinear_raw(&self.geometry, |i| self.vectors[i][0], c, T::zero()),
            sample_trilinear_raw(&self.geometry, |i| self.vectors[i][1], c, T::zero()),
            sample_trilinear_raw(&self.geometry, |i| self.vectors[i][2], c, T::zero()),
        ]
    }

    /// Component-wise trilinear sample at a world point (mm).
    pub fn sample_trilinear(&self, p: [T; 3]) -> [T; 3] {
        self.sample_voxel(self.geometry.world_to_voxel(p))
    }

    pub fn max_magnitude(&self) -> T {
        let mut m = T::zero();
        for v in &self.vectors {
            let n = crate::vec3::norm(*v);
            if n > m {
                m = n;
            }
        }
        m
    }
}

/// Pull-warp `moving` onto the field's grid: `out(x) = moving(world(x) + V(x))`.
///
/// When the two grids share geometry the sample position is formed in voxel
/// space (`x + V/spacing`), so zero and integer-voxel displacements reproduce
/// stored values bit-exactly.
pub fn warp_pull<T: Real>(moving: &ScalarGrid<T>, field: &VectorField<T>) -> Result<ScalarGrid<T>> {
    if field.convention != Convention::BackwardPull {
        return Err(Error::ConventionMismatch {
            expected: Convention::BackwardPull.to_string(),
            got: field.convention.to_string(),
        });
    }
    let geom = field.geometry;
    let same = geom.same_geometry(&moving.geometry);
    let mut values = vec![T::zero(); geom.len()];
    values
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, out)| {
            let v = geom.coords(idx);
            let d = field.vectors[idx];
            *out = if same {
                let c = [
                    T::of_usize(v[0]) + d[0] / geom.spacing[0],
                    T::of_usize(v[1]) + d[1] / geom.spacing[1],
                    T::of_usize(v[2]) + d[2] / geom.spacing[2],
                ];
                moving.sample_voxel(c, T::zero())
            } else {
                let p = crate::vec3::add(geom.world(v), d);
                moving.sample_trilinear(p, T::zero())
            };
        });
    Ok(ScalarGrid::new(geom, values, moving.kind))
}

/// Nearest-neighbor pull-warp of a label mask (for mask transport).
pub fn warp_pull_labels<T: Real>(moving: &LabelMask<T>, field: &VectorField<T>) -> Result<LabelMask<T>> {
    if field.convention != Convention::BackwardPull {
        return Err(Error::ConventionMismatch {
            expected: Convention::BackwardPull.to_string(),
            got: field.convention.to_string(),
        });
    }
    let geom = field.geometry;
    let same = geom.same_geometry(&moving.geometry);
    let mut labels = vec![0u16; geom.len()];
    labels
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, out)| {
            let v = geom.coords(idx);
            let d = field.vectors[idx];
            if same {
                let c = [
                    T::of_usize(v[0]) + d[0] / geom.spacing[0],
                    T::of_usize(v[1]) + d[1] / geom.spacing[1],
                    T::of_usize(v[2]) + d[2] / geom.spacing[2],
                ];
                let mut vi = [0usize; 3];
                let mut inside = true;
                for a in 0..3 {
                    let r = c[a].round();
                    if r < T::zero() || r.to_usize().map_or(true, |i| i >= geom.dims[a]) {
                        inside = false;
                        break;
                    }
                    vi[a] = r.to_usize().unwrap();
                }
                *out = if inside { moving.at(vi) } else { 0 };
            } else {
                let p = crate::vec3::add(geom.world(v), d);
                *out = moving.sample_nearest(p);
            }
        });
    Ok(LabelMask::new(geom, labels, moving.label_names.clone()))
}
