//! Dense deformation fields from surface correspondences.
//!
//! The chain is: sample matched shell points on the base and deformed
//! surfaces ([`sample_correspondences`]), scatter the vectors into the voxel
//! grid averaging collisions ([`voxelize`]), flood the remaining in-region
//! voxels from their neighbors and smooth ([`fill_smooth`]), then invert the
//! push field to a pull field for interpolation-based warping ([`invert`]).
//! [`jacobian_log`] measures local volume change and folding.

use crate::error::{Error, Result};
use crate::grid::{Convention, GridGeometry, GridKind, ScalarGrid, VectorField, NEIGHBORS6};
use crate::real::Real;
use crate::surface::TubeSurface;
use crate::vec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default dilation (voxels) of the organ mask bounding the fill region.
pub const DEFAULT_REGION_DILATE: usize = 3;

/// One shell correspondence: undeformed position and its displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample<T> {
    pub u: T,
    pub v: T,
    pub p: T,
    /// Undeformed shell position (mm).
    pub origin_pos: [T; 3],
    /// Deformed minus original position (mm).
    pub vector: [T; 3],
}

/// Shell sampling density; defaults follow the surface control resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShellSampling {
    pub n_u: usize,
    pub n_v: usize,
    pub n_p: usize,
}

impl ShellSampling {
    /// 4x the control resolution along and around the tube, 8 radial shells.
    pub fn for_surface<T: Real>(surface: &TubeSurface<T>) -> Self {
        ShellSampling { n_u: 4 * surface.n_sections(), n_v: 4 * surface.n_rays(), n_p: 8 }
    }
}

/// Displacement vectors on a uniform (u, v, p) shell grid:
/// `V(u,v,p) = X'(u,v,p) - X(u,v,p)`, with p = 0 the outer surface and
/// p = 1 the centerline.
pub fn sample_correspondences<T: Real>(
    base: &TubeSurface<T>,
    deformed: &TubeSurface<T>,
    sampling: ShellSampling,
) -> Result<Vec<FieldSample<T>>> {
    if !base.same_topology(deformed) {
        return Err(Error::TopologyMismatch(format!(
            "base {}x{} vs deformed {}x{} control net",
            base.n_sections(),
            base.n_rays(),
            deformed.n_sections(),
            deformed.n_rays()
        )));
    }
    let ShellSampling { n_u, n_v, n_p } = sampling;
    let us: Vec<T> = (0..n_u).map(|i| T::of_usize(i) / T::of_usize(n_u - 1)).collect();
    let vs: Vec<T> = (0..n_v).map(|j| T::of_usize(j) / T::of_usize(n_v)).collect();
    let ps: Vec<T> = (0..n_p).map(|k| T::of_usize(k) / T::of_usize(n_p - 1)).collect();

    let mut samples = Vec::with_capacity(n_u * n_v * n_p);
    for &u in &us {
        // centerline point is shared across v and p at fixed u
        let base_center = base.center_point(u);
        let def_center = deformed.center_point(u);
        for &v in &vs {
            let base_outer = base.eval(u, v);
            let def_outer = deformed.eval(u, v);
            for &p in &ps {
                let q = T::one() - p;
                let x = vec3::add(vec3::scale(base_outer, q), vec3::scale(base_center, p));
                let x_def = vec3::add(vec3::scale(def_outer, q), vec3::scale(def_center, p));
                samples.push(FieldSample { u, v, p, origin_pos: x, vector: vec3::sub(x_def, x) });
            }
        }
    }
    Ok(samples)
}

/// Voxelization output: a forward (push) field plus the coverage mask.
#[derive(Debug, Clone)]
pub struct Voxelized<T> {
    pub field: VectorField<T>,
    /// Voxels that received at least one sample.
    pub coverage: Vec<bool>,
}

/// Scatter samples into the grid by their undeformed position, averaging
/// vectors that land in the same voxel. Deterministic: samples are processed
/// in ascending linear-voxel order.
pub fn voxelize<T: Real>(samples: &[FieldSample<T>], geometry: GridGeometry<T>) -> Voxelized<T> {
    let mut binned: Vec<(usize, [T; 3])> = samples
        .iter()
        .filter_map(|s| geometry.nearest_voxel(s.origin_pos).map(|v| (geometry.index(v), s.vector)))
        .collect();
    binned.sort_by_key(|(idx, _)| *idx);

    let mut field = VectorField::zeros(geometry, Convention::ForwardPush);
    let mut coverage = vec![false; geometry.len()];
    let mut i = 0;
    while i < binned.len() {
        let idx = binned[i].0;
        let mut sum = [T::zero(); 3];
        let mut count = 0usize;
        while i < binned.len() && binned[i].0 == idx {
            sum = vec3::add(sum, binned[i].1);
            count += 1;
            i += 1;
        }
        field.vectors[idx] = vec3::scale(sum, T::one() / T::of_usize(count));
        coverage[idx] = true;
    }
    Voxelized { field, coverage }
}

/// Fill/smooth report: voxels of the region that stayed unreached.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FillReport {
    pub unfilled: usize,
    pub sweeps: usize,
}

const MAX_FILL_SWEEPS: usize = 200;

/// Spread covered vectors over the rest of `region`: uncovered voxels are
/// iteratively replaced by the mean of their filled 6-neighbors
/// (Jacobi-style sweeps, so execution order cannot matter), then one
/// Gaussian pass (sigma = 1 voxel) runs inside the region and the covered
/// seed voxels are restored. Voxels outside `region` stay exactly zero.
pub fn fill_smooth<T: Real>(
    voxelized: &Voxelized<T>,
    region: &[bool],
) -> Result<(VectorField<T>, FillReport)> {
    let geom = voxelized.field.geometry;
    assert_eq!(region.len(), geom.len(), "region must cover the field grid");
    let dims = geom.dims;

    let mut vectors = voxelized.field.vectors.clone();
    let mut filled: Vec<bool> = voxelized.coverage.clone();
    // coverage outside the region is discarded: outside stays zero
    for i in 0..filled.len() {
        if !region[i] {
            filled[i] = false;
            vectors[i] = [T::zero(); 3];
        }
    }

    let todo = |filled: &[bool]| {
        region.iter().zip(filled).filter(|&(&r, &f)| r && !f).count()
    };
    let mut remaining = todo(&filled);
    let mut sweeps = 0;
    while remaining > 0 && sweeps < MAX_FILL_SWEEPS {
        let prev_vec = vectors.clone();
        let prev_filled = filled.clone();
        let updates: Vec<(usize, [T; 3])> = (0..geom.len())
            .into_par_iter()
            .filter(|&i| region[i] && !prev_filled[i])
            .filter_map(|i| {
                let c = geom.coords(i);
                let mut sum = [T::zero(); 3];
                let mut count = 0usize;
                for (dx, dy, dz) in NEIGHBORS6 {
                    let w = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                    if geom.contains(w) {
                        let j = geom.index([w[0] as usize, w[1] as usize, w[2] as usize]);
                        if prev_filled[j] {
                            sum = vec3::add(sum, prev_vec[j]);
                            count += 1;
                        }
                    }
                }
                (count > 0).then(|| (i, vec3::scale(sum, T::one() / T::of_usize(count))))
            })
            .collect();
        if updates.is_empty() {
            break;
        }
        for (i, v) in updates {
            vectors[i] = v;
            filled[i] = true;
            remaining -= 1;
        }
        sweeps += 1;
    }
    let report = FillReport { unfilled: remaining, sweeps };
    if remaining > 0 {
        log::warn!("{remaining} region voxels unreachable after {sweeps} fill sweeps");
    }

    // Gaussian pass (sigma = 1 voxel, radius 3) restricted to the region,
    // separable per axis. The weighted mean is written as
    // center + sum(w * (neighbor - center)) / sum(w) so constant fields
    // pass through exactly.
    let sigma = T::one();
    let radius = 3i64;
    let weights: Vec<T> = (-radius..=radius)
        .map(|k| (-(T::of(k as f64) * T::of(k as f64)) / (T::of(2.0) * sigma * sigma)).exp())
        .collect();
    for axis in 0..3 {
        let prev = vectors.clone();
        let stride: i64 = match axis {
            0 => 1,
            1 => dims[0] as i64,
            _ => (dims[0] * dims[1]) as i64,
        };
        vectors
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, out)| {
                if !region[i] {
                    return;
                }
                let c = geom.coords(i);
                let pos = c[axis] as i64;
                let extent = dims[axis] as i64;
                let center = prev[i];
                let mut acc = [T::zero(); 3];
                let mut wsum = T::zero();
                for (k, &w) in (-radius..=radius).zip(&weights) {
                    let q = pos + k;
                    if q < 0 || q >= extent {
                        continue;
                    }
                    let j = (i as i64 + k * stride) as usize;
                    if !region[j] {
                        continue;
                    }
                    acc = vec3::add(acc, vec3::scale(vec3::sub(prev[j], center), w));
                    wsum = wsum + w;
                }
                *out = vec3::add(center, vec3::scale(acc, T::one() / wsum));
            });
    }
    // restore covered seeds (inside the region) after smoothing
    for i in 0..geom.len() {
        if region[i] && voxelized.coverage[i] {
            vectors[i] = voxelized.field.vectors[i];
        }
    }

    Ok((VectorField::new(geom, vectors, Convention::ForwardPush), report))
}

/// Inversion diagnostics: residual `|V(y + w(y)) + w(y)|` statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct InvertReport {
    pub mean_residual_mm: f64,
    pub max_residual_mm: f64,
    pub iterations: usize,
    /// Largest finite-difference displacement-gradient norm (spectral proxy).
    pub gradient_bound: f64,
}

const INVERT_MAX_ITERS: usize = 30;
const INVERT_TOL_MM: f64 = 0.01;
const INVERT_FAIL_MM: f64 = 0.5;

/// Invert a forward (push) field by fixed point:
/// `w_{n+1}(y) = -V(y + w_n(y))`, 30 iterations or until the largest update
/// drops under 0.01 mm. Errors when more than 1% of the moving voxels keep a
/// residual above 0.5 mm.
pub fn invert<T: Real>(field: &VectorField<T>) -> Result<(VectorField<T>, InvertReport)> {
    if field.convention != Convention::ForwardPush {
        return Err(Error::ConventionMismatch {
            expected: Convention::ForwardPush.to_string(),
            got: field.convention.to_string(),
        });
    }
    let geom = field.geometry;
    let grad = displacement_gradient_bound(field);
    if grad >= 1.0 {
        log::warn!("displacement gradient bound {grad:.3} >= 1; inversion may not converge");
    }

    let mut w: Vec<[T; 3]> = vec![[T::zero(); 3]; geom.len()];
    let mut iterations = 0;
    for _ in 0..INVERT_MAX_ITERS {
        iterations += 1;
        let prev = w.clone();
        let max_update: T = w
            .par_iter_mut()
            .enumerate()
            .map(|(i, wi)| {
                let y = geom.world(geom.coords(i));
                let probe = vec3::add(y, prev[i]);
                let v = field.sample_trilinear(probe);
                let new = [-v[0], -v[1], -v[2]];
                let update = vec3::dist(new, prev[i]);
                *wi = new;
                update
            })
            .reduce(|| T::zero(), T::max);
        if max_update < T::of(INVERT_TOL_MM) {
            break;
        }
    }

    // residual of the composition
    let residuals: Vec<T> = (0..geom.len())
        .into_par_iter()
        .map(|i| {
            let y = geom.world(geom.coords(i));
            let v = field.sample_trilinear(vec3::add(y, w[i]));
            vec3::norm(vec3::add(v, w[i]))
        })
        .collect();
    let moving: Vec<usize> =
        (0..geom.len()).filter(|&i| vec3::norm(w[i]) > T::of(1e-9)).collect();
    let mut mean = 0.0;
    let mut max = 0.0f64;
    let mut bad = 0usize;
    for &i in &moving {
        let r = residuals[i].as_f64();
        mean += r;
        max = max.max(r);
        if r > INVERT_FAIL_MM {
            bad += 1;
        }
    }
    if !moving.is_empty() {
        mean /= moving.len() as f64;
    }
    if !moving.is_empty() && bad * 100 > moving.len() {
        return Err(Error::InversionDiverged {
            residual_voxels: bad,
            percent: 100.0 * bad as f64 / moving.len() as f64,
        });
    }
    let report =
        InvertReport { mean_residual_mm: mean, max_residual_mm: max, iterations, gradient_bound: grad };
    Ok((VectorField::new(geom, w, Convention::BackwardPull), report))
}

/// Largest Frobenius norm of the displacement gradient, by central
/// differences in mm.
fn displacement_gradient_bound<T: Real>(field: &VectorField<T>) -> f64 {
    let geom = field.geometry;
    let dims = geom.dims;
    (0..geom.len())
        .into_par_iter()
        .map(|i| {
            let c = geom.coords(i);
            let mut frob = 0.0f64;
            for axis in 0..3 {
                if dims[axis] < 2 {
                    continue;
                }
                let (lo, hi, h) = one_sided(c[axis], dims[axis]);
                let mut a = c;
                let mut b = c;
                a[axis] = lo;
                b[axis] = hi;
                let va = field.at(a);
                let vb = field.at(b);
                let denom = geom.spacing[axis].as_f64() * h as f64;
                for comp in 0..3 {
                    let g = (vb[comp] - va[comp]).as_f64() / denom;
                    frob += g * g;
                }
            }
            frob.sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

#[inline]
fn one_sided(i: usize, n: usize) -> (usize, usize, usize) {
    if i == 0 {
        (0, 1, 1)
    } else if i == n - 1 {
        (n - 2, n - 1, 1)
    } else {
        (i - 1, i + 1, 2)
    }
}

/// Log-Jacobian map and folding flags of `det(I + grad V)`.
#[derive(Debug, Clone)]
pub struct JacobianMap<T> {
    /// log det(I + grad V); zero where folded (see `foldings`).
    pub log_j: ScalarGrid<T>,
    /// Voxels with det <= 0.
    pub foldings: Vec<bool>,
}

/// Mean/sd of log J over a mask, excluding folded voxels.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct JacobianStats {
    pub mean: f64,
    pub sd: f64,
    pub folding_count: usize,
    pub voxels: usize,
}

/// Jacobian of `x + V(x)` by central differences (one-sided at borders),
/// spacing-aware.
pub fn jacobian_log<T: Real>(field: &VectorField<T>) -> JacobianMap<T> {
    let geom = field.geometry;
    let dims = geom.dims;
    let n = geom.len();
    let mut log_j = vec![T::zero(); n];
    let mut foldings = vec![false; n];
    log_j
        .par_iter_mut()
        .zip(foldings.par_iter_mut())
        .enumerate()
        .for_each(|(i, (out, fold))| {
            let c = geom.coords(i);
            // J[comp][axis] = d(x + V)_comp / d x_axis
            let mut jac = [[0.0f64; 3]; 3];
            for axis in 0..3 {
                if dims[axis] < 2 {
                    jac[axis][axis] = 1.0;
                    continue;
                }
                let (lo, hi, h) = one_sided(c[axis], dims[axis]);
                let mut a = c;
                let mut b = c;
                a[axis] = lo;
                b[axis] = hi;
                let va = field.at(a);
                let vb = field.at(b);
                let denom = geom.spacing[axis].as_f64() * h as f64;
                for comp in 0..3 {
                    jac[comp][axis] = (vb[comp] - va[comp]).as_f64() / denom;
                }
            }
            for d in 0..3 {
                jac[d][d] += 1.0;
            }
            let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
                - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
                + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
            if det > 0.0 {
                *out = T::of(det.ln());
            } else {
                *fold = true;
            }
        });
    JacobianMap { log_j: ScalarGrid::new(geom, log_j, GridKind::Intensity), foldings }
}

impl<T: Real> JacobianMap<T> {
    /// Statistics over `mask` (or the whole grid when `None`); folded voxels
    /// are counted and excluded from mean/sd.
    pub fn stats(&self, mask: Option<&[bool]>) -> JacobianStats {
        let geom = &self.log_j.geometry;
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut folds = 0usize;
        for i in 0..geom.len() {
            if mask.map_or(false, |m| !m[i]) {
                continue;
            }
            if self.foldings[i] {
                folds += 1;
                continue;
            }
            sum += self.log_j.values[i].as_f64();
            count += 1;
        }
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        let mut var = 0.0;
        for i in 0..geom.len() {
            if mask.map_or(false, |m| !m[i]) || self.foldings[i] {
                continue;
            }
            let d = self.log_j.values[i].as_f64() - mean;
            var += d * d;
        }
        let sd = if count > 1 { (var / (count - 1) as f64).sqrt() } else { 0.0 };
        JacobianStats { mean, sd, folding_count: folds, voxels: count }
    }
}
