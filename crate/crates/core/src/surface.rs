//! NURBS tube surfaces fitted around organ centerlines.
//!
//! A [`TubeSurface`] is a tensor-product surface whose control net is the
//! grid of boundary points cast radially from the centerline: degree 3 along
//! the tube (`u`, clamped uniform knots) and degree 3 around the
//! circumference (`v`, unclamped uniform periodic knots). The cast boundary
//! points are used directly as the control net — an approximating surface,
//! not an interpolating one. Weights are stored and the rational evaluation
//! path is kept, but this toolkit always uses unit weights.
//!
//! Inner shells interpolate between the outer surface (`p = 0`) and the
//! centerline curve (`p = 1`), the degenerate surface whose control points
//! are the section centers.

use crate::error::{Error, Result};
use crate::grid::LabelMask;
use crate::real::Real;
use crate::skeleton::Centerline;
use crate::vec3;
use serde::{Deserialize, Serialize};

/// Default circumferential ray count.
pub const DEFAULT_RAYS: usize = 16;

/// Default section count for a centerline of the given arc length (mm):
/// one section per 5 mm, at least 12.
pub fn default_sections(arclength_mm: f64) -> usize {
    12usize.max((arclength_mm / 5.0).ceil() as usize)
}

/// One ring of control points in the cross-sectional plane at `arclength`
/// along the centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionalCurve<T> {
    pub index: usize,
    /// Position of the section along the organ's length (mm).
    pub arclength: T,
    /// Centerline point of this section.
    pub center: [T; 3],
    /// Cast boundary points, one per ray.
    pub control_points: Vec<[T; 3]>,
    /// Unit radial directions from the center to each control point.
    pub radial_dirs: Vec<[T; 3]>,
    /// Radii (mm), all positive.
    pub radii: Vec<T>,
    /// Rays that left the grid before leaving the organ.
    pub truncated: Vec<bool>,
}

impl<T: Real> SectionalCurve<T> {
    pub fn n_rays(&self) -> usize {
        self.control_points.len()
    }

    pub fn min_radius(&self) -> T {
        self.radii.iter().copied().fold(T::infinity(), T::min)
    }
}

/// NURBS tube surface: sectional control rings along the centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSurface<T> {
    pub sections: Vec<SectionalCurve<T>>,
    pub degree_u: usize,
    pub degree_v: usize,
    /// Clamped non-decreasing knots over [0, 1].
    pub knots_u: Vec<T>,
    /// Unclamped uniform periodic knots; `v` is circular on [0, 1).
    pub knots_v: Vec<T>,
    /// Per-control-point weights, row-major `[section][ray]`; unit here.
    pub weights: Vec<T>,
}

/// Knot span index such that `knots[span] <= t < knots[span + 1]`
/// (Piegl & Tiller A2.1, clamping at the domain end).
fn find_span<T: Real>(n_ctrl: usize, degree: usize, knots: &[T], t: T) -> usize {
    if t >= knots[n_ctrl] {
        return n_ctrl - 1;
    }
    let mut lo = degree;
    let mut hi = n_ctrl;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo - 1
}

/// The `degree + 1` nonzero B-spline basis values at `t` (Piegl & Tiller A2.2).
fn basis_funs<T: Real>(span: usize, t: T, degree: usize, knots: &[T]) -> Vec<T> {
    let mut n = vec![T::zero(); degree + 1];
    let mut left = vec![T::zero(); degree + 1];
    let mut right = vec![T::zero(); degree + 1];
    n[0] = T::one();
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = T::zero();
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

fn clamped_uniform_knots<T: Real>(n_ctrl: usize, degree: usize) -> Vec<T> {
    let n_inner = n_ctrl - degree - 1;
    let mut knots = Vec::with_capacity(n_ctrl + degree + 1);
    for _ in 0..=degree {
        knots.push(T::zero());
    }
    for i in 1..=n_inner {
        knots.push(T::of_usize(i) / T::of_usize(n_inner + 1));
    }
    for _ in 0..=degree {
        knots.push(T::one());
    }
    knots
}

fn periodic_uniform_knots<T: Real>(n_ctrl: usize, degree: usize) -> Vec<T> {
    (0..=(n_ctrl + 2 * degree))
        .map(|k| (T::of_usize(k) - T::of_usize(degree)) / T::of_usize(n_ctrl))
        .collect()
}

impl<T: Real> TubeSurface<T> {
    pub fn n_sections(&self) -> usize {
        self.sections.len()
    }

    pub fn n_rays(&self) -> usize {
        self.sections[0].n_rays()
    }

    #[inline]
    fn weight(&self, i: usize, j: usize) -> T {
        self.weights[i * self.n_rays() + j]
    }

    /// Same control-net layout: section/ray counts, degrees, and knots.
    pub fn same_topology(&self, other: &Self) -> bool {
        self.n_sections() == other.n_sections()
            && self.n_rays() == other.n_rays()
            && self.degree_u == other.degree_u
            && self.degree_v == other.degree_v
            && self.knots_u == other.knots_u
            && self.knots_v == other.knots_v
    }

    fn u_basis(&self, u: T) -> (usize, Vec<T>) {
        let u = u.max(T::zero()).min(T::one());
        let span = find_span(self.n_sections(), self.degree_u, &self.knots_u, u);
        (span, basis_funs(span, u, self.degree_u, &self.knots_u))
    }

    fn v_basis(&self, v: T) -> (usize, Vec<T>) {
        // wrap v into [0, 1)
        let v = v - v.floor();
        let n = self.n_rays();
        let span = self.degree_v + (v * T::of_usize(n)).to_usize().unwrap_or(0).min(n - 1);
        (span, basis_funs(span, v, self.degree_v, &self.knots_v))
    }

    /// Surface point at `(u, v)`, rational evaluation (weights are unit in
    /// this toolkit, the division is kept for the general form).
    pub fn eval(&self, u: T, v: T) -> [T; 3] {
        let (su, nu) = self.u_basis(u);
        let (sv, nv) = self.v_basis(v);
        let n_rays = self.n_rays();
        let mut num = [T::zero(); 3];
        let mut den = T::zero();
        for (a, &bu) in nu.iter().enumerate() {
            let i = su - self.degree_u + a;
            let section = &self.sections[i];
            for (b, &bv) in nv.iter().enumerate() {
                let j = (sv - self.degree_v + b) % n_rays;
                let w = self.weight(i, j) * bu * bv;
                num = vec3::add(num, vec3::scale(section.control_points[j], w));
                den = den + w;
            }
        }
        vec3::scale(num, T::one() / den)
    }

    /// Centerline curve at `u`: the degenerate surface through the section
    /// centers (independent of `v`).
    pub fn center_point(&self, u: T) -> [T; 3] {
        let (su, nu) = self.u_basis(u);
        let mut num = [T::zero(); 3];
        let mut den = T::zero();
        for (a, &bu) in nu.iter().enumerate() {
            let i = su - self.degree_u + a;
            num = vec3::add(num, vec3::scale(self.sections[i].center, bu));
            den = den + bu;
        }
        vec3::scale(num, T::one() / den)
    }

    /// Inner-shell point: `(1-p) * eval(u, v) + p * center_point(u)`,
    /// linear in the radial factor `p`.
    pub fn eval_shell(&self, u: T, v: T, p: T) -> [T; 3] {
        let outer = self.eval(u, v);
        let center = self.center_point(u);
        vec3::add(vec3::scale(outer, T::one() - p), vec3::scale(center, p))
    }
}

/// Resample a centerline to `n_sections` points uniformly spaced in arc
/// length; frames are rebuilt by parallel transport.
pub fn resample_centerline<T: Real>(c: &Centerline<T>, n_sections: usize) -> Result<Centerline<T>> {
    if n_sections < 4 {
        return Err(Error::Surface(format!("n_sections = {n_sections}, need at least 4")));
    }
    let total = c.total_length();
    if total <= T::of(1e-9) {
        return Err(Error::DegenerateCenterline("zero-length centerline".into()));
    }
    let step = total / T::of_usize(n_sections - 1);
    let points: Vec<[T; 3]> = (0..n_sections).map(|i| c.point_at(T::of_usize(i) * step)).collect();
    Centerline::from_points(points)
}

/// Warnings accumulated while casting sections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CastWarnings {
    /// Centerline points outside the organ, dropped.
    pub dropped_centers: usize,
    /// Rays that left the grid before leaving the organ.
    pub truncated_rays: usize,
}

/// Cast `n_rays` radial rays per centerline point in the (normal, binormal)
/// plane and record the organ boundary crossing of each: marched at
/// `0.25 * min(spacing)` steps to the first background voxel, then refined
/// by bisection to 0.05 mm.
pub fn cast_sections<T: Real>(
    mask: &LabelMask<T>,
    label: u16,
    centerline: &Centerline<T>,
    n_rays: usize,
) -> Result<(Vec<SectionalCurve<T>>, CastWarnings)> {
    if n_rays < 4 {
        return Err(Error::Surface(format!("n_rays = {n_rays}, need at least 4")));
    }
    let spacing = mask.geometry.spacing;
    let step = T::of(0.25) * spacing[0].min(spacing[1]).min(spacing[2]);
    let max_extent = {
        let d = mask.geometry.dims;
        let ext = |a: usize| T::of_usize(d[a]) * spacing[a];
        ext(0) + ext(1) + ext(2)
    };
    let inside = |p: [T; 3]| mask.sample_nearest(p) == label;
    let in_grid = |p: [T; 3]| mask.geometry.nearest_voxel(p).is_some();

    let mut warnings = CastWarnings::default();
    let mut sections = Vec::with_capacity(centerline.points.len());
    for (i, (&center, frame)) in centerline.points.iter().zip(&centerline.frames).enumerate() {
        if !inside(center) {
            warnings.dropped_centers += 1;
            log::warn!("centerline point {i} lies outside label {label}; section dropped");
            continue;
        }
        let mut control_points = Vec::with_capacity(n_rays);
        let mut radial_dirs = Vec::with_capacity(n_rays);
        let mut radii = Vec::with_capacity(n_rays);
        let mut truncated = Vec::with_capacity(n_rays);
        for j in 0..n_rays {
            let theta = T::of(2.0 * std::f64::consts::PI) * T::of_usize(j) / T::of_usize(n_rays);
            let dir = vec3::add(
                vec3::scale(frame.normal, theta.cos()),
                vec3::scale(frame.binormal, theta.sin()),
            );
            let mut r_in = T::zero();
            let mut r_out = T::zero();
            let mut trunc = false;
            let mut r = step;
            loop {
                let p = vec3::add(center, vec3::scale(dir, r));
                if !in_grid(p) {
                    trunc = true;
                    r_out = r;
                    break;
                }
                if !inside(p) {
                    r_out = r;
                    break;
                }
                r_in = r;
                r = r + step;
                if r > max_extent {
                    trunc = true;
                    r_out = r;
                    break;
                }
            }
            let radius = if trunc {
                warnings.truncated_rays += 1;
                r_in.max(step)
            } else {
                // bisection between last-inside and first-outside to 0.05 mm
                let tol = T::of(0.05);
                while r_out - r_in > tol {
                    let mid = (r_in + r_out) * T::of(0.5);
                    if inside(vec3::add(center, vec3::scale(dir, mid))) {
                        r_in = mid;
                    } else {
                        r_out = mid;
                    }
                }
                ((r_in + r_out) * T::of(0.5)).max(step * T::of(0.5))
            };
            control_points.push(vec3::add(center, vec3::scale(dir, radius)));
            radial_dirs.push(dir);
            radii.push(radius);
            truncated.push(trunc);
        }
        sections.push(SectionalCurve {
            index: sections.len(),
            arclength: centerline.cumulative_arclength[i],
            center,
            control_points,
            radial_dirs,
            radii,
            truncated,
        });
    }
    Ok((sections, warnings))
}

/// Assemble a degree-3x3 tube surface with the cast boundary points as its
/// control net.
pub fn fit_surface<T: Real>(sections: Vec<SectionalCurve<T>>) -> Result<TubeSurface<T>> {
    if sections.len() < 4 {
        return Err(Error::Surface(format!(
            "{} sections, need at least 4 for a cubic surface",
            sections.len()
        )));
    }
    let n_rays = sections[0].n_rays();
    if let Some(bad) = sections.iter().find(|s| s.n_rays() != n_rays) {
        return Err(Error::Surface(format!(
            "inconsistent ray counts: section {} has {}, expected {n_rays}",
            bad.index,
            bad.n_rays()
        )));
    }
    if n_rays < 4 {
        return Err(Error::Surface(format!("{n_rays} rays, need at least 4")));
    }
    let degree = 3;
    let knots_u = clamped_uniform_knots(sections.len(), degree);
    let knots_v = periodic_uniform_knots(n_rays, degree);
    let weights = vec![T::one(); sections.len() * n_rays];
    Ok(TubeSurface { sections, degree_u: degree, degree_v: degree, knots_u, knots_v, weights })
}
