//! Analytic peristaltic motion: traveling radial sine waves on tube surfaces.
//!
//! Control points move along their radial directions by
//! `F_PS(L, t) * D_s(L) * D_t(t)` with
//! `F_PS = (A / sqrt(3)) * sin(2*pi*(L - c*t) / lambda)`,
//! `D_s = exp(-alpha_s * L)` and `D_t = exp(-alpha_t * t)`, where `L` is the
//! arc-length position of the control point's section. A motion cycle is one
//! wave period `T = lambda / c`, sampled at `n_phases` instants with both
//! endpoints included; with no temporal attenuation the time argument is
//! folded into one period, so the last phase of a one-period sweep
//! reproduces phase 0 bit-for-bit.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::surface::TubeSurface;
use crate::vec3;
use serde::{Deserialize, Serialize};

/// Lumen guard: a displaced radius never goes below this (mm), so control
/// points cannot cross the centerline.
pub const MIN_RADIUS_MM: f64 = 0.5;

fn default_phases() -> usize {
    21
}

/// Traveling-wave parameters for one organ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: serde::Deserialize<'de> + Default"))]
pub struct WaveParams<T> {
    /// Amplitude A (mm).
    pub amplitude_mm: T,
    /// Wave speed c (mm/s).
    pub speed_mm_s: T,
    /// Wavelength lambda (mm).
    pub wavelength_mm: T,
    /// Spatial attenuation (1/mm).
    #[serde(default)]
    pub alpha_s: T,
    /// Temporal attenuation (1/s).
    #[serde(default)]
    pub alpha_t: T,
    /// Phase count over one period, endpoints inclusive.
    #[serde(default = "default_phases", rename = "phases")]
    pub n_phases: usize,
}

impl<T: Real> WaveParams<T> {
    /// Stomach wave: A = 16 mm, lambda = 55 mm, c = 5 mm/s, no attenuation.
    pub fn stomach() -> Self {
        WaveParams {
            amplitude_mm: T::of(16.0),
            speed_mm_s: T::of(5.0),
            wavelength_mm: T::of(55.0),
            alpha_s: T::zero(),
            alpha_t: T::zero(),
            n_phases: 21,
        }
    }

    /// Large bowel wave: A = 16 mm, lambda = 40 mm, c = 8 mm/s.
    pub fn large_bowel() -> Self {
        WaveParams {
            amplitude_mm: T::of(16.0),
            speed_mm_s: T::of(8.0),
            wavelength_mm: T::of(40.0),
            alpha_s: T::zero(),
            alpha_t: T::zero(),
            n_phases: 21,
        }
    }

    /// Wave period T = lambda / c (seconds).
    pub fn period(&self) -> T {
        self.wavelength_mm / self.speed_mm_s
    }

    /// Phase instants `t_k = (k / (n_phases - 1)) * T`, k = 0..n_phases-1.
    pub fn phase_times(&self) -> Vec<T> {
        let period = self.period();
        let denom = T::of_usize(self.n_phases - 1);
        (0..self.n_phases).map(|k| (T::of_usize(k) / denom) * period).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude_mm >= T::zero()
            && self.speed_mm_s > T::zero()
            && self.wavelength_mm > T::zero()
            && self.alpha_s >= T::zero()
            && self.alpha_t >= T::zero()
            && self.n_phases >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid wave parameters: {self:?}")))
        }
    }
}

/// Radial wave displacement (mm) at arc length `arclength` and time `t`.
pub fn wave_value<T: Real>(params: &WaveParams<T>, arclength: T, t: T) -> T {
    let d_t = (-params.alpha_t * t).exp();
    // Fold into one period when there is no temporal attenuation: t = T then
    // evaluates through the exact same floats as t = 0.
    let t_eff = if params.alpha_t == T::zero() {
        t % params.period()
    } else {
        t
    };
    let sqrt3 = T::of(3.0).sqrt();
    let two_pi = T::of(2.0 * std::f64::consts::PI);
    let phase = two_pi * (arclength - params.speed_mm_s * t_eff) / params.wavelength_mm;
    let f_ps = params.amplitude_mm / sqrt3 * phase.sin();
    let d_s = (-params.alpha_s * arclength).exp();
    f_ps * d_s * d_t
}

/// Displace every control point radially by the wave at its section's arc
/// length. Displaced radii are clamped at [`MIN_RADIUS_MM`].
pub fn deform_surface<T: Real>(
    surface: &TubeSurface<T>,
    params: &WaveParams<T>,
    t: T,
) -> TubeSurface<T> {
    let r_min = T::of(MIN_RADIUS_MM);
    let mut out = surface.clone();
    for section in &mut out.sections {
        let w = wave_value(params, section.arclength, t);
        if w == T::zero() {
            continue;
        }
        for j in 0..section.control_points.len() {
            let r_new = section.radii[j] + w;
            if r_new < r_min {
                section.control_points[j] =
                    vec3::add(section.center, vec3::scale(section.radial_dirs[j], r_min));
                section.radii[j] = r_min;
            } else {
                section.control_points[j] =
                    vec3::add(section.control_points[j], vec3::scale(section.radial_dirs[j], w));
                section.radii[j] = r_new;
            }
        }
    }
    out
}

/// One organ's motion cycle: the base surface plus a deformed surface per phase.
#[derive(Debug, Clone)]
pub struct PhaseSequence<T> {
    pub base: TubeSurface<T>,
    pub params: WaveParams<T>,
    /// Phase instants (seconds), spanning exactly one period.
    pub times: Vec<T>,
    pub phases: Vec<TubeSurface<T>>,
    /// Mean control-point displacement magnitude per phase (mm).
    pub mean_displacement: Vec<T>,
    /// Phase index with the largest mean displacement (ties: smallest index).
    pub max_phase: usize,
}

/// Synthesize the motion cycle for each (surface, wave) pair.
pub fn synth_phases<T: Real>(
    organs: Vec<(TubeSurface<T>, WaveParams<T>)>,
) -> Result<Vec<PhaseSequence<T>>> {
    organs
        .into_iter()
        .map(|(base, params)| {
            params.validate()?;
            let times = params.phase_times();
            let phases: Vec<TubeSurface<T>> =
                times.iter().map(|&t| deform_surface(&base, &params, t)).collect();
            let mean_displacement: Vec<T> = phases
                .iter()
                .map(|ph| {
                    let mut acc = T::zero();
                    let mut count = 0usize;
                    for (sb, sp) in base.sections.iter().zip(&ph.sections) {
                        for (pb, pp) in sb.control_points.iter().zip(&sp.control_points) {
                            acc = acc + vec3::dist(*pb, *pp);
                            count += 1;
                        }
                    }
                    acc / T::of_usize(count.max(1))
                })
                .collect();
            let mut max_phase = 0;
            for (k, &d) in mean_displacement.iter().enumerate() {
                if d > mean_displacement[max_phase] {
                    max_phase = k;
                }
            }
            Ok(PhaseSequence { base, params, times, phases, mean_displacement, max_phase })
        })
        .collect()
}

/// Per-parameter search ranges for wave fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveSearchBox<T> {
    pub amplitude_mm: (T, T),
    pub speed_mm_s: (T, T),
    pub wavelength_mm: (T, T),
    pub alpha_s: (T, T),
    pub alpha_t: (T, T),
}

impl<T: Real> Default for WaveSearchBox<T> {
    /// Ranges covering published gastric wave values, with grid points
    /// landing on them exactly (8 steps: amplitude step 4, speed step 1,
    /// wavelength step 10).
    fn default() -> Self {
        WaveSearchBox {
            amplitude_mm: (T::zero(), T::of(32.0)),
            speed_mm_s: (T::of(1.0), T::of(9.0)),
            wavelength_mm: (T::of(15.0), T::of(95.0)),
            alpha_s: (T::zero(), T::zero()),
            alpha_t: (T::zero(), T::zero()),
        }
    }
}

impl<T: Real> WaveSearchBox<T> {
    fn ranges(&self) -> [(T, T); 5] {
        [self.amplitude_mm, self.speed_mm_s, self.wavelength_mm, self.alpha_s, self.alpha_t]
    }

    fn validate(&self) -> Result<()> {
        for (lo, hi) in self.ranges() {
            if !(lo <= hi) {
                return Err(Error::WaveFit(format!("empty search box: {self:?}")));
            }
        }
        if self.speed_mm_s.1 <= T::zero() {
            return Err(Error::WaveFit("search box allows no positive wave speed".into()));
        }
        Ok(())
    }
}

/// Fitted wave and its residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveFit<T> {
    pub params: WaveParams<T>,
    /// RMSE between predicted and reference radial displacements (mm).
    pub rmse_mm: T,
}

/// Per-(section, phase) sufficient statistics of the reference radial
/// displacements: sum and sum of squares over rays.
struct RadialStats<T> {
    arclengths: Vec<T>,
    n_rays: usize,
    sum: Vec<T>,
    sum_sq: Vec<T>,
    n_phases: usize,
}

impl<T: Real> RadialStats<T> {
    fn build(base: &TubeSurface<T>, reference: &[Vec<[T; 3]>]) -> Result<Self> {
        let n_sections = base.n_sections();
        let n_rays = base.n_rays();
        let n_phases = reference.len();
        if n_phases < 2 {
            return Err(Error::WaveFit(format!("{n_phases} reference phases, need at least 2")));
        }
        for (k, ph) in reference.iter().enumerate() {
            if ph.len() != n_sections * n_rays {
                return Err(Error::WaveFit(format!(
                    "phase {k} has {} displacement vectors, lattice needs {}",
                    ph.len(),
                    n_sections * n_rays
                )));
            }
        }
        let arclengths: Vec<T> = base.sections.iter().map(|s| s.arclength).collect();
        let mut sum = vec![T::zero(); n_sections * n_phases];
        let mut sum_sq = vec![T::zero(); n_sections * n_phases];
        for (k, ph) in reference.iter().enumerate() {
            for (i, section) in base.sections.iter().enumerate() {
                let mut s1 = T::zero();
                let mut s2 = T::zero();
                for (j, dir) in section.radial_dirs.iter().enumerate() {
                    let radial = vec3::dot(ph[i * n_rays + j], *dir);
                    s1 = s1 + radial;
                    s2 = s2 + radial * radial;
                }
                sum[i * n_phases + k] = s1;
                sum_sq[i * n_phases + k] = s2;
            }
        }
        Ok(RadialStats { arclengths, n_rays, sum, sum_sq, n_phases })
    }

    /// RMSE of (predicted - reference radial) over all sections, rays, phases.
    fn rmse(&self, params: &WaveParams<T>) -> T {
        let period = params.period();
        let denom = T::of_usize(self.n_phases - 1);
        let mut acc = T::zero();
        for (i, &arclength) in self.arclengths.iter().enumerate() {
            for k in 0..self.n_phases {
                let t = (T::of_usize(k) / denom) * period;
                let w = wave_value(params, arclength, t);
                let s1 = self.sum[i * self.n_phases + k];
                let s2 = self.sum_sq[i * self.n_phases + k];
                // sum_j (w - r_j)^2 = n*w^2 - 2*w*S1 + S2
                acc = acc + T::of_usize(self.n_rays) * w * w - T::of(2.0) * w * s1 + s2;
            }
        }
        let n = self.arclengths.len() * self.n_rays * self.n_phases;
        (acc / T::of_usize(n)).max(T::zero()).sqrt()
    }
}

/// Fit wave parameters to reference per-phase control-lattice displacements:
/// coarse grid search (8 steps per free parameter) then coordinate descent
/// with step halving to 1e-3 relative convergence. Deterministic. Reference
/// phase k is taken at fraction k/(n-1) of the candidate wave's period.
pub fn fit_wave_params<T: Real>(
    base: &TubeSurface<T>,
    reference: &[Vec<[T; 3]>],
    search: &WaveSearchBox<T>,
) -> Result<WaveFit<T>> {
    search.validate()?;
    let stats = RadialStats::build(base, reference)?;
    let n_phases = stats.n_phases;
    let ranges = search.ranges();
    let grid_steps = 8usize;

    let make_params = |p: &[T; 5]| WaveParams {
        amplitude_mm: p[0],
        speed_mm_s: p[1].max(T::of(1e-6)),
        wavelength_mm: p[2].max(T::of(1e-6)),
        alpha_s: p[3],
        alpha_t: p[4],
        n_phases,
    };

    // coarse grid
    let axis_values: Vec<Vec<T>> = ranges
        .iter()
        .map(|&(lo, hi)| {
            if lo == hi {
                vec![lo]
            } else {
                (0..=grid_steps)
                    .map(|m| lo + (hi - lo) * T::of_usize(m) / T::of_usize(grid_steps))
                    .collect()
            }
        })
        .collect();
    let mut best = [T::zero(); 5];
    let mut best_rmse = T::infinity();
    for &a in &axis_values[0] {
        for &c in &axis_values[1] {
            for &l in &axis_values[2] {
                for &als in &axis_values[3] {
                    for &alt in &axis_values[4] {
                        let p = [a, c, l, als, alt];
                        let r = stats.rmse(&make_params(&p));
                        if r < best_rmse {
                            best_rmse = r;
                            best = p;
                        }
                    }
                }
            }
        }
    }

    // coordinate descent with step halving
    let mut steps: [T; 5] = std::array::from_fn(|i| {
        let (lo, hi) = ranges[i];
        (hi - lo) / T::of_usize(grid_steps)
    });
    let half = T::of(0.5);
    let tol: [T; 5] = std::array::from_fn(|i| {
        let (lo, hi) = ranges[i];
        (hi - lo) * T::of(1e-3)
    });
    loop {
        let mut improved = false;
        for i in 0..5 {
            let (lo, hi) = ranges[i];
            if lo == hi || steps[i] <= T::zero() {
                continue;
            }
            for sign in [T::one(), -T::one()] {
                let mut p = best;
                p[i] = (p[i] + sign * steps[i]).max(lo).min(hi);
                if p[i] == best[i] {
                    continue;
                }
                let r = stats.rmse(&make_params(&p));
                if r < best_rmse {
                    best_rmse = r;
                    best = p;
                    improved = true;
                }
            }
        }
        if !improved {
            let mut all_converged = true;
            for i in 0..5 {
                steps[i] = steps[i] * half;
                if steps[i] > tol[i] {
                    all_converged = false;
                }
            }
            if all_converged {
                break;
            }
        }
    }

    Ok(WaveFit { params: make_params(&best), rmse_mm: best_rmse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{fit_surface, SectionalCurve};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tube(n_sections: usize, spacing_mm: f64, radius: f64) -> TubeSurface<f64> {
        let n_rays = 8;
        let sections: Vec<SectionalCurve<f64>> = (0..n_sections)
            .map(|i| {
                let z = spacing_mm * i as f64;
                let center = [0.0, 0.0, z];
                let mut control_points = Vec::new();
                let mut radial_dirs = Vec::new();
                let mut radii = Vec::new();
                for j in 0..n_rays {
                    let a = 2.0 * std::f64::consts::PI * j as f64 / n_rays as f64;
                    let d = [a.cos(), a.sin(), 0.0];
                    control_points.push(crate::vec3::add(center, crate::vec3::scale(d, radius)));
                    radial_dirs.push(d);
                    radii.push(radius);
                }
                SectionalCurve {
                    index: i,
                    arclength: z,
                    center,
                    control_points,
                    radial_dirs,
                    radii,
                    truncated: vec![false; n_rays],
                }
            })
            .collect();
        fit_surface(sections).unwrap()
    }

    #[test]
    fn zero_amplitude_is_zero_everywhere() {
        let p = WaveParams { amplitude_mm: 0.0, ..WaveParams::stomach() };
        for l in [0.0, 13.0, 55.0, 200.0] {
            for t in [0.0, 1.0, 7.3] {
                assert_eq!(wave_value(&p, l, t), 0.0);
            }
        }
    }

    #[test]
    fn quarter_wavelength_peak() {
        // alpha = 0, L - c*t = lambda/4 -> +A/sqrt(3)
        let p = WaveParams::<f64>::stomach();
        let t = 2.0;
        let l = p.speed_mm_s * t + p.wavelength_mm / 4.0;
        let v = wave_value(&p, l, t);
        assert_relative_eq!(v, 16.0 / 3.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(v, 9.2376, epsilon = 1e-4);
    }

    #[test]
    fn sine_zero_with_spatial_attenuation() {
        let p = WaveParams { alpha_s: 0.01, ..WaveParams::<f64>::stomach() };
        let v = wave_value(&p, 55.0, 0.0);
        assert!(v.abs() < 1e-12, "sin(2*pi) term should vanish, got {v}");
    }

    #[test]
    fn amplitude_bound_with_attenuation() {
        let p = WaveParams { alpha_s: 0.02, alpha_t: 0.05, ..WaveParams::<f64>::stomach() };
        let bound = 16.0 / 3.0f64.sqrt();
        for i in 0..200 {
            let l = 10.0 + i as f64;
            for k in 0..30 {
                let t = 0.3 * k as f64;
                let v = wave_value(&p, l, t).abs();
                let local = bound * (-p.alpha_s * l).exp() * (-p.alpha_t * t).exp();
                assert!(v <= local + 1e-12);
            }
        }
    }

    #[test]
    fn monotone_spatial_attenuation() {
        let p = WaveParams { alpha_s: 0.03, ..WaveParams::<f64>::stomach() };
        let max_over_period = |l: f64| {
            (0..400)
                .map(|k| wave_value(&p, l, p.period() * k as f64 / 399.0).abs())
                .fold(0.0f64, f64::max)
        };
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let m = max_over_period(10.0 * i as f64);
            assert!(m <= prev + 1e-12, "attenuation not monotone at L = {}", 10.0 * i as f64);
            prev = m;
        }
    }

    #[test]
    fn deform_zero_amplitude_is_identity() {
        let surf = tube(12, 5.0, 10.0);
        let p = WaveParams { amplitude_mm: 0.0, ..WaveParams::stomach() };
        let out = deform_surface(&surf, &p, 3.7);
        assert_eq!(out, surf);
    }

    #[test]
    fn max_displacement_attains_analytic_peak() {
        // section spacing 2.5 mm = lambda/22 <= lambda/20
        let surf = tube(45, 2.5, 10.0);
        let p = WaveParams::<f64>::stomach();
        let seq = synth_phases(vec![(surf.clone(), p)]).unwrap().remove(0);
        let mut max_disp = 0.0f64;
        for ph in &seq.phases {
            for (sb, sp) in surf.sections.iter().zip(&ph.sections) {
                for (a, b) in sb.control_points.iter().zip(&sp.control_points) {
                    max_disp = max_disp.max(crate::vec3::dist(*a, *b));
                }
            }
        }
        let peak = 16.0 / 3.0f64.sqrt();
        assert!(max_disp <= peak + 1e-9, "displacement {max_disp} exceeds bound {peak}");
        assert!(max_disp >= 0.99 * peak, "displacement {max_disp} misses peak {peak} by > 1%");
    }

    #[test]
    fn inward_peak_clamps_at_min_radius() {
        let surf = tube(12, 5.0, 2.0); // radius 2 mm, wave trough would cross the axis
        let p = WaveParams::<f64>::stomach();
        let seq = synth_phases(vec![(surf, p)]).unwrap().remove(0);
        for ph in &seq.phases {
            for s in &ph.sections {
                for (&r, (cp, d)) in
                    s.radii.iter().zip(s.control_points.iter().zip(&s.radial_dirs))
                {
                    assert!(r >= MIN_RADIUS_MM - 1e-12, "radius {r} under the lumen guard");
                    let recon = crate::vec3::add(s.center, crate::vec3::scale(*d, r));
                    assert!(crate::vec3::dist(recon, *cp) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn phase_sequence_is_periodic_bitwise() {
        let surf = tube(30, 4.0, 10.0);
        let seq = synth_phases(vec![(surf, WaveParams::stomach())]).unwrap().remove(0);
        assert_eq!(seq.phases.len(), 21);
        assert_eq!(seq.phases[20], seq.phases[0], "phase 20 must equal phase 0 bitwise");
    }

    #[test]
    fn stomach_period_and_times() {
        let p = WaveParams::<f64>::stomach();
        assert_relative_eq!(p.period(), 11.0, epsilon = 1e-12);
        let times = p.phase_times();
        assert_eq!(times.len(), 21);
        assert_eq!(times[0], 0.0);
        assert_eq!(times[20], 11.0);
        assert_relative_eq!(times[1], 0.55, epsilon = 1e-12);
    }

    #[test]
    fn large_bowel_period() {
        let p = WaveParams::<f64>::large_bowel();
        assert_relative_eq!(p.period(), 5.0, epsilon = 1e-12);
    }

    /// Reference displacements generated by the wave itself.
    fn synth_reference(surf: &TubeSurface<f64>, p: &WaveParams<f64>) -> Vec<Vec<[f64; 3]>> {
        p.phase_times()
            .iter()
            .map(|&t| {
                let d = deform_surface(surf, p, t);
                let mut out = Vec::new();
                for (sb, sd) in surf.sections.iter().zip(&d.sections) {
                    for (a, b) in sb.control_points.iter().zip(&sd.control_points) {
                        out.push(crate::vec3::sub(*b, *a));
                    }
                }
                out
            })
            .collect()
    }

    #[test]
    fn fit_recovers_generating_parameters() {
        let surf = tube(30, 4.0, 10.0);
        let truth = WaveParams::<f64>::stomach();
        let reference = synth_reference(&surf, &truth);
        let fit = fit_wave_params(&surf, &reference, &WaveSearchBox::default()).unwrap();
        assert!(
            (fit.params.amplitude_mm - 16.0).abs() < 0.8,
            "A = {}",
            fit.params.amplitude_mm
        );
        assert!(
            (fit.params.wavelength_mm - 55.0).abs() / 55.0 < 0.05,
            "lambda = {}",
            fit.params.wavelength_mm
        );
        assert!(fit.rmse_mm < 0.1, "residual {}", fit.rmse_mm);
    }

    #[test]
    fn fit_all_zero_reference() {
        let surf = tube(20, 4.0, 10.0);
        let reference: Vec<Vec<[f64; 3]>> =
            (0..21).map(|_| vec![[0.0; 3]; surf.n_sections() * surf.n_rays()]).collect();
        let fit = fit_wave_params(&surf, &reference, &WaveSearchBox::default()).unwrap();
        assert_eq!(fit.params.amplitude_mm, 0.0);
        assert_eq!(fit.rmse_mm, 0.0);
    }

    #[test]
    fn fit_with_noise_stays_close() {
        let surf = tube(30, 4.0, 10.0);
        let truth = WaveParams::<f64>::stomach();
        let mut reference = synth_reference(&surf, &truth);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for ph in &mut reference {
            for v in ph.iter_mut() {
                for a in v.iter_mut() {
                    *a += rng.gen_range(-0.5..0.5);
                }
            }
        }
        let fit = fit_wave_params(&surf, &reference, &WaveSearchBox::default()).unwrap();
        assert!(
            (fit.params.amplitude_mm - 16.0).abs() < 1.5,
            "A = {} under noise",
            fit.params.amplitude_mm
        );
    }

    #[test]
    fn fit_rejects_empty_box() {
        let surf = tube(10, 4.0, 10.0);
        let reference = synth_reference(&surf, &WaveParams::stomach());
        let bad = WaveSearchBox { amplitude_mm: (5.0, 1.0), ..WaveSearchBox::default() };
        assert!(fit_wave_params(&surf, &reference, &bad).is_err());
    }
}
