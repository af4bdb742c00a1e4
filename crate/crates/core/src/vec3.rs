//! Small helpers for `[T; 3]` points and vectors (world coordinates in mm).

use crate::real::Real;

#[inline]
pub fn add<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<T: Real>(a: [T; 3], s: T) -> [T; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm<T: Real>(a: [T; 3]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    norm(sub(a, b))
}

/// Unit vector along `a`; `None` when `|a|` is numerically zero.
#[inline]
pub fn normalize<T: Real>(a: [T; 3]) -> Option<[T; 3]> {
    let n = norm(a);
    if n <= T::epsilon().sqrt() * T::of(1e-3) || !n.is_finite() {
        None
    } else {
        Some(scale(a, T::one() / n))
    }
}

/// Linear interpolation `a + t (b - a)`.
#[inline]
pub fn lerp<T: Real>(a: [T; 3], b: [T; 3], t: T) -> [T; 3] {
    add(a, scale(sub(b, a), t))
}

/// Rotate `v` around unit axis `k` by `angle` (Rodrigues).
pub fn rotate_about<T: Real>(v: [T; 3], k: [T; 3], angle: T) -> [T; 3] {
    let (s, c) = (angle.sin(), angle.cos());
    let kxv = cross(k, v);
    let kdv = dot(k, v);
    [
        v[0] * c + kxv[0] * s + k[0] * kdv * (T::one() - c),
        v[1] * c + kxv[1] * s + k[1] * kdv * (T::one() - c),
        v[2] * c + kxv[2] * s + k[2] * kdv * (T::one() - c),
    ]
}

/// Any unit vector orthogonal to unit `t`: picks the world axis least aligned
/// with `t` and projects it.
pub fn any_orthonormal<T: Real>(t: [T; 3]) -> [T; 3] {
    let ax = [t[0].abs(), t[1].abs(), t[2].abs()];
    let mut axis = [T::zero(); 3];
    if ax[0] <= ax[1] && ax[0] <= ax[2] {
        axis[0] = T::one();
    } else if ax[1] <= ax[2] {
        axis[1] = T::one();
    } else {
        axis[2] = T::one();
    }
    let proj = sub(axis, scale(t, dot(axis, t)));
    normalize(proj).expect("projection of least-aligned axis is nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cross_is_orthogonal() {
        let a = [1.0, 2.0, 3.0];
        let b = [-2.0, 0.5, 4.0];
        let c = cross(a, b);
        assert_relative_eq!(dot(a, c), 0.0, epsilon = 1e-12);
        assert_relative_eq!(dot(b, c), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotate_quarter_turn() {
        let v = rotate_about([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(v[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn any_orthonormal_is_unit_and_orthogonal() {
        for t in [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.6, 0.64, 0.48]] {
            let t = normalize(t).unwrap();
            let n = any_orthonormal(t);
            assert_relative_eq!(norm(n), 1.0, epsilon = 1e-12);
            assert_relative_eq!(dot(t, n), 0.0, epsilon = 1e-12);
        }
    }
}
