//! Push actions, swept push rectangles, and the canonical-frame warp.
//!
//! World coordinates coincide with image coordinates: `x` to the right and
//! `y` down, both in `[0, 1]`. Pixel `(i, j)` of an `n x n` image has its
//! center at `((j + 0.5) / n, (i + 0.5) / n)`.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::imaging::{clamp_unit, Image};
use crate::scalar::Scalar;

/// Longest admissible push, world units.
pub const MAX_PUSH_LENGTH: f64 = 0.5;
/// Default pusher width, world units.
pub const DEFAULT_PUSHER_WIDTH: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    /// Counter-clockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    #[inline]
    pub fn from_angle(theta: T) -> Self {
        Self::new(theta.cos(), theta.sin())
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

/// Center of pixel `(i, j)` in an `n x n` image.
#[inline]
pub fn pixel_center<T: Scalar>(n: usize, i: usize, j: usize) -> Vec2<T> {
    let n = T::from_usize_lossy(n);
    let half = T::lit(0.5);
    Vec2::new((T::from_usize_lossy(j) + half) / n, (T::from_usize_lossy(i) + half) / n)
}

/// A planar push: the pusher edge is centered at `(px, py)`, perpendicular to
/// `theta`, and travels `length` along `theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action<T> {
    pub px: T,
    pub py: T,
    pub theta: T,
    pub length: T,
}

impl<T: Scalar> Action<T> {
    /// Validates the action and wraps `theta` into `[0, 2pi)`.
    pub fn new(px: T, py: T, theta: T, length: T) -> Result<Self> {
        let unit = |v: T| v.is_finite() && v >= T::zero() && v <= T::one();
        if !unit(px) || !unit(py) {
            return Err(Error::InvalidValue(format!("push start ({px}, {py}) is outside the workspace")));
        }
        if !(length > T::zero() && length <= T::lit(MAX_PUSH_LENGTH)) {
            return Err(Error::InvalidValue(format!("push length {length} outside (0, {MAX_PUSH_LENGTH}]")));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidValue("push angle is not finite".into()));
        }
        Ok(Self { px, py, theta: wrap_angle(theta), length })
    }

    /// The pose every push is mapped to: start at the image center, pointing `+x`.
    pub fn canonical(length: T) -> Result<Self> {
        let half = T::lit(0.5);
        Self::new(half, half, T::zero(), length)
    }

    #[inline]
    pub fn start(&self) -> Vec2<T> {
        Vec2::new(self.px, self.py)
    }

    #[inline]
    pub fn direction(&self) -> Vec2<T> {
        Vec2::from_angle(self.theta)
    }

    #[inline]
    pub fn end(&self) -> Vec2<T> {
        self.start() + self.direction() * self.length
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_angle<T: Scalar>(theta: T) -> T {
    let tau = T::TAU();
    let mut t = theta % tau;
    if t < T::zero() {
        t = t + tau;
    }
    if t >= tau {
        t = T::zero();
    }
    t
}

/// Region swept by the pusher during one action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushRectangle<T> {
    /// Counter-clockwise in `(x, y)` coordinates: near-right, far-right,
    /// far-left, near-left relative to the push direction.
    pub corners: [Vec2<T>; 4],
    pub start: Vec2<T>,
    pub direction: Vec2<T>,
    pub length: T,
    pub width: T,
}

impl<T: Scalar> PushRectangle<T> {
    /// Coordinates of `p` in the pusher frame: distance along the push and
    /// signed lateral offset from the push line.
    #[inline]
    pub fn local(&self, p: Vec2<T>) -> (T, T) {
        let d = p - self.start;
        (d.dot(self.direction), d.dot(self.direction.perp()))
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2<T>) -> bool {
        let (along, lateral) = self.local(p);
        let half = self.width * T::lit(0.5);
        along >= T::zero() && along <= self.length && lateral.abs() <= half
    }
}

pub fn push_rectangle<T: Scalar>(a: &Action<T>, width: T) -> PushRectangle<T> {
    let dir = a.direction();
    let side = dir.perp() * (width * T::lit(0.5));
    let s = a.start();
    let e = s + dir * a.length;
    PushRectangle { corners: [s - side, e - side, e + side, s + side], start: s, direction: dir, length: a.length, width }
}

/// Rigid planar transform `p -> R p + t`, stored as a 2x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap<T> {
    pub m: [[T; 3]; 2],
}

impl<T: Scalar> AffineMap<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[o, z, z], [z, o, z]] }
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[o, z, tx], [z, o, ty]] }
    }

    /// Rotation by `angle` (counter-clockwise in `(x, y)`) about `center`.
    pub fn rotation_about(angle: T, center: Vec2<T>) -> Self {
        let (s, c) = angle.sin_cos();
        let t = center - Vec2::new(c * center.x - s * center.y, s * center.x + c * center.y);
        Self { m: [[c, -s, t.x], [s, c, t.y]] }
    }

    #[inline]
    pub fn apply(&self, p: Vec2<T>) -> Vec2<T> {
        let m = &self.m;
        Vec2::new(m[0][0] * p.x + m[0][1] * p.y + m[0][2], m[1][0] * p.x + m[1][1] * p.y + m[1][2])
    }

    /// Applies only the linear block.
    #[inline]
    pub fn apply_linear(&self, v: Vec2<T>) -> Vec2<T> {
        let m = &self.m;
        Vec2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
    }

    pub fn determinant(&self) -> T {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Self {
        let m = &self.m;
        let det = self.determinant();
        let a = m[1][1] / det;
        let b = -m[0][1] / det;
        let c = -m[1][0] / det;
        let d = m[0][0] / det;
        let tx = -(a * m[0][2] + b * m[1][2]);
        let ty = -(c * m[0][2] + d * m[1][2]);
        Self { m: [[a, b, tx], [c, d, ty]] }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[T::zero(); 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] = m[r][2] + a[r][2];
        }
        Self { m }
    }

    /// Rotation block orthonormal with determinant +1, within `tol`.
    pub fn is_rigid(&self, tol: T) -> bool {
        let m = &self.m;
        let c0 = Vec2::new(m[0][0], m[1][0]);
        let c1 = Vec2::new(m[0][1], m[1][1]);
        (c0.norm() - T::one()).abs() <= tol
            && (c1.norm() - T::one()).abs() <= tol
            && c0.dot(c1).abs() <= tol
            && (self.determinant() - T::one()).abs() <= tol
    }

    pub fn transform_rectangle(&self, r: &PushRectangle<T>) -> [Vec2<T>; 4] {
        r.corners.map(|c| self.apply(c))
    }
}

/// Maps the push start to the image center and the push direction to `+x`.
pub fn canonical_transform<T: Scalar>(a: &Action<T>) -> AffineMap<T> {
    let half = T::lit(0.5);
    // the canonical frame rotates by -theta about the push start, then translates
    let (s, c) = a.theta.sin_cos();
    let rot = [[c, s], [-s, c]];
    let tx = half - (rot[0][0] * a.px + rot[0][1] * a.py);
    let ty = half - (rot[1][0] * a.px + rot[1][1] * a.py);
    AffineMap { m: [[rot[0][0], rot[0][1], tx], [rot[1][0], rot[1][1], ty]] }
}

#[inline]
fn snap<T: Scalar>(u: T) -> T {
    let r = u.round();
    if (u - r).abs() < T::lit(1e-9) {
        r
    } else {
        u
    }
}

/// Bilinear sample of a row-major `n x n` grid at world point `p`, with
/// taps outside the grid reading zero.
#[inline]
pub(crate) fn bilinear_sample<T: Scalar>(values: &[T], n: usize, p: Vec2<T>) -> T {
    let nf = T::from_usize_lossy(n);
    let half = T::lit(0.5);
    let u = snap(p.x * nf - half);
    let v = snap(p.y * nf - half);
    if !(u.is_finite() && v.is_finite()) {
        return T::zero();
    }
    let uf = u.floor();
    let vf = v.floor();
    let fu = u - uf;
    let fv = v - vf;
    let (j0, i0) = match (uf.to_i64(), vf.to_i64()) {
        (Some(j), Some(i)) => (j, i),
        _ => return T::zero(),
    };
    let n = n as i64;
    let tap = |i: i64, j: i64| -> T {
        if i >= 0 && j >= 0 && i < n && j < n {
            values[(i * n + j) as usize]
        } else {
            T::zero()
        }
    };
    let one = T::one();
    let mut acc = T::zero();
    let w00 = (one - fu) * (one - fv);
    if w00 != T::zero() {
        acc = acc + w00 * tap(i0, j0);
    }
    let w01 = fu * (one - fv);
    if w01 != T::zero() {
        acc = acc + w01 * tap(i0, j0 + 1);
    }
    let w10 = (one - fu) * fv;
    if w10 != T::zero() {
        acc = acc + w10 * tap(i0 + 1, j0);
    }
    let w11 = fu * fv;
    if w11 != T::zero() {
        acc = acc + w11 * tap(i0 + 1, j0 + 1);
    }
    acc
}

/// Warps raw grid values without clamping. Output pixel `c` reads the input
/// at `t^-1(c)`.
pub fn warp_values<T: Scalar>(values: &[T], n: usize, t: &AffineMap<T>) -> Vec<T> {
    let inv = t.inverse();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(bilinear_sample(values, n, inv.apply(pixel_center(n, i, j))));
        }
    }
    out
}

pub fn warp_image<T: Scalar>(img: &Image<T>, t: &AffineMap<T>) -> Image<T> {
    let n = img.n();
    let mut out = warp_values(img.as_slice(), n, t);
    for v in &mut out {
        *v = clamp_unit(*v);
    }
    Image::from_vec_clamped(n, out).expect("warp preserves resolution")
}

/// Blend weights marking where a round trip through `t` and back kept valid data.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask<T>(Image<T>);

impl<T: Scalar> Mask<T> {
    pub fn as_image(&self) -> &Image<T> {
        &self.0
    }

    pub fn into_image(self) -> Image<T> {
        self.0
    }

    pub fn from_image(img: Image<T>) -> Self {
        Self(img)
    }
}

pub fn warp_mask<T: Scalar>(t: &AffineMap<T>, n: usize) -> Mask<T> {
    let forward = warp_image(&Image::ones(n), t);
    Mask(warp_image(&forward, &t.inverse()))
}

/// `m * pred + (1 - m) * original`, clamped.
pub fn compose_prediction<T: Scalar>(original: &Image<T>, warped_back_pred: &Image<T>, m: &Mask<T>) -> Result<Image<T>> {
    let n = original.n();
    for other in [warped_back_pred.n(), m.0.n()] {
        if other != n {
            return Err(Error::ResolutionMismatch { left: n, right: other });
        }
    }
    let data = original
        .as_slice()
        .iter()
        .zip(warped_back_pred.as_slice())
        .zip(m.0.as_slice())
        .map(|((&o, &p), &w)| w * p + (T::one() - w) * o)
        .collect();
    Image::from_vec_clamped(n, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::frobenius_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: Vec2<f64>, b: Vec2<f64>, tol: f64) -> bool {
        (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol
    }

    fn random_action(rng: &mut impl Rng) -> Action<f64> {
        Action::new(rng.gen(), rng.gen(), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.01..MAX_PUSH_LENGTH)).unwrap()
    }

    fn random_image(rng: &mut impl Rng, n: usize) -> Image<f64> {
        Image::new(n, (0..n * n).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn action_validation() {
        assert!(Action::new(0.5, 0.5, 0.0, 0.0).is_err());
        assert!(Action::new(0.5, 0.5, 0.0, 0.6).is_err());
        assert!(Action::new(1.2, 0.5, 0.0, 0.1).is_err());
        let a = Action::new(0.5, 0.5, -FRAC_PI_2, 0.1).unwrap();
        assert!((a.theta - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_push_rectangle() {
        let a = Action::new(0.5, 0.5, 0.0, 0.2).unwrap();
        let r = push_rectangle(&a, 0.25);
        let expected = [Vec2::new(0.5, 0.375), Vec2::new(0.7, 0.375), Vec2::new(0.7, 0.625), Vec2::new(0.5, 0.625)];
        for (c, e) in r.corners.iter().zip(expected) {
            assert!(close(*c, e, 1e-15), "{c:?} vs {e:?}");
        }
        assert!(r.contains(Vec2::new(0.6, 0.5)));
        assert!(!r.contains(Vec2::new(0.4, 0.5)));
    }

    #[test]
    fn reversed_push_rectangle_mirrors() {
        let r0 = push_rectangle(&Action::new(0.5, 0.5, 0.0, 0.2).unwrap(), 0.25);
        let r1 = push_rectangle(&Action::new(0.5, 0.5, PI, 0.2).unwrap(), 0.25);
        for (c0, c1) in r0.corners.iter().zip(&r1.corners) {
            // mirror through the start point
            assert!(close(*c1, Vec2::new(1.0 - c0.x, 1.0 - c0.y), 1e-12));
        }
        assert!(r1.contains(Vec2::new(0.35, 0.5)));
    }

    #[test]
    fn push_rectangle_matches_trig_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = random_action(&mut rng);
            let w = rng.gen_range(0.05..0.4);
            let r = push_rectangle(&a, w);
            // corners of the axis-aligned rectangle at the origin, rotated then translated
            let local = [(0.0, -w / 2.0), (a.length, -w / 2.0), (a.length, w / 2.0), (0.0, w / 2.0)];
            for (c, (lx, ly)) in r.corners.iter().zip(local) {
                let x = a.px + lx * a.theta.cos() - ly * a.theta.sin();
                let y = a.py + lx * a.theta.sin() + ly * a.theta.cos();
                assert!(close(*c, Vec2::new(x, y), 1e-12));
            }
        }
    }

    #[test]
    fn canonical_transform_examples() {
        let t = canonical_transform(&Action::new(0.5, 0.5, 0.0, 0.1).unwrap());
        assert!(t.m.iter().flatten().zip(AffineMap::<f64>::identity().m.iter().flatten()).all(|(a, b)| (a - b).abs() < 1e-15));

        let t = canonical_transform(&Action::new(0.5, 0.5, FRAC_PI_2, 0.1).unwrap());
        let rot = AffineMap::rotation_about(-FRAC_PI_2, Vec2::new(0.5, 0.5));
        assert!(t.m.iter().flatten().zip(rot.m.iter().flatten()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn canonical_transform_sends_start_and_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = random_action(&mut rng);
            let t = canonical_transform(&a);
            assert!(t.is_rigid(1e-12));
            assert!(close(t.apply(a.start()), Vec2::new(0.5, 0.5), 1e-12));
            assert!(close(t.apply_linear(a.direction()), Vec2::new(1.0, 0.0), 1e-12));
            let inv2 = t.inverse().inverse();
            assert!(t.m.iter().flatten().zip(inv2.m.iter().flatten()).all(|(x, y)| (x - y).abs() < 1e-12));

            let w = 0.25;
            let mapped = t.transform_rectangle(&push_rectangle(&a, w));
            let canon = push_rectangle(&Action::canonical(a.length).unwrap(), w);
            for (m, c) in mapped.iter().zip(&canon.corners) {
                assert!(close(*m, *c, 1e-9));
            }
        }
    }

    #[test]
    fn warp_identity_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [5, 32] {
            let img = random_image(&mut rng, n);
            assert_eq!(warp_image(&img, &AffineMap::identity()), img);
        }
    }

    #[test]
    fn warp_integer_translation_shifts_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 16;
        let img = random_image(&mut rng, n);
        let pitch = 1.0 / n as f64;
        let out = warp_image(&img, &AffineMap::translation(2.0 * pitch, -pitch));
        for i in 0..n {
            for j in 0..n {
                let (si, sj) = (i as i64 + 1, j as i64 - 2);
                let expected = if si >= 0 && sj >= 0 && si < n as i64 && sj < n as i64 { img.get(si as usize, sj as usize) } else { 0.0 };
                assert!((out.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn warp_quarter_turn_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 32;
        let img = random_image(&mut rng, n);
        let rot = AffineMap::rotation_about(FRAC_PI_2, Vec2::new(0.5, 0.5));
        let out = warp_image(&img, &rot);
        // a CCW quarter turn in (x, y) sends pixel (i, j) to (j, n - 1 - i)
        for i in 0..n {
            for j in 0..n {
                assert!((out.get(j, n - 1 - i) - img.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn warp_mask_examples() {
        let m = warp_mask(&AffineMap::<f64>::identity(), 8);
        assert!(m.as_image().as_slice().iter().all(|&v| v == 1.0));
        let gone = warp_mask(&AffineMap::<f64>::translation(3.0, 0.0), 8);
        assert!(gone.as_image().as_slice().iter().all(|&v| v == 0.0));
    }

    /// Output pixel of a warp reads full weight from in-bounds taps only.
    fn support_in_bounds(n: usize, p: Vec2<f64>) -> bool {
        let u = p.x * n as f64 - 0.5;
        let v = p.y * n as f64 - 0.5;
        let (j0, i0) = (u.floor(), v.floor());
        let (fu, fv) = (u - j0, v - i0);
        let mut taps = vec![(i0, j0)];
        if fu > 1e-9 {
            taps.push((i0, j0 + 1.0));
        }
        if fv > 1e-9 {
            taps.push((i0 + 1.0, j0));
        }
        if fu > 1e-9 && fv > 1e-9 {
            taps.push((i0 + 1.0, j0 + 1.0));
        }
        taps.iter().all(|&(i, j)| i >= 0.0 && j >= 0.0 && i < n as f64 && j < n as f64)
    }

    #[test]
    fn warp_mask_matches_footprint_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 16;
        for _ in 0..30 {
            let a = random_action(&mut rng);
            let t = canonical_transform(&a);
            let inv = t.inverse();
            let m = warp_mask(&t, n);
            for i in 0..n {
                for j in 0..n {
                    let v = m.as_image().get(i, j);
                    assert!((0.0..=1.0).contains(&v));
                    // second warp samples the intermediate at t(c); every tap there
                    // must itself have been filled from in-bounds input
                    let q = t.apply(pixel_center(n, i, j));
                    if !support_in_bounds(n, q) {
                        continue;
                    }
                    let u = q.x * n as f64 - 0.5;
                    let vv = q.y * n as f64 - 0.5;
                    let (j0, i0) = (u.floor() as i64, vv.floor() as i64);
                    let all_full = [(i0, j0), (i0, j0 + 1), (i0 + 1, j0), (i0 + 1, j0 + 1)].iter().all(|&(ti, tj)| {
                        if ti < 0 || tj < 0 || ti >= n as i64 || tj >= n as i64 {
                            return true; // zero-weight tap outside the grid
                        }
                        support_in_bounds(n, inv.apply(pixel_center(n, ti as usize, tj as usize)))
                    });
                    if all_full {
                        assert!((v - 1.0).abs() < 1e-9, "pixel ({i},{j}) mask {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn compose_examples() {
        let orig = Image::<f64>::zeros(4);
        let pred = Image::<f64>::ones(4);
        let ones = Mask::from_image(Image::ones(4));
        let zeros = Mask::from_image(Image::zeros(4));
        let half = Mask::from_image(Image::filled(4, 0.5));
        assert_eq!(compose_prediction(&orig, &pred, &ones).unwrap(), pred);
        assert_eq!(compose_prediction(&orig, &pred, &zeros).unwrap(), orig);
        assert_eq!(compose_prediction(&orig, &pred, &half).unwrap(), Image::filled(4, 0.5));
        assert!(compose_prediction(&orig, &Image::zeros(5), &half).is_err());
    }

    #[test]
    fn warp_is_linear_before_clamping() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 16;
        for _ in 0..20 {
            let t = canonical_transform(&random_action(&mut rng));
            let a: Vec<f64> = (0..n * n).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..n * n).map(|_| rng.gen()).collect();
            let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let wa = warp_values(&a, n, &t);
            let wb = warp_values(&b, n, &t);
            for (k, w) in warp_values(&mix, n, &t).iter().enumerate() {
                assert!((w - (alpha * wa[k] + beta * wb[k])).abs() < 1e-9);
            }
        }
    }

    /// Blocky image with a zero border: a few axis-aligned rectangles of constant intensity.
    fn piecewise_constant(rng: &mut impl Rng, n: usize) -> Image<f64> {
        let mut data = vec![0.0; n * n];
        for _ in 0..rng.gen_range(1..5) {
            let (i0, j0) = (rng.gen_range(4..n - 8), rng.gen_range(4..n - 8));
            let (h, w) = (rng.gen_range(2..6), rng.gen_range(2..6));
            let v: f64 = rng.gen();
            for i in i0..i0 + h {
                for j in j0..j0 + w {
                    data[i * n + j] = v;
                }
            }
        }
        Image::new(n, data).unwrap()
    }

    #[test]
    fn round_trip_through_canonical_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 32;
        let round_trip = |img: &Image<f64>, t: &AffineMap<f64>| {
            let back = warp_image(&warp_image(img, t), &t.inverse());
            let composed = compose_prediction(img, &back, &warp_mask(t, n)).unwrap();
            frobenius_distance(&composed, img).unwrap()
        };
        // exact cases
        for k in 0..4 {
            let img = piecewise_constant(&mut rng, n);
            let rot = AffineMap::rotation_about(k as f64 * FRAC_PI_2, Vec2::new(0.5, 0.5));
            assert!(round_trip(&img, &rot) < 1e-9);
            let shift = AffineMap::translation(3.0 / n as f64, -5.0 / n as f64);
            assert!(round_trip(&img, &shift) < 1e-9);
        }
        // general rigid maps blur edges; bound the per-pixel RMS error
        for _ in 0..100 {
            let img = piecewise_constant(&mut rng, n);
            let t = canonical_transform(&random_action(&mut rng));
            let err = round_trip(&img, &t);
            assert!(err / n as f64 <= 0.15, "rms round-trip error {}", err / n as f64);
        }
    }
}
