//! Target sets, distance-weighted Lyapunov functions and greedy action choice.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::foresight::ParticleSet;
use crate::geometry::{pixel_center, Action, Vec2, MAX_PUSH_LENGTH};
use crate::imaging::{grand_sum, load_pgm, Grid, Image};
use crate::scalar::Scalar;

/// Smallest image mass for which the Lyapunov value is defined.
pub const MASS_EPSILON: f64 = 1e-6;

/// Binary mask over pixel centers. At least one pixel is set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSet {
    n: usize,
    mask: Vec<bool>,
}

impl TargetSet {
    pub fn new(n: usize, mask: Vec<bool>) -> Result<Self> {
        if n < 2 || mask.len() != n * n {
            return Err(Error::Dimension(format!("target mask of length {} for resolution {n}", mask.len())));
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::EmptyTarget);
        }
        Ok(Self { n, mask })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mask = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self::new(n, mask)
    }

    /// Pixels whose center lies in the given predicate over world points.
    pub fn from_region(n: usize, mut inside: impl FnMut(f64, f64) -> bool) -> Result<Self> {
        Self::from_fn(n, |i, j| {
            let c: Vec2<f64> = pixel_center(n, i, j);
            inside(c.x, c.y)
        })
    }

    /// Axis-aligned square of the given side, centered on the board.
    pub fn centered_square(n: usize, side: f64) -> Result<Self> {
        let (lo, hi) = (0.5 - 0.5 * side, 0.5 + 0.5 * side);
        Self::from_region(n, |x, y| x >= lo && x <= hi && y >= lo && y <= hi)
    }

    /// L-shape: the `[lo, hi]^2` square minus its upper right `notch` corner.
    pub fn l_shape(n: usize, lo: f64, hi: f64, notch: f64) -> Result<Self> {
        Self::from_region(n, |x, y| {
            let in_square = x >= lo && x <= hi && y >= lo && y <= hi;
            let in_notch = x > hi - notch && y < lo + notch;
            in_square && !in_notch
        })
    }

    /// Nonzero pixels of the image are target pixels.
    pub fn from_image<T: Scalar>(img: &Image<T>) -> Result<Self> {
        Self::new(img.n(), img.as_slice().iter().map(|&v| v > T::zero()).collect())
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_image(&load_pgm::<f64>(path)?)
    }

    pub fn to_image<T: Scalar>(&self) -> Image<T> {
        Image::from_fn_clamped(self.n, |i, j| if self.contains(i, j) { T::one() } else { T::zero() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn centers<T: Scalar>(&self) -> Vec<Vec2<T>> {
        (0..self.n * self.n).filter(|&k| self.mask[k]).map(|k| pixel_center(self.n, k / self.n, k % self.n)).collect()
    }
}

/// `p`-norm distance; `p = inf` gives the max norm.
pub fn p_distance<T: Scalar>(a: Vec2<T>, b: Vec2<T>, p: T) -> T {
    let (dx, dy) = ((a.x - b.x).abs(), (a.y - b.y).abs());
    if p.is_infinite() {
        dx.max(dy)
    } else if p == T::one() {
        dx + dy
    } else if p == T::lit(2.0) {
        dx.hypot(dy)
    } else {
        (dx.powf(p) + dy.powf(p)).powf(p.recip())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField<T> {
    n: usize,
    p: T,
    d: Vec<T>,
    target: TargetSet,
    centers: Vec<Vec2<T>>,
}

impl<T: Scalar> DistanceField<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// Row-major distances, the weight vector of the image Lyapunov function.
    pub fn weights(&self) -> &[T] {
        &self.d
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.d[i * self.n + j]
    }

    pub fn target(&self) -> &TargetSet {
        &self.target
    }

    pub fn target_centers(&self) -> &[Vec2<T>] {
        &self.centers
    }

    pub fn to_grid(&self) -> Grid<T> {
        Grid::new(self.n, self.d.clone()).expect("field has n*n entries")
    }

    /// Distance from an arbitrary point to the nearest target pixel center.
    pub fn point_distance(&self, q: Vec2<T>) -> T {
        self.centers.iter().fold(T::infinity(), |m, &c| m.min(p_distance(q, c, self.p)))
    }
}

/// Exact field by brute force over all pixel/target pairs.
pub fn build_distance_field<T: Scalar>(t: &TargetSet, p: T) -> Result<DistanceField<T>> {
    if !(p >= T::one()) {
        return Err(Error::InvalidValue(format!("norm order {p} must be at least 1")));
    }
    let n = t.n();
    let centers = t.centers::<T>();
    if centers.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let mut field = DistanceField { n, p, d: Vec::new(), target: t.clone(), centers };
    field.d = (0..n * n).map(|k| if t.mask[k] { T::zero() } else { field.point_distance(pixel_center(n, k / n, k % n)) }).collect();
    Ok(field)
}

/// `d . y / sum(y)`.
pub fn lyapunov_image<T: Scalar>(f: &DistanceField<T>, img: &Image<T>) -> Result<T> {
    if img.n() != f.n {
        return Err(Error::ResolutionMismatch { left: f.n, right: img.n() });
    }
    let mass = grand_sum(img);
    if mass < T::lit(MASS_EPSILON) {
        return Err(Error::EmptyScene(mass.as_f64()));
    }
    let weighted: T = f.d.iter().zip(img.as_slice()).filter(|(_, &v)| v != T::zero()).map(|(&d, &v)| d * v).sum();
    Ok(weighted / mass)
}

/// Mean distance from each particle to the nearest target pixel center.
pub fn lyapunov_particles<T: Scalar>(f: &DistanceField<T>, parts: &ParticleSet<T>) -> Result<T> {
    if parts.is_empty() {
        return Err(Error::EmptyParticles);
    }
    let total: T = parts.points.iter().map(|&q| f.point_distance(q)).sum();
    Ok(total / T::from_usize_lossy(parts.len()))
}

/// Lattice of candidate pushes.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionGrid<T> {
    /// Start positions per axis, at `(k + 0.5) / positions`.
    pub positions: usize,
    /// Angles per turn, at `2 pi k / angles`.
    pub angles: usize,
    pub lengths: Vec<T>,
    /// Drop pushes whose end point leaves the unit square.
    pub filter_exiting: bool,
}

impl<T: Scalar> ActionGrid<T> {
    pub fn new(positions: usize, angles: usize, lengths: Vec<T>, filter_exiting: bool) -> Self {
        Self { positions, angles, lengths, filter_exiting }
    }

    /// 8x8 positions, 8 angles, the given lengths, filtered.
    pub fn with_lengths(lengths: &[T]) -> Self {
        Self::new(8, 8, lengths.to_vec(), true)
    }
}

/// Position-major (row of the lattice, then column), then angle, then length.
pub fn enumerate_actions<T: Scalar>(grid: &ActionGrid<T>) -> Result<Vec<Action<T>>> {
    if grid.positions == 0 || grid.angles == 0 || grid.lengths.is_empty() {
        return Err(Error::NoActions);
    }
    if let Some(l) = grid.lengths.iter().find(|&&l| !(l > T::zero() && l <= T::lit(MAX_PUSH_LENGTH))) {
        return Err(Error::OutOfRange(format!("grid push length {l}")));
    }
    let g = T::from_usize_lossy(grid.positions);
    let mut out = Vec::new();
    for r in 0..grid.positions {
        for c in 0..grid.positions {
            let px = (T::from_usize_lossy(c) + T::lit(0.5)) / g;
            let py = (T::from_usize_lossy(r) + T::lit(0.5)) / g;
            for k in 0..grid.angles {
                let theta = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(grid.angles);
                for &l in &grid.lengths {
                    let a = Action::new(px, py, theta, l)?;
                    if grid.filter_exiting {
                        let e = a.end();
                        let inside = |v: T| v >= T::zero() && v <= T::one();
                        if !(inside(e.x) && inside(e.y)) {
                            continue;
                        }
                    }
                    out.push(a);
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoActions);
    }
    Ok(out)
}

/// A one-step image model usable by the greedy controller.
pub trait Predictor<T: Scalar>: Sync {
    fn predict(&self, img: &Image<T>, a: &Action<T>) -> Result<Image<T>>;

    /// Lyapunov value of the predicted next state.
    fn predicted_value(&self, f: &DistanceField<T>, img: &Image<T>, a: &Action<T>) -> Result<T> {
        lyapunov_image(f, &self.predict(img, a)?)
    }
}

/// Predicts `I_{k+1} = I_k` for every action.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityPredictor;

impl<T: Scalar> Predictor<T> for IdentityPredictor {
    fn predict(&self, img: &Image<T>, _a: &Action<T>) -> Result<Image<T>> {
        Ok(img.clone())
    }
}

/// Adapts a closure into a [`Predictor`].
pub struct FnPredictor<F>(pub F);

impl<T, F> Predictor<T> for FnPredictor<F>
where
    T: Scalar,
    F: Fn(&Image<T>, &Action<T>) -> Result<Image<T>> + Sync,
{
    fn predict(&self, img: &Image<T>, a: &Action<T>) -> Result<Image<T>> {
        (self.0)(img, a)
    }
}

/// Scores every action of `actions`; the first minimum in order wins.
pub fn greedy_over<T: Scalar, P: Predictor<T> + ?Sized>(
    predictor: &P,
    img: &Image<T>,
    f: &DistanceField<T>,
    actions: &[Action<T>],
) -> Result<(Action<T>, T)> {
    if actions.is_empty() {
        return Err(Error::NoActions);
    }
    lyapunov_image(f, img)?;
    let values = actions.par_iter().map(|a| predictor.predicted_value(f, img, a)).collect::<Result<Vec<T>>>()?;
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    Ok((actions[best], values[best]))
}

pub fn greedy_action<T: Scalar, P: Predictor<T> + ?Sized>(
    predictor: &P,
    img: &Image<T>,
    f: &DistanceField<T>,
    grid: &ActionGrid<T>,
) -> Result<(Action<T>, T)> {
    greedy_over(predictor, img, f, &enumerate_actions(grid)?)
}
