//! Image prediction models.
//!
//! [`SwitchedLinearModel`] keeps one transition matrix per discrete push
//! length and predicts in the canonical frame: the image is warped so the
//! push starts at the center pointing `+x`, multiplied by the matrix of the
//! nearest length, warped back, and blended with the original through the
//! round-trip mask.
//!
//! [`TransportModel`] is the object-centric baseline: occupied pixels inside
//! the push rectangle are resampled uniformly from a band just ahead of it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{canonical_transform, compose_prediction, pixel_center, push_rectangle, warp_image, warp_mask, Action, Vec2};
use crate::imaging::{clamp_unit, Grid, Image};
use crate::lsq::{fit_stats, FitMode, GramStats, PairedDataset, SolverConfig, TransitionMatrix};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: [u8; 4] = *b"SLVF";
pub const MODEL_VERSION: u32 = 1;

/// Default discrete push lengths: five values uniform on `[0.06, 0.30]`.
pub fn default_lengths<T: Scalar>() -> Vec<T> {
    (0..5).map(|k| T::lit(0.06 + 0.06 * k as f64)).collect()
}

#[derive(Clone, Debug)]
pub struct SwitchedLinearModel<T> {
    n: usize,
    lengths: Vec<T>,
    matrices: Vec<TransitionMatrix<T>>,
    pusher_width: T,
    mode: FitMode,
    // column-major copies for sparse products
    columns: Vec<Vec<T>>,
}

impl<T: Scalar> PartialEq for SwitchedLinearModel<T> {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n
            && self.lengths == o.lengths
            && self.pusher_width == o.pusher_width
            && self.mode == o.mode
            && self.matrices.len() == o.matrices.len()
            && self.matrices.iter().zip(&o.matrices).all(|(a, b)| a.as_slice() == b.as_slice())
    }
}

impl<T: Scalar> SwitchedLinearModel<T> {
    pub fn new(n: usize, lengths: Vec<T>, matrices: Vec<TransitionMatrix<T>>, pusher_width: T, mode: FitMode) -> Result<Self> {
        if lengths.is_empty() || lengths.len() != matrices.len() {
            return Err(Error::Dimension(format!("{} lengths for {} matrices", lengths.len(), matrices.len())));
        }
        if lengths.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidValue("push lengths must be strictly increasing".into()));
        }
        if let Some(m) = matrices.iter().find(|m| m.dim() != n * n) {
            return Err(Error::Dimension(format!("matrix dim {} for resolution {n}", m.dim())));
        }
        if !(pusher_width > T::zero()) {
            return Err(Error::InvalidValue(format!("pusher width {pusher_width} must be positive")));
        }
        let columns = matrices.iter().map(TransitionMatrix::transposed).collect();
        Ok(Self { n, lengths, matrices, pusher_width, mode, columns })
    }

    /// Model whose every matrix is `c I`.
    pub fn scaled_identity(n: usize, lengths: Vec<T>, c: T, pusher_width: T) -> Result<Self> {
        let mats = lengths.iter().map(|_| TransitionMatrix::scaled_identity(n * n, c, FitMode::Ols)).collect();
        Self::new(n, lengths, mats, pusher_width, FitMode::Ols)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lengths(&self) -> &[T] {
        &self.lengths
    }

    pub fn matrices(&self) -> &[TransitionMatrix<T>] {
        &self.matrices
    }

    pub fn pusher_width(&self) -> T {
        self.pusher_width
    }

    pub fn mode(&self) -> FitMode {
        self.mode
    }

    /// Index of the length closest to `length`; ties go to the shorter push.
    pub fn nearest_length_index(&self, length: T) -> usize {
        let mut best = 0;
        for k in 1..self.lengths.len() {
            if (self.lengths[k] - length).abs() < (self.lengths[best] - length).abs() {
                best = k;
            }
        }
        best
    }

    /// `A_k y` for a canonical-frame vector, unclamped.
    pub fn apply_canonical(&self, k: usize, y: &[T]) -> Vec<T> {
        let d = self.n * self.n;
        let cols = &self.columns[k];
        let mut out = vec![T::zero(); d];
        for (j, &v) in y.iter().enumerate() {
            if v != T::zero() {
                for (o, &a) in out.iter_mut().zip(&cols[j * d..(j + 1) * d]) {
                    *o = *o + a * v;
                }
            }
        }
        out
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.matrices.len() {
            return Err(Error::OutOfRange(format!("length index {k} (model has {})", self.matrices.len())));
        }
        Ok(())
    }

    /// Row `i * n + j` of matrix `k` as an `n x n` grid.
    pub fn extract_kernel(&self, k: usize, i: usize, j: usize) -> Result<Grid<T>> {
        self.check_index(k)?;
        if i >= self.n || j >= self.n {
            return Err(Error::OutOfRange(format!("pixel ({i}, {j}) outside a {0}x{0} image", self.n)));
        }
        Grid::new(self.n, self.matrices[k].row(i * self.n + j).to_vec())
    }

    /// `A_k (0.5 * 1)` as an `n x n` grid.
    pub fn step_response(&self, k: usize) -> Result<Grid<T>> {
        self.check_index(k)?;
        let half = vec![T::lit(0.5); self.n * self.n];
        Grid::new(self.n, self.apply_canonical(k, &half))
    }
}

pub fn train_switched_linear<T: Scalar>(
    datasets: &[PairedDataset<T>],
    lengths: &[T],
    mode: FitMode,
    cfg: &SolverConfig<T>,
    pusher_width: T,
) -> Result<SwitchedLinearModel<T>> {
    if datasets.len() != lengths.len() {
        return Err(Error::Dimension(format!("{} datasets for {} lengths", datasets.len(), lengths.len())));
    }
    let first = datasets.first().ok_or(Error::EmptyBucket(0))?;
    let n = crate::imaging::square_side(first.dim())
        .ok_or_else(|| Error::Dimension(format!("data dimension {} is not a square image", first.dim())))?;
    let mut matrices = Vec::with_capacity(datasets.len());
    for (k, data) in datasets.iter().enumerate() {
        if data.samples() == 0 {
            return Err(Error::EmptyBucket(k));
        }
        if data.dim() != n * n {
            return Err(Error::Dimension(format!("bucket {k} has dimension {}", data.dim())));
        }
        matrices.push(fit_stats(&GramStats::from_dataset(data), mode, cfg)?);
    }
    SwitchedLinearModel::new(n, lengths.to_vec(), matrices, pusher_width, mode)
}

pub fn predict_linear<T: Scalar>(model: &SwitchedLinearModel<T>, img: &Image<T>, a: &Action<T>) -> Result<Image<T>> {
    if img.n() != model.n {
        return Err(Error::ResolutionMismatch { left: model.n, right: img.n() });
    }
    let t = canonical_transform(a);
    let canon = warp_image(img, &t);
    let k = model.nearest_length_index(a.length);
    let y = model.apply_canonical(k, canon.as_slice());
    let pred = Image::from_vec_clamped(model.n, y)?;
    let back = warp_image(&pred, &t.inverse());
    compose_prediction(img, &back, &warp_mask(&t, model.n))
}

pub fn write_model<T: Scalar, W: Write>(model: &SwitchedLinearModel<T>, mut w: W) -> Result<()> {
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(model.n as u32).to_le_bytes())?;
    w.write_all(&(model.lengths.len() as u32).to_le_bytes())?;
    w.write_all(&model.mode.code().to_le_bytes())?;
    w.write_all(&model.pusher_width.as_f64().to_le_bytes())?;
    for l in &model.lengths {
        w.write_all(&l.as_f64().to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(model.n.pow(4) * 8);
    for m in &model.matrices {
        buf.clear();
        for v in m.as_slice() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, k: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < k {
            return Err(Error::Truncated(format!("ended while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn read_model<T: Scalar, R: Read>(mut r: R) -> Result<SwitchedLinearModel<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = ByteCursor { bytes: &bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic { expected: MODEL_MAGIC, found: magic });
    }
    let version = cur.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch { expected: MODEL_VERSION, found: version });
    }
    let n = cur.u32("resolution")? as usize;
    let k = cur.u32("length count")? as usize;
    let mode_code = cur.u32("mode")?;
    let mode = FitMode::from_code(mode_code).ok_or_else(|| Error::Format(format!("unknown mode code {mode_code}")))?;
    let pusher_width = T::lit(cur.f64("pusher width")?);
    let lengths = (0..k).map(|_| cur.f64("lengths").map(T::lit)).collect::<Result<Vec<_>>>()?;
    let d = n * n;
    let mut matrices = Vec::with_capacity(k);
    for idx in 0..k {
        let raw = cur.take(d * d * 8, &format!("matrix {idx}"))?;
        let data = raw.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect();
        matrices.push(TransitionMatrix::from_vec(d, data, mode)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after the last matrix", bytes.len() - cur.pos)));
    }
    SwitchedLinearModel::new(n, lengths, matrices, pusher_width, mode)
}

pub fn save_model<T: Scalar>(model: &SwitchedLinearModel<T>, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<SwitchedLinearModel<T>> {
    read_model(BufReader::new(File::open(path)?))
}

/// Point set standing in for the unobservable object state.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParticleSet<T> {
    pub points: Vec<Vec2<T>>,
}

impl<T: Scalar> ParticleSet<T> {
    pub fn new(points: Vec<Vec2<T>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Centers of pixels brighter than `threshold`, in row-major order.
pub fn particles_from_image<T: Scalar>(img: &Image<T>, threshold: T) -> ParticleSet<T> {
    let n = img.n();
    let mut points = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if img.get(i, j) > threshold {
                points.push(pixel_center(n, i, j));
            }
        }
    }
    ParticleSet { points }
}

/// Binary image with every pixel that holds a particle set to 1.
pub fn rasterize_particles<T: Scalar>(parts: &ParticleSet<T>, n: usize) -> Image<T> {
    let mut data = vec![T::zero(); n * n];
    let nf = T::from_usize_lossy(n);
    for p in &parts.points {
        let j = (p.x * nf).floor().to_usize().unwrap_or(0).min(n - 1);
        let i = (p.y * nf).floor().to_usize().unwrap_or(0).min(n - 1);
        data[i * n + j] = T::one();
    }
    Image::from_vec_clamped(n, data).expect("valid resolution")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportModel<T> {
    /// Extent of the landing band along the push.
    pub band_depth: T,
    /// Extent of the landing band across the push.
    pub band_width: T,
    pub pusher_width: T,
    pub rng_seed_base: u64,
}

impl<T: Scalar> TransportModel<T> {
    /// Band sized from the pusher: `0.5 w` deep and `w` wide.
    pub fn for_pusher(pusher_width: T, rng_seed_base: u64) -> Self {
        Self { band_depth: pusher_width * T::lit(0.5), band_width: pusher_width, pusher_width, rng_seed_base }
    }

    /// Corners of the landing band, counter-clockwise like [`push_rectangle`].
    pub fn band(&self, a: &Action<T>) -> [Vec2<T>; 4] {
        let dir = a.direction();
        let side = dir.perp() * (self.band_width * T::lit(0.5));
        let near = a.end();
        let far = near + dir * self.band_depth;
        [near - side, far - side, far + side, near + side]
    }
}

fn mix_seed(base: u64, seed: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = base ^ seed.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn transport_predict<T: Scalar>(tm: &TransportModel<T>, parts: &ParticleSet<T>, a: &Action<T>, seed: u64) -> ParticleSet<T> {
    let rect = push_rectangle(a, tm.pusher_width);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tm.rng_seed_base, seed));
    let dir = a.direction();
    let side = dir.perp();
    let end = a.end();
    let half = T::lit(0.5);
    let points = parts
        .points
        .iter()
        .map(|&p| {
            if !rect.contains(p) {
                return p;
            }
            let along = T::lit(rng.gen::<f64>()) * tm.band_depth;
            let across = (T::lit(rng.gen::<f64>()) - half) * tm.band_width;
            let q = end + dir * along + side * across;
            Vec2::new(clamp_unit(q.x), clamp_unit(q.y))
        })
        .collect();
    ParticleSet { points }
}

/// Seed derived from an action's bit pattern, so repeated evaluations of the
/// same action sample the same particles.
pub fn action_seed<T: Scalar>(a: &Action<T>) -> u64 {
    [a.px, a.py, a.theta, a.length].iter().fold(0u64, |acc, v| mix_seed(acc, v.as_f64().to_bits()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{frobenius_distance, grand_sum};

    fn identity_model(n: usize) -> SwitchedLinearModel<f64> {
        SwitchedLinearModel::scaled_identity(n, default_lengths(), 1.0, 0.25).unwrap()
    }

    #[test]
    fn nearest_length_prefers_shorter_on_ties() {
        let m = identity_model(4);
        assert_eq!(m.nearest_length_index(0.01), 0);
        assert_eq!(m.nearest_length_index(0.13), 1);
        assert_eq!(m.nearest_length_index(0.5), 4);
        let m2 = SwitchedLinearModel::scaled_identity(4, vec![0.1, 0.2], 1.0, 0.25).unwrap();
        assert_eq!(m2.nearest_length_index(0.15), 0);
    }

    #[test]
    fn model_validation() {
        assert!(SwitchedLinearModel::scaled_identity(4, vec![0.2, 0.1], 1.0, 0.25).is_err());
        assert!(SwitchedLinearModel::scaled_identity(4, vec![], 1.0, 0.25).is_err());
        let bad = TransitionMatrix::<f64>::identity(9, FitMode::Ols);
        assert!(SwitchedLinearModel::new(4, vec![0.1], vec![bad], 0.25, FitMode::Ols).is_err());
    }

    #[test]
    fn identity_model_round_trips_canonical_actions() {
        let m = identity_model(8);
        let img = Image::from_fn_clamped(8, |i, j| ((i * 8 + j) % 5) as f64 / 4.0);
        let a = Action::canonical(0.12).unwrap();
        assert_eq!(predict_linear(&m, &img, &a).unwrap(), img);
        let zero = Image::zeros(8);
        let b = Action::new(0.3, 0.7, 1.0, 0.2).unwrap();
        assert_eq!(predict_linear(&m, &zero, &b).unwrap(), zero);
    }

    #[test]
    fn kernel_and_step_response_of_identity() {
        let m = identity_model(4);
        let k = m.extract_kernel(2, 1, 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(k.get(i, j), if (i, j) == (1, 3) { 1.0 } else { 0.0 });
            }
        }
        assert!(m.extract_kernel(5, 0, 0).is_err());
        assert!(m.extract_kernel(0, 4, 0).is_err());
        assert!(m.step_response(0).unwrap().as_slice().iter().all(|&v| v == 0.5));
        let twice = SwitchedLinearModel::scaled_identity(4, vec![0.1], 2.0, 0.25).unwrap();
        assert!(twice.step_response(0).unwrap().as_slice().iter().all(|&v| v == 1.0));
        let zero = SwitchedLinearModel::scaled_identity(4, vec![0.1], 0.0, 0.25).unwrap();
        assert!(zero.extract_kernel(0, 2, 2).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn model_file_roundtrip_and_errors() {
        let n = 3;
        let mats = (0..2)
            .map(|k| TransitionMatrix::from_vec(9, (0..81).map(|v| (v as f64 * 0.37 + k as f64).sin()).collect(), FitMode::NonNeg).unwrap())
            .collect();
        let m = SwitchedLinearModel::new(n, vec![0.1, 0.2], mats, 0.25, FitMode::NonNeg).unwrap();
        let mut bytes = Vec::new();
        write_model(&m, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"SLVF");
        assert_eq!(bytes.len(), 4 + 16 + 8 + 16 + 2 * 81 * 8);
        let back: SwitchedLinearModel<f64> = read_model(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.matrices().iter().zip(m.matrices()) {
            assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_model::<f64, _>(bad.as_slice()), Err(Error::BadMagic { .. })));
        let mut ver = bytes.clone();
        ver[4] = 2;
        assert!(matches!(read_model::<f64, _>(ver.as_slice()), Err(Error::VersionMismatch { found: 2, .. })));
        let cut = &bytes[..bytes.len() - 100];
        assert!(matches!(read_model::<f64, _>(cut), Err(Error::Truncated(_))));
    }

    #[test]
    fn particles_from_images() {
        assert!(particles_from_image(&Image::<f64>::zeros(4), 0.5).is_empty());
        let one = Image::from_fn_clamped(4, |i, j| if (i, j) == (2, 1) { 1.0 } else { 0.0 });
        let p = particles_from_image(&one, 0.5);
        assert_eq!(p.points, vec![Vec2::new(0.375, 0.625)]);
        let checker = Image::from_fn_clamped(6, |i, j| ((i + j) % 2) as f64);
        assert_eq!(particles_from_image(&checker, 0.5).len(), 18);
        assert_eq!(rasterize_particles(&particles_from_image(&checker, 0.5), 6), checker);
    }

    #[test]
    fn transport_examples() {
        let tm = TransportModel::for_pusher(0.25, 3);
        let a = Action::new(0.2, 0.5, 0.0, 0.2).unwrap();
        let outside = ParticleSet::new(vec![Vec2::new(0.1, 0.1), Vec2::new(0.9, 0.9)]);
        assert_eq!(transport_predict(&tm, &outside, &a, 1), outside);

        let inside = ParticleSet::new((0..20).map(|k| Vec2::new(0.25 + 0.005 * k as f64, 0.45 + 0.004 * k as f64)).collect());
        let out = transport_predict(&tm, &inside, &a, 7);
        assert_eq!(out.len(), inside.len());
        for p in &out.points {
            assert!(p.x >= 0.4 && p.x <= 0.4 + 0.125 && (p.y - 0.5).abs() <= 0.125, "{p:?}");
        }
        assert_eq!(transport_predict(&tm, &inside, &a, 7), out);
        assert_ne!(transport_predict(&tm, &inside, &a, 8), out);
    }

    #[test]
    fn prediction_preserves_zero_mass_and_resolution_checks() {
        let m = identity_model(8);
        assert!(predict_linear(&m, &Image::zeros(6), &Action::canonical(0.1).unwrap()).is_err());
        let img = Image::from_fn_clamped(8, |i, j| if (2..5).contains(&i) && (3..6).contains(&j) { 1.0 } else { 0.0 });
        let out = predict_linear(&m, &img, &Action::new(0.4, 0.6, 2.0, 0.1).unwrap()).unwrap();
        assert!(grand_sum(&out) > 0.0);
        assert!(frobenius_distance(&out, &img).unwrap() < 4.0);
    }
}
