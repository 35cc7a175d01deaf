//! Grayscale images, their vectorized form, norms and binary PGM I/O.
//!
//! Pixel `(i, j)` is row `i`, column `j`, row 0 at the top. The vectorized
//! form is row-major: element `i * n + j` holds pixel `(i, j)`. Intensities
//! live in `[0, 1]`; PGM files store `round(v * 255)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An `n x n` grayscale image with every value finite and in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    n: usize,
    data: Vec<T>,
}

/// Row-major vector form of an [`Image`].
#[derive(Clone, Debug, PartialEq)]
pub struct VecImage<T> {
    data: Vec<T>,
}

/// Unconstrained `n x n` real grid (kernels, step responses, distance fields).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    n: usize,
    data: Vec<T>,
}

fn check_intensity<T: Scalar>(v: T, idx: usize) -> Result<()> {
    if v.is_finite() && v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("pixel {idx} has intensity {v} outside [0, 1]")))
    }
}

/// Returns `sqrt(len)` when `len` is a perfect square.
pub(crate) fn square_side(len: usize) -> Option<usize> {
    let s = (len as f64).sqrt().round() as usize;
    (s * s == len).then_some(s)
}

impl<T: Scalar> Image<T> {
    pub fn new(n: usize, data: Vec<T>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension(format!("image resolution must be at least 2, got {n}")));
        }
        if data.len() != n * n {
            return Err(Error::Dimension(format!("expected {} values for a {n}x{n} image, got {}", n * n, data.len())));
        }
        for (idx, &v) in data.iter().enumerate() {
            check_intensity(v, idx)?;
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self::filled(n, T::zero())
    }

    pub fn ones(n: usize) -> Self {
        Self::filled(n, T::one())
    }

    /// Uniform image. Panics if `value` is outside `[0, 1]` or `n < 2`.
    pub fn filled(n: usize, value: T) -> Self {
        Self::new(n, vec![value; n * n]).expect("valid uniform image")
    }

    /// Builds an image from `f(row, col)`, clamping every value into `[0, 1]`.
    /// Non-finite values become 0.
    pub fn from_fn_clamped(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(n >= 2, "image resolution must be at least 2");
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(clamp_unit(f(i, j)));
            }
        }
        Self { n, data }
    }

    /// Clamps arbitrary values into `[0, 1]`.
    pub fn from_vec_clamped(n: usize, data: Vec<T>) -> Result<Self> {
        if n < 2 || data.len() != n * n {
            return Err(Error::Dimension(format!("{} values cannot form a {n}x{n} image", data.len())));
        }
        Ok(Self { n, data: data.into_iter().map(clamp_unit).collect() })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Multiplies by `c`, clamping the result into `[0, 1]`.
    pub fn scaled(&self, c: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| clamp_unit(v * c)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image { n: self.n, data: self.data.iter().map(|&v| clamp_unit(U::lit(v.as_f64()))).collect() }
    }

    pub fn to_grid(&self) -> Grid<T> {
        Grid { n: self.n, data: self.data.clone() }
    }
}

#[inline]
pub(crate) fn clamp_unit<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        T::zero()
    } else {
        v.max(T::zero()).min(T::one())
    }
}

impl<T: Scalar> VecImage<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        if square_side(data.len()).is_none() {
            return Err(Error::Dimension(format!("vector length {} is not a perfect square", data.len())));
        }
        for (idx, &v) in data.iter().enumerate() {
            check_intensity(v, idx)?;
        }
        Ok(Self { data })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

impl<T: Scalar> Grid<T> {
    pub fn new(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!("{} values cannot form a {n}x{n} grid", data.len())));
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Location of the largest entry; ties resolve to the first in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = k;
            }
        }
        (best / self.n, best % self.n)
    }

    /// Min-max normalization into `[0, 1]`. A constant grid keeps its value, clamped.
    pub fn normalized(&self) -> Image<T> {
        let (lo, hi) = self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let data = if span > T::zero() && span.is_finite() {
            self.data.iter().map(|&v| clamp_unit((v - lo) / span)).collect()
        } else {
            self.data.iter().map(|&v| clamp_unit(v)).collect()
        };
        Image { n: self.n, data }
    }
}

pub fn vectorize<T: Scalar>(img: &Image<T>) -> VecImage<T> {
    VecImage { data: img.data.clone() }
}

pub fn devectorize<T: Scalar>(v: VecImage<T>) -> Result<Image<T>> {
    let n = square_side(v.data.len()).ok_or_else(|| Error::Dimension(format!("vector length {} is not a perfect square", v.data.len())))?;
    if n < 2 {
        return Err(Error::Dimension(format!("vector length {} is too short for an image", v.data.len())));
    }
    Ok(Image { n, data: v.data })
}

fn same_resolution<T>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if a.n != b.n {
        return Err(Error::ResolutionMismatch { left: a.n, right: b.n });
    }
    Ok(())
}

/// `sqrt(sum((a - b)^2))`.
pub fn frobenius_distance<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    same_resolution(a, b)?;
    let ss: T = a.data.iter().zip(&b.data).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(ss.sqrt())
}

/// Sum of all entries, which is the entrywise 1-norm since values are non-negative.
pub fn grand_sum<T: Scalar>(img: &Image<T>) -> T {
    img.data.iter().copied().sum()
}

pub fn write_pgm<T: Scalar, W: Write>(img: &Image<T>, mut w: W) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.n, img.n)?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| to_byte(v)).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

#[inline]
fn to_byte<T: Scalar>(v: T) -> u8 {
    (clamp_unit(v).as_f64() * 255.0).round() as u8
}

/// Raw 8-bit grayscale raster as stored in a binary PGM.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayBytes {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

pub fn read_pgm_bytes<R: Read>(mut r: R) -> Result<GrayBytes> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 2 || &buf[..2] != b"P5" {
        return Err(Error::Format("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match buf.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while buf.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Truncated("PGM header ended early".into())),
            }
        }
        let start = pos;
        while buf.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        let text = std::str::from_utf8(&buf[start..pos]).unwrap_or("");
        *field = text.parse().map_err(|_| Error::Format(format!("bad PGM header field {text:?}")))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !buf.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(Error::Format("missing whitespace after PGM maxval".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let count = width * height;
    if buf.len() < pos + count {
        return Err(Error::Truncated(format!("PGM raster has {} of {count} bytes", buf.len() - pos)));
    }
    Ok(GrayBytes { width, height, maxval: maxval as u16, pixels: buf[pos..pos + count].to_vec() })
}

pub fn read_pgm<T: Scalar, R: Read>(r: R) -> Result<Image<T>> {
    let raw = read_pgm_bytes(r)?;
    if raw.width != raw.height {
        return Err(Error::Dimension(format!("PGM is {}x{}, expected a square image", raw.width, raw.height)));
    }
    let scale = T::lit(f64::from(raw.maxval));
    let data = raw.pixels.iter().map(|&b| T::lit(f64::from(b)) / scale).collect();
    Image::new(raw.width, data)
}

pub fn save_pgm<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(img, BufWriter::new(File::create(path)?))
}

pub fn load_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    read_pgm(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, n: usize) -> Image<f64> {
        Image::new(n, (0..n * n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn vectorize_is_row_major() {
        let img = Image::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(vectorize(&img).as_slice(), &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(img.get(1, 0), 0.3);
        let zero = vectorize(&Image::<f64>::zeros(32));
        assert_eq!(zero.len(), 1024);
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn devectorize_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let img = random_image(&mut rng, 32);
            assert_eq!(devectorize(vectorize(&img)).unwrap(), img);
        }
        let v = VecImage::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let img = devectorize(v.clone()).unwrap();
        assert_eq!(img.get(0, 1), 0.2);
        assert_eq!(vectorize(&img), v);
    }

    #[test]
    fn devectorize_rejects_non_square() {
        assert!(matches!(VecImage::new(vec![0.0f64; 1023]), Err(Error::Dimension(_))));
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(Image::new(2, vec![0.0, 1.5, 0.0, 0.0]).is_err());
        assert!(Image::new(2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(Image::new(1, vec![0.5]).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let a = Image::<f64>::ones(2);
        let b = Image::<f64>::zeros(2);
        assert_eq!(frobenius_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(frobenius_distance(&a, &b).unwrap(), 2.0);
        assert!(frobenius_distance(&a, &Image::zeros(3)).is_err());
    }

    #[test]
    fn frobenius_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_image(&mut rng, 32);
        let b = random_image(&mut rng, 32);
        let mut acc = 0.0f64;
        for i in 0..32 {
            for j in 0..32 {
                let d = a.get(i, j) - b.get(i, j);
                acc += d * d;
            }
        }
        assert!((frobenius_distance(&a, &b).unwrap() - acc.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grand_sum_examples() {
        assert_eq!(grand_sum(&Image::<f64>::zeros(4)), 0.0);
        assert_eq!(grand_sum(&Image::<f64>::ones(32)), 1024.0);
        let single = Image::from_fn_clamped(4, |i, j| if (i, j) == (2, 1) { 0.5 } else { 0.0 });
        assert_eq!(grand_sum(&single), 0.5);
    }

    #[test]
    fn pgm_roundtrip_is_bit_exact_for_byte_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Image::<f64>::new(16, (0..256).map(|_| f64::from(rng.gen::<u8>()) / 255.0).collect()).unwrap();
        let mut bytes = Vec::new();
        write_pgm(&img, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"P5\n16 16\n255\n"));
        let back: Image<f64> = read_pgm(bytes.as_slice()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_reader_handles_comments_and_truncation() {
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 51, 102]);
        let img: Image<f64> = read_pgm(bytes.as_slice()).unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0, 0.2, 0.4]);
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(read_pgm::<f64, _>(bytes.as_slice()), Err(Error::Truncated(_))));
        assert!(matches!(read_pgm::<f64, _>(&b"P6\n2 2\n255\n"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn normalized_grid() {
        let g = Grid::new(2, vec![-1.0, 0.0, 1.0, 3.0]).unwrap();
        assert_eq!(g.normalized().as_slice(), &[0.0, 0.25, 0.5, 1.0]);
        let flat = Grid::new(2, vec![0.5; 4]).unwrap();
        assert_eq!(flat.normalized().as_slice(), &[0.5; 4]);
        assert_eq!(g.argmax(), (1, 1));
    }

    proptest! {
        #[test]
        fn frobenius_triangle_inequality(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_image(&mut rng, 8);
            let b = random_image(&mut rng, 8);
            let c = random_image(&mut rng, 8);
            let ab = frobenius_distance(&a, &b).unwrap();
            let bc = frobenius_distance(&b, &c).unwrap();
            let ac = frobenius_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn vectorize_is_linear(seed in any::<u64>(), alpha in 0.0f64..0.5, beta in 0.0f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_image(&mut rng, 6);
            let b = random_image(&mut rng, 6);
            let mix = Image::new(6, a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
            let va = vectorize(&a);
            let vb = vectorize(&b);
            for (k, &m) in vectorize(&mix).as_slice().iter().enumerate() {
                prop_assert!((m - (alpha * va.as_slice()[k] + beta * vb.as_slice()[k])).abs() < 1e-15);
            }
        }
    }
}
