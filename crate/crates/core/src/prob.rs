//! Simplex primitives, one-hot encodings, stochastic matrices and seeded random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Absolute tolerance on simplex row sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A point on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates entries are nonnegative and sum to one within [`SIMPLEX_TOL`].
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::ShapeMismatch(format!(
                "negative or NaN probability in {entries:?}"
            )));
        }
        let s: f64 = entries.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::ShapeMismatch(format!(
                "probabilities sum to {s}, not 1"
            )));
        }
        Ok(ProbVector(entries))
    }

    pub fn uniform(m: usize) -> Self {
        ProbVector(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<OneHot> for ProbVector {
    fn from(h: OneHot) -> Self {
        ProbVector(h.expand())
    }
}

/// A vertex of the simplex, stored by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OneHot {
    pub index: usize,
    pub dim: usize,
}

impl OneHot {
    pub fn new(index: usize, dim: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::ShapeMismatch(format!(
                "one-hot index {index} out of range for dimension {dim}"
            )));
        }
        Ok(OneHot { index, dim })
    }

    pub fn expand(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[self.index] = 1.0;
        v
    }
}

/// Row-stochastic matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::ShapeMismatch(format!("row {r} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::ShapeMismatch(format!("row {r} sums to {s}")));
            }
        }
        Ok(StochasticMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Boolean nonzero pattern.
    pub fn support(&self) -> Vec<bool> {
        self.data.iter().map(|&p| p != 0.0).collect()
    }
}

/// Divides by the total mass. Vectors already on the simplex (within
/// [`SIMPLEX_TOL`]) are returned unchanged, which makes the map idempotent.
pub fn normalize(v: &[f64]) -> Result<ProbVector> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) {
        return Err(Error::ZeroMass);
    }
    if (s - 1.0).abs() <= SIMPLEX_TOL {
        return Ok(ProbVector(v.to_vec()));
    }
    Ok(ProbVector(v.iter().map(|&x| x / s).collect()))
}

/// Element-wise `a / b` with the convention `0 / 0 = 0`.
pub fn hadamard_div_zero<S: Real>(a: &[S], b: &[S]) -> Result<Vec<S>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (&x, &y))| {
            if y.value() > 0.0 {
                Ok(x / y)
            } else if x.value() == 0.0 {
                Ok(S::zero())
            } else {
                Err(Error::DivByZero { index: i })
            }
        })
        .collect()
}

/// Smallest index attaining the maximum.
pub fn argmax_index(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate().skip(1) {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from a probability vector (entries assumed to sum to one).
///
/// Zero-probability indices are never returned.
pub fn sample_index(p: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.uniform();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > 0.0 {
            acc += x;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left u above the accumulated mass
    last
}

pub fn sample_categorical(p: &ProbVector, rng: &mut RngStream) -> OneHot {
    OneHot {
        index: sample_index(p.as_slice(), rng),
        dim: p.len(),
    }
}

/// SplitMix64 finalizer, used to derive substream identifiers.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seeded counter-based random stream.
///
/// A stream is a ChaCha8 key derived from the master seed plus a 64-bit stream
/// id; substreams only change the stream id, so draws for a given key path are
/// independent of how many other substreams exist or which thread uses them.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `keys`, independent of this stream's position.
    pub fn substream(&self, keys: &[u64]) -> RngStream {
        let mut id = mix64(self.stream);
        for &k in keys {
            id = mix64(id ^ mix64(k));
        }
        Self::with_stream(self.seed, id)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(normalize(&[1.0, 0.0]).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(normalize(&[0.3, 0.1, 0.6]).unwrap().as_slice(), &[0.3, 0.1, 0.6]);
        assert_eq!(normalize(&[0.0, 0.0]), Err(Error::ZeroMass));
    }

    #[test]
    fn hadamard_examples() {
        assert_eq!(
            hadamard_div_zero(&[0.0, 0.5], &[0.0, 0.5]).unwrap(),
            vec![0.0, 1.0]
        );
        assert_eq!(
            hadamard_div_zero(&[0.2, 0.2], &[0.4, 0.8]).unwrap(),
            vec![0.5, 0.25]
        );
        assert_eq!(
            hadamard_div_zero(&[0.1, 0.0], &[0.0, 1.0]),
            Err(Error::DivByZero { index: 0 })
        );
    }

    #[test]
    fn sample_degenerate() {
        let mut rng = RngStream::new(3);
        let p = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let q = ProbVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&p, &mut rng).index, 0);
            assert_eq!(sample_categorical(&q, &mut rng).index, 2);
        }
    }

    #[test]
    fn sample_frequency() {
        let mut rng = RngStream::new(11);
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let zeros = (0..100_000)
            .filter(|_| sample_categorical(&p, &mut rng).index == 0)
            .count();
        let f = zeros as f64 / 1e5;
        assert!((0.49..=0.51).contains(&f), "frequency {f}");
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_index(&[0.2, 0.7, 0.1]), 1);
        assert_eq!(argmax_index(&[0.5, 0.5]), 0);
        assert_eq!(argmax_index(&[0.0, 0.0, 1.0]), 2);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = RngStream::new(5).substream(&[1, 2]);
        let b = RngStream::new(5).substream(&[1, 2]);
        let c = RngStream::new(5).substream(&[2, 1]);
        let draw = |mut s: RngStream| (0..8).map(|_| s.next_u64()).collect::<Vec<_>>();
        assert_eq!(draw(a.clone()), draw(b));
        assert_ne!(draw(a), draw(c));
    }

    #[test]
    fn stochastic_matrix_validation() {
        assert!(StochasticMatrix::new(2, 2, vec![0.5, 0.5, 0.0, 1.0]).is_ok());
        assert!(StochasticMatrix::new(2, 2, vec![0.5, 0.6, 0.0, 1.0]).is_err());
        assert!(StochasticMatrix::new(1, 2, vec![1.2, -0.2]).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(0.0f64..10.0, 1..8)) {
            prop_assume!(v.iter().sum::<f64>() > 1e-3);
            let once = normalize(&v).unwrap();
            let twice = normalize(once.as_slice()).unwrap();
            let s: f64 = once.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn hadamard_inverts_product(
            b in prop::collection::vec(0.0f64..1.0, 1..8),
            mask in prop::collection::vec(any::<bool>(), 8),
            r in prop::collection::vec(0.0f64..1.0, 8),
        ) {
            // support(a) within support(b)
            let a: Vec<f64> = b.iter().enumerate()
                .map(|(i, &y)| if y > 0.0 && mask[i] { r[i] } else { 0.0 })
                .collect();
            let q = hadamard_div_zero(&a, &b).unwrap();
            for i in 0..a.len() {
                prop_assert!((q[i] * b[i] - a[i]).abs() <= 1e-14);
            }
        }
    }
}
