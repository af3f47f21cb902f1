//! Square QAM constellations with a sign/amplitude split.
//!
//! Points are stored in label order: `points()[b]` is the point whose bit
//! label is the integer `b`. Each axis carries a binary reflected Gray code
//! whose most significant bit is the sign of that axis, so a label reads
//! `[sign_I, sign_Q, amplitude_I bits.., amplitude_Q bits..]` from the most
//! significant bit down. Sign bit `1` means positive.

use num_complex::Complex64;
use serde::Serialize;

use crate::Error;

/// Sign of one quadrature component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn bit(self) -> bool {
        self == Sign::Plus
    }

    fn of(x: f64) -> Self {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }
}

/// In-phase and quadrature sign pair carried by the uniform sign bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignPair {
    pub i: Sign,
    pub q: Sign,
}

impl SignPair {
    pub const PLUS: SignPair = SignPair {
        i: Sign::Plus,
        q: Sign::Plus,
    };

    pub fn new(i: Sign, q: Sign) -> Self {
        Self { i, q }
    }

    pub fn all() -> [SignPair; 4] {
        use Sign::*;
        [
            SignPair::new(Plus, Plus),
            SignPair::new(Minus, Plus),
            SignPair::new(Plus, Minus),
            SignPair::new(Minus, Minus),
        ]
    }

    pub fn apply(self, amplitude: Complex64) -> Complex64 {
        Complex64::new(self.i.value() * amplitude.re, self.q.value() * amplitude.im)
    }
}

/// Positive per-dimension amplitude levels, ascending (1, 3, 5, 7 for 64-QAM).
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeAlphabet {
    levels: Vec<f64>,
}

impl AmplitudeAlphabet {
    pub fn new(levels: Vec<f64>) -> Result<Self, Error> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("amplitude alphabet is empty".into()));
        }
        if levels[0] <= 0.0 || levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "amplitude levels must be positive and strictly increasing".into(),
            ));
        }
        Ok(Self { levels })
    }

    /// Odd-integer PAM levels `1, 3, .., 2n-1`.
    pub fn odd(n: usize) -> Self {
        Self {
            levels: (0..n).map(|j| (2 * j + 1) as f64).collect(),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Bits needed to index a level.
    pub fn index_bits(&self) -> u32 {
        self.levels.len().next_power_of_two().trailing_zeros()
    }
}

/// Gray-labeled square QAM with unit mean power under uniform weighting.
#[derive(Clone, Debug)]
pub struct Constellation {
    order: usize,
    bits_per_dim: u32,
    scale: f64,
    points: Vec<Complex64>,
    alphabet: AmplitudeAlphabet,
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self, Error> {
        if !matches!(order, 4 | 16 | 64 | 256) {
            return Err(Error::InvalidArgument(format!(
                "unsupported QAM order {order}: expected one of 4, 16, 64, 256"
            )));
        }
        let bits = order.trailing_zeros();
        let bits_per_dim = bits / 2;
        let side = 1usize << bits_per_dim;
        let levels_per_dim = side / 2;
        // Mean of (2j+1)^2 over j < n, for both dimensions.
        let n = levels_per_dim as f64;
        let mean_energy = 2.0 * (4.0 * n * n - 1.0) / 3.0;
        let scale = 1.0 / mean_energy.sqrt();

        let pam = gray_pam_levels(bits_per_dim);
        let mut points = vec![Complex64::new(0.0, 0.0); order];
        for (label, point) in points.iter_mut().enumerate() {
            let (li, lq) = split_label(label as u32, bits_per_dim);
            *point = Complex64::new(pam[li as usize], pam[lq as usize]) * scale;
        }

        Ok(Self {
            order,
            bits_per_dim,
            scale,
            points,
            alphabet: AmplitudeAlphabet::odd(levels_per_dim),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        2 * self.bits_per_dim
    }

    /// Factor mapping the odd-integer grid to unit mean power.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn alphabet(&self) -> &AmplitudeAlphabet {
        &self.alphabet
    }

    /// Number of unsigned 2D amplitudes, `(sqrt(order)/2)^2`.
    pub fn unsigned_size(&self) -> usize {
        self.alphabet.len() * self.alphabet.len()
    }

    /// Level indices `(j_I, j_Q)` of an unsigned 2D amplitude index.
    pub fn unsigned_levels(&self, unsigned: usize) -> (usize, usize) {
        let n = self.alphabet.len();
        (unsigned / n, unsigned % n)
    }

    pub fn unsigned_from_levels(&self, level_i: usize, level_q: usize) -> usize {
        level_i * self.alphabet.len() + level_q
    }

    /// First-quadrant normalized point of an unsigned amplitude index.
    pub fn unsigned_point(&self, unsigned: usize) -> Complex64 {
        let (ji, jq) = self.unsigned_levels(unsigned);
        let l = self.alphabet.levels();
        Complex64::new(l[ji], l[jq]) * self.scale
    }

    /// Label of the point with the given unsigned amplitude and signs.
    pub fn point_index(&self, unsigned: usize, signs: SignPair) -> usize {
        let (ji, jq) = self.unsigned_levels(unsigned);
        let m = self.bits_per_dim;
        let li = axis_label(ji, signs.i, m);
        let lq = axis_label(jq, signs.q, m);
        join_label(li, lq, m) as usize
    }

    pub fn unsigned_index(&self, point: usize) -> usize {
        let p = self.points[point] / self.scale;
        let level = |x: f64| ((x.abs() - 1.0) / 2.0).round() as usize;
        self.unsigned_from_levels(level(p.re), level(p.im))
    }

    pub fn sign_pair(&self, point: usize) -> SignPair {
        let p = self.points[point];
        SignPair::new(Sign::of(p.re), Sign::of(p.im))
    }

    /// Nearest point label (minimum Euclidean distance).
    pub fn nearest(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn label_bit(&self, point: usize, bit: u32) -> bool {
        let k = self.bits_per_symbol();
        (point >> (k - 1 - bit)) & 1 == 1
    }

    pub fn label_string(&self, point: usize) -> String {
        (0..self.bits_per_symbol())
            .map(|b| if self.label_bit(point, b) { '1' } else { '0' })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Export {
            order: usize,
            points: Vec<[f64; 2]>,
            labels: Vec<String>,
        }
        let export = Export {
            order: self.order,
            points: self.points.iter().map(|p| [p.re, p.im]).collect(),
            labels: (0..self.order).map(|i| self.label_string(i)).collect(),
        };
        serde_json::to_value(export).expect("constellation export is plain data")
    }
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

/// Maps an m-bit Gray label to its PAM level, indexed by label.
fn gray_pam_levels(m: u32) -> Vec<f64> {
    let side = 1u32 << m;
    let mut levels = vec![0.0; side as usize];
    for position in 0..side {
        let level = 2.0 * position as f64 - (side as f64 - 1.0);
        levels[gray(position) as usize] = level;
    }
    levels
}

fn axis_label(level_index: usize, sign: Sign, m: u32) -> u32 {
    let half = 1u32 << (m - 1);
    let position = match sign {
        Sign::Plus => half + level_index as u32,
        Sign::Minus => half - 1 - level_index as u32,
    };
    gray(position)
}

/// Splits a 2m-bit label into its I and Q axis labels.
fn split_label(label: u32, m: u32) -> (u32, u32) {
    let amp_mask = (1u32 << (m - 1)) - 1;
    let sign_i = (label >> (2 * m - 1)) & 1;
    let sign_q = (label >> (2 * m - 2)) & 1;
    let amp_i = (label >> (m - 1)) & amp_mask;
    let amp_q = label & amp_mask;
    (
        (sign_i << (m - 1)) | amp_i,
        (sign_q << (m - 1)) | amp_q,
    )
}

fn join_label(li: u32, lq: u32, m: u32) -> u32 {
    let amp_mask = (1u32 << (m - 1)) - 1;
    let sign_i = li >> (m - 1);
    let sign_q = lq >> (m - 1);
    (sign_i << (2 * m - 1)) | (sign_q << (2 * m - 2)) | ((li & amp_mask) << (m - 1)) | (lq & amp_mask)
}

/// Applies signs elementwise per I/Q component.
pub fn compose(amplitudes: &[Complex64], signs: &[SignPair]) -> Result<Vec<Complex64>, Error> {
    if amplitudes.len() != signs.len() {
        return Err(Error::LengthMismatch {
            expected: amplitudes.len(),
            found: signs.len(),
        });
    }
    Ok(amplitudes
        .iter()
        .zip(signs)
        .map(|(&a, &s)| s.apply(a))
        .collect())
}

/// Splits signed points into first-quadrant amplitudes and signs.
pub fn decompose(symbols: &[Complex64]) -> (Vec<Complex64>, Vec<SignPair>) {
    symbols
        .iter()
        .map(|x| {
            (
                Complex64::new(x.re.abs(), x.im.abs()),
                SignPair::new(Sign::of(x.re), Sign::of(x.im)),
            )
        })
        .unzip()
}

/// Scales `symbols` to the target mean power, returning the scale factor.
pub fn normalize_power(symbols: &[Complex64], target: f64) -> Result<(Vec<Complex64>, f64), Error> {
    if symbols.is_empty() {
        return Err(Error::InvalidArgument("cannot normalize an empty block".into()));
    }
    let power = mean_power(symbols);
    if power == 0.0 || !power.is_finite() {
        return Err(Error::InvalidArgument(
            "cannot normalize a block with zero power".into(),
        ));
    }
    let scale = (target / power).sqrt();
    Ok((symbols.iter().map(|x| x * scale).collect(), scale))
}

pub fn mean_power(symbols: &[Complex64]) -> f64 {
    symbols.iter().map(|x| x.norm_sqr()).sum::<f64>() / symbols.len() as f64
}

/// A block of `L` unsigned amplitudes, their signs, and the composed points.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBlock {
    amplitudes: Vec<Complex64>,
    signs: Vec<SignPair>,
    symbols: Vec<Complex64>,
}

impl SymbolBlock {
    pub fn new(amplitudes: Vec<Complex64>, signs: Vec<SignPair>) -> Result<Self, Error> {
        let symbols = compose(&amplitudes, &signs)?;
        Ok(Self {
            amplitudes,
            signs,
            symbols,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn signs(&self) -> &[SignPair] {
        &self.signs
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_points() {
        let c = Constellation::qam(4).unwrap();
        let r = 1.0 / 2f64.sqrt();
        for p in c.points() {
            assert!((p.re.abs() - r).abs() < 1e-15);
            assert!((p.im.abs() - r).abs() < 1e-15);
        }
        let mut quadrants: Vec<_> = c.points().iter().map(|p| (p.re > 0.0, p.im > 0.0)).collect();
        quadrants.sort();
        quadrants.dedup();
        assert_eq!(quadrants.len(), 4);
    }

    #[test]
    fn unit_mean_power() {
        for order in [4, 16, 64, 256] {
            let c = Constellation::qam(order).unwrap();
            assert_eq!(c.points().len(), order);
            assert!((mean_power(c.points()) - 1.0).abs() < 1e-12, "order {order}");
        }
    }

    #[test]
    fn levels_64qam() {
        let c = Constellation::qam(64).unwrap();
        assert_eq!(c.alphabet().levels(), &[1.0, 3.0, 5.0, 7.0]);
        assert_eq!(c.unsigned_size(), 16);
        let mut per_dim: Vec<i64> = c
            .points()
            .iter()
            .map(|p| (p.re / c.scale()).round() as i64)
            .collect();
        per_dim.sort();
        per_dim.dedup();
        assert_eq!(per_dim, vec![-7, -5, -3, -1, 1, 3, 5, 7]);
    }

    #[test]
    fn unsupported_order() {
        let err = Constellation::qam(32).unwrap_err();
        assert!(err.to_string().contains("unsupported QAM order 32"));
    }

    #[test]
    fn gray_neighbors_differ_in_one_bit() {
        for order in [16, 64, 256] {
            let c = Constellation::qam(order).unwrap();
            let step = 2.0 * c.scale();
            for (a, pa) in c.points().iter().enumerate() {
                for (b, pb) in c.points().iter().enumerate() {
                    let d = pb - pa;
                    let horizontal = (d.re.abs() - step).abs() < 1e-9 && d.im.abs() < 1e-9;
                    let vertical = (d.im.abs() - step).abs() < 1e-9 && d.re.abs() < 1e-9;
                    if horizontal || vertical {
                        assert_eq!((a ^ b).count_ones(), 1, "order {order}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn sign_bits_reflect() {
        let c = Constellation::qam(64).unwrap();
        let k = c.bits_per_symbol();
        for point in 0..64 {
            let flipped_i = point ^ (1 << (k - 1));
            let flipped_q = point ^ (1 << (k - 2));
            let p = c.points()[point];
            assert_eq!(c.points()[flipped_i], Complex64::new(-p.re, p.im));
            assert_eq!(c.points()[flipped_q], Complex64::new(p.re, -p.im));
            assert_eq!(c.sign_pair(point).i.bit(), c.label_bit(point, 0));
            assert_eq!(c.sign_pair(point).q.bit(), c.label_bit(point, 1));
        }
    }

    #[test]
    fn point_index_roundtrip_exhaustive() {
        let c = Constellation::qam(64).unwrap();
        for u in 0..c.unsigned_size() {
            for s in SignPair::all() {
                let idx = c.point_index(u, s);
                assert_eq!(c.unsigned_index(idx), u);
                assert_eq!(c.sign_pair(idx), s);
                assert_eq!(c.points()[idx], s.apply(c.unsigned_point(u)));
            }
        }
    }

    #[test]
    fn compose_examples() {
        let a = Complex64::new(3.0, 1.0);
        assert_eq!(compose(&[a], &[SignPair::PLUS]).unwrap()[0], a);
        let s = SignPair::new(Sign::Minus, Sign::Plus);
        assert_eq!(compose(&[a], &[s]).unwrap()[0], Complex64::new(-3.0, 1.0));
        let one = Complex64::new(1.0, 1.0);
        let mut pts: Vec<(i64, i64)> = SignPair::all()
            .iter()
            .map(|&s| {
                let p = s.apply(one);
                (p.re as i64, p.im as i64)
            })
            .collect();
        pts.sort();
        pts.dedup();
        assert_eq!(pts.len(), 4);
        assert!(matches!(
            compose(&[a, a], &[s]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn compose_decompose_identity_exhaustive() {
        let c = Constellation::qam(64).unwrap();
        let (amps, signs): (Vec<_>, Vec<_>) = (0..64)
            .map(|p| (c.unsigned_point(c.unsigned_index(p)), c.sign_pair(p)))
            .unzip();
        let composed = compose(&amps, &signs).unwrap();
        assert_eq!(composed, c.points());
        let (a2, s2) = decompose(&composed);
        assert_eq!(a2, amps);
        assert_eq!(s2, signs);
    }

    #[test]
    fn normalize_examples() {
        let c = Constellation::qam(16).unwrap();
        let (out, scale) = normalize_power(c.points(), 1.0).unwrap();
        assert!((scale - 1.0).abs() < 1e-12);
        assert!((mean_power(&out) - 1.0).abs() < 1e-12);

        let x = vec![Complex64::new(2.0, 0.0); 8];
        let (_, scale) = normalize_power(&x, 1.0).unwrap();
        assert!((scale - 0.5).abs() < 1e-15);

        assert!(normalize_power(&[Complex64::new(0.0, 0.0)], 1.0).is_err());
    }

    #[test]
    fn json_export() {
        let c = Constellation::qam(16).unwrap();
        let v = c.to_json();
        assert_eq!(v["order"], 16);
        assert_eq!(v["points"].as_array().unwrap().len(), 16);
        assert_eq!(v["labels"][5], "0101");
    }
}
