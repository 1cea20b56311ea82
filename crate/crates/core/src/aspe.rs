//! Asymmetric scalar-product-preserving encryption (ASPE).
//!
//! Data points are lifted to `V+ = (v, 1)` and encrypted as `M⁻¹·V+`; query
//! anchors are lifted to `A+ = (a, -½‖a‖²)` and encrypted as `Mᵀ·A+`. The inner
//! product of the two ciphertexts equals `a·v - ½‖a‖²`, so for an anchor pair
//! the sign of `(enc_in - enc_out)·[V]` is the sign of
//! `½(dist²(V, A_out) - dist²(V, A_in))`: positive when `V` lies on the inner
//! side of the face, negative when it lies outside.
//!
//! Each trapdoor pair is scaled by its own fresh positive factor, so repeated
//! trapdoors for the same query never share bytes while every sign is kept.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::geometry::{AnchorQuery, HyperRect, Point};
use crate::wire::{Reader, Writer};

const DET_FLOOR: f64 = 1e-6;
const INVERSE_TOLERANCE: f64 = 1e-9;
/// Range of the per-pair blinding factor.
pub const SCALE_RANGE: (f64, f64) = (0.5, 2.0);

/// Secret `(l+1)×(l+1)` matrix with its precomputed inverse.
#[derive(Clone, PartialEq)]
pub struct AspeKey {
    dim: usize,
    m: DMatrix<f64>,
    m_inv: DMatrix<f64>,
}

impl std::fmt::Debug for AspeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AspeKey").field("dim", &self.dim).finish_non_exhaustive()
    }
}

fn inverse_residual(m: &DMatrix<f64>, m_inv: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (m * m_inv - DMatrix::<f64>::identity(n, n)).amax()
}

impl AspeKey {
    /// Wrap an explicit matrix. Fails unless it is square of side `dim+1`,
    /// finite and comfortably invertible.
    pub fn from_matrix(dim: usize, m: DMatrix<f64>) -> Result<Self> {
        let n = dim + 1;
        if dim == 0 || m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Crypto("non-finite key entry"));
        }
        if m.determinant().abs() < DET_FLOOR {
            return Err(Error::Crypto("key matrix is (nearly) singular"));
        }
        let m_inv = m.clone().try_inverse().ok_or(Error::Crypto("key matrix is singular"))?;
        if inverse_residual(&m, &m_inv) > INVERSE_TOLERANCE {
            return Err(Error::Crypto("key matrix is ill-conditioned"));
        }
        Ok(Self { dim, m, m_inv })
    }

    pub fn identity(dim: usize) -> Self {
        let n = dim + 1;
        Self { dim, m: DMatrix::identity(n, n), m_inv: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.m_inv
    }

    /// `u32 l` followed by `M` row-major as big-endian doubles.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.dim + 1;
        let mut w = Writer::with_capacity(4 + 8 * n * n);
        w.u32(self.dim as u32);
        for i in 0..n {
            for j in 0..n {
                w.f64(self.m[(i, j)]);
            }
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let dim = r.u32()? as usize;
        let n = dim + 1;
        if r.remaining() != 8 * n * n {
            return Err(Error::decode(format!("key body is not {n}x{n} doubles")));
        }
        let mut entries = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            entries.push(r.f64()?);
        }
        r.finish()?;
        Self::from_matrix(dim, DMatrix::from_row_slice(n, n, &entries))
    }
}

/// Sample a key with entries uniform in `[-1, 1]`, resampling until the matrix
/// clears the determinant floor and inverts to within `1e-9`.
pub fn keygen(dim: usize, seed: u64) -> Result<AspeKey> {
    if dim == 0 {
        return Err(Error::InvalidArgument("ASPE dimension must be at least 1".into()));
    }
    let n = dim + 1;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0));
        if let Ok(key) = AspeKey::from_matrix(dim, m) {
            return Ok(key);
        }
    }
}

/// Encrypted data point `M⁻¹·(v, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncPoint(Vec<f64>);

impl EncPoint {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Dimension of the plaintext this encrypts.
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn encoded_len(dim: usize) -> usize {
        4 + 8 * (dim + 1)
    }

    pub fn write(&self, w: &mut Writer) {
        w.u32(self.dim() as u32);
        for &x in &self.0 {
            w.f64(x);
        }
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let dim = r.u32()? as usize;
        if dim == 0 || r.remaining() < 8 * (dim + 1) {
            return Err(Error::decode(format!("bad encrypted point dimension {dim}")));
        }
        let v = (0..=dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Self(v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(Self::encoded_len(self.dim()));
        self.write(&mut w);
        w.into_bytes()
    }
}

/// Encrypted rectangle: the ciphertexts of its minimum and maximum vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct EncRect {
    pub lo: EncPoint,
    pub hi: EncPoint,
}

impl EncRect {
    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn write(&self, w: &mut Writer) {
        self.lo.write(w);
        self.hi.write(w);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let lo = EncPoint::read(r)?;
        let hi = EncPoint::read(r)?;
        if lo.dim() != hi.dim() {
            return Err(Error::decode("encrypted rectangle vertices differ in dimension"));
        }
        Ok(Self { lo, hi })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(2 * EncPoint::encoded_len(self.dim()));
        self.write(&mut w);
        w.into_bytes()
    }
}

fn check_dim(key: &AspeKey, found: usize) -> Result<()> {
    if key.dim != found {
        return Err(Error::DimensionMismatch { expected: key.dim, found });
    }
    Ok(())
}

pub fn encrypt_point(key: &AspeKey, v: &Point) -> Result<EncPoint> {
    check_dim(key, v.dim())?;
    // M⁻¹·(v, 1) column by column, without temporaries
    let m = &key.m_inv;
    let mut out: Vec<f64> = m.column(key.dim).iter().copied().collect();
    for (j, &x) in v.coords().iter().enumerate() {
        for (o, &c) in out.iter_mut().zip(m.column(j).iter()) {
            *o += c * x;
        }
    }
    Ok(EncPoint(out))
}

pub fn encrypt_rect(key: &AspeKey, r: &HyperRect) -> Result<EncRect> {
    Ok(EncRect { lo: encrypt_point(key, r.lo())?, hi: encrypt_point(key, r.hi())? })
}

/// Key holder's inverse of [`encrypt_point`]: `M·[V]`, dropping the trailing
/// lift coordinate.
pub fn decrypt_point(key: &AspeKey, ev: &EncPoint) -> Result<Point> {
    check_dim(key, ev.dim())?;
    let plain = &key.m * DVector::from_column_slice(&ev.0);
    Point::new(plain.iter().take(key.dim).copied().collect())
}

/// `Mᵀ·(a, -½‖a‖²)`, before blinding.
pub fn encrypt_anchor(key: &AspeKey, a: &Point) -> Result<Vec<f64>> {
    check_dim(key, a.dim())?;
    let lift = -0.5 * a.norm2();
    // entry j is column j of M dotted with the lifted anchor
    Ok((0..=key.dim)
        .map(|j| {
            let col = key.m.column(j);
            a.coords().iter().zip(col.iter()).map(|(x, c)| x * c).sum::<f64>() + lift * col[key.dim]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapdoorPair {
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
    /// `inner - outer`, the only thing the comparison needs.
    normal: Vec<f64>,
}

impl TrapdoorPair {
    fn new(inner: Vec<f64>, outer: Vec<f64>) -> Self {
        let normal = inner.iter().zip(&outer).map(|(a, b)| a - b).collect();
        Self { inner, outer, normal }
    }
}

/// Encrypted anchor set for one query rectangle under one device key.
#[derive(Debug, Clone, PartialEq)]
pub struct Trapdoor {
    dim: usize,
    pairs: Vec<TrapdoorPair>,
}

impl Trapdoor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pairs(&self) -> &[TrapdoorPair] {
        &self.pairs
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(4 + self.pairs.len() * 16 * (self.dim + 1));
        w.u32(self.dim as u32);
        for p in &self.pairs {
            for &x in p.inner.iter().chain(&p.outer) {
                w.f64(x);
            }
        }
        w.into_bytes()
    }
}

/// Trapdoor with one fresh blinding factor per pair drawn from `seed`.
pub fn make_trapdoor(key: &AspeKey, q: &AnchorQuery, seed: u64) -> Result<Trapdoor> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scales: Vec<f64> =
        (0..q.pairs().len()).map(|_| rng.gen_range(SCALE_RANGE.0..=SCALE_RANGE.1)).collect();
    make_trapdoor_scaled(key, q, &scales)
}

/// Trapdoor with caller-chosen blinding factors, one per anchor pair.
pub fn make_trapdoor_scaled(key: &AspeKey, q: &AnchorQuery, scales: &[f64]) -> Result<Trapdoor> {
    check_dim(key, q.dim())?;
    if scales.len() != q.pairs().len() || scales.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument("need one positive scale per anchor pair".into()));
    }
    let pairs = q
        .pairs()
        .iter()
        .zip(scales)
        .map(|(pair, &r)| {
            let inner = encrypt_anchor(key, &pair.inner)?.into_iter().map(|x| r * x).collect();
            let outer = encrypt_anchor(key, &pair.outer)?.into_iter().map(|x| r * x).collect();
            Ok(TrapdoorPair::new(inner, outer))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trapdoor { dim: key.dim, pairs })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sign of `(enc_in - enc_out)·[V]`: `+1` when `V` is nearer the inner anchor,
/// `-1` when nearer the outer one, `0` on the face.
pub fn enc_compare(pair: &TrapdoorPair, ev: &EncPoint) -> i8 {
    let s = dot(&pair.normal, &ev.0);
    if s > 0.0 {
        1
    } else if s < 0.0 {
        -1
    } else {
        0
    }
}

fn check_trapdoor(tr: &Trapdoor, dim: usize) -> Result<()> {
    if tr.dim != dim {
        return Err(Error::DimensionMismatch { expected: tr.dim, found: dim });
    }
    Ok(())
}

/// Encrypted point-in-rectangle test.
pub fn enc_point_in_rect(tr: &Trapdoor, ev: &EncPoint) -> Result<bool> {
    check_trapdoor(tr, ev.dim())?;
    Ok(!tr.pairs.iter().any(|p| enc_compare(p, ev) < 0))
}

/// Encrypted rectangle intersection test on the two extremal vertices.
pub fn enc_rects_inter(tr: &Trapdoor, er: &EncRect) -> Result<bool> {
    check_trapdoor(tr, er.dim())?;
    Ok(!tr.pairs.iter().any(|p| enc_compare(p, &er.lo) < 0 && enc_compare(p, &er.hi) < 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{anchors_for_rect, are_rects_inter, is_point_in_rect, AnchorPair};

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn rect(b: &[(f64, f64)]) -> HyperRect {
        HyperRect::from_bounds(b).unwrap()
    }

    #[test]
    fn keygen_is_deterministic_and_inverts() {
        let a = keygen(2, 9).unwrap();
        let b = keygen(2, 9).unwrap();
        assert_eq!(a, b);
        assert!(inverse_residual(a.matrix(), a.inverse()) <= 1e-9);
        assert!(a.matrix().determinant().abs() >= 1e-6);
        let c = keygen(5, 1).unwrap();
        let d = keygen(5, 2).unwrap();
        assert!(c.matrix().iter().zip(d.matrix().iter()).any(|(x, y)| x != y));
        assert!(keygen(0, 1).is_err());
    }

    #[test]
    fn keygen_handles_larger_dimensions() {
        for l in [10, 16, 32] {
            let k = keygen(l, l as u64).unwrap();
            assert!(inverse_residual(k.matrix(), k.inverse()) <= 1e-9);
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(AspeKey::from_matrix(1, m).is_err());
    }

    #[test]
    fn key_bytes_round_trip() {
        let k = keygen(3, 4).unwrap();
        let bytes = k.to_bytes();
        assert_eq!(bytes.len(), 4 + 8 * 16);
        assert_eq!(&bytes[..4], &[0, 0, 0, 3]);
        assert_eq!(AspeKey::from_bytes(&bytes).unwrap(), k);
        assert!(AspeKey::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn identity_key_encryption() {
        let k = AspeKey::identity(2);
        assert_eq!(encrypt_point(&k, &pt(&[2.0, 3.0])).unwrap().as_slice(), &[2.0, 3.0, 1.0]);
        assert_eq!(encrypt_point(&k, &pt(&[0.0, 0.0])).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        assert!(encrypt_point(&k, &pt(&[1.0])).is_err());
    }

    #[test]
    fn decrypt_round_trip() {
        let k = keygen(4, 77).unwrap();
        let v = pt(&[0.1, -3.0, 2.5, 0.0]);
        let ev = encrypt_point(&k, &v).unwrap();
        let lifted = k.matrix() * DVector::from_column_slice(ev.as_slice());
        assert!((lifted[4] - 1.0).abs() < 1e-9);
        let back = decrypt_point(&k, &ev).unwrap();
        for j in 0..4 {
            assert!((back[j] - v[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn enc_point_bytes_round_trip() {
        let ev = encrypt_point(&keygen(3, 1).unwrap(), &pt(&[1.0, 2.0, 3.0])).unwrap();
        let bytes = ev.to_bytes();
        assert_eq!(bytes.len(), EncPoint::encoded_len(3));
        let mut r = Reader::new(&bytes);
        assert_eq!(EncPoint::read(&mut r).unwrap(), ev);
        r.finish().unwrap();
    }

    #[test]
    fn identity_key_trapdoor_member() {
        let k = AspeKey::identity(2);
        let a = AnchorQuery::new(vec![
            AnchorPair { inner: pt(&[1.0, 0.0]), outer: pt(&[3.0, 0.0]) },
            AnchorPair { inner: pt(&[0.0, 1.0]), outer: pt(&[0.0, 3.0]) },
            AnchorPair { inner: pt(&[-1.0, 0.0]), outer: pt(&[-3.0, 0.0]) },
            AnchorPair { inner: pt(&[0.0, -1.0]), outer: pt(&[0.0, -3.0]) },
        ])
        .unwrap();
        let tr = make_trapdoor(&k, &a, 5).unwrap();
        let p = &tr.pairs()[0];
        let r = p.inner[0];
        assert!((0.5..=2.0).contains(&r));
        assert_eq!(p.inner, vec![r, 0.0, -0.5 * r]);
        // same r on both members of a pair
        assert_eq!(p.outer, vec![3.0 * r, 0.0, -4.5 * r]);
        // V=(0,0): (1-3, 0, -0.5+4.5)·(0,0,1) = 4 > 0
        let origin = encrypt_point(&k, &pt(&[0.0, 0.0])).unwrap();
        assert_eq!(enc_compare(p, &origin), 1);
        // equidistant from both anchors; exact only for a unit scale
        let unit = make_trapdoor_scaled(&k, &a, &[1.0; 4]).unwrap();
        let mid = encrypt_point(&k, &pt(&[2.0, 5.0])).unwrap();
        assert_eq!(enc_compare(&unit.pairs()[0], &mid), 0);
        let far = encrypt_point(&k, &pt(&[4.0, 0.0])).unwrap();
        assert_eq!(enc_compare(p, &far), -1);
    }

    #[test]
    fn trapdoor_pair_count() {
        let k = keygen(3, 3).unwrap();
        let q = anchors_for_rect(&rect(&[(0.0, 1.0); 3]), 0.5).unwrap();
        assert_eq!(make_trapdoor(&k, &q, 1).unwrap().pairs().len(), 6);
        let wrong = anchors_for_rect(&rect(&[(0.0, 1.0); 2]), 0.5).unwrap();
        assert!(make_trapdoor(&k, &wrong, 1).is_err());
    }

    #[test]
    fn scaled_trapdoor_rejects_bad_scales() {
        let k = keygen(1, 3).unwrap();
        let q = anchors_for_rect(&rect(&[(0.0, 1.0)]), 0.5).unwrap();
        assert!(make_trapdoor_scaled(&k, &q, &[1.0]).is_err());
        assert!(make_trapdoor_scaled(&k, &q, &[1.0, 0.0]).is_err());
        assert!(make_trapdoor_scaled(&k, &q, &[1.0, 2.0]).is_ok());
    }

    #[test]
    fn encrypted_examples_mirror_plaintext() {
        let k = keygen(2, 21).unwrap();
        let q = anchors_for_rect(&rect(&[(1.0, 4.0), (2.0, 5.0)]), 0.5).unwrap();
        let tr = make_trapdoor(&k, &q, 3).unwrap();
        for (p, want) in [([2.0, 3.0], true), ([0.0, 3.0], false)] {
            let ev = encrypt_point(&k, &pt(&p)).unwrap();
            assert_eq!(enc_point_in_rect(&tr, &ev).unwrap(), want);
            assert_eq!(is_point_in_rect(&pt(&p), &q).unwrap(), want);
        }
        // corner ties are exact only under the identity key; a random key
        // may round either way
        let ik = AspeKey::identity(2);
        let itr = make_trapdoor_scaled(&ik, &q, &[1.0; 4]).unwrap();
        let corner = encrypt_point(&ik, &pt(&[1.0, 2.0])).unwrap();
        assert!(enc_point_in_rect(&itr, &corner).unwrap());

        let cases = [
            ([(0.0, 2.0), (0.0, 2.0)], [(1.0, 3.0), (1.0, 3.0)], true),
            ([(0.0, 1.0), (0.0, 1.0)], [(2.0, 3.0), (2.0, 3.0)], false),
            ([(0.0, 1.0), (0.0, 1.0)], [(1.0, 2.0), (1.0, 2.0)], true),
        ];
        for (qb, rb, want) in cases {
            let qa = anchors_for_rect(&rect(&qb), 0.5).unwrap();
            let r = rect(&rb);
            assert_eq!(are_rects_inter(&qa, &r).unwrap(), want);
            // identity key keeps the touching case exact
            let itr = make_trapdoor_scaled(&ik, &qa, &[1.0; 4]).unwrap();
            assert_eq!(enc_rects_inter(&itr, &encrypt_rect(&ik, &r).unwrap()).unwrap(), want);
        }
        let tr = make_trapdoor(&k, &anchors_for_rect(&rect(&[(0.0, 2.0), (0.0, 2.0)]), 0.5).unwrap(), 8)
            .unwrap();
        assert!(enc_rects_inter(&tr, &encrypt_rect(&k, &rect(&[(1.0, 3.0), (1.0, 3.0)])).unwrap())
            .unwrap());
    }
}
