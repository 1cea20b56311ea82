//! Plaintext spatial primitives.
//!
//! A query rectangle is never handed to the index as two corners. Instead each
//! of its `2l` faces is described by a pair of anchor points mirrored across the
//! face: a point is on the inner side of the face iff it is at least as close to
//! the inner anchor as to the outer one. Both predicates below only ever compare
//! squared distances to anchors, which is exactly what the encrypted variants in
//! [`crate::aspe`] can evaluate on ciphertexts.
//!
//! Rectangles are closed; a point on a face counts as inside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite point in `l`-dimensional attribute space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidPoint("zero dimensions"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate"));
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    fn check_dim(&self, other: &Point) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Closed axis-aligned box given by its minimum and maximum vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRect {
    lo: Point,
    hi: Point,
}

impl HyperRect {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        lo.check_dim(&hi)?;
        if let Some(j) = (0..lo.dim()).find(|&j| lo[j] > hi[j]) {
            return Err(Error::InvertedRect(j));
        }
        Ok(Self { lo, hi })
    }

    /// Build from per-dimension `[lo, hi]` intervals.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let lo = Point::new(bounds.iter().map(|b| b.0).collect())?;
        let hi = Point::new(bounds.iter().map(|b| b.1).collect())?;
        Self::new(lo, hi)
    }

    /// The zero-volume rectangle holding a single point.
    pub fn degenerate(p: Point) -> Self {
        Self { lo: p.clone(), hi: p }
    }

    /// Tightest box around a non-empty point set.
    pub fn bounding<'a>(points: impl IntoIterator<Item = &'a Point>) -> Result<Self> {
        let mut it = points.into_iter();
        let first = it.next().ok_or(Error::InvalidPoint("bounding box of empty set"))?;
        let mut lo = first.0.clone();
        let mut hi = first.0.clone();
        for p in it {
            first.check_dim(p)?;
            for (j, &c) in p.0.iter().enumerate() {
                lo[j] = lo[j].min(c);
                hi[j] = hi[j].max(c);
            }
        }
        Ok(Self { lo: Point(lo), hi: Point(hi) })
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn center(&self) -> Point {
        Point(self.lo.0.iter().zip(&self.hi.0).map(|(a, b)| 0.5 * (a + b)).collect())
    }

    /// Coordinate-wise `lo <= p <= hi`.
    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.0.iter().enumerate().all(|(j, &c)| self.lo[j] <= c && c <= self.hi[j])
    }

    pub fn contains_rect(&self, other: &HyperRect) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    /// Closed-interval overlap in every dimension.
    pub fn overlaps(&self, other: &HyperRect) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|j| self.lo[j] <= other.hi[j] && other.lo[j] <= self.hi[j])
    }

    /// Grow every face outward by `by`.
    pub fn inflate(&self, by: f64) -> HyperRect {
        HyperRect {
            lo: Point(self.lo.0.iter().map(|x| x - by).collect()),
            hi: Point(self.hi.0.iter().map(|x| x + by).collect()),
        }
    }

    /// Split at `value` along `axis` into the `x_axis <= value` and
    /// `x_axis >= value` halves.
    pub fn split(&self, axis: usize, value: f64) -> (HyperRect, HyperRect) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi.0[axis] = value;
        right.lo.0[axis] = value;
        (left, right)
    }
}

/// Anchor pair describing one face of a query rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPair {
    pub inner: Point,
    pub outer: Point,
}

/// A query rectangle expressed as `2l` anchor pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorQuery {
    pairs: Vec<AnchorPair>,
}

impl AnchorQuery {
    /// Validates pair count and the `inner != outer` condition.
    pub fn new(pairs: Vec<AnchorPair>) -> Result<Self> {
        let dim = pairs.first().map(|p| p.inner.dim()).ok_or(Error::InvalidPoint("no anchors"))?;
        if pairs.len() != 2 * dim {
            return Err(Error::InvalidArgument(format!(
                "{} anchor pairs for dimension {dim}, expected {}",
                pairs.len(),
                2 * dim
            )));
        }
        for pair in &pairs {
            pair.inner.check_dim(&pair.outer)?;
            if pair.inner.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: pair.inner.dim() });
            }
            if pair.inner == pair.outer {
                return Err(Error::InvalidArgument("coincident anchor pair".into()));
            }
        }
        Ok(Self { pairs })
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].inner.dim()
    }

    pub fn pairs(&self) -> &[AnchorPair] {
        &self.pairs
    }
}

/// Squared Euclidean distance.
pub fn dist2(a: &Point, b: &Point) -> Result<f64> {
    a.check_dim(b)?;
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Anchor pairs for every face of `q`, ordered dimension by dimension with the
/// lower face first.
///
/// Each anchor sits at the rectangle center in all coordinates but the face's
/// own, where it is placed `delta` inside (inner) or outside (outer) the face.
pub fn anchors_for_rect(q: &HyperRect, delta: f64) -> Result<AnchorQuery> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("anchor offset must be positive, got {delta}")));
    }
    let center = q.center();
    let mut pairs = Vec::with_capacity(2 * q.dim());
    for j in 0..q.dim() {
        // (face coordinate, inward normal sign)
        for (face, inward) in [(q.lo[j], 1.0), (q.hi[j], -1.0)] {
            let mut inner = center.clone();
            let mut outer = center.clone();
            inner.0[j] = face + inward * delta;
            outer.0[j] = face - inward * delta;
            pairs.push(AnchorPair { inner, outer });
        }
    }
    AnchorQuery::new(pairs)
}

fn outside(p: &Point, pair: &AnchorPair) -> bool {
    // dimensions are checked by the callers
    dist2(p, &pair.inner).unwrap() > dist2(p, &pair.outer).unwrap()
}

/// Point membership from anchor distances only.
pub fn is_point_in_rect(p: &Point, q: &AnchorQuery) -> Result<bool> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), found: p.dim() });
    }
    Ok(!q.pairs.iter().any(|pair| outside(p, pair)))
}

/// Intersection test between an anchor-encoded query and a rectangle, using
/// only the rectangle's two extremal vertices.
pub fn are_rects_inter(q: &AnchorQuery, r: &HyperRect) -> Result<bool> {
    if r.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), found: r.dim() });
    }
    Ok(!q.pairs.iter().any(|pair| outside(&r.lo, pair) && outside(&r.hi, pair)))
}

/// Indices of the points inside `q`, ascending. Linear scan.
pub fn rect_range_query_bruteforce(points: &[Point], q: &HyperRect) -> Vec<usize> {
    points.iter().enumerate().filter(|(_, p)| q.contains(p)).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn rect(b: &[(f64, f64)]) -> HyperRect {
        HyperRect::from_bounds(b).unwrap()
    }

    #[test]
    fn dist2_examples() {
        assert_eq!(dist2(&pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap(), 25.0);
        assert_eq!(dist2(&pt(&[1.0, 1.0]), &pt(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(dist2(&pt(&[2.0, 3.0, 5.0]), &pt(&[1.0, 0.0, 1.0])).unwrap(), 26.0);
        assert!(matches!(
            dist2(&pt(&[0.0]), &pt(&[0.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn point_validation() {
        assert!(Point::new(vec![]).is_err());
        assert!(Point::new(vec![1.0, f64::NAN]).is_err());
        assert!(Point::new(vec![f64::INFINITY]).is_err());
        assert!(HyperRect::from_bounds(&[(0.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(HyperRect::from_bounds(&[(1.0, 1.0)]).is_ok());
    }

    #[test]
    fn anchors_match_worked_example() {
        let q = rect(&[(1.0, 3.0), (2.0, 6.0)]);
        let a = anchors_for_rect(&q, 0.5).unwrap();
        let expected = [
            ([1.5, 4.0], [0.5, 4.0]),
            ([2.5, 4.0], [3.5, 4.0]),
            ([2.0, 2.5], [2.0, 1.5]),
            ([2.0, 5.5], [2.0, 6.5]),
        ];
        assert_eq!(a.pairs().len(), 4);
        for (pair, (inner, outer)) in a.pairs().iter().zip(expected) {
            assert_eq!(pair.inner, pt(&inner));
            assert_eq!(pair.outer, pt(&outer));
        }
        // midpoint on the face, segment along the face normal
        let faces = [(0, 1.0), (0, 3.0), (1, 2.0), (1, 6.0)];
        for (pair, (axis, face)) in a.pairs().iter().zip(faces) {
            assert_eq!(0.5 * (pair.inner[axis] + pair.outer[axis]), face);
            for j in 0..2 {
                if j != axis {
                    assert_eq!(pair.inner[j], pair.outer[j]);
                }
            }
        }
    }

    #[test]
    fn anchors_reject_bad_delta() {
        let q = rect(&[(0.0, 1.0)]);
        assert!(anchors_for_rect(&q, 0.0).is_err());
        assert!(anchors_for_rect(&q, -1.0).is_err());
        assert!(anchors_for_rect(&q, f64::NAN).is_err());
    }

    #[test]
    fn unit_square_center_inside() {
        let a = anchors_for_rect(&rect(&[(0.0, 1.0), (0.0, 1.0)]), 0.5).unwrap();
        assert!(is_point_in_rect(&pt(&[0.5, 0.5]), &a).unwrap());
    }

    #[test]
    fn degenerate_side_accepts_only_the_plane() {
        let q = rect(&[(0.0, 1.0), (0.5, 0.5)]);
        let a = anchors_for_rect(&q, 0.5).unwrap();
        // the two pairs of dimension 1 mirror each other
        assert_eq!(a.pairs()[2].inner, a.pairs()[3].outer);
        assert_eq!(a.pairs()[2].outer, a.pairs()[3].inner);
        assert!(is_point_in_rect(&pt(&[0.3, 0.5]), &a).unwrap());
        assert!(!is_point_in_rect(&pt(&[0.3, 0.5 + 1e-9]), &a).unwrap());
        assert!(!is_point_in_rect(&pt(&[0.3, 0.5 - 1e-9]), &a).unwrap());
    }

    #[test]
    fn point_in_rect_examples() {
        let a = anchors_for_rect(&rect(&[(1.0, 4.0), (2.0, 5.0)]), 0.5).unwrap();
        assert!(is_point_in_rect(&pt(&[2.0, 3.0]), &a).unwrap());
        assert!(!is_point_in_rect(&pt(&[0.0, 3.0]), &a).unwrap());
        // corner: ties on two faces count as inside
        assert!(is_point_in_rect(&pt(&[1.0, 2.0]), &a).unwrap());
        assert!(is_point_in_rect(&pt(&[1.0]), &a).is_err());
    }

    #[test]
    fn rects_inter_examples() {
        let q02 = anchors_for_rect(&rect(&[(0.0, 2.0), (0.0, 2.0)]), 0.5).unwrap();
        let q01 = anchors_for_rect(&rect(&[(0.0, 1.0), (0.0, 1.0)]), 0.5).unwrap();
        assert!(are_rects_inter(&q02, &rect(&[(1.0, 3.0), (1.0, 3.0)])).unwrap());
        assert!(!are_rects_inter(&q01, &rect(&[(2.0, 3.0), (2.0, 3.0)])).unwrap());
        let touching = rect(&[(1.0, 2.0), (1.0, 2.0)]);
        assert!(are_rects_inter(&q01, &touching).unwrap());
        assert!(rect(&[(0.0, 1.0), (0.0, 1.0)]).overlaps(&touching));
    }

    #[test]
    fn bruteforce_examples() {
        let q = rect(&[(0.0, 1.0), (0.0, 1.0)]);
        assert_eq!(rect_range_query_bruteforce(&[pt(&[0.0, 0.0]), pt(&[5.0, 5.0])], &q), vec![0]);
        assert!(rect_range_query_bruteforce(&[], &q).is_empty());
    }

    #[test]
    fn bruteforce_agrees_with_anchor_predicate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Point> =
            (0..100).map(|_| pt(&[rng.gen::<f64>(), rng.gen::<f64>()])).collect();
        let q = rect(&[(0.25, 0.75), (0.25, 0.75)]);
        let a = anchors_for_rect(&q, 0.5).unwrap();
        let via_anchors: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|(_, p)| is_point_in_rect(p, &a).unwrap())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(rect_range_query_bruteforce(&points, &q), via_anchors);
        assert!(!via_anchors.is_empty());
    }

    fn rect_strategy(dim: usize) -> impl Strategy<Value = HyperRect> {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), dim).prop_map(|v| {
            let b: Vec<(f64, f64)> = v.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
            HyperRect::from_bounds(&b).unwrap()
        })
    }

    fn point_strategy(dim: usize) -> impl Strategy<Value = Point> {
        prop::collection::vec(-12.0f64..12.0, dim).prop_map(|v| Point::new(v).unwrap())
    }

    fn case_strategy() -> impl Strategy<Value = (HyperRect, HyperRect, Point)> {
        prop::sample::select(vec![1usize, 2, 3, 5])
            .prop_flat_map(|d| (rect_strategy(d), rect_strategy(d), point_strategy(d)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn point_predicate_equals_coordinate_oracle((q, _r, p) in case_strategy()) {
            for delta in [0.01, 0.5, 10.0] {
                let a = anchors_for_rect(&q, delta).unwrap();
                prop_assert_eq!(is_point_in_rect(&p, &a).unwrap(), q.contains(&p));
            }
        }

        #[test]
        fn rect_predicate_equals_interval_overlap((q, r, _p) in case_strategy()) {
            for delta in [0.01, 0.5, 10.0] {
                let a = anchors_for_rect(&q, delta).unwrap();
                let got = are_rects_inter(&a, &r).unwrap();
                prop_assert_eq!(got, q.overlaps(&r));
            }
        }

        #[test]
        fn dyadic_boundaries_stay_exact(
            b in prop::collection::vec((-64i32..64, -64i32..64), 2),
            c in prop::collection::vec(-80i32..80, 2),
            k in 0usize..4,
        ) {
            // coordinates on a 1/8 grid keep every anchor distance exact, so
            // points placed on a face must tie and count as inside
            let bounds: Vec<(f64, f64)> = b
                .iter()
                .map(|&(x, y)| (x.min(y) as f64 / 8.0, x.max(y) as f64 / 8.0))
                .collect();
            let q = HyperRect::from_bounds(&bounds).unwrap();
            let mut c: Vec<f64> = c.iter().map(|&v| v as f64 / 8.0).collect();
            let axis = k / 2;
            c[axis] = if k % 2 == 0 { bounds[axis].0 } else { bounds[axis].1 };
            let p = Point::new(c).unwrap();
            let a = anchors_for_rect(&q, 0.5).unwrap();
            prop_assert_eq!(is_point_in_rect(&p, &a).unwrap(), q.contains(&p));
        }
    }
}
