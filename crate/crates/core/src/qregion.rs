//! Integer lattice geometry: quantum numbers, boxes and QRegions in `Z^M`.
//!
//! A [`QRegion`] is a finite union of pairwise disjoint integer boxes. Every
//! value handed out by this module is kept in a canonical form (see
//! [`QRegion::normalize`]), so two regions compare equal exactly when they
//! hold the same lattice points.
//!
//! The canonical form is built by slab recursion: along the first axis the
//! region is cut into maximal slabs whose cross-sections are identical, and
//! each cross-section is canonicalized the same way one dimension down. Slab
//! boundaries only depend on the point set, which is what makes the
//! representation unique.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest coordinate magnitude accepted by the constructors.
pub const COORD_LIMIT: i64 = 1 << 40;

/// Default cap on the number of points [`QRegion::enumerate_points`] will list.
pub const DEFAULT_ENUMERATION_BOUND: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("lattice points need at least one coordinate")]
    ZeroDimension,

    #[error("coordinate {0} exceeds the supported magnitude 2^40")]
    CoordinateOverflow(i64),

    #[error("empty box: lower corner exceeds upper corner on axis {axis}")]
    EmptyBox { axis: usize },

    #[error("region holds {count} points, above the enumeration bound {bound}")]
    BoundExceeded { count: u128, bound: u64 },

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

pub type GeometryResult<T> = Result<T, GeometryError>;

fn check_dim(expected: usize, found: usize) -> GeometryResult<()> {
    if expected == found {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, found })
    }
}

/// A quantum number: a point of `Z^M`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Qn(Vec<i64>);

impl Qn {
    pub fn new(coords: Vec<i64>) -> GeometryResult<Self> {
        if coords.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        if let Some(&c) = coords.iter().find(|c| c.abs() > COORD_LIMIT) {
            return Err(GeometryError::CoordinateOverflow(c));
        }
        Ok(Qn(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "zero-dimensional lattice point");
        Qn(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn checked_add(&self, other: &Qn) -> GeometryResult<Qn> {
        check_dim(self.dim(), other.dim())?;
        Ok(Qn(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn checked_sub(&self, other: &Qn) -> GeometryResult<Qn> {
        check_dim(self.dim(), other.dim())?;
        Ok(Qn(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn neg(&self) -> Qn {
        Qn(self.0.iter().map(|a| -a).collect())
    }

    /// `self + factor * other`, used for partial sums `A x`.
    pub(crate) fn add_scaled(&self, other: &Qn, factor: i64) -> Qn {
        Qn(self.0.iter().zip(&other.0).map(|(a, b)| a + factor * b).collect())
    }
}

impl fmt::Display for Qn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// An inclusive integer box `[lo, hi]`; never empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntBox {
    lo: Qn,
    hi: Qn,
}

impl IntBox {
    pub fn new(lo: Qn, hi: Qn) -> GeometryResult<Self> {
        check_dim(lo.dim(), hi.dim())?;
        if let Some(axis) = (0..lo.dim()).find(|&k| lo.0[k] > hi.0[k]) {
            return Err(GeometryError::EmptyBox { axis });
        }
        Ok(IntBox { lo, hi })
    }

    /// Convenience constructor from raw corner coordinates.
    pub fn from_corners(lo: &[i64], hi: &[i64]) -> GeometryResult<Self> {
        IntBox::new(Qn::new(lo.to_vec())?, Qn::new(hi.to_vec())?)
    }

    pub fn point(p: Qn) -> Self {
        IntBox { lo: p.clone(), hi: p }
    }

    pub fn lo(&self) -> &Qn {
        &self.lo
    }

    pub fn hi(&self) -> &Qn {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn point_count(&self) -> u128 {
        self.lo
            .0
            .iter()
            .zip(&self.hi.0)
            .map(|(l, h)| (h - l + 1) as u128)
            .product()
    }

    pub fn contains(&self, p: &Qn) -> bool {
        p.dim() == self.dim()
            && (0..self.dim()).all(|k| self.lo.0[k] <= p.0[k] && p.0[k] <= self.hi.0[k])
    }

    /// Componentwise `[max(lo), min(hi)]`, absent when empty.
    pub fn intersect(&self, other: &IntBox) -> GeometryResult<Option<IntBox>> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.intersect_unchecked(other))
    }

    fn intersect_unchecked(&self, other: &IntBox) -> Option<IntBox> {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let l = self.lo.0[k].max(other.lo.0[k]);
            let h = self.hi.0[k].min(other.hi.0[k]);
            if l > h {
                return None;
            }
            lo.push(l);
            hi.push(h);
        }
        Some(IntBox { lo: Qn(lo), hi: Qn(hi) })
    }

    fn overlap_count(&self, other: &IntBox) -> u128 {
        let mut n: u128 = 1;
        for k in 0..self.dim() {
            let l = self.lo.0[k].max(other.lo.0[k]);
            let h = self.hi.0[k].min(other.hi.0[k]);
            if l > h {
                return 0;
            }
            n *= (h - l + 1) as u128;
        }
        n
    }

    /// Guillotine subtraction: disjoint boxes covering `self \ other`.
    fn subtract(&self, other: &IntBox) -> Vec<IntBox> {
        if self.intersect_unchecked(other).is_none() {
            return vec![self.clone()];
        }
        let mut rest = self.clone();
        let mut out = Vec::new();
        for k in 0..self.dim() {
            if rest.lo.0[k] < other.lo.0[k] {
                let mut piece = rest.clone();
                piece.hi.0[k] = other.lo.0[k] - 1;
                out.push(piece);
                rest.lo.0[k] = other.lo.0[k];
            }
            if rest.hi.0[k] > other.hi.0[k] {
                let mut piece = rest.clone();
                piece.lo.0[k] = other.hi.0[k] + 1;
                out.push(piece);
                rest.hi.0[k] = other.hi.0[k];
            }
        }
        out
    }

    fn translate(&self, v: &Qn) -> IntBox {
        IntBox {
            lo: self.lo.add_scaled(v, 1),
            hi: self.hi.add_scaled(v, 1),
        }
    }

    fn minkowski(&self, other: &IntBox) -> IntBox {
        IntBox {
            lo: self.lo.add_scaled(&other.lo, 1),
            hi: self.hi.add_scaled(&other.hi, 1),
        }
    }
}

impl fmt::Display for IntBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// A finite union of disjoint integer boxes, kept in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QRegion {
    dim: usize,
    boxes: Vec<IntBox>,
}

impl QRegion {
    pub fn empty(dim: usize) -> Self {
        QRegion { dim, boxes: Vec::new() }
    }

    pub fn from_box(b: IntBox) -> Self {
        QRegion { dim: b.dim(), boxes: vec![b] }
    }

    pub fn point(p: Qn) -> Self {
        QRegion::from_box(IntBox::point(p))
    }

    /// Builds a region from arbitrary (possibly overlapping) boxes.
    pub fn from_boxes(dim: usize, boxes: Vec<IntBox>) -> GeometryResult<Self> {
        for b in &boxes {
            check_dim(dim, b.dim())?;
        }
        Ok(QRegion::normalize(dim, boxes))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn boxes(&self) -> &[IntBox] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn point_count(&self) -> u128 {
        self.boxes.iter().map(IntBox::point_count).sum()
    }

    /// Smallest lower corner, used to order regions inside a link index.
    pub fn min_corner(&self) -> Option<&Qn> {
        self.boxes.first().map(IntBox::lo)
    }

    /// Canonical disjoint decomposition of the union of `boxes`.
    ///
    /// Overlapping input is accepted. Equal point sets always produce the
    /// same box list, sorted lexicographically by lower corner.
    pub fn normalize(dim: usize, boxes: Vec<IntBox>) -> QRegion {
        if boxes.is_empty() {
            return QRegion::empty(dim);
        }
        let spans: Vec<Span> = boxes.into_iter().map(|b| (b.lo.0, b.hi.0)).collect();
        let boxes = canonical_spans(&spans)
            .into_iter()
            .map(|(lo, hi)| IntBox { lo: Qn(lo), hi: Qn(hi) })
            .collect();
        QRegion { dim, boxes }
    }

    pub fn intersect(&self, other: &QRegion) -> GeometryResult<QRegion> {
        check_dim(self.dim, other.dim)?;
        let mut out = Vec::new();
        for a in &self.boxes {
            for b in &other.boxes {
                if let Some(c) = a.intersect_unchecked(b) {
                    out.push(c);
                }
            }
        }
        Ok(QRegion::normalize(self.dim, out))
    }

    /// Point-set difference `self \ other`.
    pub fn difference(&self, other: &QRegion) -> GeometryResult<QRegion> {
        check_dim(self.dim, other.dim)?;
        Ok(QRegion::normalize(self.dim, self.raw_difference(other)))
    }

    fn raw_difference(&self, other: &QRegion) -> Vec<IntBox> {
        let mut pieces = self.boxes.clone();
        for b in &other.boxes {
            if pieces.is_empty() {
                break;
            }
            pieces = pieces.iter().flat_map(|p| p.subtract(b)).collect();
        }
        pieces
    }

    /// Returns `(self \ other, other \ self)`.
    pub fn symdiff(&self, other: &QRegion) -> GeometryResult<(QRegion, QRegion)> {
        Ok((self.difference(other)?, other.difference(self)?))
    }

    pub fn union(&self, other: &QRegion) -> GeometryResult<QRegion> {
        check_dim(self.dim, other.dim)?;
        let mut boxes = self.boxes.clone();
        boxes.extend(other.raw_difference(self));
        Ok(QRegion::normalize(self.dim, boxes))
    }

    /// Translation of every point by `v`.
    pub fn shift(&self, v: &Qn) -> GeometryResult<QRegion> {
        check_dim(self.dim, v.dim())?;
        // translation preserves the canonical order
        Ok(QRegion {
            dim: self.dim,
            boxes: self.boxes.iter().map(|b| b.translate(v)).collect(),
        })
    }

    /// Minkowski sum `{p + q : p in self, q in other}`.
    pub fn add(&self, other: &QRegion) -> GeometryResult<QRegion> {
        check_dim(self.dim, other.dim)?;
        let mut out = Vec::with_capacity(self.boxes.len() * other.boxes.len());
        for a in &self.boxes {
            for b in &other.boxes {
                out.push(a.minkowski(b));
            }
        }
        Ok(QRegion::normalize(self.dim, out))
    }

    pub fn is_subset(&self, other: &QRegion) -> GeometryResult<bool> {
        check_dim(self.dim, other.dim)?;
        Ok(self.is_subset_unchecked(other))
    }

    pub(crate) fn is_subset_unchecked(&self, other: &QRegion) -> bool {
        // both sides are disjoint unions, so overlaps can be counted pairwise
        let inside: u128 = self
            .boxes
            .iter()
            .map(|a| other.boxes.iter().map(|b| a.overlap_count(b)).sum::<u128>())
            .sum();
        inside == self.point_count()
    }

    pub fn contains_point(&self, p: &Qn) -> GeometryResult<bool> {
        check_dim(self.dim, p.dim())?;
        Ok(self.boxes.iter().any(|b| b.contains(p)))
    }

    pub fn enumerate_points(&self) -> GeometryResult<Vec<Qn>> {
        self.enumerate_points_bounded(DEFAULT_ENUMERATION_BOUND)
    }

    /// All lattice points in lexicographic order.
    pub fn enumerate_points_bounded(&self, bound: u64) -> GeometryResult<Vec<Qn>> {
        let count = self.point_count();
        if count > bound as u128 {
            return Err(GeometryError::BoundExceeded { count, bound });
        }
        let mut pts = Vec::with_capacity(count as usize);
        for b in &self.boxes {
            let mut cur = b.lo.0.clone();
            // odometer, last axis fastest
            'next: loop {
                pts.push(Qn(cur.clone()));
                for k in (0..self.dim).rev() {
                    if cur[k] < b.hi.0[k] {
                        cur[k] += 1;
                        continue 'next;
                    }
                    cur[k] = b.lo.0[k];
                }
                break;
            }
        }
        pts.sort();
        Ok(pts)
    }

    /// Parses the `[(..),(..)]u[(..),(..)]` syntax; `{}` is the empty region.
    pub fn parse(text: &str, dim: usize) -> GeometryResult<QRegion> {
        let region = Parser::new(text).region(Some(dim))?;
        Ok(region.unwrap_or_else(|| QRegion::empty(dim)))
    }
}

impl fmt::Display for QRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.boxes.is_empty() {
            return write!(f, "{{}}");
        }
        for (k, b) in self.boxes.iter().enumerate() {
            if k > 0 {
                write!(f, "u")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for QRegion {
    type Err = GeometryError;

    /// The dimension is taken from the first box, so `{}` is rejected here;
    /// use [`QRegion::parse`] when empty regions may occur.
    fn from_str(s: &str) -> GeometryResult<Self> {
        Parser::new(s).region(None)?.ok_or(GeometryError::Parse {
            pos: 0,
            msg: "cannot infer the dimension of an empty region".into(),
        })
    }
}

type Span = (Vec<i64>, Vec<i64>);

fn canonical_spans(spans: &[Span]) -> Vec<Span> {
    if spans.is_empty() {
        return Vec::new();
    }
    if spans[0].0.len() == 1 {
        let mut iv: Vec<(i64, i64)> = spans.iter().map(|(l, h)| (l[0], h[0])).collect();
        iv.sort_unstable();
        let mut out: Vec<(i64, i64)> = Vec::new();
        for (l, h) in iv {
            match out.last_mut() {
                Some(last) if l <= last.1 + 1 => last.1 = last.1.max(h),
                _ => out.push((l, h)),
            }
        }
        return out.into_iter().map(|(l, h)| (vec![l], vec![h])).collect();
    }

    let mut cuts: Vec<i64> = spans.iter().flat_map(|(l, h)| [l[0], h[0] + 1]).collect();
    cuts.sort_unstable();
    cuts.dedup();

    // (first, last, canonical cross-section)
    let mut slabs: Vec<(i64, i64, Vec<Span>)> = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1] - 1);
        let cross: Vec<Span> = spans
            .iter()
            .filter(|(l, h)| l[0] <= a && a <= h[0])
            .map(|(l, h)| (l[1..].to_vec(), h[1..].to_vec()))
            .collect();
        if cross.is_empty() {
            continue;
        }
        let cs = canonical_spans(&cross);
        match slabs.last_mut() {
            Some(last) if last.1 + 1 == a && last.2 == cs => last.1 = b,
            _ => slabs.push((a, b, cs)),
        }
    }

    let mut out = Vec::new();
    for (a, b, cs) in slabs {
        for (tl, th) in cs {
            let mut lo = Vec::with_capacity(tl.len() + 1);
            lo.push(a);
            lo.extend(tl);
            let mut hi = Vec::with_capacity(th.len() + 1);
            hi.push(b);
            hi.extend(th);
            out.push((lo, hi));
        }
    }
    out
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { src: text.as_bytes(), pos: 0 }
    }

    fn err<T>(&self, msg: impl Into<String>) -> GeometryResult<T> {
        Err(GeometryError::Parse { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> GeometryResult<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn int(&mut self) -> GeometryResult<i64> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.src.get(self.pos), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<i64>() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.err("expected an integer")
            }
        }
    }

    /// `(a,b,..)` or, for one-dimensional regions, a bare integer.
    fn tuple(&mut self) -> GeometryResult<Qn> {
        let start = self.pos;
        let coords = if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut coords = vec![self.int()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                coords.push(self.int()?);
            }
            self.expect(b')')?;
            coords
        } else {
            vec![self.int()?]
        };
        Qn::new(coords).map_err(|e| GeometryError::Parse { pos: start, msg: e.to_string() })
    }

    fn int_box(&mut self) -> GeometryResult<IntBox> {
        self.expect(b'[')?;
        let start = self.pos;
        let lo = self.tuple()?;
        self.expect(b',')?;
        let hi = self.tuple()?;
        self.expect(b']')?;
        IntBox::new(lo, hi).map_err(|e| GeometryError::Parse { pos: start, msg: e.to_string() })
    }

    fn region(&mut self, dim: Option<usize>) -> GeometryResult<Option<QRegion>> {
        if self.peek() == Some(b'{') {
            self.pos += 1;
            self.expect(b'}')?;
            return self.finish(None);
        }
        let mut boxes = vec![self.int_box()?];
        while let Some(b'u' | b'U') = self.peek() {
            self.pos += 1;
            boxes.push(self.int_box()?);
        }
        let d = dim.unwrap_or(boxes[0].dim());
        if let Some(b) = boxes.iter().find(|b| b.dim() != d) {
            return self.err(format!("box {b} has dimension {}, expected {d}", b.dim()));
        }
        self.finish(Some(QRegion::normalize(d, boxes)))
    }

    fn finish(&mut self, r: Option<QRegion>) -> GeometryResult<Option<QRegion>> {
        if self.peek().is_some() {
            return self.err("trailing characters");
        }
        Ok(r)
    }
}
