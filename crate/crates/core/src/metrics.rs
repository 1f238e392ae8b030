//! Curve comparison: band-wise mean absolute error and Partial Curve
//! Mapping (PCM).
//!
//! PCM normalizes both curves by the reference curve's bounding box, then
//! slides the shorter curve (by arc length) along the longer one and
//! measures the area swept between corresponding points. The result is
//! the smallest such area over all admissible offsets.

use crate::dataset::{EqCurve, GAIN_LIMIT_DB};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Polyline with strictly increasing x.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve2D<T> {
    xs: Vec<T>,
    ys: Vec<T>,
}

impl<T: Scalar> Curve2D<T> {
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Shape {
                expected: xs.len(),
                found: ys.len(),
            });
        }
        if xs.len() < 2 {
            return Err(Error::Argument("a curve needs at least two points".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("curve has a non-finite coordinate".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "curve x values must be strictly increasing".into(),
            ));
        }
        Ok(Self { xs, ys })
    }

    pub fn from_points(points: &[(T, T)]) -> Result<Self> {
        Self::new(
            points.iter().map(|p| p.0).collect(),
            points.iter().map(|p| p.1).collect(),
        )
    }

    pub fn xs(&self) -> &[T] {
        &self.xs
    }

    pub fn ys(&self) -> &[T] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Same curve shifted by `(dx, dy)`.
    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            xs: self.xs.iter().map(|&x| x + dx).collect(),
            ys: self.ys.iter().map(|&y| y + dy).collect(),
        }
    }
}

/// EQ curve as (log10 Hz, dB) points.
pub fn curve_from_eq(curve: &EqCurve) -> Curve2D<f64> {
    Curve2D {
        xs: curve.band_centers_hz().iter().map(|f| f.log10()).collect(),
        ys: curve.gains_db().to_vec(),
    }
}

/// Polyline in normalized coordinates with cumulative arc length.
struct Track<T> {
    pts: Vec<(T, T)>,
    arc: Vec<T>,
}

impl<T: Scalar> Track<T> {
    fn new(pts: Vec<(T, T)>) -> Self {
        let mut arc = Vec::with_capacity(pts.len());
        let mut total = T::zero();
        arc.push(total);
        for w in pts.windows(2) {
            total += (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            arc.push(total);
        }
        Self { pts, arc }
    }

    fn length(&self) -> T {
        *self.arc.last().expect("non-empty track")
    }

    /// Point at arc length `s`, linearly interpolated; `s` is clamped to the
    /// track.
    fn at(&self, s: T) -> (T, T) {
        let n = self.arc.len();
        if s <= T::zero() {
            return self.pts[0];
        }
        if s >= self.arc[n - 1] {
            return self.pts[n - 1];
        }
        // first vertex with arc > s
        let j = self.arc.partition_point(|&a| a <= s);
        let (a0, a1) = (self.arc[j - 1], self.arc[j]);
        let t = if a1 > a0 {
            (s - a0) / (a1 - a0)
        } else {
            T::zero()
        };
        let (p0, p1) = (self.pts[j - 1], self.pts[j]);
        (p0.0 + t * (p1.0 - p0.0), p0.1 + t * (p1.1 - p0.1))
    }
}

/// Area between the short track and the long track when the short one
/// starts at arc length `offset` of the long one.
fn mapped_area<T: Scalar>(short: &Track<T>, long: &Track<T>, offset: T) -> T {
    let half = T::lit(0.5);
    let dist = |k: usize| {
        let p = short.pts[k];
        let q = long.at(offset + short.arc[k]);
        (p.0 - q.0).hypot(p.1 - q.1)
    };
    let mut area = T::zero();
    let mut prev = dist(0);
    for k in 1..short.pts.len() {
        let d = dist(k);
        area += half * (prev + d) * (short.arc[k] - short.arc[k - 1]);
        prev = d;
    }
    area
}

/// Minimizes a convex function on `[lo, hi]` by golden-section search.
fn golden_min<T: Scalar>(f: impl Fn(T) -> T, lo: T, hi: T) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let tol = T::epsilon().sqrt() * (T::one() + hi.abs());
    let mut best = f(lo).min(f(hi));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    best = best.min(fc).min(fd);
    best
}

/// Partial Curve Mapping distance of `candidate` from `reference`.
///
/// Both curves are translated so the reference's minimum x and y become 0
/// and scaled by the reference's x and y extents (an extent of zero scales
/// by 1). The shorter curve is slid along the longer one over every offset
/// that keeps it inside; the area between the curves is convex in the
/// offset between consecutive breakpoints (offsets at which a short-curve
/// vertex lands on a long-curve vertex), so each such piece is minimized
/// exactly and the overall minimum returned.
pub fn pcm_distance<T: Scalar>(reference: &Curve2D<T>, candidate: &Curve2D<T>) -> Result<T> {
    let (min_x, max_x) = min_max(&reference.xs);
    let (min_y, max_y) = min_max(&reference.ys);
    let span = |lo: T, hi: T| if hi > lo { hi - lo } else { T::one() };
    let (sx, sy) = (span(min_x, max_x), span(min_y, max_y));
    let norm = |c: &Curve2D<T>| {
        c.xs.iter()
            .zip(&c.ys)
            .map(|(&x, &y)| ((x - min_x) / sx, (y - min_y) / sy))
            .collect::<Vec<_>>()
    };
    let r = Track::new(norm(reference));
    let c = Track::new(norm(candidate));
    if !r.length().is_finite() || !c.length().is_finite() {
        return Err(Error::Numeric("curve arc length is not finite".into()));
    }
    let (short, long) = if c.length() < r.length() {
        (&c, &r)
    } else {
        (&r, &c)
    };
    let slack = (long.length() - short.length()).max(T::zero());
    if slack == T::zero() {
        return Ok(mapped_area(short, long, T::zero()));
    }

    let mut breaks: Vec<T> = vec![T::zero(), slack];
    for &t in &long.arc {
        for &s in &short.arc {
            let o = t - s;
            if o > T::zero() && o < slack {
                breaks.push(o);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite offsets"));
    breaks.dedup();

    let f = |o: T| mapped_area(short, long, o);
    let mut best = T::infinity();
    for w in breaks.windows(2) {
        best = best.min(golden_min(f, w[0], w[1]));
    }
    Ok(best)
}

fn min_max<T: Scalar>(v: &[T]) -> (T, T) {
    v.iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// PCM between two EQ curves in (log10 Hz, dB) coordinates.
pub fn pcm_eq(reference: &EqCurve, candidate: &EqCurve) -> Result<f64> {
    pcm_distance(&curve_from_eq(reference), &curve_from_eq(candidate))
}

/// Mean absolute band difference in dB. Both curves must share a band grid.
pub fn mae_db(a: &EqCurve, b: &EqCurve) -> Result<f64> {
    if a.band_centers_hz() != b.band_centers_hz() {
        return Err(Error::Argument("curves use different band grids".into()));
    }
    let n = a.gains_db().len() as f64;
    Ok(a.gains_db()
        .iter()
        .zip(b.gains_db())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n)
}

/// [`mae_db`] expressed in normalized target units.
pub fn mae_normalized(a: &EqCurve, b: &EqCurve) -> Result<f64> {
    Ok(mae_db(a, b)? / (2.0 * GAIN_LIMIT_DB))
}
