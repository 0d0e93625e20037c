//! Domain types shared by the matcher: minutiae, templates, the candidate
//! pair queue, rigid alignments and the matcher configuration.
//!
//! All angles are degrees. Radians only appear inside trig calls.

use serde::Serialize;

use crate::error::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum MinutiaType {
    Ending,
    Bifurcation,
}

impl MinutiaType {
    pub fn code(self) -> char {
        match self {
            MinutiaType::Ending => 'E',
            MinutiaType::Bifurcation => 'B',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "E" => Some(MinutiaType::Ending),
            "B" => Some(MinutiaType::Bifurcation),
            _ => None,
        }
    }
}

/// A single extracted feature point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Minutia {
    /// Column, pixels.
    pub x: f64,
    /// Row, pixels.
    pub y: f64,
    /// Direction in degrees, `[0, 360)`.
    pub direction: f64,
    pub kind: MinutiaType,
    /// Extractor confidence in `[0, 1]`.
    pub quality: f64,
}

impl Minutia {
    /// Minutia with full quality, the value assumed when a source has none.
    pub fn new(x: f64, y: f64, direction: f64, kind: MinutiaType) -> Self {
        Minutia {
            x,
            y,
            direction,
            kind,
            quality: 1.0,
        }
    }

    pub fn with_quality(mut self, quality: f64) -> Self {
        self.quality = quality;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && (0.0..360.0).contains(&self.direction)
            && (0.0..=1.0).contains(&self.quality)
    }
}

/// An ordered minutia set plus the image box it was extracted from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinutiaTemplate {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub minutiae: Vec<Minutia>,
}

impl MinutiaTemplate {
    pub fn new(id: impl Into<String>, width: u32, height: u32, minutiae: Vec<Minutia>) -> Self {
        MinutiaTemplate {
            id: id.into(),
            width,
            height,
            minutiae,
        }
    }

    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width as f64).contains(&x) && (0.0..=self.height as f64).contains(&y)
    }
}

/// One candidate correspondence between query minutia `query_index` and
/// template minutia `template_index`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairEntry {
    pub query_index: usize,
    pub template_index: usize,
    pub weight: f64,
}

/// The mutable queue of candidate pairs driving the matching loop.
///
/// Starts with every `n_u * n_v` pairing and only ever shrinks.
#[derive(Clone, Debug, PartialEq)]
pub struct PairQueue {
    entries: Vec<PairEntry>,
    n_u: usize,
    n_v: usize,
}

impl PairQueue {
    /// Queue over all pairings, weighted by `weight(i, k)`.
    pub fn full(n_u: usize, n_v: usize, mut weight: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n_u * n_v);
        for i in 0..n_u {
            for k in 0..n_v {
                entries.push(PairEntry {
                    query_index: i,
                    template_index: k,
                    weight: weight(i, k),
                });
            }
        }
        PairQueue { entries, n_u, n_v }
    }

    /// Queue from explicit entries. Duplicate pairs and out-of-range indices
    /// are rejected with `None`.
    pub fn from_entries(n_u: usize, n_v: usize, entries: Vec<PairEntry>) -> Option<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.query_index >= n_u
                || e.template_index >= n_v
                || !seen.insert((e.query_index, e.template_index))
            {
                return None;
            }
        }
        Some(PairQueue { entries, n_u, n_v })
    }

    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [PairEntry] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    /// Largest number of one-to-one pairings the two sets admit.
    pub fn max_one_to_one(&self) -> usize {
        self.n_u.min(self.n_v)
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    pub(crate) fn retain_mut(&mut self, f: impl FnMut(&mut PairEntry) -> bool) {
        self.entries.retain_mut(f);
    }
}

/// Rigid motion applied to the query set: rotate by `theta` degrees about
/// the origin, then shift by `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlignmentParams {
    pub theta: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AlignmentParams {
    pub const IDENTITY: AlignmentParams = AlignmentParams {
        theta: 0.0,
        a: 0.0,
        b: 0.0,
    };

    /// Builds params with `theta` normalized to `(-180, 180]`.
    pub fn new(theta: f64, a: f64, b: f64) -> Self {
        AlignmentParams {
            theta: normalize_angle(theta),
            a,
            b,
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.to_radians().sin_cos();
        (x * c - y * s + self.a, x * s + y * c + self.b)
    }

    /// The rigid motion undoing `self`.
    pub fn inverse(&self) -> AlignmentParams {
        let (s, c) = self.theta.to_radians().sin_cos();
        // R^T * (-t)
        let a = -(c * self.a + s * self.b);
        let b = -(-s * self.a + c * self.b);
        AlignmentParams::new(-self.theta, a, b)
    }

    /// `other` applied after `self`.
    pub fn then(&self, other: &AlignmentParams) -> AlignmentParams {
        let (a, b) = other.apply(self.a, self.b);
        AlignmentParams::new(self.theta + other.theta, a, b)
    }
}

/// Applies `p` to the position of `m`.
pub fn transform_point(m: &Minutia, p: &AlignmentParams) -> (f64, f64) {
    p.apply(m.x, m.y)
}

/// Wraps any finite angle into `[0, 360)`.
pub fn wrap_degrees(angle: f64) -> f64 {
    let w = angle.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Normalizes an angle to `(-180, 180]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let w = wrap_degrees(angle);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Smallest absolute difference between two directions, in `[0, 180]`.
pub fn angle_diff(alpha: f64, beta: f64) -> f64 {
    let d = wrap_degrees(alpha - beta);
    d.min(360.0 - d)
}

/// Reference direction for the octant sectors of the neighbor descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OctantFrame {
    /// Sectors fixed in image coordinates.
    Image,
    /// Sectors measured from the reference minutia's own direction.
    Minutia,
}

/// Tunables for pair weighting and the prune schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchConfig {
    /// Octant neighbor distance tolerance, pixels.
    pub t_d: f64,
    /// Octant neighbor angle tolerance, degrees.
    pub t_psi: f64,
    /// Strictly decreasing displacement thresholds.
    pub thresholds: Vec<f64>,
    /// Weight of squared positional residual, px^-2.
    pub c1: f64,
    /// Weight of squared angular residual, deg^-2.
    pub c2: f64,
    pub octant_count: usize,
    pub octant_frame: OctantFrame,
    /// Relative size of the rotation moments below which the rotation is
    /// treated as undetermined.
    pub ill_posed_epsilon: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            t_d: 10.0,
            t_psi: 20.0,
            thresholds: threshold_schedule(24.0, 4.0, 4.0),
            c1: 0.001,
            c2: 0.005,
            octant_count: 8,
            octant_frame: OctantFrame::Minutia,
            ill_posed_epsilon: 1e-9,
        }
    }
}

/// Evenly spaced schedule `t1, t1 - step, ...` down to (and including, when
/// hit) `t_min`.
pub fn threshold_schedule(t1: f64, step: f64, t_min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(t1.is_finite() && step > 0.0 && t_min > 0.0) {
        return out;
    }
    let mut j = 0u32;
    loop {
        let t = t1 - f64::from(j) * step;
        // tolerate rounding in the last step
        if t < t_min - 1e-9 * t1.abs().max(1.0) {
            break;
        }
        out.push(t);
        j += 1;
    }
    out
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.thresholds.is_empty() {
            return Err(ConfigError::Invalid("thresholds must not be empty".into()));
        }
        if self.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(ConfigError::Invalid("thresholds must be positive".into()));
        }
        if self.thresholds.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::Invalid(
                "thresholds must be strictly decreasing".into(),
            ));
        }
        for (name, v) in [
            ("c1", self.c1),
            ("c2", self.c2),
            ("t_d", self.t_d),
            ("t_psi", self.t_psi),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.octant_count != 8 {
            return Err(ConfigError::Invalid("octant_count is fixed at 8".into()));
        }
        if !(self.ill_posed_epsilon.is_finite() && self.ill_posed_epsilon >= 0.0) {
            return Err(ConfigError::Invalid(
                "ill_posed_epsilon must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
    }

    #[test]
    fn angle_diff_examples() {
        assert_eq!(angle_diff(10.0, 10.0), 0.0);
        assert_eq!(angle_diff(350.0, 10.0), 20.0);
        assert_eq!(angle_diff(0.0, 180.0), 180.0);
        assert_eq!(angle_diff(-30.0, 390.0), 60.0);
    }

    #[test]
    fn transform_examples() {
        let m = |x, y| Minutia::new(x, y, 0.0, MinutiaType::Ending);
        assert!(close(
            transform_point(&m(5.0, 7.0), &AlignmentParams::IDENTITY),
            (5.0, 7.0)
        ));
        assert!(close(
            transform_point(&m(1.0, 0.0), &AlignmentParams::new(90.0, 0.0, 0.0)),
            (0.0, 1.0)
        ));
        assert!(close(
            transform_point(&m(3.0, 4.0), &AlignmentParams::new(0.0, 10.0, -2.0)),
            (13.0, 2.0)
        ));
    }

    #[test]
    fn theta_normalization() {
        assert_eq!(AlignmentParams::new(180.0, 0.0, 0.0).theta, 180.0);
        assert_eq!(AlignmentParams::new(-180.0, 0.0, 0.0).theta, 180.0);
        assert_eq!(AlignmentParams::new(270.0, 0.0, 0.0).theta, -90.0);
        assert_eq!(wrap_degrees(-1e-20), 0.0);
    }

    #[test]
    fn default_schedule() {
        assert_eq!(
            MatchConfig::default().thresholds,
            vec![24.0, 20.0, 16.0, 12.0, 8.0, 4.0]
        );
        MatchConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = MatchConfig {
            thresholds: vec![4.0, 8.0],
            ..MatchConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MatchConfig {
            c2: 0.0,
            ..MatchConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MatchConfig {
            octant_count: 4,
            ..MatchConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn queue_rejects_duplicates() {
        let e = PairEntry {
            query_index: 0,
            template_index: 1,
            weight: 1.0,
        };
        assert!(PairQueue::from_entries(2, 2, vec![e, e]).is_none());
        assert!(PairQueue::from_entries(1, 1, vec![e]).is_none());
        assert_eq!(PairQueue::full(3, 4, |_, _| 1.0).len(), 12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn identity_is_identity(x in -1e6f64..1e6, y in -1e6f64..1e6) {
                let m = Minutia::new(x, y, 0.0, MinutiaType::Ending);
                prop_assert_eq!(transform_point(&m, &AlignmentParams::IDENTITY), (x, y));
            }

            #[test]
            fn inverse_round_trip(
                x in -500f64..500.0, y in -500f64..500.0,
                theta in -360f64..360.0, a in -300f64..300.0, b in -300f64..300.0,
            ) {
                let p = AlignmentParams::new(theta, a, b);
                let (xt, yt) = p.apply(x, y);
                let (xr, yr) = p.inverse().apply(xt, yt);
                prop_assert!((xr - x).abs() < 1e-9 && (yr - y).abs() < 1e-9);
            }

            #[test]
            fn angle_diff_symmetric_bounded(a in -720f64..720.0, b in -720f64..720.0) {
                let d = angle_diff(a, b);
                prop_assert!((0.0..=180.0).contains(&d));
                prop_assert!((d - angle_diff(b, a)).abs() < 1e-9);
            }
        }
    }
}
