//! Closed-form weighted least-squares rigid registration.
//!
//! Every queue entry `(i, k, m)` contributes `m * |R u_i + t - v_k|^2` to the
//! cost. Without a known correspondence the cost still has a unique
//! minimizer in closed form: the translation matches the weighted centroids
//! and the rotation angle is `atan2(-w4, w1)` where `w1`, `w4` are the
//! weighted cross moments of the centered sets. When the weights factor as
//! `m_ik = s_i g_k` both moments vanish and any rotation is optimal.

use serde::Serialize;

use crate::error::MatchError;
use crate::model::{AlignmentParams, MatchConfig, MinutiaTemplate, PairQueue};

/// Weighted means of the query (`x`, `y`) and template (`z`, `t`)
/// coordinates over the queue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Centroids {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlignmentDiagnostics {
    pub w1: f64,
    pub w4: f64,
    /// Natural magnitude of `w1`/`w4`: weighted half-sum of squared
    /// centered radii. `|w1|, |w4| <= scale` always holds.
    pub scale: f64,
    pub total_weight: f64,
    pub centroids: Centroids,
    pub ill_posed: bool,
}

pub fn weighted_centroids(
    q: &PairQueue,
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
) -> Result<(Centroids, f64), MatchError> {
    let mut w = 0.0;
    let (mut sx, mut sy, mut sz, mut st) = (0.0, 0.0, 0.0, 0.0);
    for e in q.entries() {
        let mi = &u.minutiae[e.query_index];
        let mk = &v.minutiae[e.template_index];
        w += e.weight;
        sx += e.weight * mi.x;
        sy += e.weight * mi.y;
        sz += e.weight * mk.x;
        st += e.weight * mk.y;
    }
    if w.is_nan() || w <= 0.0 {
        return Err(MatchError::ZeroTotalWeight);
    }
    Ok((
        Centroids {
            x: sx / w,
            y: sy / w,
            z: sz / w,
            t: st / w,
        },
        w,
    ))
}

/// True when the rotation moments are negligible relative to `scale`.
pub fn detect_ill_posed(w1: f64, w4: f64, scale: f64, epsilon: f64) -> bool {
    w1.abs().max(w4.abs()) <= epsilon * scale
}

fn rotation_from_moments(w1: f64, w4: f64) -> f64 {
    (-w4).atan2(w1).to_degrees()
}

/// Translation minimizing the cost for a fixed rotation `theta` (degrees).
pub fn translation_for_rotation(c: &Centroids, theta: f64) -> (f64, f64) {
    let (s, co) = theta.to_radians().sin_cos();
    let a = c.z + c.y * s - c.x * co;
    let b = c.t - c.y * co - c.x * s;
    (a, b)
}

/// Optimal rigid alignment of `u` onto `v` under the queue weights.
///
/// Ill-posed instances get `theta = 0` with the centroid-matching
/// translation and `ill_posed = true`.
pub fn solve_alignment(
    q: &PairQueue,
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
    cfg: &MatchConfig,
) -> Result<(AlignmentParams, AlignmentDiagnostics), MatchError> {
    let (c, total_weight) = weighted_centroids(q, u, v)?;

    let (mut w1, mut w4, mut scale) = (0.0, 0.0, 0.0);
    for e in q.entries() {
        let mi = &u.minutiae[e.query_index];
        let mk = &v.minutiae[e.template_index];
        let (dx, dy) = (mi.x - c.x, mi.y - c.y);
        let (dz, dt) = (mk.x - c.z, mk.y - c.t);
        w1 += e.weight * (dz * dx + dt * dy);
        w4 += e.weight * (dz * dy - dt * dx);
        scale += e.weight * 0.5 * (dx * dx + dy * dy + dz * dz + dt * dt);
    }

    let ill_posed = detect_ill_posed(w1, w4, scale, cfg.ill_posed_epsilon);
    let theta = if ill_posed {
        0.0
    } else {
        rotation_from_moments(w1, w4)
    };
    let (a, b) = translation_for_rotation(&c, theta);
    Ok((
        AlignmentParams::new(theta, a, b),
        AlignmentDiagnostics {
            w1,
            w4,
            scale,
            total_weight,
            centroids: c,
            ill_posed,
        },
    ))
}

/// Weighted mean squared distance between transformed query points and
/// their paired template points.
pub fn objective(
    q: &PairQueue,
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
    p: &AlignmentParams,
) -> Result<f64, MatchError> {
    let (s, c) = p.theta.to_radians().sin_cos();
    let mut num = 0.0;
    let mut den = 0.0;
    for e in q.entries() {
        let mi = &u.minutiae[e.query_index];
        let mk = &v.minutiae[e.template_index];
        let dx = mi.x * c - mi.y * s + p.a - mk.x;
        let dy = mi.x * s + mi.y * c + p.b - mk.y;
        num += e.weight * (dx * dx + dy * dy);
        den += e.weight;
    }
    if den.is_nan() || den <= 0.0 {
        return Err(MatchError::ZeroTotalWeight);
    }
    Ok(num / den)
}
