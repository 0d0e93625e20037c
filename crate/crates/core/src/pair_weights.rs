//! Initial pair weights from minutia attributes and octant nearest-neighbor
//! descriptors.
//!
//! Each minutia gets a descriptor holding, for each of eight 45-degree
//! sectors around it, the distance to the closest other minutia in that
//! sector and the direction difference between the two. Sector bearings are
//! taken relative to the reference minutia direction by default, or in the
//! image frame; sectors are centered on 0, 45, ..., 315 degrees.

use crate::error::MatchError;
use crate::model::{angle_diff, MatchConfig, Minutia, MinutiaTemplate, OctantFrame, PairQueue};

pub const OCTANTS: usize = 8;
const OCTANT_WIDTH: f64 = 360.0 / OCTANTS as f64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OctantNeighbor {
    /// Euclidean distance to the neighbor, pixels. Always > 0.
    pub distance: f64,
    /// Direction difference with the neighbor, degrees in `[0, 180]`.
    pub angle_diff: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OctantNeighborhood {
    pub slots: [Option<OctantNeighbor>; OCTANTS],
}

impl OctantNeighborhood {
    pub fn occupied(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }
}

/// Sector index of a bearing in degrees. Sector `l` covers
/// `[45 l - 22.5, 45 l + 22.5)`, so boundaries go to the higher sector.
pub fn octant_of(bearing: f64) -> usize {
    let shifted = (bearing + OCTANT_WIDTH / 2.0).rem_euclid(360.0);
    ((shifted / OCTANT_WIDTH) as usize) % OCTANTS
}

/// Descriptor for every minutia of `t`, in template order.
///
/// Minutiae sharing the reference position have no bearing and are never
/// neighbors.
pub fn compute_octant_neighbors(
    t: &MinutiaTemplate,
    frame: OctantFrame,
) -> Vec<OctantNeighborhood> {
    let pts = &t.minutiae;
    let mut out = Vec::with_capacity(pts.len());
    for (r, reference) in pts.iter().enumerate() {
        let mut best: [Option<(f64, usize)>; OCTANTS] = [None; OCTANTS];
        for (j, other) in pts.iter().enumerate() {
            if j == r {
                continue;
            }
            let dx = other.x - reference.x;
            let dy = other.y - reference.y;
            let d2 = dx * dx + dy * dy;
            if d2 == 0.0 {
                continue;
            }
            let bearing = dy.atan2(dx).to_degrees();
            let slot = match frame {
                OctantFrame::Image => octant_of(bearing),
                OctantFrame::Minutia => octant_of(bearing - reference.direction),
            };
            // ascending j plus strict < keeps the lowest index on ties
            match best[slot] {
                Some((bd2, _)) if bd2 <= d2 => {}
                _ => best[slot] = Some((d2, j)),
            }
        }
        let mut hood = OctantNeighborhood::default();
        for (slot, b) in best.iter().enumerate() {
            if let Some((d2, j)) = *b {
                hood.slots[slot] = Some(OctantNeighbor {
                    distance: d2.sqrt(),
                    angle_diff: angle_diff(reference.direction, pts[j].direction),
                });
            }
        }
        out.push(hood);
    }
    out
}

/// Fraction of commonly occupied octants whose neighbors agree within the
/// distance and angle tolerances; 0.5 when no octant is occupied on both
/// sides.
pub fn s_nn(nbr_i: &OctantNeighborhood, nbr_k: &OctantNeighborhood, t_d: f64, t_psi: f64) -> f64 {
    let mut n_octants = 0usize;
    let mut n_matching = 0usize;
    for (a, b) in nbr_i.slots.iter().zip(&nbr_k.slots) {
        if let (Some(a), Some(b)) = (a, b) {
            n_octants += 1;
            if (a.distance - b.distance).abs() <= t_d
                && (a.angle_diff - b.angle_diff).abs() <= t_psi
            {
                n_matching += 1;
            }
        }
    }
    if n_octants == 0 {
        0.5
    } else {
        n_matching as f64 / n_octants as f64
    }
}

/// Type agreement factor times both qualities times the neighborhood
/// similarity.
pub fn initial_weight(mi: &Minutia, mk: &Minutia, s: f64) -> f64 {
    let type_factor = if mi.kind == mk.kind { 1.0 } else { 0.5 };
    type_factor * mi.quality * mk.quality * s
}

/// Every query/template pairing weighted by [`initial_weight`].
pub fn build_pair_queue(
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
    cfg: &MatchConfig,
) -> Result<PairQueue, MatchError> {
    if u.is_empty() || v.is_empty() {
        return Err(MatchError::EmptyTemplate);
    }
    let hood_u = compute_octant_neighbors(u, cfg.octant_frame);
    let hood_v = compute_octant_neighbors(v, cfg.octant_frame);
    Ok(build_pair_queue_with(u, v, &hood_u, &hood_v, cfg))
}

/// Same as [`build_pair_queue`] with precomputed descriptors, for callers
/// comparing one template many times.
pub fn build_pair_queue_with(
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
    hood_u: &[OctantNeighborhood],
    hood_v: &[OctantNeighborhood],
    cfg: &MatchConfig,
) -> PairQueue {
    PairQueue::full(u.len(), v.len(), |i, k| {
        let s = s_nn(&hood_u[i], &hood_v[k], cfg.t_d, cfg.t_psi);
        initial_weight(&u.minutiae[i], &v.minutiae[k], s)
    })
}
