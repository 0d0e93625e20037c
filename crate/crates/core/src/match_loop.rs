//! The align / prune / reweight loop.
//!
//! Starting from all pairings, the query set is aligned to the template
//! with the current weights, every pair whose post-alignment displacement
//! exceeds the active threshold is dropped, and the survivors are
//! reweighted. A threshold is used until it stops removing pairs, then the
//! next (smaller) one takes over. The loop ends once no more pairs remain
//! than a one-to-one matching could hold, or when the schedule runs out.

use serde::Serialize;

use crate::error::MatchError;
use crate::model::{
    angle_diff, AlignmentParams, MatchConfig, Minutia, MinutiaTemplate, PairEntry, PairQueue,
};
use crate::pair_weights::{build_pair_queue_with, compute_octant_neighbors, OctantNeighborhood};
use crate::registration::{objective, solve_alignment};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub threshold: f64,
    pub alignment: AlignmentParams,
    pub ill_posed: bool,
    pub removed: usize,
    pub queue_len_after: usize,
    /// Cost of the surviving pairs under `alignment`; `None` once the queue
    /// has no weight left.
    pub objective_after: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchResult {
    pub score: f64,
    pub matched_pairs: Vec<PairEntry>,
    pub final_alignment: AlignmentParams,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub n_u: usize,
    pub n_v: usize,
}

impl MatchResult {
    fn empty(n_u: usize, n_v: usize) -> Self {
        MatchResult {
            score: 0.0,
            matched_pairs: Vec::new(),
            final_alignment: AlignmentParams::IDENTITY,
            iterations: Vec::new(),
            converged: false,
            n_u,
            n_v,
        }
    }

    /// Upper bound on refinement passes for these set sizes and schedule.
    pub fn refine_step_bound(&self, cfg: &MatchConfig) -> usize {
        cfg.thresholds.len() * self.n_u * self.n_v
    }

    /// Checks the structural guarantees every result must satisfy; the error
    /// names the first one broken.
    pub fn check_invariants(&self, cfg: &MatchConfig) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if self.iterations.len() > self.refine_step_bound(cfg) {
            return Err(format!(
                "{} refine steps exceed the bound {}",
                self.iterations.len(),
                self.refine_step_bound(cfg)
            ));
        }
        let limit = self.n_u.min(self.n_v);
        if self.matched_pairs.len() > limit {
            return Err(format!(
                "{} matched pairs exceed min(N_U, N_V) = {limit}",
                self.matched_pairs.len()
            ));
        }
        let mut used_u = vec![false; self.n_u];
        let mut used_v = vec![false; self.n_v];
        for e in &self.matched_pairs {
            if e.query_index >= self.n_u || e.template_index >= self.n_v {
                return Err("matched pair index out of range".into());
            }
            if std::mem::replace(&mut used_u[e.query_index], true)
                || std::mem::replace(&mut used_v[e.template_index], true)
            {
                return Err("matched pairs are not one-to-one".into());
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(format!("pair weight {} outside [0, 1]", e.weight));
            }
        }
        if self.converged {
            if let Some(last) = self.iterations.last() {
                if last.queue_len_after > limit {
                    return Err("converged with an oversized queue".into());
                }
            }
        }
        let removed_total: usize = self.iterations.iter().map(|it| it.removed).sum();
        if removed_total > self.n_u * self.n_v {
            return Err("more pairs removed than ever existed".into());
        }
        let p = &self.final_alignment;
        if !(p.theta.is_finite() && p.a.is_finite() && p.b.is_finite()) {
            return Err("non-finite final alignment".into());
        }
        Ok(())
    }
}

/// `c1 * D^2 + c2 * Theta^2` for the pair after moving `mi` by `p`.
pub fn pair_displacement(
    mi: &Minutia,
    mk: &Minutia,
    p: &AlignmentParams,
    cfg: &MatchConfig,
) -> f64 {
    let (x, y) = p.apply(mi.x, mi.y);
    let (dx, dy) = (x - mk.x, y - mk.y);
    let turn = angle_diff(mi.direction + p.theta, mk.direction);
    cfg.c1 * (dx * dx + dy * dy) + cfg.c2 * turn * turn
}

/// Drops every pair displaced by more than `threshold` and sets the rest to
/// `1 - displacement / threshold`. Returns how many were dropped.
pub fn refine_once(
    q: &mut PairQueue,
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
    p: &AlignmentParams,
    threshold: f64,
    cfg: &MatchConfig,
) -> usize {
    let before = q.len();
    q.retain_mut(|e| {
        let delta = pair_displacement(
            &u.minutiae[e.query_index],
            &v.minutiae[e.template_index],
            p,
            cfg,
        );
        if delta > threshold {
            false
        } else {
            e.weight = 1.0 - delta / threshold;
            true
        }
    });
    before - q.len()
}

/// Greedy one-to-one selection by descending weight; ties go to the lower
/// query index, then the lower template index.
pub fn resolve_one_to_one(q: &PairQueue) -> Vec<PairEntry> {
    let mut order: Vec<PairEntry> = q.entries().to_vec();
    order.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then(a.query_index.cmp(&b.query_index))
            .then(a.template_index.cmp(&b.template_index))
    });
    let mut used_u = vec![false; q.n_u()];
    let mut used_v = vec![false; q.n_v()];
    let mut out = Vec::new();
    for e in order {
        if !used_u[e.query_index] && !used_v[e.template_index] {
            used_u[e.query_index] = true;
            used_v[e.template_index] = true;
            out.push(e);
        }
    }
    out
}

/// Squared matched weight mass over `n_u * n_v`, in `[0, 1]`.
pub fn match_score(pairs: &[PairEntry], n_u: usize, n_v: usize) -> f64 {
    if n_u == 0 || n_v == 0 {
        return 0.0;
    }
    let mass: f64 = pairs.iter().map(|e| e.weight).sum();
    (mass * mass / (n_u as f64 * n_v as f64)).clamp(0.0, 1.0)
}

/// Matches query `u` against template `v`.
pub fn run_matcher(u: &MinutiaTemplate, v: &MinutiaTemplate, cfg: &MatchConfig) -> MatchResult {
    let hood_u = compute_octant_neighbors(u, cfg.octant_frame);
    let hood_v = compute_octant_neighbors(v, cfg.octant_frame);
    run_matcher_with(u, v, &hood_u, &hood_v, cfg)
}

/// [`run_matcher`] with precomputed octant descriptors.
pub fn run_matcher_with(
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
    hood_u: &[OctantNeighborhood],
    hood_v: &[OctantNeighborhood],
    cfg: &MatchConfig,
) -> MatchResult {
    let (n_u, n_v) = (u.len(), v.len());
    if n_u == 0 || n_v == 0 {
        return MatchResult::empty(n_u, n_v);
    }
    let mut queue = build_pair_queue_with(u, v, hood_u, hood_v, cfg);
    let limit = queue.max_one_to_one();
    let mut iterations = Vec::new();
    let mut last_alignment = None;

    'schedule: for &threshold in &cfg.thresholds {
        while queue.len() > limit {
            let Ok((alignment, diag)) = solve_alignment(&queue, u, v, cfg) else {
                // no weight left to align on
                break 'schedule;
            };
            last_alignment = Some(alignment);
            let removed = refine_once(&mut queue, u, v, &alignment, threshold, cfg);
            iterations.push(IterationRecord {
                threshold,
                alignment,
                ill_posed: diag.ill_posed,
                removed,
                queue_len_after: queue.len(),
                objective_after: objective(&queue, u, v, &alignment).ok(),
            });
            if removed == 0 {
                continue 'schedule;
            }
        }
        break;
    }

    let converged = queue.len() <= limit;
    let final_alignment = match solve_alignment(&queue, u, v, cfg) {
        Ok((p, diag)) if !diag.ill_posed => p,
        _ => last_alignment.unwrap_or(AlignmentParams::IDENTITY),
    };
    let matched_pairs = resolve_one_to_one(&queue);
    MatchResult {
        score: match_score(&matched_pairs, n_u, n_v),
        matched_pairs,
        final_alignment,
        iterations,
        converged,
        n_u,
        n_v,
    }
}

/// Convenience for callers that want the degenerate-input error surfaced.
pub fn try_run_matcher(
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
    cfg: &MatchConfig,
) -> Result<MatchResult, MatchError> {
    if u.is_empty() || v.is_empty() {
        return Err(MatchError::EmptyTemplate);
    }
    Ok(run_matcher(u, v, cfg))
}
