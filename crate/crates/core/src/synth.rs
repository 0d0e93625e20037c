//! Synthetic templates with known ground truth, and a grid-search oracle for
//! the closed-form alignment.
//!
//! A base template stands in for a finger; impressions are noisy rigid
//! copies of it with missing and spurious minutiae.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{MatchError, SynthError, TemplateError};
use crate::model::{
    wrap_degrees, AlignmentParams, Minutia, MinutiaTemplate, MinutiaType, PairQueue,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub min_minutiae: usize,
    pub max_minutiae: usize,
    pub width: u32,
    pub height: u32,
    /// Minimum pairwise distance inside a base template, pixels.
    pub min_spacing: f64,
    /// Impression rotation is uniform in `[-max_rotation, max_rotation]`.
    pub max_rotation: f64,
    /// Impression shift is uniform in `[-max_translation, max_translation]` per axis.
    pub max_translation: f64,
    pub position_jitter: f64,
    pub direction_jitter: f64,
    /// Fraction of base minutiae removed from each impression, `[0, 1)`.
    pub drop_fraction: f64,
    /// Spurious minutiae added, as a fraction of the genuine survivors.
    pub spurious_fraction: f64,
    pub min_quality: f64,
    pub max_quality: f64,
    pub bifurcation_probability: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            min_minutiae: 40,
            max_minutiae: 60,
            width: 400,
            height: 400,
            min_spacing: 12.0,
            max_rotation: 30.0,
            max_translation: 50.0,
            position_jitter: 2.0,
            direction_jitter: 5.0,
            drop_fraction: 0.2,
            spurious_fraction: 0.1,
            min_quality: 0.6,
            max_quality: 1.0,
            bifurcation_probability: 0.4,
        }
    }
}

impl SynthParams {
    /// Parameters that reproduce the base exactly.
    pub fn noiseless() -> Self {
        SynthParams {
            max_rotation: 0.0,
            max_translation: 0.0,
            position_jitter: 0.0,
            direction_jitter: 0.0,
            drop_fraction: 0.0,
            spurious_fraction: 0.0,
            ..SynthParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.min_minutiae > self.max_minutiae {
            return bad("min_minutiae > max_minutiae");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image box must be non-empty");
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return bad("drop_fraction must lie in [0, 1)");
        }
        if self.spurious_fraction.is_nan() || self.spurious_fraction < 0.0 {
            return bad("spurious_fraction must be non-negative");
        }
        if !(0.0 <= self.min_quality
            && self.min_quality <= self.max_quality
            && self.max_quality <= 1.0)
        {
            return bad("quality range must be ordered within [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.bifurcation_probability) {
            return bad("bifurcation_probability must lie in [0, 1]");
        }
        for (name, v) in [
            ("min_spacing", self.min_spacing),
            ("max_rotation", self.max_rotation),
            ("max_translation", self.max_translation),
            ("position_jitter", self.position_jitter),
            ("direction_jitter", self.direction_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidParams(format!(
                    "{name} must be non-negative"
                )));
            }
        }
        Ok(())
    }
}

/// Exact transform from base to impression plus which base minutia each
/// genuine impression minutia came from.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub transform: AlignmentParams,
    /// `(base index, impression index)`, one-to-one.
    pub correspondence: Vec<(usize, usize)>,
}

/// Mixes a root seed with a path of indices into an independent seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    // splitmix64 finalizer over each component
    let mut h = seed;
    for &p in path {
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

fn random_kind(rng: &mut ChaCha8Rng, p_bif: f64) -> MinutiaType {
    if rng.random::<f64>() < p_bif {
        MinutiaType::Bifurcation
    } else {
        MinutiaType::Ending
    }
}

fn random_quality(rng: &mut ChaCha8Rng, params: &SynthParams) -> f64 {
    if params.max_quality > params.min_quality {
        rng.random_range(params.min_quality..=params.max_quality)
    } else {
        params.min_quality
    }
}

/// Base template with pairwise spacing of at least `min_spacing`.
pub fn generate_base(params: &SynthParams, seed: u64) -> Result<MinutiaTemplate, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(params.min_minutiae..=params.max_minutiae);
    let (w, h) = (f64::from(params.width), f64::from(params.height));
    let spacing2 = params.min_spacing * params.min_spacing;
    let mut minutiae: Vec<Minutia> = Vec::with_capacity(n);
    let max_attempts = 1000 * n.max(1);
    let mut attempts = 0;
    while minutiae.len() < n {
        if attempts == max_attempts {
            return Err(SynthError::PlacementFailure {
                wanted: n,
                placed: minutiae.len(),
                spacing: params.min_spacing,
            });
        }
        attempts += 1;
        let x = rng.random_range(0.0..=w);
        let y = rng.random_range(0.0..=h);
        if minutiae
            .iter()
            .any(|m| (m.x - x).powi(2) + (m.y - y).powi(2) < spacing2)
        {
            continue;
        }
        let direction = rng.random_range(0.0..360.0);
        let kind = random_kind(&mut rng, params.bifurcation_probability);
        let quality = random_quality(&mut rng, params);
        minutiae.push(Minutia::new(x, y, direction, kind).with_quality(quality));
    }
    Ok(MinutiaTemplate::new(
        format!("base-{seed}"),
        params.width,
        params.height,
        minutiae,
    ))
}

/// A noisy rigid copy of `base`.
///
/// The rotation is sampled about the image center; the recorded transform
/// is the equivalent rotation about the origin followed by a shift. Base
/// minutiae are dropped first, then the survivors are moved and jittered
/// and any that leave the image box are clipped. Spurious minutiae are
/// appended after the genuine ones.
pub fn generate_impression(
    base: &MinutiaTemplate,
    params: &SynthParams,
    seed: u64,
) -> (MinutiaTemplate, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (f64::from(base.width), f64::from(base.height));

    let theta = if params.max_rotation > 0.0 {
        rng.random_range(-params.max_rotation..=params.max_rotation)
    } else {
        0.0
    };
    let mut shift = || {
        if params.max_translation > 0.0 {
            rng.random_range(-params.max_translation..=params.max_translation)
        } else {
            0.0
        }
    };
    let (tx, ty) = (shift(), shift());
    let (cx, cy) = (w / 2.0, h / 2.0);
    let about_origin = AlignmentParams::new(theta, 0.0, 0.0);
    let (rcx, rcy) = about_origin.apply(cx, cy);
    let transform = AlignmentParams::new(theta, cx - rcx + tx, cy - rcy + ty);

    let n = base.len();
    let n_drop = (params.drop_fraction * n as f64).round() as usize;
    let mut keep = vec![true; n];
    for i in sample(&mut rng, n, n_drop.min(n)).iter() {
        keep[i] = false;
    }

    let pos_noise = Normal::new(0.0, params.position_jitter).expect("validated jitter");
    let dir_noise = Normal::new(0.0, params.direction_jitter).expect("validated jitter");

    let mut minutiae = Vec::with_capacity(n);
    let mut correspondence = Vec::with_capacity(n);
    for (i, m) in base.minutiae.iter().enumerate() {
        // draw noise for every base minutia so dropping does not shift the stream
        let (jx, jy, jd) = (
            pos_noise.sample(&mut rng),
            pos_noise.sample(&mut rng),
            dir_noise.sample(&mut rng),
        );
        if !keep[i] {
            continue;
        }
        let (x, y) = transform.apply(m.x, m.y);
        let (x, y) = (x + jx, y + jy);
        if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
            continue;
        }
        correspondence.push((i, minutiae.len()));
        minutiae.push(Minutia {
            x,
            y,
            direction: wrap_degrees(m.direction + theta + jd),
            kind: m.kind,
            quality: m.quality,
        });
    }

    let n_spurious = (params.spurious_fraction * correspondence.len() as f64).round() as usize;
    for _ in 0..n_spurious {
        let x = rng.random_range(0.0..=w);
        let y = rng.random_range(0.0..=h);
        let direction = rng.random_range(0.0..360.0);
        let kind = random_kind(&mut rng, params.bifurcation_probability);
        let quality = random_quality(&mut rng, params);
        minutiae.push(Minutia::new(x, y, direction, kind).with_quality(quality));
    }

    (
        MinutiaTemplate::new(
            format!("{}-imp-{seed}", base.id),
            base.width,
            base.height,
            minutiae,
        ),
        GroundTruth {
            transform,
            correspondence,
        },
    )
}

/// Grid search over rotation with the best translation for each grid
/// angle. Grid angles are `180 - j * step` for all `j` that stay above
/// `-180`.
pub fn brute_force_align(
    q: &PairQueue,
    u: &MinutiaTemplate,
    v: &MinutiaTemplate,
    step: f64,
) -> Result<AlignmentParams, MatchError> {
    assert!(step > 0.0, "grid step must be positive");
    let mut w = 0.0;
    let (mut xm, mut ym, mut zm, mut tm) = (0.0, 0.0, 0.0, 0.0);
    let mut pairs = Vec::with_capacity(q.len());
    for e in q.entries() {
        let a = &u.minutiae[e.query_index];
        let b = &v.minutiae[e.template_index];
        w += e.weight;
        xm += e.weight * a.x;
        ym += e.weight * a.y;
        zm += e.weight * b.x;
        tm += e.weight * b.y;
        pairs.push((e.weight, a.x, a.y, b.x, b.y));
    }
    if w.is_nan() || w <= 0.0 {
        return Err(MatchError::ZeroTotalWeight);
    }
    let (xm, ym, zm, tm) = (xm / w, ym / w, zm / w, tm / w);

    let steps = (360.0 / step).ceil() as usize;
    let mut best = (f64::INFINITY, AlignmentParams::IDENTITY);
    for j in 0..steps {
        let theta = 180.0 - j as f64 * step;
        if theta <= -180.0 {
            break;
        }
        let (s, c) = theta.to_radians().sin_cos();
        // for a fixed rotation the optimal shift carries the rotated query
        // centroid onto the template centroid
        let a = zm - (xm * c - ym * s);
        let b = tm - (xm * s + ym * c);
        let mut cost = 0.0;
        for &(wt, x, y, z, t) in &pairs {
            let dx = x * c - y * s + a - z;
            let dy = x * s + y * c + b - t;
            cost += wt * (dx * dx + dy * dy);
        }
        if cost < best.0 {
            best = (cost, AlignmentParams { theta, a, b });
        }
    }
    Ok(best.1)
}

/// Serializes ground truth as the `.gt` sidecar.
pub fn write_ground_truth(gt: &GroundTruth) -> String {
    let mut out = String::from("GT 1\n");
    let p = &gt.transform;
    let _ = writeln!(out, "{:.6} {:.6} {:.6}", p.theta, p.a, p.b);
    for (b, i) in &gt.correspondence {
        let _ = writeln!(out, "{b} {i}");
    }
    out
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth, TemplateError> {
    let fmt_err = |line: usize, message: &str| TemplateError::Format {
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "GT 1")) => {}
        _ => return Err(fmt_err(1, "expected header `GT 1`")),
    }
    let (ln, line) = lines
        .next()
        .ok_or_else(|| fmt_err(2, "missing transform line"))?;
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| fmt_err(ln, "non-numeric transform field"))?;
    let [theta, a, b] = vals[..] else {
        return Err(fmt_err(ln, "transform line needs 3 fields"));
    };
    let mut correspondence = Vec::new();
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| fmt_err(ln, "non-integer index"))?;
        let [b_idx, i_idx] = idx[..] else {
            return Err(fmt_err(ln, "correspondence line needs 2 fields"));
        };
        correspondence.push((b_idx, i_idx));
    }
    Ok(GroundTruth {
        transform: AlignmentParams::new(theta, a, b),
        correspondence,
    })
}

/// One generated impression of one synthetic subject.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub subject: u32,
    pub impression: u32,
    pub template: MinutiaTemplate,
    pub truth: GroundTruth,
}

/// `subjects x impressions` samples, numbered from 1, every impression
/// derived from the subject's base. Deterministic in `seed`.
pub fn generate_dataset(
    params: &SynthParams,
    subjects: u32,
    impressions: u32,
    seed: u64,
) -> Result<Vec<SynthSample>, SynthError> {
    let mut out = Vec::with_capacity((subjects * impressions) as usize);
    for s in 1..=subjects {
        let base = generate_base(params, derive_seed(seed, &[u64::from(s)]))?;
        for i in 1..=impressions {
            let (mut template, truth) = generate_impression(
                &base,
                params,
                derive_seed(seed, &[u64::from(s), u64::from(i)]),
            );
            template.id = format!("{s}_{i}");
            out.push(SynthSample {
                subject: s,
                impression: i,
                template,
                truth,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PairEntry;

    fn one_hot(n: usize) -> PairQueue {
        PairQueue::from_entries(
            n,
            n,
            (0..n)
                .map(|i| PairEntry {
                    query_index: i,
                    template_index: i,
                    weight: 1.0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn base_examples() {
        let p = SynthParams {
            min_minutiae: 1,
            max_minutiae: 1,
            ..SynthParams::default()
        };
        assert_eq!(generate_base(&p, 3).unwrap().len(), 1);

        let p = SynthParams::default();
        assert_eq!(
            generate_base(&p, 11).unwrap(),
            generate_base(&p, 11).unwrap()
        );
        assert_ne!(
            generate_base(&p, 11).unwrap(),
            generate_base(&p, 12).unwrap()
        );

        let p = SynthParams {
            min_minutiae: 40,
            max_minutiae: 40,
            width: 300,
            height: 300,
            min_spacing: 12.0,
            ..SynthParams::default()
        };
        let t = generate_base(&p, 5).unwrap();
        assert_eq!(t.len(), 40);
        for (i, a) in t.minutiae.iter().enumerate() {
            assert!(a.is_valid());
            for b in &t.minutiae[i + 1..] {
                assert!(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() >= 12.0);
            }
        }
    }

    #[test]
    fn overcrowded_box_fails() {
        let p = SynthParams {
            min_minutiae: 50,
            max_minutiae: 50,
            width: 20,
            height: 20,
            min_spacing: 10.0,
            ..SynthParams::default()
        };
        assert!(matches!(
            generate_base(&p, 1),
            Err(SynthError::PlacementFailure { wanted: 50, .. })
        ));
    }

    #[test]
    fn noiseless_impression_is_base() {
        let p = SynthParams::noiseless();
        let base = generate_base(&p, 9).unwrap();
        let (imp, gt) = generate_impression(&base, &p, 10);
        assert_eq!(imp.minutiae, base.minutiae);
        assert_eq!(gt.transform, AlignmentParams::IDENTITY);
        assert_eq!(
            gt.correspondence,
            (0..base.len()).map(|i| (i, i)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pure_translation_shifts_survivors() {
        let p = SynthParams {
            width: 600,
            height: 600,
            ..SynthParams::noiseless()
        };
        let mut base = generate_base(&p, 2).unwrap();
        // keep every point at least 20 px from the border
        for m in &mut base.minutiae {
            m.x = 20.0 + m.x * 560.0 / 600.0;
            m.y = 20.0 + m.y * 560.0 / 600.0;
        }
        let p = SynthParams {
            max_translation: 10.0,
            ..p
        };
        for seed in 0..20 {
            let (imp, gt) = generate_impression(&base, &p, seed);
            assert_eq!(gt.transform.theta, 0.0);
            assert_eq!(imp.len(), base.len());
            for &(b, i) in &gt.correspondence {
                let (x, y) = (
                    base.minutiae[b].x + gt.transform.a,
                    base.minutiae[b].y + gt.transform.b,
                );
                assert!(
                    (imp.minutiae[i].x - x).abs() < 1e-9 && (imp.minutiae[i].y - y).abs() < 1e-9
                );
            }
        }
    }

    #[test]
    fn drop_count_rule() {
        let p = SynthParams {
            min_minutiae: 40,
            max_minutiae: 40,
            drop_fraction: 0.2,
            ..SynthParams::noiseless()
        };
        let base = generate_base(&p, 4).unwrap();
        let (imp, gt) = generate_impression(&base, &p, 8);
        assert_eq!(gt.correspondence.len(), 32);
        assert_eq!(imp.len(), 32);
    }

    #[test]
    fn spurious_minutiae_are_appended() {
        let p = SynthParams {
            min_minutiae: 40,
            max_minutiae: 40,
            spurious_fraction: 0.25,
            ..SynthParams::noiseless()
        };
        let base = generate_base(&p, 4).unwrap();
        let (imp, gt) = generate_impression(&base, &p, 8);
        assert_eq!(gt.correspondence.len(), 40);
        assert_eq!(imp.len(), 50);
        assert!(imp
            .minutiae
            .iter()
            .all(|m| m.is_valid() && imp.contains_point(m.x, m.y)));
    }

    #[test]
    fn oracle_on_identity_and_rotation() {
        let p = SynthParams::default();
        let base = generate_base(&p, 21).unwrap();
        let q = one_hot(base.len());
        let r = brute_force_align(&q, &base, &base, 0.5).unwrap();
        assert_eq!(r.theta, 0.0);
        assert!(r.a.abs() < 1e-9 && r.b.abs() < 1e-9);

        let rot = AlignmentParams::new(25.0, 0.0, 0.0);
        let mut v = base.clone();
        for m in &mut v.minutiae {
            (m.x, m.y) = rot.apply(m.x, m.y);
        }
        let r = brute_force_align(&q, &base, &v, 0.1).unwrap();
        assert!((r.theta - 25.0).abs() <= 0.1);
    }

    #[test]
    fn ground_truth_round_trip() {
        let gt = GroundTruth {
            transform: AlignmentParams::new(12.5, -3.25, 40.0),
            correspondence: vec![(0, 0), (2, 1), (5, 2)],
        };
        let back = parse_ground_truth(&write_ground_truth(&gt)).unwrap();
        assert_eq!(back, gt);
        assert!(parse_ground_truth("GT 2\n0 0 0\n").is_err());
        assert!(parse_ground_truth("GT 1\n0 0\n").is_err());
    }

    #[test]
    fn dataset_layout_and_determinism() {
        let p = SynthParams::default();
        let a = generate_dataset(&p, 3, 2, 77).unwrap();
        let b = generate_dataset(&p, 3, 2, 77).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!((a[3].subject, a[3].impression), (2, 2));
        assert_eq!(a[3].template.id, "2_2");
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.template, y.template);
            assert_eq!(x.truth, y.truth);
        }
    }
}
