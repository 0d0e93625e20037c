#![allow(dead_code)]

use fpalign::model::{Minutia, MinutiaTemplate, MinutiaType, PairEntry, PairQueue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_template(rng: &mut ChaCha8Rng, n: usize) -> MinutiaTemplate {
    let minutiae = (0..n)
        .map(|_| {
            Minutia::new(
                rng.random_range(0.0..500.0),
                rng.random_range(0.0..500.0),
                rng.random_range(0.0..360.0),
                if rng.random::<bool>() {
                    MinutiaType::Ending
                } else {
                    MinutiaType::Bifurcation
                },
            )
        })
        .collect();
    MinutiaTemplate::new("r", 500, 500, minutiae)
}

/// Two random point sets of 10 to 60 minutiae with a full queue of
/// independent weights in (0, 1].
pub fn random_queue(seed: u64) -> (PairQueue, MinutiaTemplate, MinutiaTemplate) {
    let mut r = rng(seed);
    let nu = r.random_range(10..=60);
    let nv = r.random_range(10..=60);
    let u = random_template(&mut r, nu);
    let v = random_template(&mut r, nv);
    let q = PairQueue::full(nu, nv, |_, _| 1.0 - r.random::<f64>());
    (q, u, v)
}

/// Same point sets as [`random_queue`] with `m_ik = sigma_i * gamma_k`.
pub fn separable_queue(seed: u64) -> (PairQueue, MinutiaTemplate, MinutiaTemplate) {
    let (_, u, v) = random_queue(seed);
    let mut r = rng(seed ^ 0xA5A5);
    let sigma: Vec<f64> = (0..u.len()).map(|_| 1.0 - r.random::<f64>()).collect();
    let gamma: Vec<f64> = (0..v.len()).map(|_| 1.0 - r.random::<f64>()).collect();
    let q = PairQueue::full(u.len(), v.len(), |i, k| sigma[i] * gamma[k]);
    (q, u, v)
}

pub fn constant_queue(seed: u64, c: f64) -> (PairQueue, MinutiaTemplate, MinutiaTemplate) {
    let (_, u, v) = random_queue(seed);
    let q = PairQueue::full(u.len(), v.len(), |_, _| c);
    (q, u, v)
}

pub fn one_hot(n: usize) -> PairQueue {
    PairQueue::full(n, n, |i, k| if i == k { 1.0 } else { 0.0 })
}

pub fn entry(i: usize, k: usize, weight: f64) -> PairEntry {
    PairEntry {
        query_index: i,
        template_index: k,
        weight,
    }
}

/// Ten minutiae at least 100 px apart.
pub fn separated_fixture() -> MinutiaTemplate {
    let spots = [
        (60.0, 60.0, 10.0, MinutiaType::Ending),
        (200.0, 70.0, 95.0, MinutiaType::Bifurcation),
        (340.0, 55.0, 170.0, MinutiaType::Ending),
        (80.0, 200.0, 250.0, MinutiaType::Ending),
        (215.0, 190.0, 300.0, MinutiaType::Bifurcation),
        (350.0, 210.0, 45.0, MinutiaType::Ending),
        (65.0, 340.0, 130.0, MinutiaType::Bifurcation),
        (190.0, 345.0, 200.0, MinutiaType::Ending),
        (330.0, 350.0, 330.0, MinutiaType::Ending),
        (440.0, 130.0, 75.0, MinutiaType::Bifurcation),
    ];
    MinutiaTemplate::new(
        "fixture",
        500,
        500,
        spots
            .iter()
            .map(|&(x, y, d, k)| Minutia::new(x, y, d, k))
            .collect(),
    )
}
