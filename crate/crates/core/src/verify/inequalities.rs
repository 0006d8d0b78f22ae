//! Sampled envelopes for the two vector inequalities of the power map
//! `m(x) = |x|^{p-2} x`:
//!
//! ```text
//! |m(a) - m(b)| <= a1 |a - b|^{1-d} (|a| + |b|)^{p-2+d}
//! |a - b|^{2+d} (|a| + |b|)^{p-2-d} <= a2 (m(a) - m(b)) . (a - b)
//! ```
//!
//! Both ratios are homogeneous of degree 0, so every pair is rescaled to
//! unit size before evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::whitney::Vec3;

const CHUNK: usize = 1 << 14;

pub const SAMPLE_FAMILIES: [&str; 5] = ["uniform_ball", "log_radius", "near_collinear", "near_equal", "antipodal"];

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub p: f64,
    pub delta: f64,
    pub samples: usize,
    /// Sup of the sampled ratios: the constant estimate.
    pub worst_ratio: f64,
    /// Samples whose ratio exceeds `worst_ratio`.
    pub violations: usize,
    /// Pairs with a non-positive monotonicity pairing (second inequality only).
    pub nonpositive_pairings: usize,
    pub worst_pair: (Vec3, Vec3),
    pub distribution: String,
}

fn power(x: &Vec3, p: f64) -> Vec3 {
    let r = x.norm();
    if r == 0.0 {
        Vec3::zeros()
    } else {
        x * r.powf(p - 2.0)
    }
}

/// Ratio `|m(a) - m(b)| / (|a - b|^{1-d} (|a| + |b|)^{p-2+d})`; `None` for `a = b`.
pub fn ratio1(a: &Vec3, b: &Vec3, p: f64, delta: f64) -> Option<f64> {
    let d = (a - b).norm();
    if d == 0.0 {
        return None;
    }
    let s = a.norm() + b.norm();
    Some((power(a, p) - power(b, p)).norm() / (d.powf(1.0 - delta) * s.powf(p - 2.0 + delta)))
}

/// `(|a - b|^{2+d} (|a| + |b|)^{p-2-d}, (m(a) - m(b)) . (a - b))`; `None` for `a = b`.
pub fn ineq2_sides(a: &Vec3, b: &Vec3, p: f64, delta: f64) -> Option<(f64, f64)> {
    let diff = a - b;
    let d = diff.norm();
    if d == 0.0 {
        return None;
    }
    let s = a.norm() + b.norm();
    Some((d.powf(2.0 + delta) * s.powf(p - 2.0 - delta), (power(a, p) - power(b, p)).dot(&diff)))
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn in_ball(rng: &mut ChaCha8Rng) -> Vec3 {
    unit_vector(rng) * rng.gen::<f64>().cbrt()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.gen_range(lo..hi))
}

/// Draws the `i`-th pair; families are interleaved round-robin.
fn sample_pair(rng: &mut ChaCha8Rng, i: usize) -> (Vec3, Vec3) {
    match i % SAMPLE_FAMILIES.len() {
        0 => (in_ball(rng), in_ball(rng)),
        1 => (
            unit_vector(rng) * log_uniform(rng, -6.0, 6.0),
            unit_vector(rng) * log_uniform(rng, -6.0, 6.0),
        ),
        2 => {
            let d = unit_vector(rng);
            let tilt = unit_vector(rng) * log_uniform(rng, -8.0, -1.0);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (d * log_uniform(rng, -3.0, 3.0), (d + tilt).normalize() * sign * log_uniform(rng, -3.0, 3.0))
        }
        3 => {
            let a = in_ball(rng);
            let eps = log_uniform(rng, -8.0, -1.0);
            (a, a + unit_vector(rng) * eps * a.norm())
        }
        _ => {
            let a = unit_vector(rng);
            if rng.gen_bool(0.25) {
                (a, -a)
            } else {
                let c = log_uniform(rng, -0.5, 0.5);
                (a, -a * c + unit_vector(rng) * log_uniform(rng, -6.0, -1.0))
            }
        }
    }
}

fn normalize_pair(a: Vec3, b: Vec3) -> (Vec3, Vec3) {
    let s = a.norm().max(b.norm());
    if s > 0.0 {
        (a / s, b / s)
    } else {
        (a, b)
    }
}

#[derive(Clone, Copy)]
struct ChunkResult {
    worst: f64,
    pair: (Vec3, Vec3),
    nonpositive: usize,
    exceeding: usize,
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Evaluates every sample of chunk `c`; samples depend only on `(seed, c)`,
/// so results do not depend on the thread count.
fn scan_chunk<F, N>(c: usize, n_samples: usize, seed: u64, eval: &F, nonpositive: &N, bound: f64) -> ChunkResult
where
    F: Fn(&Vec3, &Vec3) -> Option<f64>,
    N: Fn(&Vec3, &Vec3) -> bool,
{
    let mut rng = chunk_rng(seed, c);
    let mut out = ChunkResult {
        worst: 0.0,
        pair: (Vec3::zeros(), Vec3::zeros()),
        nonpositive: 0,
        exceeding: 0,
    };
    for k in 0..CHUNK.min(n_samples - c * CHUNK) {
        let (a, b) = sample_pair(&mut rng, c * CHUNK + k);
        let (a, b) = normalize_pair(a, b);
        if nonpositive(&a, &b) {
            out.nonpositive += 1;
        }
        if let Some(r) = eval(&a, &b) {
            if r > bound {
                out.exceeding += 1;
            }
            if r > out.worst {
                out.worst = r;
                out.pair = (a, b);
            }
        }
    }
    out
}

fn run<F, N>(p: f64, delta: f64, n_samples: usize, seed: u64, eval: F, nonpositive: N) -> InequalityReport
where
    F: Fn(&Vec3, &Vec3) -> Option<f64> + Sync,
    N: Fn(&Vec3, &Vec3) -> bool + Sync,
{
    let chunks = n_samples.div_ceil(CHUNK);
    let scan = |bound: f64| -> Vec<ChunkResult> {
        (0..chunks)
            .into_par_iter()
            .map(|c| scan_chunk(c, n_samples, seed, &eval, &nonpositive, bound))
            .collect()
    };
    // deterministic merge: the first chunk attaining the max wins
    let first = scan(f64::INFINITY);
    let mut best = first[0];
    for c in &first[1..] {
        if c.worst > best.worst {
            best = *c;
        }
    }
    let violations = scan(best.worst).iter().map(|c| c.exceeding).sum();
    InequalityReport {
        p,
        delta,
        samples: n_samples,
        worst_ratio: best.worst,
        violations,
        nonpositive_pairings: first.iter().map(|c| c.nonpositive).sum(),
        worst_pair: best.pair,
        distribution: format!("{} (round-robin, unit-normalized pairs)", SAMPLE_FAMILIES.join("/")),
    }
}

fn check_common(p: f64, n_samples: usize) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(format!("p must lie in (1, inf), got {p}")));
    }
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    Ok(())
}

/// Estimates `a1(p, delta)` by sampling; `0 <= delta <= min(1, p - 1)`.
pub fn check_ineq1(p: f64, delta: f64, n_samples: usize, seed: u64) -> Result<InequalityReport> {
    check_common(p, n_samples)?;
    if !(0.0..=1.0f64.min(p - 1.0)).contains(&delta) {
        return Err(Error::Config(format!(
            "delta must lie in [0, min(1, p - 1)] = [0, {}], got {delta}",
            1.0f64.min(p - 1.0)
        )));
    }
    Ok(run(p, delta, n_samples, seed, |a, b| ratio1(a, b, p, delta), |_, _| false))
}

/// Estimates `a2(p, delta)` by sampling; `0 <= delta <= max(0, p - 2)`.
pub fn check_ineq2(p: f64, delta: f64, n_samples: usize, seed: u64) -> Result<InequalityReport> {
    check_common(p, n_samples)?;
    let hi = (p - 2.0).max(0.0);
    if !(0.0..=hi).contains(&delta) {
        return Err(Error::Config(format!("delta must lie in [0, max(0, p - 2)] = [0, {hi}], got {delta}")));
    }
    Ok(run(
        p,
        delta,
        n_samples,
        seed,
        |a, b| {
            ineq2_sides(a, b, p, delta).map(|(lhs, pairing)| if pairing > 0.0 { lhs / pairing } else { f64::INFINITY })
        },
        |a, b| ineq2_sides(a, b, p, delta).is_some_and(|(_, pairing)| pairing <= 0.0),
    ))
}

/// Admissible deltas for a report grid: endpoints and midpoint of each range.
pub fn delta_grid(p: f64) -> (Vec<f64>, Vec<f64>) {
    let grid = |hi: f64| {
        if hi <= 0.0 {
            vec![0.0]
        } else {
            vec![0.0, 0.5 * hi, hi]
        }
    };
    (grid(1.0f64.min(p - 1.0)), grid(p - 2.0))
}
