//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use isrisk_core::quadrature::STRICT;
use isrisk_core::rate_functions::{
    centering, constraint_functional, perturbation_rate, KappaKind, PerturbationDensity,
};
use isrisk_core::{SamplingScheme, WeightedSample};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn feature(kind: KappaKind, t: f64, x: f64, w: f64) -> f64 {
    match kind {
        KappaKind::Quantile | KappaKind::Tail => {
            if x > t {
                w
            } else {
                0.0
            }
        }
        KappaKind::Shortfall => (x - t).max(0.0) * w,
    }
}

/// Bin edges at sampler quantiles, plus the level-`q` threshold of `μ`.
pub fn bin_edges(scheme: &SamplingScheme, q: f64, bins: usize) -> Vec<f64> {
    let nu = scheme.sampler();
    let mut edges: Vec<f64> = (1..bins)
        .map(|j| nu.quantile(1.0 - j as f64 / bins as f64).unwrap())
        .collect();
    edges.push(scheme.nominal().quantile(q).unwrap());
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges
}

fn bin_index(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e < x)
}

/// Minimizes `½∫h²dν` over `h = Σ cⱼ φⱼ` subject to `∫h dν = 0` and the
/// problem's functional equal to `−δ` by solving the KKT system. The basis
/// is bin indicators, optionally augmented with the problem's own feature.
pub fn kkt_minimum(
    scheme: &SamplingScheme,
    kind: KappaKind,
    q: f64,
    delta: f64,
    bins: usize,
    with_feature: bool,
) -> f64 {
    let edges = bin_edges(scheme, q, bins);
    let t = scheme.nominal().quantile(q).unwrap();
    let nb = edges.len() + 1;
    let dim = nb + usize::from(with_feature);
    let s = *scheme;
    let basis = |j: usize| -> PerturbationDensity {
        let edges = edges.clone();
        if j < nb {
            PerturbationDensity::new(format!("bin{j}"), edges.clone(), move |x| {
                f64::from(u8::from(bin_index(&edges, x) == j))
            })
        } else {
            PerturbationDensity::new("feature", vec![t], move |x| feature(kind, t, x, s.weight(x)))
        }
    };
    let phis: Vec<PerturbationDensity> = (0..dim).map(basis).collect();
    let mut all_breaks = edges.clone();
    all_breaks.push(t);
    let gram = DMatrix::from_fn(dim, dim, |i, k| {
        let (a, b) = (&phis[i], &phis[k]);
        scheme
            .expect_nu(f64::NEG_INFINITY, f64::INFINITY, &all_breaks, STRICT, |x| {
                a.eval(x) * b.eval(x)
            })
            .unwrap()
    });
    let mass: Vec<f64> = phis.iter().map(|p| centering(scheme, p).unwrap()).collect();
    let func: Vec<f64> = phis
        .iter()
        .map(|p| constraint_functional(scheme, kind, q, p).unwrap())
        .collect();
    let m = dim + 2;
    let mut kkt = DMatrix::zeros(m, m);
    kkt.view_mut((0, 0), (dim, dim)).copy_from(&gram);
    for j in 0..dim {
        kkt[(dim, j)] = mass[j];
        kkt[(j, dim)] = mass[j];
        kkt[(dim + 1, j)] = func[j];
        kkt[(j, dim + 1)] = func[j];
    }
    let mut rhs = DVector::zeros(m);
    rhs[dim + 1] = -delta;
    // The feature may lie in the span of the bins, so the system can be
    // singular; any solution of a consistent system attains the minimum.
    let sol = kkt.svd(true, true).solve(&rhs, 1e-12).expect("SVD solve");
    let c = sol.rows(0, dim).into_owned();
    0.5 * (c.transpose() * &gram * &c)[(0, 0)]
}

/// A random centered perturbation whose functional has magnitude at least
/// `δ`, built from random bin levels, a random multiple of the feature and a
/// random smooth bump.
pub fn random_feasible<R: Rng>(
    rng: &mut R,
    scheme: &SamplingScheme,
    kind: KappaKind,
    q: f64,
    delta: f64,
) -> PerturbationDensity {
    let edges = bin_edges(scheme, q, 10);
    let t = scheme.nominal().quantile(q).unwrap();
    let levels: Vec<f64> = (0..=edges.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cf = rng.random_range(-2.0..2.0);
    let (amp, centre, width) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(0.0..5.0),
        rng.random_range(0.3..2.0),
    );
    let s = *scheme;
    let mut breaks = edges.clone();
    breaks.push(t);
    let raw_edges = edges.clone();
    let raw = PerturbationDensity::new("raw", breaks.clone(), move |x| {
        let z = (x - centre) / width;
        levels[bin_index(&raw_edges, x)] + cf * feature(kind, t, x, s.weight(x)) + amp * (-z * z).exp()
    });
    let m = centering(scheme, &raw).unwrap();
    let centred = PerturbationDensity::new("centred", breaks, move |x| raw.eval(x) - m);
    let f = constraint_functional(scheme, kind, q, &centred).unwrap();
    let stretch = 1.0 + rng.random_range(0.0..1.0);
    centred.scaled(delta * stretch / f.abs())
}

pub fn rate(scheme: &SamplingScheme, h: &PerturbationDensity) -> f64 {
    perturbation_rate(scheme, h).unwrap()
}

/// Raw draws `(value, weight)` before any merging.
pub type Draws = Vec<(f64, f64)>;

/// Values on a coarse grid so ties occur, dyadic weights so every sum is
/// exact in any order.
pub fn random_draws<R: Rng>(rng: &mut R, max_n: usize) -> Draws {
    let n = rng.random_range(1..=max_n);
    (0..n)
        .map(|_| {
            let x = f64::from(rng.random_range(0u32..64)) / 64.0;
            let w = f64::from(rng.random_range(0u32..=24)) / 8.0;
            (x, w)
        })
        .collect()
}

pub fn sample_of(draws: &Draws) -> WeightedSample {
    WeightedSample::from_atoms(draws.clone(), draws.len()).unwrap()
}

pub fn brute_tail(draws: &Draws, t: f64) -> f64 {
    let s: f64 = draws.iter().filter(|d| d.0 > t).map(|d| d.1).sum();
    s / draws.len() as f64
}

/// `inf{t : T(t) ≤ p}` over the draw values, with the deficiency flag.
pub fn brute_quantile(draws: &Draws, p: f64) -> (f64, bool) {
    let mut vals: Vec<f64> = draws.iter().map(|d| d.0).collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let total = brute_tail(draws, f64::NEG_INFINITY);
    let q = vals.iter().copied().find(|&v| brute_tail(draws, v) <= p).unwrap();
    (q, total <= p)
}

/// Midpoint Riemann sum of the quantile over `(0, p)` at the given mesh,
/// divided by `p`. The quantile is tracked by a pointer walking down the
/// sorted values as `u` grows.
pub fn riemann_shortfall(draws: &Draws, p: f64, mesh: f64) -> f64 {
    let mut vals: Vec<f64> = draws.iter().map(|d| d.0).collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let tails: Vec<f64> = vals.iter().map(|&v| brute_tail(draws, v)).collect();
    let steps = (p / mesh).floor() as usize;
    let h = p / steps as f64;
    // Largest index whose tail is ≤ u; moves left as u increases.
    let mut k = vals.len() - 1;
    let mut acc = 0.0;
    for i in 0..steps {
        let u = (i as f64 + 0.5) * h;
        while k > 0 && tails[k - 1] <= u {
            k -= 1;
        }
        acc += vals[k];
    }
    acc * h / p
}

/// The optimizer plus a small random centered direction, rescaled so the
/// functional again has magnitude `δ`.
pub fn near_optimal<R: Rng>(
    rng: &mut R,
    scheme: &SamplingScheme,
    kind: KappaKind,
    q: f64,
    delta: f64,
    optimum: &PerturbationDensity,
    size: f64,
) -> PerturbationDensity {
    let noise = random_feasible(rng, scheme, kind, q, delta);
    let opt = optimum.clone();
    let mut breaks = noise.breakpoints().to_vec();
    breaks.extend_from_slice(opt.breakpoints());
    let mixed = PerturbationDensity::new("near-optimal", breaks, move |x| opt.eval(x) + size * noise.eval(x));
    let f = constraint_functional(scheme, kind, q, &mixed).unwrap();
    mixed.scaled(delta / f.abs())
}
