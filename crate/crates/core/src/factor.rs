//! Slice volumes `ℋⁿ(V ∩ 𝔹(z, 1))` and the spherical factor
//! `β_d(V) = max_{z ∈ 𝔹(0,1)} ℋⁿ(V ∩ 𝔹(z, 1))`.
//!
//! Two volume oracles are provided: Monte Carlo over a bounding box in
//! V-coordinates (any distance), and a nested layer-by-layer quadrature
//! that exploits the ρ functions of a multiradial profile.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{check_convexity, DistanceSpec, MetricsError, RhoTable};
use crate::quadrature::{smooth_integral, unit_ball_volume, Tolerance};
use crate::rng;
use crate::subgroups::{HomSubspace, Signature, SubgroupError};
use crate::Group;

/// Largest box half-width factor tried by the doubling search.
const MAX_EXPANSION: f64 = (1u64 << 20) as f64;
const SHELL_PROBES: usize = 1000;
/// Slack on `‖z‖ ≤ 1` for centers produced by rescaling.
const CENTER_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Subgroup(#[from] SubgroupError),
    #[error("bounding box still meets the slice after expansion by {0}; the distance looks non-coercive")]
    Coercivity(f64),
    #[error("center has norm {0} > 1")]
    CenterOutsideBall(f64),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("nested quadrature needs a multiradial distance")]
    Unsupported,
    #[error("nested quadrature over a {dim}-dimensional piece of layer {layer} is too expensive; use Monte Carlo")]
    Resource { layer: usize, dim: usize },
    #[error("nested quadrature over {0} dimensions with a discontinuous integrand is too expensive; use Monte Carlo")]
    Discontinuous(usize),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("subspace and distance live on different groups")]
    GroupMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeMethod {
    MonteCarlo,
    NestedQuadrature,
}

impl VolumeMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            VolumeMethod::MonteCarlo => "mc",
            VolumeMethod::NestedQuadrature => "nested_quadrature",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeEstimate {
    pub value: f64,
    /// One standard error; zero for quadrature.
    pub std_error: f64,
    pub n_samples: usize,
    pub method: VolumeMethod,
}

fn check_same_group(d: &DistanceSpec, v: &HomSubspace) -> Result<(), FactorError> {
    if Arc::ptr_eq(d.group(), v.group()) || d.group().structure_constants() == v.group().structure_constants() {
        Ok(())
    } else {
        Err(FactorError::GroupMismatch)
    }
}

fn check_center(d: &DistanceSpec, z: &[f64]) -> Result<(), FactorError> {
    d.group().check_point(z).map_err(SubgroupError::from)?;
    let n = d.norm(z);
    if n > 1.0 + CENTER_SLACK {
        return Err(FactorError::CenterOutsideBall(n));
    }
    Ok(())
}

/// Membership test for `V ∩ 𝔹(z, 1)` in V-coordinates, with scratch space.
struct SliceTest<'a> {
    d: &'a DistanceSpec,
    v: &'a HomSubspace,
    z_inv: Vec<f64>,
    x: Vec<f64>,
    diff: Vec<f64>,
}

impl<'a> SliceTest<'a> {
    fn new(d: &'a DistanceSpec, v: &'a HomSubspace, z: &[f64]) -> Self {
        let q = d.group().dimension();
        Self {
            d,
            v,
            z_inv: d.group().inverse(z).into_inner(),
            x: vec![0.0; q],
            diff: vec![0.0; q],
        }
    }

    #[inline]
    fn contains(&mut self, c: &[f64]) -> bool {
        self.v.embed_into(c, &mut self.x);
        self.d.group().multiply_into(&self.z_inv, &self.x, &mut self.diff);
        self.d.contains_difference(&self.diff, 1.0)
    }
}

/// Axis-aligned box in V-coordinates: `center ± half`.
#[derive(Debug, Clone)]
struct CoordBox {
    center: Vec<f64>,
    half: Vec<f64>,
}

impl CoordBox {
    fn volume(&self) -> f64 {
        self.half.iter().map(|h| 2.0 * h).product()
    }

    fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, c), h) in out.iter_mut().zip(&self.center).zip(&self.half) {
            *o = c + h * rng.gen_range(-1.0..1.0);
        }
    }

    /// Uniform point on a uniformly chosen face.
    fn sample_boundary<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        self.sample(rng, out);
        let k = rng.gen_range(0..out.len());
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        out[k] = self.center[k] + side * self.half[k];
    }
}

/// Doubles the layer-homogeneous box `R^j` around the V-projection of
/// `z` until no shell probe meets the slice.
fn bounding_box(test: &mut SliceTest, seed: u64) -> Result<CoordBox, FactorError> {
    let v = test.v;
    let n = v.dim();
    let center = v.coords(&test.z_inv.iter().map(|x| -x).collect::<Vec<_>>());
    let mut r = 1.0f64;
    let mut probe = vec![0.0; n];
    let mut round = 0u64;
    loop {
        let mut half = Vec::with_capacity(n);
        for j in 1..=v.group().step() {
            half.extend(std::iter::repeat_n(r.powi(j as i32), v.coord_range(j).len()));
        }
        let bx = CoordBox { center: center.clone(), half };
        let mut stream = rng::stream(seed, rng::op::SLICE_SHELL, round);
        let mut hit = false;
        for _ in 0..SHELL_PROBES {
            bx.sample_boundary(&mut stream, &mut probe);
            if test.contains(&probe) {
                hit = true;
                break;
            }
        }
        if !hit {
            return Ok(bx);
        }
        r *= 2.0;
        round += 1;
        if r > MAX_EXPANSION {
            return Err(FactorError::Coercivity(r));
        }
    }
}

/// Monte Carlo estimate of `ℋⁿ(V ∩ 𝔹(z, 1))` with `n` uniform samples in
/// a bounding box. Deterministic for a fixed seed, independent of the
/// number of threads.
pub fn slice_volume_mc(d: &DistanceSpec, v: &HomSubspace, z: &[f64], n: usize, seed: u64) -> Result<VolumeEstimate, FactorError> {
    if n < 1000 {
        return Err(FactorError::TooFewSamples { min: 1000, got: n });
    }
    check_same_group(d, v)?;
    check_center(d, z)?;
    let mut test = SliceTest::new(d, v, z);
    let bx = bounding_box(&mut test, seed)?;
    let dim = v.dim();
    let hits: u64 = (0..rng::blocks(n))
        .into_par_iter()
        .map(|b| {
            let mut stream = rng::stream(seed, rng::op::SLICE_SAMPLES, b as u64);
            let mut test = SliceTest::new(d, v, z);
            let mut c = vec![0.0; dim];
            let mut hits = 0u64;
            for _ in 0..rng::block_len(n, b) {
                bx.sample(&mut stream, &mut c);
                hits += test.contains(&c) as u64;
            }
            hits
        })
        .collect::<Vec<u64>>()
        .into_iter()
        .sum();
    let p = hits as f64 / n as f64;
    let vol = bx.volume();
    Ok(VolumeEstimate {
        value: vol * p,
        std_error: vol * (p * (1.0 - p) / n as f64).sqrt(),
        n_samples: n,
        method: VolumeMethod::MonteCarlo,
    })
}

/// Nested quadrature for multiradial distances. Layer `i` of V is
/// integrated over the Euclidean ball of radius `√(ρ_i² − dist²)` centred
/// at the V_i-projection of `Ψ_i = −P_i(z⁻¹·(v_{<i}, 0))`, where `dist`
/// is the distance from `Ψ_i` to V_i; the last layer is closed form.
pub fn slice_volume_nested(d: &DistanceSpec, v: &HomSubspace, z: &[f64]) -> Result<VolumeEstimate, FactorError> {
    check_same_group(d, v)?;
    check_center(d, z)?;
    let rho = RhoTable::for_distance(d).map_err(|_| FactorError::Unsupported)?;
    let g = d.group();
    let step = g.step();
    let sig = v.signature();
    for (i, &n) in sig.iter().enumerate() {
        if i + 1 < step && n > 3 {
            return Err(FactorError::Resource { layer: i + 1, dim: n });
        }
    }
    // off the origin, a zero-dimensional layer after a populated one cuts
    // the integrand; adaptive refinement then scales badly with dimension
    let quad_dims: usize = sig[..step - 1].iter().sum();
    let cut = z.iter().any(|&x| x != 0.0) && (1..step).any(|j| sig[j] == 0 && sig[..j].iter().any(|&n| n > 0));
    if cut && quad_dims > MAX_CUT_DIMS {
        return Err(FactorError::Discontinuous(quad_dims));
    }
    let nested = Nested {
        g,
        v,
        rho,
        rho1: None,
        z_inv: g.inverse(z).into_inner(),
        tol: Tolerance {
            abs: 1e-10,
            rel: 1e-8,
            max_depth: 16,
        },
    };
    let rho1 = nested.rho.rho1()?;
    let nested = Nested { rho1: Some(rho1), ..nested };
    let partial = vec![0.0; g.dimension()];
    let t = vec![0.0; step];
    let value = nested.level(1, &partial, &t, nested.tol);
    Ok(VolumeEstimate {
        value,
        std_error: 0.0,
        n_samples: 0,
        method: VolumeMethod::NestedQuadrature,
    })
}

struct Nested<'a> {
    g: &'a Group,
    v: &'a HomSubspace,
    rho: RhoTable<'a>,
    rho1: Option<f64>,
    z_inv: Vec<f64>,
    tol: Tolerance,
}

impl Nested<'_> {
    /// Integral over layers `i..=ι` with layers `< i` fixed in `partial`
    /// and their profile arguments in `t[..i-1]`.
    fn level(&self, i: usize, partial: &[f64], t: &[f64], tol: Tolerance) -> f64 {
        let g = self.g;
        let step = g.step();
        let range = g.layer_range(i);
        // Ψ_i = −P_i(z⁻¹·(v_{<i}, 0)); layer i of `partial` is zero here
        let w = g.multiply(&self.z_inv, partial).expect("group point");
        let psi: Vec<f64> = w[range.clone()].iter().map(|x| -x).collect();
        let basis = self.v.layer_basis(i);
        let m = basis.ncols();
        let center: Vec<f64> = (0..m).map(|c| basis.column(c).iter().zip(&psi).map(|(a, b)| a * b).sum()).collect();
        let dist2 = (psi.iter().map(|x| x * x).sum::<f64>() - center.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        let rho = if i == 1 {
            self.rho1.expect("rho1 computed")
        } else {
            match self.rho.rho(i, &t[..i - 1]) {
                Ok(r) => r,
                Err(_) => return 0.0,
            }
        };
        let rad2 = rho * rho - dist2;
        if rad2 <= 0.0 {
            return 0.0;
        }
        let radius = rad2.sqrt();
        if m == 0 {
            if i == step {
                return 1.0;
            }
            let mut t = t.to_vec();
            t[i - 1] = dist2.sqrt();
            return self.level(i + 1, partial, &t, tol);
        }
        if i == step {
            return unit_ball_volume(m) * radius.powi(m as i32);
        }
        let place = |y: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut p = partial.to_vec();
            for (r, idx) in range.clone().enumerate() {
                p[idx] = (0..m).map(|c| basis[(r, c)] * y[c]).sum();
            }
            let off2: f64 = y.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
            let mut t = t.to_vec();
            t[i - 1] = (off2 + dist2).sqrt();
            (p, t)
        };
        let f = |y: &[f64]| {
            let (p, t) = place(y);
            self.level(i + 1, &p, &t, inner_n(tol, m))
        };
        // the integrand vanishes, with a jump or a square-root edge, where
        // the next layer's margin turns negative
        let margin = |y: &[f64]| {
            let (p, t) = place(y);
            self.margin(i + 1, &p, &t)
        };
        let scan = if self.v.layer_basis(i + 1).ncols() == 0 { JUMP_SCAN } else { EDGE_SCAN };
        ball_integral(m, &center, radius, tol, &f, Some((&margin, scan)))
    }

    /// Positive exactly when layer `l` admits some point: `ρ_l² − dist²`
    /// for a positive-dimensional layer, the chain margin otherwise.
    fn margin(&self, l: usize, partial: &[f64], t: &[f64]) -> f64 {
        let m = self.v.layer_basis(l).ncols();
        if m == 0 {
            return self.chain_margin(l, partial, t);
        }
        let g = self.g;
        let w = g.multiply(&self.z_inv, partial).expect("group point");
        let psi = &w[g.layer_range(l)];
        let basis = self.v.layer_basis(l);
        let proj2: f64 = (0..m).map(|c| basis.column(c).iter().zip(psi).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum();
        let dist2 = psi.iter().map(|x| x * x).sum::<f64>() - proj2;
        match self.rho.rho(l, &t[..l - 1]) {
            Ok(r) => r * r - dist2,
            Err(_) => -1.0,
        }
    }

    /// `min_l (1 − φ(t_{<l}, |Ψ_l|, 0, …))` over the run of zero-dimensional
    /// layers starting at `l`; positive exactly when every one of them
    /// admits the point.
    fn chain_margin(&self, l: usize, partial: &[f64], t: &[f64]) -> f64 {
        let g = self.g;
        let step = g.step();
        let profile = self.rho.profile();
        let w = g.multiply(&self.z_inv, partial).expect("group point");
        let mut t = t.to_vec();
        let mut worst = f64::INFINITY;
        let mut layer = l;
        while layer <= step && self.v.layer_basis(layer).ncols() == 0 {
            let dist = w[g.layer_range(layer)].iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut buf = vec![0.0; step];
            buf[..layer - 1].copy_from_slice(&t[..layer - 1]);
            buf[layer - 1] = dist;
            worst = worst.min(1.0 - profile.eval(&buf));
            t[layer - 1] = dist;
            layer += 1;
        }
        worst
    }
}

/// Inner integrals run two digits tighter than the one enclosing them so
/// their error does not stall the outer refinement.
fn inner(tol: Tolerance) -> Tolerance {
    Tolerance {
        abs: (tol.abs * 1e-2).max(1e-15),
        rel: (tol.rel * 1e-2).max(1e-14),
        ..tol
    }
}

fn inner_n(tol: Tolerance, n: usize) -> Tolerance {
    (0..n).fold(tol, |t, _| inner(t))
}

/// Largest number of quadrature dimensions accepted with a cut integrand.
const MAX_CUT_DIMS: usize = 2;

/// Grid points scanned for sign changes of a margin: jumps hide narrow
/// pieces, square-root edges lose little when one is missed.
const JUMP_SCAN: usize = 512;
const EDGE_SCAN: usize = 64;

/// `∫_a^b f` restricted to `{margin > 0}` (whole interval when `margin` is
/// `None`), split at `kinks` and at the roots of the margin. Roots are
/// bracketed on a grid and bisected.
fn integrate_pieces(a: f64, b: f64, kinks: &[f64], tol: Tolerance, f: &dyn Fn(f64) -> f64, margin: Option<(&dyn Fn(f64) -> f64, usize)>) -> f64 {
    let mut cuts = vec![a, b];
    cuts.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    if let Some((margin, scan)) = margin {
        let xs: Vec<f64> = (0..=scan).map(|k| a + (b - a) * k as f64 / scan as f64).collect();
        let ms: Vec<f64> = xs.iter().map(|&x| margin(x)).collect();
        for k in 0..scan {
            if (ms[k] > 0.0) != (ms[k + 1] > 0.0) {
                let (mut lo, mut hi) = (xs[k], xs[k + 1]);
                let lo_inside = ms[k] > 0.0;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if (margin(mid) > 0.0) == lo_inside {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .filter(|w| w[1] > w[0] && margin.is_none_or(|(m, _)| m(0.5 * (w[0] + w[1])) > 0.0))
        .map(|w| smooth_integral(w[0], w[1], tol, f))
        .sum()
}

/// `∫_{B(center, radius)} f` in dimension 1, 2 or 3, in polar coordinates
/// about the center (where the integrand has its kink). Jumps described
/// by `margin` are resolved along the innermost variable.
fn ball_integral(m: usize, center: &[f64], radius: f64, tol: Tolerance, f: &dyn Fn(&[f64]) -> f64, margin: Option<(&dyn Fn(&[f64]) -> f64, usize)>) -> f64 {
    match m {
        1 => {
            let g = |y: f64| f(&[y]);
            let mg = margin.map(|(mf, n)| (move |y: f64| mf(&[y]), n));
            let c = center[0];
            integrate_pieces(c - radius, c + radius, &[c], tol, &g, mg.as_ref().map(|(x, n)| (x as &dyn Fn(f64) -> f64, *n)))
        }
        2 => smooth_integral(0.0, radius, tol, &|r| {
            let y = |th: f64| [center[0] + r * th.cos(), center[1] + r * th.sin()];
            let g = |th: f64| f(&y(th));
            let mg = margin.map(|(mf, n)| (move |th: f64| mf(&y(th)), n));
            r * integrate_pieces(0.0, 2.0 * PI, &[], inner(tol), &g, mg.as_ref().map(|(x, n)| (x as &dyn Fn(f64) -> f64, *n)))
        }),
        3 => smooth_integral(0.0, radius, tol, &|r| {
            r * r
                * smooth_integral(0.0, PI, inner(tol), &|th| {
                    let y = |ph: f64| {
                        [
                            center[0] + r * th.sin() * ph.cos(),
                            center[1] + r * th.sin() * ph.sin(),
                            center[2] + r * th.cos(),
                        ]
                    };
                    let g = |ph: f64| f(&y(ph));
                    let mg = margin.map(|(mf, n)| (move |ph: f64| mf(&y(ph)), n));
                    th.sin() * integrate_pieces(0.0, 2.0 * PI, &[], inner_n(tol, 2), &g, mg.as_ref().map(|(x, n)| (x as &dyn Fn(f64) -> f64, *n)))
                })
        }),
        _ => unreachable!("dimension checked by caller"),
    }
}

/// Either oracle, by method.
pub fn slice_volume(d: &DistanceSpec, v: &HomSubspace, z: &[f64], method: VolumeMethod, n: usize, seed: u64) -> Result<VolumeEstimate, FactorError> {
    match method {
        VolumeMethod::MonteCarlo => slice_volume_mc(d, v, z, n, seed),
        VolumeMethod::NestedQuadrature => slice_volume_nested(d, v, z),
    }
}

#[derive(Debug, Clone)]
pub struct FactorOptions {
    pub n_starts: usize,
    pub n_mc: usize,
    pub seed: u64,
    /// Objective evaluations per Nelder–Mead start.
    pub max_evals: usize,
    /// Sample multiplier for the final re-estimate.
    pub final_factor: usize,
    pub method: VolumeMethod,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            n_starts: 16,
            n_mc: 100_000,
            seed: 0,
            max_evals: 120,
            final_factor: 10,
            method: VolumeMethod::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartTrace {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorReport {
    pub beta: f64,
    pub beta_error: f64,
    pub argmax_center: Vec<f64>,
    pub volume_at_origin: f64,
    pub origin_error: f64,
    /// `beta − volume_at_origin`.
    pub center_gap: f64,
    /// Combined one-sigma error of the gap.
    pub gap_error: f64,
    pub boundary_argmax: bool,
    pub n_starts: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub method: VolumeMethod,
    pub trace: Vec<StartTrace>,
    /// Final re-estimates `(center, value, std_error)`; `beta` is their max.
    pub final_probes: Vec<(Vec<f64>, f64, f64)>,
}

impl FactorReport {
    /// Gap within `k` combined standard errors (plus rounding slack).
    pub fn gap_within(&self, k: f64) -> bool {
        self.center_gap <= k * self.gap_error + 1e-12 * self.beta.abs().max(1.0)
    }
}

/// Downhill simplex maximizing `f`; returns `(argmax, value, evaluations)`.
fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64, usize) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        -f(x)
    };
    simplex.push((start.to_vec(), eval(start, &mut evals)));
    for k in 0..n {
        let mut x = start.to_vec();
        x[k] += step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    while evals < max_evals {
        sort(&mut simplex);
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < 1e-4 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = entry.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    let fx = eval(&x, &mut evals);
                    *entry = (x, fx);
                }
            }
        }
    }
    sort(&mut simplex);
    let (x, fx) = simplex.swap_remove(0);
    (x, -fx, evals)
}

/// Uniform random point of `𝔹(0, 1)` by rejection from the unit box,
/// falling back to rescaling.
fn random_center<R: Rng>(d: &DistanceSpec, rng: &mut R) -> Vec<f64> {
    let q = d.group().dimension();
    let mut x = vec![0.0; q];
    for _ in 0..64 {
        x.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        if d.contains_difference(&x, 1.0) {
            return x;
        }
    }
    d.clamp_to_unit_ball(&x)
}

/// Maximizes the slice volume over centers in `𝔹(0, 1)` by multi-start
/// Nelder–Mead with common random numbers, then re-estimates the best
/// endpoints and the origin with `final_factor` times more samples.
pub fn spherical_factor(d: &DistanceSpec, v: &HomSubspace, opts: &FactorOptions) -> Result<FactorReport, FactorError> {
    check_same_group(d, v)?;
    let g = d.group();
    let q = g.dimension();
    if v.dim() == 0 || v.dim() >= q {
        return Err(FactorError::Precondition(format!("subspace dimension {} must lie in 1..={}", v.dim(), q - 1)));
    }
    let method = opts.method;
    let objective = |z: &[f64]| -> Result<f64, FactorError> {
        let zc = d.clamp_to_unit_ball(z);
        Ok(slice_volume(d, v, &zc, method, opts.n_mc, opts.seed)?.value)
    };
    // surface errors from the oracle before optimizing
    objective(&g.zero())?;

    let starts: Vec<Vec<f64>> = (0..opts.n_starts.max(1))
        .map(|k| {
            if k == 0 {
                g.zero().into_inner()
            } else {
                random_center(d, &mut rng::stream(opts.seed, rng::op::STARTS, k as u64))
            }
        })
        .collect();
    let trace: Vec<StartTrace> = starts
        .par_iter()
        .map(|s| {
            let (end, value, evaluations) = nelder_mead_max(|z| objective(z).unwrap_or(f64::NEG_INFINITY), s, 0.25, opts.max_evals);
            StartTrace {
                start: s.clone(),
                end: d.clamp_to_unit_ball(&end),
                value,
                evaluations,
            }
        })
        .collect();

    // distinct best endpoints, then the origin
    let mut order: Vec<usize> = (0..trace.len()).collect();
    order.sort_by(|&a, &b| trace[b].value.total_cmp(&trace[a].value).then(a.cmp(&b)));
    let mut probes: Vec<Vec<f64>> = Vec::new();
    for &k in &order {
        let c = &trace[k].end;
        let distinct = probes.iter().all(|p| p.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) > 1e-3);
        if distinct {
            probes.push(c.clone());
        }
        if probes.len() == 3 {
            break;
        }
    }
    let origin = g.zero().into_inner();
    let final_n = opts.n_mc * opts.final_factor.max(1);
    let final_seed = rng::derive_seed(opts.seed, rng::op::FINAL);
    let estimate = |z: &[f64]| slice_volume(d, v, z, method, final_n, final_seed);
    let at_origin = estimate(&origin)?;
    let mut final_probes = vec![(origin.clone(), at_origin.value, at_origin.std_error)];
    for p in probes {
        let e = estimate(&p)?;
        final_probes.push((p, e.value, e.std_error));
    }
    let (best_center, beta, beta_error) = final_probes
        .iter()
        .fold(None::<&(Vec<f64>, f64, f64)>, |best, cand| match best {
            Some(b) if b.1 >= cand.1 => Some(b),
            _ => Some(cand),
        })
        .cloned()
        .expect("origin is always probed");
    let at_origin_is_best = best_center.iter().all(|&x| x == 0.0);
    let gap_error = if at_origin_is_best { 0.0 } else { (beta_error.powi(2) + at_origin.std_error.powi(2)).sqrt() };
    let boundary_argmax = d.norm(&best_center) >= 1.0 - 1e-6;
    Ok(FactorReport {
        beta,
        beta_error,
        argmax_center: best_center,
        volume_at_origin: at_origin.value,
        origin_error: at_origin.std_error,
        center_gap: beta - at_origin.value,
        gap_error,
        boundary_argmax,
        n_starts: trace.len(),
        n_mc: opts.n_mc,
        seed: opts.seed,
        method,
        trace,
        final_probes,
    })
}

/// `β − ℋⁿ(V ∩ 𝔹(0, 1))` with its combined standard error.
pub fn center_gap(d: &DistanceSpec, v: &HomSubspace, opts: &FactorOptions) -> Result<(f64, f64), FactorError> {
    let r = spherical_factor(d, v, opts)?;
    Ok((r.center_gap, r.gap_error))
}

/// Haar-random orthogonal `n × n` matrix (QR of a Gaussian matrix with
/// the sign of `R`'s diagonal folded into `Q`).
fn haar_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Homogeneous subspace of the given signature: the span of the first
/// `n_j` basis vectors of each layer, moved by independent Haar-random
/// rotations `J_j` of the layers.
pub fn random_subspace(group: Arc<Group>, signature: &Signature, seed: u64) -> Result<HomSubspace, FactorError> {
    let sig = Signature::new(&group, signature.dims().to_vec())?;
    let mut stream = rng::stream(seed, rng::op::SUBSPACE, 0);
    let spans: Vec<DMatrix<f64>> = group
        .layer_dims()
        .iter()
        .zip(sig.dims())
        .map(|(&h, &n)| {
            let j = haar_orthogonal(h, &mut stream);
            j.columns(0, n).into_owned()
        })
        .collect();
    Ok(HomSubspace::from_layer_spans(group, spans)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCase {
    pub subspace_seed: u64,
    pub basis: Vec<Vec<f64>>,
    pub report: FactorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub signature: Signature,
    pub cases: Vec<SweepCase>,
    /// `max β − min β`.
    pub spread: f64,
    /// Largest `|β_a − β_b| − 3(σ_a + σ_b)` over pairs; nonpositive on pass.
    pub worst_pair_excess: f64,
    /// Mean of the β values, the common value the sweep estimates.
    pub mean: f64,
    pub passed: bool,
}

impl SweepReport {
    pub fn betas(&self) -> Vec<f64> {
        self.cases.iter().map(|c| c.report.beta).collect()
    }

    /// Sum of the `3σ` error bars over all cases.
    pub fn error_budget(&self) -> f64 {
        self.cases.iter().map(|c| 3.0 * c.report.beta_error).sum()
    }
}

/// Spherical factor over `k` random subspaces of one signature. Requires
/// a multiradial distance.
pub fn rotational_sweep(d: &DistanceSpec, signature: &Signature, k: usize, opts: &FactorOptions) -> Result<SweepReport, FactorError> {
    if !d.is_multiradial() {
        return Err(FactorError::Precondition("rotational sweep needs a multiradial distance".into()));
    }
    let mut cases = Vec::with_capacity(k);
    for i in 0..k {
        let subspace_seed = rng::derive_seed(opts.seed, i as u64);
        let v = random_subspace(d.group().clone(), signature, subspace_seed)?;
        let report = spherical_factor(d, &v, opts)?;
        cases.push(SweepCase {
            subspace_seed,
            basis: v.basis_vectors(),
            report,
        });
    }
    let betas: Vec<f64> = cases.iter().map(|c| c.report.beta).collect();
    let spread = if betas.is_empty() {
        0.0
    } else {
        betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - betas.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let mut worst_pair_excess = f64::NEG_INFINITY;
    for a in 0..cases.len() {
        for b in a + 1..cases.len() {
            let (ra, rb) = (&cases[a].report, &cases[b].report);
            let excess = (ra.beta - rb.beta).abs() - 3.0 * (ra.beta_error + rb.beta_error);
            worst_pair_excess = worst_pair_excess.max(excess);
        }
    }
    if cases.len() < 2 {
        worst_pair_excess = 0.0;
    }
    let mean = if betas.is_empty() { f64::NAN } else { betas.iter().sum::<f64>() / betas.len() as f64 };
    Ok(SweepReport {
        signature: signature.clone(),
        cases,
        spread,
        worst_pair_excess,
        mean,
        passed: worst_pair_excess <= 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexNormalReport {
    pub factor: FactorReport,
    /// Worst sampled convexity excess of the unit ball.
    pub convexity_excess: f64,
    pub passed: bool,
}

/// Checks `β_d(W) = ℋᵐ(W ∩ 𝔹(0, 1))` for a normal homogeneous subgroup
/// `W` and a distance with convex unit ball.
pub fn convex_normal_check(d: &DistanceSpec, w: &HomSubspace, opts: &FactorOptions, convexity_samples: usize) -> Result<ConvexNormalReport, FactorError> {
    if !d.convex_ball {
        return Err(FactorError::Precondition("distance is not flagged as having a convex unit ball".into()));
    }
    if !(w.is_subgroup() && w.is_normal()) {
        return Err(FactorError::Precondition("W must be a normal homogeneous subgroup".into()));
    }
    let convexity = check_convexity(d, convexity_samples, opts.seed);
    if convexity.failed() {
        return Err(FactorError::Precondition(format!("convex_ball flag contradicted by sampling: {}", convexity.detail)));
    }
    let factor = spherical_factor(d, w, opts)?;
    let passed = factor.gap_within(3.0);
    Ok(ConvexNormalReport {
        factor,
        convexity_excess: convexity.excess,
        passed,
    })
}
