//! Homogeneous distances: multiradial profiles, built-in families, norm
//! evaluation by bisection, the ρ functions and a randomized axiom sampler.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::rng;
use crate::Group;

/// Default `c` of `dinf` under the `[e1, e2] = e3` convention.
pub const DEFAULT_DINF_C: f64 = 2.0;
/// Default `γ` of the Korányi gauge under the `[e1, e2] = e3` convention.
pub const DEFAULT_KORANYI_GAMMA: f64 = 16.0;
/// Default ball radius of the Hebisch–Sikora distance on `heisenberg1`.
pub const DEFAULT_HS_EPS: f64 = 2.0;

/// Samples drawn when a family validates its constant at construction.
const CONSTRUCTION_SAMPLES: usize = 10_000;
const CONSTRUCTION_SEED: u64 = 0x5eed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{family} requires {requirement}")]
    WrongGroup { family: &'static str, requirement: String },
    #[error("parameter {name} = {value} must be positive and finite")]
    BadParameter { name: &'static str, value: f64 },
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("({t:?}) lies outside T_{layer}: φ = {value} ≥ 1")]
    Domain { layer: usize, t: Vec<f64>, value: f64 },
    #[error("layer index {layer} outside 2..={step}")]
    LayerIndex { layer: usize, step: usize },
    #[error("{family} with {param} fails the axiom sampler ({detail}); try a smaller {param}")]
    AxiomsFailed { family: &'static str, param: String, detail: String },
    #[error("distance is not multiradial")]
    NotMultiradial,
}

/// Profile `φ` of a multiradial distance: the unit ball is
/// `{φ(|x_1|, …, |x_ι|) ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `max(t1, c·√t2)`, step 2.
    Dinf { c: f64 },
    /// `(t1⁴ + γ·t2²)^{1/4}`, step 2.
    Koranyi { gamma: f64 },
    /// `|t|/ε`: the Euclidean ball of radius ε.
    HebischSikora { eps: f64 },
    /// `t1` on an abelian group.
    Euclidean,
    Expr(Expr),
}

impl Profile {
    #[inline]
    pub fn eval(&self, t: &[f64]) -> f64 {
        match self {
            Profile::Dinf { c } => t[0].max(c * t[1].sqrt()),
            Profile::Koranyi { gamma } => {
                let a = t[0] * t[0];
                (a * a + gamma * t[1] * t[1]).sqrt().sqrt()
            }
            Profile::HebischSikora { eps } => t.iter().map(|x| x * x).sum::<f64>().sqrt() / eps,
            Profile::Euclidean => t[0],
            Profile::Expr(e) => e.eval(t),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Profile::Dinf { .. } => "dinf",
            Profile::Koranyi { .. } => "koranyi",
            Profile::HebischSikora { .. } => "hebisch_sikora",
            Profile::Euclidean => "euclidean",
            Profile::Expr(_) => "profile",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Dinf { c } => write!(f, "dinf(c={c})"),
            Profile::Koranyi { gamma } => write!(f, "koranyi(gamma={gamma})"),
            Profile::HebischSikora { eps } => write!(f, "hebisch_sikora(eps={eps})"),
            Profile::Euclidean => write!(f, "euclidean"),
            Profile::Expr(e) => write!(f, "profile({e})"),
        }
    }
}

/// A homogeneous norm supplied directly, for distances that are not
/// multiradial. Implementations must satisfy `‖δ_r x‖ = r‖x‖`.
pub trait HomogeneousNorm: Send + Sync + fmt::Debug {
    fn norm(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone)]
pub enum DistanceKind {
    Multiradial(Profile),
    Custom(Arc<dyn HomogeneousNorm>),
}

/// Left-invariant homogeneous distance `d(x, y) = ‖x⁻¹y‖`.
#[derive(Debug, Clone)]
pub struct DistanceSpec {
    group: Arc<Group>,
    kind: DistanceKind,
    /// User-asserted convexity of the unit ball; see [`check_convexity`].
    pub convex_ball: bool,
}

fn positive(name: &'static str, value: f64) -> Result<(), MetricsError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MetricsError::BadParameter { name, value })
    }
}

fn require_step(group: &Group, family: &'static str, step: usize) -> Result<(), MetricsError> {
    if group.step() != step {
        return Err(MetricsError::WrongGroup {
            family,
            requirement: format!("a step-{step} group"),
        });
    }
    Ok(())
}

impl DistanceSpec {
    pub fn multiradial(group: Arc<Group>, profile: Profile) -> Result<Self, MetricsError> {
        check_profile(&profile, group.step())?;
        Ok(Self {
            group,
            kind: DistanceKind::Multiradial(profile),
            convex_ball: false,
        })
    }

    pub fn custom(group: Arc<Group>, norm: Arc<dyn HomogeneousNorm>, convex_ball: bool) -> Self {
        Self {
            group,
            kind: DistanceKind::Custom(norm),
            convex_ball,
        }
    }

    pub fn dinf(group: Arc<Group>, c: f64) -> Result<Self, MetricsError> {
        positive("c", c)?;
        require_step(&group, "dinf", 2)?;
        Self::multiradial(group, Profile::Dinf { c })
    }

    /// Korányi gauge; rejected unless the axiom sampler passes.
    pub fn koranyi(group: Arc<Group>, gamma: f64) -> Result<Self, MetricsError> {
        positive("gamma", gamma)?;
        require_step(&group, "koranyi", 2)?;
        let d = Self::multiradial(group, Profile::Koranyi { gamma })?;
        let report = check_axioms(&d, CONSTRUCTION_SAMPLES, CONSTRUCTION_SEED);
        if !report.passed() {
            return Err(MetricsError::AxiomsFailed {
                family: "koranyi",
                param: "gamma".into(),
                detail: report.summary(),
            });
        }
        Ok(d)
    }

    /// Euclidean ball of radius `eps`; convex by construction.
    pub fn hebisch_sikora(group: Arc<Group>, eps: f64) -> Result<Self, MetricsError> {
        positive("eps", eps)?;
        let mut d = Self::multiradial(group, Profile::HebischSikora { eps })?;
        d.convex_ball = true;
        Ok(d)
    }

    pub fn euclidean(group: Arc<Group>) -> Result<Self, MetricsError> {
        if group.step() != 1 {
            return Err(MetricsError::WrongGroup {
                family: "euclidean",
                requirement: "an abelian group".into(),
            });
        }
        let mut d = Self::multiradial(group, Profile::Euclidean)?;
        d.convex_ball = true;
        Ok(d)
    }

    pub fn from_profile_expr(group: Arc<Group>, src: &str) -> Result<Self, MetricsError> {
        let e = Expr::parse_profile(src, group.step())?;
        Self::multiradial(group, Profile::Expr(e))
    }

    pub fn group(&self) -> &Arc<Group> {
        &self.group
    }

    pub fn kind(&self) -> &DistanceKind {
        &self.kind
    }

    pub fn profile(&self) -> Option<&Profile> {
        match &self.kind {
            DistanceKind::Multiradial(p) => Some(p),
            DistanceKind::Custom(_) => None,
        }
    }

    pub fn is_multiradial(&self) -> bool {
        self.profile().is_some()
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DistanceKind::Multiradial(p) => p.to_string(),
            DistanceKind::Custom(n) => format!("custom({n:?})"),
        }
    }

    /// `φ(|x_1|/r, |x_2|/r², …)` for a multiradial distance.
    #[inline]
    fn scaled_profile(&self, profile: &Profile, x: &[f64], r: f64) -> f64 {
        let mut t = [0.0; crate::bch::MAX_DEPTH];
        let step = self.group.step();
        let mut scale = 1.0;
        for (j, tj) in t.iter_mut().enumerate().take(step) {
            scale *= r;
            let range = self.group.layer_range(j + 1);
            *tj = x[range].iter().map(|v| v * v).sum::<f64>().sqrt() / scale;
        }
        profile.eval(&t[..step])
    }

    /// Homogeneous norm `‖x‖ = d(x, 0)`. For multiradial distances this is
    /// the root in `r` of `φ(|x_1|/r, …, |x_ι|/r^ι) = 1`, found by bracketing
    /// and bisection to machine precision. Returns infinity if no bracket
    /// exists (a non-coercive profile).
    pub fn norm(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DistanceKind::Custom(n) => n.norm(x),
            DistanceKind::Multiradial(p) => {
                if x.iter().all(|&v| v == 0.0) {
                    return 0.0;
                }
                let f = |r: f64| self.scaled_profile(p, x, r);
                let (mut lo, mut hi) = (1.0, 1.0);
                if f(1.0) > 1.0 {
                    loop {
                        hi *= 2.0;
                        if hi > 1e300 {
                            return f64::INFINITY;
                        }
                        if f(hi) <= 1.0 {
                            break;
                        }
                        lo = hi;
                    }
                } else {
                    loop {
                        lo *= 0.5;
                        if lo < 1e-300 {
                            return 0.0;
                        }
                        if f(lo) > 1.0 {
                            break;
                        }
                        hi = lo;
                    }
                }
                // invariant: f(lo) > 1 ≥ f(hi)
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if f(mid) > 1.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let diff = self.group.left_difference(x, y).expect("points of the distance's group");
        self.norm(&diff)
    }

    /// Closed-ball membership of `center⁻¹x` in `𝔹(0, r)`.
    #[inline]
    pub fn contains_difference(&self, diff: &[f64], r: f64) -> bool {
        match &self.kind {
            DistanceKind::Multiradial(p) => self.scaled_profile(p, diff, r) <= 1.0,
            DistanceKind::Custom(n) => n.norm(diff) <= r,
        }
    }

    /// `x ∈ 𝔹(center, r)` (closed ball).
    pub fn ball_contains(&self, center: &[f64], r: f64, x: &[f64]) -> bool {
        let diff = self.group.left_difference(center, x).expect("points of the distance's group");
        self.contains_difference(&diff, r)
    }

    /// Rescales `z` into the closed unit ball by `δ_{1/‖z‖}` when `‖z‖ > 1`.
    pub fn clamp_to_unit_ball(&self, z: &[f64]) -> Vec<f64> {
        let n = self.norm(z);
        if n > 1.0 && n.is_finite() {
            let mut out = self.group.dilate(1.0 / n, z).expect("positive factor").into_inner();
            // guard against the rescaled point landing a rounding error outside
            if !self.contains_difference(&out, 1.0) {
                out = self.group.dilate(1.0 - 1e-15, &out).expect("positive factor").into_inner();
            }
            out
        } else {
            z.to_vec()
        }
    }
}

/// Structural checks on a profile: arity, `φ(0) = 0`, sampled
/// monotonicity and coercivity on a fixed deterministic grid.
fn check_profile(p: &Profile, step: usize) -> Result<(), MetricsError> {
    if let Profile::Expr(e) = p {
        if e.arity() != step {
            return Err(MetricsError::Profile(format!("profile has {} variables, group has {step} layers", e.arity())));
        }
    }
    if matches!(p, Profile::Euclidean) && step != 1 {
        return Err(MetricsError::Profile("euclidean profile needs one layer".into()));
    }
    let zero = vec![0.0; step];
    let at0 = p.eval(&zero);
    if at0 != 0.0 {
        return Err(MetricsError::Profile(format!("φ(0) = {at0}, expected 0")));
    }
    for k in 0..step {
        let mut axis = vec![0.0; step];
        axis[k] = 1.0;
        if !coercive_along(p, &axis) {
            return Err(MetricsError::Profile(format!("not coercive along t{}", k + 1)));
        }
    }
    let mut rng = rng::stream(CONSTRUCTION_SEED, rng::op::AXIOMS, u64::MAX >> 8);
    for _ in 0..256 {
        let t: Vec<f64> = (0..step).map(|_| rng.gen_range(0.0..2.0)).collect();
        if let Some(v) = monotonicity_violation(p, &t, &mut rng) {
            return Err(MetricsError::Profile(format!("not monotone near {t:?} (drop {v:e})")));
        }
        if let Some(dir) = coercivity_violation(p, &mut rng, step) {
            return Err(MetricsError::Profile(format!("not coercive along {dir:?}")));
        }
    }
    Ok(())
}

/// Drop of `φ` when one coordinate of `t` increases, if positive.
fn monotonicity_violation<R: Rng>(p: &Profile, t: &[f64], rng: &mut R) -> Option<f64> {
    let k = rng.gen_range(0..t.len());
    let mut up = t.to_vec();
    up[k] += rng.gen_range(0.0..1.0);
    let drop = p.eval(t) - p.eval(&up);
    (drop > 1e-12 * (1.0 + p.eval(t).abs())).then_some(drop)
}

/// Direction in the positive orthant along which `φ` stays below 1.
fn coercivity_violation<R: Rng>(p: &Profile, rng: &mut R, step: usize) -> Option<Vec<f64>> {
    let mut dir: Vec<f64> = (0..step).map(|_| rng.gen_range(0.0..1.0)).collect();
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return None;
    }
    dir.iter_mut().for_each(|x| *x /= n);
    (!coercive_along(p, &dir)).then_some(dir)
}

fn coercive_along(p: &Profile, dir: &[f64]) -> bool {
    let mut s = 1.0;
    for _ in 0..80 {
        let t: Vec<f64> = dir.iter().map(|x| x * s).collect();
        if p.eval(&t) > 1.0 {
            return true;
        }
        s *= 2.0;
    }
    false
}

/// Bisection helper for the ρ functions: `sup{s ≥ 0 : φ(t, s, 0, …) < 1}`.
#[derive(Debug, Clone)]
pub struct RhoTable<'a> {
    profile: &'a Profile,
    step: usize,
    /// Absolute tolerance of the bisection.
    pub tol: f64,
}

impl<'a> RhoTable<'a> {
    pub fn new(profile: &'a Profile, step: usize) -> Self {
        Self { profile, step, tol: 1e-13 }
    }

    pub fn for_distance(d: &'a DistanceSpec) -> Result<Self, MetricsError> {
        let p = d.profile().ok_or(MetricsError::NotMultiradial)?;
        Ok(Self::new(p, d.group().step()))
    }

    pub fn profile(&self) -> &Profile {
        self.profile
    }

    /// `ρ_1 = sup{t ≥ 0 : φ(t, 0, …, 0) < 1}`.
    pub fn rho1(&self) -> Result<f64, MetricsError> {
        let mut buf = vec![0.0; self.step];
        let at0 = self.profile.eval(&buf);
        if at0 >= 1.0 {
            return Err(MetricsError::Profile(format!("φ(0) = {at0} ≥ 1: the unit ball has empty interior")));
        }
        self.sup_below_one(&mut buf, 0)
    }

    /// `ρ_i(t_1, …, t_{i−1})` for `2 ≤ i ≤ ι`, defined on `T_i`.
    pub fn rho(&self, i: usize, t: &[f64]) -> Result<f64, MetricsError> {
        if i < 2 || i > self.step {
            return Err(MetricsError::LayerIndex { layer: i, step: self.step });
        }
        assert_eq!(t.len(), i - 1, "rho_{i} takes {} arguments", i - 1);
        let mut buf = vec![0.0; self.step];
        buf[..i - 1].copy_from_slice(t);
        let value = self.profile.eval(&buf);
        if value >= 1.0 {
            return Err(MetricsError::Domain {
                layer: i,
                t: t.to_vec(),
                value,
            });
        }
        self.sup_below_one(&mut buf, i - 1)
    }

    /// `(t_1, …, t_{i−1}) ∈ T_i`.
    pub fn in_domain(&self, t: &[f64]) -> bool {
        let mut buf = vec![0.0; self.step];
        buf[..t.len()].copy_from_slice(t);
        self.profile.eval(&buf) < 1.0
    }

    fn sup_below_one(&self, buf: &mut [f64], k: usize) -> Result<f64, MetricsError> {
        let mut f = |s: f64| {
            buf[k] = s;
            self.profile.eval(buf)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) < 1.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(MetricsError::Profile(format!("not coercive in t{}", k + 1)));
            }
        }
        while hi - lo > self.tol * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Worst observed violation of one axiom with its witness points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Worst {
    /// Amount by which the axiom fails, relative to its tolerance scale.
    pub excess: f64,
    pub witness: Vec<Vec<f64>>,
    pub detail: String,
}

impl Worst {
    fn offer(&mut self, excess: f64, witness: impl FnOnce() -> (Vec<Vec<f64>>, String)) {
        if excess > self.excess {
            let (w, d) = witness();
            self.excess = excess;
            self.witness = w;
            self.detail = d;
        }
    }

    fn merge(&mut self, other: Worst) {
        if other.excess > self.excess {
            *self = other;
        }
    }

    pub fn failed(&self) -> bool {
        self.excess > 0.0
    }
}

/// Outcome of [`check_axioms`]. Each `excess` is the amount by which the
/// inequality fails beyond a tolerance of `1e-9·(1 + scale)`; zero means
/// no violation was seen.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub distance: String,
    pub n_samples: usize,
    pub seed: u64,
    pub triangle: Worst,
    pub homogeneity: Worst,
    pub symmetry: Worst,
    pub monotonicity: Option<Worst>,
    pub coercivity: Option<Worst>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        !self.triangle.failed()
            && !self.homogeneity.failed()
            && !self.symmetry.failed()
            && !self.monotonicity.as_ref().is_some_and(Worst::failed)
            && !self.coercivity.as_ref().is_some_and(Worst::failed)
    }

    /// Named axioms in a fixed order.
    pub fn axioms(&self) -> Vec<(&'static str, &Worst)> {
        let mut out = vec![("triangle", &self.triangle), ("homogeneity", &self.homogeneity), ("symmetry", &self.symmetry)];
        if let Some(m) = &self.monotonicity {
            out.push(("monotonicity", m));
        }
        if let Some(c) = &self.coercivity {
            out.push(("coercivity", c));
        }
        out
    }

    pub fn summary(&self) -> String {
        match self.axioms().into_iter().find(|(_, w)| w.failed()) {
            None => format!("all axioms hold on {} samples (seed {})", self.n_samples, self.seed),
            Some((name, w)) => format!("{name} violated by {:.3e}: {}", w.excess, w.detail),
        }
    }
}

const AXIOM_TOL: f64 = 1e-9;

#[derive(Default)]
struct Partial {
    triangle: Worst,
    homogeneity: Worst,
    symmetry: Worst,
    monotonicity: Worst,
    coercivity: Worst,
}

impl Partial {
    fn merge(&mut self, o: Partial) {
        self.triangle.merge(o.triangle);
        self.homogeneity.merge(o.homogeneity);
        self.symmetry.merge(o.symmetry);
        self.monotonicity.merge(o.monotonicity);
        self.coercivity.merge(o.coercivity);
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// `‖ab‖ ≤ ‖a‖ + ‖b‖`, the triangle inequality for `(a⁻¹, 0, b)`.
fn triangle_pair(d: &DistanceSpec, a: &[f64], b: &[f64], worst: &mut Worst) {
    let g = d.group();
    let (na, nb) = (d.norm(a), d.norm(b));
    let nab = d.norm(&g.multiply(a, b).expect("group point"));
    let excess = nab - na - nb - AXIOM_TOL * (1.0 + na + nb);
    worst.offer(excess, || {
        (
            vec![a.to_vec(), b.to_vec()],
            format!("x = {}, y = {}: ‖xy‖ = {nab:.9} > ‖x‖ + ‖y‖ = {:.9}", fmt_point(a), fmt_point(b), na + nb),
        )
    });
}

/// Randomized check of the distance axioms on `n_samples` triples from the
/// unit box, preceded by structured probes `(±e_i, ±e_j)`. Deterministic
/// for a fixed seed regardless of thread count.
pub fn check_axioms(d: &DistanceSpec, n_samples: usize, seed: u64) -> AxiomReport {
    let g = d.group().clone();
    let q = g.dimension();
    let mut total = Partial::default();

    // structured probes: signed basis pairs
    for i in 0..q {
        for j in 0..q {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut a = vec![0.0; q];
                let mut b = vec![0.0; q];
                a[i] = si;
                b[j] = sj;
                triangle_pair(d, &a, &b, &mut total.triangle);
            }
        }
    }

    let profile = d.profile().cloned();
    let step = g.step();
    let partials: Vec<Partial> = (0..rng::blocks(n_samples))
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, rng::op::AXIOMS, b as u64);
            let mut part = Partial::default();
            for _ in 0..rng::block_len(n_samples, b) {
                let x: Vec<f64> = (0..q).map(|_| r.gen_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..q).map(|_| r.gen_range(-1.0..1.0)).collect();
                let z: Vec<f64> = (0..q).map(|_| r.gen_range(-1.0..1.0)).collect();
                let s: f64 = 10f64.powf(r.gen_range(-1.0..1.0));
                let (dxy, dyz, dxz) = (d.distance(&x, &y), d.distance(&y, &z), d.distance(&x, &z));
                let excess = dxz - dxy - dyz - AXIOM_TOL * (1.0 + dxy + dyz);
                part.triangle.offer(excess, || {
                    (
                        vec![x.clone(), y.clone(), z.clone()],
                        format!("x = {}, y = {}, z = {}: d(x,z) = {dxz:.9} > {:.9}", fmt_point(&x), fmt_point(&y), fmt_point(&z), dxy + dyz),
                    )
                });
                triangle_pair(d, &x, &y, &mut part.triangle);

                let dyx = d.distance(&y, &x);
                let excess = (dxy - dyx).abs() - AXIOM_TOL * (1.0 + dxy);
                part.symmetry.offer(excess, || {
                    (vec![x.clone(), y.clone()], format!("d(x,y) = {dxy:.12}, d(y,x) = {dyx:.12}"))
                });

                let (xs, ys) = (g.dilate(s, &x).expect("s > 0"), g.dilate(s, &y).expect("s > 0"));
                let dsc = d.distance(&xs, &ys);
                let excess = (dsc - s * dxy).abs() - AXIOM_TOL * (1.0 + s * dxy);
                part.homogeneity.offer(excess, || {
                    (vec![x.clone(), y.clone()], format!("r = {s:.6}: d(δx,δy) = {dsc:.12}, r·d(x,y) = {:.12}", s * dxy))
                });

                if let Some(p) = &profile {
                    let t: Vec<f64> = (0..step).map(|_| r.gen_range(0.0..2.0)).collect();
                    if let Some(drop) = monotonicity_violation(p, &t, &mut r) {
                        part.monotonicity.offer(drop, || (vec![t.clone()], format!("φ decreases near t = {}", fmt_point(&t))));
                    }
                    if let Some(dir) = coercivity_violation(p, &mut r, step) {
                        part.coercivity.offer(1.0, || (vec![dir.clone()], format!("φ stays below 1 along {}", fmt_point(&dir))));
                    }
                }
            }
            part
        })
        .collect();
    for p in partials {
        total.merge(p);
    }
    let multiradial = profile.is_some();
    AxiomReport {
        distance: d.name(),
        n_samples,
        seed,
        triangle: total.triangle,
        homogeneity: total.homogeneity,
        symmetry: total.symmetry,
        monotonicity: multiradial.then_some(total.monotonicity),
        coercivity: multiradial.then_some(total.coercivity),
    }
}

/// Sampled convexity of the unit ball: midpoints of pairs of boundary
/// points must lie in the ball. Returns the worst excess `‖m‖ − 1`.
pub fn check_convexity(d: &DistanceSpec, n_samples: usize, seed: u64) -> Worst {
    let g = d.group().clone();
    let q = g.dimension();
    let to_sphere = |x: Vec<f64>| -> Option<Vec<f64>> {
        let n = d.norm(&x);
        (n > 0.0 && n.is_finite()).then(|| g.dilate(1.0 / n, &x).expect("positive").into_inner())
    };
    let partials: Vec<Worst> = (0..rng::blocks(n_samples))
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, rng::op::CONVEXITY, b as u64);
            let mut worst = Worst::default();
            for _ in 0..rng::block_len(n_samples, b) {
                let x: Vec<f64> = (0..q).map(|_| r.gen_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..q).map(|_| r.gen_range(-1.0..1.0)).collect();
                let (Some(x), Some(y)) = (to_sphere(x), to_sphere(y)) else { continue };
                let lambda: f64 = r.gen_range(0.0..1.0);
                let m: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
                let nm = d.norm(&m);
                worst.offer(nm - 1.0 - AXIOM_TOL, || {
                    (vec![x.clone(), y.clone()], format!("convex combination with weight {lambda:.4} has norm {nm:.9}"))
                });
            }
            worst
        })
        .collect();
    let mut total = Worst::default();
    for w in partials {
        total.merge(w);
    }
    total
}

/// Largest dyadic value `2^k`, `k ∈ [k_min, k_max]`, for which the family
/// passes the axiom sampler, or `None` if none does.
pub fn dyadic_search<F>(make: F, k_min: i32, k_max: i32, n_samples: usize, seed: u64) -> Option<f64>
where
    F: Fn(f64) -> Result<DistanceSpec, MetricsError>,
{
    (k_min..=k_max).rev().map(|k| 2f64.powi(k)).find(|&value| match make(value) {
        Ok(d) => check_axioms(&d, n_samples, seed).passed(),
        Err(_) => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn h1() -> Arc<Group> {
        Arc::new(presets::heisenberg1())
    }

    #[test]
    fn dinf_norm_and_balls() {
        let d = DistanceSpec::dinf(h1(), 2.0).unwrap();
        assert_relative_eq!(d.norm(&[0.0, 0.0, 1.0]), 2.0, max_relative = 1e-14);
        assert_eq!(d.norm(&[0.0; 3]), 0.0);
        assert_relative_eq!(d.distance(&[0.0; 3], &[1.0, 1.0, 0.5]), 2f64.sqrt(), max_relative = 1e-14);
        assert!(d.ball_contains(&[0.0; 3], 1.0, &[0.0, 0.0, 0.25]));
        assert!(!d.ball_contains(&[0.0; 3], 1.0, &[0.0, 0.0, 0.26]));
        assert!(d.ball_contains(&[0.3, 0.1, 0.2], 1.0, &[0.3, 0.1, 0.2]));
        // boundary point is in the closed ball
        assert!(d.ball_contains(&[0.0; 3], 1.0, &[1.0, 0.0, 0.0]));
    }

    #[test]
    fn rho_functions() {
        let d = DistanceSpec::dinf(h1(), 2.0).unwrap();
        let rho = RhoTable::for_distance(&d).unwrap();
        assert_relative_eq!(rho.rho1().unwrap(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(rho.rho(2, &[0.5]).unwrap(), 0.25, epsilon = 1e-10);
        assert_relative_eq!(rho.rho(2, &[0.99]).unwrap(), 0.25, epsilon = 1e-10);
        assert!(matches!(rho.rho(2, &[1.0]), Err(MetricsError::Domain { layer: 2, .. })));

        let sum = Profile::Expr(Expr::parse_profile("t1 + t2", 2).unwrap());
        let rho = RhoTable::new(&sum, 2);
        assert_relative_eq!(rho.rho1().unwrap(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(rho.rho(2, &[0.3]).unwrap(), 0.7, epsilon = 1e-10);
        let sq = Profile::Expr(Expr::parse_profile("t1^2", 1).unwrap());
        assert_relative_eq!(RhoTable::new(&sq, 1).rho1().unwrap(), 1.0, epsilon = 1e-10);
        let shifted = Profile::Expr(Expr::parse_profile("t1 + 1", 1).unwrap());
        assert!(RhoTable::new(&shifted, 1).rho1().is_err());
    }

    #[test]
    fn profile_validation() {
        let g = h1();
        assert!(matches!(DistanceSpec::from_profile_expr(g.clone(), "t1 + 1"), Err(MetricsError::Profile(_))));
        assert!(matches!(DistanceSpec::from_profile_expr(g.clone(), "min(t1, t2)"), Err(MetricsError::Profile(_))));
        assert!(DistanceSpec::from_profile_expr(g.clone(), "max(t1, 2*t2^0.5)").is_ok());
        assert!(matches!(DistanceSpec::euclidean(g), Err(MetricsError::WrongGroup { .. })));
    }

    #[test]
    fn dinf_with_large_constant_is_rejected() {
        let d = DistanceSpec::dinf(h1(), 10.0).unwrap();
        let report = check_axioms(&d, 1000, 1);
        assert!(!report.passed());
        assert!(report.triangle.excess > 5.0);
        let ok = DistanceSpec::dinf(h1(), 1.0).unwrap();
        assert!(check_axioms(&ok, 2000, 1).passed());
    }

    #[test]
    fn euclidean_passes() {
        let g = Arc::new(presets::abelian(3).unwrap());
        let d = DistanceSpec::euclidean(g).unwrap();
        assert_relative_eq!(d.norm(&[3.0, 4.0, 0.0]), 5.0, max_relative = 1e-14);
        assert!(check_axioms(&d, 2000, 3).passed());
        assert!(!check_convexity(&d, 2000, 3).failed());
    }
}
