//! Surfaces in the first Heisenberg group: the degree-weighted surface
//! measure, homogeneous tangents, density blow-up curves and the area of
//! level sets as intrinsic graphs.
//!
//! Frame convention (tied to `[e1, e2] = e3`): `X = ∂x − (y/2)∂t`,
//! `Y = ∂y + (x/2)∂t`, `T = ∂t`. Euclidean ℝ³ is accepted as a flat
//! reference ambient where the frame is the coordinate frame.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::factor::{spherical_factor, FactorError, FactorOptions, FactorReport};
use crate::metrics::DistanceSpec;
use crate::quadrature::{gl32, smooth_integral, Tolerance};
use crate::subgroups::{HomSubspace, SubgroupError};
use crate::{presets, Group};

/// Central-difference step for partial derivatives.
pub const FD_STEP: f64 = 1e-6;
/// Smallest admissible area element of the parametrization.
pub const DEGENERATE_TOL: f64 = 1e-8;
/// Degree-3 density at or below which a point is characteristic.
pub const CHARACTERISTIC_TOL: f64 = 1e-10;
/// Default half-width of the `s` window searched along V-cosets.
pub const DEFAULT_WINDOW: f64 = 8.0;
/// Default scan resolution per parameter axis in `mu_measure`.
pub const DEFAULT_SCAN: usize = 64;
const ROOT_SCAN: usize = 64;
const CHECK_GRID: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Subgroup(#[from] SubgroupError),
    #[error("surfaces live in heisenberg1 (or flat abelian:3)")]
    WrongGroup,
    #[error("surface and distance live on different groups")]
    GroupMismatch,
    #[error("parameter domain [{0:?}] is empty or not finite")]
    BadDomain([[f64; 2]; 2]),
    #[error("partials are dependent at (u, v) = ({u}, {v})")]
    Degenerate { u: f64, v: f64 },
    #[error("level set has no root with |s| <= {window} on the coset through grid point (a, b) = ({a}, {b})")]
    NoRoot { a: f64, b: f64, window: f64 },
    #[error("J_V f = |Xf| vanishes at (a, b) = ({a}, {b})")]
    Hypothesis { a: f64, b: f64 },
    #[error("radii must be positive and strictly decreasing")]
    BadRadii,
    #[error("need at least 3 radii for the extrapolation, got {0}")]
    TooFewRadii(usize),
    #[error("ball of radius {0} reaches the edge of the parameter domain")]
    Truncated(f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ambient {
    Heisenberg,
    Euclidean,
}

impl Ambient {
    pub fn of(group: &Group) -> Result<Self, BlowupError> {
        let sc = group.structure_constants();
        if *sc == *presets::heisenberg1::<f64>().structure_constants() {
            Ok(Ambient::Heisenberg)
        } else if presets::abelian::<f64>(3).is_ok_and(|a| *sc == *a.structure_constants()) {
            Ok(Ambient::Euclidean)
        } else {
            Err(BlowupError::WrongGroup)
        }
    }

    pub fn group(&self) -> Group {
        match self {
            Ambient::Heisenberg => presets::heisenberg1(),
            Ambient::Euclidean => presets::abelian(3).expect("valid preset"),
        }
    }

    /// Homogeneous dimension of a surface at its top degree.
    pub fn top_degree(&self) -> usize {
        match self {
            Ambient::Heisenberg => 3,
            Ambient::Euclidean => 2,
        }
    }

    /// Coordinates of the tangent vector `dp` at `p` in the frame.
    fn frame(&self, p: [f64; 3], dp: [f64; 3]) -> [f64; 3] {
        match self {
            Ambient::Heisenberg => [dp[0], dp[1], dp[2] + 0.5 * (dp[0] * p[1] - dp[1] * p[0])],
            Ambient::Euclidean => dp,
        }
    }

    /// `w·(s e1)` for `w = (0, a, b)`.
    fn coset_point(&self, s: f64, a: f64, b: f64) -> [f64; 3] {
        match self {
            Ambient::Heisenberg => [s, a, b - 0.5 * a * s],
            Ambient::Euclidean => [s, a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// `(u, v) ↦ (x, y, t)`.
    Param { x: Expr, y: Expr, t: Expr },
    /// `{f = 0}` as a graph over `W = span{e2, e3}` along `V = span{e1}`;
    /// parameters are `w = (0, a, b)`.
    LevelSet { f: Expr, window: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePatch {
    surface: Surface,
    domain: [[f64; 2]; 2],
    ambient: Ambient,
}

impl SurfacePatch {
    /// Parametrized patch with expressions in `u`, `v`.
    pub fn param(group: &Group, x: &str, y: &str, t: &str, domain: [[f64; 2]; 2]) -> Result<Self, BlowupError> {
        let vars = ["u", "v"];
        let surface = Surface::Param {
            x: Expr::parse(x, &vars)?,
            y: Expr::parse(y, &vars)?,
            t: Expr::parse(t, &vars)?,
        };
        Self::new(group, surface, domain)
    }

    /// Level set `{f = 0}` of an expression in `x`, `y`, `t`.
    pub fn level_set(group: &Group, f: &str, domain: [[f64; 2]; 2]) -> Result<Self, BlowupError> {
        let surface = Surface::LevelSet {
            f: Expr::parse(f, &["x", "y", "t"])?,
            window: DEFAULT_WINDOW,
        };
        Self::new(group, surface, domain)
    }

    /// Checks the domain and the independence of the partials on a grid.
    pub fn new(group: &Group, surface: Surface, domain: [[f64; 2]; 2]) -> Result<Self, BlowupError> {
        let ambient = Ambient::of(group)?;
        if domain.iter().any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(BlowupError::BadDomain(domain));
        }
        let patch = Self { surface, domain, ambient };
        for i in 0..=CHECK_GRID {
            for j in 0..=CHECK_GRID {
                let u = lerp(domain[0], i as f64 / CHECK_GRID as f64);
                let v = lerp(domain[1], j as f64 / CHECK_GRID as f64);
                patch.area_bivector([u, v])?;
            }
        }
        Ok(patch)
    }

    pub fn surface(&self) -> &Surface {
        &self.surface
    }

    pub fn domain(&self) -> [[f64; 2]; 2] {
        self.domain
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    pub fn is_level_set(&self) -> bool {
        matches!(self.surface, Surface::LevelSet { .. })
    }

    pub fn point(&self, u: [f64; 2]) -> Result<[f64; 3], BlowupError> {
        match &self.surface {
            Surface::Param { x, y, t } => Ok([x.eval(&u), y.eval(&u), t.eval(&u)]),
            Surface::LevelSet { f, window } => {
                let [a, b] = u;
                let s = self.coset_root(f, *window, a, b)?;
                Ok(self.ambient.coset_point(s, a, b))
            }
        }
    }

    /// Root of `s ↦ f(w·(s e1))` in the window, taking the sign change
    /// nearest to `s = 0`.
    fn coset_root(&self, f: &Expr, window: f64, a: f64, b: f64) -> Result<f64, BlowupError> {
        let g = |s: f64| f.eval(&self.ambient.coset_point(s, a, b));
        let xs: Vec<f64> = (0..=ROOT_SCAN).map(|k| -window + 2.0 * window * k as f64 / ROOT_SCAN as f64).collect();
        let gs: Vec<f64> = xs.iter().map(|&s| g(s)).collect();
        let bracket = (0..ROOT_SCAN)
            .filter(|&k| gs[k] == 0.0 || gs[k].signum() != gs[k + 1].signum())
            .min_by(|&k, &l| {
                let dk = xs[k].abs().min(xs[k + 1].abs());
                let dl = xs[l].abs().min(xs[l + 1].abs());
                dk.total_cmp(&dl)
            })
            .ok_or(BlowupError::NoRoot { a, b, window })?;
        if gs[bracket] == 0.0 {
            return Ok(xs[bracket]);
        }
        let (mut lo, mut hi) = (xs[bracket], xs[bracket + 1]);
        let lo_sign = gs[bracket].signum();
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Ok(mid);
            }
            let gm = g(mid);
            if gm == 0.0 {
                return Ok(mid);
            }
            if gm.signum() == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    /// Central-difference partials `(∂_u Φ, ∂_v Φ)`.
    pub fn partials(&self, u: [f64; 2]) -> Result<([f64; 3], [f64; 3]), BlowupError> {
        let h = FD_STEP;
        let diff = |e: [f64; 2]| -> Result<[f64; 3], BlowupError> {
            let p = self.point([u[0] + h * e[0], u[1] + h * e[1]])?;
            let m = self.point([u[0] - h * e[0], u[1] - h * e[1]])?;
            Ok([0, 1, 2].map(|k| (p[k] - m[k]) / (2.0 * h)))
        };
        Ok((diff([1.0, 0.0])?, diff([0.0, 1.0])?))
    }

    /// Frame components `(XY, XT, YT)` of `∂_u Φ ∧ ∂_v Φ`; their norm is
    /// the Riemannian area element.
    fn area_bivector(&self, u: [f64; 2]) -> Result<[f64; 3], BlowupError> {
        let p = self.point(u)?;
        let (du, dv) = self.partials(u)?;
        let a = self.ambient.frame(p, du);
        let b = self.ambient.frame(p, dv);
        let w = [a[0] * b[1] - a[1] * b[0], a[0] * b[2] - a[2] * b[0], a[1] * b[2] - a[2] * b[1]];
        if norm3(w) <= DEGENERATE_TOL {
            return Err(BlowupError::Degenerate { u: u[0], v: u[1] });
        }
        Ok(w)
    }

    /// Density of the degree-weighted measure w.r.t. `du dv`: `‖τ_{Σ,3}‖`
    /// times the area element in the Heisenberg group, the plain area
    /// element in ℝ³.
    fn measure_density(&self, u: [f64; 2]) -> Result<f64, BlowupError> {
        let w = self.area_bivector(u)?;
        Ok(match self.ambient {
            Ambient::Heisenberg => w[1].hypot(w[2]),
            Ambient::Euclidean => norm3(w),
        })
    }
}

fn lerp([lo, hi]: [f64; 2], s: f64) -> f64 {
    lo + (hi - lo) * s
}

fn norm3(w: [f64; 3]) -> f64 {
    (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt()
}

/// Unit tangent 2-vector `(c_XY, c_XT, c_YT)` at parameter `u`.
pub fn tangent_bivector_components(patch: &SurfacePatch, u: [f64; 2]) -> Result<[f64; 3], BlowupError> {
    let w = patch.area_bivector(u)?;
    let n = norm3(w);
    Ok(w.map(|c| c / n))
}

/// `‖τ_{Σ,3}‖ = √(c_XT² + c_YT²)` of a unit tangent 2-vector.
pub fn degree3_density(c: [f64; 3]) -> f64 {
    c[1].hypot(c[2])
}

#[derive(Debug, Clone)]
pub struct TangentReport {
    pub param: [f64; 2],
    pub point: [f64; 3],
    pub components: [f64; 3],
    pub density: f64,
    /// Pointwise degree: 3 or 2 in the Heisenberg group, 2 in ℝ³.
    pub degree: usize,
    /// Homogeneous tangent; absent at characteristic points.
    pub tangent: Option<HomSubspace>,
}

/// Pointwise degree and homogeneous tangent `A_pΣ`. At a degree-3 point
/// of the Heisenberg group `A_pΣ = span{h, e3}`, where `h` spans the
/// horizontal part of the tangent plane.
pub fn homogeneous_tangent(patch: &SurfacePatch, u: [f64; 2]) -> Result<TangentReport, BlowupError> {
    let c = tangent_bivector_components(patch, u)?;
    let point = patch.point(u)?;
    let group = Arc::new(patch.ambient.group());
    let (degree, density, tangent) = match patch.ambient {
        Ambient::Heisenberg => {
            let density = degree3_density(c);
            if density > CHARACTERISTIC_TOL {
                // T-free combination of the two frame vectors has XY-plane
                // direction (c_XT, c_YT)
                let h = DMatrix::from_column_slice(2, 1, &[c[1] / density, c[2] / density]);
                let vertical = DMatrix::from_element(1, 1, 1.0);
                (3, density, Some(HomSubspace::from_layer_spans(group, vec![h, vertical])?))
            } else {
                (2, density, None)
            }
        }
        Ambient::Euclidean => {
            let (du, dv) = patch.partials(u)?;
            let span = DMatrix::from_iterator(3, 2, du.into_iter().chain(dv));
            (2, 1.0, Some(HomSubspace::from_layer_spans(group, vec![span])?))
        }
    };
    Ok(TangentReport {
        param: u,
        point,
        components: c,
        density,
        degree,
        tangent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuMeasure {
    pub value: f64,
    /// Difference from a run at a 100x looser tolerance.
    pub error: f64,
    /// The ball reaches the edge of the parameter domain.
    pub truncated: bool,
}

const MU_TOL: Tolerance = Tolerance {
    abs: 1e-15,
    rel: 1e-8,
    max_depth: 16,
};
const MU_TOL_COARSE: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 1e-6,
    max_depth: 16,
};

/// Integrals over `{u : ball_contains(center, r, Φ(u))}`. Each slice of
/// the parameter set is located by scanning a continuous margin, refining
/// its peak and bisecting its roots, so narrow slices are not lost.
struct BallSlicer<'a> {
    patch: &'a SurfacePatch,
    d: &'a DistanceSpec,
    center_inv: Vec<f64>,
    r: f64,
    scan: usize,
    error: RefCell<Option<BlowupError>>,
    truncated: RefCell<bool>,
}

impl BallSlicer<'_> {
    fn record<T: Default>(&self, res: Result<T, BlowupError>) -> T {
        res.unwrap_or_else(|e| {
            self.error.borrow_mut().get_or_insert(e);
            T::default()
        })
    }

    /// `r − d(center, Φ(u, v))`.
    fn margin(&self, u: f64, v: f64) -> f64 {
        let Some(p) = self.record(self.patch.point([u, v]).map(Some)) else {
            return -1.0;
        };
        let diff = self.d.group().multiply(&self.center_inv, &p).expect("group point");
        self.r - self.d.norm(&diff)
    }

    fn slice(&self, u: f64) -> Support {
        let [v0, v1] = self.patch.domain[1];
        support(v0, v1, self.scan, &|v| self.margin(u, v))
    }

    fn inner(&self, u: f64, tol: Tolerance) -> f64 {
        let s = self.slice(u);
        if s.touches_edge {
            *self.truncated.borrow_mut() = true;
        }
        s.pieces
            .iter()
            .map(|&(a, b)| smooth_integral(a, b, tol, &|v| self.record(self.patch.measure_density([u, v]))))
            .sum()
    }

    fn measure(&self, tol: Tolerance, inner_tol: Tolerance) -> f64 {
        let [u0, u1] = self.patch.domain[0];
        let outer = support(u0, u1, self.scan, &|u| self.slice(u).peak);
        if outer.touches_edge {
            *self.truncated.borrow_mut() = true;
        }
        outer
            .pieces
            .iter()
            .map(|&(a, b)| smooth_integral(a, b, tol, &|u| self.inner(u, inner_tol)))
            .sum()
    }
}

/// Parts of `{m > 0}` in an interval.
struct Support {
    pieces: Vec<(f64, f64)>,
    touches_edge: bool,
    /// Largest margin found.
    peak: f64,
}

fn support(a: f64, b: f64, n: usize, m: &dyn Fn(f64) -> f64) -> Support {
    let xs: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
    let ms: Vec<f64> = xs.iter().map(|&x| m(x)).collect();
    let best = (0..=n).max_by(|&i, &j| ms[i].total_cmp(&ms[j])).expect("nonempty scan");
    let mut pieces = Vec::new();
    let mut touches_edge = ms[0] > 0.0 || ms[n] > 0.0;
    let mut k = 0;
    while k <= n {
        if ms[k] <= 0.0 {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && ms[k + 1] > 0.0 {
            k += 1;
        }
        let lo = if start == 0 { a } else { root(xs[start - 1], ms[start - 1], xs[start], ms[start], m) };
        let hi = if k == n { b } else { root(xs[k], ms[k], xs[k + 1], ms[k + 1], m) };
        pieces.push((lo, hi));
        k += 1;
    }
    if !pieces.is_empty() {
        return Support { pieces, touches_edge, peak: ms[best] };
    }
    // the scan saw nothing; look for a slice narrower than its spacing
    let (l, r) = (best.saturating_sub(1), (best + 1).min(n));
    let (px, pm) = golden_max(xs[l], xs[r], m);
    if pm > 0.0 {
        let lo = if l == best { a } else { root(xs[l], ms[l], px, pm, m) };
        let hi = if r == best { b } else { root(px, pm, xs[r], ms[r], m) };
        touches_edge |= lo == a || hi == b;
        pieces.push((lo, hi));
    }
    Support { pieces, touches_edge, peak: pm.max(ms[best]) }
}

/// Sign change of `m` between `x0` and `x1` (values `m0`, `m1` of opposite
/// sign) by the Illinois variant of regula falsi.
fn root(mut x0: f64, mut m0: f64, mut x1: f64, mut m1: f64, m: &dyn Fn(f64) -> f64) -> f64 {
    let mut side = 0;
    for _ in 0..200 {
        let mid = 0.5 * (x0 + x1);
        if mid == x0 || mid == x1 {
            break;
        }
        let mut x = (x0 * m1 - x1 * m0) / (m1 - m0);
        if !(x > x0.min(x1) && x < x0.max(x1)) {
            x = mid;
        }
        let mx = m(x);
        if (mx > 0.0) == (m1 > 0.0) {
            x1 = x;
            m1 = mx;
            if side == -1 {
                m0 *= 0.5;
            }
            side = -1;
        } else {
            x0 = x;
            m0 = mx;
            if side == 1 {
                m1 *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (x0 + x1)
}

fn golden_max(mut lo: f64, mut hi: f64, m: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (m(x1), m(x2));
    for _ in 0..48 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = m(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = m(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn check_ambient(patch: &SurfacePatch, d: &DistanceSpec) -> Result<(), BlowupError> {
    if Ambient::of(d.group()).ok() != Some(patch.ambient) {
        return Err(BlowupError::GroupMismatch);
    }
    Ok(())
}

/// `μ_Σ(𝔹(center, r))`: the degree-weighted measure of the part of the
/// patch inside the ball. `scan` grid points per axis locate the ball in
/// parameter space.
pub fn mu_measure(patch: &SurfacePatch, d: &DistanceSpec, center: &[f64], r: f64, scan: usize) -> Result<MuMeasure, BlowupError> {
    check_ambient(patch, d)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(BlowupError::BadRadii);
    }
    d.group().check_point(center).map_err(SubgroupError::from)?;
    let slicer = BallSlicer {
        patch,
        d,
        center_inv: d.group().inverse(center).into_inner(),
        r,
        scan: scan.max(8),
        error: RefCell::new(None),
        truncated: RefCell::new(false),
    };
    let value = slicer.measure(MU_TOL, Tolerance { rel: MU_TOL.rel * 1e-2, ..MU_TOL });
    let coarse = slicer.measure(MU_TOL_COARSE, MU_TOL);
    if let Some(e) = slicer.error.into_inner() {
        return Err(e);
    }
    Ok(MuMeasure {
        value,
        error: (value - coarse).abs(),
        truncated: slicer.truncated.into_inner(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub param: [f64; 2],
    pub point: [f64; 3],
    /// Exponent `N` in `μ(𝔹(p, r)) / r^N`.
    pub exponent: usize,
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub errors: Vec<f64>,
    pub truncated: Vec<bool>,
    /// Intercept of the linear fit in `r` over the three smallest radii.
    pub limit: f64,
    pub limit_error: f64,
}

impl DensityCurve {
    pub fn any_truncated(&self) -> bool {
        self.truncated.iter().any(|&t| t)
    }
}

/// Ratios `μ(𝔹(p, r)) / r^N` at `p = Φ(u)`, extrapolated to `r → 0`.
pub fn density_curve(patch: &SurfacePatch, d: &DistanceSpec, u: [f64; 2], radii: &[f64], scan: usize) -> Result<DensityCurve, BlowupError> {
    check_ambient(patch, d)?;
    if radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(BlowupError::BadRadii);
    }
    if radii.len() < 3 {
        return Err(BlowupError::TooFewRadii(radii.len()));
    }
    let tangent = homogeneous_tangent(patch, u)?;
    let n = patch.ambient.top_degree();
    if tangent.degree < n {
        return Err(BlowupError::Precondition(format!(
            "point {:?} has degree {} < {n}; the density is taken at top-degree points only",
            tangent.point, tangent.degree
        )));
    }
    let p = tangent.point;
    let measures = radii
        .par_iter()
        .map(|&r| mu_measure(patch, d, &p, r, scan))
        .collect::<Result<Vec<_>, _>>()?;
    let scale = |r: f64| r.powi(n as i32);
    let ratios: Vec<f64> = measures.iter().zip(radii).map(|(m, &r)| m.value / scale(r)).collect();
    let errors: Vec<f64> = measures.iter().zip(radii).map(|(m, &r)| m.error / scale(r)).collect();
    let k = radii.len();
    let (limit, fit_error) = linear_intercept(&radii[k - 3..], &ratios[k - 3..]);
    let quad_error = errors[k - 3..].iter().cloned().fold(0.0, f64::max);
    Ok(DensityCurve {
        param: u,
        point: p,
        exponent: n,
        radii: radii.to_vec(),
        ratios,
        errors,
        truncated: measures.iter().map(|m| m.truncated).collect(),
        limit,
        limit_error: fit_error.hypot(quad_error),
    })
}

/// Least-squares intercept and its standard error.
fn linear_intercept(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let s2 = ssr / (n - 2.0);
    (intercept, (s2 * sxx / det).sqrt())
}

#[derive(Debug, Clone)]
pub struct BlowupOptions {
    pub radii: Vec<f64>,
    pub scan: usize,
    /// Relative part of the tolerance.
    pub rel_tol: f64,
    /// Multiple of the β standard error added to the tolerance.
    pub sigmas: f64,
    pub factor: FactorOptions,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        Self {
            radii: vec![0.2, 0.1, 0.05],
            scan: DEFAULT_SCAN,
            rel_tol: 0.02,
            sigmas: 3.0,
            factor: FactorOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlowupReport {
    pub curve: DensityCurve,
    pub tangent: TangentReport,
    pub factor: FactorReport,
    /// `|limit − β|`.
    pub gap: f64,
    pub allowed: f64,
    pub passed: bool,
}

/// Compares the extrapolated density at `Φ(u)` with `β_d(A_pΣ)`.
pub fn blowup_check(patch: &SurfacePatch, d: &DistanceSpec, u: [f64; 2], opts: &BlowupOptions) -> Result<BlowupReport, BlowupError> {
    check_ambient(patch, d)?;
    let tangent = homogeneous_tangent(patch, u)?;
    let n = patch.ambient.top_degree();
    let Some(plane) = tangent.tangent.clone().filter(|_| tangent.degree == n) else {
        return Err(BlowupError::Precondition(format!(
            "characteristic point {:?} (degree {} < {n}): points of lower degree form a negligible set and are excluded",
            tangent.point, tangent.degree
        )));
    };
    let curve = density_curve(patch, d, u, &opts.radii, opts.scan)?;
    if let Some(i) = curve.truncated.iter().position(|&t| t) {
        return Err(BlowupError::Truncated(curve.radii[i]));
    }
    let factor = spherical_factor(d, &plane, &opts.factor)?;
    let gap = (curve.limit - factor.beta).abs();
    let allowed = opts.rel_tol * factor.beta + opts.sigmas * factor.beta_error;
    Ok(BlowupReport {
        passed: gap <= allowed,
        curve,
        tangent,
        factor,
        gap,
        allowed,
    })
}

/// `|𝐕 ∧ 𝐖|` for `V = span{e1}`, `W = span{e2, e3}` with orthonormal bases.
const VW_WEDGE: f64 = 1.0;

/// Area of `{f = 0}` as the intrinsic graph over the region:
/// `|𝐕∧𝐖| ∫ J_H f / J_V f` with `J_H f = √((Xf)² + (Yf)²)` and
/// `J_V f = |Xf|` taken at `Φ(w) = w·φ(w)`. Tensor midpoint rule with
/// `n_grid` cells per axis.
pub fn graph_area_levelset(patch: &SurfacePatch, d: &DistanceSpec, n_grid: usize) -> Result<f64, BlowupError> {
    check_ambient(patch, d)?;
    let Surface::LevelSet { f, window } = &patch.surface else {
        return Err(BlowupError::Precondition("the graph area needs a level-set surface".into()));
    };
    if patch.ambient != Ambient::Heisenberg {
        return Err(BlowupError::WrongGroup);
    }
    if !d.is_multiradial() {
        return Err(BlowupError::Precondition(format!("{} is not multiradial", d.name())));
    }
    let n = n_grid.max(1);
    let [[a0, a1], [b0, b1]] = patch.domain;
    let (ha, hb) = ((a1 - a0) / n as f64, (b1 - b0) / n as f64);
    let h = FD_STEP;
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = a0 + (i as f64 + 0.5) * ha;
            let mut row = 0.0;
            for j in 0..n {
                let b = b0 + (j as f64 + 0.5) * hb;
                let s = patch.coset_root(f, *window, a, b)?;
                let p = patch.ambient.coset_point(s, a, b);
                let partial = |k: usize| {
                    let (mut hi, mut lo) = (p, p);
                    hi[k] += h;
                    lo[k] -= h;
                    (f.eval(&hi) - f.eval(&lo)) / (2.0 * h)
                };
                let (fx, fy, ft) = (partial(0), partial(1), partial(2));
                let xf = fx - 0.5 * p[1] * ft;
                let yf = fy + 0.5 * p[0] * ft;
                if xf.abs() <= 1e-12 {
                    return Err(BlowupError::Hypothesis { a, b });
                }
                row += xf.hypot(yf) / xf.abs();
            }
            Ok(row)
        })
        .collect::<Result<Vec<f64>, BlowupError>>()?;
    Ok(VW_WEDGE * rows.iter().sum::<f64>() * ha * hb)
}

/// `∫_Σ ‖τ_{Σ,3}‖ dσ` over the whole patch (area in ℝ³) by tensor
/// Gauss–Legendre on `panels × panels` sub-rectangles.
pub fn surface_measure(patch: &SurfacePatch, panels: usize) -> Result<f64, BlowupError> {
    let rule = gl32();
    let n = panels.max(1);
    let [[u0, u1], [v0, v1]] = patch.domain;
    let (hu, hv) = ((u1 - u0) / n as f64, (v1 - v0) / n as f64);
    let error = RefCell::new(None);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (ua, va) = (u0 + i as f64 * hu, v0 + j as f64 * hv);
            total += rule.integrate(ua, ua + hu, |u| {
                rule.integrate(va, va + hv, |v| {
                    patch.measure_density([u, v]).unwrap_or_else(|e| {
                        error.borrow_mut().get_or_insert(e);
                        0.0
                    })
                })
            });
        }
    }
    match error.into_inner() {
        Some(e) => Err(e),
        None => Ok(total),
    }
}
