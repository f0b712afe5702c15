//! Gauss–Legendre rules and a panel-bisecting adaptive driver.

use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on [-1, 1]; nodes by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    /// Bisects panels until the whole-panel and two-half estimates agree.
    pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        tol: Tolerance,
        mut f: F,
    ) -> f64 {
        if a == b {
            return 0.0;
        }
        let whole = self.integrate(a, b, &mut f);
        self.refine(a, b, whole, tol, b - a, 0, &mut f)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        whole: f64,
        tol: Tolerance,
        span: f64,
        depth: usize,
        f: &mut F,
    ) -> f64 {
        let mid = 0.5 * (a + b);
        let left = self.integrate(a, mid, &mut *f);
        let right = self.integrate(mid, b, &mut *f);
        let sum = left + right;
        let allowed = (tol.abs * (b - a) / span).max(tol.rel * sum.abs());
        if (sum - whole).abs() <= allowed || depth >= tol.max_depth {
            return sum;
        }
        self.refine(a, mid, left, tol, span, depth + 1, f)
            + self.refine(mid, b, right, tol, span, depth + 1, f)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_depth: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-11,
            max_depth: 30,
        }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 32-point rule.
pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

/// Shared 16-point rule.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Volume of the Euclidean unit ball in `ℝ^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

/// `∫_a^b f` after the map `x = mid + half·(15u − 10u³ + 3u⁵)/8`, whose
/// derivative vanishes to second order at both ends; algebraic endpoint
/// singularities become smooth enough for the adaptive rule.
pub fn smooth_integral(a: f64, b: f64, tol: Tolerance, f: &dyn Fn(f64) -> f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    gl32().integrate_adaptive(-1.0, 1.0, tol, |u| {
        let u2 = u * u;
        let jac = half * 15.0 / 8.0 * (1.0 - u2) * (1.0 - u2);
        if jac == 0.0 {
            return 0.0;
        }
        jac * f(mid + half * u * (15.0 - 10.0 * u2 + 3.0 * u2 * u2) / 8.0)
    })
}
