//! Graded nilpotent Lie algebras and their groups in exponential
//! coordinates of the first kind.
//!
//! A group is given by its layer dimensions `dim H_1, …, dim H_ι` and a
//! sparse bracket tensor over the global, layer-adapted basis. Points are
//! coordinate vectors; the group law is the truncated BCH series, which is
//! exact for a nilpotent algebra of step `ι`.

use std::fmt;
use std::ops::{Deref, DerefMut, Range};

use thiserror::Error;

use crate::bch;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("bracket entry {entry} has index {index} outside 0..{q}")]
    IndexOutOfRange { entry: usize, index: usize, q: usize },
    #[error("layer dimensions must be nonempty and positive, got {0:?}")]
    BadLayers(Vec<usize>),
    #[error("step {0} exceeds the supported maximum of {max}", max = bch::MAX_DEPTH)]
    StepTooLarge(usize),
    #[error("structure constants are not a graded Lie algebra: {0}")]
    Invalid(ValidationReport),
    #[error("expected a point with {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("layer index {layer} outside 1..={step}")]
    LayerIndex { layer: usize, step: usize },
    #[error("dilation factor must be positive")]
    NonPositiveDilation,
}

/// One entry `[k, i, j, value]`: the coefficient of `e_k` in `[e_i, e_j]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketEntry<T> {
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub value: T,
}

/// Layered bracket tensor, as supplied by the user.
///
/// Entries may list only one of `(i, j)` / `(j, i)`; the missing one is
/// completed by antisymmetry. Listing both with inconsistent values is an
/// antisymmetry violation.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants<T> {
    layer_dims: Vec<usize>,
    entries: Vec<BracketEntry<T>>,
}

impl<T: Scalar> StructureConstants<T> {
    pub fn new(layer_dims: Vec<usize>, entries: Vec<BracketEntry<T>>) -> Result<Self, AlgebraError> {
        if layer_dims.is_empty() || layer_dims.contains(&0) {
            return Err(AlgebraError::BadLayers(layer_dims));
        }
        let q: usize = layer_dims.iter().sum();
        for (n, e) in entries.iter().enumerate() {
            for index in [e.k, e.i, e.j] {
                if index >= q {
                    return Err(AlgebraError::IndexOutOfRange { entry: n, index, q });
                }
            }
        }
        Ok(Self { layer_dims, entries })
    }

    /// Builds from `(k, i, j, value)` tuples.
    pub fn from_tuples(
        layer_dims: Vec<usize>,
        tuples: &[(usize, usize, usize, T)],
    ) -> Result<Self, AlgebraError> {
        let entries = tuples
            .iter()
            .map(|&(k, i, j, value)| BracketEntry { k, i, j, value })
            .collect();
        Self::new(layer_dims, entries)
    }

    pub fn step(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn dimension(&self) -> usize {
        self.layer_dims.iter().sum()
    }

    pub fn entries(&self) -> &[BracketEntry<T>] {
        &self.entries
    }

    /// Layer (1-based) of each global basis index.
    fn layer_of(&self) -> Vec<usize> {
        self.layer_dims
            .iter()
            .enumerate()
            .flat_map(|(l, &d)| std::iter::repeat_n(l + 1, d))
            .collect()
    }

    /// Dense antisymmetric tensor `c[(k * q + i) * q + j]` plus antisymmetry
    /// violations found while completing it.
    fn dense(&self) -> (Vec<T>, Vec<Violation>) {
        let q = self.dimension();
        let idx = |k: usize, i: usize, j: usize| (k * q + i) * q + j;
        let mut given = vec![T::zero(); q * q * q];
        let mut present = vec![false; q * q * q];
        for e in &self.entries {
            given[idx(e.k, e.i, e.j)] = given[idx(e.k, e.i, e.j)] + e.value;
            present[idx(e.k, e.i, e.j)] = true;
        }
        let mut violations = Vec::new();
        let mut c = vec![T::zero(); q * q * q];
        for k in 0..q {
            for i in 0..q {
                if present[idx(k, i, i)] && !given[idx(k, i, i)].is_negligible() {
                    violations.push(Violation::Antisymmetry { k, i, j: i });
                }
                for j in (i + 1)..q {
                    let (a, b) = (idx(k, i, j), idx(k, j, i));
                    let v = match (present[a], present[b]) {
                        (true, true) => {
                            if !(given[a] + given[b]).is_negligible() {
                                violations.push(Violation::Antisymmetry { k, i, j });
                            }
                            given[a]
                        }
                        (true, false) => given[a],
                        (false, true) => -given[b],
                        (false, false) => T::zero(),
                    };
                    c[a] = v;
                    c[b] = -v;
                }
            }
        }
        (c, violations)
    }
}

/// A single failed structural check.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `c[k][i][j] != -c[k][j][i]`.
    Antisymmetry { k: usize, i: usize, j: usize },
    /// `[e_i, e_j]` has a component on `e_k` outside `H_{a+b}`.
    Grading {
        k: usize,
        i: usize,
        j: usize,
        target_layer: usize,
        expected_layer: usize,
    },
    /// Jacobiator of `(e_i, e_j, e_l)` has component `value` on `e_k`.
    Jacobi {
        i: usize,
        j: usize,
        l: usize,
        k: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Antisymmetry { k, i, j } => {
                write!(f, "antisymmetry fails at c[{k}][{i}][{j}]")
            }
            Violation::Grading {
                k,
                i,
                j,
                target_layer,
                expected_layer,
            } => write!(
                f,
                "grading: [e{i}, e{j}] has a component on e{k} in layer {target_layer}, expected layer {expected_layer}"
            ),
            Violation::Jacobi { i, j, l, k, value } => {
                write!(f, "Jacobi fails for (e{i}, e{j}, e{l}): component {value} on e{k}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_grading_violation(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::Grading { .. }))
    }

    pub fn has_jacobi_violation(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::Jacobi { .. }))
    }

    pub fn has_antisymmetry_violation(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::Antisymmetry { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (n, v) in self.violations.iter().enumerate() {
            if n > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks antisymmetry, grading and the Jacobi identity on all basis
/// triples.
pub fn validate_grading<T: Scalar>(sc: &StructureConstants<T>) -> ValidationReport {
    let q = sc.dimension();
    let step = sc.step();
    let layer_of = sc.layer_of();
    let (c, mut violations) = sc.dense();
    let at = |k: usize, i: usize, j: usize| c[(k * q + i) * q + j];

    for i in 0..q {
        for j in (i + 1)..q {
            for k in 0..q {
                if at(k, i, j).is_negligible() {
                    continue;
                }
                let expected_layer = layer_of[i] + layer_of[j];
                if layer_of[k] != expected_layer {
                    violations.push(Violation::Grading {
                        k,
                        i,
                        j,
                        target_layer: layer_of[k],
                        expected_layer: expected_layer.min(step + 1),
                    });
                }
            }
        }
    }

    // [e_i,[e_j,e_l]] + [e_j,[e_l,e_i]] + [e_l,[e_i,e_j]]
    for i in 0..q {
        for j in (i + 1)..q {
            for l in (j + 1)..q {
                for k in 0..q {
                    let mut s = T::zero();
                    for m in 0..q {
                        s = s + at(m, j, l) * at(k, i, m)
                            + at(m, l, i) * at(k, j, m)
                            + at(m, i, j) * at(k, l, m);
                    }
                    if !s.is_negligible() {
                        violations.push(Violation::Jacobi {
                            i,
                            j,
                            l,
                            k,
                            value: s.to_f64(),
                        });
                    }
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Element of a graded group in exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point<T>(pub Vec<T>);

impl<T> Deref for Point<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for Point<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for Point<T> {
    fn from(v: Vec<T>) -> Self {
        Point(v)
    }
}

impl<T: Clone> From<&[T]> for Point<T> {
    fn from(v: &[T]) -> Self {
        Point(v.to_vec())
    }
}

impl<T> Point<T> {
    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
struct BracketTerm<T> {
    i: usize,
    j: usize,
    k: usize,
    c: T,
}

#[derive(Debug, Clone)]
struct BchTerm<T> {
    coefficient: T,
    letters: Vec<bch::Letter>,
}

/// Groups up to this dimension multiply without heap allocation.
const STACK_DIM: usize = 32;

/// Validated graded nilpotent group.
#[derive(Debug, Clone)]
pub struct GradedGroup<T> {
    sc: StructureConstants<T>,
    offsets: Vec<usize>,
    terms: Vec<BracketTerm<T>>,
    bch: Vec<BchTerm<T>>,
    hausdorff_dimension: usize,
}

impl<T: Scalar> GradedGroup<T> {
    pub fn new(sc: StructureConstants<T>) -> Result<Self, AlgebraError> {
        if sc.step() > bch::MAX_DEPTH {
            return Err(AlgebraError::StepTooLarge(sc.step()));
        }
        let report = validate_grading(&sc);
        if !report.is_ok() {
            return Err(AlgebraError::Invalid(report));
        }
        let q = sc.dimension();
        let (c, _) = sc.dense();
        let mut terms = Vec::new();
        for i in 0..q {
            for j in (i + 1)..q {
                for k in 0..q {
                    let v = c[(k * q + i) * q + j];
                    if v != T::zero() {
                        terms.push(BracketTerm { i, j, k, c: v });
                    }
                }
            }
        }
        let bch = if terms.is_empty() {
            Vec::new()
        } else {
            bch::words_up_to(sc.step())
                .map(|w| BchTerm {
                    coefficient: T::from_ratio(*w.coefficient.numer(), *w.coefficient.denom()),
                    letters: w.letters.clone(),
                })
                .collect()
        };
        let mut offsets = vec![0];
        for d in sc.layer_dims() {
            offsets.push(offsets.last().unwrap() + d);
        }
        let hausdorff_dimension = sc
            .layer_dims()
            .iter()
            .enumerate()
            .map(|(j, d)| (j + 1) * d)
            .sum();
        Ok(Self {
            sc,
            offsets,
            terms,
            bch,
            hausdorff_dimension,
        })
    }

    pub fn structure_constants(&self) -> &StructureConstants<T> {
        &self.sc
    }

    pub fn step(&self) -> usize {
        self.sc.step()
    }

    /// Topological dimension `q`.
    pub fn dimension(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `Q = Σ j · dim H_j`.
    pub fn hausdorff_dimension(&self) -> usize {
        self.hausdorff_dimension
    }

    pub fn layer_dims(&self) -> &[usize] {
        self.sc.layer_dims()
    }

    pub fn is_abelian(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coordinate range of layer `j` (1-based).
    pub fn layer_range(&self, j: usize) -> Range<usize> {
        self.offsets[j - 1]..self.offsets[j]
    }

    /// Layer (1-based) that holds coordinate `index`.
    pub fn layer_of_index(&self, index: usize) -> usize {
        self.offsets.iter().position(|&o| o > index).unwrap_or(self.offsets.len())
    }

    pub fn zero(&self) -> Point<T> {
        Point(vec![T::zero(); self.dimension()])
    }

    /// `e_index`.
    pub fn basis_vector(&self, index: usize) -> Point<T> {
        let mut p = self.zero();
        p[index] = T::one();
        p
    }

    pub fn check_point(&self, p: &[T]) -> Result<(), AlgebraError> {
        if p.len() != self.dimension() {
            return Err(AlgebraError::Dimension {
                expected: self.dimension(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Adds `[a, b]` to `out`.
    fn bracket_add(&self, a: &[T], b: &[T], scale: T, out: &mut [T]) {
        for t in &self.terms {
            let v = a[t.i] * b[t.j] - a[t.j] * b[t.i];
            out[t.k] = out[t.k] + scale * t.c * v;
        }
    }

    pub fn bracket(&self, a: &[T], b: &[T]) -> Result<Point<T>, AlgebraError> {
        self.check_point(a)?;
        self.check_point(b)?;
        let mut out = self.zero();
        self.bracket_add(a, b, T::one(), &mut out);
        Ok(out)
    }

    /// Group product written into `out`; `p`, `q` and `out` must have
    /// length `q`.
    pub fn multiply_into(&self, p: &[T], q: &[T], out: &mut [T]) {
        for ((o, a), b) in out.iter_mut().zip(p).zip(q) {
            *o = *a + *b;
        }
        if self.bch.is_empty() {
            return;
        }
        let n = self.dimension();
        if n <= STACK_DIM {
            let mut buf = [T::zero(); 3 * STACK_DIM];
            self.bch_correction(p, q, out, &mut buf[..3 * n]);
        } else {
            let mut buf = vec![T::zero(); 3 * n];
            self.bch_correction(p, q, out, &mut buf);
        }
    }

    /// Adds the bracket terms of the BCH series to `out`; `scratch` holds
    /// three vectors of length `q`.
    fn bch_correction(&self, p: &[T], q: &[T], out: &mut [T], scratch: &mut [T]) {
        let n = self.dimension();
        let (base, rest) = scratch.split_at_mut(n);
        let (mut acc, mut next) = rest.split_at_mut(n);
        // innermost bracket of every stored word is [X, Y]
        self.bracket_add(p, q, T::one(), base);
        for term in &self.bch {
            acc.copy_from_slice(base);
            for &letter in term.letters[..term.letters.len() - 2].iter().rev() {
                next.iter_mut().for_each(|x| *x = T::zero());
                let left = if letter { q } else { p };
                self.bracket_add(left, acc, T::one(), next);
                std::mem::swap(&mut acc, &mut next);
            }
            for (o, a) in out.iter_mut().zip(acc.iter()) {
                *o = *o + term.coefficient * *a;
            }
        }
    }

    pub fn multiply(&self, p: &[T], q: &[T]) -> Result<Point<T>, AlgebraError> {
        self.check_point(p)?;
        self.check_point(q)?;
        let mut out = self.zero();
        self.multiply_into(p, q, &mut out);
        Ok(out)
    }

    /// Inverse is negation in exponential coordinates.
    pub fn inverse(&self, p: &[T]) -> Point<T> {
        Point(p.iter().map(|&x| -x).collect())
    }

    /// `p^{-1} q`, the left-invariant difference.
    pub fn left_difference(&self, p: &[T], q: &[T]) -> Result<Point<T>, AlgebraError> {
        self.multiply(&self.inverse(p), q)
    }

    pub fn dilate(&self, r: T, p: &[T]) -> Result<Point<T>, AlgebraError> {
        if !(r > T::zero()) {
            return Err(AlgebraError::NonPositiveDilation);
        }
        self.check_point(p)?;
        let mut out = Point(p.to_vec());
        let mut scale = T::one();
        for j in 1..=self.step() {
            scale = scale * r;
            for x in &mut out[self.layer_range(j)] {
                *x = *x * scale;
            }
        }
        Ok(out)
    }

    /// The `H_j` block of `p`.
    pub fn project_layer(&self, j: usize, p: &[T]) -> Result<Vec<T>, AlgebraError> {
        if j == 0 || j > self.step() {
            return Err(AlgebraError::LayerIndex { layer: j, step: self.step() });
        }
        self.check_point(p)?;
        Ok(p[self.layer_range(j)].to_vec())
    }

    /// Embeds a layer block back into the group.
    pub fn embed_layer(&self, j: usize, block: &[T]) -> Result<Point<T>, AlgebraError> {
        if j == 0 || j > self.step() {
            return Err(AlgebraError::LayerIndex { layer: j, step: self.step() });
        }
        let range = self.layer_range(j);
        if block.len() != range.len() {
            return Err(AlgebraError::Dimension {
                expected: range.len(),
                got: block.len(),
            });
        }
        let mut p = self.zero();
        p[range].copy_from_slice(block);
        Ok(p)
    }
}

impl GradedGroup<f64> {
    /// Euclidean norms `|x_1|, …, |x_ι|` of the layer blocks.
    pub fn layer_norms(&self, p: &[f64]) -> Vec<f64> {
        (1..=self.step())
            .map(|j| p[self.layer_range(j)].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    pub fn layer_norms_into(&self, p: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = p[self.layer_range(j + 1)].iter().map(|x| x * x).sum::<f64>().sqrt();
        }
    }
}

/// Worst defect of one group-law identity over a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LawCheck {
    pub name: &'static str,
    /// Largest coordinate error seen.
    pub worst_error: f64,
    /// Largest error divided by its tolerance; the check passes at `<= 1`.
    pub worst_ratio: f64,
}

impl LawCheck {
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

/// Sampled associativity, inverse and dilation identities.
#[derive(Debug, Clone, PartialEq)]
pub struct LawReport {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub checks: Vec<LawCheck>,
}

impl LawReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(LawCheck::passed)
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn euclid(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Checks on `samples` random triples in the unit box:
/// `(pq)s = p(qs)` within `tol·(1+|p|+|q|+|s|)³`, `p·p⁻¹ = 0`,
/// `δ_r(pq) = δ_r p · δ_r q` and `δ_r δ_s = δ_{rs}`, with `r, s` drawn
/// from `[0.1, 3]`.
pub fn check_group_law(g: &GradedGroup<f64>, samples: usize, seed: u64, tol: f64) -> LawReport {
    use rand::Rng;
    let q = g.dimension();
    let mut rng = crate::rng::stream(seed, crate::rng::op::GROUP_LAW, 0);
    let mut worst = [(0.0f64, 0.0f64); 4];
    let mut note = |k: usize, err: f64, scale: f64| {
        worst[k].0 = worst[k].0.max(err);
        worst[k].1 = worst[k].1.max(err / (tol * scale));
    };
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mul = |a: &[f64], b: &[f64]| g.multiply(a, b).expect("dimension fixed").into_inner();
    let dil = |r: f64, a: &[f64]| g.dilate(r, a).expect("positive factor").into_inner();
    for _ in 0..samples {
        let (p, r, s) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let scale = (1.0 + euclid(&p) + euclid(&r) + euclid(&s)).powi(3);
        note(0, max_diff(&mul(&mul(&p, &r), &s), &mul(&p, &mul(&r, &s))), scale);
        let inv = g.inverse(&p).into_inner();
        note(1, mul(&p, &inv).iter().chain(&mul(&inv, &p)).fold(0.0, |m, x| m.max(x.abs())), 1.0 + euclid(&p));
        let (a, b): (f64, f64) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
        let lhs = dil(a, &mul(&p, &r));
        let rhs = mul(&dil(a, &p), &dil(a, &r));
        note(2, max_diff(&lhs, &rhs), (1.0 + a).powi(g.step() as i32) * scale);
        note(3, max_diff(&dil(a, &dil(b, &p)), &dil(a * b, &p)), (1.0 + a * b).powi(g.step() as i32));
    }
    let names = ["associativity", "inverse", "dilation_homomorphism", "dilation_semigroup"];
    LawReport {
        samples,
        seed,
        tolerance: tol,
        checks: names
            .iter()
            .zip(worst)
            .map(|(name, (worst_error, worst_ratio))| LawCheck { name, worst_error, worst_ratio })
            .collect(),
    }
}

/// Built-in groups. Bracket normalizations are fixed here and every
/// distance constant is checked against them by the axiom sampler.
pub mod presets {
    use super::*;

    /// First Heisenberg group, layers (2, 1), `[e1, e2] = e3`
    /// (0-based: `[e_0, e_1] = e_2`).
    pub fn heisenberg1<T: Scalar>() -> GradedGroup<T> {
        let sc = StructureConstants::from_tuples(vec![2, 1], &[(2, 0, 1, T::one())])
            .expect("valid preset");
        GradedGroup::new(sc).expect("valid preset")
    }

    /// `ℝ^n` with the zero bracket.
    pub fn abelian<T: Scalar>(n: usize) -> Result<GradedGroup<T>, AlgebraError> {
        GradedGroup::new(StructureConstants::new(vec![n], Vec::new())?)
    }

    /// Engel group, layers (2, 1, 1), `[e1, e2] = e3`, `[e1, e3] = e4`.
    pub fn engel<T: Scalar>() -> GradedGroup<T> {
        let sc = StructureConstants::from_tuples(
            vec![2, 1, 1],
            &[(2, 0, 1, T::one()), (3, 0, 2, T::one())],
        )
        .expect("valid preset");
        GradedGroup::new(sc).expect("valid preset")
    }

    /// Looks up `heisenberg1`, `engel` or `abelian:<n>`.
    pub fn by_name<T: Scalar>(name: &str) -> Option<GradedGroup<T>> {
        match name {
            "heisenberg1" => Some(heisenberg1()),
            "engel" => Some(engel()),
            _ => {
                let n = name.strip_prefix("abelian:")?.parse().ok()?;
                abelian(n).ok()
            }
        }
    }
}
