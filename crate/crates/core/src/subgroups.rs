//! Homogeneous subspaces and subgroups, complementary pairs and the
//! polynomial splitting `x = v·w`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::algebra::AlgebraError;
use crate::Group;

/// Tolerance for bracket-closure tests.
pub const CLOSURE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubgroupError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("need at least one vector")]
    Empty,
    #[error("vectors are linearly dependent (rank {rank} < {count})")]
    Dependent { rank: usize, count: usize },
    #[error("span is not homogeneous: vector {index} mixes layers {layers:?}")]
    MixedLayers { index: usize, layers: Vec<usize> },
    #[error("layer {layer} basis has {rows} rows, layer dimension is {expected}")]
    LayerShape { layer: usize, rows: usize, expected: usize },
    #[error("subspaces belong to different groups")]
    GroupMismatch,
    #[error("{0} is not a normal subgroup")]
    NotNormal(&'static str),
    #[error("{0} is not a subgroup")]
    NotSubgroup(&'static str),
    #[error("subspaces are not complementary: dimensions {w} + {v} with joint rank {rank} in dimension {q}")]
    NotComplementary { w: usize, v: usize, rank: usize, q: usize },
    #[error("box must have {expected} nondegenerate sides")]
    DegenerateBox { expected: usize },
    #[error("grid of {0} points is too large")]
    GridTooLarge(u128),
    #[error("bad signature {signature:?}: {reason}")]
    Signature { signature: Vec<usize>, reason: String },
    #[error("unknown subspace preset `{0}`")]
    UnknownPreset(String),
}

/// Dimension signature `(n_1, …, n_ι)` of a homogeneous subspace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature(Vec<usize>);

impl Signature {
    /// Checks `n_j ≤ dim H_j` and `1 ≤ Σ n_j ≤ q − 1`.
    pub fn new(group: &Group, dims: Vec<usize>) -> Result<Self, SubgroupError> {
        let fail = |reason: String| SubgroupError::Signature {
            signature: dims.clone(),
            reason,
        };
        if dims.len() != group.step() {
            return Err(fail(format!("expected {} entries", group.step())));
        }
        for (j, (&n, &h)) in dims.iter().zip(group.layer_dims()).enumerate() {
            if n > h {
                return Err(fail(format!("layer {} has dimension {h}", j + 1)));
            }
        }
        let total: usize = dims.iter().sum();
        if total == 0 || total >= group.dimension() {
            return Err(fail(format!("total must lie in 1..={}", group.dimension() - 1)));
        }
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Homogeneous degree `Σ j·n_j`.
    pub fn degree(&self) -> usize {
        self.0.iter().enumerate().map(|(j, n)| (j + 1) * n).sum()
    }
}

impl std::fmt::Display for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join(";"))
    }
}

/// Homogeneous subspace `V = V_1 ⊕ … ⊕ V_ι` with `V_j ⊆ H_j`, stored as
/// one orthonormal basis matrix (`dim H_j × n_j`) per layer.
#[derive(Debug, Clone)]
pub struct HomSubspace {
    group: Arc<Group>,
    layer_bases: Vec<DMatrix<f64>>,
}

fn rank_tol(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    1e-10 * scale.max(1.0)
}

/// Orthonormal basis of the column span of `m` (left singular vectors).
fn column_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let tol = rank_tol(m);
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
    let mut basis = DMatrix::zeros(m.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let mut col = u.column(i).into_owned();
        // fix sign so the largest entry is positive
        let (imax, _) = col.iter().enumerate().fold((0, 0.0f64), |best, (r, x)| if x.abs() > best.1 + 1e-14 { (r, x.abs()) } else { best });
        if col[imax] < 0.0 {
            col = -col;
        }
        basis.set_column(c, &col);
    }
    basis
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let tol = rank_tol(m);
    m.clone().svd(false, false).singular_values.iter().filter(|&&s| s > tol).count()
}

impl HomSubspace {
    /// Builds from per-layer spanning sets (`dim H_j × k_j`), orthonormalizing each.
    pub fn from_layer_spans(group: Arc<Group>, spans: Vec<DMatrix<f64>>) -> Result<Self, SubgroupError> {
        if spans.len() != group.step() {
            return Err(SubgroupError::LayerShape {
                layer: spans.len(),
                rows: 0,
                expected: group.step(),
            });
        }
        let mut layer_bases = Vec::with_capacity(spans.len());
        for (j, s) in spans.iter().enumerate() {
            let h = group.layer_dims()[j];
            if s.nrows() != h {
                return Err(SubgroupError::LayerShape {
                    layer: j + 1,
                    rows: s.nrows(),
                    expected: h,
                });
            }
            layer_bases.push(column_space(s));
        }
        Ok(Self { group, layer_bases })
    }

    /// Sum of whole layers: `V_j = H_j` when `full[j]`, else `{0}`.
    pub fn from_layers(group: Arc<Group>, full: &[bool]) -> Result<Self, SubgroupError> {
        let spans = group
            .layer_dims()
            .iter()
            .zip(full)
            .map(|(&h, &f)| if f { DMatrix::identity(h, h) } else { DMatrix::zeros(h, 0) })
            .collect();
        Self::from_layer_spans(group, spans)
    }

    pub fn group(&self) -> &Arc<Group> {
        &self.group
    }

    /// Orthonormal basis of `V_j` (1-based layer).
    pub fn layer_basis(&self, j: usize) -> &DMatrix<f64> {
        &self.layer_bases[j - 1]
    }

    pub fn layer_bases(&self) -> &[DMatrix<f64>] {
        &self.layer_bases
    }

    pub fn signature(&self) -> Vec<usize> {
        self.layer_bases.iter().map(|b| b.ncols()).collect()
    }

    pub fn dim(&self) -> usize {
        self.layer_bases.iter().map(|b| b.ncols()).sum()
    }

    /// Homogeneous degree `Σ j·n_j`.
    pub fn degree(&self) -> usize {
        self.signature().iter().enumerate().map(|(j, n)| (j + 1) * n).sum()
    }

    /// Range of V-coordinates belonging to layer `j` (1-based).
    pub fn coord_range(&self, j: usize) -> std::ops::Range<usize> {
        let start: usize = self.layer_bases[..j - 1].iter().map(|b| b.ncols()).sum();
        start..start + self.layer_bases[j - 1].ncols()
    }

    /// Ambient point with V-coordinates `c` (layer by layer).
    pub fn embed(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.group.dimension()];
        self.embed_into(c, &mut out);
        out
    }

    pub fn embed_into(&self, c: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut k = 0;
        for (j, b) in self.layer_bases.iter().enumerate() {
            let range = self.group.layer_range(j + 1);
            for col in 0..b.ncols() {
                let a = c[k];
                k += 1;
                for (r, o) in out[range.clone()].iter_mut().enumerate() {
                    *o += a * b[(r, col)];
                }
            }
        }
    }

    /// V-coordinates of the orthogonal projection of `x` onto V.
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (j, b) in self.layer_bases.iter().enumerate() {
            let block = &x[self.group.layer_range(j + 1)];
            for col in 0..b.ncols() {
                out.push(b.column(col).iter().zip(block).map(|(a, x)| a * x).sum());
            }
        }
        out
    }

    pub fn project_orthogonal(&self, x: &[f64]) -> Vec<f64> {
        self.embed(&self.coords(x))
    }

    /// Distance from `x` to V relative to `max(1, |x|)`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let p = self.project_orthogonal(x);
        let r: f64 = x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let n: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        r / n.max(1.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.residual(x) <= CLOSURE_TOL
    }

    /// Global basis vectors, layer by layer.
    pub fn basis_vectors(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut c = vec![0.0; n];
                c[i] = 1.0;
                self.embed(&c)
            })
            .collect()
    }

    /// `[V, V] ⊆ V`.
    pub fn is_subgroup(&self) -> bool {
        let basis = self.basis_vectors();
        basis.iter().enumerate().all(|(a, x)| {
            basis[a + 1..]
                .iter()
                .all(|y| self.contains(&self.group.bracket(x, y).expect("same group")))
        })
    }

    /// `[𝔾, V] ⊆ V`.
    pub fn is_normal(&self) -> bool {
        let q = self.group.dimension();
        let basis = self.basis_vectors();
        (0..q).all(|i| {
            let e = self.group.basis_vector(i);
            basis
                .iter()
                .all(|y| self.contains(&self.group.bracket(&e, y).expect("same group")))
        })
    }
}

/// Builds a homogeneous subspace spanned by `vectors`, rejecting spans
/// that are not a direct sum of their layer pieces.
pub fn subspace_from_vectors(group: Arc<Group>, vectors: &[Vec<f64>]) -> Result<HomSubspace, SubgroupError> {
    if vectors.is_empty() {
        return Err(SubgroupError::Empty);
    }
    let q = group.dimension();
    for v in vectors {
        group.check_point(v)?;
    }
    let full = DMatrix::from_fn(q, vectors.len(), |r, c| vectors[c][r]);
    let r = rank(&full);
    if r < vectors.len() {
        return Err(SubgroupError::Dependent {
            rank: r,
            count: vectors.len(),
        });
    }
    let step = group.step();
    let mut spans = Vec::with_capacity(step);
    for j in 1..=step {
        let range = group.layer_range(j);
        spans.push(DMatrix::from_fn(range.len(), vectors.len(), |r, c| vectors[c][range.start + r]));
    }
    let layered: usize = spans.iter().map(rank).sum();
    if layered > r {
        // find a vector whose layer pieces escape the span
        let span = column_space(&full);
        let outside = |x: &DVector<f64>| {
            let p = &span * (span.transpose() * x);
            (x - p).norm() > 1e-9 * x.norm().max(1.0)
        };
        for (index, v) in vectors.iter().enumerate() {
            let layers: Vec<usize> = (1..=step)
                .filter(|&j| group.layer_range(j).any(|i| v[i] != 0.0))
                .collect();
            let escapes = layers.iter().any(|&j| {
                let mut piece = DVector::zeros(q);
                for i in group.layer_range(j) {
                    piece[i] = v[i];
                }
                outside(&piece)
            });
            if escapes {
                return Err(SubgroupError::MixedLayers { index, layers });
            }
        }
        unreachable!("a layered span larger than the span has an escaping piece");
    }
    HomSubspace::from_layer_spans(group, spans)
}

/// Named subspaces of `heisenberg1`.
pub fn preset(group: Arc<Group>, name: &str) -> Result<HomSubspace, SubgroupError> {
    if group.layer_dims() != [2, 1] {
        return Err(SubgroupError::UnknownPreset(format!("{name} (presets need heisenberg1)")));
    }
    let e = |i: usize| group.basis_vector(i).into_inner();
    let vectors = match name {
        "vertical_plane_x0" => vec![e(1), e(2)],
        "center" => vec![e(2)],
        "horizontal_x_axis" => vec![e(0)],
        _ => return Err(SubgroupError::UnknownPreset(name.to_string())),
    };
    subspace_from_vectors(group, &vectors)
}

/// Complementary subgroups `(W, V)` with `W` normal and `𝔾 = V ⊕ W`.
#[derive(Debug, Clone)]
pub struct ComplementaryPair {
    w: HomSubspace,
    v: HomSubspace,
    /// Rows of the projection onto V along W, in V-coordinates.
    v_coords_along_w: DMatrix<f64>,
    pub w_is_normal: bool,
    pub v_is_subgroup: bool,
}

impl ComplementaryPair {
    pub fn new(w: HomSubspace, v: HomSubspace) -> Result<Self, SubgroupError> {
        if !Arc::ptr_eq(w.group(), v.group()) && w.group().structure_constants() != v.group().structure_constants() {
            return Err(SubgroupError::GroupMismatch);
        }
        let q = w.group().dimension();
        let w_is_normal = w.is_subgroup() && w.is_normal();
        if !w_is_normal {
            return Err(SubgroupError::NotNormal("W"));
        }
        let v_is_subgroup = v.is_subgroup();
        if !v_is_subgroup {
            return Err(SubgroupError::NotSubgroup("V"));
        }
        let mut cols = v.basis_vectors();
        cols.extend(w.basis_vectors());
        let m = DMatrix::from_fn(q, cols.len(), |r, c| cols[c][r]);
        let joint = rank(&m);
        if cols.len() != q || joint != q {
            return Err(SubgroupError::NotComplementary {
                w: w.dim(),
                v: v.dim(),
                rank: joint,
                q,
            });
        }
        let inv = m.try_inverse().expect("full rank");
        let v_coords_along_w = inv.rows(0, v.dim()).into_owned();
        Ok(Self {
            w,
            v,
            v_coords_along_w,
            w_is_normal,
            v_is_subgroup,
        })
    }

    pub fn w(&self) -> &HomSubspace {
        &self.w
    }

    pub fn v(&self) -> &HomSubspace {
        &self.v
    }

    /// Linear projection of `x` onto V along W.
    pub fn project_v(&self, x: &[f64]) -> Vec<f64> {
        let c = &self.v_coords_along_w * DVector::from_column_slice(x);
        self.v.embed(c.as_slice())
    }

    /// `(v, w)` with `x = v·w`, `v ∈ V`, `w ∈ W`.
    pub fn split(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SubgroupError> {
        let g = self.v.group();
        g.check_point(x)?;
        let v = self.project_v(x);
        let w = g.multiply(&g.inverse(&v), x)?.into_inner();
        Ok((v, w))
    }

    /// Area of `x·box` (box in W-coordinates) by midpoint quadrature of the
    /// Gram determinant, returned with the flat volume of the box.
    pub fn coset_volume_check(&self, x: &[f64], bounds: &[(f64, f64)], n_grid: usize) -> Result<(f64, f64), SubgroupError> {
        let g = self.w.group();
        g.check_point(x)?;
        let m = self.w.dim();
        if bounds.len() != m || bounds.iter().any(|(a, b)| !(b > a)) || n_grid == 0 {
            return Err(SubgroupError::DegenerateBox { expected: m });
        }
        let points = (n_grid as u128).pow(m as u32);
        if points > 50_000_000 {
            return Err(SubgroupError::GridTooLarge(points));
        }
        let flat: f64 = bounds.iter().map(|(a, b)| b - a).product();
        let cell = flat / points as f64;
        let h = 1e-6;
        let q = g.dimension();
        let image = |c: &[f64]| -> Vec<f64> { g.multiply(x, &self.w.embed(c)).expect("dimension checked").into_inner() };
        let mut idx = vec![0usize; m];
        let mut c = vec![0.0; m];
        let mut jac = DMatrix::zeros(q, m);
        let mut total = 0.0;
        for _ in 0..points {
            for k in 0..m {
                let (a, b) = bounds[k];
                c[k] = a + (idx[k] as f64 + 0.5) * (b - a) / n_grid as f64;
            }
            for k in 0..m {
                let mut plus = c.clone();
                let mut minus = c.clone();
                plus[k] += h;
                minus[k] -= h;
                let (fp, fm) = (image(&plus), image(&minus));
                for r in 0..q {
                    jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
                }
            }
            let gram = jac.transpose() * &jac;
            total += gram.determinant().max(0.0).sqrt() * cell;
            for k in 0..m {
                idx[k] += 1;
                if idx[k] < n_grid {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok((flat, total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn h1() -> Arc<Group> {
        Arc::new(presets::heisenberg1())
    }

    fn e(i: usize) -> Vec<f64> {
        let mut v = vec![0.0; 3];
        v[i] = 1.0;
        v
    }

    #[test]
    fn signatures_from_vectors() {
        let g = h1();
        assert_eq!(subspace_from_vectors(g.clone(), &[e(1), e(2)]).unwrap().signature(), vec![1, 1]);
        assert_eq!(subspace_from_vectors(g.clone(), &[e(0), e(1)]).unwrap().signature(), vec![2, 0]);
        let mixed = subspace_from_vectors(g.clone(), &[vec![1.0, 0.0, 1.0]]);
        assert_eq!(mixed.unwrap_err(), SubgroupError::MixedLayers { index: 0, layers: vec![1, 2] });
        // mixed vector whose pieces are in the span is fine
        assert_eq!(subspace_from_vectors(g.clone(), &[vec![1.0, 0.0, 1.0], e(2)]).unwrap().signature(), vec![1, 1]);
        assert!(matches!(subspace_from_vectors(g, &[e(1), e(1)]), Err(SubgroupError::Dependent { .. })));
    }

    #[test]
    fn subgroup_and_normality() {
        let g = h1();
        let vert = preset(g.clone(), "vertical_plane_x0").unwrap();
        assert!(vert.is_subgroup() && vert.is_normal());
        let horiz = subspace_from_vectors(g.clone(), &[e(0), e(1)]).unwrap();
        assert!(!horiz.is_subgroup());
        let x_axis = preset(g.clone(), "horizontal_x_axis").unwrap();
        assert!(x_axis.is_subgroup() && !x_axis.is_normal());
        let center = preset(g, "center").unwrap();
        assert!(center.is_subgroup() && center.is_normal());
    }

    #[test]
    fn split_example() {
        let g = h1();
        let pair = ComplementaryPair::new(preset(g.clone(), "vertical_plane_x0").unwrap(), preset(g.clone(), "horizontal_x_axis").unwrap()).unwrap();
        let (v, w) = pair.split(&[2.0, 3.0, 4.0]).unwrap();
        assert!(v.iter().zip([2.0, 0.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(w.iter().zip([0.0, 3.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-14));
        let (v, w) = pair.split(&[0.0, 0.5, -2.0]).unwrap();
        assert!(v.iter().all(|a| a.abs() < 1e-14));
        assert!(w.iter().zip([0.0, 0.5, -2.0]).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn pair_preconditions() {
        let g = h1();
        let x_axis = preset(g.clone(), "horizontal_x_axis").unwrap();
        let vert = preset(g.clone(), "vertical_plane_x0").unwrap();
        assert_eq!(ComplementaryPair::new(x_axis.clone(), vert.clone()).unwrap_err(), SubgroupError::NotNormal("W"));
        let center = preset(g, "center").unwrap();
        assert!(matches!(ComplementaryPair::new(center, x_axis).unwrap_err(), SubgroupError::NotComplementary { .. }));
    }

    #[test]
    fn coset_volume_at_identity() {
        let g = h1();
        let pair = ComplementaryPair::new(preset(g.clone(), "vertical_plane_x0").unwrap(), preset(g, "horizontal_x_axis").unwrap()).unwrap();
        let (before, after) = pair.coset_volume_check(&[0.0; 3], &[(0.0, 1.0), (0.0, 1.0)], 8).unwrap();
        assert_eq!(before, 1.0);
        assert!((after - 1.0).abs() < 1e-9);
        assert!(matches!(pair.coset_volume_check(&[0.0; 3], &[(0.0, 0.0), (0.0, 1.0)], 8), Err(SubgroupError::DegenerateBox { .. })));
    }

    #[test]
    fn signature_validation() {
        let g = h1();
        assert_eq!(Signature::new(&g, vec![1, 1]).unwrap().degree(), 3);
        assert!(Signature::new(&g, vec![2, 1]).is_err());
        assert!(Signature::new(&g, vec![0, 0]).is_err());
        assert!(Signature::new(&g, vec![3, 0]).is_err());
        assert_eq!(Signature::new(&g, vec![1, 1]).unwrap().to_string(), "1;1");
    }
}
