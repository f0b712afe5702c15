use carnot_core::algebra::{validate_grading, GradedGroup, Violation};
use carnot_core::{presets, Group, StructureConstants};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Strictly upper-triangular n×n matrices graded by superdiagonal:
/// layer d holds E_{i,i+d}. Returns the group and the matrix of each
/// basis vector.
fn upper_triangular(n: usize) -> (Group, Vec<DMatrix<f64>>) {
    let mut basis = Vec::new();
    let mut dims = Vec::new();
    for d in 1..n {
        dims.push(n - d);
        for i in 0..(n - d) {
            let mut m = DMatrix::zeros(n, n);
            m[(i, i + d)] = 1.0;
            basis.push(m);
        }
    }
    let coords = |m: &DMatrix<f64>| -> Vec<f64> {
        let mut v = Vec::new();
        for d in 1..n {
            for i in 0..(n - d) {
                v.push(m[(i, i + d)]);
            }
        }
        v
    };
    let mut tuples = Vec::new();
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            if i < j {
                let c = coords(&(a * b - b * a));
                for (k, v) in c.into_iter().enumerate() {
                    if v != 0.0 {
                        tuples.push((k, i, j, v));
                    }
                }
            }
        }
    }
    let sc = StructureConstants::from_tuples(dims, &tuples).unwrap();
    (GradedGroup::new(sc).unwrap(), basis)
}

fn to_matrix(basis: &[DMatrix<f64>], x: &[f64]) -> DMatrix<f64> {
    basis.iter().zip(x).fold(DMatrix::zeros(basis[0].nrows(), basis[0].ncols()), |acc, (b, c)| acc + b * *c)
}

fn nilpotent_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..n {
        term = &term * m / k as f64;
        out += &term;
    }
    out
}

fn unipotent_log(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let x = m - DMatrix::identity(n, n);
    let mut out = DMatrix::zeros(n, n);
    let mut power = DMatrix::identity(n, n);
    for k in 1..n {
        power = &power * &x;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        out += &power * (sign / k as f64);
    }
    out
}

fn random_point(rng: &mut ChaCha8Rng, q: usize) -> Vec<f64> {
    (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn bch_product_matches_matrix_log_of_exp_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [3usize, 4, 5, 7] {
        let (g, basis) = upper_triangular(n);
        assert_eq!(g.step(), n - 1);
        for _ in 0..20 {
            let p = random_point(&mut rng, g.dimension());
            let q = random_point(&mut rng, g.dimension());
            let oracle = unipotent_log(&(nilpotent_exp(&to_matrix(&basis, &p)) * nilpotent_exp(&to_matrix(&basis, &q))));
            let prod = g.multiply(&p, &q).unwrap();
            let diff = (to_matrix(&basis, &prod) - oracle).abs().max();
            assert!(diff < 1e-12, "n = {n}: BCH deviates from matrix oracle by {diff}");
        }
    }
}

/// Jacobiator by explicit nested brackets of basis vectors.
fn jacobi_defects(g_sc: &StructureConstants<f64>) -> Vec<(usize, usize, usize)> {
    let q = g_sc.dimension();
    let mut c = vec![vec![vec![0.0; q]; q]; q];
    for e in g_sc.entries() {
        c[e.i][e.j][e.k] += e.value;
        c[e.j][e.i][e.k] -= e.value;
    }
    let br = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; q];
        for i in 0..q {
            for j in 0..q {
                for k in 0..q {
                    out[k] += c[i][j][k] * a[i] * b[j];
                }
            }
        }
        out
    };
    let e = |i: usize| {
        let mut v = vec![0.0; q];
        v[i] = 1.0;
        v
    };
    let mut bad = Vec::new();
    for i in 0..q {
        for j in 0..q {
            for l in 0..q {
                let s1 = br(&e(i), &br(&e(j), &e(l)));
                let s2 = br(&e(j), &br(&e(l), &e(i)));
                let s3 = br(&e(l), &br(&e(i), &e(j)));
                if s1.iter().zip(&s2).zip(&s3).any(|((a, b), c)| (a + b + c).abs() > 1e-12) {
                    bad.push((i, j, l));
                }
            }
        }
    }
    bad
}

#[test]
fn jacobi_violation_detected_and_matches_enumeration() {
    // layers (3,1,1): [e0,e1] = e3, [e2,e3] = e4; the triple (e0,e1,e2) fails.
    let sc = StructureConstants::from_tuples(vec![3, 1, 1], &[(3, 0, 1, 1.0), (4, 2, 3, 1.0)]).unwrap();
    let oracle = jacobi_defects(&sc);
    assert!(oracle.contains(&(0, 1, 2)));
    let report = validate_grading(&sc);
    assert!(report.has_jacobi_violation());
    assert!(!report.has_grading_violation());
    for v in &report.violations {
        if let Violation::Jacobi { i, j, l, .. } = v {
            assert!(oracle.contains(&(*i, *j, *l)));
        }
    }
    for g in [presets::heisenberg1::<f64>(), presets::engel()] {
        assert!(jacobi_defects(g.structure_constants()).is_empty());
    }
}

fn associativity_suite(g: &Group, samples: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = g.dimension();
    for _ in 0..samples {
        let (p, r, s) = (random_point(&mut rng, q), random_point(&mut rng, q), random_point(&mut rng, q));
        let left = g.multiply(&g.multiply(&p, &r).unwrap(), &s).unwrap();
        let right = g.multiply(&p, &g.multiply(&r, &s).unwrap()).unwrap();
        let tol = 1e-10 * (1.0 + norm(&p) + norm(&r) + norm(&s)).powi(3);
        let err = left.iter().zip(right.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= tol, "associativity error {err}");
    }
}

#[test]
fn associativity_on_presets() {
    associativity_suite(&presets::heisenberg1(), 10_000, 1);
    associativity_suite(&presets::engel(), 10_000, 2);
}

#[test]
fn dilations_are_homomorphisms_and_a_semigroup() {
    for g in [presets::heisenberg1::<f64>(), presets::engel()] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = g.dimension();
        for _ in 0..10_000 {
            let (p, s) = (random_point(&mut rng, q), random_point(&mut rng, q));
            let r: f64 = rng.gen_range(0.1..3.0);
            let t: f64 = rng.gen_range(0.1..3.0);
            let lhs = g.dilate(r, &g.multiply(&p, &s).unwrap()).unwrap();
            let rhs = g.multiply(&g.dilate(r, &p).unwrap(), &g.dilate(r, &s).unwrap()).unwrap();
            let tol = 1e-10 * (1.0 + r).powi(3);
            assert!(lhs.iter().zip(rhs.iter()).all(|(a, b)| (a - b).abs() <= tol));
            let twice = g.dilate(r, &g.dilate(t, &p).unwrap()).unwrap();
            let once = g.dilate(r * t, &p).unwrap();
            assert!(twice.iter().zip(once.iter()).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())));
        }
    }
}

#[test]
fn bch_correction_depends_only_on_lower_layers() {
    let g: Group = presets::engel();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = g.dimension();
    for _ in 0..1000 {
        let (p, s) = (random_point(&mut rng, q), random_point(&mut rng, q));
        let base = g.multiply(&p, &s).unwrap();
        for j in 1..=g.step() {
            // perturb layers >= j of both factors
            let mut p2 = p.clone();
            let mut s2 = s.clone();
            for idx in g.layer_range(j).start..q {
                p2[idx] += rng.gen_range(-1.0..1.0);
                s2[idx] += rng.gen_range(-1.0..1.0);
            }
            let pert = g.multiply(&p2, &s2).unwrap();
            for idx in g.layer_range(j) {
                let c0 = base[idx] - p[idx] - s[idx];
                let c1 = pert[idx] - p2[idx] - s2[idx];
                assert!((c0 - c1).abs() < 1e-12, "layer {j} correction saw higher layers");
            }
        }
    }
}

proptest! {
    #[test]
    fn inverse_cancels(coords in prop::collection::vec(-1.0f64..1.0, 4)) {
        let g: Group = presets::engel();
        let inv = g.inverse(&coords);
        let left = g.multiply(&coords, &inv).unwrap();
        let right = g.multiply(&inv, &coords).unwrap();
        prop_assert!(left.iter().chain(right.iter()).all(|x| x.abs() < 1e-14));
    }
}

#[test]
fn law_suite_passes_on_presets() {
    for g in [presets::heisenberg1::<f64>(), presets::engel(), presets::abelian(4).unwrap()] {
        let report = carnot_core::algebra::check_group_law(&g, 10_000, 11, 1e-10);
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checks.len(), 4);
        // exponential coordinates make the inverse exact
        assert_eq!(report.checks[1].worst_error, 0.0);
    }
}
