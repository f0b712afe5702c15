use std::f64::consts::PI;
use std::sync::Arc;

use carnot_core::factor::*;
use carnot_core::metrics::{DistanceSpec, DEFAULT_DINF_C, DEFAULT_HS_EPS, DEFAULT_KORANYI_GAMMA};
use carnot_core::subgroups::{preset, subspace_from_vectors, HomSubspace, Signature};
use carnot_core::{presets, Group};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn h1() -> Arc<Group> {
    Arc::new(presets::heisenberg1())
}

/// `(1/2)∫_{-1}^{1} √(1 − y⁴) dy` via `y = sin θ`, which turns the
/// integrand into the smooth periodic `cos²θ·√(1 + sin²θ)`; the
/// trapezoid rule then converges geometrically.
fn koranyi_slice_oracle() -> f64 {
    let n = 2000;
    let h = 2.0 * PI / n as f64;
    let full: f64 = (0..n).map(|k| {
        let th = k as f64 * h;
        th.cos().powi(2) * (1.0 + th.sin().powi(2)).sqrt()
    }).sum::<f64>() * h;
    // the full period covers [-1, 1] twice
    0.5 * 0.5 * full
}

#[test]
fn koranyi_oracle_matches_beta_function_value() {
    // Γ(1/4)Γ(3/2) / (4Γ(7/4))
    assert!((koranyi_slice_oracle() - 0.874_019_184_764_04).abs() < 1e-14);
}

#[test]
fn nested_koranyi_vertical_plane() {
    let g = h1();
    let d = DistanceSpec::koranyi(g.clone(), DEFAULT_KORANYI_GAMMA).unwrap();
    let v = preset(g, "vertical_plane_x0").unwrap();
    let nested = slice_volume_nested(&d, &v, &[0.0; 3]).unwrap();
    let oracle = koranyi_slice_oracle();
    assert!(((nested.value - oracle) / oracle).abs() < 1e-6, "{} vs {oracle}", nested.value);
    let mc = slice_volume_mc(&d, &v, &[0.0; 3], 200_000, 9).unwrap();
    assert!((mc.value - oracle).abs() <= 3.0 * mc.std_error);
}

fn random_center(d: &DistanceSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let q = d.group().dimension();
    loop {
        let z: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if d.norm(&z) <= 1.0 {
            return z;
        }
    }
}

#[test]
fn nested_and_mc_agree_on_random_cases() {
    let g = h1();
    let engel = Arc::new(presets::engel());
    let dists = [
        DistanceSpec::koranyi(g.clone(), DEFAULT_KORANYI_GAMMA).unwrap(),
        DistanceSpec::dinf(g.clone(), DEFAULT_DINF_C).unwrap(),
        DistanceSpec::hebisch_sikora(g.clone(), DEFAULT_HS_EPS).unwrap(),
        DistanceSpec::from_profile_expr(engel.clone(), "t1 + pow(t2, 0.5) + pow(t3, 0.3333333333333333)").unwrap(),
        DistanceSpec::hebisch_sikora(engel.clone(), 1.0).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut compared = 0;
    for case in 0..20 {
        let d = &dists[case % dists.len()];
        let group = d.group().clone();
        let sig = if group.step() == 2 {
            [vec![1, 1], vec![1, 0], vec![2, 0]][case % 3].clone()
        } else {
            [vec![1, 1, 1], vec![2, 1, 0], vec![1, 0, 1]][case % 3].clone()
        };
        let sig = Signature::new(&group, sig).unwrap();
        let v = random_subspace(group, &sig, case as u64).unwrap();
        let z = random_center(d, &mut rng);
        let nested = match slice_volume_nested(d, &v, &z) {
            Ok(n) => n,
            Err(FactorError::Discontinuous(dims)) => {
                assert_eq!(dims, 3, "case {case}");
                continue;
            }
            Err(e) => panic!("case {case}: {e}"),
        };
        compared += 1;
        let mc = slice_volume_mc(d, &v, &z, 200_000, case as u64).unwrap();
        let tol = 3.0 * mc.std_error + 1e-6 * nested.value.abs();
        assert!(
            (nested.value - mc.value).abs() <= tol,
            "case {case} ({}, sig {sig}): nested {} vs mc {} ± {}",
            d.name(),
            nested.value,
            mc.value,
            mc.std_error
        );
    }
    assert!(compared >= 15, "{compared}");
}

#[test]
fn nested_refuses_cut_integrands_in_three_dimensions() {
    let engel = Arc::new(presets::engel());
    let d = DistanceSpec::hebisch_sikora(engel.clone(), 1.0).unwrap();
    let v = random_subspace(engel, &Signature::new(d.group(), vec![2, 1, 0]).unwrap(), 1).unwrap();
    assert!(slice_volume_nested(&d, &v, &[0.0; 4]).is_ok());
    let err = slice_volume_nested(&d, &v, &[0.1, 0.0, 0.0, 0.05]).unwrap_err();
    assert!(matches!(err, FactorError::Discontinuous(3)), "{err}");
}

#[test]
fn origin_dominates_for_multiradial_distances() {
    let g = h1();
    let v = preset(g.clone(), "vertical_plane_x0").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for d in [
        DistanceSpec::koranyi(g.clone(), DEFAULT_KORANYI_GAMMA).unwrap(),
        DistanceSpec::dinf(g.clone(), DEFAULT_DINF_C).unwrap(),
    ] {
        let at0 = slice_volume_nested(&d, &v, &[0.0; 3]).unwrap().value;
        for _ in 0..100 {
            let z = random_center(&d, &mut rng);
            let vz = slice_volume_nested(&d, &v, &z).unwrap().value;
            assert!(vz <= at0 * (1.0 + 1e-8), "{}: {vz} > {at0} at {z:?}", d.name());
        }
    }
}

/// `ℋⁿ(V ∩ 𝔹(0, r))` by plain rejection sampling in a caller-given box.
fn ball_slice_volume(d: &DistanceSpec, v: &HomSubspace, r: f64, half: &[f64], n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = vec![0.0; d.group().dimension()];
    let mut hits = 0usize;
    for _ in 0..n {
        let c: Vec<f64> = half.iter().map(|h| rng.gen_range(-h..*h)).collect();
        if d.ball_contains(&zero, r, &v.embed(&c)) {
            hits += 1;
        }
    }
    let vol: f64 = half.iter().map(|h| 2.0 * h).product();
    let p = hits as f64 / n as f64;
    (vol * p, vol * (p * (1.0 - p) / n as f64).sqrt())
}

#[test]
fn slice_volume_scales_with_homogeneous_degree() {
    let g = h1();
    let d = DistanceSpec::koranyi(g.clone(), DEFAULT_KORANYI_GAMMA).unwrap();
    let v = preset(g, "vertical_plane_x0").unwrap();
    let unit = slice_volume_nested(&d, &v, &[0.0; 3]).unwrap().value;
    for r in [0.5f64, 2.0] {
        let (val, err) = ball_slice_volume(&d, &v, r, &[r, r * r], 200_000, 8);
        let predicted = r.powi(v.degree() as i32) * unit;
        assert!((val - predicted).abs() <= 3.0 * err, "r = {r}: {val} ± {err} vs {predicted}");
    }
}

fn quick_opts(seed: u64) -> FactorOptions {
    FactorOptions {
        n_starts: 4,
        n_mc: 20_000,
        seed,
        max_evals: 40,
        final_factor: 10,
        method: VolumeMethod::MonteCarlo,
    }
}

#[test]
fn euclidean_factors_are_ball_volumes() {
    let r3 = Arc::new(presets::abelian(3).unwrap());
    let d = DistanceSpec::euclidean(r3.clone()).unwrap();
    let plane = subspace_from_vectors(r3, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
    let rep = spherical_factor(&d, &plane, &quick_opts(1)).unwrap();
    assert!((rep.beta - PI).abs() <= 3.0 * rep.beta_error, "{rep:?}");
    assert!(rep.gap_within(3.0));

    let r2 = Arc::new(presets::abelian(2).unwrap());
    let d = DistanceSpec::euclidean(r2.clone()).unwrap();
    let line = subspace_from_vectors(r2, &[vec![0.6, 0.8]]).unwrap();
    let opts = FactorOptions { method: VolumeMethod::NestedQuadrature, ..quick_opts(2) };
    let rep = spherical_factor(&d, &line, &opts).unwrap();
    assert!((rep.beta - 2.0).abs() < 1e-9, "{}", rep.beta);
}

#[test]
fn dinf_factor_sits_at_origin() {
    let g = h1();
    let d = DistanceSpec::dinf(g.clone(), DEFAULT_DINF_C).unwrap();
    let v = preset(g, "vertical_plane_x0").unwrap();
    let rep = spherical_factor(&d, &v, &quick_opts(3)).unwrap();
    assert!((rep.beta - 1.0).abs() <= 3.0 * rep.beta_error + 1e-12, "{}", rep.beta);
    assert!(rep.gap_within(3.0));
    // β is the maximum of the final probes and its center is feasible
    assert!(rep.final_probes.iter().all(|(_, value, _)| *value <= rep.beta));
    assert!(d.norm(&rep.argmax_center) <= 1.0 + 1e-9);
    // optimization values use 10x fewer samples, so their error is ~√10 larger
    for t in &rep.trace {
        assert!(t.value <= rep.beta + 3.0 * rep.beta_error * (1.0 + 10f64.sqrt()));
    }
}

#[test]
fn random_subspaces() {
    let g = h1();
    for seed in [1, 2] {
        let v = random_subspace(g.clone(), &Signature::new(&g, vec![1, 1]).unwrap(), seed).unwrap();
        assert_eq!(v.signature(), vec![1, 1]);
        assert!(v.contains(&[0.0, 0.0, 1.0]));
        let rebuilt = subspace_from_vectors(g.clone(), &v.basis_vectors()).unwrap();
        assert_eq!(rebuilt.signature(), vec![1, 1]);
    }
    let a = random_subspace(g.clone(), &Signature::new(&g, vec![1, 1]).unwrap(), 1).unwrap();
    let b = random_subspace(g.clone(), &Signature::new(&g, vec![1, 1]).unwrap(), 2).unwrap();
    assert!(a.layer_basis(1) != b.layer_basis(1));
    let r3 = Arc::new(presets::abelian(3).unwrap());
    assert!(Signature::new(&r3, vec![3]).is_err());
    let engel = Arc::new(presets::engel());
    let full = random_subspace(engel.clone(), &Signature::new(&engel, vec![2, 1, 0]).unwrap(), 5).unwrap();
    for i in 0..3 {
        assert!(full.contains(&engel.basis_vector(i)));
    }
}

#[test]
fn sweeps() {
    let g = h1();
    let d = DistanceSpec::koranyi(g.clone(), DEFAULT_KORANYI_GAMMA).unwrap();
    let sig = Signature::new(&g, vec![1, 1]).unwrap();
    let opts = FactorOptions { n_starts: 2, max_evals: 20, ..quick_opts(5) };
    let rep = rotational_sweep(&d, &sig, 3, &opts).unwrap();
    assert!(rep.passed, "{:?}", rep.betas());
    assert!(rep.spread <= rep.error_budget());
    let single = rotational_sweep(&d, &sig, 1, &opts).unwrap();
    assert_eq!(single.spread, 0.0);

    let r3 = Arc::new(presets::abelian(3).unwrap());
    let e = DistanceSpec::euclidean(r3.clone()).unwrap();
    let sig = Signature::new(&r3, vec![2]).unwrap();
    let opts = FactorOptions { method: VolumeMethod::NestedQuadrature, n_starts: 2, max_evals: 20, ..quick_opts(6) };
    let rep = rotational_sweep(&e, &sig, 2, &opts).unwrap();
    assert!(rep.betas().iter().all(|b| (b - PI).abs() < 1e-8), "{:?}", rep.betas());
}

#[test]
fn convex_normal_preconditions() {
    let g = h1();
    let d = DistanceSpec::hebisch_sikora(g.clone(), DEFAULT_HS_EPS).unwrap();
    let x_axis = preset(g.clone(), "horizontal_x_axis").unwrap();
    assert!(matches!(convex_normal_check(&d, &x_axis, &quick_opts(1), 1000), Err(FactorError::Precondition(_))));
    let not_convex = DistanceSpec::dinf(g.clone(), 1.0).unwrap();
    let w = preset(g, "vertical_plane_x0").unwrap();
    assert!(matches!(convex_normal_check(&not_convex, &w, &quick_opts(1), 1000), Err(FactorError::Precondition(_))));
    let rep = convex_normal_check(&d, &w, &quick_opts(1), 2000).unwrap();
    assert!(rep.passed, "{:?}", rep.factor);
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let g = h1();
    let d = DistanceSpec::koranyi(g.clone(), DEFAULT_KORANYI_GAMMA).unwrap();
    let v = random_subspace(g.clone(), &Signature::new(&g, vec![1, 1]).unwrap(), 3).unwrap();
    let opts = FactorOptions { n_starts: 3, max_evals: 20, ..quick_opts(11) };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| spherical_factor(&d, &v, &opts).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    assert_eq!(a.beta.to_bits(), b.beta.to_bits());
}
