use ilab_core::derivations::kalton_peck;
use ilab_core::diagnostics::{quasilinearity_constant, triviality_gap};
use ilab_core::interpolate::factorization_objective;
use ilab_core::*;
use proptest::prelude::*;

fn coords(dim: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
        .prop_filter("nonzero", |v| v.iter().any(|c| c.abs() > 1e-3))
}

fn symmetric_spaces() -> Vec<SpaceSpec> {
    vec![
        SpaceSpec::Lp(1.0),
        SpaceSpec::Lp(1.7),
        SpaceSpec::Lp(f64::INFINITY),
        SpaceSpec::lorentz(3.0, 1.5).unwrap(),
        SpaceSpec::lorentz(2.0, 4.0).unwrap(),
        SpaceSpec::weighted(
            2.5,
            Vector::from_slice(&[1.0, 3.0, 0.5, 2.0, 1.0, 4.0, 0.25, 1.5]),
        )
        .unwrap(),
        SpaceSpec::TsirelsonT,
        SpaceSpec::Tsirelson2,
    ]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn pad(v: &[f64], dim: usize) -> Vector {
    let mut out = v.to_vec();
    out.resize(dim, 0.0);
    Vector::from_slice(&out)
}

fn t2_block(n: usize) -> (SpaceSpec, IndexSet) {
    let block = Partition::dyadic_block(n);
    (
        SpaceSpec::restricted(SpaceSpec::Tsirelson2, block.clone()).unwrap(),
        block,
    )
}

fn on_block(block: &IndexSet, v: &[f64]) -> Vector {
    let mut out = vec![0.0; block.max().unwrap()];
    for (i, c) in block.iter().zip(v) {
        out[i - 1] = *c;
    }
    Vector::from_slice(&out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norms_ignore_signs(v in coords(1..=8), signs in prop::collection::vec(any::<bool>(), 8)) {
        let x = pad(&v, 8);
        let flipped = Vector::from_slice(
            &x.as_slice().iter().zip(&signs).map(|(c, s)| if *s { -c } else { *c }).collect::<Vec<_>>(),
        );
        for s in symmetric_spaces() {
            let (a, b) = (norm(&s, &x).unwrap(), norm(&s, &flipped).unwrap());
            prop_assert!(rel(a, b) < 1e-12, "{s}: {a} vs {b}");
        }
    }

    #[test]
    fn norms_are_lattice_monotone(v in coords(1..=8), t in prop::collection::vec(0.0f64..=1.0, 8)) {
        let x = pad(&v, 8);
        let y = x.hadamard(&Vector::from_slice(&t));
        for s in symmetric_spaces() {
            let (nx, ny) = (norm(&s, &x).unwrap(), norm(&s, &y).unwrap());
            prop_assert!(ny <= nx * (1.0 + 1e-12), "{s}: {ny} > {nx}");
        }
    }

    #[test]
    fn diagonal_lorentz_is_lp(v in coords(1..=12), p in 1.0f64..6.0) {
        let x = Vector::from_slice(&v);
        let a = norm(&SpaceSpec::lorentz(p, p).unwrap(), &x).unwrap();
        let b = norm(&SpaceSpec::Lp(p), &x).unwrap();
        prop_assert!(rel(a, b) < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn convexified_l1_is_lp(v in coords(1..=12), p in 1.0f64..6.0) {
        let x = Vector::from_slice(&v);
        let a = norm(&SpaceSpec::convexified(SpaceSpec::Lp(1.0), p).unwrap(), &x).unwrap();
        let b = norm(&SpaceSpec::Lp(p), &x).unwrap();
        prop_assert!(rel(a, b) < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn lp_duals_are_conjugate_norms(v in coords(1..=12), p in 1.0f64..8.0) {
        let y = Vector::from_slice(&v);
        let conj = if p == 1.0 { f64::INFINITY } else { p / (p - 1.0) };
        let d = dual_norm(&SpaceSpec::Lp(p), &y, 500, 0).unwrap();
        let want = norm(&SpaceSpec::Lp(conj), &y).unwrap();
        prop_assert!(rel(d.value, want) < 1e-12, "{} vs {want}", d.value);
        prop_assert!((norm(&SpaceSpec::Lp(p), &d.witness).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((d.witness.dot(&y) - d.value).abs() < 1e-9 * want);
    }

    #[test]
    fn tsirelson_block_sandwich(n in 2usize..=5, v in coords(32..=32)) {
        let (t2, block) = t2_block(n);
        let x = on_block(&block, &v);
        let l2 = x.l2();
        let primal = norm(&t2, &x).unwrap();
        let dual = norm(&SpaceSpec::dual(t2).unwrap(), &x).unwrap();
        prop_assert!(primal <= l2 * (1.0 + 1e-12), "{primal} > {l2}");
        prop_assert!(l2 <= dual * (1.0 + 1e-12), "{l2} > {dual}");
        prop_assert!(dual <= 2f64.sqrt() * l2 * (1.0 + 1e-12), "{dual} > sqrt2 {l2}");
    }

    #[test]
    fn factorization_objective_is_midpoint_convex(
        v in coords(6..=6),
        s in prop::collection::vec(-3.0f64..3.0, 6),
        t in prop::collection::vec(-3.0f64..3.0, 6),
        theta in 0.05f64..0.95,
    ) {
        let couple = CoupleSpec::new(SpaceSpec::lorentz(3.0, 1.5).unwrap(), SpaceSpec::Lp(1.2), theta).unwrap();
        let x = Vector::from_slice(&v);
        let (s, t) = (Vector::from_slice(&s), Vector::from_slice(&t));
        let mid = s.add(&t).scale(0.5);
        let g = |u: &Vector| factorization_objective(&couple, &x, u).unwrap();
        prop_assert!(g(&mid) <= 0.5 * (g(&s) + g(&t)) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn calderon_norm_obeys_interpolation_inequality(v in coords(2..=8), theta in 0.1f64..0.9) {
        let x = Vector::from_slice(&v);
        let (x0, x1) = (SpaceSpec::lorentz(2.0, 1.0).unwrap(), SpaceSpec::Lp(4.0));
        let couple = CoupleSpec::new(x0.clone(), x1.clone(), theta).unwrap();
        let n = calderon_norm(&couple, &x, 1e-6).unwrap();
        let bound = norm(&x0, &x).unwrap().powf(1.0 - theta) * norm(&x1, &x).unwrap().powf(theta);
        prop_assert!(n <= bound * (1.0 + 1e-6), "{n} > {bound}");
    }

    #[test]
    fn numerical_derivation_is_homogeneous(v in coords(2..=8), c in prop::sample::select(vec![-3.0, 0.5, 2.0, 10.0])) {
        let couple = CoupleSpec::new(SpaceSpec::Lp(1.5), SpaceSpec::Lp(3.0), 0.4).unwrap();
        let x = Vector::from_slice(&v);
        let a = numerical_derivation(&couple, &x.scale(c), 1e-8).unwrap();
        let b = numerical_derivation(&couple, &x, 1e-8).unwrap().scale(c);
        let space = couple.space_at(0.4).unwrap().simplified();
        let nx = norm(&space, &x.scale(c)).unwrap();
        prop_assert!(norm(&space, &a.sub(&b)).unwrap() <= 1e-3 * nx);
    }

    #[test]
    fn duality_couples_interpolate_to_l2(v in coords(2..=8)) {
        let x = Vector::from_slice(&v);
        let (t2, block) = t2_block(3);
        let t2x = on_block(&block, &v[..v.len().min(block.len())]);
        for (base, y) in [
            (SpaceSpec::Lp(1.5), &x),
            (SpaceSpec::lorentz(3.0, 1.5).unwrap(), &x),
            (t2, &t2x),
        ] {
            let couple = CoupleSpec::new(base.clone(), SpaceSpec::dual(base.clone()).unwrap(), 0.5).unwrap();
            let n = calderon_norm(&couple, y, 1e-7).unwrap();
            prop_assert!(rel(n, y.l2()) <= 2e-7, "{base}: {n} vs {}", y.l2());
        }
    }

    #[test]
    fn derived_norm_is_homogeneous(y in coords(4..=4), z in coords(4..=4), c in -5.0f64..5.0) {
        let space = SpaceSpec::Lp(2.0);
        let omega = DerivationSpec::kalton_peck(1.0, space.clone());
        let v = DerivedVector::new(Vector::from_slice(&y), Vector::from_slice(&z)).unwrap();
        let a = derived_norm(&omega, &v.scale(c), &space).unwrap();
        let b = c.abs() * derived_norm(&omega, &v, &space).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * b.max(1e-12), "{a} vs {b}");
    }

    #[test]
    fn kalton_peck_is_quasilinear(seed in any::<u64>()) {
        let space = SpaceSpec::Lp(2.0);
        let omega = DerivationSpec::kalton_peck(1.0, space.clone());
        let block = IndexSet::interval(1, 16);
        let q = quasilinearity_constant(&omega, &space, &block, 40, seed).unwrap();
        prop_assert!(q.is_finite() && q > 0.0 && q < 4.0, "{q}");
        let more = quasilinearity_constant(&omega, &space, &block, 80, seed).unwrap();
        prop_assert!(more >= q);
        let c = diagnostics::centralizer_constant(&omega, &space, &block, 40, seed).unwrap();
        prop_assert!(c.is_finite() && c < 4.0, "{c}");
    }

    #[test]
    fn linear_maps_are_trivial(f in prop::collection::vec(-5.0f64..5.0, 8), seed in any::<u64>()) {
        let omega = DerivationSpec::LinearDiagonal(Vector::from_slice(&f));
        let gap = triviality_gap(&omega, &SpaceSpec::Lp(2.0), &IndexSet::interval(1, 8), 20, seed).unwrap();
        prop_assert_eq!(gap.value, 0.0);
        let q = quasilinearity_constant(&omega, &SpaceSpec::Lp(2.0), &IndexSet::interval(1, 8), 20, seed).unwrap();
        prop_assert_eq!(q, 0.0);
    }
}

#[test]
fn kalton_peck_matches_definition() {
    let x = Vector::from_slice(&[3.0, -4.0, 0.0]);
    let k = kalton_peck(&x, &SpaceSpec::Lp(2.0), 1.0).unwrap();
    let want = [3.0 * (5.0f64 / 3.0).ln(), -4.0 * (5.0f64 / 4.0).ln(), 0.0];
    for (a, b) in k.as_slice().iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}
