use mcpd::dirichlet::{
    log_predictive_binomial, log_predictive_categorical, log_predictive_stable, predictive_in_field,
};
use mcpd::{CountVector, DirichletParams, DirichletParams32};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every count vector over `classes` classes summing to `samples`.
fn compositions(classes: usize, samples: u32) -> Vec<Vec<u32>> {
    if classes == 1 {
        return vec![vec![samples]];
    }
    (0..=samples)
        .flat_map(|first| {
            compositions(classes - 1, samples - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// `Γ`-form predictive with integer-halves concentrations, in exact arithmetic:
/// `S!/Πc_k! · Π (α_k)^{(c_k)} / (S_α)^{(S)}` with rising factorials.
fn exact(alpha_halves: &[i64], counts: &[u32]) -> BigRational {
    let half = |n: i64| BigRational::new(BigInt::from(n), BigInt::from(2));
    let int = |n: u32| BigRational::from_integer(BigInt::from(n));
    let rising = |x: BigRational, n: u32| (0..n).fold(BigRational::one(), |acc, j| acc * (x.clone() + int(j)));
    let fact = |n: u32| (1..=n).fold(BigRational::one(), |acc, j| acc * int(j));
    let total = half(alpha_halves.iter().sum());
    let s: u32 = counts.iter().sum();
    let mut p = fact(s) / rising(total, s);
    for (&a, &c) in alpha_halves.iter().zip(counts) {
        p = p * rising(half(a), c) / fact(c);
    }
    p
}

#[test]
fn rational_field_matches_exact_gamma_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let classes = rng.random_range(2..=4);
        let samples = rng.random_range(1..=6);
        let halves: Vec<i64> = (0..classes).map(|_| rng.random_range(1..=8)).collect();
        let mut counts = vec![0u32; classes];
        for _ in 0..samples {
            counts[rng.random_range(0..classes)] += 1;
        }
        let alpha: Vec<BigRational> = halves
            .iter()
            .map(|&h| BigRational::new(BigInt::from(h), BigInt::from(2)))
            .collect();
        let want = exact(&halves, &counts);
        assert_eq!(predictive_in_field(&alpha, &counts), want);

        let float_alpha = DirichletParams::new(halves.iter().map(|&h| h as f64 / 2.0).collect()).unwrap();
        let got = log_predictive_stable(&float_alpha, &CountVector::new(counts.clone()).unwrap()).unwrap();
        let want_ln = want.numer().to_f64().unwrap().ln() - want.denom().to_f64().unwrap().ln();
        assert!((got - want_ln).abs() < 1e-12, "{got} vs {want_ln}");
    }
}

#[test]
fn predictive_sums_to_one_over_all_count_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let classes = rng.random_range(2..=4);
        let samples = rng.random_range(1..=6);
        let alpha =
            DirichletParams::new((0..classes).map(|_| rng.random_range(0.05..20.0)).collect()).unwrap();
        let total: f64 = compositions(classes, samples)
            .into_iter()
            .map(|c| log_predictive_stable(&alpha, &CountVector::new(c).unwrap()).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "sum = {total}");
    }
}

#[test]
fn rational_normalisation_is_exact() {
    let alpha: Vec<BigRational> = [1, 3, 5]
        .iter()
        .map(|&h| BigRational::new(BigInt::from(h), BigInt::from(2)))
        .collect();
    let total = compositions(3, 5)
        .iter()
        .fold(BigRational::zero(), |acc, c| acc + predictive_in_field(&alpha, c));
    assert_eq!(total, BigRational::one());
}

#[test]
fn stable_and_gamma_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let classes = rng.random_range(2..=20);
        let samples = rng.random_range(1..=50);
        let alpha =
            DirichletParams::new((0..classes).map(|_| rng.random_range(0.01..50.0)).collect()).unwrap();
        let mut counts = vec![0u32; classes];
        for _ in 0..samples {
            counts[rng.random_range(0..classes)] += 1;
        }
        let counts = CountVector::new(counts).unwrap();
        let a = log_predictive_stable(&alpha, &counts).unwrap();
        let b = log_predictive_binomial(&alpha, &counts).unwrap();
        assert!((a - b).abs() / b.abs().max(1.0) <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn single_draw_reduces_to_categorical() {
    let alpha = DirichletParams::new(vec![0.5, 2.0, 7.5]).unwrap();
    for k in 0..3 {
        let one = CountVector::one_hot(3, k).unwrap();
        let a = log_predictive_stable(&alpha, &one).unwrap();
        let b = log_predictive_categorical(&alpha, k).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn sequential_updates_match_batch_marginal() {
    // Chaining one-hot predictives gives the batch predictive without its
    // multinomial coefficient.
    let alpha = DirichletParams::new(vec![0.7, 1.3, 2.2]).unwrap();
    let draws = [0usize, 2, 2, 1, 0, 2];
    let mut a = alpha.clone();
    let mut chain = 0.0;
    for &k in &draws {
        let one = CountVector::one_hot(3, k).unwrap();
        chain += log_predictive_stable(&a, &one).unwrap();
        a.absorb(&one).unwrap();
    }
    let batch = CountVector::new(vec![2, 1, 3]).unwrap();
    let coefficient = mcpd::dirichlet::log_count_coefficient::<f64>(&batch);
    let joint = log_predictive_stable(&alpha, &batch).unwrap() - coefficient;
    assert!((chain - joint).abs() < 1e-12);
    assert_eq!(a.alpha(), alpha.updated(&batch).unwrap().alpha());
}

#[test]
fn single_precision_alias_tracks_double() {
    let a64 = DirichletParams::new(vec![0.5, 1.5, 3.0, 0.25]).unwrap();
    let a32 = DirichletParams32::new(vec![0.5, 1.5, 3.0, 0.25]).unwrap();
    let counts = CountVector::new(vec![4, 0, 7, 1]).unwrap();
    let x64 = log_predictive_stable(&a64, &counts).unwrap();
    let x32 = log_predictive_stable(&a32, &counts).unwrap();
    assert!((f64::from(x32) - x64).abs() < 1e-4 * x64.abs().max(1.0));
}

proptest! {
    #[test]
    fn class_relabelling_leaves_predictive_unchanged(
        pairs in prop::collection::vec((0.05f64..30.0, 0u32..8), 2..8),
        rotate in 0usize..8,
    ) {
        prop_assume!(pairs.iter().map(|p| p.1).sum::<u32>() > 0);
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rotate % n);
        shuffled.reverse();
        let score = |ps: &[(f64, u32)]| {
            let alpha = DirichletParams::new(ps.iter().map(|p| p.0).collect()).unwrap();
            let counts = CountVector::new(ps.iter().map(|p| p.1).collect()).unwrap();
            log_predictive_stable(&alpha, &counts).unwrap()
        };
        let (a, b) = (score(&pairs), score(&shuffled));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn predictive_is_a_probability(
        alpha in prop::collection::vec(0.01f64..100.0, 2..6),
        seed in any::<u64>(),
        samples in 1u32..200,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u32; alpha.len()];
        for _ in 0..samples {
            counts[rng.random_range(0..alpha.len())] += 1;
        }
        let p = log_predictive_stable(
            &DirichletParams::new(alpha).unwrap(),
            &CountVector::new(counts).unwrap(),
        ).unwrap();
        prop_assert!(p <= 1e-12);
        prop_assert!(p.is_finite());
    }
}
