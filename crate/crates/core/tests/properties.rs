use std::collections::HashSet;

use latent_cascade::metrics::{sample_quality, w1_distance};
use latent_cascade::numcore::{AdamConfig, AdamState, Rng, Tensor};
use latent_cascade::vae::{kl_to_standard_normal, GaussianPosterior};
use proptest::prelude::*;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Replicates each sorted sample up to lcm(n, m) atoms, so both quantile
/// functions live on one uniform grid, then averages the gaps.
fn w1_brute(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let l = a.len() / gcd(a.len(), b.len()) * b.len();
    let expand = |s: &[f64]| -> Vec<f64> {
        s.iter()
            .flat_map(|&v| std::iter::repeat_n(v, l / s.len()))
            .collect()
    };
    let (ea, eb) = (expand(&a), expand(&b));
    ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).sum::<f64>() / l as f64
}

/// KL(N(mu, e^lv) ‖ N(0, 1)) by composite Simpson integration over ±14σ.
fn kl_quadrature(mu: f64, lv: f64) -> f64 {
    let sd = (0.5 * lv).exp();
    let (lo, hi) = (mu - 14.0 * sd, mu + 14.0 * sd);
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let f = |z: f64| {
        let log_q =
            -0.5 * ((z - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let log_p = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
        log_q.exp() * (log_q - log_p)
    };
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn kl1(mu: f64, lv: f64) -> f64 {
    let p = GaussianPosterior::new(
        Tensor::from_f64([1, 1], &[mu]).unwrap(),
        Tensor::from_f64([1, 1], &[lv]).unwrap(),
    )
    .unwrap();
    kl_to_standard_normal(&p).unwrap()
}

#[test]
fn kl_matches_quadrature_on_random_posteriors() {
    let mut rng = Rng::new(2024);
    for _ in 0..100 {
        let mu = -3.0 + 6.0 * rng.uniform();
        let lv = -2.0 + 4.0 * rng.uniform();
        let (a, q) = (kl1(mu, lv), kl_quadrature(mu, lv));
        assert!((a - q).abs() < 1e-6, "mu {mu} lv {lv}: {a} vs {q}");
    }
}

#[test]
fn w1_matches_brute_force_on_random_pairs() {
    let mut rng = Rng::new(99);
    for _ in 0..500 {
        let n = 1 + rng.below(50);
        let m = 1 + rng.below(50);
        let a: Vec<f64> = (0..n).map(|_| rng.standard_normal() * 3.0).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.uniform() * 5.0 - 1.0).collect();
        let d = w1_distance(&a, &b).unwrap();
        assert!((d - w1_brute(&a, &b)).abs() < 1e-9);
    }
}

#[test]
fn adam_runs_are_bitwise_repeatable() {
    let run = || {
        let mut rng = Rng::new(5);
        let mut p: Tensor<f64> = rng.normal_tensor([4, 3]);
        let mut s = AdamState::new(AdamConfig::default());
        for _ in 0..20 {
            let g: Tensor<f64> = rng.normal_tensor([4, 3]);
            s.step(&mut [&mut p], &[g]).unwrap();
        }
        p.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

fn multiset() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, 1..30)
}

proptest! {
    #[test]
    fn kl_is_nonnegative(mu in -10.0f64..10.0, lv in -8.0f64..8.0) {
        prop_assert!(kl1(mu, lv) >= 0.0);
    }

    #[test]
    fn kl_vanishes_only_at_the_prior(mu in -3.0f64..3.0, lv in -3.0f64..3.0) {
        prop_assume!(mu.abs() > 1e-3 || lv.abs() > 1e-3);
        prop_assert!(kl1(mu, lv) > 0.0);
    }

    #[test]
    fn w1_agrees_with_oracle(a in multiset(), b in multiset()) {
        prop_assert!((w1_distance(&a, &b).unwrap() - w1_brute(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn w1_is_a_metric(a in multiset(), b in multiset(), c in multiset()) {
        let ab = w1_distance(&a, &b).unwrap();
        let ba = w1_distance(&b, &a).unwrap();
        let bc = w1_distance(&b, &c).unwrap();
        let ac = w1_distance(&a, &c).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert_eq!(w1_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn w1_positive_between_different_distributions(a in multiset(), shift in 0.01f64..5.0) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        prop_assert!(w1_distance(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn w1_translation(a in multiset(), c in -50.0f64..50.0) {
        let b: Vec<f64> = a.iter().map(|v| v + c).collect();
        prop_assert!((w1_distance(&a, &b).unwrap() - c.abs()).abs() < 1e-9);
    }

    #[test]
    fn sample_quality_permutation(
        picks in prop::collection::vec(0usize..8, 1..40),
        seed in any::<u64>(),
        k in 1usize..50,
    ) {
        let pool = ["C", "CCO", "C1CC", "c1ccccc1", "C(", "O=C=O", "C.C", "CN"];
        let gen: Vec<&str> = picks.iter().map(|&i| pool[i]).collect();
        let train: HashSet<String> = ["CCO".to_string(), "CN".to_string()].into();
        let mut shuffled = gen.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        let a = sample_quality(&gen, &train, k).unwrap();
        let b = sample_quality(&shuffled, &train, k).unwrap();
        prop_assert_eq!(a.valid_fraction, b.valid_fraction);
        prop_assert_eq!(a.novelty, b.novelty);
        prop_assert_eq!((a.valid, a.invalid, a.unsupported), (b.valid, b.invalid, b.unsupported));
        // unique@k only looks at the first k strings
        let mut tail_changed = gen.clone();
        for s in tail_changed.iter_mut().skip(a.k) {
            *s = "CCCCCC";
        }
        let c = sample_quality(&tail_changed, &train, k).unwrap();
        prop_assert_eq!(a.unique_at_k, c.unique_at_k);
        for f in [a.valid_fraction, a.unique_at_k, a.novelty] {
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
