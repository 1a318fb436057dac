use hitstat::chain::point_mass;
use hitstat::geomsum::{geom_sum_bound, geom_sum_pmf_vec, neg_binomial_pmf, GeomParams};
use hitstat::spectral::killed_return_probs;
use hitstat::{
    evolve, hitting_pmf, killed_spectrum, loop_erase, maximal_row, reconstruct, stationary,
    surprise_pmf, ChainSpec,
};
use proptest::prelude::*;

/// Row-normalized matrix from positive-or-zero weights; every row keeps at
/// least its diagonal so it is never empty.
fn chain_strategy(max_n: usize) -> impl Strategy<Value = ChainSpec> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(0u32..5, n), n).prop_map(move |w| {
            let m: Vec<Vec<f64>> = w
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let mut r: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                    r[i] += 1.0;
                    let s: f64 = r.iter().sum();
                    r.iter().map(|v| v / s).collect()
                })
                .collect();
            ChainSpec::from_dense(&m).unwrap()
        })
    })
}

/// Like `chain_strategy` but every entry is positive, so the chain is
/// irreducible and aperiodic.
fn positive_chain(max_n: usize) -> impl Strategy<Value = ChainSpec> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(1u32..6, n), n).prop_map(|w| {
            let m: Vec<Vec<f64>> = w
                .iter()
                .map(|row| {
                    let s: f64 = row.iter().map(|&v| v as f64).sum();
                    row.iter().map(|&v| v as f64 / s).collect()
                })
                .collect();
            ChainSpec::from_dense(&m).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn json_round_trip_is_exact(chain in chain_strategy(7)) {
        let back = ChainSpec::from_json_str(&chain.to_json_string()).unwrap();
        prop_assert_eq!(back, chain);
    }

    #[test]
    fn hitting_pmf_and_tail_sum_to_one(chain in chain_strategy(6), h in 0usize..60) {
        let n = chain.n();
        for x in 0..n {
            for y in 0..n {
                let p = hitting_pmf(&chain, x, y, h);
                let total: f64 = p.pmf.iter().sum::<f64>() + p.tail;
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(p.pmf.iter().all(|&v| (0.0..=1.0 + 1e-15).contains(&v)));
                prop_assert_eq!(p.pmf[0], if x == y { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn hitting_mass_is_below_transition_mass(chain in chain_strategy(6), t in 1usize..30) {
        // {τ(y) = t} ⊆ {X_t = y}.
        let n = chain.n();
        for x in 0..n {
            let pt = evolve(&chain, &point_mass(n, x), t).unwrap();
            for (y, &mass) in pt.iter().enumerate() {
                prop_assert!(hitting_pmf(&chain, x, y, t).pmf[t] <= mass + 1e-13);
            }
        }
    }

    #[test]
    fn surprise_is_sum_over_targets(chain in chain_strategy(5), h in 1usize..25) {
        let n = chain.n();
        let s = surprise_pmf(&chain, 0, h);
        for t in 1..=h {
            let direct: f64 = (0..n).map(|y| hitting_pmf(&chain, 0, y, h).pmf[t]).sum();
            prop_assert!((s.s[t] - direct).abs() < 1e-12);
            prop_assert!(s.s[t] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn stationary_is_fixed(chain in positive_chain(8)) {
        let pi = stationary(&chain).unwrap();
        let sum: f64 = pi.pi.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        let moved = chain.step(&pi.pi);
        for (a, b) in moved.iter().zip(&pi.pi) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pstar_dominates_every_time(chain in chain_strategy(5), h in 1usize..40) {
        let n = chain.n();
        let row = maximal_row(&chain, 0, h);
        let mut dist = point_mass(n, 0);
        for _ in 0..=h {
            for y in 0..n {
                prop_assert!(dist[y] <= row.pstar[y] + 1e-15);
            }
            dist = chain.step(&dist);
        }
    }

    #[test]
    fn killed_spectrum_matches_dynamic_program(chain in positive_chain(6)) {
        let pi = stationary(&chain).unwrap();
        // Symmetrize into a reversible chain: P'(x,y) ∝ π(x)P(x,y) + π(y)P(y,x).
        let n = chain.n();
        let m: Vec<Vec<f64>> = (0..n)
            .map(|x| {
                let row: Vec<f64> = (0..n)
                    .map(|y| pi.pi[x] * chain.prob(x, y) + pi.pi[y] * chain.prob(y, x))
                    .collect();
                let s: f64 = row.iter().sum();
                row.iter().map(|v| v / s).collect()
            })
            .collect();
        let rev = ChainSpec::from_dense(&m).unwrap();
        let u = [n - 1];
        let spec = killed_spectrum(&rev, 0, &u).unwrap();
        let dp = killed_return_probs(&rev, 0, &u, 40).unwrap();
        for (t, v) in dp.iter().enumerate() {
            prop_assert!((reconstruct(&spec, t) - v).abs() < 1e-10);
        }
        prop_assert!(spec.min_coefficient() >= -1e-12);
    }

    #[test]
    fn geom_sum_pmf_is_sub_stochastic_and_bounded(q in prop::collection::vec(0.0f64..0.95, 1..6)) {
        let n = q.len();
        let params = GeomParams::new(q).unwrap();
        let pmf = geom_sum_pmf_vec(&params, 200);
        prop_assert!(pmf.iter().sum::<f64>() <= 1.0 + 1e-12);
        for (t, &p) in pmf.iter().enumerate().skip(1) {
            prop_assert!(p <= geom_sum_bound(n, t) + 1e-12);
        }
    }

    #[test]
    fn negbin_matches_product_formula(n in 1u64..8, m in 0u64..40, p in 0.05f64..0.95) {
        // C(n+m-1, m) p^n (1-p)^m by direct multiplication.
        let mut c = 1.0;
        for i in 0..m {
            c *= (n + i) as f64 / (i + 1) as f64;
        }
        let direct = c * p.powi(n as i32) * (1.0 - p).powi(m as i32);
        let got = neg_binomial_pmf(n, m, p);
        prop_assert!((got - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-300);
    }

    #[test]
    fn loop_erasure_is_simple(path in prop::collection::vec(0usize..6, 1..60)) {
        let le = loop_erase(&path);
        prop_assert_eq!(le.first(), path.first());
        prop_assert_eq!(le.last(), path.last());
        let mut seen = std::collections::HashSet::new();
        prop_assert!(le.iter().all(|v| seen.insert(*v)));
    }
}
