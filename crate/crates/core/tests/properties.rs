use std::collections::HashMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use syntax_smc::inference::{ess, log_ess, smc, RunConfig};
use syntax_smc::logspace::log_sum_exp;
use syntax_smc::metrics::{bracket_f1, brackets, diversity, match_metrics};
use syntax_smc::oracle::reference_instance;
use syntax_smc::proposals::PriorProposal;
use syntax_smc::tetratag::{decode, encode, is_valid_prefix};
use syntax_smc::tree::random::random_tree;
use syntax_smc::tree::{parse_bracketed, pos_sequence, serialize_bracketed, ConstituencyTree};

fn tree(seed: u64, max_leaves: usize) -> ConstituencyTree {
    random_tree(&mut ChaCha8Rng::seed_from_u64(seed), max_leaves)
}

fn multiset(t: &ConstituencyTree) -> HashMap<syntax_smc::metrics::Bracket, usize> {
    let mut m = HashMap::new();
    for b in brackets(t) {
        *m.entry(b).or_insert(0) += 1;
    }
    m
}

proptest! {
    #[test]
    fn codec_round_trip(seed in any::<u64>(), n in 1usize..=20) {
        let t = tree(seed, n);
        let tags = encode(&t);
        prop_assert_eq!(tags.len(), 2 * t.leaf_count() - 1);
        for k in 0..=tags.len() {
            prop_assert!(is_valid_prefix(&tags.tags()[..k]));
        }
        prop_assert_eq!(decode(&tags, &t.words(), &pos_sequence(&t)).unwrap(), t);
    }

    #[test]
    fn bracketed_text_round_trip(seed in any::<u64>(), n in 1usize..=20) {
        let t = tree(seed, n);
        prop_assert_eq!(parse_bracketed(&serialize_bracketed(&t)).unwrap(), t);
    }

    #[test]
    fn f1_is_symmetric_and_bounded(a in any::<u64>(), b in any::<u64>(), n in 1usize..=8) {
        let (x, y) = (tree(a, n), tree(b, n));
        let f = bracket_f1(&x, &y);
        prop_assert!((0.0..=100.0).contains(&f));
        prop_assert!((f - bracket_f1(&y, &x)).abs() < 1e-9);
        prop_assert_eq!(bracket_f1(&x, &x), 100.0);
    }

    #[test]
    fn f1_is_100_iff_multisets_agree(a in any::<u64>(), b in any::<u64>(), n in 1usize..=5) {
        let (x, y) = (tree(a, n), tree(b, n));
        let same = multiset(&x) == multiset(&y) && x.leaf_count() == y.leaf_count();
        prop_assert_eq!(bracket_f1(&x, &y) == 100.0, same);
    }

    #[test]
    fn exact_implies_structure_implies_length(a in any::<u64>(), b in any::<u64>(), n in 1usize..=4) {
        let x = tree(a, n);
        let y = tree(b, n);
        let relabeled = x.with_words(&vec!["w"; x.leaf_count()]);
        for (p, q) in [(&x, &y), (&relabeled, &x), (&x, &x)] {
            let m = match_metrics(p, q);
            prop_assert!(!m.exact || m.structure);
            prop_assert!(!m.structure || m.correct_length);
        }
        prop_assert!(match_metrics(&relabeled, &x).exact);
    }

    #[test]
    fn diversity_bounds_and_order(
        sents in prop::collection::vec(prop::collection::vec(0u8..4, 1..6), 1..6),
        n in 1usize..=3,
    ) {
        let s: Vec<Vec<String>> = sents
            .iter()
            .map(|s| s.iter().map(|w| w.to_string()).collect())
            .collect();
        let d = diversity(&s, n);
        prop_assert!(d <= 1.0);
        if n == 1 {
            prop_assert!(d > 0.0);
        }
        let mut r = s.clone();
        r.reverse();
        prop_assert_eq!(d, diversity(&r, n));
    }

    #[test]
    fn ess_is_between_one_and_m(ws in prop::collection::vec(1e-6f64..1.0, 1..50), c in 1e-3f64..1e3) {
        let e = ess(&ws).unwrap();
        prop_assert!(e >= 1.0 - 1e-9 && e <= ws.len() as f64 + 1e-9);
        let scaled: Vec<f64> = ws.iter().map(|w| w * c).collect();
        prop_assert!((ess(&scaled).unwrap() - e).abs() < 1e-9 * e);
        let logs: Vec<f64> = ws.iter().map(|w| w.ln()).collect();
        prop_assert!((log_ess(&logs).unwrap().exp() - e).abs() < 1e-9 * e);
    }

    #[test]
    fn log_sum_exp_matches_linear(ws in prop::collection::vec(1e-6f64..1.0, 1..20)) {
        let logs: Vec<f64> = ws.iter().map(|w| w.ln()).collect();
        let total: f64 = ws.iter().sum();
        prop_assert!((log_sum_exp(&logs) - total.ln()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shaping_telescopes_without_resampling(lm_seed in 0u64..1000, seed in any::<u64>()) {
        let inst = reference_instance(lm_seed);
        let cfg = RunConfig { particles: 8, tau: 0.0, seed, ..Default::default() };
        let r = smc(&inst.lm, &PriorProposal::new(inst.lm.clone()), &inst.oracle, &inst.oracle, &inst.target, &cfg)
            .unwrap();
        for p in &r.particles {
            prop_assert!(!p.active);
            if p.log_weight.is_finite() {
                let want = p.log_prior - p.log_proposal + p.log_potential.unwrap();
                prop_assert!((p.log_weight - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
    }
}
