//! Property-based invariants across modules.

mod common;

use proptest::prelude::*;

use crowd_motion::atoms::assign_by_scores;
use crowd_motion::encode::encode_responses;
use crowd_motion::eval::{roc_auc, LabeledScore};
use crowd_motion::ingest::segment_bounds;
use crowd_motion::phrases::{phrase_response_from_matrix, MotionPhrase, PhraseUnit};
use crowd_motion::pipeline::PipelineConfig;
use crowd_motion::similarity::{chi_square, normalized_distance, similarity, ChannelNormalizers};
use crowd_motion::svm::{train_classifier, train_svr, SvmParams};

fn histogram(bins: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], bins).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        if s == 0.0 {
            raw
        } else {
            raw.iter().map(|v| v / s).collect()
        }
    })
}

fn pair(bins: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (histogram(bins), histogram(bins))
}

fn four(bins: usize) -> impl Strategy<Value = [Vec<f64>; 4]> {
    (histogram(bins), histogram(bins), histogram(bins), histogram(bins)).prop_map(|(a, b, c, d)| [a, b, c, d])
}

fn matrix(atoms: usize, slots: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, slots), atoms)
}

fn unit(atoms: usize, slots: usize) -> impl Strategy<Value = PhraseUnit> {
    (0..atoms, 0..slots, 0..slots).prop_map(|(atom_id, anchor, window)| PhraseUnit {
        atom_id,
        anchor,
        window,
    })
}

proptest! {
    #[test]
    fn segments_cover_the_clip((k, len) in (1usize..12).prop_flat_map(|k| (Just(k), k..400))) {
        let b = segment_bounds(len, k).unwrap();
        prop_assert_eq!(b.len(), k);
        prop_assert_eq!(b[0].0, 0);
        prop_assert_eq!(b[k - 1].1, len);
        let l = b[0].1 - b[0].0;
        // L is the largest length whose k half-overlapping windows fit.
        prop_assert!(l + (k - 1) * (l / 2) <= len);
        prop_assert!((l + 1) + (k - 1) * ((l + 1) / 2) > len);
        for (j, &(s, e)) in b.iter().enumerate() {
            prop_assert_eq!(s, j * (l / 2));
            if j + 1 < k {
                prop_assert_eq!(e - s, l);
                prop_assert!(b[j + 1].0 <= e, "consecutive segments overlap or touch");
            }
        }
        // Only the final segment stretches, by fewer than k frames.
        let extension = (b[k - 1].1 - b[k - 1].0) - l;
        prop_assert!(extension < k.max(2));
    }

    #[test]
    fn chi_square_symmetric_and_non_negative((a, b) in (1usize..20).prop_flat_map(pair)) {
        let ab = chi_square(&a, &b).unwrap();
        prop_assert_eq!(ab, chi_square(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(chi_square(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn normalized_distance_scales_inversely((a, b) in (1usize..20).prop_flat_map(pair), m in 0.01..10.0f64) {
        let d = normalized_distance(&a, &b, m).unwrap();
        let d2 = normalized_distance(&a, &b, 2.0 * m).unwrap();
        prop_assert!((d - 2.0 * d2).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn similarity_symmetric_and_bounded(
        (ha, hb) in (1usize..10).prop_flat_map(|bins| (four(bins), four(bins))),
        means in prop::array::uniform4(0.01..5.0f64),
    ) {
        let a = common::segment("a", 0, ha);
        let b = common::segment("b", 0, hb);
        let norms = ChannelNormalizers::new(means).unwrap();
        let s = similarity(&a, &b, &norms).unwrap();
        prop_assert_eq!(s, similarity(&b, &a, &norms).unwrap());
        prop_assert!(s > 0.0 && s <= 4.0);
        let all_zero = (0..4).all(|c| chi_square(&a.histograms[c], &b.histograms[c]).unwrap() == 0.0);
        prop_assert_eq!(s == 4.0, all_zero);
        prop_assert_eq!(similarity(&a, &a, &norms).unwrap(), 4.0);
    }

    #[test]
    fn adding_a_unit_never_raises_the_response(
        (m, units, extra) in (1usize..4, 1usize..7).prop_flat_map(|(a, s)| {
            (matrix(a, s), prop::collection::vec(unit(a, s), 1..4), unit(a, s))
        }),
    ) {
        let mut units = units;
        units.dedup_by_key(|u| (u.atom_id, u.anchor));
        let Ok(p) = MotionPhrase::new(units, None) else { return Ok(()); };
        let Some(q) = p.extended(extra) else { return Ok(()); };
        let rp = phrase_response_from_matrix(&p, &m).unwrap();
        let rq = phrase_response_from_matrix(&q, &m).unwrap();
        prop_assert!(rq <= rp);
        prop_assert_eq!(rp, common::phrase_response(&p, &m));
    }

    #[test]
    fn atom_part_is_order_invariant(
        (m, perm) in (1usize..5, 1usize..8).prop_flat_map(|(a, s)| {
            (matrix(a, s), Just((0..s).collect::<Vec<_>>()).prop_shuffle())
        }),
    ) {
        let permuted: Vec<Vec<f64>> = m.iter().map(|row| perm.iter().map(|&i| row[i]).collect()).collect();
        let a = encode_responses("v", &m, &[], false).unwrap();
        let b = encode_responses("v", &permuted, &[], false).unwrap();
        prop_assert_eq!(a.vector, b.vector);
    }

    #[test]
    fn reassignment_is_a_partition(
        (a, scores) in (1usize..5).prop_flat_map(|a| {
            (Just(a), prop::collection::vec(prop::collection::vec(-2.0..2.0f64, a), a..30))
        }),
    ) {
        let assignment = assign_by_scores(&scores, a);
        prop_assert_eq!(assignment.len(), scores.len());
        for j in 0..a {
            prop_assert!(assignment.contains(&j), "atom {} left empty", j);
        }
        prop_assert!(assignment.iter().all(|&x| x < a));
    }

    #[test]
    fn auc_invariances(
        data in prop::collection::vec((-20i32..20, any::<bool>()), 2..50),
    ) {
        let mut data = data;
        data[0].1 = true;
        data[1].1 = false;
        let make = |f: &dyn Fn(f64) -> f64, flip: bool| -> Vec<LabeledScore> {
            data.iter()
                .enumerate()
                .map(|(i, &(s, t))| LabeledScore { id: i.to_string(), score: f(s as f64), truth: t != flip })
                .collect()
        };
        let base = roc_auc(&make(&|x| x, false)).unwrap();
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
        let truth: Vec<bool> = data.iter().map(|d| d.1).collect();
        let exact = common::auc_rational(&scores, &truth);
        prop_assert_eq!(base.auc, *exact.numer() as f64 / *exact.denom() as f64);
        prop_assert_eq!(roc_auc(&make(&|x| (x / 7.0).tanh(), false)).unwrap().auc, base.auc);
        let flipped = roc_auc(&make(&|x| x, true)).unwrap().auc;
        prop_assert!((flipped - (1.0 - base.auc)).abs() <= 1e-15);
        // The ROC walk is monotone from (0,0) to (1,1).
        prop_assert_eq!(base.points[0], (0.0, 0.0));
        prop_assert_eq!(*base.points.last().unwrap(), (1.0, 1.0));
        for w in base.points.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn svm_duals_stay_in_the_box(
        (xs, ys) in (1usize..8, 1usize..4).prop_flat_map(|(n, d)| {
            (prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), n), prop::collection::vec(-3.0..3.0f64, n))
        }),
        c in 0.05..5.0f64,
        eps in 0.0..1.0f64,
    ) {
        let params = SvmParams { epsilon: eps, c_reg: c, ..SvmParams::default() };
        let fit = train_svr(&xs, &ys, &params).unwrap();
        for (&a, &s) in fit.alpha.iter().zip(&fit.alpha_star) {
            prop_assert!((0.0..=c).contains(&a) && (0.0..=c).contains(&s));
        }
        let balance: f64 = fit.alpha.iter().zip(&fit.alpha_star).map(|(a, s)| a - s).sum();
        prop_assert!(balance.abs() <= 1e-9 * (1.0 + c * xs.len() as f64));
        prop_assert_eq!(&fit.model, &train_svr(&xs, &ys, &params).unwrap().model);

        let labels: Vec<f64> = ys.iter().map(|&y| if y >= 0.0 { 1.0 } else { -1.0 }).collect();
        if labels.iter().any(|&l| l > 0.0) && labels.iter().any(|&l| l < 0.0) {
            let fit = train_classifier(&xs, &labels, &params).unwrap();
            prop_assert!(fit.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        }
    }

    #[test]
    fn config_text_round_trips(
        k in 1usize..10, atoms in 1usize..20, top in prop::option::of(1usize..50),
        eps in 0.0..2.0f64, c in 0.01..10.0f64, seed in any::<u64>(), l2 in any::<bool>(),
    ) {
        let cfg = PipelineConfig { k, atoms, top, epsilon: eps, c_reg: c, seed: Some(seed), l2, ..PipelineConfig::default() };
        let mut back = PipelineConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
