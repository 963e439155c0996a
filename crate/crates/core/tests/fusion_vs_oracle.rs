use onseg_core::decode::{decode_scores, offline_decode, path_objective};
use onseg_core::multiview::{fuse_pi, fuse_sv, fuse_weighted, SvDurationCounting};
use onseg_core::oracle::{brute_fusion, brute_offline, instances, EnumerationBudget, FusionObjective, InstanceFamily};
use onseg_core::scores::frame_log_likelihoods;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COUNT: usize = 200;

#[test]
fn sequence_voting_matches_enumeration() {
    let budget = EnumerationBudget::default();
    for (i, inst) in instances(21, COUNT, InstanceFamily::default()).enumerate() {
        let dp = fuse_sv(
            &inst.anchor,
            &inst.auxiliary,
            &inst.durations,
            &inst.grammar,
            SvDurationCounting::PerView,
        )
        .unwrap();
        let (path, score) = brute_fusion(
            &inst.anchor,
            &inst.auxiliary,
            &inst.durations,
            &inst.grammar,
            &FusionObjective::SequenceVoting,
            &budget,
        )
        .unwrap();
        assert_eq!(dp.path, path, "instance {i}");
        assert!((dp.log_score - score).abs() <= 1e-9, "instance {i}");
    }
}

#[test]
fn probabilistic_inference_matches_enumeration() {
    let budget = EnumerationBudget::default();
    for (i, inst) in instances(22, COUNT, InstanceFamily::default()).enumerate() {
        let dp = fuse_pi(&inst.anchor, &inst.auxiliary, &inst.durations, &inst.grammar).unwrap();
        let (path, score) = brute_fusion(
            &inst.anchor,
            &inst.auxiliary,
            &inst.durations,
            &inst.grammar,
            &FusionObjective::Probabilistic,
            &budget,
        )
        .unwrap();
        assert_eq!(dp.path, path, "instance {i}");
        assert!((dp.log_score - score).abs() <= 1e-9, "instance {i}");
        let shared = fuse_sv(
            &inst.anchor,
            &inst.auxiliary,
            &inst.durations,
            &inst.grammar,
            SvDurationCounting::Shared,
        )
        .unwrap();
        assert_eq!(shared, dp, "instance {i}");
    }
}

#[test]
fn weighted_inference_matches_enumeration() {
    let budget = EnumerationBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for (i, inst) in instances(24, COUNT, InstanceFamily::default()).enumerate() {
        let t_len = inst.anchor.num_frames();
        let random: Vec<f64> = (0..t_len).map(|_| rng.random_range(0.0..1.0)).collect();
        for c in [vec![0.0; t_len], vec![0.5; t_len], vec![1.0; t_len], random] {
            let dp = fuse_weighted(&inst.anchor, &inst.auxiliary, &c, &inst.durations, &inst.grammar).unwrap();
            let (path, score) = brute_fusion(
                &inst.anchor,
                &inst.auxiliary,
                &inst.durations,
                &inst.grammar,
                &FusionObjective::Weighted(c.clone()),
                &budget,
            )
            .unwrap();
            assert_eq!(dp.path, path, "instance {i} c {c:?}");
            assert!((dp.log_score - score).abs() <= 1e-9, "instance {i}");
        }
    }
}

#[test]
fn duplicate_view_identities() {
    let budget = EnumerationBudget::default();
    for (i, inst) in instances(25, COUNT, InstanceFamily::default()).enumerate() {
        let (a, b, dm, g) = (&inst.anchor, &inst.auxiliary, &inst.durations, &inst.grammar);
        let t_len = a.num_frames();
        let single_a = offline_decode(a, dm, g, None).unwrap();
        let single_b = offline_decode(b, dm, g, None).unwrap();
        let sv = fuse_sv(a, a, dm, g, SvDurationCounting::PerView).unwrap();
        assert_eq!(sv.path, single_a.path, "instance {i}");
        assert_eq!(
            fuse_weighted(a, b, &vec![1.0; t_len], dm, g).unwrap().path,
            single_a.path,
            "instance {i}"
        );
        assert_eq!(
            fuse_weighted(a, b, &vec![0.0; t_len], dm, g).unwrap().path,
            single_b.path,
            "instance {i}"
        );
        let (sv_oracle, _) = brute_fusion(a, a, dm, g, &FusionObjective::SequenceVoting, &budget).unwrap();
        assert_eq!(sv_oracle, brute_offline(a, dm, g, &budget).unwrap().0, "instance {i}");
        let (w1, _) = brute_fusion(a, b, dm, g, &FusionObjective::Weighted(vec![1.0; t_len]), &budget).unwrap();
        assert_eq!(w1, single_a.path, "instance {i}");
    }
}

#[test]
fn swapping_views_with_complementary_weights_keeps_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for inst in instances(27, 100, InstanceFamily::default()) {
        let (a, b, dm, g) = (&inst.anchor, &inst.auxiliary, &inst.durations, &inst.grammar);
        let c: Vec<f64> = (0..a.num_frames()).map(|_| rng.random_range(0.0..1.0)).collect();
        let flipped: Vec<f64> = c.iter().map(|v| 1.0 - v).collect();
        let forward = fuse_weighted(a, b, &c, dm, g).unwrap();
        let swapped = fuse_weighted(b, a, &flipped, dm, g).unwrap();
        assert!((forward.log_score - swapped.log_score).abs() <= 1e-9);
        let la = frame_log_likelihoods(a, dm).unwrap();
        let lb = frame_log_likelihoods(b, dm).unwrap();
        let mut w = la.clone();
        let mut w_swapped = lb.clone();
        for t in 0..a.num_frames() {
            let mut row = w.row_mut(t);
            row.zip_mut_with(&lb.row(t), |x, &y| *x = c[t] * *x + (1.0 - c[t]) * y);
            let mut row = w_swapped.row_mut(t);
            row.zip_mut_with(&la.row(t), |x, &y| *x = flipped[t] * *x + (1.0 - flipped[t]) * y);
        }
        let p1 = path_objective(&w, dm, &forward.path, 1.0).unwrap();
        let p2 = path_objective(&w_swapped, dm, &forward.path, 1.0).unwrap();
        assert!((p1 - p2).abs() <= 1e-9);
        assert_eq!(decode_scores(&w, dm, g, 1.0).unwrap().path, forward.path);
    }
}
