use onseg_core::decode::{offline_decode, online_decode_full, OnlineDecoder};
use onseg_core::oracle::{brute_offline, brute_online, instances, EnumerationBudget, InstanceFamily};

#[test]
fn offline_matches_enumeration() {
    let budget = EnumerationBudget::default();
    for (i, inst) in instances(11, 300, InstanceFamily::default()).enumerate() {
        let dp = offline_decode(&inst.anchor, &inst.durations, &inst.grammar, None).unwrap();
        let (path, score) = brute_offline(&inst.anchor, &inst.durations, &inst.grammar, &budget).unwrap();
        assert_eq!(dp.path, path, "instance {i}");
        assert!(
            (dp.log_score - score).abs() <= 1e-9,
            "instance {i}: {} vs {score}",
            dp.log_score
        );
    }
}

#[test]
fn online_matches_enumeration_at_every_frame() {
    let budget = EnumerationBudget::default();
    for (i, inst) in instances(12, 200, InstanceFamily::default()).enumerate() {
        let out = online_decode_full(&inst.anchor, &inst.durations, &inst.grammar).unwrap();
        for t in 1..=inst.anchor.num_frames() {
            let (label, path, _) = brute_online(&inst.anchor, t, &inst.durations, &inst.grammar, &budget).unwrap();
            assert_eq!(out.labels[t - 1], label, "instance {i} t {t}");
            assert_eq!(out.paths[t - 1], path, "instance {i} t {t}");
        }
    }
}

#[test]
fn every_intermediate_path_is_a_grammar_prefix() {
    for inst in instances(13, 100, InstanceFamily::default()) {
        let mut dec = OnlineDecoder::new(&inst.durations, &inst.grammar).unwrap();
        for r in inst.anchor.posteriors().rows() {
            dec.step_posteriors(r).unwrap();
            assert!(inst.grammar.is_valid_prefix(&dec.current_path().actions()));
            for h in dec.frontier() {
                assert!(h.log_score.is_finite());
                assert!(inst.grammar.is_valid_prefix(&inst.grammar.prefix_of(h.node)));
            }
        }
    }
}

#[test]
fn online_is_causal() {
    for inst in instances(14, 60, InstanceFamily::default()) {
        let full = online_decode_full(&inst.anchor, &inst.durations, &inst.grammar).unwrap();
        for t in 1..inst.anchor.num_frames() {
            let cut = online_decode_full(&inst.anchor.truncated(t), &inst.durations, &inst.grammar).unwrap();
            assert_eq!(&full.labels[..t], &cut.labels[..]);
        }
    }
}
