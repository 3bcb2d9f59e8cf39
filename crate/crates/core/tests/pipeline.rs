use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rule_ood::detection::{BaselineConfig, BaselineFile, Metric, Mode};
use rule_ood::histogram::HitTable;
use rule_ood::synth::{GaussianMixture, GridSource, SampleSource};
use rule_ood::{
    build_baselines, detect_single, hit_matrix, induce_tree, make_splits, ruleset_hits,
    tree_to_rules, Dataset, Exec, HitMatrix, InducerConfig, Origin, Ruleset,
};

fn mixture(n: usize, seed: u64) -> Dataset {
    GaussianMixture::two_class()
        .sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap()
}

fn induced(seed: u64) -> Ruleset {
    let data = mixture(8000, seed);
    tree_to_rules(&induce_tree(&data, &InducerConfig::default(), Exec::default()).unwrap()).unwrap()
}

fn training(rules: &Ruleset, data: &Dataset, n_s: usize, n_tr: usize, exec: Exec) -> HitMatrix {
    let splits = make_splits(data, n_s, n_tr, 9, Origin::Training).unwrap();
    hit_matrix(rules, data, &splits, &[], exec).unwrap()
}

#[test]
fn induced_rules_partition_the_space() {
    let rules = induced(1);
    assert!(rules.len() > 1);
    let probe = mixture(3000, 2);
    for i in 0..probe.len() {
        let hits = ruleset_hits(&rules, &probe.row_ref(i)).unwrap();
        assert_eq!(hits.count_ones(), 1, "row {i}");
    }
}

#[test]
fn training_columns_are_in_distribution() {
    let rules = induced(3);
    let data = mixture(300 * 12, 4);
    let tr = training(&rules, &data, 300, 12, Exec::default());
    let base = build_baselines(&tr, &BaselineConfig::single(0), Exec::default()).unwrap();
    for h in tr.training() {
        let op = h.clone().with_origin(Origin::Operational);
        let report = detect_single(&tr, &op, &base).unwrap();
        assert!(!report.is_ood(), "{report:?}");
    }
}

#[test]
fn baselines_do_not_depend_on_execution_policy() {
    let rules = induced(5);
    let data = mixture(200 * 14, 6);
    for config in [BaselineConfig::single(1), BaselineConfig::group(4, 1)] {
        let files: Vec<String> = [Exec::Sequential, Exec::default()]
            .into_iter()
            .map(|exec| {
                let tr = training(&rules, &data, 200, 14, exec);
                let baselines = build_baselines(&tr, &config, exec).unwrap();
                BaselineFile {
                    baselines,
                    training: tr,
                }
                .to_json()
                .unwrap()
            })
            .collect();
        assert_eq!(files[0], files[1]);
        let back = BaselineFile::from_json(&files[0]).unwrap();
        assert_eq!(back.to_json().unwrap(), files[0]);
    }
}

#[test]
fn more_metrics_never_clear_a_flag() {
    let rules = induced(7);
    let data = mixture(250 * 10, 8);
    let tr = training(&rules, &data, 250, 10, Exec::default());
    let shifted = GaussianMixture::two_class()
        .shifted(0.4, 2)
        .sample(250 * 30, &mut ChaCha8Rng::seed_from_u64(9))
        .unwrap();
    let bound = rules.bind(shifted.feature_names()).unwrap();
    let table = HitTable::compute(&bound, &shifted, Exec::default()).unwrap();
    let splits = make_splits(&shifted, 250, 30, 1, Origin::Operational).unwrap();
    let ops = table.histograms(&splits, Exec::default()).unwrap();
    let full = BaselineConfig::single(0);
    let full_base = build_baselines(&tr, &full, Exec::default()).unwrap();
    let mut seen_ood = 0;
    for metric in [Metric::Wmi, Metric::L1, Metric::L2] {
        let one = BaselineConfig {
            metrics: vec![metric],
            ..full.clone()
        };
        let base = build_baselines(&tr, &one, Exec::default()).unwrap();
        for op in &ops {
            let alone = detect_single(&tr, op, &base).unwrap();
            let all = detect_single(&tr, op, &full_base).unwrap();
            assert_eq!(alone.per_metric[&metric], all.per_metric[&metric]);
            if alone.is_ood() {
                seen_ood += 1;
                assert!(all.is_ood());
            }
        }
    }
    assert!(seen_ood > 0);
}

#[test]
fn grid_tilt_is_detected_in_both_modes() {
    let grid = GridSource::uniform(3, 4);
    let rules = grid.aligned_rules().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data = grid.sample(400 * 12, &mut rng).unwrap();
    let tr = training(&rules, &data, 400, 12, Exec::default());
    let far = grid.tilted(3.0).sample(400 * 4, &mut rng).unwrap();
    let bound = rules.bind(far.feature_names()).unwrap();
    let table = HitTable::compute(&bound, &far, Exec::default()).unwrap();
    let splits = make_splits(&far, 400, 4, 2, Origin::Operational).unwrap();
    let ops = table.histograms(&splits, Exec::default()).unwrap();
    for (config, group) in [
        (BaselineConfig::single(0), &ops[..1]),
        (BaselineConfig::group(4, 0), &ops[..]),
    ] {
        let file = BaselineFile {
            baselines: build_baselines(&tr, &config, Exec::default()).unwrap(),
            training: tr.clone(),
        };
        let report = file.detect(group).unwrap();
        assert!(report.is_ood(), "{:?}: {report:?}", config.mode);
        assert!(report.flagged().contains(&Metric::L1));
        assert_eq!(report.mode, config.mode);
    }
    assert_eq!(Mode::Group.to_string(), "group");
}

#[test]
fn csv_round_trip_keeps_rows_and_labels() {
    let data = mixture(50, 11);
    let mut buf = Vec::new();
    data.write_csv(&mut buf, "label").unwrap();
    let back = Dataset::from_csv_reader(buf.as_slice(), Some("label")).unwrap();
    assert_eq!(back, data);
    let unlabeled = Dataset::from_csv_reader(buf.as_slice(), None).unwrap();
    assert_eq!(unlabeled.width(), data.width() + 1);
    assert!(Dataset::from_csv_reader(buf.as_slice(), Some("class")).is_err());
}
