use proptest::prelude::*;
use structcap_core::dataset::{
    curate, dataset_stats, parse_manifest, rejection_reasons, to_jsonl, CurationFilter, ManifestRecord, RejectReason,
    DURATION_BUCKETS,
};

fn record() -> impl Strategy<Value = ManifestRecord> {
    (
        "[a-z]{1,6}",
        0.1f64..30.0,
        prop::option::of(prop::sample::select(vec!["street", "beach", "kitchen"])),
        prop::option::of(0.0f64..8.0),
        prop::option::of(prop::collection::vec(prop::sample::select(vec!["dog", "car", "person"]), 0..3)),
    )
        .prop_map(|(id, duration, scene, motion, instances)| {
            let mut r: ManifestRecord = serde_json::from_value(serde_json::json!({
                "id": id, "path": format!("{id}.mp4"), "duration": duration, "fps": 30.0
            }))
            .unwrap();
            r.scene = scene.map(str::to_string);
            r.motion_intensity = motion;
            r.instances = instances.map(|v| v.into_iter().map(str::to_string).collect());
            r
        })
}

fn filter() -> impl Strategy<Value = CurationFilter> {
    (0.0f64..10.0, 0.0f64..20.0, prop::option::of(0.0f64..5.0), any::<bool>()).prop_map(|(a, len, m, inst)| {
        CurationFilter {
            min_duration: a,
            max_duration: a + len,
            min_motion: m,
            require_instance: inst,
        }
    })
}

proptest! {
    #[test]
    fn curation_is_idempotent(records in prop::collection::vec(record(), 0..30), f in filter()) {
        let once = curate(&records, &f);
        let twice = curate(&once.kept, &f);
        prop_assert_eq!(&twice.kept, &once.kept);
        prop_assert!(twice.rejected.is_empty());
        prop_assert_eq!(once.kept.len() + once.rejected.len(), records.len());
    }

    #[test]
    fn tightening_only_removes(records in prop::collection::vec(record(), 0..30), f in filter(),
                               raise in 0.0f64..3.0, lower in 0.0f64..3.0, extra_motion in 0.0f64..2.0) {
        let tight = CurationFilter {
            min_duration: f.min_duration + raise,
            max_duration: (f.max_duration - lower).max(f.min_duration + raise),
            min_motion: f.min_motion.map(|m| m + extra_motion),
            require_instance: f.require_instance,
        };
        let loose = curate(&records, &f).kept;
        let strict = curate(&records, &tight).kept;
        prop_assert!(strict.len() <= loose.len());
        for r in &strict {
            prop_assert!(loose.contains(r));
        }
    }

    #[test]
    fn kept_records_meet_every_clause(records in prop::collection::vec(record(), 0..30), f in filter()) {
        for r in curate(&records, &f).kept {
            prop_assert!(r.duration >= f.min_duration && r.duration <= f.max_duration);
            if let Some(m) = f.min_motion {
                prop_assert!(r.motion_intensity.unwrap() >= m);
            }
            if f.require_instance {
                prop_assert!(!r.instances.as_ref().unwrap().is_empty());
            }
        }
    }

    #[test]
    fn manifest_jsonl_round_trips(mut records in prop::collection::vec(record(), 0..10)) {
        for (k, r) in records.iter_mut().enumerate() {
            r.id = format!("{}{k}", r.id);
        }
        prop_assert_eq!(parse_manifest(&to_jsonl(&records)).unwrap(), records);
    }

    #[test]
    fn stats_partition_the_records(records in prop::collection::vec(record(), 0..30)) {
        let s = dataset_stats(&records);
        prop_assert_eq!(s.records, records.len());
        prop_assert_eq!(s.duration_buckets.iter().map(|b| b.1).sum::<usize>(), records.len());
        prop_assert_eq!(s.scenes.values().sum::<usize>() + s.untagged_scenes, records.len());
        let total: f64 = records.iter().map(|r| r.duration).sum();
        prop_assert!((s.total_duration - total).abs() <= 1e-9 * (1.0 + total));
    }
}

#[test]
fn fifteen_seconds_is_out_of_the_default_window() {
    let rec = |id: &str, d: f64| -> ManifestRecord {
        serde_json::from_value(serde_json::json!({"id": id, "path": "x", "duration": d, "fps": 24.0})).unwrap()
    };
    let records = vec![rec("a", 15.0), rec("b", 2.0), rec("c", 10.0), rec("d", 1.99), rec("e", 6.0)];
    let out = curate(&records, &CurationFilter::default());
    let ids: Vec<&str> = out.kept.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["b", "c", "e"]);
    assert_eq!(rejection_reasons(&records[0], &CurationFilter::default()), [RejectReason::Duration]);
}

#[test]
fn missing_optional_data_fails_active_clauses() {
    let r: ManifestRecord = serde_json::from_value(serde_json::json!({"id": "a", "path": "x", "duration": 5.0, "fps": 24.0})).unwrap();
    let f = CurationFilter {
        min_motion: Some(0.0),
        require_instance: true,
        ..CurationFilter::default()
    };
    assert_eq!(rejection_reasons(&r, &f), [RejectReason::Motion, RejectReason::Instances]);
}

#[test]
fn bucket_labels() {
    let rec = |d: f64| -> ManifestRecord {
        serde_json::from_value(serde_json::json!({"id": "a", "path": "x", "duration": d, "fps": 24.0})).unwrap()
    };
    let s = dataset_stats(&[rec(1.0), rec(2.0), rec(9.99), rec(10.0), rec(40.0)]);
    let want: Vec<(String, usize)> = DURATION_BUCKETS.iter().map(|l| l.to_string()).zip([1, 2, 2]).collect();
    assert_eq!(s.duration_buckets, want);
}

#[test]
fn duplicate_ids_are_refused() {
    let line = "{\"id\": \"a\", \"path\": \"x\", \"duration\": 1.0, \"fps\": 1.0}\n";
    assert!(parse_manifest(&line.repeat(2)).is_err());
}

#[test]
fn manifest_errors_name_the_line() {
    let err = parse_manifest("{\"id\": \"a\", \"path\": \"x\", \"duration\": 1.0, \"fps\": 1.0}\n\n{oops}\n").unwrap_err();
    assert!(err.to_string().contains('3'), "{err}");
}
