use phase_core::Schedule;

#[test]
fn closed_form_matches_direct_sum() {
    for k in 0..=12 {
        for g in 1..=64 {
            for f in 0..=16 {
                let s = Schedule::new(k, g, f).unwrap();
                assert_eq!(s.total_time(), s.total_time_by_sum(), "K={k} G={g} F={f}");
                let count: usize = s.stages().map(|j| s.detections_at_stage(j).unwrap()).sum();
                assert_eq!(s.detection_count(), count);
                assert_eq!(s.parameter_count(), 2 * count);
            }
        }
    }
}

#[test]
fn largest_configuration() {
    assert_eq!(Schedule::new(9, 6, 2).unwrap().total_time(), 8164);
}

#[test]
fn total_time_strictly_increases_with_stage_count() {
    for (g, f) in [(1, 0), (2, 1), (6, 2)] {
        let times: Vec<u64> = (0..=12)
            .map(|k| Schedule::new(k, g, f).unwrap().total_time())
            .collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }
}
