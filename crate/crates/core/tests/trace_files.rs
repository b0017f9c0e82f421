use rasim::engine::Scenario;
use rasim::workload::{demand_at, EpisodeTrace};
use rasim::ExperimentConfig;

#[test]
fn sampled_traces_survive_a_file_round_trip() {
    let sc = Scenario::from_config(&ExperimentConfig::reference()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for seed in [0, 1, 99] {
        let trace = sc.trace(seed);
        let path = dir.path().join(format!("trace{seed}.txt"));
        trace.write(&path).unwrap();
        let back = EpisodeTrace::read(&path).unwrap();
        assert_eq!(back, trace);
        for t in [1, 15, 30] {
            assert_eq!(demand_at(&back, t), demand_at(&trace, t));
        }
    }
}

#[test]
fn missing_trace_file_is_an_io_error() {
    let err = EpisodeTrace::read("/no/such/trace.txt").unwrap_err();
    assert_eq!(err.kind(), "io");
}
