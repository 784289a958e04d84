use proptest::prelude::*;
use quantstream::inference::{uniform_bands, SparsityEstimate};
use quantstream::score::{g, ScheduleConfig};
use quantstream::{ConditionalConfig, ConditionalState, EstimateMode, Law, QuantileGrid, QuantileState, Snapshot};

fn sorted_row(row: &[f64]) -> bool {
    row.windows(2).all(|w| w[0] <= w[1])
}

fn schedule() -> impl Strategy<Value = ScheduleConfig> {
    (0.05f64..5.0, 0.501f64..0.999, 0.5001f64..4.0).prop_map(|(c, b, a)| ScheduleConfig::new(c, b, a).unwrap())
}

fn grid(max: usize) -> impl Strategy<Value = QuantileGrid> {
    prop::collection::btree_set(1u32..1000, 1..=max)
        .prop_map(|s| QuantileGrid::new(s.into_iter().map(|v| v as f64 / 1000.0).collect()).unwrap())
}

fn observation() -> impl Strategy<Value = f64> {
    prop_oneof![
        -5.0f64..5.0,
        Just(0.0),
        (-3i32..3).prop_map(f64::from),
        (-1e6f64..1e6),
        (1e-9f64..1e-6),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn rows_stay_ordered_after_every_update(
        sched in schedule(),
        grid in grid(9),
        init in -3.0f64..3.0,
        data in prop::collection::vec(prop::collection::vec(observation(), 2), 1..80),
    ) {
        let mut state = QuantileState::init(2, grid, sched, vec![init, -init]).unwrap();
        for obs in &data {
            state.update(obs).unwrap();
            for row in state.raw().iter().chain(state.averaged()) {
                prop_assert!(sorted_row(row), "{row:?}");
            }
        }
    }

    #[test]
    fn conditional_rows_stay_ordered_when_guaranteed(
        c in 0.05f64..3.0,
        beta in 0.501f64..0.999,
        h in 0.05f64..1.0,
        extra in 0.0f64..2.0,
        grid in grid(5),
        data in prop::collection::vec((0.0f64..1.0, -3.0f64..3.0), 1..60),
    ) {
        let a = (1.0 / (4.0 * h)).max(0.5001) + extra;
        let cfg = ConditionalConfig::new(vec![0.25, 0.5, 0.75], h, grid, ScheduleConfig::new(c, beta, a).unwrap()).unwrap();
        prop_assert!(cfg.guarantees_monotonicity());
        let mut state = ConditionalState::new(cfg, 0.0).unwrap();
        for &(x, y) in &data {
            state.update(x, y).unwrap();
            for row in state.iterates().iter().chain(state.averaged()) {
                prop_assert!(sorted_row(row), "{row:?}");
            }
        }
    }

    #[test]
    fn snapshot_round_trip_is_exact(
        sched in schedule(),
        grid in grid(6),
        data in prop::collection::vec(-1e3f64..1e3, 0..40),
        rest in prop::collection::vec(-1e3f64..1e3, 0..40),
    ) {
        let mut state = QuantileState::univariate(grid, sched).unwrap();
        state.merge_stream(data.iter().map(|&x| [x])).unwrap();
        let restored = QuantileState::from_snapshot(Snapshot::from_json(&state.snapshot().to_json()).unwrap()).unwrap();
        prop_assert_eq!(&restored, &state);

        let mut a = state;
        let mut b = restored;
        a.merge_stream(rest.iter().map(|&x| [x])).unwrap();
        b.merge_stream(rest.iter().map(|&x| [x])).unwrap();
        prop_assert_eq!(a.snapshot().to_json(), b.snapshot().to_json());
    }

    #[test]
    fn series_evolve_independently(
        sched in schedule(),
        grid in grid(4),
        data in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 1..50),
    ) {
        let mut joint = QuantileState::init(2, grid.clone(), sched, vec![0.0, 0.0]).unwrap();
        let mut first = QuantileState::univariate(grid.clone(), sched).unwrap();
        let mut second = QuantileState::univariate(grid, sched).unwrap();
        for &(u, v) in &data {
            joint.update(&[u, v]).unwrap();
            first.update(&[u]).unwrap();
            second.update(&[v]).unwrap();
        }
        prop_assert_eq!(&joint.raw()[0], &first.raw()[0]);
        prop_assert_eq!(&joint.averaged()[1], &second.averaged()[0]);
    }

    #[test]
    fn ramp_is_monotone_and_bounded(x in -1e3f64..1e3, dx in 0.0f64..10.0) {
        let (lo, hi) = (g(x).unwrap(), g(x + dx).unwrap());
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(lo <= hi);
    }

    #[test]
    fn bands_are_centered_and_ordered(
        data in prop::collection::vec(-3.0f64..3.0, 5..60),
        c in 0.0f64..4.0,
    ) {
        let grid = QuantileGrid::new(vec![0.25, 0.5, 0.75]).unwrap();
        let mut state = QuantileState::univariate(grid.clone(), ScheduleConfig::default()).unwrap();
        state.merge_stream(data.iter().map(|&x| [x])).unwrap();
        let sparsity = SparsityEstimate::known(&[Law::standard_normal()], &grid).unwrap();
        let est = state.estimates(EstimateMode::Averaged);
        for (b, &y) in uniform_bands(&state, &sparsity, c).unwrap().iter().zip(&est[0]) {
            prop_assert!(b.lo <= b.estimate && b.estimate <= b.hi);
            prop_assert_eq!(b.estimate, y);
            prop_assert!(((b.hi - b.estimate) - (b.estimate - b.lo)).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn invalid_updates_leave_state_untouched() {
    let mut state = QuantileState::init(2, QuantileGrid::deciles(), ScheduleConfig::default(), vec![0.0, 1.0]).unwrap();
    state.update(&[0.3, 0.4]).unwrap();
    let before = state.clone();
    assert!(state.update(&[f64::NAN, 0.0]).is_err());
    assert!(state.update(&[1.0]).is_err());
    assert!(state.update(&[0.0, f64::INFINITY]).is_err());
    assert_eq!(state, before);

    let err = state.merge_stream([[1.0, 2.0], [f64::NAN, 0.0]]).unwrap_err();
    assert!(err.to_string().contains("index 1"), "{err}");
}
