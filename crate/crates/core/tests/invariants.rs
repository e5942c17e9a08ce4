use proptest::prelude::*;

use avlab::dataflow::{audit_log, LogFile, Timestamp};
use avlab::geometry::{Aabb, Point2, Polyline, QuinticPoly};
use avlab::harness::{execute, RunConfig, RunData};
use avlab::perception::{assignment_cost, hungarian, iou};
use avlab::prediction::predict_linear_window;
use avlab::syncbridge::{Distribution1D, LatencyModel, Synchronizer};
use avlab::worldsim::{resolve_scenario, step, EgoCommand};

fn aabb() -> impl Strategy<Value = Aabb> {
    (-10.0..10.0f64, -10.0..10.0f64, 0.1..5.0f64, 0.1..5.0f64).prop_map(|(x, y, w, h)| Aabb::new(x, y, x + w, y + h))
}

fn min_cost(cost: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
    if row == cost.len() || used.iter().filter(|u| !**u).count() == 0 {
        return 0.0;
    }
    let rows_left = cost.len() - row;
    let cols_left = used.iter().filter(|u| !**u).count();
    // Skipping a row is allowed only when rows outnumber free columns.
    let mut best = if rows_left > cols_left {
        min_cost(cost, row + 1, used)
    } else {
        f64::INFINITY
    };
    for c in 0..used.len() {
        if !used[c] {
            used[c] = true;
            best = best.min(cost[row][c] + min_cost(cost, row + 1, used));
            used[c] = false;
        }
    }
    best
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in aabb(), b in aabb()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hungarian_is_optimal(n in 1usize..5, m in 1usize..5, seed in prop::collection::vec(0u32..50, 16)) {
        let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| seed[(i * 4 + j) % 16] as f64).collect()).collect();
        let pairs = hungarian(&cost);
        prop_assert_eq!(pairs.len(), n.min(m));
        prop_assert_eq!(assignment_cost(&cost, &pairs), min_cost(&cost, 0, &mut vec![false; m]));
    }

    #[test]
    fn frenet_round_trip(angle in -3.0..3.0f64, s_frac in 0.05..0.95f64, d in -3.0..3.0f64) {
        let end = Point2::new(100.0 * angle.cos(), 100.0 * angle.sin());
        let line = Polyline::straight(Point2::new(0.0, 0.0), end).unwrap();
        let p = line.from_frenet(s_frac * line.length(), d).unwrap();
        let (s2, d2) = line.to_frenet(p).unwrap();
        prop_assert!((s2 - s_frac * line.length()).abs() < 1e-9);
        prop_assert!((d2 - d).abs() < 1e-9);
    }

    #[test]
    fn quintic_meets_boundary_conditions(
        x0 in -5.0..5.0f64, v0 in -5.0..5.0f64, a0 in -2.0..2.0f64,
        x1 in -5.0..5.0f64, v1 in -5.0..5.0f64, a1 in -2.0..2.0f64, t in 0.5..8.0f64,
    ) {
        let q = QuinticPoly::new((x0, v0, a0), (x1, v1, a1), t).unwrap();
        for (got, want) in [(q.eval(0.0), x0), (q.d1(0.0), v0), (q.d2(0.0), a0), (q.eval(t), x1), (q.d1(t), v1), (q.d2(t), a1)] {
            prop_assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn linear_prediction_is_exact_on_linear_motion(
        px in -20.0..20.0f64, py in -20.0..20.0f64, vx in -5.0..5.0f64, vy in -5.0..5.0f64, n in 2usize..12,
    ) {
        let hist: Vec<(Timestamp, Point2)> = (0..n as u64)
            .map(|k| (Timestamp::from_micros(k * 50_000), Point2::new(px + vx * k as f64 * 0.05, py + vy * k as f64 * 0.05)))
            .collect();
        let last = hist.last().unwrap().0.as_micros();
        for (t, p) in predict_linear_window(&hist, 2.0, 0.5, 0).unwrap() {
            let s = t.as_micros() as f64 * 1e-6;
            prop_assert!(t.as_micros() > last);
            prop_assert!(p.distance(Point2::new(px + vx * s, py + vy * s)) < 1e-6);
        }
    }

    #[test]
    fn synchronizer_law(runtimes in prop::collection::vec(0u64..300_000, 1..40), tick_idx in 0usize..3) {
        let tick = [1_000u64, 5_000, 10_000][tick_idx];
        let mut sync = Synchronizer::new(tick);
        let mut submitted = 0;
        let mut last_sensor = None;
        let end = runtimes.len() as u64 * 50_000 + 400_000;
        for t in (0..=end).step_by(tick as usize) {
            if let Some(c) = sync.poll(Timestamp::from_micros(t)).unwrap() {
                let bound = c.sensor_time.as_micros() + c.pipeline_runtime;
                prop_assert!(t >= bound && t < bound + tick);
                prop_assert!(last_sensor.is_none_or(|s| c.sensor_time > s));
                last_sensor = Some(c.sensor_time);
            }
            if t % 50_000 == 0 && submitted < runtimes.len() {
                sync.submit(EgoCommand::default(), Timestamp::from_micros(t), runtimes[submitted]);
                submitted += 1;
            }
        }
        prop_assert!(sync.pending().is_empty());
    }

    #[test]
    fn ego_speed_stays_non_negative(cmds in prop::collection::vec((-1.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64), 1..200)) {
        let (mut w, _) = resolve_scenario("straight_road").unwrap();
        for (steer, throttle, brake) in cmds {
            w = step(&w, 5_000, &EgoCommand { steer, throttle, brake }).unwrap();
            prop_assert!(w.ego().speed >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Any seed and any planning-latency distribution yields a clean,
    /// reproducible log whose actuations obey the synchronizer law.
    #[test]
    fn runs_are_clean_and_reproducible(seed in any::<u64>(), lo in 0u64..100_000, span in 0u64..200_000, preset in 0usize..3) {
        let mut cfg = RunConfig::new("crossing_vehicle");
        cfg.preset = ["fot-fast", "rrt-fast", "hybrid-fast"][preset].to_string();
        cfg.seed = Some(seed);
        cfg.target_speed = Some(5.0);
        cfg.components.planning.latency = Some(LatencyModel::Seeded {
            distribution: Distribution1D::Uniform { lo, hi: lo + span },
            seed,
        });
        let a = execute(&cfg).unwrap();
        let b = execute(&cfg).unwrap();
        prop_assert_eq!(a.log.hash(), b.log.hash());
        prop_assert!(audit_log(&a.log).is_clean());
        let tick = a.prepared.params.tick_micros();
        for act in RunData::from_log(&a.log).actuations() {
            let bound = act.sensor_time.as_micros() + act.pipeline_runtime;
            prop_assert!(act.applied_at.as_micros() >= bound && act.applied_at.as_micros() < bound + tick);
        }
        let text = a.log.serialize();
        let parsed = LogFile::parse(&text).unwrap();
        let rendered: Vec<String> = parsed.lines.iter().map(|l| l.render()).collect();
        prop_assert_eq!(rendered, text.lines().skip(1).map(str::to_string).collect::<Vec<_>>());
    }
}
