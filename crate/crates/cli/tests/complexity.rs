use irsrob_cli::complexity_estimate;
use irsrob_core::Method;

const ALL: [Method; 5] =
    [Method::PcuBounded, Method::FcuBounded, Method::PcuStat, Method::FcuStat, Method::NoIrsBaseline];

#[test]
fn statistical_estimate_at_unit_dimensions() {
    // o_F = sqrt(4) (1 + 2 + 2 + 4), o_e = sqrt(6) (1 + (1 + 4) + 1)
    let want = 18.0 + 7.0 * 6f64.sqrt();
    assert!((complexity_estimate(Method::PcuStat, 1, 1, 1) - want).abs() < 1e-12);
    assert!((complexity_estimate(Method::NoIrsBaseline, 1, 1, 1) - 18.0).abs() < 1e-12);
}

#[test]
fn estimates_grow_with_every_dimension() {
    for method in ALL {
        let base = complexity_estimate(method, 4, 4, 2);
        assert!(complexity_estimate(method, 5, 4, 2) > base, "{method} in N");
        assert!(complexity_estimate(method, 4, 4, 3) > base, "{method} in K");
        if method != Method::NoIrsBaseline {
            assert!(complexity_estimate(method, 4, 5, 2) > base, "{method} in M");
        }
    }
}

#[test]
fn bounded_designs_cost_more_per_iteration() {
    for (n, m, k) in [(6, 6, 2), (4, 8, 2), (6, 10, 3)] {
        let stat = complexity_estimate(Method::PcuStat, n, m, k);
        assert!(complexity_estimate(Method::PcuBounded, n, m, k) > stat);
        assert!(complexity_estimate(Method::FcuBounded, n, m, k) > complexity_estimate(Method::PcuBounded, n, m, k));
        assert!(complexity_estimate(Method::NoIrsBaseline, n, m, k) < stat);
    }
}
