use irsrob_cli::runner::post_filter;
use irsrob_cli::{read_rows, read_timing, timing, write_rows, write_timing, ExperimentConfig, Row, RUN_COLUMNS};
use irsrob_core::Method;

fn row(method: Method, m: usize, seed: u64, iteration: usize, status: &str, ms: f64) -> Row {
    Row {
        method,
        n: 6,
        m,
        k: 2,
        rate: 2.0,
        delta_g: 0.05,
        delta_h: 0.0,
        instance_seed: seed,
        iteration,
        power_dbm: if iteration > 0 { Some(30.0 + ms / 100.0) } else { None },
        status: status.into(),
        wall_time_ms: ms,
    }
}

#[test]
fn rows_round_trip_with_the_documented_header() {
    let rows = vec![
        row(Method::PcuStat, 4, 0, 1, "converged", 12.5),
        row(Method::FcuBounded, 4, 1, 0, "infeasible", 3.0),
        row(Method::NoIrsBaseline, 4, 1, 2, "converged", 0.25),
    ];
    let mut buf = Vec::new();
    write_rows(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), RUN_COLUMNS.join(","));
    assert!(text.contains("fcu-bounded,6,4,2,2.0,0.05,0.0,1,0,,infeasible,3.0"));
    assert_eq!(read_rows(&buf[..]).unwrap(), rows);
}

#[test]
fn empty_tables_keep_their_header_and_bad_headers_are_refused() {
    let mut buf = Vec::new();
    write_rows(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap().trim(), RUN_COLUMNS.join(","));
    assert!(read_rows(&buf[..]).unwrap().is_empty());
    assert!(read_rows("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn timing_skips_the_start_up_step_and_compares_with_the_statistical_design() {
    let rows = vec![
        row(Method::PcuBounded, 6, 0, 1, "converged", 1000.0),
        row(Method::PcuBounded, 6, 0, 2, "converged", 40.0),
        row(Method::PcuBounded, 6, 0, 3, "converged", 60.0),
        row(Method::PcuBounded, 6, 1, 1, "converged", 80.0),
        row(Method::PcuStat, 6, 0, 1, "converged", 500.0),
        row(Method::PcuStat, 6, 0, 2, "converged", 10.0),
        row(Method::PcuStat, 6, 2, 0, "infeasible", 5.0),
    ];
    let t = timing(&rows);
    assert_eq!(t.len(), 2);
    let b = t.iter().find(|r| r.method == Method::PcuBounded).unwrap();
    let s = t.iter().find(|r| r.method == Method::PcuStat).unwrap();
    assert_eq!((b.instances, b.iterations), (2, 3));
    assert!((b.mean_iter_ms - 60.0).abs() < 1e-12);
    assert!((s.mean_iter_ms - 10.0).abs() < 1e-12);
    assert!((b.ratio_to_stat.unwrap() - 6.0).abs() < 1e-12);
    assert_eq!(s.ratio_to_stat, None);
    assert!(b.complexity > s.complexity);

    let mut buf = Vec::new();
    write_timing(&mut buf, &t).unwrap();
    assert_eq!(read_timing(&buf[..]).unwrap(), t);
}

#[test]
fn post_filter_keeps_instances_feasible_at_the_largest_m() {
    let cfg = ExperimentConfig::from_json(r#"{"grid": {"m": [4, 16]}}"#).unwrap();
    let rows = vec![
        row(Method::PcuStat, 4, 0, 3, "converged", 1.0),
        row(Method::PcuStat, 16, 0, 3, "converged", 1.0),
        row(Method::PcuStat, 4, 1, 3, "converged", 1.0),
        row(Method::PcuStat, 16, 1, 0, "infeasible", 1.0),
        row(Method::NoIrsBaseline, 4, 0, 1, "converged", 1.0),
        row(Method::NoIrsBaseline, 4, 1, 1, "converged", 1.0),
    ];
    let kept = post_filter(&cfg, rows);
    assert!(kept.iter().all(|r| r.instance_seed == 0));
    assert_eq!(kept.len(), 3);
}
