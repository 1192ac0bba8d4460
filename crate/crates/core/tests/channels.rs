use irsrob_core::channel_model::{
    achievable_rate, cascade, chi2_inverse_cdf, draw_error, error_radii, generate_scenario, pathloss_db,
    perturb_channels, ChannelFile, EstimatedChannels, ErrorKind, ErrorModel, Geometry, QosSpec, SystemDims,
};
use irsrob_core::linalg::{cn_mat, cn_vec, random_phases};
use irsrob_core::{CMat, CVec};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn pathloss_examples() {
    assert!((pathloss_db(1.0, 4.0, 40.0) + 40.0).abs() < 1e-12);
    let want = -40.0 - 22.0 * 50f64.log10();
    assert!((pathloss_db(50.0, 2.2, 40.0) - want).abs() < 1e-12);
    assert!((want + 77.38).abs() < 0.01);
}

#[test]
fn scenarios_are_reproducible_and_cascaded() {
    let dims = SystemDims::new(4, 5, 3).unwrap();
    let a = generate_scenario(dims, &Geometry::default(), 42).unwrap();
    let b = generate_scenario(dims, &Geometry::default(), 42).unwrap();
    assert_eq!(a, b);
    for k in 0..3 {
        let rebuilt = cascade(&a.irs_user[k], &a.bs_irs);
        assert!((&a.cascaded[k] - rebuilt).norm() < 1e-12);
        // row m of G_k is conj(h_r,k[m]) times row m of H_dr
        for m in 0..5 {
            let want = a.bs_irs.row(m) * a.irs_user[k][m].conj();
            assert!((a.cascaded[k].row(m) - want).norm() < 1e-12);
        }
        let p = a.user_pos[k];
        assert!(((p[0] - 70.0).powi(2) + p[1].powi(2)).sqrt() <= 5.0 + 1e-12);
    }
    let c = generate_scenario(dims, &Geometry::default(), 43).unwrap();
    assert_ne!(a, c);
}

#[test]
fn zero_error_estimate_is_exact() {
    let dims = SystemDims::new(3, 3, 2).unwrap();
    let truth = generate_scenario(dims, &Geometry::default(), 1).unwrap();
    let est0 = EstimatedChannels::from(&truth);
    let model = ErrorModel::from_estimates(ErrorKind::Statistical, &est0, 0.0, 0.0, 0.05).unwrap();
    let est = perturb_channels(&truth, &model, 9);
    assert_eq!(est, est0);
}

#[test]
fn statistical_error_has_requested_variance() {
    let mut model = ErrorModel::exact(ErrorKind::Statistical, 1);
    model.eps_g_sq[0] = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 100_000;
    let mean: f64 = (0..draws).map(|_| draw_error(&mut rng, &model, 0, 1, 1).dg[(0, 0)].norm_sqr()).sum::<f64>()
        / draws as f64;
    assert!((0.99..=1.01).contains(&mean), "{mean}");
}

#[test]
fn bounded_draws_stay_in_the_ball() {
    let mut model = ErrorModel::exact(ErrorKind::Bounded, 1);
    model.xi_g[0] = 0.3;
    model.xi_h[0] = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let d = draw_error(&mut rng, &model, 0, 3, 4);
        assert!(d.dg.norm() <= 0.3 + 1e-12);
        assert!(d.dh.norm() <= 0.2 + 1e-12);
    }
}

#[test]
fn radius_examples() {
    let xi = error_radii(2.0, 1, 0.05).unwrap();
    assert!((xi - (-2.0 * 0.05f64.ln()).sqrt()).abs() < 1e-9);
    assert!((xi - 2.4477).abs() < 1e-4);
    assert_eq!(error_radii(0.0, 4, 0.05).unwrap(), 0.0);
    assert!(error_radii(1.0, 4, 0.0).is_err());
    assert!(error_radii(1.0, 4, 1.0).is_err());
    let mut last = f64::INFINITY;
    for rho in [0.5, 0.9, 0.99, 0.999999] {
        let r = error_radii(1.0, 3, rho).unwrap();
        assert!(r < last);
        last = r;
        // chi-square CDF with 6 degrees of freedom at x = 2 r^2 / eps^2
        let x = 2.0 * r * r;
        let cdf = 1.0 - (-x / 2.0).exp() * (1.0 + x / 2.0 + x * x / 8.0);
        assert!((cdf - (1.0 - rho)).abs() < 1e-8, "rho {rho}: cdf {cdf}");
    }
}

#[test]
fn chi2_inverse_matches_closed_form_for_two_dof() {
    for p in [0.1, 0.5, 0.95, 0.999] {
        let want = -2.0 * (1.0 - p as f64).ln();
        assert!((chi2_inverse_cdf(p, 1) - want).abs() < 1e-9);
    }
}

#[test]
fn radius_covers_the_requested_mass() {
    let (n, m, rho) = (3, 2, 0.05);
    let mut model = ErrorModel::exact(ErrorKind::Statistical, 1);
    model.eps_g_sq[0] = 0.7;
    let xi = error_radii(0.7, m * n, rho).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    let inside = (0..draws).filter(|_| draw_error(&mut rng, &model, 0, n, m).dg.norm() <= xi).count();
    let frac = inside as f64 / draws as f64;
    assert!((frac - (1.0 - rho)).abs() <= 0.01, "{frac}");
}

#[test]
fn rate_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, m) = (3, 2);
    let h = cn_vec(&mut rng, n, 1.0);
    let g = cn_mat(&mut rng, m, n, 1.0);
    let e = random_phases(&mut rng, m);
    assert_eq!(achievable_rate(&CMat::zeros(n, 2), &e, &h, &g, 1.0, 0).unwrap(), 0.0);
    // unit received power at unit noise
    let heff = &h + g.adjoint() * &e;
    let f = CMat::from_column_slice(n, 1, (&heff / Complex64::from(heff.norm_squared())).as_slice());
    assert!((achievable_rate(&f, &e, &h, &g, 1.0, 0).unwrap() - 1.0).abs() < 1e-12);
    assert!(achievable_rate(&f, &e, &CVec::zeros(n + 1), &g, 1.0, 0).is_err());
}

#[test]
fn two_user_rate_matches_explicit_sinr() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, m) = (4, 3);
    let h = cn_vec(&mut rng, n, 1.0);
    let g = cn_mat(&mut rng, m, n, 1.0);
    let e = random_phases(&mut rng, m);
    let f = cn_mat(&mut rng, n, 2, 1.0);
    let gain = |col: usize| {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut c = h[i].conj();
            for j in 0..m {
                c += e[j].conj() * g[(j, i)];
            }
            s += c * f[(i, col)];
        }
        s.norm_sqr()
    };
    let sigma = 0.3;
    for k in 0..2 {
        let want = (1.0 + gain(k) / (gain(1 - k) + sigma)).log2();
        assert!((achievable_rate(&f, &e, &h, &g, sigma, k).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn rate_grows_with_own_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, m) = (3, 3);
    let h = cn_vec(&mut rng, n, 1.0);
    let g = cn_mat(&mut rng, m, n, 1.0);
    let e = random_phases(&mut rng, m);
    let mut f = cn_mat(&mut rng, n, 2, 1.0);
    let before = achievable_rate(&f, &e, &h, &g, 1.0, 0).unwrap();
    f.column_mut(0).scale_mut(1.5);
    assert!(achievable_rate(&f, &e, &h, &g, 1.0, 0).unwrap() > before);
}

#[test]
fn channel_file_round_trip() {
    let dims = SystemDims::new(2, 3, 2).unwrap();
    let truth = generate_scenario(dims, &Geometry::default(), 10).unwrap();
    let est = EstimatedChannels::from(&truth);
    let text = ChannelFile::new(dims, Some(&truth), Some(&est)).to_json();
    let back = ChannelFile::from_json(&text).unwrap();
    assert_eq!(back.truth().unwrap().unwrap(), truth);
    assert_eq!(back.estimate().unwrap().unwrap(), est);
    assert!(ChannelFile::from_json("{\"dims\": 3}").is_err());
}

#[test]
fn invalid_dims_are_rejected() {
    assert!(SystemDims::new(0, 2, 2).is_err());
    assert!(SystemDims::new(2, 2, 0).is_err());
    let qos = QosSpec::uniform(2, 1.0, -80.0, 0.05);
    assert!((qos.sinr_target(0) - 1.0).abs() < 1e-15);
}

#[test]
fn larger_instances_extend_smaller_ones() {
    let small = generate_scenario(SystemDims::new(3, 4, 2).unwrap(), &Geometry::default(), 5).unwrap();
    let big = generate_scenario(SystemDims::new(5, 7, 3).unwrap(), &Geometry::default(), 5).unwrap();
    assert_eq!(small.user_pos[..], big.user_pos[..2]);
    assert_eq!(small.bs_irs, big.bs_irs.view((0, 0), (4, 3)));
    for u in 0..2 {
        assert_eq!(small.direct[u], big.direct[u].rows(0, 3));
        assert_eq!(small.irs_user[u], big.irs_user[u].rows(0, 4));
    }
}
