use irsrob_core::channel_model::{ErrorModel, ErrorKind, EstimatedChannels, QosSpec};
use irsrob_core::linalg::{cn, cn_mat, cn_vec, hermitian_eig, kron, lambda_max, random_phases};
use irsrob_core::outage::{
    bernstein_slacks, phi_from_precoder, rank_one_extract, simplified_stats, soc_vector, solve_precoder_outage,
    QuadraticChanceForm,
};
use irsrob_core::validation::{wilson_interval, Z95};
use irsrob_core::{CMat, CVec, Scenario, ScaledProblem};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let a = cn_mat(rng, n, n, 1.0);
    (&a + a.adjoint()) * c(0.5)
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMat {
    let a = cn_mat(rng, n, rank, 1.0);
    &a * a.adjoint()
}

fn trace(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

#[test]
fn bernstein_trivial_form_needs_no_slack() {
    let form = QuadraticChanceForm { u_mat: CMat::zeros(3, 3), u_vec: CVec::zeros(3), c: 1.0, rho: 0.05 };
    let (x, y) = bernstein_slacks(&form, 1e-9).unwrap();
    assert!(x.abs() < 1e-6 && y.abs() < 1e-6, "x {x} y {y}");
}

#[test]
fn bernstein_negative_identity_forces_unit_shift() {
    let n = 3;
    let form = QuadraticChanceForm { u_mat: -CMat::identity(n, n), u_vec: CVec::zeros(n), c: 100.0, rho: 0.05 };
    let (_, y) = bernstein_slacks(&form, 1e-9).unwrap();
    assert!(y >= 1.0 - 1e-6, "y {y}");
}

/// Smallest constant for which the deterministic conditions hold.
fn tight_constant(u: &CMat, v: &CVec, rho: f64) -> f64 {
    let l = (1.0 / rho).ln();
    let x = (u.norm_squared() + 2.0 * v.norm_squared()).sqrt();
    let y = lambda_max(&-u).max(0.0);
    -trace(u) + (2.0 * l).sqrt() * x + l * y
}

#[test]
fn bernstein_conditions_are_safe() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let rho = 0.05;
    let n = 4;
    for _ in 0..3 {
        let u = random_hermitian(&mut rng, n);
        let v = cn_vec(&mut rng, n, 1.0);
        let c0 = tight_constant(&u, &v, rho);
        let form = QuadraticChanceForm { u_mat: u.clone(), u_vec: v.clone(), c: c0 + 1e-6, rho };
        assert!(bernstein_slacks(&form, 1e-9).is_some());
        let draws = 1_000_000;
        let mut ok = 0;
        let mut x = CVec::zeros(n);
        for _ in 0..draws {
            for i in 0..n {
                x[i] = cn(&mut rng, 1.0);
            }
            let q = x.dotc(&(&u * &x)).re + 2.0 * v.dotc(&x).re + form.c;
            if q >= 0.0 {
                ok += 1;
            }
        }
        let (lo, _) = wilson_interval(ok, draws, Z95);
        assert!(lo >= 1.0 - rho - 0.005, "success rate lower bound {lo}");
    }
}

/// `B` maps the normalized error `z ~ CN(0, I)` to `h_eff` perturbation
/// `dh + dG^H e`, with `z = [dh / eps_h; vec(dG^*) / eps_g]`.
fn error_map(e: &CVec, n: usize, eps_g: f64, eps_h: Option<f64>) -> CMat {
    let m = e.len();
    let off = if eps_h.is_some() { n } else { 0 };
    let mut b = CMat::zeros(n, off + m * n);
    if let Some(s) = eps_h {
        for i in 0..n {
            b[(i, i)] = c(s);
        }
    }
    for j in 0..n {
        for i in 0..m {
            // (dG^H e)_j = sum_i conj(dG_ij) e_i, vec index i + m j
            b[(j, off + i + m * j)] = e[i] * eps_g;
        }
    }
    b
}

#[test]
fn pcu_stats_match_explicit_kronecker_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=4);
        let phi = random_hermitian(&mut rng, n);
        let e = random_phases(&mut rng, m);
        let h = cn_vec(&mut rng, n, 1.0);
        let eps_g_sq: f64 = rng.random_range(0.01..1.0);
        let b = error_map(&e, n, eps_g_sq.sqrt(), None);
        let u = b.adjoint() * &phi * &b;
        // U = eps^2 (Phi^T (x) e e^H) up to the ordering of vec
        let ee = &e * e.adjoint();
        let kr = kron(&phi.transpose(), &ee) * c(eps_g_sq);
        assert!((trace(&u) - trace(&kr)).abs() < 1e-10);
        assert!((u.norm() - kr.norm()).abs() < 1e-10);
        let st = simplified_stats(&phi, eps_g_sq, 0.0, m, Scenario::Pcu);
        assert!((st.trace_term - trace(&u)).abs() < 1e-10 * (1.0 + st.trace_term.abs()));
        assert!((st.frob_term - u.norm()).abs() < 1e-10 * (1.0 + st.frob_term));
        assert!((st.eig_shift - lambda_max(&-&u).max(0.0)).abs() < 1e-10 * (1.0 + st.eig_shift));
        let uv = b.adjoint() * &phi * &h;
        let sv = soc_vector(&phi, &h, st.s);
        assert!((sv.norm() - 2f64.sqrt() * uv.norm()).abs() < 1e-10 * (1.0 + sv.norm()));
    }
}

#[test]
fn trace_and_frobenius_of_kronecker_with_identity_phi() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let e = random_phases(&mut rng, 3);
    let ee = &e * e.adjoint();
    let u = kron(&CMat::identity(2, 2), &ee);
    assert!((trace(&u) - 6.0).abs() < 1e-12);
    let st = simplified_stats(&CMat::identity(2, 2), 1.0, 0.0, 3, Scenario::Pcu);
    assert!((st.trace_term - 6.0).abs() < 1e-12);
    let phi = random_hermitian(&mut rng, 3);
    let big = kron(&phi.transpose(), &ee);
    assert!((big.norm_squared() - 9.0 * phi.norm_squared()).abs() < 1e-10);
}

#[test]
fn fcu_nonzero_eigenvalues_are_scaled_phi_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..50 {
        let n = 2;
        let m = rng.random_range(1..=4);
        let phi = random_hermitian(&mut rng, n);
        let e = random_phases(&mut rng, m);
        let (eg, eh): (f64, f64) = (rng.random_range(0.01..1.0), rng.random_range(0.01..1.0));
        let b = error_map(&e, n, eg.sqrt(), Some(eh.sqrt()));
        let u = b.adjoint() * &phi * &b;
        let s = eh + eg * m as f64;
        let (ev, _) = hermitian_eig(&u);
        let mut big: Vec<f64> = ev.into_iter().filter(|v| v.abs() > 1e-9).collect();
        big.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = hermitian_eig(&phi).0.iter().map(|v| v * s).filter(|v| v.abs() > 1e-9).collect();
        want.sort_by(f64::total_cmp);
        assert_eq!(big.len(), want.len());
        for (a, w) in big.iter().zip(&want) {
            assert!((a - w).abs() < 1e-10 * (1.0 + w.abs()), "{a} vs {w}");
        }
        let st = simplified_stats(&phi, eg, eh, m, Scenario::Fcu);
        assert!((st.s - s).abs() < 1e-14);
        assert!((st.trace_term - trace(&u)).abs() < 1e-10 * (1.0 + st.trace_term.abs()));
        assert!((st.frob_term - u.norm()).abs() < 1e-10 * (1.0 + st.frob_term));
    }
}

#[test]
fn psd_phi_needs_no_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let phi = random_psd(&mut rng, 3, 2);
    assert_eq!(simplified_stats(&phi, 0.3, 0.0, 4, Scenario::Pcu).eig_shift, 0.0);
}

#[test]
fn phi_from_precoder_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let f = cn_mat(&mut rng, 3, 3, 1.0);
    let phi = phi_from_precoder(&f, 1, 3.0);
    let want = f.column(1) * f.column(1).adjoint() / c(3.0)
        - f.column(0) * f.column(0).adjoint()
        - f.column(2) * f.column(2).adjoint();
    assert!((phi - want).norm() < 1e-12);
}

#[test]
fn rank_one_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let v = cn_vec(&mut rng, 3, 1.0);
    let g = &v * v.adjoint();
    let h = cn_vec(&mut rng, 3, 1.0);
    let r = rank_one_extract(std::slice::from_ref(&g), std::slice::from_ref(&h)).unwrap();
    assert!((&r.gamma_tilde[0] - &g).norm() < 1e-8);
    let f = r.f.column(0);
    let phase = v.dotc(&f) / Complex64::from(v.norm_squared());
    assert!((phase.norm() - 1.0).abs() < 1e-8);
    let err = (f - &v * phase).norm();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn rank_one_hand_example() {
    let g = CMat::identity(2, 2);
    let h = CVec::from_vec(vec![c(1.0), c(0.0)]);
    let r = rank_one_extract(std::slice::from_ref(&g), std::slice::from_ref(&h)).unwrap();
    let want = CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
    assert!((&r.gamma_tilde[0] - want).norm() < 1e-12);
    assert!((trace(&r.gamma_tilde[0]) - 1.0).abs() < 1e-12);
    assert!((h.dotc(&(&r.gamma_tilde[0] * &h)).re - 1.0).abs() < 1e-12);
}

#[test]
fn rank_one_preserves_signal_and_shrinks_interference() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..50 {
        let (n, kk) = (4, 3);
        let gam: Vec<CMat> = (0..kk)
            .map(|_| {
                let r = rng.random_range(1..=n);
                random_psd(&mut rng, n, r)
            })
            .collect();
        let hs: Vec<CVec> = (0..kk).map(|_| cn_vec(&mut rng, n, 1.0)).collect();
        let r = rank_one_extract(&gam, &hs).unwrap();
        for k in 0..kk {
            let fk = r.f.column(k);
            assert!((fk * fk.adjoint() - &r.gamma_tilde[k]).norm() < 1e-9 * (1.0 + gam[k].norm()));
            assert!(trace(&r.gamma_tilde[k]) <= trace(&gam[k]) + 1e-8);
            let (ev, _) = hermitian_eig(&r.gamma_tilde[k]);
            assert!(ev[n - 2].max(0.0) / ev[n - 1] < 1e-6);
            let q = |m: &CMat, h: &CVec| h.dotc(&(m * h)).re;
            assert!((q(&r.gamma_tilde[k], &hs[k]) - q(&gam[k], &hs[k])).abs() < 1e-9 * (1.0 + q(&gam[k], &hs[k])));
            for i in (0..kk).filter(|&i| i != k) {
                assert!(q(&r.gamma_tilde[i], &hs[k]) <= q(&gam[i], &hs[k]) + 1e-9);
            }
        }
    }
}

#[test]
fn degenerate_channel_is_reported() {
    let g = CMat::identity(2, 2);
    let h = CVec::zeros(2);
    assert!(rank_one_extract(std::slice::from_ref(&g), std::slice::from_ref(&h)).is_err());
}

fn single_user(rng: &mut ChaCha8Rng, n: usize, m: usize) -> EstimatedChannels {
    let scale = 1e-4;
    EstimatedChannels {
        direct_est: vec![cn_vec(rng, n, scale)],
        cascaded_est: vec![cn_mat(rng, m, n, scale)],
    }
}

#[test]
fn sdr_matches_mrt_without_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let est = single_user(&mut rng, 4, 3);
    let qos = QosSpec::uniform(1, 2.0, -80.0, 0.05);
    let model = ErrorModel::exact(ErrorKind::Statistical, 1);
    let prob = ScaledProblem::new(&est, &model, &qos);
    let e = random_phases(&mut rng, 3);
    let sdr = solve_precoder_outage(Scenario::Pcu, &prob, &e, 1e-9);
    assert!(sdr.status.accepted());
    let heff = &est.direct_est[0] + est.cascaded_est[0].adjoint() * &e;
    let want = qos.noise_power[0] * 3.0 / heff.norm_squared();
    let got = prob.power(&irsrob_core::linalg::psd_sqrt(&sdr.gamma[0]));
    assert!((got - want).abs() < 1e-3 * want, "{got} vs {want}");
}

#[test]
fn larger_outage_budget_never_costs_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let est = EstimatedChannels {
        direct_est: (0..2).map(|_| cn_vec(&mut rng, 4, 1e-4)).collect(),
        cascaded_est: (0..2).map(|_| cn_mat(&mut rng, 3, 4, 1e-4)).collect(),
    };
    let e = random_phases(&mut rng, 3);
    let power = |rho: f64| {
        let qos = QosSpec::uniform(2, 1.0, -80.0, rho);
        let model = ErrorModel::from_estimates(ErrorKind::Statistical, &est, 0.05, 0.0, rho).unwrap();
        let prob = ScaledProblem::new(&est, &model, &qos);
        let sdr = solve_precoder_outage(Scenario::Pcu, &prob, &e, 1e-9);
        assert!(sdr.status.accepted());
        sdr.objective / prob.kappa.powi(2)
    };
    let (tight, loose) = (power(0.01), power(0.1));
    assert!(loose <= tight * (1.0 + 1e-6), "{loose} > {tight}");
}
