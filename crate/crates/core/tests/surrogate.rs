use irsrob_core::linalg::{cn_mat, cn_vec, kron_vec, lambda_min, random_phases};
use irsrob_core::worst_case::{
    error_vector, in_lmi_matrix, lemma3_coefficients, lemma4_coefficients, signal_basis_precoder,
    signal_basis_reflect, signal_lmi_matrix, InLmiForm, InLmiParams, SignalLmiParams,
};
use irsrob_core::{CMat, CVec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn useful_power(f: &CVec, e: &CVec, h: &CVec, g: &CMat) -> f64 {
    // x = h^H f + e^H G f, written out term by term
    let mut x = Complex64::new(0.0, 0.0);
    for i in 0..f.len() {
        x += h[i].conj() * f[i];
        for m in 0..e.len() {
            x += e[m].conj() * g[(m, i)] * f[i];
        }
    }
    x.norm_sqr()
}

#[test]
fn cascaded_surrogate_is_a_lower_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let (h, g) = (cn_vec(&mut rng, n, 1.0), cn_mat(&mut rng, m, n, 1.0));
        let (f, fp) = (cn_vec(&mut rng, n, 1.0), cn_vec(&mut rng, n, 1.0));
        let (e, ep) = (random_phases(&mut rng, m), random_phases(&mut rng, m));
        let dg = cn_mat(&mut rng, m, n, 0.3);
        let c = lemma3_coefficients(&f, &e, &fp, &ep, &h, &g);
        let exact = useful_power(&f, &e, &h, &(&g + &dg));
        let bound = c.eval(&error_vector(None, &dg));
        assert!(bound <= exact + 1e-9 * exact.max(1.0), "{bound} > {exact}");
    }
}

#[test]
fn full_surrogate_is_a_lower_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let (h, g) = (cn_vec(&mut rng, n, 1.0), cn_mat(&mut rng, m, n, 1.0));
        let (f, fp) = (cn_vec(&mut rng, n, 1.0), cn_vec(&mut rng, n, 1.0));
        let (e, ep) = (random_phases(&mut rng, m), random_phases(&mut rng, m));
        let (dh, dg) = (cn_vec(&mut rng, n, 0.3), cn_mat(&mut rng, m, n, 0.3));
        let c = lemma4_coefficients(&f, &e, &fp, &ep, &h, &g);
        let exact = useful_power(&f, &e, &(&h + &dh), &(&g + &dg));
        let bound = c.eval(&error_vector(Some(&dh), &dg));
        assert!(bound <= exact + 1e-9 * exact.max(1.0), "{bound} > {exact}");
    }
}

#[test]
fn surrogate_is_tight_at_the_expansion_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let (n, m) = (3, 2);
        let (h, g) = (cn_vec(&mut rng, n, 1.0), cn_mat(&mut rng, m, n, 1.0));
        let f = cn_vec(&mut rng, n, 1.0);
        let e = random_phases(&mut rng, m);
        let exact = useful_power(&f, &e, &h, &g);
        let c3 = lemma3_coefficients(&f, &e, &f, &e, &h, &g);
        assert!((c3.eval(&CVec::zeros(m * n)) - exact).abs() <= 1e-8 * exact.max(1.0));
        let c4 = lemma4_coefficients(&f, &e, &f, &e, &h, &g);
        assert!((c4.eval(&CVec::zeros(n + m * n)) - exact).abs() <= 1e-8 * exact.max(1.0));
        // A = f f^H (x) e^* e^T at the expansion point
        let r = kron_vec(&f, &e.map(|z| z.conj()));
        assert!((&c3.a - &r * r.adjoint()).norm() < 1e-12);
    }
}

#[test]
fn coefficient_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (n, m) = (2, 3);
    let (h, g) = (cn_vec(&mut rng, n, 1.0), cn_mat(&mut rng, m, n, 1.0));
    let f = cn_vec(&mut rng, n, 1.0);
    let e = random_phases(&mut rng, m);
    let c = lemma3_coefficients(&f, &e, &f, &e, &h, &g);
    assert_eq!(c.a.shape(), (6, 6));
    assert_eq!(c.w.len(), 6);
    let c4 = lemma4_coefficients(&f, &e, &f, &e, &h, &g);
    assert_eq!(c4.a.shape(), (8, 8));
    let lmi = signal_lmi_matrix(&c, 0, &SignalLmiParams { beta: 1.0, gamma: 3.0, ..Default::default() });
    assert_eq!(lmi.shape(), (7, 7));
}

#[test]
fn zero_radius_signal_lmi_is_the_nominal_constraint() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (n, m) = (2, 3);
    let (h, g) = (cn_vec(&mut rng, n, 1.0), cn_mat(&mut rng, m, n, 1.0));
    let f = cn_vec(&mut rng, n, 1.0);
    let e = random_phases(&mut rng, m);
    let c = lemma3_coefficients(&f, &e, &f, &e, &h, &g);
    let power = useful_power(&f, &e, &h, &g);
    let gamma = 3.0;
    for (beta, feasible) in [(0.9 * power / gamma, true), (1.1 * power / gamma, false)] {
        let p = SignalLmiParams { beta, gamma, ..Default::default() };
        let lmi = signal_lmi_matrix(&c, 0, &p);
        let corner = lmi[(m * n, m * n)].re;
        assert!((corner - (power - gamma * beta)).abs() < 1e-10);
        assert_eq!(corner >= 0.0, feasible);
    }
}

#[test]
fn zero_radius_in_lmi_is_a_schur_complement() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (n, kk) = (4, 2);
    let fm = cn_mat(&mut rng, n, kk - 1, 1.0);
    let heff = cn_vec(&mut rng, n, 1.0);
    let t = fm.adjoint() * &heff;
    let inr = t.norm_squared() + 1.0;
    for (beta, feasible) in [(1.01 * inr, true), (0.99 * inr, false)] {
        let p = InLmiParams { beta, noise: 1.0, m: 3, ..Default::default() };
        let lmi = in_lmi_matrix(&t, &fm, &p, InLmiForm::Full);
        assert_eq!(lmi.nrows(), kk);
        assert_eq!(lambda_min(&lmi) >= 0.0, feasible);
    }
    let p = InLmiParams { beta: 2.0 * inr, noise: 1.0, mu_g: 1.0, xi_g: 0.1, m: 3, ..Default::default() };
    assert_eq!(in_lmi_matrix(&t, &fm, &p, InLmiForm::Full).nrows(), 1 + (kk - 1) + n);
    assert_eq!(in_lmi_matrix(&t, &fm, &p, InLmiForm::Reduced).nrows(), kk);
}

/// Off the basis the LMI is `diag(varpi_h I, varpi_g I)` and the basis block
/// does not couple to it, so PSD-ness is decided by the compression alone.
fn check_compression(full: &CMat, t: &CMat, nh: usize, p: &SignalLmiParams) {
    let d = full.nrows();
    assert!((t.adjoint() * t - CMat::identity(t.ncols(), t.ncols())).norm() < 1e-12);
    let proj = t * t.adjoint();
    let comp_proj = CMat::identity(d, d) - &proj;
    assert!((&proj * full * &comp_proj).norm() < 1e-10 * (1.0 + full.norm()));
    let diag = CMat::from_fn(d, d, |i, j| {
        let v = if i != j || i == d - 1 { 0.0 } else if i < nh { p.varpi_h } else { p.varpi_g };
        Complex64::new(v, 0.0)
    });
    assert!((&comp_proj * full * &comp_proj - &comp_proj * diag * &comp_proj).norm() < 1e-10 * (1.0 + full.norm()));
    let comp = t.adjoint() * full * t;
    assert_eq!(lambda_min(full) >= -1e-12, lambda_min(&comp) >= -1e-12);
}

#[test]
fn signal_lmi_compression_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..40 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let (h, g) = (cn_vec(&mut rng, n, 1.0), cn_mat(&mut rng, m, n, 1.0));
        let (f, fp) = (cn_vec(&mut rng, n, 1.0), cn_vec(&mut rng, n, 1.0));
        let (e, ep) = (random_phases(&mut rng, m), random_phases(&mut rng, m));
        let p = SignalLmiParams {
            beta: rng.random_range(0.0..8.0),
            gamma: 3.0,
            varpi_h: rng.random_range(0.0..2.0),
            varpi_g: rng.random_range(0.0..2.0),
            xi_h: 0.1,
            xi_g: 0.2,
            alpha: 0.0,
        };
        let full_fcu = trial % 2 == 0;
        // precoder step: e fixed, f moves
        let c = if full_fcu {
            lemma4_coefficients(&f, &e, &fp, &e, &h, &g)
        } else {
            lemma3_coefficients(&f, &e, &fp, &e, &h, &g)
        };
        let nh = if full_fcu { n } else { 0 };
        let lmi = signal_lmi_matrix(&c, nh, &p);
        let t = signal_basis_precoder(&e, n, full_fcu, true).unwrap();
        check_compression(&lmi, &t, nh, &p);
        // reflection step: f fixed, e moves
        let c = if full_fcu {
            lemma4_coefficients(&f, &e, &f, &ep, &h, &g)
        } else {
            lemma3_coefficients(&f, &e, &f, &ep, &h, &g)
        };
        let lmi = signal_lmi_matrix(&c, nh, &p);
        let t = signal_basis_reflect(&f, m, full_fcu, true).unwrap();
        check_compression(&lmi, &t, nh, &p);
    }
}
