//! Per-iteration interior-point cost estimates `o_F + o_e` of each design.

use irsrob_core::Method;

/// `o_F + o_e` in flop-order units. The no-IRS benchmark is a single
/// PCU-statistic precoder step.
pub fn complexity_estimate(method: Method, n: usize, m: usize, k: usize) -> f64 {
    let (n, m, k) = (n as f64, m as f64, k as f64);
    let n1 = n * k;
    let n2 = m;
    let mn1 = m * n + 1.0;
    let o_e_bounded = (k * (m * n + 1.0 + k) + 2.0 * m).sqrt()
        * n2
        * (n2.powi(2) + n2 * k * (mn1.powi(2) + k.powi(2)) + k * (mn1.powi(3) + k.powi(3)) + n2 * m);
    let o_f_stat = (2.0 * k * (n + 1.0)).sqrt()
        * n1
        * (n1.powi(2) + 2.0 * n1 * k * n.powi(2) + 2.0 * k * n.powi(3) + n1 * k * n.powi(2) * (n + 1.0).powi(2));
    let o_e_stat =
        (4.0 * k + 2.0 * m).sqrt() * n2 * (n2.powi(2) + n2 * (k * (m.powi(2) + (n + 1.0).powi(2)) + m));
    match method {
        Method::PcuBounded => {
            let o_f = (k * (m * n + k + n + 1.0)).sqrt()
                * n1
                * (n1.powi(2)
                    + n1 * k * (mn1.powi(2) + (k + n).powi(2))
                    + k * (mn1.powi(3) + (k + n).powi(3)));
            o_f + o_e_bounded
        }
        Method::FcuBounded => {
            let big = m * n + n + 1.0;
            let o_f = (k * (m * n + 3.0 * n + k + 1.0)).sqrt()
                * n1
                * (n1.powi(2)
                    + n1 * k * (big.powi(2) + (k + 2.0 * n).powi(2))
                    + k * (big.powi(3) + (k + 2.0 * n).powi(2)));
            o_f + o_e_bounded
        }
        Method::PcuStat | Method::FcuStat => o_f_stat + o_e_stat,
        Method::NoIrsBaseline => o_f_stat,
    }
}
