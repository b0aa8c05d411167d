//! Closed-form expectations of quadratic forms in channels with Kronecker
//! error covariance `vec(ΔH) ~ CN(0, J ⊗ K)`:
//!
//! * `E[H X Hᴴ] = Ĥ X Ĥᴴ + Tr(X Jᵀ) K`
//! * `E[Hᴴ A H] = Ĥᴴ A Ĥ + Tr(K A) Jᵀ`
//!
//! Cascaded IRS paths `H̄ = D + B Θ C` are handled by nesting the two
//! identities; errors on different links are independent, so mixed error
//! terms vanish. No Kronecker product is ever formed.

use crate::error::{check_dims, Error, Result};
use crate::linalg::{self, conjugate_by_diag, hermitian_part, real, trace_of_product, CMat, CVec};
use crate::system_model::{
    compose_effective_channels, effective_channel, ChannelEstimates, ErrorCovariances, IrsPhase,
    Link, Path, SystemConfig, CROSS_PATH, DL_PATH, SI_PATH, UL_PATH,
};

/// Interference-plus-noise covariances seen by the two receivers.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaPair {
    /// BS receiver, `n0 × n0`.
    pub sigma_ul: CMat,
    /// DL user, `nj × nj`.
    pub sigma_dl: CMat,
}

/// Expected received covariances of each transmitter at each receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxExpectations {
    /// `E[H̄_k Ũ H̄_kᴴ]`, `n0 × n0`.
    pub q_k: CMat,
    /// `E[H̄_j Ṽ H̄_jᴴ]`, `nj × nj`.
    pub t_j: CMat,
    /// `E[H̄_0 Ṽ H̄_0ᴴ]`, `n0 × n0`.
    pub t_0: CMat,
    /// `E[H̄_jk Ũ H̄_jkᴴ]`, `nj × nj`.
    pub q_jk: CMat,
}

/// `Ĥ X Ĥᴴ + Tr(X Jᵀ) K`.
pub fn expect_hxh(est: &CMat, j_cov: &CMat, k_cov: &CMat, x: &CMat) -> Result<CMat> {
    let (r, c) = est.shape();
    check_dims("expect_hxh: X", (c, c), x.shape())?;
    check_dims("expect_hxh: J", (c, c), j_cov.shape())?;
    check_dims("expect_hxh: K", (r, r), k_cov.shape())?;
    Ok(est * x * est.adjoint() + k_cov * linalg::trace_with_transpose(x, j_cov))
}

/// `Ĥᴴ A Ĥ + Tr(K A) Jᵀ`.
pub fn expect_hhx(est: &CMat, j_cov: &CMat, k_cov: &CMat, a: &CMat) -> Result<CMat> {
    let (r, c) = est.shape();
    check_dims("expect_hhx: A", (r, r), a.shape())?;
    check_dims("expect_hhx: J", (c, c), j_cov.shape())?;
    check_dims("expect_hhx: K", (r, r), k_cov.shape())?;
    Ok(est.adjoint() * a * est + j_cov.transpose() * trace_of_product(k_cov, a))
}

/// Transmit-side second moment at the IRS: `E[C X Cᴴ]` for the tx hop.
pub(crate) fn irs_incident(est: &ChannelEstimates, err: &ErrorCovariances, path: Path, x: &CMat) -> CMat {
    let c_hat = est.get(path.tx_hop);
    let cov = err.get(path.tx_hop);
    c_hat * x * c_hat.adjoint() + &cov.k_cov * linalg::trace_with_transpose(x, &cov.j_cov)
}

/// Receive-side second moment at the IRS: `E[Bᴴ A B]` for the rx hop.
pub(crate) fn irs_reflected(est: &ChannelEstimates, err: &ErrorCovariances, path: Path, a: &CMat) -> CMat {
    let b_hat = est.get(path.rx_hop);
    let cov = err.get(path.rx_hop);
    b_hat.adjoint() * a * b_hat + cov.j_cov.transpose() * trace_of_product(&cov.k_cov, a)
}

/// `E[H̄ X H̄ᴴ]` for `H̄ = D + B Θ C`.
pub fn path_cov(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    path: Path,
    theta: &IrsPhase,
    x: &CMat,
) -> CMat {
    let d = est.get(path.direct);
    let b = est.get(path.rx_hop);
    let c = est.get(path.tx_hop);
    let th = theta.as_vec();
    let d_cov = err.get(path.direct);
    let b_cov = err.get(path.rx_hop);

    let a_bar = conjugate_by_diag(th, &irs_incident(est, err, path, x));
    let cross = d * x * c.adjoint() * linalg::scale_rows(&th.map(|z| z.conj()), &b.adjoint());
    let out = d * x * d.adjoint()
        + &d_cov.k_cov * linalg::trace_with_transpose(x, &d_cov.j_cov)
        + &cross
        + cross.adjoint()
        + b * &a_bar * b.adjoint()
        + &b_cov.k_cov * linalg::trace_with_transpose(&a_bar, &b_cov.j_cov);
    hermitian_part(&out)
}

/// `E[H̄ᴴ A H̄]` for `H̄ = D + B Θ C`.
pub fn path_gram(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    path: Path,
    theta: &IrsPhase,
    a: &CMat,
) -> CMat {
    let d = est.get(path.direct);
    let b = est.get(path.rx_hop);
    let c = est.get(path.tx_hop);
    let th = theta.as_vec();
    let d_cov = err.get(path.direct);
    let c_cov = err.get(path.tx_hop);

    let th_conj: CVec = th.map(|z| z.conj());
    let z_rot = conjugate_by_diag(&th_conj, &irs_reflected(est, err, path, a));
    let cross = d.adjoint() * a * linalg::scale_cols(b, th) * c;
    let out = d.adjoint() * a * d
        + d_cov.j_cov.transpose() * trace_of_product(&d_cov.k_cov, a)
        + &cross
        + cross.adjoint()
        + c.adjoint() * &z_rot * c
        + c_cov.j_cov.transpose() * trace_of_product(&c_cov.k_cov, &z_rot);
    hermitian_part(&out)
}

fn check_inputs(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    theta: &IrsPhase,
    u_cov: &CMat,
    v_cov: &CMat,
) -> Result<()> {
    compose_effective_channels(est, theta)?;
    for link in Link::ALL {
        let (r, c) = est.get(link).shape();
        let cov = err.get(link);
        check_dims(link.name(), (c, c), cov.j_cov.shape())?;
        check_dims(link.name(), (r, r), cov.k_cov.shape())?;
    }
    let mk = est.h_k.ncols();
    let m0 = est.h_j.ncols();
    check_dims("u_cov", (mk, mk), u_cov.shape())?;
    check_dims("v_cov", (m0, m0), v_cov.shape())
}

pub fn build_aux(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    theta: &IrsPhase,
    u_cov: &CMat,
    v_cov: &CMat,
) -> Result<AuxExpectations> {
    check_inputs(est, err, theta, u_cov, v_cov)?;
    Ok(AuxExpectations {
        q_k: path_cov(est, err, UL_PATH, theta, u_cov),
        t_j: path_cov(est, err, DL_PATH, theta, v_cov),
        t_0: path_cov(est, err, SI_PATH, theta, v_cov),
        q_jk: path_cov(est, err, CROSS_PATH, theta, u_cov),
    })
}

/// Error energy of a path's own signal: every term of `E[H̄ X H̄ᴴ]` that
/// carries at least one error factor, written out with a dense `Θ`.
fn own_error_terms(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    path: Path,
    theta_m: &CMat,
    x: &CMat,
) -> CMat {
    let (d, b, c) = (path.direct, path.rx_hop, path.tx_hop);
    let b_hat = est.get(b);
    let c_hat = est.get(c);
    let (jd, kd) = (&err.get(d).j_cov, &err.get(d).k_cov);
    let (jb, kb) = (&err.get(b).j_cov, &err.get(b).k_cov);
    let (jc, kc) = (&err.get(c).j_cov, &err.get(c).k_cov);
    let tr = |m: &CMat, j: &CMat| (m * j.transpose()).trace();

    // Direct-link error.
    let t1 = kd * tr(x, jd);
    // Error on the IRS → receiver hop, incident signal known.
    let incident = theta_m * c_hat * x * c_hat.adjoint() * theta_m.adjoint();
    let t2 = kb * tr(&incident, jb);
    // Error on the transmitter → IRS hop.
    let scattered = theta_m * kc * theta_m.adjoint() * tr(x, jc);
    let t3 = b_hat * &scattered * b_hat.adjoint();
    // Both hops in error.
    let t4 = kb * tr(&scattered, jb);
    t1 + t2 + t3 + t4
}

/// Full `E[H̄ X H̄ᴴ]` written out with a dense `Θ`.
fn full_terms(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    path: Path,
    theta_m: &CMat,
    x: &CMat,
) -> CMat {
    let d_hat = est.get(path.direct);
    let b_hat = est.get(path.rx_hop);
    let c_hat = est.get(path.tx_hop);
    let reflected = b_hat * theta_m * c_hat;
    d_hat * x * d_hat.adjoint()
        + d_hat * x * reflected.adjoint()
        + &reflected * x * d_hat.adjoint()
        + &reflected * x * reflected.adjoint()
        + own_error_terms(est, err, path, theta_m, x)
}

/// Interference-plus-noise covariances, assembled term by term: own-signal
/// error energy, full expected interference, noise.
pub fn build_sigma(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    theta: &IrsPhase,
    u_cov: &CMat,
    v_cov: &CMat,
    cfg: &SystemConfig,
) -> Result<SigmaPair> {
    check_inputs(est, err, theta, u_cov, v_cov)?;
    check_dims("sigma: n0", (cfg.n0, cfg.m0), est.h_0.shape())?;
    check_dims("sigma: nj", (cfg.nj, cfg.mk), est.h_jk.shape())?;
    let theta_m = CMat::from_diagonal(theta.as_vec());

    let sigma_ul = own_error_terms(est, err, UL_PATH, &theta_m, u_cov)
        + full_terms(est, err, SI_PATH, &theta_m, v_cov)
        + linalg::eye(cfg.n0) * real(cfg.sigma0_sq);
    let sigma_dl = own_error_terms(est, err, DL_PATH, &theta_m, v_cov)
        + full_terms(est, err, CROSS_PATH, &theta_m, u_cov)
        + linalg::eye(cfg.nj) * real(cfg.sigmaj_sq);
    let pair = SigmaPair {
        sigma_ul: hermitian_part(&sigma_ul),
        sigma_dl: hermitian_part(&sigma_dl),
    };
    debug_assert!(
        sigma_consistency_defect(&pair, est, err, theta, u_cov, v_cov, cfg)
            .map(|d| d < 1e-9)
            .unwrap_or(false),
        "sigma assembly disagrees with the auxiliary expectations"
    );
    Ok(pair)
}

/// `Ĥ_eff X Ĥ_effᴴ` with the estimate-only effective channel of `path`.
pub fn signal_estimate(est: &ChannelEstimates, path: Path, theta: &IrsPhase, x: &CMat) -> CMat {
    let h = effective_channel(est, path, theta);
    hermitian_part(&(&h * x * h.adjoint()))
}

/// `Σ = E[R] − Ŝ` rebuilt from [`build_aux`].
pub fn sigma_from_aux(
    aux: &AuxExpectations,
    est: &ChannelEstimates,
    theta: &IrsPhase,
    u_cov: &CMat,
    v_cov: &CMat,
    cfg: &SystemConfig,
) -> SigmaPair {
    SigmaPair {
        sigma_ul: &aux.q_k + &aux.t_0 + linalg::eye(aux.q_k.nrows()) * real(cfg.sigma0_sq)
            - signal_estimate(est, UL_PATH, theta, u_cov),
        sigma_dl: &aux.t_j + &aux.q_jk + linalg::eye(aux.t_j.nrows()) * real(cfg.sigmaj_sq)
            - signal_estimate(est, DL_PATH, theta, v_cov),
    }
}

/// Largest Frobenius distance between `pair` and the auxiliary-expectation
/// route, relative to `max(1, ‖Σ‖)`.
pub fn sigma_consistency_defect(
    pair: &SigmaPair,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    theta: &IrsPhase,
    u_cov: &CMat,
    v_cov: &CMat,
    cfg: &SystemConfig,
) -> Result<f64> {
    let aux = build_aux(est, err, theta, u_cov, v_cov)?;
    let other = sigma_from_aux(&aux, est, theta, u_cov, v_cov, cfg);
    let rel = |a: &CMat, b: &CMat| (a - b).norm() / a.norm().max(1.0);
    let defect = rel(&pair.sigma_ul, &other.sigma_ul).max(rel(&pair.sigma_dl, &other.sigma_dl));
    if defect.is_finite() {
        Ok(defect)
    } else {
        Err(Error::Numerical("non-finite interference covariance".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, eye, zeros};
    use crate::system_model::LinkCovariance;
    use crate::testing::{random_channels, random_covariances, random_matrix, random_phase, random_psd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            m0: 3,
            n0: 2,
            mk: 2,
            nj: 2,
            uk: 1,
            vj: 2,
            irs_rows: 1,
            irs_cols: 3,
            ..SystemConfig::desk_default()
        }
    }

    struct Fixture {
        cfg: SystemConfig,
        est: ChannelEstimates,
        err: ErrorCovariances,
        theta: IrsPhase,
        u: CMat,
        v: CMat,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = small_cfg();
        Fixture {
            est: random_channels(&cfg, &mut rng),
            err: random_covariances(&cfg, 0.3, &mut rng),
            theta: random_phase(cfg.rc(), &mut rng),
            u: random_psd(cfg.mk, &mut rng),
            v: random_psd(cfg.m0, &mut rng),
            cfg,
        }
    }

    #[test]
    fn zero_transmit_covariance_leaves_estimate_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_matrix(3, 2, &mut rng);
        let x = random_psd(2, &mut rng);
        let k = random_psd(3, &mut rng);
        let out = expect_hxh(&h, &zeros(2, 2), &k, &x).unwrap();
        assert_eq!(out, &h * &x * h.adjoint());
    }

    #[test]
    fn trace_of_identity() {
        let s2 = 0.7;
        let out = expect_hxh(&zeros(3, 3), &eye(3), &(eye(3) * real(s2)), &eye(3)).unwrap();
        assert!(linalg::rel_frobenius(&out, &(eye(3) * real(3.0 * s2))) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_reported() {
        let err = expect_hxh(&zeros(3, 2), &eye(2), &eye(3), &eye(3)).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        let err = expect_hhx(&zeros(3, 2), &eye(2), &eye(2), &eye(3)).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn perfect_csi_aux_is_deterministic_quadratic() {
        let f = fixture(2);
        let err = ErrorCovariances::zeros(&f.cfg);
        let theta = IrsPhase::ones(f.cfg.rc());
        let aux = build_aux(&f.est, &err, &theta, &f.u, &f.v).unwrap();
        let h = effective_channel(&f.est, UL_PATH, &theta);
        assert!((&aux.q_k - &h * &f.u * h.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn silent_uplink_gives_zero_uplink_terms() {
        let f = fixture(3);
        let aux = build_aux(&f.est, &f.err, &f.theta, &zeros(2, 2), &f.v).unwrap();
        assert_eq!(aux.q_k.norm(), 0.0);
        assert_eq!(aux.q_jk.norm(), 0.0);
    }

    #[test]
    fn noise_only_sigma() {
        let f = fixture(4);
        let err = ErrorCovariances::zeros(&f.cfg);
        let pair = build_sigma(&f.est, &err, &f.theta, &f.u, &zeros(3, 3), &f.cfg).unwrap();
        assert!((&pair.sigma_ul - eye(2) * real(f.cfg.sigma0_sq)).norm() < 1e-12);
    }

    #[test]
    fn direct_only_reduction() {
        let mut f = fixture(5);
        f.est.h_0theta.fill(linalg::ZERO);
        f.err.set(Link::IrsToBs, LinkCovariance::zeros(f.cfg.n0, f.cfg.rc()));
        let pair = build_sigma(&f.est, &f.err, &f.theta, &f.u, &f.v, &f.cfg).unwrap();
        let ul = f.err.get(Link::Ul);
        let si = f.err.get(Link::SelfInterference);
        let expect = &ul.k_cov * linalg::trace_with_transpose(&f.u, &ul.j_cov)
            + &f.est.h_0 * &f.v * f.est.h_0.adjoint()
            + &si.k_cov * linalg::trace_with_transpose(&f.v, &si.j_cov)
            + eye(2) * real(f.cfg.sigma0_sq);
        assert!((&pair.sigma_ul - expect).norm() < 1e-12);
    }

    #[test]
    fn sigma_matches_aux_route() {
        for seed in 0..10 {
            let f = fixture(100 + seed);
            let pair = build_sigma(&f.est, &f.err, &f.theta, &f.u, &f.v, &f.cfg).unwrap();
            let defect =
                sigma_consistency_defect(&pair, &f.est, &f.err, &f.theta, &f.u, &f.v, &f.cfg).unwrap();
            assert!(defect < 1e-12, "{defect}");
        }
    }

    #[test]
    fn outputs_hermitian_and_psd() {
        let f = fixture(6);
        let aux = build_aux(&f.est, &f.err, &f.theta, &f.u, &f.v).unwrap();
        let pair = build_sigma(&f.est, &f.err, &f.theta, &f.u, &f.v, &f.cfg).unwrap();
        for m in [&aux.q_k, &aux.t_j, &aux.t_0, &aux.q_jk, &pair.sigma_ul, &pair.sigma_dl] {
            assert!(linalg::hermitian_defect(m) < 1e-10);
            assert!(linalg::min_eigenvalue(m) > -1e-10);
        }
        assert!(linalg::min_eigenvalue(&pair.sigma_ul) >= f.cfg.sigma0_sq * (1.0 - 1e-9));
    }

    #[test]
    fn larger_errors_increase_sigma() {
        let f = fixture(7);
        let base = build_sigma(&f.est, &f.err, &f.theta, &f.u, &f.v, &f.cfg).unwrap();
        for link in Link::ALL {
            let mut err = f.err.clone();
            let mut cov = err.get(link).clone();
            let n = cov.k_cov.nrows();
            cov.k_cov += eye(n) * real(0.5);
            err.set(link, cov);
            let more = build_sigma(&f.est, &err, &f.theta, &f.u, &f.v, &f.cfg).unwrap();
            for (a, b) in [(&more.sigma_ul, &base.sigma_ul), (&more.sigma_dl, &base.sigma_dl)] {
                let diff = a - b;
                assert!(linalg::min_eigenvalue(&diff) > -1e-10 * a.norm(), "{link:?}");
            }
        }
    }

    #[test]
    fn common_phase_rotation_is_invisible() {
        let f = fixture(8);
        let a = build_aux(&f.est, &f.err, &f.theta, &f.u, &f.v).unwrap();
        let rotated = f.theta.rotated(1.234);
        let mut est = f.est.clone();
        // Rotating θ by φ is undone by counter-rotating every direct link.
        let phase = c(1.234f64.cos(), 1.234f64.sin());
        for link in [Link::Ul, Link::Dl, Link::SelfInterference, Link::Cross] {
            *est.get_mut(link) *= phase;
        }
        let b = build_aux(&est, &f.err, &rotated, &f.u, &f.v).unwrap();
        for (x, y) in [(&a.q_k, &b.q_k), (&a.t_j, &b.t_j), (&a.t_0, &b.t_0), (&a.q_jk, &b.q_jk)] {
            assert!((x - y).norm() < 1e-10 * x.norm().max(1.0));
        }
        // Terms of the form B Θ X Θᴴ Bᴴ are invariant on their own.
        let mut no_direct = f.est.clone();
        no_direct.zero_links(&[Link::Ul, Link::Dl, Link::SelfInterference, Link::Cross]);
        let a = build_aux(&no_direct, &f.err, &f.theta, &f.u, &f.v).unwrap();
        let b = build_aux(&no_direct, &f.err, &rotated, &f.u, &f.v).unwrap();
        assert!((&a.q_k - &b.q_k).norm() < 1e-10 * a.q_k.norm());
    }

    #[test]
    fn gram_and_cov_agree_through_trace() {
        // Tr(A E[H X Hᴴ]) = Tr(X E[Hᴴ A H]) for every path.
        let f = fixture(9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for (path, x) in [(UL_PATH, &f.u), (SI_PATH, &f.v), (DL_PATH, &f.v), (CROSS_PATH, &f.u)] {
            let rows = f.est.get(path.direct).nrows();
            let a = random_psd(rows, &mut rng);
            let lhs = trace_of_product(&a, &path_cov(&f.est, &f.err, path, &f.theta, x));
            let rhs = trace_of_product(x, &path_gram(&f.est, &f.err, path, &f.theta, &a));
            assert!((lhs - rhs).norm() < 1e-10 * lhs.norm());
        }
    }
}
