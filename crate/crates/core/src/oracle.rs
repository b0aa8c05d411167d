//! Brute-force Monte-Carlo estimates of the closed-form expectations.
//! They share only the error sampler with the analytical code.

use rand::Rng;

use crate::channel_gen::{ChannelSampler, KroneckerFactor};
use crate::error::Result;
use crate::ewmmse::ExpectedMse;
use crate::kron_expectation::SigmaPair;
use crate::linalg::{self, real, CMat};
use crate::system_model::{
    effective_channel, BeamformingState, ChannelEstimates, ErrorCovariances, IrsPhase, Path,
    SystemConfig, CROSS_PATH, DL_PATH, SI_PATH, UL_PATH,
};

/// Sample mean of `H X Hᴴ` with `H = Ĥ + ΔH`.
pub fn mc_expect_hxh<R: Rng + ?Sized>(
    est: &CMat,
    j_cov: &CMat,
    k_cov: &CMat,
    x: &CMat,
    n: usize,
    rng: &mut R,
) -> Result<CMat> {
    let factor = KroneckerFactor::new(j_cov, k_cov)?;
    let mut acc = linalg::zeros(est.nrows(), est.nrows());
    for _ in 0..n {
        let h = est + factor.sample(rng);
        acc += &h * x * h.adjoint();
    }
    Ok(acc / real(n as f64))
}

/// Sample mean of `Hᴴ A H`.
pub fn mc_expect_hhx<R: Rng + ?Sized>(
    est: &CMat,
    j_cov: &CMat,
    k_cov: &CMat,
    a: &CMat,
    n: usize,
    rng: &mut R,
) -> Result<CMat> {
    let factor = KroneckerFactor::new(j_cov, k_cov)?;
    let mut acc = linalg::zeros(est.ncols(), est.ncols());
    for _ in 0..n {
        let h = est + factor.sample(rng);
        acc += h.adjoint() * a * &h;
    }
    Ok(acc / real(n as f64))
}

/// Sample mean of `H̄ X H̄ᴴ` over joint draws of all links on `path`.
pub fn mc_path_cov<R: Rng + ?Sized>(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    path: Path,
    theta: &IrsPhase,
    x: &CMat,
    n: usize,
    rng: &mut R,
) -> Result<CMat> {
    let sampler = ChannelSampler::new(est, err)?;
    let rows = est.get(path.direct).nrows();
    let mut acc = linalg::zeros(rows, rows);
    for _ in 0..n {
        let h = effective_channel(&sampler.sample(rng), path, theta);
        acc += &h * x * h.adjoint();
    }
    Ok(acc / real(n as f64))
}

/// Sample mean of `H̄ᴴ A H̄`.
pub fn mc_path_gram<R: Rng + ?Sized>(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    path: Path,
    theta: &IrsPhase,
    a: &CMat,
    n: usize,
    rng: &mut R,
) -> Result<CMat> {
    let sampler = ChannelSampler::new(est, err)?;
    let cols = est.get(path.direct).ncols();
    let mut acc = linalg::zeros(cols, cols);
    for _ in 0..n {
        let h = effective_channel(&sampler.sample(rng), path, theta);
        acc += h.adjoint() * a * &h;
    }
    Ok(acc / real(n as f64))
}

/// Sample estimate of `E[R] − Ĥ_eff X Ĥ_effᴴ` at both receivers, where `R`
/// is the total received covariance.
#[allow(clippy::too_many_arguments)]
pub fn mc_sigma<R: Rng + ?Sized>(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    theta: &IrsPhase,
    u_cov: &CMat,
    v_cov: &CMat,
    cfg: &SystemConfig,
    n: usize,
    rng: &mut R,
) -> Result<SigmaPair> {
    let sampler = ChannelSampler::new(est, err)?;
    let mut ul = linalg::zeros(cfg.n0, cfg.n0);
    let mut dl = linalg::zeros(cfg.nj, cfg.nj);
    for _ in 0..n {
        let ch = sampler.sample(rng);
        let hk = effective_channel(&ch, UL_PATH, theta);
        let h0 = effective_channel(&ch, SI_PATH, theta);
        let hj = effective_channel(&ch, DL_PATH, theta);
        let hjk = effective_channel(&ch, CROSS_PATH, theta);
        ul += &hk * u_cov * hk.adjoint() + &h0 * v_cov * h0.adjoint();
        dl += &hj * v_cov * hj.adjoint() + &hjk * u_cov * hjk.adjoint();
    }
    let scale = real(1.0 / n as f64);
    let hk = effective_channel(est, UL_PATH, theta);
    let hj = effective_channel(est, DL_PATH, theta);
    Ok(SigmaPair {
        sigma_ul: ul * scale + linalg::eye(cfg.n0) * real(cfg.sigma0_sq) - &hk * u_cov * hk.adjoint(),
        sigma_dl: dl * scale + linalg::eye(cfg.nj) * real(cfg.sigmaj_sq) - &hj * v_cov * hj.adjoint(),
    })
}

fn draw_mse(f: &CMat, h: &CMat, p: &CMat, interference: &CMat) -> CMat {
    let resid = linalg::eye(f.nrows()) - f * h * p;
    &resid * resid.adjoint() + f * interference * f.adjoint()
}

/// Sample mean of the per-draw MSE matrices of `state` over true channels.
pub fn mc_expected_mse<R: Rng + ?Sized>(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
    n: usize,
    rng: &mut R,
) -> Result<ExpectedMse> {
    let sampler = ChannelSampler::new(est, err)?;
    let theta = &state.theta;
    let mut e_k = linalg::zeros(cfg.uk, cfg.uk);
    let mut e_j = linalg::zeros(cfg.vj, cfg.vj);
    for _ in 0..n {
        let ch = sampler.sample(rng);
        let h0 = effective_channel(&ch, SI_PATH, theta);
        let hjk = effective_channel(&ch, CROSS_PATH, theta);
        let si = &h0 * &state.v_j * state.v_j.adjoint() * h0.adjoint()
            + linalg::eye(cfg.n0) * real(cfg.sigma0_sq);
        let cross = &hjk * &state.u_k * state.u_k.adjoint() * hjk.adjoint()
            + linalg::eye(cfg.nj) * real(cfg.sigmaj_sq);
        e_k += draw_mse(&state.f_k, &effective_channel(&ch, UL_PATH, theta), &state.u_k, &si);
        e_j += draw_mse(&state.f_j, &effective_channel(&ch, DL_PATH, theta), &state.v_j, &cross);
    }
    let scale = real(1.0 / n as f64);
    Ok(ExpectedMse {
        e_k: e_k * scale,
        e_j: e_j * scale,
    })
}
