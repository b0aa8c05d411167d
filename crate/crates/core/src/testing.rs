//! Random fixtures shared by unit tests, integration tests and the harness
//! self-checks.

use rand::Rng;

use crate::channel_gen::{complex_gaussian, complex_normal};
use crate::ewmmse::{expected_mse, update_combiners, update_weights};
use crate::linalg::{self, real, CMat, CVec};
use crate::system_model::{
    BeamformingState, Channels, ErrorCovariances, IrsPhase, LinkCovariance, SystemConfig,
};

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    complex_gaussian(rows, cols, rng)
}

/// Full-rank Hermitian PSD matrix with unit average diagonal.
pub fn random_psd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let a = complex_gaussian(n, n + 1, rng);
    &a * a.adjoint() / real((n + 1) as f64)
}

pub fn random_phase<R: Rng + ?Sized>(n: usize, rng: &mut R) -> IrsPhase {
    let angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    IrsPhase::from_angles(&angles)
}

pub fn random_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng))
}

/// Unit-variance iid channels on every link.
pub fn random_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Channels {
    Channels::from_fn(cfg, |_, (r, c)| complex_gaussian(r, c, rng))
}

/// Random Kronecker covariances with `J` of unit average diagonal and `K`
/// scaled by `scale`.
pub fn random_covariances<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    scale: f64,
    rng: &mut R,
) -> ErrorCovariances {
    ErrorCovariances::from_fn(cfg, |_, (r, c)| LinkCovariance {
        j_cov: random_psd(c, rng),
        k_cov: random_psd(r, rng) * real(scale),
    })
}

/// Random beamformers scaled to the power budgets and random weights.
pub fn random_state<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> BeamformingState {
    let mut u = complex_gaussian(cfg.mk, cfg.uk, rng);
    u *= real((cfg.alphak / linalg::power(&u)).sqrt());
    let mut v = complex_gaussian(cfg.m0, cfg.vj, rng);
    v *= real((cfg.alpha0 / linalg::power(&v)).sqrt());
    BeamformingState {
        u_k: u,
        v_j: v,
        f_k: complex_gaussian(cfg.uk, cfg.n0, rng),
        f_j: complex_gaussian(cfg.vj, cfg.nj, rng),
        w_k: random_psd(cfg.uk, rng) + linalg::eye(cfg.uk),
        w_j: random_psd(cfg.vj, rng) + linalg::eye(cfg.vj),
        theta: random_phase(cfg.rc(), rng),
        lambda_k: 0.0,
        lambda_0: 0.0,
    }
}

/// Small system with `rc` IRS elements in one row.
pub fn small_config(rc: usize) -> SystemConfig {
    SystemConfig {
        m0: 3,
        n0: 2,
        mk: 2,
        nj: 2,
        uk: 1,
        vj: 2,
        irs_rows: 1,
        irs_cols: rc,
        alpha0: 10.0,
        alphak: 10.0,
        ..SystemConfig::desk_default()
    }
}

/// Random channels, covariances and state with combiners and weights
/// already optimal for the random precoders and phases.
pub fn prepared_instance<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    err_scale: f64,
    rng: &mut R,
) -> (Channels, ErrorCovariances, BeamformingState) {
    let est = random_channels(cfg, rng);
    let err = random_covariances(cfg, err_scale, rng);
    let mut state = random_state(cfg, rng);
    let (f_k, f_j) = update_combiners(&est, &err, &state, cfg).expect("combiner update");
    state.f_k = f_k;
    state.f_j = f_j;
    let (w_k, w_j) =
        update_weights(&expected_mse(&est, &err, &state, cfg), cfg).expect("weight update");
    state.w_k = w_k;
    state.w_j = w_j;
    (est, err, state)
}
