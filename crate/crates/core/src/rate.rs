//! Weighted-sum-rate evaluation: the closed-form ergodic lower bound,
//! the rate of a fixed design on one channel realization, and Monte-Carlo
//! averages of the latter over CSI error draws.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_gen::ChannelSampler;
use crate::error::{Error, Result};
use crate::kron_expectation::build_sigma;
use crate::linalg::{self, hermitian_part, hpd_solve, log_det_hpd, real, CMat};
use crate::streams::{substream, tag};
use crate::system_model::{
    compose_effective_channels, BeamformingState, ChannelEstimates, ErrorCovariances,
    SystemConfig, TrueChannels,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateKind {
    AnalyticalLowerBound,
    Instantaneous,
    MonteCarlo { n_samples: usize, stderr: f64 },
}

/// Rates in bits/s/Hz; `r_ul` and `r_dl` already carry their weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub wsr_total: f64,
    pub r_ul: f64,
    pub r_dl: f64,
    pub kind: RateKind,
}

impl RateReport {
    fn new(r_ul: f64, r_dl: f64, kind: RateKind) -> Result<Self> {
        if !(r_ul.is_finite() && r_dl.is_finite()) {
            return Err(Error::Numerical(format!("non-finite rate ({r_ul}, {r_dl})")));
        }
        // Rounding can leave log det(I + PSD) a hair below zero.
        Ok(Self {
            wsr_total: r_ul.max(0.0) + r_dl.max(0.0),
            r_ul: r_ul.max(0.0),
            r_dl: r_dl.max(0.0),
            kind,
        })
    }

    pub fn stderr(&self) -> f64 {
        match self.kind {
            RateKind::MonteCarlo { stderr, .. } => stderr,
            _ => 0.0,
        }
    }
}

/// `log₂ det(I + Pᴴ Hᴴ Σ⁻¹ H P)` with `Σ` Hermitian positive definite.
pub fn stream_rate(h: &CMat, precoder: &CMat, sigma: &CMat) -> Result<f64> {
    let hp = h * precoder;
    let gram = hp.adjoint() * hpd_solve(sigma, &hp, "interference-plus-noise covariance")?;
    let m = linalg::eye(gram.nrows()) + hermitian_part(&gram);
    Ok(log_det_hpd(&m, "rate argument")? / std::f64::consts::LN_2)
}

pub fn ergodic_wsr_lb(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
) -> Result<RateReport> {
    let (u_cov, v_cov) = (state.u_cov(), state.v_cov());
    let sigma = build_sigma(est, err, &state.theta, &u_cov, &v_cov, cfg)?;
    let h = compose_effective_channels(est, &state.theta)?;
    RateReport::new(
        cfg.wk * stream_rate(&h.h_bar_k, &state.u_k, &sigma.sigma_ul)?,
        cfg.wj * stream_rate(&h.h_bar_j, &state.v_j, &sigma.sigma_dl)?,
        RateKind::AnalyticalLowerBound,
    )
}

pub fn instantaneous_wsr(
    true_ch: &TrueChannels,
    state: &BeamformingState,
    cfg: &SystemConfig,
) -> Result<RateReport> {
    let h = compose_effective_channels(true_ch, &state.theta)?;
    let r_ul = &h.h_bar_0 * state.v_cov() * h.h_bar_0.adjoint()
        + linalg::eye(cfg.n0) * real(cfg.sigma0_sq);
    let r_dl = &h.h_bar_jk * state.u_cov() * h.h_bar_jk.adjoint()
        + linalg::eye(cfg.nj) * real(cfg.sigmaj_sq);
    RateReport::new(
        cfg.wk * stream_rate(&h.h_bar_k, &state.u_k, &hermitian_part(&r_ul))?,
        cfg.wj * stream_rate(&h.h_bar_j, &state.v_j, &hermitian_part(&r_dl))?,
        RateKind::Instantaneous,
    )
}

/// Per-draw weighted rates of a fixed design.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSamples {
    pub ul: Vec<f64>,
    pub dl: Vec<f64>,
}

impl RateSamples {
    pub fn totals(&self) -> Vec<f64> {
        self.ul.iter().zip(&self.dl).map(|(a, b)| a + b).collect()
    }

    pub fn report(&self) -> Result<RateReport> {
        let (mean_ul, _) = mean_stderr(&self.ul);
        let (mean_dl, _) = mean_stderr(&self.dl);
        let (_, stderr) = mean_stderr(&self.totals());
        RateReport::new(
            mean_ul,
            mean_dl,
            RateKind::MonteCarlo {
                n_samples: self.ul.len(),
                stderr,
            },
        )
    }
}

/// Sample mean and standard error of the mean (zero for fewer than two
/// samples).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs[0], 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Rates of `state` on `n_samples` error draws; draw `i` uses substream
/// `(seed, ERROR_DRAW, i)`, so results are independent of the thread count.
pub fn sample_wsr(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
    n_samples: usize,
    seed: u64,
) -> Result<RateSamples> {
    let sampler = ChannelSampler::new(est, err)?;
    let draws: Vec<(f64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, tag::ERROR_DRAW, i as u64);
            let r = instantaneous_wsr(&sampler.sample(&mut rng), state, cfg)?;
            Ok((r.r_ul, r.r_dl))
        })
        .collect::<Result<_>>()?;
    let (ul, dl) = draws.into_iter().unzip();
    Ok(RateSamples { ul, dl })
}

pub fn monte_carlo_wsr<R: Rng + ?Sized>(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
    n_samples: usize,
    rng: &mut R,
) -> Result<RateReport> {
    if n_samples < 2 {
        return Err(Error::Config("Monte-Carlo evaluation needs at least two samples".into()));
    }
    sample_wsr(est, err, state, cfg, n_samples, rng.next_u64())?.report()
}
