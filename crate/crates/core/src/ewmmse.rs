//! Expected-WMMSE alternating optimizer.
//!
//! The surrogate is `Σ_i Tr(W_i E_i) − (w_i/ln 2) ln det W_i`, where `E_i` is
//! the MSE matrix averaged over the CSI errors. Each block update (combiners,
//! weights, precoders, IRS phases) minimizes it exactly or by majorization,
//! and with combiners and weights at their optimum the surrogate equals the
//! ergodic rate lower bound up to a constant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irs_mm::{self, MmOptions};
use crate::kron_expectation::{path_cov, path_gram};
use crate::linalg::{self, hermitian_eig, hermitian_part, hpd_inverse, hpd_solve, real, CMat};
use crate::rate::ergodic_wsr_lb;
use crate::system_model::{
    effective_channel, BeamformingState, ChannelEstimates, ErrorCovariances, IrsPhase, Path,
    SystemConfig, CROSS_PATH, DL_PATH, SI_PATH, UL_PATH,
};

/// How precoders are initialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Dominant right singular vectors of the estimated effective channels,
    /// equal power per stream.
    SvdEstimate,
    /// Dominant generalized eigenvectors of signal versus leakage-plus-noise
    /// on the estimated effective channels, equal power per stream.
    LeakageAware,
    /// Leading columns of the identity, equal power per stream.
    ScaledIdentity,
    /// Gaussian precoders scaled to the budget; `None` draws from the
    /// solver's RNG.
    Random(Option<u64>),
}

/// Block order within one outer sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// All combiners, then all weights, then both precoders, then `Θ`.
    /// Combiners and weights are optimal for the iterate when each sweep
    /// starts, so the rate bound is non-decreasing.
    #[default]
    Grouped,
    /// `F_k, W_k, U_k, F_j, W_j, V_j`, then `Θ`.
    PerUser,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once the relative change of the rate bound falls below this.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    /// Power tolerance relative to the budget.
    pub bisection_tol: f64,
    pub max_bisection_iters: usize,
    pub irs: MmOptions,
    pub init_policy: InitPolicy,
    pub update_order: UpdateOrder,
    pub optimize_irs: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-4,
            max_outer_iters: 200,
            bisection_tol: 1e-6,
            max_bisection_iters: 200,
            irs: MmOptions::default(),
            init_policy: InitPolicy::LeakageAware,
            update_order: UpdateOrder::Grouped,
            optimize_irs: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0 && self.bisection_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.max_bisection_iters == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        self.irs.validate()
    }
}

/// MSE matrices averaged over the CSI errors.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedMse {
    pub e_k: CMat,
    pub e_j: CMat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Ul,
    Dl,
}

impl Side {
    fn own_path(self) -> Path {
        match self {
            Side::Ul => UL_PATH,
            Side::Dl => DL_PATH,
        }
    }

    fn interference_path(self) -> Path {
        match self {
            Side::Ul => SI_PATH,
            Side::Dl => CROSS_PATH,
        }
    }

    fn precoder(self, state: &BeamformingState) -> &CMat {
        match self {
            Side::Ul => &state.u_k,
            Side::Dl => &state.v_j,
        }
    }

    fn combiner(self, state: &BeamformingState) -> &CMat {
        match self {
            Side::Ul => &state.f_k,
            Side::Dl => &state.f_j,
        }
    }

    fn weight(self, state: &BeamformingState) -> &CMat {
        match self {
            Side::Ul => &state.w_k,
            Side::Dl => &state.w_j,
        }
    }

    /// Covariance of the other transmitter, which interferes at this receiver.
    fn interferer_cov(self, state: &BeamformingState) -> CMat {
        match self {
            Side::Ul => state.v_cov(),
            Side::Dl => state.u_cov(),
        }
    }

    fn own_cov(self, state: &BeamformingState) -> CMat {
        match self {
            Side::Ul => state.u_cov(),
            Side::Dl => state.v_cov(),
        }
    }

    fn noise(self, cfg: &SystemConfig) -> f64 {
        match self {
            Side::Ul => cfg.sigma0_sq,
            Side::Dl => cfg.sigmaj_sq,
        }
    }

    fn rate_weight(self, cfg: &SystemConfig) -> f64 {
        match self {
            Side::Ul => cfg.wk,
            Side::Dl => cfg.wj,
        }
    }

    fn budget(self, cfg: &SystemConfig) -> f64 {
        match self {
            Side::Ul => cfg.alphak,
            Side::Dl => cfg.alpha0,
        }
    }
}

/// Expected total received covariance at the receiver of `side`.
fn received_cov(
    side: Side,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
) -> CMat {
    let own = path_cov(est, err, side.own_path(), &state.theta, &side.own_cov(state));
    let intf = path_cov(est, err, side.interference_path(), &state.theta, &side.interferer_cov(state));
    let n = own.nrows();
    own + intf + linalg::eye(n) * real(side.noise(cfg))
}

fn combiner_for(
    side: Side,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
) -> Result<CMat> {
    let m = received_cov(side, est, err, state, cfg);
    let hp = effective_channel(est, side.own_path(), &state.theta) * side.precoder(state);
    Ok(hpd_solve(&m, &hp, "expected received covariance")?.adjoint())
}

fn mse_for(
    side: Side,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
) -> CMat {
    let m = received_cov(side, est, err, state, cfg);
    let f = side.combiner(state);
    let fhp = f * effective_channel(est, side.own_path(), &state.theta) * side.precoder(state);
    let e = f * m * f.adjoint() - &fhp - fhp.adjoint() + linalg::eye(fhp.nrows());
    hermitian_part(&e)
}

fn weight_from_mse(e: &CMat, rate_weight: f64) -> Result<CMat> {
    let inv = hpd_inverse(e, "expected MSE")?;
    Ok(hermitian_part(&inv) * real(rate_weight / std::f64::consts::LN_2))
}

/// Combiners minimizing the expected MSE for the current precoders and `Θ`.
pub fn update_combiners(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
) -> Result<(CMat, CMat)> {
    Ok((
        combiner_for(Side::Ul, est, err, state, cfg)?,
        combiner_for(Side::Dl, est, err, state, cfg)?,
    ))
}

pub fn expected_mse(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
) -> ExpectedMse {
    ExpectedMse {
        e_k: mse_for(Side::Ul, est, err, state, cfg),
        e_j: mse_for(Side::Dl, est, err, state, cfg),
    }
}

/// `W = (w / ln 2) E⁻¹` for both links.
pub fn update_weights(mse: &ExpectedMse, cfg: &SystemConfig) -> Result<(CMat, CMat)> {
    Ok((
        weight_from_mse(&mse.e_k, cfg.wk)?,
        weight_from_mse(&mse.e_j, cfg.wj)?,
    ))
}

/// `A = Fᴴ W F`.
fn combiner_gram(f: &CMat, w: &CMat) -> CMat {
    hermitian_part(&(f.adjoint() * w * f))
}

fn x_matrix_for(
    side: Side,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
) -> CMat {
    let a_k = combiner_gram(&state.f_k, &state.w_k);
    let a_j = combiner_gram(&state.f_j, &state.w_j);
    let theta = &state.theta;
    let x = match side {
        Side::Ul => path_gram(est, err, UL_PATH, theta, &a_k) + path_gram(est, err, CROSS_PATH, theta, &a_j),
        Side::Dl => path_gram(est, err, DL_PATH, theta, &a_j) + path_gram(est, err, SI_PATH, theta, &a_k),
    };
    hermitian_part(&x)
}

/// Quadratic coefficients of the surrogate in `U_k` and `V_j`.
pub fn build_x_matrices(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
) -> (CMat, CMat) {
    (
        x_matrix_for(Side::Ul, est, err, state),
        x_matrix_for(Side::Dl, est, err, state),
    )
}

/// Linear coefficient `R = Ĥ_effᴴ Fᴴ W`.
fn rhs_for(side: Side, est: &ChannelEstimates, state: &BeamformingState) -> CMat {
    effective_channel(est, side.own_path(), &state.theta).adjoint()
        * side.combiner(state).adjoint()
        * side.weight(state)
}

/// Linear coefficients of the surrogate in `U_k` and `V_j`.
pub fn build_rhs(est: &ChannelEstimates, state: &BeamformingState) -> (CMat, CMat) {
    (rhs_for(Side::Ul, est, state), rhs_for(Side::Dl, est, state))
}

/// `p(λ) = ‖(X + λI)⁻¹ R‖²_F` in the eigenbasis of `X`.
#[derive(Clone, Debug)]
pub struct PowerFunction {
    eigvals: Vec<f64>,
    eigvecs: CMat,
    /// `QᴴR`.
    proj: CMat,
    /// Squared row norms of `QᴴR`.
    weights: Vec<f64>,
    floor: f64,
}

impl PowerFunction {
    pub fn new(x: &CMat, r: &CMat) -> Self {
        let (vals, vecs) = hermitian_eig(x);
        let proj = vecs.adjoint() * r;
        let weights = (0..proj.nrows()).map(|i| proj.row(i).norm_squared()).collect();
        let lmax = vals.iter().copied().fold(0.0, f64::max);
        Self {
            eigvals: vals.iter().copied().collect(),
            eigvecs: vecs,
            proj,
            weights,
            floor: 1e-12 * lmax,
        }
    }

    /// Directions with eigenvalue below the floor are dropped at `λ = 0`
    /// (pseudo-inverse); `R` has no component there in exact arithmetic.
    fn gain(&self, i: usize, lambda: f64) -> f64 {
        let d = self.eigvals[i].max(0.0) + lambda;
        if lambda == 0.0 && self.eigvals[i] <= self.floor {
            0.0
        } else {
            1.0 / d
        }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        (0..self.weights.len())
            .map(|i| self.weights[i] * self.gain(i, lambda).powi(2))
            .sum()
    }

    pub fn precoder(&self, lambda: f64) -> CMat {
        let mut scaled = self.proj.clone();
        for i in 0..scaled.nrows() {
            let g = self.gain(i, lambda);
            scaled.row_mut(i).scale_mut(g);
        }
        &self.eigvecs * scaled
    }
}

/// `‖(X + λI)⁻¹ R‖²_F` by a fresh Cholesky solve.
pub fn power_direct(x: &CMat, r: &CMat, lambda: f64) -> Result<f64> {
    let m = x + linalg::eye(x.nrows()) * real(lambda);
    Ok(hpd_solve(&m, r, "regularized precoder system")?.norm_squared())
}

/// Minimizer of `Tr(Uᴴ X U) − 2 Re Tr(Uᴴ R)` subject to `‖U‖² ≤ budget`.
/// Returns the precoder and its multiplier.
pub fn solve_power_constrained(
    x: &CMat,
    r: &CMat,
    budget: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(CMat, f64)> {
    let pf = PowerFunction::new(x, r);
    if pf.eval(0.0) <= budget {
        return Ok((pf.precoder(0.0), 0.0));
    }
    let fail = |iterations, lo, hi, power| Error::Bisection {
        iterations,
        lo,
        hi,
        power,
        budget,
    };
    let mut hi = 1.0;
    let mut iters = 0;
    while pf.eval(hi) > budget {
        hi *= 2.0;
        iters += 1;
        if iters > max_iters || !hi.is_finite() {
            return Err(fail(iters, 0.0, hi, pf.eval(hi)));
        }
    }
    // Bisect to floating resolution and keep the feasible end.
    let mut lo = 0.0;
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pf.eval(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        if iters > max_iters {
            break;
        }
    }
    let power = pf.eval(hi);
    if (power - budget).abs() > tol * budget {
        return Err(fail(iters, lo, hi, power));
    }
    Ok((pf.precoder(hi), hi))
}

/// `‖(X + λI) U − R‖_F`.
pub fn stationarity_residual(x: &CMat, u: &CMat, lambda: f64, r: &CMat) -> f64 {
    ((x + linalg::eye(x.nrows()) * real(lambda)) * u - r).norm()
}

/// Updated precoders and multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecoderUpdate {
    pub u_k: CMat,
    pub v_j: CMat,
    pub lambda_k: f64,
    pub lambda_0: f64,
}

fn precoder_for(
    side: Side,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<(CMat, f64)> {
    let x = x_matrix_for(side, est, err, state);
    let r = rhs_for(side, est, state);
    solve_power_constrained(&x, &r, side.budget(cfg), opts.bisection_tol, opts.max_bisection_iters)
}

/// Both precoders from the same combiners and weights.
pub fn update_precoders(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<PrecoderUpdate> {
    let (u_k, lambda_k) = precoder_for(Side::Ul, est, err, state, cfg, opts)?;
    let (v_j, lambda_0) = precoder_for(Side::Dl, est, err, state, cfg, opts)?;
    Ok(PrecoderUpdate {
        u_k,
        v_j,
        lambda_k,
        lambda_0,
    })
}

/// One line of the solver log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 0 for the initial point.
    pub iteration: usize,
    pub wsr_lb: f64,
    pub power_ul: f64,
    pub power_dl: f64,
    pub lambda_k: f64,
    pub lambda_0: f64,
    pub mm_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub state: BeamformingState,
    /// Initial point followed by one record per sweep.
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

impl Solution {
    pub fn wsr_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.wsr_lb).collect()
    }

    pub fn final_wsr(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.wsr_lb)
    }
}

fn scaled_columns(m: CMat, budget: f64) -> CMat {
    let p = linalg::power(&m);
    if p == 0.0 {
        m
    } else {
        m * real((budget / p).sqrt())
    }
}

/// Unit-norm columns maximizing `‖H v‖² / (‖G v‖² + noise/p)`.
fn leakage_vectors(h: &CMat, g: &CMat, noise_over_power: f64, k: usize) -> CMat {
    let b = g.adjoint() * g + linalg::eye(g.ncols()) * real(noise_over_power.max(1e-300));
    let Some(chol) = hermitian_part(&b).cholesky() else {
        return dominant_right_vectors(h, k);
    };
    let l_inv = chol.l().try_inverse().unwrap_or_else(|| linalg::eye(g.ncols()));
    let m = &l_inv * h.adjoint() * h * l_inv.adjoint();
    let (_, w) = hermitian_eig(&hermitian_part(&m));
    let mut v = l_inv.adjoint() * w.columns(0, k);
    for mut col in v.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= real(n);
        }
    }
    v
}

fn dominant_right_vectors(h: &CMat, k: usize) -> CMat {
    let (_, vecs) = hermitian_eig(&(h.adjoint() * h));
    vecs.columns(0, k).into_owned()
}

/// Precoders per `policy`, with `Θ` taken from `state`.
pub fn initial_precoders<R: Rng + ?Sized>(
    est: &ChannelEstimates,
    cfg: &SystemConfig,
    theta: &IrsPhase,
    policy: InitPolicy,
    rng: &mut R,
) -> (CMat, CMat) {
    let (u, v) = match policy {
        InitPolicy::SvdEstimate => (
            dominant_right_vectors(&effective_channel(est, UL_PATH, theta), cfg.uk),
            dominant_right_vectors(&effective_channel(est, DL_PATH, theta), cfg.vj),
        ),
        InitPolicy::LeakageAware => (
            leakage_vectors(
                &effective_channel(est, UL_PATH, theta),
                &effective_channel(est, CROSS_PATH, theta),
                cfg.sigmaj_sq * cfg.uk as f64 / cfg.alphak,
                cfg.uk,
            ),
            leakage_vectors(
                &effective_channel(est, DL_PATH, theta),
                &effective_channel(est, SI_PATH, theta),
                cfg.sigma0_sq * cfg.vj as f64 / cfg.alpha0,
                cfg.vj,
            ),
        ),
        InitPolicy::ScaledIdentity => (
            linalg::eye(cfg.mk).columns(0, cfg.uk).into_owned(),
            linalg::eye(cfg.m0).columns(0, cfg.vj).into_owned(),
        ),
        InitPolicy::Random(seed) => {
            let seed = seed.unwrap_or_else(|| rng.next_u64());
            let mut r = crate::streams::substream(seed, crate::streams::tag::INIT, 0);
            (
                crate::channel_gen::complex_gaussian(cfg.mk, cfg.uk, &mut r),
                crate::channel_gen::complex_gaussian(cfg.m0, cfg.vj, &mut r),
            )
        }
    };
    (scaled_columns(u, cfg.alphak), scaled_columns(v, cfg.alpha0))
}

fn record(
    iteration: usize,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &BeamformingState,
    cfg: &SystemConfig,
    mm_iterations: usize,
) -> Result<IterationRecord> {
    Ok(IterationRecord {
        iteration,
        wsr_lb: ergodic_wsr_lb(est, err, state, cfg)?.wsr_total,
        power_ul: linalg::power(&state.u_k),
        power_dl: linalg::power(&state.v_j),
        lambda_k: state.lambda_k,
        lambda_0: state.lambda_0,
        mm_iterations,
    })
}

fn update_side(
    side: Side,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &mut BeamformingState,
    cfg: &SystemConfig,
    opts: &SolverOptions,
    stage: Stage,
) -> Result<()> {
    match stage {
        Stage::Combiner => {
            let f = combiner_for(side, est, err, state, cfg)?;
            match side {
                Side::Ul => state.f_k = f,
                Side::Dl => state.f_j = f,
            }
        }
        Stage::Weight => {
            let w = weight_from_mse(&mse_for(side, est, err, state, cfg), side.rate_weight(cfg))?;
            match side {
                Side::Ul => state.w_k = w,
                Side::Dl => state.w_j = w,
            }
        }
        Stage::Precoder => {
            let (p, lambda) = precoder_for(side, est, err, state, cfg, opts)?;
            match side {
                Side::Ul => {
                    state.u_k = p;
                    state.lambda_k = lambda;
                }
                Side::Dl => {
                    state.v_j = p;
                    state.lambda_0 = lambda;
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Stage {
    Combiner,
    Weight,
    Precoder,
}

/// One sweep of transceiver updates in the given order (no `Θ` step).
pub fn transceiver_sweep(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    state: &mut BeamformingState,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<()> {
    let steps: [(Side, Stage); 6] = match opts.update_order {
        UpdateOrder::Grouped => [
            (Side::Ul, Stage::Combiner),
            (Side::Dl, Stage::Combiner),
            (Side::Ul, Stage::Weight),
            (Side::Dl, Stage::Weight),
            (Side::Ul, Stage::Precoder),
            (Side::Dl, Stage::Precoder),
        ],
        UpdateOrder::PerUser => [
            (Side::Ul, Stage::Combiner),
            (Side::Ul, Stage::Weight),
            (Side::Ul, Stage::Precoder),
            (Side::Dl, Stage::Combiner),
            (Side::Dl, Stage::Weight),
            (Side::Dl, Stage::Precoder),
        ],
    };
    // Within the grouped order both precoders use the same F and W.
    if opts.update_order == UpdateOrder::Grouped {
        for (side, stage) in &steps[..4] {
            update_side(*side, est, err, state, cfg, opts, *stage)?;
        }
        let upd = update_precoders(est, err, state, cfg, opts)?;
        state.u_k = upd.u_k;
        state.v_j = upd.v_j;
        state.lambda_k = upd.lambda_k;
        state.lambda_0 = upd.lambda_0;
        return Ok(());
    }
    for (side, stage) in steps {
        update_side(side, est, err, state, cfg, opts, stage)?;
    }
    Ok(())
}

/// Runs the alternating optimization from `init`, whose precoders and `Θ`
/// are used as the starting point.
pub fn run_from(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    cfg: &SystemConfig,
    opts: &SolverOptions,
    init: BeamformingState,
) -> Result<Solution> {
    cfg.validate()?;
    opts.validate()?;
    est.check_dims(cfg)?;
    err.validate(cfg)?;
    init.check_dims(cfg)?;
    let mut state = init;
    let mut trace = vec![record(0, est, err, &state, cfg, 0)?];
    let mut converged = false;
    for it in 1..=opts.max_outer_iters {
        transceiver_sweep(est, err, &mut state, cfg, opts)?;
        let mut mm_iterations = 0;
        if opts.optimize_irs {
            let problem = irs_mm::build_mm_problem(&irs_mm::build_stz(est, err, &state, cfg)?);
            let out = irs_mm::run_algorithm1(&problem, &state.theta, &opts.irs);
            state.theta = out.theta;
            mm_iterations = out.iterations;
        }
        let rec = record(it, est, err, &state, cfg, mm_iterations)?;
        let prev = trace.last().map_or(0.0, |r| r.wsr_lb);
        let change = (rec.wsr_lb - prev).abs() / rec.wsr_lb.abs().max(f64::MIN_POSITIVE);
        trace.push(rec);
        if change < opts.outer_tol {
            converged = true;
            break;
        }
    }
    Ok(Solution {
        state,
        trace,
        converged,
    })
}

/// Initializes per `opts.init_policy` with `Θ = 1` and runs to convergence.
pub fn run_algorithm2<R: Rng + ?Sized>(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    cfg: &SystemConfig,
    opts: &SolverOptions,
    rng: &mut R,
) -> Result<Solution> {
    cfg.validate()?;
    est.check_dims(cfg)?;
    let mut init = BeamformingState::zeros(cfg);
    let (u, v) = initial_precoders(est, cfg, &init.theta, opts.init_policy, rng);
    init.u_k = u;
    init.v_j = v;
    run_from(est, err, cfg, opts, init)
}

/// Textbook WMMSE on known channels, written independently of the
/// expectation machinery. Used as the perfect-CSI reference.
pub mod reference {
    use super::*;
    use crate::system_model::{compose_effective_channels, Channels};

    fn total_cov(h: &CMat, p_cov: &CMat, g: &CMat, q_cov: &CMat, noise: f64) -> CMat {
        h * p_cov * h.adjoint() + g * q_cov * g.adjoint() + linalg::eye(h.nrows()) * real(noise)
    }

    fn interference_cov(g: &CMat, q_cov: &CMat, noise: f64) -> CMat {
        g * q_cov * g.adjoint() + linalg::eye(g.nrows()) * real(noise)
    }

    /// `(I + Pᴴ Hᴴ R⁻¹ H P)⁻¹`.
    fn mmse_matrix(h: &CMat, p: &CMat, r: &CMat) -> Result<CMat> {
        let hp = h * p;
        let m = linalg::eye(p.ncols()) + hp.adjoint() * hpd_solve(r, &hp, "reference interference")?;
        hpd_inverse(&hermitian_part(&m), "reference MSE")
    }

    fn bisect_direct(x: &CMat, r: &CMat, budget: f64) -> Result<(CMat, f64)> {
        let solve = |lambda: f64| -> Result<CMat> {
            let m = x + linalg::eye(x.nrows()) * real(lambda);
            // Minimum-norm solution when X is singular and λ = 0.
            if lambda == 0.0 {
                let (vals, vecs) = hermitian_eig(x);
                let lmax = vals.iter().copied().fold(0.0, f64::max);
                let inv = CMat::from_diagonal(&vals.map(|v| {
                    if v > 1e-12 * lmax {
                        real(1.0 / v)
                    } else {
                        real(0.0)
                    }
                }));
                return Ok(&vecs * inv * vecs.adjoint() * r);
            }
            hpd_solve(&m, r, "reference precoder")
        };
        let u0 = solve(0.0)?;
        if u0.norm_squared() <= budget {
            return Ok((u0, 0.0));
        }
        let mut hi = 1.0;
        while solve(hi)?.norm_squared() > budget {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if solve(mid)?.norm_squared() > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((solve(hi)?, hi))
    }

    /// One grouped sweep of combiner, weight and precoder updates on `ch`.
    pub fn sweep(ch: &Channels, state: &BeamformingState, cfg: &SystemConfig) -> Result<BeamformingState> {
        let h = compose_effective_channels(ch, &state.theta)?;
        let (u_cov, v_cov) = (state.u_cov(), state.v_cov());
        let mut next = state.clone();

        let r_k = total_cov(&h.h_bar_k, &u_cov, &h.h_bar_0, &v_cov, cfg.sigma0_sq);
        let r_j = total_cov(&h.h_bar_j, &v_cov, &h.h_bar_jk, &u_cov, cfg.sigmaj_sq);
        next.f_k = state.u_k.adjoint() * h.h_bar_k.adjoint() * hpd_inverse(&r_k, "reference")?;
        next.f_j = state.v_j.adjoint() * h.h_bar_j.adjoint() * hpd_inverse(&r_j, "reference")?;

        let e_k = mmse_matrix(&h.h_bar_k, &state.u_k, &interference_cov(&h.h_bar_0, &v_cov, cfg.sigma0_sq))?;
        let e_j = mmse_matrix(&h.h_bar_j, &state.v_j, &interference_cov(&h.h_bar_jk, &u_cov, cfg.sigmaj_sq))?;
        let ln2 = std::f64::consts::LN_2;
        next.w_k = hpd_inverse(&hermitian_part(&e_k), "reference")? * real(cfg.wk / ln2);
        next.w_j = hpd_inverse(&hermitian_part(&e_j), "reference")? * real(cfg.wj / ln2);

        let a_k = next.f_k.adjoint() * &next.w_k * &next.f_k;
        let a_j = next.f_j.adjoint() * &next.w_j * &next.f_j;
        let x_k = h.h_bar_k.adjoint() * &a_k * &h.h_bar_k + h.h_bar_jk.adjoint() * &a_j * &h.h_bar_jk;
        let x_j = h.h_bar_j.adjoint() * &a_j * &h.h_bar_j + h.h_bar_0.adjoint() * &a_k * &h.h_bar_0;
        let rhs_k = h.h_bar_k.adjoint() * next.f_k.adjoint() * &next.w_k;
        let rhs_j = h.h_bar_j.adjoint() * next.f_j.adjoint() * &next.w_j;
        let (u, lk) = bisect_direct(&hermitian_part(&x_k), &rhs_k, cfg.alphak)?;
        let (v, l0) = bisect_direct(&hermitian_part(&x_j), &rhs_j, cfg.alpha0)?;
        next.u_k = u;
        next.v_j = v;
        next.lambda_k = lk;
        next.lambda_0 = l0;
        Ok(next)
    }

    /// `Σ_i Tr(W_i E_i)` on known channels at an arbitrary complex `θ`
    /// (unit modulus not required).
    pub fn weighted_mse(
        ch: &Channels,
        state: &BeamformingState,
        cfg: &SystemConfig,
        theta: &crate::linalg::CVec,
    ) -> f64 {
        let eff = |d: &CMat, b: &CMat, c: &CMat| d + b * CMat::from_diagonal(theta) * c;
        let hk = eff(&ch.h_k, &ch.h_0theta, &ch.h_thetak);
        let h0 = eff(&ch.h_0, &ch.h_0theta, &ch.h_theta0);
        let hj = eff(&ch.h_j, &ch.h_jtheta, &ch.h_theta0);
        let hjk = eff(&ch.h_jk, &ch.h_jtheta, &ch.h_thetak);
        let (u_cov, v_cov) = (state.u_cov(), state.v_cov());
        let mse = |f: &CMat, h: &CMat, p: &CMat, r: &CMat| {
            let fhp = f * h * p;
            f * r * f.adjoint() - &fhp - fhp.adjoint() + linalg::eye(fhp.nrows())
        };
        let e_k = mse(&state.f_k, &hk, &state.u_k, &total_cov(&hk, &u_cov, &h0, &v_cov, cfg.sigma0_sq));
        let e_j = mse(&state.f_j, &hj, &state.v_j, &total_cov(&hj, &v_cov, &hjk, &u_cov, cfg.sigmaj_sq));
        (&state.w_k * e_k).trace().re + (&state.w_j * e_j).trace().re
    }
}
