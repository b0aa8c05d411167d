//! Scenario configuration, channel containers and effective-channel
//! composition.
//!
//! The system has one multi-antenna uplink (UL) user, one downlink (DL) user,
//! a full-duplex base station (BS) and a single IRS. Eight channels describe
//! it: four direct links (UL user → BS, BS → DL user, BS self-interference,
//! UL user → DL user) and four IRS hops. Every path seen by a receiver is a
//! direct link plus an IRS cascade `B · diag(θ) · C`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::linalg::{self, scale_cols, CMat, CVec};

/// Scalars describing one scenario: antenna and stream counts, IRS size,
/// power budgets, noise variances and rate weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS transmit antennas.
    pub m0: usize,
    /// BS receive antennas.
    pub n0: usize,
    /// UL user transmit antennas.
    pub mk: usize,
    /// DL user receive antennas.
    pub nj: usize,
    /// UL stream count.
    pub uk: usize,
    /// DL stream count.
    pub vj: usize,
    pub irs_rows: usize,
    pub irs_cols: usize,
    /// BS sum-power budget (linear).
    pub alpha0: f64,
    /// UL user sum-power budget (linear).
    pub alphak: f64,
    /// Noise variance at the BS receiver.
    pub sigma0_sq: f64,
    /// Noise variance at the DL user.
    pub sigmaj_sq: f64,
    /// UL rate weight.
    pub wk: f64,
    /// DL rate weight.
    pub wj: f64,
}

impl SystemConfig {
    /// Antenna, stream and IRS dimensions used in the published evaluation
    /// (15/8 BS antennas, 5-antenna users, two streams each, 10x10 IRS).
    pub fn paper_default() -> Self {
        Self {
            m0: 15,
            n0: 8,
            mk: 5,
            nj: 5,
            uk: 2,
            vj: 2,
            irs_rows: 10,
            irs_cols: 10,
            ..Self::desk_default()
        }
    }

    /// Reduced problem size for quick sweeps.
    pub fn desk_default() -> Self {
        Self {
            m0: 8,
            n0: 4,
            mk: 3,
            nj: 3,
            uk: 2,
            vj: 2,
            irs_rows: 4,
            irs_cols: 4,
            alpha0: 1000.0,
            alphak: 1000.0,
            sigma0_sq: 1.0,
            sigmaj_sq: 1.0,
            wk: 1.0,
            wj: 1.0,
        }
    }

    /// Number of IRS elements `R·C`.
    pub fn rc(&self) -> usize {
        self.irs_rows * self.irs_cols
    }

    /// Sets both power budgets from a transmit SNR, `SNR = α0/σj² = αk/σ0²`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        let snr = db_to_linear(snr_db);
        self.alpha0 = snr * self.sigmaj_sq;
        self.alphak = snr * self.sigma0_sq;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let issues = validate_config(self);
        if issues.is_empty() {
            Ok(())
        } else {
            let joined = issues
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::Config(joined))
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One violated configuration invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    pub field: &'static str,
    pub message: &'static str,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Reports every violated invariant of `cfg`; an empty list means valid.
pub fn validate_config(cfg: &SystemConfig) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    let mut push = |field, message| issues.push(ConfigIssue { field, message });

    for (field, value) in [
        ("m0", cfg.m0),
        ("n0", cfg.n0),
        ("mk", cfg.mk),
        ("nj", cfg.nj),
        ("uk", cfg.uk),
        ("vj", cfg.vj),
        ("irs_rows", cfg.irs_rows),
        ("irs_cols", cfg.irs_cols),
    ] {
        if value < 1 {
            push(field, "count must be at least 1");
        }
    }
    if cfg.uk > cfg.mk.min(cfg.n0) {
        push("uk", "stream count exceeds min antenna dim");
    }
    if cfg.vj > cfg.m0.min(cfg.nj) {
        push("vj", "stream count exceeds min antenna dim");
    }
    for (field, value) in [("alpha0", cfg.alpha0), ("alphak", cfg.alphak)] {
        if !(value > 0.0 && value.is_finite()) {
            push(field, "power budget must be positive");
        }
    }
    for (field, value) in [("sigma0_sq", cfg.sigma0_sq), ("sigmaj_sq", cfg.sigmaj_sq)] {
        if !(value > 0.0 && value.is_finite()) {
            push(field, "noise variance must be positive");
        }
    }
    for (field, value) in [("wk", cfg.wk), ("wj", cfg.wj)] {
        if !(value >= 0.0 && value.is_finite()) {
            push(field, "rate weight must be nonnegative");
        }
    }
    issues
}

/// The eight channels of the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Link {
    /// UL user → BS receive array (`n0 × mk`).
    Ul,
    /// BS transmit array → DL user (`nj × m0`).
    Dl,
    /// BS transmit → BS receive self-interference (`n0 × m0`).
    SelfInterference,
    /// UL user → DL user cross-interference (`nj × mk`).
    Cross,
    /// BS transmit array → IRS (`RC × m0`).
    BsToIrs,
    /// IRS → BS receive array (`n0 × RC`).
    IrsToBs,
    /// IRS → DL user (`nj × RC`).
    IrsToDl,
    /// UL user → IRS (`RC × mk`).
    UlToIrs,
}

impl Link {
    pub const ALL: [Link; 8] = [
        Link::Ul,
        Link::Dl,
        Link::SelfInterference,
        Link::Cross,
        Link::BsToIrs,
        Link::IrsToBs,
        Link::IrsToDl,
        Link::UlToIrs,
    ];

    /// `(receive dimension, transmit dimension)` of the channel matrix.
    pub fn dims(self, cfg: &SystemConfig) -> (usize, usize) {
        let rc = cfg.rc();
        match self {
            Link::Ul => (cfg.n0, cfg.mk),
            Link::Dl => (cfg.nj, cfg.m0),
            Link::SelfInterference => (cfg.n0, cfg.m0),
            Link::Cross => (cfg.nj, cfg.mk),
            Link::BsToIrs => (rc, cfg.m0),
            Link::IrsToBs => (cfg.n0, rc),
            Link::IrsToDl => (cfg.nj, rc),
            Link::UlToIrs => (rc, cfg.mk),
        }
    }

    pub fn involves_irs(self) -> bool {
        matches!(
            self,
            Link::BsToIrs | Link::IrsToBs | Link::IrsToDl | Link::UlToIrs
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Ul => "h_k",
            Link::Dl => "h_j",
            Link::SelfInterference => "h_0",
            Link::Cross => "h_jk",
            Link::BsToIrs => "h_theta0",
            Link::IrsToBs => "h_0theta",
            Link::IrsToDl => "h_jtheta",
            Link::UlToIrs => "h_thetak",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// A direct link plus the IRS cascade `rx_hop · diag(θ) · tx_hop` that share
/// a transmitter and a receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Path {
    pub direct: Link,
    pub rx_hop: Link,
    pub tx_hop: Link,
}

/// UL user → BS.
pub const UL_PATH: Path = Path {
    direct: Link::Ul,
    rx_hop: Link::IrsToBs,
    tx_hop: Link::UlToIrs,
};
/// BS transmit → BS receive.
pub const SI_PATH: Path = Path {
    direct: Link::SelfInterference,
    rx_hop: Link::IrsToBs,
    tx_hop: Link::BsToIrs,
};
/// BS → DL user.
pub const DL_PATH: Path = Path {
    direct: Link::Dl,
    rx_hop: Link::IrsToDl,
    tx_hop: Link::BsToIrs,
};
/// UL user → DL user.
pub const CROSS_PATH: Path = Path {
    direct: Link::Cross,
    rx_hop: Link::IrsToDl,
    tx_hop: Link::UlToIrs,
};

/// The eight channel matrices. Used both for estimates `Ĥ` and for
/// realizations `Ĥ + ΔH`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channels {
    pub h_k: CMat,
    pub h_j: CMat,
    pub h_0: CMat,
    pub h_jk: CMat,
    pub h_theta0: CMat,
    pub h_0theta: CMat,
    pub h_jtheta: CMat,
    pub h_thetak: CMat,
}

/// Channel estimates available at design time.
pub type ChannelEstimates = Channels;
/// Channel realizations `Ĥ + ΔH`.
pub type TrueChannels = Channels;

impl Channels {
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self::from_fn(cfg, |_, (r, c)| linalg::zeros(r, c))
    }

    /// Builds all eight matrices from a per-link constructor receiving the
    /// link and its `(rows, cols)`.
    pub fn from_fn(cfg: &SystemConfig, mut f: impl FnMut(Link, (usize, usize)) -> CMat) -> Self {
        let mut make = |link: Link| f(link, link.dims(cfg));
        Self {
            h_k: make(Link::Ul),
            h_j: make(Link::Dl),
            h_0: make(Link::SelfInterference),
            h_jk: make(Link::Cross),
            h_theta0: make(Link::BsToIrs),
            h_0theta: make(Link::IrsToBs),
            h_jtheta: make(Link::IrsToDl),
            h_thetak: make(Link::UlToIrs),
        }
    }

    pub fn get(&self, link: Link) -> &CMat {
        match link {
            Link::Ul => &self.h_k,
            Link::Dl => &self.h_j,
            Link::SelfInterference => &self.h_0,
            Link::Cross => &self.h_jk,
            Link::BsToIrs => &self.h_theta0,
            Link::IrsToBs => &self.h_0theta,
            Link::IrsToDl => &self.h_jtheta,
            Link::UlToIrs => &self.h_thetak,
        }
    }

    pub fn get_mut(&mut self, link: Link) -> &mut CMat {
        match link {
            Link::Ul => &mut self.h_k,
            Link::Dl => &mut self.h_j,
            Link::SelfInterference => &mut self.h_0,
            Link::Cross => &mut self.h_jk,
            Link::BsToIrs => &mut self.h_theta0,
            Link::IrsToBs => &mut self.h_0theta,
            Link::IrsToDl => &mut self.h_jtheta,
            Link::UlToIrs => &mut self.h_thetak,
        }
    }

    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        for link in Link::ALL {
            check_dims(link.name(), link.dims(cfg), self.get(link).shape())?;
            if self.get(link).iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numerical(format!(
                    "channel {} has non-finite entries",
                    link.name()
                )));
            }
        }
        Ok(())
    }

    /// Zeroes the listed links in place.
    pub fn zero_links(&mut self, links: &[Link]) {
        for &link in links {
            self.get_mut(link).fill(linalg::ZERO);
        }
    }
}

/// Transmit-side (`j_cov`) and receive-side (`k_cov`) covariance of one
/// link's estimation error, `vec(ΔH) ~ CN(0, J ⊗ K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkCovariance {
    pub j_cov: CMat,
    pub k_cov: CMat,
}

impl LinkCovariance {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            j_cov: linalg::zeros(cols, cols),
            k_cov: linalg::zeros(rows, rows),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.j_cov.iter().all(|z| *z == linalg::ZERO) || self.k_cov.iter().all(|z| *z == linalg::ZERO)
    }
}

/// Error covariance pairs for all eight links.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCovariances {
    links: [LinkCovariance; 8],
}

impl ErrorCovariances {
    /// Perfect CSI.
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self::from_fn(cfg, |_, (r, c)| LinkCovariance::zeros(r, c))
    }

    pub fn from_fn(
        cfg: &SystemConfig,
        mut f: impl FnMut(Link, (usize, usize)) -> LinkCovariance,
    ) -> Self {
        Self {
            links: Link::ALL.map(|link| f(link, link.dims(cfg))),
        }
    }

    pub fn get(&self, link: Link) -> &LinkCovariance {
        &self.links[link.index()]
    }

    pub fn set(&mut self, link: Link, cov: LinkCovariance) {
        self.links[link.index()] = cov;
    }

    pub fn is_zero(&self) -> bool {
        self.links.iter().all(LinkCovariance::is_zero)
    }

    /// Checks dimensions, Hermitian symmetry and positive semidefiniteness.
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        for link in Link::ALL {
            let (rows, cols) = link.dims(cfg);
            let cov = self.get(link);
            check_dims("error covariance J", (cols, cols), cov.j_cov.shape())?;
            check_dims("error covariance K", (rows, rows), cov.k_cov.shape())?;
            linalg::check_psd(&cov.j_cov, 1e-12, &format!("J of {}", link.name()))?;
            linalg::check_psd(&cov.k_cov, 1e-12, &format!("K of {}", link.name()))?;
        }
        Ok(())
    }

    pub fn zero_links(&mut self, links: &[Link]) {
        for &link in links {
            let cov = self.get(link);
            let zeroed = LinkCovariance::zeros(cov.k_cov.nrows(), cov.j_cov.nrows());
            self.set(link, zeroed);
        }
    }
}

/// IRS reflection vector `θ` with unit-modulus entries.
#[derive(Clone, Debug, PartialEq)]
pub struct IrsPhase(CVec);

impl IrsPhase {
    pub const MODULUS_TOL: f64 = 1e-12;

    pub fn new(theta: CVec) -> Result<Self> {
        for (index, z) in theta.iter().enumerate() {
            let modulus = z.norm();
            if (modulus - 1.0).abs() > Self::MODULUS_TOL {
                return Err(Error::NotUnitModulus { index, modulus });
            }
        }
        Ok(Self(theta))
    }

    /// All elements reflecting with zero phase.
    pub fn ones(n: usize) -> Self {
        Self(CVec::from_element(n, linalg::ONE))
    }

    pub fn from_angles(angles: &[f64]) -> Self {
        Self(CVec::from_iterator(
            angles.len(),
            angles.iter().map(|&a| num_complex::Complex64::from_polar(1.0, a)),
        ))
    }

    /// `e^{iφ} θ`.
    pub fn rotated(&self, phi: f64) -> Self {
        Self(&self.0 * num_complex::Complex64::from_polar(1.0, phi))
    }

    pub fn as_vec(&self) -> &CVec {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_modulus_error(&self) -> f64 {
        self.0.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub(crate) fn from_vec_unchecked(theta: CVec) -> Self {
        Self(theta)
    }
}

/// Precoders, combiners, MSE weights, IRS phase and power multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformingState {
    /// UL precoder, `mk × uk`.
    pub u_k: CMat,
    /// DL precoder, `m0 × vj`.
    pub v_j: CMat,
    /// BS combiner for the UL streams, `uk × n0`.
    pub f_k: CMat,
    /// DL user combiner, `vj × nj`.
    pub f_j: CMat,
    /// UL MSE weight, `uk × uk`.
    pub w_k: CMat,
    /// DL MSE weight, `vj × vj`.
    pub w_j: CMat,
    pub theta: IrsPhase,
    pub lambda_k: f64,
    pub lambda_0: f64,
}

impl BeamformingState {
    /// All-zero beamformers and identity weights.
    pub fn zeros(cfg: &SystemConfig) -> Self {
        Self {
            u_k: linalg::zeros(cfg.mk, cfg.uk),
            v_j: linalg::zeros(cfg.m0, cfg.vj),
            f_k: linalg::zeros(cfg.uk, cfg.n0),
            f_j: linalg::zeros(cfg.vj, cfg.nj),
            w_k: linalg::eye(cfg.uk),
            w_j: linalg::eye(cfg.vj),
            theta: IrsPhase::ones(cfg.rc()),
            lambda_k: 0.0,
            lambda_0: 0.0,
        }
    }

    /// `Ũ = U Uᴴ`.
    pub fn u_cov(&self) -> CMat {
        &self.u_k * self.u_k.adjoint()
    }

    /// `Ṽ = V Vᴴ`.
    pub fn v_cov(&self) -> CMat {
        &self.v_j * self.v_j.adjoint()
    }

    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        check_dims("U_k", (cfg.mk, cfg.uk), self.u_k.shape())?;
        check_dims("V_j", (cfg.m0, cfg.vj), self.v_j.shape())?;
        check_dims("F_k", (cfg.uk, cfg.n0), self.f_k.shape())?;
        check_dims("F_j", (cfg.vj, cfg.nj), self.f_j.shape())?;
        check_dims("W_k", (cfg.uk, cfg.uk), self.w_k.shape())?;
        check_dims("W_j", (cfg.vj, cfg.vj), self.w_j.shape())?;
        check_dims("theta", (cfg.rc(), 1), (self.theta.len(), 1))
    }
}

/// The four composite channels seen by the receivers.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannels {
    /// UL user → BS, `n0 × mk`.
    pub h_bar_k: CMat,
    /// BS transmit → BS receive, `n0 × m0`.
    pub h_bar_0: CMat,
    /// BS → DL user, `nj × m0`.
    pub h_bar_j: CMat,
    /// UL user → DL user, `nj × mk`.
    pub h_bar_jk: CMat,
}

/// `direct + rx_hop · diag(θ) · tx_hop` for one path.
pub fn effective_channel(ch: &Channels, path: Path, theta: &IrsPhase) -> CMat {
    let cascade = scale_cols(ch.get(path.rx_hop), theta.as_vec()) * ch.get(path.tx_hop);
    ch.get(path.direct) + cascade
}

pub fn compose_effective_channels(ch: &Channels, theta: &IrsPhase) -> Result<EffectiveChannels> {
    let rc = ch.h_theta0.nrows();
    check_dims("theta", (rc, 1), (theta.len(), 1))?;
    for (path, name) in [
        (UL_PATH, "UL path"),
        (SI_PATH, "SI path"),
        (DL_PATH, "DL path"),
        (CROSS_PATH, "cross path"),
    ] {
        let (direct, rx, tx) = (ch.get(path.direct), ch.get(path.rx_hop), ch.get(path.tx_hop));
        check_dims(name, (direct.nrows(), rc), rx.shape())?;
        check_dims(name, (rc, direct.ncols()), tx.shape())?;
    }
    Ok(EffectiveChannels {
        h_bar_k: effective_channel(ch, UL_PATH, theta),
        h_bar_0: effective_channel(ch, SI_PATH, theta),
        h_bar_j: effective_channel(ch, DL_PATH, theta),
        h_bar_jk: effective_channel(ch, CROSS_PATH, theta),
    })
}
