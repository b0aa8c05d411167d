//! Scenario channel generation and Kronecker-structured CSI error sampling.
//!
//! Direct links (UL user ↔ BS, BS ↔ DL user, UL ↔ DL user) and the BS
//! self-interference link are Rician with a ULA line-of-sight component;
//! every IRS hop is Rayleigh. Large-scale gain follows a log-distance model.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::linalg::{self, c, psd_sqrt, real, CMat, CVec};
use crate::system_model::{
    ChannelEstimates, Channels, ErrorCovariances, Link, LinkCovariance, SystemConfig,
    TrueChannels,
};

pub type Point3 = [f64; 3];

/// Node placement and propagation constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub bs: Point3,
    pub irs: Point3,
    pub ul_center: Point3,
    pub dl_center: Point3,
    /// Users are dropped uniformly in horizontal discs of this radius (m).
    pub user_radius: f64,
    pub rician_k_direct: f64,
    pub rician_k_si: f64,
    /// Path gain at 1 m, in dB (negative).
    pub pathloss_ref_db: f64,
    pub pathloss_exp_direct: f64,
    pub pathloss_exp_irs: f64,
    /// Separation of the BS transmit and receive arrays (m).
    pub si_distance: f64,
    /// When set, all large-scale gains are expressed relative to the direct
    /// path gain at this distance, so that a unit-noise receiver at that
    /// distance sees the transmit SNR. Cascaded IRS links split the
    /// normalization evenly between their two hops.
    pub reference_distance: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let ul_center = [20.0, 0.0, 30.0];
        Self {
            bs: [0.0, 0.0, 0.0],
            irs: [20.0, 10.0, 0.0],
            ul_center,
            dl_center: [30.0, 0.0, 20.0],
            user_radius: 8.0,
            rician_k_direct: 1.0,
            rician_k_si: 1.0,
            pathloss_ref_db: -30.0,
            pathloss_exp_direct: 3.5,
            pathloss_exp_irs: 2.2,
            si_distance: 1.0,
            reference_distance: Some(distance(&[0.0; 3], &ul_center)),
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.user_radius >= 0.0) {
            bad.push("user_radius must be nonnegative");
        }
        if !(self.pathloss_exp_direct > 0.0 && self.pathloss_exp_irs > 0.0) {
            bad.push("path-loss exponents must be positive");
        }
        if !(self.rician_k_direct >= 0.0 && self.rician_k_si >= 0.0) {
            bad.push("Rician factors must be nonnegative");
        }
        if !(self.si_distance > 0.0) {
            bad.push("si_distance must be positive");
        }
        if matches!(self.reference_distance, Some(d) if !(d > 0.0)) {
            bad.push("reference_distance must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Large-scale power gain (linear) of a link of length `d` metres.
    pub fn path_gain(&self, d: f64, exponent: f64) -> f64 {
        path_gain(self.pathloss_ref_db, d, exponent)
    }

    /// Amplitude factors `(direct, irs_hop)` applied after normalization.
    fn normalization(&self) -> (f64, f64) {
        match self.reference_distance {
            Some(d) => {
                let g_ref = self.path_gain(d, self.pathloss_exp_direct);
                (1.0 / g_ref.sqrt(), 1.0 / g_ref.sqrt().sqrt())
            }
            None => (1.0, 1.0),
        }
    }
}

/// `10^{(ref_db - 10·exponent·log10 d)/10}`.
pub fn path_gain(ref_db: f64, d: f64, exponent: f64) -> f64 {
    let db = ref_db - 10.0 * exponent * d.max(1e-3).log10();
    10f64.powf(db / 10.0)
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Structure of the CSI error covariances.
#[derive(Clone, Debug, PartialEq)]
pub enum ErrorStructure {
    /// `J = I`, `K = σ²_csi I` on every link.
    IidIdentity,
    /// Caller-supplied covariances, passed through after validation.
    Custom(ErrorCovariances),
}

/// CSI quality model `σ²_csi = ρ / SNR^α`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiErrorPolicy {
    pub rho: f64,
    pub alpha_decay: f64,
    pub structure: ErrorStructure,
}

impl CsiErrorPolicy {
    pub fn iid(rho: f64, alpha_decay: f64) -> Self {
        Self {
            rho,
            alpha_decay,
            structure: ErrorStructure::IidIdentity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Config("rho must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_decay) {
            return Err(Error::Config("alpha_decay must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn error_variance(&self, snr_linear: f64) -> f64 {
        self.rho / snr_linear.powf(self.alpha_decay)
    }
}

impl Default for CsiErrorPolicy {
    fn default() -> Self {
        Self::iid(0.4, 0.6)
    }
}

/// Error covariances for every link at the given transmit SNR.
pub fn error_covariances(
    policy: &CsiErrorPolicy,
    snr_linear: f64,
    cfg: &SystemConfig,
) -> Result<ErrorCovariances> {
    policy.validate()?;
    if !(snr_linear > 0.0) {
        return Err(Error::Config("SNR must be positive".into()));
    }
    match &policy.structure {
        ErrorStructure::IidIdentity => {
            let var = policy.error_variance(snr_linear);
            Ok(ErrorCovariances::from_fn(cfg, |_, (rows, cols)| LinkCovariance {
                j_cov: linalg::eye(cols),
                k_cov: linalg::eye(rows) * real(var),
            }))
        }
        ErrorStructure::Custom(covs) => {
            covs.validate(cfg)?;
            Ok(covs.clone())
        }
    }
}

/// One draw of `CN(0, 1)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows × cols` matrix of iid `CN(0, 1)` entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Unit-norm half-wavelength ULA response at direction cosine `cos_psi`.
pub fn ula_steering(n: usize, cos_psi: f64) -> CVec {
    let norm = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |k, _| Complex64::from_polar(norm, PI * k as f64 * cos_psi))
}

// All arrays are laid out along the x axis.
const ARRAY_AXIS: Point3 = [1.0, 0.0, 0.0];

fn direction_cosine(from: &Point3, to: &Point3) -> f64 {
    let d = distance(from, to);
    if d == 0.0 {
        return 0.0;
    }
    (0..3).map(|i| (to[i] - from[i]) / d * ARRAY_AXIS[i]).sum()
}

/// Rician matrix with unit average entry power: `√(K/(K+1)) LOS + √(1/(K+1)) NLOS`,
/// where the LOS term is `√(N_r N_t) a_r a_tᴴ` (unit-modulus entries).
fn rician<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    k_factor: f64,
    tx: &Point3,
    rx: &Point3,
    rng: &mut R,
) -> CMat {
    let a_t = ula_steering(cols, direction_cosine(tx, rx));
    let a_r = ula_steering(rows, direction_cosine(rx, tx));
    let los = &a_r * a_t.adjoint() * real(((rows * cols) as f64).sqrt());
    let nlos = complex_gaussian(rows, cols, rng);
    let (w_los, w_nlos) = if k_factor.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k_factor / (k_factor + 1.0)).sqrt(), (1.0 / (k_factor + 1.0)).sqrt())
    };
    los * real(w_los) + nlos * real(w_nlos)
}

/// Uniform drop in the horizontal disc of radius `r` around `center`.
pub fn drop_user<R: Rng + ?Sized>(center: &Point3, r: f64, rng: &mut R) -> Point3 {
    let rad = r * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [center[0] + rad * phi.cos(), center[1] + rad * phi.sin(), center[2]]
}

/// Draws one scenario: user positions, small-scale fading, path loss.
pub fn generate_estimates<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    geo: &GeometryConfig,
    rng: &mut R,
) -> Result<ChannelEstimates> {
    cfg.validate()?;
    geo.validate()?;
    let ul = drop_user(&geo.ul_center, geo.user_radius, rng);
    let dl = drop_user(&geo.dl_center, geo.user_radius, rng);
    let bs_rx = [geo.bs[0], geo.bs[1] + geo.si_distance, geo.bs[2]];
    let (norm_direct, norm_hop) = geo.normalization();

    let mut draw = |link: Link| -> CMat {
        let (rows, cols) = link.dims(cfg);
        let (tx, rx, k_factor, exponent) = match link {
            Link::Ul => (ul, geo.bs, Some(geo.rician_k_direct), geo.pathloss_exp_direct),
            Link::Dl => (geo.bs, dl, Some(geo.rician_k_direct), geo.pathloss_exp_direct),
            Link::Cross => (ul, dl, Some(geo.rician_k_direct), geo.pathloss_exp_direct),
            Link::SelfInterference => (geo.bs, bs_rx, Some(geo.rician_k_si), geo.pathloss_exp_direct),
            Link::BsToIrs => (geo.bs, geo.irs, None, geo.pathloss_exp_irs),
            Link::IrsToBs => (geo.irs, geo.bs, None, geo.pathloss_exp_irs),
            Link::IrsToDl => (geo.irs, dl, None, geo.pathloss_exp_irs),
            Link::UlToIrs => (ul, geo.irs, None, geo.pathloss_exp_irs),
        };
        let fading = match k_factor {
            Some(k) => rician(rows, cols, k, &tx, &rx, rng),
            None => complex_gaussian(rows, cols, rng),
        };
        let norm = if link.involves_irs() { norm_hop } else { norm_direct };
        let amplitude = geo.path_gain(distance(&tx, &rx), exponent).sqrt() * norm;
        fading * real(amplitude)
    };
    Ok(Channels {
        h_k: draw(Link::Ul),
        h_j: draw(Link::Dl),
        h_0: draw(Link::SelfInterference),
        h_jk: draw(Link::Cross),
        h_theta0: draw(Link::BsToIrs),
        h_0theta: draw(Link::IrsToBs),
        h_jtheta: draw(Link::IrsToDl),
        h_thetak: draw(Link::UlToIrs),
    })
}

/// Precomputed square-root factors `(K^{1/2}, (Jᵀ)^{1/2})` of one link's
/// error covariance.
#[derive(Clone, Debug)]
pub struct KroneckerFactor {
    k_sqrt: CMat,
    jt_sqrt: CMat,
    zero: bool,
}

const PSD_TOL: f64 = 1e-12;

impl KroneckerFactor {
    pub fn new(j_cov: &CMat, k_cov: &CMat) -> Result<Self> {
        if !j_cov.is_square() || !k_cov.is_square() {
            return Err(Error::Config("error covariances must be square".into()));
        }
        let zero = j_cov.iter().all(|z| *z == linalg::ZERO) || k_cov.iter().all(|z| *z == linalg::ZERO);
        Ok(Self {
            k_sqrt: psd_sqrt(k_cov, PSD_TOL)?,
            jt_sqrt: psd_sqrt(&j_cov.transpose(), PSD_TOL)?,
            zero,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.k_sqrt.nrows(), self.jt_sqrt.nrows())
    }

    /// `K^{1/2} G (Jᵀ)^{1/2}` with `G` iid `CN(0,1)`. `G` is drawn even
    /// when the covariance vanishes, so RNG consumption depends only on
    /// the link shape.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMat {
        let (rows, cols) = self.shape();
        let g = complex_gaussian(rows, cols, rng);
        if self.zero {
            return linalg::zeros(rows, cols);
        }
        &self.k_sqrt * g * &self.jt_sqrt
    }
}

/// One draw of `ΔH ~ CN(0, J ⊗ K)`.
pub fn sample_error<R: Rng + ?Sized>(j_cov: &CMat, k_cov: &CMat, rng: &mut R) -> Result<CMat> {
    Ok(KroneckerFactor::new(j_cov, k_cov)?.sample(rng))
}

/// Draws `Ĥ + ΔH` for all links; factors are computed once. Links with
/// zero covariance are returned unchanged.
#[derive(Clone, Debug)]
pub struct ChannelSampler {
    est: ChannelEstimates,
    factors: Vec<(Link, KroneckerFactor)>,
}

impl ChannelSampler {
    pub fn new(est: &ChannelEstimates, err: &ErrorCovariances) -> Result<Self> {
        let mut factors = Vec::new();
        for link in Link::ALL {
            let cov = err.get(link);
            let factor = KroneckerFactor::new(&cov.j_cov, &cov.k_cov)?;
            check_dims(link.name(), est.get(link).shape(), factor.shape())?;
            factors.push((link, factor));
        }
        Ok(Self {
            est: est.clone(),
            factors,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TrueChannels {
        let mut out = self.est.clone();
        for (link, factor) in &self.factors {
            let delta = factor.sample(rng);
            if !factor.zero {
                *out.get_mut(*link) += delta;
            }
        }
        out
    }
}

pub fn sample_true_channels<R: Rng + ?Sized>(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    rng: &mut R,
) -> Result<TrueChannels> {
    Ok(ChannelSampler::new(est, err)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{random_matrix, random_psd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn pure_los_is_rank_one() {
        let cfg = SystemConfig::desk_default();
        let geo = GeometryConfig {
            rician_k_direct: 1e12,
            rician_k_si: 1e12,
            ..GeometryConfig::default()
        };
        let est = generate_estimates(&cfg, &geo, &mut rng(4)).unwrap();
        for h in [&est.h_k, &est.h_j, &est.h_0, &est.h_jk] {
            let sv = h.clone().singular_values();
            let mut s: Vec<f64> = sv.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            assert!(s[1] / s[0] < 1e-6, "singular values {s:?}");
        }
    }

    #[test]
    fn doubling_exponent_squares_distance_factor() {
        let (d, e, r) = (37.0, 2.2, -30.0);
        let g1 = path_gain(r, d, e);
        let g2 = path_gain(r, d, 2.0 * e);
        let g_ref = path_gain(r, 1.0, e);
        // g(d, e) / g(1) = d^-e ; doubling the exponent squares that ratio.
        let ratio1 = g1 / g_ref;
        let ratio2 = g2 / g_ref;
        assert!((ratio2 / (ratio1 * ratio1) - 1.0).abs() < 1e-12);
        assert!((ratio1 - d.powf(-e)).abs() / ratio1 < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SystemConfig::desk_default();
        let geo = GeometryConfig::default();
        let a = generate_estimates(&cfg, &geo, &mut rng(9)).unwrap();
        let b = generate_estimates(&cfg, &geo, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        a.check_dims(&cfg).unwrap();
    }

    #[test]
    fn fading_has_unit_entry_power() {
        let mut r = rng(10);
        let g = complex_gaussian(100, 1000, &mut r);
        let p = g.norm_squared() / 1e5;
        assert!((p - 1.0).abs() < 0.03, "{p}");
        let cfg = SystemConfig::desk_default();
        let geo = GeometryConfig::default();
        let a_t = [0.0, 0.0, 0.0];
        let a_r = [3.0, 4.0, 0.0];
        let mut acc = 0.0;
        for _ in 0..(100_000 / (cfg.n0 * cfg.m0)) {
            acc += rician(cfg.n0, cfg.m0, geo.rician_k_direct, &a_t, &a_r, &mut r).norm_squared();
        }
        let p = acc / ((100_000 / (cfg.n0 * cfg.m0)) * cfg.n0 * cfg.m0) as f64;
        assert!((p - 1.0).abs() < 0.03, "{p}");
    }

    #[test]
    fn perfect_csi_has_zero_error_variance() {
        let cfg = SystemConfig::desk_default();
        let covs = error_covariances(&CsiErrorPolicy::iid(0.0, 0.6), 1000.0, &cfg).unwrap();
        for link in Link::ALL {
            assert!(covs.get(link).k_cov.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn error_variance_decays_with_snr() {
        let cfg = SystemConfig::desk_default();
        let covs = error_covariances(&CsiErrorPolicy::iid(0.4, 0.6), 1000.0, &cfg).unwrap();
        let expected = 0.4 / 1000f64.powf(0.6);
        assert!((expected - 6.3396e-3).abs() < 1e-7);
        for link in Link::ALL {
            let cov = covs.get(link);
            let (rows, cols) = link.dims(&cfg);
            assert_eq!(cov.j_cov, linalg::eye(cols));
            assert_eq!(cov.k_cov.shape(), (rows, rows));
            assert!((cov.k_cov[(0, 0)].re - expected).abs() < 1e-15);
        }
        let flat = CsiErrorPolicy::iid(1.0, 0.0);
        for snr in [1.0, 10.0, 1e4] {
            assert_eq!(flat.error_variance(snr), 1.0);
        }
    }

    #[test]
    fn custom_covariances_validated() {
        let cfg = SystemConfig {
            irs_rows: 1,
            irs_cols: 2,
            ..SystemConfig::desk_default()
        };
        let mut covs = ErrorCovariances::zeros(&cfg);
        let policy = CsiErrorPolicy {
            structure: ErrorStructure::Custom(covs.clone()),
            ..CsiErrorPolicy::default()
        };
        assert!(error_covariances(&policy, 10.0, &cfg).is_ok());
        let mut bad = linalg::eye(cfg.mk);
        bad[(0, 0)] = real(-1.0);
        covs.set(
            Link::Ul,
            LinkCovariance {
                j_cov: bad,
                k_cov: linalg::eye(cfg.n0),
            },
        );
        let policy = CsiErrorPolicy {
            structure: ErrorStructure::Custom(covs),
            ..CsiErrorPolicy::default()
        };
        assert!(matches!(error_covariances(&policy, 10.0, &cfg), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn zero_transmit_covariance_gives_zero_error() {
        let mut r = rng(11);
        let k = random_psd(3, &mut r);
        let e = sample_error(&linalg::zeros(2, 2), &k, &mut r).unwrap();
        assert!(e.iter().all(|z| *z == linalg::ZERO));
    }

    #[test]
    fn non_psd_rejected() {
        let mut r = rng(12);
        let mut j = linalg::eye(2);
        j[(1, 1)] = real(-0.5);
        assert!(sample_error(&j, &linalg::eye(2), &mut r).is_err());
    }

    #[test]
    fn iid_error_entry_variance() {
        let mut r = rng(13);
        let sigma2 = 0.25;
        let k = linalg::eye(10) * real(sigma2);
        let j = linalg::eye(10);
        let mut acc = 0.0;
        for _ in 0..1000 {
            acc += sample_error(&j, &k, &mut r).unwrap().norm_squared();
        }
        let var = acc / 1e5;
        assert!((var / sigma2 - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn kronecker_second_moments() {
        let mut r = rng(14);
        let j = random_psd(2, &mut r);
        let k = random_psd(2, &mut r);
        let x = random_matrix(2, 2, &mut r);
        let factor = KroneckerFactor::new(&j, &k).unwrap();
        let n = 100_000;
        let mut acc = linalg::zeros(2, 2);
        for _ in 0..n {
            let d = factor.sample(&mut r);
            acc += &d * &x * d.adjoint();
        }
        acc /= real(n as f64);
        let expect = k.clone() * linalg::trace_with_transpose(&x, &j);
        let err = linalg::rel_frobenius(&acc, &expect);
        assert!(err < 0.02, "relative error {err}");
    }

    #[test]
    fn zero_covariance_true_channels_equal_estimates() {
        let cfg = SystemConfig::desk_default();
        let est = generate_estimates(&cfg, &GeometryConfig::default(), &mut rng(15)).unwrap();
        let draw = sample_true_channels(&est, &ErrorCovariances::zeros(&cfg), &mut rng(16)).unwrap();
        assert_eq!(draw, est);
    }

    #[test]
    fn true_channel_draws_reproducible() {
        let cfg = SystemConfig::desk_default();
        let est = generate_estimates(&cfg, &GeometryConfig::default(), &mut rng(17)).unwrap();
        let err = error_covariances(&CsiErrorPolicy::default(), 10.0, &cfg).unwrap();
        let a = sample_true_channels(&est, &err, &mut rng(18)).unwrap();
        let b = sample_true_channels(&est, &err, &mut rng(18)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, est);
    }
}
