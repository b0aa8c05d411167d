//! Comparison schemes obtained by reconfiguring the core solver: duplexing
//! mode, presence of the IRS, and whether the design accounts for CSI
//! errors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ewmmse::{initial_precoders, run_from, Solution, SolverOptions};
use crate::linalg;
use crate::rate::{ergodic_wsr_lb, mean_stderr, sample_wsr, RateKind, RateReport};
use crate::system_model::{
    BeamformingState, ChannelEstimates, ErrorCovariances, Link, SystemConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duplex {
    Fd,
    Hd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrsMode {
    WithIrs,
    NoIrs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Robustness {
    Robust,
    NonRobust,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeId {
    pub duplex: Duplex,
    pub irs: IrsMode,
    pub robust: Robustness,
}

impl SchemeId {
    pub const fn new(duplex: Duplex, irs: IrsMode, robust: Robustness) -> Self {
        Self { duplex, irs, robust }
    }

    /// The proposed design: full duplex, IRS, robust.
    pub const PROPOSED: SchemeId = SchemeId::new(Duplex::Fd, IrsMode::WithIrs, Robustness::Robust);

    /// Proposed design first, then the benchmarks.
    pub const ALL: [SchemeId; 8] = [
        SchemeId::PROPOSED,
        SchemeId::new(Duplex::Fd, IrsMode::WithIrs, Robustness::NonRobust),
        SchemeId::new(Duplex::Fd, IrsMode::NoIrs, Robustness::Robust),
        SchemeId::new(Duplex::Fd, IrsMode::NoIrs, Robustness::NonRobust),
        SchemeId::new(Duplex::Hd, IrsMode::WithIrs, Robustness::Robust),
        SchemeId::new(Duplex::Hd, IrsMode::WithIrs, Robustness::NonRobust),
        SchemeId::new(Duplex::Hd, IrsMode::NoIrs, Robustness::Robust),
        SchemeId::new(Duplex::Hd, IrsMode::NoIrs, Robustness::NonRobust),
    ];

    pub fn label(&self) -> String {
        let duplex = match self.duplex {
            Duplex::Fd => "FD",
            Duplex::Hd => "HD",
        };
        let irs = match self.irs {
            IrsMode::WithIrs => "IRS",
            IrsMode::NoIrs => "No-IRS",
        };
        let robust = match self.robust {
            Robustness::Robust => "RB",
            Robustness::NonRobust => "Non-RB",
        };
        format!("{duplex}-{irs}-{robust}")
    }

    /// The same scheme with the other robustness setting.
    pub fn with_robustness(self, robust: Robustness) -> Self {
        Self { robust, ..self }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

const IRS_LINKS: [Link; 4] = [Link::BsToIrs, Link::IrsToBs, Link::IrsToDl, Link::UlToIrs];
const INTERFERENCE_LINKS: [Link; 2] = [Link::SelfInterference, Link::Cross];

/// Monte-Carlo evaluation settings. Draw `i` uses the substream
/// `(seed, ERROR_DRAW, i)`, so schemes sharing a seed see identical errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub n_error_draws: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SchemeOutcome {
    pub scheme: SchemeId,
    /// One solution for full duplex; UL slot then DL slot for half duplex.
    pub designs: Vec<Solution>,
    /// Monte-Carlo WSR under the true error statistics.
    pub eval: RateReport,
    /// Per-draw WSR in draw order.
    pub samples: Vec<f64>,
    /// Closed-form bound of the design under the true error statistics.
    pub analytical: f64,
}

/// Channel estimates and error covariances as seen by `scheme`.
fn restrict(
    scheme: SchemeId,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
) -> (ChannelEstimates, ErrorCovariances) {
    let mut est = est.clone();
    let mut err = err.clone();
    if scheme.irs == IrsMode::NoIrs {
        est.zero_links(&IRS_LINKS);
        err.zero_links(&IRS_LINKS);
    }
    if scheme.duplex == Duplex::Hd {
        est.zero_links(&INTERFERENCE_LINKS);
        err.zero_links(&INTERFERENCE_LINKS);
    }
    (est, err)
}

/// Designs `scheme` on the estimates and evaluates it by Monte Carlo.
pub fn solve_scheme<R: Rng + ?Sized>(
    scheme: SchemeId,
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    cfg: &SystemConfig,
    opts: &SolverOptions,
    eval: &EvalOptions,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    if eval.n_error_draws == 0 {
        return Err(Error::Config("n_error_draws must be at least 1".into()));
    }
    let (est, err_true) = restrict(scheme, est, err);
    let err_design = match scheme.robust {
        Robustness::Robust => err_true.clone(),
        Robustness::NonRobust => ErrorCovariances::zeros(cfg),
    };
    let opts = SolverOptions {
        optimize_irs: opts.optimize_irs && scheme.irs == IrsMode::WithIrs,
        ..opts.clone()
    };
    let mut init = BeamformingState::zeros(cfg);
    let (u, v) = initial_precoders(&est, cfg, &init.theta, opts.init_policy, rng);
    init.u_k = u;
    init.v_j = v;

    match scheme.duplex {
        Duplex::Fd => {
            let sol = run_from(&est, &err_design, cfg, &opts, init)?;
            let samples = sample_wsr(&est, &err_true, &sol.state, cfg, eval.n_error_draws, eval.seed)?;
            let analytical = ergodic_wsr_lb(&est, &err_true, &sol.state, cfg)?.wsr_total;
            Ok(SchemeOutcome {
                scheme,
                designs: vec![sol],
                eval: samples.report()?,
                samples: samples.totals(),
                analytical,
            })
        }
        Duplex::Hd => {
            // Each slot serves one user for half the time.
            let ul_cfg = SystemConfig { wj: 0.0, ..cfg.clone() };
            let mut ul_init = init.clone();
            ul_init.v_j.fill(linalg::ZERO);
            let ul = run_from(&est, &err_design, &ul_cfg, &opts, ul_init)?;
            let dl_cfg = SystemConfig { wk: 0.0, ..cfg.clone() };
            let mut dl_init = init;
            dl_init.u_k.fill(linalg::ZERO);
            let dl = run_from(&est, &err_design, &dl_cfg, &opts, dl_init)?;

            let s_ul = sample_wsr(&est, &err_true, &ul.state, cfg, eval.n_error_draws, eval.seed)?;
            let s_dl = sample_wsr(&est, &err_true, &dl.state, cfg, eval.n_error_draws, eval.seed)?;
            let r_ul: Vec<f64> = s_ul.ul.iter().map(|r| 0.5 * r).collect();
            let r_dl: Vec<f64> = s_dl.dl.iter().map(|r| 0.5 * r).collect();
            let samples: Vec<f64> = r_ul.iter().zip(&r_dl).map(|(a, b)| a + b).collect();
            let (mean_ul, _) = mean_stderr(&r_ul);
            let (mean_dl, _) = mean_stderr(&r_dl);
            let (_, stderr) = mean_stderr(&samples);
            let analytical = 0.5
                * (ergodic_wsr_lb(&est, &err_true, &ul.state, cfg)?.r_ul
                    + ergodic_wsr_lb(&est, &err_true, &dl.state, cfg)?.r_dl);
            Ok(SchemeOutcome {
                scheme,
                designs: vec![ul, dl],
                eval: RateReport {
                    wsr_total: mean_ul + mean_dl,
                    r_ul: mean_ul,
                    r_dl: mean_dl,
                    kind: RateKind::MonteCarlo {
                        n_samples: eval.n_error_draws,
                        stderr,
                    },
                },
                samples,
                analytical,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_gen::{error_covariances, generate_estimates, CsiErrorPolicy, GeometryConfig};
    use crate::rate::instantaneous_wsr;
    use crate::streams::{substream, tag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario(rho: f64) -> (SystemConfig, ChannelEstimates, ErrorCovariances) {
        let cfg = SystemConfig {
            irs_rows: 2,
            irs_cols: 2,
            ..SystemConfig::desk_default()
        };
        let est = generate_estimates(&cfg, &GeometryConfig::default(), &mut substream(1, tag::SCENARIO, 0)).unwrap();
        let err = error_covariances(&CsiErrorPolicy::iid(rho, 0.6), cfg.alpha0 / cfg.sigma0_sq, &cfg).unwrap();
        (cfg, est, err)
    }

    fn quick() -> SolverOptions {
        SolverOptions {
            max_outer_iters: 30,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn labels_round_trip() {
        let labels: Vec<String> = SchemeId::ALL.iter().map(|s| s.label()).collect();
        assert_eq!(labels[0], "FD-IRS-RB");
        assert!(labels.contains(&"HD-No-IRS-Non-RB".to_string()));
        for id in SchemeId::ALL {
            assert_eq!(id.label().parse::<SchemeId>().unwrap(), id);
        }
        assert!("FD-XYZ".parse::<SchemeId>().is_err());
    }

    #[test]
    fn perfect_csi_makes_robustness_irrelevant() {
        let (cfg, est, err) = scenario(0.0);
        let eval = EvalOptions { n_error_draws: 4, seed: 2 };
        let a = solve_scheme(SchemeId::PROPOSED, &est, &err, &cfg, &quick(), &eval, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let naive = SchemeId::PROPOSED.with_robustness(Robustness::NonRobust);
        let b = solve_scheme(naive, &est, &err, &cfg, &quick(), &eval, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let (sa, sb) = (&a.designs[0].state, &b.designs[0].state);
        assert!((&sa.u_k - &sb.u_k).norm() <= 1e-9 * sa.u_k.norm());
        assert!((&sa.v_j - &sb.v_j).norm() <= 1e-9 * sa.v_j.norm());
        assert!((sa.theta.as_vec() - sb.theta.as_vec()).norm() <= 1e-9);
    }

    #[test]
    fn half_duplex_is_average_of_interference_free_slots() {
        let (cfg, est, err) = scenario(0.4);
        let eval = EvalOptions { n_error_draws: 8, seed: 5 };
        let hd = SchemeId::new(Duplex::Hd, IrsMode::WithIrs, Robustness::Robust);
        let out = solve_scheme(hd, &est, &err, &cfg, &quick(), &eval, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(out.designs.len(), 2);
        assert_eq!(linalg::power(&out.designs[0].state.v_j), 0.0);
        assert_eq!(linalg::power(&out.designs[1].state.u_k), 0.0);
        // Recompute draw 0 by hand with the interference links removed.
        let (est_hd, err_hd) = restrict(hd, &est, &err);
        assert_eq!(est_hd.h_0.norm(), 0.0);
        assert_eq!(est_hd.h_jk.norm(), 0.0);
        let sampler = crate::channel_gen::ChannelSampler::new(&est_hd, &err_hd).unwrap();
        let ch = sampler.sample(&mut substream(5, tag::ERROR_DRAW, 0));
        let ul = instantaneous_wsr(&ch, &out.designs[0].state, &cfg).unwrap().r_ul;
        let dl = instantaneous_wsr(&ch, &out.designs[1].state, &cfg).unwrap().r_dl;
        assert!((out.samples[0] - 0.5 * (ul + dl)).abs() < 1e-12);
    }

    #[test]
    fn no_irs_scheme_ignores_reflected_paths() {
        let (cfg, est, err) = scenario(0.4);
        let eval = EvalOptions { n_error_draws: 4, seed: 7 };
        let id = SchemeId::new(Duplex::Fd, IrsMode::NoIrs, Robustness::Robust);
        let out = solve_scheme(id, &est, &err, &cfg, &quick(), &eval, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert!(out.designs[0].trace.iter().all(|r| r.mm_iterations == 0));
        assert!(out.eval.wsr_total > 0.0);
    }
}
