//! Gibbs sampler for the cross-sectional layer, nested inside draws of the
//! time-series layer.
//!
//! One sweep draws `(mu_Y, Sigma_Y)`, slices the cross-sectional inputs and
//! then updates `lambda`, `gamma` (in a fresh random order), `omega` and
//! `sigma^2`. Chains are reproducible from `(seed, chain_id)`; several chains
//! run in parallel and are merged in chain order.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::ReturnPanel;
use crate::prior::{
    build_d, calibrate_psi, compute_psi, ex_post_max_sr, sigma2_plugin, DiagPrecision, PriorConfig, PriorState,
    PsiSpec, SigmaPrior,
};
use crate::stats;
use crate::ts_layer::{extract_cross_section, CrossSectionInputs, TsPosterior};

/// State of the cross-sectional layer after one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionDraw {
    pub lambda: DVector<f64>,
    pub gamma: Vec<bool>,
    pub omega: Vec<f64>,
    pub sigma2: f64,
}

impl CrossSectionDraw {
    /// Starting point: every factor included, `omega = 0.5`.
    pub fn initial(dim: usize, k: usize, sigma2: f64) -> CrossSectionDraw {
        CrossSectionDraw {
            lambda: DVector::zeros(dim),
            gamma: vec![true; k],
            omega: vec![0.5; k],
            sigma2,
        }
    }
}

/// Whitened cross-sectional system `L^{-1} C`, `L^{-1} mu` with `L L' = Sigma_R`,
/// factorized once per time-series draw.
#[derive(Debug, Clone)]
pub struct CrossSectionSystem {
    n: usize,
    ctc: DMatrix<f64>,
    ctm: DVector<f64>,
    mm: f64,
}

impl CrossSectionSystem {
    pub fn new(inputs: &CrossSectionInputs) -> Result<CrossSectionSystem> {
        let chol = linalg::cholesky(&inputs.sigma_r, "test-asset covariance Sigma_R")?;
        let l = chol.l_dirty();
        let ct = l
            .solve_lower_triangular(&inputs.c)
            .expect("cholesky factor has a positive diagonal");
        let mt = l
            .solve_lower_triangular(&inputs.mu_r)
            .expect("cholesky factor has a positive diagonal");
        Ok(CrossSectionSystem {
            n: inputs.n_assets(),
            ctc: ct.tr_mul(&ct),
            ctm: ct.tr_mul(&mt),
            mm: mt.norm_squared(),
        })
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    /// `(mu - C lambda)' Sigma_R^{-1} (mu - C lambda)`.
    pub fn residual_quad(&self, lambda: &DVector<f64>) -> f64 {
        let v = self.mm - 2.0 * lambda.dot(&self.ctm) + (&self.ctc * lambda).dot(lambda);
        v.max(0.0)
    }
}

/// Conditional posterior of `lambda` over the active coefficients:
/// `(active indices, mean, Cholesky factor of A = C'S^{-1}C + D)`.
/// Without a system the likelihood is switched off and `A = D`.
pub fn lambda_conditional(
    sys: Option<&CrossSectionSystem>,
    d: &DiagPrecision,
) -> Result<(Vec<usize>, DVector<f64>, linalg::Chol)> {
    let active = d.active();
    let m = active.len();
    let mut a = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    if let Some(sys) = sys {
        for (p, &i) in active.iter().enumerate() {
            b[p] = sys.ctm[i];
            for (q, &j) in active.iter().enumerate() {
                a[(p, q)] = sys.ctc[(i, j)];
            }
        }
    }
    for (p, &i) in active.iter().enumerate() {
        a[(p, p)] += d.value(i);
    }
    let chol = linalg::cholesky(&a, "lambda posterior precision C'S^{-1}C + D")?;
    let mean = chol.solve(&b);
    Ok((active, mean, chol))
}

/// Draw `lambda ~ N(A^{-1} C'S^{-1} mu, sigma^2 A^{-1})`; excluded entries are 0.
pub fn sample_lambda<R: Rng + ?Sized>(
    sys: Option<&CrossSectionSystem>,
    d: &DiagPrecision,
    sigma2: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (active, mean, chol) = lambda_conditional(sys, d)?;
    let z = DVector::from_fn(active.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let dev = chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .expect("cholesky factor has a positive diagonal");
    let draw = mean + dev * sigma2.sqrt();
    let mut lambda = DVector::zeros(d.len());
    for (p, &i) in active.iter().enumerate() {
        lambda[i] = draw[p];
    }
    Ok(lambda)
}

/// Log odds of inclusion for one factor given `lambda_j`, `omega_j`, `sigma^2`.
pub fn inclusion_log_odds(lambda_j: f64, omega_j: f64, sigma2: f64, slab_scale: f64, r: f64) -> f64 {
    let prior = omega_j.ln() - (1.0 - omega_j).ln();
    let slab_var = slab_scale * sigma2;
    prior + 0.5 * r.ln() + lambda_j * lambda_j / (2.0 * slab_var) * (1.0 / r - 1.0)
}

/// Inclusion probability implied by [`inclusion_log_odds`].
pub fn inclusion_probability(lambda_j: f64, omega_j: f64, sigma2: f64, slab_scale: f64, r: f64) -> f64 {
    let lo = inclusion_log_odds(lambda_j, omega_j, sigma2, slab_scale, r);
    if lo >= 0.0 {
        1.0 / (1.0 + (-lo).exp())
    } else {
        let e = lo.exp();
        e / (1.0 + e)
    }
}

/// Update every `gamma_j` in a fresh uniformly random order. Excluded
/// factors stay at 0.
pub fn sample_gamma<R: Rng + ?Sized>(
    lambda: &DVector<f64>,
    omega: &[f64],
    sigma2: f64,
    state: &PriorState,
    rng: &mut R,
) -> Vec<bool> {
    let k = state.n_factors();
    let off = state.offset();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let mut gamma = vec![false; k];
    for j in order {
        let u: f64 = rng.random();
        if state.is_excluded(j) {
            continue;
        }
        let p = inclusion_probability(lambda[j + off], omega[j], sigma2, state.slab_scale(j), state.r);
        gamma[j] = u < p;
    }
    gamma
}

/// `omega_j ~ Beta(gamma_j + a, 1 - gamma_j + b)`.
pub fn sample_omega<R: Rng + ?Sized>(gamma: &[bool], cfg: &PriorConfig, rng: &mut R) -> Vec<f64> {
    gamma
        .iter()
        .map(|&g| {
            let g = if g { 1.0 } else { 0.0 };
            Beta::new(g + cfg.a_omega, 1.0 - g + cfg.b_omega)
                .expect("positive Beta parameters")
                .sample(rng)
        })
        .collect()
}

/// Shape and rate of the inverse-Gamma conditional of `sigma^2`.
pub fn sigma2_conditional(
    sys: Option<&CrossSectionSystem>,
    lambda: &DVector<f64>,
    d: &DiagPrecision,
    prior: SigmaPrior,
) -> (f64, f64) {
    let dim = d.active().len() as f64;
    let (n, quad) = match sys {
        Some(s) => (s.n_assets() as f64, s.residual_quad(lambda)),
        None => (0.0, 0.0),
    };
    let shape = (n + dim) / 2.0;
    let rate = (quad + d.quad_form(lambda)) / 2.0;
    match prior {
        SigmaPrior::Jeffreys => (shape, rate),
        SigmaPrior::InverseGamma { shape: a0, scale: b0 } => (shape + a0, rate + b0),
    }
}

/// Draw `sigma^2 ~ IG(shape, rate)`.
pub fn sample_sigma2<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) || !(shape > 0.0) {
        return Err(Error::DegeneratePosterior(format!(
            "sigma^2 conditional has shape {shape} and rate {rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    let s2 = rate / g;
    if !(s2 > 0.0 && s2.is_finite()) {
        return Err(Error::DegeneratePosterior(format!("sigma^2 draw is {s2}")));
    }
    Ok(s2)
}

/// One Gibbs sweep over `(lambda, gamma, omega, sigma^2)` given the
/// cross-sectional system. `sys = None` drops the likelihood.
pub fn sweep<R: Rng + ?Sized>(
    sys: Option<&CrossSectionSystem>,
    draw: &mut CrossSectionDraw,
    state: &PriorState,
    cfg: &PriorConfig,
    freeze_gamma: bool,
    rng: &mut R,
) -> Result<()> {
    for j in 0..state.n_factors() {
        if state.is_excluded(j) {
            draw.gamma[j] = false;
        }
    }
    let d = build_d(&draw.gamma, state)?;
    draw.lambda = sample_lambda(sys, &d, draw.sigma2, rng)?;
    if !freeze_gamma {
        draw.gamma = sample_gamma(&draw.lambda, &draw.omega, draw.sigma2, state, rng);
    }
    draw.omega = sample_omega(&draw.gamma, cfg, rng);
    let hold_sigma = sys.is_none() && cfg.sigma_prior == SigmaPrior::Jeffreys;
    if !hold_sigma {
        let d = build_d(&draw.gamma, state)?;
        let (shape, rate) = sigma2_conditional(sys, &draw.lambda, &d, cfg.sigma_prior);
        draw.sigma2 = sample_sigma2(shape, rate, rng)?;
    }
    Ok(())
}

/// Joint draw of `(sigma^2, omega, gamma, lambda)` from the prior; needs a
/// proper prior on `sigma^2`.
pub fn sample_prior<R: Rng + ?Sized>(state: &PriorState, cfg: &PriorConfig, rng: &mut R) -> Result<CrossSectionDraw> {
    let SigmaPrior::InverseGamma { shape, scale } = cfg.sigma_prior else {
        return Err(Error::InvalidArgument(
            "prior simulation needs a proper inverse-Gamma prior on sigma^2".into(),
        ));
    };
    let sigma2 = sample_sigma2(shape, scale, rng)?;
    let k = state.n_factors();
    let omega: Vec<f64> = (0..k)
        .map(|_| Beta::new(cfg.a_omega, cfg.b_omega).expect("positive").sample(rng))
        .collect();
    let gamma: Vec<bool> = (0..k)
        .map(|j| {
            let u: f64 = rng.random();
            !state.is_excluded(j) && u < omega[j]
        })
        .collect();
    let d = build_d(&gamma, state)?;
    let lambda = DVector::from_fn(d.len(), |i, _| match d.entries[i] {
        crate::prior::Precision::Finite(p) => {
            let z: f64 = rng.sample(StandardNormal);
            z * (sigma2 / p).sqrt()
        }
        crate::prior::Precision::Excluded => 0.0,
    });
    Ok(CrossSectionDraw {
        lambda,
        gamma,
        omega,
        sigma2,
    })
}

// ---------------------------------------------------------------------------
// Chains

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Drop the likelihood and sample from the prior (diagnostic).
    pub likelihood: bool,
    /// Keep every `gamma_j` at its initial value 1.
    pub freeze_gamma: bool,
    /// Keep the factor covariance of every `cov_stride`-th retained draw;
    /// 0 picks a stride that bounds memory use.
    pub cov_stride: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            n_draws: 25_000,
            burn_in: 5_000,
            thin: 1,
            seed: 0,
            likelihood: true,
            freeze_gamma: false,
            cov_stride: 0,
        }
    }
}

impl ChainOptions {
    pub fn new(n_draws: usize, burn_in: usize, thin: usize, seed: u64) -> ChainOptions {
        ChainOptions {
            n_draws,
            burn_in,
            thin,
            seed,
            ..ChainOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_draws <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "n_draws ({}) must exceed burn_in ({})",
                self.n_draws, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.n_draws - self.burn_in) / self.thin
    }
}

/// Quantities fixed for the whole chain: the time-series posterior and the
/// calibrated global penalty.
#[derive(Debug, Clone)]
pub struct ChainSetup {
    pub ts: TsPosterior,
    pub psi: f64,
    pub max_sr: f64,
    pub sigma2_plugin: Option<f64>,
    pub sample_rho: DMatrix<f64>,
    pub kappa: Vec<f64>,
}

impl ChainSetup {
    pub fn new(panel: &ReturnPanel, cfg: &PriorConfig) -> Result<ChainSetup> {
        cfg.validate()?;
        let ts = TsPosterior::new(panel)?;
        let sample = extract_cross_section(&ts.sample_moments(), panel, cfg.include_intercept)?;
        let max_sr = ex_post_max_sr(&sample.mu_r, &sample.sigma_r)?;
        let kappa = panel.kappa();
        let plug = sigma2_plugin(&sample, cfg.intercept_precision);
        let psi = match (cfg.psi, &plug) {
            (PsiSpec::Fixed(p), _) => p,
            (PsiSpec::SrFraction(f), Ok(s2)) => calibrate_psi(f, max_sr, &sample.rho, *s2, &kappa, cfg)?,
            (PsiSpec::SrFraction(_), Err(e)) => return Err(Error::Calibration(e.to_string())),
        };
        Ok(ChainSetup {
            ts,
            psi,
            max_sr,
            sigma2_plugin: plug.ok(),
            sample_rho: sample.rho,
            kappa,
        })
    }
}

/// Factor covariance kept for one retained draw (packed upper triangle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCov {
    pub draw: usize,
    pub packed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    pub chain_id: u64,
    /// First retained draw of this chain in the merged arrays.
    pub start: usize,
    pub len: usize,
    /// Sweeps executed; every Gibbs move is accepted.
    pub sweeps: usize,
}

/// Retained draws of one or more chains.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub factor_names: Vec<String>,
    pub include_intercept: bool,
    /// Rows are draws; intercept first when present.
    pub lambda: DMatrix<f64>,
    /// Rows are draws; entries are 0.0 or 1.0.
    pub gamma: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub sigma2: Vec<f64>,
    /// Sharpe ratio `sqrt(lambda_f' Sigma_f lambda_f)` of each draw's SDF.
    pub sdf_sr: Vec<f64>,
    pub model_size: Vec<usize>,
    pub factor_cov: Vec<StoredCov>,
    pub chains: Vec<ChainMeta>,
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub psi: f64,
    pub max_sr: f64,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn n_factors(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn offset(&self) -> usize {
        usize::from(self.include_intercept)
    }

    /// Draws of the price of risk of factor `j` (intercept skipped).
    pub fn factor_lambda(&self, j: usize) -> Vec<f64> {
        stats::column(&self.lambda, j + self.offset())
    }

    pub fn gamma_of(&self, draw: usize, j: usize) -> bool {
        self.gamma[(draw, j)] > 0.5
    }

    /// Concatenate chains in the given order.
    pub fn merge(parts: Vec<PosteriorDraws>) -> Result<PosteriorDraws> {
        let mut it = parts.into_iter();
        let mut out = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("no chains to merge".into()))?;
        for p in it {
            if p.factor_names != out.factor_names || p.include_intercept != out.include_intercept {
                return Err(Error::InvalidArgument("chains have different layouts".into()));
            }
            let base = out.len();
            out.lambda = vstack(&out.lambda, &p.lambda);
            out.gamma = vstack(&out.gamma, &p.gamma);
            out.omega = vstack(&out.omega, &p.omega);
            out.sigma2.extend(p.sigma2);
            out.sdf_sr.extend(p.sdf_sr);
            out.model_size.extend(p.model_size);
            out.factor_cov.extend(p.factor_cov.into_iter().map(|mut c| {
                c.draw += base;
                c
            }));
            out.chains.extend(p.chains.into_iter().map(|mut c| {
                c.start += base;
                c
            }));
        }
        Ok(out)
    }

    fn chain_slices(&self, series: &[f64]) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| series[c.start..c.start + c.len].to_vec())
            .collect()
    }

    /// Potential scale reduction of each factor's lambda and of `sigma^2`
    /// (last entry); `None` with fewer than two chains.
    pub fn rhat(&self) -> Option<Vec<f64>> {
        if self.chains.len() < 2 {
            return None;
        }
        let mut out: Vec<f64> = (0..self.n_factors())
            .map(|j| gelman_rubin(&self.chain_slices(&self.factor_lambda(j))))
            .collect();
        out.push(gelman_rubin(&self.chain_slices(&self.sigma2)));
        Some(out)
    }

    /// Write one CSV row per retained draw.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        let k = self.n_factors();
        let mut header = vec!["draw".to_string(), "sigma2".to_string()];
        header.extend((0..=k).map(|j| format!("lambda_{j}")));
        header.extend((1..=k).map(|j| format!("gamma_{j}")));
        header.extend((1..=k).map(|j| format!("omega_{j}")));
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        let off = self.offset();
        for i in 0..self.len() {
            let mut row = vec![i.to_string(), format!("{}", self.sigma2[i])];
            row.push(if off == 1 {
                format!("{}", self.lambda[(i, 0)])
            } else {
                "0".into()
            });
            row.extend((0..k).map(|j| format!("{}", self.lambda[(i, j + off)])));
            row.extend((0..k).map(|j| {
                if self.gamma_of(i, j) {
                    "1".to_string()
                } else {
                    "0".to_string()
                }
            }));
            row.extend((0..k).map(|j| format!("{}", self.omega[(i, j)])));
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Gelman-Rubin potential scale reduction factor.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) as f64;
    if m < 2.0 || n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let w = chains.iter().map(|c| stats::variance(c)).sum::<f64>() / m;
    let b = n * stats::variance(&means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Run one chain with default options.
pub fn run_chain(
    panel: &ReturnPanel,
    cfg: &PriorConfig,
    n_draws: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    run_chain_with(panel, cfg, &ChainOptions::new(n_draws, burn_in, thin, seed), 0)
}

/// Run chain `chain_id` (its own random stream under `opts.seed`).
pub fn run_chain_with(
    panel: &ReturnPanel,
    cfg: &PriorConfig,
    opts: &ChainOptions,
    chain_id: u64,
) -> Result<PosteriorDraws> {
    let setup = ChainSetup::new(panel, cfg)?;
    run_chain_from(panel, cfg, &setup, opts, chain_id)
}

/// Run `n_chains` chains in parallel and merge them in chain order.
pub fn run_chains(
    panel: &ReturnPanel,
    cfg: &PriorConfig,
    opts: &ChainOptions,
    n_chains: usize,
) -> Result<PosteriorDraws> {
    if n_chains == 0 {
        return Err(Error::InvalidArgument("need at least one chain".into()));
    }
    let setup = ChainSetup::new(panel, cfg)?;
    let parts = (0..n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain_from(panel, cfg, &setup, opts, c))
        .collect::<Result<Vec<_>>>()?;
    PosteriorDraws::merge(parts)
}

fn auto_stride(k: usize, retained: usize) -> usize {
    const BUDGET: usize = 4_000_000;
    let per = k * (k + 1) / 2;
    (per * retained).div_ceil(BUDGET).max(1)
}

/// Run one chain given a precomputed setup.
pub fn run_chain_from(
    panel: &ReturnPanel,
    cfg: &PriorConfig,
    setup: &ChainSetup,
    opts: &ChainOptions,
    chain_id: u64,
) -> Result<PosteriorDraws> {
    opts.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(chain_id);
    let k = panel.n_factors();
    let off = usize::from(cfg.include_intercept);
    let dim = k + off;
    let retained = opts.n_retained();
    let stride = if opts.cov_stride == 0 {
        auto_stride(k, retained)
    } else {
        opts.cov_stride
    };

    let mut lambda = DMatrix::zeros(retained, dim);
    let mut gamma = DMatrix::zeros(retained, k);
    let mut omega = DMatrix::zeros(retained, k);
    let mut sigma2 = Vec::with_capacity(retained);
    let mut sdf_sr = Vec::with_capacity(retained);
    let mut model_size = Vec::with_capacity(retained);
    let mut factor_cov = Vec::new();

    let fixed_moments = setup.ts.sample_moments();
    let mut state = CrossSectionDraw::initial(dim, k, setup.sigma2_plugin.unwrap_or(1.0));
    let mut row = 0;
    for iter in 0..opts.n_draws {
        let ts_draw = if opts.likelihood {
            setup.ts.draw(&mut rng)
        } else {
            fixed_moments.clone()
        };
        let result = (|| -> Result<CrossSectionInputs> {
            let cs = extract_cross_section(&ts_draw, panel, cfg.include_intercept)?;
            let rho = if cfg.psi_from_sample {
                &setup.sample_rho
            } else {
                &cs.rho
            };
            let prior = PriorState::new(compute_psi(rho, setup.psi, cfg.level_factor_mode), &setup.kappa, cfg)?;
            let sys = if opts.likelihood {
                Some(CrossSectionSystem::new(&cs)?)
            } else {
                None
            };
            sweep(sys.as_ref(), &mut state, &prior, cfg, opts.freeze_gamma, &mut rng)?;
            Ok(cs)
        })();
        let cs = result.map_err(|e| e.at_iteration(iter))?;
        if iter >= opts.burn_in && (iter - opts.burn_in + 1).is_multiple_of(opts.thin) && row < retained {
            lambda.row_mut(row).copy_from(&state.lambda.transpose());
            for j in 0..k {
                gamma[(row, j)] = if state.gamma[j] { 1.0 } else { 0.0 };
                omega[(row, j)] = state.omega[j];
            }
            sigma2.push(state.sigma2);
            let lf = state.lambda.rows(off, k);
            sdf_sr.push((&cs.sigma_f * lf).dot(&lf).max(0.0).sqrt());
            model_size.push(state.gamma.iter().filter(|g| **g).count());
            if row % stride == 0 {
                factor_cov.push(StoredCov {
                    draw: row,
                    packed: linalg::pack_upper(&cs.sigma_f),
                });
            }
            row += 1;
        }
    }
    Ok(PosteriorDraws {
        factor_names: panel.factor_names(),
        include_intercept: cfg.include_intercept,
        lambda,
        gamma,
        omega,
        sigma2,
        sdf_sr,
        model_size,
        factor_cov,
        chains: vec![ChainMeta {
            seed: opts.seed,
            chain_id,
            start: 0,
            len: retained,
            sweeps: opts.n_draws,
        }],
        n_draws: opts.n_draws,
        burn_in: opts.burn_in,
        thin: opts.thin,
        psi: setup.psi,
        max_sr: setup.max_sr,
    })
}
