//! Synthetic ground truth: sparse spatial maps with sinusoidal loadings.
//!
//! Every record is `X^s = U^s·Vᵀ + σ·N` where `V` has sparse, positive,
//! low-overlap columns and each column of `U^s` is a sum of sinusoids at
//! integer frequencies (cycles per record) inside a configured band, so
//! the loadings are exactly zero-mean and band-limited.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RecordMatrix};
use crate::error::{Error, Result};
use crate::linalg::gaussian;
use crate::rng::RngSpec;

const SUPPORT_RETRIES: usize = 1000;
const BASE_COMPONENTS: usize = 3;
const BACKGROUND_COMPONENTS: usize = 2;
const BACKGROUND_AMPLITUDE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub p: usize,
    pub k_true: usize,
    pub t: usize,
    pub n_s: usize,
    pub sparsity: f64,
    pub overlap: f64,
    pub noise_sigma: f64,
    pub loading_freq_range: (f64, f64),
    pub subject_jitter: f64,
    pub rng: RngSpec,
}

impl SynthConfig {
    pub fn new(p: usize, k_true: usize, t: usize, n_s: usize, rng: RngSpec) -> Self {
        Self {
            p,
            k_true,
            t,
            n_s,
            sparsity: 0.05,
            overlap: 0.1,
            noise_sigma: 0.0,
            loading_freq_range: (1.0, (n_s as f64 / 8.0).max(1.0)),
            subject_jitter: 0.2,
            rng,
        }
    }

    pub fn support_size(&self) -> usize {
        (self.sparsity * self.p as f64).round() as usize
    }

    /// Integer frequencies available to loadings.
    pub fn frequencies(&self) -> (usize, usize) {
        let lo = self.loading_freq_range.0.ceil().max(1.0) as usize;
        let hi = self.loading_freq_range.1.floor().max(0.0) as usize;
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.k_true == 0 || self.t == 0 || self.n_s == 0 {
            return Err(Error::Usage("p, k, t and n must all be >= 1".into()));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) || self.support_size() == 0 {
            return Err(Error::Usage(format!(
                "sparsity * p = {} must round to at least one voxel",
                self.sparsity * self.p as f64
            )));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Usage(format!("overlap = {} must lie in [0, 1]", self.overlap)));
        }
        if !(self.noise_sigma >= 0.0) || !(self.subject_jitter >= 0.0) {
            return Err(Error::Usage("noise and jitter must be >= 0".into()));
        }
        let (f_lo, f_hi) = self.loading_freq_range;
        if f_hi > self.n_s as f64 / 2.0 {
            return Err(Error::Usage(format!(
                "f_hi = {f_hi} exceeds the representable n/2 = {}",
                self.n_s as f64 / 2.0
            )));
        }
        let (lo, hi) = self.frequencies();
        if f_lo > f_hi || lo > hi {
            return Err(Error::Usage(format!(
                "frequency band [{f_lo}, {f_hi}] contains no integer frequency >= 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// p × k_true.
    pub true_maps: DMatrix<f64>,
    /// One n_s × k_true matrix per record.
    pub true_loadings: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct Sinusoid {
    freq: usize,
    amp: f64,
    phase: f64,
}

fn draw_supports(cfg: &SynthConfig, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    let s = cfg.support_size();
    let max_shared = (cfg.overlap * s as f64).floor() as usize;
    let mut supports: Vec<Vec<usize>> = Vec::with_capacity(cfg.k_true);
    let mut member: Vec<Vec<bool>> = Vec::with_capacity(cfg.k_true);
    for j in 0..cfg.k_true {
        let mut accepted = None;
        for _ in 0..SUPPORT_RETRIES {
            let mut cand = sample(rng, cfg.p, s).into_vec();
            cand.sort_unstable();
            let ok = member
                .iter()
                .all(|m| cand.iter().filter(|&&v| m[v]).count() <= max_shared);
            if ok {
                accepted = Some(cand);
                break;
            }
        }
        let cand = accepted.ok_or_else(|| {
            Error::Data(format!(
                "could not place map {j} with <= {max_shared} shared voxels after {SUPPORT_RETRIES} tries"
            ))
        })?;
        let mut m = vec![false; cfg.p];
        for &v in &cand {
            m[v] = true;
        }
        member.push(m);
        supports.push(cand);
    }
    Ok(supports)
}

fn draw_sinusoid(lo: usize, hi: usize, amp: f64, rng: &mut impl Rng) -> Sinusoid {
    Sinusoid {
        freq: rng.random_range(lo..=hi),
        amp,
        phase: rng.random_range(0.0..2.0 * PI),
    }
}

fn render(components: &[Sinusoid], n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| {
            components
                .iter()
                .map(|c| c.amp * (2.0 * PI * c.freq as f64 * t as f64 / n as f64 + c.phase).sin())
                .sum()
        })
        .collect()
}

/// Draws a dataset and its ground truth; deterministic in `cfg.rng`.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut map_rng = cfg.rng.derive("maps").rng();
    let supports = draw_supports(cfg, &mut map_rng)?;
    let values = LogNormal::new(0.0, 0.5).expect("valid lognormal");
    let mut true_maps = DMatrix::zeros(cfg.p, cfg.k_true);
    for (j, sup) in supports.iter().enumerate() {
        for &v in sup {
            true_maps[(v, j)] = values.sample(&mut map_rng);
        }
    }

    let (lo, hi) = cfg.frequencies();
    let mut base_rng = cfg.rng.derive("loadings").rng();
    let base: Vec<Vec<Sinusoid>> = (0..cfg.k_true)
        .map(|_| {
            (0..BASE_COMPONENTS)
                .map(|_| {
                    let amp = 0.5 + base_rng.random::<f64>();
                    draw_sinusoid(lo, hi, amp, &mut base_rng)
                })
                .collect()
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.t);
    let mut true_loadings = Vec::with_capacity(cfg.t);
    for s in 0..cfg.t {
        let mut rng = cfg.rng.derive(&format!("record:{s}")).rng();
        let mut u = DMatrix::zeros(cfg.n_s, cfg.k_true);
        for (j, comps) in base.iter().enumerate() {
            let mut jittered: Vec<Sinusoid> = comps
                .iter()
                .map(|c| {
                    let za: f64 = rng.sample(StandardNormal);
                    let zp: f64 = rng.sample(StandardNormal);
                    Sinusoid {
                        freq: c.freq,
                        amp: c.amp * (cfg.subject_jitter * za).exp(),
                        phase: c.phase + cfg.subject_jitter * PI * zp,
                    }
                })
                .collect();
            for _ in 0..BACKGROUND_COMPONENTS {
                let amp = BACKGROUND_AMPLITUDE * rng.random::<f64>();
                jittered.push(draw_sinusoid(lo, hi, amp, &mut rng));
            }
            let mut col = render(&jittered, cfg.n_s);
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                col.iter_mut().for_each(|v| *v /= norm);
            }
            u.column_mut(j).copy_from_slice(&col);
        }
        let mut x = &u * true_maps.transpose();
        if cfg.noise_sigma > 0.0 {
            x += gaussian(cfg.n_s, cfg.p, &mut rng) * cfg.noise_sigma;
        }
        records.push(RecordMatrix::new(format!("rec{s:03}"), x)?);
        true_loadings.push(u);
    }
    Ok((
        Dataset::new(records)?,
        GroundTruth {
            true_maps,
            true_loadings,
        },
    ))
}
