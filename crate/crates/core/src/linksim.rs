//! Link budget, RSSI/SNR maps and Monte-Carlo BER of uncoded BPSK over
//! flat Rician/Rayleigh fading.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::ChannelParamSet;
use crate::genchan::{condition_block, draw_kf_db, rician_gain, GenError};
use crate::pathdata::{Condition, ScenarioDataset};
use crate::stats::{db_to_linear, derive_seed, linear_to_db};

/// Transmitter/receiver parameters. Defaults: 20 dBm, isotropic 0 dBi
/// antennas, 10 dB noise figure, 1 GHz bandwidth at 28 GHz, no line loss,
/// -120 dBm path culling floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub gain_tx_dbi: f64,
    pub gain_rx_dbi: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub line_loss_db: f64,
    pub sensitivity_dbm: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power_dbm: 20.0,
            gain_tx_dbi: 0.0,
            gain_rx_dbi: 0.0,
            noise_figure_db: 10.0,
            bandwidth_hz: 1e9,
            carrier_hz: 28e9,
            line_loss_db: 0.0,
            sensitivity_dbm: -120.0,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(LinkError::InvalidBudget(format!(
                "bandwidth {} Hz",
                self.bandwidth_hz
            )));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(LinkError::InvalidBudget(format!(
                "carrier {} Hz",
                self.carrier_hz
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("invalid link budget: {0}")]
    InvalidBudget(String),
    #[error("n_bits must be at least 1")]
    NoBits,
    #[error("block length must be at least 1")]
    ZeroBlock,
    #[error("empty Eb/N0 grid")]
    EmptyGrid,
    #[error(transparent)]
    Channel(#[from] GenError),
}

/// Thermal noise floor in dBm: -174 dBm/Hz + 10 log10(B) + NF.
pub fn noise_floor(budget: &LinkBudget) -> f64 {
    -174.0 + 10.0 * budget.bandwidth_hz.log10() + budget.noise_figure_db
}

#[derive(Debug, Clone, PartialEq)]
pub struct RssiEntry {
    pub rx_id: u32,
    pub position_m: [f64; 3],
    pub condition: Condition,
    /// `-inf` for outage receivers.
    pub rssi_dbm: f64,
    pub snr_db: f64,
}

/// Total received power and SNR per receiver, in dataset order.
pub fn rssi_map(ds: &ScenarioDataset) -> Vec<RssiEntry> {
    let floor = noise_floor(&ds.link_budget);
    ds.records
        .iter()
        .map(|r| {
            let rssi = if r.paths.is_empty() {
                f64::NEG_INFINITY
            } else {
                linear_to_db(r.total_power_mw())
            };
            RssiEntry {
                rx_id: r.rx_id,
                position_m: r.position_m,
                condition: r.condition,
                rssi_dbm: rssi,
                snr_db: rssi - floor,
            }
        })
        .collect()
}

fn fmt_db(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-INF".into()
    } else {
        format!("{x}")
    }
}

pub fn rssi_csv(entries: &[RssiEntry]) -> String {
    let mut out = String::from("rx_id,x,y,z,condition,rssi_dbm,snr_db\n");
    for e in entries {
        let [x, y, z] = e.position_m;
        let _ = writeln!(
            out,
            "{},{x},{y},{z},{},{},{}",
            e.rx_id,
            e.condition,
            fmt_db(e.rssi_dbm),
            fmt_db(e.snr_db)
        );
    }
    out
}

// ---------------------------------------------------------------------------
// BER
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub ber: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    /// Normal-approximation 95 % half-width, with the variance estimated
    /// from per-fade-block error counts (bits sharing a fade are correlated).
    pub ci95: f64,
}

/// Per-fade-block error tallies; integer sums keep the result independent
/// of how batches are combined.
#[derive(Debug, Clone, Copy, Default)]
struct BlockTally {
    errors: u64,
    blocks: u64,
    /// sum of e_b^2
    err_sq: u128,
    /// sum of e_b * L_b
    err_len: u128,
    /// sum of L_b^2
    len_sq: u128,
}

impl BlockTally {
    fn push(&mut self, e: u64, len: u64) {
        self.errors += e;
        self.blocks += 1;
        self.err_sq += (e as u128) * (e as u128);
        self.err_len += (e as u128) * (len as u128);
        self.len_sq += (len as u128) * (len as u128);
    }

    fn merge(self, o: Self) -> Self {
        Self {
            errors: self.errors + o.errors,
            blocks: self.blocks + o.blocks,
            err_sq: self.err_sq + o.err_sq,
            err_len: self.err_len + o.err_len,
            len_sq: self.len_sq + o.len_sq,
        }
    }
}

impl BerPoint {
    fn from_tally(ebn0_db: f64, t: &BlockTally, n_bits: u64) -> Self {
        let n = n_bits as f64;
        let ber = t.errors as f64 / n;
        // ratio-estimator variance: sum_b (e_b - p L_b)^2 / N^2 * B / (B - 1)
        let ss = t.err_sq as f64 - 2.0 * ber * t.err_len as f64 + ber * ber * t.len_sq as f64;
        let var = if t.blocks > 1 {
            ss.max(0.0) / (n * n) * t.blocks as f64 / (t.blocks - 1) as f64
        } else {
            ber * (1.0 - ber) / n
        };
        Self {
            ebn0_db,
            ber,
            n_bits,
            n_errors: t.errors,
            ci95: 1.96 * var.sqrt(),
        }
    }
}

/// Where the per-block channel gain comes from.
#[derive(Debug, Clone, Copy)]
pub enum ChannelSource<'a> {
    /// h = 1.
    Awgn,
    /// Rician with K redrawn per block from the set's LOS K-factor law, or
    /// Rayleigh for NLOS.
    Fading {
        params: &'a ChannelParamSet,
        condition: Condition,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerConfig {
    /// Bits sharing one fade.
    pub block_len: usize,
    /// Fade blocks per independently seeded batch.
    pub blocks_per_batch: usize,
}

impl Default for BerConfig {
    fn default() -> Self {
        Self {
            block_len: 100,
            blocks_per_batch: 1000,
        }
    }
}

pub fn ber_bpsk(
    source: ChannelSource<'_>,
    ebn0_db: f64,
    n_bits: u64,
    rng_seed: u64,
) -> Result<BerPoint, LinkError> {
    ber_bpsk_with(source, ebn0_db, n_bits, rng_seed, &BerConfig::default())
}

/// Monte-Carlo BER of uncoded BPSK with coherent detection.
///
/// Each block draws a gain `h`, each bit `s` in {+1, -1} is sent as
/// `sqrt(Eb/N0) h s + n` with `n ~ CN(0, 1)`, de-rotated by the phase of `h`
/// and decided on the sign of the real part. Bits are split into batches
/// with their own ChaCha stream, so the error count does not depend on how
/// batches are scheduled across threads.
pub fn ber_bpsk_with(
    source: ChannelSource<'_>,
    ebn0_db: f64,
    n_bits: u64,
    rng_seed: u64,
    cfg: &BerConfig,
) -> Result<BerPoint, LinkError> {
    if n_bits == 0 {
        return Err(LinkError::NoBits);
    }
    if cfg.block_len == 0 || cfg.blocks_per_batch == 0 {
        return Err(LinkError::ZeroBlock);
    }
    let block = match source {
        ChannelSource::Awgn => None,
        ChannelSource::Fading { params, condition } => {
            Some((condition_block(params, condition)?, condition))
        }
    };
    let amplitude = db_to_linear(ebn0_db).sqrt();
    let batch_bits = (cfg.block_len * cfg.blocks_per_batch) as u64;
    let n_batches = n_bits.div_ceil(batch_bits);

    let tally = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(b);
            let start = b * batch_bits;
            let bits = batch_bits.min(n_bits - start);
            let mut tally = BlockTally::default();
            let mut sent = 0u64;
            while sent < bits {
                let h = match block {
                    None => Complex64::new(1.0, 0.0),
                    Some((params, Condition::Los)) => {
                        rician_gain(draw_kf_db(params, &mut rng), &mut rng)
                    }
                    Some(_) => rician_gain(None, &mut rng),
                };
                let derotate = h.conj() / h.norm();
                let in_block = (cfg.block_len as u64).min(bits - sent);
                let mut errors = 0u64;
                for _ in 0..in_block {
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let n = Complex64::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ) * std::f64::consts::FRAC_1_SQRT_2;
                    let y = (derotate * (h * (amplitude * s) + n)).re;
                    let decided = if y >= 0.0 { 1.0 } else { -1.0 };
                    if decided != s {
                        errors += 1;
                    }
                }
                tally.push(errors, in_block);
                sent += in_block;
            }
            tally
        })
        .reduce(BlockTally::default, BlockTally::merge);

    Ok(BerPoint::from_tally(ebn0_db, &tally, n_bits))
}

/// Non-increasing least-squares fit (pool adjacent violators).
pub fn monotone_non_increasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let n = na + nb;
            blocks.push(((a * na as f64 + b * nb as f64) / n as f64, n));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v, n))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub preset: String,
    pub condition: Condition,
    pub points: Vec<BerPoint>,
    /// Monotone (non-increasing in Eb/N0) version of the estimates.
    pub monotone: Vec<f64>,
}

impl BerCurve {
    /// Eb/N0 at which the monotone curve crosses `target`, interpolating
    /// log10(BER) linearly. `None` when the grid does not bracket it.
    pub fn ebn0_at(&self, target: f64) -> Option<f64> {
        let m = &self.monotone;
        for i in 0..m.len().saturating_sub(1) {
            let (hi, lo) = (m[i], m[i + 1]);
            if hi >= target && target >= lo && hi > lo {
                let (x0, x1) = (self.points[i].ebn0_db, self.points[i + 1].ebn0_db);
                let frac = if lo > 0.0 {
                    (hi.log10() - target.log10()) / (hi.log10() - lo.log10())
                } else {
                    (hi - target) / (hi - lo)
                };
                return Some(x0 + frac * (x1 - x0));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerSweep {
    pub curves: Vec<BerCurve>,
}

impl BerSweep {
    /// Extra Eb/N0 (dB) curve `a` needs over curve `b` at `target` BER.
    pub fn gap_db(&self, a: usize, b: usize, target: f64) -> Option<f64> {
        Some(self.curves.get(a)?.ebn0_at(target)? - self.curves.get(b)?.ebn0_at(target)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("preset,condition,ebn0_db,ber,ci95,n_bits\n");
        for c in &self.curves {
            for p in &c.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.preset, c.condition, p.ebn0_db, p.ber, p.ci95, p.n_bits
                );
            }
        }
        out
    }
}

/// BER curves for several parameter sets on a common Eb/N0 grid. Grid point
/// `i` uses the seed derived from `(seed, i)` for every set, so the curves
/// share bit and noise streams.
pub fn ber_sweep(
    presets: &[ChannelParamSet],
    condition: Condition,
    ebn0_grid: &[f64],
    n_bits: u64,
    seed: u64,
    cfg: &BerConfig,
) -> Result<BerSweep, LinkError> {
    if ebn0_grid.is_empty() {
        return Err(LinkError::EmptyGrid);
    }
    let curves = presets
        .iter()
        .map(|p| {
            let points = ebn0_grid
                .iter()
                .enumerate()
                .map(|(i, &e)| {
                    ber_bpsk_with(
                        ChannelSource::Fading {
                            params: p,
                            condition,
                        },
                        e,
                        n_bits,
                        derive_seed(seed, &[i as u64]),
                        cfg,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            let monotone =
                monotone_non_increasing(&points.iter().map(|p| p.ber).collect::<Vec<_>>());
            Ok(BerCurve {
                preset: p.name.clone(),
                condition,
                points,
                monotone,
            })
        })
        .collect::<Result<Vec<_>, LinkError>>()?;
    Ok(BerSweep { curves })
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number {s:?} in grid {spec:?}"))
    };
    match parts.len() {
        1 => spec.split(',').map(num).collect(),
        3 => {
            let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || !(stop >= start) {
                return Err(format!("grid {spec:?} needs step > 0 and stop >= start"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(format!("grid {spec:?} is not start:step:stop")),
    }
}
