//! Statistical channel generator: draws tapped-delay realizations with
//! per-tap angles from a [`ChannelParamSet`].
//!
//! Per realization:
//!
//! 1. draw the target RMS delay spread, the K-factor (LOS) and the shadow fade;
//! 2. draw `n_taps - 1` exponential excess delays, sort, prepend 0;
//! 3. weight taps by `exp(-tau / tau_scale)` with `tau_scale` = target spread;
//! 4. for LOS, give tap 0 the power that realizes the drawn K exactly;
//! 5. rescale the delays so the realized RMS spread equals the target;
//! 6. draw angles around per-realization mean directions.
//!
//! Since step 5 rescales every delay by the same factor, steps 2 and 3 are
//! carried out on unit-mean delays (`tau / tau_scale`), which leaves the
//! result unchanged and stays well defined for a zero target.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{rms_spread, ChannelParamSet, ConditionParams, DsDistribution};
use crate::linksim::LinkBudget;
use crate::pathdata::{
    Condition, Interaction, MultipathComponent, Provenance, RxRecord, ScenarioDataset,
};
use crate::stats::{compensated_sum, db_to_linear, derive_seed, linear_to_db};
use crate::SPEED_OF_LIGHT;

pub const DEFAULT_TAPS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("n_taps = {0}, need at least 2")]
    TooFewTaps(usize),
    #[error("parameter set {set} has no {condition} block")]
    MissingCondition { set: String, condition: Condition },
    #[error("parameter set {set}: {field} is not finite")]
    NonFinite { set: String, field: &'static str },
    #[error("parameter set {set}: {field} must be non-negative")]
    Negative { set: String, field: &'static str },
    #[error("drawn delay profile has zero spread")]
    DegenerateProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_ns: f64,
    /// Fraction of total power.
    pub power_lin: f64,
    pub aod_az_deg: f64,
    pub aoa_az_deg: f64,
    pub aod_el_deg: f64,
    pub aoa_el_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub condition: Condition,
    pub taps: Vec<Tap>,
    /// Drawn K-factor, LOS only.
    pub kf_db: Option<f64>,
    pub sf_db: f64,
    pub target_ds_ns: f64,
    pub seed_used: u64,
}

impl ChannelRealization {
    pub fn powers(&self) -> Vec<f64> {
        self.taps.iter().map(|t| t.power_lin).collect()
    }

    pub fn delays_ns(&self) -> Vec<f64> {
        self.taps.iter().map(|t| t.delay_ns).collect()
    }

    pub fn rms_delay_spread_ns(&self) -> f64 {
        rms_spread(&self.powers(), &self.delays_ns())
    }
}

/// Log-domain parameters `(mu, sigma)` of a lognormal variable with the
/// given linear mean and standard deviation.
pub fn lognormal_from_moments(mean: f64, std: f64) -> (f64, f64) {
    let s2 = (1.0 + (std / mean).powi(2)).ln();
    (mean.ln() - 0.5 * s2, s2.sqrt())
}

/// Looks up and checks the block of `params` for `condition`.
pub fn condition_block(
    params: &ChannelParamSet,
    condition: Condition,
) -> Result<&ConditionParams, GenError> {
    let block = params
        .condition(condition)
        .ok_or_else(|| GenError::MissingCondition {
            set: params.name.clone(),
            condition,
        })?;
    let set = || params.name.clone();
    let finite = |x: f64, field| {
        if x.is_finite() {
            Ok(())
        } else {
            Err(GenError::NonFinite { set: set(), field })
        }
    };
    finite(block.sigma_sf_db, "sigma_SF_db")?;
    finite(block.ds_ns.mean, "mu_DS_ns")?;
    finite(block.ds_ns.std, "sigma_DS_ns")?;
    for (field, v) in [
        ("mu_ASD_deg", block.asd_deg.mean),
        ("mu_ASA_deg", block.asa_deg.mean),
        ("mu_ESD_deg", block.esd_deg.mean),
        ("mu_ESA_deg", block.esa_deg.mean),
    ] {
        finite(v, field)?;
        if v < 0.0 {
            return Err(GenError::Negative { set: set(), field });
        }
    }
    if block.ds_ns.mean < 0.0 || block.ds_ns.std < 0.0 {
        return Err(GenError::Negative {
            set: set(),
            field: "DS",
        });
    }
    if let DsDistribution::Log10Normal {
        mu_log10_ns,
        sigma_log10,
    } = block.ds_distribution
    {
        finite(mu_log10_ns, "mu_lgDS")?;
        finite(sigma_log10, "sigma_lgDS")?;
    }
    if condition == Condition::Los {
        let kf = block.kf_db.ok_or(GenError::MissingCondition {
            set: set(),
            condition,
        })?;
        finite(kf.mean, "mu_KF_db")?;
        finite(kf.std, "sigma_KF_db")?;
    }
    Ok(block)
}

fn normal<R: Rng>(rng: &mut R, mean: f64, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + std * z
}

/// Target RMS delay spread in ns.
pub fn draw_ds_ns<R: Rng>(block: &ConditionParams, rng: &mut R) -> f64 {
    match block.ds_distribution {
        DsDistribution::LinearMoments => {
            let (mean, std) = (block.ds_ns.mean, block.ds_ns.std);
            if std == 0.0 || mean == 0.0 {
                // consume the draw anyway so the stream layout does not depend on the preset
                let _: f64 = StandardNormal.sample(rng);
                return mean;
            }
            let (mu, sigma) = lognormal_from_moments(mean, std);
            normal(rng, mu, sigma).exp()
        }
        DsDistribution::Log10Normal {
            mu_log10_ns,
            sigma_log10,
        } => 10f64.powf(normal(rng, mu_log10_ns, sigma_log10)),
    }
}

/// K-factor in dB from Normal(mu, |sigma|).
pub fn draw_kf_db<R: Rng>(block: &ConditionParams, rng: &mut R) -> Option<f64> {
    block.kf_db.map(|kf| normal(rng, kf.mean, kf.std.abs()))
}

fn wrap_azimuth_deg(x: f64) -> f64 {
    let w = (x + 180.0).rem_euclid(360.0) - 180.0;
    if w <= -180.0 {
        180.0
    } else {
        w
    }
}

/// Folds an elevation back into [-90, 90] by reflection at the poles.
fn fold_elevation_deg(x: f64) -> f64 {
    let mut y = (x + 90.0).rem_euclid(360.0);
    if y > 180.0 {
        y = 360.0 - y;
    }
    y - 90.0
}

/// Draws one realization; identical arguments give identical output.
pub fn draw_realization(
    params: &ChannelParamSet,
    condition: Condition,
    n_taps: usize,
    rng_seed: u64,
) -> Result<ChannelRealization, GenError> {
    if n_taps < 2 {
        return Err(GenError::TooFewTaps(n_taps));
    }
    let block = condition_block(params, condition)?;
    let los = condition == Condition::Los;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let target_ds_ns = draw_ds_ns(block, &mut rng);
    let kf_db = if los {
        draw_kf_db(block, &mut rng)
    } else {
        None
    };
    let sf_db = normal(&mut rng, 0.0, block.sigma_sf_db);

    let mut unit_delays: Vec<f64> = (1..n_taps).map(|_| Exp1.sample(&mut rng)).collect();
    unit_delays.sort_by(f64::total_cmp);
    unit_delays.insert(0, 0.0);

    let weights: Vec<f64> = unit_delays.iter().map(|u| (-u).exp()).collect();
    let mut powers = if let Some(kf) = kf_db {
        let k = db_to_linear(kf);
        let (main, rest) = if k.is_infinite() {
            (1.0, 0.0)
        } else {
            (k / (k + 1.0), 1.0 / (k + 1.0))
        };
        let tail = compensated_sum(weights[1..].iter().copied());
        let mut p = Vec::with_capacity(n_taps);
        p.push(main);
        p.extend(weights[1..].iter().map(|w| rest * w / tail));
        p
    } else {
        let total = compensated_sum(weights.iter().copied());
        weights.iter().map(|w| w / total).collect::<Vec<_>>()
    };
    // absorb rounding so the sum is 1 to the last ulp or two
    let total = compensated_sum(powers.iter().copied());
    for p in &mut powers {
        *p /= total;
    }

    let unit_spread = rms_spread(&powers, &unit_delays);
    if !(unit_spread > 0.0) {
        return Err(GenError::DegenerateProfile);
    }
    let scale = target_ds_ns / unit_spread;
    let delays: Vec<f64> = unit_delays.iter().map(|u| u * scale).collect();

    let centre = [
        rng.random_range(-180.0..180.0),
        rng.random_range(-180.0..180.0),
        rng.random_range(-90.0..=90.0),
        rng.random_range(-90.0..=90.0),
    ];
    let spread = [
        block.asd_deg.mean,
        block.asa_deg.mean,
        block.esd_deg.mean,
        block.esa_deg.mean,
    ];
    let taps = delays
        .iter()
        .zip(&powers)
        .enumerate()
        .map(|(i, (&delay_ns, &power_lin))| {
            let ang: [f64; 4] = std::array::from_fn(|j| {
                let offset = normal(&mut rng, 0.0, spread[j]);
                if los && i == 0 {
                    centre[j]
                } else {
                    centre[j] + offset
                }
            });
            Tap {
                delay_ns,
                power_lin,
                aod_az_deg: wrap_azimuth_deg(ang[0]),
                aoa_az_deg: wrap_azimuth_deg(ang[1]),
                aod_el_deg: fold_elevation_deg(ang[2]),
                aoa_el_deg: fold_elevation_deg(ang[3]),
            }
        })
        .collect();

    Ok(ChannelRealization {
        condition,
        taps,
        kf_db,
        sf_db,
        target_ds_ns,
        seed_used: rng_seed,
    })
}

/// Narrowband gain with unit mean power: Rician with the given K-factor, or
/// Rayleigh for `None`. A `+inf` K-factor gives a pure unit-modulus phasor.
pub fn rician_gain<R: Rng>(kf_db: Option<f64>, rng: &mut R) -> Complex64 {
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let g = Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        * std::f64::consts::FRAC_1_SQRT_2;
    match kf_db {
        None => g,
        Some(kf) => {
            let k = db_to_linear(kf);
            let los = Complex64::from_polar(1.0, phi);
            if k.is_infinite() {
                los
            } else {
                los * (k / (k + 1.0)).sqrt() + g * (1.0 / (k + 1.0)).sqrt()
            }
        }
    }
}

pub fn narrowband_gain(real: &ChannelRealization, rng_seed: u64) -> Complex64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rician_gain(real.kf_db, &mut rng)
}

/// Reference distance used to place generated realizations on the
/// dataset's delay axis (path delays must be positive).
pub const GENERATED_RX_DISTANCE_M: f64 = 1.0;

/// Converts a realization to a dataset record. Tap powers become dBm
/// relative to a 0 dBm total, delays are offset by the 1 m propagation
/// delay, tap 0 of a LOS realization is tagged Direct, all others Reflect.
pub fn realization_to_record(real: &ChannelRealization, rx_id: u32) -> RxRecord {
    let base_ns = GENERATED_RX_DISTANCE_M / SPEED_OF_LIGHT * 1e9;
    let paths = real
        .taps
        .iter()
        .enumerate()
        .map(|(i, t)| MultipathComponent {
            power_dbm: linear_to_db(t.power_lin),
            delay_ns: base_ns + t.delay_ns,
            aod_az_deg: t.aod_az_deg,
            aod_el_deg: t.aod_el_deg,
            aoa_az_deg: t.aoa_az_deg,
            aoa_el_deg: t.aoa_el_deg,
            interactions: if i == 0 && real.condition == Condition::Los {
                vec![Interaction::Direct]
            } else {
                vec![Interaction::Reflect]
            },
        })
        .collect();
    RxRecord::new(rx_id, [GENERATED_RX_DISTANCE_M, 0.0, 0.0], [0.0; 3], paths)
}

/// Draws `count` realizations with per-realization seeds derived from `seed`.
pub fn draw_many(
    params: &ChannelParamSet,
    condition: Condition,
    n_taps: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ChannelRealization>, GenError> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| draw_realization(params, condition, n_taps, derive_seed(seed, &[i as u64])))
        .collect()
}

/// Realizations packaged as a dataset for the extraction pipeline.
pub fn realizations_dataset(
    params: &ChannelParamSet,
    condition: Condition,
    reals: &[ChannelRealization],
) -> ScenarioDataset {
    ScenarioDataset {
        scenario_name: format!("{}-{}", params.name, condition),
        tx_position_m: [0.0; 3],
        link_budget: LinkBudget::default(),
        records: reals
            .iter()
            .enumerate()
            .map(|(i, r)| realization_to_record(r, i as u32))
            .collect(),
        provenance: Provenance::Synthetic,
    }
}
