//! Channel statistics from multipath datasets: A-B path-loss fit with shadow
//! fading, Rician K-factor, RMS delay spread and RMS angular spreads.
//!
//! All power-weighted sums use linear milliwatts. Angular spreads follow the
//! three-step procedure of 3GPP TR 38.901 Annex A: power-weighted linear
//! mean, deviation wrapped to `[-pi, pi)`, power-weighted RMS of the
//! deviations.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linksim::LinkBudget;
use crate::pathdata::{Condition, MultipathComponent, RxRecord, ScenarioDataset};
use crate::stats::{compensated_sum, linear_to_db, mean_and_sample_std};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("rx {rx_id} has no paths")]
    NoPaths { rx_id: u32 },
    #[error("{condition}: {n} usable points, need at least 2")]
    TooFewPoints { condition: Condition, n: usize },
    #[error("{condition}: all distances are equal, fit is singular")]
    SingularFit { condition: Condition },
    #[error("dataset has no records")]
    EmptyDataset,
}

// ---------------------------------------------------------------------------
// Large scale
// ---------------------------------------------------------------------------

/// `PL = A + 10 B log10(d / 1 m) + X`, `X ~ N(0, sigma_sf_db)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossFit {
    pub a_db: f64,
    pub b: f64,
    pub sigma_sf_db: f64,
    pub condition: Condition,
    pub n_points: usize,
}

impl PathLossFit {
    pub fn predict_db(&self, distance_m: f64) -> f64 {
        self.a_db + 10.0 * self.b * distance_m.log10()
    }
}

/// Path loss against total received power.
pub fn path_loss_of(record: &RxRecord, budget: &LinkBudget) -> Result<f64, ExtractError> {
    if record.paths.is_empty() {
        return Err(ExtractError::NoPaths {
            rx_id: record.rx_id,
        });
    }
    Ok(
        budget.tx_power_dbm + budget.gain_tx_dbi + budget.gain_rx_dbi
            - linear_to_db(record.total_power_mw()),
    )
}

/// Ordinary least squares of `pl_db` on `10 log10(d)`; shadow fading is
/// the sample standard deviation (n - 1) of the residuals.
pub fn fit_ab(points: &[(f64, f64)], condition: Condition) -> Result<PathLossFit, ExtractError> {
    let n = points.len();
    if n < 2 {
        return Err(ExtractError::TooFewPoints { condition, n });
    }
    let xs: Vec<f64> = points.iter().map(|(d, _)| 10.0 * d.log10()).collect();
    let nf = n as f64;
    let x_mean = compensated_sum(xs.iter().copied()) / nf;
    let y_mean = compensated_sum(points.iter().map(|p| p.1)) / nf;
    let sxx = compensated_sum(xs.iter().map(|x| (x - x_mean) * (x - x_mean)));
    let sxy = compensated_sum(
        xs.iter()
            .zip(points)
            .map(|(x, p)| (x - x_mean) * (p.1 - y_mean)),
    );
    if !(sxx > 0.0) {
        return Err(ExtractError::SingularFit { condition });
    }
    let b = sxy / sxx;
    let a = y_mean - b * x_mean;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(points)
        .map(|(x, p)| p.1 - (a + b * x))
        .collect();
    let (_, sigma) = mean_and_sample_std(&residuals).expect("n >= 2");
    Ok(PathLossFit {
        a_db: a,
        b,
        sigma_sf_db: sigma,
        condition,
        n_points: n,
    })
}

fn pl_points(
    ds: &ScenarioDataset,
    condition: Condition,
    budget: &LinkBudget,
) -> Vec<(u32, f64, f64)> {
    ds.records
        .iter()
        .filter(|r| r.condition == condition)
        .filter_map(|r| {
            path_loss_of(r, budget)
                .ok()
                .map(|pl| (r.rx_id, r.distance_3d_m, pl))
        })
        .collect()
}

pub fn fit_path_loss_with(
    ds: &ScenarioDataset,
    condition: Condition,
    budget: &LinkBudget,
) -> Result<PathLossFit, ExtractError> {
    let pts: Vec<(f64, f64)> = pl_points(ds, condition, budget)
        .into_iter()
        .map(|(_, d, pl)| (d, pl))
        .collect();
    fit_ab(&pts, condition)
}

/// Fits the A-B model to the records of `condition`, using the dataset's own
/// link budget.
pub fn fit_path_loss(
    ds: &ScenarioDataset,
    condition: Condition,
) -> Result<PathLossFit, ExtractError> {
    fit_path_loss_with(ds, condition, &ds.link_budget)
}

/// One point of the path-loss scatter against its fitted line.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub rx_id: u32,
    pub condition: Condition,
    pub distance_3d_m: f64,
    pub path_loss_db: f64,
    pub fitted_db: f64,
}

impl Residual {
    pub fn residual_db(&self) -> f64 {
        self.path_loss_db - self.fitted_db
    }
}

pub fn residuals(ds: &ScenarioDataset, fit: &PathLossFit, budget: &LinkBudget) -> Vec<Residual> {
    pl_points(ds, fit.condition, budget)
        .into_iter()
        .map(|(rx_id, d, pl)| Residual {
            rx_id,
            condition: fit.condition,
            distance_3d_m: d,
            path_loss_db: pl,
            fitted_db: fit.predict_db(d),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Small scale
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KfMode {
    /// Direct-path power over the sum of all other paths; LOS records only.
    #[default]
    DirectPath,
    /// Strongest-path power over the sum of all other paths; any record.
    StrongestPath,
}

/// Rician K-factor in dB with the direct-path definition.
///
/// `None` for records without a direct path; `+inf` for a record whose only
/// path is the direct one.
pub fn k_factor(record: &RxRecord) -> Option<f64> {
    k_factor_with(record, KfMode::DirectPath)
}

pub fn k_factor_with(record: &RxRecord, mode: KfMode) -> Option<f64> {
    let paths = &record.paths;
    let main = match mode {
        KfMode::DirectPath => {
            if record.condition != Condition::Los {
                return None;
            }
            strongest_index(paths, |p| p.is_direct())?
        }
        KfMode::StrongestPath => strongest_index(paths, |_| true)?,
    };
    let others = compensated_sum(
        paths
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != main)
            .map(|(_, p)| p.power_mw()),
    );
    if others == 0.0 {
        return Some(f64::INFINITY);
    }
    Some(linear_to_db(paths[main].power_mw() / others))
}

fn strongest_index(
    paths: &[MultipathComponent],
    pred: impl Fn(&MultipathComponent) -> bool,
) -> Option<usize> {
    paths
        .iter()
        .enumerate()
        .filter(|(_, p)| pred(p))
        .max_by(|a, b| a.1.power_dbm.total_cmp(&b.1.power_dbm))
        .map(|(i, _)| i)
}

/// Power-weighted RMS spread of `delays` (any consistent unit).
///
/// Evaluated as a central moment, which is algebraically the difference of
/// the second raw moment and the squared first moment but does not cancel.
pub fn rms_spread(powers: &[f64], delays: &[f64]) -> f64 {
    debug_assert_eq!(powers.len(), delays.len());
    let total = compensated_sum(powers.iter().copied());
    let w: Vec<f64> = powers.iter().map(|p| p / total).collect();
    let mean = compensated_sum(w.iter().zip(delays).map(|(w, t)| w * t));
    let var = compensated_sum(
        w.iter()
            .zip(delays)
            .map(|(w, t)| w * (t - mean) * (t - mean)),
    );
    var.max(0.0).sqrt()
}

/// RMS delay spread of a record in ns.
pub fn rms_delay_spread(record: &RxRecord) -> Result<f64, ExtractError> {
    if record.paths.is_empty() {
        return Err(ExtractError::NoPaths {
            rx_id: record.rx_id,
        });
    }
    let powers: Vec<f64> = record
        .paths
        .iter()
        .map(MultipathComponent::power_mw)
        .collect();
    let delays: Vec<f64> = record.paths.iter().map(|p| p.delay_ns).collect();
    Ok(rms_spread(&powers, &delays))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AngleKind {
    /// Azimuth spread of departure.
    Asd,
    /// Azimuth spread of arrival.
    Asa,
    /// Elevation spread of departure.
    Esd,
    /// Elevation spread of arrival.
    Esa,
}

impl AngleKind {
    pub const ALL: [AngleKind; 4] = [
        AngleKind::Asd,
        AngleKind::Asa,
        AngleKind::Esd,
        AngleKind::Esa,
    ];

    pub fn angle_deg(self, p: &MultipathComponent) -> f64 {
        match self {
            AngleKind::Asd => p.aod_az_deg,
            AngleKind::Asa => p.aoa_az_deg,
            AngleKind::Esd => p.aod_el_deg,
            AngleKind::Esa => p.aoa_el_deg,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AngleKind::Asd => "ASD",
            AngleKind::Asa => "ASA",
            AngleKind::Esd => "ESD",
            AngleKind::Esa => "ESA",
        }
    }
}

/// RMS angular spread in degrees of angles given in degrees.
pub fn rms_angular_spread_deg(powers: &[f64], angles_deg: &[f64]) -> f64 {
    debug_assert_eq!(powers.len(), angles_deg.len());
    let total = compensated_sum(powers.iter().copied());
    let theta: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
    let w: Vec<f64> = powers.iter().map(|p| p / total).collect();
    let mean = compensated_sum(w.iter().zip(&theta).map(|(w, t)| w * t));
    let ms = compensated_sum(w.iter().zip(&theta).map(|(w, t)| {
        let dev = (t - mean + PI).rem_euclid(2.0 * PI) - PI;
        w * dev * dev
    }));
    ms.sqrt().to_degrees()
}

pub fn angular_spread(record: &RxRecord, which: AngleKind) -> Result<f64, ExtractError> {
    if record.paths.is_empty() {
        return Err(ExtractError::NoPaths {
            rx_id: record.rx_id,
        });
    }
    let powers: Vec<f64> = record
        .paths
        .iter()
        .map(MultipathComponent::power_mw)
        .collect();
    let angles: Vec<f64> = record.paths.iter().map(|p| which.angle_deg(p)).collect();
    Ok(rms_angular_spread_deg(&powers, &angles))
}

// ---------------------------------------------------------------------------
// Parameter sets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub const fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    fn of(values: &[f64]) -> Option<Self> {
        mean_and_sample_std(values).map(|(mean, std)| Self { mean, std })
    }
}

/// How the delay-spread row of a parameter set is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DsDistribution {
    /// `ds_ns` holds linear-domain mean and standard deviation in ns.
    LinearMoments,
    /// log10(DS / 1 ns) is normal with these parameters.
    Log10Normal { mu_log10_ns: f64, sigma_log10: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionParams {
    pub a_db: f64,
    pub b: f64,
    pub sigma_sf_db: f64,
    /// Absent for conditions without a direct path.
    pub kf_db: Option<MeanStd>,
    pub ds_ns: MeanStd,
    pub ds_distribution: DsDistribution,
    pub asd_deg: MeanStd,
    pub asa_deg: MeanStd,
    pub esd_deg: MeanStd,
    pub esa_deg: MeanStd,
}

impl ConditionParams {
    pub fn angular(&self, which: AngleKind) -> MeanStd {
        match which {
            AngleKind::Asd => self.asd_deg,
            AngleKind::Asa => self.asa_deg,
            AngleKind::Esd => self.esd_deg,
            AngleKind::Esa => self.esa_deg,
        }
    }
}

/// One column pair (LOS, NLOS) of channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParamSet {
    pub name: String,
    pub los: Option<ConditionParams>,
    pub nlos: Option<ConditionParams>,
}

#[allow(clippy::too_many_arguments)]
const fn col(
    a: f64,
    b: f64,
    sf: f64,
    kf: Option<MeanStd>,
    ds: MeanStd,
    asd: MeanStd,
    asa: MeanStd,
    esd: MeanStd,
    esa: MeanStd,
) -> ConditionParams {
    ConditionParams {
        a_db: a,
        b,
        sigma_sf_db: sf,
        kf_db: kf,
        ds_ns: ds,
        ds_distribution: DsDistribution::LinearMoments,
        asd_deg: asd,
        asa_deg: asa,
        esd_deg: esd,
        esa_deg: esa,
    }
}

const fn ms(mean: f64, std: f64) -> MeanStd {
    MeanStd::new(mean, std)
}

pub const PRESET_NAMES: [&str; 5] = ["BL", "CV", "RecV", "EmV", "3GPP-InO"];

impl ChannelParamSet {
    pub fn condition(&self, c: Condition) -> Option<&ConditionParams> {
        match c {
            Condition::Los => self.los.as_ref(),
            Condition::Nlos => self.nlos.as_ref(),
            _ => None,
        }
    }

    /// Metal fuselage, fully occupied.
    pub fn bl() -> Self {
        Self {
            name: "BL".into(),
            los: Some(col(
                58.49,
                1.45,
                5.58,
                Some(ms(-4.51, -8.11)),
                ms(5.60, 2.35),
                ms(39.02, 15.35),
                ms(39.25, 15.10),
                ms(31.66, 39.97),
                ms(50.18, 25.40),
            )),
            nlos: Some(col(
                59.00,
                3.62,
                7.76,
                None,
                ms(3.82, 2.45),
                ms(15.88, 10.51),
                ms(19.18, 11.02),
                ms(16.34, 12.39),
                ms(72.83, 26.63),
            )),
        }
    }

    /// Composite fuselage, fully occupied.
    pub fn cv() -> Self {
        Self {
            name: "CV".into(),
            los: Some(col(
                61.72,
                1.91,
                4.55,
                Some(ms(4.3, 2.32)),
                ms(2.58, 1.46),
                ms(18.12, 12.63),
                ms(15.36, 10.11),
                ms(22.87, 25.33),
                ms(35.36, 18.65),
            )),
            nlos: Some(col(
                64.90,
                4.00,
                7.22,
                None,
                ms(2.60, 1.83),
                ms(6.32, 6.19),
                ms(14.25, 7.49),
                ms(11.33, 6.76),
                ms(70.33, 28.51),
            )),
        }
    }

    /// Rectangular metal wagon, fully occupied.
    pub fn rec_v() -> Self {
        Self {
            name: "RecV".into(),
            los: Some(col(
                60.37,
                1.66,
                5.80,
                Some(ms(-1.98, -4.69)),
                ms(11.82, 5.56),
                ms(11.87, 7.02),
                ms(29.80, 17.19),
                ms(70.24, 30.21),
                ms(61.72, 19.44),
            )),
            nlos: Some(col(
                62.52,
                3.64,
                6.84,
                None,
                ms(5.68, 3.22),
                ms(3.80, 3.61),
                ms(14.35, 8.23),
                ms(30.31, 18.03),
                ms(70.68, 28.15),
            )),
        }
    }

    /// Metal fuselage without passengers.
    pub fn em_v() -> Self {
        Self {
            name: "EmV".into(),
            los: Some(col(
                59.00,
                1.41,
                5.64,
                Some(ms(-4.81, -8.07)),
                ms(5.92, 2.50),
                ms(38.67, 15.12),
                ms(41.66, 9.81),
                ms(31.48, 39.23),
                ms(52.01, 25.55),
            )),
            nlos: Some(col(
                59.28,
                3.94,
                9.38,
                None,
                ms(4.70, 3.22),
                ms(15.30, 10.96),
                ms(13.61, 13.60),
                ms(17.51, 14.18),
                ms(70.18, 28.36),
            )),
        }
    }

    /// 3GPP indoor-office reference at 28 GHz. The delay-spread standard
    /// deviations are stored as tabulated; they are multiplicative factors
    /// `10^sigma_lg` (scaled by 1e8), so generation uses a log10-normal law.
    pub fn gpp_ino() -> Self {
        let mut los = col(
            61.34,
            1.73,
            3.0,
            Some(ms(7.0, 4.0)),
            ms(19.65, 1.51e8),
            ms(39.81, 1.51),
            ms(31.85, 1.97),
            ms(1.37, 3.09),
            ms(11.47, 1.60),
        );
        los.ds_distribution = DsDistribution::Log10Normal {
            mu_log10_ns: 19.65f64.log10(),
            sigma_log10: 1.51f64.log10(),
        };
        let mut nlos = col(
            53.33,
            3.83,
            8.03,
            None,
            ms(26.15, 1.58e8),
            ms(41.68, 1.72),
            ms(50.36, 1.71),
            ms(12.02, 2.29),
            ms(14.71, 4.11),
        );
        nlos.ds_distribution = DsDistribution::Log10Normal {
            mu_log10_ns: 26.15f64.log10(),
            sigma_log10: 1.58f64.log10(),
        };
        Self {
            name: "3GPP-InO".into(),
            los: Some(los),
            nlos: Some(nlos),
        }
    }

    pub fn builtins() -> Vec<Self> {
        vec![
            Self::bl(),
            Self::cv(),
            Self::rec_v(),
            Self::em_v(),
            Self::gpp_ino(),
        ]
    }

    /// Built-in preset by name, ignoring case and punctuation.
    pub fn builtin(name: &str) -> Option<Self> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "bl" => Some(Self::bl()),
            "cv" => Some(Self::cv()),
            "recv" => Some(Self::rec_v()),
            "emv" => Some(Self::em_v()),
            "3gppino" | "3gppio" | "3gpp" => Some(Self::gpp_ino()),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// Fraction of receivers in each condition; sums to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionRatios {
    pub los: f64,
    pub nlos: f64,
    pub ds: f64,
    pub outage: f64,
    pub n_records: usize,
}

impl ConditionRatios {
    pub fn of(ds: &ScenarioDataset) -> Self {
        let n = ds.records.len();
        let frac = |c| {
            if n == 0 {
                0.0
            } else {
                ds.count(c) as f64 / n as f64
            }
        };
        Self {
            los: frac(Condition::Los),
            nlos: frac(Condition::Nlos),
            ds: frac(Condition::Ds),
            outage: frac(Condition::Outage),
            n_records: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub params: ChannelParamSet,
    /// Successful fits, LOS first.
    pub fits: Vec<PathLossFit>,
    pub ratios: ConditionRatios,
}

struct RecordStats {
    kf_db: Option<f64>,
    ds_ns: f64,
    angular: [f64; 4],
}

fn record_stats(r: &RxRecord, kf_mode: KfMode) -> RecordStats {
    let powers: Vec<f64> = r.paths.iter().map(MultipathComponent::power_mw).collect();
    let delays: Vec<f64> = r.paths.iter().map(|p| p.delay_ns).collect();
    let angular = AngleKind::ALL.map(|k| {
        let angles: Vec<f64> = r.paths.iter().map(|p| k.angle_deg(p)).collect();
        rms_angular_spread_deg(&powers, &angles)
    });
    RecordStats {
        kf_db: k_factor_with(r, kf_mode),
        ds_ns: rms_spread(&powers, &delays),
        angular,
    }
}

/// Per-condition statistics over a dataset.
///
/// LOS and NLOS blocks are absent when the condition has no records. When a
/// present condition cannot be fitted (fewer than two records or a single
/// distance) its large-scale fields are NaN. K-factor statistics skip
/// infinite values (single-path LOS records).
pub fn summarize(
    ds: &ScenarioDataset,
    budget: &LinkBudget,
    kf_mode: KfMode,
) -> Result<Summary, ExtractError> {
    if ds.records.is_empty() {
        return Err(ExtractError::EmptyDataset);
    }
    let stats: Vec<(Condition, RecordStats)> = ds
        .records
        .par_iter()
        .filter(|r| matches!(r.condition, Condition::Los | Condition::Nlos))
        .map(|r| (r.condition, record_stats(r, kf_mode)))
        .collect();

    let mut fits = Vec::new();
    let mut block = |cond: Condition| -> Option<ConditionParams> {
        let rows: Vec<&RecordStats> = stats
            .iter()
            .filter(|(c, _)| *c == cond)
            .map(|(_, s)| s)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let (a_db, b, sigma_sf_db) = match fit_path_loss_with(ds, cond, budget) {
            Ok(f) => {
                let t = (f.a_db, f.b, f.sigma_sf_db);
                fits.push(f);
                t
            }
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        };
        let kfs: Vec<f64> = rows
            .iter()
            .filter_map(|s| s.kf_db)
            .filter(|k| k.is_finite())
            .collect();
        let dss: Vec<f64> = rows.iter().map(|s| s.ds_ns).collect();
        let ang = |i: usize| {
            MeanStd::of(&rows.iter().map(|s| s.angular[i]).collect::<Vec<_>>()).expect("non-empty")
        };
        Some(ConditionParams {
            a_db,
            b,
            sigma_sf_db,
            kf_db: MeanStd::of(&kfs),
            ds_ns: MeanStd::of(&dss).expect("non-empty"),
            ds_distribution: DsDistribution::LinearMoments,
            asd_deg: ang(0),
            asa_deg: ang(1),
            esd_deg: ang(2),
            esa_deg: ang(3),
        })
    };
    let los = block(Condition::Los);
    let nlos = block(Condition::Nlos);

    Ok(Summary {
        params: ChannelParamSet {
            name: ds.scenario_name.clone(),
            los,
            nlos,
        },
        fits,
        ratios: ConditionRatios::of(ds),
    })
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

pub const PARAM_ROWS: [&str; 15] = [
    "A_db",
    "B",
    "sigma_SF_db",
    "mu_KF_db",
    "sigma_KF_db",
    "mu_DS_ns",
    "sigma_DS_ns",
    "mu_ASD_deg",
    "sigma_ASD_deg",
    "mu_ASA_deg",
    "sigma_ASA_deg",
    "mu_ESD_deg",
    "sigma_ESD_deg",
    "mu_ESA_deg",
    "sigma_ESA_deg",
];

fn param_values(p: Option<&ConditionParams>) -> [Option<f64>; 15] {
    let Some(p) = p else { return [None; 15] };
    let v = |x: f64| if x.is_nan() { None } else { Some(x) };
    [
        v(p.a_db),
        v(p.b),
        v(p.sigma_sf_db),
        p.kf_db.map(|k| k.mean),
        p.kf_db.map(|k| k.std),
        v(p.ds_ns.mean),
        v(p.ds_ns.std),
        v(p.asd_deg.mean),
        v(p.asd_deg.std),
        v(p.asa_deg.mean),
        v(p.asa_deg.std),
        v(p.esd_deg.mean),
        v(p.esd_deg.std),
        v(p.esa_deg.mean),
        v(p.esa_deg.std),
    ]
}

/// Table with one row per parameter and one column per (set, condition).
pub fn param_table_csv(sets: &[ChannelParamSet]) -> String {
    let mut out = String::from("parameter");
    let mut cols = Vec::new();
    for s in sets {
        for (label, block) in [("LOS", s.los.as_ref()), ("NLOS", s.nlos.as_ref())] {
            let _ = write!(out, ",{} {}", s.name, label);
            cols.push(param_values(block));
        }
    }
    out.push('\n');
    for (i, row) in PARAM_ROWS.iter().enumerate() {
        out.push_str(row);
        for c in &cols {
            match c[i] {
                Some(x) => {
                    let _ = write!(out, ",{x}");
                }
                None => out.push_str(",n/a"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn ratios_csv(rows: &[(&str, ConditionRatios)]) -> String {
    let mut out = String::from("scenario,LOS,NLOS,DS,Outage,n_records\n");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{}",
            r.los, r.nlos, r.ds, r.outage, r.n_records
        );
    }
    out
}

pub fn residuals_csv(rows: &[Residual]) -> String {
    let mut out =
        String::from("rx_id,condition,distance_3d_m,path_loss_db,fitted_db,residual_db\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.rx_id,
            r.condition,
            r.distance_3d_m,
            r.path_loss_db,
            r.fitted_db,
            r.residual_db()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathdata::{Interaction, Interaction::*, Provenance};
    use approx::assert_relative_eq;

    fn mpc(power_dbm: f64, delay_ns: f64, az: f64, tags: &[Interaction]) -> MultipathComponent {
        MultipathComponent {
            power_dbm,
            delay_ns,
            aod_az_deg: az,
            aod_el_deg: 0.0,
            aoa_az_deg: az,
            aoa_el_deg: 0.0,
            interactions: tags.to_vec(),
        }
    }

    fn rec(paths: Vec<MultipathComponent>) -> RxRecord {
        RxRecord::new(0, [1.0, 0.0, 0.0], [0.0; 3], paths)
    }

    #[test]
    fn path_loss_examples() {
        let b = LinkBudget::default();
        let r = rec(vec![mpc(-41.4, 3.3, 0.0, &[Direct])]);
        assert_relative_eq!(path_loss_of(&r, &b).unwrap(), 61.4, max_relative = 1e-12);
        let r = rec(vec![
            mpc(-50.0, 3.0, 0.0, &[Reflect]),
            mpc(-50.0, 4.0, 0.0, &[Reflect]),
        ]);
        assert_relative_eq!(
            path_loss_of(&r, &b).unwrap(),
            70.0 - 10.0 * 2f64.log10(),
            max_relative = 1e-12
        );
        assert_eq!(
            path_loss_of(&rec(vec![]), &b),
            Err(ExtractError::NoPaths { rx_id: 0 })
        );
    }

    #[test]
    fn k_factor_examples() {
        let r = rec(vec![
            mpc(0.0, 1.0, 0.0, &[Direct]),
            mpc(0.0, 2.0, 0.0, &[Reflect]),
        ]);
        assert_relative_eq!(k_factor(&r).unwrap(), 0.0, epsilon = 1e-12);
        let r = rec(vec![
            mpc(-40.0, 1.0, 0.0, &[Direct]),
            mpc(-50.0, 2.0, 0.0, &[Reflect]),
        ]);
        assert_relative_eq!(k_factor(&r).unwrap(), 10.0, max_relative = 1e-12);
        let r = rec(vec![
            mpc(-50.0, 1.0, 0.0, &[Direct]),
            mpc(-50.0, 2.0, 0.0, &[Reflect]),
            mpc(-53.01, 3.0, 0.0, &[Reflect]),
        ]);
        // 1 / (1 + 10^-0.301)
        let oracle = 10.0 * (1e-5 / (1e-5 + 10f64.powf(-5.301))).log10();
        assert_relative_eq!(k_factor(&r).unwrap(), oracle, max_relative = 1e-12);
        assert!((k_factor(&r).unwrap() + 1.76).abs() < 0.01);
        assert_eq!(
            k_factor(&rec(vec![mpc(-40.0, 1.0, 0.0, &[Direct])])),
            Some(f64::INFINITY)
        );
        assert_eq!(k_factor(&rec(vec![mpc(-40.0, 1.0, 0.0, &[Reflect])])), None);
    }

    #[test]
    fn strongest_path_variant() {
        let r = rec(vec![
            mpc(-60.0, 1.0, 0.0, &[Direct]),
            mpc(-50.0, 2.0, 0.0, &[Reflect]),
        ]);
        assert_relative_eq!(
            k_factor_with(&r, KfMode::StrongestPath).unwrap(),
            10.0,
            max_relative = 1e-12
        );
        let r = rec(vec![
            mpc(-50.0, 1.0, 0.0, &[Reflect]),
            mpc(-53.0, 2.0, 0.0, &[Reflect]),
        ]);
        assert_relative_eq!(
            k_factor_with(&r, KfMode::StrongestPath).unwrap(),
            3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn delay_spread_examples() {
        assert_eq!(
            rms_delay_spread(&rec(vec![mpc(-50.0, 7.0, 0.0, &[Direct])])).unwrap(),
            0.0
        );
        let r = rec(vec![
            mpc(-50.0, 0.5, 0.0, &[Direct]),
            mpc(-50.0, 2.5, 0.0, &[Reflect]),
        ]);
        assert_relative_eq!(rms_delay_spread(&r).unwrap(), 1.0, max_relative = 1e-12);
        // {1, 0.5, 0.25} mW at {0, 10, 20} ns
        let p = [1.0, 0.5, 0.25];
        let t = [0.0, 10.0, 20.0];
        let m1: f64 = p.iter().zip(t).map(|(p, t)| p * t).sum::<f64>() / 1.75;
        let m2: f64 = p.iter().zip(t).map(|(p, t)| p * t * t).sum::<f64>() / 1.75;
        let oracle = (m2 - m1 * m1).sqrt();
        assert_relative_eq!(rms_spread(&p, &t), oracle, max_relative = 1e-12);
        assert_relative_eq!(oracle, (2600.0f64 / 49.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn angular_spread_examples() {
        assert_eq!(rms_angular_spread_deg(&[1.0], &[33.0]), 0.0);
        assert_relative_eq!(
            rms_angular_spread_deg(&[1.0, 1.0], &[90.0, -90.0]),
            90.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            rms_angular_spread_deg(&[1.0, 1.0], &[170.0, -170.0]),
            170.0,
            max_relative = 1e-12
        );
        let r = rec(vec![
            mpc(-50.0, 1.0, 170.0, &[Direct]),
            mpc(-50.0, 2.0, -170.0, &[Reflect]),
        ]);
        assert_relative_eq!(
            angular_spread(&r, AngleKind::Asa).unwrap(),
            170.0,
            max_relative = 1e-12
        );
        assert_eq!(angular_spread(&r, AngleKind::Esd).unwrap(), 0.0);
    }

    #[test]
    fn fit_exact_line() {
        let pts: Vec<(f64, f64)> = (1..50)
            .map(|i| {
                let d = 0.5 + i as f64 * 0.3;
                (d, 58.49 + 14.5 * d.log10())
            })
            .collect();
        let f = fit_ab(&pts, Condition::Los).unwrap();
        assert_relative_eq!(f.a_db, 58.49, max_relative = 1e-9);
        assert_relative_eq!(f.b, 1.45, max_relative = 1e-9);
        assert!(f.sigma_sf_db < 1e-9);
    }

    #[test]
    fn fit_alternating_residuals() {
        // +-3 dB alternating around PL = 60 + 20 log10 d, symmetric pairs at
        // each distance so the line is unchanged: residual std = 3 sqrt(n/(n-1))
        let mut pts = Vec::new();
        for i in 1..=10 {
            let d = i as f64;
            let base = 60.0 + 20.0 * d.log10();
            pts.push((d, base + 3.0));
            pts.push((d, base - 3.0));
        }
        let f = fit_ab(&pts, Condition::Nlos).unwrap();
        assert_relative_eq!(f.b, 2.0, max_relative = 1e-12);
        assert_relative_eq!(
            f.sigma_sf_db,
            3.0 * (20.0f64 / 19.0).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            fit_ab(&[(1.0, 60.0)], Condition::Los),
            Err(ExtractError::TooFewPoints {
                condition: Condition::Los,
                n: 1
            })
        );
        assert_eq!(
            fit_ab(&[(2.0, 60.0), (2.0, 61.0)], Condition::Los),
            Err(ExtractError::SingularFit {
                condition: Condition::Los
            })
        );
    }

    fn dataset(records: Vec<RxRecord>) -> ScenarioDataset {
        ScenarioDataset {
            scenario_name: "t".into(),
            tx_position_m: [0.0; 3],
            link_budget: LinkBudget::default(),
            records,
            provenance: Provenance::Ingested,
        }
    }

    #[test]
    fn summarize_identical_records() {
        let paths = vec![
            mpc(-50.0, 5.0, 10.0, &[Direct]),
            mpc(-56.0, 9.0, -40.0, &[Reflect, Reflect]),
        ];
        let recs: Vec<RxRecord> = (0..5)
            .map(|i| RxRecord::new(i, [1.0 + i as f64, 0.0, 0.0], [0.0; 3], paths.clone()))
            .collect();
        let one = record_stats(&recs[0], KfMode::DirectPath);
        let s = summarize(&dataset(recs), &LinkBudget::default(), KfMode::DirectPath).unwrap();
        assert!(s.params.nlos.is_none());
        let los = s.params.los.unwrap();
        let kf = los.kf_db.unwrap();
        assert_eq!((kf.mean, kf.std), (one.kf_db.unwrap(), 0.0));
        assert_relative_eq!(los.ds_ns.mean, one.ds_ns, max_relative = 1e-12);
        assert_eq!(los.ds_ns.std, 0.0);
        assert_eq!(los.asd_deg.std, 0.0);
        assert_relative_eq!(los.asd_deg.mean, one.angular[0], max_relative = 1e-12);
        assert_eq!(s.ratios.los, 1.0);
        assert_eq!(s.fits.len(), 1);
    }

    #[test]
    fn summarize_ratios_and_absent_blocks() {
        let recs = vec![
            RxRecord::new(
                0,
                [1.0, 0.0, 0.0],
                [0.0; 3],
                vec![mpc(-50.0, 5.0, 0.0, &[Reflect])],
            ),
            RxRecord::new(
                1,
                [2.0, 0.0, 0.0],
                [0.0; 3],
                vec![mpc(-50.0, 5.0, 0.0, &[DiffuseScatter])],
            ),
            RxRecord::new(2, [3.0, 0.0, 0.0], [0.0; 3], vec![]),
            RxRecord::new(
                3,
                [4.0, 0.0, 0.0],
                [0.0; 3],
                vec![mpc(-60.0, 5.0, 0.0, &[Reflect])],
            ),
        ];
        let s = summarize(&dataset(recs), &LinkBudget::default(), KfMode::DirectPath).unwrap();
        assert!(s.params.los.is_none());
        let nlos = s.params.nlos.unwrap();
        assert!(nlos.kf_db.is_none());
        assert_eq!(s.ratios.nlos, 0.5);
        assert_eq!(
            s.ratios.ds + s.ratios.outage + s.ratios.los + s.ratios.nlos,
            1.0
        );
        assert_eq!(
            summarize(&dataset(vec![]), &LinkBudget::default(), KfMode::DirectPath),
            Err(ExtractError::EmptyDataset)
        );
    }

    #[test]
    fn preset_table_reads_verbatim() {
        let csv = param_table_csv(&ChannelParamSet::builtins());
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("parameter,BL LOS,BL NLOS,CV LOS"));
        assert!(csv.contains("\nA_db,58.49,59,61.72,64.9,60.37,62.52,59,59.28,61.34,53.33\n"));
        assert!(csv.contains("\nsigma_SF_db,5.58,7.76,"));
        assert!(csv.contains("\nmu_KF_db,-4.51,n/a,4.3,n/a,-1.98,n/a,-4.81,n/a,7,n/a\n"));
        assert!(csv.contains(
            "\nsigma_DS_ns,2.35,2.45,1.46,1.83,5.56,3.22,2.5,3.22,151000000,158000000\n"
        ));
        assert_eq!(csv.lines().count(), 16);
    }
}
