//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use ids_chan::{Condition, Interaction, MultipathComponent, RxRecord};
use rand::Rng;

pub fn mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Pairwise form: sigma^2 = sum_ij p_i p_j (t_i - t_j)^2 / (2 P^2).
pub fn delay_spread_pairwise(powers: &[f64], delays: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    let mut acc = 0.0;
    for i in 0..powers.len() {
        for j in 0..powers.len() {
            acc += powers[i] * powers[j] * (delays[i] - delays[j]).powi(2);
        }
    }
    (acc / (2.0 * total * total)).sqrt()
}

/// Power-weighted linear mean, deviations wrapped with atan2, RMS.
pub fn angular_spread_direct(powers: &[f64], angles_deg: &[f64]) -> f64 {
    let total: f64 = powers.iter().sum();
    let rad: Vec<f64> = angles_deg.iter().map(|a| a * PI / 180.0).collect();
    let mean = powers.iter().zip(&rad).map(|(p, t)| p * t).sum::<f64>() / total;
    let var = powers
        .iter()
        .zip(&rad)
        .map(|(p, t)| {
            let d = (t - mean).sin().atan2((t - mean).cos());
            p * d * d
        })
        .sum::<f64>()
        / total;
    var.sqrt() * 180.0 / PI
}

/// Direct-path power over the remaining power, dB.
pub fn k_factor_direct(paths: &[MultipathComponent]) -> Option<f64> {
    let direct: f64 = paths
        .iter()
        .filter(|p| p.interactions == [Interaction::Direct])
        .map(|p| mw(p.power_dbm))
        .sum();
    if direct == 0.0 {
        return None;
    }
    let rest: f64 = paths
        .iter()
        .filter(|p| p.interactions != [Interaction::Direct])
        .map(|p| mw(p.power_dbm))
        .sum();
    if rest == 0.0 {
        return Some(f64::INFINITY);
    }
    Some(10.0 * (direct / rest).log10())
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// A random valid record with 1..=12 paths; LOS with probability 1/2.
/// Angles stay away from the +-180 seam so that branch choices in the
/// wrap do not matter.
pub fn random_record<R: Rng>(rng: &mut R, rx_id: u32) -> RxRecord {
    let n = rng.random_range(1..=12usize);
    let los = rng.random_bool(0.5);
    let paths = (0..n)
        .map(|i| MultipathComponent {
            power_dbm: rng.random_range(-110.0..-30.0),
            delay_ns: rng.random_range(0.5..300.0),
            aod_az_deg: rng.random_range(-179.0..179.0),
            aod_el_deg: rng.random_range(-89.0..89.0),
            aoa_az_deg: rng.random_range(-179.0..179.0),
            aoa_el_deg: rng.random_range(-89.0..89.0),
            interactions: if los && i == 0 {
                vec![Interaction::Direct]
            } else {
                vec![Interaction::Reflect; 1 + i % 3]
            },
        })
        .collect();
    let pos = [
        rng.random_range(0.5..10.0),
        rng.random_range(0.1..3.9),
        rng.random_range(0.5..2.0),
    ];
    let r = RxRecord::new(rx_id, pos, [0.1, 1.7, 2.1], paths);
    debug_assert!(r.condition != Condition::Outage);
    r
}
