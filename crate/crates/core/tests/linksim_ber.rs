use ids_chan::extract::MeanStd;
use ids_chan::linksim::{ber_bpsk, ber_bpsk_with, ber_sweep, BerConfig, ChannelSource};
use ids_chan::stats::db_to_linear;
use ids_chan::{ChannelParamSet, Condition};

fn rayleigh_oracle(gamma: f64) -> f64 {
    0.5 * (1.0 - (gamma / (1.0 + gamma)).sqrt())
}

#[test]
fn rayleigh_at_10db() {
    let bl = ChannelParamSet::bl();
    let src = ChannelSource::Fading {
        params: &bl,
        condition: Condition::Nlos,
    };
    let cfg = BerConfig {
        block_len: 1,
        blocks_per_batch: 100_000,
    };
    let p = ber_bpsk_with(src, 10.0, 2_000_000, 3, &cfg).unwrap();
    let want = rayleigh_oracle(10.0);
    assert!(((p.ber - want) / want).abs() < 0.05, "{} vs {want}", p.ber);
}

#[test]
fn curves_are_non_increasing_within_noise() {
    let sets = [ChannelParamSet::bl(), ChannelParamSet::gpp_ino()];
    let grid: Vec<f64> = (0..=20).map(|i| i as f64).collect();
    let sweep = ber_sweep(
        &sets,
        Condition::Los,
        &grid,
        200_000,
        4,
        &BerConfig::default(),
    )
    .unwrap();
    for c in &sweep.curves {
        for w in c.points.windows(2) {
            assert!(
                w[1].ber <= w[0].ber + w[0].ci95 + w[1].ci95,
                "{} at {} dB",
                c.preset,
                w[1].ebn0_db
            );
        }
        assert!(c.monotone.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn higher_k_never_hurts() {
    let lo = ChannelParamSet::bl();
    let mut hi = lo.clone();
    hi.name = "BL+10".into();
    let los = hi.los.as_mut().unwrap();
    los.kf_db = Some(MeanStd::new(
        los.kf_db.unwrap().mean + 10.0,
        los.kf_db.unwrap().std,
    ));
    let grid = [5.0, 10.0, 15.0, 20.0];
    let sweep = ber_sweep(
        &[lo, hi],
        Condition::Los,
        &grid,
        300_000,
        5,
        &BerConfig::default(),
    )
    .unwrap();
    for (a, b) in sweep.curves[0].points.iter().zip(&sweep.curves[1].points) {
        assert!(
            b.ber <= a.ber + a.ci95 + b.ci95,
            "at {} dB: {} vs {}",
            a.ebn0_db,
            b.ber,
            a.ber
        );
    }
}

#[test]
fn seed_fixes_every_point_across_thread_counts() {
    let bl = ChannelParamSet::bl();
    let src = ChannelSource::Fading {
        params: &bl,
        condition: Condition::Los,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ber_bpsk(src, 8.0, 1_000_000, 77).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, run(8));
    assert_ne!(a, ber_bpsk(src, 8.0, 1_000_000, 78).unwrap());
}

#[test]
fn awgn_low_snr_oracle() {
    let p = ber_bpsk(ChannelSource::Awgn, 0.0, 1_000_000, 6).unwrap();
    let want = ids_chan::stats::q_function((2.0 * db_to_linear(0.0)).sqrt());
    assert!((p.ber - want).abs() <= 3.0 * p.ci95);
}
