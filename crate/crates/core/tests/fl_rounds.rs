//! Federated round behaviour: abort gating, model freeze, plain/secure
//! equivalence, leakage bounds and byte accounting.

use qkdfl::fl::{partition_non_iid, run_round, run_training, Federation, FlError, Mode, RoundConfig, RoundStatus};
use qkdfl::qkd::Bb84Config;
use qkdfl::tasks::data::{gen_channel_dataset, gen_radar_dataset};
use qkdfl::tasks::{ChannelSpec, Dataset, ModelSpec, RadarSpec, TrainConfig};

fn channel_fed(k: usize, per_client: usize) -> Federation {
    let train = Dataset::Channel(gen_channel_dataset(k * per_client, 10.0, (48, 14), 1));
    Federation {
        model: ModelSpec::Channel(ChannelSpec::desk(7)),
        shards: partition_non_iid(&train, k, f64::INFINITY, 2).unwrap(),
        validation: Dataset::Channel(gen_channel_dataset(6, 10.0, (48, 14), 99)),
    }
}

fn template(k: usize, mode: Mode, eve: bool) -> RoundConfig {
    RoundConfig {
        round_index: 0,
        num_clients: k,
        mode,
        train: TrainConfig::new(1, 1e-3, 4),
        qber_threshold: 0.08,
        bb84: Bb84Config { eve_present: eve, ..Default::default() },
        mask_scale: 1e-3,
        key_bits: 256,
        seed: 5,
    }
}

#[test]
fn eve_aborts_every_round_and_freezes_the_model() {
    let fed = channel_fed(3, 4);
    let init = fed.model.init_params();
    let (last, reports) = run_training(&fed, &init, 5, &template(3, Mode::QkdSa, true)).unwrap();
    assert_eq!(last, init);
    assert_eq!(reports.len(), 5);
    for r in &reports {
        assert_eq!(r.status, RoundStatus::Aborted);
        let q = r.qber.unwrap();
        assert!(q >= 0.08, "qber {q}");
        assert_eq!((r.bytes_down, r.bytes_up), (0, 0));
        assert!(r.leakage.is_empty() && r.recon_error.is_none());
    }
    // retained utility is the untouched initial model's
    assert_eq!(reports[0].utility, reports[4].utility);
}

#[test]
fn clean_rounds_are_secure_with_zero_qber() {
    let fed = channel_fed(3, 4);
    let (_, reports) = run_training(&fed, &fed.model.init_params(), 5, &template(3, Mode::QkdSa, false)).unwrap();
    for r in &reports {
        assert_eq!(r.status, RoundStatus::Secure);
        assert_eq!(r.qber, Some(0.0));
        assert!(r.recon_error.unwrap() < 1e-5);
    }
}

#[test]
fn abort_iff_qber_reaches_threshold() {
    let fed = channel_fed(2, 3);
    let init = fed.model.init_params();
    for (eta, seed) in [(0.15, 1u64), (0.15, 2), (0.16, 3), (0.14, 4), (0.0, 5)] {
        let mut cfg = template(2, Mode::QkdSa, false);
        cfg.bb84.depolarize_prob = eta;
        cfg.bb84.rng_seed = seed;
        let (next, r) = run_round(&fed, &init, &cfg).unwrap();
        let aborted = r.qber.unwrap() >= cfg.qber_threshold;
        assert_eq!(r.status == RoundStatus::Aborted, aborted);
        assert_eq!(next == init, aborted);
    }
    // non-QKD modes never abort, even with Eve configured
    for mode in [Mode::Plain, Mode::ClassicalSa] {
        let (_, r) = run_round(&fed, &init, &template(2, mode, true)).unwrap();
        assert_eq!(r.status, RoundStatus::Secure);
        assert_eq!(r.qber, None);
        assert!(!r.eve_present);
    }
}

#[test]
fn plain_and_secure_models_agree() {
    let fed = channel_fed(3, 4);
    let init = fed.model.init_params();
    let (plain, _) = run_training(&fed, &init, 1, &template(3, Mode::Plain, false)).unwrap();
    let (qkd, _) = run_training(&fed, &init, 1, &template(3, Mode::QkdSa, false)).unwrap();
    let (classical, _) = run_training(&fed, &init, 3, &template(3, Mode::ClassicalSa, false)).unwrap();
    let (plain3, _) = run_training(&fed, &init, 3, &template(3, Mode::Plain, false)).unwrap();
    assert!(plain.max_abs_diff(&qkd).unwrap() <= 1e-5);
    assert!(plain3.max_abs_diff(&classical).unwrap() <= 1e-5);
    assert_ne!(plain, init);
}

#[test]
fn leakage_proxies_are_bounded() {
    let fed = channel_fed(3, 4);
    let init = fed.model.init_params();
    let (_, plain) = run_round(&fed, &init, &template(3, Mode::Plain, false)).unwrap();
    assert_eq!(plain.leakage.len(), 3);
    for l in &plain.leakage {
        assert_eq!((l.cosine, l.pearson), (1.0, 1.0));
    }
    let (_, secure) = run_round(&fed, &init, &template(3, Mode::QkdSa, false)).unwrap();
    for l in &secure.leakage {
        assert!(l.cosine.abs() <= 1.0 && l.pearson.abs() <= 1.0);
        assert!(l.cosine < 1.0);
    }
    let mean = secure.leakage.iter().map(|l| l.cosine).sum::<f64>() / 3.0;
    assert!((secure.leakage_mean_cosine.unwrap() - mean).abs() < 1e-15);
}

#[test]
fn byte_counts_scale_with_clients() {
    let mut up = Vec::new();
    let mut down = Vec::new();
    for k in [2usize, 4, 6] {
        let fed = channel_fed(k, 1);
        let mut cfg = template(k, Mode::QkdSa, false);
        cfg.train.epochs = 0;
        let (_, r) = run_round(&fed, &fed.model.init_params(), &cfg).unwrap();
        up.push(r.bytes_up);
        down.push(r.bytes_down);
    }
    let model_bytes = 8 * ModelSpec::Channel(ChannelSpec::desk(0)).param_count() as u64;
    assert_eq!(down, vec![model_bytes; 3]);
    assert_eq!(up, vec![2 * model_bytes, 4 * model_bytes, 6 * model_bytes]);
}

#[test]
fn radar_round_runs_and_cancels() {
    let train = Dataset::Radar(gen_radar_dataset(6, 16, 3));
    let fed = Federation {
        model: ModelSpec::Radar(RadarSpec::scaled(32, 16, 1)),
        shards: partition_non_iid(&train, 3, 1.0, 1).unwrap(),
        validation: Dataset::Radar(gen_radar_dataset(2, 16, 4)),
    };
    let mut cfg = template(3, Mode::QkdSa, false);
    cfg.train = TrainConfig::new(1, 1e-4, 2);
    let (_, r) = run_round(&fed, &fed.model.init_params(), &cfg).unwrap();
    assert_eq!(r.status, RoundStatus::Secure);
    assert!(r.recon_error.unwrap() < 1e-5);
    assert!(r.utility.accuracy().is_some() && r.utility.miou().is_some());
}

#[test]
fn rejects_mismatched_inputs() {
    let fed = channel_fed(3, 2);
    let init = fed.model.init_params();
    assert!(matches!(run_round(&fed, &init, &template(4, Mode::Plain, false)), Err(FlError::Config(_))));
    let mut cfg = template(3, Mode::Plain, false);
    cfg.qber_threshold = 1.0;
    assert!(matches!(run_round(&fed, &init, &cfg), Err(FlError::Config(_))));
    let wrong = ModelSpec::Radar(RadarSpec::desk(0)).init_params();
    assert!(matches!(run_round(&fed, &wrong, &template(3, Mode::Plain, false)), Err(FlError::Params(_))));
    assert!(run_training(&fed, &init, 0, &template(3, Mode::Plain, false)).is_err());
}
