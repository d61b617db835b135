use victimloc::channel::{gen_aoa, gen_rss, gen_toa_ranges, wrap_angle, ChannelParams, Topology};
use victimloc::rng::{NoiseStream, StreamTag};
use victimloc::scenario::generate_scenario;
use victimloc::{distance, Rect};

/// Sample variance of `samples` must lie within 5% of `sigma^2`; with
/// 20 000+ draws the relative standard error is about 1%.
fn assert_variance(samples: &[f64], sigma: f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 4.0 * sigma / n.sqrt(), "mean {mean}");
    assert!(
        (var / (sigma * sigma) - 1.0).abs() < 0.05,
        "variance {var} vs {}",
        sigma * sigma
    );
}

fn setup() -> (victimloc::scenario::Scenario, Topology) {
    let s = generate_scenario(5, 10, Rect::new(0.0, 0.0, 100.0, 100.0), 3).unwrap();
    let t = Topology::full(&s);
    (s, t)
}

#[test]
fn range_noise_variance() {
    let (s, topo) = setup();
    let params = ChannelParams::default();
    let links = topo.all_links();
    let mut residuals = Vec::new();
    for trial in 0..400 {
        let m = gen_toa_ranges(
            &s,
            &links,
            &params,
            &mut NoiseStream::new(11, trial, StreamTag::Toa),
        )
        .unwrap();
        for e in &m.entries {
            let (a, b) = (
                s.victims()[e.link.src],
                match e.link.kind {
                    victimloc::channel::LinkKind::VictimRescuer => s.rescuers()[e.link.dst],
                    victimloc::channel::LinkKind::VictimVictim => s.victims()[e.link.dst],
                },
            );
            residuals.push(e.value - distance(&a, &b));
        }
    }
    assert_variance(&residuals, params.sigma_range_m);
}

#[test]
fn shadowing_variance() {
    let (s, topo) = setup();
    let params = ChannelParams::default();
    let links = topo.rescuer_links();
    let mut residuals = Vec::new();
    for trial in 0..500 {
        let m = gen_rss(
            &s,
            &links,
            &params,
            &mut NoiseStream::new(12, trial, StreamTag::Rss),
        )
        .unwrap();
        for e in &m.entries {
            let d = distance(&s.victims()[e.link.src], &s.rescuers()[e.link.dst]);
            residuals.push(e.value - (s.tx_power_dbm()[e.link.src] - params.path_loss_db(d)));
        }
    }
    assert_variance(&residuals, params.sigma_shadow_db);
}

#[test]
fn bearing_noise_variance() {
    let (s, topo) = setup();
    let params = ChannelParams::default();
    let links = topo.rescuer_links();
    let mut residuals = Vec::new();
    for trial in 0..500 {
        let m = gen_aoa(
            &s,
            &links,
            &params,
            &mut NoiseStream::new(13, trial, StreamTag::Aoa),
        )
        .unwrap();
        for e in &m.entries {
            let (v, r) = (s.victims()[e.link.src], s.rescuers()[e.link.dst]);
            residuals.push(wrap_angle(e.value - (v.y - r.y).atan2(v.x - r.x)));
        }
    }
    assert_variance(&residuals, params.sigma_angle_rad);
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let (s, topo) = setup();
    let params = ChannelParams::default();
    let links = topo.all_links();
    let gen = |seed, trial| {
        gen_toa_ranges(
            &s,
            &links,
            &params,
            &mut NoiseStream::new(seed, trial, StreamTag::Toa),
        )
        .unwrap()
    };
    assert_eq!(gen(1, 0), gen(1, 0));
    assert_ne!(gen(1, 0), gen(1, 1));
    assert_ne!(gen(1, 0), gen(2, 0));
}
