use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use victimloc::channel::{
    derive_rssd, gen_aoa, gen_rss, gen_tdoa, gen_toa_ranges, ChannelParams, Link, Topology,
};
use victimloc::harness::{run_trial, Technique};
use victimloc::oracle::{grid_oracle, GridSpec, Objective};
use victimloc::rng::{NoiseStream, StreamTag};
use victimloc::scenario::{generate_scenario, Scenario};
use victimloc::solvers::{rss_objective_and_gradient, solve_rssd_noncoop, SolverOptions};
use victimloc::{distance, Point, Rect};

fn area() -> Rect {
    Rect::new(0.0, 0.0, 100.0, 100.0)
}

fn shifted(s: &Scenario, dx: f64, dy: f64) -> Scenario {
    let mv = |p: &Point| Point::new(p.x + dx, p.y + dy);
    let b = s.bounds();
    Scenario::from_parts(
        s.victims().iter().map(mv).collect(),
        s.rescuers().iter().map(mv).collect(),
        s.tx_power_dbm().to_vec(),
        Rect::new(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy),
        s.seed(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noiseless_recovery(seed in 0u64..10_000, victims in 1usize..5, rescuers in 4usize..12) {
        let Ok(s) = generate_scenario(victims, rescuers, area(), seed) else { return Ok(()) };
        let topo = Topology::full(&s);
        for t in [Technique::ToaCoop, Technique::ToaNoncoop, Technique::TdoaNoncoop, Technique::AoaCoop] {
            let out = run_trial(&s, &topo, t, &ChannelParams::noiseless(), 0, seed).unwrap();
            for (e, v) in out.estimates.iter().zip(s.victims()) {
                prop_assert!(distance(e, v) < 1e-6, "{t}: {e:?} vs {v:?}");
            }
        }
    }

    #[test]
    fn translation_equivariance(seed in 0u64..10_000, dx in -500.0f64..500.0, dy in -500.0f64..500.0) {
        let s = generate_scenario(3, 8, area(), seed).unwrap();
        let moved = shifted(&s, dx, dy);
        let params = ChannelParams::default();
        for t in [Technique::ToaCoop, Technique::ToaNoncoop, Technique::TdoaNoncoop, Technique::AoaCoop] {
            let a = run_trial(&s, &Topology::full(&s), t, &params, 3, seed).unwrap();
            let b = run_trial(&moved, &Topology::full(&moved), t, &params, 3, seed).unwrap();
            for (p, q) in a.estimates.iter().zip(&b.estimates) {
                let back = Point::new(q.x - dx, q.y - dy);
                prop_assert!(distance(p, &back) < 1e-5, "{t}: {p:?} vs {back:?}");
            }
        }
    }

    #[test]
    fn rssd_ignores_transmit_power(seed in 0u64..10_000, offset in -30.0f64..30.0) {
        let s = generate_scenario(1, 8, area(), seed).unwrap();
        let louder = s.with_tx_powers(s.tx_power_dbm().iter().map(|p| p + offset).collect());
        let params = ChannelParams::default();
        let links: Vec<Link> = (0..8).map(|r| Link::rescuer(0, r)).collect();
        let solve = |sc: &Scenario| {
            let rss = gen_rss(sc, &links, &params, &mut NoiseStream::new(seed, 0, StreamTag::Rss)).unwrap();
            let rssd = derive_rssd(&rss).unwrap();
            solve_rssd_noncoop(&rssd, sc.rescuers(), &params, &Technique::RssdNoncoop.options_for(area()))
                .unwrap()
                .positions[0]
        };
        let (a, b) = (solve(&s), solve(&louder));
        prop_assert!(distance(&a, &b) < 1e-6, "{a:?} vs {b:?}");
    }

    #[test]
    fn rss_gradient_matches_differences(seed in 0u64..10_000) {
        let s = generate_scenario(3, 6, area(), seed).unwrap();
        let params = ChannelParams::default();
        let meas = gen_rss(&s, &Topology::full(&s).all_links(), &params, &mut NoiseStream::new(seed, 0, StreamTag::Rss))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..100.0)).collect();
        theta.extend((0..3).map(|_| rng.random_range(-10.0..10.0)));
        let f = |th: &[f64]| {
            let pos: Vec<Point> = (0..3).map(|i| Point::new(th[2 * i], th[2 * i + 1])).collect();
            rss_objective_and_gradient(&pos, &th[6..], s.rescuers(), &meas, &params).unwrap()
        };
        let (_, grad) = f(&theta);
        let h = 1e-6;
        for k in 0..theta.len() {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (f(&up).0 - f(&down).0) / (2.0 * h);
            prop_assert!((grad[k] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "component {k}: {} vs {fd}", grad[k]);
        }
    }
}

#[test]
fn gradient_vanishes_at_noiseless_truth() {
    let s = generate_scenario(4, 8, area(), 5).unwrap();
    let quiet = ChannelParams::noiseless();
    let meas = gen_rss(
        &s,
        &Topology::full(&s).all_links(),
        &quiet,
        &mut NoiseStream::new(5, 0, StreamTag::Rss),
    )
    .unwrap();
    let (f, g) =
        rss_objective_and_gradient(s.victims(), s.tx_power_dbm(), s.rescuers(), &meas, &quiet)
            .unwrap();
    assert!(f < 1e-15);
    assert!(g.iter().all(|v| v.abs() < 1e-6));
}

/// Every modality: the oracle's cell beats 10^4 randomly resampled cells,
/// and its objective matches a direct evaluation.
#[test]
fn oracle_is_the_grid_minimum() {
    let params = ChannelParams::default();
    let grid = GridSpec::new(area(), 0.5);
    let (nx, ny) = grid.shape().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..4u64 {
        let s = generate_scenario(1, 8, area(), 100 + seed).unwrap();
        let links: Vec<Link> = (0..8).map(|r| Link::rescuer(0, r)).collect();
        let all: Vec<usize> = (0..8).collect();
        let sets = [
            gen_toa_ranges(
                &s,
                &links,
                &params,
                &mut NoiseStream::new(seed, 0, StreamTag::Toa),
            )
            .unwrap(),
            gen_tdoa(
                &s,
                0,
                &all,
                &params,
                &mut NoiseStream::new(seed, 0, StreamTag::Tdoa),
            )
            .unwrap(),
            gen_aoa(
                &s,
                &links,
                &params,
                &mut NoiseStream::new(seed, 0, StreamTag::Aoa),
            )
            .unwrap(),
            derive_rssd(
                &gen_rss(
                    &s,
                    &links,
                    &params,
                    &mut NoiseStream::new(seed, 0, StreamTag::Rss),
                )
                .unwrap(),
            )
            .unwrap(),
            gen_rss(
                &s,
                &links,
                &params,
                &mut NoiseStream::new(seed, 0, StreamTag::Rss),
            )
            .unwrap(),
        ];
        for meas in &sets {
            let best = grid_oracle(meas, s.rescuers(), &grid, &params).unwrap();
            let objective = Objective::new(meas, s.rescuers(), &params).unwrap();
            assert_eq!(objective.eval(best.point), best.objective);
            for _ in 0..10_000 {
                let p = grid.point(rng.random_range(0..nx), rng.random_range(0..ny));
                assert!(
                    objective.eval(p) >= best.objective,
                    "{:?}: {p:?}",
                    meas.modality
                );
            }
        }
    }
}

#[test]
fn rssd_solver_agrees_with_oracle() {
    let params = ChannelParams::default();
    let grid = GridSpec::new(area(), 0.5);
    for seed in 0..10u64 {
        let s = generate_scenario(1, 10, area(), 300 + seed).unwrap();
        let links: Vec<Link> = (0..10).map(|r| Link::rescuer(0, r)).collect();
        let rss = gen_rss(
            &s,
            &links,
            &params,
            &mut NoiseStream::new(seed, 0, StreamTag::Rss),
        )
        .unwrap();
        let meas = derive_rssd(&rss).unwrap();
        let sol = solve_rssd_noncoop(
            &meas,
            s.rescuers(),
            &params,
            &Technique::RssdNoncoop.options_for(area()),
        )
        .unwrap();
        let best = grid_oracle(&meas, s.rescuers(), &grid, &params).unwrap();
        let objective = Objective::new(&meas, s.rescuers(), &params).unwrap();
        let p = sol.positions[0];
        assert!(
            distance(&p, &best.point) <= 0.5 || objective.eval(p) < best.objective,
            "seed {seed}: {p:?} vs {:?}",
            best.point
        );
    }
}

#[test]
fn invalid_options_rejected() {
    let s = generate_scenario(1, 6, area(), 1).unwrap();
    let params = ChannelParams::default();
    let links: Vec<Link> = (0..6).map(|r| Link::rescuer(0, r)).collect();
    let rss = gen_rss(
        &s,
        &links,
        &params,
        &mut NoiseStream::new(1, 0, StreamTag::Rss),
    )
    .unwrap();
    let meas = derive_rssd(&rss).unwrap();
    let bad = SolverOptions {
        tol: 0.0,
        ..SolverOptions::rssd()
    };
    assert!(solve_rssd_noncoop(&meas, s.rescuers(), &params, &bad).is_err());
}
