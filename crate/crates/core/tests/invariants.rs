//! Property tests of structural invariants through the public API.

use clm_core::gradcheck::random_cluster;
use clm_core::io::{parse_dataset_csv, parse_xyz, write_dataset_csv, write_xyz};
use clm_core::problems::{Dataset, LennardJones, Multimodal};
use clm_core::{
    clm_rhs, renumber, schedule_gamma, EnsembleState, Problem, ScheduleConfig, ScheduleParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn schedule(lo: f64, hi: f64) -> ScheduleConfig {
    ScheduleConfig {
        gamma_lo: lo,
        gamma_hi: hi,
        eta_lo: 1e-2,
        eta_hi: 1e2,
        alpha: 1.0,
        u_star: 0.0,
        renumber_period: 0,
        renumber_fraction: 0.0,
    }
}

/// Ensemble with `q` members in `n` dimensions plus per-member couplings.
fn ensemble(n: usize) -> impl Strategy<Value = (EnsembleState, Vec<f64>)> {
    (2usize..8).prop_flat_map(move |q| {
        (
            prop::collection::vec(prop::collection::vec(-10.0..10.0f64, n), q),
            prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n), q),
            prop::collection::vec(0.1..5.0f64, q),
        )
            .prop_map(|(xs, ls, g)| (EnsembleState::new(xs, ls).unwrap(), g))
    })
}

fn rotate(coords: &[f64], axis: [f64; 3], angle: f64) -> Vec<f64> {
    let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
    let [kx, ky, kz] = axis.map(|a| a / norm);
    let (s, c) = angle.sin_cos();
    coords
        .chunks(3)
        .flat_map(|v| {
            // Rodrigues' formula.
            let dot = kx * v[0] + ky * v[1] + kz * v[2];
            let cross = [
                ky * v[2] - kz * v[1],
                kz * v[0] - kx * v[2],
                kx * v[1] - ky * v[0],
            ];
            [0, 1, 2].map(|i| v[i] * c + cross[i] * s + [kx, ky, kz][i] * dot * (1.0 - c))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coupling_and_multipliers_cancel_over_the_ring((ens, gamma) in ensemble(3), eta in 0.1..10.0f64) {
        let p = Multimodal::new(3);
        let q = ens.q();
        let d = clm_rhs(&ens, &p, &ScheduleParams::new(gamma, eta)).unwrap();
        let mut grad_sum = vec![0.0; 3];
        let mut g = vec![0.0; 3];
        for i in 0..q {
            p.gradient(ens.x(i), &mut g);
            grad_sum.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
        }
        for k in 0..3 {
            let dx: f64 = (0..q).map(|i| d.x(i)[k]).sum();
            let dl: f64 = (0..q).map(|i| d.lambda(i)[k]).sum();
            let expected = -eta / q as f64 * grad_sum[k];
            prop_assert!((dx - expected).abs() <= 1e-9 * (1.0 + expected.abs()), "{dx} vs {expected}");
            prop_assert!(dl.abs() <= 1e-9);
        }
    }

    #[test]
    fn renumbering_only_permutes_members((ens, _) in ensemble(2), fraction in 0.0..1.0f64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (out, moves) = renumber(&ens, fraction, &mut rng);
        let rows = |e: &EnsembleState| {
            let mut v: Vec<Vec<f64>> = (0..e.q()).map(|i| [e.x(i), e.lambda(i)].concat()).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        };
        prop_assert_eq!(rows(&ens), rows(&out));
        prop_assert!(moves.moves.len() <= ((fraction * ens.q() as f64).round() as usize));
        for &(from, to) in &moves.moves {
            prop_assert_eq!(ens.x(from), out.x(to));
        }
        let moved: std::collections::HashSet<usize> = moves.moves.iter().map(|m| m.1).collect();
        for i in (0..ens.q()).filter(|i| !moved.contains(i)) {
            prop_assert_eq!(ens.x(i), out.x(i));
        }
    }

    #[test]
    fn sign_rule_is_optimal_over_the_box(
        c in prop::collection::vec(-1.0..1.0f64, 2..12),
        lo in 0.01..1.0f64,
        span in 0.01..10.0f64,
        probes in prop::collection::vec(0.0..1.0f64, 12),
    ) {
        let cfg = schedule(lo, lo + span);
        let gamma = schedule_gamma(&c, &cfg);
        prop_assert!(gamma.iter().all(|&g| g == cfg.gamma_lo || g == cfg.gamma_hi));
        let value: f64 = c.iter().zip(&gamma).map(|(a, b)| a * b).sum();
        let other: f64 = c.iter().zip(&probes).map(|(a, t)| a * (cfg.gamma_lo + t * span)).sum();
        prop_assert!(value <= other + 1e-12);
    }

    #[test]
    fn lj_energy_ignores_rigid_motion_and_labels(
        seed in any::<u64>(),
        shift in prop::array::uniform3(-5.0..5.0f64),
        axis in prop::array::uniform3(0.1..1.0f64),
        angle in 0.0..6.3f64,
    ) {
        let atoms = 6;
        let lj = LennardJones::plain(atoms);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_cluster(atoms, 2.0, 0.9, &mut rng);
        let e = lj.energy(&x).unwrap();

        let moved: Vec<f64> = rotate(&x, axis, angle).chunks(3).flat_map(|v| [v[0] + shift[0], v[1] + shift[1], v[2] + shift[2]]).collect();
        let relabelled: Vec<f64> = x.chunks(3).rev().flatten().copied().collect();
        for y in [moved, relabelled] {
            let ey = lj.energy(&y).unwrap();
            prop_assert!((e - ey).abs() <= 1e-10 * (1.0 + e.abs()), "{e} vs {ey}");
        }
    }

    #[test]
    fn xyz_round_trip(coords in prop::collection::vec(-100.0..100.0f64, 3..30), energy in -1e3..1e3f64) {
        let coords = coords[..coords.len() / 3 * 3].to_vec();
        let frame = parse_xyz(&write_xyz(&coords, "Ar", energy)).unwrap();
        prop_assert_eq!(frame.elements.len(), coords.len() / 3);
        prop_assert!(frame.coords.iter().zip(&coords).all(|(a, b)| (a - b).abs() < 1e-11));
        prop_assert!((frame.energy().unwrap() - energy).abs() < 1e-11);
    }

    #[test]
    fn dataset_csv_round_trip(rows in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 1..40)) {
        let data = Dataset::new(rows.iter().map(|r| vec![r.0]).collect(), rows.iter().map(|r| r.1).collect()).unwrap();
        prop_assert_eq!(parse_dataset_csv(&write_dataset_csv(&data)).unwrap(), data);
    }
}
