use advrl::envs::Norm;
use advrl::neural::{
    project_ball, project_ball_backward, softmax_temp, Activation, Mlp, RecurrentCell, Trainable,
};
use advrl::rng::seeded;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-5;
const MAX_REL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Central difference from `f(x+h), f(x), f(x−h)`, or `None` when the one-sided
/// slopes disagree, meaning a ReLU kink sits inside `[x−h, x+h]`.
fn central(fp: f64, f0: f64, fm: f64) -> Option<f64> {
    let (right, left) = ((fp - f0) / H, (f0 - fm) / H);
    (rel_err(right, left) <= 1e-3).then(|| (fp - fm) / (2.0 * H))
}

/// `L = Σ c ⊙ net(x)` so that `∂L/∂out = c`.
fn weighted_sum(net: &Mlp, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
    (net.predict(&x.view()).unwrap() * c).sum()
}

fn check_mlp(sizes: &[usize], hidden: Activation, output: Activation, seed: u64) {
    let mut rng = seeded(seed);
    let mut net = Mlp::new(sizes, hidden, output, &mut rng).unwrap();
    let batch = 3;
    let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-1.0..1.0));
    let c = Array2::from_shape_fn((batch, *sizes.last().unwrap()), |_| {
        rng.random_range(-1.0..1.0)
    });
    let (_, cache) = net.forward(&x.view()).unwrap();
    let (grads, dx) = net.backward(&cache, &c.view()).unwrap();
    let f0 = weighted_sum(&net, &x, &c);
    let (mut checked, mut skipped) = (0, 0);

    for i in 0..batch {
        for j in 0..sizes[0] {
            let mut xp = x.clone();
            xp[[i, j]] += H;
            let mut xm = x.clone();
            xm[[i, j]] -= H;
            let Some(numeric) =
                central(weighted_sum(&net, &xp, &c), f0, weighted_sum(&net, &xm, &c))
            else {
                skipped += 1;
                continue;
            };
            checked += 1;
            let e = rel_err(dx[[i, j]], numeric);
            assert!(
                e <= MAX_REL,
                "{sizes:?} seed {seed} input ({i},{j}): {} vs {numeric}",
                dx[[i, j]]
            );
        }
    }

    // a random subset of parameters from every tensor
    let n_tensors = grads.0.len();
    for t in 0..n_tensors {
        let len = grads.0[t].len();
        for _ in 0..12 {
            let k = rng.random_range(0..len);
            let orig = net.params()[t][k];
            net.params_mut()[t][k] = orig + H;
            let fp = weighted_sum(&net, &x, &c);
            net.params_mut()[t][k] = orig - H;
            let fm = weighted_sum(&net, &x, &c);
            net.params_mut()[t][k] = orig;
            let Some(numeric) = central(fp, f0, fm) else {
                skipped += 1;
                continue;
            };
            checked += 1;
            let e = rel_err(grads.0[t][k], numeric);
            assert!(
                e <= MAX_REL,
                "{sizes:?} seed {seed} tensor {t}[{k}]: {} vs {numeric}",
                grads.0[t][k]
            );
        }
    }
    assert!(
        skipped * 10 <= checked,
        "{sizes:?} seed {seed}: {skipped} kinks vs {checked} checks"
    );
}

#[test]
fn gradient_check_on_every_architecture() {
    let archs: &[(&[usize], Activation, Activation)] = &[
        // MountainCar DQN
        (&[2, 512, 256, 64, 3], Activation::Relu, Activation::Linear),
        // CartPole DQN
        (&[4, 256, 256, 2], Activation::Relu, Activation::Linear),
        // DDPG actor and critic
        (&[2, 400, 300, 1], Activation::Relu, Activation::Tanh),
        (&[3, 400, 300, 1], Activation::Relu, Activation::Linear),
        // attack actor and critic
        (&[2, 400, 300, 2], Activation::Relu, Activation::Linear),
        (&[4, 400, 300, 1], Activation::Relu, Activation::Linear),
        // small tanh net
        (&[3, 5, 4, 2], Activation::Tanh, Activation::Tanh),
    ];
    for (sizes, hidden, output) in archs {
        for seed in 0..10 {
            check_mlp(sizes, *hidden, *output, seed);
        }
    }
}

#[test]
fn recurrent_gradient_check() {
    for seed in 0..10 {
        let mut rng = seeded(100 + seed);
        let mut cell = RecurrentCell::new(2, 16, &[32], 3, &mut rng).unwrap();
        let steps = 8;
        let batch = 2;
        let xs: Vec<Array2<f64>> = (0..steps)
            .map(|_| Array2::from_shape_fn((batch, 2), |_| rng.random_range(-1.0..1.0)))
            .collect();
        // loss on the last four steps only
        let cs: Vec<Option<Array2<f64>>> = (0..steps)
            .map(|t| {
                (t >= 4).then(|| Array2::from_shape_fn((batch, 3), |_| rng.random_range(-1.0..1.0)))
            })
            .collect();
        let loss = |cell: &RecurrentCell, xs: &[Array2<f64>]| -> f64 {
            let (outs, _) = cell.forward_sequence(xs, None).unwrap();
            outs.iter()
                .zip(&cs)
                .filter_map(|(o, c)| c.as_ref().map(|c| (o * c).sum()))
                .sum()
        };
        let (_, cache) = cell.forward_sequence(&xs, None).unwrap();
        let (grads, dxs) = cell.backward_sequence(&cache, &cs).unwrap();
        for t in [0, 3, 7] {
            for j in 0..2 {
                let mut xp = xs.clone();
                xp[t][[1, j]] += H;
                let mut xm = xs.clone();
                xm[t][[1, j]] -= H;
                let numeric = (loss(&cell, &xp) - loss(&cell, &xm)) / (2.0 * H);
                assert!(
                    rel_err(dxs[t][[1, j]], numeric) <= MAX_REL,
                    "seed {seed} input t={t}"
                );
            }
        }
        for ti in 0..grads.0.len() {
            for _ in 0..10 {
                let k = rng.random_range(0..grads.0[ti].len());
                let orig = cell.params()[ti][k];
                cell.params_mut()[ti][k] = orig + H;
                let fp = loss(&cell, &xs);
                cell.params_mut()[ti][k] = orig - H;
                let fm = loss(&cell, &xs);
                cell.params_mut()[ti][k] = orig;
                let numeric = (fp - fm) / (2.0 * H);
                assert!(
                    rel_err(grads.0[ti][k], numeric) <= MAX_REL,
                    "seed {seed} tensor {ti}[{k}]: {} vs {numeric}",
                    grads.0[ti][k]
                );
            }
        }
    }
}

#[test]
fn projection_backward_matches_differences() {
    let mut rng = seeded(7);
    for norm in [Norm::L1, Norm::L2, Norm::Linf] {
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps = rng.random_range(0.05..1.5);
            let n = norm.norm(&x);
            // stay away from the ball boundary and the ℓ1/ℓ∞ kinks
            if (n - eps).abs() < 1e-3 || x.iter().any(|v| v.abs() < 1e-3) {
                continue;
            }
            if norm == Norm::Linf {
                let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
                a.sort_by(|p, q| q.partial_cmp(p).unwrap());
                if a[0] - a[1] < 1e-3 {
                    continue;
                }
            }
            let analytic = project_ball_backward(&x, eps, 1e-6, norm, &g);
            let f = |x: &[f64]| -> f64 {
                project_ball(x, eps, 1e-6, norm)
                    .iter()
                    .zip(&g)
                    .map(|(p, g)| p * g)
                    .sum()
            };
            for i in 0..3 {
                let mut xp = x.clone();
                xp[i] += H;
                let mut xm = x.clone();
                xm[i] -= H;
                let numeric = (f(&xp) - f(&xm)) / (2.0 * H);
                assert!(rel_err(analytic[i], numeric) <= MAX_REL, "{norm} x={x:?}");
            }
        }
    }
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_bounded(
        x in proptest::collection::vec(-10.0f64..10.0, 1..6),
        eps in 0.0f64..3.0,
        which in 0usize..3,
    ) {
        let norm = [Norm::L1, Norm::L2, Norm::Linf][which];
        let p = project_ball(&x, eps, 0.0, norm);
        prop_assert!(norm.norm(&p) <= eps + 1e-12 || norm.norm(&x) <= eps);
        let pp = project_ball(&p, eps, 0.0, norm);
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let lam = project_ball(&x, eps, 1e-6, norm);
        prop_assert!(norm.norm(&lam) <= eps + 1e-12 || norm.norm(&x) + 1e-6 <= eps);
    }

    #[test]
    fn softmax_is_a_positive_distribution(
        z in proptest::collection::vec(-30.0f64..30.0, 1..8),
        t in 0.1f64..20.0,
    ) {
        let p = softmax_temp(&z, t).unwrap();
        prop_assert!(p.iter().all(|v| *v > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn netfmt_round_trip(seed in 0u64..1000, width in 1usize..6) {
        let net = Mlp::new(&[2, width, 3], Activation::Tanh, Activation::Linear, &mut seeded(seed)).unwrap();
        prop_assert_eq!(Mlp::from_text(&net.to_text()).unwrap(), net);
    }
}
