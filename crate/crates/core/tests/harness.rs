use advrl::agents::{AgentConfig, AgentModel, Algo, TrainedAgent};
use advrl::attack_mdp::{build_attack_mdp, solve_optimal_attack, RewardMode};
use advrl::envs::{ActionSpace, Environment, Gridworld, GridworldEnv, Norm};
use advrl::harness::{
    evaluate, gridworld_demo, moving_average, performance_loss, read_records, report, seed_stream,
    summarize, write_records, EvalPlan, EvalRecord, LoadedAgent, LoadedAttack, AgentSpec, SMOOTHING_WINDOW,
};
use advrl::mdp::value_iteration;
use advrl::neural::{Activation, Mlp};
use advrl::rng::{seeded, stream_id};
use proptest::prelude::*;

fn optimal_agent() -> LoadedAgent {
    LoadedAgent::load(&AgentSpec::GridOptimal).unwrap()
}

fn plan(epsilons: Vec<f64>, seeds: usize, episodes: usize) -> EvalPlan {
    EvalPlan {
        epsilons,
        norm: Norm::L1,
        seeds,
        episodes,
        master_seed: 11,
        random_steps: Some(0),
        run_id: None,
    }
}

fn returns(rows: &[EvalRecord]) -> Vec<f64> {
    rows.iter().map(|r| r.ret).collect()
}

#[test]
fn single_clean_gridworld_episode_is_the_shortest_path() {
    let mut agent = optimal_agent();
    let rows = evaluate(&mut agent, &LoadedAttack::None, &plan(vec![], 1, 1)).unwrap();
    assert_eq!(rows.len(), 1);
    // replay the start cell from the same stream
    let grid = Gridworld::new(6, 6).unwrap();
    let mut env = GridworldEnv::new(grid);
    env.seed(stream_id("eval-env", seed_stream(11, 0), 0));
    env.reset();
    let start = env.state();
    let to_goal = grid.distance(start, 0).min(grid.distance(start, 35));
    assert_eq!(rows[0].ret, -(to_goal as f64));
    assert_eq!(rows[0].length, to_goal);
    let (v, _) = value_iteration(&grid.mdp(), 1e-12).unwrap();
    assert_eq!(v[start], rows[0].ret);
}

#[test]
fn same_master_seed_gives_identical_csv() {
    let csv = || {
        let mut agent = optimal_agent();
        let rows = evaluate(&mut agent, &LoadedAttack::Huang, &plan(vec![0.0, 1.0], 2, 5)).unwrap();
        let mut buf = Vec::new();
        write_records(&rows, &mut buf).unwrap();
        buf
    };
    let a = csv();
    assert_eq!(a, csv());
    assert_eq!(read_records(a.as_slice()).unwrap().len(), 20);
}

fn dqn_gridworld_agent() -> LoadedAgent {
    let mut rng = seeded(4);
    let q = Mlp::new(&[2, 16, 4], Activation::Relu, Activation::Linear, &mut rng).unwrap();
    let cfg = AgentConfig::preset("gridworld", Algo::Dqn).unwrap();
    LoadedAgent::Trained(TrainedAgent::new("gridworld", cfg, AgentModel::Dqn(q), ActionSpace::Discrete(4)))
}

#[test]
fn zero_radius_attacks_match_the_clean_run() {
    let p = plan(vec![0.0], 2, 10);
    let mut tab = optimal_agent();
    let clean = returns(&evaluate(&mut tab, &LoadedAttack::None, &p).unwrap());
    for attack in [LoadedAttack::Huang, LoadedAttack::Pattanaik, LoadedAttack::Optimal] {
        assert_eq!(returns(&evaluate(&mut tab, &attack, &p).unwrap()), clean);
    }
    let mut dqn = dqn_gridworld_agent();
    let clean = returns(&evaluate(&mut dqn, &LoadedAttack::None, &p).unwrap());
    assert_eq!(returns(&evaluate(&mut dqn, &LoadedAttack::Fgm, &p).unwrap()), clean);
}

#[test]
fn tabular_attacks_need_a_tabular_agent() {
    let mut dqn = dqn_gridworld_agent();
    assert!(evaluate(&mut dqn, &LoadedAttack::Huang, &plan(vec![1.0], 1, 1)).is_err());
    let mut tab = optimal_agent();
    assert!(evaluate(&mut tab, &LoadedAttack::Fgm, &plan(vec![0.1], 1, 1)).is_err());
}

#[test]
fn demo_tables_agree_with_the_solvers() {
    let t = gridworld_demo(1.0, 1.0).unwrap();
    for s in 0..36 {
        assert!(t.optimal[s] <= t.huang[s] + 1e-9);
        assert!(t.optimal[s] <= t.pattanaik[s] + 1e-9);
    }
    for table in [&t.clean, &t.optimal, &t.huang, &t.pattanaik] {
        assert_eq!(table[0], 0.0);
        assert_eq!(table[35], 0.0);
    }
    // the optimal table is minus the adversary's value
    let grid = Gridworld::new(6, 6).unwrap();
    let mdp = grid.mdp();
    let (v, _) = value_iteration(&mdp, 1e-12).unwrap();
    let pi = advrl::mdp::greedy_uniform_policy(&mdp, &v, 1e-9).unwrap();
    let attack = build_attack_mdp(&mdp, &pi, 1.0, &grid, RewardMode::NegateAgent).unwrap();
    let solved = solve_optimal_attack(&attack, 1e-10).unwrap();
    for s in 0..36 {
        assert!((t.optimal[s] + solved.adversary_value[s]).abs() < 1e-8);
    }
}

#[test]
fn optimal_attack_loses_at_least_as_much_as_the_baselines() {
    let t = gridworld_demo(1.0, 1.0).unwrap();
    let p0 = Gridworld::new(6, 6).unwrap().mdp().initial_distribution().to_vec();
    let expect = |table: &[f64]| p0.iter().zip(table).map(|(p, v)| p * v).sum::<f64>();
    let floor = -24.0;
    let clean = expect(&t.clean);
    let loss = |table: &[f64]| performance_loss(clean, expect(table), floor).unwrap();
    assert!(loss(&t.optimal) >= loss(&t.huang) - 1e-9);
    assert!(loss(&t.optimal) >= loss(&t.pattanaik) - 1e-9);
    assert!(loss(&t.optimal) > 0.0);
}

#[test]
fn published_mountaincar_loss() {
    let loss = performance_loss(-103.4, -163.2, -200.0).unwrap();
    assert!((loss - 61.9).abs() < 0.05, "{loss}");
}

#[test]
fn report_writes_tables_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let mut agent = optimal_agent();
    let mut rows = evaluate(&mut agent, &LoadedAttack::None, &plan(vec![], 1, 4)).unwrap();
    rows.extend(evaluate(&mut agent, &LoadedAttack::Optimal, &plan(vec![1.0], 1, 4)).unwrap());
    let eval_csv = dir.path().join("eval.csv");
    write_records(&rows, std::fs::File::create(&eval_csv).unwrap()).unwrap();

    let run = dir.path().join("run0");
    let mut trained = match dqn_gridworld_agent() {
        LoadedAgent::Trained(a) => a,
        _ => unreachable!(),
    };
    trained.log.episodes = (0..30)
        .map(|k| advrl::agents::EpisodeStat {
            episode: k,
            end_step: k,
            ret: -7.0,
            length: 1,
            mean_loss: f64::NAN,
        })
        .collect();
    trained.save(&run).unwrap();

    let out = dir.path().join("report");
    let written = report(&[eval_csv, run.join("log.csv")], &out).unwrap();
    assert_eq!(written.len(), 3);
    let loss = std::fs::read_to_string(out.join("loss.tsv")).unwrap();
    assert_eq!(loss.lines().count(), 2, "{loss}");
    let curve = std::fs::read_to_string(out.join("curve_run0.tsv")).unwrap();
    for line in curve.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[1], cols[2]);
    }
    assert!(report(&[dir.path().join("absent.csv")], &out).is_err());
}

fn arb_record() -> impl Strategy<Value = EvalRecord> {
    (0usize..3, 0usize..3, -200.0f64..0.0).prop_map(|(attack, eps, ret)| EvalRecord {
        run_id: "p".into(),
        env: "mountaincar".into(),
        agent_algo: "dqn".into(),
        attack_algo: ["none", "fgm", "blackbox"][attack].into(),
        epsilon: if attack == 0 { 0.0 } else { [0.01, 0.05, 0.1][eps] },
        norm: Norm::L2,
        seed: 0,
        episode: 0,
        ret,
        length: 50,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summary_statistics_match_a_recomputation(
        mut rows in prop::collection::vec(arb_record(), 1..60),
        clean in -200.0f64..0.0,
    ) {
        rows.push(EvalRecord { attack_algo: "none".into(), epsilon: 0.0, ret: clean, ..rows[0].clone() });
        let summary = summarize(&rows).unwrap();
        let total: usize = summary.iter().map(|r| r.episodes).sum();
        prop_assert_eq!(total, rows.len());
        for s in &summary {
            let group: Vec<f64> = rows
                .iter()
                .filter(|r| r.attack_algo == s.attack_algo && r.epsilon == s.epsilon)
                .map(|r| r.ret)
                .collect();
            let n = group.len() as f64;
            let mean = group.iter().sum::<f64>() / n;
            prop_assert_eq!(s.mean, mean);
            prop_assert_eq!(s.std, (group.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt());
            prop_assert_eq!(s.min, group.iter().copied().fold(f64::INFINITY, f64::min));
            prop_assert_eq!(s.max, group.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            let base: Vec<f64> = rows.iter().filter(|r| r.attack_algo == "none").map(|r| r.ret).collect();
            let clean_mean = base.iter().sum::<f64>() / base.len() as f64;
            prop_assert_eq!(s.loss_pct, performance_loss(clean_mean, mean, -200.0));
        }
    }

    #[test]
    fn moving_average_of_a_constant_is_constant(c in -500.0f64..500.0, n in 0usize..200) {
        let xs = vec![c; n];
        let smooth = moving_average(&xs, SMOOTHING_WINDOW);
        prop_assert!(smooth.iter().all(|v| (v - c).abs() <= 1e-9 * c.abs().max(1.0)));
    }
}
