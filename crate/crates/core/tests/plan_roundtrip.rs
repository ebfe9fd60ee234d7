mod common;

use std::fs;

use common::{context, data_file, distinct_demands, random_topology};
use eonplan::baselines::Planner;
use eonplan::harness::{self, run_planner, RunConfig};
use eonplan::plan::{validate_plan, PlanDoc};
use eonplan::qlearn::QLearnConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PLANNERS: [Planner; 5] = [Planner::Sp, Planner::DGh, Planner::AGh, Planner::IGh, Planner::Qag];

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn every_planner_writes_a_valid_plan(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random_topology(&mut rng, 5, 0.3, (100.0, 2000.0), 12);
        let demands = distinct_demands(&mut rng, 5, 9, (5, 450));
        let ctx = context(topo);
        let q = QLearnConfig { total_episodes: 60, seed, ..QLearnConfig::default() };
        for planner in PLANNERS {
            let (result, _) = run_planner(planner, &ctx, &demands, &q, 0, |_, _| {}).unwrap();
            let Some(result) = result else { continue };
            let doc = PlanDoc::from_result(planner.name(), &result, &demands);
            prop_assert_eq!(validate_plan(&doc, ctx.clone()), Vec::<String>::new(), "{}", planner);
            let back = PlanDoc::from_json_str(&doc.to_json_string()).unwrap();
            prop_assert_eq!(&back, &doc);
            if planner != Planner::Sp {
                let replay = harness::replay(&doc, &ctx);
                prop_assert_eq!(replay.total_pc_w, doc.total_pc_w);
                prop_assert_eq!(replay.success, doc.success);
            }
        }
    }
}

#[test]
fn tampered_plans_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let topo = random_topology(&mut rng, 5, 0.3, (100.0, 1500.0), 16);
    let demands = distinct_demands(&mut rng, 5, 6, (5, 200));
    let ctx = context(topo);
    let (result, _) = run_planner(Planner::DGh, &ctx, &demands, &QLearnConfig::default(), 0, |_, _| {}).unwrap();
    let doc = PlanDoc::from_result("d-gh", &result.unwrap(), &demands);
    assert!(validate_plan(&doc, ctx.clone()).is_empty());

    let mut bad = doc.clone();
    bad.total_pc_w += 1.0;
    assert!(!validate_plan(&bad, ctx.clone()).is_empty());
    let mut bad = doc.clone();
    bad.order.push(bad.order[0]);
    assert!(!validate_plan(&bad, ctx.clone()).is_empty());
    let mut bad = doc.clone();
    bad.ledger.amp_w *= 2.0;
    assert!(!validate_plan(&bad, ctx.clone()).is_empty());
}

#[test]
fn harness_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        topology: data_file("chain3.json"),
        atd_gbps: Some(40.0),
        planner: Planner::Qag,
        replicas: 2,
        output: dir.path().to_path_buf(),
        checkpoint_every: 10,
        qlearn: QLearnConfig { total_episodes: 25, ..QLearnConfig::default() },
        ..RunConfig::default()
    };
    let report = harness::run(&cfg).unwrap();
    assert_eq!(report.replicas.len(), 2);
    for name in ["report.csv", "timing.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let ctx = harness::load_context(&cfg).unwrap();
    for r in 0..2 {
        let rd = dir.path().join(format!("replica_{r}"));
        for name in [
            "plan.json",
            "pc_breakdown.csv",
            "training_log.csv",
            "success_blocks.csv",
            "seed_replays.csv",
            "qtable.csv",
        ] {
            assert!(rd.join(name).is_file(), "replica {r} lacks {name}");
        }
        let doc = PlanDoc::load(&rd.join("plan.json")).unwrap();
        assert!(validate_plan(&doc, ctx.clone()).is_empty());
        let log = fs::read_to_string(rd.join("training_log.csv")).unwrap();
        assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 1 + 25);
    }
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("# traffic_seed=1,learn_seed=1\n"));
}
