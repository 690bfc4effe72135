mod common;

use dvrp_core::cost::{evaluate, CostModel, Objective, PlanMethod};
use dvrp_core::environment::{Environment, Pose};
use dvrp_core::tour_opt::{optimize, optimize_exact, solve, Construction, SolverConfig, TourProblem};
use dvrp_core::workload::Task;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn problem<'a>(
    env: &'a Environment,
    start: Pose,
    tasks: &'a [Task],
    latents: &'a [f64],
    objective: Objective,
) -> TourProblem<'a> {
    TourProblem {
        env,
        start,
        tasks,
        latents,
        objective,
        s_bar: 1.0,
        v: 1.0,
    }
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_task_is_visited_once(
        seed in 0u64..10_000,
        n in 0usize..40,
        which in 0usize..4,
        nn in proptest::bool::ANY,
    ) {
        let env = Environment::unit_square();
        let mut rng = common::rng(seed);
        let tasks = common::scatter(&mut rng, n, 1.0, 1.0);
        let latents: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 3.0).collect();
        let objective = [
            Objective::p_norm(1.5, true),
            Objective::p_norm(2.0, true),
            Objective::PathLength,
            Objective::MaxWait { include_latent: true },
        ][which];
        let cfg = SolverConfig {
            construction: if nn { Construction::NearestNeighbor } else { Construction::CheapestInsertion },
            ..SolverConfig::default()
        };
        let plan = optimize(&problem(&env, Pose::point(0.5, 0.5), &tasks, &latents, objective), &cfg).unwrap();
        prop_assert_eq!(sorted(plan.visits.clone()), (0..n).collect::<Vec<_>>());
        prop_assert_eq!(plan.method, PlanMethod::Heuristic);
        plan.validate().unwrap();
    }
}

#[test]
fn local_search_never_loses_to_construction_or_random_orders() {
    let env = Environment::unit_square();
    let mut rng = common::rng(21);
    for _ in 0..50 {
        let n = rng.gen_range(5..30);
        let tasks = common::scatter(&mut rng, n, 1.0, 1.0);
        let latents: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 3.0).collect();
        let objective = Objective::p_norm(1.5, true);
        let start = Pose::point(0.5, 0.5);
        let p = problem(&env, start, &tasks, &latents, objective);
        let sol = solve(&p, &SolverConfig::default(), None).unwrap();
        assert!(sol.cost <= sol.construction_cost * (1.0 + 1e-12));
        assert!((evaluate(&sol.plan, &objective).unwrap() - sol.cost).abs() < 1e-9 * sol.cost);
        let locations: Vec<Pose> = tasks.iter().map(|t| t.location).collect();
        let model = CostModel::new(&env, &start, &locations, &latents, 1.0, 1.0, objective).unwrap();
        let mut order: Vec<usize> = (1..=n).collect();
        let mean_random: f64 = (0..20)
            .map(|_| {
                order.shuffle(&mut rng);
                model.evaluate_order(&order)
            })
            .sum::<f64>()
            / 20.0;
        assert!(sol.construction_cost <= mean_random, "n={n} construction {} random {mean_random}", sol.construction_cost);
    }
}

#[test]
fn oracle_gap_on_two_hundred_path_instances() {
    let env = Environment::unit_square();
    let cfg = SolverConfig::default();
    let mut gaps = Vec::new();
    for seed in 0..200 {
        let mut rng = common::rng(1000 + seed);
        let tasks = common::scatter(&mut rng, 8, 1.0, 1.0);
        let start = common::random_point(&mut rng, &env);
        let p = problem(&env, start, &tasks, &[0.0; 8], Objective::PathLength);
        let exact = evaluate(&optimize_exact(&p).unwrap(), &Objective::PathLength).unwrap();
        let heur = evaluate(&optimize(&p, &cfg).unwrap(), &Objective::PathLength).unwrap();
        assert!(heur >= exact * (1.0 - 1e-12), "seed {seed}: heuristic {heur} beat oracle {exact}");
        gaps.push(heur / exact);
    }
    gaps.sort_by(f64::total_cmp);
    let median = (gaps[99] + gaps[100]) / 2.0;
    assert!(median <= 1.05, "median gap {median}");
    assert!(gaps[199] <= 1.25, "max gap {}", gaps[199]);
}

#[test]
fn exact_solver_matches_brute_force() {
    let env = Environment::unit_square();
    let mut rng = common::rng(22);
    for _ in 0..30 {
        let n = rng.gen_range(1..=7);
        let tasks = common::scatter(&mut rng, n, 1.0, 1.0);
        let latents: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 3.0).collect();
        let objective = Objective::p_norm(1.5, true);
        let start = Pose::point(0.2, 0.9);
        let plan = optimize_exact(&problem(&env, start, &tasks, &latents, objective)).unwrap();
        let locations: Vec<Pose> = tasks.iter().map(|t| t.location).collect();
        let model = CostModel::new(&env, &start, &locations, &latents, 1.0, 1.0, objective).unwrap();
        let best = common::permutations(&(1..=n).collect::<Vec<_>>())
            .iter()
            .map(|o| model.evaluate_order(o))
            .fold(f64::INFINITY, f64::min);
        let got = evaluate(&plan, &objective).unwrap();
        assert!((got - best).abs() <= 1e-9 * best);
    }
}

// Optimal order under a given latent vector, if it is unique by a margin.
fn unique_argmin(model: &CostModel, n: usize) -> Option<Vec<usize>> {
    let mut ranked: Vec<(f64, Vec<usize>)> = common::permutations(&(1..=n).collect::<Vec<_>>())
        .into_iter()
        .map(|o| (model.evaluate_order(&o), o))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    (ranked[1].0 - ranked[0].0 > 1e-9 * ranked[0].0).then(|| ranked.swap_remove(0).1)
}

#[test]
fn raising_a_latent_never_pushes_the_task_later() {
    let env = Environment::unit_square();
    let mut rng = common::rng(23);
    let mut checked = 0;
    for case in 0..150 {
        let n = rng.gen_range(3..=7);
        let p = [1.5, 2.0, 3.0][case % 3];
        let objective = Objective::p_norm(p, true);
        let tasks = common::scatter(&mut rng, n, 1.0, 1.0);
        let locations: Vec<Pose> = tasks.iter().map(|t| t.location).collect();
        let start = common::random_point(&mut rng, &env);
        let mut latents: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0).collect();
        let model = CostModel::new(&env, &start, &locations, &latents, 1.0, 1.0, objective).unwrap();
        let Some(before) = unique_argmin(&model, n) else { continue };
        let k = rng.gen_range(0..n);
        latents[k] += rng.gen::<f64>() * 4.0;
        let raised = CostModel::new(&env, &start, &locations, &latents, 1.0, 1.0, objective).unwrap();
        let Some(after) = unique_argmin(&raised, n) else { continue };
        let node = k + 1;
        let pos = |o: &[usize]| o.iter().position(|&x| x == node).unwrap();
        assert!(pos(&after) <= pos(&before), "case {case}: {before:?} -> {after:?} for node {node}");
        checked += 1;
    }
    assert!(checked >= 100, "only {checked} instances checked");
}

#[test]
fn same_inputs_give_the_same_plan() {
    let env = Environment::unit_square();
    let mut rng = common::rng(24);
    let tasks = common::scatter(&mut rng, 60, 1.0, 1.0);
    let latents: Vec<f64> = (0..60).map(|_| rng.gen::<f64>() * 5.0).collect();
    let p = problem(&env, Pose::point(0.5, 0.5), &tasks, &latents, Objective::p_norm(1.5, true));
    for seed in [0, 7] {
        let cfg = SolverConfig {
            seed,
            ..SolverConfig::default()
        };
        assert_eq!(optimize(&p, &cfg).unwrap(), optimize(&p, &cfg).unwrap());
    }
}

#[test]
fn roadmap_instances_are_solved() {
    let (graph, _) = dvrp_core::environment::synthetic::DistrictCity::default().build().unwrap();
    let env: Environment = graph.into();
    let mut rng = common::rng(25);
    let tasks: Vec<Task> = (0..20)
        .map(|id| Task {
            id,
            location: common::random_point(&mut rng, &env),
            arrival_time: 0.0,
            service_duration: 600.0,
        })
        .collect();
    let p = TourProblem {
        env: &env,
        start: Pose::Node(0),
        tasks: &tasks,
        latents: &[0.0; 20],
        objective: Objective::p_norm(1.5, true),
        s_bar: 600.0,
        v: 1.0,
    };
    let plan = optimize(&p, &SolverConfig::default()).unwrap();
    assert_eq!(sorted(plan.visits), (0..20).collect::<Vec<_>>());
}
