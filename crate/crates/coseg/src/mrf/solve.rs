//! Move-making solvers sharing a non-increasing-energy contract, plus an
//! exhaustive oracle for small instances.

use super::maxflow::FlowGraph;
use super::{mrf_energy, Labeling, MrfProblem};
use crate::error::{CosegError, Result};

const IMPROVE_EPS: f64 = 1e-12;

fn local_cost(problem: &MrfProblem, labeling: &Labeling, node: usize, label: usize) -> f64 {
    let mut cost = problem.unary_at(node, label);
    for &q in problem.neighbors(node) {
        cost += problem.pairwise_weight
            * problem.pairwise_cost(label, labeling.assignment[q as usize] as usize);
    }
    cost
}

/// Iterated conditional modes: deterministic sweeps over the nodes in order,
/// switching a node to the cheapest label whenever that strictly lowers the
/// energy. Stops when a full sweep changes nothing.
pub fn solve_icm(problem: &MrfProblem, init: &Labeling) -> Labeling {
    let mut labeling = init.clone();
    let num_labels = problem.num_labels();
    loop {
        let mut changed = false;
        for p in 0..problem.num_nodes {
            let current = labeling.assignment[p] as usize;
            let mut best_label = current;
            let mut best_cost = local_cost(problem, &labeling, p, current);
            for l in 0..num_labels {
                if l == current {
                    continue;
                }
                let c = local_cost(problem, &labeling, p, l);
                if c + IMPROVE_EPS < best_cost {
                    best_cost = c;
                    best_label = l;
                }
            }
            if best_label != current {
                labeling.assignment[p] = best_label as u16;
                changed = true;
            }
        }
        if !changed {
            return labeling;
        }
    }
}

/// Optimal binary "switch to alpha" move via min-cut. Returns the candidate
/// labeling; the caller decides acceptance from the recomputed energy.
fn expansion_move(problem: &MrfProblem, current: &Labeling, alpha: usize) -> Labeling {
    let k = problem.num_nodes;
    let source = k;
    let sink = k + 1;
    let mut graph = FlowGraph::new(k + 2);
    let w = problem.pairwise_weight;

    // cost0[p]: keep current label; cost1[p]: switch to alpha. Pairwise terms
    // are folded in via the standard submodular reparametrization.
    let mut cost0 = vec![0.0f64; k];
    let mut cost1 = vec![0.0f64; k];
    for p in 0..k {
        cost0[p] = problem.unary_at(p, current.assignment[p] as usize);
        cost1[p] = problem.unary_at(p, alpha);
    }
    for e in &problem.edges {
        let p = e[0] as usize;
        let q = e[1] as usize;
        let lp = current.assignment[p] as usize;
        let lq = current.assignment[q] as usize;
        let a = w * problem.pairwise_cost(lp, lq); // keep, keep
        let b = w * problem.pairwise_cost(lp, alpha); // keep, switch
        let c = w * problem.pairwise_cost(alpha, lq); // switch, keep
        // d = f(alpha, alpha) = 0
        cost0[p] += a;
        cost1[p] += c;
        cost1[q] -= c;
        let m = (b + c - a).max(0.0); // metric => submodular
        if m > 0.0 {
            graph.add_edge(p, q, m, 0.0);
        }
    }

    for p in 0..k {
        // shift both sides so the terminal capacities are non-negative
        let lo = cost0[p].min(cost1[p]);
        let c0 = cost0[p] - lo;
        let c1 = cost1[p] - lo;
        if c1 > 0.0 {
            graph.add_edge(source, p, c1, 0.0);
        }
        if c0 > 0.0 {
            graph.add_edge(p, sink, c0, 0.0);
        }
    }

    graph.max_flow(source, sink);
    let source_side = graph.source_side(source);

    let mut next = current.clone();
    for p in 0..k {
        if !source_side[p] {
            next.assignment[p] = alpha as u16;
        }
    }
    next
}

/// Alpha-expansion: cycle over all labels, solving each expansion move
/// exactly via min-cut, until a full cycle yields no strict energy decrease.
/// Energy is non-increasing and never worse than the initial labeling.
pub fn solve_expansion(problem: &MrfProblem, init: &Labeling) -> Labeling {
    let mut current = init.clone();
    let mut current_energy = mrf_energy(problem, &current);
    loop {
        let mut improved = false;
        for alpha in 0..problem.num_labels() {
            let candidate = expansion_move(problem, &current, alpha);
            if candidate == current {
                continue;
            }
            let e = mrf_energy(problem, &candidate);
            if e + IMPROVE_EPS < current_energy {
                current = candidate;
                current_energy = e;
                improved = true;
            }
        }
        if !improved {
            return current;
        }
    }
}

/// Global optimum by enumeration; ties break toward the lexicographically
/// smallest assignment. Rejects instances with more than 10^7 labelings.
pub fn solve_exhaustive(problem: &MrfProblem) -> Result<Labeling> {
    let num_labels = problem.num_labels();
    let k = problem.num_nodes;
    let mut total: u64 = 1;
    for _ in 0..k {
        total = total.saturating_mul(num_labels as u64);
        if total > 10_000_000 {
            return Err(CosegError::TooLarge(format!(
                "{num_labels}^{k} labelings exceed the exhaustive-search limit"
            )));
        }
    }

    let mut assignment = vec![0u16; k];
    let mut best = Labeling {
        assignment: assignment.clone(),
    };
    let mut best_energy = mrf_energy(problem, &best);
    // odometer with the last node fastest enumerates assignments in
    // lexicographic order, so strict improvement keeps the smallest optimum
    'outer: loop {
        let mut pos = k;
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            if assignment[pos] as usize + 1 < num_labels {
                assignment[pos] += 1;
                for a in assignment.iter_mut().skip(pos + 1) {
                    *a = 0;
                }
                break;
            }
        }
        let candidate = Labeling {
            assignment: assignment.clone(),
        };
        let e = mrf_energy(problem, &candidate);
        if e < best_energy {
            best_energy = e;
            best = candidate;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrf::{build_label_set, grid_edges, DisplacementLabelSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, num_nodes: usize, num_labels: usize, weight: f64) -> MrfProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // random subset of a small grid's edges for structural variety
        let mut edges = grid_edges([num_nodes, 1, 1]);
        edges.retain(|_| rng.gen_bool(0.8));
        let labels = DisplacementLabelSet {
            labels: (0..num_labels)
                .map(|i| {
                    if i == 0 {
                        [0.0; 3]
                    } else {
                        [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0]
                    }
                })
                .collect(),
            radius_mm: 2.0,
            steps: 1,
        };
        let unary = (0..num_nodes * num_labels).map(|_| rng.gen::<f64>()).collect();
        MrfProblem::new(num_nodes, edges, unary, labels, weight)
    }

    #[test]
    fn icm_reaches_single_move_optimality() {
        for seed in 0..10 {
            let problem = random_problem(seed, 6, 4, 1.0);
            let init = Labeling::uniform(6, 0);
            let result = solve_icm(&problem, &init);
            let energy = mrf_energy(&problem, &result);
            assert!(energy <= mrf_energy(&problem, &init) + 1e-12);
            // no single-node change lowers the energy
            for p in 0..problem.num_nodes {
                for l in 0..problem.num_labels() {
                    let mut probe = result.clone();
                    probe.assignment[p] = l as u16;
                    assert!(mrf_energy(&problem, &probe) + IMPROVE_EPS >= energy);
                }
            }
        }
    }

    #[test]
    fn expansion_keeps_init_with_zero_unaries() {
        let labels = build_label_set([10.0; 3], 1, 1.0);
        let nl = labels.len();
        let problem = MrfProblem::new(4, grid_edges([4, 1, 1]), vec![0.0; 4 * nl], labels, 3.0);
        let init = Labeling::uniform(4, 0);
        let result = solve_expansion(&problem, &init);
        assert_eq!(result, init);
    }

    #[test]
    fn expansion_finds_consistent_unary_minimum() {
        // unary minimum at label 2 for every node: zero pairwise at consensus,
        // so that labeling is the global optimum.
        let labels = build_label_set([10.0; 3], 1, 1.0);
        let nl = labels.len();
        let num_nodes = 5;
        let mut unary = vec![1.0f64; num_nodes * nl];
        for p in 0..num_nodes {
            unary[p * nl + 2] = 0.0;
        }
        let problem = MrfProblem::new(num_nodes, grid_edges([5, 1, 1]), unary, labels, 5.0);
        let result = solve_expansion(&problem, &Labeling::uniform(num_nodes, 0));
        assert!(result.assignment.iter().all(|&l| l == 2));
    }

    #[test]
    fn expansion_within_guarantee_of_exhaustive() {
        let mut optimal_hits = 0usize;
        let trials = 25;
        for seed in 0..trials {
            let problem = random_problem(200 + seed, 5, 4, [0.0, 1.0, 5.0][seed as usize % 3]);
            let init = Labeling::uniform(5, 0);
            let exp = solve_expansion(&problem, &init);
            let opt = solve_exhaustive(&problem).unwrap();
            let e_exp = mrf_energy(&problem, &exp);
            let e_opt = mrf_energy(&problem, &opt);
            assert!(e_exp <= 2.0 * e_opt + 1e-9, "seed {seed}: {e_exp} vs {e_opt}");
            assert!(e_exp + 1e-12 >= e_opt);
            if (e_exp - e_opt).abs() <= 1e-9 {
                optimal_hits += 1;
            }
        }
        assert!(optimal_hits * 10 >= trials as usize * 8, "{optimal_hits}/{trials}");
    }

    #[test]
    fn exhaustive_breaks_ties_lexicographically() {
        // all-equal unaries and zero weight: every labeling is optimal, the
        // all-zero assignment is the lexicographically smallest.
        let labels = build_label_set([10.0; 3], 1, 1.0);
        let nl = labels.len();
        let problem = MrfProblem::new(3, vec![], vec![0.5; 3 * nl], labels, 0.0);
        let best = solve_exhaustive(&problem).unwrap();
        assert_eq!(best.assignment, vec![0, 0, 0]);
    }

    #[test]
    fn exhaustive_rejects_large_instances() {
        let labels = build_label_set([10.0; 3], 4, 1.0); // 25 labels
        let nl = labels.len();
        let problem = MrfProblem::new(8, vec![], vec![0.0; 8 * nl], labels, 0.0);
        assert!(matches!(
            solve_exhaustive(&problem),
            Err(CosegError::TooLarge(_))
        ));
    }

    #[test]
    fn solvers_are_deterministic() {
        let problem = random_problem(77, 6, 4, 1.0);
        let init = Labeling::uniform(6, 0);
        assert_eq!(solve_icm(&problem, &init), solve_icm(&problem, &init));
        assert_eq!(
            solve_expansion(&problem, &init),
            solve_expansion(&problem, &init)
        );
    }
}
