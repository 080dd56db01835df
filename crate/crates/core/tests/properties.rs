//! Property tests for the invariants of each module.

use bicl::branching::{select_pair, DECIDED_TOL};
use bicl::cuts::{adjoint_b, apply_b, separate, Cut, CutPool, SeparationConfig};
use bicl::numkernel::{lambda_max, lambda_min, neg_eig_sum, project_psd, sym_eig, SymMatrix};
use bicl::oracle::brute_force;
use bicl::relaxation::{build_root, lift_biclustering, solve_dnn, Side, SolveOptions};
use bicl::rounding::{match_clusters, round_solution};
use bicl::safebound::EIG_BOUND;
use bicl::{density, generate_planted, objective, solve, validate, Biclustering, DataMatrix, PlantedSpec, SolverParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(n: usize, m: usize, lo: f64, hi: f64) -> impl Strategy<Value = DataMatrix> {
    prop::collection::vec(lo..hi, n * m).prop_map(move |v| DataMatrix::from_row_major(n, m, &v).unwrap())
}

/// Labels in `0..k` using every label, built from a permutation prefix and
/// free tail so that the strategy never rejects.
fn labels(len: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    (Just((0..len).collect::<Vec<usize>>()).prop_shuffle(), prop::collection::vec(0..k, len)).prop_map(move |(perm, free)| {
        let mut out = free;
        for (c, &pos) in perm.iter().take(k).enumerate() {
            out[pos] = c;
        }
        out
    })
}

fn biclustering(n: usize, m: usize, k: usize) -> impl Strategy<Value = Biclustering> {
    (labels(n, k), labels(m, k)).prop_map(move |(r, c)| Biclustering::new(k, r, c))
}

/// `(A, b)` with `A` in `[lo, hi)`, sizes in `sizes`, `2 <= k <= min(n, m)`.
fn instance_with_solution(
    sizes: std::ops::RangeInclusive<usize>,
    max_k: usize,
) -> impl Strategy<Value = (DataMatrix, Biclustering)> {
    (sizes.clone(), sizes)
        .prop_flat_map(move |(n, m)| (Just(n), Just(m), 2..=n.min(m).min(max_k)))
        .prop_flat_map(|(n, m, k)| (matrix(n, m, 0.0, 1.0), biclustering(n, m, k)))
}

fn small_instance(max_k: usize) -> impl Strategy<Value = (DataMatrix, usize)> {
    (3usize..=5, 3usize..=5)
        .prop_flat_map(move |(n, m)| (matrix(n, m, 0.0, 1.0), 2..=n.min(m).min(max_k)))
}

fn sym(n: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, n * n).prop_map(move |v| {
        let g = DMatrix::from_vec(n, n, v);
        (&g + g.transpose()) * 0.5
    })
}

fn permute_rows(a: &DataMatrix, p: &[usize]) -> DataMatrix {
    DataMatrix::new(DMatrix::from_fn(a.n(), a.m(), |i, j| a.get(p[i], j))).unwrap()
}

fn permute_cols(a: &DataMatrix, p: &[usize]) -> DataMatrix {
    DataMatrix::new(DMatrix::from_fn(a.n(), a.m(), |i, j| a.get(i, p[j]))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_is_homogeneous(a in matrix(4, 5, -1.0, 1.0), c in -3.0f64..3.0,
                              rows in prop::sample::subsequence((0..4).collect::<Vec<_>>(), 1..=4),
                              cols in prop::sample::subsequence((0..5).collect::<Vec<_>>(), 1..=5)) {
        let scaled = a.scaled(c).unwrap();
        let lhs = density(&scaled, &rows, &cols).unwrap();
        let rhs = c * density(&a, &rows, &cols).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn objective_ignores_label_names((a, b) in instance_with_solution(2..=7, 4), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..b.k).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let renamed = Biclustering::new(
            b.k,
            b.row_labels.iter().map(|&l| perm[l]).collect(),
            b.col_labels.iter().map(|&l| perm[l]).collect(),
        );
        let x = objective(&a, &b).unwrap();
        let y = objective(&a, &renamed).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
    }

    #[test]
    fn generator_is_pure(n in 2usize..12, m in 2usize..12, sigma in 0.0f64..0.5, seed in any::<u64>()) {
        let k = 2;
        let spec = PlantedSpec { n, m, k, sigma, seed };
        let (a1, t1) = generate_planted(&spec).unwrap();
        let (a2, t2) = generate_planted(&spec).unwrap();
        prop_assert_eq!(a1, a2);
        prop_assert!(validate(&t1, n, m, k).is_ok());
        prop_assert_eq!(t1, t2);
    }

    #[test]
    fn eigenvalues_ascend_and_sum_to_trace(s in sym(6, 5.0)) {
        let s = SymMatrix::new(s).unwrap();
        let e = sym_eig(&s).unwrap();
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let norm = s.as_matrix().amax();
        prop_assert!((e.values.iter().sum::<f64>() - s.trace()).abs() <= 1e-8 * 6.0 * (1.0 + norm));
        // reconstruction
        let rebuilt = &e.vectors * DMatrix::from_diagonal(&DVector::from_vec(e.values.clone())) * e.vectors.transpose();
        prop_assert!((rebuilt - s.as_matrix()).amax() <= 1e-9 * (1.0 + norm));
    }

    #[test]
    fn negative_and_positive_parts_split_the_trace(s in sym(7, 3.0)) {
        let s = SymMatrix::new(s).unwrap();
        let neg = neg_eig_sum(&s).unwrap();
        let pos = project_psd(&s).unwrap().trace();
        prop_assert!(neg <= 0.0);
        prop_assert!((neg + pos - s.trace()).abs() <= 1e-9 * (1.0 + s.as_matrix().amax()));
    }

    #[test]
    fn psd_projection_is_psd_and_idempotent(s in sym(5, 4.0)) {
        let p = project_psd(&SymMatrix::new(s).unwrap()).unwrap();
        prop_assert!(lambda_min(&p) >= -1e-10);
        let again = project_psd(&p).unwrap();
        prop_assert!((again.as_matrix() - p.as_matrix()).amax() <= 1e-10);
    }

    #[test]
    fn lifted_solution_is_feasible_and_exact((a, b) in instance_with_solution(2..=8, 4)) {
        let z = lift_biclustering(&b);
        let node = build_root(&a, b.k).unwrap();
        let residual = node.apply_operator_a(&z).unwrap() - node.b();
        prop_assert!(residual.amax() <= 1e-10);
        prop_assert!(z.iter().all(|&x| x >= 0.0));
        prop_assert!(lambda_min(&SymMatrix::symmetrized(&z).unwrap()) >= -1e-10);
        prop_assert!(lambda_max(&SymMatrix::symmetrized(&z).unwrap()) <= EIG_BOUND + 1e-10);
        let value = objective(&a, &b).unwrap();
        prop_assert!((node.objective_of(&z) - value).abs() <= 1e-10 * (1.0 + value.abs()));
    }

    #[test]
    fn operator_adjoints_agree(n in 2usize..7, m in 2usize..7, seed in any::<u64>(),
                               z in sym(12, 1.0), lambda in prop::collection::vec(-2.0f64..2.0, 14)) {
        let a = DataMatrix::from_row_major(n, m, &vec![1.0; n * m]).unwrap();
        let node = build_root(&a, 2).unwrap();
        let dim = n + m;
        let z = z.view((0, 0), (dim, dim)).into_owned();
        let lam = &lambda[..node.lambda_len()];
        let lhs: f64 = node.apply_operator_a(&z).unwrap().iter().zip(lam).map(|(x, y)| x * y).sum();
        let rhs = node.adjoint_operator_a(lam).unwrap().component_mul(&z).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));

        // the same for the cut operator, on a few pseudo-random cuts
        let mut cuts = Vec::new();
        let mut s = seed;
        for _ in 0..6 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let side = if s >> 63 == 0 { Side::U } else { Side::V };
            let size = if side == Side::U { n } else { m };
            let x = (s >> 10) as usize % size;
            let y = (x + 1 + (s >> 20) as usize % (size - 1)) % size;
            cuts.push(Cut::pair(side, x, y));
            if size >= 3 {
                let w = (0..size).find(|&w| w != x && w != y).unwrap();
                cuts.push(Cut::triangle(side, x, y.min(w), y.max(w)));
            }
        }
        let t: Vec<f64> = (0..cuts.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let lhs: f64 = apply_b(&z, n, &cuts).iter().zip(&t).map(|(x, y)| x * y).sum();
        let rhs = adjoint_b(dim, n, &cuts, &t).component_mul(&z).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn eigen_bound_inequality_spot_check(s in sym(5, 3.0), g in prop::collection::vec(-1.0f64..1.0, 25)) {
        // X = G G^T rescaled so that its largest eigenvalue is at most 2
        let g = DMatrix::from_vec(5, 5, g);
        let mut x = &g * g.transpose();
        let top = lambda_max(&SymMatrix::symmetrized(&x).unwrap());
        if top > EIG_BOUND {
            x *= EIG_BOUND / top;
        }
        let s = SymMatrix::new(s).unwrap();
        let lhs = s.as_matrix().component_mul(&x).sum();
        let rhs = EIG_BOUND * neg_eig_sum(&s).unwrap();
        prop_assert!(lhs >= rhs - 1e-10);
    }

    #[test]
    fn separation_never_repeats_pooled_cuts(z in sym(9, 1.0), seed in any::<u64>()) {
        let nu = 4;
        let cfg = SeparationConfig { max_sample: 60, max_add: 30, viol_tol: 1e-6 };
        let first = separate(&z, nu, &CutPool::new(), &cfg, seed);
        let pool = CutPool::from_cuts(first.iter().copied());
        let second = separate(&z, nu, &pool, &cfg, seed.wrapping_add(1));
        prop_assert!(second.iter().all(|c| !pool.contains(c)));
        let again = separate(&z, nu, &CutPool::new(), &cfg, seed);
        prop_assert_eq!(first, again);
    }

    #[test]
    fn cluster_weights_match_matrix_form((a, b) in instance_with_solution(2..=8, 4)) {
        // one-hot matrices give block sums X_U^T A X_V
        let k = b.k;
        let xu = DMatrix::from_fn(a.n(), k, |i, c| f64::from(u8::from(b.row_labels[i] == c)));
        let xv = DMatrix::from_fn(a.m(), k, |j, c| f64::from(u8::from(b.col_labels[j] == c)));
        let sums = xu.transpose() * a.as_matrix() * &xv;
        for i in 0..k {
            for j in 0..k {
                let rows = b.rows_of(i);
                let cols = b.cols_of(j);
                let d = density(&a, &rows, &cols).unwrap();
                let matrix_form = sums[(i, j)] / ((rows.len() * cols.len()) as f64).sqrt();
                prop_assert!((d - matrix_form).abs() <= 1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn psd_projection_is_nearest(s in sym(4, 3.0), gs in prop::collection::vec(prop::collection::vec(-1.5f64..1.5, 16), 40)) {
        let s = SymMatrix::new(s).unwrap();
        let p = project_psd(&s).unwrap();
        let best = (s.as_matrix() - p.as_matrix()).norm();
        for g in gs {
            let g = DMatrix::from_vec(4, 4, g);
            let other = &g * g.transpose();
            prop_assert!(best <= (s.as_matrix() - other).norm() + 1e-12);
        }
    }

    #[test]
    fn rounding_output_is_valid_and_recomputed((a, b) in instance_with_solution(3..=8, 4), noise in prop::collection::vec(0.0f64..0.05, 256), seed in any::<u64>()) {
        let mut z = lift_biclustering(&b);
        let dim = z.nrows();
        for r in 0..dim {
            for c in 0..dim {
                z[(r, c)] += noise[(r * dim + c) % noise.len()];
            }
        }
        let z = (&z + z.transpose()) * 0.5;
        let (out, lb) = round_solution(&a, b.k, &z, seed).unwrap();
        prop_assert!(validate(&out, a.n(), a.m(), b.k).is_ok());
        prop_assert_eq!(lb, objective(&a, &out).unwrap());
    }

    #[test]
    fn matching_ignores_label_names((a, b) in instance_with_solution(3..=8, 4), shift in 1usize..4) {
        let k = b.k;
        let rot = |l: &Vec<usize>| l.iter().map(|&x| (x + shift) % k).collect::<Vec<_>>();
        let (_, v1) = match_clusters(&a, k, &b.row_labels, &b.col_labels).unwrap();
        let (_, v2) = match_clusters(&a, k, &rot(&b.row_labels), &b.col_labels).unwrap();
        let (_, v3) = match_clusters(&a, k, &b.row_labels, &rot(&b.col_labels)).unwrap();
        prop_assert!((v1 - v2).abs() <= 1e-12 * (1.0 + v1.abs()));
        prop_assert!((v1 - v3).abs() <= 1e-12 * (1.0 + v1.abs()));
        // matching never does worse than the given pairing
        prop_assert!(v1 >= objective(&a, &b).unwrap() - 1e-12);
    }

    #[test]
    fn oracle_ignores_row_and_column_order((a, k) in small_instance(3), rp in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
                                           cp in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let rp: Vec<usize> = rp.into_iter().filter(|&i| i < a.n()).collect();
        let cp: Vec<usize> = cp.into_iter().filter(|&j| j < a.m()).collect();
        let (_, v) = brute_force(&a, k).unwrap();
        let (_, w) = brute_force(&permute_cols(&permute_rows(&a, &rp), &cp), k).unwrap();
        prop_assert!((v - w).abs() <= 1e-12 * (1.0 + v.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn root_bound_dominates_oracle_at_any_accuracy((a, k) in small_instance(3)) {
        let (_, opt) = brute_force(&a, k).unwrap();
        let node = build_root(&a, k).unwrap();
        for tol in [1e-2, 1e-3, 1e-4] {
            let sol = solve_dnn(&node, None, &SolveOptions { tol, ..SolveOptions::default() }).unwrap();
            prop_assert!(sol.bound.value >= opt - 1e-9, "tol {}: {} < {}", tol, sol.bound.value, opt);
            let top = lambda_max(&SymMatrix::symmetrized(&node.expand(&sol.zbar).unwrap()).unwrap());
            prop_assert!(top <= EIG_BOUND + 1e-6);
        }
    }

    #[test]
    fn cuts_do_not_raise_the_bound((a, k) in small_instance(3), seed in any::<u64>()) {
        let mut node = build_root(&a, k).unwrap();
        let opts = SolveOptions::default();
        let before = solve_dnn(&node, None, &opts).unwrap();
        let found = separate(&before.zbar, node.nu(), &node.cuts, &SeparationConfig::default(), seed);
        node.cuts.extend(found);
        let after = solve_dnn(&node, Some(&before), &opts).unwrap();
        prop_assert!(after.bound.value <= before.bound.value + 2.0 * opts.tol * before.scale());
    }

    #[test]
    fn solver_is_deterministic_and_complete((a, k) in small_instance(3), seed in any::<u64>()) {
        let params = SolverParams { seed, ..SolverParams::default() };
        let r1 = solve(&a, k, &params).unwrap();
        let r2 = solve(&a, k, &params).unwrap();
        prop_assert_eq!(&r1.best, &r2.best);
        prop_assert_eq!(r1.lb, r2.lb);
        prop_assert_eq!(r1.ub, r2.ub);
        prop_assert_eq!(&r1.trace, &r2.trace);
        let (_, opt) = brute_force(&a, k).unwrap();
        prop_assert!((r1.lb - opt).abs() <= 1e-6 * opt.abs());

        // a pruned node's bound was within eps of the incumbent it was pruned against
        for rec in &r1.trace {
            if rec.outcome == bicl::driver::NodeOutcome::Pruned {
                let incumbent = rec.rounds.last().unwrap().lb;
                prop_assert!(rec.ub - incumbent < params.eps * rec.ub.abs() + 1e-12);
            }
        }
    }

    #[test]
    fn interrupted_runs_bracket_the_optimum((a, k) in small_instance(3), limit in 1usize..4) {
        let params = SolverParams { node_limit: Some(limit), max_cp_rounds: 0, ..SolverParams::default() };
        let r = solve(&a, k, &params).unwrap();
        let (_, opt) = brute_force(&a, k).unwrap();
        prop_assert!(r.lb <= opt + 1e-9);
        prop_assert!(r.ub >= opt - 1e-9);
        prop_assert!(r.lb <= r.ub);
    }

    #[test]
    fn branching_choice_is_deterministic((a, k) in small_instance(3)) {
        let node = build_root(&a, k).unwrap();
        let sol = solve_dnn(&node, None, &SolveOptions::default()).unwrap();
        prop_assert_eq!(select_pair(&node, &sol.zbar, DECIDED_TOL), select_pair(&node, &sol.zbar, DECIDED_TOL));
    }
}

/// Without noise the planted blocks are optimal only on average: a small
/// block whose uniform draws come out low can lose to a regrouping, which
/// the square-root size weighting makes worthwhile. Reports the losses.
#[test]
fn planted_truth_usually_optimal_without_noise() {
    let (mut lost, mut total) = (0usize, 0usize);
    let mut worst = 0.0f64;
    for seed in 0..40u64 {
        for (n, m) in [(3, 3), (4, 3), (5, 4), (5, 5)] {
            let (a, truth) = generate_planted(&PlantedSpec { n, m, k: 2, sigma: 0.0, seed }).unwrap();
            let (_, opt) = brute_force(&a, 2).unwrap();
            let t = objective(&a, &truth).unwrap();
            total += 1;
            if t < opt - 1e-9 {
                lost += 1;
                worst = worst.max((opt - t) / opt);
            }
        }
    }
    println!("planted truth beaten on {lost}/{total} noise-free instances, worst by {:.2}%", 100.0 * worst);
    assert!(2 * lost < total);
}

#[test]
fn global_bounds_are_monotone_over_the_run() {
    let spec = PlantedSpec { n: 10, m: 10, k: 4, sigma: 0.3, seed: 20_240_714 };
    let (a, _) = generate_planted(&spec).unwrap();
    let r = solve(&a, 4, &SolverParams::default()).unwrap();
    assert!(r.nodes > 1);
    let mut lb = f64::NEG_INFINITY;
    for rec in &r.trace {
        for round in &rec.rounds {
            assert!(round.lb >= lb);
            lb = round.lb;
        }
    }
    assert!(r.lb >= lb);
    assert!(r.ub >= r.lb);
}
