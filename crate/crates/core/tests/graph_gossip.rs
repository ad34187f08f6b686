use dualsmooth::graph::{
    build_graph, laplacian, spectral_constants, validate_gossip, GossipOperator, Graph, GraphKind,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Cyclic Jacobi rotations; independent of the library's eigen solver.
fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn oracle_constants(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = jacobi_eigenvalues(m);
    let l = *eig.last().unwrap();
    let mu = eig
        .iter()
        .copied()
        .filter(|&v| v > 1e-10 * l)
        .fold(f64::INFINITY, f64::min);
    (l, mu)
}

fn all_kinds() -> Vec<GraphKind> {
    vec![
        GraphKind::Path,
        GraphKind::Ring,
        GraphKind::Star,
        GraphKind::Complete,
        GraphKind::ErdosRenyi { p: 0.4, seed: 3 },
    ]
}

#[test]
fn spectral_constants_match_jacobi_oracle() {
    for kind in all_kinds() {
        for n in 2..=9 {
            let op = laplacian(&build_graph(kind, n).unwrap()).unwrap();
            let (l, mu) = oracle_constants(op.matrix());
            let s = op.spectral();
            assert!((s.l - l).abs() <= 1e-9 * l, "{kind} n={n}: {} vs {l}", s.l);
            assert!(
                (s.mu - mu).abs() <= 1e-9 * l,
                "{kind} n={n}: {} vs {mu}",
                s.mu
            );
            assert!(s.kappa >= 1.0);
        }
    }
}

#[test]
fn desk_spectra() {
    let cases = [
        (GraphKind::Path, 3, (3.0, 1.0, 3.0)),
        (GraphKind::Complete, 2, (2.0, 2.0, 1.0)),
        (GraphKind::Ring, 4, (4.0, 2.0, 2.0)),
    ];
    for (kind, n, (l, mu, kappa)) in cases {
        let op = laplacian(&build_graph(kind, n).unwrap()).unwrap();
        let (ol, omu) = oracle_constants(op.matrix());
        assert!((ol - l).abs() < 1e-12 && (omu - mu).abs() < 1e-12);
        let s = op.spectral();
        assert!((s.l - l).abs() < 1e-12);
        assert!((s.mu - mu).abs() < 1e-12);
        assert!((s.kappa - kappa).abs() < 1e-12);
    }
}

#[test]
fn eigenvalues_sum_to_trace() {
    for kind in all_kinds() {
        let op = laplacian(&build_graph(kind, 7).unwrap()).unwrap();
        let sum: f64 = jacobi_eigenvalues(op.matrix()).iter().sum();
        let trace = op.matrix().trace();
        assert!((sum - trace).abs() <= 1e-9 * trace);
    }
}

#[test]
fn generated_laplacians_validate() {
    for kind in all_kinds() {
        for n in 2..=8 {
            let g = build_graph(kind, n).unwrap();
            let op = laplacian(&g).unwrap();
            assert!(validate_gossip(op.matrix(), &g).is_empty());
            for (i, row) in op.matrix().row_iter().enumerate() {
                assert!(row.sum().abs() < 1e-15, "row {i}");
            }
        }
    }
}

#[test]
fn complete_graph_is_perfectly_conditioned() {
    for n in 2..=6 {
        let op = laplacian(&build_graph(GraphKind::Complete, n).unwrap()).unwrap();
        assert!((op.kappa_w() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn invalid_matrices_are_rejected() {
    let p3 = build_graph(GraphKind::Path, 3).unwrap();
    assert!(GossipOperator::new(DMatrix::identity(3, 3), p3.clone()).is_err());
    let k3 = laplacian(&build_graph(GraphKind::Complete, 3).unwrap()).unwrap();
    assert!(GossipOperator::new(k3.matrix().clone(), p3).is_err());
    assert!(spectral_constants(&DMatrix::zeros(3, 3)).is_err());
}

fn kron_lift(w: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    w.kronecker(&DMatrix::<f64>::identity(d, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lift_matches_explicit_kronecker(
        kind in prop_oneof![
            Just(GraphKind::Path),
            Just(GraphKind::Ring),
            Just(GraphKind::Star),
            Just(GraphKind::Complete),
        ],
        n in 2usize..=6,
        d in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let op = laplacian(&build_graph(kind, n).unwrap()).unwrap();
        let x = DVector::from_fn(n * d, |i, _| ((seed.wrapping_add(i as u64) % 1000) as f64 / 250.0 - 2.0).sin());
        let fast = op.lift_apply(&x, d).unwrap();
        let slow = kron_lift(op.matrix(), d) * &x;
        let scale = slow.norm().max(1e-300);
        prop_assert!((fast - slow).norm() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn edge_list_round_trips(n in 2usize..=10, p in 0.1f64..0.9, seed in any::<u64>()) {
        let g = build_graph(GraphKind::ErdosRenyi { p, seed }, n).unwrap();
        let back = Graph::from_edge_list(&g.to_edge_list()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn erdos_renyi_is_connected_and_valid(n in 2usize..=10, p in 0.05f64..0.9, seed in any::<u64>()) {
        let g = build_graph(GraphKind::ErdosRenyi { p, seed }, n).unwrap();
        let op = laplacian(&g).unwrap();
        prop_assert!(validate_gossip(op.matrix(), &g).is_empty());
        prop_assert!(op.kappa_w() >= 1.0);
    }
}
