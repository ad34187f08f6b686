use dualsmooth::affine::AffineConstrainedProblem;
use dualsmooth::atoms::{atom_huber, atom_l1, atom_sq_l2, FeasibleSet};
use dualsmooth::conjugate::brute_force_conjugate;
use dualsmooth::duality::{
    constraint_constants, double_dual_basis_pursuit, double_dual_mse, dualize_consensus,
    dualize_coupled, recover_primal_coupled,
};
use dualsmooth::graph::{build_graph, laplacian, GossipOperator, GraphKind};
use dualsmooth::problem::{ConsensusProblem, CoupledProblem};
use dualsmooth::Error;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gossip(kind: GraphKind, n: usize) -> GossipOperator {
    laplacian(&build_graph(kind, n).unwrap()).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.random_range(-scale..scale))
}

fn coupled_instance(seed: u64, n: usize, p: usize, d: usize, lambda: f64) -> CoupledProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..n).map(|_| random_matrix(&mut rng, p, d)).collect();
    let b = (0..n).map(|_| random_vec(&mut rng, p, 1.0)).collect();
    CoupledProblem::new(
        vec![atom_l1(); n],
        a,
        b,
        vec![FeasibleSet::FullSpace; n],
        lambda,
        gossip(GraphKind::Path, n),
    )
    .unwrap()
}

fn consensus_instance(seed: u64, n: usize, rows: usize, d: usize, lambda: f64) -> ConsensusProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..n).map(|_| random_matrix(&mut rng, rows, d)).collect();
    let b = (0..n).map(|_| random_vec(&mut rng, rows, 1.0)).collect();
    ConsensusProblem::new(
        vec![atom_l1(); n],
        a,
        b,
        FeasibleSet::FullSpace,
        lambda,
        gossip(GraphKind::Ring, n),
    )
    .unwrap()
}

#[test]
fn constraint_constants_examples() {
    let c = constraint_constants(&vec![DMatrix::identity(2, 2); 4]).unwrap();
    assert_eq!((c.l, c.mu, c.kappa), (1.0, 1.0, 1.0));
    let c = constraint_constants(&[dmatrix![2.0, 0.0; 0.0, 0.0]]).unwrap();
    assert!(
        (c.l - 4.0).abs() < 1e-12 && (c.mu - 4.0).abs() < 1e-12 && (c.kappa - 1.0).abs() < 1e-12
    );
    let c = constraint_constants(&[dmatrix![1.0, 0.0], dmatrix![0.0, 1.0]]).unwrap();
    assert!((c.l - 1.0).abs() < 1e-12 && (c.mu - 1.0).abs() < 1e-12);
    assert_eq!(
        constraint_constants(&[DMatrix::zeros(2, 3)]),
        Err(Error::NoPositiveEigenvalue)
    );
    assert!(matches!(
        constraint_constants(&[DMatrix::zeros(2, 3), DMatrix::zeros(3, 3)]),
        Err(Error::DimensionMismatch { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constraint_constants_are_order_free(seed in any::<u64>(), n in 1usize..5, p in 1usize..4, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<_> = (0..n).map(|_| random_matrix(&mut rng, p, d)).collect();
        let c = constraint_constants(&a).unwrap();
        prop_assert!(c.kappa >= 1.0 - 1e-12);
        let mut rev = a.clone();
        rev.reverse();
        let r = constraint_constants(&rev).unwrap();
        prop_assert!((c.l - r.l).abs() <= 1e-12 * c.l);
        prop_assert!((c.mu - r.mu).abs() <= 1e-9 * c.l);
    }
}

fn scalar_coupled() -> CoupledProblem {
    CoupledProblem::new(
        vec![atom_l1(), atom_l1()],
        vec![dmatrix![1.0], dmatrix![1.0]],
        vec![dvector![0.5], dvector![0.5]],
        vec![FeasibleSet::FullSpace; 2],
        1.0,
        gossip(GraphKind::Path, 2),
    )
    .unwrap()
}

#[test]
fn coupled_dual_scalar_instance_matches_primal_grid() {
    // Primal oracle: min |x1| + |x2| + ½(x1² + x2²) s.t. x1 + x2 = 1 by grid on x1.
    let primal = (0..=400_000)
        .map(|k| -10.0 + k as f64 * 5e-5)
        .map(|x1: f64| {
            let x2 = 1.0 - x1;
            x1.abs() + x2.abs() + 0.5 * (x1 * x1 + x2 * x2)
        })
        .fold(f64::INFINITY, f64::min);
    let dual = dualize_coupled(&scalar_coupled()).unwrap();
    let (best, t_best) = (0..=60_000)
        .map(|k| -3.0 + k as f64 * 1e-4)
        .map(|t| (dual.value(&dvector![t, t]).unwrap(), t))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    assert!((primal - 1.25).abs() < 1e-8);
    assert!((best + primal).abs() < 1e-8, "dual {best}, primal {primal}");
    assert!((t_best - 1.5).abs() < 1e-3);
    let x = recover_primal_coupled(&scalar_coupled(), &dvector![t_best, t_best]).unwrap();
    assert!((x - dvector![0.5, 0.5]).amax() < 1e-3);
}

#[test]
fn recovered_primal_at_threshold_and_beyond() {
    let p = scalar_coupled();
    assert_eq!(
        recover_primal_coupled(&p, &dvector![0.0, 0.0]).unwrap(),
        dvector![0.0, 0.0]
    );
    assert_eq!(
        recover_primal_coupled(&p, &dvector![1.0, 1.0]).unwrap(),
        dvector![0.0, 0.0]
    );
    for s in [0.01, 0.1, 0.5] {
        let x = recover_primal_coupled(&p, &dvector![1.0 + s, 1.0 + s]).unwrap();
        let radius = 1.0 + s + 2.0;
        let g = brute_force_conjugate(
            &atom_l1(),
            &atom_sq_l2(),
            1.0,
            &FeasibleSet::FullSpace,
            &dvector![1.0 + s],
            radius,
            1e-5,
        )
        .unwrap();
        assert!((x[0] - s).abs() < 1e-12);
        assert!((x[0] - g.argmax[0]).abs() < 1e-5);
    }
}

#[test]
fn basis_pursuit_dual_vanishes_at_zero() {
    let p = coupled_instance(1, 3, 2, 2, 0.5);
    let dual = dualize_coupled(&p).unwrap();
    assert_eq!(dual.value(&DVector::zeros(6)).unwrap(), 0.0);
    assert_eq!(
        recover_primal_coupled(&p, &DVector::zeros(6)).unwrap(),
        DVector::zeros(6)
    );
}

#[test]
fn consensus_dual_at_origin() {
    let p = consensus_instance(2, 4, 3, 2, 1.0);
    let dual = dualize_consensus(&p).unwrap();
    let zero = DVector::zeros(dual.dim());
    assert_eq!(dual.value(&zero).unwrap(), 0.0);
    assert_eq!(dual.residual(&zero).norm(), 0.0);
}

#[test]
fn consensus_dual_grows_quadratically_along_rays() {
    for lambda in [0.5, 1.0, 2.0] {
        let p = consensus_instance(3, 3, 2, 2, lambda);
        let dual = dualize_consensus(&p).unwrap();
        let dim = dual.dim();
        let mut dir = DVector::zeros(dim);
        dir[0] = 1.0;
        for s in [2.0, 5.0, 20.0] {
            let v = dual.value(&(&dir * s)).unwrap();
            let expected = (s - 1.0f64).powi(2) / (2.0 * lambda) + s * p.b[0][0];
            assert!((v - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
    }
}

fn fd_gradient(p: &AffineConstrainedProblem, u: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| {
        let mut a = u.clone();
        let mut b = u.clone();
        a[i] += h;
        b[i] -= h;
        (p.value(&a).unwrap() - p.value(&b).unwrap()) / (2.0 * h)
    })
}

fn check_gradients(p: &AffineConstrainedProblem, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let u = random_vec(&mut rng, p.dim(), scale);
        let g = p.gradient(&u).unwrap();
        let fd = fd_gradient(p, &u, 1e-6);
        let err = (&g - &fd).norm() / g.norm().max(1.0);
        assert!(err <= 1e-5, "relative error {err}");
    }
}

#[test]
fn dual_gradients_match_finite_differences() {
    check_gradients(
        &dualize_coupled(&coupled_instance(4, 3, 2, 3, 0.7)).unwrap(),
        40,
        3.0,
    );
    check_gradients(
        &dualize_consensus(&consensus_instance(5, 3, 2, 2, 1.3)).unwrap(),
        41,
        3.0,
    );
    check_gradients(
        &double_dual_basis_pursuit(&coupled_instance(6, 3, 2, 3, 0.4)).unwrap(),
        42,
        2.0,
    );
    check_gradients(
        &double_dual_mse(&consensus_instance(7, 4, 3, 2, 0.8)).unwrap(),
        43,
        2.0,
    );
    let mut huber = coupled_instance(8, 3, 2, 2, 1.0);
    huber.atoms = vec![atom_huber(); 3];
    huber.sets = vec![FeasibleSet::unit_box(2); 3];
    check_gradients(&dualize_coupled(&huber).unwrap(), 44, 3.0);
}

#[test]
fn symmetry_between_the_two_duals() {
    // Coupled data (A_i, A_i c_i) against consensus data (A_iᵀ, c_i): with
    // z'_i = A_iᵀ z_i the two objectives differ only in the sign of the linear term.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 3;
    let (p, d) = (2, 3);
    let a: Vec<_> = (0..n).map(|_| random_matrix(&mut rng, p, d)).collect();
    let c: Vec<_> = (0..n).map(|_| random_vec(&mut rng, d, 1.0)).collect();
    let coupled = CoupledProblem::new(
        vec![atom_l1(); n],
        a.clone(),
        (0..n).map(|i| &a[i] * &c[i]).collect(),
        vec![FeasibleSet::FullSpace; n],
        0.9,
        gossip(GraphKind::Path, n),
    )
    .unwrap();
    let consensus = ConsensusProblem::new(
        vec![atom_l1(); n],
        a.iter().map(|m| m.transpose()).collect(),
        c.clone(),
        FeasibleSet::FullSpace,
        0.9,
        gossip(GraphKind::Path, n),
    )
    .unwrap();
    let dc = dualize_coupled(&coupled).unwrap();
    let dn = dualize_consensus(&consensus).unwrap();
    for _ in 0..100 {
        let z = random_vec(&mut rng, n * p, 3.0);
        let mut zu = DVector::zeros(dn.dim());
        let mut smooth = 0.0;
        let mut linear = 0.0;
        for i in 0..n {
            let zi = a[i].tr_mul(&z.rows(i * p, p));
            zu.rows_mut(i * (d + p), d).copy_from(&zi);
            linear += zi.dot(&c[i]);
            smooth += zi
                .iter()
                .map(|v| (v.abs() - 1.0).max(0.0).powi(2))
                .sum::<f64>()
                / (2.0 * 0.9);
        }
        let vc = dc.value(&z).unwrap();
        let vn = dn.value(&zu).unwrap();
        assert!((vc - (smooth - linear)).abs() < 1e-12);
        assert!((vn - (smooth + linear)).abs() < 1e-12);
    }
}

#[test]
fn weak_duality_coupled() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (n, p) = (3, 2);
    let mut prob = coupled_instance(11, n, p, p, 0.6);
    prob.a[n - 1] = DMatrix::identity(p, p) + random_matrix(&mut rng, p, p) * 0.2;
    let dual = dualize_coupled(&prob).unwrap();
    let total = prob.total_rhs();
    for _ in 0..200 {
        let mut x = random_vec(&mut rng, n * p, 2.0);
        let mut partial = DVector::zeros(p);
        for i in 0..n - 1 {
            partial += &prob.a[i] * x.rows(i * p, p);
        }
        let last = prob.a[n - 1]
            .clone()
            .lu()
            .solve(&(&total - partial))
            .unwrap();
        x.rows_mut((n - 1) * p, p).copy_from(&last);
        assert!(prob.coupling_residual(&x).unwrap().norm() < 1e-10);
        let t = random_vec(&mut rng, p, 3.0);
        let z = DVector::from_fn(n * p, |k, _| t[k % p]);
        let primal = prob.objective(&x).unwrap();
        assert!(primal >= -dual.value(&z).unwrap() - 1e-10);
    }
}

#[test]
fn weak_duality_consensus() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, rows, d) = (3, 2, 2);
    let mut prob = consensus_instance(13, n, rows, d, 0.8);
    prob.a[n - 1] = DMatrix::identity(rows, d) + random_matrix(&mut rng, rows, d) * 0.2;
    let dual = dualize_consensus(&prob).unwrap();
    for _ in 0..200 {
        let xbar = random_vec(&mut rng, d, 2.0);
        let x = DVector::from_fn(n * d, |k, _| xbar[k % d]);
        // Dual feasibility needs Σ A_iᵀ z_i = 0; the u part then exists.
        let mut z: Vec<_> = (0..n).map(|_| random_vec(&mut rng, rows, 2.0)).collect();
        let partial = (0..n - 1).fold(DVector::zeros(d), |acc, i| acc + prob.a[i].tr_mul(&z[i]));
        z[n - 1] = prob.a[n - 1].transpose().lu().solve(&(-partial)).unwrap();
        let mut zu = DVector::zeros(dual.dim());
        for (i, zi) in z.iter().enumerate() {
            zu.rows_mut(i * (rows + d), rows).copy_from(zi);
        }
        let primal = prob.objective(&x).unwrap();
        assert!(primal >= -dual.value(&zu).unwrap() - 1e-10);
    }
}

#[test]
fn double_duals_are_huber() {
    let mut scalar = consensus_instance(14, 2, 1, 1, 1.0);
    scalar.a = vec![dmatrix![1.0], dmatrix![1.0]];
    scalar.b = vec![dvector![0.0], dvector![0.0]];
    let dd = double_dual_mse(&scalar).unwrap();
    for t in [-4.0, -1.0, -0.3, 0.0, 0.6, 1.0, 1.7, 3.0] {
        // Oracle: max over z ∈ [−1, 1] of z t − z²/2 on a grid.
        let grid = (0..=200_000)
            .map(|k| -1.0 + k as f64 * 1e-5)
            .map(|z| z * t - 0.5 * z * z)
            .fold(f64::NEG_INFINITY, f64::max);
        let v = dd.value(&dvector![t, 0.0]).unwrap();
        assert!((v - grid).abs() < 1e-8, "t={t}: {v} vs {grid}");
        let closed = if f64::abs(t) <= 1.0 {
            0.5 * t * t
        } else {
            f64::abs(t) - 0.5
        };
        assert!((v - closed).abs() < 1e-14);
    }
    let mut shifted = scalar.clone();
    shifted.b = vec![dvector![0.7], dvector![-0.2]];
    assert_eq!(
        double_dual_mse(&shifted)
            .unwrap()
            .value(&dvector![0.7, -0.2])
            .unwrap(),
        0.0
    );
}

#[test]
fn huber_basis_pursuit_structure() {
    let p = coupled_instance(15, 3, 2, 3, 0.5);
    let dd = double_dual_basis_pursuit(&p).unwrap();
    assert_eq!(dd.dim(), 3 * (3 + 2));
    assert_eq!(dd.value(&DVector::zeros(dd.dim())).unwrap(), 0.0);
    // Summing K(w, u) − b over nodes leaves Σ A_i w_i − Σ b_i.
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let wu = random_vec(&mut rng, dd.dim(), 1.0);
    let r = dd.residual(&wu);
    let summed = (0..3).fold(DVector::zeros(2), |acc, i| acc + r.rows(2 * i, 2));
    let w: DVector<f64> = dualsmooth::duality::basis_pursuit_dd_primal(&p, &wu).unwrap();
    let direct = p.coupling_residual(&w).unwrap();
    assert!((summed - direct).amax() < 1e-12);
}

#[test]
fn unsupported_inputs_fail_loudly() {
    let mut p = coupled_instance(17, 3, 2, 2, 1.0);
    p.atoms[1] = atom_huber();
    assert!(matches!(
        double_dual_basis_pursuit(&p),
        Err(Error::UnsupportedAtom(_))
    ));
    let mut q = consensus_instance(18, 3, 2, 2, 1.0);
    q.set = FeasibleSet::Simplex;
    assert!(dualize_consensus(&q).is_err());
    q.set = FeasibleSet::FullSpace;
    q.lambda = 0.0;
    assert!(matches!(
        dualize_consensus(&q),
        Err(Error::InvalidArgument(_))
    ));
}
