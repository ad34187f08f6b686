use dualsmooth::atoms::{
    atom_huber, atom_indicator, atom_l1, atom_linear, atom_sq_l2, atom_zero, prox, prox_objective,
    prox_with, proxv, ConvexAtom, FeasibleSet, ProxMethod,
};
use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.random_range(-scale..scale))
}

/// `(atom, set)` pairs with closed-form or bisection prox support.
fn cases(dim: usize) -> Vec<(ConvexAtom, FeasibleSet)> {
    let b = DVector::from_fn(dim, |i, _| 0.3 * i as f64 - 0.4);
    vec![
        (atom_l1(), FeasibleSet::FullSpace),
        (atom_sq_l2(), FeasibleSet::FullSpace),
        (atom_huber(), FeasibleSet::FullSpace),
        (atom_linear(b.clone()), FeasibleSet::FullSpace),
        (atom_zero(), FeasibleSet::Simplex),
        (atom_l1(), FeasibleSet::Simplex),
        (atom_sq_l2(), FeasibleSet::Simplex),
        (atom_huber(), FeasibleSet::Simplex),
        (atom_linear(b.clone()), FeasibleSet::Simplex),
        (atom_l1(), FeasibleSet::unit_box(dim)),
        (atom_huber(), FeasibleSet::inf_ball(b.clone(), 0.7).unwrap()),
        (atom_sq_l2(), FeasibleSet::unit_box(dim)),
        (
            atom_indicator(FeasibleSet::unit_box(dim)),
            FeasibleSet::FullSpace,
        ),
        (atom_indicator(FeasibleSet::Simplex), FeasibleSet::FullSpace),
    ]
}

fn label(atom: &ConvexAtom, set: &FeasibleSet) -> String {
    format!("{} on {set:?}", atom.name())
}

#[test]
fn spec_values() {
    let huber = atom_huber();
    assert_eq!(huber.value(&dvector![2.0]).unwrap(), 1.5);
    assert_eq!(huber.value(&dvector![0.5]).unwrap(), 0.125);
    assert_eq!(atom_l1().value(&dvector![1.0, -2.0]).unwrap(), 3.0);
    assert_eq!(atom_sq_l2().strong_convexity(), 1.0);
}

#[test]
fn prox_examples() {
    let full = FeasibleSet::FullSpace;
    assert_eq!(
        prox(&atom_l1(), 1.0, &full, &dvector![3.0]).unwrap(),
        dvector![2.0]
    );
    assert_eq!(
        prox(&atom_l1(), 1.0, &full, &dvector![0.5, -2.0]).unwrap(),
        dvector![0.0, -1.0]
    );
    assert_eq!(proxv(&atom_l1(), 1.0, &full, &dvector![0.0]).unwrap(), 0.0);
    let y = prox(&atom_sq_l2(), 1.0, &full, &dvector![2.0]).unwrap();
    assert_eq!(y, dvector![1.0]);
    assert_eq!(
        proxv(&atom_sq_l2(), 1.0, &full, &dvector![2.0]).unwrap(),
        1.0
    );
}

fn grid_min_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let steps = ((hi - lo) / step).round() as usize;
    (0..=steps)
        .map(|k| lo + k as f64 * step)
        .map(|t| (f(t), t))
        .fold(
            (f64::INFINITY, f64::NAN),
            |a, b| if b.0 < a.0 { b } else { a },
        )
}

#[test]
fn proxv_matches_grid_minimization() {
    // λ|y| + ½(y − 3)² over a fine grid.
    let (v, _) = grid_min_1d(|y| y.abs() + 0.5 * (y - 3.0).powi(2), -5.0, 5.0, 1e-5);
    let got = proxv(&atom_l1(), 1.0, &FeasibleSet::FullSpace, &dvector![3.0]).unwrap();
    assert!((got - 2.5).abs() < 1e-12);
    assert!((got - v).abs() < 1e-8);
    let (v, _) = grid_min_1d(|y| 0.5 * y * y + 0.5 * (y - 2.0).powi(2), -5.0, 5.0, 1e-5);
    let got = proxv(&atom_sq_l2(), 1.0, &FeasibleSet::FullSpace, &dvector![2.0]).unwrap();
    assert!((got - v).abs() < 1e-8);
}

#[test]
fn simplex_prox_matches_grid_oracle() {
    let atoms = [
        atom_zero(),
        atom_l1(),
        atom_sq_l2(),
        atom_huber(),
        atom_linear(dvector![0.5, -1.0]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut points = vec![dvector![2.0, 0.0]];
    points.extend((0..20).map(|_| random_vec(&mut rng, 2, 3.0)));
    for atom in &atoms {
        for x in &points {
            let lambda = 0.7;
            let obj = |t: f64| {
                let y = dvector![t, 1.0 - t];
                lambda * atom.value(&y).unwrap() + 0.5 * (&y - x).norm_squared()
            };
            let (best, t) = grid_min_1d(obj, 0.0, 1.0, 1e-4);
            let y = prox(atom, lambda, &FeasibleSet::Simplex, x).unwrap();
            let got = prox_objective(atom, lambda, x, &y).unwrap();
            assert!(
                got <= best + 1e-12,
                "{} at {x}: {got} vs grid {best}",
                atom.name()
            );
            assert!(
                (y[0] - t).abs() <= 2e-4,
                "{} at {x}: {} vs grid {t}",
                atom.name(),
                y[0]
            );
        }
    }
    let y = prox(
        &atom_zero(),
        1.0,
        &FeasibleSet::Simplex,
        &dvector![2.0, 0.0],
    )
    .unwrap();
    assert!((y - dvector![1.0, 0.0]).amax() < 1e-15);
}

#[test]
fn prox_is_nonexpansive() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for dim in [1, 3] {
        for (atom, set) in cases(dim) {
            for _ in 0..200 {
                let lambda = rng.random_range(0.05..5.0);
                let x = random_vec(&mut rng, dim, 4.0);
                let y = random_vec(&mut rng, dim, 4.0);
                let px = prox(&atom, lambda, &set, &x).unwrap();
                let py = prox(&atom, lambda, &set, &y).unwrap();
                assert!(
                    (&px - &py).norm() <= (&x - &y).norm() + 1e-10,
                    "{}",
                    label(&atom, &set)
                );
            }
        }
    }
}

/// Directions that keep a point of `set` inside it for small steps.
fn feasible_directions(set: &FeasibleSet, dim: usize) -> Vec<DVector<f64>> {
    let mut dirs = Vec::new();
    match set {
        FeasibleSet::Simplex => {
            for i in 0..dim {
                for j in 0..dim {
                    if i != j {
                        let mut d = DVector::zeros(dim);
                        d[i] = 1.0;
                        d[j] = -1.0;
                        dirs.push(d / 2f64.sqrt());
                    }
                }
            }
        }
        _ => {
            for i in 0..dim {
                for s in [-1.0, 1.0] {
                    let mut d = DVector::zeros(dim);
                    d[i] = s;
                    dirs.push(d);
                }
            }
            if dim > 1 {
                dirs.push(DVector::from_element(dim, 1.0 / (dim as f64).sqrt()));
                dirs.push(DVector::from_element(dim, -1.0 / (dim as f64).sqrt()));
            }
        }
    }
    dirs
}

#[test]
fn prox_output_is_locally_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for dim in [1, 3] {
        for (atom, set) in cases(dim) {
            for _ in 0..40 {
                let lambda = rng.random_range(0.1..3.0);
                let x = random_vec(&mut rng, dim, 3.0);
                let y = prox(&atom, lambda, &set, &x).unwrap();
                assert!(set.contains(&y, 1e-12), "{}", label(&atom, &set));
                let base = prox_objective(&atom, lambda, &x, &y).unwrap();
                for dir in feasible_directions(&set, dim) {
                    for step in [1e-3, 5e-4, 1e-4] {
                        let yp = &y + &dir * step;
                        if !set.contains(&yp, 1e-12) {
                            continue;
                        }
                        let v = prox_objective(&atom, lambda, &x, &yp).unwrap();
                        assert!(v >= base - 1e-8, "{}: {v} < {base}", label(&atom, &set));
                    }
                }
            }
        }
    }
}

#[test]
fn proxv_is_objective_at_prox() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (atom, set) in cases(2) {
        let x = random_vec(&mut rng, 2, 2.0);
        let y = prox(&atom, 0.8, &set, &x).unwrap();
        assert_eq!(
            proxv(&atom, 0.8, &set, &x).unwrap(),
            prox_objective(&atom, 0.8, &x, &y).unwrap()
        );
    }
}

#[test]
fn closed_form_matches_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scalar_cases = [
        (atom_l1(), FeasibleSet::FullSpace),
        (atom_sq_l2(), FeasibleSet::FullSpace),
        (atom_huber(), FeasibleSet::FullSpace),
        (atom_linear(dvector![0.6]), FeasibleSet::FullSpace),
        (atom_l1(), FeasibleSet::unit_box(1)),
        (
            atom_huber(),
            FeasibleSet::inf_ball(dvector![0.5], 1.0).unwrap(),
        ),
        (atom_huber(), FeasibleSet::Simplex),
    ];
    for (atom, set) in scalar_cases {
        for _ in 0..200 {
            let lambda = rng.random_range(0.05..5.0);
            let x = random_vec(&mut rng, 1, 6.0);
            let closed = prox_with(&atom, lambda, &set, &x, ProxMethod::ClosedForm).unwrap();
            let bisect = prox_with(&atom, lambda, &set, &x, ProxMethod::Bisection).unwrap();
            assert!(
                (closed[0] - bisect[0]).abs() <= 1e-8,
                "{}",
                label(&atom, &set)
            );
        }
    }
}

#[test]
fn projection_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sets = [
        FeasibleSet::Simplex,
        FeasibleSet::unit_box(4),
        FeasibleSet::inf_ball(dvector![1.0, -1.0, 0.0, 2.0], 0.5).unwrap(),
    ];
    for set in sets {
        for _ in 0..100 {
            let x = random_vec(&mut rng, 4, 5.0);
            let p = set.project(&x).unwrap();
            assert!(set.contains(&p, 1e-12));
            assert!((set.project(&p).unwrap() - &p).amax() <= 1e-15);
        }
    }
}

#[test]
fn atoms_are_convex_with_valid_subgradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let atoms = [
        atom_zero(),
        atom_l1(),
        atom_sq_l2(),
        atom_huber(),
        atom_linear(dvector![1.0, -0.5, 2.0]),
    ];
    for atom in atoms {
        for _ in 0..200 {
            let x = random_vec(&mut rng, 3, 3.0);
            let y = random_vec(&mut rng, 3, 3.0);
            let fx = atom.value(&x).unwrap();
            let fy = atom.value(&y).unwrap();
            let mid = atom.value(&((&x + &y) * 0.5)).unwrap();
            assert!(mid <= 0.5 * (fx + fy) + 1e-12, "{}", atom.name());
            let g = atom.subgradient(&x).unwrap();
            assert!(fy >= fx + g.dot(&(&y - &x)) - 1e-12, "{}", atom.name());
            let mu = atom.strong_convexity();
            if mu > 0.0 {
                assert!(fy >= fx + g.dot(&(&y - &x)) + 0.5 * mu * (&y - &x).norm_squared() - 1e-12);
            }
        }
    }
}

#[test]
fn config_names_parse() {
    for name in ["l1", "sq_l2", "huber", "ind_simplex"] {
        let atom: ConvexAtom = name.parse().unwrap();
        assert_eq!(atom.name(), name);
    }
    assert!("linear".parse::<ConvexAtom>().is_err());
    assert!("ind_inf_ball".parse::<ConvexAtom>().is_err());
    assert!("cube".parse::<ConvexAtom>().is_err());
}
