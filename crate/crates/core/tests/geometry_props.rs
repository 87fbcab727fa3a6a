use nalgebra::DVector;
use proptest::prelude::*;
use pwacert_core::geometry::{solve_lp, vertices_active_set, HPolytope, LpStatus, Sense, DEFAULT_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bounded polytope: box `[-2, 2]^n` cut by random rows through a ball
/// around the origin, so the origin stays strictly inside.
fn random_polytope(n: usize, extra: usize, seed: u64) -> HPolytope {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        rows.push((e.clone(), 2.0));
        e[k] = -1.0;
        rows.push((e, 2.0));
    }
    for _ in 0..extra {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(0.2..1.5);
        rows.push((a, b));
    }
    HPolytope::from_rows(n, &rows).unwrap()
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            return v / norm;
        }
    }
}

fn point_in_box(rng: &mut ChaCha8Rng, n: usize, half: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half..half))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_sense_flip_agrees(n in 1usize..=4, extra in 0usize..8, seed in any::<u64>()) {
        let p = random_polytope(n, extra, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let c = random_direction(&mut rng, n);
        let lo = solve_lp(&c, &p, Sense::Minimize).unwrap();
        let hi = solve_lp(&(-&c), &p, Sense::Maximize).unwrap();
        prop_assert_eq!(lo.status, LpStatus::Optimal);
        prop_assert_eq!(hi.status, LpStatus::Optimal);
        prop_assert!((lo.objective + hi.objective).abs() <= 1e-8);
        prop_assert!(p.contains(lo.point.as_ref().unwrap(), DEFAULT_TOL.lp));
    }

    #[test]
    fn lp_optimum_matches_best_vertex(n in 1usize..=3, extra in 0usize..6, seed in any::<u64>()) {
        let p = random_polytope(n, extra, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x99);
        let c = random_direction(&mut rng, n);
        let lp = solve_lp(&c, &p, Sense::Minimize).unwrap();
        let verts = vertices_active_set(&p, DEFAULT_TOL.face);
        let best = verts.iter().map(|v| c.dot(v)).fold(f64::INFINITY, f64::min);
        prop_assert!((lp.objective - best).abs() <= 1e-8);
    }

    #[test]
    fn chebyshev_ball_is_inscribed(n in 1usize..=4, extra in 0usize..8, seed in any::<u64>()) {
        let p = random_polytope(n, extra, seed);
        let (center, radius) = p.chebyshev_center(DEFAULT_TOL.lp).unwrap();
        prop_assert!(radius > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
        for _ in 0..1000 {
            let u = random_direction(&mut rng, n);
            let x = &center + (radius - 1e-9) * u;
            prop_assert!(p.max_violation(&x) <= 0.0);
        }
        // Maximality: some row is tight within the inflated ball.
        let slack: Vec<f64> = (0..p.n_rows())
            .map(|i| (p.b()[i] - p.row(i).dot(&center.transpose())) / p.row(i).norm())
            .collect();
        let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((min_slack - radius).abs() <= 1e-8);
    }

    #[test]
    fn vertices_agree_with_active_set_and_are_tight(n in 1usize..=4, extra in 0usize..6, seed in any::<u64>()) {
        let p = random_polytope(n, extra, seed);
        let fast = p.vertices(DEFAULT_TOL.face).unwrap();
        let slow = vertices_active_set(&p, DEFAULT_TOL.face);
        prop_assert_eq!(fast.len(), slow.len());
        for v in fast.iter() {
            prop_assert!(slow.iter().any(|w| (v - w).amax() <= 1e-7));
        }
        let minimal = p.remove_redundant(DEFAULT_TOL.lp).unwrap();
        for i in 0..minimal.n_rows() {
            let row = minimal.row(i);
            let norm = row.norm();
            let tight = fast
                .iter()
                .filter(|v| ((minimal.b()[i] - (row.clone() * *v)[0]) / norm).abs() <= DEFAULT_TOL.face)
                .count();
            prop_assert!(tight >= n, "row {} tight at only {} vertices", i, tight);
        }
    }

    #[test]
    fn remove_redundant_preserves_set(n in 1usize..=3, extra in 0usize..8, seed in any::<u64>()) {
        let p = random_polytope(n, extra, seed);
        let q = p.remove_redundant(DEFAULT_TOL.lp).unwrap();
        prop_assert!(q.n_rows() <= p.n_rows());
        prop_assert!(p.contains_polytope(&q, 1e-9).unwrap());
        prop_assert!(q.contains_polytope(&p, 1e-9).unwrap());
        // Deleting any surviving row strictly enlarges the set.
        for i in 0..q.n_rows() {
            let keep: Vec<usize> = (0..q.n_rows()).filter(|&k| k != i).collect();
            let bigger = q.select_rows(&keep);
            prop_assert!(!q.contains_polytope(&bigger, 1e-9).unwrap());
        }
    }

    #[test]
    fn dropped_rows_report_their_maximum(n in 1usize..=3, extra in 0usize..8, seed in any::<u64>()) {
        let p = random_polytope(n, extra, seed);
        let r = p.reduce(DEFAULT_TOL.lp).unwrap();
        prop_assert_eq!(r.kept.len() + r.dropped.len(), p.n_rows());
        for (i, max) in r.dropped {
            let normal = p.row(i).transpose();
            let res = solve_lp(&normal, &p, Sense::Maximize).unwrap();
            prop_assert_eq!(res.status, LpStatus::Optimal);
            prop_assert!((res.objective - max).abs() <= 1e-8 * normal.norm().max(1.0), "{} vs {}", res.objective, max);
        }
    }

    #[test]
    fn intersection_commutes(n in 1usize..=3, seed in any::<u64>()) {
        let p = random_polytope(n, 4, seed);
        let q = random_polytope(n, 4, seed.wrapping_add(1));
        let q = q.scale_rows(&vec![0.5; q.n_rows()]);
        let pq = p.intersect(&q).unwrap();
        let qp = q.intersect(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let x = point_in_box(&mut rng, n, 2.5);
            prop_assert_eq!(pq.contains(&x, 0.0), qp.contains(&x, 0.0));
            prop_assert_eq!(pq.contains(&x, 0.0), p.contains(&x, 0.0) && q.contains(&x, 0.0));
        }
    }

    #[test]
    fn shifted_copy_beyond_diameter_is_disjoint(n in 1usize..=3, extra in 0usize..5, seed in any::<u64>()) {
        let p = random_polytope(n, extra, seed);
        let verts = p.vertices(DEFAULT_TOL.face).unwrap();
        let mut diameter: f64 = 0.0;
        for a in verts.iter() {
            for b in verts.iter() {
                diameter = diameter.max((a - b).norm());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let shift = random_direction(&mut rng, n) * (diameter * 1.01 + 1e-3);
        // {x : C(x - s) ≤ d}
        let shifted = HPolytope::new(p.a().clone(), p.b() + p.a() * &shift).unwrap();
        prop_assert!(p.intersect(&shifted).unwrap().is_empty(DEFAULT_TOL.lp).unwrap());
        prop_assert!(!p.is_empty(DEFAULT_TOL.lp).unwrap());
    }

    #[test]
    fn face_vertices_are_polytope_vertices(n in 2usize..=3, extra in 0usize..5, seed in any::<u64>()) {
        let p = random_polytope(n, extra, seed).remove_redundant(DEFAULT_TOL.lp).unwrap();
        let all = p.vertices(DEFAULT_TOL.face).unwrap();
        for face in p.faces() {
            let fv = face.geometry.vertices(DEFAULT_TOL.face).unwrap();
            prop_assert!(fv.len() >= n);
            for v in fv.iter() {
                prop_assert!((face.normal.dot(v) - face.offset).abs() <= DEFAULT_TOL.face * face.normal.norm());
                prop_assert!(all.iter().any(|w| (v - w).amax() <= 1e-7));
            }
        }
    }
}

#[test]
fn three_cube_has_six_square_facets() {
    let cube = HPolytope::from_box(&[-1.0; 3], &[1.0; 3]);
    let faces = cube.faces();
    assert_eq!(faces.len(), 6);
    for f in faces {
        assert_eq!(f.geometry.vertices(DEFAULT_TOL.face).unwrap().len(), 4);
    }
}

#[test]
fn redundancy_matches_vertex_reconstruction_in_2d() {
    // Stacked parent constraints: a hexagon plus shifted copies of its rows.
    let mut rows = Vec::new();
    for k in 0..6 {
        let t = std::f64::consts::PI * k as f64 / 3.0;
        rows.push((vec![t.cos(), t.sin()], 1.0));
        rows.push((vec![t.cos(), t.sin()], 1.3));
        rows.push((vec![2.0 * t.cos(), 2.0 * t.sin()], 2.5));
    }
    let p = HPolytope::from_rows(2, &rows).unwrap();
    let q = p.remove_redundant(DEFAULT_TOL.lp).unwrap();
    // In 2-D the facet count equals the number of vertices.
    let v = p.vertices(DEFAULT_TOL.face).unwrap();
    assert_eq!(v.len(), 6);
    assert_eq!(q.n_rows(), v.len());
}
