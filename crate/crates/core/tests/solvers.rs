use neuropde::grid::{discrete_l2_seminorm, grid_sample, GridFunction};
use neuropde::rng::RngState;
use neuropde::solvers::grf::{grf_sample, GrfSpec};
use neuropde::solvers::{solve, solve_operator, Method, SemilinearPde, SolverConfig};
use std::f64::consts::PI;

fn dist(a: &GridFunction, b: &GridFunction) -> f64 {
    let d: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    discrete_l2_seminorm(&GridFunction::from_vec(a.lengths.clone(), a.extents().to_vec(), d).unwrap())
}

fn order_ratio(pde: &SemilinearPde, g0: &GridFunction, method: Method, m: usize) -> f64 {
    let run = |steps| solve(pde, g0, &SolverConfig::new(method, g0.extents()[0], steps).unwrap()).unwrap();
    let (a, b, r) = (run(m), run(2 * m), run(8 * m));
    dist(&a, &r) / dist(&b, &r)
}

#[test]
fn temporal_order_two() {
    let pde = SemilinearPde::burgers();
    let g0 = grf_sample(&GrfSpec::burgers(), &pde.lengths, &[64], &mut RngState::new(1)).unwrap();
    for method in [Method::Spectral, Method::Fdm, Method::Fem] {
        let r = order_ratio(&pde, &g0, method, 25);
        assert!((3.4..=4.6).contains(&r), "{method}: {r}");
    }
    let ac = SemilinearPde::allen_cahn(1);
    let g0 = grid_sample(|x| Ok(0.6 * (2.0 * PI * x[0]).sin() + 0.2), &[64], &ac.lengths).unwrap();
    for method in [Method::Spectral, Method::Fdm, Method::Fem] {
        let r = order_ratio(&ac, &g0, method, 25);
        assert!((3.4..=4.6).contains(&r), "allen-cahn {method}: {r}");
    }
}

#[test]
fn spectral_resolution_converged() {
    let pde = SemilinearPde::burgers();
    for seed in 0..2 {
        let fine = grf_sample(&GrfSpec::burgers(), &pde.lengths, &[512], &mut RngState::new(seed)).unwrap();
        let run = |n| {
            let u = solve(&pde, &fine.restrict(&[n]).unwrap(), &SolverConfig::new(Method::Spectral, n, 200).unwrap()).unwrap();
            u.restrict(&[64]).unwrap()
        };
        let diff = dist(&run(256), &run(512));
        assert!(diff < 1e-6, "{diff}");
    }
}

#[test]
fn fdm_agrees_with_spectral_on_reaction_diffusion() {
    let pde = SemilinearPde::reaction_diffusion();
    let g = grid_sample(|x| Ok(2.0 * (PI * x[0]).sin() + (2.0 * PI * x[0]).cos()), &[128], &pde.lengths).unwrap();
    let s = solve_operator(&pde, &g, &SolverConfig::new(Method::Spectral, 128, 1000).unwrap()).unwrap();
    let f = solve_operator(&pde, &g, &SolverConfig::new(Method::Fdm, 128, 1000).unwrap()).unwrap();
    let d = dist(&s, &f);
    assert!(d < 1e-3, "{d}");
}

#[test]
fn fem_heat_matches_dense_iteration() {
    let n = 16;
    let pde = SemilinearPde::heat(vec![1.0], 0.2, 0.5);
    let g0 = grid_sample(|x| Ok((2.0 * PI * x[0]).cos() + 0.3 * (6.0 * PI * x[0]).sin()), &[n], &[1.0]).unwrap();
    let steps = 10;
    let u = solve(&pde, &g0, &SolverConfig::new(Method::Fem, n, steps).unwrap()).unwrap();
    // dense (M + dt/2·cK)⁻¹(M − dt/2·cK) iteration
    let h = 1.0 / n as f64;
    let dt = 0.5 / steps as f64;
    let mat = |sign: f64| {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 4.0 * h / 6.0 + sign * 0.5 * dt * 0.2 * 2.0 / h;
            for j in [(i + 1) % n, (i + n - 1) % n] {
                a[i][j] += h / 6.0 - sign * 0.5 * dt * 0.2 / h;
            }
        }
        a
    };
    let (lhs, rhs) = (mat(1.0), mat(-1.0));
    let mut v = g0.data().to_vec();
    for _ in 0..steps {
        let r: Vec<f64> = (0..n).map(|i| (0..n).map(|j| rhs[i][j] * v[j]).sum()).collect();
        v = neuropde::solvers::linalg::dense_solve(lhs.clone(), r).unwrap();
    }
    for (a, b) in u.data().iter().zip(&v) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn trivial_fixed_points() {
    let b = SemilinearPde::burgers();
    let c = GridFunction::zeros(&b.lengths, &[32]).map(|_| 0.7);
    for m in [Method::Spectral, Method::Fdm, Method::Fem] {
        let u = solve(&b, &c, &SolverConfig::new(m, 32, 50).unwrap()).unwrap();
        assert!(u.data().iter().all(|v| (v - 0.7).abs() < 1e-12), "{m}");
    }
    let rd = SemilinearPde::reaction_diffusion();
    let z = GridFunction::zeros(&rd.lengths, &[32]);
    for m in [Method::Spectral, Method::Fdm, Method::Fem] {
        let u = solve_operator(&rd, &z, &SolverConfig::new(m, 32, 20).unwrap()).unwrap();
        assert!(u.data().iter().all(|v| *v == 0.0));
    }
}

