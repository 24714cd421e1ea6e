//! Cross-checks against independent reference computations: dense matrix
//! inverses, Monte Carlo estimates, quadrature, finite differences, and grid
//! scans. None of these share code with the implementation paths they test.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rpmbo_core::acquisition::{
    expected_improvement, maximize_acquisition, AcquisitionProblem, Sense,
};
use rpmbo_core::benchmarks::parse_objective;
use rpmbo_core::feature_map::FeatureMap;
use rpmbo_core::gp::{GpModel, Kernel};
use rpmbo_core::linalg::{cholesky_lower, cholesky_solve, least_norm_solve, orthonormal_columns};
use rpmbo_core::losses::{
    combined_loss, consistency_loss, supervised_loss, TrainingConfig, UnlabeledSet,
};
use rpmbo_core::manifold::{LinearMap, MixedOracle, SphereMap};
use rpmbo_core::nn::{NeuralMap, RescaleMode};
use rpmbo_core::projection::{sample_orthogonal, SearchSpace};
use rpmbo_core::rng::{standard_normal, stream, uniform};
use rpmbo_core::stats::{gamma_log_density, std_normal_cdf, std_normal_pdf};

/// Gauss-Jordan inverse with partial pivoting. Slow and simple on purpose.
fn dense_inverse(a: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut work = a.to_owned();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| work[(i, col)].abs().total_cmp(&work[(j, col)].abs()))
            .unwrap();
        if pivot != col {
            for j in 0..n {
                work.swap((col, j), (pivot, j));
                inv.swap((col, j), (pivot, j));
            }
        }
        let p = work[(col, col)];
        assert!(p.abs() > 1e-300, "singular matrix in oracle");
        for j in 0..n {
            work[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = work[(i, col)];
                for j in 0..n {
                    work[(i, j)] -= f * work[(col, j)];
                    inv[(i, j)] -= f * inv[(col, j)];
                }
            }
        }
    }
    inv
}

fn random_points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream(seed, 90);
    Array2::from_shape_fn((n, dim), |_| uniform(&mut rng, -1.0, 1.0))
}

fn kernel_matrix(kernel: &Kernel<f64>, pts: ArrayView2<f64>, noise: f64) -> Array2<f64> {
    let n = pts.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        kernel.eval(pts.row(i), pts.row(j)) + if i == j { noise } else { 0.0 }
    })
}

#[test]
fn gp_posterior_matches_dense_inverse() {
    for (n, dim, seed) in [(2usize, 1usize, 1u64), (4, 2, 2), (6, 3, 3), (8, 5, 4)] {
        let pts = random_points(n, dim, seed);
        let mut rng = stream(seed, 91);
        let ys = Array1::from_shape_fn(n, |_| uniform(&mut rng, -2.0, 2.0));
        let kernel = Kernel::new(0.9, 1.3).unwrap();
        let noise = 1e-3;
        let prior_mean = 0.25;
        let model = GpModel::new(pts.clone(), ys.clone(), kernel.clone(), noise, prior_mean)
            .unwrap();

        let kinv = dense_inverse(kernel_matrix(&kernel, pts.view(), noise).view());
        let resid = ys.mapv(|y| y - prior_mean);
        let alpha = kinv.dot(&resid);

        for q in 0..12 {
            let z = Array1::from_shape_fn(dim, |j| {
                0.83 * ((q * dim + j) as f64 * 0.37).sin()
            });
            let kv = Array1::from_shape_fn(n, |i| kernel.eval(pts.row(i), z.view()));
            let want_mean = prior_mean + kv.dot(&alpha);
            let want_var = (kernel.eval(z.view(), z.view()) - kv.dot(&kinv.dot(&kv))).max(0.0);
            let (mean, var) = model.posterior(z.view()).unwrap();
            assert!(
                (mean - want_mean).abs() < 1e-8,
                "n={n} mean {mean} vs {want_mean}"
            );
            assert!((var - want_var).abs() < 1e-8, "n={n} var {var} vs {want_var}");
        }
    }
}

#[test]
fn gp_marginal_likelihood_matches_dense_determinant() {
    let n = 7;
    let pts = random_points(n, 3, 11);
    let mut rng = stream(11, 92);
    let ys = Array1::from_shape_fn(n, |_| uniform(&mut rng, -1.0, 1.0));
    let kernel = Kernel::new(1.4, 0.8).unwrap();
    let noise = 5e-3;
    let model = GpModel::with_centered_mean(pts.clone(), ys.clone(), kernel.clone(), noise)
        .unwrap();

    let k = kernel_matrix(&kernel, pts.view(), noise);
    // log det through the dedicated Cholesky; the quadratic form through the
    // independent Gauss-Jordan inverse.
    let l = cholesky_lower(k.view()).unwrap();
    let logdet: f64 = (0..n).map(|i| 2.0 * l[(i, i)].ln()).sum();
    let mean = ys.sum() / n as f64;
    let resid = ys.mapv(|y| y - mean);
    let quad = resid.dot(&dense_inverse(k.view()).dot(&resid));
    let want = 0.5 * quad + 0.5 * logdet + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let got = model.neg_log_marginal_likelihood().unwrap();
    assert!((got - want).abs() < 1e-8, "{got} vs {want}");
}

#[test]
fn posterior_factor_mean_matches_pointwise_posterior() {
    let pts = random_points(6, 2, 21);
    let mut rng = stream(21, 93);
    let ys = Array1::from_shape_fn(6, |_| uniform(&mut rng, -1.0, 1.0));
    let model =
        GpModel::with_centered_mean(pts, ys, Kernel::new(1.1, 1.0).unwrap(), 1e-4).unwrap();
    let query = random_points(9, 2, 22);
    let factor = model.posterior_factor(query.view()).unwrap();
    for (i, &m) in factor.mean().iter().enumerate() {
        let (want, _) = model.posterior(query.row(i)).unwrap();
        assert!((m - want).abs() < 1e-10);
    }
}

#[test]
fn expected_improvement_matches_monte_carlo() {
    let cases = [
        (0.0, 1.0, 0.0),
        (0.0, 1.0, 1.0),
        (0.5, 0.3, 0.2),
        (-1.0, 2.0, 0.0),
        (2.0, 0.1, 1.9),
        (1.0, 1.5, -2.0),
        (-0.3, 0.7, -0.3),
        (4.0, 3.0, 1.0),
        (0.2, 0.05, 0.4),
        (-2.0, 1.2, -1.5),
    ];
    let draws = 1_000_000usize;
    let mut rng = stream(5, 94);
    let gauss: Vec<f64> = (0..draws).map(|_| standard_normal(&mut rng)).collect();
    for (mu, sd, f_star) in cases {
        let mut acc_min = 0.0;
        let mut acc_max = 0.0;
        for &g in &gauss {
            let y = mu + sd * g;
            acc_min += (f_star - y).max(0.0);
            acc_max += (y - f_star).max(0.0);
        }
        let mc_min = acc_min / draws as f64;
        let mc_max = acc_max / draws as f64;
        let ei_min = expected_improvement(mu, sd, f_star, Sense::Minimize);
        let ei_max = expected_improvement(mu, sd, f_star, Sense::Maximize);
        let tol = 2e-3 * sd.max(1.0);
        assert!(
            (ei_min - mc_min).abs() < tol,
            "minimize μ={mu} σ={sd} f*={f_star}: {ei_min} vs {mc_min}"
        );
        assert!(
            (ei_max - mc_max).abs() < tol,
            "maximize μ={mu} σ={sd} f*={f_star}: {ei_max} vs {mc_max}"
        );
    }
}

#[test]
fn acquisition_maximizer_matches_grid_scan() {
    // m = 2 so a 201×201 scan of the z-box is exhaustive enough to trust.
    let ambient = 6;
    let m = 2;
    let projection = sample_orthogonal::<f64>(m, ambient, 31).unwrap();
    let map = FeatureMap::Linear(LinearMap::from_seed(ambient, 3, 32).unwrap());

    let space = SearchSpace::new(ambient).unwrap();
    let xs = rpmbo_core::projection::latin_hypercube::<f64>(10, &space, 33).unwrap();
    let mut embedded = Array2::zeros((10, m));
    let mut ys = Array1::zeros(10);
    for (i, x) in xs.iter().enumerate() {
        let hx = map.apply(x.view()).unwrap();
        embedded
            .row_mut(i)
            .assign(&rpmbo_core::projection::project(&projection, hx.view()).unwrap());
        ys[i] = x.dot(x);
    }
    let model =
        GpModel::with_centered_mean(embedded, ys.clone(), Kernel::new(0.8, 1.0).unwrap(), 1e-4)
            .unwrap();
    let f_star = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let prob =
        AcquisitionProblem::new(&model, &projection, &map, f_star, Sense::Minimize).unwrap();

    let w = prob.half_width();
    let mut grid_best = f64::NEG_INFINITY;
    for i in 0..201 {
        for j in 0..201 {
            let z = ndarray::array![
                -w + 2.0 * w * i as f64 / 200.0,
                -w + 2.0 * w * j as f64 / 200.0
            ];
            let v = rpmbo_core::acquisition::composed_acquisition(&prob, z.view()).value;
            if v > grid_best {
                grid_best = v;
            }
        }
    }
    let opt = maximize_acquisition(&prob, 24, 34).unwrap();
    assert!(!opt.degenerate);
    assert!(
        (opt.value - grid_best).abs() <= 1e-3,
        "optimizer {} vs grid {}",
        opt.value,
        grid_best
    );
}

#[test]
fn normal_cdf_matches_quadrature() {
    // Simpson integration of the density from 0 to u, 20k panels.
    let simpson = |u: f64| {
        let n = 20_000;
        let h = u / n as f64;
        let mut s = std_normal_pdf(0.0) + std_normal_pdf(u);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * std_normal_pdf(i as f64 * h);
        }
        0.5 + s * h / 3.0
    };
    for u in [0.0, 0.1, 0.5, 1.0, 1.96, 3.0, 4.5, -0.7, -2.33] {
        let want = if u >= 0.0 { simpson(u) } else { 1.0 - simpson(-u) };
        let got = std_normal_cdf(u);
        assert!((got - want).abs() < 1e-10, "u={u}: {got} vs {want}");
    }
}

#[test]
fn gamma_density_normalizes_under_quadrature() {
    for (shape, rate) in [(1.0f64, 0.15f64), (2.5, 1.0), (3.5, 2.0)] {
        // The mass beyond mean + 60 standard deviations is negligible.
        let hi: f64 = shape / rate + 60.0 * (shape / (rate * rate)).sqrt();
        let n = 400_000;
        let h = hi / n as f64;
        let f = |a: f64| {
            if a <= 0.0 {
                0.0
            } else {
                gamma_log_density(a, shape, rate).exp()
            }
        };
        let mut s = f(1e-12) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        let mass = s * h / 3.0;
        assert!((mass - 1.0).abs() < 1e-6, "shape={shape} rate={rate}: {mass}");
    }
}

#[test]
fn least_norm_solution_matches_normal_equations() {
    let m = 4;
    let n = 9;
    let mut rng = stream(41, 95);
    let a = Array2::from_shape_fn((m, n), |_| standard_normal::<f64, _>(&mut rng));
    let b = Array1::from_shape_fn(m, |_| standard_normal::<f64, _>(&mut rng));
    let x = least_norm_solve(a.view(), b.view()).unwrap();

    let residual = &a.dot(&x) - &b;
    assert!(residual.iter().all(|r| r.abs() < 1e-10));

    // x = Aᵀ(AAᵀ)⁻¹b through the independent dense inverse.
    let gram = a.dot(&a.t());
    let want = a.t().dot(&dense_inverse(gram.view()).dot(&b));
    for i in 0..n {
        assert!((x[i] - want[i]).abs() < 1e-8);
    }
}

#[test]
fn cholesky_reconstructs_and_solves() {
    let pts = random_points(7, 4, 51);
    let k = kernel_matrix(&Kernel::new(1.0, 1.0).unwrap(), pts.view(), 1e-2);
    let l = cholesky_lower(k.view()).unwrap();
    let rebuilt = l.dot(&l.t());
    for i in 0..7 {
        for j in 0..7 {
            assert!((rebuilt[(i, j)] - k[(i, j)]).abs() < 1e-12);
        }
    }
    let mut rng = stream(51, 96);
    let b = Array1::from_shape_fn(7, |_| standard_normal::<f64, _>(&mut rng));
    let x = cholesky_solve(l.view(), b.view());
    let want = dense_inverse(k.view()).dot(&b);
    for i in 0..7 {
        assert!((x[i] - want[i]).abs() < 1e-8);
    }
}

fn fd_param_grad<F: Fn(&[f64]) -> f64>(f: F, params: &[f64], idx: usize) -> f64 {
    let h = 1e-6 * (1.0 + params[idx].abs());
    let mut up = params.to_vec();
    let mut dn = params.to_vec();
    up[idx] += h;
    dn[idx] -= h;
    (f(&up) - f(&dn)) / (2.0 * h)
}

fn check_map_gradients(map: &FeatureMap<f64>, x: &Array1<f64>, picks: &[usize], tol: f64) {
    let out = map.apply(x.view()).unwrap();
    let mut rng = stream(61, 97);
    let upstream = Array1::from_shape_fn(out.len(), |_| standard_normal::<f64, _>(&mut rng));
    let back = map.backward(x.view(), upstream.view()).unwrap();

    let params = map.params();
    let scalar = |p: &[f64]| {
        let mut probe = map.clone();
        probe.set_params(p).unwrap();
        upstream.dot(&probe.apply(x.view()).unwrap())
    };
    for &idx in picks {
        let fd = fd_param_grad(scalar, &params, idx);
        let an = back.param_grad[idx];
        assert!(
            (fd - an).abs() <= tol * (1.0 + fd.abs()),
            "param {idx}: analytic {an} vs fd {fd}"
        );
    }
    for j in 0..x.len() {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut up = x.clone();
        let mut dn = x.clone();
        up[j] += h;
        dn[j] -= h;
        let fd = (upstream.dot(&map.apply(up.view()).unwrap())
            - upstream.dot(&map.apply(dn.view()).unwrap()))
            / (2.0 * h);
        let an = back.input_grad[j];
        assert!(
            (fd - an).abs() <= tol * (1.0 + fd.abs()),
            "input {j}: analytic {an} vs fd {fd}"
        );
    }
}

#[test]
fn map_backward_matches_finite_differences() {
    let mut rng = stream(71, 98);
    let x5 = Array1::from_shape_fn(5, |_| uniform(&mut rng, -0.9, 0.9));

    let linear = FeatureMap::Linear(LinearMap::from_seed(5, 2, 72).unwrap());
    check_map_gradients(&linear, &x5, &(0..10).collect::<Vec<_>>(), 1e-5);

    let sphere = FeatureMap::Sphere(SphereMap::from_seed(5, 2, 73).unwrap());
    let n_sphere = sphere.param_count();
    check_map_gradients(&sphere, &x5, &(0..n_sphere).collect::<Vec<_>>(), 1e-5);

    for mode in [RescaleMode::Off, RescaleMode::Always, RescaleMode::OnlyIfOutside] {
        let neural = FeatureMap::Neural(NeuralMap::init(5, 7, 74, mode).unwrap());
        let count = neural.param_count();
        let picks: Vec<usize> = (0..count).step_by(7).collect();
        check_map_gradients(&neural, &x5, &picks, 1e-4);
    }
}

#[test]
fn supervised_loss_gradients_match_finite_differences() {
    let mut rng = stream(81, 99);
    let xs: Vec<Array1<f64>> =
        (0..6).map(|_| Array1::from_shape_fn(4, |_| uniform(&mut rng, -1.0, 1.0))).collect();
    let ys: Vec<f64> = (0..6).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
    let map = FeatureMap::Neural(NeuralMap::init(4, 5, 82, RescaleMode::Off).unwrap());
    let (a, noise) = (0.8, 0.02);

    let eval = supervised_loss(&map, a, noise, &xs, &ys, true).unwrap();

    let loss_at = |m: &FeatureMap<f64>, a: f64, s: f64| {
        supervised_loss(m, a, s, &xs, &ys, false).unwrap().loss
    };

    let h = 1e-6;
    let fd_a = (loss_at(&map, a + h, noise) - loss_at(&map, a - h, noise)) / (2.0 * h);
    assert!((fd_a - eval.grad_lengthscale).abs() < 1e-5 * (1.0 + fd_a.abs()));
    let fd_s = (loss_at(&map, a, noise + h) - loss_at(&map, a, noise - h)) / (2.0 * h);
    assert!((fd_s - eval.grad_noise).abs() < 1e-4 * (1.0 + fd_s.abs()));

    let params = map.params();
    for idx in (0..map.param_count()).step_by(9) {
        let fd = fd_param_grad(
            |p| {
                let mut probe = map.clone();
                probe.set_params(p).unwrap();
                loss_at(&probe, a, noise)
            },
            &params,
            idx,
        );
        let an = eval.map_grad[idx];
        assert!(
            (fd - an).abs() < 1e-4 * (1.0 + fd.abs()),
            "param {idx}: {an} vs {fd}"
        );
    }
}

#[test]
fn consistency_loss_gradients_match_finite_differences() {
    let space = SearchSpace::new(4).unwrap();
    let config =
        TrainingConfig::<f64> { unlabeled_points: 6, blend_coefficients: 3, ..Default::default() };
    let unlabeled =
        UnlabeledSet::sample(config.unlabeled_points, config.blend_coefficients, &space, 83)
            .unwrap();
    let map = FeatureMap::Neural(NeuralMap::init(4, 5, 84, RescaleMode::Off).unwrap());

    let eval = consistency_loss(&map, &unlabeled, true).unwrap();
    let params = map.params();
    for idx in (0..map.param_count()).step_by(11) {
        let fd = fd_param_grad(
            |p| {
                let mut probe = map.clone();
                probe.set_params(p).unwrap();
                consistency_loss(&probe, &unlabeled, false).unwrap().loss
            },
            &params,
            idx,
        );
        let an = eval.map_grad[idx];
        assert!(
            (fd - an).abs() < 1e-4 * (1.0 + fd.abs()),
            "param {idx}: {an} vs {fd}"
        );
    }
}

#[test]
fn combined_loss_is_the_weighted_sum_of_its_parts() {
    let mut rng = stream(85, 100);
    let xs: Vec<Array1<f64>> =
        (0..5).map(|_| Array1::from_shape_fn(3, |_| uniform(&mut rng, -1.0, 1.0))).collect();
    let ys: Vec<f64> = (0..5).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
    let space = SearchSpace::new(3).unwrap();
    let unlabeled = UnlabeledSet::sample(5, 2, &space, 86).unwrap();
    let map = FeatureMap::Neural(NeuralMap::init(3, 4, 87, RescaleMode::Off).unwrap());

    let gamma = 2.5;
    let combined = combined_loss(&map, 1.0, 0.01, &xs, &ys, &unlabeled, gamma, true).unwrap();
    let sup = supervised_loss(&map, 1.0, 0.01, &xs, &ys, true).unwrap();
    let cons = consistency_loss(&map, &unlabeled, true).unwrap();

    assert!((combined.loss - (sup.loss + gamma * cons.loss)).abs() < 1e-12);
    for i in 0..combined.map_grad.len() {
        let want = sup.map_grad[i] + gamma * cons.map_grad[i];
        assert!((combined.map_grad[i] - want).abs() < 1e-12);
    }
}

#[test]
fn orthonormalization_agrees_with_projector_identity() {
    // QQᵀ applied to any column of the input must reproduce that column's
    // component in the span, i.e. QQᵀA = A for full-rank A.
    let mut rng = stream(88, 101);
    let a = Array2::from_shape_fn((7, 3), |_| standard_normal::<f64, _>(&mut rng));
    let q = orthonormal_columns(a.view()).unwrap();
    let proj = q.dot(&q.t().dot(&a));
    for (got, want) in proj.iter().zip(a.iter()) {
        assert!((got - want).abs() < 1e-10);
    }
}

#[test]
fn mixed_oracle_identity_on_free_coordinates() {
    // d1 = 0 makes the oracle an identity on its active coordinates.
    let oracle = MixedOracle::new(0, 3, 3).unwrap();
    let x = ndarray::array![0.3, -0.8, 0.5];
    let out = oracle.apply::<f64>(x.view()).unwrap();
    assert_eq!(out, x);
}

#[test]
fn objective_latents_agree_with_reference_formulas() {
    let obj = parse_objective::<f64>("ackley-sphere-D10-d3").unwrap();
    let mut rng = stream(89, 102);
    for _ in 0..20 {
        let x = Array1::from_shape_fn(10, |_| uniform(&mut rng, -1.0, 1.0));
        let y = obj.eval_noiseless(x.view()).unwrap();
        // Reference: normalize the first d+1 coordinates, then the textbook
        // series form evaluated with plain accumulation.
        let v: Vec<f64> = x.iter().take(4).cloned().collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let u: Vec<f64> = v.iter().map(|a| a / norm).collect();
        let d = u.len() as f64;
        let s1: f64 = u.iter().map(|a| a * a).sum::<f64>() / d;
        let s2: f64 = u.iter().map(|a| (2.0 * std::f64::consts::PI * a).cos()).sum::<f64>() / d;
        let want = -20.0 * (-0.2 * s1.sqrt()).exp() - s2.exp() + 20.0 + std::f64::consts::E;
        assert!((y - want).abs() < 1e-12);
    }
}

fn finite<F: Fn(ArrayView1<f64>) -> f64>(f: F, x: &Array1<f64>) -> Array1<f64> {
    Array1::from_shape_fn(x.len(), |j| {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut up = x.clone();
        let mut dn = x.clone();
        up[j] += h;
        dn[j] -= h;
        (f(up.view()) - f(dn.view())) / (2.0 * h)
    })
}

#[test]
fn box_minimizer_reaches_an_interior_quadratic_optimum() {
    // Rosenbrock-style curved valley; the FD-driven quasi-Newton loop has to
    // track it without analytic gradients.
    let f = |x: ArrayView1<f64>| {
        100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
    };
    let x0 = ndarray::array![-1.2, 1.0];
    let lower = ndarray::array![-2.0, -2.0];
    let upper = ndarray::array![2.0, 2.0];
    let (best, value) =
        rpmbo_core::optimize::minimize_box(&f, x0, lower.view(), upper.view(), 1500);
    assert!(value < 1e-6);
    // Gradient vanishes at the solution.
    let g = finite(f, &best);
    assert!(g.iter().all(|v| v.abs() < 1e-2));
}
