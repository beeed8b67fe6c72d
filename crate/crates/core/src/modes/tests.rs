use super::*;
use crate::eigensolve::lowest_eigenpairs;
use crate::stripgrid::{assemble_limiting, Field, PerturbationSpec};
use proptest::prelude::*;

const H: f64 = 0.1;
const WIDTH: f64 = std::f64::consts::PI;

fn well(depth: f64) -> PerturbationSpec {
    PerturbationSpec::square_well(1.0, -depth)
}

fn ground_state(spec: &PerturbationSpec, half_length: f64) -> (StripGrid, DiscreteOperator, f64, Vec<f64>) {
    let grid = StripGrid::symmetric(WIDTH, H, half_length).unwrap();
    let op = assemble_limiting(&grid, spec).unwrap();
    let res = lowest_eigenpairs(&op, 4, grid.threshold()).unwrap();
    let mut v = res.eigenvectors[0].clone();
    // positive ground state
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (grid, op, res.eigenvalues[0], v)
}

/// Exact ground state of the separable discrete square well: the transverse
/// factor is the sampled sine and the longitudinal factor solves a 1D
/// three-term recurrence, matched at the well edge. Returns `(lambda, beta)`
/// on the infinite strip.
fn discrete_square_well(depth: f64, cols: i64, h: f64, nu1: f64) -> (f64, f64) {
    let theta = |e: f64| (1.0 - 0.5 * h * h * (e + depth)).acos();
    let q = |e: f64| {
        let t = -h * h * e;
        1.0 + 0.5 * t - (t + 0.25 * t * t).sqrt()
    };
    let a = cols as f64;
    let f = |e: f64| (theta(e) * (a + 1.0)).cos() - q(e) * (theta(e) * a).cos();
    let (mut lo, mut hi) = (-depth + 1e-12, -1e-14);
    assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e = 0.5 * (lo + hi);
    let (th, qq) = (theta(e), q(e));
    let c = (th * a).cos() / qq.powf(a);
    let inside: f64 = (-cols..=cols).map(|i| (th * i as f64).cos().powi(2)).sum();
    let tail = 2.0 * c * c * qq.powf(2.0 * (a + 1.0)) / (1.0 - qq * qq);
    let norm = (h * (inside + tail)).sqrt();
    (nu1 + e, c / norm)
}

#[test]
fn projection_of_transverse_mode() {
    let grid = StripGrid::symmetric(WIDTH, H, 2.0).unwrap();
    let phi = mode_samples(&grid, 1);
    let u: Vec<f64> = (0..grid.dim()).map(|i| phi[grid.node(i).1]).collect();
    assert!((mode_project(&u, &grid, 1, 0.5).unwrap() - 1.0).abs() < 1e-13);
    assert!(mode_project(&u, &grid, 2, 0.5).unwrap().abs() < 1e-13);
    let zero = vec![0.0; grid.dim()];
    assert_eq!(mode_project(&zero, &grid, 3, -1.0).unwrap(), 0.0);
    assert!(mode_project(&u, &grid, 1, 50.0).is_err());
}

#[test]
fn separable_well_matches_discrete_oracle() {
    let (grid, _, lambda, psi) = ground_state(&well(1.0), 14.0);
    let cols = crate::stripgrid::support_columns(1.0, grid.h);
    let (lam_exact, beta_exact) = discrete_square_well(1.0, cols, grid.h, grid.threshold());
    let trunc = (-2.0 * (grid.threshold() - lambda).sqrt() * 13.0).exp();
    assert!((lambda - lam_exact).abs() < 10.0 * trunc, "{lambda} vs {lam_exact}");
    let (beta, prof) = extract_beta(&psi, &grid, lambda, Side::Minus, 1.0).unwrap();
    assert!((beta - beta_exact).abs() < 1e-6 * beta_exact, "{beta} vs {beta_exact}");
    assert!(prof.deviation < 1e-6);
}

#[test]
fn discrete_oracle_approaches_continuum() {
    // k tan k = kappa, k^2 + kappa^2 = 1 for unit depth and half-width
    let (mut lo, mut hi) = (0.1f64, 1.0f64);
    for _ in 0..200 {
        let k = 0.5 * (lo + hi);
        if k * k.tan() < (1.0 - k * k).sqrt() {
            lo = k;
        } else {
            hi = k;
        }
    }
    let k = 0.5 * (lo + hi);
    let lam_cont = k * k;
    // effective half-width of the node-sampled well is (A + 1/2) h
    let h = 1.0 / 200.5;
    let (lam, _) = discrete_square_well(1.0, 200, h, 1.0);
    assert!((lam - lam_cont).abs() < 1e-4, "{lam} vs {lam_cont}");
}

#[test]
fn far_field_slope_is_decay_rate() {
    let (grid, _, lambda, psi) = ground_state(&well(1.0), 14.0);
    let xs: Vec<f64> = [4.0, 5.0, 6.0].iter().map(|&x| grid.x1(grid.snap(x))).collect();
    let a: Vec<f64> = xs.iter().map(|&x| mode_project(&psi, &grid, 1, x).unwrap().ln()).collect();
    let s = channel_rate(&grid, 1, lambda).unwrap();
    for i in 0..2 {
        let slope = (a[i] - a[i + 1]) / (xs[i + 1] - xs[i]);
        assert!((slope - s).abs() < 0.01 * s);
    }
    let cols = station_window(&grid, 1.0, lambda, Side::Minus).unwrap();
    let prof = decay_profile(&psi, &grid, 1, lambda, Side::Minus, &cols).unwrap();
    assert!((effective_rate(&prof).unwrap() - s).abs() < 0.01 * s);
}

#[test]
fn beta_is_mirror_symmetric() {
    let spec = PerturbationSpec::potential(
        1.2,
        Field::Gaussian {
            amplitude: -2.0,
            width_x1: 0.5,
            width_x2: Some(0.8),
            center_x2: Some(1.2),
        },
    );
    let (grid, _, lambda, psi) = ground_state(&spec, 14.0);
    let (bm, _) = extract_beta(&psi, &grid, lambda, Side::Minus, 1.2).unwrap();
    let (bp, _) = extract_beta(&psi, &grid, lambda, Side::Plus, 1.2).unwrap();
    assert!((bm - bp).abs() < 1e-3 * bm);
}

#[test]
fn beta_stable_under_window_and_length() {
    let (grid, _, lambda, psi) = ground_state(&well(1.0), 14.0);
    let cols = station_window(&grid, 1.0, lambda, Side::Minus).unwrap();
    let (beta, _) = extract_beta(&psi, &grid, lambda, Side::Minus, 1.0).unwrap();
    for shift in [-2i64, 2] {
        let moved: Vec<i64> = cols.iter().map(|c| c + shift).collect();
        let p = decay_profile(&psi, &grid, 1, lambda, Side::Minus, &moved).unwrap();
        assert!((p.amplitude - beta).abs() < 0.01 * beta);
    }
    let (g2, _, l2, psi2) = ground_state(&well(1.0), 16.0);
    let (b2, _) = extract_beta(&psi2, &g2, l2, Side::Minus, 1.0).unwrap();
    assert!((b2 - beta).abs() < 0.01 * beta);
    // deeper well: larger decay rate, same consistency across station sets
    let (g3, _, l3, psi3) = ground_state(&well(1.5), 14.0);
    assert!(l3 < lambda);
    let c3 = station_window(&g3, 1.0, l3, Side::Minus).unwrap();
    let half = c3.len() / 2;
    let p1 = decay_profile(&psi3, &g3, 1, l3, Side::Minus, &c3[..half]).unwrap();
    let p2 = decay_profile(&psi3, &g3, 1, l3, Side::Minus, &c3[half..]).unwrap();
    assert!((p1.amplitude - p2.amplitude).abs() < 0.01 * p1.amplitude);
}

#[test]
fn synthetic_far_field_recovered() {
    let grid = StripGrid::symmetric(WIDTH, H, 14.0).unwrap();
    let lambda = 0.75;
    let (k1, k2) = (discrete_rate(&grid, 1, lambda).unwrap(), discrete_rate(&grid, 2, lambda).unwrap());
    let (p1, p2) = (mode_samples(&grid, 1), mode_samples(&grid, 2));
    let (x_end, beta0) = (grid.x_range().1, 0.8);
    let u: Vec<f64> = (0..grid.dim())
        .map(|i| {
            let (c, k) = grid.node(i);
            let x = grid.x1(c);
            // decaying field reflected at the Dirichlet end, plus a second channel
            beta0 * ((-k1 * x).exp() - (-k1 * (2.0 * x_end - x)).exp()) * p1[k] + 0.3 * (-k2 * x).exp() * p2[k]
        })
        .collect();
    let (beta, prof) = extract_beta(&u, &grid, lambda, Side::Minus, 1.0).unwrap();
    assert!((beta - beta0).abs() < 1e-12);
    assert!(prof.deviation < 1e-12);
}

#[test]
fn effective_rate_of_exact_exponential() {
    let prof = DecayProfile {
        mode: 1,
        side: Side::Minus,
        stations: vec![1.0, 2.0, 3.5, 5.0],
        alpha: [1.0, 2.0, 3.5, 5.0].iter().map(|x: &f64| (-0.5 * x).exp()).collect(),
        weighted: vec![1.0; 4],
        amplitude: 1.0,
        rate: None,
        deviation: 0.0,
    };
    assert!((effective_rate(&prof).unwrap() - 0.5).abs() < 1e-12);
    let short = DecayProfile {
        stations: vec![1.0, 2.0],
        alpha: vec![0.5, 0.2],
        ..prof.clone()
    };
    assert!(matches!(effective_rate(&short), Err(Error::InsufficientData(_))));
    let mirrored = DecayProfile {
        side: Side::Plus,
        stations: prof.stations.iter().map(|x| -x).collect(),
        ..prof
    };
    assert!((effective_rate(&mirrored).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn refuses_near_threshold_and_flat_fields() {
    let grid = StripGrid::symmetric(WIDTH, H, 14.0).unwrap();
    let phi = mode_samples(&grid, 1);
    let u: Vec<f64> = (0..grid.dim()).map(|i| phi[grid.node(i).1]).collect();
    let nu = grid.threshold();
    assert!(matches!(
        extract_beta(&u, &grid, nu * 0.99, Side::Minus, 1.0),
        Err(Error::ThresholdViolation { .. })
    ));
    assert!(matches!(
        extract_beta(&u, &grid, 0.5, Side::Minus, 1.0),
        Err(Error::UnstableExtraction { .. })
    ));
    let short = StripGrid::symmetric(WIDTH, H, 4.0).unwrap();
    assert!(matches!(station_window(&short, 1.0, 0.5, Side::Minus), Err(Error::Geometry(_))));
}

#[test]
fn rotation_concentrates_far_field() {
    let grid = StripGrid::symmetric(WIDTH, H, 8.0).unwrap();
    let lambda = 0.6;
    let kappa = discrete_rate(&grid, 1, lambda).unwrap();
    let (p1, p2) = (mode_samples(&grid, 1), mode_samples(&grid, 2));
    // two orthonormal functions: pure phi_2 content and a decaying phi_1 bump
    let raw_a: Vec<f64> = (0..grid.dim())
        .map(|i| {
            let (c, k) = grid.node(i);
            (-kappa * grid.x1(c).abs()).exp() * p1[k]
        })
        .collect();
    let raw_b: Vec<f64> = (0..grid.dim())
        .map(|i| {
            let (c, k) = grid.node(i);
            (-grid.x1(c).powi(2)).exp() * p2[k]
        })
        .collect();
    let na = grid.norm(&raw_a);
    let nb = grid.norm(&raw_b);
    let ea: Vec<f64> = raw_a.iter().map(|x| x / na).collect();
    let eb: Vec<f64> = raw_b.iter().map(|x| x / nb).collect();
    let (c, s) = (0.6, 0.8);
    let psi = vec![
        ea.iter().zip(&eb).map(|(a, b)| c * a - s * b).collect::<Vec<_>>(),
        ea.iter().zip(&eb).map(|(a, b)| s * a + c * b).collect::<Vec<_>>(),
    ];
    let station = grid.snap(4.0);
    let xs = grid.x1(station);
    let alpha = |u: &[f64]| mode_project(u, &grid, 1, xs).unwrap() * (kappa * xs).exp();
    let full = alpha(&ea);
    let (rot, beta) = rotate_eigenbasis(&psi, &grid, lambda, Side::Minus, station).unwrap();
    assert!((beta - full.abs()).abs() < 1e-12 * full.abs());
    assert!((alpha(&rot[0]) - beta).abs() < 1e-12 * beta);
    assert!(alpha(&rot[1]).abs() < 1e-12 * beta);
    for i in 0..2 {
        for j in 0..2 {
            let g = grid.inner(&rot[i], &rot[j]);
            assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
    // p = 1 with a negative amplitude is a sign flip
    let neg: Vec<f64> = ea.iter().map(|x| -x).collect();
    let (r1, b1) = rotate_eigenbasis(&[neg], &grid, lambda, Side::Minus, station).unwrap();
    assert!((b1 - full.abs()).abs() < 1e-12);
    assert!(r1[0].iter().zip(&ea).all(|(x, y)| (x - y).abs() < 1e-14));
    // nothing in the first channel
    let (_, b0) = rotate_eigenbasis(&[eb.clone()], &grid, lambda, Side::Minus, station).unwrap();
    assert_eq!(b0, 0.0);
}

#[test]
fn modal_tail_continues_eigenfunction() {
    let (short, _, lambda, psi) = ground_state(&well(1.0), 14.0);
    let (long, _, lam_long, psi_long) = ground_state(&well(1.0), 24.0);
    let tail = ModalTail::new(&psi, &short, 11, 1, lambda).unwrap();
    let s = channel_rate(&short, 1, lambda).unwrap();
    let trunc = (-2.0 * s * (14.0 - 1.1)).exp();
    assert!((lambda - lam_long).abs() < 10.0 * trunc);
    for c in [60i64, 120, 150] {
        let col = tail.column(c).unwrap();
        let base = long.index(c, 0);
        let scale = psi_long[base..base + long.ny].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for k in 0..long.ny {
            assert!((col[k] - psi_long[base + k]).abs() < 1e-4 * scale, "column {c}");
        }
    }
    assert!(tail.column(5).is_err());
}

#[test]
fn beta_tilde_sign_and_linearity() {
    let grid = StripGrid::symmetric(WIDTH, H, 14.0).unwrap();
    let lambda = 0.6;
    let zero = PerturbationSpec::zero(1.0);
    let op0 = assemble_limiting(&grid, &zero).unwrap();
    let (b0, _) = extract_beta_tilde(&op0, &zero, lambda, Side::Minus).unwrap();
    assert_eq!(b0, 0.0);

    let barrier = PerturbationSpec::square_well(1.0, 0.5);
    let op = assemble_limiting(&grid, &barrier).unwrap();
    let (bt, prof) = extract_beta_tilde(&op, &barrier, lambda, Side::Minus).unwrap();
    assert!(bt > 0.0, "repulsive barrier gives {bt}");
    assert!(prof.deviation < 1e-6);
    assert!(prof.stations.iter().all(|&x| x < 0.0));
    // mirror configuration: barrier on the left of a well
    let (bt_m, prof_m) = extract_beta_tilde(&op, &barrier, lambda, Side::Plus).unwrap();
    assert!((bt_m - bt).abs() < 1e-10 * bt);
    assert!(prof_m.stations.iter().all(|&x| x > 0.0));

    let small = |c: f64| {
        let spec = barrier.scaled(c);
        let op = assemble_limiting(&grid, &spec).unwrap();
        extract_beta_tilde(&op, &spec, lambda, Side::Minus).unwrap().0
    };
    let (b1, b2) = (small(1e-3), small(2e-3));
    assert!((b2 / b1 - 2.0).abs() < 0.02);

    let well_op = assemble_limiting(&grid, &well(1.0)).unwrap();
    let lam_well = lowest_eigenpairs(&well_op, 4, grid.threshold()).unwrap().eigenvalues[0];
    assert!(matches!(
        extract_beta_tilde(&well_op, &well(1.0), lam_well, Side::Minus),
        Err(Error::NearSingular { .. })
    ));
}

#[test]
fn limiting_spectrum_levels() {
    let grid = StripGrid::symmetric(WIDTH, H, 14.0).unwrap();
    let zero = PerturbationSpec::zero(1.0);
    let empty = LimitingSpectrum::compute(&assemble_limiting(&grid, &zero).unwrap(), &zero, Side::Minus, 4).unwrap();
    assert!(empty.levels.is_empty() && !empty.notes.is_empty());

    let spec = well(5.0);
    let op = assemble_limiting(&grid, &spec).unwrap();
    let spec_m = LimitingSpectrum::compute(&op, &spec, Side::Minus, 6).unwrap();
    assert!(spec_m.levels.len() >= 2);
    for lev in &spec_m.levels {
        assert_eq!(lev.multiplicity, 1);
        if let Some(b) = lev.beta {
            assert!(b >= 0.0);
            assert!(lev.plateau_deviation.map_or(b == 0.0, |d| d < 0.01));
        }
    }
    let json = serde_json::to_string(&spec_m).unwrap();
    let back: LimitingSpectrum = serde_json::from_str(&json).unwrap();
    assert_eq!(back.eigenvalues(), spec_m.eigenvalues());
}

#[test]
fn profile_csv_layout() {
    let prof = DecayProfile {
        mode: 1,
        side: Side::Minus,
        stations: vec![2.0, 3.0],
        alpha: vec![0.5, 0.25],
        weighted: vec![1.0, 1.0],
        amplitude: 1.0,
        rate: None,
        deviation: 0.0,
    };
    let mut buf = Vec::new();
    prof.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("x1,alpha_j,weighted_amplitude"));
    assert_eq!(text.lines().count(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn parseval_at_every_station(vals in proptest::collection::vec(-1.0f64..1.0, 5 * 9), col in -2i64..=2) {
        let grid = StripGrid::with_columns(1.7, 9, -2, 2).unwrap();
        let alpha = mode_coefficients(&vals, &grid, col);
        let base = grid.index(col, 0);
        let direct: f64 = grid.h * vals[base..base + grid.ny].iter().map(|x| x * x).sum::<f64>();
        let sum: f64 = alpha.iter().map(|a| a * a).sum();
        prop_assert!((sum - direct).abs() <= 1e-10);
    }
}

