use super::*;
use crate::eigensolve::lowest_eigenpairs;
use crate::modes::{channel_rate, extract_beta_tilde, LimitingSpectrum};
use crate::stripgrid::{assemble_double, assemble_limiting};
use num_complex::Complex64;

const WIDTH: f64 = std::f64::consts::PI;
const H: f64 = 0.1;

struct Fixture {
    minus: PerturbationSpec,
    plus: PerturbationSpec,
    op_m: DiscreteOperator,
    op_p: DiscreteOperator,
    lambda: f64,
    psi_m: Vec<Vec<f64>>,
    psi_p: Vec<Vec<f64>>,
    beta_m: f64,
    beta_p: f64,
}

impl Fixture {
    fn new(minus: PerturbationSpec, plus: PerturbationSpec) -> Self {
        let grid = StripGrid::symmetric(WIDTH, H, 17.0).unwrap();
        let op_m = assemble_limiting(&grid, &minus).unwrap();
        let op_p = assemble_limiting(&grid, &plus).unwrap();
        let sm = LimitingSpectrum::compute(&op_m, &minus, Side::Minus, 4).unwrap();
        let sp = LimitingSpectrum::compute(&op_p, &plus, Side::Plus, 4).unwrap();
        let lambda = sm.levels.first().or(sp.levels.first()).unwrap().lambda;
        let pick = |s: &LimitingSpectrum| {
            s.level_near(lambda, 1e-9)
                .map(|lv| (lv.vectors.clone(), lv.beta.unwrap()))
                .unwrap_or((Vec::new(), 0.0))
        };
        let (psi_m, beta_m) = pick(&sm);
        let (psi_p, beta_p) = pick(&sp);
        Self {
            minus,
            plus,
            op_m,
            op_p,
            lambda,
            psi_m,
            psi_p,
            beta_m,
            beta_p,
        }
    }

    fn sides(&self) -> (LimitingSide<'_>, LimitingSide<'_>) {
        (
            LimitingSide {
                spec: &self.minus,
                op: &self.op_m,
                psi: &self.psi_m,
            },
            LimitingSide {
                spec: &self.plus,
                op: &self.op_p,
                psi: &self.psi_p,
            },
        )
    }

    fn reduction(&self, l: f64) -> Reduction<'_> {
        let (m, p) = self.sides();
        Reduction::new(m, p, self.lambda, l).unwrap()
    }

    fn s(&self) -> f64 {
        channel_rate(self.op_m.grid(), 1, self.lambda).unwrap()
    }

    /// Eigenvalues of the double operator within `0.1` of `lambda*`.
    fn direct(&self, l: f64) -> (StripGrid, Vec<f64>, Vec<Vec<f64>>) {
        let grid = StripGrid::symmetric(WIDTH, H, l + 17.0).unwrap();
        let op = assemble_double(&grid, &self.minus, &self.plus, l).unwrap();
        let res = lowest_eigenpairs(&op, 8, grid.threshold()).unwrap();
        let (mut vals, mut vecs) = (Vec::new(), Vec::new());
        for (v, u) in res.eigenvalues.iter().zip(res.eigenvectors) {
            if (v - self.lambda).abs() < 0.1 {
                vals.push(*v);
                vecs.push(u);
            }
        }
        (grid, vals, vecs)
    }
}

fn well() -> PerturbationSpec {
    PerturbationSpec::square_well(1.0, -1.0)
}

fn barrier() -> PerturbationSpec {
    PerturbationSpec::square_well(1.0, 0.5)
}

#[test]
fn roots_small_cases() {
    let r = tau_roots(&[vec![0.3]]).unwrap();
    assert_eq!(r, vec![Complex64::new(0.3, 0.0)]);
    let c = 2.5e-4;
    let r = tau_roots(&[vec![0.0, c], vec![c, 0.0]]).unwrap();
    assert_eq!(r[0].re, -c);
    assert_eq!(r[1].re, c);
    let d = vec![vec![3.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, 2.0]];
    let r: Vec<f64> = tau_roots(&d).unwrap().iter().map(|z| z.re).collect();
    for (x, y) in r.iter().zip([-1.0, 2.0, 3.0]) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(tau_roots(&vec![vec![0.0; 7]; 7]).is_err());
}

#[test]
fn roots_match_symmetric_eigenvalues() {
    let a = vec![
        vec![1e-5, 3e-5, -2e-6, 0.0],
        vec![3e-5, -2e-5, 1e-5, 4e-6],
        vec![-2e-6, 1e-5, 5e-6, 2e-5],
        vec![0.0, 4e-6, 2e-5, -1e-6],
    ];
    let flat: Vec<f64> = a.iter().flatten().copied().collect();
    let (mut vals, _) = crate::eigensolve::jacobi_eigen(&flat, 4).unwrap();
    vals.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let roots = tau_roots(&a).unwrap();
    for (z, v) in roots.iter().zip(&vals) {
        assert!((z.re - v).abs() < 1e-15 && z.im.abs() < 1e-15, "{z} vs {v}");
    }
    let c = characteristic_polynomial(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    assert_eq!(c, vec![-2.0, -5.0, 1.0]);
}

#[test]
fn coefficient_vectors() {
    assert_eq!(eigvec_coeffs(&[vec![0.4]], 0.4).unwrap(), vec![vec![1.0]]);
    let c = 1e-4;
    let a = vec![vec![0.0, c], vec![c, 0.0]];
    let lo = eigvec_coeffs(&a, -c).unwrap();
    let hi = eigvec_coeffs(&a, c).unwrap();
    assert_eq!(lo.len(), 1);
    let r = 0.5f64.sqrt();
    assert!((lo[0][0] - r).abs() < 1e-12 && (lo[0][1] + r).abs() < 1e-12);
    assert!((hi[0][0] - r).abs() < 1e-12 && (hi[0][1] - r).abs() < 1e-12);
    // a double root has two null directions
    let both = eigvec_coeffs(&[vec![0.2, 0.0], vec![0.0, 0.2]], 0.2).unwrap();
    assert_eq!(both.len(), 2);
}

#[test]
fn closed_form_predictions() {
    let beta: f64 = 1.3;
    for l in [3.0, 5.0] {
        let p = predict_two_sided(0.75, beta, beta, 1.0, l).unwrap();
        let gap = 2.0 * beta * beta * (-l as f64).exp();
        assert!((p.gap.unwrap() - gap).abs() < 1e-15 * gap.max(1.0));
        assert!((0.5 * (p.eigenvalues[0] + p.eigenvalues[1]) - 0.75).abs() < 1e-15);
    }
    let g5 = predict_two_sided(0.75, 0.7, 1.1, 1.0, 5.0).unwrap().gap.unwrap();
    let g6 = predict_two_sided(0.75, 0.7, 1.1, 1.0, 6.0).unwrap().gap.unwrap();
    assert!((g6 / g5 - (-1.0f64).exp()).abs() < 1e-12);
    assert_eq!(predict_two_sided(0.75, 0.0, 1.0, 1.0, 4.0).unwrap().gap, Some(0.0));

    let one = predict_one_sided(0.75, 1.0, 1.0, 1.0, 3.0, Side::Minus).unwrap();
    assert!((one.eigenvalues[0] - 0.75 - (-6.0f64).exp()).abs() < 1e-15);
    let flat = predict_one_sided(0.75, 1.0, 0.0, 1.0, 3.0, Side::Minus).unwrap();
    assert_eq!(flat.eigenvalues[0], 0.75);
    assert!(predict_one_sided(1.2, 1.0, 1.0, 1.0, 3.0, Side::Plus).is_err());

    let zero = CouplingMatrix::with_entries(0.6, 5.0, 1, 1, vec![vec![0.0; 2]; 2]).unwrap();
    assert_eq!(predict_thm14(0.6, &zero).eigenvalues, vec![0.6, 0.6]);
    let json = serde_json::to_string(&one).unwrap();
    assert!(json.contains("\"one-sided\""));
}

#[test]
fn transfer_decays_with_distance() {
    let fx = Fixture::new(well(), barrier());
    let (m, p) = fx.sides();
    let nbox = fx.reduction(5.0).phi_vectors().unwrap()[0].minus.len();
    let f: Vec<f64> = (0..nbox).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let zero = vec![0.0; nbox];
    // plus -> minus, regular resolvent of the barrier side
    let out = apply_t6(&fx.minus, p, Side::Plus, fx.lambda, 5.0, &zero).unwrap();
    assert!(out.iter().all(|&x| x == 0.0));
    let t = |l: f64| {
        let v = apply_t6(&fx.minus, p, Side::Plus, fx.lambda, l, &f).unwrap();
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let snap = |l: f64| snap_distance(l, H) as f64 * fx.op_m.grid().h;
    let ratio = t(6.0) / t(5.0);
    let expect = (-2.0 * fx.s() * (snap(6.0) - snap(5.0))).exp();
    assert!((ratio / expect - 1.0).abs() < 0.05, "{ratio} vs {expect}");
    let none = PerturbationSpec::zero(1.0);
    let out = apply_t6(&none, p, Side::Plus, fx.lambda, 5.0, &f).unwrap();
    assert!(out.iter().all(|&x| x == 0.0));
    // the well side has lambda* in its spectrum: T_6 is singular there
    assert!(apply_t6(&fx.plus, m, Side::Minus, fx.lambda, 5.0, &f).is_err());
    assert!(apply_t7(&fx.plus, LimitingSide { psi: &[], ..m }, Side::Minus, fx.lambda, 5.0, &f).is_err());
}

#[test]
fn pole_decomposition_of_transfer() {
    let fx = Fixture::new(well(), barrier());
    let (m, _) = fx.sides();
    let red = fx.reduction(5.0);
    let nbox = red.phi_vectors().unwrap()[0].minus.len();
    let f: Vec<f64> = (0..nbox).map(|i| ((i * 104729) % 17) as f64 / 17.0 - 0.4).collect();
    let t7 = apply_t7(&fx.plus, m, Side::Minus, fx.lambda, 5.0, &f).unwrap();
    let np = red.phi_vectors().unwrap()[0].plus.len();
    let pair = BoxPair { minus: f.clone(), plus: vec![0.0; np] };
    let coef = red.t1(0, &pair);
    // the pole term is psi continued through the free strip at the running energy
    let defect = |delta: f64| {
        let lam = fx.lambda + delta;
        let (m, p) = fx.sides();
        let phi = Reduction::new(m, p, lam, 5.0).unwrap().phi_vectors().unwrap()[0].plus.clone();
        let t6 = apply_t6(&fx.plus, m, Side::Minus, lam, 5.0, &f).unwrap();
        t6.iter()
            .zip(&phi)
            .zip(&t7)
            .map(|((a, b), c)| (a + b * coef / delta - c).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let (d1, d2) = (defect(1e-4), defect(2e-4));
    assert!((d2 / d1 - 2.0).abs() < 0.1, "{d1} {d2}");
}

#[test]
fn mirror_wells_two_sided() {
    let fx = Fixture::new(well(), well());
    assert!((fx.beta_m - fx.beta_p).abs() < 1e-6 * fx.beta_m);
    let red = fx.reduction(6.0);
    let phis = red.phi_vectors().unwrap();
    let (n1, n2) = (phis[0].norm(H), phis[1].norm(H));
    assert!((n1 - n2).abs() < 1e-3 * n1);
    let cm = red.coupling_matrix().unwrap();
    assert!((cm.entries[0][1] - cm.entries[1][0]).abs() < 1e-6 * cm.entries[0][1].abs());
    let s = fx.s();
    let l = red.distance();
    // the coupling entry is negative for positive amplitudes
    let closed = -2.0 * s * fx.beta_m * fx.beta_p * (-2.0 * l * s).exp();
    assert!((cm.entries[0][1] / closed - 1.0).abs() < 0.1, "{} vs {closed}", cm.entries[0][1]);
    assert!(cm.roots[0][0] * cm.roots[1][0] < 0.0);
    assert!(cm.contraction < 0.1);
    // lower root: even combination
    let lo = if cm.roots[0][0] < cm.roots[1][0] { 0 } else { 1 };
    let k = &cm.vectors[lo];
    assert!((k[0] - k[1]).abs() < 1e-6, "{cm:?}");

    let pred = predict_thm14(fx.lambda, &cm);
    let (grid, direct, vecs) = fx.direct(6.0);
    assert_eq!(direct.len(), 2);
    let gap = direct[1] - direct[0];
    for (d, p) in direct.iter().zip(&pred.eigenvalues) {
        assert!((d - p).abs() < 0.1 * gap, "{d} vs {p}");
    }
    let closed = predict_two_sided(fx.lambda, fx.beta_m, fx.beta_p, grid.threshold(), l).unwrap();
    assert!((closed.gap.unwrap() / gap - 1.0).abs() < 0.1);

    let synth = red.synthesize_eigenfunction(k, &grid).unwrap();
    let overlap = grid.inner(&synth, &vecs[0]).abs();
    assert!(overlap > 0.99, "overlap {overlap}");
    // even in x1
    let mut worst = 0.0f64;
    for c in grid.col_lo..=grid.col_hi {
        for kk in 0..grid.ny {
            worst = worst.max((synth[grid.index(c, kk)] - synth[grid.index(-c, kk)]).abs());
        }
    }
    assert!(worst < 1e-8);
    // repeated runs are bitwise identical
    assert_eq!(fx.reduction(6.0).coupling_matrix().unwrap(), cm);
}

#[test]
fn coupling_entries_decay_with_distance() {
    let fx = Fixture::new(well(), well());
    let n = |l: f64| fx.reduction(l).phi_vectors().unwrap()[0].norm(H);
    let r5 = fx.reduction(5.0).distance();
    let r6 = fx.reduction(6.0).distance();
    let ratio = n(6.0) / n(5.0);
    let expect = (-2.0 * fx.s() * (r6 - r5)).exp();
    assert!((ratio / expect - 1.0).abs() < 0.05);
    let near = fx.reduction(6.0).coupling_matrix().unwrap();
    let far = fx.reduction(12.0).coupling_matrix().unwrap();
    let expect = (-2.0 * fx.s() * (far.l - near.l)).exp();
    assert!((far.entries[0][1] / near.entries[0][1] / expect - 1.0).abs() < 0.05);
}

#[test]
fn one_sided_entry_and_shift() {
    let fx = Fixture::new(well(), barrier());
    assert_eq!((fx.psi_m.len(), fx.psi_p.len()), (1, 0));
    let (bt, _) = extract_beta_tilde(&fx.op_p, &fx.plus, fx.lambda, Side::Minus).unwrap();
    assert!(bt > 0.0);
    let red = fx.reduction(5.0);
    let cm = red.coupling_matrix().unwrap();
    let s = fx.s();
    let l = red.distance();
    let closed = 2.0 * s * fx.beta_m * fx.beta_m * bt * (-4.0 * l * s).exp();
    assert!((cm.entries[0][0] / closed - 1.0).abs() < 0.2, "{} vs {closed}", cm.entries[0][0]);
    let (_, direct, _) = fx.direct(5.0);
    assert_eq!(direct.len(), 1);
    assert!(direct[0] > fx.lambda, "repulsive partner raises the level");
    let shift = direct[0] - fx.lambda;
    assert!((cm.entries[0][0] / shift - 1.0).abs() < 0.05, "{} vs {shift}", cm.entries[0][0]);
}

#[test]
fn exchange_symmetry() {
    let a = Fixture::new(well(), barrier());
    let b = Fixture::new(barrier(), well());
    let ca = a.reduction(5.0).coupling_matrix().unwrap();
    let cb = b.reduction(5.0).coupling_matrix().unwrap();
    assert_eq!((cb.p_minus, cb.p_plus), (0, 1));
    assert!((ca.entries[0][0] - cb.entries[0][0]).abs() < 1e-8 * ca.entries[0][0].abs());
    assert!((ca.roots[0][0] - cb.roots[0][0]).abs() < 1e-8 * ca.roots[0][0].abs());
}

#[test]
fn reduction_refuses_short_distances() {
    let fx = Fixture::new(well(), well());
    let (m, p) = fx.sides();
    assert!(matches!(Reduction::new(m, p, fx.lambda, 1.5), Err(Error::Geometry(_))));
}

