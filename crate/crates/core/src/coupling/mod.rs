//! Reduction of the eigenvalue problem for two distant perturbations to a
//! `p x p` matrix equation.
//!
//! Unknowns live on the two support boxes: `f = (f_-, f_+)`. The transfer
//! `T_6` solves with one limiting operator, carries the solution a distance
//! `2l` through the free strip (exact modal tails) and applies the other
//! perturbation; `T_7` does the same with the reduced resolvent when the
//! source operator has `lambda*` in its spectrum. `T_3` pairs the two
//! transfers, and `A_ij = T_1^(i) (I + T_3)^{-1} phi_j`.

mod predict;
mod roots;

pub use predict::{predict_one_sided, predict_thm14, predict_two_sided, AsymptoticPrediction, Method};
pub use roots::{characteristic_polynomial, eigvec_coeffs, tau_roots, DURAND_KERNER_MAX_ITER, NULL_TOL};

use serde::{Deserialize, Serialize};

use crate::eigensolve::{DeflatedResolvent, Resolvent};
use crate::error::{Error, Result};
use crate::modes::{ExtendedField, ModalTail, Side};
use crate::stripgrid::{assemble_support_box, snap_distance, support_columns, DiscreteOperator, PerturbationSpec, StripGrid};

#[cfg(test)]
mod tests;

/// `(I + T_3)` is inverted by fixed-point iteration only while `||T_3||` stays below this.
pub const CONTRACTION_LIMIT: f64 = 0.5;
/// Relative increment at which the fixed-point iteration stops.
pub const FIXED_POINT_TOL: f64 = 1e-14;
pub const FIXED_POINT_MAX_ITER: usize = 60;
/// Shift `eps` of the bordered preconditioner in reduced-resolvent solves.
pub const DEFLATION_EPS: f64 = 1e-3;

/// One limiting operator with its perturbation and, if `lambda*` is one of its
/// eigenvalues, the rotated orthonormal eigenbasis.
#[derive(Debug, Clone, Copy)]
pub struct LimitingSide<'a> {
    pub spec: &'a PerturbationSpec,
    pub op: &'a DiscreteOperator,
    pub psi: &'a [Vec<f64>],
}

/// A pair of support-box functions.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxPair {
    pub minus: Vec<f64>,
    pub plus: Vec<f64>,
}

impl BoxPair {
    fn zeros(nm: usize, np: usize) -> Self {
        Self {
            minus: vec![0.0; nm],
            plus: vec![0.0; np],
        }
    }

    /// `h^2`-weighted norm.
    pub fn norm(&self, h: f64) -> f64 {
        h * self.minus.iter().chain(&self.plus).map(|x| x * x).sum::<f64>().sqrt()
    }

    fn sub(&self, other: &Self) -> Self {
        Self {
            minus: self.minus.iter().zip(&other.minus).map(|(a, b)| a - b).collect(),
            plus: self.plus.iter().zip(&other.plus).map(|(a, b)| a - b).collect(),
        }
    }
}

enum Solver<'a> {
    Regular(Resolvent<'a>),
    Deflated(DeflatedResolvent<'a>),
}

impl Solver<'_> {
    fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        match self {
            Solver::Regular(r) => r.solve(f),
            Solver::Deflated(r) => r.solve(f),
        }
    }
}

/// Transfer from the box of one side to the box of the other.
struct Channel<'a> {
    from: Side,
    grid: StripGrid,
    a_from: i64,
    a_to: i64,
    solver: Solver<'a>,
    target: DiscreteOperator,
    shift: i64,
    lambda: f64,
}

impl<'a> Channel<'a> {
    fn new(
        from: Side,
        source: LimitingSide<'a>,
        target_spec: &PerturbationSpec,
        lambda: f64,
        shift: i64,
    ) -> Result<Self> {
        let grid = *source.op.grid();
        let a_from = support_columns(source.spec.half_width, grid.h);
        let (target_box, target) = assemble_support_box(target_spec, grid.width, grid.ny)?;
        let a_to = target_box.col_hi;
        if 2 * shift - a_to < a_from + 1 {
            return Err(Error::geometry(format!(
                "distance of {shift} columns does not separate the supports ({a_from} + {a_to} columns)"
            )));
        }
        if !grid.contains_column(a_from + 1) || !grid.contains_column(-a_from - 1) {
            return Err(Error::geometry("limiting grid does not extend past the support"));
        }
        let solver = if source.psi.is_empty() {
            Solver::Regular(Resolvent::new(source.op, lambda)?)
        } else {
            Solver::Deflated(DeflatedResolvent::new(source.op, lambda, source.psi, DEFLATION_EPS)?)
        };
        Ok(Self {
            from,
            grid,
            a_from,
            a_to,
            solver,
            target,
            shift,
            lambda,
        })
    }

    fn embed(&self, f: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.grid.dim()];
        let start = self.grid.index(-self.a_from, 0);
        u[start..start + f.len()].copy_from_slice(f);
        u
    }

    /// `L_to S(+-2l) u` on the target box for a source-grid function `u` that is
    /// free beyond the source support.
    fn carry(&self, u: &[f64]) -> Result<Vec<f64>> {
        let dir = self.from.direction();
        let tail = ModalTail::new(u, &self.grid, dir * (self.a_from + 1), dir, self.lambda)?;
        let ny = self.grid.ny;
        let mut shifted = Vec::with_capacity(((2 * self.a_to + 1) as usize) * ny);
        for c in -self.a_to..=self.a_to {
            shifted.extend(tail.column(c + dir * 2 * self.shift)?);
        }
        Ok(self.target.mul(&shifted))
    }

    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.iter().all(|&x| x == 0.0) {
            return Ok(vec![0.0; ((2 * self.a_to + 1) as usize) * self.grid.ny]);
        }
        let u = self.solver.solve(&self.embed(f))?;
        self.carry(&u)
    }
}

/// Coupling matrix at `lambda*` with its roots and coefficient vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    pub lambda_star: f64,
    /// Distance actually realized on the grid.
    pub l: f64,
    pub p_minus: usize,
    pub p_plus: usize,
    pub entries: Vec<Vec<f64>>,
    /// `[re, im]`, ordered by modulus.
    pub roots: Vec<[f64; 2]>,
    /// Unit coefficient vectors, one per real root (empty for complex roots).
    pub vectors: Vec<Vec<f64>>,
    /// Largest observed `||T_3 g|| / ||g||` during the fixed-point solves.
    pub contraction: f64,
    pub iterations: usize,
}

impl CouplingMatrix {
    pub fn p(&self) -> usize {
        self.p_minus + self.p_plus
    }

    /// Fills roots and vectors from `entries`.
    pub fn with_entries(lambda_star: f64, l: f64, p_minus: usize, p_plus: usize, entries: Vec<Vec<f64>>) -> Result<Self> {
        let roots = tau_roots(&entries)?;
        let scale = entries.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut vectors = Vec::with_capacity(roots.len());
        for r in &roots {
            if r.im.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                vectors.push(Vec::new());
            } else {
                vectors.push(eigvec_coeffs(&entries, r.re)?.swap_remove(0));
            }
        }
        Ok(Self {
            lambda_star,
            l,
            p_minus,
            p_plus,
            entries,
            roots: roots.iter().map(|z| [z.re, z.im]).collect(),
            vectors,
            contraction: 0.0,
            iterations: 0,
        })
    }
}

/// The reduced problem for one distance.
pub struct Reduction<'a> {
    minus: LimitingSide<'a>,
    plus: LimitingSide<'a>,
    lambda: f64,
    shift: i64,
    h: f64,
    /// Minus box to plus box and back.
    to_plus: Channel<'a>,
    to_minus: Channel<'a>,
}

impl<'a> Reduction<'a> {
    pub fn new(minus: LimitingSide<'a>, plus: LimitingSide<'a>, lambda: f64, l: f64) -> Result<Self> {
        let (gm, gp) = (minus.op.grid(), plus.op.grid());
        if !gm.same_cross_section(gp) {
            return Err(Error::geometry("limiting operators use different cross-section grids"));
        }
        if !(l > 0.0) || l + 1e-9 < minus.spec.half_width + plus.spec.half_width {
            return Err(Error::geometry(format!(
                "distance {l} is below a_- + a_+ = {}",
                minus.spec.half_width + plus.spec.half_width
            )));
        }
        let shift = snap_distance(l, gm.h);
        Ok(Self {
            to_plus: Channel::new(Side::Minus, minus, plus.spec, lambda, shift)?,
            to_minus: Channel::new(Side::Plus, plus, minus.spec, lambda, shift)?,
            minus,
            plus,
            lambda,
            shift,
            h: gm.h,
        })
    }

    /// Distance realized on the grid, `round(l / h) h`.
    pub fn distance(&self) -> f64 {
        self.shift as f64 * self.h
    }

    pub fn p_minus(&self) -> usize {
        self.minus.psi.len()
    }

    pub fn p_plus(&self) -> usize {
        self.plus.psi.len()
    }

    /// `T_3 f`.
    pub fn apply_t3(&self, f: &BoxPair) -> Result<BoxPair> {
        Ok(BoxPair {
            minus: self.to_minus.apply(&f.plus)?,
            plus: self.to_plus.apply(&f.minus)?,
        })
    }

    /// `phi_i = (0, L_+ S(2l) psi_i^-)` followed by `(L_- S(-2l) psi_i^+, 0)`.
    pub fn phi_vectors(&self) -> Result<Vec<BoxPair>> {
        let (nm, np) = (self.to_minus.target.dim(), self.to_plus.target.dim());
        let mut out = Vec::with_capacity(self.p_minus() + self.p_plus());
        for psi in self.minus.psi {
            let mut v = BoxPair::zeros(nm, np);
            v.plus = self.to_plus.carry(psi)?;
            out.push(v);
        }
        for psi in self.plus.psi {
            let mut v = BoxPair::zeros(nm, np);
            v.minus = self.to_minus.carry(psi)?;
            out.push(v);
        }
        Ok(out)
    }

    /// `T_1^(i) f`: inner product of the box component with `psi_i` on its box.
    pub fn t1(&self, i: usize, f: &BoxPair) -> f64 {
        let (side, comp, psi) = if i < self.p_minus() {
            (&self.minus, &f.minus, &self.minus.psi[i])
        } else {
            (&self.plus, &f.plus, &self.plus.psi[i - self.p_minus()])
        };
        let grid = side.op.grid();
        let a = support_columns(side.spec.half_width, grid.h);
        let start = grid.index(-a, 0);
        let h = grid.h;
        h * h * comp.iter().zip(&psi[start..start + comp.len()]).map(|(x, y)| x * y).sum::<f64>()
    }

    /// `(I + T_3)^{-1} phi` by the iteration `g <- phi - T_3 g`. Returns the
    /// solution, the observed contraction ratio and the iteration count.
    pub fn solve_reduced(&self, phi: &BoxPair) -> Result<(BoxPair, f64, usize)> {
        let scale = phi.norm(self.h);
        if scale == 0.0 {
            return Ok((phi.clone(), 0.0, 0));
        }
        let mut g = phi.clone();
        let mut t_prev = self.apply_t3(&g)?;
        let mut ratio = t_prev.norm(self.h) / scale;
        for it in 1..=FIXED_POINT_MAX_ITER {
            if ratio > CONTRACTION_LIMIT {
                return Err(Error::ReductionRegime(format!(
                    "||T_3|| estimate {ratio:.3} exceeds {CONTRACTION_LIMIT} at l = {:.3}; increase the distance",
                    self.distance()
                )));
            }
            let next = phi.sub(&t_prev);
            let step = next.sub(&g).norm(self.h);
            let t_next = self.apply_t3(&next)?;
            if step > 0.0 {
                ratio = ratio.max(t_next.sub(&t_prev).norm(self.h) / step);
            }
            g = next;
            t_prev = t_next;
            if step <= FIXED_POINT_TOL * scale {
                return Ok((g, ratio, it));
            }
        }
        Err(Error::ReductionRegime(format!(
            "fixed-point iteration did not settle in {FIXED_POINT_MAX_ITER} steps"
        )))
    }

    pub fn coupling_matrix(&self) -> Result<CouplingMatrix> {
        let p = self.p_minus() + self.p_plus();
        if p == 0 {
            return Err(Error::invalid("the energy is not an eigenvalue of either limiting operator"));
        }
        let phis = self.phi_vectors()?;
        let mut entries = vec![vec![0.0; p]; p];
        let (mut contraction, mut iterations) = (0.0f64, 0);
        for (j, phi) in phis.iter().enumerate() {
            let (big_phi, ratio, it) = self.solve_reduced(phi)?;
            contraction = contraction.max(ratio);
            iterations += it;
            for (i, row) in entries.iter_mut().enumerate() {
                row[j] = self.t1(i, &big_phi);
            }
        }
        let mut out = CouplingMatrix::with_entries(self.lambda, self.distance(), self.p_minus(), self.p_plus(), entries)?;
        out.contraction = contraction;
        out.iterations = iterations;
        Ok(out)
    }

    /// `sum_j k_j psi_j^-(x1 + l) + sum_j k_{j+p_-} psi_j^+(x1 - l)` on `grid`,
    /// normalized.
    pub fn synthesize_eigenfunction(&self, k: &[f64], grid: &StripGrid) -> Result<Vec<f64>> {
        synthesize_eigenfunction(k, self.minus, self.plus, self.lambda, self.distance(), grid)
    }
}

/// `T_6` on a box function of the source side: `L_target S(+-2l) (H_source - lambda)^{-1} f`.
pub fn apply_t6(
    target: &PerturbationSpec,
    source: LimitingSide<'_>,
    source_side: Side,
    lambda: f64,
    l: f64,
    f: &[f64],
) -> Result<Vec<f64>> {
    let shift = snap_distance(l, source.op.grid().h);
    let regular = LimitingSide { psi: &[], ..source };
    Channel::new(source_side, regular, target, lambda, shift)?.apply(f)
}

/// `T_7` at `lambda*`: as [`apply_t6`] with the reduced resolvent of the source side.
pub fn apply_t7(
    target: &PerturbationSpec,
    source: LimitingSide<'_>,
    source_side: Side,
    lambda: f64,
    l: f64,
    f: &[f64],
) -> Result<Vec<f64>> {
    if source.psi.is_empty() {
        return Err(Error::invalid("the reduced resolvent needs the source eigenbasis"));
    }
    let shift = snap_distance(l, source.op.grid().h);
    Channel::new(source_side, source, target, lambda, shift)?.apply(f)
}

/// Coupling matrix of the pair at distance `l`.
pub fn coupling_matrix(minus: LimitingSide<'_>, plus: LimitingSide<'_>, lambda: f64, l: f64) -> Result<CouplingMatrix> {
    Reduction::new(minus, plus, lambda, l)?.coupling_matrix()
}

/// Superposition of the shifted limiting eigenfunctions with coefficients `k`.
pub fn synthesize_eigenfunction(
    k: &[f64],
    minus: LimitingSide<'_>,
    plus: LimitingSide<'_>,
    lambda: f64,
    l: f64,
    grid: &StripGrid,
) -> Result<Vec<f64>> {
    let (pm, pp) = (minus.psi.len(), plus.psi.len());
    if k.len() != pm + pp {
        return Err(Error::invalid(format!("{} coefficients for {} eigenfunctions", k.len(), pm + pp)));
    }
    for side in [&minus, &plus] {
        if !side.op.grid().same_cross_section(grid) {
            return Err(Error::geometry("target grid differs from the limiting grids across the strip"));
        }
    }
    let shift = snap_distance(l, grid.h);
    let mut u = vec![0.0; grid.dim()];
    let mut add = |side: &LimitingSide<'_>, psi: &[f64], coef: f64, offset: i64| -> Result<()> {
        let g = side.op.grid();
        let a = support_columns(side.spec.half_width, g.h);
        let ext = ExtendedField::new(psi, g, a, lambda)?;
        for c in grid.col_lo..=grid.col_hi {
            let col = ext.column(c + offset)?;
            let base = grid.index(c, 0);
            for (dst, v) in u[base..base + grid.ny].iter_mut().zip(col) {
                *dst += coef * v;
            }
        }
        Ok(())
    };
    for (j, psi) in minus.psi.iter().enumerate() {
        add(&minus, psi, k[j], shift)?;
    }
    for (j, psi) in plus.psi.iter().enumerate() {
        add(&plus, psi, k[pm + j], -shift)?;
    }
    let n = grid.norm(&u);
    if n == 0.0 {
        return Err(Error::Numerical("synthesized eigenfunction vanishes".into()));
    }
    u.iter_mut().for_each(|x| *x /= n);
    Ok(u)
}
