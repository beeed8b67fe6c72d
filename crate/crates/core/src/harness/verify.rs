use serde::{Deserialize, Serialize};

use super::{ClusterInfo, LadderReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    TwoSided,
    OneSided,
    MatrixA,
    Convergence,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [Theorem::TwoSided, Theorem::OneSided, Theorem::MatrixA, Theorem::Convergence];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::TwoSided => "two-sided",
            Theorem::OneSided => "one-sided",
            Theorem::MatrixA => "matrix-A",
            Theorem::Convergence => "convergence",
        }
    }
}

impl std::str::FromStr for Theorem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown theorem tag '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

/// Tolerances of the verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative deviation of the fitted gap rate from `2 s_1`.
    pub rate: f64,
    /// Relative deviation of the fitted gap prefactor from `4 |beta_- beta_+| s_1`.
    pub prefactor: f64,
    /// Minimum ratio of the midpoint-drift rate to the gap rate.
    pub midpoint_factor: f64,
    /// Relative deviation of the one-sided shift rate from `4 s_1`.
    pub shift_rate: f64,
    /// Largest residual-to-gap ratio of the matrix prediction at `matrix_a_at`.
    pub matrix_a: f64,
    pub matrix_a_at: f64,
    /// Cluster members must lie within this multiple of the gap from `lambda*`.
    pub spread: f64,
    /// Cardinality is required from this distance on.
    pub cardinality_from: f64,
    pub min_points: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rate: 0.03,
            prefactor: 0.15,
            midpoint_factor: 1.5,
            shift_rate: 0.05,
            matrix_a: 0.10,
            matrix_a_at: 8.0,
            spread: 1.5,
            cardinality_from: 5.0,
            min_points: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    /// Relative deviation for closeness checks, ratio for bounds.
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Reported but not part of the verdict.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub informative: bool,
}

impl Check {
    fn close(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        let margin = (measured / expected - 1.0).abs();
        Self {
            name: name.into(),
            measured,
            expected,
            margin,
            tolerance,
            pass: margin <= tolerance,
            informative: false,
        }
    }

    fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            expected: bound,
            margin: measured / bound,
            tolerance: 1.0,
            pass: measured <= bound,
            informative: false,
        }
    }

    fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            expected: bound,
            margin: measured / bound,
            tolerance: 1.0,
            pass: measured >= bound,
            informative: false,
        }
    }

    fn holds(name: impl Into<String>, ok: usize, total: usize) -> Self {
        Self {
            name: name.into(),
            measured: ok as f64,
            expected: total as f64,
            margin: if total == 0 { 1.0 } else { ok as f64 / total as f64 },
            tolerance: 1.0,
            pass: ok == total,
            informative: false,
        }
    }

    fn informative(mut self) -> Self {
        self.informative = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub theorem: Theorem,
    pub status: Status,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Verdict {
    fn inconclusive(theorem: Theorem, why: impl Into<String>) -> Self {
        Self {
            theorem,
            status: Status::Inconclusive,
            checks: Vec::new(),
            notes: vec![why.into()],
        }
    }

    fn from_checks(theorem: Theorem, checks: Vec<Check>, notes: Vec<String>) -> Self {
        let status = if checks.iter().all(|c| c.pass || c.informative) {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            theorem,
            status,
            checks,
            notes,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn two_sided_cluster(r: &LadderReport) -> Option<(usize, &ClusterInfo)> {
    r.clusters
        .iter()
        .enumerate()
        .find(|(_, c)| c.p_minus == 1 && c.p_plus == 1 && c.beta_minus.is_some() && c.beta_plus.is_some())
}

fn one_sided_cluster(r: &LadderReport) -> Option<(usize, &ClusterInfo)> {
    r.clusters
        .iter()
        .enumerate()
        .find(|(_, c)| c.well_side.is_some() && c.beta_tilde.is_some())
}

pub(super) fn applicable(r: &LadderReport, t: Theorem) -> bool {
    match t {
        Theorem::TwoSided => two_sided_cluster(r).is_some(),
        Theorem::OneSided => one_sided_cluster(r).is_some(),
        Theorem::MatrixA | Theorem::Convergence => !r.clusters.is_empty(),
    }
}

/// Evaluates one theorem's checks on a finished ladder.
pub fn verify(r: &LadderReport, t: Theorem, tol: &Tolerances) -> Verdict {
    match t {
        Theorem::TwoSided => two_sided(r, tol),
        Theorem::OneSided => one_sided(r, tol),
        Theorem::MatrixA => matrix_a(r, tol),
        Theorem::Convergence => convergence(r, tol),
    }
}

fn two_sided(r: &LadderReport, tol: &Tolerances) -> Verdict {
    let t = Theorem::TwoSided;
    let Some((k, c)) = two_sided_cluster(r) else {
        return Verdict::inconclusive(t, "no level shared by both limiting operators");
    };
    let s = &r.series[k];
    if s.gaps.len() < tol.min_points {
        return Verdict::inconclusive(t, format!("{} usable distances, need {}", s.gaps.len(), tol.min_points));
    }
    let Some(fit) = s.gap_fit else {
        return Verdict::inconclusive(t, "gap fit unavailable");
    };
    let (bm, bp) = (c.beta_minus.unwrap_or(0.0), c.beta_plus.unwrap_or(0.0));
    let mut checks = vec![
        Check::close("gap rate", fit.rate, 2.0 * c.s, tol.rate),
        Check::close("gap prefactor", fit.prefactor, 4.0 * (bm * bp).abs() * c.s, tol.prefactor),
    ];
    let mut notes = vec![format!("gap fit R^2 = {:.6}", fit.r2)];
    match s.midpoint_fit {
        Some(m) => checks.push(Check::at_least("midpoint rate", m.rate / fit.rate, tol.midpoint_factor)),
        None => notes.push("midpoint drift not fittable".into()),
    }
    let decreasing = s.gaps.windows(2).filter(|w| w[1][1] < w[0][1]).count();
    checks.push(Check::holds("gap decreasing", decreasing, s.gaps.len() - 1));
    Verdict::from_checks(t, checks, notes)
}

fn one_sided(r: &LadderReport, tol: &Tolerances) -> Verdict {
    let t = Theorem::OneSided;
    let Some((k, c)) = one_sided_cluster(r) else {
        return Verdict::inconclusive(t, "no simple level carried by one side only");
    };
    let s = &r.series[k];
    if s.shifts.len() < tol.min_points {
        return Verdict::inconclusive(t, format!("{} usable distances, need {}", s.shifts.len(), tol.min_points));
    }
    let Some(fit) = s.shift_fit else {
        return Verdict::inconclusive(t, "shift fit unavailable");
    };
    let bt = c.beta_tilde.unwrap_or(0.0);
    let beta = match c.well_side {
        Some(crate::modes::Side::Minus) => c.beta_minus,
        _ => c.beta_plus,
    }
    .unwrap_or(0.0);
    let n = s.shifts.len();
    let stated = s.shifts.iter().filter(|p| p[1].signum() == -bt.signum()).count();
    let entries: Vec<f64> = r
        .points
        .iter()
        .filter(|p| p.error.is_none() && p.members(k).len() == 1)
        .filter_map(|p| p.predictions.iter().find(|q| q.cluster == k))
        .filter_map(|q| q.coupling.as_ref().map(|cm| cm.entries[0][0]))
        .collect();
    let with_entry = s
        .shifts
        .iter()
        .zip(&entries)
        .filter(|(p, a)| p[1].signum() == a.signum())
        .count();
    let checks = vec![
        Check::close("shift rate", fit.rate, 4.0 * c.s, tol.shift_rate),
        Check::holds("shift sign opposite to beta~", stated, n),
        Check::holds("shift sign follows A_11", with_entry, entries.len()).informative(),
        Check::close("shift prefactor", fit.prefactor, 2.0 * c.s * beta * beta * bt.abs(), 0.2).informative(),
    ];
    let notes = vec![
        format!("shift fit R^2 = {:.6}", fit.r2),
        format!("beta~ = {bt:.6e}"),
    ];
    Verdict::from_checks(t, checks, notes)
}

fn matrix_a(r: &LadderReport, tol: &Tolerances) -> Verdict {
    let t = Theorem::MatrixA;
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    for (k, c) in r.clusters.iter().enumerate() {
        // (l, residual/scale, at floor)
        let mut rows: Vec<(f64, f64, bool)> = Vec::new();
        for pt in r.points.iter().filter(|p| p.error.is_none()) {
            let Some(pred) = pt.predictions.iter().find(|q| q.cluster == k).and_then(|q| q.matrix_a.as_ref()) else {
                continue;
            };
            let m = pt.members(k);
            if m.len() != pred.eigenvalues.len() {
                notes.push(format!(
                    "cluster {k}, l = {}: {} direct vs {} predicted eigenvalues",
                    pt.l,
                    m.len(),
                    pred.eigenvalues.len()
                ));
                continue;
            }
            let abs = m.iter().zip(&pred.eigenvalues).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = if m.len() >= 2 {
                m[m.len() - 1] - m[0]
            } else {
                (m[0] - c.lambda_star).abs()
            };
            rows.push((pt.l, abs / scale, abs <= 10.0 * r.residual_floor));
        }
        if rows.len() < tol.min_points {
            notes.push(format!("cluster {k}: {} usable distances", rows.len()));
            continue;
        }
        let above: Vec<&(f64, f64, bool)> = rows.iter().filter(|r| !r.2).collect();
        let falling = above.windows(2).filter(|w| w[1].1 < w[0].1).count();
        checks.push(Check::holds(
            format!("cluster {k} relative residual decreasing"),
            falling,
            above.len().saturating_sub(1),
        ));
        let at = rows
            .iter()
            .find(|r| (r.0 - tol.matrix_a_at).abs() < 1e-9)
            .or_else(|| rows.iter().rev().find(|r| !r.2))
            .unwrap_or(&rows[rows.len() - 1]);
        if at.2 {
            notes.push(format!("cluster {k}: residual at l = {} is at the floor", at.0));
        }
        checks.push(Check::at_most(format!("cluster {k} relative residual at l = {}", at.0), at.1, tol.matrix_a));
        notes.push(format!(
            "cluster {k} relative residuals: {}",
            rows.iter()
                .map(|r| format!("{}:{:.3e}{}", r.0, r.1, if r.2 { "(floor)" } else { "" }))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    if checks.is_empty() {
        return Verdict {
            theorem: t,
            status: super::Status::Inconclusive,
            checks,
            notes,
        };
    }
    Verdict::from_checks(t, checks, notes)
}

fn convergence(r: &LadderReport, tol: &Tolerances) -> Verdict {
    let t = Theorem::Convergence;
    let pts: Vec<_> = r.points.iter().filter(|p| p.error.is_none()).collect();
    if pts.len() < tol.min_points {
        return Verdict::inconclusive(t, format!("{} usable distances, need {}", pts.len(), tol.min_points));
    }
    let mut checks = Vec::new();
    let certified = pts.iter().filter(|p| p.certified_count == p.levels.len()).count();
    checks.push(Check::holds("inertia certified", certified, pts.len()));
    for (k, c) in r.clusters.iter().enumerate() {
        let late: Vec<_> = pts.iter().filter(|p| p.l >= tol.cardinality_from - 1e-9).collect();
        let right = late.iter().filter(|p| p.members(k).len() == c.p()).count();
        checks.push(Check::holds(format!("cluster {k} cardinality {}", c.p()), right, late.len()));
        if c.p() >= 2 {
            let mut inside = 0;
            let mut worst = 0.0f64;
            for p in &pts {
                let m = p.members(k);
                if m.len() < 2 {
                    continue;
                }
                let gap = m[m.len() - 1] - m[m.len() - 2];
                let dev = m.iter().map(|x| (x - c.lambda_star).abs()).fold(0.0, f64::max);
                worst = worst.max(dev / gap);
                if dev <= tol.spread * gap {
                    inside += 1;
                }
            }
            let mut ch = Check::holds(format!("cluster {k} within {} gaps", tol.spread), inside, pts.len());
            ch.margin = worst;
            checks.push(ch);
        }
    }
    Verdict::from_checks(t, checks, Vec::new())
}
