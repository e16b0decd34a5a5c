//! Real-valued second-order cone programs for the MM subproblems.
//!
//! Every complex beamformer `w_g ∈ ℂᴹ` is lifted to `2M` reals
//! `[Re w_g; Im w_g]`, stored group after group at the front of the variable
//! vector. The robust bound `ζ` is expanded with epigraph variables:
//!
//! - `ν_l ≥ ‖w_l‖` per group (only when some user has ε > 0),
//! - `a_{u,l} ≥ |w_lᴴĥ_u|` per user and interfering group,
//!
//! so that the surrogate constraint of user `u` in group `g` becomes the cone
//!
//! ```text
//! ‖ √τ · (a_{u,l} + ε_u ν_l)_{l≠g}, √τ σ_u ‖ ≤ lin_u(w_g) − ε_u ν_g + s_u
//! ```
//!
//! where `lin_u` is the linearization of `|w_gᴴĥ_u|` at the previous iterate and
//! `s_u` is a penalized slack, absent, or the shared feasibility gauge.
//!
//! ## Sparse dump format
//!
//! [`ConeProgram::write_sparse`] writes plain text: a header line, one
//! `objective <var> <coef>` line per nonzero cost, then per constraint a
//! `# <id> <kind> <tag>` line followed by one `<id>.<row> <var> <coef>` line per
//! nonzero and `<id>.<row> const <value>` for nonzero constants. Row 0 of a
//! second-order constraint is its bound, rows 1.. its vector.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::robust_bounds::pivot;
use crate::scenario::{Beamformer, PowerMode, Scenario};
use crate::solver::{SolveOutcome, SolveStatus};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(value: f64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(index: usize) -> Self {
        AffineExpr {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, index: usize, coef: f64) -> Self {
        self.push(index, coef);
        self
    }

    pub fn push(&mut self, index: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) {
        for &(i, c) in &other.terms {
            self.push(i, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = AffineExpr::constant(0.0);
        out.add_scaled(self, scale);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cone {
    /// `expr ≤ 0`
    NonPositive(AffineExpr),
    /// `expr = 0`
    Zero(AffineExpr),
    /// `‖vector‖₂ ≤ bound`
    SecondOrder {
        bound: AffineExpr,
        vector: Vec<AffineExpr>,
    },
}

impl Cone {
    /// Signed slack: nonnegative iff satisfied (`-|expr|` for equalities).
    pub fn residual(&self, x: &[f64]) -> f64 {
        match self {
            Cone::NonPositive(e) => -e.eval(x),
            Cone::Zero(e) => -e.eval(x).abs(),
            Cone::SecondOrder { bound, vector } => {
                let norm = vector.iter().map(|v| v.eval(x).powi(2)).sum::<f64>().sqrt();
                bound.eval(x) - norm
            }
        }
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        (-self.residual(x)).max(0.0)
    }

    fn kind(&self) -> &'static str {
        match self {
            Cone::NonPositive(_) => "nonpositive",
            Cone::Zero(_) => "zero",
            Cone::SecondOrder { .. } => "soc",
        }
    }

    pub(crate) fn rows(&self) -> Vec<&AffineExpr> {
        match self {
            Cone::NonPositive(e) | Cone::Zero(e) => vec![e],
            Cone::SecondOrder { bound, vector } => {
                std::iter::once(bound).chain(vector.iter()).collect()
            }
        }
    }
}

/// What a constraint encodes; used for lookups in tests and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    /// Surrogate robust-SINR constraint of a user.
    Sinr { user: usize },
    /// `a_{user,group} ≥ |w_groupᴴ ĥ_user|`.
    Magnitude { user: usize, group: usize },
    /// `ν_group ≥ ‖w_group‖`.
    Norm { group: usize },
    /// Sum power (`antenna: None`) or one antenna's power.
    Power { antenna: Option<usize> },
    /// `s_user ≥ 0`.
    SlackSign { user: usize },
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub tag: Tag,
    pub cone: Cone,
}

/// `minimize cᵀx` subject to linear and second-order cone constraints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConeProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl ConeProgram {
    pub fn new(n_vars: usize) -> Self {
        ConeProgram {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, tag: Tag, cone: Cone) {
        self.constraints.push(Constraint { tag, cone });
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::MalformedProgram(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.n_vars
            )));
        }
        for (id, c) in self.constraints.iter().enumerate() {
            if let Cone::SecondOrder { vector, .. } = &c.cone {
                if vector.is_empty() {
                    return Err(Error::MalformedProgram(format!(
                        "second-order constraint {id} has an empty vector"
                    )));
                }
            }
            for row in c.cone.rows() {
                if let Some(i) = row.max_index() {
                    if i >= self.n_vars {
                        return Err(Error::MalformedProgram(format!(
                            "constraint {id} references variable {i} >= {}",
                            self.n_vars
                        )));
                    }
                }
                if row.terms.iter().any(|(_, c)| !c.is_finite()) || !row.constant.is_finite() {
                    return Err(Error::MalformedProgram(format!(
                        "constraint {id} has a non-finite coefficient"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.cone.violation(x))
            .fold(0.0, f64::max)
    }

    pub fn find(&self, tag: Tag) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.tag == tag)
    }

    pub fn write_sparse<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# cone program: {} variables, {} constraints",
            self.n_vars,
            self.constraints.len()
        )?;
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                writeln!(out, "objective {i} {c:e}")?;
            }
        }
        for (id, c) in self.constraints.iter().enumerate() {
            writeln!(out, "# {id} {} {:?}", c.cone.kind(), c.tag)?;
            for (r, row) in c.cone.rows().into_iter().enumerate() {
                for &(var, coef) in &row.terms {
                    writeln!(out, "{id}.{r} {var} {coef:e}")?;
                }
                if row.constant != 0.0 {
                    writeln!(out, "{id}.{r} const {:e}", row.constant)?;
                }
            }
        }
        Ok(())
    }
}

/// Locations of every variable block in the lifted vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    pub antennas: usize,
    pub n_groups: usize,
    /// `ν_g`, present when any user has ε > 0.
    pub norms: Option<Vec<usize>>,
    /// `a_{user, l}` for interfering groups `l`; `None` at the user's own group.
    pub magnitudes: Vec<Vec<Option<usize>>>,
    /// Power epigraph `r` (power-minimization programs).
    pub power: Option<usize>,
    /// Penalized slacks `s_ig`.
    pub slacks: Option<Vec<usize>>,
    /// Infeasibility gauge of the feasibility program.
    pub gauge: Option<usize>,
    pub n_vars: usize,
}

impl VariableMap {
    pub fn re(&self, group: usize, antenna: usize) -> usize {
        group * 2 * self.antennas + antenna
    }

    pub fn im(&self, group: usize, antenna: usize) -> usize {
        group * 2 * self.antennas + self.antennas + antenna
    }

    pub fn beamformer_vars(&self) -> std::ops::Range<usize> {
        0..2 * self.antennas * self.n_groups
    }

    pub fn beamformer(&self, x: &[f64]) -> Beamformer {
        Beamformer::new(
            (0..self.n_groups)
                .map(|g| {
                    DVector::from_fn(self.antennas, |m, _| {
                        Complex64::new(x[self.re(g, m)], x[self.im(g, m)])
                    })
                })
                .collect(),
        )
    }

    pub fn power_value(&self, x: &[f64]) -> Option<f64> {
        self.power.map(|i| x[i])
    }

    pub fn slack_values(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.slacks.as_ref().map(|s| s.iter().map(|&i| x[i]).collect())
    }

    pub fn gauge_value(&self, x: &[f64]) -> Option<f64> {
        self.gauge.map(|i| x[i])
    }

    /// Lifts `w` with every epigraph variable at its tight value, power `r` at
    /// the scenario's metric, and slacks and gauge at zero.
    pub fn lift(&self, w: &Beamformer, scenario: &Scenario) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars];
        for (g, wg) in w.groups.iter().enumerate() {
            for (m, z) in wg.iter().enumerate() {
                x[self.re(g, m)] = z.re;
                x[self.im(g, m)] = z.im;
            }
        }
        if let Some(norms) = &self.norms {
            for (g, &i) in norms.iter().enumerate() {
                x[i] = w.groups[g].norm();
            }
        }
        for (u, row) in self.magnitudes.iter().enumerate() {
            for (l, idx) in row.iter().enumerate() {
                if let Some(i) = idx {
                    x[*i] = w.groups[l].dotc(&scenario.users[u].channel).norm();
                }
            }
        }
        if let Some(i) = self.power {
            x[i] = w.power(scenario.power_mode);
        }
        x
    }
}

/// How the slack variables of the power-minimization subproblem are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlackMode {
    /// Slacks `s ≥ 0` with penalty `Σ s` in the objective.
    Penalized,
    /// Slacks fixed at zero (omitted from the program).
    PinnedZero,
}

enum SinrSlack {
    Penalized,
    None,
    Gauge,
}

enum PowerBound {
    /// Minimize the power epigraph `r`.
    Epigraph,
    /// Power ≤ fixed limit.
    Limit(f64),
}

/// `Re(w_lᴴh)` and `Im(w_lᴴh)` as affine expressions of the lifted variables.
fn inner_product(map: &VariableMap, group: usize, h: &DVector<Complex64>) -> (AffineExpr, AffineExpr) {
    let mut re = AffineExpr::constant(0.0);
    let mut im = AffineExpr::constant(0.0);
    for (m, hm) in h.iter().enumerate() {
        let (a, b) = (map.re(group, m), map.im(group, m));
        re.push(a, hm.re);
        re.push(b, hm.im);
        im.push(a, hm.im);
        im.push(b, -hm.re);
    }
    (re, im)
}

fn build(
    scenario: &Scenario,
    w_prev: &Beamformer,
    level: impl Fn(usize) -> f64,
    slack: SinrSlack,
    power: PowerBound,
) -> Result<(ConeProgram, VariableMap)> {
    if !w_prev.matches(scenario) {
        return Err(Error::InvalidScenario(
            "beamformer dimensions do not match the scenario".into(),
        ));
    }
    let pivots = (0..scenario.n_users())
        .map(|u| pivot(w_prev, scenario, u))
        .collect::<Result<Vec<_>>>()?;

    let m_ant = scenario.antennas;
    let n_groups = scenario.n_groups();
    let mut next = 2 * m_ant * n_groups;
    let mut alloc = |n: usize| {
        let start = next;
        next += n;
        start..next
    };

    let norms = scenario
        .users
        .iter()
        .any(|u| u.epsilon() > 0.0)
        .then(|| alloc(n_groups).collect::<Vec<_>>());
    let magnitudes: Vec<Vec<Option<usize>>> = scenario
        .users
        .iter()
        .map(|u| {
            (0..n_groups)
                .map(|l| (l != u.group).then(|| alloc(1).start))
                .collect()
        })
        .collect();
    let power_var = matches!(power, PowerBound::Epigraph).then(|| alloc(1).start);
    let slacks = matches!(slack, SinrSlack::Penalized)
        .then(|| alloc(scenario.n_users()).collect::<Vec<_>>());
    let gauge = matches!(slack, SinrSlack::Gauge).then(|| alloc(1).start);

    let map = VariableMap {
        antennas: m_ant,
        n_groups,
        norms,
        magnitudes,
        power: power_var,
        slacks,
        gauge,
        n_vars: next,
    };
    let mut prog = ConeProgram::new(map.n_vars);

    if let Some(r) = map.power {
        prog.objective[r] = 1.0;
    }
    if let Some(s) = &map.slacks {
        for (u, &i) in s.iter().enumerate() {
            prog.objective[i] = 1.0;
            prog.push(Tag::SlackSign { user: u }, Cone::NonPositive(AffineExpr::constant(0.0).term(i, -1.0)));
        }
    }
    if let Some(m) = map.gauge {
        prog.objective[m] = 1.0;
    }

    if let Some(norms) = &map.norms {
        for (g, &nu) in norms.iter().enumerate() {
            let vector = (0..m_ant)
                .flat_map(|m| [map.re(g, m), map.im(g, m)])
                .map(AffineExpr::var)
                .collect();
            prog.push(
                Tag::Norm { group: g },
                Cone::SecondOrder {
                    bound: AffineExpr::var(nu),
                    vector,
                },
            );
        }
    }

    for (u, user) in scenario.users.iter().enumerate() {
        let eps = user.epsilon();
        let g = user.group;
        for (l, idx) in map.magnitudes[u].iter().enumerate() {
            if let Some(a) = *idx {
                let (re, im) = inner_product(&map, l, &user.channel);
                prog.push(
                    Tag::Magnitude { user: u, group: l },
                    Cone::SecondOrder {
                        bound: AffineExpr::var(a),
                        vector: vec![re, im],
                    },
                );
            }
        }

        // bound = lin(w_g) − ε ν_g + slack
        let p = pivots[u];
        let (re, im) = inner_product(&map, g, &user.channel);
        let mut bound = re.scaled(p.re / p.norm());
        bound.add_scaled(&im, p.im / p.norm());
        if eps > 0.0 {
            if let Some(norms) = &map.norms {
                bound.push(norms[g], -eps);
            }
        }
        if let Some(s) = &map.slacks {
            bound.push(s[u], 1.0);
        }
        if let Some(m) = map.gauge {
            bound.push(m, 1.0);
        }

        let tau = level(u);
        let cone = if tau > 0.0 {
            let root = tau.sqrt();
            let mut vector: Vec<AffineExpr> = map.magnitudes[u]
                .iter()
                .enumerate()
                .filter_map(|(l, idx)| idx.map(|a| (l, a)))
                .map(|(l, a)| {
                    let mut e = AffineExpr::constant(0.0).term(a, root);
                    if eps > 0.0 {
                        if let Some(norms) = &map.norms {
                            e.push(norms[l], root * eps);
                        }
                    }
                    e
                })
                .collect();
            vector.push(AffineExpr::constant(root * user.noise.sqrt()));
            Cone::SecondOrder { bound, vector }
        } else {
            Cone::NonPositive(bound.scaled(-1.0))
        };
        prog.push(Tag::Sinr { user: u }, cone);
    }

    // power: Σ|x|² ≤ r as ‖(2x, r − 1)‖ ≤ r + 1, or ‖x‖ ≤ √γ
    let power_cone = |vars: Vec<usize>| match power {
        PowerBound::Epigraph => {
            let r = map.power.expect("epigraph variable");
            let mut vector: Vec<AffineExpr> = vars
                .into_iter()
                .map(|i| AffineExpr::constant(0.0).term(i, 2.0))
                .collect();
            vector.push(AffineExpr {
                terms: vec![(r, 1.0)],
                constant: -1.0,
            });
            Cone::SecondOrder {
                bound: AffineExpr {
                    terms: vec![(r, 1.0)],
                    constant: 1.0,
                },
                vector,
            }
        }
        PowerBound::Limit(gamma) => Cone::SecondOrder {
            bound: AffineExpr::constant(gamma.sqrt()),
            vector: vars.into_iter().map(AffineExpr::var).collect(),
        },
    };
    match scenario.power_mode {
        PowerMode::Sum => {
            let cone = power_cone(map.beamformer_vars().collect());
            prog.push(Tag::Power { antenna: None }, cone);
        }
        PowerMode::PerAntenna => {
            for m in 0..m_ant {
                let vars = (0..n_groups)
                    .flat_map(|g| [map.re(g, m), map.im(g, m)])
                    .collect();
                let cone = power_cone(vars);
                prog.push(Tag::Power { antenna: Some(m) }, cone);
            }
        }
    }

    prog.validate()?;
    Ok((prog, map))
}

/// Convex power-minimization subproblem around `w_prev`, with the surrogate
/// SINR constraints at the scenario's per-group targets.
pub fn build_pm_subproblem(
    scenario: &Scenario,
    w_prev: &Beamformer,
    slack_mode: SlackMode,
) -> Result<(ConeProgram, VariableMap)> {
    let Some(targets) = (match &scenario.design {
        crate::scenario::Design::PowerMin { targets } => Some(targets),
        _ => None,
    }) else {
        return Err(Error::InvalidScenario(
            "power minimization needs SINR targets".into(),
        ));
    };
    let slack = match slack_mode {
        SlackMode::Penalized => SinrSlack::Penalized,
        SlackMode::PinnedZero => SinrSlack::None,
    };
    build(
        scenario,
        w_prev,
        |u| targets[scenario.users[u].group],
        slack,
        PowerBound::Epigraph,
    )
}

/// Feasibility subproblem at common SINR level `t` under the power limit.
///
/// Solved as `minimize m` subject to every surrogate margin `≤ m`; the level is
/// feasible iff the optimal gauge is at most [`FEASIBILITY_TOL`].
pub fn build_feasibility_subproblem(
    scenario: &Scenario,
    w_prev: &Beamformer,
    t: f64,
) -> Result<(ConeProgram, VariableMap)> {
    let Some(gamma) = scenario.power_limit() else {
        return Err(Error::InvalidScenario(
            "max-min fairness needs a power limit".into(),
        ));
    };
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidScenario(format!("SINR level must be >= 0, got {t}")));
    }
    build(scenario, w_prev, |_| t, SinrSlack::Gauge, PowerBound::Limit(gamma))
}

/// Largest optimal gauge still counted as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-7;

/// Reassembles the beamformer from an optimal solve.
pub fn extract_beamformer(outcome: &SolveOutcome, map: &VariableMap) -> Result<Beamformer> {
    if outcome.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            status: outcome.status,
            iteration: 0,
        });
    }
    Ok(map.beamformer(&outcome.x))
}
