//! Transitivity enforced as posterior constraints inside the E-step.
//!
//! For tuple trios the match posteriors must satisfy
//! `gamma_ij * gamma_ik <= gamma_jk`. After every unconstrained E-step the
//! violated constraints (restricted to premises >= 0.5) are projected onto
//! the feasibility boundary along one of three axes, picking the axis that
//! costs the least free energy and never reversing an earlier movement.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::blocking::Scope;
use crate::error::{Error, Result};
use crate::features::{CorrelationMatrix, FeatureMatrix};
use crate::model::{
    average_tail, e_step_with_weights, init_posteriors, m_step, regularized_free_energy,
    FitOptions, FitReport, ModelParams, PosteriorVector, TerminalRule, GAMMA_FLOOR,
    TAIL_AVERAGE_WINDOW,
};

/// Premise threshold of the reduced constraint set: transitivity is only
/// informative for pairs leaning match.
pub const PREMISE_THRESHOLD: f64 = 0.5;

/// Feasibility slack used when re-checking constraints.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Posterior state of one pair scope during the constrained fit.
#[derive(Debug, Clone)]
pub struct ScopeState {
    pub scope: Scope,
    /// Tuple-index pairs, row-aligned with the posteriors.
    pub pairs: Vec<(u32, u32)>,
    pub gamma: PosteriorVector,
    /// Per-row `(ln pi_M + ln p(x|M), ln pi_U + ln p(x|U))` from the last
    /// E-step; drives the free-energy ranking of projection axes.
    pub log_w: Vec<(f64, f64)>,
    pub params: Option<ModelParams>,
    /// A pinned scope never fits or moves: all pairs read as gamma = 0.
    pub pinned: bool,
    lookup: HashMap<(u32, u32), u32>,
}

impl ScopeState {
    pub fn new(
        scope: Scope,
        pairs: Vec<(u32, u32)>,
        gamma: PosteriorVector,
        log_w: Vec<(f64, f64)>,
    ) -> ScopeState {
        let lookup = pairs
            .iter()
            .enumerate()
            .map(|(row, &(a, b))| (canonical(a, b), row as u32))
            .collect();
        ScopeState {
            scope,
            pairs,
            gamma,
            log_w,
            params: None,
            pinned: false,
            lookup,
        }
    }

    fn pinned_at_zero(scope: Scope, pairs: Vec<(u32, u32)>) -> ScopeState {
        let n = pairs.len();
        let mut s = ScopeState::new(
            scope,
            pairs,
            PosteriorVector::new(scope, vec![0.0; n]),
            vec![(0.0, 0.0); n],
        );
        s.pinned = true;
        s
    }

    pub fn row_of(&self, a: u32, b: u32) -> Option<u32> {
        self.lookup.get(&canonical(a, b)).copied()
    }

    /// Free-energy contribution of one pair at posterior `g`.
    fn f_pair(&self, row: u32, g: f64) -> f64 {
        let (lm, lu) = self.log_w[row as usize];
        g * (lm - g.ln()) + (1.0 - g) * (lu - (1.0 - g).ln())
    }
}

fn canonical(a: u32, b: u32) -> (u32, u32) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// The coupled three-scope model state (one scope when `T = T'`).
#[derive(Debug, Clone)]
pub struct TriModelState {
    pub cross: ScopeState,
    pub left: Option<ScopeState>,
    pub right: Option<ScopeState>,
    /// Deduplication mode: premises and conclusions live in one scope.
    pub dedup: bool,
}

impl TriModelState {
    fn scope_state(&self, scope: Scope) -> Option<&ScopeState> {
        match scope {
            Scope::Cross => Some(&self.cross),
            Scope::Left => self.left.as_ref(),
            Scope::Right => self.right.as_ref(),
        }
    }

    fn scope_state_mut(&mut self, scope: Scope) -> Option<&mut ScopeState> {
        match scope {
            Scope::Cross => Some(&mut self.cross),
            Scope::Left => self.left.as_mut(),
            Scope::Right => self.right.as_mut(),
        }
    }

    /// Conclusion lookup: a pair missing from its scope (blocked, or the
    /// scope is pinned/absent) reads as gamma = 0 and is never promoted.
    fn conclusion(&self, scope: Scope, a: u32, b: u32) -> Conclusion {
        match self.scope_state(scope) {
            Some(s) if !s.pinned => match s.row_of(a, b) {
                Some(row) => Conclusion::Present { scope, row },
                None => Conclusion::Absent,
            },
            _ => Conclusion::Absent,
        }
    }

    fn gamma_of(&self, scope: Scope, row: u32) -> f64 {
        self.scope_state(scope)
            .map(|s| s.gamma.get(row as usize))
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conclusion {
    Present { scope: Scope, row: u32 },
    Absent,
}

/// One probabilistic transitivity inequality over three pair posteriors.
#[derive(Debug, Clone)]
pub struct ConstraintTriple {
    /// Premise pairs: (scope, row, shared tuple, other tuple).
    pub premise_a: (Scope, u32),
    pub premise_b: (Scope, u32),
    /// Conclusion pair over the two non-shared tuples.
    pub conclusion: Conclusion,
    /// Ids of the conclusion tuple pair (canonical order).
    pub conclusion_ids: (u32, u32),
    /// Premise product at enumeration time; the processing sort key.
    pub product: f64,
}

/// Enumerate the reduced constraint set: every two cross-scope pairs with
/// posterior at or above `threshold` sharing one tuple imply a constraint
/// whose conclusion pair spans the two non-shared tuples.
pub fn enumerate_active_constraints(
    state: &TriModelState,
    threshold: f64,
) -> Vec<ConstraintTriple> {
    let cross = &state.cross;
    let mut out = Vec::new();

    let active: Vec<u32> = (0..cross.pairs.len() as u32)
        .filter(|&r| cross.gamma.get(r as usize) >= threshold)
        .collect();

    // group by shared endpoint; dedup mode shares either endpoint of the
    // single scope, two-table mode shares the left then the right tuple
    let mut emit = |shared_side: usize, conclusion_scope: Scope| {
        let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
        for &r in &active {
            let p = cross.pairs[r as usize];
            let key = if shared_side == 0 { p.0 } else { p.1 };
            groups.entry(key).or_default().push(r);
        }
        for rows in groups.values() {
            for (ix, &ra) in rows.iter().enumerate() {
                for &rb in &rows[ix + 1..] {
                    let pa = cross.pairs[ra as usize];
                    let pb = cross.pairs[rb as usize];
                    let other_a = if shared_side == 0 { pa.1 } else { pa.0 };
                    let other_b = if shared_side == 0 { pb.1 } else { pb.0 };
                    if other_a == other_b {
                        continue;
                    }
                    let ids = canonical(other_a, other_b);
                    out.push(ConstraintTriple {
                        premise_a: (Scope::Cross, ra),
                        premise_b: (Scope::Cross, rb),
                        conclusion: state.conclusion(conclusion_scope, ids.0, ids.1),
                        conclusion_ids: ids,
                        product: cross.gamma.get(ra as usize) * cross.gamma.get(rb as usize),
                    });
                }
            }
        }
    };

    if state.dedup {
        // one scope: trio {a,b,c} yields one constraint per shared tuple
        emit(0, Scope::Cross);
        emit(1, Scope::Cross);
        // pairs (a,b) and (b,c) share b across different slots
        let mut groups: HashMap<u32, Vec<(u32, bool)>> = HashMap::new();
        for &r in &active {
            let p = cross.pairs[r as usize];
            groups.entry(p.0).or_default().push((r, false));
            groups.entry(p.1).or_default().push((r, true));
        }
        for rows in groups.values() {
            for (ix, &(ra, a_hi)) in rows.iter().enumerate() {
                for &(rb, b_hi) in &rows[ix + 1..] {
                    if a_hi == b_hi {
                        continue; // already emitted by the same-slot passes
                    }
                    let pa = cross.pairs[ra as usize];
                    let pb = cross.pairs[rb as usize];
                    let other_a = if a_hi { pa.0 } else { pa.1 };
                    let other_b = if b_hi { pb.0 } else { pb.1 };
                    if other_a == other_b {
                        continue;
                    }
                    let ids = canonical(other_a, other_b);
                    out.push(ConstraintTriple {
                        premise_a: (Scope::Cross, ra),
                        premise_b: (Scope::Cross, rb),
                        conclusion: state.conclusion(Scope::Cross, ids.0, ids.1),
                        conclusion_ids: ids,
                        product: cross.gamma.get(ra as usize) * cross.gamma.get(rb as usize),
                    });
                }
            }
        }
    } else {
        emit(0, Scope::Right);
        emit(1, Scope::Left);
    }

    // strongest implications first; ties broken by row indices
    out.sort_by(|a, b| {
        b.product
            .partial_cmp(&a.product)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.premise_a.1.cmp(&b.premise_a.1))
            .then(a.premise_b.1.cmp(&b.premise_b.1))
            .then(a.conclusion_ids.cmp(&b.conclusion_ids))
    });
    out
}

/// Direction a posterior moved during one resolve pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

pub type Locks = HashMap<(Scope, u32), Direction>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionAxis {
    RaiseConclusion,
    LowerFirstPremise,
    LowerSecondPremise,
}

/// One applied projection, for the constraint-audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionAudit {
    pub iteration: usize,
    pub axis: ProjectionAxis,
    pub target_scope: Scope,
    pub target_pair: (u32, u32),
    pub before: f64,
    pub after: f64,
}

/// Project one violated constraint onto its boundary.
///
/// The three candidate moves (raise the conclusion to the premise
/// product, or divide either premise down) are ranked by the resulting
/// free-energy contribution of the moved pair; the best candidate whose
/// direction does not reverse an existing lock is applied. Returns `None`
/// when the constraint is no longer active/violated or every candidate
/// conflicts with a lock.
pub fn project_constraint(
    state: &mut TriModelState,
    triple: &ConstraintTriple,
    locks: &mut Locks,
    iteration: usize,
) -> Option<ProjectionAudit> {
    let ga = state.gamma_of(triple.premise_a.0, triple.premise_a.1);
    let gb = state.gamma_of(triple.premise_b.0, triple.premise_b.1);
    if ga < PREMISE_THRESHOLD || gb < PREMISE_THRESHOLD {
        return None; // constraint left the reduced set
    }
    let gc = match triple.conclusion {
        Conclusion::Present { scope, row } => state.gamma_of(scope, row),
        Conclusion::Absent => 0.0,
    };
    if ga * gb <= gc {
        return None; // already satisfied
    }

    struct Candidate {
        axis: ProjectionAxis,
        scope: Scope,
        row: u32,
        new_gamma: f64,
        delta_f: f64,
    }
    let mut candidates: Vec<Candidate> = Vec::with_capacity(3);

    if let Conclusion::Present { scope, row } = triple.conclusion {
        let new_gamma = ga * gb;
        let s = state.scope_state(scope).expect("present conclusion scope");
        let delta_f = s.f_pair(row, crate::model::clamp_gamma(new_gamma)) - s.f_pair(row, gc);
        candidates.push(Candidate {
            axis: ProjectionAxis::RaiseConclusion,
            scope,
            row,
            new_gamma,
            delta_f,
        });
    }
    for (axis, (scope, row), divisor, cur) in [
        (
            ProjectionAxis::LowerFirstPremise,
            triple.premise_a,
            gb,
            ga,
        ),
        (
            ProjectionAxis::LowerSecondPremise,
            triple.premise_b,
            ga,
            gb,
        ),
    ] {
        if divisor <= GAMMA_FLOOR {
            continue; // division axis infeasible
        }
        let new_gamma = gc / divisor;
        let s = state.scope_state(scope).expect("premise scope");
        let delta_f = s.f_pair(row, crate::model::clamp_gamma(new_gamma)) - s.f_pair(row, cur);
        candidates.push(Candidate {
            axis,
            scope,
            row,
            new_gamma,
            delta_f,
        });
    }

    candidates.sort_by(|a, b| {
        b.delta_f
            .partial_cmp(&a.delta_f)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.axis as u8).cmp(&(b.axis as u8)))
    });

    for cand in candidates {
        let dir = if cand.axis == ProjectionAxis::RaiseConclusion {
            Direction::Up
        } else {
            Direction::Down
        };
        match locks.get(&(cand.scope, cand.row)) {
            Some(&existing) if existing != dir => continue, // would reverse
            _ => {}
        }
        let before = state.gamma_of(cand.scope, cand.row);
        let s = state.scope_state_mut(cand.scope).expect("candidate scope");
        s.gamma.set(cand.row as usize, cand.new_gamma);
        let after = s.gamma.get(cand.row as usize);
        locks.insert((cand.scope, cand.row), dir);
        let pair = s.pairs[cand.row as usize];
        return Some(ProjectionAudit {
            iteration,
            axis: cand.axis,
            target_scope: cand.scope,
            target_pair: pair,
            before,
            after,
        });
    }
    None
}

/// One full resolve pass: enumerate the active constraints, process the
/// violated ones strongest-product first, and greedily project each.
pub fn resolve_transitivity(state: &mut TriModelState, iteration: usize) -> Vec<ProjectionAudit> {
    let triples = enumerate_active_constraints(state, PREMISE_THRESHOLD);
    let mut locks: Locks = HashMap::new();
    let mut audits = Vec::new();
    for triple in &triples {
        if let Some(a) = project_constraint(state, triple, &mut locks, iteration) {
            audits.push(a);
        }
    }
    audits
}

/// Brute-force feasibility check of the reduced constraint set at the
/// current posteriors; re-enumerates from scratch.
pub fn check_feasibility(state: &TriModelState, tol: f64) -> bool {
    let triples = enumerate_active_constraints(state, PREMISE_THRESHOLD);
    triples.iter().all(|t| {
        let ga = state.gamma_of(t.premise_a.0, t.premise_a.1);
        let gb = state.gamma_of(t.premise_b.0, t.premise_b.1);
        let gc = match t.conclusion {
            Conclusion::Present { scope, row } => state.gamma_of(scope, row),
            Conclusion::Absent => 0.0,
        };
        ga * gb <= gc + tol
    })
}

/// Everything one scope needs to enter the constrained fit.
pub struct ScopeData<'a> {
    pub x: &'a FeatureMatrix,
    pub r: &'a CorrelationMatrix,
    pub pairs: &'a [(u32, u32)],
}

/// Result of the constrained fit.
pub struct FullFitOutcome {
    pub state: TriModelState,
    /// Cross-scope rows predicted as matches.
    pub matches: Vec<usize>,
    pub report: FitReport,
    pub audits: Vec<ProjectionAudit>,
}

fn init_scope(scope: Scope, data: &ScopeData<'_>, opts: &FitOptions, pin_on_degenerate: bool) -> Result<ScopeState> {
    debug_assert_eq!(data.x.n, data.pairs.len());
    if data.x.n == 0 {
        return Ok(ScopeState::pinned_at_zero(scope, data.pairs.to_vec()));
    }
    match init_posteriors(data.x, opts.epsilon) {
        Ok(gamma) => Ok(ScopeState::new(
            scope,
            data.pairs.to_vec(),
            gamma,
            vec![(0.0, 0.0); data.x.n],
        )),
        Err(Error::DegenerateInit(msg)) if pin_on_degenerate => {
            // a within-table scope whose pairs all look alike carries no
            // cluster signal; treat the table as duplicate-free
            log::warn!("pinning {scope} scope at gamma=0: {msg}");
            Ok(ScopeState::pinned_at_zero(scope, data.pairs.to_vec()))
        }
        Err(e) => Err(e),
    }
}

/// The full constrained fit: per iteration run one M-step and one
/// unconstrained E-step per scope, then resolve the transitivity
/// constraints across scopes; converge on the summed regularized free
/// energy. Matches are cross-scope pairs with posterior above 0.5.
///
/// With `left`/`right` absent and `dedup` set, a single parameter set is
/// fitted over within-table pairs of one table.
pub fn fit_full(
    cross: ScopeData<'_>,
    left: Option<ScopeData<'_>>,
    right: Option<ScopeData<'_>>,
    dedup: bool,
    opts: &FitOptions,
) -> Result<FullFitOutcome> {
    assert!(
        !dedup || (left.is_none() && right.is_none()),
        "dedup mode uses a single scope"
    );

    let mut state = TriModelState {
        cross: init_scope(Scope::Cross, &cross, opts, false)?,
        left: match &left {
            Some(d) => Some(init_scope(Scope::Left, d, opts, true)?),
            None => None,
        },
        right: match &right {
            Some(d) => Some(init_scope(Scope::Right, d, opts, true)?),
            None => None,
        },
        dedup,
    };

    let mut trace = Vec::new();
    let mut audits = Vec::new();
    let mut histories: [VecHistory; 3] = Default::default();
    let mut prev_obj = f64::NEG_INFINITY;
    let mut converged = false;

    for iteration in 1..=opts.max_iter {
        let mut obj = 0.0;
        for (slot, scope) in [Scope::Cross, Scope::Left, Scope::Right].into_iter().enumerate() {
            let data = match scope {
                Scope::Cross => Some(&cross),
                Scope::Left => left.as_ref(),
                Scope::Right => right.as_ref(),
            };
            let Some(data) = data else { continue };
            let Some(s) = state.scope_state_mut(scope) else { continue };
            if s.pinned {
                continue;
            }
            let theta = m_step(data.x, &s.gamma, data.r, opts)?;
            let (gamma, log_w) = e_step_with_weights(data.x, &theta);
            s.gamma = gamma;
            s.log_w = log_w;
            s.params = Some(theta);
            let _ = slot;
        }

        audits.extend(resolve_transitivity(&mut state, iteration));

        for (slot, scope) in [Scope::Cross, Scope::Left, Scope::Right].into_iter().enumerate() {
            let data = match scope {
                Scope::Cross => Some(&cross),
                Scope::Left => left.as_ref(),
                Scope::Right => right.as_ref(),
            };
            let (Some(data), Some(s)) = (data, state.scope_state(scope)) else {
                continue;
            };
            if s.pinned {
                continue;
            }
            if let Some(theta) = &s.params {
                obj += regularized_free_energy(data.x, &s.gamma, theta);
            }
            histories[slot].push(s.gamma.values().to_vec());
        }

        trace.push(obj);
        if prev_obj.is_finite() && (obj - prev_obj).abs() < opts.tol {
            converged = true;
            break;
        }
        prev_obj = obj;
    }

    let terminal = if converged {
        TerminalRule::LikelihoodDelta
    } else {
        // damp oscillating tails, then restore feasibility once
        for (slot, scope) in [Scope::Cross, Scope::Left, Scope::Right].into_iter().enumerate() {
            if histories[slot].0.is_empty() {
                continue;
            }
            if let Some(s) = state.scope_state_mut(scope) {
                if !s.pinned {
                    s.gamma = average_tail(&histories[slot].0, scope);
                }
            }
        }
        audits.extend(resolve_transitivity(&mut state, opts.max_iter + 1));
        TerminalRule::MaxIterations
    };

    let report = FitReport {
        iterations: trace.len(),
        trace,
        converged,
        terminal,
    };
    let matches = state.cross.gamma.matches();
    Ok(FullFitOutcome {
        state,
        matches,
        report,
        audits,
    })
}

#[derive(Default)]
struct VecHistory(std::collections::VecDeque<Vec<f64>>);

impl VecHistory {
    fn push(&mut self, v: Vec<f64>) {
        if self.0.len() == TAIL_AVERAGE_WINDOW {
            self.0.pop_front();
        }
        self.0.push_back(v);
    }
}
