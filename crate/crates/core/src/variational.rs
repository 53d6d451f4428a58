//! Finite dictionaries of potentials with vanishing upper proxy, the dual
//! functional `F(mu)`, the max-min over measures on a sample, equilibrium
//! candidates, tangent checks and the root of `s -> proxy(-s f)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{MdimProxy, ProxyValue};
use crate::lp::{row_payoffs, solve_linear, solve_matrix_game};
use crate::orbit::OrbitTable;
use crate::system::Potential;

/// Tolerance on the total mass of a measure.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Default membership tolerance for dictionary certificates.
pub const DEFAULT_TAU: f64 = 0.05;
/// Slack for comparisons against LP optima.
pub const LP_TOL: f64 = 1e-9;
/// Vertex enumeration gives up above this many constraint subsets.
pub const VERTEX_COMBO_CAP: usize = 200_000;

/// Probability measure supported on finitely many sample indices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinMeasure {
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
}

impl FinMeasure {
    pub fn new(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::InvalidInput("measure needs matching nonempty support and weights".into()));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("measure support has repeated indices".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("measure weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidInput(format!("measure weights sum to {total}")));
        }
        Ok(FinMeasure { support, weights })
    }

    /// Normalizes nonnegative weights to total mass one.
    pub fn normalized(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("measure weights have no mass".into()));
        }
        FinMeasure::new(support, weights.iter().map(|w| w / total).collect())
    }

    pub fn dirac(i: usize) -> Self {
        FinMeasure {
            support: vec![i],
            weights: vec![1.0],
        }
    }

    pub fn uniform(support: Vec<usize>) -> Result<Self> {
        let w = vec![1.0 / support.len() as f64; support.len()];
        FinMeasure::normalized(support, w)
    }

    /// `∫ h dmu` for `h` given by its values at sample indices.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(&i, w)| w * values[i])
            .sum()
    }

    /// Convex combination `p mu + (1 - p) nu` on the union of supports.
    pub fn mix(&self, other: &FinMeasure, p: f64) -> FinMeasure {
        let mut support: Vec<usize> = self.support.iter().chain(&other.support).copied().collect();
        support.sort_unstable();
        support.dedup();
        let weight_of = |m: &FinMeasure, i: usize| {
            m.support
                .iter()
                .position(|&s| s == i)
                .map_or(0.0, |k| m.weights[k])
        };
        let weights = support
            .iter()
            .map(|&i| p * weight_of(self, i) + (1.0 - p) * weight_of(other, i))
            .collect();
        FinMeasure { support, weights }
    }
}

/// Values of `f` at the sample points of a table.
pub fn point_values(t: &OrbitTable, f: &Potential) -> Result<Vec<f64>> {
    t.points().iter().map(|x| f.eval(x)).collect()
}

/// `g = m̂(f) − f`, with its membership certificate `proxy(−g)`.
#[derive(Clone, Debug)]
pub struct DictMember {
    pub g: Potential,
    pub source: String,
    pub m_hat: ProxyValue,
    pub certificate: ProxyValue,
    /// `g` at the sample points.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MemberSummary {
    pub name: String,
    pub source: String,
    pub m_hat: ProxyValue,
    pub certificate: ProxyValue,
}

impl DictMember {
    pub fn summary(&self) -> MemberSummary {
        MemberSummary {
            name: self.g.name().to_string(),
            source: self.source.clone(),
            m_hat: self.m_hat,
            certificate: self.certificate,
        }
    }
}

pub fn make_dict_member(proxy: &dyn MdimProxy, t: &OrbitTable, f: &Potential, tau: f64) -> Result<DictMember> {
    let m_hat = proxy.proxy(f)?;
    let g = Potential::constant(m_hat.value)
        .sub(f)
        .with_name(format!("g[{}]", f.name()));
    let certificate = proxy.proxy(&g.neg())?;
    if !(certificate.value.abs() <= tau) {
        return Err(Error::MembershipRejected {
            certificate: certificate.value,
            tolerance: tau,
        });
    }
    Ok(DictMember {
        values: point_values(t, &g)?,
        g,
        source: f.name().to_string(),
        m_hat,
        certificate,
    })
}

#[derive(Clone, Debug, Default)]
pub struct Dictionary {
    members: Vec<DictMember>,
}

impl Dictionary {
    pub fn new(members: Vec<DictMember>) -> Self {
        Dictionary { members }
    }

    pub fn members(&self) -> &[DictMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn push(&mut self, m: DictMember) {
        self.members.push(m);
    }

    /// Dictionary restricted to the first `k` members.
    pub fn prefix(&self, k: usize) -> Dictionary {
        Dictionary::new(self.members[..k.min(self.len())].to_vec())
    }

    pub fn summaries(&self) -> Vec<MemberSummary> {
        self.members.iter().map(DictMember::summary).collect()
    }
}

/// Dictionary plus the sources whose certificates were rejected.
#[derive(Debug)]
pub struct DictionaryBuild {
    pub dictionary: Dictionary,
    pub rejected: Vec<(String, Error)>,
}

/// Builds members in parallel; order follows `sources`.
pub fn build_dictionary(proxy: &dyn MdimProxy, t: &OrbitTable, sources: &[Potential], tau: f64) -> Result<DictionaryBuild> {
    let results: Vec<Result<DictMember>> = sources
        .par_iter()
        .map(|f| make_dict_member(proxy, t, f, tau))
        .collect();
    let mut members = Vec::new();
    let mut rejected = Vec::new();
    for (f, r) in sources.iter().zip(results) {
        match r {
            Ok(m) => members.push(m),
            Err(e @ Error::MembershipRejected { .. }) => rejected.push((f.name().to_string(), e)),
            Err(e) => return Err(e),
        }
    }
    Ok(DictionaryBuild {
        dictionary: Dictionary::new(members),
        rejected,
    })
}

/// `min_i ∫ g_i dmu` over the dictionary, with the minimizing member.
pub fn f_of_with_argmin(dict: &Dictionary, mu: &FinMeasure) -> Result<(f64, usize)> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let mut best = (f64::INFINITY, 0);
    for (i, m) in dict.members().iter().enumerate() {
        let v = mu.integrate(&m.values);
        if v < best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

/// `F(mu) = min_i ∫ g_i dmu`; an upper bound on the infimum over the full class.
pub fn f_of(dict: &Dictionary, mu: &FinMeasure) -> Result<f64> {
    Ok(f_of_with_argmin(dict, mu)?.0)
}

fn check_support(support: &[usize], len: usize) -> Result<()> {
    if support.is_empty() {
        return Err(Error::InvalidInput("support is empty".into()));
    }
    let mut s = support.to_vec();
    s.sort_unstable();
    if s.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("support has repeated indices".into()));
    }
    if let Some(&i) = s.last().filter(|&&i| i >= len) {
        return Err(Error::IndexOutOfRange { index: i, len });
    }
    Ok(())
}

/// Payoff matrix `A[i][j] = g_i(x_j) + f(x_j)` over the support.
pub fn payoff_matrix(dict: &Dictionary, f_values: &[f64], support: &[usize]) -> Result<Vec<Vec<f64>>> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    check_support(support, f_values.len())?;
    Ok(dict
        .members()
        .iter()
        .map(|m| support.iter().map(|&j| m.values[j] + f_values[j]).collect())
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxMin {
    pub value: f64,
    pub measure: FinMeasure,
    /// Optimal mixture over dictionary members.
    pub dual: Vec<f64>,
    pub gap: f64,
    pub slackness: f64,
}

/// `max_p min_i ∫ (g_i + f) dp` over probability vectors `p` on `support`.
pub fn maxmin_variational(dict: &Dictionary, f_values: &[f64], support: &[usize]) -> Result<MaxMin> {
    let a = payoff_matrix(dict, f_values, support)?;
    let sol = solve_matrix_game(&a)?;
    Ok(MaxMin {
        value: sol.value,
        measure: FinMeasure::normalized(support.to_vec(), sol.p)?,
        dual: sol.q,
        gap: sol.gap,
        slackness: sol.slackness,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumSet {
    pub value: f64,
    pub candidates: Vec<FinMeasure>,
    /// Smallest `objective − value` over every candidate.
    pub worst_candidate: f64,
    /// Smallest `objective − value` over pairwise midpoints.
    pub worst_midpoint: f64,
    pub midpoints_ok: bool,
    /// Vertex enumeration was skipped because of its size.
    pub truncated: bool,
}

fn binomial(n: usize, k: usize) -> usize {
    let mut acc: usize = 1;
    for i in 0..k.min(n - k) {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Vertices of the optimal face of the max-min, their barycenter, and a
/// midpoint convexity check. `tol` bounds the accepted value deficit.
pub fn equilibrium_candidates(dict: &Dictionary, f_values: &[f64], support: &[usize], tol: f64) -> Result<EquilibriumSet> {
    let a = payoff_matrix(dict, f_values, support)?;
    let sol = solve_matrix_game(&a)?;
    let v = sol.value;
    let (r, s) = (a.len(), support.len());
    let objective = |p: &[f64]| row_payoffs(&a, p).into_iter().fold(f64::INFINITY, f64::min);
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let mut truncated = false;
    if s == 1 {
        vertices.push(vec![1.0]);
    } else if binomial(r + s, s - 1) > VERTEX_COMBO_CAP {
        truncated = true;
        vertices.push(sol.p.clone());
    } else {
        let mut combo: Vec<usize> = (0..s - 1).collect();
        loop {
            let mut m = Vec::with_capacity(s);
            let mut rhs = Vec::with_capacity(s);
            for &c in &combo {
                if c < s {
                    let mut row = vec![0.0; s];
                    row[c] = 1.0;
                    m.push(row);
                    rhs.push(0.0);
                } else {
                    m.push(a[c - s].clone());
                    rhs.push(v);
                }
            }
            m.push(vec![1.0; s]);
            rhs.push(1.0);
            if let Some(x) = solve_linear(m, rhs) {
                if x.iter().all(|&w| w >= -LP_TOL) {
                    let clipped: Vec<f64> = x.iter().map(|w| w.max(0.0)).collect();
                    let total: f64 = clipped.iter().sum();
                    let p: Vec<f64> = clipped.iter().map(|w| w / total).collect();
                    let known = vertices
                        .iter()
                        .any(|q| q.iter().zip(&p).all(|(x, y)| (x - y).abs() < LP_TOL));
                    if objective(&p) >= v - tol && !known {
                        vertices.push(p);
                    }
                }
            }
            if !next_combination(&mut combo, r + s) {
                break;
            }
        }
        if vertices.is_empty() {
            vertices.push(sol.p.clone());
        }
    }
    let mut points = vertices.clone();
    if vertices.len() > 1 {
        let k = vertices.len() as f64;
        points.push((0..s).map(|j| vertices.iter().map(|p| p[j]).sum::<f64>() / k).collect());
    }
    let worst_candidate = points.iter().map(|p| objective(p) - v).fold(f64::INFINITY, f64::min);
    let mut worst_midpoint = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let mid: Vec<f64> = points[i].iter().zip(&points[j]).map(|(x, y)| 0.5 * (x + y)).collect();
            worst_midpoint = worst_midpoint.min(objective(&mid) - v);
        }
    }
    if points.len() == 1 {
        worst_midpoint = worst_candidate;
    }
    let candidates = points
        .into_iter()
        .map(|p| FinMeasure::normalized(support.to_vec(), p))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumSet {
        value: v,
        candidates,
        worst_candidate,
        worst_midpoint,
        midpoints_ok: worst_midpoint >= -tol,
        truncated,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TangentRow {
    pub perturbation: String,
    pub integral: f64,
    pub increment: f64,
    pub eta: f64,
    /// `m̂(f + g) − m̂(f) + eta − ∫ g dmu`.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TangentReport {
    pub base: ProxyValue,
    pub rows: Vec<TangentRow>,
}

impl TangentReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn worst_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Checks `∫ g dmu <= m̂(f + g) − m̂(f) + eta` for each perturbation `g`.
pub fn tangent_check(
    mu: &FinMeasure,
    f: &Potential,
    perturbations: &[Potential],
    proxy: &dyn MdimProxy,
    t: &OrbitTable,
) -> Result<TangentReport> {
    let base = proxy.proxy(f)?;
    let rows = perturbations
        .par_iter()
        .map(|g| {
            let moved = proxy.proxy(&f.add(g))?;
            let integral = mu.integrate(&point_values(t, g)?);
            let increment = moved.value - base.value;
            let eta = base.budget + moved.budget;
            let margin = increment + eta - integral;
            Ok(TangentRow {
                perturbation: g.name().to_string(),
                integral,
                increment,
                eta,
                margin,
                passed: margin >= -LP_TOL,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TangentReport { base, rows })
}

#[derive(Clone, Debug, Serialize)]
pub struct BisectionStep {
    pub lo: f64,
    pub hi: f64,
    pub s: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BowenRoot {
    pub s0: f64,
    pub value_at_root: f64,
    pub bracket: (f64, f64),
    pub trace: Vec<BisectionStep>,
    /// Proxy values at every evaluated `s` decrease strictly with `s`.
    pub monotone: bool,
}

const MAX_BISECTIONS: usize = 200;

/// Root of `s -> proxy(−s f)` by bisection on `[0, m̂(0) / min f + 1]`.
pub fn bowen_root(t: &OrbitTable, proxy: &dyn MdimProxy, f: &Potential, tol: f64) -> Result<BowenRoot> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("bisection tolerance {tol} must be positive")));
    }
    let b = t.birkhoff(f)?;
    let min_f = b.observed_min();
    if !(min_f > 0.0) {
        return Err(Error::InvalidInput(format!("potential must be positive, min sampled value {min_f}")));
    }
    let sup_f = b.observed_sup().max(1.0);
    let eval = |s: f64| -> Result<f64> { Ok(proxy.proxy(&f.scale(-s))?.value) };
    let m0 = proxy.proxy(&Potential::zero())?.value;
    if m0 < -tol {
        return Err(Error::Bracket(format!("proxy at s = 0 is negative ({m0})")));
    }
    let (mut lo, mut hi) = (0.0, m0.max(0.0) / min_f + 1.0);
    let bracket = (lo, hi);
    let v_lo = eval(lo)?;
    let mut evaluated = vec![(lo, v_lo)];
    let mut trace = vec![BisectionStep { lo, hi, s: lo, value: v_lo }];
    if v_lo.abs() <= tol {
        return Ok(BowenRoot {
            s0: 0.0,
            value_at_root: v_lo,
            bracket,
            trace,
            monotone: true,
        });
    }
    let v_hi = eval(hi)?;
    evaluated.push((hi, v_hi));
    trace.push(BisectionStep { lo, hi, s: hi, value: v_hi });
    if v_hi > 0.0 {
        return Err(Error::Bracket(format!("no sign change on [0, {hi}]: proxy {v_lo} .. {v_hi}")));
    }
    let width = tol / sup_f;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let v = eval(mid)?;
        evaluated.push((mid, v));
        trace.push(BisectionStep { lo, hi, s: mid, value: v });
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s0 = 0.5 * (lo + hi);
    let value_at_root = eval(s0)?;
    evaluated.push((s0, value_at_root));
    evaluated.sort_by(|x, y| x.0.total_cmp(&y.0));
    let monotone = evaluated.windows(2).all(|w| w[0].0 == w[1].0 || w[1].1 < w[0].1);
    Ok(BowenRoot {
        s0,
        value_at_root,
        bracket,
        trace,
        monotone,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BsReport {
    pub s0: f64,
    pub integral: f64,
    pub f_of: f64,
    pub ratio: f64,
    pub residual: f64,
}

/// `|s0 − F(mu) / ∫ f dmu|` for an equilibrium candidate of `−s0 f`.
pub fn bs_consistency(mu: &FinMeasure, f_values: &[f64], s0: f64, dict: &Dictionary) -> Result<BsReport> {
    let integral = mu.integrate(f_values);
    if integral == 0.0 {
        return Err(Error::InvalidInput("∫ f dmu vanishes".into()));
    }
    let fo = f_of(dict, mu)?;
    let ratio = fo / integral;
    Ok(BsReport {
        s0,
        integral,
        f_of: fo,
        ratio,
        residual: (s0 - ratio).abs(),
    })
}
