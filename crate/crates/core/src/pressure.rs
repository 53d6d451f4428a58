//! Weighted separated / spanning sums `P_n` and `Q_n` on a sample.
//!
//! `P_n(eps)` is a supremum over `(n, eps)`-separated subsets and `Q_n(eps)` an
//! infimum over `(n, eps)`-spanning subsets of `Σ (1/eps)^{S_n f(x)}`. The greedy
//! construction below yields a maximal separated set, which is a valid witness
//! for both: a lower bound on `P_n` and an upper bound on `Q_n`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::logspace::{log_inv, log_sum_exp};
use crate::orbit::{Birkhoff, BowenIndex, OrbitTable};
use crate::system::Potential;

/// Relative slack used for comparisons that hold exactly in real arithmetic.
pub const ROUNDING_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureKind {
    SeparatedLower,
    SpanningUpper,
    Exact,
}

/// `log Σ_{x in witness} (1/eps)^{S_n f(x)}` together with the witness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PressureValue {
    pub log_value: f64,
    pub n: usize,
    pub eps: f64,
    pub kind: PressureKind,
    pub witness: Vec<usize>,
}

impl PressureValue {
    /// Builds a value of the given kind by summing over `witness`.
    pub fn from_witness(b: &Birkhoff, witness: Vec<usize>, n: usize, eps: f64, kind: PressureKind) -> Self {
        PressureValue {
            log_value: log_weighted_sum(b, &witness, n, eps),
            n,
            eps,
            kind,
            witness,
        }
    }

    /// Re-evaluates the log-sum over the stored witness.
    pub fn recompute(&self, b: &Birkhoff) -> f64 {
        log_weighted_sum(b, &self.witness, self.n, self.eps)
    }
}

/// `log Σ_{i in set} exp(S_n f(x_i) · ln(1/eps))`, accumulated in set order.
pub fn log_weighted_sum(b: &Birkhoff, set: &[usize], n: usize, eps: f64) -> f64 {
    let l = log_inv(eps);
    let terms: Vec<f64> = set.iter().map(|&i| b.sum(i, n) * l).collect();
    log_sum_exp(&terms)
}

pub fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::ScaleOutOfRange(eps));
    }
    Ok(())
}

/// Candidate order for the greedy: descending `S_n f`, ties by index.
pub fn greedy_order(b: &Birkhoff, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&i, &j| b.sum(j, n).total_cmp(&b.sum(i, n)).then(i.cmp(&j)));
    order
}

/// Maximal `(n, eps)`-separated subset built in the given candidate order.
pub fn greedy_witness_ordered(idx: &BowenIndex<'_>, order: &[usize], eps: f64) -> Vec<usize> {
    let mut blocked = vec![false; order.len()];
    let mut witness = Vec::new();
    for &c in order {
        if blocked[c] {
            continue;
        }
        witness.push(c);
        for j in idx.within(c, eps) {
            blocked[j] = true;
        }
    }
    witness
}

/// Maximal `(n, eps)`-separated subset, greedy by descending `S_n f`.
pub fn greedy_witness(idx: &BowenIndex<'_>, b: &Birkhoff, eps: f64) -> Vec<usize> {
    greedy_witness_ordered(idx, &greedy_order(b, idx.order()), eps)
}

fn table_birkhoff(t: &OrbitTable, f: &Potential) -> Result<Birkhoff> {
    match t.registered(f.name()) {
        Some(b) => Ok(b.clone()),
        None => t.birkhoff(f),
    }
}

fn checked_witness(t: &OrbitTable, f: &Potential, n: usize, eps: f64) -> Result<(Birkhoff, Vec<usize>)> {
    check_eps(eps)?;
    if t.is_empty() {
        return Err(Error::EmptySample);
    }
    let b = table_birkhoff(t, f)?;
    let idx = t.index(n)?;
    let w = greedy_witness(&idx, &b, eps);
    Ok((b, w))
}

/// Greedy maximal separated set; a lower bound on the sample `P_n`.
pub fn greedy_separated(t: &OrbitTable, f: &Potential, n: usize, eps: f64) -> Result<PressureValue> {
    let (b, w) = checked_witness(t, f, n, eps)?;
    Ok(PressureValue::from_witness(&b, w, n, eps, PressureKind::SeparatedLower))
}

/// The same maximal separated set read as a spanning set; an upper bound on the sample `Q_n`.
pub fn spanning_from_separated(t: &OrbitTable, f: &Potential, n: usize, eps: f64) -> Result<PressureValue> {
    let (b, w) = checked_witness(t, f, n, eps)?;
    Ok(PressureValue::from_witness(&b, w, n, eps, PressureKind::SpanningUpper))
}

/// All pairs of `set` at `d_n >= eps`.
pub fn is_separated(t: &OrbitTable, set: &[usize], n: usize, eps: f64) -> Result<bool> {
    for (a, &i) in set.iter().enumerate() {
        for &j in &set[a + 1..] {
            if i == j || t.bowen_dist(i, j, n)? < eps {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Every sample point lies within open `d_n`-distance `eps` of `set`.
pub fn is_spanning(t: &OrbitTable, set: &[usize], n: usize, eps: f64) -> Result<bool> {
    for x in 0..t.len() {
        let mut covered = false;
        for &c in set {
            if t.bowen_dist(x, c, n)? < eps {
                covered = true;
                break;
            }
        }
        if !covered {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Inputs to the sandwich inequalities at one `(n, eps)`.
#[derive(Clone, Debug)]
pub struct SandwichInputs {
    /// Separated-side value at `eps` (greedy lower bound or exact).
    pub p: PressureValue,
    /// Spanning-side value at `eps`.
    pub q: PressureValue,
    /// Spanning-side value at `eps / 2`.
    pub q_half: PressureValue,
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub n: usize,
    pub eps: f64,
    pub gamma: f64,
    pub sup_norm: f64,
    pub log_p: f64,
    pub log_q: f64,
    pub log_q_half: f64,
    /// `log Σ_F (1/eps)^{S_n f − n γ} − n ‖f‖ ln 2`.
    pub rhs_b: f64,
    pub spanning_below_separated: bool,
    pub half_scale_bound: bool,
    pub p_witness: Vec<usize>,
    pub q_witness: Vec<usize>,
    pub q_half_witness: Vec<usize>,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.spanning_below_separated && self.half_scale_bound
    }

    pub fn failure(&self) -> Option<String> {
        if !self.spanning_below_separated {
            return Some(format!(
                "Q_n > P_n at n={}, eps={}: {} > {} (Q witness {:?}, P witness {:?})",
                self.n, self.eps, self.log_q, self.log_p, self.q_witness, self.p_witness
            ));
        }
        if !self.half_scale_bound {
            return Some(format!(
                "half-scale bound failed at n={}, eps={}: log Q(eps/2) = {} < {} (E {:?}, F {:?})",
                self.n, self.eps, self.log_q_half, self.rhs_b, self.q_half_witness, self.p_witness
            ));
        }
        None
    }
}

fn tol_for(a: f64, b: f64) -> f64 {
    ROUNDING_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Evaluates both sandwich inequalities for already computed values.
pub fn sandwich_from(inputs: &SandwichInputs, lip_f: f64, sup_norm: f64) -> SandwichReport {
    let n = inputs.p.n;
    let eps = inputs.p.eps;
    let gamma = lip_f * eps;
    let l = log_inv(eps);
    let nf = n as f64;
    let rhs_b = inputs.p.log_value - nf * gamma * l - nf * sup_norm * std::f64::consts::LN_2;
    SandwichReport {
        n,
        eps,
        gamma,
        sup_norm,
        log_p: inputs.p.log_value,
        log_q: inputs.q.log_value,
        log_q_half: inputs.q_half.log_value,
        rhs_b,
        spanning_below_separated: inputs.q.log_value <= inputs.p.log_value + tol_for(inputs.q.log_value, inputs.p.log_value),
        half_scale_bound: inputs.q_half.log_value + tol_for(inputs.q_half.log_value, rhs_b) >= rhs_b,
        p_witness: inputs.p.witness.clone(),
        q_witness: inputs.q.witness.clone(),
        q_half_witness: inputs.q_half.witness.clone(),
    }
}

/// Sandwich check on greedy witnesses: `Q_n(eps) <= P_n(eps)` and
/// `log Q_n(eps/2) >= log P_n(eps) − n γ(eps) ln(1/eps) − n ‖f‖ ln 2`.
pub fn check_sandwich(t: &OrbitTable, f: &Potential, n: usize, eps: f64) -> Result<SandwichReport> {
    check_eps(eps)?;
    let inputs = SandwichInputs {
        p: greedy_separated(t, f, n, eps)?,
        q: spanning_from_separated(t, f, n, eps)?,
        q_half: spanning_from_separated(t, f, n, eps / 2.0)?,
    };
    Ok(sandwich_from(&inputs, f.lip_f(), f.sup_norm()))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::orbit::build_table;
    use crate::system::{FiniteSystem, System, SystemRef};

    fn finite_table(points: usize, seed: u64, n_max: usize) -> (FiniteSystem, OrbitTable) {
        let fin = FiniteSystem::random(points, seed).unwrap();
        let s: SystemRef = Arc::new(fin.clone());
        let t = build_table(s, fin.points(), n_max, &[]).unwrap();
        (fin, t)
    }

    #[test]
    fn tiny_eps_takes_the_whole_sample() {
        let (fin, t) = finite_table(6, 11, 3);
        let f = fin.random_potential(3, 1.0).unwrap();
        let b = t.birkhoff(&f).unwrap();
        let p = greedy_separated(&t, &f, 2, 1e-6).unwrap();
        let mut w = p.witness.clone();
        w.sort_unstable();
        assert_eq!(w, (0..6).collect::<Vec<_>>());
        let all: Vec<usize> = (0..6).collect();
        assert!((p.log_value - log_weighted_sum(&b, &all, 2, 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn one_point_values() {
        let s: SystemRef = Arc::new(FiniteSystem::one_point());
        let f = Potential::constant(0.7);
        let t = build_table(s.clone(), s.sample(1, 0), 4, &[]).unwrap();
        let p = greedy_separated(&t, &f, 3, 0.3).unwrap();
        let q = spanning_from_separated(&t, &f, 3, 0.3).unwrap();
        assert_eq!(p.witness, vec![0]);
        assert!((p.log_value - 3.0 * 0.7 * log_inv(0.3)).abs() < 1e-12);
        assert_eq!(p.log_value, q.log_value);
        assert_eq!(q.kind, PressureKind::SpanningUpper);
    }

    #[test]
    fn large_eps_gives_single_best_point() {
        let (fin, t) = finite_table(6, 5, 3);
        let f = fin.random_potential(9, 2.0).unwrap();
        let b = t.birkhoff(&f).unwrap();
        // Random metrics have diameter at most 1, so eps = 0.999... covers only if below.
        let diam = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .map(|(i, j)| t.bowen_dist(i, j, 2).unwrap())
            .fold(0.0, f64::max);
        if diam < 0.99 {
            let q = spanning_from_separated(&t, &f, 2, 0.99).unwrap();
            assert_eq!(q.witness.len(), 1);
            let best = (0..6).map(|i| b.sum(i, 2)).fold(f64::NEG_INFINITY, f64::max);
            assert!((q.log_value - best * log_inv(0.99)).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_eps_is_rejected() {
        let (fin, t) = finite_table(3, 1, 2);
        let f = fin.random_potential(1, 1.0).unwrap();
        for eps in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(greedy_separated(&t, &f, 1, eps), Err(Error::ScaleOutOfRange(_))));
        }
    }

    #[test]
    fn additive_constant_shifts_exactly_with_same_witness() {
        let (fin, t) = finite_table(7, 21, 4);
        let f = fin.random_potential(4, 1.0).unwrap();
        let g = f.add_const(0.37);
        for n in 1..=4 {
            for eps in [0.2, 0.35, 0.5] {
                let a = greedy_separated(&t, &f, n, eps).unwrap();
                let b = greedy_separated(&t, &g, n, eps).unwrap();
                assert_eq!(a.witness, b.witness);
                let shift = n as f64 * 0.37 * log_inv(eps);
                assert!((b.log_value - a.log_value - shift).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn greedy_witness_is_separated_and_spanning(seed in 0u64..500, n in 1usize..4, eps in 0.05f64..0.95) {
            let (fin, t) = finite_table(7, seed, 3);
            let f = fin.random_potential(seed + 1, 1.0).unwrap();
            let p = greedy_separated(&t, &f, n, eps).unwrap();
            prop_assert!(is_separated(&t, &p.witness, n, eps).unwrap());
            prop_assert!(is_spanning(&t, &p.witness, n, eps).unwrap());
            let b = t.birkhoff(&f).unwrap();
            prop_assert!((p.recompute(&b) - p.log_value).abs() < 1e-10);
        }

        #[test]
        fn sandwich_holds_on_greedy_witnesses(seed in 0u64..500, n in 1usize..4, eps in 0.05f64..0.95) {
            let (fin, t) = finite_table(6, seed, 3);
            let f = fin.random_potential(seed ^ 77, 1.5).unwrap();
            let r = check_sandwich(&t, &f, n, eps).unwrap();
            prop_assert!(r.passed(), "{:?}", r.failure());
        }

        #[test]
        fn monotone_in_potential_on_common_witness(seed in 0u64..500, n in 1usize..4, eps in 0.05f64..0.95, bump in 0.0f64..1.0) {
            let (fin, t) = finite_table(6, seed, 3);
            let f = fin.random_potential(seed, 1.0).unwrap();
            let g = f.max(&fin.random_potential(seed + 9, 1.0).unwrap()).add_const(bump);
            let p = greedy_separated(&t, &f, n, eps).unwrap();
            let bf = t.birkhoff(&f).unwrap();
            let bg = t.birkhoff(&g).unwrap();
            prop_assert!(log_weighted_sum(&bf, &p.witness, n, eps) <= log_weighted_sum(&bg, &p.witness, n, eps) + 1e-12);
        }
    }

    #[test]
    fn large_sample_uses_tree_and_matches_brute_force_greedy() {
        let g = crate::system::make_grid_shift(1, 5, 8).unwrap();
        let s: SystemRef = Arc::new(g.clone());
        let t = build_table(s, g.sample(2000, 9), 2, &[]).unwrap();
        let f = g.coord0();
        let b = t.birkhoff(&f).unwrap();
        for eps in [0.1, 0.3] {
            let fast = greedy_witness(&t.index(2).unwrap(), &b, eps);
            let slow = greedy_witness(&t.brute_index(2).unwrap(), &b, eps);
            assert_eq!(fast, slow);
        }
    }
}
