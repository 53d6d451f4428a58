//! Brute-force reference computations for tiny instances.
//!
//! Everything here recomputes orbits, Birkhoff sums and Bowen distances
//! straight from the [`System`] and [`Potential`] interfaces, without going
//! through the orbit tables or neighbor indices of `mdim-core`.

use mdim_core::error::{Error, Result};
use mdim_core::estimate::{MdimProxy, ProxyValue};
use mdim_core::pressure::{PressureKind, PressureValue, SandwichInputs};
use mdim_core::system::{Point, Potential, System};
use mdim_core::variational::Dictionary;

/// Largest sample for subset enumeration.
pub const MAX_SUBSET_POINTS: usize = 16;
/// Largest sample for the class-based exact computation (all pairs are checked).
pub const MAX_CLASS_POINTS: usize = 8192;

/// Orbit segments and Birkhoff sums, computed directly from the system.
#[derive(Clone, Debug)]
pub struct BruteOrbits<'a> {
    system: &'a dyn System,
    orbits: Vec<Vec<Point>>,
    pub sums: Vec<f64>,
}

impl BruteOrbits<'_> {
    /// `d_n(x_i, x_j) = max_{k<n} d(T^k x_i, T^k x_j)`.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.orbits[i]
            .iter()
            .zip(&self.orbits[j])
            .map(|(a, b)| self.system.dist(a, b))
            .fold(0.0, f64::max)
    }
}

pub fn brute_orbits<'a>(s: &'a dyn System, pts: &[Point], f: &Potential, n: usize) -> Result<BruteOrbits<'a>> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let mut orbits = Vec::with_capacity(pts.len());
    let mut sums = Vec::with_capacity(pts.len());
    for x in pts {
        let mut row = vec![x.clone()];
        for _ in 1..n {
            let next = s.apply(row.last().expect("nonempty"))?;
            row.push(next);
        }
        let mut acc = 0.0;
        for y in &row {
            acc += f.eval(y)?;
        }
        sums.push(acc);
        orbits.push(row);
    }
    Ok(BruteOrbits { system: s, orbits, sums })
}

fn log_sum(terms: &[f64]) -> f64 {
    let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
}

fn set_log_sum(sums: &[f64], set: &[usize], eps: f64) -> f64 {
    let l = (1.0 / eps).ln();
    log_sum(&set.iter().map(|&i| sums[i] * l).collect::<Vec<_>>())
}

fn check_scale(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::ScaleOutOfRange(eps));
    }
    Ok(())
}

/// Exact sample-restricted `P_n` and `Q_n` with optimal sets.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPressure {
    pub n: usize,
    pub eps: f64,
    pub exact_log_p: f64,
    pub exact_log_q: f64,
    pub argmax: Vec<usize>,
    pub argmin: Vec<usize>,
}

impl ExactPressure {
    pub fn p_value(&self) -> PressureValue {
        PressureValue {
            log_value: self.exact_log_p,
            n: self.n,
            eps: self.eps,
            kind: PressureKind::Exact,
            witness: self.argmax.clone(),
        }
    }

    pub fn q_value(&self) -> PressureValue {
        PressureValue {
            log_value: self.exact_log_q,
            n: self.n,
            eps: self.eps,
            kind: PressureKind::Exact,
            witness: self.argmin.clone(),
        }
    }
}

fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask >> b & 1 == 1).collect()
}

/// Enumerates every subset of a sample of at most 16 points.
pub fn exact_pressure(s: &dyn System, pts: &[Point], f: &Potential, n: usize, eps: f64) -> Result<ExactPressure> {
    check_scale(eps)?;
    let len = pts.len();
    if len == 0 {
        return Err(Error::EmptySample);
    }
    if len > MAX_SUBSET_POINTS {
        return Err(Error::SizeLimit(format!("{len} points exceed the subset oracle bound {MAX_SUBSET_POINTS}")));
    }
    let b = brute_orbits(s, pts, f, n)?;
    let close: Vec<u32> = (0..len)
        .map(|i| (0..len).filter(|&j| j != i && b.dist(i, j) < eps).fold(0u32, |m, j| m | 1 << j))
        .collect();
    let full: u32 = if len == 32 { u32::MAX } else { (1u32 << len) - 1 };
    let mut best_p = (f64::NEG_INFINITY, Vec::new());
    let mut best_q = (f64::INFINITY, Vec::new());
    for mask in 1..=full {
        let set = members(mask);
        let separated = set.iter().all(|&i| close[i] & mask == 0);
        let covered = set.iter().fold(0u32, |m, &i| m | close[i] | 1 << i) == full;
        if !separated && !covered {
            continue;
        }
        let v = set_log_sum(&b.sums, &set, eps);
        if separated && v > best_p.0 {
            best_p = (v, set.clone());
        }
        if covered && v < best_q.0 {
            best_q = (v, set);
        }
    }
    Ok(ExactPressure {
        n,
        eps,
        exact_log_p: best_p.0,
        exact_log_q: best_q.0,
        argmax: best_p.1,
        argmin: best_q.1,
    })
}

/// Exact values when `d_n < eps` is an equivalence relation on the sample
/// (ultrametric samples such as full-shift words). The relation is verified on
/// every pair; a violation is an error.
pub fn exact_pressure_by_classes(
    s: &dyn System,
    pts: &[Point],
    f: &Potential,
    n: usize,
    eps: f64,
) -> Result<ExactPressure> {
    check_scale(eps)?;
    let len = pts.len();
    if len == 0 {
        return Err(Error::EmptySample);
    }
    if len > MAX_CLASS_POINTS {
        return Err(Error::SizeLimit(format!("{len} points exceed the class oracle bound {MAX_CLASS_POINTS}")));
    }
    let b = brute_orbits(s, pts, f, n)?;
    let mut class = vec![usize::MAX; len];
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..len {
        if class[i] != usize::MAX {
            continue;
        }
        let id = reps.len();
        reps.push(i);
        for j in i..len {
            if class[j] == usize::MAX && b.dist(i, j) < eps {
                class[j] = id;
            }
        }
    }
    for i in 0..len {
        for j in i + 1..len {
            if (class[i] == class[j]) != (b.dist(i, j) < eps) {
                return Err(Error::InvalidInput(format!(
                    "closeness is not an equivalence at ({i}, {j})"
                )));
            }
        }
    }
    let mut hi = vec![usize::MAX; reps.len()];
    let mut lo = vec![usize::MAX; reps.len()];
    for i in 0..len {
        let c = class[i];
        if hi[c] == usize::MAX || b.sums[i] > b.sums[hi[c]] {
            hi[c] = i;
        }
        if lo[c] == usize::MAX || b.sums[i] < b.sums[lo[c]] {
            lo[c] = i;
        }
    }
    Ok(ExactPressure {
        n,
        eps,
        exact_log_p: set_log_sum(&b.sums, &hi, eps),
        exact_log_q: set_log_sum(&b.sums, &lo, eps),
        argmax: hi,
        argmin: lo,
    })
}

/// Exact sandwich inputs: `P_n(eps)`, `Q_n(eps)` and `Q_n(eps / 2)`.
pub fn exact_sandwich_inputs(s: &dyn System, pts: &[Point], f: &Potential, n: usize, eps: f64) -> Result<SandwichInputs> {
    let at = exact_pressure(s, pts, f, n, eps)?;
    let half = exact_pressure(s, pts, f, n, eps / 2.0)?;
    Ok(SandwichInputs {
        p: at.p_value(),
        q: at.q_value(),
        q_half: half.q_value(),
    })
}

/// `log P_n` on the full `m`-shift for a potential depending on the first
/// letter only, at `eps` in `(2^-(k+1), 2^-k]`:
/// `log [ m^k (Σ_a (1/eps)^{f(a)})^n ]`.
pub fn transfer_pressure(m: usize, f_letter: &[f64], n: usize, k: u32, eps: f64) -> Result<f64> {
    if m == 0 || f_letter.len() != m {
        return Err(Error::InvalidInput(format!("need {m} letter values, got {}", f_letter.len())));
    }
    let upper = 0.5f64.powi(k as i32);
    let lower = 0.5f64.powi(k as i32 + 1);
    if !(eps > lower && eps <= upper && eps < 1.0) {
        return Err(Error::ScaleOutOfRange(eps));
    }
    let l = (1.0 / eps).ln();
    let letters = log_sum(&f_letter.iter().map(|v| v * l).collect::<Vec<_>>());
    Ok(k as f64 * (m as f64).ln() + n as f64 * letters)
}

/// Dyadic level `k` with `eps` in `(2^-(k+1), 2^-k]`.
pub fn dyadic_level(eps: f64) -> u32 {
    let mut k = 0;
    while eps <= 0.5f64.powi(k as i32 + 1) {
        k += 1;
    }
    k
}

/// Size of the largest `delta`-separated subset of `{0, 1/(m-1), .., 1}`.
pub fn grid_separated_count(m: usize, delta: f64) -> usize {
    let values: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let mut count = 1;
    let mut last = values[0];
    for &v in &values[1..] {
        if v - last >= delta - 1e-12 {
            count += 1;
            last = v;
        }
    }
    count
}

/// Per-step growth rate `D ln N(eps)` of the quantized grid shift with `f ≡ 0`.
pub fn grid_shift_rate(dim: usize, m: usize, eps: f64) -> f64 {
    dim as f64 * (grid_separated_count(m, eps) as f64).ln()
}

// ---------------------------------------------------------------------------
// Max-min oracles
// ---------------------------------------------------------------------------

fn min_row(a: &[Vec<f64>], p: &[f64]) -> f64 {
    a.iter()
        .map(|row| row.iter().zip(p).map(|(x, y)| x * y).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub struct GridMaxMin {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub points: usize,
    /// Guaranteed bound on `true max − value`.
    pub bound: f64,
}

/// Largest grid size accepted by [`simplex_grid_maxmin`].
pub const MAX_GRID_POINTS: usize = 5_000_000;

fn walk_compositions(counts: &mut [usize], pos: usize, left: usize, visit: &mut dyn FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = left;
        visit(counts);
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        walk_compositions(counts, pos + 1, left - c, visit);
    }
}

fn grid_points(res: usize, s: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 0..(s - 1) as u128 {
        acc = acc * (res as u128 + s as u128 - 1 - i) / (i + 1);
    }
    acc.min(usize::MAX as u128) as usize
}

/// Brute-force max of `min_i (A p)_i` over `{p : p_j = c_j / res}`.
pub fn simplex_grid_maxmin(a: &[Vec<f64>], resolution: usize) -> Result<GridMaxMin> {
    if a.is_empty() || a[0].is_empty() || resolution == 0 {
        return Err(Error::InvalidInput("empty game or zero resolution".into()));
    }
    let s = a[0].len();
    let total = grid_points(resolution, s);
    if total > MAX_GRID_POINTS {
        return Err(Error::SizeLimit(format!("{total} grid points exceed {MAX_GRID_POINTS}")));
    }
    let mut best = (f64::NEG_INFINITY, vec![]);
    let mut visited = 0;
    let mut counts = vec![0usize; s];
    walk_compositions(&mut counts, 0, resolution, &mut |c| {
        let p: Vec<f64> = c.iter().map(|&x| x as f64 / resolution as f64).collect();
        let v = min_row(a, &p);
        visited += 1;
        if v > best.0 {
            best = (v, p);
        }
    });
    // Within the grid every p has a neighbor at l1 distance at most s / res;
    // each row moves by at most half its spread per unit of l1 distance.
    let spread = a
        .iter()
        .map(|row| {
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max);
    Ok(GridMaxMin {
        value: best.0,
        argmax: best.1,
        points: visited,
        bound: 0.5 * spread * s as f64 / resolution as f64,
    })
}

fn game_matrix(dict: &Dictionary, f_values: &[f64], support: &[usize]) -> Result<Vec<Vec<f64>>> {
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if let Some(&j) = support.iter().find(|&&j| j >= f_values.len()) {
        return Err(Error::IndexOutOfRange { index: j, len: f_values.len() });
    }
    Ok(dict
        .members()
        .iter()
        .map(|m| support.iter().map(|&j| m.values[j] + f_values[j]).collect())
        .collect())
}

/// Grid oracle for `max_p min_i ∫ (g_i + f) dp` over measures on `support`.
pub fn dictionary_grid_maxmin(dict: &Dictionary, f_values: &[f64], support: &[usize], resolution: usize) -> Result<GridMaxMin> {
    simplex_grid_maxmin(&game_matrix(dict, f_values, support)?, resolution)
}

/// Vertex-enumeration oracle for the same max-min.
pub fn dictionary_vertex_maxmin(dict: &Dictionary, f_values: &[f64], support: &[usize]) -> Result<(f64, Vec<f64>)> {
    vertex_maxmin(&game_matrix(dict, f_values, support)?)
}

fn gauss(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let mut piv = c;
        for r in c + 1..n {
            if m[r][c].abs() > m[piv][c].abs() {
                piv = r;
            }
        }
        if m[piv][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, piv);
        b.swap(c, piv);
        for r in 0..n {
            if r != c {
                let q = m[r][c] / m[c][c];
                if q != 0.0 {
                    for k in c..n {
                        m[r][k] -= q * m[c][k];
                    }
                    b[r] -= q * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / m[i][i]).collect())
}

/// Exact max-min by enumerating vertices of `{(p, t) : A p >= t, p in simplex}`.
pub fn vertex_maxmin(a: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    if a.is_empty() || a[0].is_empty() {
        return Err(Error::InvalidInput("empty game".into()));
    }
    let (r, s) = (a.len(), a[0].len());
    let total = r + s;
    if total > 24 {
        return Err(Error::SizeLimit(format!("{total} constraints exceed the vertex oracle bound")));
    }
    let mut best = (f64::NEG_INFINITY, vec![]);
    for mask in 0u32..(1u32 << total) {
        if mask.count_ones() as usize != s {
            continue;
        }
        // Unknowns p_0..p_{s-1}, t.
        let mut m = Vec::with_capacity(s + 1);
        let mut rhs = Vec::with_capacity(s + 1);
        for c in 0..total {
            if mask >> c & 1 == 0 {
                continue;
            }
            let mut row = vec![0.0; s + 1];
            if c < s {
                row[c] = 1.0;
            } else {
                row[..s].copy_from_slice(&a[c - s]);
                row[s] = -1.0;
            }
            m.push(row);
            rhs.push(0.0);
        }
        let mut sum_row = vec![1.0; s + 1];
        sum_row[s] = 0.0;
        m.push(sum_row);
        rhs.push(1.0);
        let Some(x) = gauss(m, rhs) else { continue };
        let (p, t) = (&x[..s], x[s]);
        if p.iter().any(|&w| w < -1e-10) {
            continue;
        }
        if min_row(a, p) < t - 1e-10 {
            continue;
        }
        if t > best.0 {
            best = (t, p.to_vec());
        }
    }
    if best.1.is_empty() {
        return Err(Error::Solver("no feasible vertex".into()));
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Exact single-scale proxy
// ---------------------------------------------------------------------------

/// `exact log P_n(eps) / (n ln(1/eps))` on a sample of at most 16 points, with
/// zero error budget.
pub struct ExactProxy<'a> {
    pub system: &'a dyn System,
    pub points: &'a [Point],
    pub n: usize,
    pub eps: f64,
}

impl MdimProxy for ExactProxy<'_> {
    fn proxy(&self, f: &Potential) -> Result<ProxyValue> {
        let e = exact_pressure(self.system, self.points, f, self.n, self.eps)?;
        Ok(ProxyValue {
            value: e.exact_log_p / (self.n as f64 * (1.0 / self.eps).ln()),
            budget: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdim_core::system::{make_finite_system, make_full_shift, FiniteSystem};

    #[test]
    fn one_point_exact() {
        let s = FiniteSystem::one_point();
        let f = Potential::constant(0.4);
        let e = exact_pressure(&s, &s.points(), &f, 3, 0.3).unwrap();
        assert_eq!(e.exact_log_p, e.exact_log_q);
        assert_eq!(e.argmax, vec![0]);
        assert!((e.exact_log_p - 3.0 * 0.4 * (1.0f64 / 0.3).ln()).abs() < 1e-12);
    }

    #[test]
    fn two_close_points() {
        let s = make_finite_system(vec![vec![0.0, 0.5], vec![0.5, 0.0]], vec![0, 1]).unwrap();
        let e = exact_pressure(&s, &s.points(), &Potential::zero(), 1, 0.6).unwrap();
        assert_eq!(e.exact_log_p, 0.0);
        assert_eq!(e.exact_log_q, 0.0);
    }

    #[test]
    fn transfer_examples() {
        let v = transfer_pressure(2, &[0.0, 1.0], 2, 1, 0.5).unwrap();
        assert!((v - 18f64.ln()).abs() < 1e-12);
        let one = transfer_pressure(1, &[0.7], 3, 2, 0.2).unwrap();
        assert!((one - 3.0 * 0.7 * 5f64.ln()).abs() < 1e-12);
        assert!(transfer_pressure(2, &[0.0, 1.0], 2, 1, 0.2).is_err());
        assert_eq!(dyadic_level(0.5), 1);
        assert_eq!(dyadic_level(0.3), 1);
        assert_eq!(dyadic_level(2f64.powi(-8)), 8);
    }

    #[test]
    fn length_three_words_by_hand() {
        // Eight words of length 3 at n = 2, eps = 1/2.
        let s = make_full_shift(2, 3).unwrap();
        let pts = s.enumerate(8).unwrap();
        let e = exact_pressure(&s, &pts, &s.coord0(), 2, 0.5).unwrap();
        assert!((e.exact_log_p - 18f64.ln()).abs() < 1e-12);
        let c = exact_pressure_by_classes(&s, &pts, &s.coord0(), 2, 0.5).unwrap();
        assert!((c.exact_log_p - e.exact_log_p).abs() < 1e-12);
        assert!((c.exact_log_q - e.exact_log_q).abs() < 1e-12);
    }

    #[test]
    fn grid_counts() {
        assert_eq!(grid_separated_count(17, 0.25), 5);
        assert_eq!(grid_separated_count(17, 0.125), 9);
        assert_eq!(grid_separated_count(17, 0.0625), 17);
        assert_eq!(grid_separated_count(3, 0.4), 3);
    }

    #[test]
    fn grid_and_vertex_agree() {
        let a = vec![vec![0.2, 0.9, 0.4], vec![0.8, 0.1, 0.5]];
        let g = simplex_grid_maxmin(&a, 200).unwrap();
        let (v, _) = vertex_maxmin(&a).unwrap();
        assert!(v >= g.value - 1e-12);
        assert!(v - g.value <= g.bound);
        assert_eq!(g.points, 201 * 202 / 2);
        let single = simplex_grid_maxmin(&[vec![0.3, 0.3]], 7).unwrap();
        assert_eq!(single.value, 0.3);
    }
}
