//! Orbit segments, Birkhoff sums and Bowen distances over a finite sample.
//!
//! The table is immutable once built. Parallel work (orbit construction,
//! potential evaluation, pairwise distances) only ever fills independent
//! slots; every reduction that feeds a reported number runs sequentially in a
//! fixed order, so results do not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::system::{Point, Potential, SystemRef};

/// Samples at or below this size get a full triangular distance cache;
/// larger samples are indexed with a vantage-point tree.
pub const PAIR_CACHE_MAX_POINTS: usize = 1500;

/// How the sample was drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    /// Seeded uniform draw of `count` points.
    Uniform { count: usize, seed: u64 },
    /// Every point of the truncated space; fails above `limit` points.
    Exhaustive { limit: usize },
}

/// Draws a sample and reports whether it is the whole (truncated) space.
pub fn draw_sample(s: &SystemRef, kind: SampleKind) -> Result<(Vec<Point>, bool)> {
    match kind {
        SampleKind::Uniform { count, seed } => {
            let pts = s.sample(count, seed);
            if pts.is_empty() {
                return Err(Error::EmptySample);
            }
            let exhaustive = s
                .enumerate(pts.len())
                .is_some_and(|all| all.len() == pts.len() && all == pts);
            Ok((pts, exhaustive))
        }
        SampleKind::Exhaustive { limit } => {
            let pts = s.enumerate(limit).ok_or_else(|| {
                Error::SizeLimit(format!("{} has more than {limit} points", s.name()))
            })?;
            Ok((pts, true))
        }
    }
}

/// Prefix sums `S_n f` along every orbit of a table.
#[derive(Clone, Debug)]
pub struct Birkhoff {
    name: String,
    n_max: usize,
    values: Vec<f64>,
    sums: Vec<f64>,
    lip_f: f64,
    sup_norm: f64,
}

impl Birkhoff {
    /// Builds prefix sums from raw values `f(T^j x_i)` laid out row-major `N x n_max`.
    pub fn from_values(name: impl Into<String>, n_max: usize, values: Vec<f64>, lip_f: f64, sup_norm: f64) -> Self {
        assert!(n_max >= 1 && values.len() % n_max == 0);
        let rows = values.len() / n_max;
        let mut sums = Vec::with_capacity(rows * (n_max + 1));
        for row in values.chunks(n_max) {
            let mut acc = 0.0;
            sums.push(0.0);
            for v in row {
                acc += v;
                sums.push(acc);
            }
        }
        Birkhoff {
            name: name.into(),
            n_max,
            values,
            sums,
            lip_f,
            sup_norm,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n_max
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lip_f(&self) -> f64 {
        self.lip_f
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// `f(T^j x_i)`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_max + j]
    }

    /// `S_n f(x_i)`, with `S_0 f = 0`.
    pub fn sum(&self, i: usize, n: usize) -> f64 {
        self.sums[i * (self.n_max + 1) + n]
    }

    /// Values at the sample points themselves (`j = 0`).
    pub fn point_values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i, 0)).collect()
    }

    /// Smallest `f` over every orbit point of the table.
    pub fn observed_min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `|f|` over every orbit point of the table.
    pub fn observed_sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Orbit segments `x_i, T x_i, .., T^(n_max-1) x_i` of a sample.
pub struct OrbitTable {
    system: SystemRef,
    points: Vec<Point>,
    n_max: usize,
    orbits: Vec<Vec<Point>>,
    exhaustive: bool,
    registered: Vec<Birkhoff>,
}

impl std::fmt::Debug for OrbitTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OrbitTable")
            .field("system", &self.system.name())
            .field("points", &self.points.len())
            .field("n_max", &self.n_max)
            .field("exhaustive", &self.exhaustive)
            .finish()
    }
}

/// Builds the orbit table and registers Birkhoff sums for `fs`.
pub fn build_table(s: SystemRef, pts: Vec<Point>, n_max: usize, fs: &[Potential]) -> Result<OrbitTable> {
    if n_max < 1 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    if pts.is_empty() {
        return Err(Error::EmptySample);
    }
    let horizon = s.horizon();
    if n_max.saturating_add(1) > horizon {
        return Err(Error::HorizonExceeded {
            requested: n_max + 1,
            horizon,
        });
    }
    let orbits = pts
        .par_iter()
        .map(|x| {
            let mut row = Vec::with_capacity(n_max);
            row.push(x.clone());
            for j in 1..n_max {
                let next = s.apply(&row[j - 1])?;
                row.push(next);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = OrbitTable {
        system: s,
        points: pts,
        n_max,
        orbits,
        exhaustive: false,
        registered: Vec::new(),
    };
    for f in fs {
        let b = table.birkhoff(f)?;
        table.registered.push(b);
    }
    Ok(table)
}

impl OrbitTable {
    /// Marks the sample as the whole (truncated) space.
    pub fn with_exhaustive(mut self, exhaustive: bool) -> Self {
        self.exhaustive = exhaustive;
        self
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn system(&self) -> &SystemRef {
        &self.system
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// `T^j x_i`.
    pub fn orbit(&self, i: usize, j: usize) -> &Point {
        &self.orbits[i][j]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(())
    }

    pub fn check_order(&self, n: usize) -> Result<()> {
        if n < 1 || n > self.n_max {
            return Err(Error::OrderOutOfRange { n, n_max: self.n_max });
        }
        Ok(())
    }

    /// Bowen distance `d_n(x_i, x_j) = max_{k<n} d(T^k x_i, T^k x_j)`.
    pub fn bowen_dist(&self, i: usize, j: usize, n: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        self.check_order(n)?;
        Ok(self.bowen_unchecked(i, j, n))
    }

    pub(crate) fn bowen_unchecked(&self, i: usize, j: usize, n: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = (&self.orbits[i], &self.orbits[j]);
        let mut best: f64 = 0.0;
        for k in 0..n {
            best = best.max(self.system.dist(&a[k], &b[k]));
        }
        best
    }

    /// Evaluates `f` along every orbit and forms prefix sums.
    pub fn birkhoff(&self, f: &Potential) -> Result<Birkhoff> {
        let rows = self
            .orbits
            .par_iter()
            .map(|row| row.iter().map(|x| f.eval(x)).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        let values = rows.into_iter().flatten().collect();
        Ok(Birkhoff::from_values(f.name(), self.n_max, values, f.lip_f(), f.sup_norm()))
    }

    /// Registered Birkhoff table for a potential, by name.
    pub fn registered(&self, name: &str) -> Option<&Birkhoff> {
        self.registered.iter().find(|b| b.name() == name)
    }

    /// `S_n f(x_i)` for a potential registered at build time.
    pub fn birkhoff_sum(&self, f: &Potential, i: usize, n: usize) -> Result<f64> {
        let b = self
            .registered(f.name())
            .ok_or_else(|| Error::UnknownPotential(f.name().to_string()))?;
        self.check_index(i)?;
        if n > self.n_max {
            return Err(Error::OrderOutOfRange { n, n_max: self.n_max });
        }
        Ok(b.sum(i, n))
    }

    /// Neighbor index for the metric `d_n`.
    pub fn index(&self, n: usize) -> Result<BowenIndex<'_>> {
        self.check_order(n)?;
        if self.len() <= PAIR_CACHE_MAX_POINTS {
            Ok(BowenIndex {
                table: self,
                n,
                kind: IndexKind::Cache(PairCache::build(self, n)),
            })
        } else {
            Ok(BowenIndex {
                table: self,
                n,
                kind: IndexKind::Tree(VpTree::build(self, n)),
            })
        }
    }

    /// Index that recomputes every distance on demand.
    pub fn brute_index(&self, n: usize) -> Result<BowenIndex<'_>> {
        self.check_order(n)?;
        Ok(BowenIndex {
            table: self,
            n,
            kind: IndexKind::Brute,
        })
    }
}

/// All-pairs `d_n` in a packed upper-triangular layout.
#[derive(Clone, Debug)]
pub struct PairCache {
    len: usize,
    data: Vec<f64>,
}

impl PairCache {
    pub fn build(t: &OrbitTable, n: usize) -> Self {
        let len = t.len();
        let rows: Vec<Vec<f64>> = (0..len)
            .into_par_iter()
            .map(|i| ((i + 1)..len).map(|j| t.bowen_unchecked(i, j, n)).collect())
            .collect();
        PairCache {
            len,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.data[a * (2 * self.len - a - 1) / 2 + (b - a - 1)]
    }
}

const VP_LEAF: usize = 16;
const VP_PRUNE_SLACK: f64 = 1e-12;
const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
enum VpNode {
    Leaf(Vec<usize>),
    Split {
        vantage: usize,
        mu: f64,
        inside: usize,
        outside: usize,
    },
}

/// Vantage-point tree over the sample under `d_n`. Exact range queries.
#[derive(Clone, Debug)]
pub struct VpTree {
    nodes: Vec<VpNode>,
    root: usize,
}

impl VpTree {
    pub fn build(t: &OrbitTable, n: usize) -> Self {
        let mut items: Vec<usize> = (0..t.len()).collect();
        let mut nodes = Vec::new();
        let root = Self::build_node(t, n, &mut items, &mut nodes);
        VpTree { nodes, root }
    }

    fn build_node(t: &OrbitTable, n: usize, items: &mut [usize], nodes: &mut Vec<VpNode>) -> usize {
        if items.is_empty() {
            return NONE;
        }
        if items.len() <= VP_LEAF {
            nodes.push(VpNode::Leaf(items.to_vec()));
            return nodes.len() - 1;
        }
        let vantage = items[0];
        let rest = &items[1..];
        let mut keyed: Vec<(f64, usize)> = if rest.len() > 4096 {
            rest.par_iter().map(|&j| (t.bowen_unchecked(vantage, j, n), j)).collect()
        } else {
            rest.iter().map(|&j| (t.bowen_unchecked(vantage, j, n), j)).collect()
        };
        let mid = keyed.len() / 2;
        keyed.select_nth_unstable_by(mid, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mu = keyed[mid].0;
        let mut inner: Vec<usize> = keyed[..mid].iter().map(|p| p.1).collect();
        let mut outer: Vec<usize> = keyed[mid..].iter().map(|p| p.1).collect();
        let slot = nodes.len();
        nodes.push(VpNode::Leaf(Vec::new()));
        let inside = Self::build_node(t, n, &mut inner, nodes);
        let outside = Self::build_node(t, n, &mut outer, nodes);
        nodes[slot] = VpNode::Split {
            vantage,
            mu,
            inside,
            outside,
        };
        slot
    }

    /// All `j` with `dist(q, j) < radius`, unsorted.
    pub fn within<D: Fn(usize, usize) -> f64>(&self, q: usize, radius: f64, dist: D) -> Vec<usize> {
        let mut out = Vec::new();
        if self.root == NONE {
            return out;
        }
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                VpNode::Leaf(items) => {
                    out.extend(items.iter().copied().filter(|&j| dist(q, j) < radius));
                }
                VpNode::Split {
                    vantage,
                    mu,
                    inside,
                    outside,
                } => {
                    let dv = dist(q, *vantage);
                    if dv < radius {
                        out.push(*vantage);
                    }
                    if *inside != NONE && dv - radius < mu + VP_PRUNE_SLACK {
                        stack.push(*inside);
                    }
                    if *outside != NONE && dv + radius > mu - VP_PRUNE_SLACK {
                        stack.push(*outside);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug)]
enum IndexKind {
    Brute,
    Cache(PairCache),
    Tree(VpTree),
}

/// Range queries `{j : d_n(x_i, x_j) < eps}` over a table.
#[derive(Debug)]
pub struct BowenIndex<'a> {
    table: &'a OrbitTable,
    n: usize,
    kind: IndexKind,
}

impl BowenIndex<'_> {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.kind {
            IndexKind::Cache(c) => c.get(i, j),
            _ => self.table.bowen_unchecked(i, j, self.n),
        }
    }

    /// Sorted indices within open radius `eps` of `i` (always includes `i`).
    pub fn within(&self, i: usize, eps: f64) -> Vec<usize> {
        let mut out = match &self.kind {
            IndexKind::Brute => (0..self.table.len())
                .filter(|&j| self.table.bowen_unchecked(i, j, self.n) < eps)
                .collect(),
            IndexKind::Cache(c) => (0..self.table.len()).filter(|&j| c.get(i, j) < eps).collect(),
            IndexKind::Tree(tree) => tree.within(i, eps, |a, b| self.table.bowen_unchecked(a, b, self.n)),
        };
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::system::{make_finite_system, make_full_shift, make_grid_shift, FiniteSystem, Potential, System};

    fn swap() -> SystemRef {
        Arc::new(make_finite_system(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1, 0]).unwrap())
    }

    #[test]
    fn one_point_orbits_are_constant() {
        let s: SystemRef = Arc::new(FiniteSystem::one_point());
        let f = Potential::constant(0.3);
        let t = build_table(s.clone(), s.sample(1, 0), 5, &[f.clone()]).unwrap();
        for j in 0..5 {
            assert_eq!(t.orbit(0, j), &Point::index(0));
        }
        for n in 0..=5 {
            assert!((t.birkhoff_sum(&f, 0, n).unwrap() - n as f64 * 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn swap_birkhoff_sums_alternate() {
        let s = swap();
        let fin = make_finite_system(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1, 0]).unwrap();
        let f = fin.potential(vec![0.0, 1.0], "ind").unwrap();
        let t = build_table(s.clone(), s.sample(2, 0), 4, &[f.clone()]).unwrap();
        let row = |i| (0..=4).map(|n| t.birkhoff_sum(&f, i, n).unwrap()).collect::<Vec<_>>();
        assert_eq!(row(0), vec![0.0, 0.0, 1.0, 1.0, 2.0]);
        assert_eq!(row(1), vec![0.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            t.birkhoff_sum(&Potential::constant(9.0), 0, 1),
            Err(Error::UnknownPotential(_))
        ));
    }

    #[test]
    fn full_shift_orbits_are_shifted_words() {
        let s = make_full_shift(2, 12).unwrap();
        let sref: SystemRef = Arc::new(s.clone());
        let pts = s.sample(50, 4);
        let t = build_table(sref, pts.clone(), 6, &[]).unwrap();
        for (i, w) in pts.iter().enumerate() {
            for j in 0..6 {
                assert_eq!(t.orbit(i, j).code(), &w.code()[j..]);
            }
        }
    }

    #[test]
    fn horizon_is_enforced() {
        let s: SystemRef = Arc::new(make_full_shift(2, 5).unwrap());
        let pts = s.sample(3, 0);
        assert!(build_table(s.clone(), pts.clone(), 4, &[]).is_ok());
        assert!(matches!(
            build_table(s, pts, 5, &[]),
            Err(Error::HorizonExceeded { requested: 6, horizon: 5 })
        ));
    }

    #[test]
    fn bowen_distance_basics() {
        let fin = FiniteSystem::random(5, 3).unwrap();
        let s: SystemRef = Arc::new(fin.clone());
        let t = build_table(s, fin.points(), 4, &[]).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(t.bowen_dist(i, j, 1).unwrap(), fin.matrix()[i][j]);
                for n in 1..4 {
                    let a = t.bowen_dist(i, j, n).unwrap();
                    assert_eq!(a, t.bowen_dist(j, i, n).unwrap());
                    assert!(a <= t.bowen_dist(i, j, n + 1).unwrap());
                }
            }
        }
        assert!(t.bowen_dist(0, 9, 1).is_err());
        assert!(t.bowen_dist(0, 1, 0).is_err());
        assert!(t.bowen_dist(0, 1, 5).is_err());
    }

    #[test]
    fn identity_map_bowen_distance_is_constant() {
        let d = crate::system::random_metric(4, 8);
        let fin = make_finite_system(d.clone(), vec![0, 1, 2, 3]).unwrap();
        let t = build_table(Arc::new(fin.clone()), fin.points(), 5, &[]).unwrap();
        for n in 1..=5 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(t.bowen_dist(i, j, n).unwrap(), d[i][j]);
                }
            }
        }
    }

    #[test]
    fn full_shift_bowen_distance_by_hand() {
        // Words first disagreeing at letter k: d_n = 2^-(k-n+1) for n <= k.
        let s: SystemRef = Arc::new(make_full_shift(2, 12).unwrap());
        for k in 1..8usize {
            let x = Point::new(vec![0.0; 12]);
            let mut code = vec![0.0; 12];
            code[k] = 1.0;
            let y = Point::new(code);
            let t = build_table(s.clone(), vec![x, y], k.min(10), &[]).unwrap();
            for n in 1..=k.min(10) {
                let expected = (0..n).map(|j| 0.5f64.powi((k - j) as i32)).fold(0.0, f64::max);
                assert_eq!(expected, 0.5f64.powi((k - n + 1) as i32));
                assert_eq!(t.bowen_dist(0, 1, n).unwrap(), expected);
            }
        }
    }

    #[test]
    fn cocycle_additivity() {
        let s = make_full_shift(2, 12).unwrap();
        let f = s.coord0();
        let pts = s.sample(20, 6);
        let sref: SystemRef = Arc::new(s.clone());
        let t = build_table(sref.clone(), pts.clone(), 8, &[f.clone()]).unwrap();
        // Shifted points get their own table so both sides are recomputed independently.
        let shifted: Vec<Point> = pts.iter().map(|w| Point::new(w.code()[2..].to_vec())).collect();
        let t2 = build_table(sref, shifted, 3, &[f.clone()]).unwrap();
        for i in 0..20 {
            let whole = t.birkhoff_sum(&f, i, 5).unwrap();
            let parts = t.birkhoff_sum(&f, i, 2).unwrap() + t2.birkhoff_sum(&f, i, 3).unwrap();
            assert!((whole - parts).abs() < 1e-12);
        }
    }

    #[test]
    fn indexes_agree_with_brute_force() {
        let g = make_grid_shift(1, 9, 8).unwrap();
        let sref: SystemRef = Arc::new(g.clone());
        let t = build_table(sref, g.sample(2500, 3), 3, &[]).unwrap();
        for n in 1..=3 {
            let brute = t.brute_index(n).unwrap();
            let tree = t.index(n).unwrap();
            assert!(matches!(tree.kind, IndexKind::Tree(_)));
            for &i in &[0usize, 17, 999, 2499] {
                for eps in [0.05, 0.13, 0.3] {
                    assert_eq!(brute.within(i, eps), tree.within(i, eps));
                }
            }
        }
        let small = build_table(Arc::new(g.clone()), g.sample(300, 1), 2, &[]).unwrap();
        let cache = small.index(2).unwrap();
        let brute = small.brute_index(2).unwrap();
        for i in 0..300 {
            for j in 0..300 {
                assert_eq!(cache.dist(i, j), brute.dist(i, j));
            }
        }
    }
}
