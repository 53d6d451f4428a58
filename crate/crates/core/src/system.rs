//! Computable dynamical systems, their metrics, and potentials.
//!
//! A system is presented through the [`System`] trait: a point codec (every
//! point is a finite vector of reals), the map, the metric, a seeded sampler
//! and an optional Lipschitz constant for the map. Shift-type systems store a
//! truncated word of `L` letters; after `j` applications of the shift the word
//! has `L - j` letters left, and the `horizon` records how far orbits may be
//! followed before the truncation runs out.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed in the triangle inequality for floating point metrics.
pub const TRIANGLE_TOL: f64 = 1e-12;

/// Relative slack for sampled Lipschitz checks.
pub const LIP_REL_TOL: f64 = 1e-9;

/// A point of a computable system: a finite code of real coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    code: Vec<f64>,
}

impl Point {
    pub fn new(code: Vec<f64>) -> Self {
        Point { code }
    }

    /// Point of a finite system, identified by its index.
    pub fn index(i: usize) -> Self {
        Point {
            code: vec![i as f64],
        }
    }

    pub fn code(&self) -> &[f64] {
        &self.code
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    /// Index of a finite-system point.
    pub fn as_index(&self) -> usize {
        self.code[0] as usize
    }

    /// Encodes a pair of points as `[len(a), a.., b..]`.
    pub fn pair(a: &Point, b: &Point) -> Point {
        let mut code = Vec::with_capacity(1 + a.len() + b.len());
        code.push(a.len() as f64);
        code.extend_from_slice(&a.code);
        code.extend_from_slice(&b.code);
        Point { code }
    }

    /// Inverse of [`Point::pair`].
    pub fn split(&self) -> (Point, Point) {
        let la = self.code[0] as usize;
        (
            Point::new(self.code[1..1 + la].to_vec()),
            Point::new(self.code[1 + la..].to_vec()),
        )
    }

    fn split_slices(&self) -> (&[f64], &[f64]) {
        let la = self.code[0] as usize;
        (&self.code[1..1 + la], &self.code[1 + la..])
    }
}

/// A compact dynamical system `(X, T, d)` presented computationally.
pub trait System: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim_hint(&self) -> usize;

    /// One application of the map. Fails once a truncated code runs out.
    fn apply(&self, x: &Point) -> Result<Point>;

    fn dist(&self, x: &Point, y: &Point) -> f64;

    /// Deterministic sample of `count` points (finite systems return all points).
    fn sample(&self, count: usize, seed: u64) -> Vec<Point>;

    /// Every point of the (truncated) space, if there are at most `limit`.
    fn enumerate(&self, limit: usize) -> Option<Vec<Point>>;

    fn lip_t(&self) -> Option<f64>;

    /// Number of orbit points `x, Tx, .., T^(H-1)x` that stay valid.
    fn horizon(&self) -> usize;

    fn trunc_tol(&self) -> f64;
}

pub type SystemRef = Arc<dyn System>;

type EvalFn = dyn Fn(&Point) -> Result<f64> + Send + Sync;

/// A continuous potential `f` with an explicit Lipschitz constant and sup-norm bound.
#[derive(Clone)]
pub struct Potential {
    name: String,
    eval: Arc<EvalFn>,
    lip_f: f64,
    sup_norm: f64,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("lip_f", &self.lip_f)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

impl Potential {
    pub fn new<F>(name: impl Into<String>, lip_f: f64, sup_norm: f64, eval: F) -> Self
    where
        F: Fn(&Point) -> Result<f64> + Send + Sync + 'static,
    {
        Potential {
            name: name.into(),
            eval: Arc::new(eval),
            lip_f,
            sup_norm,
        }
    }

    pub fn constant(c: f64) -> Self {
        Potential::new(format!("const({c})"), 0.0, c.abs(), move |_| Ok(c))
    }

    pub fn zero() -> Self {
        Potential::constant(0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lip_f(&self) -> f64 {
        self.lip_f
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        (self.eval)(x)
    }

    /// Modulus of continuity bound `gamma(eps) = lip_f * eps`.
    pub fn gamma(&self, eps: f64) -> f64 {
        self.lip_f * eps
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn add(&self, other: &Potential) -> Potential {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        Potential {
            name: format!("({}+{})", self.name, other.name),
            eval: Arc::new(move |x| Ok(a(x)? + b(x)?)),
            lip_f: self.lip_f + other.lip_f,
            sup_norm: self.sup_norm + other.sup_norm,
        }
    }

    pub fn sub(&self, other: &Potential) -> Potential {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        Potential {
            name: format!("({}-{})", self.name, other.name),
            eval: Arc::new(move |x| Ok(a(x)? - b(x)?)),
            lip_f: self.lip_f + other.lip_f,
            sup_norm: self.sup_norm + other.sup_norm,
        }
    }

    pub fn add_const(&self, c: f64) -> Potential {
        let a = self.eval.clone();
        Potential {
            name: format!("({}+{c})", self.name),
            eval: Arc::new(move |x| Ok(a(x)? + c)),
            lip_f: self.lip_f,
            sup_norm: self.sup_norm + c.abs(),
        }
    }

    pub fn scale(&self, c: f64) -> Potential {
        let a = self.eval.clone();
        Potential {
            name: format!("({c}*{})", self.name),
            eval: Arc::new(move |x| Ok(c * a(x)?)),
            lip_f: c.abs() * self.lip_f,
            sup_norm: c.abs() * self.sup_norm,
        }
    }

    pub fn neg(&self) -> Potential {
        self.scale(-1.0)
    }

    /// Convex combination `p*self + (1-p)*other`.
    pub fn mix(&self, other: &Potential, p: f64) -> Potential {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        Potential {
            name: format!("({p}*{}+{}*{})", self.name, 1.0 - p, other.name),
            eval: Arc::new(move |x| Ok(p * a(x)? + (1.0 - p) * b(x)?)),
            lip_f: p.abs() * self.lip_f + (1.0 - p).abs() * other.lip_f,
            sup_norm: p.abs() * self.sup_norm + (1.0 - p).abs() * other.sup_norm,
        }
    }

    pub fn abs(&self) -> Potential {
        let a = self.eval.clone();
        Potential {
            name: format!("|{}|", self.name),
            eval: Arc::new(move |x| Ok(a(x)?.abs())),
            lip_f: self.lip_f,
            sup_norm: self.sup_norm,
        }
    }

    /// Pointwise maximum.
    pub fn max(&self, other: &Potential) -> Potential {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        Potential {
            name: format!("max({},{})", self.name, other.name),
            eval: Arc::new(move |x| Ok(a(x)?.max(b(x)?))),
            lip_f: self.lip_f.max(other.lip_f),
            sup_norm: self.sup_norm.max(other.sup_norm),
        }
    }
}

// ---------------------------------------------------------------------------
// Finite systems
// ---------------------------------------------------------------------------

/// A finite metric space with a self-map given by a table.
#[derive(Clone, Debug)]
pub struct FiniteSystem {
    name: String,
    dist: Vec<Vec<f64>>,
    map: Vec<usize>,
    lip: f64,
}

/// Builds a finite system, rejecting matrices that are not metrics.
pub fn make_finite_system(dist_matrix: Vec<Vec<f64>>, map_table: Vec<usize>) -> Result<FiniteSystem> {
    let n = dist_matrix.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    validate_metric(&dist_matrix)?;
    if map_table.len() != n {
        return Err(Error::InvalidInput(format!(
            "map table has {} entries for {n} points",
            map_table.len()
        )));
    }
    if let Some((i, &t)) = map_table.iter().enumerate().find(|(_, &t)| t >= n) {
        return Err(Error::InvalidInput(format!("map table sends {i} to {t}, outside 0..{n}")));
    }
    let mut lip: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let ratio = dist_matrix[map_table[i]][map_table[j]] / dist_matrix[i][j];
            lip = lip.max(ratio);
        }
    }
    Ok(FiniteSystem {
        name: format!("finite{n}"),
        dist: dist_matrix,
        map: map_table,
        lip,
    })
}

fn validate_metric(d: &[Vec<f64>]) -> Result<()> {
    let n = d.len();
    for (i, row) in d.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidInput(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
    }
    for i in 0..n {
        if d[i][i] != 0.0 {
            return Err(Error::NotMetric {
                i,
                j: i,
                k: i,
                reason: "nonzero diagonal".into(),
            });
        }
        for j in 0..n {
            let v = d[i][j];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NotMetric {
                    i,
                    j,
                    k: j,
                    reason: format!("entry {v} is not a finite nonnegative real"),
                });
            }
            if i != j && v == 0.0 {
                return Err(Error::NotMetric {
                    i,
                    j,
                    k: j,
                    reason: "distinct points at distance zero".into(),
                });
            }
            if d[j][i] != v {
                return Err(Error::NotMetric {
                    i,
                    j,
                    k: j,
                    reason: "asymmetric".into(),
                });
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if d[i][k] > d[i][j] + d[j][k] + TRIANGLE_TOL {
                    return Err(Error::NotMetric {
                        i,
                        j,
                        k,
                        reason: format!(
                            "triangle inequality d(i,k)={} > d(i,j)+d(j,k)={}",
                            d[i][k],
                            d[i][j] + d[j][k]
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Seeded random metric on `points` points: random symmetric weights in
/// `[0.05, 1]` repaired into a metric by shortest-path closure.
pub fn random_metric(points: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = vec![vec![0.0f64; points]; points];
    for i in 0..points {
        for j in (i + 1)..points {
            let w = rng.gen_range(0.05..=1.0);
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    // Floyd-Warshall closure; keeps symmetry since updates are mirrored.
    for k in 0..points {
        for i in 0..points {
            for j in 0..points {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    for i in 0..points {
        for j in (i + 1)..points {
            let v = d[i][j].min(d[j][i]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

impl FiniteSystem {
    /// Random metric plus a random self-map, both from `seed`.
    pub fn random(points: usize, seed: u64) -> Result<FiniteSystem> {
        let d = random_metric(points, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let map = (0..points).map(|_| rng.gen_range(0..points)).collect();
        let mut s = make_finite_system(d, map)?;
        s.name = format!("random{points}/seed{seed}");
        Ok(s)
    }

    pub fn one_point() -> FiniteSystem {
        let mut s = make_finite_system(vec![vec![0.0]], vec![0]).expect("one-point metric");
        s.name = "one_point".into();
        s
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn map_table(&self) -> &[usize] {
        &self.map
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(Point::index).collect()
    }

    /// Potential given by its values on the points; the Lipschitz constant is exact.
    pub fn potential(&self, values: Vec<f64>, name: impl Into<String>) -> Result<Potential> {
        let n = self.len();
        if values.len() != n {
            return Err(Error::InvalidInput(format!(
                "potential has {} values for {n} points",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("potential values must be finite".into()));
        }
        let mut lip: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                lip = lip.max((values[i] - values[j]).abs() / self.dist[i][j]);
            }
        }
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let vals = Arc::new(values);
        Ok(Potential::new(name, lip, sup, move |x| {
            let i = x.as_index();
            vals.get(i)
                .copied()
                .ok_or(Error::IndexOutOfRange { index: i, len: vals.len() })
        }))
    }

    /// Seeded potential with values uniform in `[-scale, scale]`.
    pub fn random_potential(&self, seed: u64, scale: f64) -> Result<Potential> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..self.len())
            .map(|_| if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 })
            .collect();
        self.potential(values, format!("random(seed{seed},scale{scale})"))
    }
}

impl System for FiniteSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim_hint(&self) -> usize {
        0
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        let i = x.as_index();
        let t = self
            .map
            .get(i)
            .ok_or(Error::IndexOutOfRange { index: i, len: self.map.len() })?;
        Ok(Point::index(*t))
    }

    fn dist(&self, x: &Point, y: &Point) -> f64 {
        self.dist[x.as_index()][y.as_index()]
    }

    fn sample(&self, _count: usize, _seed: u64) -> Vec<Point> {
        self.points()
    }

    fn enumerate(&self, limit: usize) -> Option<Vec<Point>> {
        (self.len() <= limit).then(|| self.points())
    }

    fn lip_t(&self) -> Option<f64> {
        Some(self.lip)
    }

    fn horizon(&self) -> usize {
        usize::MAX
    }

    fn trunc_tol(&self) -> f64 {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Shifts
// ---------------------------------------------------------------------------

/// Full shift on `m` symbols, truncated to words of length `L`.
///
/// `d(x, y) = 2^(-k)` where `k` is the first index of disagreement.
#[derive(Clone, Debug)]
pub struct FullShift {
    name: String,
    m: usize,
    len: usize,
}

pub fn make_full_shift(m: usize, len: usize) -> Result<FullShift> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("alphabet size m = {m} must be at least 2")));
    }
    if len < 2 {
        return Err(Error::InvalidInput(format!("horizon L = {len} must be at least 2")));
    }
    Ok(FullShift {
        name: format!("full_shift(m={m},L={len})"),
        m,
        len,
    })
}

impl FullShift {
    pub fn alphabet(&self) -> usize {
        self.m
    }

    pub fn word_len(&self) -> usize {
        self.len
    }

    /// Potential depending only on letter 0: `f(x) = values[x_0]`.
    pub fn letter_potential(&self, values: Vec<f64>) -> Result<Potential> {
        if values.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "letter potential needs {} values, got {}",
                self.m,
                values.len()
            )));
        }
        let lip = values
            .iter()
            .flat_map(|a| values.iter().map(move |b| (a - b).abs()))
            .fold(0.0, f64::max);
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let name = format!("letter{values:?}");
        let vals = Arc::new(values);
        Ok(Potential::new(name, lip, sup, move |x| {
            let a = *x.code().first().ok_or(Error::EmptySample)? as usize;
            vals.get(a)
                .copied()
                .ok_or(Error::IndexOutOfRange { index: a, len: vals.len() })
        }))
    }

    /// `f(x) = x_0`, the symbol of the first letter.
    pub fn coord0(&self) -> Potential {
        self.letter_potential((0..self.m).map(|a| a as f64).collect())
            .expect("alphabet-sized table")
            .with_name("x0")
    }
}

fn first_disagreement(a: &[f64], b: &[f64]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y)
}

impl System for FullShift {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim_hint(&self) -> usize {
        0
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        if x.len() <= 1 {
            return Err(Error::HorizonExceeded {
                requested: self.len,
                horizon: self.len,
            });
        }
        Ok(Point::new(x.code()[1..].to_vec()))
    }

    fn dist(&self, x: &Point, y: &Point) -> f64 {
        match first_disagreement(x.code(), y.code()) {
            Some(k) => 0.5f64.powi(k as i32),
            None => 0.0,
        }
    }

    fn sample(&self, count: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| Point::new((0..self.len).map(|_| rng.gen_range(0..self.m) as f64).collect()))
            .collect()
    }

    fn enumerate(&self, limit: usize) -> Option<Vec<Point>> {
        let total = checked_pow(self.m, self.len)?;
        (total <= limit).then(|| {
            (0..total)
                .map(|w| Point::new(digits(w, self.m, self.len).into_iter().map(|a| a as f64).collect()))
                .collect()
        })
    }

    fn lip_t(&self) -> Option<f64> {
        Some(2.0)
    }

    fn horizon(&self) -> usize {
        self.len
    }

    fn trunc_tol(&self) -> f64 {
        0.5f64.powi(self.len as i32)
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Base-`m` digits of `w`, most significant first, padded to `len`.
fn digits(mut w: usize, m: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = w % m;
        w /= m;
    }
    out
}

/// Shift over the uniform grid `{0, 1/(m-1), .., 1}^D`, truncated to `L` letters.
///
/// `d(x, y) = max_k 2^(-k) * |x_k - y_k|_inf`.
#[derive(Clone, Debug)]
pub struct GridShift {
    name: String,
    dim: usize,
    m: usize,
    len: usize,
}

pub fn make_grid_shift(dim: usize, m: usize, len: usize) -> Result<GridShift> {
    if dim < 1 {
        return Err(Error::InvalidInput("grid dimension D must be at least 1".into()));
    }
    if m < 2 {
        return Err(Error::InvalidInput(format!("grid points per axis m = {m} must be at least 2")));
    }
    if len < 2 {
        return Err(Error::InvalidInput(format!("horizon L = {len} must be at least 2")));
    }
    Ok(GridShift {
        name: format!("grid_shift(D={dim},m={m},L={len})"),
        dim,
        m,
        len,
    })
}

impl GridShift {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn per_axis(&self) -> usize {
        self.m
    }

    pub fn word_len(&self) -> usize {
        self.len
    }

    pub fn grid_value(&self, i: usize) -> f64 {
        i as f64 / (self.m - 1) as f64
    }

    /// The alphabet: all grid letters in lexicographic order.
    pub fn alphabet(&self) -> Vec<Vec<f64>> {
        let total = checked_pow(self.m, self.dim).expect("alphabet size overflow");
        (0..total)
            .map(|a| digits(a, self.m, self.dim).into_iter().map(|i| self.grid_value(i)).collect())
            .collect()
    }

    /// `f(x) = ` first coordinate of letter 0. Lipschitz constant 1.
    pub fn coord0(&self) -> Potential {
        Potential::new("x0", 1.0, 1.0, |x: &Point| {
            x.code().first().copied().ok_or(Error::EmptySample)
        })
    }
}

impl System for GridShift {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim_hint(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        if x.len() <= self.dim {
            return Err(Error::HorizonExceeded {
                requested: self.len,
                horizon: self.len,
            });
        }
        Ok(Point::new(x.code()[self.dim..].to_vec()))
    }

    fn dist(&self, x: &Point, y: &Point) -> f64 {
        let (a, b) = (x.code(), y.code());
        let letters = a.len().min(b.len()) / self.dim;
        let mut best: f64 = 0.0;
        let mut weight = 1.0;
        for k in 0..letters {
            if weight <= best {
                break;
            }
            let off = k * self.dim;
            let mut linf: f64 = 0.0;
            for c in 0..self.dim {
                linf = linf.max((a[off + c] - b[off + c]).abs());
            }
            best = best.max(weight * linf);
            weight *= 0.5;
        }
        best
    }

    fn sample(&self, count: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                Point::new(
                    (0..self.len * self.dim)
                        .map(|_| self.grid_value(rng.gen_range(0..self.m)))
                        .collect(),
                )
            })
            .collect()
    }

    fn enumerate(&self, limit: usize) -> Option<Vec<Point>> {
        let total = checked_pow(self.m, self.len * self.dim)?;
        (total <= limit).then(|| {
            (0..total)
                .map(|w| {
                    Point::new(
                        digits(w, self.m, self.len * self.dim)
                            .into_iter()
                            .map(|i| self.grid_value(i))
                            .collect(),
                    )
                })
                .collect()
        })
    }

    fn lip_t(&self) -> Option<f64> {
        Some(2.0)
    }

    fn horizon(&self) -> usize {
        self.len
    }

    fn trunc_tol(&self) -> f64 {
        0.5f64.powi(self.len as i32)
    }
}

// ---------------------------------------------------------------------------
// Products and iterates
// ---------------------------------------------------------------------------

/// `(X1 x X2, T1 x T2)` with the max metric.
#[derive(Debug)]
pub struct ProductSystem {
    name: String,
    first: SystemRef,
    second: SystemRef,
}

impl ProductSystem {
    pub fn factors(&self) -> (&SystemRef, &SystemRef) {
        (&self.first, &self.second)
    }
}

/// Product system and the potential `f(x1, x2) = f1(x1) + f2(x2)`.
pub fn make_product(
    s1: SystemRef,
    s2: SystemRef,
    f1: &Potential,
    f2: &Potential,
) -> (SystemRef, Potential) {
    let name = format!("{}x{}", s1.name(), s2.name());
    let (e1, e2) = (f1.eval.clone(), f2.eval.clone());
    let f = Potential {
        name: format!("{}(+){}", f1.name, f2.name),
        eval: Arc::new(move |x: &Point| {
            let (a, b) = x.split();
            Ok(e1(&a)? + e2(&b)?)
        }),
        lip_f: f1.lip_f + f2.lip_f,
        sup_norm: f1.sup_norm + f2.sup_norm,
    };
    let sys = ProductSystem {
        name,
        first: s1,
        second: s2,
    };
    (Arc::new(sys), f)
}

/// Cartesian product of two point lists, first factor major.
pub fn product_points(a: &[Point], b: &[Point]) -> Vec<Point> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| Point::pair(x, y)))
        .collect()
}

impl System for ProductSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim_hint(&self) -> usize {
        self.first.dim_hint() + self.second.dim_hint()
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        let (a, b) = x.split();
        Ok(Point::pair(&self.first.apply(&a)?, &self.second.apply(&b)?))
    }

    fn dist(&self, x: &Point, y: &Point) -> f64 {
        let (xa, xb) = x.split_slices();
        let (ya, yb) = y.split_slices();
        let d1 = self
            .first
            .dist(&Point::new(xa.to_vec()), &Point::new(ya.to_vec()));
        let d2 = self
            .second
            .dist(&Point::new(xb.to_vec()), &Point::new(yb.to_vec()));
        d1.max(d2)
    }

    fn sample(&self, count: usize, seed: u64) -> Vec<Point> {
        let side = (count as f64).sqrt().ceil() as usize;
        let a = self.first.sample(side, seed);
        let b = self.second.sample(side, seed.wrapping_add(0x5851_f42d_4c95_7f2d));
        product_points(&a, &b)
    }

    fn enumerate(&self, limit: usize) -> Option<Vec<Point>> {
        let a = self.first.enumerate(limit)?;
        let b = self.second.enumerate(limit)?;
        (a.len().checked_mul(b.len())? <= limit).then(|| product_points(&a, &b))
    }

    fn lip_t(&self) -> Option<f64> {
        Some(self.first.lip_t()?.max(self.second.lip_t()?))
    }

    fn horizon(&self) -> usize {
        self.first.horizon().min(self.second.horizon())
    }

    fn trunc_tol(&self) -> f64 {
        self.first.trunc_tol().max(self.second.trunc_tol())
    }
}

/// `(X, T^k)` with the same metric.
#[derive(Debug)]
pub struct IterateSystem {
    name: String,
    inner: SystemRef,
    k: usize,
}

impl IterateSystem {
    pub fn power(&self) -> usize {
        self.k
    }

    pub fn inner(&self) -> &SystemRef {
        &self.inner
    }
}

/// The iterate `T^k` together with the Birkhoff potential `S_k f`.
pub fn make_iterate(s: SystemRef, f: &Potential, k: usize) -> Result<(SystemRef, Potential)> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("iterate power k = {k} must be at least 2")));
    }
    let lip = match s.lip_t() {
        Some(c) => f.lip_f * (0..k).map(|j| c.powi(j as i32)).sum::<f64>(),
        None => f64::INFINITY,
    };
    let inner = s.clone();
    let ef = f.eval.clone();
    let pot = Potential {
        name: format!("S{k}[{}]", f.name),
        eval: Arc::new(move |x: &Point| {
            let mut acc = ef(x)?;
            let mut y = x.clone();
            for _ in 1..k {
                y = inner.apply(&y)?;
                acc += ef(&y)?;
            }
            Ok(acc)
        }),
        lip_f: lip,
        sup_norm: k as f64 * f.sup_norm,
    };
    let sys = IterateSystem {
        name: format!("{}^{k}", s.name()),
        inner: s,
        k,
    };
    Ok((Arc::new(sys), pot))
}

impl System for IterateSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim_hint(&self) -> usize {
        self.inner.dim_hint()
    }

    fn apply(&self, x: &Point) -> Result<Point> {
        let mut y = self.inner.apply(x)?;
        for _ in 1..self.k {
            y = self.inner.apply(&y)?;
        }
        Ok(y)
    }

    fn dist(&self, x: &Point, y: &Point) -> f64 {
        self.inner.dist(x, y)
    }

    fn sample(&self, count: usize, seed: u64) -> Vec<Point> {
        self.inner.sample(count, seed)
    }

    fn enumerate(&self, limit: usize) -> Option<Vec<Point>> {
        self.inner.enumerate(limit)
    }

    fn lip_t(&self) -> Option<f64> {
        self.inner.lip_t().map(|c| c.powi(self.k as i32))
    }

    fn horizon(&self) -> usize {
        let h = self.inner.horizon();
        if h == usize::MAX {
            usize::MAX
        } else {
            // T^(kj) and the k-1 inner steps of S_k f must stay inside the inner horizon.
            (h - 1) / self.k + 1
        }
    }

    fn trunc_tol(&self) -> f64 {
        self.inner.trunc_tol()
    }
}

// ---------------------------------------------------------------------------
// Sampled checks
// ---------------------------------------------------------------------------

/// Exhaustive metric-axiom scan over `pts`: exact symmetry, zero self-distance,
/// triangle inequality within [`TRIANGLE_TOL`].
pub fn check_metric(s: &dyn System, pts: &[Point]) -> Result<()> {
    let n = pts.len();
    let d: Vec<Vec<f64>> = pts
        .iter()
        .map(|x| pts.iter().map(|y| s.dist(x, y)).collect())
        .collect();
    for i in 0..n {
        if d[i][i] != 0.0 {
            return Err(Error::NotMetric {
                i,
                j: i,
                k: i,
                reason: "nonzero self-distance".into(),
            });
        }
        for j in 0..n {
            if d[i][j] != d[j][i] {
                return Err(Error::NotMetric {
                    i,
                    j,
                    k: j,
                    reason: "asymmetric".into(),
                });
            }
            for k in 0..n {
                if d[i][k] > d[i][j] + d[j][k] + TRIANGLE_TOL {
                    return Err(Error::NotMetric {
                        i,
                        j,
                        k,
                        reason: "triangle inequality".into(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Checks `d(Tx, Ty) <= lip_T d(x, y) (1 + 1e-9)` on all sampled pairs.
/// Pairs whose images leave the horizon are skipped.
pub fn check_lip_t(s: &dyn System, pts: &[Point]) -> Result<()> {
    let Some(c) = s.lip_t() else {
        return Ok(());
    };
    let images: Vec<Option<Point>> = pts.iter().map(|x| s.apply(x).ok()).collect();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            if let (Some(a), Some(b)) = (&images[i], &images[j]) {
                let lhs = s.dist(a, b);
                let rhs = c * s.dist(&pts[i], &pts[j]) * (1.0 + LIP_REL_TOL);
                if lhs > rhs {
                    return Err(Error::InvalidInput(format!(
                        "map Lipschitz bound {c} violated at pair ({i}, {j}): {lhs} > {rhs}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Checks the potential's declared Lipschitz constant and sup-norm on `pts`.
pub fn check_potential(s: &dyn System, f: &Potential, pts: &[Point]) -> Result<()> {
    let vals = pts.iter().map(|x| f.eval(x)).collect::<Result<Vec<_>>>()?;
    for (i, v) in vals.iter().enumerate() {
        if v.abs() > f.sup_norm * (1.0 + LIP_REL_TOL) {
            return Err(Error::InvalidInput(format!(
                "|f| = {} exceeds sup-norm {} at point {i}",
                v.abs(),
                f.sup_norm
            )));
        }
    }
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let lhs = (vals[i] - vals[j]).abs();
            let rhs = f.lip_f * s.dist(&pts[i], &pts[j]) * (1.0 + LIP_REL_TOL);
            if lhs > rhs {
                return Err(Error::InvalidInput(format!(
                    "potential Lipschitz bound {} violated at pair ({i}, {j}): {lhs} > {rhs}",
                    f.lip_f
                )));
            }
        }
    }
    Ok(())
}
