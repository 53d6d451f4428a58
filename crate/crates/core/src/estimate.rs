//! Growth rates in `n`, ratios against `ln(1/eps)` and the finite-level
//! property, product and power experiments.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logspace::log_inv;
use crate::orbit::{build_table, Birkhoff, BowenIndex, OrbitTable};
use crate::pressure::{
    check_eps, greedy_order, greedy_witness, greedy_witness_ordered, log_weighted_sum, ROUNDING_TOL,
};
use crate::system::{make_iterate, make_product, product_points, Potential};

/// Ordinary least-squares line through `(x, y)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub rms: f64,
    pub max_abs_residual: f64,
    /// Standard error of the slope; zero with only two points.
    pub slope_stderr: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least two points, got {}", xs.len())));
    }
    let k = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    let slope_stderr = if xs.len() > 2 {
        (ss / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        rms: (ss / k).sqrt(),
        max_abs_residual: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        residuals,
        slope_stderr,
    })
}

/// One `(n, eps)` cell of an estimate.
#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub n: usize,
    pub eps: f64,
    pub log_p_lower: f64,
    pub log_q_upper: f64,
    pub witness: Vec<usize>,
    /// Size of the greedy net at `eps / 2`; `None` when the sample is exhaustive.
    pub half_net_size: Option<usize>,
    pub under_resolved: bool,
}

/// Growth rates and ratios at one scale.
#[derive(Clone, Debug, Serialize)]
pub struct ScaleRow {
    pub eps: f64,
    pub log_inv_eps: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    pub ratio_lower: f64,
    pub ratio_upper: f64,
    pub fit_lower: LinearFit,
    pub fit_upper: LinearFit,
    pub resolved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MmdimEstimate {
    pub system: String,
    pub potential: String,
    pub sample_size: usize,
    pub exhaustive: bool,
    pub eps_list: Vec<f64>,
    pub n_range: Vec<usize>,
    /// Ordered by `n`, then by position in `eps_list`.
    pub cells: Vec<Cell>,
    pub rows: Vec<ScaleRow>,
    /// Slope of `v_upper` against `ln(1/eps)` over resolved scales.
    pub slope: Option<f64>,
    pub slope_fit: Option<LinearFit>,
    pub upper_proxy: f64,
    pub lower_proxy: f64,
    /// Largest slope standard error over the scales used, in ratio units.
    pub budget: f64,
    pub warnings: Vec<String>,
}

impl MmdimEstimate {
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ratio_upper).collect()
    }

    pub fn cell(&self, n: usize, eps: f64) -> Option<&Cell> {
        self.cells.iter().find(|c| c.n == n && c.eps == eps)
    }
}

/// Log-pressure against `n` at a single scale.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthFit {
    pub eps: f64,
    pub n_values: Vec<usize>,
    pub log_values: Vec<f64>,
    pub fit: LinearFit,
}

impl GrowthFit {
    pub fn rate(&self) -> f64 {
        self.fit.slope
    }
}

fn validate_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::InvalidInput("eps list is empty".into()));
    }
    for &e in eps_list {
        check_eps(e)?;
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("eps list must be strictly decreasing".into()));
    }
    Ok(())
}

fn validate_n_range(t: &OrbitTable, n_range: &[usize]) -> Result<()> {
    for &n in n_range {
        t.check_order(n)?;
    }
    if n_range.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("n range must be strictly increasing".into()));
    }
    if n_range.len() < 2 {
        return Err(Error::DegenerateFit("n range needs at least two distinct values".into()));
    }
    Ok(())
}

fn potential_table(t: &OrbitTable, f: &Potential) -> Result<Birkhoff> {
    match t.registered(f.name()) {
        Some(b) => Ok(b.clone()),
        None => t.birkhoff(f),
    }
}

fn pressure_cells(t: &OrbitTable, b: &Birkhoff, eps_list: &[f64], n_range: &[usize]) -> Result<Vec<Cell>> {
    let per_n = n_range
        .par_iter()
        .map(|&n| {
            let idx = t.index(n)?;
            let order = greedy_order(b, n);
            let cells = eps_list
                .iter()
                .map(|&eps| {
                    let witness = greedy_witness_ordered(&idx, &order, eps);
                    let log_p = log_weighted_sum(b, &witness, n, eps);
                    let half_net_size = if t.is_exhaustive() {
                        None
                    } else {
                        Some(greedy_witness_ordered(&idx, &order, eps / 2.0).len())
                    };
                    Cell {
                        n,
                        eps,
                        log_p_lower: log_p,
                        log_q_upper: log_p,
                        witness,
                        half_net_size,
                        under_resolved: half_net_size == Some(t.len()),
                    }
                })
                .collect::<Vec<_>>();
            Ok(cells)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_n.into_iter().flatten().collect())
}

/// Least-squares slope of the separated-side log pressure against `n`.
pub fn growth_rate(t: &OrbitTable, f: &Potential, eps: f64, n_range: &[usize]) -> Result<GrowthFit> {
    check_eps(eps)?;
    validate_n_range(t, n_range)?;
    let b = potential_table(t, f)?;
    let cells = pressure_cells(t, &b, &[eps], n_range)?;
    let xs: Vec<f64> = n_range.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.log_p_lower).collect();
    Ok(GrowthFit {
        eps,
        n_values: n_range.to_vec(),
        fit: least_squares(&xs, &ys)?,
        log_values: ys,
    })
}

/// Per-scale growth rates, ratios, slope and max/min ratio proxies.
pub fn estimate_mmdim(t: &OrbitTable, f: &Potential, eps_list: &[f64], n_range: &[usize]) -> Result<MmdimEstimate> {
    validate_eps_list(eps_list)?;
    validate_n_range(t, n_range)?;
    let b = potential_table(t, f)?;
    let cells = pressure_cells(t, &b, eps_list, n_range)?;
    let mut warnings = Vec::new();
    if n_range.len() < 3 {
        warnings.push(format!("only {} orders in the n range", n_range.len()));
    }
    if eps_list.len() < 3 {
        warnings.push(format!("only {} scales in the eps list", eps_list.len()));
    }
    let xs: Vec<f64> = n_range.iter().map(|&n| n as f64).collect();
    let mut rows = Vec::with_capacity(eps_list.len());
    for (e, &eps) in eps_list.iter().enumerate() {
        let column: Vec<&Cell> = (0..n_range.len()).map(|k| &cells[k * eps_list.len() + e]).collect();
        let lower: Vec<f64> = column.iter().map(|c| c.log_p_lower).collect();
        let upper: Vec<f64> = column.iter().map(|c| c.log_q_upper).collect();
        let fit_lower = least_squares(&xs, &lower)?;
        let fit_upper = least_squares(&xs, &upper)?;
        let l = log_inv(eps);
        let resolved = column.iter().all(|c| !c.under_resolved);
        if !resolved {
            warnings.push(format!("eps = {eps} is under-resolved by the sample and is excluded"));
        }
        rows.push(ScaleRow {
            eps,
            log_inv_eps: l,
            v_lower: fit_lower.slope,
            v_upper: fit_upper.slope,
            ratio_lower: fit_lower.slope / l,
            ratio_upper: fit_upper.slope / l,
            fit_lower,
            fit_upper,
            resolved,
        });
    }
    let mut used: Vec<&ScaleRow> = rows.iter().filter(|r| r.resolved).collect();
    if used.is_empty() {
        warnings.push("every scale is under-resolved; proxies use all scales".into());
        used = rows.iter().collect();
    }
    let upper_proxy = used.iter().map(|r| r.ratio_upper).fold(f64::NEG_INFINITY, f64::max);
    let lower_proxy = used.iter().map(|r| r.ratio_upper).fold(f64::INFINITY, f64::min);
    let budget = used
        .iter()
        .map(|r| r.fit_upper.slope_stderr / r.log_inv_eps)
        .fold(0.0, f64::max);
    let resolved: Vec<&ScaleRow> = rows.iter().filter(|r| r.resolved).collect();
    let slope_fit = if resolved.len() >= 2 {
        let lx: Vec<f64> = resolved.iter().map(|r| r.log_inv_eps).collect();
        let vy: Vec<f64> = resolved.iter().map(|r| r.v_upper).collect();
        Some(least_squares(&lx, &vy)?)
    } else {
        warnings.push("fewer than two resolved scales; no slope".into());
        None
    };
    Ok(MmdimEstimate {
        system: t.system().name().to_string(),
        potential: f.name().to_string(),
        sample_size: t.len(),
        exhaustive: t.is_exhaustive(),
        eps_list: eps_list.to_vec(),
        n_range: n_range.to_vec(),
        cells,
        slope: slope_fit.as_ref().map(|s| s.slope),
        slope_fit,
        rows,
        upper_proxy,
        lower_proxy,
        budget,
        warnings,
    })
}

/// A scalar stand-in for the upper metric mean dimension with potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProxyValue {
    pub value: f64,
    /// Declared error budget of `value`.
    pub budget: f64,
}

pub trait MdimProxy: Sync {
    fn proxy(&self, f: &Potential) -> Result<ProxyValue>;
}

/// Proxy given by the max-ratio of [`estimate_mmdim`].
pub struct EstimatorProxy<'a> {
    pub table: &'a OrbitTable,
    pub eps_list: Vec<f64>,
    pub n_range: Vec<usize>,
}

impl<'a> EstimatorProxy<'a> {
    pub fn new(table: &'a OrbitTable, eps_list: Vec<f64>, n_range: Vec<usize>) -> Self {
        EstimatorProxy {
            table,
            eps_list,
            n_range,
        }
    }

    pub fn estimate(&self, f: &Potential) -> Result<MmdimEstimate> {
        estimate_mmdim(self.table, f, &self.eps_list, &self.n_range)
    }
}

impl MdimProxy for EstimatorProxy<'_> {
    fn proxy(&self, f: &Potential) -> Result<ProxyValue> {
        let e = self.estimate(f)?;
        Ok(ProxyValue {
            value: e.upper_proxy,
            budget: e.budget,
        })
    }
}

// ---------------------------------------------------------------------------
// Finite-level properties on a common witness
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PropertyItem {
    pub item: String,
    pub lhs: f64,
    pub rhs: f64,
    pub asserted: bool,
    pub passed: bool,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub n: usize,
    pub eps: f64,
    pub c: f64,
    pub p: f64,
    pub witness: Vec<usize>,
    pub items: Vec<PropertyItem>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| !i.asserted || i.passed)
    }

    pub fn failures(&self) -> Vec<&PropertyItem> {
        self.items.iter().filter(|i| i.asserted && !i.passed).collect()
    }

    pub fn item(&self, id: &str) -> Option<&PropertyItem> {
        self.items.iter().find(|i| i.item == id)
    }
}

fn slack(a: f64, b: f64) -> f64 {
    ROUNDING_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Additive-constant identity is checked against this absolute tolerance.
pub const SHIFT_IDENTITY_TOL: f64 = 1e-10;

/// Finite-level counterparts of the basic pressure properties, all evaluated on
/// the greedy `(n, eps)`-separated witness of `f`.
pub fn check_properties(
    t: &OrbitTable,
    f: &Potential,
    g: &Potential,
    c: f64,
    p: f64,
    eps: f64,
    n: usize,
) -> Result<PropertyReport> {
    check_eps(eps)?;
    t.check_order(n)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("mixing weight p = {p} outside [0, 1]")));
    }
    let bf = t.birkhoff(f)?;
    let idx = t.index(n)?;
    let w = greedy_witness(&idx, &bf, eps);
    let ls = |h: &Potential| -> Result<f64> { Ok(log_weighted_sum(&t.birkhoff(h)?, &w, n, eps)) };
    let l = log_inv(eps);
    let nf = n as f64;
    let lf = log_weighted_sum(&bf, &w, n, eps);
    let bg = t.birkhoff(g)?;
    let lg = log_weighted_sum(&bg, &w, n, eps);
    let mut items = Vec::new();

    let dominating = f.max(g);
    let lh = ls(&dominating)?;
    items.push(PropertyItem {
        item: "1".into(),
        lhs: lf,
        rhs: lh,
        asserted: true,
        passed: lf <= lh + slack(lf, lh),
        note: "f <= max(f, g) pointwise".into(),
    });

    let shifted = ls(&f.add_const(c))?;
    let expected = lf + nf * c * l;
    items.push(PropertyItem {
        item: "2".into(),
        lhs: shifted,
        rhs: expected,
        asserted: true,
        passed: (shifted - expected).abs() <= SHIFT_IDENTITY_TOL,
        note: format!("additive constant c = {c}"),
    });

    let diff_sup = t.birkhoff(&f.sub(g))?.observed_sup();
    let bound = nf * diff_sup * l;
    let gap = (lf - lg).abs();
    items.push(PropertyItem {
        item: "5a".into(),
        lhs: gap,
        rhs: bound,
        asserted: true,
        passed: gap <= bound + slack(gap, bound),
        note: format!("sup |f - g| over orbit points = {diff_sup}"),
    });

    let lmix = ls(&f.mix(g, p))?;
    let hold = p * lf + (1.0 - p) * lg;
    items.push(PropertyItem {
        item: "5b".into(),
        lhs: lmix,
        rhs: hold,
        asserted: true,
        passed: lmix <= hold + slack(lmix, hold),
        note: format!("convex weight p = {p}"),
    });

    let lsum = ls(&f.add(g))?;
    let all_ge_one = w.iter().all(|&i| bf.sum(i, n) >= 0.0 && bg.sum(i, n) >= 0.0);
    items.push(PropertyItem {
        item: "6".into(),
        lhs: lsum,
        rhs: lf + lg,
        asserted: true,
        passed: lsum <= lf + lg + slack(lsum, lf + lg),
        note: format!("all terms >= 1: {all_ge_one}"),
    });

    let cm = c.abs();
    let lc = ls(&f.scale(cm))?;
    let rc = cm * lf;
    let (passed, note) = if cm >= 1.0 {
        (lc <= rc + slack(lc, rc), format!("multiplier {cm} >= 1"))
    } else {
        (lc + slack(lc, rc) >= rc, format!("multiplier {cm} < 1, reversed"))
    };
    items.push(PropertyItem {
        item: "7".into(),
        lhs: lc,
        rhs: rc,
        asserted: true,
        passed,
        note,
    });

    let abs_f = f.abs();
    let babs = t.birkhoff(&abs_f)?;
    let wabs = greedy_witness(&idx, &babs, eps);
    let r_abs = log_weighted_sum(&babs, &wabs, n, eps) / (nf * l);
    let r_f = lf / (nf * l);
    items.push(PropertyItem {
        item: "8".into(),
        lhs: r_abs,
        rhs: r_f.abs(),
        asserted: false,
        passed: r_abs + slack(r_abs, r_f) >= r_f.abs(),
        note: "single-level ratios; limit-level claim, reported only".into(),
    });

    Ok(PropertyReport {
        n,
        eps,
        c,
        p,
        witness: w,
        items,
    })
}

fn covers(idx: &BowenIndex<'_>, len: usize, centers: &[usize], eps: f64) -> bool {
    let mut hit = vec![false; len];
    for &c in centers {
        for j in idx.within(c, eps) {
            hit[j] = true;
        }
    }
    hit.into_iter().all(|h| h)
}

// ---------------------------------------------------------------------------
// Product experiment
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ProductRow {
    pub n: usize,
    pub eps: f64,
    pub log_q_first: f64,
    pub log_q_second: f64,
    /// Log-sum over the Cartesian product of the factor witnesses.
    pub log_q_product_witness: f64,
    /// Greedy spanning value of the product table itself.
    pub log_q_product_greedy: f64,
    pub witness_spans: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProductReport {
    pub rows: Vec<ProductRow>,
    pub upper_proxy_first: f64,
    pub upper_proxy_second: f64,
    pub upper_proxy_product: f64,
    pub product_estimate: MmdimEstimate,
}

impl ProductReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// `Q_n(product) <= Q_n(first) Q_n(second)` via product witnesses, plus the
/// estimate-level comparison of upper proxies.
pub fn product_experiment(
    t1: &OrbitTable,
    f1: &Potential,
    t2: &OrbitTable,
    f2: &Potential,
    eps_list: &[f64],
    n_range: &[usize],
) -> Result<ProductReport> {
    validate_eps_list(eps_list)?;
    validate_n_range(t1, n_range)?;
    validate_n_range(t2, n_range)?;
    let n_max = *n_range.last().expect("validated");
    let (sys, f) = make_product(t1.system().clone(), t2.system().clone(), f1, f2);
    let pts = product_points(t1.points(), t2.points());
    let tp = build_table(sys, pts, n_max, &[])?.with_exhaustive(t1.is_exhaustive() && t2.is_exhaustive());
    let (b1, b2, bp) = (t1.birkhoff(f1)?, t2.birkhoff(f2)?, tp.birkhoff(&f)?);
    let n2 = t2.len();
    let mut rows = Vec::new();
    for &n in n_range {
        let (i1, i2, ip) = (t1.index(n)?, t2.index(n)?, tp.index(n)?);
        for &eps in eps_list {
            let e1 = greedy_witness(&i1, &b1, eps);
            let e2 = greedy_witness(&i2, &b2, eps);
            let prod: Vec<usize> = e1.iter().flat_map(|&a| e2.iter().map(move |&b| a * n2 + b)).collect();
            let q1 = log_weighted_sum(&b1, &e1, n, eps);
            let q2 = log_weighted_sum(&b2, &e2, n, eps);
            let qp = log_weighted_sum(&bp, &prod, n, eps);
            let spans = covers(&ip, tp.len(), &prod, eps);
            let greedy = log_weighted_sum(&bp, &greedy_witness(&ip, &bp, eps), n, eps);
            rows.push(ProductRow {
                n,
                eps,
                log_q_first: q1,
                log_q_second: q2,
                log_q_product_witness: qp,
                log_q_product_greedy: greedy,
                witness_spans: spans,
                passed: spans && qp <= q1 + q2 + slack(qp, q1 + q2),
            });
        }
    }
    let e1 = estimate_mmdim(t1, f1, eps_list, n_range)?;
    let e2 = estimate_mmdim(t2, f2, eps_list, n_range)?;
    let ep = estimate_mmdim(&tp, &f, eps_list, n_range)?;
    Ok(ProductReport {
        rows,
        upper_proxy_first: e1.upper_proxy,
        upper_proxy_second: e2.upper_proxy,
        upper_proxy_product: ep.upper_proxy,
        product_estimate: ep,
    })
}

// ---------------------------------------------------------------------------
// Power experiment
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PowerRow {
    pub n: usize,
    pub eps: f64,
    /// Log-sum of `S_n(S_k f)` over the `(nk, eps)` witness of `T`, read in `T^k`.
    pub log_q_iterate: f64,
    /// Log-sum of `S_nk f` over the same witness, read in `T`.
    pub log_q_base: f64,
    pub witness_spans_iterate: bool,
    pub forward_passed: bool,
    /// Whether the `(n, eps)` witness of `T^k` spans `T` at order `nk`, radius `C eps`.
    pub reverse_spans: Option<bool>,
    pub reverse_note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerReport {
    pub k: usize,
    pub lip_constant: Option<f64>,
    pub rows: Vec<PowerRow>,
    /// Per scale: `v(T^k)` and `k v(T)`.
    pub rate_pairs: Vec<(f64, f64, f64)>,
    pub iterate_estimate: MmdimEstimate,
    pub base_estimate: MmdimEstimate,
}

impl PowerReport {
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.forward_passed && r.reverse_spans != Some(false))
    }
}

/// `Q_n(T^k, S_k f) <= Q_nk(T, f)` by witness reuse, and the reverse covering
/// with `C = max(lip_T, 1)^k` when `lip_T` is known.
pub fn power_experiment(
    t: &OrbitTable,
    f: &Potential,
    k: usize,
    eps_list: &[f64],
    n_range: &[usize],
) -> Result<PowerReport> {
    validate_eps_list(eps_list)?;
    validate_n_range(t, n_range)?;
    let n_top = *n_range.last().expect("validated");
    if n_top * k > t.n_max() {
        return Err(Error::OrderOutOfRange {
            n: n_top * k,
            n_max: t.n_max(),
        });
    }
    let (sk, skf) = make_iterate(t.system().clone(), f, k)?;
    let tk = build_table(sk, t.points().to_vec(), n_top, &[])?.with_exhaustive(t.is_exhaustive());
    let b = t.birkhoff(f)?;
    let bk = tk.birkhoff(&skf)?;
    let lip = t.system().lip_t();
    let c_const = lip.map(|c| c.max(1.0).powi(k as i32));
    let mut rows = Vec::new();
    for &n in n_range {
        let base_idx = t.index(n * k)?;
        let iter_idx = tk.index(n)?;
        for &eps in eps_list {
            let e = greedy_witness(&base_idx, &b, eps);
            let lq_iter = log_weighted_sum(&bk, &e, n, eps);
            let lq_base = log_weighted_sum(&b, &e, n * k, eps);
            let spans = covers(&iter_idx, tk.len(), &e, eps);
            let (reverse_spans, reverse_note) = match c_const {
                None => (None, "no Lipschitz constant for T; reverse check disabled".to_string()),
                Some(c) if c * eps >= 1.0 => (None, format!("C eps = {} >= 1; skipped", c * eps)),
                Some(c) => {
                    let ek = greedy_witness(&iter_idx, &bk, eps);
                    (
                        Some(covers(&base_idx, t.len(), &ek, c * eps)),
                        format!("C = {c}"),
                    )
                }
            };
            rows.push(PowerRow {
                n,
                eps,
                log_q_iterate: lq_iter,
                log_q_base: lq_base,
                witness_spans_iterate: spans,
                forward_passed: spans && lq_iter <= lq_base + slack(lq_iter, lq_base),
                reverse_spans,
                reverse_note,
            });
        }
    }
    let iterate_estimate = estimate_mmdim(&tk, &skf, eps_list, n_range)?;
    let base_estimate = estimate_mmdim(t, f, eps_list, n_range)?;
    let rate_pairs = iterate_estimate
        .rows
        .iter()
        .zip(&base_estimate.rows)
        .map(|(a, b)| (a.eps, a.v_upper, k as f64 * b.v_upper))
        .collect();
    Ok(PowerReport {
        k,
        lip_constant: c_const,
        rows,
        rate_pairs,
        iterate_estimate,
        base_estimate,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::orbit::{draw_sample, SampleKind};
    use crate::system::{make_finite_system, make_full_shift, FiniteSystem, System, SystemRef};

    fn one_point_table(n_max: usize) -> OrbitTable {
        let s: SystemRef = Arc::new(FiniteSystem::one_point());
        build_table(s.clone(), s.sample(1, 0), n_max, &[]).unwrap().with_exhaustive(true)
    }

    fn shift_table(m: usize, len: usize, n_max: usize) -> (crate::system::FullShift, OrbitTable) {
        let s = make_full_shift(m, len).unwrap();
        let sref: SystemRef = Arc::new(s.clone());
        let (pts, ex) = draw_sample(&sref, SampleKind::Exhaustive { limit: 1 << 16 }).unwrap();
        (s, build_table(sref, pts, n_max, &[]).unwrap().with_exhaustive(ex))
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let fit = least_squares(&[1.0, 2.0, 3.0, 4.0], &[1.5, 3.5, 5.5, 7.5]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept + 0.5).abs() < 1e-14);
        assert!(fit.max_abs_residual < 1e-14);
        assert!(least_squares(&[2.0, 2.0], &[1.0, 3.0]).is_err());
        assert!(least_squares(&[2.0], &[1.0]).is_err());
    }

    #[test]
    fn one_point_estimate_is_the_constant() {
        let t = one_point_table(6);
        for c in [-1.3, 0.0, 0.25, 2.0] {
            let f = Potential::constant(c);
            let g = growth_rate(&t, &f, 0.3, &[2, 3, 4]).unwrap();
            assert!((g.rate() - c * log_inv(0.3)).abs() < 1e-12);
            let e = estimate_mmdim(&t, &f, &[0.4, 0.2, 0.1], &[2, 3, 4, 5]).unwrap();
            for r in e.ratios() {
                assert!((r - c).abs() < 1e-12);
            }
            assert!((e.upper_proxy - c).abs() < 1e-12);
            assert!((e.lower_proxy - c).abs() < 1e-12);
            assert!((e.slope.unwrap() - c).abs() < 1e-12);
        }
    }

    #[test]
    fn full_shift_zero_potential_counts_prefixes() {
        let (_, t) = shift_table(2, 12, 6);
        let f = Potential::zero();
        // eps in (2^-3, 2^-2]: classes are prefixes of length n + 2.
        let g = growth_rate(&t, &f, 0.25, &[1, 2, 3, 4]).unwrap();
        for (n, v) in g.n_values.iter().zip(&g.log_values) {
            assert!((v - ((n + 2) as f64) * 2f64.ln()).abs() < 1e-12);
        }
        assert!((g.rate() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn eps_above_diameter_gives_zero_rate() {
        let fin = make_finite_system(vec![vec![0.0, 0.3], vec![0.3, 0.0]], vec![1, 0]).unwrap();
        let s: SystemRef = Arc::new(fin.clone());
        let t = build_table(s, fin.points(), 4, &[]).unwrap().with_exhaustive(true);
        let g = growth_rate(&t, &Potential::zero(), 0.5, &[1, 2, 3]).unwrap();
        assert_eq!(g.rate(), 0.0);
    }

    #[test]
    fn full_shift_letter_potential_matches_transfer_closed_form() {
        let (s, t) = shift_table(2, 12, 4);
        let f = s.coord0();
        let eps = 2f64.powi(-8);
        let e = estimate_mmdim(&t, &f, &[eps], &[2, 3, 4]).unwrap();
        let expected = 257f64.ln() / (8.0 * 2f64.ln());
        assert!((e.upper_proxy - expected).abs() < 1e-12);
        assert!(e.rows[0].resolved);
    }

    #[test]
    fn input_validation() {
        let t = one_point_table(4);
        let f = Potential::zero();
        assert!(estimate_mmdim(&t, &f, &[0.2, 0.3], &[1, 2]).is_err());
        assert!(estimate_mmdim(&t, &f, &[0.2, 1.0], &[1, 2]).is_err());
        assert!(estimate_mmdim(&t, &f, &[0.2], &[2]).is_err());
        assert!(estimate_mmdim(&t, &f, &[0.2], &[1, 9]).is_err());
    }

    #[test]
    fn ratios_are_base_independent() {
        let (s, t) = shift_table(2, 10, 4);
        let e = estimate_mmdim(&t, &s.coord0(), &[0.3, 0.2, 0.1], &[2, 3, 4]).unwrap();
        for r in &e.rows {
            let ln2 = 2f64.ln();
            let base2 = (r.v_upper / ln2) / (r.log_inv_eps / ln2);
            assert!((base2 - r.ratio_upper).abs() < 1e-12);
            assert!((r.ratio_upper * r.log_inv_eps - r.v_upper).abs() < 1e-12);
        }
        assert!(e.lower_proxy <= e.upper_proxy);
    }

    #[test]
    fn finite_system_zero_potential_ratio_bound() {
        let fin = FiniteSystem::random(7, 3).unwrap();
        let s: SystemRef = Arc::new(fin.clone());
        let t = build_table(s, fin.points(), 8, &[]).unwrap().with_exhaustive(true);
        let e = estimate_mmdim(&t, &Potential::zero(), &[0.3, 0.2, 0.1], &[2, 4, 6, 8]).unwrap();
        for r in &e.rows {
            // 0 <= log P_n <= log 7 bounds the least-squares slope over n = 2, 4, 6, 8 by 4 log 7 / 20.
            assert!(r.v_upper <= 4.0 * 7f64.ln() / 20.0 + 1e-12);
        }
    }

    #[test]
    fn under_resolved_scales_are_flagged() {
        let s = make_full_shift(2, 16).unwrap();
        let sref: SystemRef = Arc::new(s.clone());
        let t = build_table(sref, s.sample(40, 2), 3, &[]).unwrap();
        let e = estimate_mmdim(&t, &Potential::zero(), &[0.5, 0.2, 0.01], &[1, 2, 3]).unwrap();
        assert!(!e.rows[2].resolved);
        assert!(e.warnings.iter().any(|w| w.contains("under-resolved")));
    }

    #[test]
    fn check_properties_trivial_cases() {
        let fin = FiniteSystem::random(6, 1).unwrap();
        let s: SystemRef = Arc::new(fin.clone());
        let t = build_table(s, fin.points(), 3, &[]).unwrap();
        let f = fin.random_potential(2, 1.0).unwrap();
        let r = check_properties(&t, &f, &f, 0.5, 1.0, 0.3, 2).unwrap();
        assert!(r.passed());
        assert!(r.item("5a").unwrap().lhs.abs() < 1e-15);
        let b = r.item("5b").unwrap();
        assert!((b.lhs - b.rhs).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn check_properties_pass_on_random_draws(seed in 0u64..10_000, c in -1.0f64..3.0, p in 0.0f64..=1.0, eps in 0.05f64..0.95, n in 1usize..4) {
            let fin = FiniteSystem::random(6, seed).unwrap();
            let s: SystemRef = Arc::new(fin.clone());
            let t = build_table(s, fin.points(), 3, &[]).unwrap();
            let f = fin.random_potential(seed ^ 1, 1.0).unwrap();
            let g = fin.random_potential(seed ^ 2, 1.0).unwrap();
            let r = check_properties(&t, &f, &g, c, p, eps, n).unwrap();
            prop_assert!(r.passed(), "{:?}", r.failures());
        }
    }

    #[test]
    fn product_with_one_point_is_exact() {
        let (s, t2) = shift_table(2, 6, 3);
        let t1 = one_point_table(3);
        let r = product_experiment(&t1, &Potential::constant(0.5), &t2, &s.coord0(), &[0.4, 0.2], &[1, 2, 3]).unwrap();
        assert!(r.passed());
        for row in &r.rows {
            assert!((row.log_q_product_witness - row.log_q_first - row.log_q_second).abs() < 1e-12);
        }
    }

    #[test]
    fn product_of_full_shifts() {
        let (s, t) = shift_table(2, 6, 3);
        let f = Potential::zero();
        let r = product_experiment(&t, &f, &t, &f, &[0.25], &[1, 2, 3]).unwrap();
        assert!(r.passed());
        assert!((r.upper_proxy_product - 1.0).abs() < 1e-12);
        assert!((r.upper_proxy_first + r.upper_proxy_second - 1.0).abs() < 1e-12);
        let _ = s;
    }

    #[test]
    fn power_on_one_point_and_swap() {
        let t = one_point_table(6);
        let f = Potential::constant(0.4);
        let r = power_experiment(&t, &f, 2, &[0.3], &[1, 2, 3]).unwrap();
        assert!(r.passed());
        for row in &r.rows {
            let expected = (row.n * 2) as f64 * 0.4 * log_inv(0.3);
            assert!((row.log_q_iterate - expected).abs() < 1e-12);
            assert!((row.log_q_base - expected).abs() < 1e-12);
        }
        let fin = make_finite_system(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1, 0]).unwrap();
        let s: SystemRef = Arc::new(fin.clone());
        let t = build_table(s, fin.points(), 6, &[]).unwrap().with_exhaustive(true);
        let f = fin.potential(vec![0.0, 1.0], "ind").unwrap();
        let r = power_experiment(&t, &f, 2, &[0.5], &[1, 2, 3]).unwrap();
        assert!(r.passed());
        for row in &r.rows {
            assert!((row.log_q_iterate - row.log_q_base).abs() < 1e-12);
        }
    }

    #[test]
    fn power_on_full_shift_doubles_rate() {
        let (_, t) = shift_table(2, 12, 4);
        let r = power_experiment(&t, &Potential::zero(), 2, &[2f64.powi(-6)], &[1, 2]).unwrap();
        assert!(r.passed());
        let (_, vk, kv) = r.rate_pairs[0];
        assert!((vk - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((kv - 2.0 * 2f64.ln()).abs() < 1e-12);
    }
}
