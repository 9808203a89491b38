//! Evaluation metrics, constant and regression baselines, and descriptive
//! statistics of citation data.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::{target_venue, Cascade};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

fn check_pairs(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Data("no prediction pairs to evaluate".into()));
    }
    if let Some(&(p, c)) = pairs.iter().find(|(p, c)| !(*p > 0.0 && *c > 0.0)) {
        return Err(Error::Data(format!("non-positive value in pair ({p}, {c})")));
    }
    Ok(())
}

/// Mean of `(log2 ĉ − log2 c)²` over `(prediction, label)` pairs.
pub fn msle(pairs: &[(f64, f64)]) -> Result<f64> {
    check_pairs(pairs)?;
    let total: f64 = pairs.iter().map(|&(p, c)| (p.log2() - c.log2()).powi(2)).sum();
    Ok(total / pairs.len() as f64)
}

/// Fraction of pairs with `0.5c ≤ ĉ ≤ 1.5c`, both bounds inclusive.
pub fn acc(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("no prediction pairs to evaluate".into()));
    }
    let hits = pairs
        .iter()
        .filter(|&&(p, c)| 0.5 * c <= p && p <= 1.5 * c)
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scores {
    pub acc: f64,
    pub msle: f64,
    pub n: usize,
}

impl Scores {
    pub fn of(pairs: &[(f64, f64)]) -> Result<Scores> {
        Ok(Scores {
            acc: acc(pairs)?,
            msle: msle(pairs)?,
            n: pairs.len(),
        })
    }
}

/// Scores over all samples plus a breakdown by the target's venue.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub acc: f64,
    pub by_venue: BTreeMap<String, Scores>,
    pub msle: f64,
    pub n: usize,
}

impl EvalReport {
    /// `predictions[i]` belongs to `cascades[i]`.
    pub fn new(g: &HeteroGraph, cascades: &[&Cascade], predictions: &[f64]) -> Result<EvalReport> {
        if cascades.len() != predictions.len() {
            return Err(Error::Data(format!(
                "{} predictions for {} samples",
                predictions.len(),
                cascades.len()
            )));
        }
        let pairs: Vec<(f64, f64)> = predictions
            .iter()
            .zip(cascades)
            .map(|(&p, c)| (p, c.label as f64))
            .collect();
        let overall = Scores::of(&pairs)?;
        let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for (c, &pair) in cascades.iter().zip(&pairs) {
            let venue = target_venue(g, c.target)
                .map_or_else(|| "none".to_string(), |v| g.node(v).external_id.clone());
            groups.entry(venue).or_default().push(pair);
        }
        let by_venue = groups
            .into_iter()
            .map(|(v, ps)| Ok((v, Scores::of(&ps)?)))
            .collect::<Result<_>>()?;
        Ok(EvalReport {
            acc: overall.acc,
            by_venue,
            msle: overall.msle,
            n: overall.n,
        })
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("report serializes");
        s.push('\n');
        s
    }
}

pub const UNIFORM_GRID_STEP: f64 = 0.001;

/// Constant log2 prediction minimising the training MSLE over the grid
/// `min, min + 0.001, …` up to the largest log2 label.
pub fn uniform_constant(train_labels: &[u64]) -> Result<f64> {
    if train_labels.is_empty() {
        return Err(Error::Data("uniform baseline needs training labels".into()));
    }
    if train_labels.contains(&0) {
        return Err(Error::Data("labels must be positive".into()));
    }
    let logs: Vec<f64> = train_labels.iter().map(|&c| (c as f64).log2()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let steps = ((hi - lo) / UNIFORM_GRID_STEP + 1e-9).floor() as usize;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=steps {
        let k = lo + i as f64 * UNIFORM_GRID_STEP;
        // training MSLE of the constant k
        let loss = var + (k - mean).powi(2);
        if loss < best.0 {
            best = (loss, k);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSet {
    /// log2 of the observed citation count only.
    ObservedOnly,
    /// Observed count, mean arrival time and the target's degrees.
    Full,
}

/// Regression inputs of one cascade. Degrees count edges (of every kind)
/// with timestamps up to the end of the observation window.
pub fn cascade_features(g: &HeteroGraph, c: &Cascade, set: FeatureSet, t_r: f64) -> Vec<f64> {
    let mut x = vec![(c.observed.max(1) as f64).log2()];
    if set == FeatureSet::Full {
        let mean_t = if c.events.is_empty() {
            0.0
        } else {
            c.events.iter().map(|e| e.time).sum::<f64>() / c.events.len() as f64
        };
        let cutoff = c.birth + t_r;
        let indeg = g.in_edges(c.target).filter(|e| e.time <= cutoff).count();
        let outdeg = g.out_edges(c.target).filter(|e| e.time <= cutoff).count();
        x.push(mean_t);
        x.push((1.0 + indeg as f64).log2());
        x.push((1.0 + outdeg as f64).log2());
    }
    x
}

pub const RIDGE: f64 = 1e-8;

/// Least squares with an intercept (`X` gets a leading column of ones).
/// Solves `(XᵀX + λI) w = Xᵀy`, then refines with a few iterated-ridge steps
/// `w ← w + (XᵀX + λI)⁻¹ Xᵀ(y − Xw)` so the ridge only conditions the solve
/// and does not bias well-posed fits. Returns `[intercept, coefficients…]`.
pub fn ols(rows: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if rows.is_empty() || rows.len() != y.len() {
        return Err(Error::Data("regression needs one target per feature row".into()));
    }
    let d = rows[0].len() + 1;
    if rows.iter().any(|r| r.len() + 1 != d) {
        return Err(Error::Data("feature rows have different lengths".into()));
    }
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (r, &t) in rows.iter().zip(y) {
        let x: Vec<f64> = std::iter::once(1.0).chain(r.iter().copied()).collect();
        for i in 0..d {
            b[i] += x[i] * t;
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
        }
    }
    let mut reg = a.clone();
    for (i, row) in reg.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let mut w = solve(reg.clone(), b.clone())?;
    if ridge > 0.0 {
        for _ in 0..REFINE_STEPS {
            let residual: Vec<f64> = (0..d)
                .map(|i| b[i] - (0..d).map(|j| a[i][j] * w[j]).sum::<f64>())
                .collect();
            let delta = solve(reg.clone(), residual)?;
            for (wi, di) in w.iter_mut().zip(delta) {
                *wi += di;
            }
        }
    }
    Ok(w)
}

const REFINE_STEPS: usize = 4;

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if !(a[pivot][col].abs() > 1e-300) {
            return Err(Error::Numeric("normal equations are singular".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for i in col + 1..n {
            let f = a[i][col] / a[col][col];
            for j in col..n {
                a[i][j] -= f * a[col][j];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("regression produced non-finite coefficients".into()));
    }
    Ok(x)
}

/// Linear model on log2 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureModel {
    pub set: FeatureSet,
    pub t_r: f64,
    pub weights: Vec<f64>,
}

impl FeatureModel {
    pub fn fit(g: &HeteroGraph, train: &[&Cascade], set: FeatureSet, t_r: f64) -> Result<FeatureModel> {
        if train.is_empty() {
            return Err(Error::Data("feature baseline needs training samples".into()));
        }
        let rows: Vec<Vec<f64>> = train.iter().map(|c| cascade_features(g, c, set, t_r)).collect();
        let y: Vec<f64> = train.iter().map(|c| (c.label as f64).log2()).collect();
        Ok(FeatureModel {
            set,
            t_r,
            weights: ols(&rows, &y, RIDGE)?,
        })
    }

    /// Predicted citation count `2^(w·[1, x])`.
    pub fn predict(&self, g: &HeteroGraph, c: &Cascade) -> f64 {
        let x = cascade_features(g, c, self.set, self.t_r);
        let y = self.weights[0] + self.weights[1..].iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
        y.exp2()
    }
}

/// `(x, P(X ≥ x))` at every distinct value, ascending in `x`.
pub fn ccdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Data("CCDF of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        if out.last().is_none_or(|&(prev, _)| prev != x) {
            out.push((x, (sorted.len() - i) as f64 / n));
        }
    }
    Ok(out)
}

/// Least-squares slope of `ln P(X ≥ x)` against `ln x` over CCDF points
/// with `x ≥ x_min` (and `x > 0`).
pub fn ccdf_tail_slope(values: &[f64], x_min: f64) -> Result<f64> {
    let points: Vec<(f64, f64)> = ccdf(values)?
        .into_iter()
        .filter(|&(x, _)| x >= x_min && x > 0.0)
        .map(|(x, p)| (x.ln(), p.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::Data("fewer than two tail points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Gini coefficient of non-negative values (0 when all are zero).
pub fn gini(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = v.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x).sum();
    2.0 * weighted / (n * total) - (n + 1.0) / n
}

/// Pearson correlation between yearly columns of `series[entity][year]`.
/// Entries involving a constant year are `None`.
pub fn pearson_year_matrix(series: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>> {
    let years = series.first().map_or(0, Vec::len);
    if years < 2 {
        return Err(Error::Data("need at least two years of counts".into()));
    }
    if series.iter().any(|s| s.len() != years) {
        return Err(Error::Data("yearly series have different lengths".into()));
    }
    let n = series.len() as f64;
    let centered: Vec<Vec<f64>> = (0..years)
        .map(|y| {
            let mean = series.iter().map(|s| s[y]).sum::<f64>() / n;
            series.iter().map(|s| s[y] - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut m = vec![vec![None; years]; years];
    for i in 0..years {
        for j in i..years {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let r = if i == j {
                1.0
            } else {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            m[i][j] = Some(r);
            m[j][i] = Some(r);
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductivityPoint {
    pub year: usize,
    pub mean_papers: f64,
    pub mean_new_citations: f64,
    pub product: f64,
}

/// Per career year (1-based): mean papers published, mean new citations
/// received, and their product. `papers[a][y]` and `new_citations[a][y]`
/// are author `a`'s counts in year `y + 1`.
pub fn productivity_profile(papers: &[Vec<f64>], new_citations: &[Vec<f64>]) -> Result<Vec<ProductivityPoint>> {
    if papers.len() != new_citations.len() {
        return Err(Error::Data("paper and citation series cover different authors".into()));
    }
    let years = papers
        .iter()
        .chain(new_citations)
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    let n = papers.len() as f64;
    let mean_at = |series: &[Vec<f64>], y: usize| {
        if series.is_empty() {
            0.0
        } else {
            series.iter().map(|s| s.get(y).copied().unwrap_or(0.0)).sum::<f64>() / n
        }
    };
    Ok((0..years)
        .map(|y| {
            let mp = mean_at(papers, y);
            let mc = mean_at(new_citations, y);
            ProductivityPoint {
                year: y + 1,
                mean_papers: mp,
                mean_new_citations: mc,
                product: mp * mc,
            }
        })
        .collect())
}

/// Bucket index (0-based year) of an offset, `None` outside `[0, years)`.
fn year_bucket(offset: f64, years: usize) -> Option<usize> {
    (offset >= 0.0 && offset < years as f64).then(|| offset.floor() as usize)
}

/// Cumulative citations of each paper at the end of years 1..=`years` after
/// publication, for papers whose whole window lies within the data.
pub fn paper_citation_years(g: &HeteroGraph, years: usize) -> Vec<Vec<f64>> {
    use crate::graph::{EdgeKind, NodeKind};
    let horizon = g.horizon().unwrap_or(0.0);
    g.nodes_of_kind(NodeKind::Paper)
        .iter()
        .filter(|&&p| g.node(p).birth_time + years as f64 <= horizon)
        .map(|&p| {
            let birth = g.node(p).birth_time;
            let mut per_year = vec![0.0; years];
            for e in g.in_edges(p).filter(|e| e.kind == EdgeKind::PaperCitesPaper) {
                if let Some(y) = year_bucket(e.time - birth, years) {
                    per_year[y] += 1.0;
                }
            }
            cumulative(per_year)
        })
        .collect()
}

/// Per author with a full window: papers written and citations received in
/// each career year, then the cumulative citation series.
pub struct AuthorYears {
    pub papers: Vec<Vec<f64>>,
    pub new_citations: Vec<Vec<f64>>,
    pub cumulative_citations: Vec<Vec<f64>>,
}

pub fn author_citation_years(g: &HeteroGraph, years: usize) -> AuthorYears {
    use crate::dataset::career_start;
    use crate::graph::{EdgeKind, NodeKind};
    let horizon = g.horizon().unwrap_or(0.0);
    let mut out = AuthorYears {
        papers: Vec::new(),
        new_citations: Vec::new(),
        cumulative_citations: Vec::new(),
    };
    for &a in g.nodes_of_kind(NodeKind::Author) {
        let Some(start) = career_start(g, a) else { continue };
        if start + years as f64 > horizon {
            continue;
        }
        let mut papers = vec![0.0; years];
        let mut cites = vec![0.0; years];
        for w in g.out_edges(a).filter(|e| e.kind == EdgeKind::AuthorWritesPaper) {
            if let Some(y) = year_bucket(w.time - start, years) {
                papers[y] += 1.0;
            }
            for e in g.in_edges(w.dst).filter(|e| e.kind == EdgeKind::PaperCitesPaper) {
                if let Some(y) = year_bucket(e.time - start, years) {
                    cites[y] += 1.0;
                }
            }
        }
        out.cumulative_citations.push(cumulative(cites.clone()));
        out.papers.push(papers);
        out.new_citations.push(cites);
    }
    out
}

fn cumulative(mut v: Vec<f64>) -> Vec<f64> {
    for i in 1..v.len() {
        v[i] += v[i - 1];
    }
    v
}
