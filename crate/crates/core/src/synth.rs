//! Synthetic academic graphs.
//!
//! Papers arrive over `years`; each is led by an active author chosen by
//! Pareto productivity, joined by Poisson-many coauthors and published in
//! the lead's home venue most of the time. A paper cites earlier papers with
//! attractiveness
//!
//! ```text
//! η_q · (1 + c_q)^β · exp(−Δ/τ_q) · (h if same venue) · (1 + burst if Δ < 1)
//! ```
//!
//! where `η_q` is a Pareto fitness, `c_q` the citations so far and `τ_q` an
//! aging time that grows with venue quality. Papers in strong venues keep
//! being cited long after the observation window, and since citations stay
//! mostly within a venue, who cites a paper early reveals how long it will
//! keep collecting citations.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, GraphBuilder, HeteroGraph, NodeId, NodeKind};
use crate::hashing::hash_bag_of_words;
use crate::util::{rng_for, stream};

pub const TITLE_DIM: usize = 64;
const TOPIC_WORDS: usize = 12;
const GENERIC_WORDS: usize = 200;
const MAX_AUTHORS: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_papers: usize,
    pub n_authors: usize,
    pub n_venues: usize,
    /// Length of the simulated period; paper times lie in `[0, years)`.
    pub years: f64,
    /// Exponential growth rate of yearly output (0 gives uniform times).
    pub growth_rate: f64,
    pub references_mean: f64,
    /// `β` in the preferential-attachment term `(1 + c)^β`.
    pub attachment_exponent: f64,
    /// Pareto shape of paper fitness; it sets the tail exponent of the
    /// citation-count CCDF.
    pub citation_tail_exponent: f64,
    /// Aging time (years) of a median-quality venue.
    pub aging_years: f64,
    /// Aging times span `aging_years · exp(±spread/2)` across venue quality.
    pub venue_quality_spread: f64,
    /// Citation preference for papers of the citing paper's own venue.
    pub venue_homophily: f64,
    /// Pareto shape of author productivity.
    pub productivity_shape: f64,
    /// Extra attractiveness during a paper's first year.
    pub temporal_burst: f64,
    pub coauthors_mean: f64,
    pub home_venue_prob: f64,
    /// Authors enter uniformly within the first `entry_span · years`.
    pub entry_span: f64,
    pub max_papers_per_author: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_papers: 3000,
            n_authors: 1000,
            n_venues: 10,
            years: 40.0,
            growth_rate: 0.0,
            references_mean: 25.0,
            attachment_exponent: 0.3,
            citation_tail_exponent: 2.0,
            aging_years: 3.5,
            venue_quality_spread: 2.5,
            venue_homophily: 4.0,
            productivity_shape: 1.5,
            temporal_burst: 1.0,
            coauthors_mean: 2.0,
            home_venue_prob: 0.8,
            entry_span: 0.9,
            max_papers_per_author: 60,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("years", self.years),
            ("citation_tail_exponent", self.citation_tail_exponent),
            ("aging_years", self.aging_years),
            ("venue_homophily", self.venue_homophily),
            ("productivity_shape", self.productivity_shape),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("growth_rate", self.growth_rate),
            ("references_mean", self.references_mean),
            ("attachment_exponent", self.attachment_exponent),
            ("venue_quality_spread", self.venue_quality_spread),
            ("temporal_burst", self.temporal_burst),
            ("coauthors_mean", self.coauthors_mean),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.home_venue_prob) {
            return Err(Error::Config("home_venue_prob must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.entry_span) {
            return Err(Error::Config("entry_span must lie in [0, 1]".into()));
        }
        if self.n_papers > 0 && (self.n_authors == 0 || self.n_venues == 0) {
            return Err(Error::Config("papers need at least one author and one venue".into()));
        }
        if self.n_papers > self.n_authors.saturating_mul(self.max_papers_per_author) {
            return Err(Error::Config(format!(
                "{} papers exceed the capacity of {} authors writing at most {} papers each",
                self.n_papers, self.n_authors, self.max_papers_per_author
            )));
        }
        Ok(())
    }
}

struct Author {
    productivity: f64,
    talent: f64,
    entry: f64,
    home: usize,
    papers: Vec<usize>,
}

struct Paper {
    time: f64,
    authors: Vec<usize>,
    venue: usize,
    fitness: f64,
    aging: f64,
    references: Vec<usize>,
    citations: usize,
    words: String,
}

fn paper_times(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut times: Vec<f64> = (0..cfg.n_papers)
        .map(|_| {
            let u: f64 = rng.random();
            if cfg.growth_rate > 0.0 {
                // inverse CDF of density ∝ exp(g t) on [0, years)
                let g = cfg.growth_rate;
                (1.0 + u * ((g * cfg.years).exp() - 1.0)).ln() / g
            } else {
                u * cfg.years
            }
        })
        .map(|t: f64| t.min(cfg.years * (1.0 - 1e-12)))
        .collect();
    times.sort_by(f64::total_cmp);
    times
}

/// Index drawn with probability ∝ `weights`; `None` when all are zero.
fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return Some(i);
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0)
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<HeteroGraph> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, &[stream::SYNTH]);
    let unit_normal: Normal<f64> = Normal::new(0.0, 1.0).expect("valid normal");
    let productivity = Pareto::new(1.0, cfg.productivity_shape).map_err(|e| Error::Config(e.to_string()))?;
    let fitness = Pareto::new(1.0, cfg.citation_tail_exponent).map_err(|e| Error::Config(e.to_string()))?;

    let quality = shuffled_quality(cfg.n_venues, &mut rng);

    let mut authors: Vec<Author> = (0..cfg.n_authors)
        .map(|_| Author {
            productivity: productivity.sample(&mut rng),
            talent: (0.3 * unit_normal.sample(&mut rng)).exp(),
            entry: rng.random::<f64>() * cfg.years * cfg.entry_span,
            home: if cfg.n_venues > 0 { rng.random_range(0..cfg.n_venues) } else { 0 },
            papers: Vec::new(),
        })
        .collect();

    let times = paper_times(cfg, &mut rng);
    let mut papers: Vec<Paper> = Vec::with_capacity(cfg.n_papers);
    let mut weights = Vec::with_capacity(cfg.n_papers);
    for (i, &t) in times.iter().enumerate() {
        // lead author: active authors with spare capacity, by productivity
        let free = |a: &Author| a.papers.len() < cfg.max_papers_per_author;
        let mut lead_w: Vec<f64> = authors
            .iter()
            .map(|a| if free(a) && a.entry <= t { a.productivity } else { 0.0 })
            .collect();
        if lead_w.iter().all(|&w| w == 0.0) {
            lead_w = authors.iter().map(|a| if free(a) { a.productivity } else { 0.0 }).collect();
        }
        let lead = pick(&lead_w, &mut rng).ok_or_else(|| Error::Config("author capacity exhausted".into()))?;
        let home = authors[lead].home;
        let extra = Poisson::new(cfg.coauthors_mean.max(1e-12))
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(&mut rng) as usize;
        let mut team = vec![lead];
        let mut co_w: Vec<f64> = authors
            .iter()
            .map(|a| {
                if free(a) && a.entry <= t {
                    a.productivity * if a.home == home { 3.0 } else { 1.0 }
                } else {
                    0.0
                }
            })
            .collect();
        co_w[lead] = 0.0;
        for _ in 0..extra.min(MAX_AUTHORS - 1) {
            match pick(&co_w, &mut rng) {
                Some(a) => {
                    co_w[a] = 0.0;
                    team.push(a);
                }
                None => break,
            }
        }
        let venue = if rng.random::<f64>() < cfg.home_venue_prob {
            home
        } else {
            rng.random_range(0..cfg.n_venues)
        };
        let q = quality[venue];
        let talent = team.iter().map(|&a| authors[a].talent).fold(0.0, f64::max);
        let eta = talent * fitness.sample(&mut rng) * (0.5 + q);
        let aging = cfg.aging_years
            * (cfg.venue_quality_spread * (q - 0.5)).exp()
            * (0.2 * unit_normal.sample(&mut rng)).exp();

        // references to earlier papers
        let n_refs = if i == 0 || cfg.references_mean == 0.0 {
            0
        } else {
            let r = Poisson::new(cfg.references_mean)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(&mut rng) as usize;
            r.min(i)
        };
        let mut references = Vec::with_capacity(n_refs);
        if n_refs > 0 {
            weights.clear();
            weights.extend(papers.iter().map(|p| {
                let age = t - p.time;
                let mut w = p.fitness
                    * (1.0 + p.citations as f64).powf(cfg.attachment_exponent)
                    * (-age / p.aging).exp();
                if p.venue == venue {
                    w *= cfg.venue_homophily;
                }
                if age < 1.0 {
                    w *= 1.0 + cfg.temporal_burst;
                }
                w
            }));
            let mut chosen = BTreeSet::new();
            let mut attempts = 0;
            while chosen.len() < n_refs && attempts < 20 * n_refs {
                attempts += 1;
                if let Some(j) = pick(&weights, &mut rng) {
                    if chosen.insert(j) {
                        weights[j] = 0.0;
                    }
                } else {
                    break;
                }
            }
            references.extend(chosen);
        }
        for &j in &references {
            papers[j].citations += 1;
        }
        for &a in &team {
            authors[a].papers.push(i);
        }

        let mut words: Vec<String> = (0..5)
            .map(|_| format!("v{venue}topic{}", rng.random_range(0..TOPIC_WORDS)))
            .collect();
        words.extend((0..3).map(|_| format!("word{}", rng.random_range(0..GENERIC_WORDS))));
        papers.push(Paper {
            time: t,
            authors: team,
            venue,
            fitness: eta,
            aging,
            references,
            citations: 0,
            words: words.join(" "),
        });
    }
    assemble(cfg, &quality, &authors, &papers)
}

fn assemble(cfg: &SynthConfig, quality: &[f64], authors: &[Author], papers: &[Paper]) -> Result<HeteroGraph> {
    let years = cfg.years;
    let mut b = GraphBuilder::new();
    let feats = |pairs: Vec<(&str, Vec<f64>)>| -> BTreeMap<String, Vec<f64>> {
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    };

    let mut venue_papers = vec![0usize; quality.len()];
    let mut venue_cites = vec![0usize; quality.len()];
    for p in papers {
        venue_papers[p.venue] += 1;
        venue_cites[p.venue] += p.citations;
    }
    let venues: Vec<NodeId> = (0..quality.len())
        .map(|v| {
            let f = vec![
                (1.0 + venue_papers[v] as f64).ln() / 5.0,
                (1.0 + venue_cites[v] as f64).ln() / 10.0,
            ];
            b.add_node(format!("v{v}"), NodeKind::Venue, 0.0, feats(vec![("degree", f)]))
        })
        .collect::<Result<_>>()?;

    let mut author_ids = Vec::with_capacity(authors.len());
    for (i, a) in authors.iter().enumerate() {
        let start = a.papers.first().map_or(a.entry, |&p| papers[p].time);
        let early: Vec<usize> = a
            .papers
            .iter()
            .copied()
            .filter(|&p| papers[p].time <= start + 2.0)
            .collect();
        let coauthors: BTreeSet<usize> = early
            .iter()
            .flat_map(|&p| papers[p].authors.iter().copied())
            .filter(|&x| x != i)
            .collect();
        let f = feats(vec![
            ("career", vec![start / years]),
            (
                "degree",
                vec![(1.0 + early.len() as f64).ln(), (1.0 + coauthors.len() as f64).ln()],
            ),
        ]);
        author_ids.push(b.add_node(format!("a{i}"), NodeKind::Author, start.min(a.entry), f)?);
    }

    let mut paper_ids = Vec::with_capacity(papers.len());
    for (i, p) in papers.iter().enumerate() {
        let f = feats(vec![
            ("title", hash_bag_of_words(&p.words, TITLE_DIM)),
            ("year", vec![p.time / years]),
        ]);
        paper_ids.push(b.add_node(format!("p{i}"), NodeKind::Paper, p.time, f)?);
    }

    for (i, p) in papers.iter().enumerate() {
        let (pid, t) = (paper_ids[i], p.time);
        let venue = venues[p.venue];
        b.add_edge(pid, venue, EdgeKind::PaperPublishedInVenue, 1.0, t)?;
        for &a in &p.authors {
            b.add_edge(author_ids[a], pid, EdgeKind::AuthorWritesPaper, 1.0, t)?;
            b.add_edge(author_ids[a], venue, EdgeKind::AuthorPublishesVenue, 1.0, t)?;
            for &other in &p.authors {
                if other != a {
                    b.add_edge(author_ids[a], author_ids[other], EdgeKind::AuthorCollabAuthor, 1.0, t)?;
                }
            }
        }
        for &r in &p.references {
            let cited = paper_ids[r];
            b.add_edge(pid, cited, EdgeKind::PaperCitesPaper, 1.0, t)?;
            for &a in &papers[r].authors {
                b.add_edge(pid, author_ids[a], EdgeKind::PaperCitesAuthor, 1.0, t)?;
            }
            for &a in &p.authors {
                b.add_edge(author_ids[a], cited, EdgeKind::AuthorCitesPaper, 1.0, t)?;
            }
        }
    }
    b.finalize()
}

/// Venue quality scores as generated (index = venue number).
pub fn venue_quality(cfg: &SynthConfig) -> Vec<f64> {
    shuffled_quality(cfg.n_venues, &mut rng_for(cfg.seed, &[stream::SYNTH]))
}

/// Evenly spaced qualities in `[0, 1]`, in a random venue order. Always the
/// first draw from the generator's stream.
fn shuffled_quality(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut quality: Vec<f64> = (0..n)
        .map(|v| if n > 1 { v as f64 / (n - 1) as f64 } else { 0.5 })
        .collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        quality.swap(i, j);
    }
    quality
}
