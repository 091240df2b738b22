//! Hierarchical Dirichlet-process topic model with P independent
//! franchise lanes.
//!
//! Each lane runs a Chinese-restaurant-franchise Gibbs sweep over the
//! tokens it owns: bottom-level seating at concentration zeta_j =
//! gamma*xi_j, top-level dish choice at concentration alpha/P. The
//! global step jointly proposes a uniform lane for every dish (tables
//! and tokens move with it) plus a fresh xi vector, accepted by the
//! count-histogram ratio. A reflected random-walk step resamples gamma.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::rng::{log_factorial, log_gamma_unchecked, log_sum_exp, RngStream};

const LANE_SHIFT: u32 = 40;

fn make_id(lane: usize, serial: u64) -> u64 {
    debug_assert!(serial < (1 << LANE_SHIFT));
    ((lane as u64) << LANE_SHIFT) | serial
}

fn token_key(doc: u32, idx: u32) -> u64 {
    ((doc as u64) << 32) | idx as u64
}

fn key_doc(key: u64) -> u32 {
    (key >> 32) as u32
}

/// Model-level constants: top concentration alpha split across P
/// lanes, and the symmetric Dirichlet base measure over the
/// vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdpHyper {
    pub alpha: f64,
    pub beta: f64,
    pub p: usize,
    pub vocab: usize,
}

impl HdpHyper {
    pub fn new(alpha: f64, beta: f64, p: usize, vocab: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::domain(format!("beta must be positive, got {beta}")));
        }
        if p == 0 {
            return Err(Error::domain("need at least one processor"));
        }
        if vocab < 2 {
            return Err(Error::domain(format!(
                "vocabulary must have at least 2 words, got {vocab}"
            )));
        }
        Ok(HdpHyper {
            alpha,
            beta,
            p,
            vocab,
        })
    }

    pub fn alpha_over_p(&self) -> f64 {
        self.alpha / self.p as f64
    }
}

/// The shared scale gamma and the lane weight vector xi; the per-lane
/// bottom concentration is zeta_j = gamma * xi_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalWeights {
    pub gamma: f64,
    pub xi: Vec<f64>,
}

impl GlobalWeights {
    pub fn new(gamma: f64, xi: Vec<f64>) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::domain(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        check_simplex(&xi)?;
        Ok(GlobalWeights { gamma, xi })
    }

    /// Draw gamma from Gamma(alpha) and xi from the symmetric
    /// Dirichlet with mass alpha/P per lane.
    pub fn sample_init(hyper: &HdpHyper, stream: &mut RngStream) -> Result<Self> {
        let gamma = stream.gamma(hyper.alpha)?;
        let xi = if hyper.p == 1 {
            vec![1.0]
        } else {
            stream.dirichlet(&vec![hyper.alpha_over_p(); hyper.p])?
        };
        GlobalWeights::new(gamma, xi)
    }

    pub fn zeta(&self, lane: usize) -> f64 {
        self.gamma * self.xi[lane]
    }
}

fn check_simplex(xi: &[f64]) -> Result<()> {
    if xi.is_empty() {
        return Err(Error::domain("weight vector is empty"));
    }
    if xi.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::domain("weight vector entries must be positive"));
    }
    let total: f64 = xi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "weight vector sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Word counts of one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicCounts {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl TopicCounts {
    pub fn empty(vocab: usize) -> Self {
        TopicCounts {
            counts: vec![0; vocab],
            total: 0,
        }
    }

    fn add(&mut self, word: u32, n: u64) {
        self.counts[word as usize] += n;
        self.total += n;
    }

    fn remove(&mut self, word: u32, n: u64) {
        debug_assert!(self.counts[word as usize] >= n);
        self.counts[word as usize] -= n;
        self.total -= n;
    }
}

/// Log predictive probability of one word under a topic: the smoothed
/// relative frequency (count_w + beta) / (total + V*beta).
pub fn topic_predictive_log(topic: &TopicCounts, word: u32, hyper: &HdpHyper) -> f64 {
    debug_assert!((word as usize) < hyper.vocab);
    let num = topic.counts[word as usize] as f64 + hyper.beta;
    let den = topic.total as f64 + hyper.vocab as f64 * hyper.beta;
    (num / den).ln()
}

/// Log probability of a block of words (with multiplicities) joining a
/// topic, each word conditioned on the ones placed before it.
fn topic_block_log(topic: &TopicCounts, words: &BTreeMap<u32, u64>, hyper: &HdpHyper) -> f64 {
    let vb = hyper.vocab as f64 * hyper.beta;
    let mut lp = 0.0;
    let mut placed = 0u64;
    for (&w, &c) in words {
        let base = topic.counts[w as usize] as f64 + hyper.beta;
        for l in 0..c {
            lp += (base + l as f64).ln();
        }
        placed += c;
    }
    let den0 = topic.total as f64 + vb;
    for l in 0..placed {
        lp -= (den0 + l as f64).ln();
    }
    lp
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TableInfo {
    doc: u32,
    dish: u64,
    customers: u64,
    words: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DishInfo {
    tables: u64,
    topic: TopicCounts,
}

/// One processor's share of the franchise: its tokens, tables, and
/// dishes. Dishes live wholly on one lane; every table serving a dish
/// sits on that dish's lane.
#[derive(Debug, Clone)]
pub struct CrfLane {
    lane_id: usize,
    /// (token key, word, table id), sorted by key
    owned: Vec<(u64, u32, u64)>,
    tables: BTreeMap<u64, TableInfo>,
    dishes: BTreeMap<u64, DishInfo>,
    doc_tables: BTreeMap<u32, BTreeSet<u64>>,
    next_table_serial: u64,
    next_dish_serial: u64,
}

impl CrfLane {
    fn new(lane_id: usize) -> Self {
        CrfLane {
            lane_id,
            owned: Vec::new(),
            tables: BTreeMap::new(),
            dishes: BTreeMap::new(),
            doc_tables: BTreeMap::new(),
            next_table_serial: 0,
            next_dish_serial: 0,
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.owned.len()
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn num_dishes(&self) -> usize {
        self.dishes.len()
    }

    fn total_tables(&self) -> u64 {
        self.tables.len() as u64
    }

    /// Seat one word at a table: existing tables of its document weigh
    /// their size times their dish's predictive; a new table weighs
    /// zeta times the dish mixture. Returns the table id.
    fn seat_token(
        &mut self,
        key: u64,
        word: u32,
        zeta: f64,
        hyper: &HdpHyper,
        stream: &mut RngStream,
    ) -> u64 {
        let doc = key_doc(key);
        let aop = hyper.alpha_over_p();

        // per-dish predictive for this word, reused by both levels
        let mut dish_ids: Vec<u64> = Vec::with_capacity(self.dishes.len());
        let mut dish_pred: Vec<f64> = Vec::with_capacity(self.dishes.len() + 1);
        let mut dish_weights: Vec<f64> = Vec::with_capacity(self.dishes.len() + 1);
        for (&did, dish) in &self.dishes {
            let pred = topic_predictive_log(&dish.topic, word, hyper);
            dish_ids.push(did);
            dish_pred.push(pred);
            dish_weights.push((dish.tables as f64).ln() + pred);
        }
        let empty_pred = -(hyper.vocab as f64).ln();
        dish_pred.push(empty_pred);
        dish_weights.push(aop.ln() + empty_pred);

        let new_table_log = zeta.ln() + log_sum_exp(&dish_weights)
            - (self.total_tables() as f64 + aop).ln();

        let mut table_ids: Vec<u64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        if let Some(tabs) = self.doc_tables.get(&doc) {
            for &tid in tabs {
                let table = &self.tables[&tid];
                let dish = &self.dishes[&table.dish];
                table_ids.push(tid);
                weights.push(
                    (table.customers as f64).ln()
                        + topic_predictive_log(&dish.topic, word, hyper),
                );
            }
        }
        weights.push(new_table_log);

        let choice = stream
            .categorical_log(&weights)
            .expect("seating weights contain a finite entry");
        let tid = if choice < table_ids.len() {
            let tid = table_ids[choice];
            let table = self.tables.get_mut(&tid).expect("live table");
            table.customers += 1;
            *table.words.entry(word).or_insert(0) += 1;
            let dish = self.dishes.get_mut(&table.dish).expect("live dish");
            dish.topic.add(word, 1);
            tid
        } else {
            // pick the new table's dish, reusing the predictives
            let dc = stream
                .categorical_log(&dish_weights)
                .expect("dish weights contain a finite entry");
            let did = if dc < dish_ids.len() {
                let did = dish_ids[dc];
                let dish = self.dishes.get_mut(&did).expect("live dish");
                dish.tables += 1;
                dish.topic.add(word, 1);
                did
            } else {
                let did = make_id(self.lane_id, self.next_dish_serial);
                self.next_dish_serial += 1;
                let mut topic = TopicCounts::empty(hyper.vocab);
                topic.add(word, 1);
                self.dishes.insert(did, DishInfo { tables: 1, topic });
                did
            };
            let tid = make_id(self.lane_id, self.next_table_serial);
            self.next_table_serial += 1;
            let mut words = BTreeMap::new();
            words.insert(word, 1);
            self.tables.insert(
                tid,
                TableInfo {
                    doc,
                    dish: did,
                    customers: 1,
                    words,
                },
            );
            self.doc_tables.entry(doc).or_default().insert(tid);
            tid
        };
        let _ = key;
        tid
    }

    fn unseat_token(&mut self, key: u64, word: u32, tid: u64) {
        let doc = key_doc(key);
        let table = self.tables.get_mut(&tid).expect("token's table is live");
        table.customers -= 1;
        let wc = table.words.get_mut(&word).expect("word at table");
        *wc -= 1;
        if *wc == 0 {
            table.words.remove(&word);
        }
        let did = table.dish;
        let emptied = table.customers == 0;
        let dish = self.dishes.get_mut(&did).expect("table's dish is live");
        dish.topic.remove(word, 1);
        if emptied {
            self.tables.remove(&tid);
            self.doc_tables
                .get_mut(&doc)
                .expect("doc table set")
                .remove(&tid);
            let dish = self.dishes.get_mut(&did).expect("table's dish is live");
            dish.tables -= 1;
            if dish.tables == 0 {
                debug_assert_eq!(dish.topic.total, 0);
                self.dishes.remove(&did);
            }
        }
    }

    /// One full sweep over the lane's tokens (reseat each), then over
    /// its tables (resample each table's dish). Returns how many
    /// tokens changed table.
    pub fn sweep(&mut self, zeta: f64, hyper: &HdpHyper, stream: &mut RngStream) -> usize {
        let mut moved = 0;
        for idx in 0..self.owned.len() {
            let (key, word, old_tid) = self.owned[idx];
            self.unseat_token(key, word, old_tid);
            let new_tid = self.seat_token(key, word, zeta, hyper, stream);
            self.owned[idx].2 = new_tid;
            if new_tid != old_tid {
                moved += 1;
            }
        }
        // dish phase: each table re-picks its dish given the others
        let table_ids: Vec<u64> = self.tables.keys().copied().collect();
        let aop = hyper.alpha_over_p();
        for tid in table_ids {
            let (old_did, words) = {
                let t = &self.tables[&tid];
                (t.dish, t.words.clone())
            };
            {
                let dish = self.dishes.get_mut(&old_did).expect("live dish");
                dish.tables -= 1;
                for (&w, &c) in &words {
                    dish.topic.remove(w, c);
                }
                if dish.tables == 0 {
                    debug_assert_eq!(dish.topic.total, 0);
                    self.dishes.remove(&old_did);
                }
            }
            let mut ids: Vec<u64> = Vec::with_capacity(self.dishes.len());
            let mut weights: Vec<f64> = Vec::with_capacity(self.dishes.len() + 1);
            for (&did, dish) in &self.dishes {
                ids.push(did);
                weights.push(
                    (dish.tables as f64).ln() + topic_block_log(&dish.topic, &words, hyper),
                );
            }
            let empty = TopicCounts::empty(hyper.vocab);
            weights.push(aop.ln() + topic_block_log(&empty, &words, hyper));
            let choice = stream
                .categorical_log(&weights)
                .expect("dish weights contain a finite entry");
            let new_did = if choice < ids.len() {
                let did = ids[choice];
                let dish = self.dishes.get_mut(&did).expect("live dish");
                dish.tables += 1;
                for (&w, &c) in &words {
                    dish.topic.add(w, c);
                }
                did
            } else {
                let did = make_id(self.lane_id, self.next_dish_serial);
                self.next_dish_serial += 1;
                let mut topic = TopicCounts::empty(hyper.vocab);
                for (&w, &c) in &words {
                    topic.add(w, c);
                }
                self.dishes.insert(did, DishInfo { tables: 1, topic });
                did
            };
            self.tables.get_mut(&tid).expect("live table").dish = new_did;
        }
        moved
    }

    fn rebuild_doc_tables(&mut self) {
        self.doc_tables.clear();
        for (&tid, table) in &self.tables {
            self.doc_tables.entry(table.doc).or_default().insert(tid);
        }
    }
}

/// Per-processor count summaries the accept ratio is computed from:
/// total tables, dishes-by-table-count histograms, and per-document
/// tables-by-customer-count histograms with token totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HdpRatioStats {
    /// T.j per processor
    pub tables_per_proc: Vec<u64>,
    /// per processor: tables-per-dish count -> number of dishes (b_ji)
    pub dish_hist: Vec<BTreeMap<u64, u64>>,
    /// per processor, per document: customers-per-table count ->
    /// number of tables (a_jmi)
    pub table_hist: Vec<Vec<BTreeMap<u64, u64>>>,
    /// per processor, per document: token count n_jm.
    pub tokens: Vec<Vec<u64>>,
}

/// One dish's placement: its lane and its tables as (document,
/// customer count) pairs.
#[derive(Debug, Clone)]
pub struct DishPlacement {
    pub lane: usize,
    pub tables: Vec<(u32, u64)>,
}

impl HdpRatioStats {
    pub fn from_dish_layout(dishes: &[DishPlacement], p: usize, num_docs: usize) -> Result<Self> {
        let mut tables_per_proc = vec![0u64; p];
        let mut dish_hist: Vec<BTreeMap<u64, u64>> = vec![BTreeMap::new(); p];
        let mut table_hist: Vec<Vec<BTreeMap<u64, u64>>> =
            vec![vec![BTreeMap::new(); num_docs]; p];
        let mut tokens = vec![vec![0u64; num_docs]; p];
        for dish in dishes {
            if dish.lane >= p {
                return Err(Error::domain(format!(
                    "dish on lane {}, only {p} lanes exist",
                    dish.lane
                )));
            }
            if dish.tables.is_empty() {
                return Err(Error::domain("dish with no tables"));
            }
            let j = dish.lane;
            tables_per_proc[j] += dish.tables.len() as u64;
            *dish_hist[j].entry(dish.tables.len() as u64).or_insert(0) += 1;
            for &(doc, customers) in &dish.tables {
                if doc as usize >= num_docs {
                    return Err(Error::domain(format!(
                        "table in document {doc}, only {num_docs} documents exist"
                    )));
                }
                if customers == 0 {
                    return Err(Error::domain("table with no customers"));
                }
                *table_hist[j][doc as usize].entry(customers).or_insert(0) += 1;
                tokens[j][doc as usize] += customers;
            }
        }
        Ok(HdpRatioStats {
            tables_per_proc,
            dish_hist,
            table_hist,
            tokens,
        })
    }

    pub fn num_processors(&self) -> usize {
        self.tables_per_proc.len()
    }

    pub fn num_docs(&self) -> usize {
        self.tokens.first().map_or(0, |t| t.len())
    }

    pub fn total_tables(&self) -> u64 {
        self.tables_per_proc.iter().sum()
    }

    /// Token total of document m across processors.
    pub fn doc_tokens(&self, m: usize) -> u64 {
        self.tokens.iter().map(|t| t[m]).sum()
    }
}

fn factorial_delta(cur: &BTreeMap<u64, u64>, prop: &BTreeMap<u64, u64>) -> f64 {
    let mut lp = 0.0;
    for (&k, &a) in cur {
        let b = prop.get(&k).copied().unwrap_or(0);
        if a != b {
            lp += log_factorial(a) - log_factorial(b);
        }
    }
    for (&k, &b) in prop {
        if !cur.contains_key(&k) && b != 0 {
            lp -= log_factorial(b);
        }
    }
    lp
}

/// Log accept ratio of a proposed (dish layout, xi) pair: per
/// processor, the xi powers, table-total factorial and gamma terms,
/// and the dish- and table-histogram factorial deltas.
pub fn hdp_accept_log_r(
    cur: &HdpRatioStats,
    prop: &HdpRatioStats,
    xi_cur: &[f64],
    xi_prop: &[f64],
    hyper: &HdpHyper,
) -> Result<f64> {
    let p = cur.num_processors();
    if prop.num_processors() != p || xi_cur.len() != p || xi_prop.len() != p {
        return Err(Error::domain("processor counts disagree"));
    }
    if cur.num_docs() != prop.num_docs() {
        return Err(Error::domain("document counts disagree"));
    }
    check_simplex(xi_cur)?;
    check_simplex(xi_prop)?;
    if cur.total_tables() != prop.total_tables() {
        return Err(Error::domain("total table counts disagree"));
    }
    for m in 0..cur.num_docs() {
        if cur.doc_tokens(m) != prop.doc_tokens(m) {
            return Err(Error::domain(format!(
                "document {m} token totals disagree"
            )));
        }
    }
    let aop = hyper.alpha_over_p();
    let mut log_r = 0.0;
    for j in 0..p {
        let t = cur.tables_per_proc[j];
        let ts = prop.tables_per_proc[j];
        log_r += (ts as f64 + aop) * xi_prop[j].ln() - (t as f64 + aop) * xi_cur[j].ln();
        if t != ts {
            log_r += log_factorial(ts) - log_factorial(t);
            log_r += log_gamma_unchecked(aop + t as f64) - log_gamma_unchecked(aop + ts as f64);
        }
        log_r += factorial_delta(&cur.dish_hist[j], &prop.dish_hist[j]);
        for m in 0..cur.num_docs() {
            log_r += factorial_delta(&cur.table_hist[j][m], &prop.table_hist[j][m]);
        }
    }
    Ok(log_r)
}

/// Log accept ratio for a gamma random-walk move with frozen counts:
/// (g*/g)^T.. * [G(g*)/G(g)]^M * prod_m G(n.m. + g)/G(n.m. + g*).
pub fn gamma_log_accept(gamma: f64, gamma_star: f64, t_total: u64, doc_totals: &[u64]) -> f64 {
    let m = doc_totals.len() as f64;
    let mut lp = t_total as f64 * (gamma_star.ln() - gamma.ln());
    lp += m * (log_gamma_unchecked(gamma_star) - log_gamma_unchecked(gamma));
    for &n in doc_totals {
        lp += log_gamma_unchecked(n as f64 + gamma) - log_gamma_unchecked(n as f64 + gamma_star);
    }
    lp
}

/// One reflected Gaussian random-walk step on gamma. Returns whether
/// the proposal was accepted.
pub fn gamma_mh_step(
    weights: &mut GlobalWeights,
    stats: &HdpRatioStats,
    step: f64,
    stream: &mut RngStream,
) -> Result<bool> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::domain(format!("step must be positive, got {step}")));
    }
    let gamma = weights.gamma;
    let gamma_star = (gamma + stream.normal(0.0, step)).abs();
    let t_total = stats.total_tables();
    let doc_totals: Vec<u64> = (0..stats.num_docs()).map(|m| stats.doc_tokens(m)).collect();
    let accepted = if gamma_star > 0.0 {
        let log_r = gamma_log_accept(gamma, gamma_star, t_total, &doc_totals);
        stream.uniform().ln() < log_r
    } else {
        false
    };
    if accepted {
        weights.gamma = gamma_star;
    }
    Ok(accepted)
}

/// Serializable image of a CrfState, used by checkpoints. Word ids are
/// reloaded from the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdpSnapshot {
    pub hyper: HdpHyper,
    pub token_lane: Vec<u32>,
    pub token_table: Vec<u64>,
    pub table_dish: Vec<(u64, u64)>,
    pub next_table_serials: Vec<u64>,
    pub next_dish_serials: Vec<u64>,
}

/// Full franchise state across P lanes.
#[derive(Debug, Clone)]
pub struct CrfState {
    lanes: Vec<CrfLane>,
    num_docs: usize,
}

impl CrfState {
    /// Build by assigning every token a uniform lane and seating
    /// tokens sequentially within each lane.
    pub fn init(
        corpus: &Corpus,
        hyper: &HdpHyper,
        weights: &GlobalWeights,
        stream: &mut RngStream,
    ) -> Result<Self> {
        if corpus.vocab_size() != hyper.vocab {
            return Err(Error::domain(format!(
                "corpus vocabulary {} does not match model vocabulary {}",
                corpus.vocab_size(),
                hyper.vocab
            )));
        }
        if weights.xi.len() != hyper.p {
            return Err(Error::domain("weight vector does not match processor count"));
        }
        let mut state = CrfState {
            lanes: (0..hyper.p).map(CrfLane::new).collect(),
            num_docs: corpus.num_docs(),
        };
        for m in 0..corpus.num_docs() {
            for (i, w) in corpus.doc_tokens(m).into_iter().enumerate() {
                let lane = if hyper.p == 1 {
                    0
                } else {
                    stream.uniform_index(hyper.p)
                };
                let key = token_key(m as u32, i as u32);
                let zeta = weights.zeta(lane);
                let tid = state.lanes[lane].seat_token(key, w, zeta, hyper, stream);
                state.lanes[lane].owned.push((key, w, tid));
            }
        }
        for lane in &mut state.lanes {
            lane.owned.sort_unstable_by_key(|&(k, _, _)| k);
        }
        state.assert_counts()?;
        Ok(state)
    }

    pub fn num_processors(&self) -> usize {
        self.lanes.len()
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn num_tokens(&self) -> usize {
        self.lanes.iter().map(|l| l.owned.len()).sum()
    }

    pub fn num_dishes(&self) -> usize {
        self.lanes.iter().map(|l| l.dishes.len()).sum()
    }

    pub fn total_tables(&self) -> u64 {
        self.lanes.iter().map(|l| l.total_tables()).sum()
    }

    pub fn tokens_per_proc(&self) -> Vec<u64> {
        self.lanes.iter().map(|l| l.owned.len() as u64).collect()
    }

    /// Mutable lane access for the parallel local phase.
    pub fn lanes_mut(&mut self) -> &mut [CrfLane] {
        &mut self.lanes
    }

    /// Dishes in ascending id order as (id, table count, topic).
    pub fn topics(&self) -> Vec<(u64, u64, TopicCounts)> {
        let mut out = Vec::new();
        for lane in &self.lanes {
            for (&did, dish) in &lane.dishes {
                out.push((did, dish.tables, dish.topic.clone()));
            }
        }
        out.sort_unstable_by_key(|&(did, _, _)| did);
        out
    }

    fn dish_placements(&self) -> (Vec<(usize, u64)>, Vec<DishPlacement>) {
        let mut ids = Vec::new();
        let mut placements = Vec::new();
        for (l, lane) in self.lanes.iter().enumerate() {
            for &did in lane.dishes.keys() {
                let mut tables = Vec::new();
                for table in lane.tables.values() {
                    if table.dish == did {
                        tables.push((table.doc, table.customers));
                    }
                }
                ids.push((l, did));
                placements.push(DishPlacement { lane: l, tables });
            }
        }
        (ids, placements)
    }

    pub fn ratio_stats(&self) -> HdpRatioStats {
        let (_, placements) = self.dish_placements();
        HdpRatioStats::from_dish_layout(&placements, self.lanes.len(), self.num_docs)
            .expect("live state yields consistent stats")
    }

    /// One global move: propose a uniform lane for every dish and a
    /// fresh xi from the symmetric Dirichlet; accept jointly. On
    /// acceptance dishes migrate with their tables and tokens and xi
    /// is replaced. Returns the accept flag.
    pub fn global_step(
        &mut self,
        weights: &mut GlobalWeights,
        hyper: &HdpHyper,
        stream: &mut RngStream,
    ) -> Result<bool> {
        let p = self.lanes.len();
        if p == 1 {
            return Ok(true);
        }
        let (ids, placements) = self.dish_placements();
        let dest: Vec<usize> = ids.iter().map(|_| stream.uniform_index(p)).collect();
        let xi_star = stream.dirichlet(&vec![hyper.alpha_over_p(); p])?;
        let cur = HdpRatioStats::from_dish_layout(&placements, p, self.num_docs)?;
        let mut proposed = placements.clone();
        for (pl, &d) in proposed.iter_mut().zip(&dest) {
            pl.lane = d;
        }
        let prop = HdpRatioStats::from_dish_layout(&proposed, p, self.num_docs)?;
        let log_r = hdp_accept_log_r(&cur, &prop, &weights.xi, &xi_star, hyper)?;
        let accepted = stream.uniform().ln() < log_r;
        if !accepted {
            return Ok(false);
        }

        // migrate dishes whose lane changed, with tables and tokens
        for (&(src, did), &dst) in ids.iter().zip(&dest) {
            if src == dst {
                continue;
            }
            let dish = self.lanes[src]
                .dishes
                .remove(&did)
                .expect("moving dish is live");
            self.lanes[dst].dishes.insert(did, dish);
            let table_ids: Vec<u64> = self.lanes[src]
                .tables
                .iter()
                .filter(|(_, t)| t.dish == did)
                .map(|(&tid, _)| tid)
                .collect();
            let mut moved_tables: BTreeSet<u64> = BTreeSet::new();
            for tid in table_ids {
                let table = self.lanes[src].tables.remove(&tid).expect("live table");
                self.lanes[dst].tables.insert(tid, table);
                moved_tables.insert(tid);
            }
            let mut kept = Vec::with_capacity(self.lanes[src].owned.len());
            let mut moving = Vec::new();
            for &(key, word, tid) in &self.lanes[src].owned {
                if moved_tables.contains(&tid) {
                    moving.push((key, word, tid));
                } else {
                    kept.push((key, word, tid));
                }
            }
            self.lanes[src].owned = kept;
            self.lanes[dst].owned.extend(moving);
        }
        for lane in &mut self.lanes {
            lane.owned.sort_unstable_by_key(|&(k, _, _)| k);
            lane.rebuild_doc_tables();
        }
        weights.xi = xi_star;
        Ok(true)
    }

    /// Exact count consistency: rebuild every table and dish count
    /// from token records and compare.
    pub fn check_consistency(&self) -> Result<()> {
        self.assert_counts()
    }

    fn assert_counts(&self) -> Result<()> {
        let mut seen_tables: BTreeMap<u64, usize> = BTreeMap::new();
        let mut seen_dishes: BTreeMap<u64, usize> = BTreeMap::new();
        for lane in &self.lanes {
            let l = lane.lane_id;
            // token records imply table customer counts and word bags
            let mut customers: BTreeMap<u64, u64> = BTreeMap::new();
            let mut words: BTreeMap<u64, BTreeMap<u32, u64>> = BTreeMap::new();
            let mut last_key: Option<u64> = None;
            for &(key, word, tid) in &lane.owned {
                if let Some(prev) = last_key {
                    if prev >= key {
                        return Err(Error::invariant(format!(
                            "lane {l}: token records out of order at key {key}"
                        )));
                    }
                }
                last_key = Some(key);
                *customers.entry(tid).or_insert(0) += 1;
                *words.entry(tid).or_default().entry(word).or_insert(0) += 1;
            }
            if customers.len() != lane.tables.len() {
                return Err(Error::invariant(format!(
                    "lane {l}: {} tables live, {} referenced",
                    lane.tables.len(),
                    customers.len()
                )));
            }
            let mut dish_tables: BTreeMap<u64, u64> = BTreeMap::new();
            let mut dish_topic: BTreeMap<u64, BTreeMap<u32, u64>> = BTreeMap::new();
            for (&tid, table) in &lane.tables {
                if let Some(other) = seen_tables.insert(tid, l) {
                    return Err(Error::invariant(format!(
                        "table {tid} live on lanes {other} and {l}"
                    )));
                }
                let have = customers.get(&tid).copied().unwrap_or(0);
                if have != table.customers || table.customers == 0 {
                    return Err(Error::invariant(format!(
                        "lane {l}: table {tid} customers {} vs {} tokens",
                        table.customers, have
                    )));
                }
                if words.get(&tid) != Some(&table.words) {
                    return Err(Error::invariant(format!(
                        "lane {l}: table {tid} word bag mismatch"
                    )));
                }
                if key_doc(token_key(table.doc, 0)) != table.doc {
                    return Err(Error::invariant("table document id overflow".to_string()));
                }
                if !lane.dishes.contains_key(&table.dish) {
                    return Err(Error::invariant(format!(
                        "lane {l}: table {tid} serves dish {} which is not live here",
                        table.dish
                    )));
                }
                let set = lane
                    .doc_tables
                    .get(&table.doc)
                    .map_or(false, |s| s.contains(&tid));
                if !set {
                    return Err(Error::invariant(format!(
                        "lane {l}: table {tid} missing from its document index"
                    )));
                }
                *dish_tables.entry(table.dish).or_insert(0) += 1;
                let topic = dish_topic.entry(table.dish).or_default();
                for (&w, &c) in &table.words {
                    *topic.entry(w).or_insert(0) += c;
                }
            }
            let indexed: usize = lane.doc_tables.values().map(|s| s.len()).sum();
            if indexed != lane.tables.len() {
                return Err(Error::invariant(format!(
                    "lane {l}: document index covers {indexed} tables of {}",
                    lane.tables.len()
                )));
            }
            if dish_tables.len() != lane.dishes.len() {
                return Err(Error::invariant(format!(
                    "lane {l}: {} dishes live, {} referenced",
                    lane.dishes.len(),
                    dish_tables.len()
                )));
            }
            for (&did, dish) in &lane.dishes {
                if let Some(other) = seen_dishes.insert(did, l) {
                    return Err(Error::invariant(format!(
                        "dish {did} live on lanes {other} and {l}"
                    )));
                }
                let have = dish_tables.get(&did).copied().unwrap_or(0);
                if have != dish.tables || dish.tables == 0 {
                    return Err(Error::invariant(format!(
                        "lane {l}: dish {did} tables {} vs {} serving",
                        dish.tables, have
                    )));
                }
                let topic = dish_topic.get(&did).cloned().unwrap_or_default();
                let mut rebuilt = vec![0u64; dish.topic.counts.len()];
                let mut total = 0u64;
                for (&w, &c) in &topic {
                    rebuilt[w as usize] = c;
                    total += c;
                }
                if rebuilt != dish.topic.counts || total != dish.topic.total {
                    return Err(Error::invariant(format!(
                        "lane {l}: dish {did} topic counts mismatch"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn snapshot(&self, hyper: &HdpHyper) -> HdpSnapshot {
        // flatten per-token records in key order across lanes
        let mut records: Vec<(u64, u32, u64)> = Vec::with_capacity(self.num_tokens());
        for lane in &self.lanes {
            for &(key, _, tid) in &lane.owned {
                records.push((key, lane.lane_id as u32, tid));
            }
        }
        records.sort_unstable_by_key(|&(k, _, _)| k);
        let mut table_dish: Vec<(u64, u64)> = Vec::new();
        for lane in &self.lanes {
            for (&tid, table) in &lane.tables {
                table_dish.push((tid, table.dish));
            }
        }
        table_dish.sort_unstable();
        HdpSnapshot {
            hyper: *hyper,
            token_lane: records.iter().map(|&(_, l, _)| l).collect(),
            token_table: records.iter().map(|&(_, _, t)| t).collect(),
            table_dish,
            next_table_serials: self.lanes.iter().map(|l| l.next_table_serial).collect(),
            next_dish_serials: self.lanes.iter().map(|l| l.next_dish_serial).collect(),
        }
    }

    pub fn from_snapshot(corpus: &Corpus, hyper: &HdpHyper, snap: &HdpSnapshot) -> Result<Self> {
        let p = snap.next_table_serials.len();
        if p == 0 || snap.next_dish_serials.len() != p {
            return Err(Error::Checkpoint("serial counters malformed".to_string()));
        }
        if corpus.vocab_size() != hyper.vocab {
            return Err(Error::Checkpoint(format!(
                "corpus vocabulary {} does not match model vocabulary {}",
                corpus.vocab_size(),
                hyper.vocab
            )));
        }
        let dish_of: BTreeMap<u64, u64> = snap.table_dish.iter().copied().collect();
        let mut lanes: Vec<CrfLane> = (0..p).map(CrfLane::new).collect();
        let mut flat = 0usize;
        for m in 0..corpus.num_docs() {
            for (i, w) in corpus.doc_tokens(m).into_iter().enumerate() {
                let (Some(&l), Some(&tid)) =
                    (snap.token_lane.get(flat), snap.token_table.get(flat))
                else {
                    return Err(Error::Checkpoint(format!(
                        "state covers {flat} tokens, corpus has more"
                    )));
                };
                flat += 1;
                let l = l as usize;
                if l >= p {
                    return Err(Error::Checkpoint(format!(
                        "token on lane {l}, only {p} exist"
                    )));
                }
                let Some(&did) = dish_of.get(&tid) else {
                    return Err(Error::Checkpoint(format!("table {tid} has no dish")));
                };
                let key = token_key(m as u32, i as u32);
                let lane = &mut lanes[l];
                lane.owned.push((key, w, tid));
                let table = lane.tables.entry(tid).or_insert_with(|| TableInfo {
                    doc: m as u32,
                    dish: did,
                    customers: 0,
                    words: BTreeMap::new(),
                });
                if table.doc != m as u32 {
                    return Err(Error::Checkpoint(format!(
                        "table {tid} spans documents {} and {m}",
                        table.doc
                    )));
                }
                table.customers += 1;
                *table.words.entry(w).or_insert(0) += 1;
                let dish = lane.dishes.entry(did).or_insert_with(|| DishInfo {
                    tables: 0,
                    topic: TopicCounts::empty(hyper.vocab),
                });
                dish.topic.add(w, 1);
            }
        }
        if flat != snap.token_lane.len() || flat != snap.token_table.len() {
            return Err(Error::Checkpoint(format!(
                "state covers {} tokens, corpus has {flat}",
                snap.token_lane.len()
            )));
        }
        // second pass for table counts per dish
        for lane in &mut lanes {
            let mut dish_tables: BTreeMap<u64, u64> = BTreeMap::new();
            for table in lane.tables.values() {
                *dish_tables.entry(table.dish).or_insert(0) += 1;
            }
            for (did, dish) in &mut lane.dishes {
                dish.tables = dish_tables.get(did).copied().unwrap_or(0);
            }
            lane.rebuild_doc_tables();
            lane.owned.sort_unstable_by_key(|&(k, _, _)| k);
        }
        for (l, lane) in lanes.iter_mut().enumerate() {
            lane.next_table_serial = snap.next_table_serials[l];
            lane.next_dish_serial = snap.next_dish_serials[l];
            for &tid in lane.tables.keys() {
                if tid >> LANE_SHIFT == l as u64
                    && (tid & ((1 << LANE_SHIFT) - 1)) >= lane.next_table_serial
                {
                    return Err(Error::Checkpoint(format!(
                        "table {tid} is newer than lane {l}'s serial counter"
                    )));
                }
            }
            for &did in lane.dishes.keys() {
                if did >> LANE_SHIFT == l as u64
                    && (did & ((1 << LANE_SHIFT) - 1)) >= lane.next_dish_serial
                {
                    return Err(Error::Checkpoint(format!(
                        "dish {did} is newer than lane {l}'s serial counter"
                    )));
                }
            }
        }
        let state = CrfState {
            lanes,
            num_docs: corpus.num_docs(),
        };
        state
            .assert_counts()
            .map_err(|e| Error::Checkpoint(format!("inconsistent state: {e}")))?;
        Ok(state)
    }
}
