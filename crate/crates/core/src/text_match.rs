//! Windowed, order-penalized unigram-recall scoring between a query and a page.
//!
//! A query is matched against fixed-size windows of a page. Within a window we
//! compute a maximum-cardinality one-to-one exact-unigram alignment and, among
//! those, one with the fewest chunks (maximal runs of pairs contiguous and
//! order-preserving in both sequences). The recall `m / |query|` is then scaled
//! by `1 - gamma * (c / m)^beta` so that scattered or out-of-order matches score
//! lower than contiguous ones.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::benchmark::QueryVariant;

pub const DEFAULT_GAMMA: f64 = 0.8;
pub const DEFAULT_BETA: f64 = 3.0;
pub const DEFAULT_WINDOW_FACTOR: usize = 2;
/// Layer-width cap for the aligner. Below the cap the chunk count is exact;
/// above it the search keeps the most promising states and the count becomes
/// an upper bound (`Alignment::exact` turns false).
pub const DEFAULT_BEAM_WIDTH: usize = 1024;

/// Normalized unigrams plus the character spans they came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
    spans: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Byte range of each token in the original text.
    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn from_tokens<S: Into<String>>(tokens: Vec<S>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let spans = tokens.iter().enumerate().map(|(i, _)| (i, i + 1)).collect();
        TokenSequence { tokens, spans }
    }
}

/// Lowercases, drops punctuation and symbol characters in place, and splits on
/// Unicode whitespace. Alphanumeric characters are the only ones kept, so a
/// word like `don't-stop` collapses to `dontstop`.
pub fn normalize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    let mut end = 0usize;

    let mut flush = |current: &mut String, start: usize, end: usize| {
        if !current.is_empty() {
            tokens.push(std::mem::take(current));
            spans.push((start, end));
        }
    };

    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            flush(&mut current, start, end);
        } else if ch.is_alphanumeric() {
            if current.is_empty() {
                start = idx;
            }
            current.extend(ch.to_lowercase());
            end = idx + ch.len_utf8();
        }
    }
    flush(&mut current, start, end);

    TokenSequence { tokens, spans }
}

/// Result of aligning a query against a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    /// Matched unigram pairs (maximum cardinality).
    pub matched: usize,
    /// Fewest chunks over maximum-cardinality alignments, or an upper bound
    /// when `exact` is false.
    pub chunks: usize,
    pub exact: bool,
}

/// Maximum-cardinality exact-unigram alignment with chunk minimization.
pub fn meteor_align(query: &TokenSequence, window: &TokenSequence) -> Alignment {
    meteor_align_with_beam(query, window, DEFAULT_BEAM_WIDTH)
}

pub fn meteor_align_with_beam(
    query: &TokenSequence,
    window: &TokenSequence,
    beam_width: usize,
) -> Alignment {
    let (qid, wid) = intern(query.tokens(), window.tokens());
    align_ids(&qid, &wid, beam_width)
}

fn intern(query: &[String], window: &[String]) -> (Vec<u32>, Vec<u32>) {
    let mut table: HashMap<&str, u32> = HashMap::new();
    let mut qid = Vec::with_capacity(query.len());
    let mut wid = Vec::with_capacity(window.len());
    for tok in query {
        let next = table.len() as u32;
        qid.push(*table.entry(tok.as_str()).or_insert(next));
    }
    for tok in window {
        let next = table.len() as u32;
        wid.push(*table.entry(tok.as_str()).or_insert(next));
    }
    (qid, wid)
}

const NO_LAST: u32 = u32::MAX;

#[derive(Clone, PartialEq, Eq, Hash)]
struct StateKey {
    mask: Box<[u64]>,
    last: u32,
}

/// Layered search over query positions. A state is the set of consumed window
/// slots plus the window position matched at the previous query token; states
/// are deduplicated on that pair keeping the fewest chunks. Feasibility
/// pruning keeps every surviving path extendable to the maximum cardinality,
/// so the final layer holds exactly the maximum-m alignments.
fn align_ids(qid: &[u32], wid: &[u32], beam_width: usize) -> Alignment {
    let type_count = qid
        .iter()
        .chain(wid.iter())
        .map(|&t| t as usize + 1)
        .max()
        .unwrap_or(0);
    let mut count_q = vec![0u32; type_count];
    let mut count_w = vec![0u32; type_count];
    for &t in qid {
        count_q[t as usize] += 1;
    }
    for &t in wid {
        count_w[t as usize] += 1;
    }
    let quota: Vec<u32> = (0..type_count)
        .map(|t| count_q[t].min(count_w[t]))
        .collect();
    let max_matched: u32 = quota.iter().sum();
    if max_matched == 0 {
        return Alignment {
            matched: 0,
            chunks: 0,
            exact: true,
        };
    }

    // Window slots restricted to types that can match at all.
    let mut slot_orig: Vec<u32> = Vec::new();
    let mut slots_of_type: Vec<Vec<u32>> = vec![Vec::new(); type_count];
    for (j, &t) in wid.iter().enumerate() {
        if quota[t as usize] > 0 {
            let slot = slot_orig.len() as u32;
            slots_of_type[t as usize].push(slot);
            slot_orig.push(j as u32);
        }
    }
    let words = slot_orig.len().div_ceil(64).max(1);
    let mut type_mask: Vec<Box<[u64]>> = vec![vec![0u64; words].into_boxed_slice(); type_count];
    for (t, slots) in slots_of_type.iter().enumerate() {
        for &s in slots {
            type_mask[t][s as usize / 64] |= 1 << (s % 64);
        }
    }

    // Occurrences of qid[i] strictly after position i.
    let mut suffix_after = vec![0u32; qid.len()];
    let mut seen = vec![0u32; type_count];
    for (i, &t) in qid.iter().enumerate().rev() {
        suffix_after[i] = seen[t as usize];
        seen[t as usize] += 1;
    }

    let mut layer: HashMap<StateKey, u32> = HashMap::new();
    layer.insert(
        StateKey {
            mask: vec![0u64; words].into_boxed_slice(),
            last: NO_LAST,
        },
        0,
    );
    let mut exact = true;

    for (i, &t) in qid.iter().enumerate() {
        let t = t as usize;
        let mut next: HashMap<StateKey, u32> = HashMap::with_capacity(layer.len() * 2);
        let upsert = |key: StateKey, chunks: u32, next: &mut HashMap<StateKey, u32>| {
            next.entry(key)
                .and_modify(|c| *c = (*c).min(chunks))
                .or_insert(chunks);
        };

        for (key, &chunks) in &layer {
            let matched_t = if quota[t] > 0 {
                popcount_and(&key.mask, &type_mask[t])
            } else {
                0
            };
            // Skipping this occurrence must leave enough later occurrences to
            // still fill the type's quota.
            if quota[t].saturating_sub(matched_t) <= suffix_after[i] {
                upsert(
                    StateKey {
                        mask: key.mask.clone(),
                        last: NO_LAST,
                    },
                    chunks,
                    &mut next,
                );
            }
            for &slot in &slots_of_type[t] {
                let (w, b) = (slot as usize / 64, slot % 64);
                if key.mask[w] & (1 << b) != 0 {
                    continue;
                }
                let orig = slot_orig[slot as usize];
                let extends = key.last != NO_LAST && orig == key.last + 1;
                let mut mask = key.mask.clone();
                mask[w] |= 1 << b;
                upsert(
                    StateKey { mask, last: orig },
                    chunks + if extends { 0 } else { 1 },
                    &mut next,
                );
            }
        }

        if next.len() > beam_width {
            exact = false;
            let mut states: Vec<(StateKey, u32)> = next.into_iter().collect();
            states.sort_unstable_by(|a, b| {
                a.1.cmp(&b.1)
                    .then_with(|| a.0.mask.cmp(&b.0.mask))
                    .then_with(|| a.0.last.cmp(&b.0.last))
            });
            states.truncate(beam_width);
            next = states.into_iter().collect();
        }
        layer = next;
    }

    let chunks = layer.values().copied().min().unwrap_or(0);
    debug_assert!(layer
        .keys()
        .all(|k| k.mask.iter().map(|w| w.count_ones()).sum::<u32>() == max_matched));
    Alignment {
        matched: max_matched as usize,
        chunks: chunks as usize,
        exact,
    }
}

fn popcount_and(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

/// Scoring knobs. `stride = None` means `max(1, |query| / 4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub gamma: f64,
    pub beta: f64,
    pub window_factor: usize,
    pub stride: Option<usize>,
    pub beam_width: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
            window_factor: DEFAULT_WINDOW_FACTOR,
            stride: None,
            beam_width: DEFAULT_BEAM_WIDTH,
        }
    }
}

/// Scores for one window of a page.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    /// Token offsets into the page.
    pub window_start: usize,
    pub window_end: usize,
    pub matched_unigrams: usize,
    pub chunks: usize,
    pub raw_recall: f64,
    pub penalty: f64,
    pub penalized_recall: f64,
}

impl WindowScore {
    pub fn zero() -> Self {
        WindowScore {
            window_start: 0,
            window_end: 0,
            matched_unigrams: 0,
            chunks: 0,
            raw_recall: 0.0,
            penalty: 0.0,
            penalized_recall: 0.0,
        }
    }
}

fn score_from_alignment(
    al: Alignment,
    query_len: usize,
    start: usize,
    end: usize,
    params: &MatchParams,
) -> WindowScore {
    if al.matched == 0 || query_len == 0 {
        return WindowScore {
            window_start: start,
            window_end: end,
            ..WindowScore::zero()
        };
    }
    let raw = al.matched as f64 / query_len as f64;
    let penalty = params.gamma * (al.chunks as f64 / al.matched as f64).powf(params.beta);
    WindowScore {
        window_start: start,
        window_end: end,
        matched_unigrams: al.matched,
        chunks: al.chunks,
        raw_recall: raw,
        penalty,
        penalized_recall: raw * (1.0 - penalty),
    }
}

/// Scores the query against one window. The caller keeps the window within
/// `window_factor * |query|` tokens.
pub fn score_window(
    query: &TokenSequence,
    window: &TokenSequence,
    params: &MatchParams,
) -> WindowScore {
    let al = meteor_align_with_beam(query, window, params.beam_width);
    score_from_alignment(al, query.len(), 0, window.len(), params)
}

/// Slides a window of `min(window_factor * |query|, |page|)` tokens over the
/// page at the configured stride (the final position is always evaluated) and
/// returns the best-scoring window. Ties keep the smallest start.
pub fn best_window_score(
    query: &TokenSequence,
    page: &TokenSequence,
    params: &MatchParams,
) -> WindowScore {
    if query.is_empty() || page.is_empty() {
        return WindowScore::zero();
    }
    let qn = query.len();
    let len = (params.window_factor * qn).min(page.len());
    let stride = params.stride.unwrap_or_else(|| (qn / 4).max(1)).max(1);
    let last_start = page.len() - len;

    let (qid, pid) = intern(query.tokens(), page.tokens());
    let mut best: Option<WindowScore> = None;
    let mut start = 0;
    loop {
        let al = align_ids(&qid, &pid[start..start + len], params.beam_width);
        let score = score_from_alignment(al, qn, start, start + len, params);
        if best
            .as_ref()
            .map(|b| score.penalized_recall > b.penalized_recall)
            .unwrap_or(true)
        {
            best = Some(score);
        }
        if start == last_start {
            break;
        }
        start = (start + stride).min(last_start);
    }
    best.unwrap_or_else(WindowScore::zero)
}

/// A scored alignment between one verbalized query and one page window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEvidence {
    pub query_variant: QueryVariant,
    pub url: String,
    #[serde(flatten)]
    pub score: WindowScore,
}

impl MatchEvidence {
    pub fn new(query_variant: QueryVariant, url: impl Into<String>, score: WindowScore) -> Self {
        MatchEvidence {
            query_variant,
            url: url.into(),
            score,
        }
    }
}
