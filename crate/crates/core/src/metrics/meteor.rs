use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};

use super::TokenizedText;

pub const METEOR_VARIANT: &str = "meteor_lite";
const ALPHA: f64 = 0.9;
const BETA: f64 = 3.0;
const GAMMA: f64 = 0.5;
/// Search nodes explored before settling for the best alignment found so far.
const NODE_BUDGET: usize = 200_000;

/// One-to-one unigram alignment as `(hyp index, ref index)` pairs sorted by
/// hyp index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
    pub exact: usize,
    pub chunks: usize,
}

/// Number of maximal runs of pairs adjacent on both sides.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        match prev {
            Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((i, j));
    }
    chunks
}

/// Interned surface-word and stem-class ids for both sides.
struct Vocab {
    hyp_word: Vec<usize>,
    hyp_class: Vec<usize>,
    ref_word: Vec<usize>,
    ref_class: Vec<usize>,
    n_words: usize,
    n_classes: usize,
}

impl Vocab {
    fn new(hyp: &[String], reference: &[String]) -> Self {
        let stemmer = Stemmer::create(Algorithm::English);
        let mut words: HashMap<String, usize> = HashMap::new();
        let mut classes: HashMap<String, usize> = HashMap::new();
        let mut intern = |toks: &[String]| -> (Vec<usize>, Vec<usize>) {
            toks.iter()
                .map(|t| {
                    let nw = words.len();
                    let w = *words.entry(t.clone()).or_insert(nw);
                    let nc = classes.len();
                    let c = *classes.entry(stemmer.stem(t).into_owned()).or_insert(nc);
                    (w, c)
                })
                .unzip()
        };
        let (hyp_word, hyp_class) = intern(hyp);
        let (ref_word, ref_class) = intern(reference);
        let (n_words, n_classes) = (words.len(), classes.len());
        Self { hyp_word, hyp_class, ref_word, ref_class, n_words, n_classes }
    }
}

fn counts(ids: &[usize], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for &i in ids {
        c[i] += 1;
    }
    c
}

/// Depth-first search over hyp positions for the alignment with the target
/// exact/stem pair counts and the fewest chunks.
struct Search<'a> {
    v: &'a Vocab,
    need_exact: Vec<usize>,
    need_exact_class: Vec<usize>,
    need_stem: Vec<usize>,
    need_total: usize,
    hyp_left_word: Vec<usize>,
    hyp_left_class: Vec<usize>,
    ref_free_word: Vec<usize>,
    ref_free_class: Vec<usize>,
    ref_used: Vec<bool>,
    refs_of_class: Vec<Vec<usize>>,
    pairs: Vec<(usize, usize)>,
    chunks: usize,
    best_chunks: usize,
    best: Vec<(usize, usize)>,
    nodes: usize,
}

impl Search<'_> {
    fn ok(&self, w: usize, c: usize) -> bool {
        let e = self.need_exact[w];
        let need_c = self.need_exact_class[c] + self.need_stem[c];
        e <= self.hyp_left_word[w].min(self.ref_free_word[w]) && need_c <= self.hyp_left_class[c].min(self.ref_free_class[c])
    }

    fn go(&mut self, i: usize) {
        self.nodes += 1;
        if self.need_total == 0 {
            if self.chunks < self.best_chunks {
                self.best_chunks = self.chunks;
                self.best = self.pairs.clone();
            }
            return;
        }
        if i == self.v.hyp_word.len() || self.nodes > NODE_BUDGET {
            return;
        }
        let continues_at = match self.pairs.last() {
            Some(&(pi, pj)) if pi + 1 == i => Some(pj + 1),
            _ => None,
        };
        let lower_bound = self.chunks + usize::from(continues_at.is_none());
        if lower_bound >= self.best_chunks {
            return;
        }
        let (w, c) = (self.v.hyp_word[i], self.v.hyp_class[i]);
        self.hyp_left_word[w] -= 1;
        self.hyp_left_class[c] -= 1;

        let mut candidates: Vec<usize> = self.refs_of_class[c]
            .iter()
            .copied()
            .filter(|&j| !self.ref_used[j])
            .filter(|&j| {
                if self.v.ref_word[j] == w {
                    self.need_exact[w] > 0
                } else {
                    self.need_stem[c] > 0
                }
            })
            .collect();
        if let Some(cj) = continues_at {
            if let Some(k) = candidates.iter().position(|&j| j == cj) {
                candidates[..=k].rotate_right(1);
            }
        }
        for j in candidates {
            let rw = self.v.ref_word[j];
            let exact = rw == w;
            self.ref_used[j] = true;
            self.ref_free_word[rw] -= 1;
            self.ref_free_class[c] -= 1;
            if exact {
                self.need_exact[w] -= 1;
                self.need_exact_class[c] -= 1;
            } else {
                self.need_stem[c] -= 1;
            }
            self.need_total -= 1;
            let new_chunk = continues_at != Some(j);
            self.chunks += usize::from(new_chunk);
            self.pairs.push((i, j));
            if self.ok(w, c) && self.ok(rw, c) {
                self.go(i + 1);
            }
            self.pairs.pop();
            self.chunks -= usize::from(new_chunk);
            self.need_total += 1;
            if exact {
                self.need_exact[w] += 1;
                self.need_exact_class[c] += 1;
            } else {
                self.need_stem[c] += 1;
            }
            self.ref_free_class[c] += 1;
            self.ref_free_word[rw] += 1;
            self.ref_used[j] = false;
        }
        if self.ok(w, c) {
            self.go(i + 1);
        }
        self.hyp_left_class[c] += 1;
        self.hyp_left_word[w] += 1;
    }
}

/// Maximum-match alignment over exact and stem matches. Among maximal
/// alignments it keeps as many exact matches as possible, then minimizes
/// chunks. The chunk search is exact up to a fixed node budget, after which
/// the best alignment found so far is returned.
pub fn align(hyp: &TokenizedText, reference: &TokenizedText) -> Alignment {
    let v = Vocab::new(&hyp.tokens, &reference.tokens);
    let hw = counts(&v.hyp_word, v.n_words);
    let rw = counts(&v.ref_word, v.n_words);
    let hc = counts(&v.hyp_class, v.n_classes);
    let rc = counts(&v.ref_class, v.n_classes);
    let need_exact: Vec<usize> = hw.iter().zip(&rw).map(|(a, b)| *a.min(b)).collect();
    let mut need_exact_class = vec![0; v.n_classes];
    let mut word_class = vec![0; v.n_words];
    for (&w, &c) in v.hyp_word.iter().zip(&v.hyp_class).chain(v.ref_word.iter().zip(&v.ref_class)) {
        word_class[w] = c;
    }
    for (w, &e) in need_exact.iter().enumerate() {
        need_exact_class[word_class[w]] += e;
    }
    let need_stem: Vec<usize> = (0..v.n_classes).map(|c| hc[c].min(rc[c]) - need_exact_class[c]).collect();
    let total_exact: usize = need_exact.iter().sum();
    let need_total = total_exact + need_stem.iter().sum::<usize>();

    // constructive seed: k-th occurrences paired in order, then leftovers
    let mut seed = Vec::with_capacity(need_total);
    let mut ref_pos_word: Vec<Vec<usize>> = vec![Vec::new(); v.n_words];
    for (j, &w) in v.ref_word.iter().enumerate() {
        ref_pos_word[w].push(j);
    }
    let mut taken_ref = vec![false; v.ref_word.len()];
    let mut taken_hyp = vec![false; v.hyp_word.len()];
    let mut seen = vec![0usize; v.n_words];
    for (i, &w) in v.hyp_word.iter().enumerate() {
        if seen[w] < need_exact[w] {
            let j = ref_pos_word[w][seen[w]];
            seen[w] += 1;
            seed.push((i, j));
            taken_ref[j] = true;
            taken_hyp[i] = true;
        }
    }
    let mut stem_left = need_stem.clone();
    for (i, &c) in v.hyp_class.iter().enumerate() {
        if taken_hyp[i] || stem_left[c] == 0 {
            continue;
        }
        if let Some(j) = (0..v.ref_class.len())
            .find(|&j| !taken_ref[j] && v.ref_class[j] == c && v.ref_word[j] != v.hyp_word[i])
        {
            taken_ref[j] = true;
            stem_left[c] -= 1;
            seed.push((i, j));
        }
    }
    seed.sort_unstable();

    let mut refs_of_class = vec![Vec::new(); v.n_classes];
    for (j, &c) in v.ref_class.iter().enumerate() {
        refs_of_class[c].push(j);
    }
    let mut s = Search {
        v: &v,
        need_exact,
        need_exact_class,
        need_stem,
        need_total,
        hyp_left_word: hw,
        hyp_left_class: hc,
        ref_free_word: rw,
        ref_free_class: rc,
        ref_used: vec![false; v.ref_word.len()],
        refs_of_class,
        pairs: Vec::with_capacity(need_total),
        chunks: 0,
        best_chunks: count_chunks(&seed),
        best: seed,
        nodes: 0,
    };
    if need_total > 0 && s.best_chunks > 1 {
        s.go(0);
    }
    let chunks = count_chunks(&s.best);
    Alignment { pairs: s.best, exact: total_exact, chunks }
}

/// METEOR restricted to exact and stem matching, alpha 0.9, beta 3, gamma 0.5.
pub fn meteor_lite(hyp: &TokenizedText, reference: &TokenizedText) -> f64 {
    let a = align(hyp, reference);
    meteor_from_counts(a.pairs.len(), a.chunks, hyp.len(), reference.len())
}

pub(crate) fn meteor_from_counts(matches: usize, chunks: usize, hyp_len: usize, ref_len: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / hyp_len as f64;
    let r = m / ref_len as f64;
    let fmean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (chunks as f64 / m).powf(BETA);
    fmean * (1.0 - penalty)
}
