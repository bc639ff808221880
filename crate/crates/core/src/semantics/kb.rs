//! Lexical knowledge base: tf-idf vectors plus keyword overlap.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SemanticsError;

/// Entries longer than this many tokens are split into several chunks.
pub const CHUNK_TOKENS: usize = 512;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub class_name: String,
    pub keywords: Vec<String>,
    pub is_dynamic: bool,
    pub min_safe_altitude: f64,
    pub buffer_radius: f64,
    pub text: String,
}

impl KnowledgeEntry {
    pub fn validate(&self) -> Result<(), String> {
        if self.keywords.iter().all(|k| tokenize(k).is_empty()) {
            return Err(format!("entry '{}' has no keywords", self.class_name));
        }
        if !(self.min_safe_altitude >= 0.0 && self.min_safe_altitude.is_finite()) {
            return Err(format!(
                "entry '{}': min_safe_altitude must be >= 0",
                self.class_name
            ));
        }
        if !(0.0..=10.0).contains(&self.buffer_radius) {
            return Err(format!(
                "entry '{}': buffer_radius must be in [0, 10]",
                self.class_name
            ));
        }
        Ok(())
    }
}

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Sparse vector sorted by term id.
type SparseVec = Vec<(usize, f64)>;

fn dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
struct Chunk {
    entry: usize,
    vector: SparseVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    entries: Vec<KnowledgeEntry>,
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
    inverted: BTreeMap<String, Vec<usize>>,
    chunks: Vec<Chunk>,
    /// Tokenized keywords per entry; a keyword matches when all its tokens occur.
    keyword_tokens: Vec<Vec<Vec<String>>>,
    alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retrieved {
    pub id: usize,
    pub class_name: String,
    pub score: f64,
    pub cosine: f64,
    pub overlap: f64,
}

fn entry_tokens(e: &KnowledgeEntry) -> Vec<String> {
    let mut t = tokenize(&e.class_name);
    for k in &e.keywords {
        t.extend(tokenize(k));
    }
    t.extend(tokenize(&e.text));
    t
}

impl KnowledgeBase {
    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Entry ids containing `term`.
    pub fn postings(&self, term: &str) -> &[usize] {
        self.inverted.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    fn weigh(&self, tokens: &[String]) -> SparseVec {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(&id) = self.vocab.get(t) {
                *tf.entry(id).or_insert(0.0) += 1.0;
            }
        }
        let mut v: SparseVec = tf
            .into_iter()
            .map(|(id, c)| (id, c * self.idf[id]))
            .collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }

    /// tf-idf cosine between `text` and entry `id` (best chunk).
    pub fn cosine(&self, text: &str, id: usize) -> f64 {
        let q = self.weigh(&tokenize(text));
        self.chunks
            .iter()
            .filter(|c| c.entry == id)
            .map(|c| dot(&q, &c.vector))
            .fold(0.0, f64::max)
    }

    /// Fraction of entry `id`'s keywords present in the token set.
    fn overlap(&self, tokens: &BTreeSet<String>, id: usize) -> f64 {
        let kws = &self.keyword_tokens[id];
        let hit = kws
            .iter()
            .filter(|k| k.iter().all(|t| tokens.contains(t)))
            .count();
        hit as f64 / kws.len() as f64
    }

    /// Norm of each chunk vector.
    pub fn chunk_norms(&self) -> Vec<f64> {
        self.chunks
            .iter()
            .map(|c| c.vector.iter().map(|(_, w)| w * w).sum::<f64>().sqrt())
            .collect()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }
}

/// Build the index with the default hybrid weight.
pub fn index(entries: Vec<KnowledgeEntry>) -> Result<KnowledgeBase, SemanticsError> {
    index_with_alpha(entries, 0.5)
}

pub fn index_with_alpha(
    entries: Vec<KnowledgeEntry>,
    alpha: f64,
) -> Result<KnowledgeBase, SemanticsError> {
    if entries.is_empty() {
        return Err(SemanticsError::EmptyKnowledgeBase);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SemanticsError::InvalidEntry(format!(
            "hybrid weight {alpha} outside [0, 1]"
        )));
    }
    for e in &entries {
        e.validate().map_err(SemanticsError::InvalidEntry)?;
    }

    let mut docs: Vec<(usize, Vec<String>)> = Vec::new();
    for (id, e) in entries.iter().enumerate() {
        let tokens = entry_tokens(e);
        for piece in tokens.chunks(CHUNK_TOKENS) {
            docs.push((id, piece.to_vec()));
        }
    }
    let mut vocab = BTreeMap::new();
    let mut inverted: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (id, tokens) in &docs {
        for t in tokens {
            let next = vocab.len();
            vocab.entry(t.clone()).or_insert(next);
            let list = inverted.entry(t.clone()).or_default();
            if list.last() != Some(id) {
                list.push(*id);
            }
        }
    }
    let mut df = vec![0usize; vocab.len()];
    for (_, tokens) in &docs {
        let uniq: BTreeSet<&String> = tokens.iter().collect();
        for t in uniq {
            df[vocab[t]] += 1;
        }
    }
    let n = docs.len() as f64;
    let idf = df
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let keyword_tokens = entries
        .iter()
        .map(|e| {
            e.keywords
                .iter()
                .map(|k| tokenize(k))
                .filter(|k| !k.is_empty())
                .collect()
        })
        .collect();
    let mut kb = KnowledgeBase {
        entries,
        vocab,
        idf,
        inverted,
        chunks: Vec::new(),
        keyword_tokens,
        alpha,
    };
    kb.chunks = docs
        .iter()
        .map(|(id, tokens)| Chunk {
            entry: *id,
            vector: kb.weigh(tokens),
        })
        .collect();
    Ok(kb)
}

/// Hybrid retrieval: `alpha * cosine + (1 - alpha) * keyword overlap`,
/// sorted by descending score with ties broken by entry id.
pub fn retrieve(kb: &KnowledgeBase, caption: &str, k: usize) -> Vec<Retrieved> {
    let tokens = tokenize(caption);
    let q = kb.weigh(&tokens);
    let set: BTreeSet<String> = tokens.into_iter().collect();
    let mut best_cos = vec![0.0_f64; kb.entries.len()];
    for c in &kb.chunks {
        best_cos[c.entry] = best_cos[c.entry].max(dot(&q, &c.vector));
    }
    let mut scored: Vec<Retrieved> = kb
        .entries
        .iter()
        .enumerate()
        .map(|(id, e)| {
            let overlap = kb.overlap(&set, id);
            Retrieved {
                id,
                class_name: e.class_name.clone(),
                score: kb.alpha * best_cos[id] + (1.0 - kb.alpha) * overlap,
                cosine: best_cos[id],
                overlap,
            }
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    scored.truncate(k.max(1).min(kb.entries.len()));
    scored
}

/// The knowledge base shipped with the crate.
pub fn default_entries() -> Vec<KnowledgeEntry> {
    serde_json::from_str(include_str!("../../data/kb_default.json"))
        .expect("bundled knowledge base is valid JSON")
}

pub fn load_entries(json: &str) -> Result<Vec<KnowledgeEntry>, SemanticsError> {
    serde_json::from_str(json).map_err(|e| SemanticsError::InvalidEntry(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, keywords: &[&str], text: &str) -> KnowledgeEntry {
        KnowledgeEntry {
            class_name: name.into(),
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            is_dynamic: false,
            min_safe_altitude: 0.0,
            buffer_radius: 1.0,
            text: text.into(),
        }
    }

    #[test]
    fn tokenizes_lowercase_alnum() {
        assert_eq!(
            tokenize("A Person, walking!! 3m"),
            vec!["a", "person", "walking", "3m"]
        );
        assert!(tokenize("  ,,; ").is_empty());
    }

    #[test]
    fn single_entry_has_unit_norm() {
        let kb = index(vec![entry("rock", &["rock"], "a grey rock")]).unwrap();
        for n in kb.chunk_norms() {
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_entries_have_zero_cosine() {
        let kb = index(vec![
            entry("rock", &["rock"], "stone"),
            entry("tree", &["tree"], "leaves"),
        ])
        .unwrap();
        assert_eq!(kb.cosine("rock stone", 1), 0.0);
        assert!(kb.cosine("rock stone", 0) > 0.0);
    }

    #[test]
    fn empty_kb_is_an_error() {
        assert_eq!(index(vec![]), Err(SemanticsError::EmptyKnowledgeBase));
    }

    #[test]
    fn pedestrian_ranks_first() {
        let kb = index(default_entries()).unwrap();
        let top = retrieve(&kb, "a person walking across the field", 3);
        assert_eq!(top.len(), 3);
        assert_eq!(top[0].class_name, "pedestrian");
    }

    #[test]
    fn unknown_terms_score_zero_in_id_order() {
        let kb = index(default_entries()).unwrap();
        let top = retrieve(&kb, "zzz qqq", 3);
        assert!(top.iter().all(|r| r.score == 0.0));
        assert_eq!(top.iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn long_entries_are_chunked() {
        let long = "word ".repeat(CHUNK_TOKENS + 10);
        let kb = index(vec![entry("long", &["word"], &long)]).unwrap();
        assert_eq!(kb.chunk_count(), 2);
    }

    #[test]
    fn inverted_index_covers_entries() {
        let kb = index(default_entries()).unwrap();
        assert_eq!(kb.postings("person"), &[0]);
        for id in 0..kb.entries().len() {
            assert!(kb.entries()[id]
                .keywords
                .iter()
                .any(|k| tokenize(k).iter().all(|t| kb.postings(t).contains(&id))));
        }
    }
}
