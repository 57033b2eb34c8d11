//! Context-free grammar, CKY parsing and production-overlap similarity.
//!
//! Grammar file format:
//!
//! ```text
//! # comment
//! S -> NP VP | VP
//! NP -> DET N
//! DET : the a an
//! N : cat mat
//! ```
//!
//! Productions may have any number of right-hand symbols; they are binarized
//! internally and reported in their original form. Lexical productions
//! (`POS -> word`) are not counted when comparing parses. Words missing
//! from the lexicon are tagged by shape: digits `NUM`, `-ly` `ADV`,
//! `-ing`/`-ed` `V`, anything else `N`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lexical::multiset_jaccard;
use super::{read_file, MetricsError};
use crate::text::{sentences, tokenize};

pub const START: &str = "S";
const SHAPE_TAGS: [&str; 4] = ["NUM", "ADV", "V", "N"];
/// Longer sentences fall back to part-of-speech bigrams.
const MAX_PARSE_TOKENS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Production {
    lhs: String,
    rhs: Vec<String>,
}

impl Production {
    fn display(&self) -> String {
        format!("{} -> {}", self.lhs, self.rhs.join(" "))
    }
}

#[derive(Debug, Clone, Copy)]
struct Unary {
    lhs: usize,
    child: usize,
    prod: usize,
}

#[derive(Debug, Clone, Copy)]
struct Binary {
    lhs: usize,
    left: usize,
    right: usize,
    /// Source production, or `None` for the inner links of a binarized chain.
    prod: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
    /// Symbols introduced by binarization.
    virtual_sym: Vec<bool>,
    productions: Vec<Production>,
    unary: Vec<Unary>,
    binary: Vec<Binary>,
    lexicon: HashMap<String, Vec<usize>>,
    start: usize,
}

#[derive(Debug, Clone, Copy)]
enum Back {
    Leaf,
    Unary { rule: usize, child: usize },
    Binary { rule: usize, split: usize },
}

/// A successful parse: productions used (with multiplicity) and a bracketed tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parse {
    pub productions: BTreeMap<String, usize>,
    pub tree: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntaxOverlap {
    pub value: f64,
    /// At least one sentence failed to parse; the value is a POS-bigram overlap.
    pub fallback: bool,
}

impl Grammar {
    pub fn bundled() -> Self {
        Self::parse(crate::defaults::GRAMMAR).expect("bundled grammar is valid")
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        Self::parse(&read_file(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut productions = Vec::new();
        let mut lex_lines: Vec<(usize, String, Vec<String>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| MetricsError::Grammar { line: line_no, message: message.to_string() };
            if let Some((lhs, rhs)) = line.split_once("->") {
                let lhs = lhs.trim();
                if lhs.is_empty() || lhs.contains(char::is_whitespace) {
                    return Err(err("left-hand side must be one symbol"));
                }
                for alt in rhs.split('|') {
                    let syms: Vec<String> = alt.split_whitespace().map(str::to_string).collect();
                    if syms.is_empty() {
                        return Err(err("empty alternative"));
                    }
                    productions.push((line_no, Production { lhs: lhs.to_string(), rhs: syms }));
                }
            } else if let Some((pos, words)) = line.split_once(':') {
                let pos = pos.trim();
                if pos.is_empty() || pos.contains(char::is_whitespace) {
                    return Err(err("part-of-speech tag must be one symbol"));
                }
                lex_lines.push((line_no, pos.to_string(), words.split_whitespace().map(str::to_lowercase).collect()));
            } else {
                return Err(err("expected `A -> B C` or `POS : words`"));
            }
        }

        let mut g = Grammar {
            symbols: Vec::new(),
            index: HashMap::new(),
            virtual_sym: Vec::new(),
            productions: Vec::new(),
            unary: Vec::new(),
            binary: Vec::new(),
            lexicon: HashMap::new(),
            start: 0,
        };
        let nonterminals: Vec<String> = productions.iter().map(|(_, p)| p.lhs.clone()).collect();
        let mut pos_tags: Vec<String> = lex_lines.iter().map(|(_, p, _)| p.clone()).collect();
        pos_tags.extend(SHAPE_TAGS.iter().map(|s| s.to_string()));
        for (line, pos, _) in &lex_lines {
            if nonterminals.contains(pos) {
                return Err(MetricsError::Grammar {
                    line: *line,
                    message: format!("{pos} is both a phrase symbol and a part-of-speech tag"),
                });
            }
        }
        if !nonterminals.iter().any(|n| n == START) {
            return Err(MetricsError::Grammar { line: 0, message: "no production for start symbol S".into() });
        }
        for (line, p) in &productions {
            for s in &p.rhs {
                if !nonterminals.contains(s) && !pos_tags.contains(s) {
                    return Err(MetricsError::Grammar { line: *line, message: format!("undefined symbol {s}") });
                }
            }
        }
        for (_, pos, words) in &lex_lines {
            let tag = g.symbol(pos, false);
            for w in words {
                let tags = g.lexicon.entry(w.clone()).or_default();
                if !tags.contains(&tag) {
                    tags.push(tag);
                }
            }
        }
        for s in SHAPE_TAGS {
            g.symbol(s, false);
        }
        for (_, p) in productions {
            let id = g.productions.len();
            let lhs = g.symbol(&p.lhs, false);
            let rhs: Vec<usize> = p.rhs.iter().map(|s| g.symbol(s, false)).collect();
            match rhs.len() {
                1 => g.unary.push(Unary { lhs, child: rhs[0], prod: id }),
                2 => g.binary.push(Binary { lhs, left: rhs[0], right: rhs[1], prod: Some(id) }),
                n => {
                    let mut head = lhs;
                    for (k, &left) in rhs[..n - 2].iter().enumerate() {
                        let v = g.symbol(&format!("{}@{id}.{k}", p.lhs), true);
                        g.binary.push(Binary { lhs: head, left, right: v, prod: (k == 0).then_some(id) });
                        head = v;
                    }
                    g.binary.push(Binary { lhs: head, left: rhs[n - 2], right: rhs[n - 1], prod: None });
                }
            }
            g.productions.push(p);
        }
        g.start = g.index[START];
        Ok(g)
    }

    fn symbol(&mut self, name: &str, is_virtual: bool) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.symbols.len();
        self.symbols.push(name.to_string());
        self.virtual_sym.push(is_virtual);
        self.index.insert(name.to_string(), i);
        i
    }

    /// Candidate tags for a lower-cased token.
    fn tags(&self, word: &str) -> Vec<usize> {
        if let Some(t) = self.lexicon.get(word) {
            return t.clone();
        }
        let shape = if word.chars().all(|c| c.is_ascii_digit()) {
            "NUM"
        } else if word.ends_with("ly") {
            "ADV"
        } else if word.ends_with("ing") || word.ends_with("ed") {
            "V"
        } else {
            "N"
        };
        vec![self.index[shape]]
    }

    /// The first tag of each token.
    pub fn pos_sequence(&self, tokens: &[String]) -> Vec<String> {
        tokens.iter().map(|t| self.symbols[self.tags(t)[0]].clone()).collect()
    }

    fn close_unary(&self, cell: &mut [Option<Back>]) {
        loop {
            let mut changed = false;
            for (r, u) in self.unary.iter().enumerate() {
                if cell[u.child].is_some() && cell[u.lhs].is_none() {
                    cell[u.lhs] = Some(Back::Unary { rule: r, child: u.child });
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// CKY parse of a token sequence. When several parses exist, the one
    /// found first (shortest spans, left-most split, file order) is kept.
    pub fn parse_tokens(&self, tokens: &[String]) -> Option<Parse> {
        let n = tokens.len();
        if n == 0 || n > MAX_PARSE_TOKENS {
            return None;
        }
        let ns = self.symbols.len();
        let idx = |i: usize, j: usize| i * (n + 1) + j;
        let mut chart: Vec<Vec<Option<Back>>> = vec![Vec::new(); (n + 1) * (n + 1)];
        for (i, t) in tokens.iter().enumerate() {
            let mut cell = vec![None; ns];
            for tag in self.tags(t) {
                cell[tag].get_or_insert(Back::Leaf);
            }
            self.close_unary(&mut cell);
            chart[idx(i, i + 1)] = cell;
        }
        for len in 2..=n {
            for i in 0..=n - len {
                let j = i + len;
                let mut cell = vec![None; ns];
                for k in i + 1..j {
                    let (left, right) = (&chart[idx(i, k)], &chart[idx(k, j)]);
                    for (r, b) in self.binary.iter().enumerate() {
                        if cell[b.lhs].is_none() && left[b.left].is_some() && right[b.right].is_some() {
                            cell[b.lhs] = Some(Back::Binary { rule: r, split: k });
                        }
                    }
                }
                self.close_unary(&mut cell);
                chart[idx(i, j)] = cell;
            }
        }
        chart[idx(0, n)][self.start]?;

        let mut productions = BTreeMap::new();
        let children = self.walk(&chart, &idx, tokens, self.start, 0, n, &mut productions);
        Some(Parse { productions, tree: children.join(" ") })
    }

    /// Returns the bracketed subtree(s) for `sym` over `[i, j)`; virtual
    /// symbols return their children so they splice into the parent.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        chart: &[Vec<Option<Back>>],
        idx: &dyn Fn(usize, usize) -> usize,
        tokens: &[String],
        sym: usize,
        i: usize,
        j: usize,
        out: &mut BTreeMap<String, usize>,
    ) -> Vec<String> {
        let back = chart[idx(i, j)][sym].expect("backpointer exists for derived symbol");
        let inner: Vec<String> = match back {
            Back::Leaf => vec![tokens[i].clone()],
            Back::Unary { rule, child } => {
                *out.entry(self.productions[self.unary[rule].prod].display()).or_default() += 1;
                self.walk(chart, idx, tokens, child, i, j, out)
            }
            Back::Binary { rule, split } => {
                let b = self.binary[rule];
                if let Some(p) = b.prod {
                    *out.entry(self.productions[p].display()).or_default() += 1;
                }
                let mut v = self.walk(chart, idx, tokens, b.left, i, split, out);
                v.extend(self.walk(chart, idx, tokens, b.right, split, j, out));
                v
            }
        };
        if self.virtual_sym[sym] {
            inner
        } else {
            vec![format!("({} {})", self.symbols[sym], inner.join(" "))]
        }
    }

    pub fn parse_text(&self, sentence: &str) -> Option<Parse> {
        self.parse_tokens(&tokenize(sentence))
    }
}

fn pos_bigrams(grammar: &Grammar, tokens: &[String]) -> BTreeMap<String, usize> {
    let tags = grammar.pos_sequence(tokens);
    let mut out = BTreeMap::new();
    let mut prev = "<s>".to_string();
    for t in tags {
        *out.entry(format!("{prev} {t}")).or_default() += 1;
        prev = t;
    }
    out
}

/// Production-multiset Jaccard between the parses of two sentences; POS
/// bigram Jaccard (flagged) when either fails to parse.
pub fn syntax_overlap(a: &str, b: &str, grammar: &Grammar) -> SyntaxOverlap {
    let (ta, tb) = (tokenize(a), tokenize(b));
    match (grammar.parse_tokens(&ta), grammar.parse_tokens(&tb)) {
        (Some(pa), Some(pb)) => {
            SyntaxOverlap { value: multiset_jaccard(&pa.productions, &pb.productions), fallback: false }
        }
        _ => SyntaxOverlap {
            value: multiset_jaccard(&pos_bigrams(grammar, &ta), &pos_bigrams(grammar, &tb)),
            fallback: true,
        },
    }
}

/// Multi-sentence syntactic profile: production counts (`P:` prefix) from
/// every sentence that parses and POS-bigram counts (`B:` prefix) from the rest.
pub fn syntax_features(text: &str, grammar: &Grammar) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in sentences(text) {
        let tokens = tokenize(&s);
        match grammar.parse_tokens(&tokens) {
            Some(p) => {
                for (k, c) in p.productions {
                    *out.entry(format!("P:{k}")).or_default() += c;
                }
            }
            None => {
                for (k, c) in pos_bigrams(grammar, &tokens) {
                    *out.entry(format!("B:{k}")).or_default() += c;
                }
            }
        }
    }
    out
}

pub fn text_syntax_similarity(a: &str, b: &str, grammar: &Grammar) -> f64 {
    multiset_jaccard(&syntax_features(a, grammar), &syntax_features(b, grammar))
}
