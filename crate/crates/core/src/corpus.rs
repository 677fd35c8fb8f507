//! Sparse bag-of-words corpora with attached responses.
//!
//! Two line-oriented text formats are understood:
//!
//! * `svmlight-counts`: one document per line, `<label> <termIdx>:<count> ...`,
//!   whitespace separated; `#` starts a comment.
//! * `uci-bow`: three header lines `D`, `V`, `NNZ` followed by
//!   `docId termId count` triples with 1-based ids. Labels live in a separate
//!   file with one label token per line.
//!
//! Label tokens: `+1`/`-1` for binary, non-negative integers for classes,
//! comma-separated integers for label sets (`-` is the empty set) and decimal
//! numbers for real responses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::randkit::RngFactory;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabMap {
    terms: Vec<String>,
}

impl VocabMap {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(terms.len());
        for t in &terms {
            if !seen.insert(t.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Self { terms })
    }

    /// Vocabulary whose terms are named by their index.
    pub fn anonymous(size: usize) -> Self {
        Self { terms: (0..size).map(|i| i.to_string()).collect() }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: usize,
    pub tokens: Vec<usize>,
}

impl Document {
    pub fn new(doc_id: usize, tokens: Vec<usize>) -> Self {
        Self { doc_id, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Term multiset as sorted `(term, count)` pairs.
    pub fn term_counts(&self) -> Vec<(usize, usize)> {
        let mut counts = BTreeMap::new();
        for &t in &self.tokens {
            *counts.entry(t).or_insert(0usize) += 1;
        }
        counts.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Binary,
    Real,
    Class,
    MultiLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Binary(i8),
    Real(f64),
    Class(usize),
    Labels(Vec<usize>),
}

impl Response {
    pub fn kind(&self) -> LabelKind {
        match self {
            Response::Binary(_) => LabelKind::Binary,
            Response::Real(_) => LabelKind::Real,
            Response::Class(_) => LabelKind::Class,
            Response::Labels(_) => LabelKind::MultiLabel,
        }
    }

    pub fn parse(token: &str, kind: LabelKind) -> Option<Self> {
        match kind {
            LabelKind::Binary => match token {
                "+1" | "1" => Some(Response::Binary(1)),
                "-1" => Some(Response::Binary(-1)),
                _ => None,
            },
            LabelKind::Real => token.parse::<f64>().ok().filter(|v| v.is_finite()).map(Response::Real),
            LabelKind::Class => token.parse::<usize>().ok().map(Response::Class),
            LabelKind::MultiLabel => {
                if token == "-" {
                    return Some(Response::Labels(Vec::new()));
                }
                let mut labels = token
                    .split(',')
                    .map(|s| s.parse::<usize>().ok())
                    .collect::<Option<Vec<_>>>()?;
                labels.sort_unstable();
                labels.dedup();
                Some(Response::Labels(labels))
            }
        }
    }

    /// Textual token accepted by [`Response::parse`].
    pub fn token(&self) -> String {
        match self {
            Response::Binary(y) if *y > 0 => "+1".to_string(),
            Response::Binary(_) => "-1".to_string(),
            Response::Real(v) => format!("{v:?}"),
            Response::Class(c) => c.to_string(),
            Response::Labels(ls) if ls.is_empty() => "-".to_string(),
            Response::Labels(ls) => ls.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub vocab: VocabMap,
    pub docs: Vec<Document>,
    pub responses: Vec<Response>,
}

impl LabeledCorpus {
    /// Builds a corpus, rejecting out-of-range tokens, length mismatches and
    /// mixed response variants.
    pub fn new(vocab: VocabMap, docs: Vec<Document>, responses: Vec<Response>) -> Result<Self> {
        if docs.len() != responses.len() {
            return Err(Error::Response(format!(
                "{} documents but {} responses",
                docs.len(),
                responses.len()
            )));
        }
        let v = vocab.len();
        for doc in &docs {
            if let Some(&bad) = doc.tokens.iter().find(|&&t| t >= v) {
                return Err(Error::TermOutOfRange { index: bad, vocab: v });
            }
        }
        if let Some(first) = responses.first() {
            if responses.iter().any(|r| r.kind() != first.kind()) {
                return Err(Error::Response("mixed response variants".into()));
            }
        }
        Ok(Self { vocab, docs, responses })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(Document::len).sum()
    }

    pub fn label_kind(&self) -> Option<LabelKind> {
        self.responses.first().map(Response::kind)
    }

    /// Sub-corpus with the given document positions, sharing the vocabulary.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            vocab: self.vocab.clone(),
            docs: positions.iter().map(|&i| self.docs[i].clone()).collect(),
            responses: positions.iter().map(|&i| self.responses[i].clone()).collect(),
        }
    }

    pub fn binary_labels(&self) -> Result<Vec<f64>> {
        self.responses
            .iter()
            .map(|r| match r {
                Response::Binary(y) => Ok(f64::from(*y)),
                other => Err(Error::Response(format!("expected binary label, found {other:?}"))),
            })
            .collect()
    }

    pub fn real_responses(&self) -> Result<Vec<f64>> {
        self.responses
            .iter()
            .map(|r| match r {
                Response::Real(v) => Ok(*v),
                other => Err(Error::Response(format!("expected real response, found {other:?}"))),
            })
            .collect()
    }

    /// Serializes to `svmlight-counts`.
    pub fn to_svmlight(&self) -> String {
        let mut out = String::new();
        for (doc, resp) in self.docs.iter().zip(&self.responses) {
            out.push_str(&resp.token());
            for (t, n) in doc.term_counts() {
                let _ = write!(out, " {t}:{n}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save_svmlight(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_svmlight())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    UciBow,
    SvmlightCounts,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uci-bow" => Ok(Format::UciBow),
            "svmlight-counts" | "svmlight" => Ok(Format::SvmlightCounts),
            other => Err(Error::InvalidParameter(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub format: Format,
    pub label_kind: LabelKind,
    /// Declared vocabulary size. For svmlight input without it, `V` is one
    /// past the largest index seen.
    pub vocab_size: Option<usize>,
    /// Label file for `uci-bow` input, one token per line.
    pub labels_path: Option<std::path::PathBuf>,
}

impl LoadOptions {
    pub fn svmlight(label_kind: LabelKind) -> Self {
        Self { format: Format::SvmlightCounts, label_kind, vocab_size: None, labels_path: None }
    }
}

pub fn load_bow(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LabeledCorpus> {
    let text = fs::read_to_string(path)?;
    match opts.format {
        Format::SvmlightCounts => parse_svmlight(&text, opts.label_kind, opts.vocab_size),
        Format::UciBow => {
            let labels_path = opts.labels_path.as_ref().ok_or_else(|| {
                Error::InvalidParameter("uci-bow input needs a labels file".into())
            })?;
            let labels = fs::read_to_string(labels_path)?;
            parse_uci_bow(&text, &labels, opts.label_kind)
        }
    }
}

pub fn parse_svmlight(text: &str, kind: LabelKind, vocab_size: Option<usize>) -> Result<LabeledCorpus> {
    let mut docs = Vec::new();
    let mut responses = Vec::new();
    let mut max_index = None::<usize>;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let label = fields.next().expect("non-empty line has a field");
        let response = Response::parse(label, kind)
            .ok_or_else(|| Error::Parse { line, msg: format!("unknown label token {label:?}") })?;
        let mut counts = BTreeMap::new();
        for field in fields {
            let (idx, count) = field
                .split_once(':')
                .ok_or_else(|| Error::Parse { line, msg: format!("expected idx:count, found {field:?}") })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("bad term index {idx:?}") })?;
            let count: usize = count
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("bad count {count:?}") })?;
            if let Some(v) = vocab_size {
                if idx >= v {
                    return Err(Error::Parse {
                        line,
                        msg: format!("term index {idx} >= declared vocabulary size {v}"),
                    });
                }
            }
            max_index = Some(max_index.map_or(idx, |m| m.max(idx)));
            *counts.entry(idx).or_insert(0usize) += count;
        }
        let tokens = expand(counts);
        docs.push(Document::new(docs.len(), tokens));
        responses.push(response);
    }
    if docs.is_empty() {
        return Err(Error::NoDocuments);
    }
    let v = vocab_size.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    LabeledCorpus::new(VocabMap::anonymous(v), docs, responses)
}

pub fn parse_uci_bow(text: &str, labels: &str, kind: LabelKind) -> Result<LabeledCorpus> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut header = |name: &str| -> Result<usize> {
        let (line, l) = lines.next().ok_or(Error::NoDocuments)?;
        l.parse()
            .map_err(|_| Error::Parse { line, msg: format!("bad {name} header {l:?}") })
    };
    let d = header("D")?;
    let v = header("V")?;
    let nnz = header("NNZ")?;
    if d == 0 {
        return Err(Error::NoDocuments);
    }
    let mut per_doc: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); d];
    let mut seen = 0usize;
    for (line, l) in lines {
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse { line, msg: format!("expected `docId termId count`, found {l:?}") });
        }
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse { line, msg: format!("bad {what} {s:?}") })
        };
        let (doc, term, count) = (parse(parts[0], "docId")?, parse(parts[1], "termId")?, parse(parts[2], "count")?);
        if doc == 0 || doc > d {
            return Err(Error::Parse { line, msg: format!("docId {doc} outside 1..={d}") });
        }
        if term == 0 || term > v {
            return Err(Error::Parse { line, msg: format!("termId {term} outside 1..={v}") });
        }
        *per_doc[doc - 1].entry(term - 1).or_insert(0) += count;
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::Parse { line: 3, msg: format!("header declares {nnz} entries, found {seen}") });
    }
    let responses = labels
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(line, l)| {
            Response::parse(l, kind).ok_or_else(|| Error::Parse { line, msg: format!("unknown label token {l:?}") })
        })
        .collect::<Result<Vec<_>>>()?;
    let docs = per_doc.into_iter().enumerate().map(|(i, c)| Document::new(i, expand(c))).collect();
    LabeledCorpus::new(VocabMap::anonymous(v), docs, responses)
}

fn expand(counts: BTreeMap<usize, usize>) -> Vec<usize> {
    counts.into_iter().flat_map(|(t, n)| std::iter::repeat_n(t, n)).collect()
}

/// Deterministic random partition into `(train, test)`.
///
/// The test part holds `ceil(test_fraction * D)` documents, capped at `D - 1`
/// so the training part is never empty.
pub fn train_test_split(corpus: &LabeledCorpus, test_fraction: f64, seed: u64) -> Result<(LabeledCorpus, LabeledCorpus)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let d = corpus.num_docs();
    if d < 2 {
        return Err(Error::InvalidParameter(format!("cannot split a corpus of {d} document(s)")));
    }
    let n_test = ((test_fraction * d as f64).ceil() as usize).clamp(1, d - 1);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut RngFactory::new(seed).stream(0));
    let (test, train) = order.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((corpus.subset(&train), corpus.subset(&test)))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub empty_docs: Vec<usize>,
    /// `(doc_id, term index)` pairs outside `[0, V)`.
    pub out_of_range: Vec<(usize, usize)>,
    /// Documents whose response variant differs from the first document's.
    pub inconsistent_labels: Vec<usize>,
    pub count_mismatch: Option<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.empty_docs.is_empty()
            && self.out_of_range.is_empty()
            && self.inconsistent_labels.is_empty()
            && self.count_mismatch.is_none()
    }
}

pub fn validate(corpus: &LabeledCorpus) -> ValidationReport {
    let v = corpus.vocab_size();
    let mut report = ValidationReport::default();
    for doc in &corpus.docs {
        if doc.is_empty() {
            report.empty_docs.push(doc.doc_id);
        }
        report
            .out_of_range
            .extend(doc.tokens.iter().filter(|&&t| t >= v).map(|&t| (doc.doc_id, t)));
    }
    if let Some(kind) = corpus.label_kind() {
        report.inconsistent_labels = corpus
            .docs
            .iter()
            .zip(&corpus.responses)
            .filter(|(_, r)| r.kind() != kind)
            .map(|(d, _)| d.doc_id)
            .collect();
    }
    if corpus.docs.len() != corpus.responses.len() {
        report.count_mismatch = Some((corpus.docs.len(), corpus.responses.len()));
    }
    report
}
