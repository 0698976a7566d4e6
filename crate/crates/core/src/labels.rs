//! The unified 17-class relation taxonomy and corpus label mapping.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::disrpt::{DatasetId, RelationInstance};
use crate::error::{Error, Result};

const DEFAULT_MAPPING: &str = include_str!("../data/mapping.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnifiedLabel {
    Temporal,
    Structuring,
    Attribution,
    Comparison,
    Elaboration,
    Framing,
    Mode,
    Reformulation,
    Adversative,
    Causal,
    Contingency,
    Enablement,
    Explanation,
    Evaluation,
    TopicChange,
    TopicComment,
    TopicAdjustment,
}

impl UnifiedLabel {
    pub const ALL: [UnifiedLabel; 17] = [
        UnifiedLabel::Temporal,
        UnifiedLabel::Structuring,
        UnifiedLabel::Attribution,
        UnifiedLabel::Comparison,
        UnifiedLabel::Elaboration,
        UnifiedLabel::Framing,
        UnifiedLabel::Mode,
        UnifiedLabel::Reformulation,
        UnifiedLabel::Adversative,
        UnifiedLabel::Causal,
        UnifiedLabel::Contingency,
        UnifiedLabel::Enablement,
        UnifiedLabel::Explanation,
        UnifiedLabel::Evaluation,
        UnifiedLabel::TopicChange,
        UnifiedLabel::TopicComment,
        UnifiedLabel::TopicAdjustment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UnifiedLabel::Temporal => "temporal",
            UnifiedLabel::Structuring => "structuring",
            UnifiedLabel::Attribution => "attribution",
            UnifiedLabel::Comparison => "comparison",
            UnifiedLabel::Elaboration => "elaboration",
            UnifiedLabel::Framing => "framing",
            UnifiedLabel::Mode => "mode",
            UnifiedLabel::Reformulation => "reformulation",
            UnifiedLabel::Adversative => "adversative",
            UnifiedLabel::Causal => "causal",
            UnifiedLabel::Contingency => "contingency",
            UnifiedLabel::Enablement => "enablement",
            UnifiedLabel::Explanation => "explanation",
            UnifiedLabel::Evaluation => "evaluation",
            UnifiedLabel::TopicChange => "topic-change",
            UnifiedLabel::TopicComment => "topic-comment",
            UnifiedLabel::TopicAdjustment => "topic-adjustment",
        }
    }

    /// Position in [`UnifiedLabel::ALL`]; also the on-disk label code.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn top_level(self) -> TopLevelClass {
        top_level(self)
    }
}

impl FromStr for UnifiedLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UnifiedLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

impl fmt::Display for UnifiedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for UnifiedLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for UnifiedLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopLevelClass {
    Temporal,
    Structuring,
    Thematic,
    CausalArgumentative,
    TopicManagement,
}

impl TopLevelClass {
    pub const ALL: [TopLevelClass; 5] = [
        TopLevelClass::Temporal,
        TopLevelClass::Structuring,
        TopLevelClass::Thematic,
        TopLevelClass::CausalArgumentative,
        TopLevelClass::TopicManagement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopLevelClass::Temporal => "temporal",
            TopLevelClass::Structuring => "structuring",
            TopLevelClass::Thematic => "thematic",
            TopLevelClass::CausalArgumentative => "causal-argumentative",
            TopLevelClass::TopicManagement => "topic-management",
        }
    }
}

impl fmt::Display for TopLevelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn top_level(label: UnifiedLabel) -> TopLevelClass {
    use UnifiedLabel::*;
    match label {
        Temporal => TopLevelClass::Temporal,
        Structuring => TopLevelClass::Structuring,
        Framing | Attribution | Mode | Reformulation | Comparison | Elaboration => {
            TopLevelClass::Thematic
        }
        Causal | Adversative | Explanation | Evaluation | Contingency | Enablement => {
            TopLevelClass::CausalArgumentative
        }
        TopicAdjustment | TopicChange | TopicComment => TopLevelClass::TopicManagement,
    }
}

/// How specific a dataset pattern is; higher wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Specificity {
    Global,
    Partial,
    Framework,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingEntry {
    pub pattern: String,
    pub label: String,
    pub target: UnifiedLabel,
    pub provenance: String,
}

impl MappingEntry {
    pub fn specificity(&self) -> Specificity {
        specificity(&self.pattern)
    }
}

fn specificity(pattern: &str) -> Specificity {
    if !pattern.contains('*') {
        return Specificity::Exact;
    }
    let segs: Vec<&str> = pattern.split('.').collect();
    if segs.len() == 3 && !segs[1].contains('*') {
        Specificity::Framework
    } else if segs.iter().any(|s| !s.contains('*')) {
        Specificity::Partial
    } else {
        Specificity::Global
    }
}

/// `*` matches any (possibly empty) run of characters.
fn glob_match(pattern: &str, text: &str) -> bool {
    let p = pattern.as_bytes();
    let t = text.as_bytes();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == b'*' {
            star = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && p[pi] == t[ti] {
            pi += 1;
            ti += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == b'*')
}

/// Corpus label → unified label table keyed on (dataset pattern, lowercased label).
#[derive(Debug, Clone, Default)]
pub struct MappingTable {
    entries: Vec<MappingEntry>,
    index: HashMap<(String, String), usize>,
    by_label: HashMap<String, Vec<usize>>,
}

impl MappingTable {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The built-in table shipped in `data/mapping.tsv`.
    pub fn builtin() -> Self {
        let mut table = Self::empty();
        for entry in parse_mapping(DEFAULT_MAPPING, Path::new("<builtin mapping>"))
            .expect("built-in mapping is valid")
        {
            table.insert(entry);
        }
        table
    }

    /// Inserts or replaces the entry with the same key.
    pub fn insert(&mut self, entry: MappingEntry) {
        let key = (entry.pattern.clone(), entry.label.to_lowercase());
        if let Some(&i) = self.index.get(&key) {
            self.entries[i] = entry;
        } else {
            let i = self.entries.len();
            self.by_label.entry(key.1.clone()).or_default().push(i);
            self.index.insert(key, i);
            self.entries.push(entry);
        }
    }

    /// First 16 hex digits of SHA-256 over the entries sorted by key.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.pattern, e.label, e.target))
            .collect();
        lines.sort();
        let digest = Sha256::digest(lines.concat().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most specific entry for `(dataset, label)`. Ties within a specificity
    /// level go to the entry inserted first.
    pub fn lookup(&self, dataset: &DatasetId, label: &str) -> Option<&MappingEntry> {
        let key = label.trim().to_lowercase();
        let dataset = dataset.to_string();
        let candidates = self.by_label.get(&key)?;
        let mut best: Option<&MappingEntry> = None;
        for &i in candidates {
            let e = &self.entries[i];
            if !glob_match(&e.pattern, &dataset) {
                continue;
            }
            if best.is_none_or(|b| e.specificity() > b.specificity()) {
                best = Some(e);
            }
        }
        best
    }

    /// Resolves a label: table entries first, then the `elab` prefix rule.
    pub fn resolve(&self, dataset: &DatasetId, label: &str) -> Result<UnifiedLabel> {
        if let Some(e) = self.lookup(dataset, label) {
            return Ok(e.target);
        }
        let lower = label.trim().to_lowercase();
        if lower.starts_with("elab") || lower.contains("elaboration") {
            return Ok(UnifiedLabel::Elaboration);
        }
        Err(Error::UnmappedLabel {
            dataset: dataset.to_string(),
            label: label.to_string(),
        })
    }
}

fn parse_mapping(text: &str, origin: &Path) -> Result<Vec<MappingEntry>> {
    let mut out = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols[0] == "dataset_pattern" {
            continue;
        }
        if cols.len() < 3 || cols.len() > 4 {
            return Err(err(format!("expected 3 or 4 columns, found {}", cols.len())));
        }
        let (pattern, label) = (cols[0], cols[1]);
        if pattern.is_empty() || label.is_empty() {
            return Err(err("empty pattern or label".into()));
        }
        let target: UnifiedLabel = cols[2]
            .parse()
            .map_err(|_| err(format!("unknown unified label {:?}", cols[2])))?;
        let key = (pattern.to_string(), label.to_lowercase());
        if let Some(prev) = seen.insert(key, line_no) {
            return Err(err(format!(
                "duplicate entry for ({pattern}, {label}), first defined at line {prev}"
            )));
        }
        out.push(MappingEntry {
            pattern: pattern.to_string(),
            label: label.to_string(),
            target,
            provenance: cols.get(3).unwrap_or(&"user").to_string(),
        });
    }
    Ok(out)
}

/// Reads a mapping TSV and merges it over the built-in table; file entries
/// replace built-in entries with the same key.
pub fn load_mapping(path: &Path) -> Result<MappingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_mapping_str(&text, path)
}

pub fn load_mapping_str(text: &str, origin: &Path) -> Result<MappingTable> {
    let mut table = MappingTable::builtin();
    for entry in parse_mapping(text, origin)? {
        table.insert(entry);
    }
    Ok(table)
}

/// Maps one instance and stores the result on it.
pub fn unify(instance: &mut RelationInstance, table: &MappingTable) -> Result<UnifiedLabel> {
    let label = table.resolve(&instance.dataset, &instance.original_label)?;
    instance.unified_label = Some(label);
    Ok(label)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetCoverage {
    pub mapped: usize,
    pub unmapped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnmappedEntry {
    pub dataset: String,
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoverageReport {
    pub datasets: BTreeMap<String, DatasetCoverage>,
    pub unmapped: Vec<UnmappedEntry>,
    pub histogram: BTreeMap<String, usize>,
}

impl CoverageReport {
    pub fn unmapped_total(&self) -> usize {
        self.unmapped.iter().map(|u| u.count).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.unmapped.is_empty()
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "dataset\tmapped\tunmapped");
        for (d, c) in &self.datasets {
            let _ = writeln!(s, "{d}\t{}\t{}", c.mapped, c.unmapped);
        }
        let _ = writeln!(s, "\nunified label histogram:");
        for (l, n) in &self.histogram {
            let _ = writeln!(s, "  {l:<18}{n}");
        }
        if self.unmapped.is_empty() {
            let _ = writeln!(s, "\nall labels mapped");
        } else {
            let _ = writeln!(s, "\nunmapped labels ({} instances):", self.unmapped_total());
            for u in &self.unmapped {
                let _ = writeln!(s, "  {}\t{}\t{}", u.dataset, u.label, u.count);
            }
        }
        s
    }
}

/// Maps every instance in place and reports coverage. Unmapped instances keep
/// `unified_label = None` and are listed once per (dataset, label).
pub fn apply_mapping(instances: &mut [RelationInstance], table: &MappingTable) -> CoverageReport {
    let mut report = CoverageReport::default();
    let mut unmapped: BTreeMap<(String, String), usize> = BTreeMap::new();
    for inst in instances.iter_mut() {
        let ds = inst.dataset.to_string();
        let cov = report.datasets.entry(ds.clone()).or_default();
        match unify(inst, table) {
            Ok(label) => {
                cov.mapped += 1;
                *report.histogram.entry(label.to_string()).or_default() += 1;
            }
            Err(_) => {
                inst.unified_label = None;
                cov.unmapped += 1;
                *unmapped
                    .entry((ds, inst.original_label.clone()))
                    .or_default() += 1;
            }
        }
    }
    report.unmapped = unmapped
        .into_iter()
        .map(|((dataset, label), count)| UnmappedEntry {
            dataset,
            label,
            count,
        })
        .collect();
    report
}

/// Read-only variant of [`apply_mapping`].
pub fn mapping_coverage_report(
    corpus: &[RelationInstance],
    table: &MappingTable,
) -> CoverageReport {
    let mut copy = corpus.to_vec();
    apply_mapping(&mut copy, table)
}
