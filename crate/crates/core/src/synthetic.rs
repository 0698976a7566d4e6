//! Seeded synthetic DISRPT-style corpora for tests, benchmarks and demos.
//!
//! Each language gets one dataset `<lang>.rst.synth` with `.rels` and `.tok`
//! files for all three splits. Documents belong to exactly one split. The
//! second unit of every relation opens with a marker word tied to its label.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::disrpt::{DatasetId, Split};
use crate::error::{Error, Result};

/// Original labels used, each covered by the built-in mapping table, with the
/// marker word that starts the second unit.
pub const LABELS: &[(&str, &str)] = &[
    ("sequence", "then"),
    ("contrast", "but"),
    ("purpose", "so"),
    ("list", "and"),
];

const WORDS: &[&str] = &[
    "the", "river", "market", "opened", "late", "people", "walked", "home", "rain", "fell",
    "city", "council", "voted", "new", "plan", "old", "bridge", "closed", "school", "year",
];

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub languages: Vec<String>,
    pub relations_per_language: usize,
    pub relations_per_document: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            languages: vec!["eng".into(), "deu".into()],
            relations_per_language: 100,
            relations_per_document: 5,
            seed: 0,
        }
    }
}

fn split_of(doc: usize, docs: usize) -> Split {
    // 70/10/20 by document position.
    let f = doc as f64 / docs as f64;
    if f < 0.7 {
        Split::Train
    } else if f < 0.8 {
        Split::Dev
    } else {
        Split::Test
    }
}

/// Writes one dataset directory per language under `root`.
pub fn write_corpus(root: &Path, spec: &SyntheticSpec) -> Result<Vec<DatasetId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_doc = spec.relations_per_document.max(1);
    let mut ids = Vec::new();
    for lang in &spec.languages {
        let id: DatasetId = format!("{lang}.rst.synth").parse()?;
        let dir = root.join(id.to_string());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let docs = spec.relations_per_language.div_ceil(per_doc);
        let mut rels: [String; 3] = Default::default();
        let mut toks: [String; 3] = Default::default();
        for r in &mut rels {
            r.push_str("doc\tunit1_toks\tunit2_toks\tunit1_txt\tunit2_txt\tdir\torig_label\tlabel\n");
        }
        let mut remaining = spec.relations_per_language;
        for d in 0..docs {
            let split = split_of(d, docs);
            let s = split as usize;
            let doc_id = format!("{lang}_{}_{d:03}", split.as_str());
            let count = remaining.min(per_doc);
            remaining -= count;
            let mut tokens: Vec<String> = Vec::new();
            let mut rows = Vec::new();
            for _ in 0..count {
                let (label, marker) = LABELS[rng.random_range(0..LABELS.len())];
                let len1 = rng.random_range(2..=6);
                let len2 = rng.random_range(2..=6);
                let start = tokens.len() + 1;
                for _ in 0..len1 {
                    tokens.push(WORDS[rng.random_range(0..WORDS.len())].into());
                }
                tokens.push(marker.into());
                for _ in 1..len2 {
                    tokens.push(WORDS[rng.random_range(0..WORDS.len())].into());
                }
                let u1 = (start, start + len1 - 1);
                let u2 = (start + len1, start + len1 + len2 - 1);
                let text = |a: usize, b: usize| tokens[a - 1..b].join(" ");
                let dir = if rng.random_bool(0.5) { "1>2" } else { "1<2" };
                rows.push(format!(
                    "{doc_id}\t{}-{}\t{}-{}\t{}\t{}\t{dir}\t{label}\t{label}\n",
                    u1.0,
                    u1.1,
                    u2.0,
                    u2.1,
                    text(u1.0, u1.1),
                    text(u2.0, u2.1)
                ));
                tokens.push(".".into());
            }
            for row in rows {
                rels[s].push_str(&row);
            }
            let _ = writeln!(toks[s], "# newdoc id = {doc_id}");
            for (i, t) in tokens.iter().enumerate() {
                let _ = writeln!(toks[s], "{}\t{t}\t_\t_", i + 1);
            }
            toks[s].push('\n');
        }
        for split in Split::ALL {
            let s = split as usize;
            for (ext, body) in [("rels", &rels[s]), ("tok", &toks[s])] {
                let path = dir.join(format!("{id}_{split}.{ext}"));
                std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            }
        }
        ids.push(id);
    }
    Ok(ids)
}
