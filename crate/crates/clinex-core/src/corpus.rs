//! On-disk corpus layout: one directory with a line-delimited manifest
//! plus a text and an annotation file per document.
//!
//! ```text
//! corpus/
//!   manifest.jsonl          # {"doc_id":..,"record_id":..,"department":..,"section":..,"split":..}
//!   docs/<doc_id>.txt       # UTF-8 document text
//!   docs/<doc_id>.ann       # standoff annotations (may be absent)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationSet, Document};
use crate::error::{Error, Result};
use crate::scheme::SchemeRegistry;
use crate::standoff::{parse_standoff, serialize_standoff};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    None,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::None => "none",
        }
    }
}

/// One document with its gold annotations and split assignment.
#[derive(Debug, Clone)]
pub struct AnnotatedDoc {
    pub doc: Document,
    pub ann: AnnotationSet,
    pub split: Split,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub docs: Vec<AnnotatedDoc>,
}

/// One manifest line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocMeta {
    pub doc_id: String,
    pub record_id: String,
    pub department: String,
    pub section: String,
    pub split: Split,
}

fn check_doc_id(id: &str) -> Result<()> {
    if id.is_empty()
        || id.contains('/')
        || id.contains('\\')
        || id.contains("..")
        || id.starts_with('.')
    {
        return Err(Error::Corpus(format!("doc_id `{id}` is not a safe file name")));
    }
    Ok(())
}

impl Corpus {
    /// Documents of one split.
    pub fn split_docs(&self, split: Split) -> Vec<&AnnotatedDoc> {
        self.docs.iter().filter(|d| d.split == split).collect()
    }

    /// Record ids in first-seen order with their document indices.
    pub fn records(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<String> = Vec::new();
        let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, d) in self.docs.iter().enumerate() {
            if !map.contains_key(&d.doc.record_id) {
                order.push(d.doc.record_id.clone());
            }
            map.entry(d.doc.record_id.clone()).or_default().push(i);
        }
        order
            .into_iter()
            .map(|r| {
                let idx = map.remove(&r).unwrap_or_default();
                (r, idx)
            })
            .collect()
    }

    /// Docs of the given records, cloned in corpus order.
    pub fn docs_of_records(&self, record_ids: &[String]) -> Vec<AnnotatedDoc> {
        let wanted: std::collections::BTreeSet<&String> = record_ids.iter().collect();
        self.docs
            .iter()
            .filter(|d| wanted.contains(&d.doc.record_id))
            .cloned()
            .collect()
    }
}

/// Read and check the manifest of a corpus directory.
pub fn read_manifest(dir: &Path) -> Result<Vec<DocMeta>> {
    let manifest_path = dir.join("manifest.jsonl");
    let manifest = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Corpus(format!("{}: {e}", manifest_path.display())))?;
    let mut entries = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: DocMeta = serde_json::from_str(line)
            .map_err(|e| Error::Corpus(format!("manifest.jsonl:{}: {e}", i + 1)))?;
        check_doc_id(&entry.doc_id)?;
        if entry.record_id.is_empty() {
            return Err(Error::Corpus(format!(
                "manifest.jsonl:{}: record_id must be non-empty",
                i + 1
            )));
        }
        entries.push(entry);
    }
    let mut ids: Vec<&str> = entries.iter().map(|e| e.doc_id.as_str()).collect();
    ids.sort_unstable();
    for w in ids.windows(2) {
        if w[0] == w[1] {
            return Err(Error::Corpus(format!("duplicate doc_id `{}` in manifest", w[0])));
        }
    }
    Ok(entries)
}

/// Rewrite only the manifest of a corpus directory, atomically.
pub fn write_manifest(dir: &Path, entries: &[DocMeta]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    crate::checkpoint::write_atomic(&dir.join("manifest.jsonl"), out.as_bytes())
}

/// Read a corpus directory; documents parse in parallel, order follows
/// the manifest.
pub fn read_corpus(dir: &Path, scheme: &SchemeRegistry) -> Result<Corpus> {
    let entries = read_manifest(dir)?;
    let docs: Result<Vec<AnnotatedDoc>> = entries
        .par_iter()
        .map(|entry| {
            let txt_path = dir.join("docs").join(format!("{}.txt", entry.doc_id));
            let text = fs::read_to_string(&txt_path)
                .map_err(|e| Error::Corpus(format!("{}: {e}", txt_path.display())))?;
            let doc = Document {
                doc_id: entry.doc_id.clone(),
                text,
                section: entry.section.clone(),
                department: entry.department.clone(),
                record_id: entry.record_id.clone(),
            };
            let ann_path = dir.join("docs").join(format!("{}.ann", entry.doc_id));
            let ann = if ann_path.exists() {
                let payload = fs::read_to_string(&ann_path)?;
                let name = format!("{}.ann", entry.doc_id);
                parse_standoff(&doc, &payload, scheme, &name)?.0
            } else {
                AnnotationSet::new(entry.doc_id.clone())
            };
            Ok(AnnotatedDoc { doc, ann, split: entry.split })
        })
        .collect();
    Ok(Corpus { docs: docs? })
}

/// Write a corpus directory with canonical annotation files.
pub fn write_corpus(dir: &Path, corpus: &Corpus, scheme: &SchemeRegistry) -> Result<()> {
    let docs_dir = dir.join("docs");
    fs::create_dir_all(&docs_dir)?;
    let mut manifest = fs::File::create(dir.join("manifest.jsonl"))?;
    for d in &corpus.docs {
        check_doc_id(&d.doc.doc_id)?;
        let entry = DocMeta {
            doc_id: d.doc.doc_id.clone(),
            record_id: d.doc.record_id.clone(),
            department: d.doc.department.clone(),
            section: d.doc.section.clone(),
            split: d.split,
        };
        writeln!(manifest, "{}", serde_json::to_string(&entry)?)?;
        fs::write(docs_dir.join(format!("{}.txt", d.doc.doc_id)), &d.doc.text)?;
        let payload = serialize_standoff(&d.ann, &d.doc, scheme);
        fs::write(docs_dir.join(format!("{}.ann", d.doc.doc_id)), payload)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Entity;
    use crate::scheme::builtin_scheme;

    #[test]
    fn corpus_round_trips_through_disk() {
        let scheme = builtin_scheme();
        let dir = tempfile::tempdir().unwrap();
        let sra = scheme.entity_type("Self-Reported Abnormality").unwrap();

        let mut doc = Document::new("r1-s1", "患者头晕三天。");
        doc.record_id = "r1".into();
        doc.department = "神经内科".into();
        doc.section = "主诉".into();
        let mut ann = AnnotationSet::new("r1-s1");
        ann.entities.insert(Entity::new(sra, 2, 4));
        let corpus = Corpus {
            docs: vec![AnnotatedDoc { doc, ann, split: Split::Train }],
        };

        write_corpus(dir.path(), &corpus, &scheme).unwrap();
        let back = read_corpus(dir.path(), &scheme).unwrap();
        assert_eq!(back.docs.len(), 1);
        assert_eq!(back.docs[0].doc.text, "患者头晕三天。");
        assert_eq!(back.docs[0].ann, corpus.docs[0].ann);
        assert_eq!(back.docs[0].split, Split::Train);
    }

    #[test]
    fn unsafe_doc_ids_are_rejected() {
        assert!(check_doc_id("../evil").is_err());
        assert!(check_doc_id("a/b").is_err());
        assert!(check_doc_id("").is_err());
        assert!(check_doc_id("r0001-d01").is_ok());
    }

    #[test]
    fn records_group_documents() {
        let scheme = builtin_scheme();
        let mk = |doc_id: &str, rec: &str| {
            let mut doc = Document::new(doc_id, "x");
            doc.record_id = rec.into();
            AnnotatedDoc { doc, ann: AnnotationSet::new(doc_id), split: Split::None }
        };
        let corpus = Corpus {
            docs: vec![mk("a1", "a"), mk("b1", "b"), mk("a2", "a")],
        };
        let recs = corpus.records();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].0, "a");
        assert_eq!(recs[0].1, vec![0, 2]);
        let _ = scheme;
    }
}
