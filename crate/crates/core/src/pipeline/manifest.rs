use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tags::{ingest_tag_documents, Split, Stoplist, TagDocument};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub image_id: String,
    pub image: PathBuf,
    pub category: String,
    pub split: Split,
    pub tag_doc: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct Row {
    image_id: String,
    #[serde(default)]
    image: String,
    category: String,
    split: String,
    #[serde(default)]
    tag_doc: Option<String>,
}

/// CSV dataset description with columns `image_id,image,category,split[,tag_doc]`.
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub path: PathBuf,
    records: Vec<ManifestRecord>,
    categories: Vec<String>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let dir = path.parent().unwrap_or(Path::new(""));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(path, e))?;
        let mut records = Vec::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| csv_err(path, e))?;
            let line = records.len() + 2;
            let resolve = |p: &str| {
                let p = Path::new(p);
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    dir.join(p)
                }
            };
            let split = row
                .split
                .parse::<Split>()
                .map_err(|e| Error::parse(path, line, e.to_string()))?;
            records.push(ManifestRecord {
                image: resolve(&row.image),
                tag_doc: row.tag_doc.as_deref().filter(|s| !s.is_empty()).map(resolve),
                image_id: row.image_id,
                category: row.category,
                split,
            });
        }
        Self::from_records(path.to_path_buf(), records)
    }

    pub fn from_records(path: PathBuf, records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.image_id.is_empty() {
                return Err(Error::parse(&path, i + 2, "empty image_id"));
            }
            if r.category.is_empty() {
                return Err(Error::parse(&path, i + 2, format!("`{}` has an empty category", r.image_id)));
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::parse(&path, i + 2, format!("duplicate image_id `{}`", r.image_id)));
            }
        }
        if records.is_empty() {
            return Err(Error::InvalidInput(format!("{}: manifest has no records", path.display())));
        }
        let categories: BTreeSet<&str> = records.iter().map(|r| r.category.as_str()).collect();
        let categories = categories.into_iter().map(String::from).collect();
        Ok(DatasetManifest {
            path,
            records,
            categories,
        })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Category labels in byte order; a label's position is its class index.
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn class_index(&self, category: &str) -> Option<usize> {
        self.categories.binary_search_by(|c| c.as_str().cmp(category)).ok()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Tag documents for every record that has one, with category and split
    /// taken from the manifest. Records with no document are returned
    /// separately.
    pub fn tag_documents(
        &self,
        default_source: Option<&Path>,
        stoplist: &Stoplist,
    ) -> Result<(Vec<TagDocument>, Vec<String>)> {
        let mut sources: HashMap<PathBuf, HashMap<String, TagDocument>> = HashMap::new();
        let mut docs = Vec::new();
        let mut missing = Vec::new();
        for r in &self.records {
            let Some(src) = r.tag_doc.as_deref().or(default_source) else {
                missing.push(r.image_id.clone());
                continue;
            };
            if !sources.contains_key(src) {
                let loaded = ingest_tag_documents(src, stoplist)?
                    .into_iter()
                    .map(|d| (d.image_id.clone(), d))
                    .collect();
                sources.insert(src.to_path_buf(), loaded);
            }
            match sources[src].get(&r.image_id) {
                Some(d) => docs.push(TagDocument {
                    image_id: r.image_id.clone(),
                    tags: d.tags.clone(),
                    category: Some(r.category.clone()),
                    split: Some(r.split),
                }),
                None => missing.push(r.image_id.clone()),
            }
        }
        Ok((docs, missing))
    }
}

/// Digest of documents as used for codebook construction.
pub fn documents_digest(docs: &[TagDocument]) -> String {
    let mut h = Sha256::new();
    for d in docs {
        h.update(serde_json::to_vec(d).expect("documents serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn loads_and_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(
            &p,
            "image_id,image,category,split\na,img/a.png,beach,train\nb,/abs/b.png,city,test\n",
        )
        .unwrap();
        let m = DatasetManifest::load(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records()[0].image, dir.path().join("img/a.png"));
        assert_eq!(m.records()[1].image, PathBuf::from("/abs/b.png"));
        assert_eq!(m.categories(), ["beach", "city"]);
        assert_eq!(m.class_index("city"), Some(1));
        assert_eq!(m.split(Split::Test).count(), 1);
    }

    #[test]
    fn rejects_duplicates_and_bad_split() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "image_id,image,category,split\na,x,c,train\na,y,c,test\n").unwrap();
        let err = DatasetManifest::load(&p).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
        fs::write(&p, "image_id,image,category,split\na,x,c,validation\n").unwrap();
        assert!(DatasetManifest::load(&p).is_err());
        fs::write(&p, "image_id,image,category,split\na,x,,train\n").unwrap();
        assert!(DatasetManifest::load(&p).is_err());
    }

    #[test]
    fn documents_take_manifest_labels() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("tags.jsonl"),
            "{\"id\":\"a\",\"tags\":[\"sunny beach\"],\"category\":\"wrong\"}\n",
        )
        .unwrap();
        let p = dir.path().join("m.csv");
        fs::write(
            &p,
            "image_id,image,category,split,tag_doc\na,a.png,beach,train,tags.jsonl\nb,b.png,city,test,\n",
        )
        .unwrap();
        let m = DatasetManifest::load(&p).unwrap();
        let (docs, missing) = m.tag_documents(None, &Stoplist::english()).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].category.as_deref(), Some("beach"));
        assert_eq!(docs[0].tags, ["sunny", "beach"]);
        assert_eq!(missing, ["b"]);
    }
}
