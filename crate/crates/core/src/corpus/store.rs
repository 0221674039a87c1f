//! Raw-resource ingestion and on-disk index layout.
//!
//! Index directory: `manifest.json` (versioned), `docs.jsonl` (one document
//! per line, manifest order), `embeddings.bin` (row-major little-endian
//! float32, row i ↔ docs.jsonl line i).

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::corpus::index::{annotate_evidence_level, CorpusIndex, EvidenceDocument, SourceType};
use crate::corpus::segment::segment;
use crate::error::{Error, Result};
use crate::gateway::{EmbeddingVector, Gateway};
use crate::prompts::PromptSet;

pub const INDEX_FORMAT_VERSION: u32 = 1;

/// One chapter of a raw resource.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chapter {
    #[serde(default)]
    pub title: String,
    pub body: String,
}

/// One raw resource from a corpus JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawResource {
    pub id: String,
    pub source_type: SourceType,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub chapters: Vec<Chapter>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Read raw resources from JSONL, reporting the line number of any bad line.
pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<RawResource>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut resources = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resource: RawResource =
            serde_json::from_str(&line).map_err(|e| Error::JsonlLine {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        resources.push(resource);
    }
    Ok(resources)
}

/// Segment and evidence-annotate raw resources into corpus documents.
/// Chunk ids are the resource id, suffixed `#k` when a resource splits.
pub async fn ingest(
    resources: &[RawResource],
    threshold: usize,
    ratio: f64,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<Vec<EvidenceDocument>> {
    let mut docs = Vec::new();
    for resource in resources {
        let chapters: Vec<(String, String)> =
            resource.chapters.iter().map(|c| (c.title.clone(), c.body.clone())).collect();
        let chunks = segment(&resource.id, &resource.title, &resource.body, &chapters, threshold, ratio)?;
        let multi = chunks.len() > 1;
        for (k, chunk) in chunks.into_iter().enumerate() {
            let doc_id = if multi { format!("{}#{k}", resource.id) } else { resource.id.clone() };
            let doc = EvidenceDocument {
                doc_id,
                source_type: resource.source_type,
                title: chunk.title,
                text: chunk.text,
                token_estimate: chunk.token_estimate,
                evidence_level: 9,
                metadata: resource.metadata.clone(),
            };
            docs.push(annotate_evidence_level(doc, gateway, prompts).await?);
        }
    }
    Ok(docs)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    doc_count: usize,
    embedding_dim: usize,
}

/// Write the index directory (manifest, docs.jsonl, embeddings.bin).
pub fn save_index(index: &CorpusIndex, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format_version: INDEX_FORMAT_VERSION,
        doc_count: index.doc_count(),
        embedding_dim: index.dim(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let mut docs_out = BufWriter::new(std::fs::File::create(dir.join("docs.jsonl"))?);
    for doc in index.docs() {
        serde_json::to_writer(&mut docs_out, doc)?;
        docs_out.write_all(b"\n")?;
    }
    docs_out.flush()?;

    let mut bin = BufWriter::new(std::fs::File::create(dir.join("embeddings.bin"))?);
    for embedding in index.embeddings() {
        for value in embedding.values() {
            bin.write_f32::<LittleEndian>(*value)?;
        }
    }
    bin.flush()?;
    Ok(())
}

/// Load an index directory written by [`save_index`].
pub fn load_index(dir: &Path) -> Result<CorpusIndex> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    if manifest.format_version != INDEX_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            what: manifest_path.display().to_string(),
            expected: INDEX_FORMAT_VERSION,
            found: manifest.format_version,
        });
    }

    let docs_path = dir.join("docs.jsonl");
    let reader = BufReader::new(std::fs::File::open(&docs_path)?);
    let mut docs = Vec::with_capacity(manifest.doc_count);
    let mut by_id = HashMap::with_capacity(manifest.doc_count);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: EvidenceDocument = serde_json::from_str(&line).map_err(|e| Error::JsonlLine {
            path: docs_path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if by_id.insert(doc.doc_id.clone(), docs.len()).is_some() {
            return Err(Error::DuplicateDocId { doc_id: doc.doc_id });
        }
        docs.push(doc);
    }
    if docs.len() != manifest.doc_count {
        return Err(Error::Config(format!(
            "index at {}: manifest says {} docs, docs.jsonl has {}",
            dir.display(),
            manifest.doc_count,
            docs.len()
        )));
    }

    let mut bin = BufReader::new(std::fs::File::open(dir.join("embeddings.bin"))?);
    let mut embeddings = Vec::with_capacity(docs.len());
    for _ in 0..docs.len() {
        let mut row = vec![0.0_f32; manifest.embedding_dim];
        for value in row.iter_mut() {
            *value = bin.read_f32::<LittleEndian>()?;
        }
        embeddings.push(EmbeddingVector::new(row));
    }
    let mut trailing = [0u8; 1];
    if bin.read(&mut trailing)? != 0 {
        return Err(Error::Config(format!(
            "index at {}: embeddings.bin longer than doc_count x dim",
            dir.display()
        )));
    }
    CorpusIndex::assemble(docs, embeddings, by_id)
}
