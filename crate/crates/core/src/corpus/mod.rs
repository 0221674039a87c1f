//! Corpus ingestion, segmentation, evidence annotation, and the dual index.

mod index;
mod segment;
mod store;

pub use index::{
    annotate_evidence_level, cosine, lex_terms, parse_evidence_level, CorpusIndex,
    EvidenceDocument, SourceType, EVIDENCE_LEVEL_NAMES, GUIDELINE_EVIDENCE_LEVEL,
};
pub use segment::{estimate_tokens, segment, Chunk};
pub use store::{
    ingest, load_index, read_corpus_jsonl, save_index, Chapter, RawResource, INDEX_FORMAT_VERSION,
};
