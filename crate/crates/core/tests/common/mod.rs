#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use mbc_core::embedding::EmbeddingStore;
use mbc_core::imagery::{load_corpus, CorpusManifest};
use mbc_core::Services;

pub fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

pub fn demo_store() -> Arc<EmbeddingStore> {
    static STORE: OnceLock<Arc<EmbeddingStore>> = OnceLock::new();
    STORE
        .get_or_init(|| {
            Arc::new(EmbeddingStore::load(demo_dir().join("embeddings.txt"), None).unwrap())
        })
        .clone()
}

pub fn demo_corpus() -> Arc<CorpusManifest> {
    static CORPUS: OnceLock<Arc<CorpusManifest>> = OnceLock::new();
    CORPUS
        .get_or_init(|| Arc::new(load_corpus(demo_dir().join("manifest.json")).unwrap()))
        .clone()
}

pub fn demo_services() -> Services {
    Services::fixture(demo_store(), demo_corpus(), 5)
}
