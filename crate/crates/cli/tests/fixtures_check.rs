//! Guards the bundled smoke fixture against drift: the committed files must
//! stay byte-identical to what the seeded generator produces.

mod common;

use common::{fixture_dir, smoke_fixture};

#[test]
fn bundled_fixture_matches_generator() {
    let (corpus, embeddings) = smoke_fixture();
    let dir = fixture_dir().join("smoke");
    let committed_corpus = std::fs::read_to_string(dir.join("corpus.jsonl"))
        .expect("bundled corpus.jsonl present");
    let committed_embeddings = std::fs::read_to_string(dir.join("embeddings.jsonl"))
        .expect("bundled embeddings.jsonl present");
    assert_eq!(committed_corpus, corpus, "corpus.jsonl drifted from the generator");
    assert_eq!(committed_embeddings, embeddings, "embeddings.jsonl drifted from the generator");
}

/// Regenerates the bundled fixture in place. Run manually after changing
/// the generator: `cargo test -p xfid-cli --test fixtures_check -- --ignored`.
#[test]
#[ignore]
fn regen_smoke_fixture() {
    let (corpus, embeddings) = smoke_fixture();
    let dir = fixture_dir().join("smoke");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("corpus.jsonl"), corpus).unwrap();
    std::fs::write(dir.join("embeddings.jsonl"), embeddings).unwrap();
}
