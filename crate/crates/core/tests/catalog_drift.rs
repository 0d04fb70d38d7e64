//! The committed `docs/catalog.md` is generated output; this test fails the
//! build when it drifts from what the registry currently emits.

use dicelab_core::registry::emit_catalog;

#[test]
fn committed_catalog_matches_registry() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/catalog.md");
    let committed = std::fs::read_to_string(path)
        .expect("docs/catalog.md exists; regenerate with `dicelab --emit-catalog docs/catalog.md`");
    let generated = emit_catalog().expect("catalog renders");
    assert_eq!(
        committed, generated,
        "docs/catalog.md is stale; regenerate with `dicelab --emit-catalog docs/catalog.md`"
    );
}
