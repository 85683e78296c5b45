mod common;

use std::path::Path;

#[test]
fn kill_between_acks_loses_and_duplicates_nothing() {
    let r = common::durability::kill_and_replay(Path::new(env!("CARGO_BIN_EXE_cxr")), 4);
    assert_eq!(r.rounds, 4);
    assert!(r.acked >= 4, "{r:?}");
    assert_eq!((r.lost, r.duplicated, r.phantom), (0, 0, 0), "{r:?}");
}
