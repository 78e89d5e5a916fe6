use liouville::io::*;
use liouville::solver::*;
use liouville::TorusGrid;
use serde::Serialize;

#[derive(Serialize)]
struct Row {
    a: f64,
    b: &'static str,
}

fn prov() -> Provenance {
    Provenance::new("gamma=0.3", 7)
}

#[test]
fn config_hash_is_sha256() {
    // sha256("abc")
    assert_eq!(config_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    assert_eq!(prov().config_hash.len(), 64);
    assert!(!prov().git_describe.is_empty());
}

#[test]
fn ndjson_roundtrip_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rows.ndjson");
    write_ndjson(&p, &[Row { a: 1.5, b: "x" }, Row { a: -2.0, b: "y" }], &prov()).unwrap();
    let v = read_ndjson(&p).unwrap();
    assert_eq!(v.len(), 2);
    assert_eq!(v[1]["a"], -2.0);
    assert_eq!(v[0]["provenance"]["master_seed"], 7);
    assert!(write_ndjson(&p, &[1.0], &prov()).is_err());
    // the failed write left the earlier file alone
    assert_eq!(read_ndjson(&p).unwrap().len(), 2);
}

#[test]
fn csv_starts_with_provenance_comment() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    write_csv(&p, &["x", "y"], &[vec!["1".into(), "2".into()]], &prov()).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# git=") && first.contains("seed=7"));
    assert_eq!(lines.next(), Some("x,y"));
    assert_eq!(lines.next(), Some("1,2"));
    assert!(write_csv(&p, &["x", "y"], &[vec!["1".into()]], &prov()).is_err());
}

#[test]
fn failed_writes_leave_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("partial.txt");
    let r = atomic_write(&p, |w| {
        w.write_all(b"half")?;
        Err(std::io::Error::other("boom"))
    });
    assert!(r.is_err());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn checkpoint_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let g = TorusGrid::new(8, 9, 1.0 / 64.0).unwrap();
    let cfg = SolverConfig::new(g, 0.25, 3);
    let tr = dpd_solve(&ModelParams::simple(0.3, Flavor::Exp), &cfg, &[0.0; 64]).unwrap();
    let (bin, idx) = write_checkpoint(&dir.path().join("run"), &tr, 0.3, 0.25, &prov()).unwrap();
    let (h, x, v) = read_checkpoint(&bin).unwrap();
    assert_eq!((h.n_space, h.n_time, h.seed), (8, 9, 7));
    assert_eq!((h.gamma, h.epsilon, h.dt), (0.3, 0.25, 1.0 / 64.0));
    assert_eq!(x.data(), tr.x.data());
    assert_eq!(v.unwrap().data(), tr.v.as_ref().unwrap().data());
    let index = read_ndjson(&idx).unwrap();
    assert_eq!(index.len(), 18);
    assert_eq!(index[0]["offset"], HEADER_BYTES);
    assert_eq!(index[9]["field"], "v");
    let bytes = std::fs::read(&bin).unwrap();
    assert_eq!(bytes.len() as u64, HEADER_BYTES + 2 * 9 * 64 * 8);
    // slice 3 of X read through the index
    let off = index[3]["offset"].as_u64().unwrap() as usize;
    let first = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    assert_eq!(first, tr.x.slice(3)[0]);
}
