use std::path::Path;
use std::sync::Arc;

use cogchain::demo::{demo_endpoint, run_demo, DemoInputs};
use cogchain::gateway::{Cassette, Gateway};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/demo");

fn replay(inputs: &DemoInputs, work: &Path) -> (String, Vec<u8>, u64) {
    let cassette = Arc::new(Cassette::load(&inputs.cassette).unwrap());
    let gw = Arc::new(Gateway::replay(demo_endpoint(), cassette).unwrap());
    let report = run_demo(inputs, gw.clone(), work).unwrap();
    (report.text, std::fs::read(&report.export).unwrap(), gw.network_requests())
}

#[test]
fn shipped_cassette_reproduces_the_report() {
    let inputs = DemoInputs::in_dir(Path::new(FIXTURES));
    let expected = std::fs::read_to_string(Path::new(FIXTURES).join("expected_report.txt")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (text, export, network) = replay(&inputs, a.path());
    assert_eq!(text, expected);
    assert_eq!(network, 0);
    let (again, export_again, _) = replay(&inputs, b.path());
    assert_eq!(again, text);
    assert_eq!(export_again, export);
}
