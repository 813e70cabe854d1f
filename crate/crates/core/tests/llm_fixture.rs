use std::path::PathBuf;

use evmdiff::bytecode::Fork;
use evmdiff::campaign::{classify, run_campaign, CampaignConfig, Classification};
use evmdiff::engine::{ExecContext, Interpreter};
use evmdiff::generator::{build_seed, llm_generate, LlmAdapter, LlmFixture, LlmRequest};
use evmdiff::opspec::{spec_for, PathId};

const BYTE: u8 = 0x1a;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/llm")
}

/// Recorded response for the BYTE seed: an in-range index, an index past
/// the word, a bare BYTE, a gas-starved variant and one malformed entry.
const RESPONSE: &str = "\
0x60ff601f1a00,
0x7fffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff60201a00,
0x1a00,
0x5a5a5a5a5a5a5a60ff601f1a,
0x61ff";

#[test]
fn byte_fixture_replays() {
    let seed = build_seed(BYTE, Fork::Cancun, 1).unwrap();
    let spec = spec_for(BYTE, Fork::Cancun).unwrap();
    let request = LlmRequest::new(&seed, spec);
    let path = fixture_dir().join(format!("{}.json", request.hash()));
    if std::env::var_os("EVMDIFF_BLESS").is_some() {
        let f = LlmFixture { request: request.clone(), response: RESPONSE.into() };
        std::fs::write(&path, serde_json::to_string_pretty(&f).unwrap() + "\n").unwrap();
    }
    let fixture: LlmFixture = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(fixture.request, request);

    let ctx = ExecContext::baseline().with_gas_limit(20);
    let adapter = LlmAdapter::FixtureReplay { dir: fixture_dir() };
    let out = llm_generate(&request, &seed, spec, &ctx, &adapter).unwrap();
    assert_eq!(out.provenance, "fixture");
    assert_eq!(out.candidates.len(), 4);
    assert_eq!(out.invalid, 1);

    let interp = Interpreter::reference();
    let results: Vec<(Classification, Vec<u8>)> = out
        .candidates
        .iter()
        .map(|c| {
            let t = interp.run(&c.program, &ctx);
            let top = t.steps.last().map(|s| s.stack.first().map(|w| w.to_be_bytes::<32>()[31]).unwrap_or(0));
            (classify(&t, c.target_pc), top.into_iter().collect())
        })
        .collect();
    assert_eq!(results[0], (Classification::Path(PathId::Success), vec![0xff]));
    assert_eq!(results[1], (Classification::Path(PathId::Success), vec![0x00]));
    assert_eq!(results[2].0, Classification::Path(PathId::StackUnderflow));
    assert_eq!(results[3].0, Classification::Path(PathId::OutOfGas));
}

#[test]
fn missing_recording_uses_fallback() {
    let seed = build_seed(BYTE, Fork::Cancun, 2).unwrap();
    let spec = spec_for(BYTE, Fork::Cancun).unwrap();
    let request = LlmRequest::new(&seed, spec);
    let adapter = LlmAdapter::FixtureReplay { dir: fixture_dir() };
    let out = llm_generate(&request, &seed, spec, &ExecContext::baseline(), &adapter).unwrap();
    assert_eq!(out.provenance, "fallback");
    assert!(!out.candidates.is_empty());
}

#[test]
fn campaign_with_fixture_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let config = CampaignConfig {
        engines: vec!["reference".into(), "mutant:F1".into()],
        opcodes: Some(vec![BYTE]),
        seeds: 2,
        t: 8,
        llm: LlmAdapter::FixtureReplay { dir: fixture_dir() },
        out_dir: dir.path().to_path_buf(),
        ..CampaignConfig::default()
    };
    let out = run_campaign(&config).unwrap();
    assert!(out.reports.is_empty(), "F1 does not touch BYTE");
    assert_eq!(out.summary.divergences, 0);
    assert!(out.coverage.hit_paths > 0);
}
