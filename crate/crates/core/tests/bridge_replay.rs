//! Replays recorded bridge transcripts through the HTTP client's parsing and
//! the word assembly built on top of it.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use syntax_smc::inference::{advance_word, InferenceError, DEFAULT_MAX_TOKENS};
use syntax_smc::lm::remote::{
    next_token_response, BridgeError, FixtureTransport, RemoteLm, TokenLm, Transport, NEXT_TOKEN,
};

fn load(name: &str) -> (Arc<FixtureTransport>, RemoteLm) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/bridge")
        .join(format!("{name}.json"));
    let t = Arc::new(FixtureTransport::load(path).unwrap());
    (t.clone(), RemoteLm::new(t))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn next_token_lists_top_eos_and_rest() {
    let (_, lm) = load("session");
    let d = lm.next_token(&[]).unwrap();
    assert_eq!(d.top.len(), 2);
    assert_eq!(d.top[1].text, " a");
    assert!(close(d.top[0].logprob, 0.6f64.ln()));
    assert!(close(d.eos_logprob, 0.05f64.ln()));
    assert!(close(d.total_mass(), 1.0));

    let d = lm.next_token(&[10, 11]).unwrap();
    assert_eq!(d.eos_logprob, f64::NEG_INFINITY);
}

#[test]
fn responses_serialize_back_to_the_recording() {
    let (t, lm) = load("session");
    for e in t.entries().iter().filter(|e| e.endpoint == NEXT_TOKEN) {
        let prefix: Vec<u32> = serde_json::from_value(e.request["prefix_tokens"].clone()).unwrap();
        let d = lm.next_token(&prefix).unwrap();
        assert_eq!(next_token_response(&d), e.response);
    }
}

#[test]
fn unlisted_tokens_are_scored_not_renormalized() {
    let (_, lm) = load("session");
    assert!(close(lm.token_logprob(&[10, 11], 12).unwrap(), 0.7f64.ln()));
    assert!(close(lm.token_logprob(&[10, 11], 14).unwrap(), 0.05f64.ln()));
    assert!(matches!(
        lm.token_logprob(&[10, 11], 15),
        Err(BridgeError::MissingFixture { .. })
    ));
}

#[test]
fn tokenize_and_text_score() {
    let (_, lm) = load("session");
    let tok = lm.tokenize("the cat").unwrap();
    assert_eq!(tok.tokens, vec![10, 11, 12]);
    assert_eq!(tok.word_ends, vec![true, false, true]);
    let want = (0.6f64 * 0.5 * 0.7 * 0.5).ln();
    assert!(close(lm.text_logprob("the cat").unwrap(), want));
}

#[test]
fn tag_heads() {
    let (_, lm) = load("session");
    let tags = lm.tags(&[10]).unwrap();
    assert_eq!(tags.odd.len(), 2);
    assert!(close(tags.even["R/NP"], 0.5f64.ln()));
}

#[test]
fn protocol_violations_are_errors() {
    let (t, lm) = load("broken");
    assert!(matches!(lm.next_token(&[99]), Err(BridgeError::Protocol(_))));
    assert!(matches!(lm.tokenize("bad"), Err(BridgeError::Protocol(_))));
    assert!(matches!(lm.tags(&[99]), Err(BridgeError::Protocol(_))));
    assert!(matches!(lm.score(&[99], 1), Err(BridgeError::Protocol(_))));
    assert!(matches!(
        t.post("/v1/next_token", &serde_json::json!({"prefix_tokens": [1]})),
        Err(BridgeError::MissingFixture { .. })
    ));
}

#[test]
fn words_are_cut_at_leading_space() {
    let (_, lm) = load("script");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = advance_word(&lm, &[], DEFAULT_MAX_TOKENS, &mut rng).unwrap();
    assert_eq!(d.word.as_deref(), Some("the"));
    assert_eq!(d.tokens, vec![10]);
    assert!(close(d.log_p, 0.6f64.ln()));
    assert!(close(d.log_q, 0.0));

    let d = advance_word(&lm, &[10], DEFAULT_MAX_TOKENS, &mut rng).unwrap();
    assert_eq!(d.word.as_deref(), Some("cat"));
    assert_eq!(d.tokens, vec![11, 12]);
    assert!(close(d.log_p, (0.5f64 * 0.7).ln()));

    assert!(matches!(
        advance_word(&lm, &[10], 1, &mut rng),
        Err(InferenceError::BoundaryUndetected(1))
    ));
}

#[test]
fn eos_and_word_after_a_finished_word() {
    let (_, lm) = load("script");
    let (mut eos, mut sat) = (0, 0);
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = advance_word(&lm, &[10, 11, 12], DEFAULT_MAX_TOKENS, &mut rng).unwrap();
        match d.word.as_deref() {
            None => {
                eos += 1;
                assert!(d.tokens.is_empty());
                assert!(close(d.log_p, 0.5f64.ln()));
                assert!(close(d.log_q, (0.5f64 / 0.9).ln()));
            }
            Some(w) => {
                sat += 1;
                assert_eq!(w, "sat");
                assert_eq!(d.tokens, vec![30]);
                assert!(close(d.log_q, (0.4f64 / 0.9).ln()));
            }
        }
    }
    assert!(eos > 0 && sat > 0);
}
