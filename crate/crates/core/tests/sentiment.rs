use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate};
use eapred::data::{FirmId, NewsArticle};
use eapred::exec::Execution;
use eapred::sentiment::{
    aggregate_daily, assign_day, daily_sentiment, headline_digest, InputText, LexiconProvider, PrecomputedProvider,
    PrecomputedRecord, ProviderConfig, RemoteConfig, RemoteProvider, SentimentError, SentimentProvider,
    SentimentVector,
};
use proptest::prelude::*;

fn article(ts: &str, headline: &str, body: &str) -> NewsArticle {
    NewsArticle {
        firm_id: FirmId::new("ACME"),
        timestamp: DateTime::parse_from_rfc3339(ts).unwrap(),
        headline: headline.into(),
        body: body.into(),
    }
}

fn sv(a: f64, b: f64, c: f64) -> SentimentVector {
    SentimentVector::new(a, b, c).unwrap()
}

#[test]
fn lexicon_positive_body() {
    let p = LexiconProvider::new(InputText::Body);
    let v = p.score(&article("2023-03-01T10:00:00-05:00", "", "profit rises beats strong")).unwrap();
    // word-count oracle: counts (4, 0, 0) smoothed over 7
    assert!((v.p_positive - 5.0 / 7.0).abs() < 1e-15);
    assert!((v.p_negative - 1.0 / 7.0).abs() < 1e-15);
    assert!((v.p_neutral - 1.0 / 7.0).abs() < 1e-15);
    assert!(v.p_positive > v.p_negative && v.p_positive > v.p_neutral);
}

#[test]
fn lexicon_empty_body_is_neutral() {
    let p = LexiconProvider::default();
    let v = p.score(&article("2023-03-01T10:00:00-05:00", "", "")).unwrap();
    assert_eq!(v.to_array(), [0.0, 0.0, 1.0]);
}

#[test]
fn input_granularity() {
    let a = article("2023-03-01T10:00:00-05:00", "profit", "loss");
    let head = LexiconProvider::new(InputText::Headline).score(&a).unwrap();
    let body = LexiconProvider::new(InputText::Body).score(&a).unwrap();
    let both = LexiconProvider::default().score(&a).unwrap();
    assert!(head.p_positive > head.p_negative);
    assert!(body.p_negative > body.p_positive);
    assert_eq!(both.p_positive, both.p_negative);
}

#[test]
fn precomputed_passthrough_and_missing_key() {
    let a = article("2023-03-01T10:00:00-05:00", "ACME beats", "x");
    let rec = PrecomputedRecord {
        firm_id: FirmId::new("ACME"),
        // same instant, different offset
        timestamp: DateTime::parse_from_rfc3339("2023-03-01T15:00:00+00:00").unwrap(),
        headline_digest: headline_digest("ACME beats"),
        p_positive: 0.7,
        p_negative: 0.1,
        p_neutral: 0.2,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.jsonl");
    std::fs::write(&path, serde_json::to_string(&rec).unwrap() + "\n").unwrap();
    let p = ProviderConfig::PrecomputedFile { path }.build().unwrap();
    assert_eq!(p.score(&a).unwrap().to_array(), [0.7, 0.1, 0.2]);

    let other = article("2023-03-01T10:00:01-05:00", "ACME beats", "x");
    match p.score(&other) {
        Err(SentimentError::Lookup { key }) => assert!(key.starts_with("ACME|2023-03-01T15:00:01")),
        r => panic!("unexpected {r:?}"),
    }
}

#[test]
fn precomputed_file_rejects_off_simplex_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.jsonl");
    std::fs::write(
        &path,
        r#"{"firm_id":"A","timestamp":"2023-03-01T10:00:00Z","headline_digest":"x","p_positive":0.5,"p_negative":0.5,"p_neutral":0.5}"#,
    )
    .unwrap();
    assert!(matches!(PrecomputedProvider::load(&path), Err(SentimentError::ScoreFile { line: 1, .. })));
}

#[test]
fn aggregate_examples() {
    assert_eq!(aggregate_daily(&[sv(0.6, 0.3, 0.1)]).unwrap(), sv(0.6, 0.3, 0.1));
    assert_eq!(aggregate_daily(&[sv(1.0, 0.0, 0.0), sv(0.0, 1.0, 0.0)]).unwrap().to_array(), [0.5, 0.5, 0.0]);
    assert!(matches!(aggregate_daily(&[]), Err(SentimentError::Empty)));
}

fn simplex() -> impl Strategy<Value = SentimentVector> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_filter_map("degenerate", |(a, b, c)| {
        let s = a + b + c;
        if s < 1e-6 {
            return None;
        }
        let (a, b) = (a / s, b / s);
        Some(SentimentVector {
            p_positive: a,
            p_negative: b,
            p_neutral: (1.0 - a - b).max(0.0),
        })
    })
}

proptest! {
    #[test]
    fn aggregate_matches_brute_force_mean(vs in prop::collection::vec(simplex(), 1..12)) {
        let m = aggregate_daily(&vs).unwrap();
        let n = vs.len() as f64;
        for k in 0..3 {
            let oracle: f64 = vs.iter().map(|v| v.to_array()[k]).sum::<f64>() / n;
            prop_assert!((m.to_array()[k] - oracle).abs() < 1e-12);
        }
        let s: f64 = m.to_array().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
        prop_assert!(m.to_array().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn aggregate_is_permutation_invariant(vs in prop::collection::vec(simplex(), 1..12), seed in any::<u64>()) {
        let mut shuffled = vs.clone();
        eapred::numerics::RngStream::new(seed).shuffle(&mut shuffled);
        prop_assert_eq!(aggregate_daily(&vs).unwrap(), aggregate_daily(&shuffled).unwrap());
    }
}

#[test]
fn day_assignment_uses_new_york_close() {
    let day = |s: &str| assign_day(&DateTime::parse_from_rfc3339(s).unwrap());
    let date = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
    assert_eq!(day("2023-03-01T15:59:59-05:00"), date("2023-03-01"));
    assert_eq!(day("2023-03-01T16:00:00-05:00"), date("2023-03-02"));
    // 20:30 UTC is 16:30 EDT in summer but 15:30 EST in winter
    assert_eq!(day("2023-07-10T20:30:00Z"), date("2023-07-11"));
    assert_eq!(day("2023-01-10T20:30:00Z"), date("2023-01-10"));
    // early morning UTC is still the previous evening in New York
    assert_eq!(day("2023-01-11T02:00:00Z"), date("2023-01-11"));
}

#[test]
fn daily_sentiment_groups_and_is_deterministic() {
    let articles = vec![
        article("2023-03-01T10:00:00-05:00", "profit", ""),
        article("2023-03-01T17:00:00-05:00", "loss", ""),
        article("2023-03-02T09:00:00-05:00", "", ""),
    ];
    let p = LexiconProvider::default();
    let a = daily_sentiment(&articles, &p, Execution::Parallel).unwrap();
    let b = daily_sentiment(&articles, &p, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2);
    let second = a[&NaiveDate::from_ymd_opt(2023, 3, 2).unwrap()];
    // (0.25, 0.5, 0.25) averaged with (0, 0, 1)
    assert_eq!(second.to_array(), [0.125, 0.25, 0.625]);
}

/// Serves scripted (status, body) responses, one per connection.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/score", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for (status, body) in script {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0u8; len];
            reader.read_exact(&mut req).unwrap();
            let parsed: serde_json::Value = serde_json::from_slice(&req).unwrap();
            assert!(parsed.get("headline").is_some() && parsed.get("body").is_some());
            counter.fetch_add(1, Ordering::SeqCst);
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (url, hits)
}

fn remote_config(url: String, cache: Option<std::path::PathBuf>) -> RemoteConfig {
    RemoteConfig {
        timeout_ms: 2000,
        backoff_ms: 5,
        cache_dir: cache,
        ..RemoteConfig::new(url)
    }
}

const OK_BODY: &str = r#"{"p_positive":0.2,"p_negative":0.3,"p_neutral":0.5}"#;

#[test]
fn remote_retries_then_caches() {
    let (url, hits) = serve(vec![(503, "busy".into()), (200, OK_BODY.into())]);
    let cache = tempfile::tempdir().unwrap();
    let p = RemoteProvider::new(remote_config(url.clone(), Some(cache.path().into()))).unwrap();
    let a = article("2023-03-01T10:00:00-05:00", "h", "b");
    assert_eq!(p.score(&a).unwrap().to_array(), [0.2, 0.3, 0.5]);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    // the server has exited; a fresh provider answers from the cache
    let again = RemoteProvider::new(remote_config(url, Some(cache.path().into()))).unwrap();
    assert_eq!(again.score(&a).unwrap().to_array(), [0.2, 0.3, 0.5]);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn remote_gives_up_after_three_attempts() {
    let (url, hits) = serve(vec![(500, "x".into()), (500, "x".into()), (500, "x".into())]);
    let p = RemoteProvider::new(remote_config(url, None)).unwrap();
    match p.score(&article("2023-03-01T10:00:00-05:00", "h", "b")) {
        Err(SentimentError::Transport { attempts, status, .. }) => {
            assert_eq!(attempts, 3);
            assert_eq!(status, Some(500));
        }
        r => panic!("unexpected {r:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn remote_malformed_body_is_a_transport_error() {
    let bad = r#"{"p_positive":0.9,"p_negative":0.9,"p_neutral":0.9}"#;
    let (url, _) = serve(vec![(200, "not json".into()), (200, bad.into()), (200, "{}".into())]);
    let p = RemoteProvider::new(remote_config(url, None)).unwrap();
    let err = p.score(&article("2023-03-01T10:00:00-05:00", "h", "b")).unwrap_err();
    assert!(matches!(err, SentimentError::Transport { attempts: 3, status: Some(200), .. }), "{err}");
}

#[test]
fn remote_unreachable_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/score", listener.local_addr().unwrap());
    drop(listener);
    let p = RemoteProvider::new(remote_config(url, None)).unwrap();
    let err = p.score(&article("2023-03-01T10:00:00-05:00", "h", "b")).unwrap_err();
    assert!(matches!(err, SentimentError::Transport { attempts: 3, status: None, .. }), "{err}");
}
