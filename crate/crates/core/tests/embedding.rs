use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use proptest::prelude::*;
use tablematch_core::attributes::select_attributes;
use tablematch_core::embedding::{embed_batch, EmbedderSpec};
use tablematch_core::error::Error;
use tablematch_core::synth::{generate_synthetic, SynthParams};
use tablematch_core::model::validate_dataset;

/// Cosine similarity of raw character n-gram count vectors, with no hashing.
fn ngram_cosine(a: &str, b: &str, lo: usize, hi: usize) -> f64 {
    let counts = |s: &str| {
        let chars: Vec<char> = s.chars().collect();
        let mut m: HashMap<String, f64> = HashMap::new();
        for n in lo..=hi {
            for w in chars.windows(n) {
                *m.entry(w.iter().collect()).or_default() += 1.0;
            }
        }
        m
    };
    let (x, y) = (counts(a), counts(b));
    let dot: f64 = x.iter().map(|(k, v)| v * y.get(k).copied().unwrap_or(0.0)).sum();
    let norm = |m: &HashMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    dot / (norm(&x) * norm(&y))
}

#[test]
fn shared_ngrams_raise_similarity() {
    let spec = EmbedderSpec::hashing(64, (2, 3));
    let texts: Vec<String> = ["abc", "abd", "xyz"].map(String::from).to_vec();
    let v = embed_batch(&texts, &spec).unwrap();
    let (near, far) = (v[0].cosine_similarity(&v[1]), v[0].cosine_similarity(&v[2]));
    let (ref_near, ref_far) = (ngram_cosine("abc", "abd", 2, 3), ngram_cosine("abc", "xyz", 2, 3));
    assert!(ref_near > ref_far);
    assert!(near > far, "hashed {near} vs {far}, reference {ref_near} vs {ref_far}");
}

proptest! {
    #[test]
    fn hashed_embeddings_are_unit(text in "\\PC{0,40}", dim in 8usize..256) {
        let v = embed_batch(&[text], &EmbedderSpec::hashing(dim, (2, 4))).unwrap();
        prop_assert!((v[0].norm() - 1.0).abs() < 1e-6);
        prop_assert!(v[0].as_slice().iter().all(|x| x.is_finite()));
    }
}

#[test]
fn attribute_selection_is_deterministic() {
    let data = generate_synthetic(&SynthParams { tables: 3, rows: 40, clusters: 15, noise: 0.05, seed: 2 }).unwrap();
    let ds = validate_dataset(data.tables).unwrap();
    let spec = EmbedderSpec::default();
    let a = select_attributes(&ds, &spec, 0.5, 0.9, 11).unwrap();
    let b = select_attributes(&ds, &spec, 0.5, 0.9, 11).unwrap();
    assert_eq!(a, b);
    assert!(!a.selected().is_empty());
}

/// Serves `responses` one connection at a time, replying with embeddings of
/// the given width for each requested text.
fn mock_server(width: usize, connections: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(connections) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let texts = req["texts"].as_array().unwrap();
            let embeddings: Vec<Vec<f32>> = texts
                .iter()
                .map(|t| {
                    let len = t.as_str().unwrap().len();
                    (0..width).map(|i| if i == len % width { 3.0 } else { 0.0 }).collect()
                })
                .collect();
            let out = serde_json::to_vec(&serde_json::json!({ "embeddings": embeddings })).unwrap();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                out.len()
            )
            .unwrap();
            stream.write_all(&out).unwrap();
        }
    });
    format!("http://{addr}/embed")
}

#[test]
fn remote_embedder_normalizes_service_vectors() {
    let url = mock_server(8, 2);
    let spec = EmbedderSpec { batch_size: 2, ..EmbedderSpec::remote(url, 8) };
    let texts: Vec<String> = ["a", "bb", "ccc"].map(String::from).to_vec();
    let v = embed_batch(&texts, &spec).unwrap();
    assert_eq!(v.len(), 3);
    for (i, e) in v.iter().enumerate() {
        assert_eq!(e.as_slice()[i + 1], 1.0);
        assert!((e.norm() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn remote_width_mismatch_is_reported() {
    let url = mock_server(16, 1);
    let err = embed_batch(&["x".to_string()], &EmbedderSpec::remote(url, 8)).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 8, found: 16 }), "{err:?}");
}
