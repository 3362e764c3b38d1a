use std::io::Cursor;

use itriage::cache::{counts, read_corpus, write_corpus, CORPUS_MAGIC};
use itriage::checkpoint::{decode, encode};
use itriage::squad::parse_squad;
use serde_json::json;
use triage_core::config::{ModelConfig, Threshold, Variant};
use triage_core::corpus::synth_corpus;
use triage_core::params::init_params;

fn small(variant: Variant, weight_sharing: bool) -> ModelConfig {
    ModelConfig { d: 6, layers: 3, triage_layer: 1, variant, weight_sharing, seed: 9, ..ModelConfig::default() }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    for variant in [Variant::Independent, Variant::Conditional] {
        for sharing in [false, true] {
            let mut config = small(variant, sharing);
            config.threshold = Threshold::NEVER;
            let mut params = init_params(&config, 50).unwrap();
            // Values whose bit patterns a lossy encoding would disturb.
            params.embedding.as_mut_slice()[0] = -0.0;
            params.embedding.as_mut_slice()[1] = f64::MIN_POSITIVE / 3.0;
            params.embedding.as_mut_slice()[2] = 1.0 + f64::EPSILON;
            let bytes = encode(&config, &params);
            let back = decode(&bytes).unwrap();
            assert_eq!(back.config, config);
            for ((na, a), (nb, b)) in params.tensors().iter().zip(back.params.tensors().iter()) {
                assert_eq!(na, nb);
                let bits = |m: &triage_core::tensor::Mat| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(a), bits(b), "{na}");
            }
            assert_eq!(encode(&back.config, &back.params), bytes);
        }
    }
}

#[test]
fn checkpoint_rejects_corruption() {
    let config = small(Variant::Independent, false);
    let bytes = encode(&config, &init_params(&config, 10).unwrap());
    assert_eq!(decode(&bytes[..bytes.len() - 1]).unwrap_err().exit_code(), 2);
    let mut extra = bytes.clone();
    extra.push(0);
    assert_eq!(decode(&extra).unwrap_err().exit_code(), 2);
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert_eq!(decode(&magic).unwrap_err().exit_code(), 2);
    // Flip the weight-sharing flag: the name table no longer fits the header.
    let mut flipped = bytes;
    let flag_at = 5 + 5 * 8 + 8 + 1;
    flipped[flag_at] = 1;
    assert_eq!(decode(&flipped).unwrap_err().exit_code(), 4);
}

#[test]
fn corpus_cache_round_trip() {
    let samples = synth_corpus(3, 3, 4);
    let mut buf = Vec::new();
    write_corpus(&samples, &mut buf).unwrap();
    assert!(buf.starts_with(CORPUS_MAGIC.as_bytes()));
    let back = read_corpus(Cursor::new(&buf)).unwrap();
    assert_eq!(back, samples);
    let mut again = Vec::new();
    write_corpus(&back, &mut again).unwrap();
    assert_eq!(again, buf);
    let c = counts(&back);
    assert_eq!((c.documents, c.samples, c.paragraphs), (3, 12, 12));
}

#[test]
fn corpus_cache_errors_name_the_record() {
    let err = read_corpus(Cursor::new("nope\n")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let text = format!("{CORPUS_MAGIC}\n{{\"article\":0,\"paragraphs\":[\"A b.\"],\"samples\":[{{\"id\":\"q7\",\"question\":\"x\",\"golden\":0,\"answers\":[{{\"paragraph\":0,\"token_start\":0,\"token_end\":9,\"text\":\"A\"}}]}}]}}\n");
    let msg = read_corpus(Cursor::new(text)).unwrap_err().to_string();
    assert!(msg.contains("record 1") && msg.contains("q7"), "{msg}");
}

fn squad_json() -> serde_json::Value {
    json!({
        "version": "1.1",
        "data": [
            {
                "title": "Cats",
                "paragraphs": [
                    { "context": "Cats purr. They sleep.", "qas": [] },
                    {
                        "context": "The black cat sat on the mat.",
                        "qas": [
                            { "id": "a1", "question": "Where did it sit?", "answers": [
                                { "answer_start": 25, "text": "mat" },
                                { "answer_start": 21, "text": "the mat" }
                            ] },
                            { "id": "a2", "question": "Which cat?", "answers": [
                                { "answer_start": 5, "text": "lack" }
                            ] }
                        ]
                    },
                    { "context": "Dogs bark.", "qas": [] }
                ]
            },
            {
                "title": "Broken",
                "paragraphs": [
                    { "context": "Out of range.", "qas": [
                        { "id": "b1", "question": "What?", "answers": [ { "answer_start": 400, "text": "x" } ] }
                    ] }
                ]
            }
        ]
    })
}

#[test]
fn squad_documents_golden_paragraph_and_covering_tokens() {
    let loaded = parse_squad(&squad_json()).unwrap();
    assert_eq!(loaded.articles, 2);
    assert_eq!(loaded.excluded, vec!["b1".to_string()]);
    let a1 = loaded.samples.iter().find(|s| s.id == "a1").unwrap();
    assert_eq!(a1.document.len(), 3);
    assert_eq!(a1.golden_paragraph_id, Some(1));
    let g = &a1.gold_answers[0];
    assert_eq!(a1.document[1].span_text(g.token_start, g.token_end), "mat");
    assert_eq!(a1.gold_answers.len(), 2);
    // "lack" starts inside "black": the covering token is used.
    let a2 = loaded.samples.iter().find(|s| s.id == "a2").unwrap();
    let g = &a2.gold_answers[0];
    assert_eq!(a2.document[1].span_text(g.token_start, g.token_end), "black");
}

#[test]
fn malformed_squad_names_the_record() {
    let mut v = squad_json();
    v["data"][0]["paragraphs"][1]["qas"][1]["answers"][0]
        .as_object_mut()
        .unwrap()
        .remove("answer_start");
    let err = parse_squad(&v).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("data[0].paragraphs[1].qas[1] (id a2)") && msg.contains("answer_start"), "{msg}");
    assert!(parse_squad(&json!({"nodata": 1})).is_err());
}
