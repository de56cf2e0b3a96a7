//! Launching services over fixture files.
#![allow(dead_code)]

use std::path::PathBuf;

use nidm_core::codecs::{parse, Format};
use nidm_core::model::Record;
use nidm_service::{serve, ApiConfig, ServiceHandle};
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn config(stores: &[&str]) -> ApiConfig {
    ApiConfig {
        store_paths: stores
            .iter()
            .map(|s| match s.split_once('=') {
                Some((tag, file)) => format!("{tag}={}", fixture(file).display()),
                None => fixture(s).display().to_string(),
            })
            .collect(),
        registry_path: Some(fixture("registry.terms")),
        ..ApiConfig::default()
    }
}

pub async fn launch(stores: &[&str]) -> ServiceHandle {
    serve(config(stores)).await.unwrap()
}

pub struct Reply {
    pub status: u16,
    pub headers: reqwest::header::HeaderMap,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

pub async fn get(url: String) -> Reply {
    let r = reqwest::get(url).await.unwrap();
    Reply {
        status: r.status().as_u16(),
        headers: r.headers().clone(),
        body: r.text().await.unwrap(),
    }
}

pub async fn post(url: String, content_type: &str, body: String) -> Reply {
    let r = reqwest::Client::new()
        .post(url)
        .header("content-type", content_type)
        .body(body)
        .send()
        .await
        .unwrap();
    Reply {
        status: r.status().as_u16(),
        headers: r.headers().clone(),
        body: r.text().await.unwrap(),
    }
}

/// The record inside a single-record response in any format.
pub fn single_record(format: Format, body: &str) -> Record {
    let doc = if format == Format::Json {
        let v: Value = serde_json::from_str(body).unwrap();
        nidm_core::codecs::document_from_json_value(&v["document"]).unwrap()
    } else {
        parse(format, body).unwrap()
    };
    assert_eq!(doc.len(), 1, "{body}");
    doc.records()[0].clone()
}

/// (source, id) pairs of a JSON list envelope.
pub fn row_keys(envelope: &Value) -> Vec<(String, String)> {
    envelope["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["source"].as_str().unwrap().to_string(), r["id"].as_str().unwrap().to_string()))
        .collect()
}

/// Statements of a PROV-N file that start with `keyword(`, as raw text,
/// found by scanning for balanced parentheses.
pub fn statements<'a>(text: &'a str, keyword: &str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let needle = format!("{keyword}(");
    let mut rest = text;
    while let Some(pos) = rest.find(&needle) {
        let at_start = pos == 0 || rest[..pos].ends_with(|c: char| c.is_whitespace());
        let body = &rest[pos..];
        let mut depth = 0;
        let mut end = body.len();
        for (i, c) in body.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        end = i + 1;
                        break;
                    }
                }
                _ => {}
            }
        }
        if at_start {
            out.push(&body[..end]);
        }
        rest = &body[end..];
    }
    out
}
