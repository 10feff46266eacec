#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use misc::io::{decode_png, encode_png};
use misc_core::{Backend, BackendError, MockBackend, RgbImage};
use serde_json::{json, Value};

pub struct Request {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).expect("client sends JSON")
    }
}

pub enum Reply {
    Respond(u16, Vec<u8>),
    /// Close the connection without answering.
    Hangup,
    Sleep(std::time::Duration),
}

/// Minimal one-request-per-connection HTTP server on a random local port.
pub struct Server {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    let len: usize = headers.iter().find(|(k, _)| k == "content-length").and_then(|(_, v)| v.parse().ok()).unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Request { path, headers, body })
}

pub fn serve<F>(handler: F) -> Server
where
    F: Fn(&Request, usize) -> Reply + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let handler = Arc::new(handler);
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let handler = handler.clone();
            let counter = counter.clone();
            thread::spawn(move || {
                let Some(req) = read_request(&mut stream) else { return };
                let n = counter.fetch_add(1, Ordering::SeqCst);
                match handler(&req, n) {
                    Reply::Hangup => {}
                    Reply::Sleep(d) => thread::sleep(d),
                    Reply::Respond(status, body) => {
                        let head = format!(
                            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                            body.len()
                        );
                        let _ = stream.write_all(head.as_bytes());
                        let _ = stream.write_all(&body);
                    }
                }
            });
        }
    });
    Server { url, hits }
}

fn image_field(v: &Value, key: &str) -> Result<RgbImage, BackendError> {
    let s = v[key].as_str().ok_or_else(|| BackendError::InvalidRequest(format!("missing {key}")))?;
    decode_png(&B64.decode(s).unwrap()).map_err(|e| BackendError::InvalidRequest(e.to_string()))
}

fn png(img: &RgbImage) -> String {
    B64.encode(encode_png(img).unwrap())
}

fn tensor(t: misc_core::FeatureTensor) -> Value {
    let (rows, cols) = t.grid();
    let bytes: Vec<u8> = t.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    json!({ "rows": rows, "cols": cols, "channels": t.channels(), "data": B64.encode(bytes) })
}

/// Answers protocol requests the way the mock backend would.
pub fn stub_reply(req: &Request) -> Result<Value, BackendError> {
    let v = req.json();
    let seed = v["seed"].as_u64().unwrap_or(0);
    let mock = MockBackend::new(seed);
    Ok(match req.path.as_str() {
        "/v1/describe" => {
            let d = mock.describe(&image_field(&v, "image")?)?;
            let items: Vec<Value> = d.items.iter().map(|(n, t)| json!({ "name": n, "detail": t })).collect();
            json!({ "items": items, "detail_all": d.detail_all })
        }
        "/v1/embed/image" => tensor(mock.embed_image(&image_field(&v, "image")?)?),
        "/v1/embed/text" => tensor(mock.embed_text(v["text"].as_str().unwrap_or_default())?),
        "/v1/diffuse" => {
            let out = mock.diffuse(&image_field(&v, "image")?, v["prompt"].as_str().unwrap(), v["steps"].as_u64().unwrap() as u32)?;
            json!({ "image": png(&out) })
        }
        "/v1/codec/encode" => {
            let bytes = mock.neural_encode(&image_field(&v, "image")?, v["quality"].as_u64().unwrap() as u8)?;
            json!({ "bytes": B64.encode(bytes) })
        }
        "/v1/codec/decode" => {
            let img = mock.neural_decode(&B64.decode(v["bytes"].as_str().unwrap()).unwrap())?;
            json!({ "image": png(&img) })
        }
        "/v1/metrics" => {
            let m = mock.metrics(&image_field(&v, "image")?, &image_field(&v, "reference")?)?;
            let mut obj = serde_json::Map::new();
            for (k, x) in m.values {
                obj.insert(k, json!(x));
            }
            json!({ "metrics": obj })
        }
        other => return Err(BackendError::InvalidRequest(format!("no route {other}"))),
    })
}

pub fn stub_server() -> Server {
    serve(|req, _| match stub_reply(req) {
        Ok(v) => Reply::Respond(200, serde_json::to_vec(&v).unwrap()),
        Err(e) => Reply::Respond(400, serde_json::to_vec(&json!({ "error": { "code": "bad_request", "message": e.to_string() } })).unwrap()),
    })
}

pub fn test_image(w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let blob = ((x as i64 - w as i64 / 3).pow(2) + (y as i64 - h as i64 / 2).pow(2)) < (w as i64 / 5).pow(2);
        if blob {
            [220, 40, 30]
        } else {
            [(x * 255 / w.max(2)) as u8, (y * 200 / h.max(2)) as u8, 90]
        }
    })
}
