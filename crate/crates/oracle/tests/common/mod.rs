//! Fixtures shared by the oracle integration suites.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};

use mcal_core::config::ExperimentConfig;
use mcal_core::data::{ImageSet, RawImages};

/// `per_class` 10x10 images per class, each marked by a bright block at a
/// class-specific position on a hashed noise background.
pub fn images(classes: usize, per_class: usize, salt: u64) -> ImageSet {
    let side = 10;
    let n = classes * per_class;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * side * side);
    for i in 0..n {
        let l = (i * 7 + salt as usize) % classes;
        labels.push(l as u8);
        let (r0, c0) = (1 + (l * 3) % 7, 1 + (l * 5) % 7);
        for r in 0..side {
            for c in 0..side {
                let h = (i as u64 * 1_000_003 + (r * side + c) as u64 * 7919 + salt).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let noise = (h >> 40) as f32 / (1u64 << 24) as f32 * 0.3;
                let on = (r0..r0 + 3).contains(&r) && (c0..c0 + 3).contains(&c);
                pixels.push(((if on { 0.8 } else { 0.0 }) + noise).min(1.0));
            }
        }
    }
    let raw = RawImages {
        count: n,
        rows: side,
        cols: side,
        pixels,
    };
    ImageSet::new(raw, labels, classes).unwrap()
}

pub fn tiny_config(classes: usize) -> ExperimentConfig {
    ExperimentConfig {
        experiment_id: "oracle-test".into(),
        conv_filters: 2,
        conv_kernel: 3,
        hidden_units: 8,
        initial_train_size: 2 * classes,
        validation_size: 6,
        learning_rate: 0.1,
        batch_size: 8,
        max_epochs: 3,
        early_stop_patience: 2,
        acquisition_size: 10,
        rounds: 2,
        mc_samples: 4,
        ..ExperimentConfig::default()
    }
}

/// Minimal HTTP/1.1 client: returns the status code and body.
pub fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    let body = body.unwrap_or("");
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let status = response[9..12].parse().unwrap();
    let (head, rest) = response.split_once("\r\n\r\n").unwrap();
    let body = if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        dechunk(rest)
    } else {
        rest.to_string()
    };
    (status, body)
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = s.split_once("\r\n").unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
}
