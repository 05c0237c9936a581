//! Start the annotation API on a free port against a temporary store and
//! walk through one correction session over HTTP.
//!
//! ```text
//! cargo run -p abdkit-server --example study_session
//! ```

use std::sync::Arc;

use abdkit::phantom::{generate, PhantomSpec};
use abdkit::volume::{Dims, Spacing};
use abdkit_server::api::router;
use abdkit_server::store::{Localization, Store};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = Arc::new(Store::open(dir.path())?);
    let spec = PhantomSpec {
        dims: Dims::new(12, 128, 128),
        spacing: Spacing::new(5.0, 2.5, 2.5)?,
        abdomen_start: 3,
        abdomen_end: 8,
        body_radii_mm: (120.0, 145.0),
        ..PhantomSpec::default()
    };
    let p = generate(&spec)?;
    let loc = Localization { start: 3, end: 8, method: "manual".into() };
    store.create("demo", p.volume, None, Some(loc))?;

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}/api/studies", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, router(store)).await });
    let http = reqwest::Client::new();

    let studies: Value = http.get(&base).send().await?.json().await?;
    println!("GET /api/studies -> {studies}");

    let png = http.get(format!("{base}/demo/slice?plane=coronal&index=64&window=40,400")).send().await?;
    println!("coronal slice: {} {} bytes", png.status(), png.bytes().await?.len());
    let raw = http.get(format!("{base}/demo/mask?index=5&format=raw")).send().await?;
    let (rows, cols) = (raw.headers()["x-mask-rows"].to_str()?.to_owned(), raw.headers()["x-mask-cols"].to_str()?.to_owned());
    println!("raw mask slice 5: {rows}x{cols}, version {}", raw.headers()["x-mask-version"].to_str()?);

    let area = |r: &Value| r["slices"][2]["area_cm2"]["muscle"].as_f64().unwrap_or(0.0);
    let before: Value = http.get(format!("{base}/demo/report")).send().await?.json().await?;

    // paint a 3 px wide muscle stroke across the air in the top-left corner
    let edit = |base_version: u64| {
        json!({
            "base_version": base_version,
            "slice_index": 5,
            "strokes": [{"label": 1, "brush_radius_px": 1.0, "points": [{"x": 2, "y": 3}, {"x": 21, "y": 3}]}]
        })
    };
    let r = http.post(format!("{base}/demo/edits")).json(&edit(0)).send().await?;
    println!("edit on version 0: {} {}", r.status(), r.text().await?);
    let after: Value = http.get(format!("{base}/demo/report")).send().await?.json().await?;
    println!("muscle on slice 5: {:.4} -> {:.4} cm2", area(&before), area(&after));

    let r = http.post(format!("{base}/demo/edits")).json(&edit(0)).send().await?;
    println!("stale edit: {} {}", r.status(), r.text().await?);
    let mut bad = edit(1);
    bad["strokes"][0]["label"] = json!(9);
    let r = http.post(format!("{base}/demo/edits")).json(&bad).send().await?;
    println!("bad label: {} {}", r.status(), r.text().await?);

    let r = http.post(format!("{base}/demo/resegment")).send().await?;
    println!("resegment: {} {}", r.status(), r.text().await?);
    let log = std::fs::read_to_string(dir.path().join("demo").join("edits.jsonl"))?;
    println!("edit log:");
    for line in log.lines() {
        println!("  {}", &line[..line.len().min(110)]);
    }
    Ok(())
}
