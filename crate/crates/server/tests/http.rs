use std::sync::Arc;

use abdkit::phantom::{generate, PhantomSpec};
use abdkit::seg::{segment_volume, SegParams, Tissue};
use abdkit::volume::{Dims, Spacing};
use abdkit_server::api::router;
use abdkit_server::cli::{execute, Command, FormatArg, QuantifyArgs};
use abdkit_server::store::{Localization, Store, MASKS_FILE, VOLUME_FILE};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn spec() -> PhantomSpec {
    PhantomSpec {
        dims: Dims::new(10, 128, 128),
        spacing: Spacing::new(5.0, 2.5, 2.5).unwrap(),
        abdomen_start: 2,
        abdomen_end: 7,
        body_radii_mm: (120.0, 145.0),
        ..PhantomSpec::default()
    }
}

fn setup() -> (tempfile::TempDir, Arc<Store>) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let p = generate(&spec()).unwrap();
    let loc = Localization {
        start: 2,
        end: 7,
        method: "manual".into(),
    };
    store.create("ph1", p.volume, None, Some(loc)).unwrap();
    (dir, store)
}

async fn call(store: &Arc<Store>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(store.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(store: &Arc<Store>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(store, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

/// One stroke per row, radius 0: a `side x side` square of pixels.
fn square(base: u64, slice: usize, label: u8, x0: usize, y0: usize, side: usize) -> Value {
    let strokes: Vec<Value> = (0..side)
        .map(|i| {
            json!({
                "label": label,
                "brush_radius_px": 0.0,
                "points": [{"x": x0, "y": y0 + i}, {"x": x0 + side - 1, "y": y0 + i}]
            })
        })
        .collect();
    json!({"base_version": base, "slice_index": slice, "strokes": strokes})
}

#[tokio::test]
async fn studies_listing_and_404() {
    let (_d, store) = setup();
    let (s, v) = call_json(&store, "GET", "/api/studies", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v[0]["id"], "ph1");
    let (s, v) = call_json(&store, "GET", "/api/studies/ph1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["dims"], json!({"depth": 10, "rows": 128, "cols": 128}));
    assert_eq!(v["localization"]["start"], 2);
    assert_eq!(v["mask_version"], 0);
    for uri in ["/api/studies/nope", "/api/studies/nope/report", "/api/studies/nope/slice?index=0"] {
        assert_eq!(call(&store, "GET", uri, None).await.0, StatusCode::NOT_FOUND);
    }
    let (s, _) = call(&store, "POST", "/api/studies/nope/edits", Some(square(0, 3, 1, 0, 0, 2))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

fn png_dims(bytes: &[u8]) -> (u32, u32, png::ColorType) {
    let r = png::Decoder::new(std::io::Cursor::new(bytes.to_vec())).read_info().unwrap();
    let i = r.info();
    (i.width, i.height, i.color_type)
}

#[tokio::test]
async fn slices_and_masks() {
    let (_d, store) = setup();
    let (s, b) = call(&store, "GET", "/api/studies/ph1/slice?plane=axial&index=4", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(png_dims(&b), (128, 128, png::ColorType::Grayscale));
    let (s, b) = call(&store, "GET", "/api/studies/ph1/slice?plane=coronal&index=64&window=-100,800", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(png_dims(&b), (128, 10, png::ColorType::Grayscale));

    for bad in [
        "/api/studies/ph1/slice?plane=axial&index=10",
        "/api/studies/ph1/slice?plane=oblique&index=1",
        "/api/studies/ph1/slice?index=x",
        "/api/studies/ph1/slice?index=1&window=40",
        "/api/studies/ph1/slice?index=1&window=40,0",
        "/api/studies/ph1/mask?index=1&format=tiff",
        "/api/studies/ph1/mask?plane=sagittal&index=128",
    ] {
        assert_eq!(call(&store, "GET", bad, None).await.0, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
    }

    let (s, b) = call(&store, "GET", "/api/studies/ph1/mask?plane=sagittal&index=64", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(png_dims(&b), (128, 10, png::ColorType::Indexed));
    let (s, raw) = call(&store, "GET", "/api/studies/ph1/mask?plane=axial&index=4&format=raw", None).await;
    assert_eq!(s, StatusCode::OK);
    let snap = store.get("ph1").unwrap().snapshot();
    assert_eq!(raw, snap.masks.slice(4).unwrap().labels());
    assert!(raw.contains(&(Tissue::Sfa as u8)));
}

#[tokio::test]
async fn edit_changes_report_by_pixel_arithmetic() {
    let (_d, store) = setup();
    let (_, before) = call_json(&store, "GET", "/api/studies/ph1/report", None).await;
    // the corner of slice 4 is air, labelled background
    let (s, v) = call_json(&store, "POST", "/api/studies/ph1/edits", Some(square(0, 4, 1, 2, 3, 5))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["new_version"], 1);
    let (_, after) = call_json(&store, "GET", "/api/studies/ph1/report", None).await;
    let row = 4 - 2;
    let px = |r: &Value| r["slices"][row]["pixels"][0].as_u64().unwrap();
    assert_eq!(px(&after), px(&before) + 25);
    let area = |r: &Value| r["slices"][row]["area_cm2"]["muscle"].as_f64().unwrap();
    assert_eq!(area(&after) - area(&before), 25.0 * 2.5 * 2.5 / 100.0);
    // other slices untouched
    assert_eq!(after["slices"][0], before["slices"][0]);
}

#[tokio::test]
async fn bad_batches_are_422_and_atomic() {
    let (_d, store) = setup();
    let before = store.get("ph1").unwrap().snapshot().masks.clone();
    let mut batch = square(0, 4, 1, 0, 0, 3);
    batch["strokes"][1]["points"][1]["x"] = json!(500);
    let (s, v) = call_json(&store, "POST", "/api/studies/ph1/edits", Some(batch)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["fields"][0]["field"], "strokes[1].points[1]");
    let (s, v) = call_json(&store, "POST", "/api/studies/ph1/edits", Some(json!({"base_version": 0}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["fields"][0]["field"], "body");
    let (s, _) = call_json(&store, "POST", "/api/studies/ph1/edits", Some(json!({"base_version": 0, "slice_index": 1, "strokes": []}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let snap = store.get("ph1").unwrap().snapshot();
    assert_eq!(snap.meta.mask_version, 0);
    assert_eq!(*snap.masks, *before);
    assert!(store.get("ph1").unwrap().edit_log().unwrap().is_empty());
}

#[tokio::test]
async fn stale_base_is_409() {
    let (_d, store) = setup();
    let (s, _) = call(&store, "POST", "/api/studies/ph1/edits", Some(square(0, 3, 2, 0, 0, 2))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = call_json(&store, "POST", "/api/studies/ph1/edits", Some(square(0, 3, 3, 0, 0, 2))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["current_version"], 1);
}

#[tokio::test]
async fn resegment_and_replay() {
    let (_d, store) = setup();
    let study = store.get("ph1").unwrap();
    call(&store, "POST", "/api/studies/ph1/edits", Some(square(0, 4, 1, 0, 0, 4))).await;
    let (s, v) = call_json(&store, "POST", "/api/studies/ph1/resegment", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["new_version"], 2);
    let snap = study.snapshot();
    let fresh = segment_volume(&snap.volume, 2, 7, &SegParams::default()).unwrap();
    assert_eq!(*snap.masks, fresh);
    call(&store, "POST", "/api/studies/ph1/edits", Some(square(2, 5, 3, 10, 10, 3))).await;
    assert_eq!(study.snapshot().meta.mask_version, 3);
    assert_eq!(study.replay().unwrap(), *study.snapshot().masks);
}

#[tokio::test]
async fn report_matches_cli_quantify() {
    let (d, store) = setup();
    call(&store, "POST", "/api/studies/ph1/edits", Some(square(0, 6, 2, 30, 30, 6))).await;
    let (_, served) = call_json(&store, "GET", "/api/studies/ph1/report", None).await;
    let study_dir = d.path().join("ph1");
    let mut out = Vec::new();
    execute(
        Command::Quantify(QuantifyArgs {
            volume: study_dir.join(VOLUME_FILE),
            masks: study_dir.join(MASKS_FILE),
            start: Some(2),
            end: Some(7),
            format: FormatArg::Json,
            out: None,
        }),
        &mut out,
    )
    .unwrap();
    let cli: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(cli, served);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_same_base_edits_over_tcp() {
    let (_d, store) = setup();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(store.clone());
    let server = tokio::spawn(async move { axum::serve(listener, app).await });
    let client = reqwest::Client::new();
    let url = format!("http://{addr}/api/studies/ph1/edits");
    let post = |label: u8| client.post(&url).json(&square(0, 4, label, 0, 0, 6)).send();
    let (a, b) = tokio::join!(post(1), post(3));
    let mut codes = vec![a.unwrap().status().as_u16(), b.unwrap().status().as_u16()];
    codes.sort();
    assert_eq!(codes, [200, 409]);
    assert_eq!(store.get("ph1").unwrap().snapshot().meta.mask_version, 1);
    server.abort();
}
