use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use consilium_api::{router, ApiConfig, AppState, ADJUDICATOR_HEADER};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

struct Harness {
    dir: tempfile::TempDir,
    state: AppState,
}

impl Harness {
    fn with_runs(populate: impl FnOnce(&Path), read_only: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        populate(dir.path());
        let config = ApiConfig { runs_dir: dir.path().into(), corpus_dir: workspace().join("corpus"), read_only };
        Harness { state: AppState::new(&config).unwrap(), dir }
    }

    fn fixtures() -> Self {
        Self::with_runs(|root| copy_dir(&workspace().join("fixtures/runs"), root), false)
    }

    fn run_file(&self, run_id: &str, name: &str) -> PathBuf {
        self.dir.path().join(run_id).join(name)
    }

    async fn send(&self, request: Request<Body>) -> (StatusCode, String) {
        let response = router(self.state.clone()).oneshot(request).await.unwrap();
        let status = response.status();
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn get(&self, uri: &str) -> (StatusCode, String) {
        self.send(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    async fn post(&self, uri: &str, adjudicator: Option<&str>, body: &str) -> (StatusCode, String) {
        let mut request = Request::post(uri).header("content-type", "application/json");
        if let Some(a) = adjudicator {
            request = request.header(ADJUDICATOR_HEADER, a);
        }
        self.send(request.body(Body::from(body.to_string())).unwrap()).await
    }
}

fn parse(body: &str) -> Value {
    serde_json::from_str(body).unwrap_or_else(|e| panic!("{e}: {body}"))
}

#[tokio::test]
async fn lists_runs_and_serves_stored_documents() {
    let h = Harness::fixtures();
    let (status, body) = h.get("/runs").await;
    assert_eq!(status, StatusCode::OK);
    let runs = parse(&body);
    assert_eq!(runs.as_array().unwrap().len(), 12);
    assert_eq!(runs[0]["run_id"], "case1-multi-qwen2.5");
    assert_eq!(runs[0]["status"], "complete");

    let (status, body) = h.get("/runs/case1-pure-qwen2.5").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, std::fs::read_to_string(h.run_file("case1-pure-qwen2.5", "run.json")).unwrap());

    let response = router(h.state.clone())
        .oneshot(Request::get("/runs/case3-multi-qwen2.5/transcript").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(response.headers()["content-type"], "application/x-ndjson");

    let (_, body) = h.get("/runs/case4-multi-mistral-small/metrics").await;
    assert_eq!(parse(&body)["correctness"]["numerator"], "6.5");
}

#[tokio::test]
async fn unknown_things_are_404() {
    let h = Harness::fixtures();
    for uri in ["/runs/nope", "/runs/nope/metrics", "/runs/nope/classifications", "/cases/case9", "/cases/case9/gold"] {
        let (status, body) = h.get(uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(parse(&body)["kind"], "not_found");
    }
    let (status, _) = h.post("/runs/nope/classifications", Some("a"), "[]").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serves_the_corpus() {
    let h = Harness::fixtures();
    let (_, body) = h.get("/cases").await;
    assert_eq!(parse(&body), json!(["case1", "case2", "case3", "case4"]));
    let (status, body) = h.get("/cases/case1/gold").await;
    assert_eq!(status, StatusCode::OK);
    let gold = parse(&body);
    assert_eq!(gold["option_sets"].as_array().unwrap().len(), 3);
    assert_eq!(gold["option_sets"][0]["preferred"], true);
    let (_, body) = h.get("/cases/case3/lexicon").await;
    assert_eq!(parse(&body)["known_ddis"][0], json!(["trimethoprim-sulfamethoxazole", "warfarin"]));
}

#[tokio::test]
async fn fp_wrong_on_a_gold_action_is_rejected_and_nothing_is_written() {
    let h = Harness::fixtures();
    let path = h.run_file("case1-pure-qwen2.5", "classifications.json");
    let before = std::fs::read(&path).unwrap();
    let body = json!([{"target": {"gold": "a1"}, "label": "fp_wrong"}]).to_string();
    let (status, body) = h.post("/runs/case1-pure-qwen2.5/classifications", Some("adj"), &body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["kind"], "invalid_label");
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[tokio::test]
async fn partial_classification_gives_provisional_metrics() {
    let h = Harness::fixtures();
    let id = "case1-pure-qwen2.5";
    std::fs::remove_file(h.run_file(id, "classifications.json")).unwrap();
    std::fs::remove_file(h.run_file(id, "metrics.json")).unwrap();

    let (_, body) = h.get(&format!("/runs/{id}/classifications")).await;
    assert_eq!(parse(&body)["entries"], json!([]));

    let body = json!([
        {"target": {"gold": "a3"}, "label": "exact_match"},
        {"target": {"other": "famotidine"}, "label": "fp_correct", "item": "Switch omeprazole to famotidine"}
    ])
    .to_string();
    let (status, body) = h.post(&format!("/runs/{id}/classifications"), Some("adj"), &body).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let report = parse(&body);
    assert_eq!(report["provisional"], true);
    assert_eq!(report["unclassified"], json!(["a1", "a2", "a4", "a5", "a6", "a7"]));
    assert_eq!(report["completeness"]["numerator"], "1");
    assert!(!h.run_file(id, "metrics.json").exists());

    let (_, body) = h.get(&format!("/runs/{id}/metrics")).await;
    assert_eq!(parse(&body)["provisional"], true);

    let (_, body) = h.get(&format!("/runs/{id}/classifications")).await;
    let doc = parse(&body);
    assert_eq!(doc["entries"][0]["adjudicator"], "adj");
}

#[tokio::test]
async fn completing_the_case1_board_matches_the_file_based_result() {
    let h = Harness::fixtures();
    let id = "case1-pure-qwen2.5";
    let stored_metrics = std::fs::read_to_string(h.run_file(id, "metrics.json")).unwrap();
    std::fs::remove_file(h.run_file(id, "classifications.json")).unwrap();
    std::fs::remove_file(h.run_file(id, "metrics.json")).unwrap();
    let file =
        std::fs::read_to_string(workspace().join("fixtures/classifications").join(format!("{id}.json"))).unwrap();
    let (status, body) = h.post(&format!("/runs/{id}/classifications"), Some("adjudicator-1"), &file).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let report = parse(&body);
    assert_eq!(report["provisional"], false);
    assert_eq!(report["correctness"]["numerator"], "2");
    assert_eq!(report["completeness"]["denominator"], "7");
    assert_eq!(std::fs::read_to_string(h.run_file(id, "metrics.json")).unwrap(), stored_metrics);
}

#[tokio::test]
async fn writes_need_an_adjudicator_and_a_writable_store() {
    let h = Harness::fixtures();
    let body = json!([{"target": {"gold": "a3"}, "label": "exact_match"}]).to_string();
    let (status, resp) = h.post("/runs/case1-pure-qwen2.5/classifications", None, &body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(parse(&resp)["kind"], "missing_adjudicator");

    let (status, resp) = h.post("/runs/case1-pure-qwen2.5/classifications", Some("adj"), "{ nope").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&resp)["kind"], "invalid_body");

    let ro = Harness::with_runs(|root| copy_dir(&workspace().join("fixtures/runs"), root), true);
    for uri in ["/runs/case1-pure-qwen2.5/classifications", "/runs/case1-multi-qwen2.5/ratings"] {
        let (status, resp) = ro.post(uri, Some("adj"), "[]").await;
        assert_eq!(status, StatusCode::CONFLICT, "{uri}");
        assert_eq!(parse(&resp)["kind"], "read_only");
    }
    let (status, _) = ro.get("/runs").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn ratings_are_summarized_and_validated() {
    let h = Harness::fixtures();
    let id = "case1-pure-qwen2.5";
    let ratings = json!([
        {"rater": "r1", "dimension": "explainability", "score": 3},
        {"rater": "r2", "dimension": "explainability", "score": 3},
        {"rater": "r3", "dimension": "explainability", "score": 4}
    ]);
    let (status, body) = h.post(&format!("/runs/{id}/ratings"), Some("adj"), &ratings.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let outcome = parse(&body);
    assert_eq!(outcome["summaries"][0]["mean"], 3.33);
    assert_eq!(outcome["summaries"][0]["std"], 0.58);
    assert_eq!(outcome["pending_consensus"], json!([]));

    let (_, body) = h.get(&format!("/runs/{id}/ratings/summary")).await;
    assert_eq!(parse(&body)["summaries"][0]["mean"], 3.33);

    let path = h.run_file(id, "ratings.json");
    let before = std::fs::read(&path).unwrap();
    let bad = json!([{"rater": "r4", "dimension": "efficiency", "score": 6}]).to_string();
    let (status, body) = h.post(&format!("/runs/{id}/ratings"), Some("adj"), &bad).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse(&body)["kind"], "score_out_of_range");
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[tokio::test]
async fn contested_ratings_wait_for_a_consensus_score() {
    let h = Harness::fixtures();
    let id = "case3-pure-qwen2.5";
    let ratings = json!([
        {"rater": "r1", "dimension": "reasonableness", "score": 2},
        {"rater": "r2", "dimension": "reasonableness", "score": 4},
        {"rater": "r3", "dimension": "reasonableness", "score": 4}
    ]);
    let (_, body) = h.post(&format!("/runs/{id}/ratings"), Some("adj"), &ratings.to_string()).await;
    assert_eq!(parse(&body)["pending_consensus"], json!(["reasonableness"]));

    let consensus = json!({"consensus": [{"dimension": "reasonableness", "score": 4}]}).to_string();
    let (status, body) = h.post(&format!("/runs/{id}/ratings"), Some("lead"), &consensus).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let outcome = parse(&body);
    assert_eq!(outcome["pending_consensus"], json!([]));
    assert_eq!(outcome["summaries"][0]["consensus_score"], 4.0);
}

#[tokio::test]
async fn concurrent_submissions_to_one_run_are_all_kept() {
    let h = Harness::fixtures();
    let id = "case2-pure-qwen2.5";
    std::fs::remove_file(h.run_file(id, "classifications.json")).unwrap();
    let mut tasks = Vec::new();
    for action in ["b1", "b2", "b3", "b4", "b5", "b6"] {
        let app = router(h.state.clone());
        let body = json!([{"target": {"gold": action}, "label": "exact_match"}]).to_string();
        tasks.push(tokio::spawn(async move {
            let request = Request::post(format!("/runs/{id}/classifications"))
                .header(ADJUDICATOR_HEADER, format!("adj-{action}"))
                .body(Body::from(body))
                .unwrap();
            app.oneshot(request).await.unwrap().status()
        }));
    }
    for task in tasks {
        assert_eq!(task.await.unwrap(), StatusCode::OK);
    }
    let (_, body) = h.get(&format!("/runs/{id}/classifications")).await;
    assert_eq!(parse(&body)["entries"].as_array().unwrap().len(), 6);
    let (_, body) = h.get(&format!("/runs/{id}/metrics")).await;
    assert_eq!(parse(&body)["completeness"]["numerator"], "6");
}

/// Four models over the four cases, each multi-agent run rated.
fn synthetic_radar_store(root: &Path) {
    let fixtures = workspace().join("fixtures/runs");
    let sources = ["case1-multi-qwen2.5", "case2-multi-qwen2.5", "case3-multi-qwen2.5", "case4-multi-mistral-small"];
    for model in ["model-a", "model-b", "model-c", "model-d"] {
        for source in sources {
            let case_id = &source[..5];
            let run_id = format!("{case_id}-multi-{model}");
            copy_dir(&fixtures.join(source), &root.join(&run_id));
            let path = root.join(&run_id).join("run.json");
            let mut record: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
            record["run_id"] = run_id.clone().into();
            record["model_id"] = model.into();
            std::fs::write(&path, serde_json::to_string_pretty(&record).unwrap()).unwrap();
        }
    }
}

#[tokio::test]
async fn radar_has_one_series_per_model_over_twelve_axes() {
    let h = Harness::with_runs(synthetic_radar_store, false);
    let (status, body) = h.get("/report/radar").await;
    assert_eq!(status, StatusCode::OK);
    let radar = parse(&body);
    let axes = radar["axes"].as_array().unwrap();
    assert_eq!(axes.len(), 12);
    assert_eq!(axes[0], json!({"case_id": "case1", "dimension": "explainability"}));
    let series = radar["series"].as_array().unwrap();
    assert_eq!(series.len(), 4);
    for s in series {
        let values = s["values"].as_array().unwrap();
        assert_eq!(values.len(), 12);
        assert!(values.iter().all(|v| v.is_number()));
    }
}

#[tokio::test]
async fn report_table_traces_cells_to_runs() {
    let h = Harness::fixtures();
    let (status, body) = h.get("/report/table").await;
    assert_eq!(status, StatusCode::OK);
    let table = parse(&body);
    assert_eq!(table["columns"].as_array().unwrap().len(), 4);
    let first = &table["groups"][0]["rows"][1];
    assert_eq!(first["metric"], "Correctness");
    assert_eq!(
        first["cells"][0],
        json!([{"kind": "ratio", "value": {"numerator": "2", "denominator": "2", "value": 1.0}}, "case1-pure-qwen2.5"])
    );
    assert_eq!(first["cells"][3], json!([{"kind": "same_as", "value": "C2"}, "case1-multi-qwen2.5"]));
}
