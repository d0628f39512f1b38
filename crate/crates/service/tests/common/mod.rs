#![allow(dead_code)]

use divbench_core::annotations::Verdict;
use divbench_core::{ConceptAttribute, RatingRecord};
use divbench_service::{
    spawn, CreateStudy, ServeConfig, ServerHandle, SideManifest, StudyConfig, TaskManifest,
    TaskView,
};
use reqwest::blocking::{Client, Response};
use serde_json::{json, Value};
use std::path::Path;

pub fn start(store: &Path) -> ServerHandle {
    spawn(ServeConfig {
        addr: "127.0.0.1:0".parse().unwrap(),
        store: store.to_path_buf(),
        static_dir: None,
    })
    .unwrap()
}

pub fn side(model: &str, task: usize, n: usize) -> SideManifest {
    SideManifest {
        model: model.into(),
        replicate: 0,
        image_urls: (0..n)
            .map(|i| format!("/static/{model}/{task}/{i}.png"))
            .collect(),
        image_ids: None,
    }
}

pub fn manifest(n_tasks: usize, raters_per_task: usize) -> CreateStudy {
    let mut config = StudyConfig::default();
    config.run.raters_per_task = raters_per_task;
    config.run.seed = 11;
    CreateStudy {
        study_id: None,
        idempotency_key: None,
        config,
        tasks: (0..n_tasks)
            .map(|i| TaskManifest {
                task_id: None,
                pair: ConceptAttribute::new(&format!("concept{i}"), "color").unwrap(),
                left: side("a", i, 8),
                right: side("b", i, 8),
            })
            .collect(),
    }
}

pub struct Api {
    pub base: String,
    pub client: Client,
}

impl Api {
    pub fn new(base: String) -> Self {
        Self {
            base,
            client: Client::new(),
        }
    }

    pub fn create(&self, body: &Value, key: Option<&str>) -> Response {
        let mut req = self
            .client
            .post(format!("{}/v1/studies", self.base))
            .json(body);
        if let Some(k) = key {
            req = req.header("Idempotency-Key", k);
        }
        req.send().unwrap()
    }

    pub fn create_study(&self, m: &CreateStudy) -> String {
        let r = self.create(&serde_json::to_value(m).unwrap(), None);
        assert_eq!(r.status(), 201);
        r.json::<Value>().unwrap()["study_id"]
            .as_str()
            .unwrap()
            .to_string()
    }

    pub fn next(&self, study: &str, rater: &str) -> Response {
        self.client
            .get(format!(
                "{}/v1/studies/{study}/tasks/next?rater_id={rater}",
                self.base
            ))
            .send()
            .unwrap()
    }

    pub fn next_view(&self, study: &str, rater: &str) -> Option<TaskView> {
        let r = self.next(study, rater);
        match r.status().as_u16() {
            200 => Some(r.json().unwrap()),
            204 => None,
            s => panic!("next returned {s}"),
        }
    }

    pub fn rate(&self, task: &str, body: &Value) -> Response {
        self.client
            .post(format!("{}/v1/tasks/{task}/rating", self.base))
            .json(body)
            .send()
            .unwrap()
    }

    pub fn export(&self, study: &str) -> String {
        let r = self
            .client
            .get(format!("{}/v1/studies/{study}/export", self.base))
            .send()
            .unwrap();
        assert_eq!(r.status(), 200);
        r.text().unwrap()
    }

    pub fn import(&self, study: &str, body: String) -> Response {
        self.client
            .post(format!("{}/v1/studies/{study}/import", self.base))
            .body(body)
            .send()
            .unwrap()
    }

    pub fn summary(&self, study: &str) -> Value {
        self.client
            .get(format!("{}/v1/studies/{study}", self.base))
            .send()
            .unwrap()
            .json()
            .unwrap()
    }
}

pub fn rating(rater: &str, left: u32, right: u32, verdict: Verdict) -> Value {
    json!({"rater_id": rater, "count_left": left, "count_right": right, "verdict": verdict, "elapsed_ms": 1200})
}

pub fn parse_export(body: &str) -> (Vec<RatingRecord>, u64) {
    let mut lines: Vec<&str> = body.lines().collect();
    let trailer: Value = serde_json::from_str(lines.pop().expect("trailer line")).unwrap();
    let records = lines
        .iter()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (records, trailer["trailer"]["count"].as_u64().unwrap())
}
