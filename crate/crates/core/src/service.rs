//! Long-running classification engine.
//!
//! A batch moves through
//! `ingested -> embedded -> candidates_ready -> labeled -> classified`.
//! Submitting new labels moves a classified batch back to `labeled`.
//!
//! Every batch lives in its own directory under `<data_dir>/batches/` as a
//! versioned JSON state file, replaced atomically (write to a temp file,
//! then rename) after each step, so the engine can be restarted between any
//! two calls. Mutations of one batch are serialized by a per-batch lock.
//!
//! HTTP routes (JSON bodies, errors as `{code, message, detail}`):
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/batches` | create a batch, returns `{batch_id}` |
//! | GET | `/batches/{id}` | batch summary |
//! | GET | `/batches/{id}/candidates?page=N` | per-topic candidate pages |
//! | POST | `/batches/{id}/labels` | `{selections: {category: [doc ids]}}` |
//! | POST | `/batches/{id}/classify` | classify the batch |
//! | GET | `/batches/{id}/predictions?category=&page=` | scored predictions |

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use indexmap::IndexMap;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{build_prototypes, classify_batch, Prediction, Selection};
use crate::corpus::{build_unigram_model, dataset_from_records, Document, DocumentRecord, StopWords};
use crate::embed::{embed_batch, DocumentEmbedding, SifConfig, DEFAULT_ALPHA_SIF};
use crate::topics::{fit_lda, CandidateRanking, LdaConfig, DEFAULT_BETA_LDA, DEFAULT_ITERATIONS, DEFAULT_PAGE_SIZE, DEFAULT_SEED};
use crate::wordvec::{load_vectors, VectorFormat, WordVectorTable};

pub const STATE_VERSION: u32 = 1;
pub const EXCERPT_CHARS: usize = 400;
/// Length ratio between the longest and shortest selected representative
/// above which `submit_labels` warns.
pub const IMBALANCE_RATIO: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub vectors: Option<PathBuf>,
    pub vector_format: VectorFormat,
    pub alpha_sif: f64,
    /// Defaults to `50 / k` when unset.
    pub alpha_lda: Option<f64>,
    pub beta_lda: f64,
    pub lda_iterations: usize,
    pub lda_seed: u64,
    pub page_size: usize,
    pub prediction_page_size: usize,
    pub data_dir: PathBuf,
    pub listen: String,
    /// Batches with more documents are embedded and fitted in a background
    /// job instead of inside the create request.
    pub inline_limit: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            vectors: None,
            vector_format: VectorFormat::Plain,
            alpha_sif: DEFAULT_ALPHA_SIF,
            alpha_lda: None,
            beta_lda: DEFAULT_BETA_LDA,
            lda_iterations: DEFAULT_ITERATIONS,
            lda_seed: DEFAULT_SEED,
            page_size: DEFAULT_PAGE_SIZE,
            prediction_page_size: 100,
            data_dir: PathBuf::from("fewshot-data"),
            listen: "127.0.0.1:8080".into(),
            inline_limit: 5000,
        }
    }
}

impl EngineConfig {
    /// Reads a TOML file (when given) and applies `FEWSHOT_*` environment
    /// overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| ServiceError::config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| ServiceError::config(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        fn parse<T: std::str::FromStr>(key: &str, v: String) -> Result<T, ServiceError> {
            v.parse().map_err(|_| ServiceError::config(format!("{key}: cannot parse {v:?}")))
        }
        if let Some(v) = var("FEWSHOT_VECTORS") {
            self.vectors = Some(PathBuf::from(v));
        }
        if let Some(v) = var("FEWSHOT_VECTOR_FORMAT") {
            self.vector_format = v.parse().map_err(ServiceError::config)?;
        }
        if let Some(v) = var("FEWSHOT_ALPHA_SIF") {
            self.alpha_sif = parse("FEWSHOT_ALPHA_SIF", v)?;
        }
        if let Some(v) = var("FEWSHOT_ALPHA_LDA") {
            self.alpha_lda = Some(parse("FEWSHOT_ALPHA_LDA", v)?);
        }
        if let Some(v) = var("FEWSHOT_BETA_LDA") {
            self.beta_lda = parse("FEWSHOT_BETA_LDA", v)?;
        }
        if let Some(v) = var("FEWSHOT_LDA_ITERATIONS") {
            self.lda_iterations = parse("FEWSHOT_LDA_ITERATIONS", v)?;
        }
        if let Some(v) = var("FEWSHOT_LDA_SEED") {
            self.lda_seed = parse("FEWSHOT_LDA_SEED", v)?;
        }
        if let Some(v) = var("FEWSHOT_PAGE_SIZE") {
            self.page_size = parse("FEWSHOT_PAGE_SIZE", v)?;
        }
        if let Some(v) = var("FEWSHOT_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("FEWSHOT_LISTEN") {
            self.listen = v;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("batch {0:?} not found")]
    NotFound(String),
    #[error("{message}")]
    BadRequest { code: &'static str, message: String, detail: Option<String> },
    #[error("{message}")]
    Conflict { message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        ServiceError::BadRequest {
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn bad_detail(code: &'static str, message: impl Into<String>, detail: impl Into<String>) -> Self {
        ServiceError::BadRequest {
            code,
            message: message.into(),
            detail: Some(detail.into()),
        }
    }

    fn config(msg: impl Into<String>) -> Self {
        ServiceError::Config(msg.into())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ServiceError::Internal(e.to_string())
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::BadRequest { code, .. } => code,
            ServiceError::Conflict { .. } => "conflict",
            ServiceError::Config(_) => "config",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest { .. } => StatusCode::BAD_REQUEST,
            ServiceError::Conflict { .. } => StatusCode::CONFLICT,
            ServiceError::Config(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Option<String>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let detail = match &self {
            ServiceError::BadRequest { detail, .. } => detail.clone(),
            _ => None,
        };
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            detail,
        };
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStatus {
    Ingested,
    Embedded,
    CandidatesReady,
    Labeled,
    Classified,
}

/// Per-batch overrides of the engine defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchOverrides {
    pub alpha_sif: Option<f64>,
    pub alpha_lda: Option<f64>,
    pub beta_lda: Option<f64>,
    pub lda_iterations: Option<usize>,
    pub lda_seed: Option<u64>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSettings {
    pub sif: SifConfig,
    pub lda: LdaConfig,
    pub page_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub ranking: CandidateRanking,
    pub top_words: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobInfo {
    pub running: bool,
    pub error: Option<String>,
}

/// Everything persisted for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchState {
    pub version: u32,
    pub batch_id: String,
    pub categories: Vec<String>,
    pub status: BatchStatus,
    pub settings: BatchSettings,
    pub documents: Vec<Document>,
    pub embeddings: Vec<DocumentEmbedding>,
    pub topics: Option<TopicSummary>,
    pub selections: Selection,
    pub predictions: Vec<Prediction>,
    pub unclassifiable: Vec<String>,
    pub job: Option<JobInfo>,
}

impl BatchState {
    fn doc_index(&self) -> HashMap<&str, usize> {
        self.documents.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect()
    }

    fn representative_count(&self) -> usize {
        self.selections.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateBatchRequest {
    pub documents: Vec<DocumentRecord>,
    /// Alternative to `documents`: the dataset file contents (JSON lines).
    pub documents_jsonl: Option<String>,
    pub categories: Vec<String>,
    pub config: BatchOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateBatchResponse {
    pub batch_id: String,
    pub status: BatchStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_id: String,
    pub categories: Vec<String>,
    pub status: BatchStatus,
    pub document_count: usize,
    pub empty_embeddings: usize,
    pub page_size: usize,
    pub page_count: usize,
    pub unrankable: Vec<String>,
    pub selections: Selection,
    pub prediction_count: usize,
    pub job: Option<JobInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub doc_id: String,
    pub excerpt: String,
    pub theta: f64,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicPage {
    pub topic: usize,
    pub top_words: Vec<String>,
    pub entries: Vec<CandidateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePage {
    pub page: usize,
    pub page_size: usize,
    pub page_count: usize,
    pub topics: Vec<TopicPage>,
    pub unrankable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub selections: Selection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub batch: BatchSummary,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub per_category: IndexMap<String, usize>,
    pub unclassifiable: Vec<String>,
    pub representatives: usize,
    pub total_documents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub doc_id: String,
    pub excerpt: String,
    pub category: String,
    pub score: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPage {
    pub total: usize,
    pub page: Option<usize>,
    pub page_size: usize,
    pub entries: Vec<PredictionEntry>,
}

fn excerpt(text: &str) -> String {
    match text.char_indices().nth(EXCERPT_CHARS) {
        Some((cut, _)) => text[..cut].to_string(),
        None => text.to_string(),
    }
}

/// The engine: shared word vectors, batch storage and per-batch locks.
pub struct Engine {
    config: EngineConfig,
    table: Arc<WordVectorTable>,
    stopwords: StopWords,
    locks: Mutex<HashMap<String, Arc<RwLock<()>>>>,
    cache: Mutex<HashMap<String, Arc<BatchState>>>,
}

impl Engine {
    /// Loads the configured word vectors and opens the data directory.
    pub fn open(config: EngineConfig) -> Result<Self, ServiceError> {
        let path = config
            .vectors
            .clone()
            .ok_or_else(|| ServiceError::config("no word vector file configured (vectors / FEWSHOT_VECTORS)"))?;
        let table = load_vectors(&path, config.vector_format).map_err(|e| ServiceError::config(e.to_string()))?;
        Self::with_table(config, Arc::new(table))
    }

    pub fn with_table(config: EngineConfig, table: Arc<WordVectorTable>) -> Result<Self, ServiceError> {
        fs::create_dir_all(config.data_dir.join("batches")).map_err(ServiceError::internal)?;
        Ok(Self {
            config,
            table,
            stopwords: StopWords::english(),
            locks: Mutex::new(HashMap::new()),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    fn batch_dir(&self, id: &str) -> PathBuf {
        self.config.data_dir.join("batches").join(id)
    }

    fn lock_for(&self, id: &str) -> Arc<RwLock<()>> {
        self.locks.lock().entry(id.to_string()).or_default().clone()
    }

    fn valid_id(id: &str) -> bool {
        !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    }

    fn load(&self, id: &str) -> Result<Arc<BatchState>, ServiceError> {
        if let Some(s) = self.cache.lock().get(id) {
            return Ok(s.clone());
        }
        if !Self::valid_id(id) {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        let path = self.batch_dir(id).join("state.json");
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::NotFound(id.to_string())),
            Err(e) => return Err(ServiceError::internal(e)),
        };
        let state: BatchState = serde_json::from_str(&text).map_err(ServiceError::internal)?;
        if state.version != STATE_VERSION {
            return Err(ServiceError::Internal(format!(
                "batch {id} has state version {}, expected {STATE_VERSION}",
                state.version
            )));
        }
        let state = Arc::new(state);
        self.cache.lock().insert(id.to_string(), state.clone());
        Ok(state)
    }

    fn persist(&self, state: BatchState) -> Result<Arc<BatchState>, ServiceError> {
        let dir = self.batch_dir(&state.batch_id);
        fs::create_dir_all(&dir).map_err(ServiceError::internal)?;
        let tmp = dir.join("state.json.tmp");
        let json = serde_json::to_vec(&state).map_err(ServiceError::internal)?;
        {
            let mut f = fs::File::create(&tmp).map_err(ServiceError::internal)?;
            f.write_all(&json).map_err(ServiceError::internal)?;
            f.sync_all().map_err(ServiceError::internal)?;
        }
        fs::rename(&tmp, dir.join("state.json")).map_err(ServiceError::internal)?;
        let state = Arc::new(state);
        self.cache.lock().insert(state.batch_id.clone(), state.clone());
        Ok(state)
    }

    /// Full persisted state of a batch.
    pub fn state(&self, id: &str) -> Result<Arc<BatchState>, ServiceError> {
        let lock = self.lock_for(id);
        let _guard = lock.read();
        self.load(id)
    }

    pub fn create_batch(self: &Arc<Self>, request: CreateBatchRequest) -> Result<CreateBatchResponse, ServiceError> {
        let CreateBatchRequest {
            mut documents,
            documents_jsonl,
            categories,
            config,
        } = request;
        if let Some(text) = documents_jsonl {
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let record: DocumentRecord = serde_json::from_str(line)
                    .map_err(|e| ServiceError::bad_detail("malformed_upload", format!("line {}: malformed record", i + 1), e.to_string()))?;
                documents.push(record);
            }
        }
        let mut seen = HashSet::new();
        for c in &categories {
            if c.trim().is_empty() || !seen.insert(c.as_str()) {
                return Err(ServiceError::bad("bad_categories", format!("category names must be unique and non-empty ({c:?})")));
            }
        }
        if categories.len() < 2 {
            return Err(ServiceError::bad(
                "too_few_categories",
                format!("at least 2 categories are required, got {}", categories.len()),
            ));
        }
        let mut ids = HashSet::new();
        for d in &documents {
            if !ids.insert(d.id.as_str()) {
                return Err(ServiceError::bad_detail("duplicate_document", "duplicate document id", d.id.clone()));
            }
        }
        let k = categories.len();
        let dataset = dataset_from_records(documents, &self.stopwords);
        let documents: Vec<Document> = dataset.documents.into_iter().map(|d| d.doc).collect();
        let non_empty = documents.iter().filter(|d| d.token_count() > 0).count();
        if non_empty < k {
            return Err(ServiceError::bad(
                "insufficient_documents",
                format!("need at least {k} documents with usable text, got {non_empty}"),
            ));
        }

        let sif = SifConfig::new(config.alpha_sif.unwrap_or(self.config.alpha_sif))
            .ok_or_else(|| ServiceError::bad("bad_config", "alpha_sif must be positive"))?;
        let lda = LdaConfig {
            k,
            alpha_lda: config.alpha_lda.or(self.config.alpha_lda).unwrap_or(50.0 / k as f64),
            beta_lda: config.beta_lda.unwrap_or(self.config.beta_lda),
            iterations: config.lda_iterations.unwrap_or(self.config.lda_iterations),
            seed: config.lda_seed.unwrap_or(self.config.lda_seed),
        };
        lda.validate().map_err(|e| ServiceError::bad("bad_config", e.to_string()))?;
        let page_size = config.page_size.unwrap_or(self.config.page_size);
        if page_size == 0 {
            return Err(ServiceError::bad("bad_config", "page_size must be positive"));
        }

        let batch_id = uuid::Uuid::new_v4().simple().to_string();
        let background = documents.len() > self.config.inline_limit;
        let state = BatchState {
            version: STATE_VERSION,
            batch_id: batch_id.clone(),
            categories,
            status: BatchStatus::Ingested,
            settings: BatchSettings { sif, lda, page_size },
            documents,
            embeddings: Vec::new(),
            topics: None,
            selections: Selection::new(),
            predictions: Vec::new(),
            unclassifiable: Vec::new(),
            job: background.then_some(JobInfo {
                running: true,
                error: None,
            }),
        };
        let lock = self.lock_for(&batch_id);
        let guard = lock.write();
        self.persist(state)?;
        drop(guard);

        if background {
            let engine = Arc::clone(self);
            let id = batch_id.clone();
            std::thread::spawn(move || {
                if let Err(e) = engine.process(&id) {
                    tracing::error!(batch = %id, error = %e, "background fitting failed");
                    let lock = engine.lock_for(&id);
                    let _guard = lock.write();
                    if let Ok(current) = engine.load(&id) {
                        let mut s = (*current).clone();
                        s.job = Some(JobInfo {
                            running: false,
                            error: Some(e.to_string()),
                        });
                        let _ = engine.persist(s);
                    }
                }
            });
            return Ok(CreateBatchResponse {
                batch_id,
                status: BatchStatus::Ingested,
            });
        }
        let status = self.process(&batch_id)?;
        Ok(CreateBatchResponse { batch_id, status })
    }

    /// Embeds and fits a freshly ingested batch, persisting after each step.
    fn process(&self, id: &str) -> Result<BatchStatus, ServiceError> {
        let lock = self.lock_for(id);
        let _guard = lock.write();
        let mut state = (*self.load(id)?).clone();

        let unigram = build_unigram_model(&state.documents).map_err(|e| ServiceError::bad("insufficient_documents", e.to_string()))?;
        let batch = embed_batch(&state.documents, &self.table, &unigram, state.settings.sif);
        state.embeddings = batch.embeddings;
        state.status = BatchStatus::Embedded;
        let state = self.persist(state)?;

        let mut state = (*state).clone();
        let model = fit_lda(&state.documents, state.settings.lda).map_err(|e| ServiceError::bad("lda_failed", e.to_string()))?;
        let ranking = model.rank_candidates(state.settings.page_size);
        let top_words = (0..model.k())
            .map(|t| model.top_words(t, 10).into_iter().map(|(w, _)| w.to_string()).collect())
            .collect();
        state.topics = Some(TopicSummary { ranking, top_words });
        state.status = BatchStatus::CandidatesReady;
        if state.job.is_some() {
            state.job = Some(JobInfo {
                running: false,
                error: None,
            });
        }
        Ok(self.persist(state)?.status)
    }

    fn summary(state: &BatchState) -> BatchSummary {
        let (page_count, unrankable) = state
            .topics
            .as_ref()
            .map(|t| (t.ranking.page_count(), t.ranking.unrankable.clone()))
            .unwrap_or_default();
        BatchSummary {
            batch_id: state.batch_id.clone(),
            categories: state.categories.clone(),
            status: state.status,
            document_count: state.documents.len(),
            empty_embeddings: state.embeddings.iter().filter(|e| e.is_empty).count(),
            page_size: state.settings.page_size,
            page_count,
            unrankable,
            selections: state.selections.clone(),
            prediction_count: state.predictions.len(),
            job: state.job.clone(),
        }
    }

    pub fn get_batch(&self, id: &str) -> Result<BatchSummary, ServiceError> {
        Ok(Self::summary(&*self.state(id)?))
    }

    pub fn get_candidates(&self, id: &str, page: usize) -> Result<CandidatePage, ServiceError> {
        let state = self.state(id)?;
        let topics = match (&state.topics, state.status >= BatchStatus::CandidatesReady) {
            (Some(t), true) => t,
            _ => {
                return Err(ServiceError::Conflict {
                    message: format!("batch {id} has no candidates yet (status {:?})", state.status),
                })
            }
        };
        let ranking = &topics.ranking;
        if page >= ranking.page_count().max(1) {
            return Err(ServiceError::bad(
                "page_out_of_range",
                format!("page {page} is beyond all rankings ({} pages)", ranking.page_count()),
            ));
        }
        let index = state.doc_index();
        let pages = (0..ranking.topics.len())
            .map(|t| TopicPage {
                topic: t,
                top_words: topics.top_words.get(t).cloned().unwrap_or_default(),
                entries: ranking
                    .page(t, page)
                    .iter()
                    .map(|r| {
                        let doc = &state.documents[index[r.doc_id.as_str()]];
                        CandidateEntry {
                            doc_id: r.doc_id.clone(),
                            excerpt: excerpt(&doc.raw_text),
                            theta: r.prob,
                            token_count: doc.token_count(),
                        }
                    })
                    .collect(),
            })
            .collect();
        Ok(CandidatePage {
            page,
            page_size: ranking.page_size,
            page_count: ranking.page_count(),
            topics: pages,
            unrankable: ranking.unrankable.clone(),
        })
    }

    pub fn submit_labels(&self, id: &str, selections: Selection) -> Result<LabelResponse, ServiceError> {
        let lock = self.lock_for(id);
        let _guard = lock.write();
        let current = self.load(id)?;
        if current.status < BatchStatus::CandidatesReady {
            return Err(ServiceError::Conflict {
                message: format!("batch {id} is not ready for labels (status {:?})", current.status),
            });
        }
        if let Some(unknown) = selections.keys().find(|c| !current.categories.contains(c)) {
            return Err(ServiceError::bad_detail("unknown_category", "selection names an unknown category", unknown.clone()));
        }
        let index = current.doc_index();
        let mut owner: HashMap<&str, &str> = HashMap::new();
        let mut ordered = Selection::new();
        for category in &current.categories {
            let ids = selections.get(category).filter(|ids| !ids.is_empty()).ok_or_else(|| {
                ServiceError::bad_detail("missing_category", format!("category {category:?} has no selected documents"), category.clone())
            })?;
            for doc_id in ids {
                let i = *index
                    .get(doc_id.as_str())
                    .ok_or_else(|| ServiceError::bad_detail("unknown_document", "selected document does not exist", doc_id.clone()))?;
                if let Some(first) = owner.insert(doc_id, category) {
                    return Err(ServiceError::bad_detail(
                        "duplicate_document",
                        format!("document is selected for both {first:?} and {category:?}"),
                        doc_id.clone(),
                    ));
                }
                if current.embeddings[i].is_empty {
                    return Err(ServiceError::bad_detail(
                        "empty_embedding",
                        "selected document has no usable words and cannot represent a category",
                        doc_id.clone(),
                    ));
                }
            }
            ordered.insert(category.clone(), ids.clone());
        }

        let lengths: Vec<usize> = ordered
            .values()
            .flatten()
            .map(|id| current.documents[index[id.as_str()]].token_count())
            .collect();
        let (min, max) = (
            *lengths.iter().min().expect("non-empty"),
            *lengths.iter().max().expect("non-empty"),
        );
        let warning = (max as f64 > IMBALANCE_RATIO * min as f64).then(|| {
            format!("selected representatives differ in length by more than {IMBALANCE_RATIO}x ({min} vs {max} tokens); predictions may skew toward the longer ones")
        });

        let mut state = (*current).clone();
        state.selections = ordered;
        state.predictions.clear();
        state.unclassifiable.clear();
        state.status = BatchStatus::Labeled;
        let state = self.persist(state)?;
        Ok(LabelResponse {
            batch: Self::summary(&state),
            warning,
        })
    }

    fn prediction_summary(state: &BatchState) -> PredictionSummary {
        let mut per_category: IndexMap<String, usize> = state.categories.iter().map(|c| (c.clone(), 0)).collect();
        for p in &state.predictions {
            *per_category.entry(p.category.clone()).or_default() += 1;
        }
        PredictionSummary {
            per_category,
            unclassifiable: state.unclassifiable.clone(),
            representatives: state.representative_count(),
            total_documents: state.documents.len(),
        }
    }

    /// Classifies every non-representative document. Allowed once labels
    /// are in; re-running on a classified batch recomputes the same result.
    pub fn run_classification(&self, id: &str) -> Result<PredictionSummary, ServiceError> {
        let lock = self.lock_for(id);
        let _guard = lock.write();
        let current = self.load(id)?;
        if current.status < BatchStatus::Labeled {
            return Err(ServiceError::Conflict {
                message: format!("batch {id} must be labeled before classification (status {:?})", current.status),
            });
        }
        let lookup: HashMap<&str, &DocumentEmbedding> = current.embeddings.iter().map(|e| (e.doc_id.as_str(), e)).collect();
        let prototypes = build_prototypes(&current.selections, &lookup).map_err(|e| ServiceError::bad("bad_selection", e.to_string()))?;
        let exclude = prototypes.representative_ids();
        let result = classify_batch(&current.embeddings, &prototypes, &exclude);
        let mut state = (*current).clone();
        state.predictions = result.predictions;
        state.unclassifiable = result.unclassifiable;
        state.status = BatchStatus::Classified;
        let state = self.persist(state)?;
        Ok(Self::prediction_summary(&state))
    }

    /// Predictions ordered by score (highest first, then doc id), optionally
    /// filtered by category. `page` selects one page of
    /// `prediction_page_size` entries; without it every prediction is
    /// returned.
    pub fn get_predictions(&self, id: &str, category: Option<&str>, page: Option<usize>) -> Result<PredictionPage, ServiceError> {
        let state = self.state(id)?;
        if state.status != BatchStatus::Classified {
            return Err(ServiceError::Conflict {
                message: format!("batch {id} is not classified (status {:?})", state.status),
            });
        }
        if let Some(c) = category {
            if !state.categories.iter().any(|x| x == c) {
                return Err(ServiceError::bad_detail("unknown_category", "unknown category filter", c.to_string()));
            }
        }
        let index = state.doc_index();
        let mut preds: Vec<&Prediction> = state
            .predictions
            .iter()
            .filter(|p| category.is_none_or(|c| p.category == c))
            .collect();
        preds.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        let total = preds.len();
        let size = self.config.prediction_page_size.max(1);
        let window: &[&Prediction] = match page {
            Some(p) => {
                let start = p.saturating_mul(size).min(total);
                &preds[start..(start + size).min(total)]
            }
            None => &preds,
        };
        let entries = window
            .iter()
            .map(|p| PredictionEntry {
                doc_id: p.doc_id.clone(),
                excerpt: excerpt(&state.documents[index[p.doc_id.as_str()]].raw_text),
                category: p.category.clone(),
                score: p.score,
                margin: p.margin,
            })
            .collect();
        Ok(PredictionPage {
            total,
            page,
            page_size: size,
            entries,
        })
    }

    pub fn summary_of_predictions(&self, id: &str) -> Result<PredictionSummary, ServiceError> {
        Ok(Self::prediction_summary(&*self.state(id)?))
    }
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    page: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct PredictionQuery {
    category: Option<String>,
    page: Option<usize>,
}

type Shared = Arc<Engine>;

async fn blocking<T, F>(f: F) -> Result<Json<T>, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(ServiceError::internal)?.map(Json)
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::bad_detail("malformed_body", "request body is not valid JSON for this endpoint", e.to_string()))
}

async fn create_handler(State(engine): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<CreateBatchResponse>), ServiceError> {
    let request: CreateBatchRequest = parse_body(&body)?;
    let Json(resp) = blocking(move || engine.create_batch(request)).await?;
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn get_batch_handler(State(engine): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<BatchSummary>, ServiceError> {
    blocking(move || engine.get_batch(&id)).await
}

async fn candidates_handler(
    State(engine): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> Result<Json<CandidatePage>, ServiceError> {
    blocking(move || engine.get_candidates(&id, q.page.unwrap_or(0))).await
}

async fn labels_handler(State(engine): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> Result<Json<LabelResponse>, ServiceError> {
    let request: LabelRequest = parse_body(&body)?;
    blocking(move || engine.submit_labels(&id, request.selections)).await
}

async fn classify_handler(State(engine): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<PredictionSummary>, ServiceError> {
    blocking(move || engine.run_classification(&id)).await
}

async fn predictions_handler(
    State(engine): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PredictionQuery>,
) -> Result<Json<PredictionPage>, ServiceError> {
    blocking(move || engine.get_predictions(&id, q.category.as_deref().filter(|c| !c.is_empty()), q.page)).await
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/batches", post(create_handler))
        .route("/batches/{id}", get(get_batch_handler))
        .route("/batches/{id}/candidates", get(candidates_handler))
        .route("/batches/{id}/labels", post(labels_handler))
        .route("/batches/{id}/classify", post(classify_handler))
        .route("/batches/{id}/predictions", get(predictions_handler))
        .with_state(engine)
}

/// Serves the HTTP API until Ctrl-C.
pub async fn serve(engine: Arc<Engine>, listen: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(address = %listener.local_addr()?, "fewshot engine listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
