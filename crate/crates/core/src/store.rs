//! Persistence for accepted records, submission envelopes, image blobs and
//! the registries they reference.
//!
//! State is held in memory and mirrored to a [`Backend`] as one file per
//! record or envelope. Every file write is atomic, so an interrupted commit
//! never exposes a partially written record. Writes go through a single
//! writer ([`Store::write`]); readers proceed concurrently.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::archive;
use crate::digest::sha256_entries;
use crate::emcv::{Vocabulary, VocabularyCatalog, BUILTIN_VERSION};
use crate::moderation::SubmissionEnvelope;
use crate::record::{normalize_record, AccessionId, ExperimentRecord, PayloadRef};
use crate::units::UnitRegistry;

pub const SCHEMA_VERSION: &str = "1";

pub type ReleaseView = (Vec<ExperimentRecord>, BTreeMap<PayloadRef, Vec<u8>>);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("integrity violation in {record}: {detail}")]
    IntegrityViolation { record: String, detail: String },
    #[error("accession {0} is already stored with different content")]
    DuplicateAccession(AccessionId),
    #[error("a release cut is in progress")]
    ConcurrentRelease,
    #[error("a snapshot is in progress")]
    SnapshotInProgress,
    #[error("store is detached from its backing storage")]
    Detached,
    #[error("store schema version {found} is not supported (expected {expected})")]
    SchemaMismatch { found: String, expected: String },
    #[error("restore target already contains data")]
    NotEmpty,
    #[error("corrupt store content: {0}")]
    Corrupt(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

/// Key-value persistence. Keys are `/`-separated relative paths.
pub trait Backend: Send + Sync {
    fn get(&self, key: &str) -> io::Result<Option<Vec<u8>>>;
    /// Atomically replaces the value stored under `key`.
    fn put(&self, key: &str, bytes: &[u8]) -> io::Result<()>;
    /// Keys directly under `dir`, sorted.
    fn list(&self, dir: &str) -> io::Result<Vec<String>>;
    fn describe(&self) -> String;
}

#[derive(Debug)]
pub struct FileBackend {
    root: PathBuf,
}

impl FileBackend {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

const TMP_MARKER: &str = ".tmp-";

impl Backend for FileBackend {
    fn get(&self, key: &str) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.root.join(key)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn put(&self, key: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(key);
        let dir = path.parent().expect("keys are relative paths");
        fs::create_dir_all(dir)?;
        let file_name = path.file_name().expect("keys name files").to_string_lossy();
        let tmp = dir.join(format!("{file_name}{TMP_MARKER}{}", Uuid::new_v4().simple()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })
    }

    fn list(&self, dir: &str) -> io::Result<Vec<String>> {
        let entries = match fs::read_dir(self.root.join(dir)) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut keys = Vec::new();
        for entry in entries {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.contains(TMP_MARKER) {
                continue;
            }
            keys.push(if dir.is_empty() { name } else { format!("{}/{name}", dir.trim_end_matches('/')) });
        }
        keys.sort();
        Ok(keys)
    }

    fn describe(&self) -> String {
        format!("file:{}", self.root.display())
    }
}

#[derive(Debug, Default)]
pub struct MemoryBackend {
    entries: Mutex<BTreeMap<String, Vec<u8>>>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Backend for MemoryBackend {
    fn get(&self, key: &str) -> io::Result<Option<Vec<u8>>> {
        Ok(self.entries.lock().unwrap().get(key).cloned())
    }

    fn put(&self, key: &str, bytes: &[u8]) -> io::Result<()> {
        self.entries.lock().unwrap().insert(key.to_owned(), bytes.to_vec());
        Ok(())
    }

    fn list(&self, dir: &str) -> io::Result<Vec<String>> {
        let prefix = if dir.is_empty() { String::new() } else { format!("{}/", dir.trim_end_matches('/')) };
        let entries = self.entries.lock().unwrap();
        let mut keys: BTreeSet<String> = BTreeSet::new();
        for key in entries.keys().filter(|k| k.starts_with(&prefix)) {
            let rest = &key[prefix.len()..];
            let first = rest.split('/').next().unwrap_or(rest);
            keys.insert(format!("{prefix}{first}"));
        }
        Ok(keys.into_iter().collect())
    }

    fn describe(&self) -> String {
        "memory".into()
    }
}

/// doi → accepted records and contributor → envelopes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProvenanceIndex {
    pub by_doi: BTreeMap<String, Vec<AccessionId>>,
    pub by_contributor: BTreeMap<String, Vec<Uuid>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub schema_version: String,
    pub record_count: usize,
    pub envelope_count: usize,
    pub image_count: usize,
    pub digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    schema_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exclusive {
    Cut,
    Snapshot,
}

#[derive(Default)]
struct State {
    records: BTreeMap<AccessionId, ExperimentRecord>,
    envelopes: BTreeMap<Uuid, SubmissionEnvelope>,
    images: BTreeSet<PayloadRef>,
    vocabularies: BTreeSet<String>,
    provenance: ProvenanceIndex,
}

impl State {
    fn next_accession(&self) -> AccessionId {
        self.records
            .keys()
            .next_back()
            .map_or(AccessionId::new(1), |id| id.next())
    }

    fn index_record(&mut self, r: &ExperimentRecord) {
        if let (Some(doi), Some(id)) = (&r.provenance.doi, r.record_id) {
            let ids = self.provenance.by_doi.entry(doi.clone()).or_default();
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }

    fn index_envelope(&mut self, e: &SubmissionEnvelope) {
        let ids = self.provenance.by_contributor.entry(e.contributor.clone()).or_default();
        if !ids.contains(&e.envelope_id) {
            ids.push(e.envelope_id);
        }
    }
}

fn record_key(id: AccessionId) -> String {
    format!("records/{id}.json")
}

fn envelope_key(id: Uuid) -> String {
    format!("envelopes/{id}.json")
}

fn image_key(r: &PayloadRef) -> String {
    format!("images/{}", r.hex())
}

fn vocabulary_key(version: &str) -> String {
    format!("vocabularies/{version}.json")
}

const META_KEY: &str = "meta.json";
const UNITS_KEY: &str = "units.json";

/// Staged changes of one write. Reads see staged values first.
pub struct Tx<'a> {
    base: &'a State,
    envelopes: BTreeMap<Uuid, SubmissionEnvelope>,
    records: BTreeMap<AccessionId, ExperimentRecord>,
    images: BTreeMap<PayloadRef, Vec<u8>>,
    vocabularies: BTreeMap<String, String>,
    next: AccessionId,
}

impl<'a> Tx<'a> {
    fn new(base: &'a State) -> Self {
        Self {
            base,
            envelopes: BTreeMap::new(),
            records: BTreeMap::new(),
            images: BTreeMap::new(),
            vocabularies: BTreeMap::new(),
            next: base.next_accession(),
        }
    }

    pub fn envelope(&self, id: Uuid) -> Option<&SubmissionEnvelope> {
        self.envelopes.get(&id).or_else(|| self.base.envelopes.get(&id))
    }

    pub fn put_envelope(&mut self, env: SubmissionEnvelope) {
        self.envelopes.insert(env.envelope_id, env);
    }

    pub fn record(&self, id: AccessionId) -> Option<&ExperimentRecord> {
        self.records.get(&id).or_else(|| self.base.records.get(&id))
    }

    /// Reserves the next accession id. Ids are dense because an aborted
    /// write discards its reservations.
    pub fn next_accession(&mut self) -> AccessionId {
        let id = self.next;
        self.next = id.next();
        id
    }

    pub fn has_image(&self, r: &PayloadRef) -> bool {
        self.images.contains_key(r) || self.base.images.contains(r)
    }

    pub fn put_image(&mut self, bytes: Vec<u8>) -> PayloadRef {
        let r = PayloadRef::for_bytes(&bytes);
        if !self.base.images.contains(&r) {
            self.images.insert(r.clone(), bytes);
        }
        r
    }

    /// Stores an accepted record in canonical units. Re-putting identical
    /// content is a no-op.
    pub fn put_accepted(&mut self, record: ExperimentRecord) -> Result<AccessionId, StoreError> {
        let id = record.record_id.ok_or_else(|| StoreError::IntegrityViolation {
            record: "(unaccessioned)".into(),
            detail: "record has no accession id".into(),
        })?;
        let violation = |detail: String| StoreError::IntegrityViolation {
            record: id.to_string(),
            detail,
        };
        let record = normalize_record(&record).map_err(|e| violation(e.to_string()))?;
        if let Some(m) = &record.morphology {
            let version = m.vocabulary_version();
            let vocab = VocabularyCatalog::global()
                .get(version)
                .map_err(|e| violation(e.to_string()))?;
            if version != BUILTIN_VERSION && !self.base.vocabularies.contains(version) {
                self.vocabularies.insert(version.to_owned(), vocab.to_json());
            }
        }
        for img in &record.images {
            if !self.has_image(&img.payload_ref) {
                return Err(violation(format!("image {} is not stored", img.payload_ref)));
            }
        }
        if let Some(existing) = self.record(id) {
            if existing.canonical_json() == record.canonical_json() {
                return Ok(id);
            }
            return Err(StoreError::DuplicateAccession(id));
        }
        if id >= self.next {
            self.next = id.next();
        }
        self.records.insert(id, record);
        Ok(id)
    }

    fn is_empty(&self) -> bool {
        self.envelopes.is_empty() && self.records.is_empty() && self.images.is_empty()
    }
}

pub struct Store {
    backend: Arc<dyn Backend>,
    state: RwLock<State>,
    detached: AtomicBool,
    exclusive: Mutex<Option<Exclusive>>,
}

/// Held while a release cut reads the store; snapshots are refused meanwhile.
pub struct CutGuard<'a> {
    store: &'a Store,
}

impl Drop for CutGuard<'_> {
    fn drop(&mut self) {
        *self.store.exclusive.lock().unwrap() = None;
    }
}

impl Store {
    /// Opens (or initializes) the store persisted in `backend`.
    pub fn open(backend: Arc<dyn Backend>) -> Result<Store, StoreError> {
        match backend.get(META_KEY)? {
            Some(bytes) => {
                let meta: Meta = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(e.to_string()))?;
                if meta.schema_version != SCHEMA_VERSION {
                    return Err(StoreError::SchemaMismatch {
                        found: meta.schema_version,
                        expected: SCHEMA_VERSION.into(),
                    });
                }
            }
            None => {
                let meta = serde_json::to_vec(&Meta {
                    schema_version: SCHEMA_VERSION.into(),
                })
                .expect("meta serializes");
                backend.put(UNITS_KEY, &units_snapshot())?;
                backend.put(META_KEY, &meta)?;
            }
        }

        let mut state = State::default();
        for key in backend.list("vocabularies")? {
            let text = read_utf8(&*backend, &key)?;
            let vocab = Vocabulary::from_json(&text).map_err(|e| StoreError::Corrupt(format!("{key}: {e}")))?;
            state.vocabularies.insert(vocab.version().to_owned());
            VocabularyCatalog::global()
                .register(vocab)
                .map_err(|e| StoreError::Corrupt(format!("{key}: {e}")))?;
        }
        for key in backend.list("records")? {
            let bytes = read_required(&*backend, &key)?;
            let record: ExperimentRecord = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(format!("{key}: {e}")))?;
            let id = record.record_id.ok_or_else(|| StoreError::Corrupt(format!("{key}: missing accession id")))?;
            state.index_record(&record);
            state.records.insert(id, record);
        }
        for key in backend.list("envelopes")? {
            let bytes = read_required(&*backend, &key)?;
            let env: SubmissionEnvelope = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt(format!("{key}: {e}")))?;
            state.index_envelope(&env);
            state.envelopes.insert(env.envelope_id, env);
        }
        for key in backend.list("images")? {
            let hex = key.trim_start_matches("images/");
            let r: PayloadRef = format!("{}{hex}", PayloadRef::PREFIX)
                .parse()
                .map_err(StoreError::Corrupt)?;
            state.images.insert(r);
        }
        Ok(Store {
            backend,
            state: RwLock::new(state),
            detached: AtomicBool::new(false),
            exclusive: Mutex::new(None),
        })
    }

    pub fn open_dir(dir: impl Into<PathBuf>) -> Result<Store, StoreError> {
        Self::open(Arc::new(FileBackend::open(dir)?))
    }

    pub fn in_memory() -> Store {
        Self::open(Arc::new(MemoryBackend::new())).expect("memory store opens")
    }

    pub fn backend(&self) -> Arc<dyn Backend> {
        self.backend.clone()
    }

    pub fn backing(&self) -> String {
        self.backend.describe()
    }

    pub fn schema_version(&self) -> &'static str {
        SCHEMA_VERSION
    }

    /// Cuts the store off from all reads and writes. Components that must
    /// keep working without the store (release serving) are tested this way.
    pub fn detach(&self) {
        self.detached.store(true, Ordering::SeqCst);
    }

    pub fn reattach(&self) {
        self.detached.store(false, Ordering::SeqCst);
    }

    fn check_attached(&self) -> Result<(), StoreError> {
        if self.detached.load(Ordering::SeqCst) {
            Err(StoreError::Detached)
        } else {
            Ok(())
        }
    }

    /// Runs `f` as the single writer. Staged changes are persisted and then
    /// published to readers; an error discards them.
    pub fn write<T, E: From<StoreError>>(&self, f: impl FnOnce(&mut Tx<'_>) -> Result<T, E>) -> Result<T, E> {
        self.check_attached()?;
        let mut state = self.state.write().unwrap();
        let (out, envelopes, records, images, vocabularies) = {
            let mut tx = Tx::new(&state);
            let out = f(&mut tx)?;
            if tx.is_empty() && tx.vocabularies.is_empty() {
                return Ok(out);
            }
            (out, tx.envelopes, tx.records, tx.images, tx.vocabularies)
        };
        for (version, json) in &vocabularies {
            self.backend.put(&vocabulary_key(version), json.as_bytes()).map_err(StoreError::from)?;
        }
        for (r, bytes) in &images {
            self.backend.put(&image_key(r), bytes).map_err(StoreError::from)?;
        }
        for (id, r) in &records {
            self.backend.put(&record_key(*id), &r.canonical_json()).map_err(StoreError::from)?;
        }
        for (id, e) in &envelopes {
            let bytes = serde_json::to_vec(e).expect("envelope serializes");
            self.backend.put(&envelope_key(*id), &bytes).map_err(StoreError::from)?;
        }
        state.vocabularies.extend(vocabularies.into_keys());
        state.images.extend(images.into_keys());
        for (id, r) in records {
            state.index_record(&r);
            state.records.insert(id, r);
        }
        for (id, e) in envelopes {
            state.index_envelope(&e);
            state.envelopes.insert(id, e);
        }
        Ok(out)
    }

    fn read<T>(&self, f: impl FnOnce(&State) -> T) -> Result<T, StoreError> {
        self.check_attached()?;
        Ok(f(&self.state.read().unwrap()))
    }

    pub fn put_accepted(&self, record: ExperimentRecord) -> Result<AccessionId, StoreError> {
        self.write(|tx| tx.put_accepted(record))
    }

    pub fn put_image(&self, bytes: Vec<u8>) -> Result<PayloadRef, StoreError> {
        self.write(|tx| Ok::<_, StoreError>(tx.put_image(bytes)))
    }

    pub fn get_record(&self, id: AccessionId) -> Result<ExperimentRecord, StoreError> {
        self.read(|s| s.records.get(&id).cloned())?
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn record_count(&self) -> Result<usize, StoreError> {
        self.read(|s| s.records.len())
    }

    /// Runs `f` over all accepted records, ordered by accession id.
    pub fn with_records<T>(&self, f: impl FnOnce(&BTreeMap<AccessionId, ExperimentRecord>) -> T) -> Result<T, StoreError> {
        self.read(|s| f(&s.records))
    }

    pub fn envelope(&self, id: Uuid) -> Result<Option<SubmissionEnvelope>, StoreError> {
        self.read(|s| s.envelopes.get(&id).cloned())
    }

    /// Matching envelopes ordered by submission time.
    pub fn envelopes(&self, pred: impl Fn(&SubmissionEnvelope) -> bool) -> Result<Vec<SubmissionEnvelope>, StoreError> {
        let mut out = self.read(|s| s.envelopes.values().filter(|e| pred(e)).cloned().collect::<Vec<_>>())?;
        out.sort_by_key(|e| (e.created_at, e.envelope_id));
        Ok(out)
    }

    pub fn has_image(&self, r: &PayloadRef) -> Result<bool, StoreError> {
        self.read(|s| s.images.contains(r))
    }

    pub fn image(&self, r: &PayloadRef) -> Result<Vec<u8>, StoreError> {
        if !self.has_image(r)? {
            return Err(StoreError::NotFound(r.to_string()));
        }
        read_required(&*self.backend, &image_key(r))
    }

    pub fn provenance(&self) -> Result<ProvenanceIndex, StoreError> {
        self.read(|s| s.provenance.clone())
    }

    /// Digest of the logical content: records, envelopes and image refs.
    pub fn digest(&self) -> Result<String, StoreError> {
        self.read(|s| {
            let mut entries: Vec<(String, Vec<u8>)> = Vec::new();
            for (id, r) in &s.records {
                entries.push((record_key(*id), r.canonical_json()));
            }
            for (id, e) in &s.envelopes {
                entries.push((envelope_key(*id), serde_json::to_vec(e).expect("envelope serializes")));
            }
            for r in &s.images {
                entries.push((image_key(r), Vec::new()));
            }
            sha256_entries(entries.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
        })
    }

    /// Marks a release cut as running; concurrent snapshots are refused and
    /// a second cut gets [`StoreError::ConcurrentRelease`].
    pub fn begin_cut(&self) -> Result<CutGuard<'_>, StoreError> {
        let mut slot = self.exclusive.lock().unwrap();
        match *slot {
            Some(Exclusive::Cut) => Err(StoreError::ConcurrentRelease),
            Some(Exclusive::Snapshot) => Err(StoreError::SnapshotInProgress),
            None => {
                *slot = Some(Exclusive::Cut);
                Ok(CutGuard { store: self })
            }
        }
    }

    /// Consistent view for a release: all accepted records in accession
    /// order and the bytes of every image they reference.
    pub fn release_view(&self, _guard: &CutGuard<'_>) -> Result<ReleaseView, StoreError> {
        self.check_attached()?;
        let state = self.state.read().unwrap();
        let records: Vec<ExperimentRecord> = state.records.values().cloned().collect();
        let mut images = BTreeMap::new();
        for r in records.iter().flat_map(|r| r.images.iter().map(|i| &i.payload_ref)) {
            if !images.contains_key(r) {
                images.insert(r.clone(), read_required(&*self.backend, &image_key(r))?);
            }
        }
        Ok((records, images))
    }

    /// Writes a self-contained archive of the whole store to `path`.
    pub fn snapshot(&self, path: &Path) -> Result<SnapshotManifest, StoreError> {
        self.check_attached()?;
        {
            let mut slot = self.exclusive.lock().unwrap();
            if *slot == Some(Exclusive::Cut) {
                return Err(StoreError::ConcurrentRelease);
            }
            *slot = Some(Exclusive::Snapshot);
        }
        let result = self.snapshot_inner(path);
        *self.exclusive.lock().unwrap() = None;
        result
    }

    fn snapshot_inner(&self, path: &Path) -> Result<SnapshotManifest, StoreError> {
        let state = self.state.read().unwrap();
        let mut entries: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        entries.insert(UNITS_KEY.into(), units_snapshot());
        for version in &state.vocabularies {
            let key = vocabulary_key(version);
            entries.insert(key.clone(), read_required(&*self.backend, &key)?);
        }
        for (id, r) in &state.records {
            entries.insert(record_key(*id), r.canonical_json());
        }
        for (id, e) in &state.envelopes {
            entries.insert(envelope_key(*id), serde_json::to_vec(e).expect("envelope serializes"));
        }
        for r in &state.images {
            entries.insert(image_key(r), read_required(&*self.backend, &image_key(r))?);
        }
        let manifest = SnapshotManifest {
            schema_version: SCHEMA_VERSION.into(),
            record_count: state.records.len(),
            envelope_count: state.envelopes.len(),
            image_count: state.images.len(),
            digest: sha256_entries(entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))),
        };
        entries.insert(SNAPSHOT_MANIFEST.into(), serde_json::to_vec_pretty(&manifest).expect("manifest serializes"));
        let bytes = archive::write_zip(&entries);
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".snapshot{TMP_MARKER}{}", Uuid::new_v4().simple()));
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(manifest)
    }

    /// Loads a snapshot into an empty backend and opens it.
    pub fn restore(snapshot: &Path, backend: Arc<dyn Backend>) -> Result<(Store, SnapshotManifest), StoreError> {
        for dir in ["records", "envelopes", "images"] {
            if !backend.list(dir)?.is_empty() {
                return Err(StoreError::NotEmpty);
            }
        }
        let mut entries = archive::read_zip(&fs::read(snapshot)?)?;
        let manifest_bytes = entries
            .remove(SNAPSHOT_MANIFEST)
            .ok_or_else(|| StoreError::Corrupt("snapshot has no manifest".into()))?;
        let manifest: SnapshotManifest = serde_json::from_slice(&manifest_bytes).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let digest = sha256_entries(entries.iter().map(|(k, v)| (k.as_str(), v.as_slice())));
        if digest != manifest.digest {
            return Err(StoreError::Corrupt("snapshot digest mismatch".into()));
        }
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaMismatch {
                found: manifest.schema_version,
                expected: SCHEMA_VERSION.into(),
            });
        }
        for (key, bytes) in &entries {
            backend.put(key, bytes)?;
        }
        let store = Store::open(backend)?;
        Ok((store, manifest))
    }
}

const SNAPSHOT_MANIFEST: &str = "manifest.json";

fn units_snapshot() -> Vec<u8> {
    serde_json::to_vec_pretty(&UnitRegistry::standard().units().collect::<Vec<_>>()).expect("units serialize")
}

fn read_required(backend: &dyn Backend, key: &str) -> Result<Vec<u8>, StoreError> {
    backend
        .get(key)?
        .ok_or_else(|| StoreError::Corrupt(format!("{key} is missing")))
}

fn read_utf8(backend: &dyn Backend, key: &str) -> Result<String, StoreError> {
    String::from_utf8(read_required(backend, key)?).map_err(|e| StoreError::Corrupt(format!("{key}: {e}")))
}
