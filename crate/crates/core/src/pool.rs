//! Profile pools: ingestion of line-delimited persona snapshots, a named
//! registry, and seeded sampling without replacement.
//!
//! A snapshot file holds one JSON object per line. Descriptive pools carry
//! `{"profile_id", "persona_text"}`; structured pools carry a flat object
//! whose keys other than `profile_id` become [`BasicProfile::structured_fields`].
//! Blank lines are ignored.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rng::SeededRng;

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate profile_id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("requested {requested} profiles from a pool of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("pool {0:?} is already registered")]
    DuplicatePool(String),
    #[error("unknown pool {0:?}")]
    UnknownPool(String),
    #[error("registry manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Objective,
    Subjective,
    Mix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolFormat {
    Structured,
    Descriptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolSource {
    RealWorld,
    Synthesized,
    ExpertDerived,
}

/// Declared size of an upstream asset. Serialized as a count or `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolSize {
    Bounded(u64),
    Unbounded,
}

impl Serialize for PoolSize {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PoolSize::Bounded(n) => s.serialize_u64(*n),
            PoolSize::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for PoolSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(PoolSize::Bounded(n)),
            Raw::Word(w) if w == "unbounded" => Ok(PoolSize::Unbounded),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "size must be a count or \"unbounded\", got {w:?}"
            ))),
        }
    }
}

/// Metadata describing one curated profile asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDescriptor {
    pub name: String,
    pub domain: String,
    pub size: PoolSize,
    pub attribute_kind: AttributeKind,
    pub format: PoolFormat,
    pub source: PoolSource,
    #[serde(default)]
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicProfile {
    pub profile_id: String,
    pub pool: String,
    #[serde(default)]
    pub persona_text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub structured_fields: BTreeMap<String, String>,
}

impl BasicProfile {
    /// Text suitable for a role-play prompt.
    pub fn persona(&self) -> String {
        if !self.persona_text.trim().is_empty() {
            return self.persona_text.clone();
        }
        self.structured_fields
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// An ingested pool. Immutable once built, so it can be shared across workers.
#[derive(Debug, Clone)]
pub struct Pool {
    descriptor: PoolDescriptor,
    profiles: Vec<BasicProfile>,
    by_id: HashMap<String, usize>,
}

impl Pool {
    pub fn descriptor(&self) -> &PoolDescriptor {
        &self.descriptor
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn profiles(&self) -> &[BasicProfile] {
        &self.profiles
    }

    pub fn get(&self, profile_id: &str) -> Option<&BasicProfile> {
        self.by_id.get(profile_id).map(|&i| &self.profiles[i])
    }

    /// Parse a snapshot from any reader. Line numbers in errors are 1-based.
    pub fn from_reader<R: BufRead>(reader: R, descriptor: PoolDescriptor) -> Result<Self, PoolError> {
        let mut profiles = Vec::new();
        let mut by_id: HashMap<String, usize> = HashMap::new();
        let mut lines_of: Vec<usize> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| PoolError::Malformed {
                line: lineno,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let profile = parse_record(&line, lineno, &descriptor)?;
            if let Some(&prev) = by_id.get(&profile.profile_id) {
                return Err(PoolError::DuplicateId {
                    id: profile.profile_id,
                    first_line: lines_of[prev],
                    second_line: lineno,
                });
            }
            by_id.insert(profile.profile_id.clone(), profiles.len());
            lines_of.push(lineno);
            profiles.push(profile);
        }
        Ok(Self {
            descriptor,
            profiles,
            by_id,
        })
    }

    /// Write the pool back out in snapshot format.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.profiles {
            let mut obj = serde_json::Map::new();
            obj.insert("profile_id".into(), p.profile_id.clone().into());
            if !p.persona_text.is_empty() || self.descriptor.format == PoolFormat::Descriptive {
                obj.insert("persona_text".into(), p.persona_text.clone().into());
            }
            for (k, v) in &p.structured_fields {
                obj.insert(k.clone(), v.clone().into());
            }
            serde_json::to_writer(&mut out, &obj)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn parse_record(line: &str, lineno: usize, descriptor: &PoolDescriptor) -> Result<BasicProfile, PoolError> {
    let malformed = |reason: String| PoolError::Malformed { line: lineno, reason };
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let serde_json::Value::Object(map) = value else {
        return Err(malformed("record is not a JSON object".into()));
    };
    let mut profile_id = None;
    let mut persona_text = String::new();
    let mut structured_fields = BTreeMap::new();
    for (key, v) in map {
        let text = match v {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            serde_json::Value::Null => continue,
            _ => return Err(malformed(format!("field {key:?} is not a scalar"))),
        };
        match key.as_str() {
            "profile_id" => profile_id = Some(text),
            "persona_text" => persona_text = text,
            _ => {
                structured_fields.insert(key, text);
            }
        }
    }
    let profile_id = profile_id
        .filter(|id| !id.is_empty())
        .ok_or_else(|| malformed("missing profile_id".into()))?;
    if descriptor.format == PoolFormat::Descriptive && persona_text.trim().is_empty() {
        return Err(malformed("descriptive record without persona_text".into()));
    }
    if persona_text.trim().is_empty() && structured_fields.is_empty() {
        return Err(malformed("record has neither persona_text nor fields".into()));
    }
    Ok(BasicProfile {
        profile_id,
        pool: descriptor.name.clone(),
        persona_text,
        structured_fields,
    })
}

/// Read a snapshot file into a pool registered under `descriptor.name`.
pub fn ingest_pool(source_file: &Path, descriptor: PoolDescriptor) -> Result<Pool, PoolError> {
    let file = fs::File::open(source_file).map_err(|source| PoolError::Io {
        path: source_file.to_path_buf(),
        source,
    })?;
    let pool = Pool::from_reader(BufReader::new(file), descriptor)?;
    log::info!("ingested {} profiles into pool {:?}", pool.len(), pool.name());
    Ok(pool)
}

/// Draw `n` distinct profiles. The same `(pool, n, seed)` always yields the
/// same ordered result.
pub fn sample_profiles(pool: &Pool, n: usize, seed: u64) -> Result<Vec<BasicProfile>, PoolError> {
    if n > pool.len() {
        return Err(PoolError::SampleTooLarge {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = SeededRng::new(seed);
    Ok(rng
        .sample_indices(pool.len(), n)
        .into_iter()
        .map(|i| pool.profiles[i].clone())
        .collect())
}

/// One `[[pool]]` entry of a registry manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub descriptor: PoolDescriptor,
    /// Snapshot path, relative to the manifest's directory. Entries without
    /// a snapshot are catalogued but not loaded.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RegistryManifest {
    #[serde(default, rename = "pool")]
    pub pools: Vec<ManifestEntry>,
}

/// Named collection of pools.
#[derive(Debug, Default, Clone)]
pub struct Registry {
    catalog: BTreeMap<String, PoolDescriptor>,
    pools: BTreeMap<String, Arc<Pool>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, pool: Pool) -> Result<Arc<Pool>, PoolError> {
        let name = pool.name().to_string();
        if self.pools.contains_key(&name) {
            return Err(PoolError::DuplicatePool(name));
        }
        self.catalog.insert(name.clone(), pool.descriptor.clone());
        let pool = Arc::new(pool);
        self.pools.insert(name, Arc::clone(&pool));
        Ok(pool)
    }

    pub fn get(&self, name: &str) -> Result<Arc<Pool>, PoolError> {
        self.pools
            .get(name)
            .cloned()
            .ok_or_else(|| PoolError::UnknownPool(name.to_string()))
    }

    /// Descriptors of every catalogued pool, loaded or not.
    pub fn descriptors(&self) -> impl Iterator<Item = &PoolDescriptor> {
        self.catalog.values()
    }

    /// Load a TOML registry manifest, ingesting every entry with a snapshot.
    pub fn load_manifest(path: &Path) -> Result<Self, PoolError> {
        let text = fs::read_to_string(path).map_err(|source| PoolError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: RegistryManifest = toml::from_str(&text).map_err(|e| PoolError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut registry = Registry::new();
        for entry in manifest.pools {
            let name = entry.descriptor.name.clone();
            if registry.catalog.contains_key(&name) {
                return Err(PoolError::DuplicatePool(name));
            }
            match entry.file {
                Some(file) => {
                    registry.register(ingest_pool(&base.join(file), entry.descriptor)?)?;
                }
                None => {
                    registry.catalog.insert(name, entry.descriptor);
                }
            }
        }
        Ok(registry)
    }
}

impl fmt::Display for PoolDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let size = match self.size {
            PoolSize::Bounded(n) => n.to_string(),
            PoolSize::Unbounded => "unbounded".to_string(),
        };
        write!(
            f,
            "{} ({}, {size}, {:?}, {:?}, {:?})",
            self.name, self.domain, self.attribute_kind, self.format, self.source
        )
    }
}
